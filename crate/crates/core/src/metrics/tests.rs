use super::*;
use crate::pa_forward::{make_vessel_phantom, Fov};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn grid(n: usize) -> ReconGrid {
    ReconGrid::new(n, n, 0.2, Point::new(0.0, 0.0)).unwrap()
}

fn seg(ax: f64, az: f64, bx: f64, bz: f64) -> Segment {
    Segment {
        a: Point::new(ax, az),
        b: Point::new(bx, bz),
    }
}

fn phantom_grid() -> ReconGrid {
    ReconGrid::square(Point::new(0.0, 22.0), 40.0, 0.2).unwrap()
}

/// Independent crossing count: parametric line-line solve on every pair.
fn brute_force_crossings(segs: &[Segment]) -> usize {
    let mut n = 0;
    for (i, s) in segs.iter().enumerate() {
        for t in &segs[i + 1..] {
            let r = (s.b.x - s.a.x, s.b.z - s.a.z);
            let q = (t.b.x - t.a.x, t.b.z - t.a.z);
            let den = r.0 * q.1 - r.1 * q.0;
            if den.abs() < 1e-12 {
                continue;
            }
            let w = (t.a.x - s.a.x, t.a.z - s.a.z);
            let u = (w.0 * q.1 - w.1 * q.0) / den;
            let v = (w.0 * r.1 - w.1 * r.0) / den;
            if (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v) {
                n += 1;
            }
        }
    }
    n
}

#[test]
fn contrast_cases() {
    let g = grid(4);
    let roi = Mask::from_fn(&g, |p| p.x < 0.3);
    let bg = Mask::from_fn(&g, |p| p.x > 0.3);
    let flat = ReconImage {
        grid: g,
        values: vec![3.0; 16],
    };
    assert_eq!(contrast(&flat, &roi, &bg).unwrap(), 0.0);

    let mut img = flat.clone();
    for iz in 0..4 {
        for ix in 0..4 {
            img.values[iz * 4 + ix] = if g.x(ix) < 0.3 { 2.0 } else { 1.0 };
        }
    }
    assert_eq!(contrast(&img, &roi, &bg).unwrap(), 1.0);
    assert!(
        (contrast_with(&img, &roi, &bg, ContrastKind::Michelson).unwrap() - 1.0 / 3.0).abs()
            < 1e-15
    );
    assert_eq!(contrast(&img.scaled(7.5), &roi, &bg).unwrap(), 1.0);

    let dark = ReconImage {
        grid: g,
        values: (0..16).map(|i| if i % 4 < 2 { 1.0 } else { 0.0 }).collect(),
    };
    assert!(matches!(
        contrast(&dark, &roi, &bg),
        Err(Error::DegenerateBackground(_))
    ));
    assert!(matches!(
        contrast(&img, &roi, &roi),
        Err(Error::Invalid { .. })
    ));
    assert!(matches!(
        contrast(&img, &roi, &Mask::new(4, 4)),
        Err(Error::Invalid { .. })
    ));
}

#[test]
fn roi_masks_from_segments() {
    let g = phantom_grid();
    let segs = [seg(-5.0, 20.0, 5.0, 20.0)];
    let (roi, bg) = RoiSpec::default().masks(&g, &segs).unwrap();
    assert!(roi.count() > 0 && bg.count() > 0);
    assert!(roi.bits.iter().zip(&bg.bits).all(|(a, b)| !(a & b)));
    let (ix, iz) = g.pixel_of(&Point::new(0.0, 20.0)).unwrap();
    assert!(roi.get(ix, iz) && !bg.get(ix, iz));
}

#[test]
fn straight_segment_has_no_nodes() {
    let g = phantom_grid();
    for s in [
        seg(-10.0, 15.0, 10.0, 25.0),
        seg(-8.0, 22.0, 8.0, 22.0),
        seg(0.0, 8.0, 0.0, 30.0),
    ] {
        assert_eq!(
            count_nodes(&render_segments(&g, &[s], 0.4), 0.5).unwrap(),
            0
        );
    }
}

#[test]
fn cross_has_one_node() {
    let g = phantom_grid();
    let x = [seg(-8.0, 14.0, 8.0, 30.0), seg(-8.0, 30.0, 8.0, 14.0)];
    assert_eq!(count_nodes(&render_segments(&g, &x, 0.4), 0.5).unwrap(), 1);
    let plus = [seg(-8.0, 22.0, 8.0, 22.0), seg(0.0, 14.0, 0.0, 30.0)];
    assert_eq!(
        count_nodes(&render_segments(&g, &plus, 0.4), 0.5).unwrap(),
        1
    );
}

#[test]
fn rendered_phantom_counts_match_generator() {
    let g = phantom_grid();
    for (n, seed) in [(8, 0), (8, 1), (8, 2), (3, 4), (5, 5), (0, 6)] {
        let scene = make_vessel_phantom(n, &Fov::default(), seed).unwrap();
        let truth = brute_force_crossings(&scene.segments);
        assert_eq!(truth, n);
        let img = render_segments(&g, &scene.segments, 0.4);
        assert_eq!(
            count_nodes(&img, 0.5).unwrap(),
            truth,
            "n = {n}, seed = {seed}"
        );
    }
}

#[test]
fn empty_and_invalid_inputs() {
    let g = grid(8);
    assert_eq!(count_nodes(&ReconImage::zeros(g), 0.5).unwrap(), 0);
    let img = render_segments(&g, &[seg(0.0, 0.0, 1.4, 1.4)], 0.2);
    assert!(count_nodes(&img, 0.0).is_err());
    assert!(count_nodes(&img, 1.0).is_err());
}

#[test]
fn snr_cases() {
    let r: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
    assert_eq!(snr_db(&r, &r).unwrap(), SNR_CAP_DB);
    let twice: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
    assert!(snr_db(&twice, &r).unwrap().abs() < 1e-12);
    assert!(matches!(
        snr_db(&r, &vec![0.0; 100]),
        Err(Error::ZeroReference)
    ));
    assert!(snr_db(&r[..50], &r).is_err());

    let n = 10_000;
    let reference = vec![10f64.sqrt(); n];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let noisy: Vec<f64> = reference
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    let s = snr_db(&noisy, &reference).unwrap();
    assert!((s - 10.0).abs() < 0.5, "{s}");
}

#[test]
fn csv_row_format() {
    let r = MetricsReport {
        scheme: IlluminationScheme::new(12.0, 45.0),
        class: FieldLabel::Bright,
        contrast: 1.25,
        node_count: 8,
        roi: RoiSpec::default(),
    };
    let mut buf = Vec::new();
    MetricsReport::write_csv(&[r], &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "d_mm,theta_deg,class,contrast,node_count\n12,45,bright,1.25,8\n"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn node_count_ignores_scale(seed in 0u64..1000, k in 0.001f64..1000.0, n in 0usize..10) {
        let g = phantom_grid();
        let scene = make_vessel_phantom(n, &Fov::default(), seed).unwrap();
        let img = render_segments(&g, &scene.segments, 0.4);
        let blurred = ReconImage {
            grid: g,
            values: img.values.iter().enumerate().map(|(i, v)| v * (1.0 + 0.1 * ((i % 7) as f64))).collect(),
        };
        prop_assert_eq!(count_nodes(&blurred, 0.5).unwrap(), count_nodes(&blurred.scaled(k), 0.5).unwrap());
    }

    #[test]
    fn node_count_ignores_translation(seed in 0u64..1000, sx in 0usize..20, sz in 0usize..20) {
        let g = phantom_grid();
        let scene = make_vessel_phantom(6, &Fov::default(), seed).unwrap();
        let img = render_segments(&g, &scene.segments, 0.4);
        let mut moved = ReconImage::zeros(g);
        for iz in 0..g.ny - sz {
            for ix in 0..g.nx - sx {
                moved.values[(iz + sz) * g.nx + ix + sx] = img.at(ix, iz);
            }
        }
        prop_assert_eq!(count_nodes(&img, 0.5).unwrap(), count_nodes(&moved, 0.5).unwrap());
    }

    #[test]
    fn contrast_ignores_scale(k in 1e-6f64..1e6, seed in any::<u64>()) {
        let g = grid(10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = rand_distr::Uniform::new(0.1, 5.0).unwrap();
        let img = ReconImage { grid: g, values: (0..100).map(|_| u.sample(&mut rng)).collect() };
        let roi = Mask::from_fn(&g, |p| p.x < 0.5);
        let bg = Mask::from_fn(&g, |p| p.x > 1.0);
        let (a, b) = (contrast(&img, &roi, &bg).unwrap(), contrast(&img.scaled(k), &roi, &bg).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!(a >= -1.0);
    }
}
