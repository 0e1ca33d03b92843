use super::*;
use crate::illumination::{FluenceMap, Lattice};
use proptest::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

fn flood(value: f64) -> FluenceMap {
    let lat = Lattice {
        nx: 241,
        ny: 1,
        nz: 201,
        dx: 0.5,
        dy: 1.0,
        dz: 0.5,
        x0: -60.0,
        y0: 0.0,
    };
    FluenceMap::uniform(lat, value)
}

fn point_scene(points: &[(f64, f64, f64)]) -> Scene {
    Scene::new(
        points
            .iter()
            .map(|&(x, z, mu_a)| Absorber {
                pos: Point::new(x, z),
                mu_a,
                radius: 0.1,
            })
            .collect(),
    )
}

/// Magnitude of the analytic signal, computed with a plain FFT.
fn envelope(trace: &[f64]) -> Vec<f64> {
    let n = trace.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = trace.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (i, c) in buf.iter_mut().enumerate() {
        let h = if i == 0 || (n.is_multiple_of(2) && i == n / 2) {
            1.0
        } else if i < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *c *= h;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.norm() / n as f64).collect()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[test]
fn element_layout() {
    let one = TransducerArray {
        n_elements: 1,
        ..TransducerArray::default()
    };
    let p = element_positions(&one);
    assert_eq!(p.len(), 1);
    assert_eq!(
        p[0],
        Point::new(0.0, one.focus_depth_mm - one.arc_radius_mm)
    );

    let arr = TransducerArray::default();
    let p = element_positions(&arr);
    assert_eq!(p.len(), 32);
    let center = Point::new(0.0, arr.focus_depth_mm);
    let angle = |q: &Point| (q.x - center.x).atan2(center.z - q.z).to_degrees();
    for k in 0..31 {
        assert!((angle(&p[k + 1]) - angle(&p[k]) - 120.0 / 31.0).abs() < 1e-9);
    }
    for k in 0..32 {
        assert!((p[k].dist(&center) - 40.0).abs() < 1e-12);
        assert!((p[k].x + p[31 - k].x).abs() <= 1e-12);
        assert!((p[k].z - p[31 - k].z).abs() <= 1e-12);
    }
    assert!((angle(&p[0]) + 60.0).abs() < 1e-9 && (angle(&p[31]) - 60.0).abs() < 1e-9);
}

#[test]
fn pulse_peak_and_decay() {
    let arr = TransducerArray::default();
    assert_eq!(pa_pulse(0.0, &arr), 1.0);
    let tau = arr.pulse_tau_us();
    for i in 0..10_000 {
        let t = 5.0 * tau * (1.0 + i as f64 * 1e-3);
        assert!(pa_pulse(t, &arr).abs() < 1e-6 && pa_pulse(-t, &arr).abs() < 1e-6);
    }
}

/// -6 dB fractional width of the sampled wavelet's DFT magnitude.
fn measured_bandwidth(arr: &TransducerArray) -> f64 {
    let fs = 400.0;
    let n = 1 << 16;
    let half = (10.0 * arr.pulse_tau_us() * fs) as isize;
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for i in -half..=half {
        let idx = i.rem_euclid(n as isize) as usize;
        buf[idx] = Complex::new(pa_pulse(i as f64 / fs, arr), 0.0);
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm()).collect();
    let k_peak = argmax(&mag);
    let level = 0.5 * mag[k_peak];
    let df = fs / n as f64;
    let cross = |range: Box<dyn Iterator<Item = usize>>, step: isize| {
        for k in range {
            let j = (k as isize + step) as usize;
            if mag[j] < level {
                let frac = (mag[k] - level) / (mag[k] - mag[j]);
                return (k as f64 + step as f64 * frac) * df;
            }
        }
        panic!("no crossing");
    };
    let hi = cross(Box::new(k_peak..n / 2 - 1), 1);
    let lo = cross(Box::new((1..=k_peak).rev()), -1);
    (hi - lo) / arr.center_frequency_mhz
}

#[test]
fn pulse_bandwidth_matches_array() {
    let arr = TransducerArray::default();
    let b = measured_bandwidth(&arr);
    assert!((b - 0.6).abs() <= 0.02, "{b}");
    let narrow = TransducerArray {
        fractional_bandwidth: 0.3,
        ..arr
    };
    assert!((measured_bandwidth(&narrow) - 0.3).abs() <= 0.3 * 0.02 / 0.6 * 2.0);
}

#[test]
fn time_of_flight_matched_filter() {
    let arr = TransducerArray::default();
    let acq = AcquisitionConfig::default();
    let els = element_positions(&arr);
    let k = 7;
    // Aim from element k towards the arc centre, 37.5 mm away.
    let c = Point::new(0.0, arr.focus_depth_mm);
    let (dx, dz) = ((c.x - els[k].x) / 40.0, (c.z - els[k].z) / 40.0);
    let src = Point::new(els[k].x + 37.5 * dx, els[k].z + 37.5 * dz);
    let scene = point_scene(&[(src.x, src.z, 1.0)]);
    let frame = simulate(&scene, &flood(1.0), &arr, &acq).unwrap();
    let trace = frame.channel(k);
    let fs = acq.sample_rate_mhz;
    let half = (6.0 * arr.pulse_tau_us() * fs) as isize;
    let template: Vec<f64> = (-half..=half)
        .map(|i| pa_pulse(i as f64 / fs, &arr))
        .collect();
    let score: Vec<f64> = (0..trace.len())
        .map(|s| {
            template
                .iter()
                .enumerate()
                .filter_map(|(j, w)| {
                    let idx = s as isize + j as isize - half;
                    (0..trace.len() as isize)
                        .contains(&idx)
                        .then(|| w * trace[idx as usize])
                })
                .sum()
        })
        .collect();
    let t = frame.time(argmax(&score));
    assert!((t - 25.0).abs() <= 0.5 / fs, "{t}");
}

#[test]
fn zero_fluence_gives_zero_frame() {
    let scene = point_scene(&[(0.0, 20.0, 1.0), (3.0, 25.0, 2.0)]);
    let acq = AcquisitionConfig {
        noise_snr_db: Some(10.0),
        ..AcquisitionConfig::default()
    };
    let frame = simulate(&scene, &flood(0.0), &TransducerArray::default(), &acq).unwrap();
    assert!(frame.data.iter().all(|&v| v == 0.0));
}

#[test]
fn doubling_absorption_doubles_frame() {
    let arr = TransducerArray::default();
    let acq = AcquisitionConfig::default();
    let scene = point_scene(&[(1.0, 18.0, 0.7), (-4.0, 30.0, 1.3), (6.0, 22.0, 0.2)]);
    let f = simulate(&scene, &flood(3.0), &arr, &acq).unwrap();
    let g = simulate(&scene.scaled(2.0), &flood(3.0), &arr, &acq).unwrap();
    for (a, b) in f.data.iter().zip(&g.data) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn superposition() {
    let arr = TransducerArray::default();
    let acq = AcquisitionConfig::default();
    let a = point_scene(&[(1.0, 18.0, 0.7), (-4.0, 30.0, 1.3)]);
    let b = point_scene(&[(6.0, 22.0, 0.2), (-1.0, 26.0, 0.9)]);
    let mut ab = a.clone();
    ab.absorbers.extend(b.absorbers.iter().copied());
    let fl = flood(2.0);
    let (fa, fb, fab) = (
        simulate(&a, &fl, &arr, &acq).unwrap(),
        simulate(&b, &fl, &arr, &acq).unwrap(),
        simulate(&ab, &fl, &arr, &acq).unwrap(),
    );
    let scale = fab.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..fab.data.len() {
        assert!((fab.data[i] - fa.data[i] - fb.data[i]).abs() <= 1e-14 * scale);
    }
}

#[test]
fn inverse_distance_amplitude() {
    let arr = TransducerArray::default();
    let acq = AcquisitionConfig::default();
    let els = element_positions(&arr);
    let k = 16;
    for (r1, r2) in [(25.0, 50.0), (25.3, 31.7), (28.0, 65.0)] {
        let peak = |r: f64| {
            let scene = point_scene(&[(els[k].x, els[k].z + r, 1.0)]);
            let f = simulate(&scene, &flood(1.0), &arr, &acq).unwrap();
            envelope(f.channel(k)).into_iter().fold(0.0, f64::max)
        };
        let ratio = peak(r1) / peak(r2);
        assert!((ratio / (r2 / r1) - 1.0).abs() < 0.01, "{ratio}");
    }
}

#[test]
fn seeded_noise_is_reproducible_and_thread_independent() {
    let arr = TransducerArray::default();
    let scene = point_scene(&[(1.0, 18.0, 0.7), (-4.0, 30.0, 1.3)]);
    let acq = AcquisitionConfig {
        noise_snr_db: Some(5.0),
        rng_seed: 42,
        ..AcquisitionConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&scene, &flood(1.0), &arr, &acq).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.data, b.data);
    let other = simulate(
        &scene,
        &flood(1.0),
        &arr,
        &AcquisitionConfig {
            rng_seed: 43,
            ..acq
        },
    )
    .unwrap();
    assert_ne!(a.data, other.data);

    let clean = simulate(
        &scene,
        &flood(1.0),
        &arr,
        &AcquisitionConfig {
            noise_snr_db: None,
            ..acq
        },
    )
    .unwrap();
    let noise: f64 = (a
        .data
        .iter()
        .zip(&clean.data)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.data.len() as f64)
        .sqrt();
    let snr = 20.0 * (clean.rms() / noise).log10();
    assert!((snr - 5.0).abs() < 0.1, "{snr}");
}

#[test]
fn flood_reference_fixes_noise_floor() {
    let arr = TransducerArray::default();
    let scene = point_scene(&[(1.0, 18.0, 0.7), (-4.0, 30.0, 1.3)]);
    let acq = AcquisitionConfig {
        noise_snr_db: Some(20.0),
        noise_reference: NoiseReference::Flood {
            fluence_mj_cm2: 1.0,
        },
        rng_seed: 3,
        ..AcquisitionConfig::default()
    };
    // With no light at all the frame is pure noise at the flood-derived level.
    let dark = simulate(&scene, &flood(0.0), &arr, &acq).unwrap();
    let lit = simulate(
        &scene,
        &flood(1.0),
        &arr,
        &AcquisitionConfig {
            noise_snr_db: None,
            ..acq
        },
    )
    .unwrap();
    let ratio = lit.rms() / dark.rms();
    assert!((20.0 * ratio.log10() - 20.0).abs() < 0.1);
}

#[test]
fn absorber_outside_fluence_grid() {
    let scene = point_scene(&[(0.0, 20.0, 1.0), (90.0, 20.0, 1.0)]);
    match simulate(
        &scene,
        &flood(1.0),
        &TransducerArray::default(),
        &AcquisitionConfig::default(),
    ) {
        Err(Error::AbsorberOutsideGrid { index, .. }) => assert_eq!(index, 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn preconditions() {
    let arr = TransducerArray::default();
    let scene = point_scene(&[(0.0, 20.0, 1.0)]);
    let slow = AcquisitionConfig {
        sample_rate_mhz: 6.0,
        ..AcquisitionConfig::default()
    };
    assert!(matches!(
        simulate(&scene, &flood(1.0), &arr, &slow),
        Err(Error::Invalid { .. })
    ));
    for bad in [
        TransducerArray {
            n_elements: 0,
            ..arr
        },
        TransducerArray {
            fractional_bandwidth: 2.0,
            ..arr
        },
        TransducerArray {
            fractional_bandwidth: 0.0,
            ..arr
        },
    ] {
        assert!(bad.validate().is_err());
    }
    let mut neg = scene.clone();
    neg.absorbers[0].mu_a = -1.0;
    assert!(neg.validate().is_err());
    assert!(Scene {
        sound_speed: 0.0,
        ..scene
    }
    .validate()
    .is_err());
}

#[test]
fn paf_round_trip_and_truncation() {
    let arr = TransducerArray::default();
    let scene = point_scene(&[(1.0, 18.0, 0.7)]);
    let frame = simulate(&scene, &flood(1.0), &arr, &AcquisitionConfig::default()).unwrap();
    let mut buf = Vec::new();
    frame.write_paf(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"PAF1");
    assert_eq!(buf.len(), 28 + 4 * 32 * 2048);
    let back = SignalFrame::read_paf(&buf[..]).unwrap();
    assert_eq!(back, frame.to_storage_precision());

    match SignalFrame::read_paf(&buf[..1000]) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 1000),
        other => panic!("{other:?}"),
    }
    match SignalFrame::read_paf(&buf[..10]) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 10),
        other => panic!("{other:?}"),
    }
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(
        SignalFrame::read_paf(&bad[..]),
        Err(Error::Format { offset: 0, .. })
    ));
}

/// Brute-force crossing count with a parametric solve, independent of the
/// generator's orientation test.
fn count_crossings(segs: &[Segment]) -> usize {
    let mut n = 0;
    for i in 0..segs.len() {
        for j in i + 1..segs.len() {
            let (p, r) = (
                segs[i].a,
                (segs[i].b.x - segs[i].a.x, segs[i].b.z - segs[i].a.z),
            );
            let (q, s) = (
                segs[j].a,
                (segs[j].b.x - segs[j].a.x, segs[j].b.z - segs[j].a.z),
            );
            let den = r.0 * s.1 - r.1 * s.0;
            if den.abs() < 1e-12 {
                continue;
            }
            let t = ((q.x - p.x) * s.1 - (q.z - p.z) * s.0) / den;
            let u = ((q.x - p.x) * r.1 - (q.z - p.z) * r.0) / den;
            if t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0 {
                n += 1;
            }
        }
    }
    n
}

#[test]
fn phantom_crossing_counts() {
    let fov = Fov::default();
    let none = make_vessel_phantom(0, &fov, 1).unwrap();
    assert_eq!(count_crossings(&none.segments), 0);
    let d: Vec<(f64, f64)> = none
        .segments
        .iter()
        .map(|s| {
            let l = s.length();
            ((s.b.x - s.a.x) / l, (s.b.z - s.a.z) / l)
        })
        .collect();
    assert!(d.len() >= 2);
    for w in d.windows(2) {
        assert!((w[0].0 * w[1].1 - w[0].1 * w[1].0).abs() < 1e-12);
    }

    for n in [1, 2, 3, 5, 7, 8, 12] {
        let scene = make_vessel_phantom(n, &fov, 11).unwrap();
        assert_eq!(count_crossings(&scene.segments), n, "n = {n}");
        assert_eq!(scene.crossings.len(), n);
        assert!(scene.absorbers.iter().all(|a| fov.contains(&a.pos)));
    }
}

#[test]
fn phantom_determinism_and_packing() {
    let fov = Fov::default();
    assert_eq!(
        make_vessel_phantom(8, &fov, 5).unwrap(),
        make_vessel_phantom(8, &fov, 5).unwrap()
    );
    assert_ne!(
        make_vessel_phantom(8, &fov, 5).unwrap().segments,
        make_vessel_phantom(8, &fov, 6).unwrap().segments
    );
    assert!(matches!(
        make_vessel_phantom(400, &fov, 5),
        Err(Error::InfeasiblePacking(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn time_of_flight_within_one_sample(x in -20.0f64..20.0, z in 5.0f64..45.0, k in 0usize..32) {
        let arr = TransducerArray::default();
        let acq = AcquisitionConfig::default();
        let e = element_positions(&arr)[k];
        let frame = simulate(&point_scene(&[(x, z, 1.0)]), &flood(1.0), &arr, &acq).unwrap();
        let env = envelope(frame.channel(k));
        let t = frame.time(argmax(&env));
        let tof = Point::new(x, z).dist(&e) / 1.5;
        prop_assert!((t - tof).abs() <= 1.0 / acq.sample_rate_mhz);
    }

    #[test]
    fn phantom_has_exact_crossings(n in 0usize..16, seed in any::<u64>()) {
        let scene = make_vessel_phantom(n, &Fov::default(), seed).unwrap();
        prop_assert_eq!(count_crossings(&scene.segments), n);
    }
}
