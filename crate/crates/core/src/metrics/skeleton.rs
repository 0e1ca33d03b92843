//! Binary skeletons: Zhang-Suen (Lü-Wang) thinning, staircase cleanup, spur pruning and
//! branch-point detection, all with 8-connectivity.

use super::Mask;

/// Neighbour offsets clockwise from north: N, NE, E, SE, S, SW, W, NW.
const RING: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

fn on(m: &Mask, x: isize, z: isize) -> bool {
    x >= 0
        && z >= 0
        && (x as usize) < m.nx
        && (z as usize) < m.ny
        && m.bits[z as usize * m.nx + x as usize]
}

fn ring(m: &Mask, x: usize, z: usize) -> [bool; 8] {
    let mut r = [false; 8];
    for (i, (dx, dz)) in RING.iter().enumerate() {
        r[i] = on(m, x as isize + dx, z as isize + dz);
    }
    r
}

fn degree(m: &Mask, x: usize, z: usize) -> usize {
    ring(m, x, z).iter().filter(|b| **b).count()
}

/// Zhang-Suen thinning (with the Lü-Wang neighbour bound) followed by removal of staircase corner pixels, so
/// that interior skeleton pixels have exactly two neighbours.
pub fn thin(m: &mut Mask) {
    loop {
        let mut changed = false;
        for step in 0..2 {
            let mut kill = Vec::new();
            for z in 0..m.ny {
                for x in 0..m.nx {
                    if !m.get(x, z) {
                        continue;
                    }
                    let p = ring(m, x, z);
                    let b = p.iter().filter(|v| **v).count();
                    // Lü-Wang lower bound of 3 keeps two-pixel diagonals from vanishing.
                    if !(3..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
                    let ok = if step == 0 {
                        !(n && e && s) && !(e && s && w)
                    } else {
                        !(n && e && w) && !(n && s && w)
                    };
                    if ok {
                        kill.push((x, z));
                    }
                }
            }
            changed |= !kill.is_empty();
            for (x, z) in kill {
                m.set(x, z, false);
            }
        }
        if !changed {
            break;
        }
    }
    remove_staircases(m);
}

/// Drop a pixel whose two perpendicular 4-neighbours are set while the
/// opposite side is empty; the neighbours stay connected diagonally.
fn remove_staircases(m: &mut Mask) {
    for z in 0..m.ny {
        for x in 0..m.nx {
            if !m.get(x, z) {
                continue;
            }
            let p = ring(m, x, z);
            // (first 4-neighbour, second 4-neighbour, opposite diagonal)
            for (a, b, opp) in [(0usize, 2usize, 5usize), (2, 4, 7), (4, 6, 1), (6, 0, 3)] {
                let (oa, ob) = ((a + 4) % 8, (b + 4) % 8);
                if !(p[a] && p[b] && !p[oa] && !p[ob] && !p[opp]) {
                    continue;
                }
                // Both neighbours must continue elsewhere, or this is a line end.
                let at = |i: usize| {
                    (
                        (x as isize + RING[i].0) as usize,
                        (z as isize + RING[i].1) as usize,
                    )
                };
                let ((ax, az), (bx, bz)) = (at(a), at(b));
                if degree(m, ax, az) >= 3 && degree(m, bx, bz) >= 3 {
                    m.set(x, z, false);
                    break;
                }
            }
        }
    }
}

/// Number of separate runs of set pixels around the 8-neighbour ring.
fn crossing_number(p: &[bool; 8]) -> usize {
    (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count()
}

/// Line ends: at most one neighbour, or two touching neighbours.
fn is_endpoint(m: &Mask, x: usize, z: usize) -> bool {
    let p = ring(m, x, z);
    let d = p.iter().filter(|b| **b).count();
    d <= 1 || (d == 2 && crossing_number(&p) == 1)
}

/// Morphological pruning: peel endpoints `len` times, then regrow the
/// surviving ends along the original skeleton by the same amount. Branches
/// shorter than `len` that end freely, and isolated short pieces, disappear.
pub fn prune_spurs(m: &mut Mask, len: usize) {
    if len == 0 {
        return;
    }
    let original = m.clone();
    for _ in 0..len {
        let kill: Vec<(usize, usize)> = (0..m.ny)
            .flat_map(|z| (0..m.nx).map(move |x| (x, z)))
            .filter(|&(x, z)| m.get(x, z) && is_endpoint(m, x, z))
            .collect();
        if kill.is_empty() {
            break;
        }
        for (x, z) in kill {
            m.set(x, z, false);
        }
    }
    let mut front: Vec<(usize, usize)> = (0..m.ny)
        .flat_map(|z| (0..m.nx).map(move |x| (x, z)))
        .filter(|&(x, z)| m.get(x, z) && is_endpoint(m, x, z))
        .collect();
    for _ in 0..len {
        let mut grown = Vec::new();
        for &(x, z) in &front {
            for (dx, dz) in RING {
                let (nx, nz) = (x as isize + dx, z as isize + dz);
                if on(&original, nx, nz) && !on(m, nx, nz) {
                    m.set(nx as usize, nz as usize, true);
                    grown.push((nx as usize, nz as usize));
                }
            }
        }
        if grown.is_empty() {
            break;
        }
        front = grown;
    }
}

/// 8-connected components of `pixels`, as index lists.
fn components(pixels: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let adjacent =
        |a: (usize, usize), b: (usize, usize)| a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1;
    let mut seen = vec![false; pixels.len()];
    let mut out = Vec::new();
    for start in 0..pixels.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut i = 0;
        while i < comp.len() {
            let cur = pixels[comp[i]];
            for j in 0..pixels.len() {
                if !seen[j] && adjacent(cur, pixels[j]) {
                    seen[j] = true;
                    comp.push(j);
                }
            }
            i += 1;
        }
        out.push(comp);
    }
    out
}

/// Junctions of the skeleton, as blob centroids `(x, z)` in pixels.
///
/// Pixels with three or more neighbours are grouped into 8-connected blobs;
/// a blob is a junction when the skeleton pixels touching it from outside
/// form at least three separate branches. This rejects the spurious
/// three-neighbour pixels that thinning leaves on staircases and line ends.
pub fn branch_points(m: &Mask) -> Vec<(f64, f64)> {
    let dense: Vec<(usize, usize)> = (0..m.ny)
        .flat_map(|z| (0..m.nx).map(move |x| (x, z)))
        .filter(|&(x, z)| m.get(x, z) && degree(m, x, z) >= 3)
        .collect();
    let mut out = Vec::new();
    for blob in components(&dense) {
        let members: Vec<(usize, usize)> = blob.iter().map(|&i| dense[i]).collect();
        let mut exits: Vec<(usize, usize)> = Vec::new();
        for &(x, z) in &members {
            for (dx, dz) in RING {
                let (nx, nz) = (x as isize + dx, z as isize + dz);
                if !on(m, nx, nz) {
                    continue;
                }
                let q = (nx as usize, nz as usize);
                if !members.contains(&q) && !exits.contains(&q) {
                    exits.push(q);
                }
            }
        }
        if components(&exits).len() >= 3 {
            let n = members.len() as f64;
            let cx = members.iter().map(|p| p.0 as f64).sum::<f64>() / n;
            let cz = members.iter().map(|p| p.1 as f64).sum::<f64>() / n;
            out.push((cx, cz));
        }
    }
    out
}
