//! Particle placement: dart-throwing Poisson-disk sampling in a region and
//! seeding from the moving parts of a flow frame.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flow::FlowFrame;
use crate::linalg::V2;
use crate::mpm::Particle;

/// Accepts candidates in order, rejecting any closer than `spacing` to an
/// already accepted point. Stops after `limit` points.
pub fn accept_spaced(candidates: impl IntoIterator<Item = V2<f64>>, spacing: f64, limit: usize) -> Vec<V2<f64>> {
    accept_around(&[], candidates, 0.5 * spacing, limit)
}

/// Like [`accept_spaced`] for discs of radius `radius`, which must also
/// clear the `(center, radius)` discs already in `placed`. Returns only the
/// new centers.
pub fn accept_around(
    placed: &[(V2<f64>, f64)],
    candidates: impl IntoIterator<Item = V2<f64>>,
    radius: f64,
    limit: usize,
) -> Vec<V2<f64>> {
    let max_r = placed.iter().fold(radius, |m, &(_, r)| m.max(r));
    let inv = 1.0 / (radius + max_r);
    let key = |p: V2<f64>| ((p.x * inv).floor() as i64, (p.y * inv).floor() as i64);
    let mut cells: HashMap<(i64, i64), Vec<(V2<f64>, f64)>> = HashMap::new();
    for &(q, r) in placed {
        cells.entry(key(q)).or_default().push((q, r));
    }
    let mut out = Vec::new();
    'cand: for c in candidates {
        if out.len() >= limit {
            break;
        }
        let (cx, cy) = key(c);
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(b) = cells.get(&(cx + dx, cy + dy)) {
                    if b.iter().any(|&(q, r)| (q - c).norm2() < (radius + r) * (radius + r)) {
                        continue 'cand;
                    }
                }
            }
        }
        cells.entry((cx, cy)).or_default().push((c, radius));
        out.push(c);
    }
    out
}

/// Up to `count` points in `[min, max]` with pairwise distance at least
/// `spacing`, drawn by seeded dart throwing.
pub fn poisson_disk(min: V2<f64>, max: V2<f64>, spacing: f64, count: usize, seed: u64) -> Vec<V2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attempts = 60 * count.max(1) + 1000;
    let darts: Vec<V2<f64>> =
        (0..attempts).map(|_| V2::new(rng.random_range(min.x..=max.x), rng.random_range(min.y..=max.y))).collect();
    accept_spaced(darts, spacing, count)
}

/// Particles on pixels whose flow magnitude exceeds `threshold·max|flow|`,
/// spaced by `2·r_a`, moving with their pixel's flow.
pub fn particles_from_flow(frame: &FlowFrame, r_a: f64, r_b: f64, threshold: f64, seed: u64) -> Vec<Particle<f64>> {
    let max = frame.max_magnitude();
    if max == 0.0 {
        return Vec::new();
    }
    let cut = threshold * max;
    let mut pixels: Vec<(usize, usize)> = (0..frame.height)
        .flat_map(|y| (0..frame.width).map(move |x| (x, y)))
        .filter(|&(x, y)| {
            let k = y * frame.width + x;
            let [u, v] = frame.uv[k];
            frame.mask[k] && ((u as f64).powi(2) + (v as f64).powi(2)).sqrt() > cut
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pixels.shuffle(&mut rng);
    let centers = pixels.iter().map(|&(x, y)| V2::new(x as f64 + 0.5, y as f64 + 0.5));
    accept_spaced(centers, 2.0 * r_a, usize::MAX)
        .into_iter()
        .map(|p| {
            let [u, v] = frame.at(p.x as usize, p.y as usize);
            Particle::new(p, V2::new(u as f64, v as f64), r_a, r_b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_samples_respect_spacing_and_region() {
        let pts = poisson_disk(V2::new(10.0, 20.0), V2::new(60.0, 50.0), 4.0, 50, 1);
        assert_eq!(pts.len(), 50);
        for (i, a) in pts.iter().enumerate() {
            assert!(a.x >= 10.0 && a.x <= 60.0 && a.y >= 20.0 && a.y <= 50.0);
            for b in &pts[i + 1..] {
                assert!((*a - *b).norm() >= 4.0);
            }
        }
        assert_eq!(pts, poisson_disk(V2::new(10.0, 20.0), V2::new(60.0, 50.0), 4.0, 50, 1));
    }

    #[test]
    fn flow_seeding_follows_motion() {
        let f = FlowFrame::from_fn(40, 30, 0.0, |x, _| if x < 20 { [2.0, 0.0] } else { [0.05, 0.0] });
        let ps = particles_from_flow(&f, 1.5, 2.5, 0.1, 3);
        assert!(!ps.is_empty());
        for p in &ps {
            assert!(p.x.x < 20.0);
            assert_eq!(p.v, V2::new(2.0, 0.0));
        }
    }
}
