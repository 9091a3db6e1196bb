//! Non-reflective similarity registration between color and depth pixel
//! coordinates, for rigs whose two sensors are not pre-aligned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error, PartialEq)]
pub enum RegistrationError {
    #[error("need at least 2 point pairs, got {0}")]
    TooFewPoints(usize),
    #[error("source points coincide; transform is undetermined")]
    DegenerateConfiguration,
}

/// `p' = scale · R(angle) · p + translation`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    /// Radians, counter-clockwise.
    pub angle: f64,
    pub translation: [f64; 2],
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, angle: 0.0, translation: [0.0, 0.0] }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let a = self.scale * c;
        let b = self.scale * s;
        [a * p[0] - b * p[1] + self.translation[0], b * p[0] + a * p[1] + self.translation[1]]
    }

    pub fn inverse(&self) -> Self {
        let scale = 1.0 / self.scale;
        let angle = -self.angle;
        let (s, c) = angle.sin_cos();
        let [tx, ty] = self.translation;
        let translation = [-scale * (c * tx - s * ty), -scale * (s * tx + c * ty)];
        Self { scale, angle, translation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformFit {
    pub transform: SimilarityTransform,
    pub residual_rms: f64,
}

/// Least-squares fit over `(source, target)` pairs.
///
/// Writing the transform as `x' = a·x − b·y + tx`, `y' = b·x + a·y + ty`
/// makes the problem linear in `(a, b, tx, ty)`; after centering both point
/// sets the normal equations decouple into closed form.
pub fn fit_similarity_transform(
    pairs: &[([f64; 2], [f64; 2])],
) -> Result<TransformFit, RegistrationError> {
    if pairs.len() < 2 {
        return Err(RegistrationError::TooFewPoints(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mut src_mean = [0.0; 2];
    let mut dst_mean = [0.0; 2];
    for (s, d) in pairs {
        src_mean[0] += s[0] / n;
        src_mean[1] += s[1] / n;
        dst_mean[0] += d[0] / n;
        dst_mean[1] += d[1] / n;
    }
    let (mut sxx, mut dot, mut cross) = (0.0, 0.0, 0.0);
    for (s, d) in pairs {
        let (x, y) = (s[0] - src_mean[0], s[1] - src_mean[1]);
        let (u, v) = (d[0] - dst_mean[0], d[1] - dst_mean[1]);
        sxx += x * x + y * y;
        dot += x * u + y * v;
        cross += x * v - y * u;
    }
    let spread = sxx / n;
    if spread <= f64::EPSILON * (1.0 + src_mean[0].abs() + src_mean[1].abs()).powi(2) {
        return Err(RegistrationError::DegenerateConfiguration);
    }
    let a = dot / sxx;
    let b = cross / sxx;
    let translation = [
        dst_mean[0] - (a * src_mean[0] - b * src_mean[1]),
        dst_mean[1] - (b * src_mean[0] + a * src_mean[1]),
    ];
    let transform = SimilarityTransform { scale: a.hypot(b), angle: b.atan2(a), translation };
    let sq: f64 = pairs
        .iter()
        .map(|(s, d)| {
            let p = transform.apply(*s);
            (p[0] - d[0]).powi(2) + (p[1] - d[1]).powi(2)
        })
        .sum();
    Ok(TransformFit { transform, residual_rms: (sq / n).sqrt() })
}

/// Resamples a color-space grid into depth space (nearest neighbour). Pixels
/// mapping outside the source get `fill`.
pub fn warp_to_depth<T: Clone>(
    source: &Grid<T>,
    color_to_depth: &SimilarityTransform,
    depth_dims: (usize, usize),
    fill: T,
) -> Grid<T> {
    let back = color_to_depth.inverse();
    Grid::from_fn(depth_dims.0, depth_dims.1, |r, c| {
        let [x, y] = back.apply([c as f64, r as f64]);
        let (col, row) = (x.round(), y.round());
        if row >= 0.0
            && col >= 0.0
            && (row as usize) < source.height()
            && (col as usize) < source.width()
        {
            source.get(row as usize, col as usize).clone()
        } else {
            fill.clone()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn pairs_under(t: &SimilarityTransform, pts: &[[f64; 2]]) -> Vec<([f64; 2], [f64; 2])> {
        pts.iter().map(|p| (*p, t.apply(*p))).collect()
    }

    #[test]
    fn identical_points_give_identity() {
        let pts = [[0.0, 0.0], [3.0, 1.0], [-2.0, 5.0]];
        let fit = fit_similarity_transform(&pairs_under(&SimilarityTransform::identity(), &pts))
            .unwrap();
        assert!((fit.transform.scale - 1.0).abs() < 1e-12);
        assert!(fit.transform.angle.abs() < 1e-12);
        assert!(fit.transform.translation.iter().all(|t| t.abs() < 1e-12));
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn uniform_scale_two() {
        let pts = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]];
        let pairs: Vec<_> = pts.iter().map(|p| (*p, [2.0 * p[0], 2.0 * p[1]])).collect();
        let fit = fit_similarity_transform(&pairs).unwrap();
        assert!((fit.transform.scale - 2.0).abs() < 1e-12);
        assert!(fit.transform.angle.abs() < 1e-12);
        assert!(fit.transform.translation.iter().all(|t| t.abs() < 1e-12));
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn coincident_sources_are_degenerate() {
        let pairs = [([1.0, 1.0], [0.0, 0.0]), ([1.0, 1.0], [2.0, 3.0])];
        assert_eq!(
            fit_similarity_transform(&pairs),
            Err(RegistrationError::DegenerateConfiguration)
        );
        assert_eq!(
            fit_similarity_transform(&pairs[..1]),
            Err(RegistrationError::TooFewPoints(1))
        );
    }

    #[test]
    fn noise_free_fits_are_exact_for_any_size() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 2..40 {
            let t = SimilarityTransform {
                scale: rng.gen_range(0.3..3.0),
                angle: rng.gen_range(-3.0..3.0),
                translation: [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)],
            };
            let pts: Vec<[f64; 2]> =
                (0..n).map(|_| [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)]).collect();
            let fit = fit_similarity_transform(&pairs_under(&t, &pts)).unwrap();
            assert!(fit.residual_rms <= 1e-10, "n={n} rms={}", fit.residual_rms);
        }
    }

    #[test]
    fn inverse_round_trips() {
        let t = SimilarityTransform { scale: 1.7, angle: 0.4, translation: [3.0, -8.0] };
        let inv = t.inverse();
        for p in [[0.0, 0.0], [10.0, -4.0], [-3.5, 7.25]] {
            let q = inv.apply(t.apply(p));
            assert!((q[0] - p[0]).abs() < 1e-9 && (q[1] - p[1]).abs() < 1e-9);
        }
    }

    /// Coarse-to-fine exhaustive search over (scale, angle, tx, ty).
    fn grid_search(pairs: &[([f64; 2], [f64; 2])]) -> SimilarityTransform {
        let cost = |t: &SimilarityTransform| -> f64 {
            pairs
                .iter()
                .map(|(s, d)| {
                    let p = t.apply(*s);
                    (p[0] - d[0]).powi(2) + (p[1] - d[1]).powi(2)
                })
                .sum()
        };
        let mut center = [1.0, 0.0, 0.0, 0.0];
        let mut half = [1.0, 1.6, 10.0, 10.0];
        const STEPS: i32 = 10;
        for _ in 0..14 {
            let mut best = (f64::INFINITY, center);
            for i in -STEPS..=STEPS {
                for j in -STEPS..=STEPS {
                    for k in -STEPS..=STEPS {
                        for l in -STEPS..=STEPS {
                            let cand = [
                                center[0] + half[0] * i as f64 / STEPS as f64,
                                center[1] + half[1] * j as f64 / STEPS as f64,
                                center[2] + half[2] * k as f64 / STEPS as f64,
                                center[3] + half[3] * l as f64 / STEPS as f64,
                            ];
                            let t = SimilarityTransform {
                                scale: cand[0],
                                angle: cand[1],
                                translation: [cand[2], cand[3]],
                            };
                            let c = cost(&t);
                            if c < best.0 {
                                best = (c, cand);
                            }
                        }
                    }
                }
            }
            center = best.1;
            for h in half.iter_mut() {
                *h *= 0.3;
            }
        }
        SimilarityTransform {
            scale: center[0],
            angle: center[1],
            translation: [center[2], center[3]],
        }
    }

    #[test]
    fn noisy_fit_matches_grid_search() {
        let truth = SimilarityTransform { scale: 1.3, angle: 0.25, translation: [2.0, -3.0] };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts = [[0.0, 0.0], [4.0, 1.0], [1.0, 5.0], [-3.0, 2.0]];
        let pairs: Vec<_> = pts
            .iter()
            .map(|p| {
                let q = truth.apply(*p);
                (*p, [q[0] + rng.gen_range(-0.1..0.1), q[1] + rng.gen_range(-0.1..0.1)])
            })
            .collect();
        let fit = fit_similarity_transform(&pairs).unwrap().transform;
        let oracle = grid_search(&pairs);
        assert!((fit.scale - oracle.scale).abs() < 1e-3);
        assert!((fit.angle - oracle.angle).abs() < 1e-3);
        assert!((fit.translation[0] - oracle.translation[0]).abs() < 1e-3);
        assert!((fit.translation[1] - oracle.translation[1]).abs() < 1e-3);
    }

    #[test]
    fn warp_with_identity_is_copy() {
        let g = Grid::from_fn(4, 5, |r, c| r * 10 + c);
        let w = warp_to_depth(&g, &SimilarityTransform::identity(), (4, 5), 0);
        assert_eq!(w, g);
    }
}
