//! Analytic food geometry on a circular footprint, with volumes of the part
//! left after eating away one side.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Height profile of one food item. All lengths in cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    /// Flat top at `height_cm`.
    Slab { height_cm: f64 },
    /// Paraboloid mound, `height_cm` at the center and 0 at the rim.
    Dome { height_cm: f64 },
    /// Slab with a sinusoidal surface ripple.
    RoughSlab { height_cm: f64, amplitude_cm: f64, wavelength_cm: f64 },
    /// Rigid slab of `thickness_cm` resting on one edge and tilted up to
    /// `lift_cm` on the other, leaving an air pocket underneath that a
    /// top-down depth camera cannot see.
    ToastOverhang { thickness_cm: f64, lift_cm: f64 },
}

impl ShapeKind {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            ShapeKind::Slab { height_cm } | ShapeKind::Dome { height_cm } => height_cm > 0.0,
            ShapeKind::RoughSlab { height_cm, amplitude_cm, wavelength_cm } => {
                height_cm > 0.0 && amplitude_cm >= 0.0 && amplitude_cm < height_cm && wavelength_cm > 0.0
            }
            ShapeKind::ToastOverhang { thickness_cm, lift_cm } => thickness_cm > 0.0 && lift_cm >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid shape parameters: {self:?}"))
        }
    }

    /// Highest point of the visible surface.
    pub fn top(&self) -> f64 {
        match *self {
            ShapeKind::Slab { height_cm } | ShapeKind::Dome { height_cm } => height_cm,
            ShapeKind::RoughSlab { height_cm, amplitude_cm, .. } => height_cm + amplitude_cm,
            ShapeKind::ToastOverhang { thickness_cm, lift_cm } => thickness_cm + lift_cm,
        }
    }
}

/// A placed shape: footprint disc of `radius_cm` at `center` (table-plane cm,
/// camera axis at the origin). Eating proceeds along `eat_direction` (unit
/// vector); the remaining food is where `(p − center)·u ≥ cut`.
///
/// Food is modeled as one vertical prism per camera ray: a column of height
/// `h` at table point `p` has cross-section shrunk by `(1 − h/D)²`, the
/// footprint of a pixel at the column's top. Volumes are therefore
/// `∫ h (1 − h/D)² dA` over the remaining footprint, which is exactly what a
/// pinhole depth camera integrates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedShape {
    pub kind: ShapeKind,
    pub radius_cm: f64,
    pub center: [f64; 2],
    pub eat_direction: [f64; 2],
    pub table_distance_cm: f64,
}

impl PlacedShape {
    /// Local coordinates: `along` the eat direction and `across` it.
    fn local(&self, p: [f64; 2]) -> (f64, f64) {
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let [ux, uy] = self.eat_direction;
        (dx * ux + dy * uy, -dx * uy + dy * ux)
    }

    /// `(visible surface height, food thickness)` at table point `p`, if `p`
    /// lies on the remaining food.
    pub fn surface(&self, p: [f64; 2], cut: f64) -> Option<(f64, f64)> {
        let (a, b) = self.local(p);
        if a * a + b * b > self.radius_cm * self.radius_cm || a < cut {
            return None;
        }
        Some(profile(&self.kind, self.radius_cm, a, b))
    }

    /// True food volume of the part with `along ≥ cut`.
    pub fn remaining_volume(&self, cut: f64) -> f64 {
        remaining_volume(&self.kind, self.radius_cm, self.table_distance_cm, cut)
    }

    /// Cut position leaving `keep` (0..=1) of the full volume.
    pub fn cut_for_fraction(&self, keep: f64) -> f64 {
        cut_for_fraction(&self.kind, self.radius_cm, self.table_distance_cm, keep)
    }
}

/// `(top, thickness)` in local coordinates inside the footprint.
fn profile(kind: &ShapeKind, r: f64, a: f64, b: f64) -> (f64, f64) {
    match *kind {
        ShapeKind::Slab { height_cm } => (height_cm, height_cm),
        ShapeKind::Dome { height_cm } => {
            let h = height_cm * (1.0 - (a * a + b * b) / (r * r));
            (h, h)
        }
        ShapeKind::RoughSlab { height_cm, amplitude_cm, wavelength_cm } => {
            let k = 2.0 * PI / wavelength_cm;
            let h = height_cm + amplitude_cm * (k * a).cos() * (k * b).cos();
            (h, h)
        }
        ShapeKind::ToastOverhang { thickness_cm, lift_cm } => {
            // Raised edge sits on the far side of the eat direction.
            let base = lift_cm * (a + r) / (2.0 * r);
            (base + thickness_cm, thickness_cm)
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn nodes() -> &'static [(f64, f64)] {
    static NODES: std::sync::OnceLock<Vec<(f64, f64)>> = std::sync::OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(96))
}

/// Area of the disc part with `x ≥ c`.
fn segment_area(r: f64, c: f64) -> f64 {
    let c = c.clamp(-r, r);
    r * r * (c / r).acos() - c * (r * r - c * c).sqrt()
}

pub fn remaining_volume(kind: &ShapeKind, r: f64, table: f64, cut: f64) -> f64 {
    if cut >= r {
        return 0.0;
    }
    let cut = cut.max(-r);
    let weight = |top: f64| (1.0 - top / table).powi(2);
    if let ShapeKind::Slab { height_cm } = *kind {
        return height_cm * weight(height_cm) * segment_area(r, cut);
    }
    // a = R sin φ and b = L t keep the integrand smooth up to the rim.
    let (lo, hi) = ((cut / r).asin(), PI / 2.0);
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let mut acc = 0.0;
    for &(x, wx) in nodes() {
        let phi = mid + half * x;
        let a = r * phi.sin();
        let l = (r * r - a * a).max(0.0).sqrt();
        let mut chord = 0.0;
        for &(t, wt) in nodes() {
            let (top, thick) = profile(kind, r, a, l * t);
            chord += wt * thick * weight(top);
        }
        acc += wx * chord * l * r * phi.cos();
    }
    acc * half
}

pub fn full_volume(kind: &ShapeKind, r: f64, table: f64) -> f64 {
    remaining_volume(kind, r, table, -r)
}

pub fn cut_for_fraction(kind: &ShapeKind, r: f64, table: f64, keep: f64) -> f64 {
    if keep >= 1.0 {
        return -r;
    }
    if keep <= 0.0 {
        return r;
    }
    let target = keep * full_volume(kind, r, table);
    let (mut lo, mut hi) = (-r, r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if remaining_volume(kind, r, table, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * r {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Footprint radius giving `volume_ml` for this profile.
pub fn radius_for_volume(kind: &ShapeKind, volume_ml: f64, table: f64) -> f64 {
    let guess = (volume_ml / (PI * kind.top() * 0.5)).sqrt();
    let (mut lo, mut hi) = (0.0, 4.0 * guess);
    while full_volume(kind, hi, table) < volume_ml {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if full_volume(kind, mid, table) < volume_ml {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: f64 = 40.0;

    #[test]
    fn closed_forms() {
        let w = |h: f64| (1.0 - h / D).powi(2);
        let slab = ShapeKind::Slab { height_cm: 2.0 };
        assert!((full_volume(&slab, 3.0, D) - 2.0 * w(2.0) * PI * 9.0).abs() < 1e-10);
        assert!((remaining_volume(&slab, 3.0, D, 0.0) - w(2.0) * PI * 9.0).abs() < 1e-10);
        // Paraboloid: πR²H (1/2 − 2H/3D + H²/4D²)
        let (h, r) = (2.5, 3.0);
        let dome = ShapeKind::Dome { height_cm: h };
        let exact = PI * r * r * h * (0.5 - 2.0 * h / (3.0 * D) + h * h / (4.0 * D * D));
        assert!((full_volume(&dome, r, D) - exact).abs() < 1e-10 * exact);
        assert!((remaining_volume(&dome, r, D, 0.0) - exact / 2.0).abs() < 1e-10 * exact);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let s: f64 = nodes().iter().map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        let total: f64 = nodes().iter().map(|(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-13);
    }

    /// Brute-force 2-D midpoint sum as an independent check on the cut
    /// volumes of every profile.
    #[test]
    fn cut_volumes_match_brute_force() {
        let shapes = [
            ShapeKind::Slab { height_cm: 1.2 },
            ShapeKind::Dome { height_cm: 2.5 },
            ShapeKind::RoughSlab { height_cm: 1.5, amplitude_cm: 0.3, wavelength_cm: 1.7 },
            ShapeKind::ToastOverhang { thickness_cm: 1.0, lift_cm: 1.5 },
        ];
        let r = 4.0;
        for kind in shapes {
            let placed = PlacedShape {
                kind,
                radius_cm: r,
                center: [0.0, 0.0],
                eat_direction: [1.0, 0.0],
                table_distance_cm: D,
            };
            for cut in [-4.0, -1.3, 0.0, 2.2] {
                let n = 1200;
                let h = 2.0 * r / n as f64;
                let mut sum = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let p = [-r + (i as f64 + 0.5) * h, -r + (j as f64 + 0.5) * h];
                        if let Some((top, t)) = placed.surface(p, cut) {
                            sum += t * (1.0 - top / D).powi(2) * h * h;
                        }
                    }
                }
                let v = placed.remaining_volume(cut);
                assert!((sum - v).abs() < 2e-3 * v, "{kind:?} cut {cut}: {sum} vs {v}");
            }
        }
    }

    #[test]
    fn fraction_cuts_hit_targets() {
        for kind in [
            ShapeKind::Slab { height_cm: 1.0 },
            ShapeKind::Dome { height_cm: 3.0 },
            ShapeKind::RoughSlab { height_cm: 2.0, amplitude_cm: 0.2, wavelength_cm: 2.0 },
            ShapeKind::ToastOverhang { thickness_cm: 1.2, lift_cm: 1.0 },
        ] {
            let r = radius_for_volume(&kind, 150.0, D);
            assert!((full_volume(&kind, r, D) - 150.0).abs() < 1e-9, "{kind:?}");
            for keep in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let c = cut_for_fraction(&kind, r, D, keep);
                let v = remaining_volume(&kind, r, D, c);
                assert!((v - keep * 150.0).abs() < 1e-9, "{kind:?} keep {keep}: {v}");
            }
        }
    }
}
