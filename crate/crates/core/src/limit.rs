//! The limiting spectral law: a Marchenko-Pastur distribution with aspect
//! ratio `τ`, dilated by a scale factor.
//!
//! For `0 < τ ≤ 1` the law is the continuous density
//!
//! ```text
//! σ(x, τ) = √(4τx − (x + τ − 1)²) / (2πτx),   (1−√τ)² ≤ x ≤ (1+√τ)²
//! ```
//!
//! For `τ > 1` an atom of mass `(τ−1)/τ` sits at the origin and the
//! continuous part carries the remaining `1/τ`. The degenerate case `τ = 0`
//! is a unit point mass at the scale. For Gram matrices of random
//! affinities the scale is `a = 1 − π/4`.
//!
//! Integrals over the density use the substitution
//! `x/scale = (1+τ) + 2√τ sin θ`, under which `dF = (2/π) cos²θ / u(θ) dθ`
//! is smooth on `[−π/2, π/2]`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Absolute tolerance of the adaptive quadrature behind the CDF and moments.
pub const QUAD_TOL: f64 = 1e-10;

/// `1 − π/4`, the variance of `√E` for a unit exponential `E`.
pub fn affinity_scale() -> f64 {
    1.0 - PI / 4.0
}

/// A (scaled) Marchenko-Pastur law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralLaw {
    tau: f64,
    scale: f64,
    atom_mass: f64,
}

impl SpectralLaw {
    pub fn new(tau: f64, scale: f64) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "tau = {tau} must be a non-negative number"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("scale = {scale} must be positive")));
        }
        let atom_mass = if tau > 1.0 { (tau - 1.0) / tau } else { 0.0 };
        Ok(SpectralLaw { tau, scale, atom_mass })
    }

    /// The law with scale `1 − π/4`.
    pub fn affinity(tau: f64) -> Result<Self> {
        Self::new(tau, affinity_scale())
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Mass of the atom at the origin (non-zero only for `τ > 1`).
    pub fn atom_mass(&self) -> f64 {
        self.atom_mass
    }

    /// `τ = 0`: the law is a point mass at `scale`.
    pub fn is_degenerate(&self) -> bool {
        self.tau == 0.0
    }

    /// Mass carried by the continuous part.
    pub fn continuous_mass(&self) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            1.0 - self.atom_mass
        }
    }

    /// Location and mass of the point mass, if any.
    pub fn atom(&self) -> Option<(f64, f64)> {
        if self.is_degenerate() {
            Some((self.scale, 1.0))
        } else if self.atom_mass > 0.0 {
            Some((0.0, self.atom_mass))
        } else {
            None
        }
    }

    // unscaled support centre and half-width
    fn centre(&self) -> f64 {
        1.0 + self.tau
    }

    fn radius(&self) -> f64 {
        2.0 * self.tau.sqrt()
    }

    /// Unscaled `u(θ) = (1+τ) + 2√τ sin θ`, written so that the lower edge
    /// is computed without cancellation.
    fn u_of_theta(&self, theta: f64) -> f64 {
        let lower = (1.0 - self.tau.sqrt()).powi(2);
        let s = theta.sin();
        let one_plus_sin = if s < 0.0 {
            let c = theta.cos();
            c * c / (1.0 - s)
        } else {
            1.0 + s
        };
        lower + self.radius() * one_plus_sin
    }

    /// Continuous-part density with respect to θ.
    fn theta_density(&self, theta: f64) -> f64 {
        let c = theta.cos();
        2.0 * c * c / (PI * self.u_of_theta(theta))
    }

    fn theta_of(&self, x: f64) -> f64 {
        let t = ((x / self.scale - self.centre()) / self.radius()).clamp(-1.0, 1.0);
        t.asin()
    }
}

/// Continuous part of the unscaled Marchenko-Pastur density.
pub fn mp_density(x: f64, tau: f64) -> f64 {
    if !(tau > 0.0) || !(x > 0.0) {
        return 0.0;
    }
    let lo = (1.0 - tau.sqrt()).powi(2);
    let hi = (1.0 + tau.sqrt()).powi(2);
    if x < lo || x > hi {
        return 0.0;
    }
    let disc = 4.0 * tau * x - (x + tau - 1.0).powi(2);
    if disc <= 0.0 {
        return 0.0;
    }
    disc.sqrt() / (2.0 * PI * tau * x)
}

/// Continuous part of the dilated density, `mp_density(x/scale)/scale`.
pub fn scaled_density(x: f64, law: &SpectralLaw) -> f64 {
    if law.is_degenerate() {
        return 0.0;
    }
    mp_density(x / law.scale, law.tau) / law.scale
}

/// Edges of the continuous support, `scale·(1 ∓ √τ)²`.
pub fn support_endpoints(law: &SpectralLaw) -> (f64, f64) {
    let r = law.tau.sqrt();
    (law.scale * (1.0 - r).powi(2), law.scale * (1.0 + r).powi(2))
}

fn continuous_cdf_theta(law: &SpectralLaw, theta: f64) -> f64 {
    if theta <= -FRAC_PI_2 {
        return 0.0;
    }
    quadrature::integrate(|t| law.theta_density(t), -FRAC_PI_2, theta.min(FRAC_PI_2), QUAD_TOL)
}

/// Right-continuous distribution function of the law.
pub fn law_cdf(x: f64, law: &SpectralLaw) -> f64 {
    let atom = match law.atom() {
        Some((loc, mass)) if x >= loc => mass,
        _ => 0.0,
    };
    if law.is_degenerate() {
        return atom;
    }
    let (lo, hi) = support_endpoints(law);
    let cont = if x <= lo {
        0.0
    } else if x >= hi {
        law.continuous_mass()
    } else {
        continuous_cdf_theta(law, law.theta_of(x))
    };
    atom + cont
}

/// Left limit `F(x−)` of the distribution function.
pub fn law_cdf_left(x: f64, law: &SpectralLaw) -> f64 {
    let f = law_cdf(x, law);
    match law.atom() {
        Some((loc, mass)) if x == loc => f - mass,
        _ => f,
    }
}

/// `∫ x^order dlaw` by quadrature.
pub fn law_moment(order: u32, law: &SpectralLaw) -> Result<f64> {
    if order == 0 {
        return Err(Error::InvalidArgument("moment order must be positive".into()));
    }
    if law.is_degenerate() {
        return Ok(law.scale.powi(order as i32));
    }
    // u^order dF = (2/π) u^(order−1) cos²θ dθ; the atom sits at 0.
    let integral = quadrature::integrate(
        |t| {
            let c = t.cos();
            2.0 / PI * law.u_of_theta(t).powi(order as i32 - 1) * c * c
        },
        -FRAC_PI_2,
        FRAC_PI_2,
        QUAD_TOL,
    );
    Ok(law.scale.powi(order as i32) * integral)
}

/// Quantiles of the law for ascending probabilities in `[0, 1]`.
///
/// Walks the support once, locating each target by safeguarded Newton
/// steps on the θ parametrisation.
pub fn law_quantiles(probs: &[f64], law: &SpectralLaw) -> Result<Vec<f64>> {
    if probs.windows(2).any(|w| w[1] < w[0]) || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument(
            "probabilities must be ascending in [0, 1]".into(),
        ));
    }
    if law.is_degenerate() {
        return Ok(vec![law.scale; probs.len()]);
    }
    let atom = law.atom_mass;
    let (lo, hi) = support_endpoints(law);
    let mut out = Vec::with_capacity(probs.len());
    // running bracket start and its continuous CDF value
    let mut theta0 = -FRAC_PI_2;
    let mut f0 = 0.0;
    for &p in probs {
        if atom > 0.0 && p <= atom {
            out.push(0.0);
            continue;
        }
        let target = p - atom;
        if target <= 0.0 {
            out.push(lo);
            continue;
        }
        if target >= law.continuous_mass() {
            out.push(hi);
            continue;
        }
        let (mut a, mut b) = (theta0, FRAC_PI_2);
        let mut theta = theta0.max(-FRAC_PI_2 + 1e-12);
        let mut f_theta = f0 + quadrature::fixed(&|t| law.theta_density(t), theta0, theta);
        for _ in 0..100 {
            let g = f_theta - target;
            if g.abs() < 1e-14 {
                break;
            }
            if g < 0.0 {
                a = theta;
            } else {
                b = theta;
            }
            let d = law.theta_density(theta);
            let mut next = if d > 0.0 { theta - g / d } else { f64::NAN };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (b - a) < 1e-15 {
                break;
            }
            f_theta += quadrature::fixed(&|t| law.theta_density(t), theta, next);
            theta = next;
        }
        theta0 = theta;
        f0 = f_theta;
        out.push(law.scale * law.u_of_theta(theta));
    }
    Ok(out)
}

/// Residual `|f·(a − z − aτ − azτf) − 1|` of the fixed-point equation.
pub fn fixed_point_residual(f: Complex64, z: Complex64, law: &SpectralLaw) -> f64 {
    let a = law.scale;
    let t = law.tau;
    (f * (a - z - a * t - a * z * t * f) - 1.0).norm()
}

fn on_support(x: f64, law: &SpectralLaw) -> bool {
    if let Some((loc, _)) = law.atom() {
        if x == loc {
            return true;
        }
    }
    if law.is_degenerate() {
        return false;
    }
    let (lo, hi) = support_endpoints(law);
    x >= lo && x <= hi
}

/// Both roots of `azτf² − (a − z − aτ)f + 1 = 0`, or the single root when
/// the quadratic degenerates.
fn fixed_point_roots(z: Complex64, law: &SpectralLaw) -> Vec<Complex64> {
    let a = law.scale;
    let t = law.tau;
    let qa = a * z * t;
    let qb = -(a - z - a * t);
    let qc = Complex64::new(1.0, 0.0);
    if qa.norm() == 0.0 {
        return vec![-qc / qb];
    }
    let sq = (qb * qb - 4.0 * qa * qc).sqrt();
    let sign = if (qb.conj() * sq).re >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (qb + sign * sq);
    vec![q / qa, qc / q]
}

fn polish(f: Complex64, z: Complex64, law: &SpectralLaw) -> Complex64 {
    let a = law.scale;
    let t = law.tau;
    let qa = a * z * t;
    let qb = -(a - z - a * t);
    let g = qa * f * f + qb * f + 1.0;
    let dg = 2.0 * qa * f + qb;
    if dg.norm() == 0.0 {
        f
    } else {
        f - g / dg
    }
}

/// Stieltjes transform `∫ dlaw(x)/(x − z)` of the law, as the root of
/// `f = 1/(a − z − aτ − azτf)` with `Im z · Im f > 0` (for real `z` off the
/// support, the limit from the upper half-plane).
pub fn limiting_stieltjes(z: Complex64, law: &SpectralLaw) -> Result<Complex64> {
    if z.im == 0.0 && on_support(z.re, law) {
        return Err(Error::InvalidArgument(format!("z = {} lies on the support", z.re)));
    }
    if law.is_degenerate() {
        return Ok(1.0 / (law.scale - z));
    }
    let roots = fixed_point_roots(z, law);
    let pick = if roots.len() == 1 {
        roots[0]
    } else if z.im != 0.0 {
        let s = z.im.signum();
        if s * roots[0].im >= s * roots[1].im {
            roots[0]
        } else {
            roots[1]
        }
    } else {
        // match against the branch just above the real axis
        let eps = 1e-7 * (1.0 + z.re.abs());
        let upper = limiting_stieltjes(Complex64::new(z.re, eps), law)?;
        if (roots[0] - upper).norm() <= (roots[1] - upper).norm() {
            roots[0]
        } else {
            roots[1]
        }
    };
    let f = polish(pick, z, law);
    Ok(if z.im == 0.0 { Complex64::new(f.re, 0.0) } else { f })
}

/// `∫ dlaw(x)/(x − z)` by direct quadrature.
pub fn stieltjes_by_quadrature(z: Complex64, law: &SpectralLaw) -> Complex64 {
    let atom = law.atom().map(|(loc, m)| m / (loc - z)).unwrap_or_default();
    if law.is_degenerate() {
        return atom;
    }
    let cont = quadrature::integrate_complex(
        |t| law.theta_density(t) / (law.scale * law.u_of_theta(t) - z),
        -FRAC_PI_2,
        FRAC_PI_2,
        1e-12,
    );
    atom + cont
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn density_examples() {
        assert!((mp_density(2.0, 1.0) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let (lo, hi) = ((1.0 - 0.5f64.sqrt()).powi(2), (1.0 + 0.5f64.sqrt()).powi(2));
        assert_eq!(mp_density(lo - 1e-6, 0.5), 0.0);
        assert_eq!(mp_density(hi + 1e-6, 0.5), 0.0);
        assert!(mp_density(0.5 * (lo + hi), 0.5) > 0.0);
        // integrable 1/(π√x) blow-up at τ = 1
        for x in [1e-4, 1e-6, 1e-8] {
            let d = mp_density(x, 1.0);
            assert!((d * PI * x.sqrt() - 1.0).abs() < 1e-3, "{x}: {d}");
        }
    }

    #[test]
    fn scale_one_is_identity() {
        let law = SpectralLaw::new(0.7, 1.0).unwrap();
        for x in [0.1, 0.5, 1.0, 2.2] {
            assert_eq!(scaled_density(x, &law), mp_density(x, 0.7));
        }
    }

    #[test]
    fn support_examples() {
        let a = affinity_scale();
        assert_eq!(support_endpoints(&SpectralLaw::new(1.0, a).unwrap()), (0.0, 4.0 * a));
        assert!((4.0 * a - 0.858407).abs() < 1e-6);
        let (lo, hi) = support_endpoints(&SpectralLaw::new(0.25, 1.0).unwrap());
        assert!((lo - 0.25).abs() < 1e-15 && (hi - 2.25).abs() < 1e-15);
        let law = SpectralLaw::affinity(0.5).unwrap();
        let (lo, hi) = support_endpoints(&law);
        assert!(
            (lo - 0.018_409_927_070_324).abs() < 1e-12 && (hi - 0.625_395_582_737_331).abs() < 1e-12,
            "{lo} {hi}"
        );
        for i in 1..200 {
            let x = lo * i as f64 / 200.0;
            assert_eq!(scaled_density(x, &law), 0.0);
            assert_eq!(scaled_density(hi + x, &law), 0.0);
        }
    }

    #[test]
    fn atom_mass_follows_tau() {
        for tau in [0.1, 1.0, 2.0, 4.0] {
            let law = SpectralLaw::affinity(tau).unwrap();
            assert!((law.atom_mass() - (0.0f64).max((tau - 1.0) / tau)).abs() < 1e-12);
        }
        assert!(SpectralLaw::new(-1.0, 1.0).is_err());
        assert!(SpectralLaw::new(1.0, 0.0).is_err());
    }

    #[test]
    fn cdf_limits_and_monotonicity() {
        for tau in [0.1, 0.5, 1.0, 2.0, 4.0] {
            let law = SpectralLaw::affinity(tau).unwrap();
            let (_, hi) = support_endpoints(&law);
            assert_eq!(law_cdf(-1.0, &law), 0.0);
            assert!((law_cdf(hi * 1.01, &law) - 1.0).abs() < 1e-8);
            let mut last = 0.0;
            for i in 0..=100 {
                let f = law_cdf(hi * i as f64 / 100.0, &law);
                assert!(f >= last - 1e-15);
                last = f;
            }
        }
    }

    #[test]
    fn cdf_against_direct_quadrature() {
        // Integrate the x-space density directly; the edge singularity at 0
        // for τ = 1 is removed by x = s².
        let a = affinity_scale();
        let law = SpectralLaw::new(1.0, a).unwrap();
        let direct = quadrature::integrate(|s| 2.0 * s * scaled_density(s * s, &law), 0.0, a.sqrt(), 1e-13);
        assert!(
            (law_cdf(a, &law) - direct).abs() < 1e-8,
            "{} vs {direct}",
            law_cdf(a, &law)
        );
    }

    #[test]
    fn left_limit_at_atom() {
        let law = SpectralLaw::affinity(2.0).unwrap();
        assert_eq!(law_cdf_left(0.0, &law), 0.0);
        assert!((law_cdf(0.0, &law) - 0.5).abs() < 1e-15);
        let degenerate = SpectralLaw::new(0.0, 1.0).unwrap();
        assert_eq!(law_cdf_left(1.0, &degenerate), 0.0);
        assert_eq!(law_cdf(1.0, &degenerate), 1.0);
    }

    #[test]
    fn moment_examples() {
        let a = affinity_scale();
        for tau in [0.3, 0.5, 1.0, 3.0] {
            let law = SpectralLaw::new(tau, a).unwrap();
            assert!((law_moment(1, &law).unwrap() - a).abs() < 1e-10);
            assert!((law_moment(2, &law).unwrap() - (1.0 + tau) * a * a).abs() < 1e-10);
        }
        assert!((law_moment(3, &SpectralLaw::new(1.0, 1.0).unwrap()).unwrap() - 5.0).abs() < 1e-9);
        assert!(law_moment(0, &SpectralLaw::new(1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn stieltjes_examples() {
        let law = SpectralLaw::affinity(1.0).unwrap();
        let f = limiting_stieltjes(c(-0.5, 0.0), &law).unwrap();
        assert!((f.re - 1.510_416_428_717_609).abs() < 1e-12 && f.im == 0.0, "{f}");
        let q = stieltjes_by_quadrature(c(-0.5, 0.0), &law);
        assert!((f - q).norm() < 1e-8);

        let z = c(0.0, 1e6);
        let f = limiting_stieltjes(z, &law).unwrap();
        let lead = -1.0 / z - law.scale() / (z * z);
        assert!((f - lead).norm() / lead.norm() < 1e-11);

        let z = c(1.0, 1.0);
        let law = SpectralLaw::affinity(0.5).unwrap();
        assert!((limiting_stieltjes(z, &law).unwrap() - stieltjes_by_quadrature(z, &law)).norm() < 1e-6);
    }

    #[test]
    fn stieltjes_rejects_support_points() {
        let law = SpectralLaw::affinity(0.5).unwrap();
        assert!(limiting_stieltjes(c(0.3, 0.0), &law).is_err());
        let law2 = SpectralLaw::affinity(2.0).unwrap();
        assert!(limiting_stieltjes(c(0.0, 0.0), &law2).is_err());
        // between the atom and the continuous part
        let (lo, _) = support_endpoints(&law2);
        let f = limiting_stieltjes(c(0.5 * lo, 0.0), &law2).unwrap();
        assert!((f - stieltjes_by_quadrature(c(0.5 * lo, 0.0), &law2)).norm() < 1e-7);
        // above the support
        let f = limiting_stieltjes(c(2.0, 0.0), &law).unwrap();
        assert!((f - stieltjes_by_quadrature(c(2.0, 0.0), &law)).norm() < 1e-8);
    }

    #[test]
    fn degenerate_law() {
        let law = SpectralLaw::new(0.0, 1.0).unwrap();
        let f = limiting_stieltjes(c(0.0, 1.0), &law).unwrap();
        assert!((f - 1.0 / c(1.0, -1.0)).norm() < 1e-15);
        assert_eq!(law_moment(3, &law).unwrap(), 1.0);
    }

    #[test]
    fn quantiles_invert_cdf() {
        for tau in [0.5, 1.0, 2.0] {
            let law = SpectralLaw::affinity(tau).unwrap();
            let probs: Vec<f64> = (1..50).map(|i| i as f64 / 50.0).collect();
            let q = law_quantiles(&probs, &law).unwrap();
            for (p, x) in probs.iter().zip(&q) {
                if *x == 0.0 {
                    assert!(*p <= law.atom_mass());
                } else {
                    assert!((law_cdf(*x, &law) - p).abs() < 1e-9, "tau={tau} p={p}");
                }
            }
        }
    }
}
