//! Spectra of Gram matrices and the empirical objects built on them: the
//! eigenvalue distribution `ρ_K`, its truncation `ρ′_K` without the top
//! eigenvalue, moments, the empirical Stieltjes transform, KS distance to a
//! limiting law, and histograms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::GramMatrix;
use crate::limit::{law_cdf, law_cdf_left, SpectralLaw};
use crate::linalg::{symmetric_eigen, EigenOptions};

/// Relative floor (times `K`) below which an eigenvalue is a PSD violation.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Ascending eigenvalues of a Gram matrix with its ensemble parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    n: usize,
    k: usize,
    tau: f64,
}

impl Spectrum {
    /// Validates ordering, the trace identity `Σλ = k` and the PSD floor.
    pub fn new(eigenvalues: Vec<f64>, n: usize) -> Result<Self> {
        let k = eigenvalues.len();
        if k == 0 {
            return Err(Error::Empty("spectrum"));
        }
        if n == 0 {
            return Err(Error::InvalidDimension("n = 0".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("eigenvalues not ascending".into()));
        }
        let kf = k as f64;
        let floor = -PSD_TOLERANCE * kf;
        if eigenvalues[0] < floor {
            return Err(Error::Numerical(format!(
                "eigenvalue {} below PSD floor {floor}",
                eigenvalues[0]
            )));
        }
        let trace: f64 = eigenvalues.iter().sum();
        if (trace - kf).abs() > PSD_TOLERANCE * kf {
            return Err(Error::Numerical(format!("eigenvalues sum to {trace}, expected {k}")));
        }
        Ok(Spectrum {
            eigenvalues,
            n,
            k,
            tau: kf / n as f64,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Source event-space dimension `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Matrix order `K`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// `K/N`.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Largest eigenvalue, i.e. the operator norm of the Gram matrix.
    pub fn largest(&self) -> f64 {
        self.eigenvalues[self.k - 1]
    }

    /// `ρ_K`: every eigenvalue with weight `1/K`, negative dust clamped to 0.
    pub fn distribution(&self) -> EmpiricalDistribution {
        let w = 1.0 / self.k as f64;
        EmpiricalDistribution::from_atoms(self.eigenvalues.iter().map(|&x| (x.max(0.0), w)).collect())
    }
}

/// Full spectrum of a Gram matrix.
pub fn eigenvalues_symmetric(matrix: &GramMatrix) -> Result<Spectrum> {
    let eig = symmetric_eigen(matrix.matrix(), EigenOptions::default())?;
    Spectrum::new(eig.values, matrix.source_dim())
}

/// A finite weighted point measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    /// `(location, weight)`, ascending in location.
    atoms: Vec<(f64, f64)>,
    total_mass: f64,
}

impl EmpiricalDistribution {
    /// Sorts by location and drops zero-weight atoms.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.retain(|(_, w)| *w > 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total_mass = atoms.iter().map(|(_, w)| w).sum();
        EmpiricalDistribution { atoms, total_mass }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Scales all weights so the total mass is 1.
    pub fn normalized(&self) -> Self {
        let s = 1.0 / self.total_mass;
        EmpiricalDistribution::from_atoms(self.atoms.iter().map(|&(x, w)| (x, w * s)).collect())
    }

    /// Union of atoms, each distribution's weights multiplied by `factor`.
    pub fn pooled(parts: &[EmpiricalDistribution], factor: f64) -> Self {
        let atoms = parts
            .iter()
            .flat_map(|d| d.atoms.iter().map(move |&(x, w)| (x, w * factor)))
            .collect();
        EmpiricalDistribution::from_atoms(atoms)
    }
}

/// `ρ′_K`: the spectrum without one instance of its largest eigenvalue,
/// remaining atoms weighted `1/K` each.
pub fn truncated_distribution(s: &Spectrum) -> Result<EmpiricalDistribution> {
    if s.k < 2 {
        return Err(Error::InvalidDimension(format!("truncation needs k ≥ 2, got {}", s.k)));
    }
    let w = 1.0 / s.k as f64;
    Ok(EmpiricalDistribution::from_atoms(
        s.eigenvalues[..s.k - 1].iter().map(|&x| (x.max(0.0), w)).collect(),
    ))
}

/// `Σ wᵢ xᵢ^order`.
pub fn esd_moment(d: &EmpiricalDistribution, order: u32) -> Result<f64> {
    if order == 0 {
        return Err(Error::InvalidArgument("moment order must be positive".into()));
    }
    Ok(d.atoms.iter().map(|(x, w)| w * x.powi(order as i32)).sum())
}

/// `(1/K) Σ 1/(λᵢ − z)`.
pub fn empirical_stieltjes(s: &Spectrum, z: Complex64) -> Result<Complex64> {
    if let Some(x) = s
        .eigenvalues
        .iter()
        .find(|&&x| (Complex64::new(x, 0.0) - z).norm() < 1e-9)
    {
        return Err(Error::InvalidArgument(format!("z = {z} within 1e-9 of eigenvalue {x}")));
    }
    let sum: Complex64 = s.eigenvalues.iter().map(|&x| 1.0 / (x - z)).sum();
    Ok(sum / s.k as f64)
}

/// Kolmogorov-Smirnov distance between a normalised empirical distribution
/// and a law: the largest gap between the two distribution functions,
/// checked on both sides of every jump.
pub fn ks_distance(d: &EmpiricalDistribution, law: &SpectralLaw) -> Result<f64> {
    if (d.total_mass - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "distribution has mass {}; normalise before comparing",
            d.total_mass
        )));
    }
    let mut locations: Vec<f64> = d.atoms.iter().map(|a| a.0).collect();
    if let Some((loc, _)) = law.atom() {
        locations.push(loc);
    }
    locations.sort_by(f64::total_cmp);
    locations.dedup();

    let mut worst: f64 = 0.0;
    let mut below = 0.0; // empirical mass strictly below the current location
    let mut idx = 0;
    for x in locations {
        let mut at = 0.0;
        while idx < d.atoms.len() && d.atoms[idx].0 <= x {
            at += d.atoms[idx].1;
            idx += 1;
        }
        let left_emp = below;
        let right_emp = (below + at).min(1.0);
        worst = worst.max((left_emp - law_cdf_left(x, law)).abs());
        worst = worst.max((right_emp - law_cdf(x, law)).abs());
        below = right_emp;
    }
    Ok(worst)
}

/// One histogram bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

/// Binned densities plus the mass that fell outside `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<Bin>,
    pub below: f64,
    pub above: f64,
}

impl Histogram {
    /// `Σ density·width`.
    pub fn in_range_mass(&self) -> f64 {
        self.bins.iter().map(|b| b.density * (b.hi - b.lo)).sum()
    }
}

/// Equal-width histogram on `[lo, hi]`; an atom exactly at `hi` goes in the
/// last bin.
pub fn histogram(d: &EmpiricalDistribution, lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid range [{lo}, {hi}]")));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins = 0".into()));
    }
    let width = (hi - lo) / bins as f64;
    let mut mass = vec![0.0; bins];
    let (mut below, mut above) = (0.0, 0.0);
    for &(x, w) in &d.atoms {
        if x < lo {
            below += w;
        } else if x > hi {
            above += w;
        } else {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            mass[i] += w;
        }
    }
    let out = mass
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let b_lo = lo + i as f64 * width;
            let b_hi = if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width };
            Bin {
                lo: b_lo,
                hi: b_hi,
                density: m / (b_hi - b_lo),
            }
        })
        .collect();
    Ok(Histogram {
        bins: out,
        below,
        above,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::gram_matrix;
    use crate::limit::{law_quantiles, SpectralLaw};
    use crate::linalg::SymmetricMatrix;
    use crate::measures::ProbabilityMeasure;

    #[test]
    fn identity_and_all_ones_spectra() {
        let id = GramMatrix::from_matrix(SymmetricMatrix::identity(4), 4).unwrap();
        assert_eq!(eigenvalues_symmetric(&id).unwrap().eigenvalues(), &[1.0; 4]);
        let ones = GramMatrix::from_matrix(SymmetricMatrix::filled(5, 1.0), 1).unwrap();
        let s = eigenvalues_symmetric(&ones).unwrap();
        assert!((s.largest() - 5.0).abs() < 1e-12);
        assert!(s.eigenvalues()[..4].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![2.0, 1.0], 2).is_err());
        assert!(Spectrum::new(vec![-0.1, 2.1], 2).is_err());
        assert!(Spectrum::new(vec![0.5, 0.5], 2).is_err());
        assert!(Spectrum::new(vec![-1e-12, 2.0 + 1e-12], 2).is_ok());
    }

    #[test]
    fn truncation() {
        let s = Spectrum::new(vec![0.0, 0.0, 3.0], 3).unwrap();
        let d = truncated_distribution(&s).unwrap();
        assert_eq!(d.atoms(), &[(0.0, 1.0 / 3.0), (0.0, 1.0 / 3.0)]);
        assert!((d.total_mass() - 2.0 / 3.0).abs() < 1e-15);
        let one = Spectrum::new(vec![1.0], 1).unwrap();
        assert!(truncated_distribution(&one).is_err());
        // ties: only one copy of the maximum goes
        let tied = Spectrum::new(vec![0.5, 1.25, 1.25], 3).unwrap();
        let d = truncated_distribution(&tied).unwrap();
        assert_eq!(d.atoms().len(), 2);
        assert_eq!(d.atoms()[1].0, 1.25);
    }

    #[test]
    fn truncation_plus_top_reconstructs_full() {
        let s = Spectrum::new(vec![0.1, 0.4, 0.5, 3.0], 4).unwrap();
        let mut atoms = truncated_distribution(&s).unwrap().atoms().to_vec();
        atoms.push((s.largest(), 0.25));
        assert_eq!(EmpiricalDistribution::from_atoms(atoms), s.distribution());
    }

    #[test]
    fn moments() {
        let d = EmpiricalDistribution::from_atoms(vec![(1.0, 1.0)]);
        assert_eq!(esd_moment(&d, 3).unwrap(), 1.0);
        let ones = GramMatrix::from_matrix(SymmetricMatrix::filled(5, 1.0), 1).unwrap();
        let s = eigenvalues_symmetric(&ones).unwrap();
        assert!((esd_moment(&s.distribution(), 1).unwrap() - 1.0).abs() < 1e-12);
        assert!(esd_moment(&d, 0).is_err());
    }

    #[test]
    fn stieltjes_examples() {
        let s = Spectrum::new(vec![1.0, 1.0], 2).unwrap();
        assert_eq!(
            empirical_stieltjes(&s, Complex64::new(0.0, 0.0)).unwrap(),
            Complex64::new(1.0, 0.0)
        );
        let s = Spectrum::new(vec![0.0, 2.0], 2).unwrap();
        let i = Complex64::i();
        let expected = 0.5 * (i + (2.0 + i) / 5.0);
        assert!((empirical_stieltjes(&s, i).unwrap() - expected).norm() < 1e-15);
        let z = Complex64::new(1e6, 0.0);
        let v = empirical_stieltjes(&s, z).unwrap();
        assert!(((v + 1.0 / z) / (1.0 / z)).norm() < 1e-5);
        let far = Complex64::new(0.0, 1e8);
        assert!(((-far * empirical_stieltjes(&s, far).unwrap()) - 1.0).norm() < 1e-7);
        assert!(empirical_stieltjes(&s, Complex64::new(2.0, 0.0)).is_err());
        assert!(empirical_stieltjes(&s, Complex64::new(0.3, 0.2)).unwrap().im > 0.0);
    }

    #[test]
    fn ks_self_consistency() {
        let law = SpectralLaw::affinity(0.5).unwrap();
        let m = 100_000;
        let probs: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
        let q = law_quantiles(&probs, &law).unwrap();
        let d = EmpiricalDistribution::from_atoms(q.into_iter().map(|x| (x, 1.0 / m as f64)).collect());
        let ks = ks_distance(&d, &law).unwrap();
        assert!(ks <= 2e-5, "{ks}");
    }

    #[test]
    fn ks_point_mass_and_mismatch() {
        let point = EmpiricalDistribution::from_atoms(vec![(1.0, 1.0)]);
        assert_eq!(ks_distance(&point, &SpectralLaw::new(0.0, 1.0).unwrap()).unwrap(), 0.0);

        let same: Vec<_> = (0..6).map(|_| ProbabilityMeasure::degenerate(3, 0).unwrap()).collect();
        let s = eigenvalues_symmetric(&gram_matrix(&same).unwrap()).unwrap();
        let d = truncated_distribution(&s).unwrap().normalized();
        assert!(ks_distance(&d, &SpectralLaw::affinity(0.5).unwrap()).unwrap() >= 0.5);

        let unnormalized = truncated_distribution(&s).unwrap();
        assert!(ks_distance(&unnormalized, &SpectralLaw::affinity(0.5).unwrap()).is_err());
    }

    #[test]
    fn histogram_examples() {
        let d = EmpiricalDistribution::from_atoms(vec![(0.5, 0.8)]);
        let h = histogram(&d, 0.0, 1.0, 1).unwrap();
        assert_eq!(h.bins[0].density, 0.8);

        let n = 1000;
        let d =
            EmpiricalDistribution::from_atoms((0..n).map(|i| ((i as f64 + 0.5) / n as f64, 1.0 / n as f64)).collect());
        let h = histogram(&d, 0.0, 1.0, 10).unwrap();
        for b in &h.bins {
            assert!((b.density - 1.0).abs() < 1e-9);
        }

        let d = EmpiricalDistribution::from_atoms(vec![(-1.0, 0.1), (0.2, 0.3), (1.0, 0.2), (3.0, 0.4)]);
        let h = histogram(&d, 0.0, 1.0, 7).unwrap();
        assert!((h.in_range_mass() - 0.5).abs() < 1e-12);
        assert_eq!((h.below, h.above), (0.1, 0.4));
        assert!(histogram(&d, 1.0, 1.0, 3).is_err());
        assert!(histogram(&d, 0.0, 1.0, 0).is_err());
    }
}
