//! Monte Carlo drivers, reports and file output.
//!
//! Every replication `r` draws measure `i` from the substream `(seed, r, i)`
//! and replications run in parallel on the current rayon pool. Results are
//! collected in replication order before any reduction, so reports do not
//! depend on the number of worker threads.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{
    eigenvalues_symmetric, empirical_stieltjes, esd_moment, histogram, ks_distance, truncated_distribution,
    EmpiricalDistribution, Spectrum,
};
use crate::error::{Error, Result};
use crate::freeprob::{
    catalan_numbers, cumulants_from_moments, expected_gamma_norm_sq, expected_gram_norm, moments_from_cumulants,
    noncrossing_partitions, verify_voiculescu, FormalSeries, StatePair,
};
use crate::gram::{gram_from_roots, root_embedding, GramMatrix};
use crate::limit::{
    fixed_point_residual, law_cdf, law_cdf_left, law_moment, limiting_stieltjes, support_endpoints, SpectralLaw,
};
use crate::linalg::{dot, SymmetricMatrix};
use crate::measures::{sample_uniform_measure, ProbabilityMeasure};
use crate::stream::Stream;

/// Environment variable read when no explicit thread count is given.
pub const THREADS_ENV: &str = "GRAM_SPECTRA_THREADS";

/// Library version written into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output flavour. `report.json` is always written; `Csv` adds
/// `replications.csv`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

/// The default Stieltjes probe points, `{−1, 0, 0.6, 1.3} × i{0.5, 1, 2}`.
pub fn default_z_grid() -> Vec<Complex64> {
    let mut out = Vec::with_capacity(12);
    for re in [-1.0, 0.0, 0.6, 1.3] {
        for im in [0.5, 1.0, 2.0] {
            out.push(Complex64::new(re, im));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Requested ratio; the ensemble uses `round(tau·n)/n`.
    pub tau: f64,
    pub replications: usize,
    pub seed: u64,
    pub bins: usize,
    pub z_grid: Vec<Complex64>,
    /// Real negative probe for the resolvent quantity of the lemma checks.
    pub lemma_z: f64,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
    pub emit_gnuplot: bool,
}

impl ExperimentConfig {
    pub fn new(n: usize, tau: f64) -> Self {
        ExperimentConfig {
            n,
            tau,
            replications: 20,
            seed: 0,
            bins: 50,
            z_grid: default_z_grid(),
            lemma_z: -1.0,
            output_dir: PathBuf::from("out"),
            format: OutputFormat::Json,
            emit_gnuplot: false,
        }
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Number of measures, `round(tau·n)`.
    pub fn k(&self) -> usize {
        (self.tau * self.n as f64).round() as usize
    }

    /// `k/n`, the ratio of the matrices actually built.
    pub fn effective_tau(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    /// The scaled law at the effective ratio.
    pub fn law(&self) -> Result<SpectralLaw> {
        SpectralLaw::affinity(self.effective_tau())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tau must be positive and finite, got {}",
                self.tau
            )));
        }
        if self.k() < 2 {
            return Err(Error::InvalidConfig(format!("round(tau·n) = {} < 2", self.k())));
        }
        if self.k() > u32::MAX as usize || self.replications > u32::MAX as usize {
            return Err(Error::InvalidConfig("k and replications must fit in 32 bits".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        if self.bins == 0 {
            return Err(Error::InvalidConfig("bins must be positive".into()));
        }
        Ok(())
    }

    fn validate_z_grid(&self) -> Result<()> {
        if self.z_grid.is_empty() {
            return Err(Error::InvalidConfig("empty z grid".into()));
        }
        for z in &self.z_grid {
            let ok = z.im >= 0.25 || (z.im == 0.0 && z.re < -0.1);
            if !ok || !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "z = {z} needs Im z ≥ 0.25 or real z < −0.1"
                )));
            }
        }
        Ok(())
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            n: self.n,
            k: self.k(),
            tau_requested: self.tau,
            tau: self.effective_tau(),
            replications: self.replications,
            seed: self.seed,
            bins: self.bins,
            z_grid: self.z_grid.clone(),
            lemma_z: self.lemma_z,
            format: self.format,
            emit_gnuplot: self.emit_gnuplot,
        }
    }
}

/// Configuration as recorded in `report.json`. The output directory is
/// left out so reports written to different places compare equal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub n: usize,
    pub k: usize,
    pub tau_requested: f64,
    pub tau: f64,
    pub replications: usize,
    pub seed: u64,
    pub bins: usize,
    pub z_grid: Vec<Complex64>,
    pub lemma_z: f64,
    pub format: OutputFormat,
    pub emit_gnuplot: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawEcho {
    pub tau: f64,
    pub scale: f64,
    pub atom_mass: f64,
    pub support: (f64, f64),
}

impl LawEcho {
    fn of(law: &SpectralLaw) -> Self {
        LawEcho {
            tau: law.tau(),
            scale: law.scale(),
            atom_mass: law.atom_mass(),
            support: support_endpoints(law),
        }
    }
}

/// Mean and standard error over replications.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// `None` with fewer than two values.
    pub std_error: Option<f64>,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let std_error = (count > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        });
        Summary { mean, std_error, count }
    }

    /// `(mean − target)/std_error`.
    pub fn z_score(&self, target: f64) -> Option<f64> {
        self.std_error.filter(|s| *s > 0.0).map(|s| (self.mean - target) / s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReplication {
    pub replication: usize,
    pub largest: f64,
    /// Moments 1..4 of `ρ′_K` (mass `(K−1)/K`).
    pub moments: [f64; 4],
    /// Against the law, after renormalising `ρ′_K` to mass 1.
    pub ks: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumAggregates {
    pub largest: Summary,
    pub moments: Vec<Summary>,
    pub ks: Summary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub empirical_density: f64,
    pub limit_density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub version: String,
    pub config: ConfigEcho,
    pub law: LawEcho,
    /// Moments 1..4 of the law itself.
    pub law_moments: Vec<f64>,
    pub replications: Vec<SpectrumReplication>,
    pub failures: Vec<ReplicationFailure>,
    pub aggregates: SpectrumAggregates,
    /// Pooled renormalised `ρ′_K` against bin-averaged law mass.
    pub histogram: Vec<HistogramRow>,
    #[serde(skip)]
    pub eigenvalues: Vec<(usize, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReplication {
    pub replication: usize,
    pub largest: f64,
    /// `largest / (Kπ/4)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub version: String,
    pub config: ConfigEcho,
    pub expected: f64,
    pub replications: Vec<NormReplication>,
    pub failures: Vec<ReplicationFailure>,
    pub largest: Summary,
    pub ratio: Summary,
    /// `(mean − expected)/expected`.
    pub relative_deviation: f64,
    #[serde(skip)]
    pub eigenvalues: Vec<(usize, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StieltjesReplication {
    pub replication: usize,
    pub values: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StieltjesPoint {
    pub z: Complex64,
    pub limit: Complex64,
    pub fixed_point_residual: f64,
    pub mean: Complex64,
    pub std_error_re: Option<f64>,
    pub std_error_im: Option<f64>,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StieltjesReport {
    pub version: String,
    pub config: ConfigEcho,
    pub law: LawEcho,
    pub points: Vec<StieltjesPoint>,
    pub replications: Vec<StieltjesReplication>,
    pub failures: Vec<ReplicationFailure>,
    pub max_deviation: f64,
    #[serde(skip)]
    pub eigenvalues: Vec<(usize, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReplication {
    pub replication: usize,
    /// `(1/N)⟨γ, (G − z)⁻¹ γ⟩`.
    pub resolvent: f64,
    pub gamma_norm_sq: f64,
    pub eta_g_eta: f64,
    pub eta_g2_eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaQuantity {
    pub name: String,
    pub target: f64,
    pub summary: Summary,
    pub deviation: f64,
    pub z_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub version: String,
    pub config: ConfigEcho,
    pub replications: Vec<LemmaReplication>,
    pub failures: Vec<ReplicationFailure>,
    pub quantities: Vec<LemmaQuantity>,
}

impl LemmaReport {
    pub fn quantity(&self, name: &str) -> Option<&LemmaQuantity> {
        self.quantities.iter().find(|q| q.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalanRow {
    pub n: usize,
    pub noncrossing: u64,
    pub catalan: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub version: String,
    pub seed: u64,
    pub catalan: Vec<CatalanRow>,
    pub round_trip_trials: usize,
    pub round_trip_order: usize,
    pub round_trip_max_relative: f64,
    pub voiculescu_trials: usize,
    pub voiculescu_order: usize,
    pub voiculescu_max_residual: f64,
    pub mp_tau: f64,
    pub mp_cumulant_max_error: f64,
    pub passed: bool,
}

/// Anything `emit_report` can write.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Report {
    Spectrum(SpectrumReport),
    Norm(NormReport),
    Stieltjes(StieltjesReport),
    Lemmas(LemmaReport),
    FreeprobSelftest(SelftestReport),
}

impl Report {
    fn eigenvalues(&self) -> Option<&[(usize, Vec<f64>)]> {
        match self {
            Report::Spectrum(r) => Some(&r.eigenvalues),
            Report::Norm(r) => Some(&r.eigenvalues),
            Report::Stieltjes(r) => Some(&r.eigenvalues),
            Report::Lemmas(_) | Report::FreeprobSelftest(_) => None,
        }
    }
}

/// Draws replication `rep`'s ensemble from the uniform distribution.
pub fn uniform_ensemble(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<ProbabilityMeasure>> {
    (0..cfg.k())
        .map(|i| {
            let mut s = Stream::substream(cfg.seed, rep as u32, i as u32);
            sample_uniform_measure(cfg.n, &mut s)
        })
        .collect()
}

/// Runs `body` for every replication in parallel. Failures are recorded
/// per replication; the run only fails when none succeeds.
type Replicated<T> = (Vec<(usize, T)>, Vec<ReplicationFailure>);

fn replicate<T, F>(cfg: &ExperimentConfig, body: F) -> Result<Replicated<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let results: Vec<(usize, Result<T>)> = (0..cfg.replications).into_par_iter().map(|r| (r, body(r))).collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(v) => ok.push((r, v)),
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => {
                eprintln!("replication {r} failed: {e}");
                failures.push(ReplicationFailure {
                    replication: r,
                    message: e.to_string(),
                });
            }
        }
    }
    if ok.is_empty() {
        return Err(Error::Numerical(format!(
            "all {} replications failed",
            cfg.replications
        )));
    }
    Ok((ok, failures))
}

fn spectrum_of(measures: &[ProbabilityMeasure]) -> Result<Spectrum> {
    let roots = root_embedding(measures)?;
    eigenvalues_symmetric(&gram_from_roots(&roots))
}

pub fn run_spectrum_experiment(cfg: &ExperimentConfig) -> Result<SpectrumReport> {
    cfg.validate()?;
    let law = cfg.law()?;
    let (results, failures) = replicate(cfg, |r| {
        let spectrum = spectrum_of(&uniform_ensemble(cfg, r)?)?;
        let trunc = truncated_distribution(&spectrum)?;
        let mut moments = [0.0; 4];
        for (j, m) in moments.iter_mut().enumerate() {
            *m = esd_moment(&trunc, j as u32 + 1)?;
        }
        let normalized = trunc.normalized();
        let ks = ks_distance(&normalized, &law)?;
        let row = SpectrumReplication {
            replication: r,
            largest: spectrum.largest(),
            moments,
            ks,
        };
        Ok((row, normalized, spectrum.eigenvalues().to_vec()))
    })?;

    let rows: Vec<SpectrumReplication> = results.iter().map(|(_, (row, _, _))| row.clone()).collect();
    let column = |f: &dyn Fn(&SpectrumReplication) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let aggregates = SpectrumAggregates {
        largest: Summary::of(&column(&|r| r.largest)),
        moments: (0..4).map(|j| Summary::of(&column(&|r| r.moments[j]))).collect(),
        ks: Summary::of(&column(&|r| r.ks)),
    };
    let parts: Vec<EmpiricalDistribution> = results.iter().map(|(_, (_, d, _))| d.clone()).collect();
    let pooled = EmpiricalDistribution::pooled(&parts, 1.0 / parts.len() as f64);
    let histogram = histogram_rows(&pooled, &law, cfg.bins)?;
    let law_moments = (1..=4).map(|j| law_moment(j, &law)).collect::<Result<Vec<_>>>()?;

    Ok(SpectrumReport {
        version: VERSION.into(),
        config: cfg.echo(),
        law: LawEcho::of(&law),
        law_moments,
        replications: rows,
        failures,
        aggregates,
        histogram,
        eigenvalues: results.into_iter().map(|(r, (_, _, e))| (r, e)).collect(),
    })
}

/// Histogram on `[0, 1.1·upper edge]` with the law's mass per bin divided
/// by the bin width. The first bin includes the law's atom at 0.
pub fn histogram_rows(d: &EmpiricalDistribution, law: &SpectralLaw, bins: usize) -> Result<Vec<HistogramRow>> {
    let (_, hi) = support_endpoints(law);
    let h = histogram(d, 0.0, 1.1 * hi, bins)?;
    Ok(h.bins
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let left = if i == 0 {
                law_cdf_left(b.lo, law)
            } else {
                law_cdf(b.lo, law)
            };
            HistogramRow {
                bin_lo: b.lo,
                bin_hi: b.hi,
                empirical_density: b.density,
                limit_density: (law_cdf(b.hi, law) - left) / (b.hi - b.lo),
            }
        })
        .collect())
}

pub fn run_norm_experiment(cfg: &ExperimentConfig) -> Result<NormReport> {
    run_norm_experiment_with(cfg, |r| uniform_ensemble(cfg, r))
}

/// As [`run_norm_experiment`] with the ensemble of each replication supplied
/// by `ensemble`.
pub fn run_norm_experiment_with<F>(cfg: &ExperimentConfig, ensemble: F) -> Result<NormReport>
where
    F: Fn(usize) -> Result<Vec<ProbabilityMeasure>> + Sync,
{
    cfg.validate()?;
    let k = cfg.k();
    let expected = expected_gram_norm(k, cfg.effective_tau())?;
    let lead = k as f64 * PI / 4.0;
    let (results, failures) = replicate(cfg, |r| {
        let measures = ensemble(r)?;
        if measures.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: measures.len(),
            });
        }
        let spectrum = spectrum_of(&measures)?;
        Ok(spectrum.eigenvalues().to_vec())
    })?;
    let replications: Vec<NormReplication> = results
        .iter()
        .map(|(r, e)| {
            let largest = e[e.len() - 1];
            NormReplication {
                replication: *r,
                largest,
                ratio: largest / lead,
            }
        })
        .collect();
    let largest = Summary::of(&replications.iter().map(|r| r.largest).collect::<Vec<_>>());
    let ratio = Summary::of(&replications.iter().map(|r| r.ratio).collect::<Vec<_>>());
    Ok(NormReport {
        version: VERSION.into(),
        config: cfg.echo(),
        expected,
        relative_deviation: (largest.mean - expected) / expected,
        replications,
        failures,
        largest,
        ratio,
        eigenvalues: results,
    })
}

pub fn run_stieltjes_experiment(cfg: &ExperimentConfig) -> Result<StieltjesReport> {
    cfg.validate()?;
    cfg.validate_z_grid()?;
    let law = cfg.law()?;
    let limits = cfg
        .z_grid
        .iter()
        .map(|&z| limiting_stieltjes(z, &law))
        .collect::<Result<Vec<_>>>()?;
    let (results, failures) = replicate(cfg, |r| {
        let spectrum = spectrum_of(&uniform_ensemble(cfg, r)?)?;
        let values = cfg
            .z_grid
            .iter()
            .map(|&z| empirical_stieltjes(&spectrum, z))
            .collect::<Result<Vec<_>>>()?;
        Ok((values, spectrum.eigenvalues().to_vec()))
    })?;
    let points: Vec<StieltjesPoint> = cfg
        .z_grid
        .iter()
        .zip(&limits)
        .enumerate()
        .map(|(j, (&z, &limit))| {
            let re = Summary::of(&results.iter().map(|(_, (v, _))| v[j].re).collect::<Vec<_>>());
            let im = Summary::of(&results.iter().map(|(_, (v, _))| v[j].im).collect::<Vec<_>>());
            let mean = Complex64::new(re.mean, im.mean);
            StieltjesPoint {
                z,
                limit,
                fixed_point_residual: fixed_point_residual(limit, z, &law),
                mean,
                std_error_re: re.std_error,
                std_error_im: im.std_error,
                deviation: (mean - limit).norm(),
            }
        })
        .collect();
    let max_deviation = points.iter().map(|p| p.deviation).fold(0.0, f64::max);
    let mut replications = Vec::with_capacity(results.len());
    let mut eigenvalues = Vec::with_capacity(results.len());
    for (r, (values, e)) in results {
        replications.push(StieltjesReplication { replication: r, values });
        eigenvalues.push((r, e));
    }
    Ok(StieltjesReport {
        version: VERSION.into(),
        config: cfg.echo(),
        law: LawEcho::of(&law),
        points,
        replications,
        failures,
        max_deviation,
        eigenvalues,
    })
}

/// `E⟨η, Gη⟩ ≈ (πτ/4)N + (4 − π)(1 + τ)/4`.
pub fn expected_eta_gram(n: usize, tau: f64) -> f64 {
    PI * tau / 4.0 * n as f64 + (4.0 - PI) * (1.0 + tau) / 4.0
}

/// `E⟨η, G²η⟩ ≈ (π²τ²/16)N² + (πτ/2)(1 − π/4)(1 + τ)N`.
pub fn expected_eta_gram_sq(n: usize, tau: f64) -> f64 {
    let nf = n as f64;
    PI * PI * tau * tau / 16.0 * nf * nf + PI * tau / 2.0 * (1.0 - PI / 4.0) * (1.0 + tau) * nf
}

pub fn run_lemma_checks(cfg: &ExperimentConfig) -> Result<LemmaReport> {
    cfg.validate()?;
    let z = cfg.lemma_z;
    if !(z < 0.0) || !z.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "lemma probe must be real negative, got {z}"
        )));
    }
    let tau = cfg.effective_tau();
    let gamma_target = expected_gamma_norm_sq(cfg.n, tau)?;
    let (results, failures) = replicate(cfg, |r| {
        let roots = root_embedding(&uniform_ensemble(cfg, r)?)?;
        let gamma = roots.column_sums();
        let g: GramMatrix = gram_from_roots(&roots);
        let solved = g.matrix().shifted(-z).cholesky_solve(&gamma)?;
        let eta: Vec<f64> = gamma.iter().map(|x| x / gamma_target.sqrt()).collect();
        let g_eta = g.matrix().mul_vec(&eta);
        Ok(LemmaReplication {
            replication: r,
            resolvent: dot(&gamma, &solved) / cfg.n as f64,
            gamma_norm_sq: dot(&gamma, &gamma),
            eta_g_eta: dot(&eta, &g_eta),
            eta_g2_eta: dot(&g_eta, &g_eta),
        })
    })?;
    let rows: Vec<LemmaReplication> = results.into_iter().map(|(_, v)| v).collect();
    let quantity = |name: &str, target: f64, f: fn(&LemmaReplication) -> f64| {
        let summary = Summary::of(&rows.iter().map(f).collect::<Vec<_>>());
        LemmaQuantity {
            name: name.into(),
            target,
            deviation: summary.mean - target,
            z_score: summary.z_score(target),
            summary,
        }
    };
    let quantities = vec![
        quantity("resolvent", 1.0, |r| r.resolvent),
        quantity("gamma_norm_sq", gamma_target, |r| r.gamma_norm_sq),
        quantity("eta_g_eta", expected_eta_gram(cfg.n, tau), |r| r.eta_g_eta),
        quantity("eta_g2_eta", expected_eta_gram_sq(cfg.n, tau), |r| r.eta_g2_eta),
    ];
    Ok(LemmaReport {
        version: VERSION.into(),
        config: cfg.echo(),
        replications: rows,
        failures,
        quantities,
    })
}

/// Tolerances of the free-probability self test.
pub const SELFTEST_ROUND_TRIP_TOL: f64 = 1e-12;
pub const SELFTEST_VOICULESCU_TOL: f64 = 1e-10;
pub const SELFTEST_MP_TOL: f64 = 1e-10;

/// A symmetric `n × n` operator with `N(0, 1/(4n))` entries and a random
/// unit state; operator norm is of order 1.
pub fn random_state_pair(n: usize, stream: &mut Stream) -> Result<StatePair> {
    let scale = 1.0 / (2.0 * (n as f64).sqrt());
    let x = SymmetricMatrix::from_upper_fn(n, |_, _| scale * stream.normal());
    let v: Vec<f64> = (0..n).map(|_| stream.normal()).collect();
    let norm = dot(&v, &v).sqrt();
    StatePair::new(x, v.iter().map(|c| c / norm).collect())
}

/// Round trip cumulants → moments → cumulants. The error is relative to the
/// largest coefficient met on the way, which is where the rounding happens.
pub fn round_trip_relative_error(cumulants: &FormalSeries) -> Result<f64> {
    let moments = moments_from_cumulants(cumulants)?;
    let back = cumulants_from_moments(&moments)?;
    let scale = cumulants.coefficients()[1..]
        .iter()
        .chain(moments.coefficients())
        .fold(0.0f64, |m, c| m.max(c.abs()));
    let err = (1..=cumulants.order())
        .map(|j| (back.coefficient(j) - cumulants.coefficient(j)).abs())
        .fold(0.0, f64::max);
    Ok(err / scale)
}

pub fn run_freeprob_selftest(seed: u64) -> Result<SelftestReport> {
    let catalan_ref = catalan_numbers(10);
    let catalan = (1..=10)
        .map(|n| {
            Ok(CatalanRow {
                n,
                noncrossing: noncrossing_partitions(n)?.len() as u64,
                catalan: catalan_ref[n],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (round_trip_trials, round_trip_order) = (100, 10);
    let mut round_trip_max_relative: f64 = 0.0;
    for t in 0..round_trip_trials {
        let mut s = Stream::substream(seed, t as u32, 0);
        let k: Vec<f64> = (0..round_trip_order).map(|_| 2.0 * s.uniform_open0() - 1.0).collect();
        round_trip_max_relative = round_trip_max_relative.max(round_trip_relative_error(&FormalSeries::cumulants(&k))?);
    }

    let (voiculescu_trials, voiculescu_order) = (100, 8);
    let mut voiculescu_max_residual: f64 = 0.0;
    for t in 0..voiculescu_trials {
        let mut s = Stream::substream(seed, t as u32, 1);
        let pair = random_state_pair(4, &mut s)?;
        voiculescu_max_residual =
            voiculescu_max_residual.max(verify_voiculescu(&pair.moments(voiculescu_order), voiculescu_order)?);
    }

    let mp_tau = 0.5;
    let law = SpectralLaw::new(mp_tau, 1.0)?;
    let moments = (1..=6).map(|j| law_moment(j, &law)).collect::<Result<Vec<_>>>()?;
    let k = cumulants_from_moments(&FormalSeries::moments(&moments))?;
    let mp_cumulant_max_error = (1..=6)
        .map(|j| (k.coefficient(j) - mp_tau.powi(j as i32 - 1)).abs())
        .fold(0.0, f64::max);

    let passed = catalan.iter().all(|r| r.noncrossing == r.catalan)
        && round_trip_max_relative <= SELFTEST_ROUND_TRIP_TOL
        && voiculescu_max_residual <= SELFTEST_VOICULESCU_TOL
        && mp_cumulant_max_error <= SELFTEST_MP_TOL;
    Ok(SelftestReport {
        version: VERSION.into(),
        seed,
        catalan,
        round_trip_trials,
        round_trip_order,
        round_trip_max_relative,
        voiculescu_trials,
        voiculescu_order,
        voiculescu_max_residual,
        mp_tau,
        mp_cumulant_max_error,
        passed,
    })
}

/// Resolves the worker count: the explicit value, else the environment
/// variable, else `None` (rayon's default).
pub fn resolve_threads(explicit: Option<usize>) -> Result<Option<usize>> {
    let threads = match explicit {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV}={v} is not a count")))?,
            ),
            _ => None,
        },
    };
    if threads == Some(0) {
        return Err(Error::InvalidConfig("thread count must be positive".into()));
    }
    Ok(threads)
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global
/// pool for `None`.
pub fn with_threads<T, F>(threads: Option<usize>, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv<R: Serialize>(path: &Path, header: Option<&[&str]>, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(header.is_none())
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err(path))?;
    if let Some(h) = header {
        w.write_record(h).map_err(csv_err(path))?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// `report.json` content: pretty-printed with a trailing newline.
pub fn report_json(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Writes the artifacts of `report` into `cfg.output_dir` and returns their
/// paths.
pub fn emit_report(report: &Report, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let path = dir.join("report.json");
    std::fs::write(&path, report_json(report)?).map_err(io_err(&path))?;
    written.push(path);

    if let Some(eigen) = report.eigenvalues() {
        let path = dir.join("eigenvalues.csv");
        let rows = eigen
            .iter()
            .flat_map(|(r, e)| e.iter().enumerate().map(move |(i, &x)| (*r, i, x)));
        write_csv(&path, Some(&["replication", "index", "eigenvalue"]), rows)?;
        written.push(path);
    }
    if let Report::Spectrum(r) = report {
        let path = dir.join("histogram.csv");
        write_csv(&path, None, r.histogram.iter())?;
        written.push(path);
    }
    if cfg.format == OutputFormat::Csv {
        let path = dir.join("replications.csv");
        write_replications(&path, report)?;
        written.push(path);
    }
    if cfg.emit_gnuplot {
        if let Some(script) = gnuplot_script(report) {
            let path = dir.join("plot.gp");
            std::fs::write(&path, script).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn write_replications(path: &Path, report: &Report) -> Result<()> {
    match report {
        Report::Spectrum(r) => write_csv(
            path,
            Some(&["replication", "largest", "m1", "m2", "m3", "m4", "ks"]),
            r.replications.iter().map(|x| {
                (
                    x.replication,
                    x.largest,
                    x.moments[0],
                    x.moments[1],
                    x.moments[2],
                    x.moments[3],
                    x.ks,
                )
            }),
        ),
        Report::Norm(r) => write_csv(path, None, r.replications.iter()),
        Report::Stieltjes(r) => write_csv(
            path,
            Some(&["replication", "z_re", "z_im", "value_re", "value_im"]),
            r.replications.iter().flat_map(|x| {
                r.config
                    .z_grid
                    .iter()
                    .zip(&x.values)
                    .map(move |(z, v)| (x.replication, z.re, z.im, v.re, v.im))
            }),
        ),
        Report::Lemmas(r) => write_csv(path, None, r.replications.iter()),
        Report::FreeprobSelftest(r) => write_csv(path, None, r.catalan.iter()),
    }
}

/// A gnuplot script for the CSV files written next to it.
pub fn gnuplot_script(report: &Report) -> Option<String> {
    let common = "set datafile separator ','\nset key top right\n";
    match report {
        Report::Spectrum(r) => Some(format!(
            "{common}set title 'n = {}, k = {}, tau = {}'\nset xlabel 'eigenvalue'\nset ylabel 'density'\n\
             plot 'histogram.csv' every ::1 using (($1+$2)/2):3 with boxes title 'empirical', \\\n     \
             'histogram.csv' every ::1 using (($1+$2)/2):4 with lines lw 2 title 'limit'\n",
            r.config.n, r.config.k, r.config.tau
        )),
        Report::Norm(_) | Report::Stieltjes(_) => Some(format!(
            "{common}set xlabel 'index'\nset ylabel 'eigenvalue'\nset logscale y\n\
             plot 'eigenvalues.csv' every ::1 using 2:($3 > 0 ? $3 : 1/0) with points pt 7 ps 0.3 title 'eigenvalues'\n"
        )),
        Report::Lemmas(_) | Report::FreeprobSelftest(_) => None,
    }
}
