use num_complex::Complex64;

use gram_spectra::eigen::{eigenvalues_symmetric, empirical_stieltjes, histogram, truncated_distribution};
use gram_spectra::experiments::{
    random_state_pair, run_norm_experiment, run_spectrum_experiment, run_stieltjes_experiment, uniform_ensemble,
    ExperimentConfig,
};
use gram_spectra::freeprob::rank_one_norm_series;
use gram_spectra::gram::gram_matrix;
use gram_spectra::limit::{law_cdf, limiting_stieltjes, scaled_density, support_endpoints};
use gram_spectra::measures::sample_uniform_measure;
use gram_spectra::stream::Stream;

#[test]
fn top_eigenvalue_separates() {
    for rep in 0..50 {
        let tau = 0.25 + 1.75 * rep as f64 / 49.0;
        let cfg = ExperimentConfig::new(200, tau).with_seed(31);
        let s = eigenvalues_symmetric(&gram_matrix(&uniform_ensemble(&cfg, rep).unwrap()).unwrap()).unwrap();
        let e = s.eigenvalues();
        assert!(e[e.len() - 1] >= 10.0 * e[e.len() - 2], "tau {tau}");
    }
}

#[test]
fn sampled_measures_stay_on_simplex() {
    for n in [1, 2, 3, 17, 256, 4096] {
        for i in 0..1000 {
            let m = sample_uniform_measure(n, &mut Stream::substream(5, n as u32, i)).unwrap();
            assert!(m.weights().iter().all(|&w| w >= 0.0));
            assert!((m.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn empirical_stieltjes_tail() {
    let cfg = ExperimentConfig::new(100, 0.4).with_seed(2);
    let s = eigenvalues_symmetric(&gram_matrix(&uniform_ensemble(&cfg, 0).unwrap()).unwrap()).unwrap();
    let mut last = f64::INFINITY;
    for y in [1e2, 1e4, 1e6] {
        let z = Complex64::new(0.0, y);
        let err = (-z * empirical_stieltjes(&s, z).unwrap() - 1.0).norm();
        assert!(err < last);
        last = err;
    }
    assert!(last < 1e-5);
    let f = limiting_stieltjes(Complex64::new(0.0, 1e6), &cfg.law().unwrap()).unwrap();
    let c = run_stieltjes_experiment(&ExperimentConfig {
        z_grid: vec![Complex64::new(0.0, 1e6)],
        ..cfg.with_replications(2)
    })
    .unwrap();
    assert!((c.points[0].mean - f).norm() <= 1e-6);
}

#[test]
fn norm_series_order_over_three_step_sizes() {
    let pairs: Vec<_> = (0..100)
        .map(|t| random_state_pair(5, &mut Stream::substream(77, t, 0)).unwrap())
        .collect();
    for n0 in 1..=3 {
        let err = |eps: f64| -> f64 {
            pairs
                .iter()
                .map(|p| {
                    let s = rank_one_norm_series(p, n0).unwrap();
                    (p.perturbed_norm(eps).unwrap() - s.eval_power(eps)).abs()
                })
                .sum()
        };
        let (e1, e2, e3) = (err(0.02), err(0.01), err(0.005));
        let expected = f64::powi(2.0, n0 as i32 + 1);
        for r in [e1 / e2, e2 / e3] {
            assert!((r / expected - 1.0).abs() < 0.3, "n0 {n0}: {r}");
        }
    }
}

#[test]
fn spectrum_report_is_consistent() {
    let cfg = ExperimentConfig::new(300, 0.5).with_replications(4).with_seed(8);
    let r = run_spectrum_experiment(&cfg).unwrap();
    for (row, (rep, e)) in r.replications.iter().zip(&r.eigenvalues) {
        assert_eq!(row.replication, *rep);
        let k = e.len() as f64;
        assert!((e.iter().sum::<f64>() - k).abs() <= 1e-8 * k);
        assert_eq!(row.largest, e[e.len() - 1]);
    }
    let ks = r.replications.iter().map(|x| x.ks).sum::<f64>() / 4.0;
    assert!((ks - r.aggregates.ks.mean).abs() <= 1e-12);
    assert!(ks < 0.05);
    assert_eq!(r.histogram.len(), cfg.bins);
}

#[test]
fn pooled_histogram_tracks_limit_density() {
    let cfg = ExperimentConfig::new(1000, 0.5).with_replications(4).with_seed(13);
    let law = cfg.law().unwrap();
    let (lo, hi) = support_endpoints(&law);
    let parts: Vec<_> = (0..4)
        .map(|r| {
            let s = eigenvalues_symmetric(&gram_matrix(&uniform_ensemble(&cfg, r).unwrap()).unwrap()).unwrap();
            truncated_distribution(&s).unwrap().normalized()
        })
        .collect();
    let pooled = gram_spectra::eigen::EmpiricalDistribution::pooled(&parts, 0.25);
    let h = histogram(&pooled, lo, hi, 20).unwrap();
    let peak = (0..1000)
        .map(|i| scaled_density(lo + (hi - lo) * i as f64 / 1000.0, &law))
        .fold(0.0, f64::max);
    for b in &h.bins[2..18] {
        let limit = (law_cdf(b.hi, &law) - law_cdf(b.lo, &law)) / (b.hi - b.lo);
        assert!(
            (b.density - limit).abs() <= 0.15 * peak,
            "[{}, {}]: {} vs {limit}",
            b.lo,
            b.hi,
            b.density
        );
    }
}

#[test]
fn norm_report_targets() {
    let r = run_norm_experiment(&ExperimentConfig::new(400, 0.5).with_replications(5).with_seed(4)).unwrap();
    assert!(r.relative_deviation.abs() < 0.01);
    assert!(r.ratio.mean > 1.0);
}
