use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gram_spectra::experiments::{
    emit_report, resolve_threads, run_freeprob_selftest, run_lemma_checks, run_norm_experiment,
    run_spectrum_experiment, run_stieltjes_experiment, with_threads, ExperimentConfig, OutputFormat, Report,
};
use gram_spectra::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gram-spectra",
    version,
    about = "Spectra of Hellinger-affinity Gram matrices of random measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Empirical spectrum against the scaled Marchenko-Pastur law.
    Spectrum(RunArgs),
    /// Largest eigenvalue against its expansion in K.
    Norm(RunArgs),
    /// Empirical Stieltjes transform on a grid of probe points.
    Stieltjes(RunArgs),
    /// Resolvent and gamma-vector quantities.
    Lemmas(RunArgs),
    /// Non-crossing partition counts and series identities.
    FreeprobSelftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    emit_gnuplot: bool,
    /// Worker threads; falls back to GRAM_SPECTRA_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SelftestArgs {
    #[command(flatten)]
    common: Common,
}

fn config(n: usize, tau: f64, reps: usize, bins: usize, c: &Common) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(n, tau).with_replications(reps).with_seed(c.seed);
    cfg.bins = bins;
    cfg.output_dir = c.out.clone();
    cfg.format = match c.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    cfg.emit_gnuplot = c.emit_gnuplot;
    cfg
}

fn summary(report: &Report) -> String {
    match report {
        Report::Spectrum(r) => format!(
            "k = {}, tau = {}: mean KS {:.4}, mean m1 {:.5}, mean largest {:.3}",
            r.config.k, r.config.tau, r.aggregates.ks.mean, r.aggregates.moments[0].mean, r.aggregates.largest.mean
        ),
        Report::Norm(r) => format!(
            "k = {}: mean largest {:.3}, expansion {:.3}, relative deviation {:.2e}",
            r.config.k, r.largest.mean, r.expected, r.relative_deviation
        ),
        Report::Stieltjes(r) => format!("{} probe points: max deviation {:.4}", r.points.len(), r.max_deviation),
        Report::Lemmas(r) => r
            .quantities
            .iter()
            .map(|q| format!("{} {:.6} (target {:.6})", q.name, q.summary.mean, q.target))
            .collect::<Vec<_>>()
            .join(", "),
        Report::FreeprobSelftest(r) => format!(
            "round trip {:.1e}, Voiculescu {:.1e}, MP cumulants {:.1e}: {}",
            r.round_trip_max_relative,
            r.voiculescu_max_residual,
            r.mp_cumulant_max_error,
            if r.passed { "passed" } else { "FAILED" }
        ),
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let (cfg, threads) = match &cli.command {
        Command::Spectrum(a) | Command::Norm(a) | Command::Stieltjes(a) | Command::Lemmas(a) => {
            (config(a.n, a.tau, a.reps, a.bins, &a.common), a.common.threads)
        }
        Command::FreeprobSelftest(a) => (config(2, 1.0, 1, 1, &a.common), a.common.threads),
    };
    let threads = resolve_threads(threads)?;
    let report = with_threads(threads, || -> Result<Report, Error> {
        Ok(match &cli.command {
            Command::Spectrum(_) => Report::Spectrum(run_spectrum_experiment(&cfg)?),
            Command::Norm(_) => Report::Norm(run_norm_experiment(&cfg)?),
            Command::Stieltjes(_) => Report::Stieltjes(run_stieltjes_experiment(&cfg)?),
            Command::Lemmas(_) => Report::Lemmas(run_lemma_checks(&cfg)?),
            Command::FreeprobSelftest(_) => Report::FreeprobSelftest(run_freeprob_selftest(cfg.seed)?),
        })
    })??;
    eprintln!("{}", summary(&report));
    for path in emit_report(&report, &cfg)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(!matches!(&report, Report::FreeprobSelftest(r) if !r.passed))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NUMERICAL),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::from(EXIT_NUMERICAL)
            }
        }
    }
}
