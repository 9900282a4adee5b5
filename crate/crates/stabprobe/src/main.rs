use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stabprobe::config::{self, parse_override, ConfigError};
use stabprobe::{harness, output, selftest, svg};
use stabprobe_core::experiment::Experiment;
use stabprobe_core::linalg::skew_basis;
use stabprobe_core::probe::{
    ar1_population_set, probe_with_tol, FamilySpec, DEFAULT_FD_STEP, DEFAULT_KERNEL_TOL,
};
use stabprobe_core::separation::{amari_index, jade_separate, sobi_separate};
use stabprobe_core::signal::{generate_sources, gg_excess_kurtosis, mix, random_orthogonal};
use stabprobe_core::stats::{fit_whitener, CumulantTensor};
use stabprobe_core::{JacobianMode, ObservationEvaluator, RngSeed, SourceSpec};

/// Jacobian-based local identifiability probe for linear blind source
/// separation.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the probe once and print `probe=<value> kernel_dim=<d>`.
    Probe(ProbeArgs),
    /// Run a Monte Carlo experiment and write CSV (and SVG) artifacts.
    Experiment(ExperimentArgs),
    /// Demix a signal file, or a random mixture of synthetic sources.
    Separate(SeparateArgs),
    /// Run the exact-oracle self-test suite.
    Selftest,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Hos,
    Sos,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Source shape (HOS sources; SOS innovations if given).
    #[arg(long)]
    p: Option<f64>,
    /// Number of lags; 0 with --population keeps only the zero-lag constraint.
    #[arg(long, default_value_t = 1)]
    lags: usize,
    /// AR(1) coefficients, one per channel.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.6, 0.9])]
    ar: Vec<f64>,
    /// Use exact population statistics instead of samples.
    #[arg(long)]
    population: bool,
    /// Number of cumulant matrices kept (largest norms first).
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long = "T", default_value_t = 100_000)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    h: f64,
    /// Force finite differences for the SOS family.
    #[arg(long)]
    fd: bool,
    /// Use the plain (unsymmetrized) lagged covariances.
    #[arg(long)]
    no_symmetrize: bool,
    #[arg(long, default_value_t = DEFAULT_KERNEL_TOL)]
    tol: f64,
    /// Directory for the report and optional dumps.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write each constraint matrix to `{family}_{tag}.csv`.
    #[arg(long, requires = "out_dir")]
    dump_constraints: bool,
    /// Write the whitened signals to `signals.csv`.
    #[arg(long, requires = "out_dir")]
    dump_signals: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Which {
    Hos,
    Sos,
    TradeoffSos,
    TradeoffHos,
}

impl Which {
    fn experiment(self) -> Experiment {
        match self {
            Self::Hos => Experiment::Hos,
            Self::Sos => Experiment::Sos,
            Self::TradeoffSos => Experiment::TradeoffSos,
            Self::TradeoffHos => Experiment::TradeoffHos,
        }
    }
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    which: Which,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, value_parser = ["full", "quick"])]
    preset: Option<String>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["sample", "population"])]
    mode: Option<String>,
    #[arg(long, value_parser = ["csv", "csv+svg"])]
    format: Option<String>,
    /// Also write per-trial records.
    #[arg(long)]
    records: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>, ConfigError> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("preset", self.preset.clone());
        push("T", self.t.map(|v| v.to_string()));
        push("trials", self.trials.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("mode", self.mode.clone());
        push("format", self.format.clone());
        push("records", self.records.then(|| "true".into()));
        push(
            "out_dir",
            self.out_dir.as_ref().map(|d| d.display().to_string()),
        );
        for s in &self.set {
            out.push(parse_override(s)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Jade,
    Sobi,
}

#[derive(Debug, Args)]
struct SeparateArgs {
    #[arg(value_enum)]
    method: Method,
    /// Signal file `t,ch1,...,chn`; without it, synthetic sources are mixed
    /// by a random rotation and the API is reported.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Lags for SOBI.
    #[arg(long, default_value_t = 3)]
    lags: usize,
    /// Synthetic source shape (i.i.d. for JADE, AR innovations for SOBI).
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.6, 0.9])]
    ar: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long = "T", default_value_t = 100_000)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Failure with its exit code: 2 for usage/config errors, 1 otherwise.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Self { code: 1, err }
    }
}

fn usage(err: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        err: err.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Probe(args) => cmd_probe(&args),
        Command::Experiment(args) => cmd_experiment(&args),
        Command::Separate(args) => cmd_separate(&args),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn write_files(dir: &std::path::Path, files: &[(String, String)]) -> Result<(), Failure> {
    output::write_all(dir, files)
        .with_context(|| format!("writing to {}", dir.display()))
        .map_err(Failure::from)?;
    Ok(())
}

fn cmd_probe(a: &ProbeArgs) -> Result<ExitCode, Failure> {
    if a.ar.len() != a.n {
        return Err(usage(anyhow!(
            "--ar needs {} coefficients, got {}",
            a.n,
            a.ar.len()
        )));
    }
    let basis = skew_basis(a.n).map_err(usage)?;
    let symmetrize = !a.no_symmetrize;
    let fd = JacobianMode::FiniteDifference { step: a.h };
    let mut files = Vec::new();

    let (ev, mode) = match (a.family, a.population) {
        (FamilyArg::Sos, true) => {
            let lags: Vec<usize> = if a.lags == 0 {
                vec![0]
            } else {
                (1..=a.lags).collect()
            };
            let set = ar1_population_set(&a.ar, &lags).map_err(usage)?;
            let ev = ObservationEvaluator::population_sos(set).map_err(usage)?;
            (ev, if a.fd { fd } else { JacobianMode::AnalyticSos })
        }
        (FamilyArg::Hos, true) => {
            let p =
                a.p.ok_or_else(|| usage(anyhow!("--p is required for the HOS family")))?;
            let tensor = CumulantTensor::from_independent(&vec![gg_excess_kurtosis(p); a.n]);
            (
                ObservationEvaluator::population_hos(tensor, a.k).map_err(usage)?,
                fd,
            )
        }
        (family, false) => {
            let (model, fam, mode) = match family {
                FamilyArg::Hos => {
                    let p =
                        a.p.ok_or_else(|| usage(anyhow!("--p is required for the HOS family")))?;
                    (SourceSpec::IidGg { p }, FamilySpec::Hos { k: a.k }, fd)
                }
                FamilyArg::Sos => {
                    let coeffs = a.ar.clone();
                    let model = match a.p {
                        Some(p) => SourceSpec::Ar1Gg { p, coeffs },
                        None => SourceSpec::Ar1Gaussian { coeffs },
                    };
                    let fam = FamilySpec::Sos {
                        lags: a.lags,
                        symmetrize,
                    };
                    (model, fam, if a.fd { fd } else { JacobianMode::AnalyticSos })
                }
            };
            let s = generate_sources(&model, a.n, a.t, RngSeed::new(a.seed, 0)).map_err(usage)?;
            let z = fit_whitener(&s)
                .and_then(|w| w.apply(&s))
                .context("whitening")?;
            if a.dump_signals {
                files.push(("signals.csv".to_string(), output::signal_csv(&z)));
            }
            (
                ObservationEvaluator::sample(z, fam).context("building constraints")?,
                mode,
            )
        }
    };

    let report = probe_with_tol(&ev, &basis, mode, a.tol).context("probe")?;
    println!(
        "probe={} kernel_dim={}",
        stabprobe_core::format_f64(report.probe),
        report.kernel_dim
    );

    if let Some(dir) = &a.out_dir {
        if a.dump_constraints {
            files.extend(output::constraint_files(
                &ev.reference_set().context("constraints")?,
            ));
        }
        files.push(("probe_report.txt".into(), report.to_kv()));
        files.push(("config.resolved".into(), probe_resolved(a)));
        write_files(dir, &files)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn probe_resolved(a: &ProbeArgs) -> String {
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    format!(
        "family = {}\npopulation = {}\np = {}\nlags = {}\na = {}\nK = {}\nn = {}\nT = {}\nseed = {}\nh = {}\nfd = {}\nsymmetrize = {}\ntol = {}\n",
        match a.family {
            FamilyArg::Hos => "hos",
            FamilyArg::Sos => "sos",
        },
        a.population,
        a.p.map(|p| p.to_string()).unwrap_or_default(),
        a.lags,
        join(&a.ar),
        a.k.map(|k| k.to_string()).unwrap_or_default(),
        a.n,
        a.t,
        a.seed,
        a.h,
        a.fd,
        !a.no_symmetrize,
        a.tol
    )
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<ExitCode, Failure> {
    let overrides = a.overrides().map_err(usage)?;
    let cfg = config::load(a.config.as_deref(), &overrides).map_err(usage)?;
    let dir = cfg.require_out_dir().map_err(usage)?.to_path_buf();
    let threads = harness::threads_from_env().map_err(usage)?;
    let exp = a.which.experiment();

    let result = harness::run_experiment(exp, &cfg.experiment, threads)
        .with_context(|| format!("experiment {}", exp.name()))?;

    let mut files = output::experiment_files(&result, cfg.records);
    if cfg.format.with_svg() {
        files.push((format!("{}.svg", exp.name()), svg::render(&result)));
    }
    files.push(("config.resolved".into(), cfg.resolved_text()));
    write_files(&dir, &files)?;

    for (c, s) in result.cells.iter().zip(&result.summaries) {
        match s.api_mean {
            Some(api) => println!(
                "{exp} {c}: probe={:.6} ± {:.6} api={api:.6}",
                s.probe_mean,
                s.probe_std,
                exp = exp.name()
            ),
            None => println!(
                "{exp} {c}: probe={:.6} ± {:.6}",
                s.probe_mean,
                s.probe_std,
                exp = exp.name()
            ),
        }
    }
    for (p, f) in &result.frontier {
        match f {
            Some(k) => println!("frontier p={p}: {k}"),
            None => println!("frontier p={p}: not reached"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_separate(a: &SeparateArgs) -> Result<ExitCode, Failure> {
    let (x, h) = match &a.input {
        Some(path) => (
            output::read_signal_csv(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(usage)?,
            None,
        ),
        None => {
            let model = match a.method {
                Method::Jade => SourceSpec::IidGg { p: a.p },
                Method::Sobi if a.p == 2.0 => SourceSpec::Ar1Gaussian {
                    coeffs: a.ar.clone(),
                },
                Method::Sobi => SourceSpec::Ar1Gg {
                    p: a.p,
                    coeffs: a.ar.clone(),
                },
            };
            let seed = RngSeed::new(a.seed, 0);
            let s = generate_sources(&model, a.n, a.t, seed).map_err(usage)?;
            let h = random_orthogonal(a.n, seed.derive(1 << 32)).context("mixing matrix")?;
            (mix(&h, &s).context("mixing")?, Some(h))
        }
    };
    let w = match a.method {
        Method::Jade => jade_separate(&x),
        Method::Sobi => sobi_separate(&x, a.lags),
    }
    .context("separation")?;

    print!("{}", output::matrix_csv(&w));
    if let Some(h) = &h {
        let api = amari_index(&(&w * h)).context("amari index")?;
        println!("api={}", stabprobe_core::format_f64(api));
    }
    if let Some(dir) = &a.out_dir {
        write_files(dir, &[("demixing.csv".into(), output::matrix_csv(&w))])?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest() -> Result<ExitCode, Failure> {
    let checks = selftest::run();
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {failed} failed", checks.len());
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
