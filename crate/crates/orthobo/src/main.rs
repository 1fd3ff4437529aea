use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use orthobo::bench::{render_bench, run_bench, BenchRequest};
use orthobo::experiment::{probe_json, MANIFEST_FILE};
use orthobo::probe::{write_probe_csv, HistoryDesign, ProbeEstimator};
use orthobo::{build_report, replay, run_experiment, run_probe, ExperimentSpec, ProbeRequest, ReportStatus};
use orthobo_core::engine::Method;
use orthobo_core::kernels::KernelFamily;

const EXIT_PARTIAL: u8 = 3;
const EXIT_EMPTY: u8 = 4;
const EXIT_REPLAY_MISMATCH: u8 = 5;

#[derive(Parser)]
#[command(name = "orthobo", version, about = "Bayesian optimization with orthogonalized Monte Carlo acquisitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell and probe of an experiment spec.
    Run {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Rebuild the acquisition on a frozen surrogate and record probe values.
    Probe(ProbeArgs),
    /// Summary tables for a manifest.
    Report { manifest: PathBuf },
    /// Rerun a manifest and compare every artifact byte for byte.
    Replay { manifest: PathBuf },
    /// Per-step timing of acquisition methods.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, default_value = "michalewicz:10")]
    objective: String,
    #[arg(long, default_value = "matern52-ard")]
    kernel: KernelFamily,
    /// mc-ei | orth-ei | tpe-mc | tpe-orth. The JSON always holds both
    /// estimators of the family; the CSV keeps only this one.
    #[arg(long, default_value = "orth-ei")]
    estimator: ProbeEstimator,
    #[arg(long, default_value_t = 32)]
    mc_samples: usize,
    #[arg(long, default_value_t = 16)]
    repeats: usize,
    #[arg(long, default_value_t = 64)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    history: usize,
    #[arg(long)]
    random_history: bool,
    #[arg(long, default_value_t = 0)]
    history_seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    cv_ridge: f64,
    #[arg(long)]
    cv_crossfit: bool,
    #[arg(long, default_value_t = 0.2)]
    tpe_quantile: f64,
    /// Directory for `<label>.json` and `<label>.csv`; stdout JSON if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "levy:16")]
    objective: String,
    #[arg(long, default_value = "matern52-ard")]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 512)]
    mc_samples: usize,
    #[arg(long, default_value_t = 64)]
    history: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "mc-ei,orth-ei")]
    methods: Vec<Method>,
}

fn probe(args: ProbeArgs) -> Result<()> {
    let mut req = ProbeRequest {
        objective: args.objective,
        estimator: args.estimator,
        kernel: args.kernel,
        mc_samples: args.mc_samples,
        repeats: args.repeats,
        probes: args.probes,
        seed: args.seed,
        history: args.history,
        design: if args.random_history { HistoryDesign::Random } else { HistoryDesign::Sobol },
        history_seed: args.history_seed,
        tpe_quantile: args.tpe_quantile,
        ..ProbeRequest::default()
    };
    req.cv.ridge = args.cv_ridge;
    req.cv.cross_fit = args.cv_crossfit;
    let report = run_probe(&req)?;
    let json = probe_json(&report)?;
    match args.out {
        Some(dir) => {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let label = req.label();
            fs::write(dir.join(format!("{label}.json")), json)?;
            let file = fs::File::create(dir.join(format!("{label}.csv")))?;
            write_probe_csv(&report, Some(req.estimator.name()), file)?;
            let change = 100.0 * (report.orth().mean_variance / report.raw().mean_variance - 1.0);
            println!(
                "{label}: {} {:.3e}, {} {:.3e} ({change:.2}%)",
                report.raw().estimator,
                report.raw().mean_variance,
                report.orth().estimator,
                report.orth().mean_variance
            );
        }
        None => print!("{}", String::from_utf8(json)?),
    }
    Ok(())
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { spec, out, jobs } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            spec.apply_seed_env()?;
            if let Some(out) = out {
                spec.output = out;
            }
            if let Some(jobs) = jobs {
                spec.jobs = jobs;
            }
            let manifest = run_experiment(&spec, &spec.output)?;
            let failed = manifest.cells.iter().flat_map(|c| &c.runs).filter(|r| !r.status.is_ok()).count()
                + manifest.probes.iter().filter(|p| !p.status.is_ok()).count();
            println!("wrote {}", spec.output.join(MANIFEST_FILE).display());
            if failed > 0 {
                eprintln!("{failed} run(s) failed; see the manifest");
                return Ok(ExitCode::from(EXIT_PARTIAL));
            }
        }
        Command::Probe(args) => probe(args)?,
        Command::Report { manifest } => {
            let report = build_report(&manifest)?;
            print!("{}", report.render());
            match report.status() {
                ReportStatus::Complete => {}
                ReportStatus::Partial => return Ok(ExitCode::from(EXIT_PARTIAL)),
                ReportStatus::Empty => return Ok(ExitCode::from(EXIT_EMPTY)),
            }
        }
        Command::Replay { manifest } => {
            let outcome = replay(&manifest)?;
            println!("{} artifact(s) identical, {} skipped", outcome.matched.len(), outcome.skipped.len());
            for path in &outcome.mismatched {
                println!("differs: {}", path.display());
            }
            if !outcome.is_identical() {
                return Ok(ExitCode::from(EXIT_REPLAY_MISMATCH));
            }
        }
        Command::Bench(args) => {
            let req = BenchRequest {
                objective: args.objective,
                kernel: args.kernel,
                mc_samples: args.mc_samples,
                history: args.history,
                repeats: args.repeats,
                seed: args.seed,
                methods: args.methods,
            };
            print!("{}", render_bench(&run_bench(&req)?));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
