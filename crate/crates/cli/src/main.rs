use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mcsage::baselines::mcmc_sage;
use mcsage::bounds::mcrb_report;
use mcsage::harness::{load_spec, run_ber_sweep, run_mse_sweep, to_csv, write_results, SweepAxis};
use mcsage::sysmodel::{delay_support, draw_scenario_with, generate_signatures, simulate_received, linear_to_db};
use mcsage::{ExperimentSpec, SystemConfig};

#[derive(Parser)]
#[command(name = "mcsage", version, about = "Monte-Carlo SAGE receiver sweeps for asynchronous DS-CDMA")]
struct Cli {
    /// Worker threads for the trial pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coefficient and delay MSE against the maximum delay.
    MseSweep(SweepArgs),
    /// Payload BER against the effective SNR.
    BerSweep(SweepArgs),
    /// Modified Cramér-Rao bounds for one signature draw.
    Bounds(FrameArgs),
    /// One frame through the receiver, estimates against the truth.
    Demo(FrameArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// CSV destination; a JSON mirror is written next to it. Defaults to the
    /// spec's `output`, else the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct FrameArgs {
    /// Experiment spec; the built-in five-user scenario when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::MseSweep(args) => sweep(args, SweepAxis::TauMaxFraction),
        Command::BerSweep(args) => sweep(args, SweepAxis::EffectiveSnr),
        Command::Bounds(args) => bounds(args),
        Command::Demo(args) => demo(args),
    }
}

fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::TauMaxFraction => "tau_max_fraction",
        SweepAxis::EffectiveSnr => "effective_snr",
    }
}

fn read_spec(path: &Path) -> Result<ExperimentSpec> {
    load_spec(path).with_context(|| format!("reading spec {}", path.display()))
}

fn sweep(args: SweepArgs, axis: SweepAxis) -> Result<()> {
    let mut spec = read_spec(&args.spec)?;
    if spec.axis != axis {
        bail!("{} sweeps {}, not {}", args.spec.display(), axis_name(spec.axis), axis_name(axis));
    }
    if let Some(seed) = args.seed {
        spec.system.seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    let result = match axis {
        SweepAxis::TauMaxFraction => run_mse_sweep(&spec)?,
        SweepAxis::EffectiveSnr => run_ber_sweep(&spec)?,
    };
    match args.out.or(spec.output.map(PathBuf::from)) {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            write_results(&result, &path).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} rows to {}", result.rows.len(), path.display());
        }
        None => std::io::stdout().write_all(&to_csv(&result)?)?,
    }
    Ok(())
}

fn frame_config(args: &FrameArgs) -> Result<(SystemConfig, ExperimentSpec)> {
    let mut spec = match &args.spec {
        Some(path) => read_spec(path)?,
        None => ExperimentSpec {
            axis: SweepAxis::TauMaxFraction,
            axis_values: vec![0.5],
            trials: 1,
            receivers: vec![mcsage::harness::ReceiverKind::McmcSage],
            output: None,
            channel: mcsage::ChannelModel::Rayleigh,
            nominal_user: None,
            system: SystemConfig::paper_scenario(),
        },
    };
    if let Some(seed) = args.seed {
        spec.system.seed = seed;
    }
    spec.system.validate()?;
    Ok((spec.system.clone(), spec))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn bounds(args: FrameArgs) -> Result<()> {
    let (cfg, spec) = frame_config(&args)?;
    let sig = generate_signatures(&cfg, cfg.seed);
    let truth = draw_scenario_with(&cfg, cfg.seed, 0.5, spec.channel)?;
    let report = mcrb_report(&cfg, &sig, &truth.tau)?;
    emit(&args.out, &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn demo(args: FrameArgs) -> Result<()> {
    let (cfg, spec) = frame_config(&args)?;
    let frac = match spec.axis {
        SweepAxis::TauMaxFraction => spec.axis_values.iter().cloned().fold(f64::NAN, f64::max),
        SweepAxis::EffectiveSnr => 0.5,
    };
    let sig = generate_signatures(&cfg, cfg.seed);
    let truth = draw_scenario_with(&cfg, cfg.seed.wrapping_add(1), frac, spec.channel)?;
    let r = simulate_received(&cfg, &sig, &truth, cfg.seed.wrapping_add(2))?;
    let (start, out) = mcmc_sage(&cfg, &sig, &r, &truth.pilots, delay_support(&cfg, frac)?, cfg.seed)?;

    let mut text = format!(
        "K={} Nc={} Q={} L={} Lp={} N0={} tau_max={}T_b, {} SAGE updates\n",
        cfg.users, cfg.chips, cfg.samples_per_chip, cfg.symbols, cfg.pilots, cfg.n0, frac, out.trace.len()
    );
    text += "user  snr_db  delay(true/init/final)             a_true               a_hat  errors\n";
    for k in 0..cfg.users {
        let errors = (cfg.pilots..cfg.symbols)
            .filter(|&ell| out.decisions[k * cfg.symbols + ell] != truth.d.get(k, ell))
            .count();
        let a = truth.a[k];
        let h = out.state.a_hat[k];
        text += &format!(
            "{:>4}  {:>6.1}  {:>6}/{:>4}/{:>5}  {:>+8.3}{:>+8.3}i  {:>+8.3}{:>+8.3}i  {:>3}/{}\n",
            k + 1,
            linear_to_db(cfg.avg_snr(k)),
            truth.tau[k].get(),
            start.tau0[k].get(),
            out.state.tau_hat[k].get(),
            a.re,
            a.im,
            h.re,
            h.im,
            errors,
            cfg.payload_len()
        );
    }
    emit(&args.out, &text)
}
