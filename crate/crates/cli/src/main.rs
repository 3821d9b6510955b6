use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;

use vpon_core::scenario::{load_sweep, preset, SweepSpec, PRESET_NAMES};
use vpon_core::sim::SimTime;
use vpon_core::sweep::{run_sweep, write_report, Execution};

/// Two-tier vPON fronthaul latency simulator.
#[derive(Debug, Parser)]
#[command(name = "vpon-sim", version)]
struct Args {
    /// Scenario file (TOML with [ran], [pon] and optional [sweep]).
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,

    /// Built-in sweep: fig3 .. fig8.
    #[arg(long)]
    preset: Option<String>,

    /// Replace the sweep's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Simulated seconds per point.
    #[arg(long)]
    duration: Option<f64>,

    /// Worker threads; 1 runs points sequentially, 0 uses every core.
    #[arg(long, default_value_t = 0)]
    parallel: usize,

    /// Also write metrics.json next to each metrics.csv.
    #[arg(long)]
    json: bool,

    /// List the built-in presets and exit.
    #[arg(long)]
    list_presets: bool,
}

fn load(args: &Args) -> Result<SweepSpec> {
    let mut spec = match (&args.scenario, &args.preset) {
        (Some(path), None) => load_sweep(path)?,
        (None, Some(name)) => preset(name)?,
        _ => bail!("pass exactly one of --scenario or --preset"),
    };
    if let Some(seed) = args.seed {
        spec.seeds = vec![seed];
    }
    if let Some(d) = args.duration {
        if !(d > 0.0 && d.is_finite()) {
            bail!("--duration must be a positive number of seconds");
        }
        spec.template.duration = SimTime::from_secs_f64(d);
    }
    spec.validate()?;
    Ok(spec)
}

fn main() -> Result<()> {
    let args = Args::parse();
    if args.list_presets {
        for name in PRESET_NAMES {
            println!("{name}");
        }
        return Ok(());
    }
    let spec = load(&args)?;
    let exec = match args.parallel {
        1 => Execution::Sequential,
        0 => Execution::Parallel(None),
        n => Execution::Parallel(Some(n)),
    };
    let points = spec.points().len();
    eprintln!("{}: {points} runs", spec.name);

    let started = Instant::now();
    let report = run_sweep(&spec, exec);
    let dir = write_report(&args.out, &report, args.json)
        .with_context(|| format!("writing results under {}", args.out.display()))?;

    for o in &report.outcomes {
        match &o.result {
            Ok(r) => {
                let lam = r.calibration.lambda_urllc + r.calibration.lambda_normal;
                let inv = r.invariants.violations();
                eprintln!(
                    "  {} seed {}: lambda {lam:.0}/s per RU, load {:.1} %, {} violations",
                    o.scenario.id,
                    o.scenario.seed,
                    r.stats.measured_load * 100.0,
                    inv
                );
            }
            Err(e) => eprintln!("  {} seed {}: FAILED: {e}", o.scenario.id, o.scenario.seed),
        }
    }
    eprintln!(
        "wrote {} in {:.1} s",
        dir.join("summary.csv").display(),
        started.elapsed().as_secs_f64()
    );
    let failed = report.failures().count();
    if failed > 0 {
        bail!("{failed} of {points} runs failed; see failures.txt");
    }
    Ok(())
}
