use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use danl::data::load_libsvm;
use danl::harness::{
    check_theory, no_slower, run_prepared, prepare, strictly_slower, sweep_fig1, sweep_fig2, write_records,
    write_sweep_csv, ExperimentConfig, HarnessError, SweepResult,
};
use danl::pruning::write_mask_history;

#[derive(Parser)]
#[command(name = "danl", version, about = "Distributed adaptive Newton learning: experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Warm start, Newton reference and one DANL run; writes per-round CSV.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output CSV (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the mask history (`round,worker,regions`).
        #[arg(long)]
        masks: Option<PathBuf>,
    },
    /// Coverage/region scenarios (psi*, S*) in {(1,4), (3,4), (10,1)}.
    SweepFig1(SweepArgs),
    /// Coverage/staleness grid (psi*, gamma_max) in {1,2} x {2,4} at S* = 4.
    SweepFig2(SweepArgs),
    /// Projection-inequality battery and full-coverage contraction report.
    CheckTheory {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Parse a LibSVM file and print summary statistics.
    ParseCheck {
        file: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory receiving one per-round CSV per scenario.
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

/// Configuration file plus per-key overrides; flags win over the file.
#[derive(Args)]
struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// LibSVM file, or `synth` for the synthetic generator.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    synth_d: Option<String>,
    #[arg(long)]
    synth_m: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    regions: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Projection floor; `auto` uses lambda / mean shard size.
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    psi_min: Option<String>,
    #[arg(long)]
    s_min: Option<String>,
    /// Staleness bound, or `inf`.
    #[arg(long)]
    gamma_max: Option<String>,
    /// Defaults to $DANL_SEED, then 0.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    fedavg_rounds: Option<String>,
    #[arg(long)]
    fedavg_lr: Option<String>,
    #[arg(long)]
    newton_iters: Option<String>,
    /// `all` (1/N over every worker) or `covering` (1/|C| over this round's contributors).
    #[arg(long)]
    aggregation: Option<String>,
    #[arg(long)]
    subsample: Option<String>,
    #[arg(long)]
    timing: Option<String>,
    #[arg(long)]
    reference_cache: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::from_env()?;
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let overrides = [
            ("dataset", &self.dataset),
            ("dim", &self.dim),
            ("synth_d", &self.synth_d),
            ("synth_m", &self.synth_m),
            ("workers", &self.workers),
            ("regions", &self.regions),
            ("rounds", &self.rounds),
            ("lambda", &self.lambda),
            ("mu", &self.mu),
            ("psi_min", &self.psi_min),
            ("s_min", &self.s_min),
            ("gamma_max", &self.gamma_max),
            ("seed", &self.seed),
            ("fedavg_rounds", &self.fedavg_rounds),
            ("fedavg_lr", &self.fedavg_lr),
            ("newton_iters", &self.newton_iters),
            ("aggregation", &self.aggregation),
            ("subsample", &self.subsample),
            ("timing", &self.timing),
            ("reference_cache", &self.reference_cache),
        ];
        cfg.apply(overrides.iter().filter_map(|(k, v)| v.as_ref().map(|v| (*k, v.as_str()))))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_sweep(result: &SweepResult, args: &SweepArgs) -> Result<(), HarnessError> {
    let mut out = output(args.out.as_deref())?;
    write_sweep_csv(result, &mut out)?;
    out.flush()?;
    if let Some(dir) = &args.trajectories {
        std::fs::create_dir_all(dir)?;
        for cell in &result.cells {
            let path = dir.join(format!("{}.csv", cell.scenario.label));
            let mut f = output(Some(&path))?;
            write_records(&cell.records, &mut f)?;
            f.flush()?;
        }
    }
    Ok(())
}

fn verdict(name: &str, ok: bool) {
    eprintln!("{name}: {}", if ok { "holds" } else { "does not hold" });
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run { cfg, out, masks } => {
            let cfg = cfg.resolve()?;
            let inst = prepare(&cfg)?;
            let (records, traj) = run_prepared(&inst, &cfg)?;
            let mut w = output(out.as_deref())?;
            write_records(&records, &mut w)?;
            w.flush()?;
            if let Some(p) = masks {
                let mut f = output(Some(&p))?;
                write_mask_history(&traj.masks, &mut f)?;
                f.flush()?;
            }
        }
        Command::SweepFig1(args) => {
            let result = sweep_fig1(&args.cfg.resolve()?)?;
            write_sweep(&result, &args)?;
            let [p1, p3, p10] = [&result.cells[0], &result.cells[1], &result.cells[2]];
            verdict("psi*=3 reaches 1e-4 no later than psi*=1", no_slower(p3.first[1], p1.first[1]));
            verdict(
                "(psi*=10, S*=1) strictly slowest to 1e-2",
                strictly_slower(p10.first[0], p1.first[0]) && strictly_slower(p10.first[0], p3.first[0]),
            );
        }
        Command::SweepFig2(args) => {
            let result = sweep_fig2(&args.cfg.resolve()?)?;
            write_sweep(&result, &args)?;
            let hit = |i: usize| result.cells[i].first[1];
            verdict("gamma_max=2 no slower than 4 (psi*=1, psi*=2)", no_slower(hit(0), hit(1)) && no_slower(hit(2), hit(3)));
            verdict("psi*=2 no slower than 1 (gamma_max=2, 4)", no_slower(hit(2), hit(0)) && no_slower(hit(3), hit(1)));
        }
        Command::CheckTheory { seed, trials } => {
            let seed = match seed {
                Some(s) => s,
                None => ExperimentConfig::from_env()?.seed,
            };
            let report = check_theory(seed, trials)?;
            let l = &report.lemma1;
            println!("lemma1 seed={} dim={} trials={} violations={} max_excess={:e}", l.seed, l.dim, l.trials, l.violations.len(), l.max_excess);
            let c = &report.contraction;
            println!(
                "contraction in_basin_rounds={} max_ratio={:e} fraction_le_0.5={:.3} fraction_le_0.75={:.3} rounds_to_1e-9={:?}",
                c.ratios.len(),
                c.max_ratio(),
                c.fraction_at_most(0.5),
                c.fraction_at_most(0.75),
                c.below_1e9
            );
            for (k, t, r) in &c.ratios {
                println!("ratio instance={k} t={t} value={r:e}");
            }
            if !l.violations.is_empty() {
                let list: Vec<String> = l.violations.iter().map(|v| format!("seed {} trial {}", seed, v.trial)).collect();
                return Err(HarnessError::Numerical(format!("projection inequality violated: {}", list.join(", "))));
            }
        }
        Command::ParseCheck { file, dim } => {
            let ds = load_libsvm(&file, dim).map_err(|e| match e {
                danl::data::DataError::Io(io) => HarnessError::Io(format!("{}: {io}", file.display())),
                other => HarnessError::Data(other),
            })?;
            println!(
                "{}: samples={} dim={} nnz={} positive_fraction={:.4}",
                ds.source_name,
                ds.len(),
                ds.dim,
                ds.nnz(),
                ds.positive_fraction()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
