use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dgsplit::analysis::{run_convergence_studies, version_string, Axis, StudyPlan};
use dgsplit::noise::{sample_increments, QWienerPath, SeedPolicy};
use dgsplit::presets::{ExperimentPreset, PresetConfig, PRESET_NAMES};
use dgsplit::schemes::{run_trajectory, Method, SchemeConfig};
use dgsplit::verify::run_lemma_suite;
use dgsplit::Error;

#[derive(Parser)]
#[command(name = "dgsplit", version, about = "Split-step dG solvers for stochastic parabolic equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trajectory and dump the final state.
    Run(RunArgs),
    /// Run a Monte Carlo convergence study and write CSV + JSON.
    Study(StudyArgs),
    /// Check the analytic lemmas and the contraction property.
    Verify,
    /// List the built-in presets.
    Presets {
        /// Print every preset as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, default_value = "experiment1")]
    preset: String,
    /// JSON file overriding preset fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Dr,
    Lie,
    Euler,
    /// All three methods (study only).
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Dr => vec![Method::DouglasRachford],
            MethodArg::Lie => vec![Method::Lie],
            MethodArg::Euler => vec![Method::SemiImplicitEuler],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Cells per axis (overrides the preset's run mesh).
    #[arg(long)]
    cells: Option<usize>,
    /// Number of time steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Also write every s-th state to trajectory.bin.
    #[arg(long, value_name = "S")]
    snapshots: Option<usize>,
    /// Also write the noise path to path.bin.
    #[arg(long)]
    dump_path: bool,
    /// Also write A_h, A_1, A_2 in MatrixMarket format.
    #[arg(long)]
    export_operators: bool,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value = "time")]
    axis: AxisArg,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Monte Carlo samples J.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Space,
    Time,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(Error::InvalidArgument(_) | Error::Json(_) | Error::InvalidWeight { .. }) => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Preset with config overrides applied, plus the config itself.
fn load_preset(common: &CommonArgs) -> CliResult<(ExperimentPreset<f64>, PresetConfig)> {
    let mut preset = ExperimentPreset::by_name(&common.preset)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            PresetConfig::from_json(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        }
        None => PresetConfig::default(),
    };
    cfg.apply(&mut preset)
        .map_err(|e| CliError::Usage(format!("config: {e}")))?;
    Ok((preset, cfg))
}

fn with_threads<R: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> CliResult<R> + Send,
) -> CliResult<R> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
    let p = dir.join(name);
    fs::write(&p, bytes)?;
    Ok(p)
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let (mut preset, cfg) = load_preset(&args.common)?;
    let method = match args.method.or(cfg.method.map(|m| match m {
        Method::DouglasRachford => MethodArg::Dr,
        Method::Lie => MethodArg::Lie,
        Method::SemiImplicitEuler => MethodArg::Euler,
    })) {
        Some(MethodArg::All) => {
            return Err(CliError::Usage("run takes a single method (dr, lie, euler)".into()))
        }
        Some(m) => m.methods()[0],
        None => Method::DouglasRachford,
    };
    if let Some(c) = args.cells {
        preset.run_cells = c;
    }
    if let Some(n) = args.steps {
        preset.run_steps = n;
    }
    preset
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let out = args.common.out.clone();
    fs::create_dir_all(&out)?;

    with_threads(args.common.threads, || {
        let start = Instant::now();
        let cells = preset.run_cells;
        let steps = preset.run_steps;
        let problem = preset.build_problem(cells)?;
        let path = match preset.noise_spec(cells).transpose()? {
            Some(spec) => sample_increments(&spec, steps, preset.t_final, SeedPolicy::new(seed), 0)?,
            None => QWienerPath::zero(steps, 1, preset.t_final),
        };
        let mut scfg = SchemeConfig::new(method, preset.t_final, steps)?;
        if let Some(s) = args.snapshots {
            scfg.store_trajectory = true;
            scfg.snapshot_every = s.max(1);
        }
        let traj = run_trajectory(&problem, &scfg, &path)?;
        let x = &traj.final_state;

        let mut bin = Vec::new();
        x.write_binary(&mut bin)?;
        write_file(&out, "final_state.bin", &bin)?;
        let mut csv = Vec::new();
        x.write_csv(&mut csv)?;
        write_file(&out, "final_state.csv", &csv)?;
        if scfg.store_trajectory {
            let mut t = Vec::new();
            traj.write_snapshots(&mut t)?;
            write_file(&out, "trajectory.bin", &t)?;
        }
        if args.dump_path {
            let mut p = Vec::new();
            path.write_binary(&mut p)?;
            write_file(&out, "path.bin", &p)?;
        }
        if args.export_operators {
            for (name, op) in [
                ("A_h.mtx", &problem.a_full),
                ("A_1.mtx", &problem.a_split[0]),
                ("A_2.mtx", &problem.a_split[1]),
            ] {
                let mut m = Vec::new();
                op.write_matrix_market(&mut m)?;
                write_file(&out, name, &m)?;
            }
        }
        let norm = x.l2_norm();
        let meta = serde_json::json!({
            "preset": preset.name,
            "method": method,
            "seed": seed,
            "dim": preset.dim,
            "cells": cells,
            "steps": steps,
            "tau": scfg.tau,
            "t_final": preset.t_final,
            "noise_modes": preset.noise.as_ref().map(|_| preset.n_modes(cells)),
            "dofs": problem.dofs(),
            "final_l2_norm": norm,
            "snapshots": traj.snapshots.len(),
            "wall_seconds": start.elapsed().as_secs_f64(),
            "version": version_string(),
        });
        write_file(
            &out,
            "run.json",
            serde_json::to_string_pretty(&meta).map_err(Error::from)?.as_bytes(),
        )?;
        println!(
            "{} {} M={cells} N={steps} seed={seed}: final L2 norm {norm}",
            preset.name, method
        );
        println!("wrote {}", out.join("final_state.bin").display());
        Ok(())
    })
}

fn cmd_study(args: StudyArgs) -> CliResult<()> {
    let (mut preset, cfg) = load_preset(&args.common)?;
    if let Some(j) = args.samples {
        preset.samples = j;
        preset
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let methods = match args.method {
        Some(m) => m.methods(),
        None => vec![cfg.method.unwrap_or(Method::DouglasRachford)],
    };
    let axis = match args.axis {
        AxisArg::Space => Axis::Space,
        AxisArg::Time => Axis::Time,
    };
    let plan = StudyPlan::from_preset(&preset, axis).map_err(|e| CliError::Usage(e.to_string()))?;
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let out = args.common.out.clone();
    fs::create_dir_all(&out)?;
    let reports = with_threads(args.common.threads, || {
        Ok(run_convergence_studies(&preset, &plan, &methods, SeedPolicy::new(seed))?)
    })?;
    for r in &reports {
        let stem = format!("study_{}_{}", r.axis, r.method);
        let csv = write_file(&out, &format!("{stem}.csv"), r.to_csv().as_bytes())?;
        write_file(&out, &format!("{stem}.json"), r.metadata_json()?.as_bytes())?;
        println!("{} {} study, method {}:", r.preset, r.axis, r.method);
        print!("{}", r.to_csv());
        match r.slope {
            Some(s) => println!("least-squares slope {s}"),
            None => println!("least-squares slope n/a"),
        }
        println!("wrote {}", csv.display());
    }
    Ok(())
}

fn cmd_verify() -> CliResult<bool> {
    let rows = run_lemma_suite()?;
    for r in &rows {
        println!("{r}");
    }
    Ok(rows.iter().all(|r| r.passed))
}

fn cmd_presets(json: bool) -> CliResult<()> {
    for name in PRESET_NAMES {
        let p = ExperimentPreset::<f64>::by_name(name)?;
        if json {
            println!("{}", serde_json::to_string_pretty(&p).map_err(Error::from)?);
            continue;
        }
        let axes: Vec<&str> = [
            p.space_schedule.as_ref().map(|_| "space"),
            p.time_schedule.as_ref().map(|_| "time"),
        ]
        .into_iter()
        .flatten()
        .collect();
        println!(
            "{:<12} dim={} t_f={} noise={} nonlinear={} studies={}",
            p.name,
            p.dim,
            p.t_final,
            if p.noise.is_some() { "multiplicative" } else { "none" },
            p.nonlinearity.map_or("no".to_string(), |n| format!("x^{}", n.exponent)),
            axes.join(",")
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Study(a) => cmd_study(a),
        Command::Verify => cmd_verify().and_then(|ok| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Core(Error::NumericInput("verification failed".into())))
            }
        }),
        Command::Presets { json } => cmd_presets(json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
