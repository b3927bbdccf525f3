use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use partial_loading::dp::{solve_bs, DpError};
use partial_loading::greedy::solve_general;
use partial_loading::harness::{
    default_axis_values, generate_scenario, profile_realizations, run_experiment, witnesses,
    write_csv, Algorithm, Axis, ExperimentGrid, ScenarioParams,
};
use partial_loading::instance::{Instance, Scenario, SolveOptions};
use partial_loading::library::{SharingKind, SynthParams};
use partial_loading::oracle::{exhaustive_search, validate_schedule, SearchError, SearchLimits};
use partial_loading::radio::sample_fading_seeded;
use partial_loading::{LoadMode, Schedule, UplinkPolicy};

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn bad_input(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn refused(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

#[derive(Parser)]
#[command(name = "partial-loading", version, about = "Edge-inference user scheduling with parameter-sharing model loading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file.
    Gen(GenArgs),
    /// Solve one scenario and print the schedule.
    Solve(SolveArgs),
    /// Run a parameter sweep and write CSV.
    Sweep(SweepArgs),
    /// Check a schedule against a scenario.
    Validate(ValidateArgs),
}

#[derive(Args, Clone, Default)]
struct ParamArgs {
    #[arg(long)]
    bandwidth_hz: Option<f64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    deadline_ms: Option<f64>,
    #[arg(long)]
    sharing_ratio: Option<f64>,
}

impl ParamArgs {
    fn apply(&self, p: &mut ScenarioParams) {
        if let Some(b) = self.bandwidth_hz {
            p.bandwidth_hz = b;
        }
        if let Some(k) = self.users {
            p.n_users = k;
        }
        if let Some(d) = self.deadline_ms {
            p.deadline_ms = d;
        }
        if let Some(t) = self.sharing_ratio {
            p.library.sharing_ratio = t;
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sharing,
    Independent,
}

#[derive(Clone, Copy, ValueEnum)]
enum LibraryArg {
    Backbone,
    General,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "backbone")]
    library: LibraryArg,
    /// Store one Rayleigh fading realisation in the scenario.
    #[arg(long)]
    faded: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    scenario: PathBuf,
    #[arg(long, default_value = "dp")]
    algorithm: String,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    equal_bw_subchannels: Option<u32>,
    #[arg(long)]
    bandwidth_hz: Option<f64>,
    #[arg(long)]
    deadline_ms: Option<f64>,
    /// Write the schedule as JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Grid file (TOML); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',')]
    algorithm: Option<Vec<String>>,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    realizations: Option<usize>,
    /// Named realisation count: `full` or `ci`.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    equal_bw_subchannels: Option<u32>,
    #[arg(long, value_enum)]
    library: Option<LibraryArg>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the first realisation's schedules as JSON.
    #[arg(long)]
    witness: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    scenario: PathBuf,
    schedule: PathBuf,
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(bad_input),
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("writing to stdout")
            .map_err(bad_input),
    }
}

fn load_scenario(path: &PathBuf) -> Result<Scenario, Failure> {
    let sc = Scenario::load(path)
        .with_context(|| format!("reading scenario {}", path.display()))
        .map_err(bad_input)?;
    sc.check().map_err(bad_input)?;
    Ok(sc)
}

fn synth_for(kind: LibraryArg, ratio: f64) -> SynthParams {
    match kind {
        LibraryArg::Backbone => SynthParams::backbone_sharing(ratio),
        LibraryArg::General => SynthParams::general(ratio),
    }
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let mut params = ScenarioParams::default();
    params.library = synth_for(args.library, params.library.sharing_ratio);
    args.params.apply(&mut params);
    let mut sc = generate_scenario(&params, args.seed).map_err(bad_input)?;
    if args.faded {
        sc.fading_gains = Some(sample_fading_seeded(args.seed, sc.users.len()).gains);
    }
    write_out(&args.output, &sc.to_toml_string().map_err(bad_input)?)
}

#[derive(Serialize)]
struct SolveReport<'a> {
    algorithm: &'a str,
    mode: LoadMode,
    users: usize,
    served_count: usize,
    served_ratio: f64,
    total_latency_s: f64,
    deadline_s: f64,
    solve_s: f64,
    feasible: bool,
    schedule: &'a Schedule,
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    let mut sc = load_scenario(&args.scenario)?;
    if let Some(b) = args.bandwidth_hz {
        sc.env.total_bandwidth_hz = b;
    }
    if let Some(d) = args.deadline_ms {
        sc.horizon_slots = (d * 1e-3 / sc.slot_s).round() as u32;
    }
    sc.check().map_err(bad_input)?;
    let algorithm: Algorithm = args.algorithm.parse().map_err(|e: String| bad_input(anyhow::anyhow!(e)))?;

    let mut opts = SolveOptions::default();
    match algorithm {
        Algorithm::Independent => opts.load_mode = LoadMode::Independent,
        Algorithm::DpEqualBw(r) | Algorithm::GreedyEqualBw(r) => {
            let r = if r == 0 { args.equal_bw_subchannels.unwrap_or(5) } else { r };
            opts.uplink = UplinkPolicy::EqualShare { subchannels: r };
        }
        _ => {}
    }
    if let Some(mode) = args.mode {
        opts.load_mode = match mode {
            ModeArg::Sharing => LoadMode::Sharing,
            ModeArg::Independent => LoadMode::Independent,
        };
    }
    if let Some(r) = args.equal_bw_subchannels {
        if r == 0 {
            return Err(bad_input(anyhow::anyhow!("--equal-bw-subchannels must be at least 1")));
        }
        opts.uplink = UplinkPolicy::EqualShare { subchannels: r };
    }

    let gains = sc.gains();
    let start = Instant::now();
    let inst = Instance::new(&sc, &gains, opts).map_err(bad_input)?;
    let schedule = match algorithm {
        Algorithm::Dp | Algorithm::Independent | Algorithm::DpEqualBw(_) => match solve_bs(&inst) {
            Ok(s) => s,
            Err(e @ DpError::WrongCase) => return Err(refused(e)),
            Err(e) => return Err(Failure { code: 1, error: e.into() }),
        },
        Algorithm::Greedy | Algorithm::GreedyEqualBw(_) => solve_general(&inst),
        Algorithm::Exhaustive => match exhaustive_search(&inst, SearchLimits::default(), false) {
            Ok(r) => r.witness,
            Err(e @ SearchError::TooLarge { .. }) => return Err(refused(e)),
            Err(e) => return Err(Failure { code: 1, error: e.into() }),
        },
    };
    let solve_s = start.elapsed().as_secs_f64();
    let report = validate_schedule(&schedule, &sc, &gains).map_err(refused)?;

    let name = algorithm.to_string();
    let summary = SolveReport {
        algorithm: &name,
        mode: opts.load_mode,
        users: sc.users.len(),
        served_count: report.served_count,
        served_ratio: if sc.users.is_empty() {
            1.0
        } else {
            report.served_count as f64 / sc.users.len() as f64
        },
        total_latency_s: schedule.total_latency_s(),
        deadline_s: sc.deadline_s(),
        solve_s,
        feasible: report.feasible,
        schedule: &schedule,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(bad_input)? + "\n";
    if let Some(path) = &args.output {
        write_out(&Some(path.clone()), &(schedule.to_json().map_err(bad_input)? + "\n"))?;
    }
    write_out(&None, &text)?;
    if report.feasible {
        Ok(())
    } else {
        Err(refused(anyhow::anyhow!("schedule is infeasible: {}", report.summary())))
    }
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut grid = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading grid {}", path.display()))
                .map_err(bad_input)?;
            ExperimentGrid::from_toml_str(&text).map_err(bad_input)?
        }
        None => ExperimentGrid::default(),
    };
    if let Some(axis) = &args.axis {
        grid.axis = axis.parse::<Axis>().map_err(|e| bad_input(anyhow::anyhow!(e)))?;
        grid.values = default_axis_values(grid.axis);
    }
    if let Some(values) = args.values {
        grid.values = values;
    }
    if let Some(algs) = &args.algorithm {
        grid.algorithms = algs
            .iter()
            .map(|a| a.parse::<Algorithm>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad_input(anyhow::anyhow!(e)))?;
    }
    if let Some(kind) = args.library {
        grid.base.library = synth_for(kind, grid.base.library.sharing_ratio);
    }
    args.params.apply(&mut grid.base);
    if let Some(name) = &args.profile {
        grid.realizations = profile_realizations(name)
            .ok_or_else(|| bad_input(anyhow::anyhow!("unknown profile `{name}`")))?;
    }
    if let Some(n) = args.realizations {
        grid.realizations = n;
    }
    if let Some(seed) = args.seed {
        grid.seed = seed;
    }
    if let Some(r) = args.equal_bw_subchannels {
        grid.subchannels = r;
    }
    if grid.subchannels == 0 {
        return Err(bad_input(anyhow::anyhow!("--equal-bw-subchannels must be at least 1")));
    }
    grid.check().map_err(bad_input)?;
    if grid.base.library.sharing_kind == SharingKind::General
        && grid.algorithms.iter().any(|a| matches!(a, Algorithm::Dp | Algorithm::DpEqualBw(_)))
    {
        return Err(refused(anyhow::anyhow!(
            "the dp algorithms need a backbone-sharing library; use greedy or independent"
        )));
    }

    let rows = run_experiment(&grid).map_err(refused)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).map_err(bad_input)?;
    write_out(&args.output, &String::from_utf8(buf).expect("csv is utf-8"))?;
    if let Some(path) = &args.witness {
        let w = witnesses(&grid).map_err(refused)?;
        let text = serde_json::to_string_pretty(&w).map_err(bad_input)? + "\n";
        write_out(&Some(path.clone()), &text)?;
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let sc = load_scenario(&args.scenario)?;
    let text = fs::read_to_string(&args.schedule)
        .with_context(|| format!("reading schedule {}", args.schedule.display()))
        .map_err(bad_input)?;
    let schedule = Schedule::from_json(&text)
        .context("parsing schedule")
        .map_err(bad_input)?;
    let report = validate_schedule(&schedule, &sc, &sc.gains()).map_err(bad_input)?;
    write_out(&None, &(serde_json::to_string_pretty(&report).map_err(bad_input)? + "\n"))?;
    if report.feasible {
        Ok(())
    } else {
        for v in &report.violations {
            eprintln!("violation: {v}");
        }
        Err(refused(anyhow::anyhow!("schedule is infeasible")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
