//! Scenario generation and Monte-Carlo experiments.
//!
//! Every realisation draws its users and fading from seeds derived from the
//! grid's base seed and the realisation index only, so all cells of a sweep
//! see the same random numbers (common random numbers) and the output does
//! not depend on thread scheduling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp::{solve_bs, DpError};
use crate::greedy::solve_general;
use crate::ids::{ModelId, UserId};
use crate::instance::{Instance, Scenario, ScenarioError, SolveOptions};
use crate::library::{synth_generate, ModelLibrary, SynthError, SynthParams};
use crate::oracle::{exhaustive_search, validate_schedule, SearchError, SearchLimits, ValidationError};
use crate::par::{self, Exec};
use crate::radio::{
    dbm_per_hz_to_w_per_hz, sample_fading, ChannelEnv, UserSpec, DEFAULT_DATA_BITS,
    DEFAULT_NOISE_DBM_PER_HZ, DEFAULT_PATH_LOSS_EXPONENT, DEFAULT_TX_PSD_W_PER_HZ,
};
use crate::schedule::Schedule;
use crate::{HardwareProfile, DEADLINE_SLACK_S};

const SWEEPS: &str = include_str!("../config/sweeps.toml");

const LIBRARY_STREAM: u64 = 1;
const USER_STREAM: u64 = 2;
const FADING_STREAM: u64 = 3;

/// Column order of the results CSV.
pub const CSV_HEADER: [&str; 8] = [
    "axis",
    "axis_value",
    "algorithm",
    "mean_ratio",
    "stderr",
    "mean_solve_s",
    "realizations",
    "seed",
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("{algorithm} produced an infeasible schedule: {detail}")]
    Infeasible { algorithm: String, detail: String },
    #[error("{axis} = {value}, realization {realization}, {algorithm}: {source}")]
    Cell {
        axis: Axis,
        value: f64,
        realization: usize,
        algorithm: String,
        source: Box<HarnessError>,
    },
    #[error("failed to write CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("failed to parse grid: {0}")]
    Config(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// SplitMix64 finaliser over `(base, stream, index)`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Popularity {
    Uniform,
    /// Model `i` (library order) is requested with weight `1 / (i + 1)^exponent`.
    Zipf { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub n_users: usize,
    pub bandwidth_hz: f64,
    pub deadline_ms: f64,
    pub slot_ms: f64,
    pub radius_m: f64,
    pub data_bits: f64,
    pub tx_psd_w_per_hz: f64,
    pub noise_dbm_per_hz: f64,
    pub path_loss_exponent: f64,
    pub hw: HardwareProfile,
    pub library: SynthParams,
    pub popularity: Popularity,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            n_users: 80,
            bandwidth_hz: 200e6,
            deadline_ms: 700.0,
            slot_ms: 10.0,
            radius_m: 250.0,
            data_bits: DEFAULT_DATA_BITS,
            tx_psd_w_per_hz: DEFAULT_TX_PSD_W_PER_HZ,
            noise_dbm_per_hz: DEFAULT_NOISE_DBM_PER_HZ,
            path_loss_exponent: DEFAULT_PATH_LOSS_EXPONENT,
            hw: HardwareProfile::default(),
            library: SynthParams::backbone_sharing(0.85),
            popularity: Popularity::Uniform,
        }
    }
}

impl ScenarioParams {
    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |what: &str| Err(HarnessError::Params(what.to_string()));
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth must be positive");
        }
        if !(self.slot_ms > 0.0) {
            return bad("slot length must be positive");
        }
        if !(self.deadline_ms >= self.slot_ms) {
            return bad("deadline must cover at least one slot");
        }
        if !(self.radius_m > 0.0 && self.data_bits > 0.0 && self.tx_psd_w_per_hz > 0.0) {
            return bad("radius, data size and transmit power must be positive");
        }
        if let Popularity::Zipf { exponent } = self.popularity {
            if !(exponent >= 0.0) {
                return bad("zipf exponent must be non-negative");
            }
        }
        Ok(())
    }

    pub fn horizon_slots(&self) -> u32 {
        (self.deadline_ms / self.slot_ms).round() as u32
    }

    pub fn env(&self) -> ChannelEnv {
        ChannelEnv {
            total_bandwidth_hz: self.bandwidth_hz,
            noise_psd_w_per_hz: dbm_per_hz_to_w_per_hz(self.noise_dbm_per_hz),
            path_loss_exponent: self.path_loss_exponent,
        }
    }
}

/// Users spread uniformly over the coverage disk (`r = R * sqrt(u)`), each
/// requesting one model drawn from the popularity distribution.
pub fn generate_users<R: Rng + ?Sized>(
    params: &ScenarioParams,
    library: &ModelLibrary,
    rng: &mut R,
) -> Vec<UserSpec> {
    let ids: Vec<ModelId> = library.models().iter().map(|m| m.id).collect();
    let zipf = match params.popularity {
        Popularity::Zipf { exponent } if !ids.is_empty() => {
            Some(Zipf::new(ids.len() as f64, exponent).expect("checked exponent"))
        }
        _ => None,
    };
    (0..params.n_users)
        .map(|k| {
            // 1 - u lies in (0, 1], so nobody sits exactly on the server
            let u: f64 = 1.0 - rng.random::<f64>();
            let model = match &zipf {
                Some(z) => ids[z.sample(rng) as usize - 1],
                None => ids[rng.random_range(0..ids.len())],
            };
            UserSpec {
                id: UserId(k as u32),
                distance_m: params.radius_m * u.sqrt(),
                data_bits: params.data_bits,
                tx_psd_w_per_hz: params.tx_psd_w_per_hz,
                requested_model: model,
            }
        })
        .collect()
}

fn assemble(params: &ScenarioParams, library: ModelLibrary, users: Vec<UserSpec>) -> Scenario {
    Scenario {
        horizon_slots: params.horizon_slots(),
        slot_s: params.slot_ms * 1e-3,
        env: params.env(),
        hw: params.hw,
        fading_gains: None,
        users,
        library,
    }
}

/// A scenario without fading; identical for identical `(params, seed)`.
pub fn generate_scenario(params: &ScenarioParams, seed: u64) -> Result<Scenario, HarnessError> {
    params.check()?;
    let library = synth_generate(&params.library, derive_seed(seed, LIBRARY_STREAM, 0))?;
    if library.models().is_empty() {
        return Err(HarnessError::Params("library has no models".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, USER_STREAM, 0));
    let users = generate_users(params, &library, &mut rng);
    Ok(assemble(params, library, users))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Values in MHz.
    #[serde(rename = "bandwidth_mhz", alias = "bandwidth")]
    Bandwidth,
    Users,
    /// Values in milliseconds.
    #[serde(rename = "deadline_ms", alias = "deadline")]
    Deadline,
    #[serde(alias = "theta")]
    SharingRatio,
    Subchannels,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Bandwidth => "bandwidth_mhz",
            Axis::Users => "users",
            Axis::Deadline => "deadline_ms",
            Axis::SharingRatio => "sharing_ratio",
            Axis::Subchannels => "subchannels",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "bandwidth" | "bandwidth_mhz" => Axis::Bandwidth,
            "users" => Axis::Users,
            "deadline" | "deadline_ms" => Axis::Deadline,
            "sharing_ratio" | "theta" => Axis::SharingRatio,
            "subchannels" => Axis::Subchannels,
            _ => return Err(format!("unknown axis `{s}`")),
        })
    }
}

#[derive(Deserialize)]
struct SweepFile {
    profiles: std::collections::BTreeMap<String, usize>,
    axes: std::collections::BTreeMap<String, Vec<f64>>,
}

fn sweeps() -> SweepFile {
    toml::from_str(SWEEPS).expect("bundled sweep config parses")
}

/// Default sweep values of an axis.
pub fn default_axis_values(axis: Axis) -> Vec<f64> {
    sweeps().axes[&axis.to_string()].clone()
}

/// Realisation count of a named profile (`full`, `ci`).
pub fn profile_realizations(name: &str) -> Option<usize> {
    sweeps().profiles.get(name).copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    Dp,
    Greedy,
    Independent,
    Exhaustive,
    /// Sub-channel count; `0` takes the grid's default.
    DpEqualBw(u32),
    GreedyEqualBw(u32),
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Dp => f.write_str("dp"),
            Algorithm::Greedy => f.write_str("greedy"),
            Algorithm::Independent => f.write_str("independent"),
            Algorithm::Exhaustive => f.write_str("exhaustive"),
            Algorithm::DpEqualBw(0) => f.write_str("dp-equal-bw"),
            Algorithm::GreedyEqualBw(0) => f.write_str("greedy-equal-bw"),
            Algorithm::DpEqualBw(r) => write!(f, "dp-equal-bw:{r}"),
            Algorithm::GreedyEqualBw(r) => write!(f, "greedy-equal-bw:{r}"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, r) = match s.split_once(':') {
            Some((n, r)) => (
                n,
                r.parse::<u32>()
                    .ok()
                    .filter(|&r| r > 0)
                    .ok_or_else(|| format!("bad sub-channel count in `{s}`"))?,
            ),
            None => (s, 0),
        };
        Ok(match (name, r) {
            ("dp", 0) => Algorithm::Dp,
            ("greedy", 0) => Algorithm::Greedy,
            ("independent", 0) => Algorithm::Independent,
            ("exhaustive", 0) => Algorithm::Exhaustive,
            ("dp-equal-bw", r) => Algorithm::DpEqualBw(r),
            ("greedy-equal-bw", r) => Algorithm::GreedyEqualBw(r),
            _ => return Err(format!("unknown algorithm `{s}`")),
        })
    }
}

impl TryFrom<String> for Algorithm {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> Self {
        a.to_string()
    }
}

impl Algorithm {
    fn with_subchannels(self, r: u32) -> Algorithm {
        match self {
            Algorithm::DpEqualBw(0) => Algorithm::DpEqualBw(r),
            Algorithm::GreedyEqualBw(0) => Algorithm::GreedyEqualBw(r),
            a => a,
        }
    }
}

/// Solver options that replace the proportional split by `B / r` per user
/// and cap batches at `r` users.
pub fn equal_bandwidth_mode(subchannels: u32) -> Result<SolveOptions, HarnessError> {
    if subchannels == 0 {
        return Err(HarnessError::Params("sub-channel count must be at least 1".into()));
    }
    Ok(SolveOptions::equal_share(subchannels))
}

/// Runs one algorithm; returns the schedule and the solver wall-clock time.
pub fn solve(
    algorithm: Algorithm,
    scenario: &Scenario,
    gains: &[f64],
    exec: Exec,
) -> Result<(Schedule, f64), HarnessError> {
    let opts = match algorithm {
        Algorithm::Dp | Algorithm::Greedy | Algorithm::Exhaustive => SolveOptions::default(),
        Algorithm::Independent => SolveOptions::independent(),
        Algorithm::DpEqualBw(r) | Algorithm::GreedyEqualBw(r) => equal_bandwidth_mode(r)?,
    };
    let opts = SolveOptions { exec, ..opts };
    let start = Instant::now();
    let inst = Instance::new(scenario, gains, opts)?;
    let schedule = match algorithm {
        Algorithm::Dp | Algorithm::Independent | Algorithm::DpEqualBw(_) => solve_bs(&inst)?,
        Algorithm::Greedy | Algorithm::GreedyEqualBw(_) => solve_general(&inst),
        Algorithm::Exhaustive => exhaustive_search(&inst, SearchLimits::default(), false)?.witness,
    };
    let elapsed = start.elapsed().as_secs_f64();
    Ok((schedule, elapsed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBasis {
    /// Schedule on the faded rate of the realisation.
    #[default]
    Faded,
    /// Schedule on the unfaded rate, evaluate on the faded one.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentGrid {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub base: ScenarioParams,
    pub algorithms: Vec<Algorithm>,
    pub realizations: usize,
    pub seed: u64,
    /// Sub-channels for equal-bandwidth algorithms off the sub-channel axis.
    pub subchannels: u32,
    pub rate_basis: RateBasis,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            axis: Axis::Bandwidth,
            values: default_axis_values(Axis::Bandwidth),
            base: ScenarioParams::default(),
            algorithms: vec![Algorithm::Dp, Algorithm::Greedy, Algorithm::Independent],
            realizations: profile_realizations("full").unwrap_or(1000),
            seed: 1,
            subchannels: 5,
            rate_basis: RateBasis::Faded,
            exec: Exec::default(),
        }
    }
}

impl ExperimentGrid {
    pub fn along(axis: Axis) -> Self {
        ExperimentGrid {
            axis,
            values: default_axis_values(axis),
            ..Self::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(s)?)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.realizations == 0 {
            return Err(HarnessError::Params("at least one realization is required".into()));
        }
        if self.values.is_empty() || self.values.iter().any(|v| !(*v > 0.0)) {
            return Err(HarnessError::Params("axis values must be positive".into()));
        }
        if self.algorithms.is_empty() {
            return Err(HarnessError::Params("no algorithms selected".into()));
        }
        self.base.check()
    }

    /// Parameters and sub-channel count of one cell.
    pub fn cell(&self, value: f64) -> (ScenarioParams, u32) {
        let mut p = self.base.clone();
        let mut r = self.subchannels;
        match self.axis {
            Axis::Bandwidth => p.bandwidth_hz = value * 1e6,
            Axis::Users => p.n_users = value.round() as usize,
            Axis::Deadline => p.deadline_ms = value,
            Axis::SharingRatio => p.library.sharing_ratio = value,
            Axis::Subchannels => r = value.round() as u32,
        }
        (p, r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub axis: Axis,
    pub axis_value: f64,
    pub algorithm: String,
    pub mean_ratio: f64,
    pub stderr: f64,
    pub mean_solve_s: f64,
    pub realizations: usize,
    pub seed: u64,
}

/// Users and fading of realisation `r`; independent of the cell.
pub fn realization(
    params: &ScenarioParams,
    library: &ModelLibrary,
    seed: u64,
    r: usize,
) -> (Vec<UserSpec>, Vec<f64>) {
    let mut urng = ChaCha8Rng::seed_from_u64(derive_seed(seed, USER_STREAM, r as u64));
    let users = generate_users(params, library, &mut urng);
    let mut frng = ChaCha8Rng::seed_from_u64(derive_seed(seed, FADING_STREAM, r as u64));
    let gains = sample_fading(&mut frng, users.len()).gains;
    (users, gains)
}

/// Users served when a schedule built without fading runs on faded rates:
/// batches stay as planned, and only those finishing by the deadline count.
fn served_under(schedule: &Schedule, scenario: &Scenario, gains: &[f64]) -> Result<usize, HarnessError> {
    let report = validate_schedule(schedule, scenario, gains)?;
    let deadline = scenario.deadline_s() + DEADLINE_SLACK_S;
    Ok(schedule
        .batches
        .iter()
        .zip(&report.completion_s)
        .take_while(|(_, &t)| t <= deadline)
        .map(|(b, _)| b.users.len())
        .sum())
}

fn run_one(
    algorithm: Algorithm,
    scenario: &Scenario,
    gains: &[f64],
    basis: RateBasis,
    exec: Exec,
) -> Result<(f64, f64), HarnessError> {
    let total = scenario.users.len();
    let (served, secs) = match basis {
        RateBasis::Faded => {
            let (schedule, secs) = solve(algorithm, scenario, gains, exec)?;
            let report = validate_schedule(&schedule, scenario, gains)?;
            if !report.feasible {
                return Err(HarnessError::Infeasible {
                    algorithm: algorithm.to_string(),
                    detail: report.summary(),
                });
            }
            (report.served_count, secs)
        }
        RateBasis::Expected => {
            let ones = vec![1.0; total];
            let (schedule, secs) = solve(algorithm, scenario, &ones, exec)?;
            (served_under(&schedule, scenario, gains)?, secs)
        }
    };
    let ratio = if total == 0 { 1.0 } else { served as f64 / total as f64 };
    Ok((ratio, secs))
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every (axis value, realisation, algorithm) combination and returns
/// one row per (axis value, algorithm), values ascending, algorithms in grid
/// order.
pub fn run_experiment(grid: &ExperimentGrid) -> Result<Vec<ResultRow>, HarnessError> {
    grid.check()?;
    let mut values = grid.values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();

    let mut rows = Vec::new();
    for &value in &values {
        let (params, r) = grid.cell(value);
        params.check()?;
        let algorithms: Vec<Algorithm> = grid
            .algorithms
            .iter()
            .map(|a| a.with_subchannels(r))
            .collect();
        let library = synth_generate(&params.library, derive_seed(grid.seed, LIBRARY_STREAM, 0))?;

        let per_real = par::map_range(grid.exec, grid.realizations, |real| {
            let (users, gains) = realization(&params, &library, grid.seed, real);
            let scenario = assemble(&params, library.clone(), users);
            algorithms
                .iter()
                .map(|&a| {
                    run_one(a, &scenario, &gains, grid.rate_basis, Exec::Sequential).map_err(|e| {
                        HarnessError::Cell {
                            axis: grid.axis,
                            value,
                            realization: real,
                            algorithm: a.to_string(),
                            source: Box::new(e),
                        }
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        });
        let per_real = per_real.into_iter().collect::<Result<Vec<_>, _>>()?;

        for (j, a) in algorithms.iter().enumerate() {
            let ratios: Vec<f64> = per_real.iter().map(|v| v[j].0).collect();
            let times: Vec<f64> = per_real.iter().map(|v| v[j].1).collect();
            let (mean, se) = mean_stderr(&ratios);
            rows.push(ResultRow {
                axis: grid.axis,
                axis_value: value,
                algorithm: a.to_string(),
                mean_ratio: mean,
                stderr: se,
                mean_solve_s: times.iter().sum::<f64>() / times.len() as f64,
                realizations: grid.realizations,
                seed: grid.seed,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub axis: Axis,
    pub axis_value: f64,
    pub algorithm: String,
    pub realization: usize,
    pub schedule: Schedule,
}

/// Schedules of the first realisation of every cell, for inspection.
pub fn witnesses(grid: &ExperimentGrid) -> Result<Vec<Witness>, HarnessError> {
    grid.check()?;
    let mut values = grid.values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut out = Vec::new();
    for value in values {
        let (params, r) = grid.cell(value);
        let library = synth_generate(&params.library, derive_seed(grid.seed, LIBRARY_STREAM, 0))?;
        let (users, gains) = realization(&params, &library, grid.seed, 0);
        let scenario = assemble(&params, library, users);
        for a in &grid.algorithms {
            let a = a.with_subchannels(r);
            let (schedule, _) = solve(a, &scenario, &gains, grid.exec)?;
            out.push(Witness {
                axis: grid.axis,
                axis_value: value,
                algorithm: a.to_string(),
                realization: 0,
                schedule,
            });
        }
    }
    Ok(out)
}

/// Writes rows in the fixed CSV layout ([`CSV_HEADER`]).
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record([
            row.axis.to_string(),
            row.axis_value.to_string(),
            row.algorithm.clone(),
            row.mean_ratio.to_string(),
            row.stderr.to_string(),
            row.mean_solve_s.to_string(),
            row.realizations.to_string(),
            row.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean served ratio of `algorithm` per axis value, in row order.
pub fn series(rows: &[ResultRow], algorithm: &str) -> Vec<(f64, f64)> {
    rows.iter()
        .filter(|r| r.algorithm == algorithm)
        .map(|r| (r.axis_value, r.mean_ratio))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latency::{LoadMode, UplinkPolicy};

    #[test]
    fn seeds_are_spread() {
        let a = derive_seed(1, USER_STREAM, 0);
        assert_ne!(a, derive_seed(1, USER_STREAM, 1));
        assert_ne!(a, derive_seed(1, FADING_STREAM, 0));
        assert_ne!(a, derive_seed(2, USER_STREAM, 0));
        assert_eq!(a, derive_seed(1, USER_STREAM, 0));
    }

    #[test]
    fn algorithm_names() {
        for s in ["dp", "greedy", "independent", "exhaustive", "dp-equal-bw", "greedy-equal-bw:10"] {
            assert_eq!(s.parse::<Algorithm>().unwrap().to_string(), s);
        }
        assert!("dp:3".parse::<Algorithm>().is_err());
        assert!("dp-equal-bw:0".parse::<Algorithm>().is_err());
        assert_eq!(
            Algorithm::DpEqualBw(0).with_subchannels(20),
            Algorithm::DpEqualBw(20)
        );
    }

    #[test]
    fn default_axes() {
        assert_eq!(default_axis_values(Axis::Bandwidth), [10.0, 50.0, 100.0, 200.0, 300.0, 400.0]);
        assert_eq!(default_axis_values(Axis::Users), [60.0, 70.0, 80.0, 90.0, 100.0]);
        assert_eq!(default_axis_values(Axis::Deadline)[0], 500.0);
        assert_eq!(default_axis_values(Axis::Subchannels), [5.0, 10.0, 20.0]);
        assert_eq!(profile_realizations("full"), Some(1000));
        assert_eq!(profile_realizations("ci"), Some(50));
    }

    #[test]
    fn default_cell_values() {
        let p = ScenarioParams::default();
        assert_eq!(p.n_users, 80);
        assert_eq!(p.bandwidth_hz, 200e6);
        assert_eq!(p.horizon_slots(), 70);
        assert_eq!(p.library.sharing_ratio, 0.85);
        assert_eq!(p.radius_m, 250.0);
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[0.5, 0.5, 0.5]), (0.5, 0.0));
        assert_eq!(mean_stderr(&[1.0]), (1.0, 0.0));
        let (m, se) = mean_stderr(&[0.0, 1.0]);
        assert_eq!(m, 0.5);
        assert!((se - 0.5).abs() < 1e-12);
    }

    #[test]
    fn equal_mode_rejects_zero() {
        assert!(equal_bandwidth_mode(0).is_err());
        assert_eq!(
            equal_bandwidth_mode(5).unwrap().uplink,
            UplinkPolicy::EqualShare { subchannels: 5 }
        );
        assert_eq!(equal_bandwidth_mode(5).unwrap().load_mode, LoadMode::Sharing);
    }
}
