//! Scenarios and the solver-facing view of one fading realisation.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ModelId, UserId};
use crate::latency::{compute_time, load_delta_bytes, load_time, max_batch, BatchLatency};
use crate::library::{classify_sharing, LibraryError, ModelLibrary, Sharing};
use crate::par::Exec;
use crate::radio::{unit_upload_cost, ChannelEnv, UserSpec};
use crate::schedule::{Schedule, ScheduledBatch};
use crate::HardwareProfile;

pub use crate::latency::{LoadMode, UplinkPolicy};

/// Slack used when comparing a run's latency with its slot budget.
pub const SLOT_SLACK_S: f64 = 1e-12;

pub const DEFAULT_SLOT_S: f64 = 0.010;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub horizon_slots: u32,
    pub slot_s: f64,
    pub env: ChannelEnv,
    pub hw: HardwareProfile,
    /// Power gains aligned with `users`; absent means no fading (all 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fading_gains: Option<Vec<f64>>,
    pub users: Vec<UserSpec>,
    pub library: ModelLibrary,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("horizon must be at least one slot")]
    EmptyHorizon,
    #[error("slot length must be positive, got {0}")]
    BadSlot(f64),
    #[error("user {user} requests unknown model {model}")]
    UnknownModel { user: UserId, model: ModelId },
    #[error("duplicate user id {0}")]
    DuplicateUser(UserId),
    #[error("{got} fading gains for {users} users")]
    GainCount { got: usize, users: usize },
    #[error("invalid channel or hardware parameter: {0}")]
    BadParameter(&'static str),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error("failed to read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialise scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
}

impl Scenario {
    pub fn deadline_s(&self) -> f64 {
        f64::from(self.horizon_slots) * self.slot_s
    }

    /// The stored fading gains, or all ones.
    pub fn gains(&self) -> Vec<f64> {
        self.fading_gains
            .clone()
            .unwrap_or_else(|| vec![1.0; self.users.len()])
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        if self.horizon_slots == 0 {
            return Err(ScenarioError::EmptyHorizon);
        }
        if !(self.slot_s > 0.0 && self.slot_s.is_finite()) {
            return Err(ScenarioError::BadSlot(self.slot_s));
        }
        if !(self.env.total_bandwidth_hz > 0.0) {
            return Err(ScenarioError::BadParameter("total_bandwidth_hz"));
        }
        if !(self.env.noise_psd_w_per_hz > 0.0) {
            return Err(ScenarioError::BadParameter("noise_psd_w_per_hz"));
        }
        if !(self.hw.disk_bw_bytes_per_s > 0.0 && self.hw.pcie_bw_bytes_per_s > 0.0) {
            return Err(ScenarioError::BadParameter("bandwidths must be positive"));
        }
        if !(self.hw.disk_fixed_s >= 0.0) || self.hw.gpu_mem_bytes == 0 {
            return Err(ScenarioError::BadParameter("hardware profile"));
        }
        let mut seen = HashSet::new();
        for u in &self.users {
            if !seen.insert(u.id) {
                return Err(ScenarioError::DuplicateUser(u.id));
            }
            if self.library.model(u.requested_model).is_none() {
                return Err(ScenarioError::UnknownModel {
                    user: u.id,
                    model: u.requested_model,
                });
            }
            if !(u.distance_m > 0.0 && u.data_bits > 0.0 && u.tx_psd_w_per_hz > 0.0) {
                return Err(ScenarioError::BadParameter("user distance, data size and power"));
            }
        }
        if let Some(g) = &self.fading_gains {
            if g.len() != self.users.len() {
                return Err(ScenarioError::GainCount {
                    got: g.len(),
                    users: self.users.len(),
                });
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(s)?;
        if sc.library.version() != crate::library::LIBRARY_SCHEMA_VERSION {
            return Err(LibraryError::Version(sc.library.version()).into());
        }
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

/// How the DP decides which model was loaded last inside a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpVariant {
    /// A predecessor counts only when it strictly raises the prefix value.
    Literal,
    /// An extra table tracks the best value with a given model loaded last.
    #[default]
    LastLoaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SolveOptions {
    pub load_mode: LoadMode,
    pub uplink: UplinkPolicy,
    pub dp_variant: DpVariant,
    pub exec: Exec,
}

impl SolveOptions {
    pub fn independent() -> Self {
        SolveOptions {
            load_mode: LoadMode::Independent,
            ..Self::default()
        }
    }

    pub fn equal_share(subchannels: u32) -> Self {
        SolveOptions {
            uplink: UplinkPolicy::EqualShare { subchannels },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ModelQueue {
    /// Scenario user indices in ascending unit cost.
    pub users: Vec<usize>,
    pub costs: Vec<f64>,
    /// Batch size cap (memory and uplink); zero when the model cannot run.
    pub cap: usize,
    pub mu_s: f64,
    pub beta_s: f64,
}

/// Everything the solvers need for one realisation: sorted per-model queues,
/// batch caps and the load-time matrix.
#[derive(Debug, Clone)]
pub struct Instance<'a> {
    pub scenario: &'a Scenario,
    pub opts: SolveOptions,
    pub(crate) gains: Vec<f64>,
    pub(crate) queues: Vec<ModelQueue>,
    /// `load[(prev + 1) * I + next]`, `prev = -1` meaning nothing resident.
    load: Vec<f64>,
    pub(crate) sharing: Sharing,
    pub(crate) cluster_of: Vec<usize>,
    pub(crate) user_pos: HashMap<UserId, usize>,
}

impl<'a> Instance<'a> {
    pub fn new(
        scenario: &'a Scenario,
        gains: &[f64],
        opts: SolveOptions,
    ) -> Result<Self, ScenarioError> {
        scenario.check()?;
        if gains.len() != scenario.users.len() {
            return Err(ScenarioError::GainCount {
                got: gains.len(),
                users: scenario.users.len(),
            });
        }
        let lib = &scenario.library;
        let n = lib.models().len();
        let mut queues: Vec<ModelQueue> = lib
            .models()
            .iter()
            .map(|m| {
                let mut cap = max_batch(m, &scenario.hw).unwrap_or(0);
                if let Some(c) = opts.uplink.batch_cap() {
                    cap = cap.min(c);
                }
                ModelQueue {
                    users: Vec::new(),
                    costs: Vec::new(),
                    cap,
                    mu_s: m.mu_ms * 1e-3,
                    beta_s: m.beta_ms * 1e-3,
                }
            })
            .collect();

        let mut pending: Vec<Vec<(f64, UserId, usize)>> = vec![Vec::new(); n];
        for (k, (u, &g)) in scenario.users.iter().zip(gains).enumerate() {
            let i = lib.model_index(u.requested_model).expect("checked above");
            if let Some(p) = unit_upload_cost(u, &scenario.env, g) {
                pending[i].push((p, u.id, k));
            }
        }
        for (q, mut list) in queues.iter_mut().zip(pending) {
            list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            q.costs = list.iter().map(|x| x.0).collect();
            q.users = list.iter().map(|x| x.2).collect();
        }

        let ids: Vec<ModelId> = lib.models().iter().map(|m| m.id).collect();
        let mut load = vec![0.0; (n + 1) * n];
        for prev in 0..=n {
            let p = prev.checked_sub(1).map(|x| ids[x]);
            for (next, &id) in ids.iter().enumerate() {
                let bytes = load_delta_bytes(lib, opts.load_mode, p, id)?;
                load[prev * n + next] = load_time(&scenario.hw, bytes);
            }
        }

        let sharing = classify_sharing(lib)?;
        let cluster_of = match &sharing {
            Sharing::BackboneSharing(clusters) => {
                let mut of = vec![0; n];
                for (c, cl) in clusters.iter().enumerate() {
                    for m in &cl.members {
                        of[lib.model_index(m.model).expect("classified model exists")] = c;
                    }
                }
                of
            }
            Sharing::General => (0..n).collect(),
        };
        let user_pos = scenario
            .users
            .iter()
            .enumerate()
            .map(|(k, u)| (u.id, k))
            .collect();

        Ok(Instance {
            scenario,
            opts,
            gains: gains.to_vec(),
            queues,
            load,
            sharing,
            cluster_of,
            user_pos,
        })
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn n_models(&self) -> usize {
        self.queues.len()
    }

    pub fn n_users(&self) -> usize {
        self.scenario.users.len()
    }

    pub fn slots(&self) -> usize {
        self.scenario.horizon_slots as usize
    }

    pub fn model_id(&self, i: usize) -> ModelId {
        self.scenario.library.models()[i].id
    }

    /// Schedulable requesters of model `i`, cheapest first.
    pub fn queue_len(&self, i: usize) -> usize {
        if self.queues[i].cap == 0 {
            0
        } else {
            self.queues[i].users.len()
        }
    }

    pub fn batch_cap(&self, i: usize) -> usize {
        self.queues[i].cap
    }

    pub fn sorted_costs(&self, i: usize) -> &[f64] {
        &self.queues[i].costs
    }

    pub fn load_s(&self, prev: Option<usize>, next: usize) -> f64 {
        let n = self.n_models();
        let row = prev.map_or(0, |p| p + 1);
        self.load[row * n + next]
    }

    pub fn sharing(&self) -> &Sharing {
        &self.sharing
    }

    /// Cluster index of each model (singletons for general libraries).
    pub fn cluster_of(&self, i: usize) -> usize {
        self.cluster_of[i]
    }

    pub fn slot_budget_s(&self, slots: usize) -> f64 {
        slots as f64 * self.scenario.slot_s
    }

    /// Service latency of the first `k` queued users of `i` after `prev`,
    /// for every `k` in `0..=queue_len(i)`.
    pub fn phi_curve(&self, prev: Option<usize>, i: usize) -> Vec<f64> {
        let q = &self.queues[i];
        let kmax = self.queue_len(i);
        let mut curve = Vec::with_capacity(kmax + 1);
        curve.push(0.0);
        if kmax == 0 {
            return curve;
        }
        let b = q.cap;
        let load = self.load_s(prev, i);
        let mut closed_upload = 0.0;
        let mut open_upload = 0.0;
        for k in 1..=kmax {
            let c = q.costs[k - 1];
            open_upload = match self.opts.uplink {
                UplinkPolicy::Proportional => open_upload + c,
                UplinkPolicy::EqualShare { subchannels } => c * f64::from(subchannels),
            };
            let batches = k.div_ceil(b);
            curve.push(
                closed_upload + open_upload + load + q.mu_s * k as f64 + q.beta_s * batches as f64,
            );
            if k % b == 0 {
                closed_upload += open_upload;
                open_upload = 0.0;
            }
        }
        curve
    }

    /// Largest `k` whose service latency fits in `budget_s`.
    pub fn fit(curve: &[f64], budget_s: f64) -> usize {
        curve.partition_point(|&t| t <= budget_s + SLOT_SLACK_S) - 1
    }

    pub fn phi(&self, prev: Option<usize>, i: usize, k: usize) -> f64 {
        self.phi_curve(prev, i)[k]
    }

    /// Builds the schedule for consecutive runs `(model, k)`, each serving
    /// the `k` cheapest requesters in full batches except the last.
    pub fn runs_to_schedule(&self, runs: &[(usize, usize)]) -> Schedule {
        let mut batches = Vec::new();
        for &(i, k) in runs {
            let q = &self.queues[i];
            for chunk in q.users[..k].chunks(q.cap.max(1)) {
                batches.push((i, chunk.to_vec()));
            }
        }
        self.batches_to_schedule(&batches)
    }

    /// Prices an arbitrary batch sequence of `(model, scenario user indices)`.
    pub fn batches_to_schedule(&self, batches: &[(usize, Vec<usize>)]) -> Schedule {
        let mut out = Vec::with_capacity(batches.len());
        let mut prev = None;
        for (i, users) in batches {
            let costs: Vec<f64> = users.iter().map(|&k| self.unit_cost(k)).collect();
            let model = &self.scenario.library.models()[*i];
            out.push(ScheduledBatch {
                model: model.id,
                users: users.iter().map(|&k| self.scenario.users[k].id).collect(),
                shares: self.opts.uplink.shares(&costs),
                latency: BatchLatency::new(
                    self.opts.uplink.batch_upload(&costs),
                    self.load_s(prev, *i),
                    compute_time(model, users.len()),
                ),
            });
            prev = Some(*i);
        }
        Schedule::from_batches(self.opts.load_mode, out)
    }

    /// Unit upload cost of scenario user `k` (infinite when its rate is zero).
    pub fn unit_cost(&self, k: usize) -> f64 {
        unit_upload_cost(&self.scenario.users[k], &self.scenario.env, self.gains[k])
            .unwrap_or(f64::INFINITY)
    }

    pub fn user_index(&self, id: UserId) -> Option<usize> {
        self.user_pos.get(&id).copied()
    }

    pub fn model_of_user(&self, k: usize) -> usize {
        self.scenario
            .library
            .model_index(self.scenario.users[k].requested_model)
            .expect("checked scenario")
    }
}
