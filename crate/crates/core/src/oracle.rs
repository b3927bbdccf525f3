//! Ground truth: a constraint checker that prices schedules from scratch and
//! a brute-force search for tiny instances.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{BlockId, ModelId, UserId};
use crate::instance::{Instance, Scenario, DEFAULT_SLOT_S};
use crate::latency::{compute_time, load_delta_bytes, load_time, peak_memory};
use crate::library::{ModelLibrary, ModelSpec, ParameterBlock, SharingKind};
use crate::par;
use crate::radio::{spectral_rate, ChannelEnv, UserSpec, DEFAULT_TX_PSD_W_PER_HZ};
use crate::schedule::Schedule;
use crate::{HardwareProfile, DEADLINE_SLACK_S};

const SHARE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Deadline,
    SingleBatch,
    Memory,
    Homogeneity,
    Bandwidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub batch: usize,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "batch {}: {:?}: {}", self.batch, self.constraint, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Users served; zero unless the schedule is feasible.
    pub served_count: usize,
    pub violations: Vec<Violation>,
    /// Recomputed completion time of each batch.
    pub completion_s: Vec<f64>,
}

impl FeasibilityReport {
    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("batch {batch} uses unknown model {model}")]
    UnknownModel { batch: usize, model: ModelId },
    #[error("batch {batch} lists unknown user {user}")]
    UnknownUser { batch: usize, user: UserId },
    #[error("batch {0} is empty")]
    EmptyBatch(usize),
    #[error("batch {batch} has {shares} shares for {users} users")]
    ShareCount {
        batch: usize,
        shares: usize,
        users: usize,
    },
    #[error("{got} fading gains for {users} users")]
    GainCount { got: usize, users: usize },
}

/// Checks every constraint of the scheduling problem, recomputing all
/// latencies from the scenario rather than trusting the schedule's own.
pub fn validate_schedule(
    schedule: &Schedule,
    scenario: &Scenario,
    gains: &[f64],
) -> Result<FeasibilityReport, ValidationError> {
    if gains.len() != scenario.users.len() {
        return Err(ValidationError::GainCount {
            got: gains.len(),
            users: scenario.users.len(),
        });
    }
    let lib = &scenario.library;
    let user_pos: std::collections::HashMap<UserId, usize> = scenario
        .users
        .iter()
        .enumerate()
        .map(|(k, u)| (u.id, k))
        .collect();
    let deadline = scenario.deadline_s();
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let mut completion = Vec::with_capacity(schedule.batches.len());
    let mut clock = 0.0;
    let mut prev: Option<ModelId> = None;
    let mut served = 0;

    for (n, batch) in schedule.batches.iter().enumerate() {
        let model = lib.model(batch.model).ok_or(ValidationError::UnknownModel {
            batch: n,
            model: batch.model,
        })?;
        if batch.users.is_empty() {
            return Err(ValidationError::EmptyBatch(n));
        }
        if batch.shares.len() != batch.users.len() {
            return Err(ValidationError::ShareCount {
                batch: n,
                shares: batch.shares.len(),
                users: batch.users.len(),
            });
        }
        let mut upload: f64 = 0.0;
        for (&uid, &share) in batch.users.iter().zip(&batch.shares) {
            let k = *user_pos
                .get(&uid)
                .ok_or(ValidationError::UnknownUser { batch: n, user: uid })?;
            let user = &scenario.users[k];
            if user.requested_model != batch.model {
                violations.push(Violation {
                    constraint: Constraint::Homogeneity,
                    batch: n,
                    detail: format!(
                        "{uid} requests {} but the batch runs {}",
                        user.requested_model, batch.model
                    ),
                });
            }
            if !seen.insert(uid) {
                violations.push(Violation {
                    constraint: Constraint::SingleBatch,
                    batch: n,
                    detail: format!("{uid} is scheduled more than once"),
                });
            }
            if !(share.is_finite() && share >= 0.0) {
                violations.push(Violation {
                    constraint: Constraint::Bandwidth,
                    batch: n,
                    detail: format!("{uid} has share {share}"),
                });
            }
            let rate = spectral_rate(user, &scenario.env, gains[k]);
            let t = user.data_bits / (share * scenario.env.total_bandwidth_hz * rate);
            upload = upload.max(if t.is_nan() { f64::INFINITY } else { t });
        }
        let total_share: f64 = batch.shares.iter().sum();
        if total_share > 1.0 + SHARE_SLACK {
            violations.push(Violation {
                constraint: Constraint::Bandwidth,
                batch: n,
                detail: format!("shares sum to {total_share}"),
            });
        }
        let need = peak_memory(model, batch.users.len());
        if need > scenario.hw.gpu_mem_bytes {
            violations.push(Violation {
                constraint: Constraint::Memory,
                batch: n,
                detail: format!(
                    "{} users need {need} bytes, GPU has {}",
                    batch.users.len(),
                    scenario.hw.gpu_mem_bytes
                ),
            });
        }
        let bytes = load_delta_bytes(lib, schedule.mode, prev, batch.model)
            .expect("models resolved above");
        clock += upload + load_time(&scenario.hw, bytes) + compute_time(model, batch.users.len());
        if clock > deadline + DEADLINE_SLACK_S {
            violations.push(Violation {
                constraint: Constraint::Deadline,
                batch: n,
                detail: format!("completes at {clock:.9} s, deadline {deadline:.9} s"),
            });
        }
        completion.push(clock);
        served += batch.users.len();
        prev = Some(batch.model);
    }

    let feasible = violations.is_empty();
    Ok(FeasibilityReport {
        feasible,
        served_count: if feasible { served } else { 0 },
        violations,
        completion_s: completion,
    })
}

/// True when batches of each cluster form one consecutive block.
pub fn is_cluster_contiguous(inst: &Instance<'_>, schedule: &Schedule) -> bool {
    let clusters: Vec<usize> = schedule
        .batches
        .iter()
        .map(|b| {
            inst.cluster_of(
                inst.scenario
                    .library
                    .model_index(b.model)
                    .expect("schedule model exists"),
            )
        })
        .collect();
    contiguous(&clusters)
}

fn contiguous(seq: &[usize]) -> bool {
    let mut closed = HashSet::new();
    for w in seq.windows(2) {
        if w[0] != w[1] {
            if closed.contains(&w[1]) {
                return false;
            }
            closed.insert(w[0]);
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLimits {
    pub max_users: usize,
    pub max_models: usize,
    pub max_slots: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_users: 8,
            max_models: 3,
            max_slots: 30,
        }
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(
        "instance too large for exhaustive search ({users} users, {models} models, {slots} slots; \
         limits {limits:?}); about {estimate:.3e} batch sequences"
    )]
    TooLarge {
        users: usize,
        models: usize,
        slots: usize,
        limits: SearchLimits,
        estimate: f64,
    },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("witness schedule failed validation: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub optimum: usize,
    pub witness: Schedule,
    pub contiguous: bool,
    pub nodes: u64,
}

/// Rough count of ordered batch sequences the unpruned search may visit.
pub fn search_space_estimate(users: usize, models: usize, pruned: bool) -> f64 {
    if pruned {
        // ordered distinct models, each with a prefix length
        let mut total = 0.0;
        let mut perm = 1.0;
        for len in 0..=models {
            if len > 0 {
                perm *= (models - len + 1) as f64;
            }
            total += perm * (users as f64 / models.max(1) as f64 + 1.0).powi(len as i32);
        }
        total
    } else {
        // sum over served subsets of ordered set partitions
        let mut fubini = vec![1.0f64];
        for n in 1..=users {
            let mut v = 0.0;
            let mut binom = 1.0;
            for k in 1..=n {
                binom = binom * (n - k + 1) as f64 / k as f64;
                v += binom * fubini[n - k];
            }
            fubini.push(v);
        }
        let mut total = 0.0;
        let mut binom = 1.0;
        for (k, f) in fubini.iter().enumerate() {
            if k > 0 {
                binom = binom * (users - k + 1) as f64 / k as f64;
            }
            total += binom * f;
        }
        total
    }
}

#[derive(Clone)]
struct Best {
    count: usize,
    contiguous: bool,
    path: Vec<(usize, Vec<usize>)>,
}

impl Best {
    fn empty() -> Self {
        Best {
            count: 0,
            contiguous: true,
            path: Vec::new(),
        }
    }

    fn offer(&mut self, count: usize, contiguous: bool, path: &[(usize, Vec<usize>)]) {
        if count > self.count || (count == self.count && contiguous && !self.contiguous) {
            self.count = count;
            self.contiguous = contiguous;
            self.path = path.to_vec();
        }
    }

    /// Whether a subtree with this optimistic bound can still improve.
    fn worth(&self, bound: usize) -> bool {
        bound > self.count || (bound == self.count && !self.contiguous)
    }
}

struct Search<'i, 'a> {
    inst: &'i Instance<'a>,
    /// Users with a non-zero rate on a runnable model, by model.
    by_model: Vec<Vec<usize>>,
    /// Unit cost per scenario user.
    cost: Vec<f64>,
    /// Lower bound on the time each user adds, ascending.
    marginal: Vec<(f64, usize)>,
    deadline: f64,
    pruned: bool,
    bounded: bool,
    curves: Vec<Vec<Vec<f64>>>,
}

struct Node {
    served: Vec<bool>,
    count: usize,
    prev: Option<usize>,
    elapsed: f64,
    used: Vec<bool>,
    path: Vec<(usize, Vec<usize>)>,
    clusters: Vec<usize>,
    nodes: u64,
}

impl Search<'_, '_> {
    fn bound(&self, node: &Node) -> usize {
        let mut left = self.deadline + DEADLINE_SLACK_S - node.elapsed;
        let mut extra = 0;
        for &(c, k) in &self.marginal {
            if node.served[k] {
                continue;
            }
            if c > left {
                break;
            }
            left -= c;
            extra += 1;
        }
        node.count + extra
    }

    fn moves(&self, node: &Node) -> Vec<(usize, Vec<usize>, f64)> {
        let mut out = Vec::new();
        for (i, users) in self.by_model.iter().enumerate() {
            if self.pruned {
                if node.used[i] {
                    continue;
                }
                let q = &self.inst.queues[i];
                let curve = &self.curves[node.prev.map_or(0, |p| p + 1)][i];
                for (k, &t) in curve.iter().enumerate().skip(1) {
                    if node.elapsed + t > self.deadline + DEADLINE_SLACK_S {
                        break;
                    }
                    out.push((i, q.users[..k].to_vec(), t));
                }
            } else {
                let avail: Vec<usize> = users.iter().copied().filter(|&k| !node.served[k]).collect();
                let cap = self.inst.batch_cap(i);
                let load = self.inst.load_s(node.prev, i);
                let q = &self.inst.queues[i];
                for mask in 1u32..(1u32 << avail.len()) {
                    let size = mask.count_ones() as usize;
                    if size > cap {
                        continue;
                    }
                    let subset: Vec<usize> = (0..avail.len())
                        .filter(|b| mask >> b & 1 == 1)
                        .map(|b| avail[b])
                        .collect();
                    let costs: Vec<f64> = subset.iter().map(|&k| self.cost[k]).collect();
                    let t = self.inst.opts.uplink.batch_upload(&costs)
                        + load
                        + q.mu_s * size as f64
                        + q.beta_s;
                    if node.elapsed + t <= self.deadline + DEADLINE_SLACK_S {
                        out.push((i, subset, t));
                    }
                }
            }
        }
        out
    }

    fn apply(&self, node: &mut Node, mv: &(usize, Vec<usize>, f64)) {
        let (i, users, t) = mv;
        for &k in users {
            node.served[k] = true;
        }
        node.count += users.len();
        node.prev = Some(*i);
        node.elapsed += t;
        node.used[*i] = true;
        node.path.push((*i, users.clone()));
        node.clusters.push(self.inst.cluster_of(*i));
    }

    fn undo(&self, node: &mut Node, saved: (Option<usize>, f64, bool)) {
        let (i, users) = node.path.pop().expect("applied move");
        for &k in &users {
            node.served[k] = false;
        }
        node.count -= users.len();
        node.clusters.pop();
        node.prev = saved.0;
        node.elapsed = saved.1;
        node.used[i] = saved.2;
    }

    fn dfs(&self, node: &mut Node, best: &mut Best) {
        node.nodes += 1;
        best.offer(node.count, contiguous(&node.clusters), &node.path);
        if self.bounded && !best.worth(self.bound(node)) {
            return;
        }
        for mv in self.moves(node) {
            let saved = (node.prev, node.elapsed, node.used[mv.0]);
            self.apply(node, &mv);
            self.dfs(node, best);
            self.undo(node, saved);
        }
    }

    fn root(&self) -> Node {
        let n = self.inst.n_users();
        Node {
            served: vec![false; n],
            count: 0,
            prev: None,
            elapsed: 0.0,
            used: vec![false; self.inst.n_models()],
            path: Vec::new(),
            clusters: Vec::new(),
            nodes: 0,
        }
    }
}

/// Maximum served count over all batch sequences.
///
/// Unpruned mode enumerates every ordered sequence of homogeneous batches with
/// arbitrary user subsets. Pruned mode only considers each model once, serving
/// a cost-sorted prefix of its requesters in full batches. Among optimal
/// sequences a cluster-contiguous witness is preferred.
pub fn exhaustive_search(
    inst: &Instance<'_>,
    limits: SearchLimits,
    pruned: bool,
) -> Result<SearchResult, SearchError> {
    search(inst, limits, pruned, true)
}

/// Unpruned search without the optimistic cut-off: visits every feasible
/// batch sequence. Same answer as `exhaustive_search`, much slower.
pub fn exhaustive_enumeration(
    inst: &Instance<'_>,
    limits: SearchLimits,
) -> Result<SearchResult, SearchError> {
    search(inst, limits, false, false)
}

fn search(
    inst: &Instance<'_>,
    limits: SearchLimits,
    pruned: bool,
    bounded: bool,
) -> Result<SearchResult, SearchError> {
    let (users, models, slots) = (inst.n_users(), inst.n_models(), inst.slots());
    if users > limits.max_users || models > limits.max_models || slots > limits.max_slots || users > 31
    {
        return Err(SearchError::TooLarge {
            users,
            models,
            slots,
            limits,
            estimate: search_space_estimate(users, models, pruned),
        });
    }
    let by_model: Vec<Vec<usize>> = (0..models)
        .map(|i| inst.queues[i].users[..inst.queue_len(i)].to_vec())
        .collect();
    let cost: Vec<f64> = (0..users).map(|k| inst.unit_cost(k)).collect();
    let mut marginal: Vec<(f64, usize)> = by_model
        .iter()
        .enumerate()
        .flat_map(|(i, us)| {
            let mu = inst.queues[i].mu_s;
            us.iter().map(move |&k| (k, mu))
        })
        .map(|(k, mu)| (cost[k] + mu, k))
        .collect();
    marginal.sort_by(|a, b| a.0.total_cmp(&b.0));
    let curves = if pruned {
        (0..=models)
            .map(|p| {
                (0..models)
                    .map(|i| inst.phi_curve(p.checked_sub(1), i))
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    let tree = Search {
        inst,
        by_model,
        cost,
        marginal,
        deadline: inst.scenario.deadline_s(),
        pruned,
        bounded,
        curves,
    };

    // split on the first batch; subtrees are independent
    let root = tree.root();
    let first_moves = tree.moves(&root);
    let results = par::map_slice(inst.opts.exec, &first_moves, |mv| {
        let mut node = tree.root();
        tree.apply(&mut node, mv);
        let mut best = Best::empty();
        tree.dfs(&mut node, &mut best);
        (best, node.nodes)
    });
    let mut best = Best::empty();
    let mut nodes = 1;
    for (b, n) in results {
        nodes += n;
        best.offer(b.count, b.contiguous, &b.path);
    }

    let witness = inst.batches_to_schedule(&split_runs(inst, &best.path));
    let report = validate_schedule(&witness, inst.scenario, &inst.gains)?;
    if !report.feasible {
        return Err(SearchError::Infeasible(report.summary()));
    }
    Ok(SearchResult {
        optimum: best.count,
        contiguous: best.contiguous,
        witness,
        nodes,
    })
}

/// Pruned moves are whole runs; split them into batches of at most the cap.
fn split_runs(inst: &Instance<'_>, path: &[(usize, Vec<usize>)]) -> Vec<(usize, Vec<usize>)> {
    path.iter()
        .flat_map(|(i, users)| {
            users
                .chunks(inst.batch_cap(*i).max(1))
                .map(move |c| (*i, c.to_vec()))
        })
        .collect()
}

/// Shape of randomly generated tiny instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TinySpec {
    pub min_users: usize,
    pub max_users: usize,
    pub min_models: usize,
    pub max_models: usize,
    pub max_clusters: usize,
    pub min_slots: u32,
    pub max_slots: u32,
    /// Make every latency component a whole number of slots.
    pub slot_aligned: bool,
    /// Share blocks at arbitrary layer positions instead of as prefixes.
    pub general: bool,
}

impl Default for TinySpec {
    fn default() -> Self {
        TinySpec {
            min_users: 4,
            max_users: 8,
            min_models: 2,
            max_models: 3,
            max_clusters: 2,
            min_slots: 8,
            max_slots: 30,
            slot_aligned: true,
            general: false,
        }
    }
}

const TINY_BLOCK_UNIT: u64 = 10_000_000;
const TINY_BANDWIDTH_HZ: f64 = 1e7;
const TINY_DISTANCE_M: f64 = 100.0;
const TINY_GPU_BYTES: u64 = 1_000_000_000_000;

/// Random tiny scenario. Aligned instances use 10 ms granularity for upload,
/// load and compute times, so slot rounding loses nothing.
pub fn tiny_instance(seed: u64, spec: &TinySpec) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_users = rng.random_range(spec.min_users.max(1)..=spec.max_users);
    let n_models = rng.random_range(spec.min_models.max(1)..=spec.max_models);
    let n_clusters = rng.random_range(1..=spec.max_clusters.min(n_models));
    let slot_s = DEFAULT_SLOT_S;
    let aligned = spec.slot_aligned;

    let mut blocks: Vec<ParameterBlock> = Vec::new();
    let block = |rng: &mut ChaCha8Rng, blocks: &mut Vec<ParameterBlock>| {
        let size = if aligned {
            TINY_BLOCK_UNIT * rng.random_range(1..=3u64)
        } else {
            rng.random_range(TINY_BLOCK_UNIT / 2..=3 * TINY_BLOCK_UNIT)
        };
        let id = BlockId(blocks.len() as u32);
        blocks.push(ParameterBlock {
            id,
            size_bytes: size,
        });
        id
    };
    let backbones: Vec<Vec<BlockId>> = (0..n_clusters)
        .map(|_| {
            let len = rng.random_range(2..=4);
            (0..len).map(|_| block(&mut rng, &mut blocks)).collect()
        })
        .collect();

    let mut models = Vec::with_capacity(n_models);
    for m in 0..n_models {
        let backbone = &backbones[m % n_clusters];
        let shared = rng.random_range(0..=backbone.len());
        let tasks = rng.random_range(1..=2);
        let mut ids: Vec<BlockId> = backbone[..shared].to_vec();
        for _ in 0..tasks {
            ids.push(block(&mut rng, &mut blocks));
        }
        if spec.general && shared > 0 {
            // move a shared block above a task block
            let from = rng.random_range(0..shared);
            let b = ids.remove(from);
            ids.push(b);
        }
        let weight: u64 = ids.iter().map(|b| blocks[b.0 as usize].size_bytes).sum();
        let b_max = rng.random_range(1..=4u64);
        let (mu_ms, beta_ms) = if aligned {
            (
                10.0 * f64::from(rng.random_range(0..=1u8)),
                10.0 * f64::from(rng.random_range(0..=1u8)),
            )
        } else {
            (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))
        };
        models.push(ModelSpec {
            id: ModelId(m as u32),
            block_ids: ids,
            mu_ms,
            beta_ms,
            weight_bytes: weight,
            activation_bytes_per_sample: (TINY_GPU_BYTES - weight) / b_max,
        });
    }
    let kind = if spec.general {
        SharingKind::General
    } else {
        SharingKind::BackboneSharing
    };
    let library = ModelLibrary::new(kind, blocks, models, None)
        .with_inferred_sharing()
        .expect("generated library is well formed");

    let env = ChannelEnv::with_bandwidth(TINY_BANDWIDTH_HZ);
    let probe = UserSpec {
        id: UserId(0),
        distance_m: TINY_DISTANCE_M,
        data_bits: 1.0,
        tx_psd_w_per_hz: DEFAULT_TX_PSD_W_PER_HZ,
        requested_model: ModelId(0),
    };
    let bits_per_s = TINY_BANDWIDTH_HZ * spectral_rate(&probe, &env, 1.0);
    let users = (0..n_users)
        .map(|k| {
            let p = if aligned {
                slot_s * f64::from(rng.random_range(1..=3u8))
            } else {
                rng.random_range(0.005..0.030)
            };
            UserSpec {
                id: UserId(k as u32),
                data_bits: p * bits_per_s,
                requested_model: ModelId(rng.random_range(0..n_models) as u32),
                ..probe.clone()
            }
        })
        .collect();
    let hw = HardwareProfile {
        disk_bw_bytes_per_s: 2e9,
        disk_fixed_s: if aligned { slot_s } else { 1e-3 },
        pcie_bw_bytes_per_s: 2e9,
        gpu_mem_bytes: TINY_GPU_BYTES,
    };
    Scenario {
        horizon_slots: rng.random_range(spec.min_slots..=spec.max_slots),
        slot_s,
        env,
        hw,
        fading_gains: None,
        users,
        library,
    }
}
