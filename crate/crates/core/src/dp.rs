//! Exact scheduler for backbone-sharing libraries.
//!
//! Three value tables, all indexed by whole time slots:
//!
//! * `q[î][i][τ]`: users model `i` can serve in `τ` slots when `î` was the
//!   previously loaded model of its cluster (`î = 0`: nothing of the cluster
//!   is resident),
//! * `g[i][τ]`: users the first `i` models of one cluster serve in `τ` slots,
//! * `f[m][τ]`: users the first `m` clusters serve in `τ` slots.
//!
//! Models inside a cluster are visited in ascending shared-prefix length and
//! each model's users are a prefix of its cost-sorted queue, so a schedule is
//! fully described by which models run, for how many slots, and after whom.

use thiserror::Error;

use crate::instance::{DpVariant, Instance, LoadMode};
use crate::library::Sharing;
use crate::oracle::{validate_schedule, ValidationError};
use crate::par;
use crate::schedule::Schedule;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("library does not have clustered backbone sharing; use the greedy scheduler or independent loading")]
    WrongCase,
    #[error("reconstructed schedule serves {got} users but the table optimum is {expected}")]
    Inconsistent { expected: usize, got: usize },
    #[error("reconstructed schedule violates constraints: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GChoice {
    Zero,
    /// Model `i` is not used.
    Skip,
    /// Model `i` is the first of its cluster to be loaded.
    First,
    /// Model `i` follows model `from` (1-based) and gets `slots` slots.
    Pred { from: u32, slots: u32 },
    /// Value taken from the last-loaded table.
    Last,
}

/// Tables of one cluster.
#[derive(Debug, Clone)]
pub struct ClusterTables {
    /// Instance model indices in visiting order.
    pub models: Vec<usize>,
    slots: usize,
    q: Vec<u32>,
    g: Vec<u32>,
    g_choice: Vec<GChoice>,
    /// Best value with model `i` loaded last (`-1`: impossible).
    h: Vec<i64>,
    h_choice: Vec<GChoice>,
}

impl ClusterTables {
    fn n(&self) -> usize {
        self.models.len()
    }

    /// `prev` and `i` are 1-based positions in [`ClusterTables::models`];
    /// `prev = 0` means no predecessor.
    pub fn q(&self, prev: usize, i: usize, slots: usize) -> u32 {
        let n = self.n();
        self.q[(prev * (n + 1) + i) * (self.slots + 1) + slots]
    }

    pub fn g(&self, i: usize, slots: usize) -> u32 {
        self.g[i * (self.slots + 1) + slots]
    }

    /// Best value of the first `i` models with model `i` loaded last.
    pub fn last_loaded(&self, i: usize, slots: usize) -> Option<u32> {
        u32::try_from(self.h[i * (self.slots + 1) + slots]).ok()
    }

    fn gc(&self, i: usize, slots: usize) -> GChoice {
        self.g_choice[i * (self.slots + 1) + slots]
    }

    fn hc(&self, i: usize, slots: usize) -> GChoice {
        self.h_choice[i * (self.slots + 1) + slots]
    }

    /// Value of the whole cluster.
    pub fn value(&self, slots: usize) -> u32 {
        self.g(self.n(), slots)
    }
}

#[derive(Debug, Clone)]
pub struct DpTables {
    pub clusters: Vec<ClusterTables>,
    slots: usize,
    f: Vec<u32>,
    f_choice: Vec<u32>,
}

impl DpTables {
    pub fn f(&self, m: usize, slots: usize) -> u32 {
        self.f[m * (self.slots + 1) + slots]
    }

    pub fn optimum(&self) -> u32 {
        self.f(self.clusters.len(), self.slots)
    }

    pub fn slots(&self) -> usize {
        self.slots
    }
}

/// Clusters in processing order, each with its models in visiting order.
fn cluster_order(inst: &Instance<'_>) -> Result<Vec<Vec<usize>>, DpError> {
    let lib = &inst.scenario.library;
    match (inst.opts.load_mode, inst.sharing()) {
        (LoadMode::Independent, _) => Ok((0..inst.n_models()).map(|i| vec![i]).collect()),
        (LoadMode::Sharing, Sharing::General) => Err(DpError::WrongCase),
        (LoadMode::Sharing, Sharing::BackboneSharing(clusters)) => Ok(clusters
            .iter()
            .map(|c| {
                let mut members: Vec<(usize, usize)> = c
                    .members
                    .iter()
                    .map(|m| {
                        let idx = lib.model_index(m.model).expect("classified model exists");
                        (m.shared_prefix_len, idx)
                    })
                    .collect();
                members.sort_unstable();
                members.into_iter().map(|(_, idx)| idx).collect()
            })
            .collect()),
    }
}

/// `q` for one cluster: the largest prefix of each queue that fits the slot
/// budget, found by binary search on the monotone latency curve.
pub fn build_q(inst: &Instance<'_>, models: &[usize]) -> Vec<u32> {
    let n = models.len();
    let t = inst.slots();
    let mut q = vec![0u32; (n + 1) * (n + 1) * (t + 1)];
    for prev in 0..=n {
        let prev_model = prev.checked_sub(1).map(|p| models[p]);
        for i in 1..=n {
            if prev == i {
                continue;
            }
            let curve = inst.phi_curve(prev_model, models[i - 1]);
            let base = (prev * (n + 1) + i) * (t + 1);
            for slots in 1..=t {
                q[base + slots] = Instance::fit(&curve, inst.slot_budget_s(slots)) as u32;
            }
        }
    }
    q
}

fn build_cluster(inst: &Instance<'_>, models: Vec<usize>, variant: DpVariant) -> ClusterTables {
    let n = models.len();
    let t = inst.slots();
    let w = t + 1;
    let q = build_q(inst, &models);
    let qi = |prev: usize, i: usize, s: usize| q[(prev * (n + 1) + i) * w + s];
    let mut g = vec![0u32; (n + 1) * w];
    let mut g_choice = vec![GChoice::Zero; (n + 1) * w];
    let mut h = vec![-1i64; (n + 1) * w];
    let mut h_choice = vec![GChoice::Zero; (n + 1) * w];

    for i in 1..=n {
        for s in 0..=t {
            match variant {
                DpVariant::Literal => {
                    // (c) skip i
                    let mut best = g[(i - 1) * w + s];
                    let mut choice = GChoice::Skip;
                    // (a) i follows an earlier model that strictly contributes
                    for split in 1..=s {
                        let rest = s - split;
                        for prev in 1..i {
                            let gp = g[prev * w + rest];
                            if gp == 0 || gp == g[(prev - 1) * w + rest] {
                                continue;
                            }
                            let v = gp + qi(prev, i, split);
                            if v > best {
                                best = v;
                                choice = GChoice::Pred {
                                    from: prev as u32,
                                    slots: split as u32,
                                };
                            }
                        }
                    }
                    // (b) i loaded first
                    let v = qi(0, i, s);
                    if v > best {
                        best = v;
                        choice = GChoice::First;
                    }
                    g[i * w + s] = best;
                    g_choice[i * w + s] = if best == 0 { GChoice::Zero } else { choice };
                }
                DpVariant::LastLoaded => {
                    let mut best = -1i64;
                    let mut choice = GChoice::Zero;
                    for split in 1..=s {
                        let rest = s - split;
                        for prev in 1..i {
                            let hp = h[prev * w + rest];
                            let add = qi(prev, i, split);
                            if hp < 1 || add == 0 {
                                continue;
                            }
                            let v = hp + i64::from(add);
                            if v > best {
                                best = v;
                                choice = GChoice::Pred {
                                    from: prev as u32,
                                    slots: split as u32,
                                };
                            }
                        }
                    }
                    let first = qi(0, i, s);
                    if first > 0 && i64::from(first) > best {
                        best = i64::from(first);
                        choice = GChoice::First;
                    }
                    h[i * w + s] = best;
                    h_choice[i * w + s] = choice;

                    let skip = g[(i - 1) * w + s];
                    if best > i64::from(skip) {
                        g[i * w + s] = best as u32;
                        g_choice[i * w + s] = GChoice::Last;
                    } else {
                        g[i * w + s] = skip;
                        g_choice[i * w + s] = if skip == 0 { GChoice::Zero } else { GChoice::Skip };
                    }
                }
            }
        }
    }
    ClusterTables {
        models,
        slots: t,
        q,
        g,
        g_choice,
        h,
        h_choice,
    }
}

/// `g` tables for every cluster (built independently, possibly in parallel).
pub fn build_g(inst: &Instance<'_>) -> Result<Vec<ClusterTables>, DpError> {
    let order = cluster_order(inst)?;
    let variant = inst.opts.dp_variant;
    Ok(par::map_slice(inst.opts.exec, &order, |models| {
        build_cluster(inst, models.clone(), variant)
    }))
}

/// Cross-cluster knapsack over slot allotments.
pub fn build_f(clusters: Vec<ClusterTables>, slots: usize) -> DpTables {
    let w = slots + 1;
    let m_count = clusters.len();
    let mut f = vec![0u32; (m_count + 1) * w];
    let mut f_choice = vec![0u32; (m_count + 1) * w];
    for (m, c) in clusters.iter().enumerate() {
        let m = m + 1;
        for total in 0..=slots {
            let mut best = f[(m - 1) * w + total] + c.value(0);
            let mut pick = 0usize;
            for given in 1..=total {
                let v = f[(m - 1) * w + total - given] + c.value(given);
                if v > best {
                    best = v;
                    pick = given;
                }
            }
            f[m * w + total] = best;
            f_choice[m * w + total] = pick as u32;
        }
    }
    DpTables {
        clusters,
        slots,
        f,
        f_choice,
    }
}

pub fn build_tables(inst: &Instance<'_>) -> Result<DpTables, DpError> {
    Ok(build_f(build_g(inst)?, inst.slots()))
}

/// Runs `(position, k, slots)` of one cluster, in loading order.
fn cluster_runs(c: &ClusterTables, slots: usize, variant: DpVariant) -> Vec<(usize, u32, usize)> {
    let mut runs = Vec::new();
    let mut i = c.n();
    let mut s = slots;
    // true while walking the last-loaded table rather than `g`
    let mut in_h = false;
    while i > 0 {
        let choice = if in_h { c.hc(i, s) } else { c.gc(i, s) };
        match choice {
            GChoice::Zero => break,
            GChoice::Skip => i -= 1,
            GChoice::Last => in_h = true,
            GChoice::First => {
                runs.push((i, c.q(0, i, s), s));
                break;
            }
            GChoice::Pred { from, slots: split } => {
                let (from, split) = (from as usize, split as usize);
                runs.push((i, c.q(from, i, split), split));
                s -= split;
                i = from;
                // the predecessor is the last model loaded in the remaining prefix
                in_h = variant == DpVariant::LastLoaded;
                debug_assert!(in_h || !matches!(c.gc(i, s), GChoice::Skip | GChoice::Zero));
            }
        }
    }
    runs.reverse();
    runs
}

/// Rebuilds the optimal schedule from the tables.
pub fn reconstruct(tables: &DpTables, inst: &Instance<'_>) -> Result<Schedule, DpError> {
    let w = tables.slots + 1;
    let mut remaining = tables.slots;
    let mut per_cluster = Vec::with_capacity(tables.clusters.len());
    for m in (1..=tables.clusters.len()).rev() {
        let given = tables.f_choice[m * w + remaining] as usize;
        per_cluster.push((m - 1, given));
        remaining -= given;
    }
    per_cluster.reverse();

    let mut runs = Vec::new();
    for (m, given) in per_cluster {
        let c = &tables.clusters[m];
        for (pos, k, _) in cluster_runs(c, given, inst.opts.dp_variant) {
            if k > 0 {
                runs.push((c.models[pos - 1], k as usize));
            }
        }
    }
    let schedule = inst.runs_to_schedule(&runs);
    let expected = tables.optimum() as usize;
    if schedule.served_count != expected {
        return Err(DpError::Inconsistent {
            expected,
            got: schedule.served_count,
        });
    }
    let report = validate_schedule(&schedule, inst.scenario, &inst.gains)?;
    if !report.feasible {
        return Err(DpError::Infeasible(report.summary()));
    }
    Ok(schedule)
}

/// Builds all tables and reconstructs the schedule. Independent loading works
/// on any library; parameter sharing needs clustered backbone sharing.
pub fn solve_bs(inst: &Instance<'_>) -> Result<Schedule, DpError> {
    let tables = build_tables(inst)?;
    reconstruct(&tables, inst)
}
