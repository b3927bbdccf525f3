//! One-step greedy scheduler for arbitrary libraries: repeatedly run the
//! unused model that serves the most users per slot.

use std::cmp::Ordering;

use crate::instance::Instance;
use crate::par;
use crate::schedule::Schedule;

/// Users served per slot, kept as the exact fraction `users / slots`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateValue {
    pub users: usize,
    pub slots: usize,
}

impl RateValue {
    pub const ZERO: RateValue = RateValue { users: 0, slots: 1 };

    pub fn as_f64(self) -> f64 {
        self.users as f64 / self.slots as f64
    }

    fn cmp_value(&self, other: &Self) -> Ordering {
        (self.users as u128 * other.slots as u128).cmp(&(other.users as u128 * self.slots as u128))
    }
}

/// Best users-per-slot of model `i` after `prev` within `max_slots` slots.
/// Among equal densities the smallest slot count wins.
pub fn rate_value(inst: &Instance<'_>, prev: Option<usize>, i: usize, max_slots: usize) -> RateValue {
    best_rate(&inst.phi_curve(prev, i), inst, max_slots)
}

fn best_rate(curve: &[f64], inst: &Instance<'_>, max_slots: usize) -> RateValue {
    let mut best = RateValue::ZERO;
    for slots in 1..=max_slots {
        let users = Instance::fit(curve, inst.slot_budget_s(slots));
        let v = RateValue { users, slots };
        if users > 0 && v.cmp_value(&best) == Ordering::Greater {
            best = v;
        }
        if users + 1 == curve.len() {
            // every requester fits; more slots only lower the density
            break;
        }
    }
    best
}

pub fn solve_general(inst: &Instance<'_>) -> Schedule {
    let n = inst.n_models();
    let horizon = inst.slots();
    let mut remaining: Vec<usize> = (0..n).filter(|&i| inst.queue_len(i) > 0).collect();
    let mut elapsed = 0;
    let mut prev = None;
    let mut runs = Vec::new();

    while !remaining.is_empty() && elapsed < horizon {
        let left = horizon - elapsed;
        let values = par::map_slice(inst.opts.exec, &remaining, |&i| {
            (i, rate_value(inst, prev, i, left))
        });
        let mut pick: Option<(usize, RateValue)> = None;
        for (i, v) in values {
            if v.users == 0 {
                continue;
            }
            let better = match pick {
                None => true,
                Some((j, b)) => match v.cmp_value(&b) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => (v.slots, i) < (b.slots, j),
                },
            };
            if better {
                pick = Some((i, v));
            }
        }
        let Some((i, v)) = pick else { break };
        runs.push((i, v.users));
        elapsed += v.slots;
        prev = Some(i);
        remaining.retain(|&j| j != i);
    }
    inst.runs_to_schedule(&runs)
}
