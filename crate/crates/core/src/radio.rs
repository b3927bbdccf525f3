//! FDMA uplink model.
//!
//! Rates use `log2(1 + g * P * d^-alpha / N0)` per hertz, where `g` is the
//! fading power gain of the current realisation (`g = 1` gives the
//! deterministic path-loss rate). A user's unit upload cost is the time it
//! would need with the whole band to itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::ids::{ModelId, UserId};

/// Image of 128 x 128 x 3 channels at 8 bits per channel.
pub const DEFAULT_DATA_BITS: f64 = 128.0 * 128.0 * 3.0 * 8.0;
pub const DEFAULT_TX_PSD_W_PER_HZ: f64 = 5e-9;
pub const DEFAULT_NOISE_DBM_PER_HZ: f64 = -174.0;
pub const DEFAULT_PATH_LOSS_EXPONENT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub id: UserId,
    pub distance_m: f64,
    pub data_bits: f64,
    pub tx_psd_w_per_hz: f64,
    pub requested_model: ModelId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEnv {
    pub total_bandwidth_hz: f64,
    pub noise_psd_w_per_hz: f64,
    pub path_loss_exponent: f64,
}

impl ChannelEnv {
    pub fn with_bandwidth(total_bandwidth_hz: f64) -> Self {
        ChannelEnv {
            total_bandwidth_hz,
            noise_psd_w_per_hz: dbm_per_hz_to_w_per_hz(DEFAULT_NOISE_DBM_PER_HZ),
            path_loss_exponent: DEFAULT_PATH_LOSS_EXPONENT,
        }
    }
}

pub fn dbm_per_hz_to_w_per_hz(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Spectral efficiency in bit/s/Hz.
pub fn spectral_rate(user: &UserSpec, env: &ChannelEnv, gain: f64) -> f64 {
    let snr = gain * user.tx_psd_w_per_hz * user.distance_m.powf(-env.path_loss_exponent)
        / env.noise_psd_w_per_hz;
    (1.0 + snr).log2()
}

/// Upload time with the full band, `D / (B * R)`. `None` when the rate is
/// zero, which makes the user unschedulable for this realisation.
pub fn unit_upload_cost(user: &UserSpec, env: &ChannelEnv, gain: f64) -> Option<f64> {
    let rate = spectral_rate(user, env, gain);
    if rate > 0.0 && rate.is_finite() {
        Some(user.data_bits / (env.total_bandwidth_hz * rate))
    } else {
        None
    }
}

/// Upload time of one user given its bandwidth share.
pub fn upload_time(user: &UserSpec, env: &ChannelEnv, gain: f64, share: f64) -> f64 {
    let rate = spectral_rate(user, env, gain);
    user.data_bits / (share * env.total_bandwidth_hz * rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthAllocation {
    pub shares: Vec<f64>,
    pub min_upload_s: f64,
}

/// Minimum-makespan split of the band: shares proportional to unit costs, so
/// every user finishes uploading at `sum(costs)`.
pub fn proportional_allocation(costs: &[f64]) -> BandwidthAllocation {
    let total: f64 = costs.iter().sum();
    if costs.is_empty() || total <= 0.0 {
        return BandwidthAllocation {
            shares: vec![0.0; costs.len()],
            min_upload_s: 0.0,
        };
    }
    BandwidthAllocation {
        shares: costs.iter().map(|c| c / total).collect(),
        min_upload_s: total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("user {0} has zero rate and cannot be allocated bandwidth")]
pub struct ZeroRate(pub UserId);

/// Proportional allocation for a batch of `(user, fading gain)` pairs.
pub fn optimal_bandwidth(
    scheduled: &[(&UserSpec, f64)],
    env: &ChannelEnv,
) -> Result<BandwidthAllocation, ZeroRate> {
    let costs = scheduled
        .iter()
        .map(|(u, g)| unit_upload_cost(u, env, *g).ok_or(ZeroRate(u.id)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(proportional_allocation(&costs))
}

/// `B / r` for every user; the batch finishes when the slowest user does.
pub fn equal_allocation(costs: &[f64], subchannels: u32) -> BandwidthAllocation {
    let r = f64::from(subchannels);
    BandwidthAllocation {
        shares: vec![1.0 / r; costs.len()],
        min_upload_s: costs.iter().fold(0.0f64, |m, &c| m.max(c * r)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingRealization {
    pub gains: Vec<f64>,
}

/// Unit-mean exponential power gains (Rayleigh amplitude).
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R, n_users: usize) -> FadingRealization {
    FadingRealization {
        gains: (0..n_users).map(|_| Exp1.sample(rng)).collect(),
    }
}

pub fn sample_fading_seeded(seed: u64, n_users: usize) -> FadingRealization {
    sample_fading(&mut ChaCha8Rng::seed_from_u64(seed), n_users)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn user(distance_m: f64, data_bits: f64) -> UserSpec {
        UserSpec {
            id: UserId(0),
            distance_m,
            data_bits,
            tx_psd_w_per_hz: DEFAULT_TX_PSD_W_PER_HZ,
            requested_model: ModelId(0),
        }
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_per_hz_to_w_per_hz(-174.0), 3.981e-21, max_relative = 1e-3);
        assert_relative_eq!(dbm_per_hz_to_w_per_hz(30.0), 1.0);
    }

    #[test]
    fn rate_at_hundred_metres() {
        // 5e-9 * 100^-4 / 3.981e-21 = 12559; log2(12560) = 13.617
        let env = ChannelEnv::with_bandwidth(2e8);
        let r = spectral_rate(&user(100.0, DEFAULT_DATA_BITS), &env, 1.0);
        assert!((r - 13.62).abs() < 1e-2, "rate {r}");
        assert_eq!(spectral_rate(&user(100.0, 1.0), &env, 0.0), 0.0);
    }

    #[test]
    fn unit_cost() {
        assert_eq!(DEFAULT_DATA_BITS, 393_216.0);
        let env = ChannelEnv::with_bandwidth(2e8);
        let u = user(100.0, DEFAULT_DATA_BITS);
        let p = unit_upload_cost(&u, &env, 1.0).unwrap();
        // 393216 / (2e8 * 13.617)
        assert_relative_eq!(p, 1.444e-4, max_relative = 1e-3);
        let wide = ChannelEnv::with_bandwidth(4e8);
        assert_relative_eq!(unit_upload_cost(&u, &wide, 1.0).unwrap(), p / 2.0);
        assert_eq!(unit_upload_cost(&u, &env, 0.0), None);
    }

    #[test]
    fn allocation_examples() {
        let one = proportional_allocation(&[0.002]);
        assert_eq!(one.shares, vec![1.0]);
        assert_eq!(one.min_upload_s, 0.002);

        let two = proportional_allocation(&[0.002, 0.003]);
        assert_relative_eq!(two.shares[0], 0.4);
        assert_relative_eq!(two.shares[1], 0.6);
        assert_relative_eq!(two.min_upload_s, 0.005);

        let empty = proportional_allocation(&[]);
        assert!(empty.shares.is_empty());
        assert_eq!(empty.min_upload_s, 0.0);
    }

    #[test]
    fn two_user_grid_search_agrees() {
        // minimise max(p1/y, p2/(1-y)) over a 1e-4 grid
        let (p1, p2) = (0.002, 0.003);
        let (mut best, mut best_y) = (f64::INFINITY, 0.0);
        for step in 1..10_000 {
            let y = step as f64 * 1e-4;
            let t = (p1 / y).max(p2 / (1.0 - y));
            if t < best {
                best = t;
                best_y = y;
            }
        }
        let alloc = proportional_allocation(&[p1, p2]);
        assert_relative_eq!(best, alloc.min_upload_s, max_relative = 1e-9);
        assert_relative_eq!(best_y, alloc.shares[0], epsilon = 1e-9);
    }

    #[test]
    fn zero_rate_user_is_rejected() {
        let env = ChannelEnv::with_bandwidth(1e8);
        let u = user(50.0, 1000.0);
        assert_eq!(optimal_bandwidth(&[(&u, 0.0)], &env), Err(ZeroRate(UserId(0))));
        let ok = optimal_bandwidth(&[(&u, 1.0)], &env).unwrap();
        assert_eq!(ok.shares, vec![1.0]);
    }

    #[test]
    fn equal_split_uses_slowest() {
        let a = equal_allocation(&[0.001, 0.004], 5);
        assert_eq!(a.shares, vec![0.2, 0.2]);
        assert_relative_eq!(a.min_upload_s, 0.02);
        let single = equal_allocation(&[0.001], 1);
        assert_eq!(single, proportional_allocation(&[0.001]));
    }

    #[test]
    fn fading_determinism_and_mean() {
        assert_eq!(sample_fading_seeded(9, 16), sample_fading_seeded(9, 16));
        assert!(sample_fading_seeded(9, 0).gains.is_empty());
        let g = sample_fading_seeded(1, 1_000_000).gains;
        assert!(g.iter().all(|&x| x >= 0.0));
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
    }

    #[test]
    fn rate_monotonicity() {
        let env = ChannelEnv::with_bandwidth(1e8);
        let base = user(120.0, 1.0);
        let r = spectral_rate(&base, &env, 1.0);
        assert!(spectral_rate(&base, &env, 2.0) > r);
        let far = user(130.0, 1.0);
        assert!(spectral_rate(&far, &env, 1.0) < r);
        let loud = UserSpec {
            tx_psd_w_per_hz: 1e-8,
            ..base.clone()
        };
        assert!(spectral_rate(&loud, &env, 1.0) > r);
        let noisy = ChannelEnv {
            noise_psd_w_per_hz: env.noise_psd_w_per_hz * 2.0,
            ..env
        };
        assert!(spectral_rate(&base, &noisy, 1.0) < r);
    }
}
