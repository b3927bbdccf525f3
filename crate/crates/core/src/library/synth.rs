//! Synthetic parameter-sharing libraries built from layer-size profiles.
//!
//! One block is one layer. Each cluster corresponds to one pre-trained model
//! (a profile); every model of the cluster is a fine-tuned copy that keeps a
//! fraction of the pre-trained layers and replaces the rest with its own.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ClusterMember, ClusterSpec, ModelLibrary, ModelSpec, ParameterBlock, SharingKind};
use crate::ids::{BlockId, ClusterId, ModelId};

const BUILTIN_PROFILES: &str = include_str!("../../config/layer_profiles.toml");

/// Maximum allowed distance between the requested and realised sharing ratio.
pub const RATIO_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub name: String,
    pub layer_bytes: Vec<u64>,
    pub mu_ms: f64,
    pub beta_ms: f64,
    pub activation_bytes_per_sample: u64,
}

#[derive(Deserialize)]
struct ProfileFile {
    profile: Vec<LayerProfile>,
}

/// Parses a profile document (`[[profile]]` tables).
pub fn parse_profiles(text: &str) -> Result<Vec<LayerProfile>, toml::de::Error> {
    Ok(toml::from_str::<ProfileFile>(text)?.profile)
}

/// The shipped ResNet-18/34/50 profiles.
pub fn builtin_profiles() -> Vec<LayerProfile> {
    parse_profiles(BUILTIN_PROFILES).expect("bundled layer profiles parse")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_clusters: usize,
    /// Total number of fine-tuned models, spread evenly over the clusters.
    pub n_models: usize,
    /// Cluster `c` uses profile `c % profiles.len()`.
    pub profiles: Vec<LayerProfile>,
    /// Target mean fraction of layers each model keeps from its pre-trained model.
    pub sharing_ratio: f64,
    pub sharing_kind: SharingKind,
    /// Half-width of the uniform jitter added to each model's shared layer count.
    pub jitter_layers: f64,
}

fn default_jitter() -> f64 {
    2.0
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams::backbone_sharing(0.85)
    }
}

impl SynthParams {
    /// Three clusters, fifty models, built-in profiles.
    pub fn backbone_sharing(sharing_ratio: f64) -> Self {
        SynthParams {
            n_clusters: 3,
            n_models: 50,
            profiles: builtin_profiles(),
            sharing_ratio,
            sharing_kind: SharingKind::BackboneSharing,
            jitter_layers: default_jitter(),
        }
    }

    /// Twenty-five models sharing pre-trained layers at arbitrary positions.
    pub fn general(sharing_ratio: f64) -> Self {
        SynthParams {
            n_clusters: 3,
            n_models: 25,
            profiles: builtin_profiles(),
            sharing_ratio,
            sharing_kind: SharingKind::General,
            jitter_layers: default_jitter(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("sharing ratio {0} is outside (0, 1)")]
    RatioOutOfRange(f64),
    #[error("cluster and model counts must be positive and n_models >= n_clusters")]
    BadCounts,
    #[error("no layer profiles given")]
    NoProfiles,
    #[error("profile {0} needs at least two layers")]
    ProfileTooShort(String),
    #[error("sharing ratio {target} is not achievable: realised {realised:.4}")]
    InfeasibleRatio { target: f64, realised: f64 },
}

/// Realised sharing ratio of a generated library: the mean over models of
/// (layers taken from the pre-trained model) / (layer count).
pub fn realised_ratio(shared_layers: &[(usize, usize)]) -> f64 {
    if shared_layers.is_empty() {
        return 0.0;
    }
    shared_layers
        .iter()
        .map(|&(l, total)| l as f64 / total as f64)
        .sum::<f64>()
        / shared_layers.len() as f64
}

/// Generates a library; identical parameters and seed give identical output.
pub fn synth_generate(params: &SynthParams, seed: u64) -> Result<ModelLibrary, SynthError> {
    let theta = params.sharing_ratio;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(SynthError::RatioOutOfRange(theta));
    }
    if params.n_clusters == 0 || params.n_models < params.n_clusters {
        return Err(SynthError::BadCounts);
    }
    if params.profiles.is_empty() {
        return Err(SynthError::NoProfiles);
    }
    if let Some(p) = params.profiles.iter().find(|p| p.layer_bytes.len() < 2) {
        return Err(SynthError::ProfileTooShort(p.name.clone()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::new();
    let mut models = Vec::new();
    let mut clusters = Vec::new();
    let mut shared_layers = Vec::new();
    let mut next_block = 0u32;
    let mut new_block = |size: u64, blocks: &mut Vec<ParameterBlock>| {
        let id = BlockId(next_block);
        next_block += 1;
        blocks.push(ParameterBlock {
            id,
            size_bytes: size.max(1),
        });
        id
    };

    let base = params.n_models / params.n_clusters;
    let extra = params.n_models % params.n_clusters;
    for c in 0..params.n_clusters {
        let profile = &params.profiles[c % params.profiles.len()];
        let layers = profile.layer_bytes.len();
        let pretrained: Vec<BlockId> = profile
            .layer_bytes
            .iter()
            .map(|&s| new_block(s, &mut blocks))
            .collect();
        let count = base + usize::from(c < extra);
        let mut members = Vec::with_capacity(count);
        for _ in 0..count {
            let jitter = if params.jitter_layers > 0.0 {
                rng.random_range(-params.jitter_layers..=params.jitter_layers)
            } else {
                0.0
            };
            let shared = ((theta * layers as f64 + jitter).round() as i64).clamp(1, layers as i64 - 1)
                as usize;
            let keep: Vec<bool> = match params.sharing_kind {
                SharingKind::BackboneSharing => (0..layers).map(|l| l < shared).collect(),
                SharingKind::General => {
                    let mut keep = vec![false; layers];
                    for pos in index::sample(&mut rng, layers, shared) {
                        keep[pos] = true;
                    }
                    keep
                }
            };
            let block_ids: Vec<BlockId> = keep
                .iter()
                .enumerate()
                .map(|(l, &k)| {
                    if k {
                        pretrained[l]
                    } else {
                        new_block(profile.layer_bytes[l], &mut blocks)
                    }
                })
                .collect();
            let weight_bytes = block_ids
                .iter()
                .map(|b| blocks[b.0 as usize].size_bytes)
                .sum();
            let id = ModelId(models.len() as u32);
            models.push(ModelSpec {
                id,
                block_ids,
                mu_ms: profile.mu_ms,
                beta_ms: profile.beta_ms,
                weight_bytes,
                activation_bytes_per_sample: profile.activation_bytes_per_sample,
            });
            members.push(ClusterMember {
                model: id,
                shared_prefix_len: shared,
            });
            shared_layers.push((shared, layers));
        }
        clusters.push(ClusterSpec {
            id: ClusterId(c as u32),
            backbone_block_ids: pretrained,
            members,
        });
    }

    let realised = realised_ratio(&shared_layers);
    if (realised - theta).abs() > RATIO_TOLERANCE {
        return Err(SynthError::InfeasibleRatio {
            target: theta,
            realised,
        });
    }
    Ok(match params.sharing_kind {
        SharingKind::BackboneSharing => {
            ModelLibrary::new(SharingKind::BackboneSharing, blocks, models, Some(clusters))
        }
        SharingKind::General => ModelLibrary::new(SharingKind::General, blocks, models, None),
    })
}
