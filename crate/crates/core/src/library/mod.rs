//! Parameter-sharing model libraries.
//!
//! A library is a set of [`ParameterBlock`]s and a set of [`ModelSpec`]s, each
//! model being an ordered list of blocks (position = layer index). When the
//! library has clustered backbone sharing, every model is a member of exactly
//! one [`ClusterSpec`] and shares a bottom-layer prefix of that cluster's
//! backbone.

mod synth;
mod validate;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{BlockId, ClusterId, ModelId};

pub use synth::{
    builtin_profiles, parse_profiles, realised_ratio, synth_generate, LayerProfile, SynthError,
    SynthParams, RATIO_TOLERANCE,
};
pub use validate::{classify_sharing, validate_library, Diagnostic, Sharing};

/// Current version of the library document schema.
pub const LIBRARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterBlock {
    pub id: BlockId,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    /// Blocks in layer order; position 0 is layer 1.
    pub block_ids: Vec<BlockId>,
    /// Compute time per request in the batch, milliseconds.
    pub mu_ms: f64,
    /// Fixed compute time per batch, milliseconds.
    pub beta_ms: f64,
    pub weight_bytes: u64,
    pub activation_bytes_per_sample: u64,
}

impl ModelSpec {
    pub fn layer_count(&self) -> usize {
        self.block_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub model: ModelId,
    /// Number of bottom layers taken from the cluster backbone.
    pub shared_prefix_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub id: ClusterId,
    pub backbone_block_ids: Vec<BlockId>,
    pub members: Vec<ClusterMember>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingKind {
    BackboneSharing,
    General,
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("unknown model {0}")]
    UnknownModel(ModelId),
    #[error("malformed library: {}", join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("failed to read library file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse library document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialise library document: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unsupported library schema version {0}")]
    Version(u32),
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Serialized form of a [`ModelLibrary`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LibraryDoc {
    version: u32,
    sharing_kind: SharingKind,
    blocks: Vec<ParameterBlock>,
    models: Vec<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clusters: Option<Vec<ClusterSpec>>,
}

/// A model library together with id lookups.
///
/// Construction never rejects a library; call [`validate_library`] to get the
/// list of violated invariants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "LibraryDoc", into = "LibraryDoc")]
pub struct ModelLibrary {
    sharing_kind: SharingKind,
    blocks: Vec<ParameterBlock>,
    models: Vec<ModelSpec>,
    clusters: Option<Vec<ClusterSpec>>,
    block_pos: HashMap<BlockId, usize>,
    model_pos: HashMap<ModelId, usize>,
    version: u32,
}

impl From<LibraryDoc> for ModelLibrary {
    fn from(doc: LibraryDoc) -> Self {
        let mut lib = ModelLibrary::new(doc.sharing_kind, doc.blocks, doc.models, doc.clusters);
        lib.version = doc.version;
        lib
    }
}

impl From<ModelLibrary> for LibraryDoc {
    fn from(lib: ModelLibrary) -> Self {
        LibraryDoc {
            version: lib.version,
            sharing_kind: lib.sharing_kind,
            blocks: lib.blocks,
            models: lib.models,
            clusters: lib.clusters,
        }
    }
}

impl PartialEq for ModelLibrary {
    fn eq(&self, other: &Self) -> bool {
        self.sharing_kind == other.sharing_kind
            && self.blocks == other.blocks
            && self.models == other.models
            && self.clusters == other.clusters
    }
}

impl ModelLibrary {
    pub fn new(
        sharing_kind: SharingKind,
        blocks: Vec<ParameterBlock>,
        models: Vec<ModelSpec>,
        clusters: Option<Vec<ClusterSpec>>,
    ) -> Self {
        // first occurrence wins; duplicates are reported by validation
        let mut block_pos = HashMap::with_capacity(blocks.len());
        for (pos, b) in blocks.iter().enumerate() {
            block_pos.entry(b.id).or_insert(pos);
        }
        let mut model_pos = HashMap::with_capacity(models.len());
        for (pos, m) in models.iter().enumerate() {
            model_pos.entry(m.id).or_insert(pos);
        }
        ModelLibrary {
            sharing_kind,
            blocks,
            models,
            clusters,
            block_pos,
            model_pos,
            version: LIBRARY_SCHEMA_VERSION,
        }
    }

    /// Schema version the library was read with.
    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn sharing_kind(&self) -> SharingKind {
        self.sharing_kind
    }

    pub fn blocks(&self) -> &[ParameterBlock] {
        &self.blocks
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn clusters(&self) -> Option<&[ClusterSpec]> {
        self.clusters.as_deref()
    }

    pub fn model(&self, id: ModelId) -> Option<&ModelSpec> {
        self.model_pos.get(&id).map(|&p| &self.models[p])
    }

    /// Position of a model in [`ModelLibrary::models`].
    pub fn model_index(&self, id: ModelId) -> Option<usize> {
        self.model_pos.get(&id).copied()
    }

    pub fn block(&self, id: BlockId) -> Option<&ParameterBlock> {
        self.block_pos.get(&id).map(|&p| &self.blocks[p])
    }

    pub fn block_size(&self, id: BlockId) -> Option<u64> {
        self.block(id).map(|b| b.size_bytes)
    }

    /// Returns a copy with the clusters and sharing kind replaced by the
    /// outcome of [`classify_sharing`].
    pub fn with_inferred_sharing(&self) -> Result<ModelLibrary, LibraryError> {
        let sharing = classify_sharing(self)?;
        let (kind, clusters) = match sharing {
            Sharing::BackboneSharing(clusters) => (SharingKind::BackboneSharing, Some(clusters)),
            Sharing::General => (SharingKind::General, None),
        };
        Ok(ModelLibrary::new(
            kind,
            self.blocks.clone(),
            self.models.clone(),
            clusters,
        ))
    }

    /// Every model becomes its own cluster with no shared prefix.
    pub fn singleton_clusters(&self) -> Vec<ClusterSpec> {
        self.models
            .iter()
            .enumerate()
            .map(|(c, m)| ClusterSpec {
                id: ClusterId(c as u32),
                backbone_block_ids: Vec::new(),
                members: vec![ClusterMember {
                    model: m.id,
                    shared_prefix_len: 0,
                }],
            })
            .collect()
    }

    pub fn to_toml_string(&self) -> Result<String, LibraryError> {
        Ok(toml::to_string(&LibraryDoc::from(self.clone()))?)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, LibraryError> {
        let doc: LibraryDoc = toml::from_str(s)?;
        if doc.version != LIBRARY_SCHEMA_VERSION {
            return Err(LibraryError::Version(doc.version));
        }
        Ok(doc.into())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LibraryError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LibraryError> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

/// Bytes of the blocks of `next` that are not blocks of `prev`.
///
/// `prev = None` means nothing is resident, so the whole model is loaded.
pub fn shared_delta_size(
    lib: &ModelLibrary,
    prev: Option<ModelId>,
    next: ModelId,
) -> Result<u64, LibraryError> {
    let next_spec = lib.model(next).ok_or(LibraryError::UnknownModel(next))?;
    let resident: HashSet<BlockId> = match prev {
        None => HashSet::new(),
        Some(p) => lib
            .model(p)
            .ok_or(LibraryError::UnknownModel(p))?
            .block_ids
            .iter()
            .copied()
            .collect(),
    };
    let mut seen = HashSet::new();
    Ok(next_spec
        .block_ids
        .iter()
        .filter(|b| !resident.contains(b) && seen.insert(**b))
        .map(|b| lib.block_size(*b).unwrap_or(0))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MB: u64 = 1_000_000;

    fn two_model_lib() -> ModelLibrary {
        let blocks = vec![
            ParameterBlock {
                id: BlockId(0),
                size_bytes: 4 * MB,
            },
            ParameterBlock {
                id: BlockId(1),
                size_bytes: 6 * MB,
            },
        ];
        let models = vec![
            ModelSpec {
                id: ModelId(0),
                block_ids: vec![BlockId(0)],
                mu_ms: 1.0,
                beta_ms: 2.0,
                weight_bytes: 4 * MB,
                activation_bytes_per_sample: 1,
            },
            ModelSpec {
                id: ModelId(1),
                block_ids: vec![BlockId(0), BlockId(1)],
                mu_ms: 1.0,
                beta_ms: 2.0,
                weight_bytes: 10 * MB,
                activation_bytes_per_sample: 1,
            },
        ];
        ModelLibrary::new(SharingKind::General, blocks, models, None)
    }

    #[test]
    fn delta_is_set_difference() {
        let lib = two_model_lib();
        assert_eq!(
            shared_delta_size(&lib, Some(ModelId(0)), ModelId(1)).unwrap(),
            6 * MB
        );
        assert_eq!(shared_delta_size(&lib, None, ModelId(1)).unwrap(), 10 * MB);
        assert_eq!(
            shared_delta_size(&lib, Some(ModelId(1)), ModelId(1)).unwrap(),
            0
        );
        assert_eq!(
            shared_delta_size(&lib, Some(ModelId(1)), ModelId(0)).unwrap(),
            0
        );
    }

    #[test]
    fn delta_unknown_model() {
        let lib = two_model_lib();
        assert!(matches!(
            shared_delta_size(&lib, None, ModelId(7)),
            Err(LibraryError::UnknownModel(ModelId(7)))
        ));
        assert!(matches!(
            shared_delta_size(&lib, Some(ModelId(9)), ModelId(0)),
            Err(LibraryError::UnknownModel(ModelId(9)))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let lib = two_model_lib().with_inferred_sharing().unwrap();
        let text = lib.to_toml_string().unwrap();
        assert!(text.contains("version = 1"));
        let back = ModelLibrary::from_toml_str(&text).unwrap();
        assert_eq!(back, lib);
        assert_eq!(back.model_index(ModelId(1)), Some(1));
    }

    #[test]
    fn rejects_unknown_version() {
        let text = two_model_lib()
            .to_toml_string()
            .unwrap()
            .replace("version = 1", "version = 7");
        assert!(matches!(
            ModelLibrary::from_toml_str(&text),
            Err(LibraryError::Version(7))
        ));
    }
}
