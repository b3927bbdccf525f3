use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use super::{ClusterMember, ClusterSpec, LibraryError, ModelLibrary, SharingKind};
use crate::ids::{BlockId, ClusterId, ModelId};

/// One violated library invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Diagnostic {
    #[error("duplicate block id {0}")]
    DuplicateBlock(BlockId),
    #[error("duplicate model id {0}")]
    DuplicateModel(ModelId),
    #[error("block {0} has zero size")]
    ZeroSizeBlock(BlockId),
    #[error("model {0} has no blocks")]
    EmptyModel(ModelId),
    #[error("model {model} references unknown block {block}")]
    DanglingBlock { model: ModelId, block: BlockId },
    #[error("model {model} lists block {block} more than once")]
    RepeatedBlock { model: ModelId, block: BlockId },
    #[error("model {model} declares weight_bytes {declared} but its blocks sum to {actual}")]
    WeightMismatch {
        model: ModelId,
        declared: u64,
        actual: u64,
    },
    #[error("model {model} has invalid {field} = {value}")]
    InvalidComputeConstant {
        model: ModelId,
        field: &'static str,
        value: f64,
    },
    #[error("backbone-sharing library has no clusters")]
    MissingClusters,
    #[error("duplicate cluster id {0}")]
    DuplicateCluster(ClusterId),
    #[error("cluster {cluster} backbone references unknown block {block}")]
    DanglingBackboneBlock { cluster: ClusterId, block: BlockId },
    #[error("cluster {cluster} lists unknown model {model}")]
    UnknownMember { cluster: ClusterId, model: ModelId },
    #[error("model {0} belongs to no cluster")]
    Unclustered(ModelId),
    #[error("model {model} belongs to clusters {first} and {second}")]
    MultiplyClustered {
        model: ModelId,
        first: ClusterId,
        second: ClusterId,
    },
    #[error(
        "model {model} in cluster {cluster} shares {len} layers but the backbone has {backbone_len}"
    )]
    PrefixTooLong {
        cluster: ClusterId,
        model: ModelId,
        len: usize,
        backbone_len: usize,
    },
    #[error("model {model} diverges from the backbone of cluster {cluster} at layer {layer}")]
    PrefixMismatch {
        cluster: ClusterId,
        model: ModelId,
        layer: usize,
    },
    #[error(
        "task-specific block {block} of model {model} (cluster {cluster}) also appears in model {other}"
    )]
    TaskBlockShared {
        cluster: ClusterId,
        model: ModelId,
        block: BlockId,
        other: ModelId,
    },
    #[error("clusters {first} and {second} share block {block}")]
    ClustersShareBlock {
        block: BlockId,
        first: ClusterId,
        second: ClusterId,
    },
}

impl Diagnostic {
    /// Structural problems make the library unusable for any algorithm;
    /// the others only invalidate the declared cluster structure.
    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            Diagnostic::DuplicateBlock(_)
                | Diagnostic::DuplicateModel(_)
                | Diagnostic::ZeroSizeBlock(_)
                | Diagnostic::EmptyModel(_)
                | Diagnostic::DanglingBlock { .. }
                | Diagnostic::RepeatedBlock { .. }
                | Diagnostic::WeightMismatch { .. }
                | Diagnostic::InvalidComputeConstant { .. }
        )
    }
}

/// Checks every library invariant; an empty result means the library is
/// well formed.
pub fn validate_library(lib: &ModelLibrary) -> Vec<Diagnostic> {
    let mut out = structural_diagnostics(lib);
    if lib.sharing_kind() == SharingKind::BackboneSharing || lib.clusters().is_some() {
        match lib.clusters() {
            None => out.push(Diagnostic::MissingClusters),
            Some(clusters) => out.extend(cluster_diagnostics(lib, clusters)),
        }
    }
    out
}

fn structural_diagnostics(lib: &ModelLibrary) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen_blocks = HashSet::new();
    for b in lib.blocks() {
        if !seen_blocks.insert(b.id) {
            out.push(Diagnostic::DuplicateBlock(b.id));
        }
        if b.size_bytes == 0 {
            out.push(Diagnostic::ZeroSizeBlock(b.id));
        }
    }
    let mut seen_models = HashSet::new();
    for m in lib.models() {
        if !seen_models.insert(m.id) {
            out.push(Diagnostic::DuplicateModel(m.id));
        }
        if m.block_ids.is_empty() {
            out.push(Diagnostic::EmptyModel(m.id));
        }
        let mut in_model = HashSet::new();
        let mut actual = 0u64;
        let mut dangling = false;
        for &block in &m.block_ids {
            if !in_model.insert(block) {
                out.push(Diagnostic::RepeatedBlock { model: m.id, block });
            }
            match lib.block_size(block) {
                Some(s) => actual += s,
                None => {
                    dangling = true;
                    out.push(Diagnostic::DanglingBlock { model: m.id, block });
                }
            }
        }
        if !dangling && actual != m.weight_bytes {
            out.push(Diagnostic::WeightMismatch {
                model: m.id,
                declared: m.weight_bytes,
                actual,
            });
        }
        for (field, value) in [("mu_ms", m.mu_ms), ("beta_ms", m.beta_ms)] {
            if !(value >= 0.0 && value.is_finite()) {
                out.push(Diagnostic::InvalidComputeConstant {
                    model: m.id,
                    field,
                    value,
                });
            }
        }
    }
    out
}

fn cluster_diagnostics(lib: &ModelLibrary, clusters: &[ClusterSpec]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut cluster_ids = HashSet::new();
    let mut membership: HashMap<ModelId, ClusterId> = HashMap::new();
    // block -> models that contain it
    let mut holders: HashMap<BlockId, Vec<ModelId>> = HashMap::new();
    for m in lib.models() {
        for &b in &m.block_ids {
            holders.entry(b).or_default().push(m.id);
        }
    }

    for c in clusters {
        if !cluster_ids.insert(c.id) {
            out.push(Diagnostic::DuplicateCluster(c.id));
        }
        for &block in &c.backbone_block_ids {
            if lib.block(block).is_none() {
                out.push(Diagnostic::DanglingBackboneBlock {
                    cluster: c.id,
                    block,
                });
            }
        }
        for member in &c.members {
            let Some(model) = lib.model(member.model) else {
                out.push(Diagnostic::UnknownMember {
                    cluster: c.id,
                    model: member.model,
                });
                continue;
            };
            if let Some(&first) = membership.get(&member.model) {
                out.push(Diagnostic::MultiplyClustered {
                    model: member.model,
                    first,
                    second: c.id,
                });
            } else {
                membership.insert(member.model, c.id);
            }
            let len = member.shared_prefix_len;
            if len > c.backbone_block_ids.len() || len > model.block_ids.len() {
                out.push(Diagnostic::PrefixTooLong {
                    cluster: c.id,
                    model: member.model,
                    len,
                    backbone_len: c.backbone_block_ids.len(),
                });
                continue;
            }
            if let Some(layer) = model.block_ids[..len]
                .iter()
                .zip(&c.backbone_block_ids)
                .position(|(a, b)| a != b)
            {
                out.push(Diagnostic::PrefixMismatch {
                    cluster: c.id,
                    model: member.model,
                    layer: layer + 1,
                });
            }
            for &block in &model.block_ids[len..] {
                if let Some(other) = holders
                    .get(&block)
                    .and_then(|h| h.iter().find(|&&o| o != member.model))
                {
                    out.push(Diagnostic::TaskBlockShared {
                        cluster: c.id,
                        model: member.model,
                        block,
                        other: *other,
                    });
                }
            }
        }
    }

    for m in lib.models() {
        if !membership.contains_key(&m.id) {
            out.push(Diagnostic::Unclustered(m.id));
        }
    }

    // clusters must be disjoint in blocks
    let mut owner: BTreeMap<BlockId, ClusterId> = BTreeMap::new();
    for c in clusters {
        let mut blocks: HashSet<BlockId> = c.backbone_block_ids.iter().copied().collect();
        for member in &c.members {
            if let Some(model) = lib.model(member.model) {
                blocks.extend(model.block_ids.iter().copied());
            }
        }
        let mut blocks: Vec<_> = blocks.into_iter().collect();
        blocks.sort();
        for block in blocks {
            match owner.get(&block) {
                Some(&first) if first != c.id => out.push(Diagnostic::ClustersShareBlock {
                    block,
                    first,
                    second: c.id,
                }),
                Some(_) => {}
                None => {
                    owner.insert(block, c.id);
                }
            }
        }
    }
    out
}

/// Outcome of [`classify_sharing`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sharing {
    BackboneSharing(Vec<ClusterSpec>),
    General,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so component order follows model order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Decides whether the library has clustered backbone sharing and, if so,
/// infers the maximal clusters.
///
/// Models are grouped by shared-block incidence. A group qualifies when the
/// shared blocks of every member form a bottom-layer prefix and all those
/// prefixes are prefixes of one common backbone. A single failing group makes
/// the whole library general. A library without shared blocks yields one
/// singleton cluster per model.
pub fn classify_sharing(lib: &ModelLibrary) -> Result<Sharing, LibraryError> {
    let structural: Vec<_> = structural_diagnostics(lib);
    if !structural.is_empty() {
        return Err(LibraryError::Invalid(structural));
    }
    let models = lib.models();
    let mut holders: HashMap<BlockId, Vec<usize>> = HashMap::new();
    for (pos, m) in models.iter().enumerate() {
        for &b in &m.block_ids {
            holders.entry(b).or_default().push(pos);
        }
    }
    let mut sets = DisjointSet::new(models.len());
    for hs in holders.values() {
        for w in hs.windows(2) {
            sets.union(w[0], w[1]);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for pos in 0..models.len() {
        groups.entry(sets.find(pos)).or_default().push(pos);
    }

    let is_shared = |b: &BlockId| holders.get(b).is_some_and(|h| h.len() > 1);
    let mut clusters = Vec::with_capacity(groups.len());
    for (cid, members) in groups.values().enumerate() {
        let cid = ClusterId(cid as u32);
        if members.len() == 1 {
            clusters.push(ClusterSpec {
                id: cid,
                backbone_block_ids: Vec::new(),
                members: vec![ClusterMember {
                    model: models[members[0]].id,
                    shared_prefix_len: 0,
                }],
            });
            continue;
        }
        let mut prefix_lens = Vec::with_capacity(members.len());
        for &pos in members {
            let blocks = &models[pos].block_ids;
            let len = blocks.iter().take_while(|b| is_shared(b)).count();
            if blocks[len..].iter().any(is_shared) {
                return Ok(Sharing::General);
            }
            prefix_lens.push(len);
        }
        let (longest, _) = prefix_lens
            .iter()
            .enumerate()
            .max_by_key(|(idx, len)| (**len, std::cmp::Reverse(*idx)))
            .expect("group is nonempty");
        let backbone: Vec<BlockId> =
            models[members[longest]].block_ids[..prefix_lens[longest]].to_vec();
        let mut cluster_members = Vec::with_capacity(members.len());
        for (&pos, &len) in members.iter().zip(&prefix_lens) {
            if models[pos].block_ids[..len] != backbone[..len] {
                return Ok(Sharing::General);
            }
            cluster_members.push(ClusterMember {
                model: models[pos].id,
                shared_prefix_len: len,
            });
        }
        clusters.push(ClusterSpec {
            id: cid,
            backbone_block_ids: backbone,
            members: cluster_members,
        });
    }
    Ok(Sharing::BackboneSharing(clusters))
}
