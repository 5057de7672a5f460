//! Interaction data: ordered sequences of (sender, receiver-multiset) records
//! over an opaque node-identifier space, plus block assignments over it.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// Dense index of a node inside one [`InteractionNetwork`].
pub type NodeIndex = usize;

/// One interaction: a sender and a non-empty multiset of receivers.
///
/// Receivers keep their order of arrival; a node listed twice counts twice.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub sender: NodeIndex,
    pub receivers: Vec<NodeIndex>,
}

impl Interaction {
    pub fn arity(&self) -> usize {
        1 + self.receivers.len()
    }

    /// Sender followed by receivers.
    pub fn members(&self) -> impl Iterator<Item = NodeIndex> + '_ {
        std::iter::once(self.sender).chain(self.receivers.iter().copied())
    }
}

/// An interaction-labeled network: position `j` in the sequence is the label
/// of interaction `j + 1`.
///
/// Node identifiers are interned on ingestion so that all internal work runs
/// on dense indices; the original identifiers are kept for output.
#[derive(Clone, Debug, Default)]
pub struct InteractionNetwork {
    interactions: Vec<Interaction>,
    names: Vec<String>,
    lookup: HashMap<String, NodeIndex>,
}

impl InteractionNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a network from already-interned interactions. Every name must be
    /// used by at least one interaction, so the node universe is exactly the
    /// union of senders and receivers.
    pub fn from_indexed(names: Vec<String>, interactions: Vec<Interaction>) -> Result<Self> {
        let n = names.len();
        let mut seen = vec![false; n];
        for (pos, it) in interactions.iter().enumerate() {
            if it.receivers.is_empty() {
                return Err(Error::Parse {
                    line: pos + 1,
                    message: "interaction has no receivers".into(),
                });
            }
            for v in it.members() {
                if v >= n {
                    return Err(Error::Parse {
                        line: pos + 1,
                        message: format!("node index {v} out of range"),
                    });
                }
                seen[v] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParams(format!(
                "node `{}` never appears in any interaction",
                names[i]
            )));
        }
        let mut lookup = HashMap::with_capacity(n);
        for (i, name) in names.iter().enumerate() {
            if lookup.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidParams(format!(
                    "duplicate node name `{name}`"
                )));
            }
        }
        Ok(Self {
            interactions,
            names,
            lookup,
        })
    }

    fn intern(&mut self, name: &str) -> NodeIndex {
        if let Some(&i) = self.lookup.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.lookup.insert(name.to_owned(), i);
        i
    }

    /// Appends an interaction given by node identifiers.
    pub fn push<S: AsRef<str>>(&mut self, sender: &str, receivers: &[S]) -> Result<()> {
        if receivers.is_empty() {
            return Err(Error::Parse {
                line: self.interactions.len() + 1,
                message: "interaction has no receivers".into(),
            });
        }
        let sender = self.intern(sender);
        let receivers = receivers.iter().map(|r| self.intern(r.as_ref())).collect();
        self.interactions.push(Interaction { sender, receivers });
        Ok(())
    }

    /// Convenience constructor used heavily in tests.
    pub fn from_named<S: AsRef<str>>(records: &[(S, Vec<S>)]) -> Result<Self> {
        let mut net = Self::new();
        for (s, rs) in records {
            net.push(s.as_ref(), rs)?;
        }
        Ok(net)
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// Number of interactions `m`.
    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Size of the node universe `v(Y)`; every node is non-isolated.
    pub fn n_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: NodeIndex) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<NodeIndex> {
        self.lookup.get(name).copied()
    }

    pub fn total_receivers(&self) -> usize {
        self.interactions.iter().map(|it| it.receivers.len()).sum()
    }

    /// Appearances of every node, as sender or receiver, with multiplicity.
    pub fn node_degrees(&self) -> Vec<u64> {
        let mut deg = vec![0u64; self.n_nodes()];
        for it in &self.interactions {
            for v in it.members() {
                deg[v] += 1;
            }
        }
        deg
    }

    /// The same network with interactions reordered: new position `j` holds
    /// old interaction `order[j]`. Node interning is unchanged.
    pub fn reordered(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.len(), "order must be a permutation");
        Self {
            interactions: order
                .iter()
                .map(|&j| self.interactions[j].clone())
                .collect(),
            names: self.names.clone(),
            lookup: self.lookup.clone(),
        }
    }

    /// The network made of the first `m` interactions, with the node universe
    /// shrunk to the nodes they touch.
    pub fn prefix(&self, m: usize) -> (Self, Vec<NodeIndex>) {
        let m = m.min(self.len());
        let mut remap: Vec<Option<NodeIndex>> = vec![None; self.n_nodes()];
        let mut names = Vec::new();
        let mut old_of_new = Vec::new();
        let mut interactions = Vec::with_capacity(m);
        for it in &self.interactions[..m] {
            let mut map = |v: NodeIndex| {
                *remap[v].get_or_insert_with(|| {
                    names.push(self.names[v].clone());
                    old_of_new.push(v);
                    names.len() - 1
                })
            };
            let sender = map(it.sender);
            let receivers = it.receivers.iter().map(|&r| map(r)).collect();
            interactions.push(Interaction { sender, receivers });
        }
        let lookup = names
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, n)| (n, i))
            .collect();
        (
            Self {
                interactions,
                names,
                lookup,
            },
            old_of_new,
        )
    }
}

/// A partition of the node universe into `k` blocks. Labels are 0-based
/// internally and 1-based in every file format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl BlockAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParams("K must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&b| b >= k) {
            return Err(Error::InvalidParams(format!(
                "block label {} exceeds K = {k}",
                bad + 1
            )));
        }
        Ok(Self { labels, k })
    }

    /// Everyone in block 0.
    pub fn single_block(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            k: 1,
        }
    }

    /// Resolves a name-to-label map (0-based labels) against a network;
    /// names absent from the network are ignored.
    pub fn from_names(
        network: &InteractionNetwork,
        map: &HashMap<String, usize>,
        k: usize,
    ) -> Result<Self> {
        let labels = network
            .names()
            .iter()
            .map(|n| {
                map.get(n)
                    .copied()
                    .ok_or_else(|| Error::UnassignedNode(n.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels, k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: NodeIndex) -> usize {
        self.labels[i]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Applies a block relabeling: block `b` becomes `perm[b]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.k);
        Self {
            labels: self.labels.iter().map(|&b| perm[b]).collect(),
            k: self.k,
        }
    }

    /// Number of nodes carrying each label.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &b in &self.labels {
            sizes[b] += 1;
        }
        sizes
    }

    /// Checks coverage of a network's node universe.
    pub fn check_covers(&self, network: &InteractionNetwork) -> Result<()> {
        if self.labels.len() < network.n_nodes() {
            return Err(Error::UnassignedNode(
                network.name(self.labels.len()).to_owned(),
            ));
        }
        Ok(())
    }
}

/// One interaction restricted to a single block. The sender is dropped when
/// it belongs to another block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RestrictedInteraction {
    pub sender: Option<NodeIndex>,
    pub receivers: Vec<NodeIndex>,
}

impl RestrictedInteraction {
    pub fn members(&self) -> impl Iterator<Item = NodeIndex> + '_ {
        self.sender
            .into_iter()
            .chain(self.receivers.iter().copied())
    }

    pub fn arity(&self) -> usize {
        self.sender.is_some() as usize + self.receivers.len()
    }
}

/// The restriction `Y_b` of a network to the members of one block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BlockRestriction {
    pub interactions: Vec<RestrictedInteraction>,
    /// Original 1-based interaction label of each retained interaction.
    pub labels: Vec<usize>,
}

impl BlockRestriction {
    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Degree of every node appearing in the restriction.
    pub fn node_degrees(&self) -> BTreeMap<NodeIndex, u64> {
        let mut deg = BTreeMap::new();
        for it in &self.interactions {
            for v in it.members() {
                *deg.entry(v).or_insert(0) += 1;
            }
        }
        deg
    }

    pub fn degree_distribution(&self) -> DegreeDistribution {
        DegreeDistribution::from_degrees(self.node_degrees().into_values())
    }

    /// Mean number of block members per retained interaction.
    pub fn mean_arity(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.interactions.iter().map(|i| i.arity()).sum::<usize>() as f64 / self.len() as f64
    }
}

/// Keeps, in every interaction, only the members labeled `block`; interactions
/// left empty disappear but survivors keep their original labels.
pub fn restrict_to_block(
    network: &InteractionNetwork,
    assignment: &BlockAssignment,
    block: usize,
) -> BlockRestriction {
    let mut out = BlockRestriction::default();
    for (pos, it) in network.interactions().iter().enumerate() {
        let sender = (assignment.label(it.sender) == block).then_some(it.sender);
        let receivers: Vec<_> = it
            .receivers
            .iter()
            .copied()
            .filter(|&r| assignment.label(r) == block)
            .collect();
        if sender.is_some() || !receivers.is_empty() {
            out.interactions
                .push(RestrictedInteraction { sender, receivers });
            out.labels.push(pos + 1);
        }
    }
    out
}

/// Map from degree `k` to the number of nodes `N_k` with exactly that degree.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DegreeDistribution {
    pub counts: BTreeMap<u64, u64>,
}

impl DegreeDistribution {
    pub fn from_degrees<I: IntoIterator<Item = u64>>(degrees: I) -> Self {
        let mut counts = BTreeMap::new();
        for d in degrees {
            if d > 0 {
                *counts.entry(d).or_insert(0) += 1;
            }
        }
        Self { counts }
    }

    pub fn count(&self, k: u64) -> u64 {
        self.counts.get(&k).copied().unwrap_or(0)
    }

    /// Number of non-isolated nodes.
    pub fn n_nodes(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn total_degree(&self) -> u64 {
        self.counts.iter().map(|(k, n)| k * n).sum()
    }

    /// Empirical fraction `d_k = N_k / v`.
    pub fn fraction(&self, k: u64) -> f64 {
        let v = self.n_nodes();
        if v == 0 {
            0.0
        } else {
            self.count(k) as f64 / v as f64
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Global degree distribution of a network.
pub fn degree_distribution(network: &InteractionNetwork) -> DegreeDistribution {
    DegreeDistribution::from_degrees(network.node_degrees())
}

/// Degree distribution of every block's restricted network. A node's degree
/// in its own block's restriction equals its global degree.
pub fn degree_distribution_by_block(
    network: &InteractionNetwork,
    assignment: &BlockAssignment,
) -> Vec<DegreeDistribution> {
    let deg = network.node_degrees();
    let mut per_block: Vec<Vec<u64>> = vec![Vec::new(); assignment.k()];
    for (i, d) in deg.into_iter().enumerate() {
        per_block[assignment.label(i)].push(d);
    }
    per_block
        .into_iter()
        .map(DegreeDistribution::from_degrees)
        .collect()
}
