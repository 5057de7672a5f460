//! Count statistics that drive the likelihood and every conditional update.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::network::{BlockAssignment, InteractionNetwork, NodeIndex};

/// All counts of a network under a block assignment.
///
/// `node_block(i, c)` counts the partners of node `i` that sit in block `c`:
/// every receiver of an interaction `i` sends, and the sender of every
/// interaction `i` receives in. With one commentator per interaction the
/// counts of a node add up to its degree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SufficientStats {
    pub k: usize,
    /// Number of interactions.
    pub m: u64,
    pub total_receivers: u64,
    pub labels: Vec<usize>,
    /// `D(i)`: appearances of node `i` as sender or receiver.
    pub node_degree: Vec<u64>,
    /// `L_b`, also `D(b)`: interactions whose sender is in block `b`.
    pub initiated: Vec<u64>,
    /// `D(b, b')`, row-major: receivers in `b'` of interactions sent from `b`.
    pub pair: Vec<u64>,
    /// Row-major `n x K`.
    pub node_block: Vec<u64>,
    /// `v_b`: non-isolated nodes in block `b`.
    pub block_nodes: Vec<u64>,
    /// `m_b`: total degree of block `b`.
    pub block_degree: Vec<u64>,
    /// `N_k^(b)`: number of block-`b` nodes with degree exactly `k`.
    pub degree_counts: Vec<BTreeMap<u64, u64>>,
}

impl SufficientStats {
    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn pair(&self, b: usize, c: usize) -> u64 {
        self.pair[b * self.k + c]
    }

    #[inline]
    pub fn node_block(&self, i: NodeIndex, c: usize) -> u64 {
        self.node_block[i * self.k + c]
    }

    /// Receivers of interactions sent from block `b`.
    pub fn receivers_from(&self, b: usize) -> u64 {
        (0..self.k).map(|c| self.pair(b, c)).sum()
    }

    /// `K_m`: distinct sender blocks.
    pub fn occupied_sender_blocks(&self) -> usize {
        self.initiated.iter().filter(|&&n| n > 0).count()
    }

    /// `K_{m,b}`: distinct receiver blocks reached from block `b`.
    pub fn receiver_blocks_from(&self, b: usize) -> usize {
        (0..self.k).filter(|&c| self.pair(b, c) > 0).count()
    }
}

/// Aggregates all counts in one pass over the interactions.
pub fn compute_stats(
    network: &InteractionNetwork,
    assignment: &BlockAssignment,
) -> Result<SufficientStats> {
    assignment.check_covers(network)?;
    let k = assignment.k();
    let n = network.n_nodes();
    let labels = assignment.labels()[..n].to_vec();
    let mut s = SufficientStats {
        k,
        m: network.len() as u64,
        total_receivers: 0,
        labels,
        node_degree: vec![0; n],
        initiated: vec![0; k],
        pair: vec![0; k * k],
        node_block: vec![0; n * k],
        block_nodes: vec![0; k],
        block_degree: vec![0; k],
        degree_counts: vec![BTreeMap::new(); k],
    };
    for it in network.interactions() {
        let bs = s.labels[it.sender];
        s.initiated[bs] += 1;
        s.node_degree[it.sender] += 1;
        for &r in &it.receivers {
            let br = s.labels[r];
            s.total_receivers += 1;
            s.node_degree[r] += 1;
            s.pair[bs * k + br] += 1;
            s.node_block[it.sender * k + br] += 1;
            s.node_block[r * k + bs] += 1;
        }
    }
    for i in 0..n {
        let b = s.labels[i];
        let d = s.node_degree[i];
        if d > 0 {
            s.block_nodes[b] += 1;
            s.block_degree[b] += d;
            *s.degree_counts[b].entry(d).or_insert(0) += 1;
        }
    }
    Ok(s)
}
