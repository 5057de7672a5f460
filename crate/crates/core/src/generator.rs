//! Forward simulation of block vertex components networks.
//!
//! Two constructions are provided. The sequential one grows the network
//! interaction by interaction: a block-level Chinese restaurant draw picks the
//! sender's block, a per-block Pitman-Yor urn picks the sender, and each
//! commentator repeats the same two steps through the sender block's row of
//! block-pair counts. The conditional-iid one first draws the asymptotic
//! frequencies (Dirichlet block weights, Dirichlet propensity rows, truncated
//! GEM vertex weights per block) and then samples interactions independently.
//!
//! When `ModelParams::pi` or `ModelParams::prop` is set, the sequential
//! generator draws sender blocks (resp. receiver blocks) from those fixed
//! frequencies instead of the urns. This is the setting of the usual
//! recovery experiments, where `pi` and the propensity matrix are chosen.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BlockAssignment, Interaction, InteractionNetwork, NodeIndex};
use crate::numeric::{sample_categorical, sample_dirichlet};
use crate::params::{ModelParams, Propensity};
use crate::rng::{stream_rng, SimRng};

/// Distribution of the number of commentators per interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ArityLaw {
    /// Every interaction has exactly this many commentators.
    Fixed(usize),
    /// `weights[j]` is the probability of `j + 1` commentators.
    Categorical(Vec<f64>),
}

impl Default for ArityLaw {
    fn default() -> Self {
        ArityLaw::Fixed(1)
    }
}

impl ArityLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            ArityLaw::Fixed(0) => Err(Error::InvalidConfig("need at least one commentator".into())),
            ArityLaw::Fixed(_) => Ok(()),
            ArityLaw::Categorical(w) => {
                if w.is_empty() || w.iter().any(|&x| !(x >= 0.0)) {
                    return Err(Error::InvalidConfig(
                        "arity weights must be non-negative".into(),
                    ));
                }
                if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidConfig("arity weights must sum to 1".into()));
                }
                Ok(())
            }
        }
    }

    /// Expected number of commentators.
    pub fn mean(&self) -> f64 {
        match self {
            ArityLaw::Fixed(c) => *c as f64,
            ArityLaw::Categorical(w) => w.iter().enumerate().map(|(j, p)| (j + 1) as f64 * p).sum(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            ArityLaw::Fixed(c) => *c,
            ArityLaw::Categorical(w) => sample_categorical(rng, w) + 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    #[default]
    Sequential,
    ConditionalIid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub params: ModelParams,
    /// Number of interactions to generate.
    pub m: usize,
    pub arity: ArityLaw,
    pub seed: u64,
    /// Run index; selects an independent random stream for the same seed.
    #[serde(default)]
    pub stream: u64,
    pub mode: GeneratorMode,
    /// Stick-breaking atoms per block for the conditional-iid mode.
    #[serde(default)]
    pub truncation: Option<usize>,
}

impl GeneratorConfig {
    pub fn new(params: ModelParams, m: usize, seed: u64) -> Self {
        Self {
            params,
            m,
            arity: ArityLaw::default(),
            seed,
            stream: 0,
            mode: GeneratorMode::Sequential,
            truncation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.arity.validate()?;
        if self.truncation == Some(0) {
            return Err(Error::InvalidConfig("truncation must be at least 1".into()));
        }
        Ok(())
    }

    /// Default truncation `4 (theta_b + 1) m^alpha_b`.
    pub fn truncation_for(&self, b: usize) -> usize {
        self.truncation.unwrap_or_else(|| {
            let a = self.params.alpha[b];
            let t = self.params.theta[b];
            let m = self.m.max(1) as f64;
            (4.0 * (t + 1.0).max(1.0) * m.powf(a)).ceil() as usize
        })
    }
}

/// Output of a forward simulation.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub network: InteractionNetwork,
    pub truth: BlockAssignment,
    /// Parameters with `pi` and `prop` filled by the realized frequencies:
    /// the Dirichlet draws in the conditional-iid mode and the urns'
    /// predictive probabilities after `m` steps in the sequential mode.
    pub realized: ModelParams,
    /// Per-block stick-breaking weights (conditional-iid mode only).
    pub sticks: Option<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
}

/// Runs the configured construction.
pub fn simulate(config: &GeneratorConfig) -> Result<Simulation> {
    match config.mode {
        GeneratorMode::Sequential => simulate_sequential(config),
        GeneratorMode::ConditionalIid => simulate_conditional_iid(config),
    }
}

/// Incrementally built node table shared by both constructions.
#[derive(Default)]
struct NodeTable {
    labels: Vec<usize>,
    degree: Vec<u64>,
}

impl NodeTable {
    fn add(&mut self, block: usize) -> NodeIndex {
        self.labels.push(block);
        self.degree.push(0);
        self.labels.len() - 1
    }

    fn into_parts(
        self,
        k: usize,
        interactions: Vec<Interaction>,
    ) -> Result<(InteractionNetwork, BlockAssignment)> {
        let names = (1..=self.labels.len()).map(|i| format!("v{i}")).collect();
        let network = InteractionNetwork::from_indexed(names, interactions)?;
        let truth = BlockAssignment::new(self.labels, k)?;
        Ok((network, truth))
    }
}

/// Per-block Pitman-Yor urn over vertices.
#[derive(Default)]
struct VertexUrn {
    /// One entry per appearance, so a uniform pick is degree-proportional.
    appearances: Vec<NodeIndex>,
    distinct: usize,
}

impl VertexUrn {
    /// Existing node `s` has weight `D(s) - alpha`; a new node has weight
    /// `theta + alpha * v`, with `v` the number of distinct nodes so far.
    fn draw<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        alpha: f64,
        theta: f64,
        block: usize,
        nodes: &mut NodeTable,
    ) -> NodeIndex {
        let n = self.appearances.len() as f64;
        let fresh = self.appearances.is_empty()
            || rng.random::<f64>() * (theta + n) < theta + alpha * self.distinct as f64;
        let node = if fresh {
            self.distinct += 1;
            nodes.add(block)
        } else {
            // Degree-proportional proposal thinned by (D - alpha) / D.
            loop {
                let s = self.appearances[rng.random_range(0..self.appearances.len())];
                let d = nodes.degree[s] as f64;
                if rng.random::<f64>() * d < d - alpha {
                    break s;
                }
            }
        };
        self.appearances.push(node);
        nodes.degree[node] += 1;
        node
    }
}

/// Chinese-restaurant weights over `k` labels: `count + conc` for labels seen
/// so far, with the pooled `(k - seen) * conc` mass spread uniformly over
/// the unseen labels. Equivalent to drawing from `count + conc` directly.
fn crp_block<R: Rng + ?Sized>(rng: &mut R, counts: &[u64], conc: f64) -> usize {
    let k = counts.len();
    let seen: Vec<usize> = (0..k).filter(|&b| counts[b] > 0).collect();
    let total: f64 =
        seen.iter().map(|&b| counts[b] as f64 + conc).sum::<f64>() + (k - seen.len()) as f64 * conc;
    let mut u = rng.random::<f64>() * total;
    for &b in &seen {
        let w = counts[b] as f64 + conc;
        if u < w {
            return b;
        }
        u -= w;
    }
    let unseen: Vec<usize> = (0..k).filter(|&b| counts[b] == 0).collect();
    if unseen.is_empty() {
        // only reachable through rounding at the top of the range
        return *seen.last().expect("k >= 1");
    }
    unseen[rng.random_range(0..unseen.len())]
}

/// Sequential construction, one interaction at a time.
pub fn simulate_sequential(config: &GeneratorConfig) -> Result<Simulation> {
    config.validate()?;
    let params = &config.params;
    let k = params.k();
    let mut rng: SimRng = stream_rng(config.seed, config.stream);

    let mut nodes = NodeTable::default();
    let mut urns: Vec<VertexUrn> = (0..k).map(|_| VertexUrn::default()).collect();
    let mut initiated = vec![0u64; k];
    let mut pair = vec![0u64; k * k];
    let mut interactions = Vec::with_capacity(config.m);

    for _ in 0..config.m {
        let bs = match &params.pi {
            Some(pi) => sample_categorical(&mut rng, pi),
            None => crp_block(&mut rng, &initiated, params.omega),
        };
        let sender = urns[bs].draw(&mut rng, params.alpha[bs], params.theta[bs], bs, &mut nodes);
        initiated[bs] += 1;

        let c = config.arity.sample(&mut rng);
        let mut receivers = Vec::with_capacity(c);
        for _ in 0..c {
            let br = match &params.prop {
                Some(prop) => sample_categorical(&mut rng, prop.row(bs)),
                None => crp_block(&mut rng, &pair[bs * k..(bs + 1) * k], params.zeta),
            };
            pair[bs * k + br] += 1;
            receivers.push(urns[br].draw(
                &mut rng,
                params.alpha[br],
                params.theta[br],
                br,
                &mut nodes,
            ));
        }
        interactions.push(Interaction { sender, receivers });
    }

    let mut realized = params.clone();
    if realized.pi.is_none() {
        let denom = config.m as f64 + k as f64 * params.omega;
        realized.pi = Some(
            initiated
                .iter()
                .map(|&d| (d as f64 + params.omega) / denom)
                .collect(),
        );
    }
    if realized.prop.is_none() {
        let rows = (0..k)
            .map(|b| {
                let row = &pair[b * k..(b + 1) * k];
                let denom = row.iter().sum::<u64>() as f64 + k as f64 * params.zeta;
                row.iter()
                    .map(|&d| (d as f64 + params.zeta) / denom)
                    .collect::<Vec<_>>()
            })
            .collect();
        realized.prop = Some(renormalized(rows)?);
    }
    realized.pi = realized.pi.map(renormalize_vec);

    let (network, truth) = nodes.into_parts(k, interactions)?;
    Ok(Simulation {
        network,
        truth,
        realized,
        sticks: None,
        warnings: Vec::new(),
    })
}

fn renormalize_vec(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn renormalized(rows: Vec<Vec<f64>>) -> Result<Propensity> {
    Propensity::from_rows(rows.into_iter().map(renormalize_vec).collect())
}

/// Truncated GEM(alpha, theta) stick-breaking weights and the mass left over
/// before renormalization.
pub fn gem_sticks<R: Rng + ?Sized>(
    rng: &mut R,
    alpha: f64,
    theta: f64,
    atoms: usize,
) -> (Vec<f64>, f64) {
    let mut weights = Vec::with_capacity(atoms);
    let mut remaining = 1.0f64;
    for j in 1..=atoms {
        let v = Beta::new(1.0 - alpha, theta + j as f64 * alpha)
            .expect("valid stick parameters")
            .sample(rng);
        weights.push(remaining * v);
        remaining *= 1.0 - v;
    }
    let total = 1.0 - remaining;
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        weights.iter_mut().for_each(|w| *w = 1.0 / atoms as f64);
    }
    (weights, remaining)
}

/// Conditional-iid construction from the representation-theorem form
/// `P(E = (s, r)) = pi_b B(b, b') f_s^(b) f_r^(b')`.
pub fn simulate_conditional_iid(config: &GeneratorConfig) -> Result<Simulation> {
    config.validate()?;
    let params = &config.params;
    let k = params.k();
    let mut rng: SimRng = stream_rng(config.seed, config.stream);
    let mut warnings = Vec::new();

    let pi = match &params.pi {
        Some(pi) => pi.clone(),
        None => sample_dirichlet(&mut rng, &vec![params.omega; k]),
    };
    let prop = match &params.prop {
        Some(p) => p.clone(),
        None => renormalized(
            (0..k)
                .map(|_| sample_dirichlet(&mut rng, &vec![params.zeta; k]))
                .collect(),
        )?,
    };

    let mut sticks = Vec::with_capacity(k);
    let mut pickers = Vec::with_capacity(k);
    for b in 0..k {
        let atoms = config.truncation_for(b);
        if config.m > 1 && (atoms as f64) < (config.m as f64).powf(params.alpha[b]) {
            warnings.push(format!(
                "block {}: truncation {atoms} is below the expected distinct-node count",
                b + 1
            ));
        }
        let (w, left) = gem_sticks(&mut rng, params.alpha[b], params.theta[b], atoms);
        if left > 1e-6 {
            warnings.push(format!(
                "block {}: truncation at {atoms} atoms left {left:.3e} stick mass unassigned (renormalized)",
                b + 1
            ));
        }
        pickers.push(WeightedIndex::new(&w).map_err(|e| Error::InvalidConfig(e.to_string()))?);
        sticks.push(w);
    }
    let pi_pick = WeightedIndex::new(&pi).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let row_picks = (0..k)
        .map(|b| WeightedIndex::new(prop.row(b)).map_err(|e| Error::InvalidParams(e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let mut nodes = NodeTable::default();
    let mut atom_node: HashMap<(usize, usize), NodeIndex> = HashMap::new();
    let mut node_of = |b: usize, atom: usize, nodes: &mut NodeTable| -> NodeIndex {
        let v = *atom_node.entry((b, atom)).or_insert_with(|| nodes.add(b));
        nodes.degree[v] += 1;
        v
    };
    let mut interactions = Vec::with_capacity(config.m);
    for _ in 0..config.m {
        let bs = pi_pick.sample(&mut rng);
        let sender = node_of(bs, pickers[bs].sample(&mut rng), &mut nodes);
        let c = config.arity.sample(&mut rng);
        let receivers = (0..c)
            .map(|_| {
                let br = row_picks[bs].sample(&mut rng);
                node_of(br, pickers[br].sample(&mut rng), &mut nodes)
            })
            .collect();
        interactions.push(Interaction { sender, receivers });
    }

    let mut realized = params.clone();
    realized.pi = Some(pi);
    realized.prop = Some(prop);
    let (network, truth) = nodes.into_parts(k, interactions)?;
    Ok(Simulation {
        network,
        truth,
        realized,
        sticks: Some(sticks),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::degree_distribution;
    use crate::stats::compute_stats;

    fn params(k: usize, alpha: f64, theta: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, vec![alpha; k], vec![theta; k]).unwrap()
    }

    #[test]
    fn zero_interactions() {
        for mode in [GeneratorMode::Sequential, GeneratorMode::ConditionalIid] {
            let mut cfg = GeneratorConfig::new(params(2, 0.5, 1.0), 0, 1);
            cfg.mode = mode;
            let sim = simulate(&cfg).unwrap();
            assert!(sim.network.is_empty());
            assert_eq!(sim.network.n_nodes(), 0);
        }
    }

    #[test]
    fn equal_seeds_identical_output() {
        for mode in [GeneratorMode::Sequential, GeneratorMode::ConditionalIid] {
            let mut cfg = GeneratorConfig::new(params(3, 0.6, 2.0), 500, 42);
            cfg.mode = mode;
            cfg.arity = ArityLaw::Categorical(vec![0.5, 0.3, 0.2]);
            let a = simulate(&cfg).unwrap();
            let b = simulate(&cfg).unwrap();
            assert_eq!(a.network.interactions(), b.network.interactions());
            assert_eq!(a.truth, b.truth);
            cfg.stream = 1;
            let c = simulate(&cfg).unwrap();
            assert_ne!(a.network.interactions(), c.network.interactions());
        }
    }

    #[test]
    fn exact_interaction_count_and_arity() {
        let mut cfg = GeneratorConfig::new(params(2, 0.5, 5.0), 300, 9);
        cfg.arity = ArityLaw::Fixed(3);
        let sim = simulate_sequential(&cfg).unwrap();
        assert_eq!(sim.network.len(), 300);
        assert!(sim
            .network
            .interactions()
            .iter()
            .all(|i| i.receivers.len() == 3));
    }

    #[test]
    fn sender_blocks_balanced_under_symmetric_urn() {
        // The block urn is Polya, so a single run's fraction converges to a
        // Beta(omega, omega) variable; symmetry holds in expectation.
        let runs = 400;
        let mut total = 0.0;
        for stream in 0..runs {
            let mut c = GeneratorConfig::new(params(2, 0.5, 5.0), 250, 2024);
            c.stream = stream;
            let sim = simulate_sequential(&c).unwrap();
            let s = compute_stats(&sim.network, &sim.truth).unwrap();
            total += s.initiated[0] as f64 / 250.0;
        }
        let mean = total / runs as f64;
        // Beta(1,1) limit: sd 0.289 per run
        assert!(
            (mean - 0.5).abs() < 4.0 * 0.29 / (runs as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn sender_blocks_fixed_pi_fraction() {
        let p = params(2, 0.5, 5.0).with_pi(vec![0.5, 0.5]).unwrap();
        let sim = simulate_sequential(&GeneratorConfig::new(p, 100_000, 5)).unwrap();
        let s = compute_stats(&sim.network, &sim.truth).unwrap();
        let f = s.initiated[0] as f64 / 100_000.0;
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    #[test]
    fn nodes_keep_their_birth_block_and_universe_is_covered() {
        let p = params(3, 0.4, 1.0)
            .with_prop(Propensity::with_diagonal(3, 0.8).unwrap())
            .unwrap();
        let mut cfg = GeneratorConfig::new(p, 2000, 77);
        cfg.arity = ArityLaw::Fixed(2);
        let sim = simulate_sequential(&cfg).unwrap();
        assert_eq!(sim.truth.len(), sim.network.n_nodes());
        assert!(sim.network.node_degrees().iter().all(|&d| d > 0));
        sim.realized.validate().unwrap();
    }

    #[test]
    fn single_block_iid_reduces_to_gem() {
        let mut cfg = GeneratorConfig::new(params(1, 0.5, 2.0), 1000, 3);
        cfg.mode = GeneratorMode::ConditionalIid;
        let sim = simulate_conditional_iid(&cfg).unwrap();
        let prop = sim.realized.prop.unwrap();
        assert_eq!(prop.get(0, 0), 1.0);
        assert_eq!(sim.realized.pi.unwrap(), vec![1.0]);
        let sticks = sim.sticks.unwrap();
        assert!((sticks[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iid_block_pair_frequencies_match_realized() {
        let mut cfg = GeneratorConfig::new(params(2, 0.5, 5.0), 200_000, 8);
        cfg.mode = GeneratorMode::ConditionalIid;
        let sim = simulate_conditional_iid(&cfg).unwrap();
        let s = compute_stats(&sim.network, &sim.truth).unwrap();
        let pi = sim.realized.pi.as_ref().unwrap();
        let prop = sim.realized.prop.as_ref().unwrap();
        let m = s.m as f64;
        for b in 0..2 {
            for c in 0..2 {
                let p = pi[b] * prop.get(b, c);
                let se = (p * (1.0 - p) / m).sqrt();
                let f = s.pair(b, c) as f64 / m;
                assert!((f - p).abs() < 3.0 * se + 1e-12, "({b},{c}) {f} vs {p}");
            }
        }
    }

    #[test]
    fn truncation_warning_recorded() {
        let mut cfg = GeneratorConfig::new(params(1, 0.7, 5.0), 100, 3);
        cfg.mode = GeneratorMode::ConditionalIid;
        cfg.truncation = Some(5);
        let sim = simulate_conditional_iid(&cfg).unwrap();
        assert!(sim.warnings.iter().any(|w| w.contains("unassigned")));
    }

    #[test]
    fn singleton_fraction_follows_pitman_yor_limit() {
        // Pitman-Yor urns put a fraction alpha of vertices at degree one.
        let cfg = GeneratorConfig::new(params(1, 0.5, 5.0), 100_000, 31);
        let sim = simulate_sequential(&cfg).unwrap();
        let f1 = degree_distribution(&sim.network).fraction(1);
        assert!((f1 - 0.5).abs() < 0.02, "{f1}");
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = GeneratorConfig::new(params(1, 0.5, 5.0), 10, 3);
        cfg.arity = ArityLaw::Categorical(vec![0.5, 0.4]);
        assert!(simulate(&cfg).is_err());
        cfg.arity = ArityLaw::Fixed(0);
        assert!(simulate(&cfg).is_err());
    }
}
