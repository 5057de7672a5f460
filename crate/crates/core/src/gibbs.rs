//! Posterior sampling of block labels, per-block Pitman-Yor parameters and
//! the propensity matrix.
//!
//! One iteration sweeps every node in ascending index order, then refreshes
//! `(alpha_b, theta_b)` for every block through the auxiliary-variable
//! scheme, then redraws the propensity rows. The block initiation
//! frequencies stay integrated out.

use std::time::Instant;

use log::{debug, warn};
use rand::Rng;
use rand_distr::{Bernoulli, Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::consistency::degree_majority_update;
use crate::error::{Error, Result};
use crate::likelihood::log_prob_from_stats;
use crate::network::{BlockAssignment, InteractionNetwork, NodeIndex};
use crate::numeric::{ln_gamma, sample_dirichlet, sample_log_categorical};
use crate::params::Propensity;
use crate::rng::{stream_rng, SimRng};
use crate::stats::{compute_stats, SufficientStats};

/// Redraw budget for the symmetric propensity construction before the
/// previous matrix is kept.
const SYMMETRIC_ATTEMPTS: usize = 100;

/// Incremental statistics are cross-checked in debug builds up to this size.
const DEBUG_CHECK_NODES: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Random,
    /// One degree-majority pass over a random start.
    DegreeMajority,
    /// Fixed starting labels (0-based).
    Provided(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub k: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    /// Symmetric Dirichlet concentration for the initiation frequencies.
    pub omega: f64,
    /// Symmetric Dirichlet concentration for each propensity row.
    pub zeta: f64,
    /// Beta(c, d) prior on every `alpha_b`.
    pub alpha_prior: (f64, f64),
    /// Gamma(shape a, rate b) prior on every `theta_b`.
    pub theta_prior: (f64, f64),
    pub symmetric_prop: bool,
    pub init: Init,
    pub init_alpha: f64,
    pub init_theta: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            k: 2,
            iterations: 1000,
            burn_in: 500,
            seed: 0,
            stream: 0,
            omega: 1.0,
            zeta: 1.0,
            alpha_prior: (1.0, 1.0),
            theta_prior: (1.0, 1.0),
            symmetric_prop: false,
            init: Init::Random,
            init_alpha: 0.5,
            init_theta: 1.0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.k == 0 || self.k > u16::MAX as usize {
            return bad("K must be between 1 and 65535");
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return bad("need iterations > burn_in >= 0");
        }
        let hyper = [
            self.omega,
            self.zeta,
            self.alpha_prior.0,
            self.alpha_prior.1,
            self.theta_prior.0,
            self.theta_prior.1,
        ];
        if hyper.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return bad("all hyperparameters must be positive");
        }
        if !(self.init_alpha > 0.0 && self.init_alpha < 1.0)
            || !(self.init_theta > -self.init_alpha)
        {
            return bad("initial alpha must lie in (0,1) and theta exceed -alpha");
        }
        Ok(())
    }
}

/// Recorded output of one sampler run. Every iteration is kept; the first
/// `burn_in` are excluded from posterior summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub k: usize,
    pub n_nodes: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub stream: u64,
    pub omega: f64,
    pub zeta: f64,
    pub labels: Vec<Vec<u16>>,
    pub alpha: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub prop: Vec<Propensity>,
    /// Sequential log-probability of each sample.
    pub log_prob: Vec<f64>,
    pub elapsed_secs: f64,
    /// Symmetric propensity draws that exhausted their redraw budget.
    pub prop_rejections: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn assignment(&self, t: usize) -> Result<BlockAssignment> {
        BlockAssignment::new(self.labels[t].iter().map(|&b| b as usize).collect(), self.k)
    }

    pub fn post_burn_in(&self) -> std::ops::Range<usize> {
        self.burn_in..self.len()
    }

    fn kept(&self) -> Result<std::ops::Range<usize>> {
        let r = self.post_burn_in();
        if r.is_empty() {
            Err(Error::EmptyChain)
        } else {
            Ok(r)
        }
    }

    /// Posterior mean of `alpha_b` per block.
    pub fn mean_alpha(&self) -> Result<Vec<f64>> {
        let r = self.kept()?;
        Ok(column_means(&self.alpha[r]))
    }

    pub fn mean_theta(&self) -> Result<Vec<f64>> {
        let r = self.kept()?;
        Ok(column_means(&self.theta[r]))
    }

    pub fn mean_prop(&self) -> Result<Vec<f64>> {
        let r = self.kept()?;
        let rows: Vec<Vec<f64>> = self.prop[r].iter().map(|p| p.as_slice().to_vec()).collect();
        Ok(column_means(&rows))
    }

    /// Last sample's labels.
    pub fn last_assignment(&self) -> Result<BlockAssignment> {
        if self.is_empty() {
            return Err(Error::EmptyChain);
        }
        self.assignment(self.len() - 1)
    }
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut acc = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r) {
            *a += x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Adjacency of one node, with itself split out.
#[derive(Clone, Debug, Default)]
struct NodeEdges {
    /// Receivers of interactions the node sends, one entry per appearance.
    out: Vec<NodeIndex>,
    /// Senders of interactions the node comments on.
    inn: Vec<NodeIndex>,
    /// Appearances as its own commentator.
    self_loops: u64,
    /// Interactions initiated.
    sent: u64,
}

fn build_edges(network: &InteractionNetwork) -> Vec<NodeEdges> {
    let mut edges = vec![NodeEdges::default(); network.n_nodes()];
    for it in network.interactions() {
        edges[it.sender].sent += 1;
        for &r in &it.receivers {
            if r == it.sender {
                edges[r].self_loops += 1;
            } else {
                edges[it.sender].out.push(r);
                edges[r].inn.push(it.sender);
            }
        }
    }
    edges
}

/// Mutable sampler state: labels, parameters and their sufficient counts.
#[derive(Clone, Debug)]
pub struct GibbsState {
    pub stats: SufficientStats,
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
    pub prop: Propensity,
    edges: Vec<NodeEdges>,
}

impl GibbsState {
    pub fn new(
        network: &InteractionNetwork,
        assignment: &BlockAssignment,
        alpha: Vec<f64>,
        theta: Vec<f64>,
        prop: Propensity,
    ) -> Result<Self> {
        let stats = compute_stats(network, assignment)?;
        let k = stats.k;
        if alpha.len() != k || theta.len() != k || prop.k() != k {
            return Err(Error::InvalidParams(format!(
                "state parameters must have K = {k} blocks"
            )));
        }
        Ok(Self {
            stats,
            alpha,
            theta,
            prop,
            edges: build_edges(network),
        })
    }

    pub fn k(&self) -> usize {
        self.stats.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.stats.labels
    }

    pub fn assignment(&self) -> BlockAssignment {
        BlockAssignment::new(self.stats.labels.clone(), self.k()).expect("labels stay in range")
    }

    /// Unnormalized log full conditional of node `i` over the candidate
    /// blocks, conditioning on the current propensity matrix and
    /// `(alpha, theta)` with the initiation frequencies integrated out.
    pub fn log_conditional(&self, i: NodeIndex, omega: f64) -> Vec<f64> {
        let k = self.k();
        let s = &self.stats;
        let e = &self.edges[i];
        let old = s.labels[i];
        let d = s.node_degree[i];

        let mut cnt_out = vec![0u64; k];
        let mut cnt_in = vec![0u64; k];
        for &r in &e.out {
            cnt_out[s.labels[r]] += 1;
        }
        for &q in &e.inn {
            cnt_in[s.labels[q]] += 1;
        }

        let mut w = vec![0.0; k];
        for (b, wb) in w.iter_mut().enumerate() {
            // initiations, with node i's own removed from its current block
            if e.sent > 0 {
                let l = s.initiated[b] as f64 - if b == old { e.sent as f64 } else { 0.0 };
                *wb += ln_gamma(omega + l + e.sent as f64) - ln_gamma(omega + l);
            }

            let mut edge = 0.0;
            let mut add = |n: u64, p: f64| {
                if n > 0 {
                    edge += n as f64 * p.ln();
                }
            };
            for c in 0..k {
                add(cnt_out[c], self.prop.get(b, c));
                add(cnt_in[c], self.prop.get(c, b));
            }
            add(e.self_loops, self.prop.get(b, b));
            *wb += edge;

            // block b's partition probability with node i added
            let (mut v, mut m) = (s.block_nodes[b], s.block_degree[b]);
            if b == old {
                v -= 1;
                m -= d;
            }
            let (a, t) = (self.alpha[b], self.theta[b]);
            let f = |m: u64| {
                if m == 0 {
                    0.0
                } else {
                    ln_gamma(t + m as f64) - ln_gamma(t + 1.0)
                }
            };
            if v >= 1 {
                *wb += (t + v as f64 * a).ln();
            }
            *wb -= f(m + d) - f(m);
            *wb += ln_gamma(d as f64 - a) - ln_gamma(1.0 - a);
        }
        w
    }

    /// Moves node `i` to block `new`, updating every count.
    pub fn move_node(&mut self, i: NodeIndex, new: usize) {
        let k = self.k();
        let old = self.stats.labels[i];
        if old == new {
            return;
        }
        let s = &mut self.stats;
        let e = &self.edges[i];
        let d = s.node_degree[i];

        s.initiated[old] -= e.sent;
        s.initiated[new] += e.sent;
        for &r in &e.out {
            let br = s.labels[r];
            s.pair[old * k + br] -= 1;
            s.pair[new * k + br] += 1;
            s.node_block[r * k + old] -= 1;
            s.node_block[r * k + new] += 1;
        }
        for &q in &e.inn {
            let bq = s.labels[q];
            s.pair[bq * k + old] -= 1;
            s.pair[bq * k + new] += 1;
            s.node_block[q * k + old] -= 1;
            s.node_block[q * k + new] += 1;
        }
        if e.self_loops > 0 {
            s.pair[old * k + old] -= e.self_loops;
            s.pair[new * k + new] += e.self_loops;
            s.node_block[i * k + old] -= 2 * e.self_loops;
            s.node_block[i * k + new] += 2 * e.self_loops;
        }

        s.block_nodes[old] -= 1;
        s.block_nodes[new] += 1;
        s.block_degree[old] -= d;
        s.block_degree[new] += d;
        let hist = &mut s.degree_counts[old];
        let n = hist.get_mut(&d).expect("degree class present");
        *n -= 1;
        if *n == 0 {
            hist.remove(&d);
        }
        *s.degree_counts[new].entry(d).or_insert(0) += 1;
        s.labels[i] = new;
    }
}

/// Draws a new label for node `i` from its full conditional and applies it.
pub fn update_block_assignment<R: Rng + ?Sized>(
    i: NodeIndex,
    state: &mut GibbsState,
    omega: f64,
    rng: &mut R,
) -> usize {
    if state.k() == 1 {
        return 0;
    }
    let w = state.log_conditional(i, omega);
    let b = sample_log_categorical(rng, &w);
    state.move_node(i, b);
    b
}

/// Auxiliary-variable update of `(alpha_b, theta_b)`.
///
/// An empty block, or one whose auxiliary sets are all empty, draws from
/// the priors.
pub fn update_alpha_theta<R: Rng + ?Sized>(
    b: usize,
    state: &mut GibbsState,
    alpha_prior: (f64, f64),
    theta_prior: (f64, f64),
    rng: &mut R,
) -> (f64, f64) {
    let s = &state.stats;
    let (alpha, theta) = (state.alpha[b], state.theta[b]);
    let (c, dh) = alpha_prior;
    let (a, rate) = theta_prior;
    let v = s.block_nodes[b];
    let m = s.block_degree[b];

    let log_x = if m >= 2 {
        let x: f64 = Beta::new(theta + 1.0, (m - 1) as f64)
            .expect("theta > -1 and m >= 2")
            .sample(rng);
        x.max(f64::MIN_POSITIVE).ln()
    } else {
        0.0
    };

    let mut sum_y = 0.0;
    let mut sum_not_y = 0.0;
    for i in 1..v {
        let p = (theta / (theta + i as f64 * alpha)).clamp(0.0, 1.0);
        if Bernoulli::new(p).expect("p in [0,1]").sample(rng) {
            sum_y += 1.0;
        } else {
            sum_not_y += 1.0;
        }
    }

    let mut sum_not_z = 0.0;
    for (&deg, &count) in &s.degree_counts[b] {
        for _ in 0..count {
            for j in 1..deg {
                let p = (j - 1) as f64 / (j as f64 - alpha);
                if !Bernoulli::new(p).expect("p in [0,1)").sample(rng) {
                    sum_not_z += 1.0;
                }
            }
        }
    }

    let new_theta = Gamma::new(a + sum_y, 1.0 / (rate - log_x))
        .expect("positive shape and rate")
        .sample(rng)
        .max(f64::MIN_POSITIVE);
    let new_alpha = Beta::new(c + sum_not_y, dh + sum_not_z)
        .expect("positive Beta parameters")
        .sample(rng)
        .clamp(1e-12, 1.0 - 1e-12);
    state.alpha[b] = new_alpha;
    state.theta[b] = new_theta;
    (new_alpha, new_theta)
}

/// Redraws the propensity matrix from its Dirichlet full conditional, or
/// through the sequential symmetric construction. Returns `false` when the
/// symmetric construction ran out of redraws and kept the previous matrix.
pub fn update_propensity<R: Rng + ?Sized>(
    state: &mut GibbsState,
    zeta: f64,
    symmetric: bool,
    rng: &mut R,
) -> bool {
    let k = state.k();
    let counts = |b: usize, c: usize| state.stats.pair(b, c) as f64;
    if !symmetric {
        for b in 0..k {
            let conc: Vec<f64> = (0..k).map(|c| zeta + counts(b, c)).collect();
            let row = sample_dirichlet(rng, &conc);
            state.prop.row_mut(b).copy_from_slice(&row);
        }
        return true;
    }
    for attempt in 0..SYMMETRIC_ATTEMPTS {
        if let Some(p) = symmetric_draw(k, zeta, &counts, rng) {
            if attempt > 0 {
                debug!("symmetric propensity accepted after {attempt} redraws");
            }
            state.prop = p;
            return true;
        }
    }
    warn!(
        "symmetric propensity draw failed {SYMMETRIC_ATTEMPTS} times; keeping the previous matrix"
    );
    false
}

fn symmetric_draw<R: Rng + ?Sized>(
    k: usize,
    zeta: f64,
    counts: &dyn Fn(usize, usize) -> f64,
    rng: &mut R,
) -> Option<Propensity> {
    let mut p = vec![vec![0.0; k]; k];
    for r in 0..k {
        let fixed: f64 = p[r][..r].iter().sum();
        let remaining = 1.0 - fixed;
        if remaining < 0.0 {
            return None;
        }
        if r + 1 == k {
            p[r][r] = remaining;
            break;
        }
        let conc: Vec<f64> = (r..k).map(|c| zeta + counts(r, c)).collect();
        let tail = sample_dirichlet(rng, &conc);
        for (j, t) in tail.iter().enumerate().take(tail.len() - 1) {
            p[r][r + j] = t * remaining;
        }
        let used: f64 = p[r][r..k - 1].iter().sum();
        p[r][k - 1] = remaining - used;
        if p[r][k - 1] < 0.0 {
            return None;
        }
        for c in r + 1..k {
            p[c][r] = p[r][c];
        }
    }
    // Later rows inherit mass from earlier columns, so re-check the domain.
    if p.iter().flatten().any(|&x| !(0.0..=1.0).contains(&x)) {
        return None;
    }
    let mut out = Propensity::uniform(k);
    for (b, row) in p.iter().enumerate() {
        out.row_mut(b).copy_from_slice(row);
    }
    Some(out)
}

fn initial_labels(
    network: &InteractionNetwork,
    config: &GibbsConfig,
    rng: &mut SimRng,
) -> Result<BlockAssignment> {
    let n = network.n_nodes();
    let k = config.k;
    match &config.init {
        Init::Random => BlockAssignment::new((0..n).map(|_| rng.random_range(0..k)).collect(), k),
        Init::DegreeMajority => {
            let start = BlockAssignment::new((0..n).map(|_| rng.random_range(0..k)).collect(), k)?;
            degree_majority_update(network, &start)
        }
        Init::Provided(labels) => {
            if labels.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "initial assignment covers {} nodes, network has {n}",
                    labels.len()
                )));
            }
            BlockAssignment::new(labels.clone(), k)
        }
    }
}

/// Runs the sampler and records every iteration.
pub fn run_gibbs(network: &InteractionNetwork, config: &GibbsConfig) -> Result<Chain> {
    config.validate()?;
    if network.is_empty() {
        return Err(Error::InsufficientData(
            "network has no interactions".into(),
        ));
    }
    let started = Instant::now();
    let k = config.k;
    let mut rng = stream_rng(config.seed, config.stream);
    let init = initial_labels(network, config, &mut rng)?;
    let mut state = GibbsState::new(
        network,
        &init,
        vec![config.init_alpha; k],
        vec![config.init_theta; k],
        Propensity::uniform(k),
    )?;
    update_propensity(&mut state, config.zeta, config.symmetric_prop, &mut rng);

    let n = network.n_nodes();
    let mut chain = Chain {
        k,
        n_nodes: n,
        burn_in: config.burn_in,
        seed: config.seed,
        stream: config.stream,
        omega: config.omega,
        zeta: config.zeta,
        labels: Vec::with_capacity(config.iterations),
        alpha: Vec::with_capacity(config.iterations),
        theta: Vec::with_capacity(config.iterations),
        prop: Vec::with_capacity(config.iterations),
        log_prob: Vec::with_capacity(config.iterations),
        elapsed_secs: 0.0,
        prop_rejections: 0,
    };

    for iter in 0..config.iterations {
        for i in 0..n {
            update_block_assignment(i, &mut state, config.omega, &mut rng);
        }
        if cfg!(debug_assertions) && n <= DEBUG_CHECK_NODES {
            let fresh = compute_stats(network, &state.assignment())?;
            debug_assert_eq!(
                fresh, state.stats,
                "incremental counts drifted at iteration {iter}"
            );
        }
        for b in 0..k {
            update_alpha_theta(
                b,
                &mut state,
                config.alpha_prior,
                config.theta_prior,
                &mut rng,
            );
        }
        if !update_propensity(&mut state, config.zeta, config.symmetric_prop, &mut rng) {
            chain.prop_rejections += 1;
        }
        let lp = log_prob_from_stats(
            &state.stats,
            config.omega,
            config.zeta,
            &state.alpha,
            &state.theta,
        )
        .map_err(|e| e.context(format!("iteration {iter}")))?;
        chain
            .labels
            .push(state.stats.labels.iter().map(|&b| b as u16).collect());
        chain.alpha.push(state.alpha.clone());
        chain.theta.push(state.theta.clone());
        chain.prop.push(state.prop.clone());
        chain.log_prob.push(lp.value());
    }
    chain.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(chain)
}
