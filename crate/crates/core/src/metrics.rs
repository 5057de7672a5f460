//! Recovery metrics and degree-law diagnostics.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::gibbs::Chain;
use crate::network::{restrict_to_block, BlockAssignment, DegreeDistribution, InteractionNetwork};
use crate::numeric::{ln_beta, ln_gamma, ols_slope};

/// Largest `K` for which label matching enumerates every permutation.
pub const EXACT_MATCH_MAX_K: usize = 8;

const LOG_CLIP: f64 = 1e-12;

/// Finds `perm` minimizing `sum_b cost[b][perm[b]]`. Exact up to
/// [`EXACT_MATCH_MAX_K`] blocks, greedy on the cheapest remaining pair above.
pub fn best_permutation(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let k = cost.len();
    if k <= EXACT_MATCH_MAX_K {
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = (perm.clone(), f64::INFINITY);
        permute(&mut perm, 0, cost, &mut best);
        best
    } else {
        let mut perm = vec![usize::MAX; k];
        let mut used = vec![false; k];
        let mut total = 0.0;
        for _ in 0..k {
            let mut pick = (0, 0, f64::INFINITY);
            for b in (0..k).filter(|&b| perm[b] == usize::MAX) {
                for c in (0..k).filter(|&c| !used[c]) {
                    if cost[b][c] < pick.2 {
                        pick = (b, c, cost[b][c]);
                    }
                }
            }
            perm[pick.0] = pick.1;
            used[pick.1] = true;
            total += pick.2;
        }
        (perm, total)
    }
}

fn permute(perm: &mut Vec<usize>, at: usize, cost: &[Vec<f64>], best: &mut (Vec<usize>, f64)) {
    if at == perm.len() {
        let total: f64 = perm.iter().enumerate().map(|(b, &c)| cost[b][c]).sum();
        if total < best.1 {
            *best = (perm.clone(), total);
        }
        return;
    }
    for j in at..perm.len() {
        perm.swap(at, j);
        permute(perm, at + 1, cost, best);
        perm.swap(at, j);
    }
}

/// Per-node block membership frequencies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorMembership {
    pub k: usize,
    pub names: Vec<String>,
    /// Row-major `n x K`.
    pub probs: Vec<f64>,
}

impl PosteriorMembership {
    /// Fraction of post-burn-in samples placing each node in each block.
    pub fn from_chain(chain: &Chain, network: &InteractionNetwork) -> Result<Self> {
        let kept = chain.post_burn_in();
        if kept.is_empty() {
            return Err(Error::EmptyChain);
        }
        if chain.n_nodes != network.n_nodes() {
            return Err(Error::InvalidParams(format!(
                "chain covers {} nodes, network has {}",
                chain.n_nodes,
                network.n_nodes()
            )));
        }
        let k = chain.k;
        let mut probs = vec![0.0; chain.n_nodes * k];
        let w = 1.0 / kept.len() as f64;
        for t in kept {
            for (i, &b) in chain.labels[t].iter().enumerate() {
                probs[i * k + b as usize] += w;
            }
        }
        Ok(Self {
            k,
            names: network.names().to_vec(),
            probs,
        })
    }

    /// Point masses at a fixed labeling.
    pub fn from_assignment(assignment: &BlockAssignment, names: Vec<String>) -> Result<Self> {
        let k = assignment.k();
        if names.len() != assignment.len() {
            return Err(Error::InvalidParams(
                "one name per labeled node required".into(),
            ));
        }
        let mut probs = vec![0.0; names.len() * k];
        for (i, &b) in assignment.labels().iter().enumerate() {
            probs[i * k + b] = 1.0;
        }
        Ok(Self { k, names, probs })
    }

    pub fn from_rows(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 || names.len() != rows.len() || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidParams(
                "membership rows must be non-empty and of equal length".into(),
            ));
        }
        for (name, r) in names.iter().zip(&rows) {
            if r.iter().any(|&p| !(p >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParams(format!(
                    "membership of `{name}` is not a distribution"
                )));
            }
        }
        Ok(Self {
            k,
            names,
            probs: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.k..(i + 1) * self.k]
    }

    /// Most frequent block per node; ties go to the lower label.
    pub fn hard_labels(&self) -> Result<BlockAssignment> {
        let labels = (0..self.n_nodes())
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (c, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        BlockAssignment::new(labels, self.k)
    }
}

fn check_truth(m: &PosteriorMembership, truth: &BlockAssignment) -> Result<()> {
    if truth.len() < m.n_nodes() {
        return Err(Error::UnassignedNode(m.names[truth.len()].clone()));
    }
    Ok(())
}

/// `(1/sqrt(v)) ||truth - q||_2` with `q` the block-2 membership frequency,
/// minimized over the two labelings. Two blocks only. Lies in
/// `[0, 1/sqrt(2)]`; all-0.5 memberships give exactly 0.5.
pub fn standardized_l2(membership: &PosteriorMembership, truth: &BlockAssignment) -> Result<f64> {
    if membership.k != 2 || truth.k() > 2 {
        return Err(Error::Unsupported(
            "standardized L2 is defined for two blocks; use the cross-entropy loss".into(),
        ));
    }
    check_truth(membership, truth)?;
    let v = membership.n_nodes();
    if v == 0 {
        return Err(Error::InsufficientData("no nodes".into()));
    }
    let (mut same, mut flip) = (0.0, 0.0);
    for i in 0..v {
        let t = truth.label(i) as f64;
        let q = membership.row(i)[1];
        same += (t - q).powi(2);
        flip += (t - (1.0 - q)).powi(2);
    }
    Ok((same.min(flip) / v as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossEntropy {
    pub total: f64,
    pub per_node: f64,
    /// `perm[b]` is the inferred label matched to true block `b`.
    pub permutation: Vec<usize>,
}

/// `sum_j -log q_j(truth(j))` under the best block matching; frequencies
/// are clipped at 1e-12 before the log.
pub fn cross_entropy_loss(
    membership: &PosteriorMembership,
    truth: &BlockAssignment,
) -> Result<CrossEntropy> {
    check_truth(membership, truth)?;
    let v = membership.n_nodes();
    if v == 0 {
        return Err(Error::InsufficientData("no nodes".into()));
    }
    let k = membership.k.max(truth.k());
    let mut cost = vec![vec![0.0; k]; k];
    for i in 0..v {
        let row = membership.row(i);
        let b = truth.label(i);
        for (c, cell) in cost[b].iter_mut().enumerate() {
            let q = row.get(c).copied().unwrap_or(0.0);
            *cell -= q.max(LOG_CLIP).ln();
        }
    }
    let (permutation, total) = if k <= EXACT_MATCH_MAX_K {
        best_permutation(&cost)
    } else {
        size_matching(&cost, membership, truth, k)
    };
    Ok(CrossEntropy {
        total,
        per_node: total / v as f64,
        permutation,
    })
}

/// Matches the `j`-th largest true block to the `j`-th largest inferred
/// block by expected size.
fn size_matching(
    cost: &[Vec<f64>],
    m: &PosteriorMembership,
    truth: &BlockAssignment,
    k: usize,
) -> (Vec<usize>, f64) {
    let mut true_size = vec![0.0; k];
    for i in 0..m.n_nodes() {
        true_size[truth.label(i)] += 1.0;
    }
    let inferred = expected_sizes(m, k, None);
    let perm = align_by_size(&true_size, &inferred);
    let total = (0..k).map(|b| cost[b][perm[b]]).sum();
    (perm, total)
}

fn expected_sizes(m: &PosteriorMembership, k: usize, rows: Option<&[usize]>) -> Vec<f64> {
    let mut s = vec![0.0; k];
    let mut add = |i: usize| {
        for (c, p) in m.row(i).iter().enumerate() {
            s[c] += p;
        }
    };
    match rows {
        Some(rows) => rows.iter().for_each(|&i| add(i)),
        None => (0..m.n_nodes()).for_each(add),
    }
    s
}

/// `perm[a]` is the `b`-block paired with block `a`, pairing blocks in
/// size-descending order. Ties keep the lower label first.
fn align_by_size(a: &[f64], b: &[f64]) -> Vec<usize> {
    let order = |s: &[f64]| {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&x, &y| s[y].total_cmp(&s[x]).then(x.cmp(&y)));
        idx
    };
    let (oa, ob) = (order(a), order(b));
    let mut perm = vec![0; a.len()];
    for (x, y) in oa.into_iter().zip(ob) {
        perm[x] = y;
    }
    perm
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hellinger {
    pub distance: f64,
    /// Nodes present in both memberships.
    pub n_common: usize,
    pub only_a: usize,
    pub only_b: usize,
}

/// Mean per-node Hellinger distance after aligning `b`'s labels to `a`'s by
/// greedy size matching over the shared nodes.
pub fn hellinger_distance(a: &PosteriorMembership, b: &PosteriorMembership) -> Result<Hellinger> {
    let lookup: std::collections::HashMap<&str, usize> = b
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let pairs: Vec<(usize, usize)> = a
        .names
        .iter()
        .enumerate()
        .filter_map(|(i, n)| lookup.get(n.as_str()).map(|&j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InsufficientData("memberships share no nodes".into()));
    }
    let k = a.k.max(b.k);
    let ia: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let ib: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let perm = align_by_size(
        &expected_sizes(a, k, Some(&ia)),
        &expected_sizes(b, k, Some(&ib)),
    );
    let mut total = 0.0;
    for &(i, j) in &pairs {
        let (p, q) = (a.row(i), b.row(j));
        let s: f64 = (0..k)
            .map(|c| {
                let pc = p.get(c).copied().unwrap_or(0.0);
                let qc = q.get(perm[c]).copied().unwrap_or(0.0);
                (pc.sqrt() - qc.sqrt()).powi(2)
            })
            .sum();
        total += (s / 2.0).sqrt();
    }
    Ok(Hellinger {
        distance: total / pairs.len() as f64,
        n_common: pairs.len(),
        only_a: a.n_nodes() - pairs.len(),
        only_b: b.n_nodes() - pairs.len(),
    })
}

/// Reference degree law for the goodness-of-fit test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceLaw {
    /// `p_k = r B(k, r + 1)`, with `r = p_1 / (1 - p_1)`.
    #[default]
    YuleSimon,
    /// `p_k = a Gamma(k - a) / (Gamma(1 - a) k!)`, the limiting degree law of
    /// a Pitman-Yor urn, with `a = p_1`.
    Sibuya,
}

impl ReferenceLaw {
    fn estimate(self, p1: f64) -> f64 {
        match self {
            ReferenceLaw::YuleSimon => p1 / (1.0 - p1),
            ReferenceLaw::Sibuya => p1,
        }
    }

    fn ln_pmf(self, k: u64, a: f64) -> f64 {
        let kf = k as f64;
        match self {
            ReferenceLaw::YuleSimon => a.ln() + ln_beta(kf, a + 1.0),
            ReferenceLaw::Sibuya => {
                a.ln() + ln_gamma(kf - a) - ln_gamma(1.0 - a) - ln_gamma(kf + 1.0)
            }
        }
    }

    fn valid(self, a: f64) -> bool {
        match self {
            ReferenceLaw::YuleSimon => a > 0.0 && a.is_finite(),
            ReferenceLaw::Sibuya => a > 0.0 && a < 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub n_nodes: u64,
    pub degree_one_fraction: f64,
    pub reference: ReferenceLaw,
    pub alpha_hat: f64,
    pub chi_square: f64,
    pub dof: usize,
    /// `None` when the law is degenerate or too few bins remain.
    pub p_value: Option<f64>,
    /// Slope of the log complementary CDF on log degree over the tail.
    pub ccdf_slope: Option<f64>,
    /// `1 - ccdf_slope`, the fitted power-law exponent.
    pub exponent: Option<f64>,
}

impl PowerLawFit {
    /// Goodness of fit rejected at `level`. Degenerate fits count as rejected.
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value.is_none_or(|p| p < level)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerLawReport {
    pub global: Option<PowerLawFit>,
    /// Per-block fits; `None` for blocks below the size threshold.
    pub blocks: Vec<Option<PowerLawFit>>,
    pub notices: Vec<String>,
}

/// Minimum expected count per chi-square bin.
const MIN_EXPECTED: f64 = 5.0;

/// Degrees whose complementary CDF count drops below this are left out of
/// the tail regression.
const TAIL_MIN_COUNT: u64 = 10;

/// Fits the reference law to one degree distribution.
pub fn fit_degree_law(dist: &DegreeDistribution, reference: ReferenceLaw) -> PowerLawFit {
    let v = dist.n_nodes();
    let p1 = dist.fraction(1);
    let a = reference.estimate(p1);
    let mut fit = PowerLawFit {
        n_nodes: v,
        degree_one_fraction: p1,
        reference,
        alpha_hat: a,
        chi_square: f64::INFINITY,
        dof: 0,
        p_value: None,
        ccdf_slope: None,
        exponent: None,
    };
    let (slope, _) = tail_slope(dist);
    fit.ccdf_slope = slope;
    fit.exponent = slope.map(|s| 1.0 - s);
    if !reference.valid(a) || v == 0 {
        return fit;
    }

    // bins 1, 2, ..., with the remaining mass pooled into a tail bin once
    // expected counts get small
    let vf = v as f64;
    let max_deg = *dist.counts.keys().next_back().expect("non-empty");
    let mut stat = 0.0;
    let mut bins = 0usize;
    let mut cum_p = 0.0;
    let mut cum_obs = 0u64;
    let mut k = 1u64;
    loop {
        let p = reference.ln_pmf(k, a).exp();
        if vf * p < MIN_EXPECTED || vf * (1.0 - cum_p - p) < MIN_EXPECTED || k > max_deg {
            break;
        }
        let obs = dist.count(k) as f64;
        stat += (obs - vf * p).powi(2) / (vf * p);
        bins += 1;
        cum_p += p;
        cum_obs += dist.count(k);
        k += 1;
    }
    let tail_e = vf * (1.0 - cum_p);
    let tail_o = (v - cum_obs) as f64;
    if tail_e > 0.0 {
        stat += (tail_o - tail_e).powi(2) / tail_e;
        bins += 1;
    }
    fit.chi_square = stat;
    // one degree of freedom for the total, one for the estimated exponent
    if bins >= 3 {
        fit.dof = bins - 2;
        let chi = ChiSquared::new(fit.dof as f64).expect("positive dof");
        fit.p_value = Some(1.0 - chi.cdf(stat));
    }
    fit
}

/// Log-log slope of the complementary CDF `P(D >= k)` over degrees where
/// at least [`TAIL_MIN_COUNT`] nodes remain.
fn tail_slope(dist: &DegreeDistribution) -> (Option<f64>, usize) {
    let v = dist.n_nodes() as f64;
    let mut remaining = dist.n_nodes();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&k, &n) in &dist.counts {
        if remaining < TAIL_MIN_COUNT {
            break;
        }
        xs.push((k as f64).ln());
        ys.push((remaining as f64 / v).ln());
        remaining -= n;
    }
    (ols_slope(&xs, &ys), xs.len())
}

/// Degree-law diagnostics for the whole network and, when labels are
/// given, each block's restriction. Blocks with fewer than `min_nodes`
/// non-isolated nodes are skipped with a notice.
pub fn powerlaw_diagnostic(
    network: &InteractionNetwork,
    assignment: Option<&BlockAssignment>,
    reference: ReferenceLaw,
    min_nodes: u64,
) -> Result<PowerLawReport> {
    let mut notices = Vec::new();
    let global_dist = crate::network::degree_distribution(network);
    let global = if global_dist.n_nodes() >= min_nodes {
        Some(fit_degree_law(&global_dist, reference))
    } else {
        notices.push(format!(
            "network has {} nodes, below the {min_nodes} needed for a fit",
            global_dist.n_nodes()
        ));
        None
    };
    let mut blocks = Vec::new();
    if let Some(asg) = assignment {
        asg.check_covers(network)?;
        for b in 0..asg.k() {
            let dist = restrict_to_block(network, asg, b).degree_distribution();
            if dist.n_nodes() >= min_nodes {
                blocks.push(Some(fit_degree_law(&dist, reference)));
            } else {
                notices.push(format!("block {} skipped: {} nodes", b + 1, dist.n_nodes()));
                blocks.push(None);
            }
        }
    }
    Ok(PowerLawReport {
        global,
        blocks,
        notices,
    })
}

/// Non-isolated node counts per block after the first `m` interactions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthPoint {
    pub m: usize,
    pub nodes: Vec<u64>,
}

/// Scans the network once and records node counts per block at each
/// checkpoint (ascending, each at most the network length).
pub fn growth_points(
    network: &InteractionNetwork,
    assignment: &BlockAssignment,
    checkpoints: &[usize],
) -> Result<Vec<GrowthPoint>> {
    assignment.check_covers(network)?;
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "checkpoints must be strictly ascending".into(),
        ));
    }
    if checkpoints.last().is_some_and(|&m| m > network.len()) {
        return Err(Error::InsufficientData(format!(
            "checkpoint exceeds the {} available interactions",
            network.len()
        )));
    }
    let mut seen = vec![false; network.n_nodes()];
    let mut nodes = vec![0u64; assignment.k()];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    while let Some(&&0) = next.peek() {
        out.push(GrowthPoint {
            m: 0,
            nodes: nodes.clone(),
        });
        next.next();
    }
    for (t, it) in network.interactions().iter().enumerate() {
        for v in it.members() {
            if !seen[v] {
                seen[v] = true;
                nodes[assignment.label(v)] += 1;
            }
        }
        if next.peek().is_some_and(|&&m| m == t + 1) {
            out.push(GrowthPoint {
                m: t + 1,
                nodes: nodes.clone(),
            });
            next.next();
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparsityReport {
    /// Slope of `log v_b` on `log m`; `None` where the block never appears.
    pub slopes: Vec<Option<f64>>,
    /// Mean block members per interaction touching the block.
    pub mean_arity: Vec<f64>,
    /// `slope * mean_arity > 1`.
    pub sparse: Vec<bool>,
}

/// Per-block growth exponent of the node count. Needs at least four
/// checkpoints spanning two decades of `m`.
pub fn sparsity_growth(points: &[GrowthPoint], mean_arity: &[f64]) -> Result<SparsityReport> {
    let usable: Vec<&GrowthPoint> = points.iter().filter(|p| p.m > 0).collect();
    if usable.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 checkpoints, got {}",
            usable.len()
        )));
    }
    let (lo, hi) = (usable[0].m as f64, usable[usable.len() - 1].m as f64);
    if hi / lo < 100.0 {
        return Err(Error::InsufficientData(
            "checkpoints must span at least two decades".into(),
        ));
    }
    let k = usable[0].nodes.len();
    if mean_arity.len() != k {
        return Err(Error::InvalidParams(format!("need {k} arity values")));
    }
    let slopes: Vec<Option<f64>> = (0..k)
        .map(|b| {
            let pts: Vec<(f64, f64)> = usable
                .iter()
                .filter(|p| p.nodes[b] > 0)
                .map(|p| ((p.m as f64).ln(), (p.nodes[b] as f64).ln()))
                .collect();
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            ols_slope(&x, &y)
        })
        .collect();
    let sparse = slopes
        .iter()
        .zip(mean_arity)
        .map(|(s, mu)| s.is_some_and(|s| s * mu > 1.0))
        .collect();
    Ok(SparsityReport {
        slopes,
        mean_arity: mean_arity.to_vec(),
        sparse,
    })
}

/// Mean arity of each block's restriction.
pub fn block_mean_arity(network: &InteractionNetwork, assignment: &BlockAssignment) -> Vec<f64> {
    (0..assignment.k())
        .map(|b| restrict_to_block(network, assignment, b).mean_arity())
        .collect()
}
