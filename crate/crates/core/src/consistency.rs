//! Degree-majority relabeling and the misclassification bound that comes
//! with it, plus misclassification restricted to high-degree nodes.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::Chain;
use crate::metrics::{best_permutation, PosteriorMembership};
use crate::network::{BlockAssignment, InteractionNetwork};
use crate::stats::compute_stats;

/// Upper bound on series terms before giving up on convergence.
const MAX_SERIES_TERMS: u64 = 200_000_000;

/// Relabels every node by the majority block among its partners under the
/// current labeling, counted with multiplicity. All nodes read the old
/// labeling. Ties keep the current label.
///
/// The rule is stated for two blocks; with more it takes the arg-max.
pub fn degree_majority_update(
    network: &InteractionNetwork,
    labeling: &BlockAssignment,
) -> Result<BlockAssignment> {
    let stats = compute_stats(network, labeling)?;
    let k = stats.k;
    let labels = (0..stats.n_nodes())
        .map(|i| {
            let row = &stats.node_block[i * k..(i + 1) * k];
            let cur = stats.labels[i];
            let best = *row.iter().max().expect("k >= 1");
            if row[cur] == best {
                cur
            } else {
                row.iter().position(|&c| c == best).expect("max present")
            }
        })
        .collect();
    BlockAssignment::new(labels, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MisclassificationBound {
    pub mu_min: f64,
    pub p_out: f64,
    /// Series terms summed.
    pub terms: u64,
}

/// `2 a (gamma_min + gamma_max - 1) - (2 gamma_max - 1)`.
pub fn mu_min(a: f64, gamma1: f64, gamma2: f64) -> f64 {
    let (lo, hi) = (gamma1.min(gamma2), gamma1.max(gamma2));
    2.0 * a * (lo + hi - 1.0) - (2.0 * hi - 1.0)
}

/// Limit of the probability that degree-majority mislabels a node:
/// `sum_{d >= 1} alpha B(d, alpha + 1) exp(-d mu_min^2 / 4)`.
///
/// Summation stops once the current term and the geometric bound on the
/// remaining tail are both below `tol`.
pub fn misclassification_bound(
    alpha: f64,
    a: f64,
    gamma1: f64,
    gamma2: f64,
    tol: f64,
) -> Result<MisclassificationBound> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParams(format!(
            "alpha = {alpha} not in (0,1)"
        )));
    }
    if !(a > 0.5 && a < 1.0) {
        return Err(Error::InvalidParams(format!(
            "within-block propensity a = {a} not in (1/2, 1)"
        )));
    }
    for g in [gamma1, gamma2] {
        if !(g > 0.5 && g <= 1.0) {
            return Err(Error::InvalidParams(format!("gamma = {g} not in (1/2, 1]")));
        }
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParams("tolerance must be positive".into()));
    }
    let mu = mu_min(a, gamma1, gamma2);
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMargin(mu));
    }
    let r = (-mu * mu / 4.0).exp();
    let tail_factor = r / (1.0 - r);
    // alpha B(1, alpha + 1) = alpha / (alpha + 1)
    let mut beta = 1.0 / (alpha + 1.0);
    let mut decay = r;
    let mut sum = 0.0;
    let mut d = 1u64;
    loop {
        let term = alpha * beta * decay;
        sum += term;
        if term < tol && term * tail_factor < tol {
            break;
        }
        if d >= MAX_SERIES_TERMS {
            return Err(Error::InsufficientData(format!(
                "bound series did not reach tolerance {tol} within {MAX_SERIES_TERMS} terms"
            )));
        }
        // B(d + 1, alpha + 1) = B(d, alpha + 1) d / (d + alpha + 1)
        beta *= d as f64 / (d as f64 + alpha + 1.0);
        decay *= r;
        d += 1;
    }
    Ok(MisclassificationBound {
        mu_min: mu,
        p_out: sum,
        terms: d,
    })
}

/// Node weighting used for the correct-fraction estimate `gamma_b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Nodes,
    /// Each node weighted by its degree, a stand-in for the unobserved
    /// vertex frequencies.
    Degree,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelingQuality {
    pub weighting: Weighting,
    /// Correct fraction within each true block, after optimal relabeling.
    pub gamma: Vec<f64>,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub mu_min: f64,
}

/// Per-block correct fractions of `labeling` against `truth`, and the
/// resulting margin for within-block propensity `a`.
pub fn labeling_quality(
    network: &InteractionNetwork,
    labeling: &BlockAssignment,
    truth: &BlockAssignment,
    a: f64,
    weighting: Weighting,
) -> Result<LabelingQuality> {
    let k = truth.k().max(labeling.k());
    let n = network.n_nodes();
    labeling.check_covers(network)?;
    truth.check_covers(network)?;
    let deg = network.node_degrees();
    let w = |i: usize| match weighting {
        Weighting::Nodes => 1.0,
        Weighting::Degree => deg[i] as f64,
    };
    // agree[b][c]: weight of true-b nodes labeled c
    let mut agree = vec![vec![0.0; k]; k];
    let mut totals = vec![0.0; k];
    for i in 0..n {
        agree[truth.label(i)][labeling.label(i)] += w(i);
        totals[truth.label(i)] += w(i);
    }
    let cost: Vec<Vec<f64>> = agree
        .iter()
        .map(|row| row.iter().map(|x| -x).collect())
        .collect();
    let (perm, _) = best_permutation(&cost);
    let gamma: Vec<f64> = (0..k)
        .filter(|&b| totals[b] > 0.0)
        .map(|b| agree[b][perm[b]] / totals[b])
        .collect();
    if gamma.is_empty() {
        return Err(Error::InsufficientData("no labeled nodes".into()));
    }
    let gamma_min = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma_max = gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LabelingQuality {
        weighting,
        mu_min: mu_min(a, gamma_min, gamma_max),
        gamma,
        gamma_min,
        gamma_max,
    })
}

/// Copy of `truth` with each node independently moved to a different
/// (uniformly chosen) block with probability `1 - gamma`.
pub fn perturb_labels<R: Rng + ?Sized>(
    truth: &BlockAssignment,
    gamma: f64,
    rng: &mut R,
) -> BlockAssignment {
    let k = truth.k();
    let labels = truth
        .labels()
        .iter()
        .map(|&b| {
            if k > 1 && rng.random::<f64>() >= gamma {
                let other = rng.random_range(0..k - 1);
                if other >= b {
                    other + 1
                } else {
                    other
                }
            } else {
                b
            }
        })
        .collect();
    BlockAssignment::new(labels, k).expect("labels unchanged in range")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutoffRate {
    pub cutoff: u64,
    /// Nodes with degree at least `cutoff`.
    pub n_nodes: usize,
    /// `None` when no node reaches the cutoff.
    pub rate: Option<f64>,
}

/// Misclassification rate among nodes of degree at least each cutoff,
/// minimized over block relabelings separately at every cutoff.
pub fn restricted_misclassification(
    network: &InteractionNetwork,
    hard: &BlockAssignment,
    truth: &BlockAssignment,
    cutoffs: &[u64],
) -> Result<Vec<CutoffRate>> {
    if cutoffs.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig(
            "degree cutoffs must be ascending".into(),
        ));
    }
    hard.check_covers(network)?;
    truth.check_covers(network)?;
    let k = hard.k().max(truth.k());
    let deg = network.node_degrees();
    Ok(cutoffs
        .iter()
        .map(|&cutoff| {
            let mut confusion = vec![vec![0.0; k]; k];
            let mut count = 0usize;
            for (i, &d) in deg.iter().enumerate() {
                if d >= cutoff {
                    confusion[truth.label(i)][hard.label(i)] -= 1.0;
                    count += 1;
                }
            }
            let rate = (count > 0).then(|| {
                let (_, neg_correct) = best_permutation(&confusion);
                1.0 - (-neg_correct) / count as f64
            });
            CutoffRate {
                cutoff,
                n_nodes: count,
                rate,
            }
        })
        .collect())
}

/// Same as [`restricted_misclassification`] with hard labels taken as the
/// majority vote over the chain's post-burn-in samples.
pub fn restricted_misclassification_chain(
    network: &InteractionNetwork,
    chain: &Chain,
    truth: &BlockAssignment,
    cutoffs: &[u64],
) -> Result<Vec<CutoffRate>> {
    let hard = PosteriorMembership::from_chain(chain, network)?.hard_labels()?;
    restricted_misclassification(network, &hard, truth, cutoffs)
}

/// Default degree cutoff `log m`.
pub fn default_cutoff(network: &InteractionNetwork) -> u64 {
    (network.len().max(1) as f64).ln().round() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ln_beta;

    #[test]
    fn majority_follows_neighbours_and_keeps_ties() {
        let net = InteractionNetwork::from_named(&[
            ("a", vec!["b"]),
            ("a", vec!["c"]),
            ("d", vec!["e"]),
            ("f", vec!["e"]),
        ])
        .unwrap();
        // a b c d e f
        let lab = BlockAssignment::new(vec![1, 0, 0, 0, 1, 1], 2).unwrap();
        let out = degree_majority_update(&net, &lab).unwrap();
        assert_eq!(out.label(0), 0); // both partners in block 0
        assert_eq!(out.label(4), 1); // d in 0, f in 1: tie keeps 1
        assert_eq!(out.label(1), 1); // reads a's old label
    }

    #[test]
    fn margin_worked_value() {
        let b = misclassification_bound(0.5, 0.9, 0.9, 0.9, 1e-12).unwrap();
        assert!((b.mu_min - 0.64).abs() < 1e-15);
        assert!(b.p_out > 0.0 && b.p_out < 1.0);
    }

    #[test]
    fn margin_symmetry_and_monotonicity() {
        let x = misclassification_bound(0.4, 0.85, 0.95, 0.8, 1e-12).unwrap();
        let y = misclassification_bound(0.4, 0.85, 0.8, 0.95, 1e-12).unwrap();
        assert_eq!(x, y);
        let mut last = (f64::NEG_INFINITY, f64::INFINITY);
        for a in [0.8, 0.85, 0.9, 0.95, 0.99] {
            let b = misclassification_bound(0.5, a, 0.9, 0.9, 1e-12).unwrap();
            assert!(b.mu_min > last.0 && b.p_out < last.1);
            last = (b.mu_min, b.p_out);
        }
    }

    #[test]
    fn series_against_direct_sum() {
        let (alpha, mu) = (0.3f64, 0.5f64);
        let direct: f64 = (1..400_000u64)
            .map(|d| (alpha.ln() + ln_beta(d as f64, alpha + 1.0) - d as f64 * mu * mu / 4.0).exp())
            .sum();
        // a = 0.75 with perfect labels gives mu = 0.5
        let b = misclassification_bound(alpha, 0.75, 1.0, 1.0, 1e-13).unwrap();
        assert!((b.mu_min - mu).abs() < 1e-15);
        assert!((b.p_out - direct).abs() < 1e-9, "{} vs {direct}", b.p_out);
    }

    #[test]
    fn small_margin_approaches_total_mass() {
        // 2 * 0.51 * (0.51 + 0.51 - 1) - 0.02 is tiny but positive
        let b = misclassification_bound(0.5, 0.99, 0.52, 0.52, 1e-10).unwrap();
        assert!(b.mu_min > 0.0 && b.mu_min < 0.05);
        assert!(b.p_out > 0.9 && b.p_out < 1.0, "{}", b.p_out);
    }

    #[test]
    fn rejects_non_positive_margin() {
        let err = misclassification_bound(0.5, 0.7, 0.6, 1.0, 1e-10).unwrap_err();
        assert!(matches!(err, Error::NonPositiveMargin(m) if m <= 0.0));
        assert!(misclassification_bound(0.5, 0.9, 0.4, 0.9, 1e-10).is_err());
    }

    #[test]
    fn restricted_rates_and_label_switching() {
        let net = InteractionNetwork::from_named(&[
            ("a", vec!["b"]),
            ("a", vec!["c"]),
            ("a", vec!["d"]),
            ("b", vec!["c"]),
        ])
        .unwrap();
        let truth = BlockAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        let flipped = truth.permuted(&[1, 0]);
        let r = restricted_misclassification(&net, &flipped, &truth, &[0, 1, 2, 10]).unwrap();
        assert_eq!(r[0].rate, Some(0.0));
        assert_eq!(r[1].rate, Some(0.0));
        assert_eq!(r[3].rate, None);
        assert_eq!(r[3].n_nodes, 0);
        assert!(restricted_misclassification(&net, &truth, &truth, &[2, 1]).is_err());
    }

    #[test]
    fn quality_of_perfect_labeling() {
        let net =
            InteractionNetwork::from_named(&[("a", vec!["b"]), ("c", vec!["d", "a"])]).unwrap();
        let truth = BlockAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        for w in [Weighting::Nodes, Weighting::Degree] {
            let q = labeling_quality(&net, &truth.permuted(&[1, 0]), &truth, 0.9, w).unwrap();
            assert_eq!(q.gamma, vec![1.0, 1.0]);
            assert!((q.mu_min - 0.8).abs() < 1e-12);
        }
    }
}
