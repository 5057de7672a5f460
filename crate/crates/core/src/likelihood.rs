//! Exact log-probabilities of an observed network.
//!
//! The sequential form integrates the block initiation frequencies and the
//! propensity rows against their Dirichlet priors; both Dirichlet factors are
//! written for labeled blocks, so a block seen for the first time contributes
//! `omega` (resp. `zeta`) like any other block. This is the probability the
//! sequential generator assigns to the exact outcome it produced.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::Chain;
use crate::network::{BlockAssignment, InteractionNetwork};
use crate::numeric::log_ascending_factorial;
use crate::params::{validate_block_params, Propensity};
use crate::stats::{compute_stats, SufficientStats};

/// Log-probability split into its three factors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogProb {
    /// Which block each interaction is initiated from.
    pub initiation: f64,
    /// Which vertices appear inside each block.
    pub membership: f64,
    /// Which block each commentator is drawn from, given the sender's block.
    pub propensity: f64,
}

impl LogProb {
    pub fn value(&self) -> f64 {
        self.initiation + self.membership + self.propensity
    }
}

/// `log([x]_1^n)` for a Dirichlet-multinomial block of counts.
fn log_dirichlet_multinomial(counts: &[u64], conc: f64) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    let mut acc = -log_ascending_factorial(counts.len() as f64 * conc, 1.0, total)?;
    for &c in counts {
        acc += log_ascending_factorial(conc, 1.0, c)?;
    }
    Ok(acc)
}

/// Pitman-Yor exchangeable partition probability of one block.
///
/// `degree_counts` yields `(degree, number of nodes with that degree)`.
pub fn block_log_eppf<I>(alpha: f64, theta: f64, degree_counts: I) -> Result<f64>
where
    I: IntoIterator<Item = (u64, u64)>,
{
    let mut v = 0u64;
    let mut m = 0u64;
    let mut acc = 0.0;
    for (d, n) in degree_counts {
        if d == 0 || n == 0 {
            continue;
        }
        v += n;
        m += d * n;
        acc += n as f64 * log_ascending_factorial(1.0 - alpha, 1.0, d - 1)?;
    }
    if v == 0 {
        return Ok(0.0);
    }
    acc += log_ascending_factorial(theta + alpha, alpha, v - 1)?;
    acc -= log_ascending_factorial(theta + 1.0, 1.0, m - 1)?;
    Ok(acc)
}

fn membership_term(stats: &SufficientStats, alpha: &[f64], theta: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for b in 0..stats.k {
        if stats.block_nodes[b] == 0 {
            if stats.initiated[b] > 0 || (0..stats.k).any(|c| stats.pair(c, b) > 0) {
                return Err(Error::EmptyBlock(b));
            }
            continue;
        }
        acc += block_log_eppf(
            alpha[b],
            theta[b],
            stats.degree_counts[b].iter().map(|(&d, &n)| (d, n)),
        )?;
    }
    Ok(acc)
}

fn check_params(k: usize, alpha: &[f64], theta: &[f64]) -> Result<()> {
    if alpha.len() != k || theta.len() != k {
        return Err(Error::InvalidParams(format!(
            "expected {k} block parameters, got {} alpha and {} theta",
            alpha.len(),
            theta.len()
        )));
    }
    validate_block_params(alpha, theta)
}

/// Sequential log-probability from precomputed counts.
pub fn log_prob_from_stats(
    stats: &SufficientStats,
    omega: f64,
    zeta: f64,
    alpha: &[f64],
    theta: &[f64],
) -> Result<LogProb> {
    check_params(stats.k, alpha, theta)?;
    if !(omega > 0.0) || !(zeta > 0.0) {
        return Err(Error::InvalidParams(
            "omega and zeta must be positive".into(),
        ));
    }
    let k = stats.k;
    let initiation = log_dirichlet_multinomial(&stats.initiated, omega)?;
    let mut propensity = 0.0;
    for b in 0..k {
        propensity += log_dirichlet_multinomial(&stats.pair[b * k..(b + 1) * k], zeta)?;
    }
    let membership = membership_term(stats, alpha, theta)?;
    Ok(LogProb {
        initiation,
        membership,
        propensity,
    })
}

/// Log-probability of the network with block frequencies and propensity
/// rows integrated out.
pub fn log_prob_sequential(
    network: &InteractionNetwork,
    assignment: &BlockAssignment,
    omega: f64,
    zeta: f64,
    alpha: &[f64],
    theta: &[f64],
) -> Result<LogProb> {
    let stats = compute_stats(network, assignment)?;
    log_prob_from_stats(&stats, omega, zeta, alpha, theta)
}

/// Why a conditional log-probability is `-inf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZeroMass {
    /// Interactions start in a block with zero initiation frequency.
    Initiation { block: usize },
    /// Commentators are drawn along a zero-propensity block pair.
    Propensity { from: usize, to: usize },
}

/// Conditional log-probability; impossible data is flagged, not folded into
/// a raw `-inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConditionalLogProb {
    Finite(f64),
    Impossible(ZeroMass),
}

impl ConditionalLogProb {
    pub fn value(&self) -> f64 {
        match self {
            ConditionalLogProb::Finite(v) => *v,
            ConditionalLogProb::Impossible(_) => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ConditionalLogProb::Finite(_))
    }
}

/// Log-probability given the block frequencies `pi` and the propensity matrix.
pub fn log_prob_conditional(
    network: &InteractionNetwork,
    assignment: &BlockAssignment,
    pi: &[f64],
    prop: &Propensity,
    alpha: &[f64],
    theta: &[f64],
) -> Result<ConditionalLogProb> {
    let stats = compute_stats(network, assignment)?;
    log_prob_conditional_from_stats(&stats, pi, prop, alpha, theta)
}

pub fn log_prob_conditional_from_stats(
    stats: &SufficientStats,
    pi: &[f64],
    prop: &Propensity,
    alpha: &[f64],
    theta: &[f64],
) -> Result<ConditionalLogProb> {
    let k = stats.k;
    check_params(k, alpha, theta)?;
    if pi.len() != k || prop.k() != k {
        return Err(Error::InvalidParams(format!(
            "pi and propensity must have K = {k} blocks"
        )));
    }
    if pi.iter().any(|&p| !(p >= 0.0)) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams("pi must lie on the simplex".into()));
    }
    prop.validate()?;
    let mut acc = 0.0;
    for b in 0..k {
        let l = stats.initiated[b];
        if l > 0 {
            if pi[b] == 0.0 {
                return Ok(ConditionalLogProb::Impossible(ZeroMass::Initiation {
                    block: b,
                }));
            }
            acc += l as f64 * pi[b].ln();
        }
        for c in 0..k {
            let d = stats.pair(b, c);
            if d > 0 {
                let p = prop.get(b, c);
                if p == 0.0 {
                    return Ok(ConditionalLogProb::Impossible(ZeroMass::Propensity {
                        from: b,
                        to: c,
                    }));
                }
                acc += d as f64 * p.ln();
            }
        }
    }
    acc += membership_term(stats, alpha, theta)?;
    Ok(ConditionalLogProb::Finite(acc))
}

/// Model-selection score for the number of blocks: the posterior mean of the
/// complete-data sequential log-probability over post-burn-in samples, with
/// `omega`, `zeta` at the chain's prior values and each sample's own
/// `alpha`, `theta`.
pub fn marginal_log_likelihood(network: &InteractionNetwork, chain: &Chain) -> Result<f64> {
    let kept: Vec<usize> = (chain.burn_in..chain.len()).collect();
    if kept.is_empty() {
        return Err(Error::EmptyChain);
    }
    let scores = kept
        .par_iter()
        .map(|&t| {
            let asg = chain.assignment(t)?;
            log_prob_sequential(
                network,
                &asg,
                chain.omega,
                chain.zeta,
                &chain.alpha[t],
                &chain.theta[t],
            )
            .map(|lp| lp.value())
        })
        .collect::<Result<Vec<f64>>>()?;
    // left-to-right so the result does not depend on the thread count
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Interaction;
    use crate::numeric::sample_dirichlet;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Multiplies the generator's step probabilities for each sender block,
    /// sender, receiver block and receiver in order.
    fn sequential_oracle(
        net: &InteractionNetwork,
        labels: &[usize],
        k: usize,
        omega: f64,
        zeta: f64,
        alpha: &[f64],
        theta: &[f64],
    ) -> f64 {
        let n = net.n_nodes();
        let mut init = vec![0f64; k];
        let mut pair = vec![vec![0f64; k]; k];
        let mut deg = vec![0f64; n];
        let mut appear = vec![0f64; k];
        let mut distinct = vec![0f64; k];
        let mut p = 1.0;
        let vertex = |i: usize,
                      p: &mut f64,
                      appear: &mut Vec<f64>,
                      distinct: &mut Vec<f64>,
                      deg: &mut Vec<f64>| {
            let b = labels[i];
            let denom = theta[b] + appear[b];
            if deg[i] == 0.0 {
                *p *= if appear[b] == 0.0 {
                    1.0
                } else {
                    (theta[b] + alpha[b] * distinct[b]) / denom
                };
                distinct[b] += 1.0;
            } else {
                *p *= (deg[i] - alpha[b]) / denom;
            }
            deg[i] += 1.0;
            appear[b] += 1.0;
        };
        for it in net.interactions() {
            let bs = labels[it.sender];
            let tot: f64 = init.iter().sum::<f64>() + k as f64 * omega;
            p *= (init[bs] + omega) / tot;
            init[bs] += 1.0;
            vertex(it.sender, &mut p, &mut appear, &mut distinct, &mut deg);
            for &r in &it.receivers {
                let br = labels[r];
                let tot: f64 = pair[bs].iter().sum::<f64>() + k as f64 * zeta;
                p *= (pair[bs][br] + zeta) / tot;
                pair[bs][br] += 1.0;
                vertex(r, &mut p, &mut appear, &mut distinct, &mut deg);
            }
        }
        p.ln()
    }

    #[test]
    fn single_interaction_membership() {
        let net = InteractionNetwork::from_named(&[("s", vec!["r"])]).unwrap();
        let lp = log_prob_sequential(
            &net,
            &BlockAssignment::single_block(2),
            1.0,
            1.0,
            &[0.5],
            &[1.0],
        )
        .unwrap();
        assert!((lp.membership - (1.5f64 / 2.0).ln()).abs() < 1e-14);
        assert_eq!(lp.initiation, 0.0);
        assert_eq!(lp.propensity, 0.0);
    }

    #[test]
    fn three_interactions_match_oracle() {
        let net = InteractionNetwork::from_named(&[
            ("a", vec!["b", "c"]),
            ("c", vec!["a"]),
            ("d", vec!["b", "a", "e"]),
        ])
        .unwrap();
        let n = net.n_nodes();
        let alpha = [0.3, 0.7];
        let theta = [2.0, -0.2];
        for code in 0..(1u32 << n) {
            let labels: Vec<usize> = (0..n).map(|i| ((code >> i) & 1) as usize).collect();
            let asg = BlockAssignment::new(labels.clone(), 2).unwrap();
            let got = log_prob_sequential(&net, &asg, 0.7, 1.3, &alpha, &theta)
                .unwrap()
                .value();
            let want = sequential_oracle(&net, &labels, 2, 0.7, 1.3, &alpha, &theta);
            assert!((got - want).abs() < 1e-9, "{labels:?}: {got} vs {want}");
        }
    }

    #[test]
    fn unused_block_needs_no_nodes() {
        let net = InteractionNetwork::from_named(&[("a", vec!["b"])]).unwrap();
        let asg = BlockAssignment::new(vec![0, 0], 3).unwrap();
        let lp = log_prob_sequential(&net, &asg, 1.0, 1.0, &[0.5; 3], &[1.0; 3]).unwrap();
        assert!(lp.value().is_finite());
        assert!(log_prob_sequential(&net, &asg, 1.0, 1.0, &[0.5; 2], &[1.0; 2]).is_err());
        assert!(log_prob_sequential(&net, &asg, 1.0, 1.0, &[1.5; 3], &[1.0; 3]).is_err());
    }

    #[test]
    fn uniform_conditional() {
        let net = InteractionNetwork::from_named(&[
            ("a", vec!["b", "c"]),
            ("b", vec!["d"]),
            ("c", vec!["a"]),
        ])
        .unwrap();
        let asg = BlockAssignment::new(vec![0, 1, 0, 1], 2).unwrap();
        let (alpha, theta) = ([0.4, 0.6], [1.0, 3.0]);
        let got = log_prob_conditional(
            &net,
            &asg,
            &[0.5, 0.5],
            &Propensity::uniform(2),
            &alpha,
            &theta,
        )
        .unwrap()
        .value();
        let eppf = log_prob_sequential(&net, &asg, 1.0, 1.0, &alpha, &theta)
            .unwrap()
            .membership;
        let want = -3.0 * 2f64.ln() - 4.0 * 2f64.ln() + eppf;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn zero_propensity_is_flagged() {
        let net = InteractionNetwork::from_named(&[("a", vec!["b"])]).unwrap();
        let asg = BlockAssignment::new(vec![0, 1], 2).unwrap();
        let prop = Propensity::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let r = log_prob_conditional(&net, &asg, &[0.5, 0.5], &prop, &[0.5; 2], &[1.0; 2]).unwrap();
        assert_eq!(
            r,
            ConditionalLogProb::Impossible(ZeroMass::Propensity { from: 0, to: 1 })
        );
        assert_eq!(r.value(), f64::NEG_INFINITY);
    }

    #[test]
    fn monte_carlo_marginalization() {
        let net =
            InteractionNetwork::from_named(&[("a", vec!["b"]), ("b", vec!["c", "a"])]).unwrap();
        let asg = BlockAssignment::new(vec![0, 1, 1], 2).unwrap();
        let (omega, zeta) = (1.5, 0.8);
        let (alpha, theta) = ([0.5, 0.5], [1.0, 1.0]);
        let exact = log_prob_sequential(&net, &asg, omega, zeta, &alpha, &theta)
            .unwrap()
            .value();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 200_000;
        let mut vals = Vec::with_capacity(draws);
        for _ in 0..draws {
            let pi = sample_dirichlet(&mut rng, &[omega; 2]);
            let rows = (0..2)
                .map(|_| sample_dirichlet(&mut rng, &[zeta; 2]))
                .collect();
            let prop = Propensity::from_rows(rows).unwrap_or_else(|_| Propensity::uniform(2));
            let pi_sum: f64 = pi.iter().sum();
            let pi: Vec<f64> = pi.iter().map(|x| x / pi_sum).collect();
            vals.push(
                log_prob_conditional(&net, &asg, &pi, &prop, &alpha, &theta)
                    .unwrap()
                    .value()
                    .exp(),
            );
        }
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / draws as f64).sqrt();
        let se = sd / (draws as f64).sqrt();
        assert!(
            (mean - exact.exp()).abs() < 4.0 * se,
            "{mean} vs {} (se {se})",
            exact.exp()
        );
    }

    type Case = (Vec<(usize, Vec<usize>)>, Vec<usize>, Vec<usize>);

    fn arb_case() -> impl Strategy<Value = Case> {
        (2usize..6).prop_flat_map(|n| {
            (
                prop::collection::vec((0..n, prop::collection::vec(0..n, 1..3)), 1..6),
                prop::collection::vec(0usize..2, n),
            )
                .prop_flat_map(|(raw, labels)| {
                    let m = raw.len();
                    (
                        Just(raw),
                        Just(labels),
                        Just((0..m).collect::<Vec<_>>()).prop_shuffle(),
                    )
                })
        })
    }

    fn build(
        raw: &[(usize, Vec<usize>)],
        labels: &[usize],
    ) -> (InteractionNetwork, BlockAssignment) {
        let mut order = Vec::new();
        for (s, r) in raw {
            for v in std::iter::once(s).chain(r) {
                if !order.contains(v) {
                    order.push(*v);
                }
            }
        }
        let pos = |v: &usize| order.iter().position(|x| x == v).unwrap();
        let its = raw
            .iter()
            .map(|(s, r)| Interaction {
                sender: pos(s),
                receivers: r.iter().map(pos).collect(),
            })
            .collect();
        let names = order.iter().map(|v| format!("n{v}")).collect();
        let net = InteractionNetwork::from_indexed(names, its).unwrap();
        let asg = BlockAssignment::new(order.iter().map(|&v| labels[v]).collect(), 2).unwrap();
        (net, asg)
    }

    proptest! {
        #[test]
        fn matches_step_oracle_and_is_exchangeable((raw, labels, order) in arb_case()) {
            let (net, asg) = build(&raw, &labels);
            let (alpha, theta) = ([0.35, 0.8], [0.5, -0.3]);
            let lp = log_prob_sequential(&net, &asg, 1.0, 2.0, &alpha, &theta).unwrap();
            let want = sequential_oracle(&net, asg.labels(), 2, 1.0, 2.0, &alpha, &theta);
            prop_assert!((lp.value() - want).abs() < 1e-9);
            prop_assert!(lp.value() <= 1e-12);
            let shuffled = log_prob_sequential(&net.reordered(&order), &asg, 1.0, 2.0, &alpha, &theta).unwrap();
            prop_assert!((shuffled.value() - lp.value()).abs() < 1e-9);
            // swapping the two block labels along with their parameters
            let swapped = asg.permuted(&[1, 0]);
            let sw = log_prob_sequential(&net, &swapped, 1.0, 2.0, &[alpha[1], alpha[0]], &[theta[1], theta[0]]).unwrap();
            prop_assert!((sw.value() - lp.value()).abs() < 1e-9);
        }
    }
}
