use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use bvcm::consistency::{
    default_cutoff, labeling_quality, misclassification_bound, restricted_misclassification,
    CutoffRate, LabelingQuality, Weighting,
};
use bvcm::generator::{simulate as run_simulation, ArityLaw, GeneratorConfig, GeneratorMode};
use bvcm::gibbs::{run_gibbs, Chain, GibbsConfig, Init};
use bvcm::io::{
    fmt as num, read_assignment, read_assignment_map, read_interactions, read_membership,
    write_assignment, write_chain_assignments, write_chain_params, write_interactions, write_json,
    write_membership, write_table, ChainMeta,
};
use bvcm::likelihood::marginal_log_likelihood;
use bvcm::metrics::{
    block_mean_arity, cross_entropy_loss, growth_points, hellinger_distance, powerlaw_diagnostic,
    sparsity_growth, standardized_l2, CrossEntropy, Hellinger, PosteriorMembership, ReferenceLaw,
};
use bvcm::{BlockAssignment, InteractionNetwork, ModelParams, Propensity};

use crate::{
    BoundArgs, EvalArgs, FitArgs, InitArg, Mode, Reference, SamplerArgs, SelectKArgs, SimulateArgs,
    StatsArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(bvcm::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<bvcm::Error> for CliError {
    fn from(e: bvcm::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(e) if e.is_data() => 3,
            CliError::Core(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Serialize)]
struct Manifest<'a, A: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    /// Effective arguments, config-file values included.
    argv: &'a [String],
    args: &'a A,
    result: R,
}

fn write_manifest<A: Serialize, R: Serialize>(
    path: &Path,
    command: &'static str,
    argv: &[String],
    args: &A,
    result: R,
) -> Result<()> {
    let m = Manifest {
        tool: "bvcm",
        version: env!("CARGO_PKG_VERSION"),
        command,
        argv,
        args,
        result,
    };
    write_json(path, &m)?;
    Ok(())
}

fn read_network(path: &Path) -> Result<InteractionNetwork> {
    Ok(read_interactions(path).map_err(|e| e.context(path.display().to_string()))?)
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)?;
    Ok(())
}

fn read_prop_file(path: &Path) -> Result<Propensity> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(bvcm::Error::from)?;
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(bvcm::Error::from)?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| bvcm::Error::Parse {
                    line: n + 1,
                    message: format!("`{s}` is not a number"),
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Propensity::from_rows(rows)?)
}

#[derive(Serialize)]
struct SimulateResult {
    interactions: usize,
    nodes: usize,
    block_sizes: Vec<usize>,
    realized: ModelParams,
    sticks: Option<Vec<Vec<f64>>>,
    warnings: Vec<String>,
}

pub fn simulate(a: &SimulateArgs, argv: &[String]) -> Result<()> {
    let k = a.k;
    if k == 0 {
        return usage("--k must be at least 1");
    }
    for (name, len) in [("--alpha", a.alpha.len()), ("--theta", a.theta.len())] {
        if len != k {
            return usage(format!("{name} has {len} values but --k is {k}"));
        }
    }
    let mut params = ModelParams::new(a.omega, a.zeta, a.alpha.clone(), a.theta.clone())?;
    if let Some(pi) = &a.pi {
        if pi.len() != k {
            return usage(format!("--pi has {} values but --k is {k}", pi.len()));
        }
        params = params.with_pi(pi.clone())?;
    }
    let prop = match (&a.prop_diag, &a.prop_file) {
        (Some(d), _) => Some(Propensity::with_diagonal(k, *d)?),
        (None, Some(p)) => Some(read_prop_file(p)?),
        (None, None) => None,
    };
    if let Some(p) = prop {
        if p.k() != k {
            return usage(format!(
                "propensity matrix is {}x{} but --k is {k}",
                p.k(),
                p.k()
            ));
        }
        params = params.with_prop(p)?;
    }
    let arity = match &a.arity_probs {
        Some(w) => ArityLaw::Categorical(w.clone()),
        None => ArityLaw::Fixed(a.arity),
    };
    let mut cfg = GeneratorConfig::new(params, a.m, a.seed);
    cfg.arity = arity;
    cfg.truncation = a.truncation;
    cfg.mode = match a.mode {
        Mode::Sequential => GeneratorMode::Sequential,
        Mode::ConditionalIid => GeneratorMode::ConditionalIid,
    };
    let sim = run_simulation(&cfg)?;
    for w in &sim.warnings {
        warn!("{w}");
    }
    write_interactions(&a.out, &sim.network)?;
    if let Some(t) = &a.truth_out {
        write_assignment(t, &sim.network, &sim.truth)?;
    }
    let manifest = a
        .manifest
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".manifest.json"));
    write_manifest(
        &manifest,
        "simulate",
        argv,
        a,
        SimulateResult {
            interactions: sim.network.len(),
            nodes: sim.network.n_nodes(),
            block_sizes: sim.truth.block_sizes(),
            realized: sim.realized,
            sticks: sim.sticks,
            warnings: sim.warnings,
        },
    )?;
    info!(
        "wrote {} interactions over {} nodes to {}",
        sim.network.len(),
        sim.network.n_nodes(),
        a.out.display()
    );
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn gibbs_config(s: &SamplerArgs, k: usize, net: &InteractionNetwork) -> Result<GibbsConfig> {
    if k == 0 {
        return usage("K must be at least 1");
    }
    if s.alpha_prior.len() != 2 || s.theta_prior.len() != 2 {
        return usage("--alpha-prior and --theta-prior take two values each");
    }
    let burn_in = s.burnin.unwrap_or(s.iters / 5);
    if s.iters == 0 || burn_in >= s.iters {
        return usage(format!(
            "need --iters > --burnin (got {} and {burn_in})",
            s.iters
        ));
    }
    let init = match (&s.init_labels, s.init) {
        (Some(p), _) => {
            let asg = read_assignment(p, net, k)?;
            if asg.k() > k {
                return usage(format!(
                    "{} uses {} blocks but K is {k}",
                    p.display(),
                    asg.k()
                ));
            }
            Init::Provided(asg.labels().to_vec())
        }
        (None, InitArg::Random) => Init::Random,
        (None, InitArg::DegreeMajority) => Init::DegreeMajority,
    };
    let cfg = GibbsConfig {
        k,
        iterations: s.iters,
        burn_in,
        seed: s.seed,
        stream: 0,
        omega: s.omega,
        zeta: s.zeta,
        alpha_prior: (s.alpha_prior[0], s.alpha_prior[1]),
        theta_prior: (s.theta_prior[0], s.theta_prior[1]),
        symmetric_prop: s.symmetric_prop,
        init,
        init_alpha: s.init_alpha,
        init_theta: s.init_theta,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct FitResult {
    chain: ChainMeta,
    mean_alpha: Vec<f64>,
    mean_theta: Vec<f64>,
    mean_prop: Vec<f64>,
    marginal_log_likelihood: f64,
    block_sizes: Vec<usize>,
}

pub fn fit(a: &FitArgs, argv: &[String]) -> Result<()> {
    let net = read_network(&a.input)?;
    let cfg = gibbs_config(&a.sampler, a.k, &net)?;
    let chain = run_gibbs(&net, &cfg)?;
    if chain.prop_rejections > 0 {
        warn!(
            "symmetric propensity draw kept the previous matrix {} times",
            chain.prop_rejections
        );
    }
    out_dir(&a.out)?;
    write_chain_params(&a.out.join("chain.csv"), &chain)?;
    write_chain_assignments(&a.out.join("assignments.csv"), &chain, &net)?;
    let membership = PosteriorMembership::from_chain(&chain, &net)?;
    write_membership(&a.out.join("membership.csv"), &membership)?;
    let hard = membership.hard_labels()?;
    write_assignment(&a.out.join("labels.csv"), &net, &hard)?;
    let score = marginal_log_likelihood(&net, &chain)?;
    write_manifest(
        &a.out.join("manifest.json"),
        "fit",
        argv,
        a,
        FitResult {
            chain: ChainMeta::of(&chain),
            mean_alpha: chain.mean_alpha()?,
            mean_theta: chain.mean_theta()?,
            mean_prop: chain.mean_prop()?,
            marginal_log_likelihood: score,
            block_sizes: hard.block_sizes(),
        },
    )?;
    info!(
        "{} iterations in {:.1}s, marginal score {score:.3}",
        chain.len(),
        chain.elapsed_secs
    );
    Ok(())
}

#[derive(Serialize)]
struct Score {
    k: usize,
    replicate: usize,
    seed: u64,
    score: f64,
}

#[derive(Serialize)]
struct SelectKResult {
    scores: Vec<Score>,
    best_k: Vec<usize>,
}

pub fn select_k(a: &SelectKArgs, argv: &[String]) -> Result<()> {
    if a.kmin == 0 || a.kmin > a.kmax {
        return usage(format!(
            "need 1 <= --kmin <= --kmax (got {} and {})",
            a.kmin, a.kmax
        ));
    }
    if a.replicates == 0 {
        return usage("--replicates must be at least 1");
    }
    let net = read_network(&a.input)?;
    let mut jobs = Vec::new();
    for r in 0..a.replicates {
        for k in a.kmin..=a.kmax {
            let mut cfg = gibbs_config(&a.sampler, k, &net)?;
            cfg.seed = a.sampler.seed.wrapping_add(r as u64);
            jobs.push((k, r, cfg));
        }
    }
    let scores: Vec<Score> = jobs
        .par_iter()
        .map(|(k, r, cfg)| {
            let chain: Chain = run_gibbs(&net, cfg)?;
            let score = marginal_log_likelihood(&net, &chain)?;
            info!("K={k} replicate {r}: {score:.3}");
            Ok(Score {
                k: *k,
                replicate: *r,
                seed: cfg.seed,
                score,
            })
        })
        .collect::<Result<_>>()?;
    let best_k: Vec<usize> = (0..a.replicates)
        .map(|r| {
            scores
                .iter()
                .filter(|s| s.replicate == r)
                .max_by(|x, y| x.score.total_cmp(&y.score))
                .map(|s| s.k)
                .expect("non-empty grid")
        })
        .collect();

    out_dir(&a.out)?;
    let rows: Vec<Vec<String>> = scores
        .iter()
        .map(|s| {
            vec![
                s.k.to_string(),
                s.replicate.to_string(),
                s.seed.to_string(),
                num(s.score),
            ]
        })
        .collect();
    write_table(
        &a.out.join("scores.csv"),
        &["k", "replicate", "seed", "score"],
        &rows,
    )?;
    let summary: Vec<Vec<String>> = best_k
        .iter()
        .enumerate()
        .map(|(r, k)| vec![r.to_string(), k.to_string()])
        .collect();
    write_table(
        &a.out.join("summary.csv"),
        &["replicate", "best_k"],
        &summary,
    )?;
    for (r, k) in best_k.iter().enumerate() {
        println!("replicate {r}: best K = {k}");
    }
    write_manifest(
        &a.out.join("manifest.json"),
        "select-k",
        argv,
        a,
        SelectKResult { scores, best_k },
    )?;
    Ok(())
}

/// Labels from `map` for each of `names`, as one assignment.
fn labels_for(names: &[String], map: &HashMap<String, usize>, k: usize) -> Result<BlockAssignment> {
    let labels = names
        .iter()
        .map(|n| {
            map.get(n)
                .copied()
                .ok_or_else(|| bvcm::Error::UnassignedNode(n.clone()))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(BlockAssignment::new(labels, k)?)
}

/// `membership`'s hard labels reindexed to the network's node order.
fn hard_for_network(
    membership: &PosteriorMembership,
    net: &InteractionNetwork,
) -> Result<BlockAssignment> {
    let hard = membership.hard_labels()?;
    let map: HashMap<String, usize> = membership
        .names
        .iter()
        .cloned()
        .zip(hard.labels().iter().copied())
        .collect();
    labels_for(net.names(), &map, membership.k)
}

#[derive(Serialize, Default)]
struct EvalResult {
    n_nodes: usize,
    standardized_l2: Option<f64>,
    cross_entropy: Option<CrossEntropy>,
    hellinger: Option<Hellinger>,
    restricted: Option<Vec<CutoffRate>>,
}

fn default_cutoffs(net: &InteractionNetwork) -> Vec<u64> {
    let max_deg = net.node_degrees().into_iter().max().unwrap_or(1);
    let mut c: Vec<u64> = std::iter::successors(Some(1u64), |x| Some(x * 2))
        .take_while(|&x| x <= max_deg)
        .collect();
    c.push(default_cutoff(net).max(1));
    c.sort_unstable();
    c.dedup();
    c
}

pub fn eval(a: &EvalArgs, argv: &[String]) -> Result<()> {
    let net = read_network(&a.input)?;
    let membership = match (&a.fit, &a.membership) {
        (Some(dir), _) => read_membership(&dir.join("membership.csv"))?,
        (None, Some(p)) => read_membership(p)?,
        (None, None) => return usage("give --fit or --membership"),
    };
    if a.truth.is_none() && a.compare.is_none() {
        return usage("nothing to evaluate: give --truth and/or --compare");
    }
    let mut res = EvalResult {
        n_nodes: membership.n_nodes(),
        ..Default::default()
    };
    if let Some(t) = &a.truth {
        let (map, k) = read_assignment_map(t)?;
        let truth = labels_for(&membership.names, &map, k.max(1))?;
        if membership.k == 2 && truth.k() <= 2 {
            res.standardized_l2 = Some(standardized_l2(&membership, &truth)?);
        }
        res.cross_entropy = Some(cross_entropy_loss(&membership, &truth)?);
        let truth_net = labels_for(net.names(), &map, k.max(1))?;
        let hard = hard_for_network(&membership, &net)?;
        let cutoffs = match &a.cutoffs {
            Some(c) => {
                let mut c = c.clone();
                c.sort_unstable();
                c.dedup();
                c
            }
            None => default_cutoffs(&net),
        };
        let curve = restricted_misclassification(&net, &hard, &truth_net, &cutoffs)?;
        out_dir(&a.out)?;
        let rows: Vec<Vec<String>> = curve
            .iter()
            .map(|c| {
                vec![
                    c.cutoff.to_string(),
                    c.n_nodes.to_string(),
                    c.rate.map(num).unwrap_or_default(),
                ]
            })
            .collect();
        write_table(
            &a.out.join("restricted.csv"),
            &["cutoff", "n_nodes", "rate"],
            &rows,
        )?;
        res.restricted = Some(curve);
    }
    if let Some(c) = &a.compare {
        let other = read_membership(c)?;
        res.hellinger = Some(hellinger_distance(&membership, &other)?);
    }
    out_dir(&a.out)?;
    if let Some(l2) = res.standardized_l2 {
        println!("standardized L2: {l2:.6}");
    }
    if let Some(ce) = &res.cross_entropy {
        println!(
            "cross-entropy: {:.6} ({:.6} per node)",
            ce.total, ce.per_node
        );
    }
    if let Some(h) = &res.hellinger {
        println!(
            "Hellinger distance: {:.6} over {} shared nodes",
            h.distance, h.n_common
        );
    }
    write_manifest(&a.out.join("metrics.json"), "eval", argv, a, res)?;
    Ok(())
}

#[derive(Serialize)]
struct BoundResult {
    mu_min: f64,
    p_out: f64,
    terms: u64,
    e_p_out: f64,
    quality: Option<LabelingQuality>,
}

pub fn bound(a: &BoundArgs, argv: &[String]) -> Result<()> {
    let (g1, g2, quality) = match (a.gamma1, a.gamma2, &a.input) {
        (Some(g1), Some(g2), _) => (g1, g2, None),
        (_, _, Some(input)) => {
            let net = read_network(input)?;
            let truth = read_assignment(a.truth.as_ref().expect("clap requires --truth"), &net, 1)?;
            let labels = read_assignment(
                a.labels.as_ref().expect("clap requires --labels"),
                &net,
                truth.k(),
            )?;
            let weighting = if a.degree_weighted {
                Weighting::Degree
            } else {
                Weighting::Nodes
            };
            let q = labeling_quality(&net, &labels, &truth, a.a, weighting)?;
            (q.gamma_min, q.gamma_max, Some(q))
        }
        _ => return usage("give --gamma1/--gamma2 or --input/--labels/--truth"),
    };
    let b = misclassification_bound(a.alpha, a.a, g1, g2, a.tol)?;
    let res = BoundResult {
        mu_min: b.mu_min,
        p_out: b.p_out,
        terms: b.terms,
        e_p_out: std::f64::consts::E * b.p_out,
        quality,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&res).map_err(bvcm::Error::from)?
    );
    if let Some(out) = &a.out {
        write_manifest(out, "bound", argv, a, res)?;
    }
    Ok(())
}

/// About eight log-spaced prefix lengths ending at `m`, or fewer when `m`
/// is small.
fn default_checkpoints(m: usize) -> Vec<usize> {
    if m < 10 {
        return Vec::new();
    }
    let lo = (m as f64 / 1000.0).max(10.0).ln();
    let hi = (m as f64).ln();
    let mut c: Vec<usize> = (0..8)
        .map(|i| (lo + (hi - lo) * i as f64 / 7.0).exp().round() as usize)
        .map(|x| x.clamp(1, m))
        .collect();
    c.dedup();
    *c.last_mut().expect("non-empty") = m;
    c
}

pub fn stats(a: &StatsArgs, argv: &[String]) -> Result<()> {
    let net = read_network(&a.input)?;
    let asg = match &a.labels {
        Some(p) => read_assignment(p, &net, 1)?,
        None => BlockAssignment::single_block(net.n_nodes()),
    };
    let reference = match a.reference {
        Reference::YuleSimon => ReferenceLaw::YuleSimon,
        Reference::Sibuya => ReferenceLaw::Sibuya,
    };
    let powerlaw = powerlaw_diagnostic(
        &net,
        a.labels.as_ref().map(|_| &asg),
        reference,
        a.min_nodes,
    )?;
    for n in &powerlaw.notices {
        warn!("{n}");
    }
    let mut checkpoints = a
        .checkpoints
        .clone()
        .unwrap_or_else(|| default_checkpoints(net.len()));
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let points = growth_points(&net, &asg, &checkpoints)?;
    let arity = block_mean_arity(&net, &asg);
    let sparsity = match sparsity_growth(&points, &arity) {
        Ok(s) => Some(s),
        Err(e) if e.is_data() => {
            warn!("no growth regression: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };

    out_dir(&a.out)?;
    let mut header = vec!["m".to_string()];
    header.extend((1..=asg.k()).map(|b| format!("nodes_{b}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            std::iter::once(p.m.to_string())
                .chain(p.nodes.iter().map(u64::to_string))
                .collect()
        })
        .collect();
    write_table(&a.out.join("growth.csv"), &header, &rows)?;

    if let Some(g) = &powerlaw.global {
        println!(
            "degree-1 fraction {:.4}, fitted {:.4}, tail exponent {}",
            g.degree_one_fraction,
            g.alpha_hat,
            g.exponent.map_or("n/a".into(), |e| format!("{e:.3}"))
        );
    }
    if let Some(s) = &sparsity {
        for (b, slope) in s.slopes.iter().enumerate() {
            if let Some(x) = slope {
                println!(
                    "block {}: growth slope {x:.4}, sparse {}",
                    b + 1,
                    s.sparse[b]
                );
            }
        }
    }
    #[derive(Serialize)]
    struct StatsResult {
        powerlaw: bvcm::metrics::PowerLawReport,
        sparsity: Option<bvcm::metrics::SparsityReport>,
    }
    write_manifest(
        &a.out.join("stats.json"),
        "stats",
        argv,
        a,
        StatsResult { powerlaw, sparsity },
    )?;
    Ok(())
}
