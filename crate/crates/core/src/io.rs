//! File formats: interactions as JSON Lines, labels and chains as CSV.
//!
//! Every writer goes through a temporary file in the destination directory
//! that is renamed into place once complete.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::Chain;
use crate::metrics::PosteriorMembership;
use crate::network::{BlockAssignment, InteractionNetwork};
use crate::params::Propensity;

#[derive(Serialize, Deserialize)]
struct Record {
    sender: String,
    receivers: Vec<String>,
}

/// Writes `contents` produced by `fill` to `path` atomically.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn parse_interactions<R: Read>(reader: R) -> Result<InteractionNetwork> {
    let mut net = InteractionNetwork::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        net.push(&rec.sender, &rec.receivers)
            .map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
    }
    Ok(net)
}

pub fn read_interactions(path: &Path) -> Result<InteractionNetwork> {
    parse_interactions(File::open(path).map_err(|e| io_context(e, path))?)
}

pub fn write_interactions(path: &Path, network: &InteractionNetwork) -> Result<()> {
    write_atomic(path, |w| {
        for it in network.interactions() {
            let rec = Record {
                sender: network.name(it.sender).to_owned(),
                receivers: it
                    .receivers
                    .iter()
                    .map(|&r| network.name(r).to_owned())
                    .collect(),
            };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

fn io_context(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// `node,block` rows with 1-based blocks, in node-index order.
pub fn write_assignment(
    path: &Path,
    network: &InteractionNetwork,
    assignment: &BlockAssignment,
) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["node", "block"])?;
        for (i, name) in network.names().iter().enumerate() {
            csv.write_record([name.as_str(), &(assignment.label(i) + 1).to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })
}

/// Reads a `node,block` file into a name-to-label (0-based) map and the
/// number of blocks seen.
pub fn read_assignment_map(path: &Path) -> Result<(HashMap<String, usize>, usize)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut map = HashMap::new();
    let mut k = 0;
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let (node, block) = match (rec.get(0), rec.get(1)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Parse {
                    line,
                    message: "expected `node,block`".into(),
                })
            }
        };
        let b: usize = block.trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("block `{block}` is not a positive integer"),
        })?;
        if b == 0 {
            return Err(Error::Parse {
                line,
                message: "blocks are numbered from 1".into(),
            });
        }
        k = k.max(b);
        if map.insert(node.to_owned(), b - 1).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("node `{node}` listed twice"),
            });
        }
    }
    Ok((map, k))
}

/// Reads labels for `network`, with at least `min_k` blocks.
pub fn read_assignment(
    path: &Path,
    network: &InteractionNetwork,
    min_k: usize,
) -> Result<BlockAssignment> {
    let (map, k) = read_assignment_map(path)?;
    BlockAssignment::from_names(network, &map, k.max(min_k).max(1))
}

pub fn chain_header(k: usize) -> Vec<String> {
    let mut h = vec!["iter".to_string(), "log_prob".to_string()];
    h.extend((1..=k).map(|b| format!("alpha_{b}")));
    h.extend((1..=k).map(|b| format!("theta_{b}")));
    for b in 1..=k {
        h.extend((1..=k).map(|c| format!("prop_{b}_{c}")));
    }
    h
}

/// Per-iteration parameter trace.
pub fn write_chain_params(path: &Path, chain: &Chain) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(chain_header(chain.k))?;
        for t in 0..chain.len() {
            let mut row = vec![(t + 1).to_string(), fmt(chain.log_prob[t])];
            row.extend(chain.alpha[t].iter().map(|&x| fmt(x)));
            row.extend(chain.theta[t].iter().map(|&x| fmt(x)));
            row.extend(chain.prop[t].as_slice().iter().map(|&x| fmt(x)));
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    })
}

/// Iteration-by-node label matrix with 1-based labels.
pub fn write_chain_assignments(
    path: &Path,
    chain: &Chain,
    network: &InteractionNetwork,
) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["iter".to_string()];
        header.extend(network.names().iter().cloned());
        csv.write_record(&header)?;
        for (t, labels) in chain.labels.iter().enumerate() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(labels.iter().map(|&b| (b + 1).to_string()));
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    })
}

/// Sampler settings needed to rebuild a [`Chain`] from its CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub k: usize,
    pub n_nodes: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub stream: u64,
    pub omega: f64,
    pub zeta: f64,
    pub elapsed_secs: f64,
    pub prop_rejections: usize,
}

impl ChainMeta {
    pub fn of(chain: &Chain) -> Self {
        Self {
            k: chain.k,
            n_nodes: chain.n_nodes,
            burn_in: chain.burn_in,
            seed: chain.seed,
            stream: chain.stream,
            omega: chain.omega,
            zeta: chain.zeta,
            elapsed_secs: chain.elapsed_secs,
            prop_rejections: chain.prop_rejections,
        }
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{s}` is not a number"),
    })
}

/// Rebuilds a chain from its parameter trace and label matrix. Node columns
/// are matched to `network` by name.
pub fn read_chain(
    params: &Path,
    assignments: &Path,
    meta: &ChainMeta,
    network: &InteractionNetwork,
) -> Result<Chain> {
    let k = meta.k;
    let mut chain = Chain {
        k,
        n_nodes: network.n_nodes(),
        burn_in: meta.burn_in,
        seed: meta.seed,
        stream: meta.stream,
        omega: meta.omega,
        zeta: meta.zeta,
        labels: Vec::new(),
        alpha: Vec::new(),
        theta: Vec::new(),
        prop: Vec::new(),
        log_prob: Vec::new(),
        elapsed_secs: meta.elapsed_secs,
        prop_rejections: meta.prop_rejections,
    };

    let mut rdr = csv::Reader::from_path(params)?;
    if rdr.headers()?.iter().collect::<Vec<_>>() != chain_header(k) {
        return Err(Error::Parse {
            line: 1,
            message: format!("chain header does not match K = {k}"),
        });
    }
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| parse_f64(s, line))
            .collect::<Result<Vec<_>>>()?;
        chain.log_prob.push(vals[0]);
        chain.alpha.push(vals[1..1 + k].to_vec());
        chain.theta.push(vals[1 + k..1 + 2 * k].to_vec());
        let rows = vals[1 + 2 * k..].chunks(k).map(<[f64]>::to_vec).collect();
        chain
            .prop
            .push(Propensity::from_rows(rows).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?);
    }

    let mut rdr = csv::Reader::from_path(assignments)?;
    let header: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_owned).collect();
    let col_of: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(j, n)| (n.as_str(), j))
        .collect();
    let cols = network
        .names()
        .iter()
        .map(|n| {
            col_of
                .get(n.as_str())
                .copied()
                .ok_or_else(|| Error::UnassignedNode(n.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let raw: Vec<&str> = rec.iter().skip(1).collect();
        let labels = cols
            .iter()
            .map(|&j| {
                let b: u16 = raw
                    .get(j)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: "bad label".into(),
                    })?;
                if b == 0 || b as usize > k {
                    return Err(Error::Parse {
                        line,
                        message: format!("label {b} outside 1..={k}"),
                    });
                }
                Ok(b - 1)
            })
            .collect::<Result<Vec<_>>>()?;
        chain.labels.push(labels);
    }
    if chain.labels.len() != chain.alpha.len() {
        return Err(Error::Parse {
            line: 0,
            message: format!(
                "{} parameter rows but {} label rows",
                chain.alpha.len(),
                chain.labels.len()
            ),
        });
    }
    Ok(chain)
}

/// `node,p_1..p_K`.
pub fn write_membership(path: &Path, membership: &PosteriorMembership) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["node".to_string()];
        header.extend((1..=membership.k).map(|b| format!("p_{b}")));
        csv.write_record(&header)?;
        for (i, name) in membership.names.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend(membership.row(i).iter().map(|&p| fmt(p)));
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    })
}

pub fn read_membership(path: &Path) -> Result<PosteriorMembership> {
    let mut rdr = csv::Reader::from_path(path)?;
    let (mut names, mut rows) = (Vec::new(), Vec::new());
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut it = rec.iter();
        names.push(it.next().unwrap_or_default().to_owned());
        rows.push(
            it.map(|s| parse_f64(s, n + 2))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    PosteriorMembership::from_rows(names, rows)
}

/// Writes rows under a fixed header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header)?;
        for r in rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

/// Shortest representation that parses back to the same value.
pub fn fmt(x: f64) -> String {
    format!("{x}")
}
