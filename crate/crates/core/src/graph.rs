//! Directed communication topologies.
//!
//! An edge `(src, dst)` means `src` can send to `dst`. Every node is
//! implicitly its own in- and out-neighbor; self-loops are never stored.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    // Sorted neighbor lists, each including the node itself.
    in_nbrs: Vec<Vec<usize>>,
    out_nbrs: Vec<Vec<usize>>,
}

impl DirectedGraph {
    /// Builds a graph from explicit edges. Duplicates collapse; self-loops
    /// and out-of-range indices are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut set = BTreeSet::new();
        for (src, dst) in edges {
            for index in [src, dst] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if src == dst {
                return Err(Error::SelfLoop(src));
            }
            set.insert((src, dst));
        }
        let mut in_nbrs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut out_nbrs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(src, dst) in &set {
            out_nbrs[src].push(dst);
            in_nbrs[dst].push(src);
        }
        for list in in_nbrs.iter_mut().chain(out_nbrs.iter_mut()) {
            list.sort_unstable();
        }
        Ok(DirectedGraph {
            n,
            edges: set,
            in_nbrs,
            out_nbrs,
        })
    }

    /// The directed cycle `0 → 1 → … → n-1 → 0`.
    pub fn cycle(n: usize) -> Result<Self> {
        let edges = if n > 1 {
            (0..n).map(|i| (i, (i + 1) % n)).collect()
        } else {
            Vec::new()
        };
        Self::new(n, edges)
    }

    /// A random Hamiltonian cycle plus every other ordered pair with
    /// probability `extra_edge_prob`. Strongly connected by construction.
    pub fn random_strongly_connected(n: usize, extra_edge_prob: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if !(0.0..=1.0).contains(&extra_edge_prob) {
            return Err(Error::InvalidWeights(format!(
                "edge probability {extra_edge_prob} not in [0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut edges = BTreeSet::new();
        if n > 1 {
            for w in 0..n {
                edges.insert((order[w], order[(w + 1) % n]));
            }
        }
        for src in 0..n {
            for dst in 0..n {
                if src == dst || edges.contains(&(src, dst)) {
                    continue;
                }
                if rng.random::<f64>() < extra_edge_prob {
                    edges.insert((src, dst));
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Explicit edges in lexicographic order (no self-loops).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        src == dst && src < self.n || self.edges.contains(&(src, dst))
    }

    /// Nodes that can send to `i`, including `i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> Result<&[usize]> {
        self.in_nbrs
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange { index: i, n: self.n })
    }

    /// Nodes `i` can send to, including `i`, ascending.
    pub fn out_neighbors(&self, i: usize) -> Result<&[usize]> {
        self.out_nbrs
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange { index: i, n: self.n })
    }

    /// Forward reachability from node 0 on the graph and on its reverse.
    pub fn is_strongly_connected(&self) -> bool {
        reaches_all(&self.out_nbrs) && reaches_all(&self.in_nbrs)
    }

    /// Serializes as `n <count>` followed by one `src dst` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for (src, dst) in &self.edges {
            let _ = writeln!(out, "{src} {dst}");
        }
        out
    }

    /// Parses the edge-list format. Without an `n` header the node count is
    /// the largest index plus one.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared: Option<usize> = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::EdgeList {
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "n" {
                if fields.len() != 2 {
                    return Err(err("header must be `n <count>`".into()));
                }
                if declared.is_some() || !edges.is_empty() {
                    return Err(err("`n` header must come first and appear once".into()));
                }
                let count = fields[1]
                    .parse::<usize>()
                    .map_err(|e| err(format!("bad node count: {e}")))?;
                declared = Some(count);
                continue;
            }
            if fields.len() != 2 {
                return Err(err(format!("expected `src dst`, got {line:?}")));
            }
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| err(format!("bad node index {s:?}: {e}")))
            };
            let (src, dst) = (parse(fields[0])?, parse(fields[1])?);
            if src == dst {
                return Err(err(format!("self-loop on node {src}")));
            }
            if let Some(n) = declared {
                if src.max(dst) >= n {
                    return Err(err(format!("node index {} >= n = {n}", src.max(dst))));
                }
            }
            edges.push((src, dst));
        }
        let n = match declared {
            Some(n) => n,
            None => edges
                .iter()
                .map(|&(s, d)| s.max(d) + 1)
                .max()
                .ok_or(Error::EmptyGraph)?,
        };
        Self::new(n, edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }
}

fn reaches_all(adjacency: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adjacency.len()];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == adjacency.len()
}
