use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GrfError, Result};

/// Simple undirected graph with bitset adjacency rows and cached degrees.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UndirectedGraph {
    n: usize,
    words: usize,
    rows: Vec<u64>,
    degree: Vec<u32>,
}

impl UndirectedGraph {
    pub fn empty(n_nodes: usize) -> Self {
        assert!(n_nodes > 0, "graph needs at least one node");
        let words = n_nodes.div_ceil(64);
        Self {
            n: n_nodes,
            words,
            rows: vec![0; words * n_nodes],
            degree: vec![0; n_nodes],
        }
    }

    /// Builds a graph from an edge list; self-loops, duplicates and out-of-range nodes are rejected.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(GrfError::invalid("graph needs at least one node"));
        }
        let mut g = Self::empty(n_nodes);
        for &(i, j) in edges {
            if i == j {
                return Err(GrfError::invalid(format!("self-loop at node {i}")));
            }
            if i >= n_nodes || j >= n_nodes {
                return Err(GrfError::invalid(format!(
                    "edge ({i}, {j}) out of range for {n_nodes} nodes"
                )));
            }
            if g.has_edge(i, j) {
                return Err(GrfError::invalid(format!("duplicate edge ({i}, {j})")));
            }
            g.set_edge(i, j, true);
        }
        Ok(g)
    }

    /// Erdos-Renyi graph with edge probability `p`.
    pub fn random<R: Rng + ?Sized>(n_nodes: usize, p: f64, rng: &mut R) -> Self {
        let mut g = Self::empty(n_nodes);
        for i in 0..n_nodes {
            for j in i + 1..n_nodes {
                if rng.random::<f64>() < p {
                    g.set_edge(i, j, true);
                }
            }
        }
        g
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_dyads(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.rows[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set_edge(&mut self, i: usize, j: usize, on: bool) {
        assert!(i != j, "self-loops are not allowed");
        if self.has_edge(i, j) == on {
            return;
        }
        self.rows[i * self.words + j / 64] ^= 1 << (j % 64);
        self.rows[j * self.words + i / 64] ^= 1 << (i % 64);
        if on {
            self.degree[i] += 1;
            self.degree[j] += 1;
        } else {
            self.degree[i] -= 1;
            self.degree[j] -= 1;
        }
    }

    pub fn toggle(&mut self, i: usize, j: usize) {
        let on = self.has_edge(i, j);
        self.set_edge(i, j, !on);
    }

    #[inline]
    pub fn degree(&self, i: usize) -> u32 {
        self.degree[i]
    }

    pub fn edge_count(&self) -> usize {
        self.degree.iter().map(|&d| d as usize).sum::<usize>() / 2
    }

    #[inline]
    pub fn common_neighbors(&self, i: usize, j: usize) -> u32 {
        let a = &self.rows[i * self.words..(i + 1) * self.words];
        let b = &self.rows[j * self.words..(j + 1) * self.words];
        a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.has_edge(i, j) as u8).collect())
            .collect()
    }

    /// Graph with node `i` renamed to `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let mut g = Self::empty(self.n);
        for (i, j) in self.edges() {
            g.set_edge(perm[i], perm[j], true);
        }
        g
    }
}

/// Position of dyad `(i, j)`, `i < j`, in lexicographic dyad order.
pub fn dyad_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Inverse of [`dyad_index`].
pub fn dyad_at(n: usize, mut k: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - i - 1;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
    }
    panic!("dyad index out of range for {n} nodes");
}

/// Supported ERGM sufficient statistics, in their canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErgmStat {
    Edges,
    TwoStars,
    ThreeStars,
    Triangles,
}

impl ErgmStat {
    pub const ALL: [ErgmStat; 4] = [
        ErgmStat::Edges,
        ErgmStat::TwoStars,
        ErgmStat::ThreeStars,
        ErgmStat::Triangles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErgmStat::Edges => "edges",
            ErgmStat::TwoStars => "two-stars",
            ErgmStat::ThreeStars => "three-stars",
            ErgmStat::Triangles => "triangles",
        }
    }
}

impl fmt::Display for ErgmStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErgmStat {
    type Err = GrfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edges" => Ok(ErgmStat::Edges),
            "two-stars" | "2-stars" | "twostars" => Ok(ErgmStat::TwoStars),
            "three-stars" | "3-stars" | "threestars" => Ok(ErgmStat::ThreeStars),
            "triangles" => Ok(ErgmStat::Triangles),
            other => Err(GrfError::Config(format!("unknown ERGM statistic '{other}'"))),
        }
    }
}

/// Non-empty subset of [`ErgmStat`], always kept in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ErgmStat>", into = "Vec<ErgmStat>")]
pub struct StatSet(Vec<ErgmStat>);

impl StatSet {
    pub fn new(stats: impl IntoIterator<Item = ErgmStat>) -> Result<Self> {
        let mut v: Vec<ErgmStat> = stats.into_iter().collect();
        v.sort();
        v.dedup();
        if v.is_empty() {
            return Err(GrfError::Config("an ERGM needs at least one statistic".into()));
        }
        Ok(Self(v))
    }

    pub fn all() -> Self {
        Self(ErgmStat::ALL.to_vec())
    }

    pub fn stats(&self) -> &[ErgmStat] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<ErgmStat>> for StatSet {
    type Error = GrfError;

    fn try_from(v: Vec<ErgmStat>) -> Result<Self> {
        StatSet::new(v)
    }
}

impl From<StatSet> for Vec<ErgmStat> {
    fn from(s: StatSet) -> Self {
        s.0
    }
}

fn choose2(d: u64) -> u64 {
    d * d.saturating_sub(1) / 2
}

fn choose3(d: u64) -> u64 {
    if d < 3 {
        0
    } else {
        d * (d - 1) * (d - 2) / 6
    }
}

/// Edges, k-stars (`sum_i C(deg i, k)`) and triangles, restricted to `stats`.
pub fn ergm_suffstats(graph: &UndirectedGraph, stats: &StatSet) -> Vec<f64> {
    stats
        .stats()
        .iter()
        .map(|stat| match stat {
            ErgmStat::Edges => graph.edge_count() as f64,
            ErgmStat::TwoStars => graph.degree.iter().map(|&d| choose2(d as u64)).sum::<u64>() as f64,
            ErgmStat::ThreeStars => graph.degree.iter().map(|&d| choose3(d as u64)).sum::<u64>() as f64,
            ErgmStat::Triangles => {
                let mut t = 0u64;
                for (i, j) in graph.edges() {
                    t += graph.common_neighbors(i, j) as u64;
                }
                (t / 3) as f64
            }
        })
        .collect()
}

/// Change in the statistics from switching dyad `(i, j)` on, with the dyad itself treated as off.
#[inline]
pub(crate) fn ergm_change_on(graph: &UndirectedGraph, i: usize, j: usize, stats: &StatSet, out: &mut [f64]) {
    let present = graph.has_edge(i, j) as u64;
    let di = graph.degree(i) as u64 - present;
    let dj = graph.degree(j) as u64 - present;
    for (slot, stat) in out.iter_mut().zip(stats.stats()) {
        *slot = match stat {
            ErgmStat::Edges => 1.0,
            ErgmStat::TwoStars => (di + dj) as f64,
            ErgmStat::ThreeStars => (choose2(di) + choose2(dj)) as f64,
            ErgmStat::Triangles => graph.common_neighbors(i, j) as f64,
        };
    }
}
