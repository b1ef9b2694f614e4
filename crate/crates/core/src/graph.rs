//! Weighted undirected graphs with a cached Laplacian eigendecomposition and
//! unweighted hop distances.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Which graph shift operator the Laplacian field holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gso {
    /// `L = D − W`.
    #[default]
    Combinatorial,
    /// `I − D^{-1/2} W D^{-1/2}`.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// Unweighted shortest-path hop counts; unreachable pairs hold `n`.
#[derive(Debug, Clone)]
pub struct HopTable {
    n: usize,
    dist: Vec<usize>,
}

impl HopTable {
    fn from_adjacency(adj: &[Vec<usize>]) -> Self {
        let n = adj.len();
        let mut dist = vec![n; n * n];
        let mut queue = VecDeque::new();
        for src in 0..n {
            let row = &mut dist[src * n..(src + 1) * n];
            row[src] = 0;
            queue.push_back(src);
            while let Some(x) = queue.pop_front() {
                for &y in &adj[x] {
                    if row[y] == n {
                        row[y] = row[x] + 1;
                        queue.push_back(y);
                    }
                }
            }
        }
        HopTable { n, dist }
    }

    pub fn dist(&self, u: usize, v: usize) -> usize {
        self.dist[u * self.n + v]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// A connected weighted undirected graph.
///
/// Eigenvalues are stored ascending with eigenvector columns to match, so
/// column `i` of [`Graph::eigenvectors`] is the `i`-th graph frequency.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    gso: Gso,
    laplacian: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    hops: HopTable,
}

impl Graph {
    /// Build from an edge list with the combinatorial Laplacian.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        Self::with_gso(n, edges, Gso::Combinatorial)
    }

    pub fn with_gso(n: usize, edges: &[(usize, usize, f64)], gso: Gso) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("graph must have at least one vertex"));
        }
        let mut seen = HashSet::new();
        let mut weights = DMatrix::zeros(n, n);
        let mut adj = vec![Vec::new(); n];
        let mut stored = Vec::with_capacity(edges.len());
        for &(u, v, w) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::InvalidVertex { vertex: x, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidWeight { u, v, w });
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::DuplicateEdge(u, v));
            }
            weights[(u, v)] = w;
            weights[(v, u)] = w;
            adj[u].push(v);
            adj[v].push(u);
            stored.push(Edge { u, v, w });
        }

        let hops = HopTable::from_adjacency(&adj);
        let components = count_components(&hops);
        if components > 1 {
            return Err(Error::DisconnectedGraph { components });
        }

        let degrees: Vec<f64> = (0..n).map(|i| weights.row(i).sum()).collect();
        let laplacian = match gso {
            Gso::Combinatorial => {
                let mut l = -weights;
                for (i, d) in degrees.iter().enumerate() {
                    l[(i, i)] = *d;
                }
                l
            }
            Gso::Normalized => {
                let inv_sqrt: Vec<f64> = degrees
                    .iter()
                    .map(|&d| if d > 0.0 { d.sqrt().recip() } else { 0.0 })
                    .collect();
                DMatrix::from_fn(n, n, |i, j| {
                    let off = -weights[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
                    if i == j && degrees[i] > 0.0 {
                        1.0 + off
                    } else {
                        off
                    }
                })
            }
        };
        let (eigenvalues, eigenvectors) = linalg::sorted_symmetric_eigen(&laplacian)?;
        Ok(Graph { n, edges: stored, gso, laplacian, eigenvalues, eigenvectors, hops })
    }

    /// Parse the whitespace edge-list format: `u v w` per line, `#` comments,
    /// optional `n <N>` header overriding the inferred vertex count.
    pub fn parse_edge_list(text: &str, gso: Gso) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        let mut max_id = None::<usize>;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |message: String| Error::Parse { line: line_no, message };
            if fields[0] == "n" {
                if fields.len() != 2 {
                    return Err(bad("header must be `n <N>`".into()));
                }
                let n: usize =
                    fields[1].parse().map_err(|e| bad(format!("vertex count: {e}")))?;
                declared = Some(n);
                continue;
            }
            if fields.len() != 3 {
                return Err(bad(format!("expected `u v w`, got {} fields", fields.len())));
            }
            let u: usize = fields[0].parse().map_err(|e| bad(format!("vertex u: {e}")))?;
            let v: usize = fields[1].parse().map_err(|e| bad(format!("vertex v: {e}")))?;
            let w: f64 = fields[2].parse().map_err(|e| bad(format!("weight: {e}")))?;
            max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
            edges.push((u, v, w));
        }
        let n = match (declared, max_id) {
            (Some(n), _) => n,
            (None, Some(m)) => m + 1,
            (None, None) => return Err(Error::param("edge list declares no vertices")),
        };
        Self::with_gso(n, &edges, gso)
    }

    pub fn load_edge_list(path: impl AsRef<Path>, gso: Gso) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_edge_list(&text, gso)
    }

    /// Path graph `0 − 1 − … − (n−1)` with unit weights.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    /// Cycle graph with unit weights (`n ≥ 3`).
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::param("cycle needs at least 3 vertices"));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Self::from_edges(n, &edges)
    }

    /// `rows × cols` lattice with unit weights, vertex id `r·cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let id = r * cols + c;
                if c + 1 < cols {
                    edges.push((id, id + 1, 1.0));
                }
                if r + 1 < rows {
                    edges.push((id, id + cols, 1.0));
                }
            }
        }
        Self::from_edges(rows * cols, &edges)
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn gso(&self) -> Gso {
        self.gso
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.n - 1]
    }

    pub fn hops(&self) -> &HopTable {
        &self.hops
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(Error::InvalidVertex { vertex: v, n: self.n })
        }
    }

    /// Open `d`-hop neighborhood: vertices `u ≠ v` within `d` hops.
    pub fn hop_neighborhood(&self, v: usize, d: usize) -> Result<BTreeSet<usize>> {
        self.check_vertex(v)?;
        Ok((0..self.n).filter(|&u| u != v && self.hops.dist(u, v) <= d).collect())
    }

    /// Closed `d`-hop neighborhood, which also contains `v`.
    pub fn closed_hop_neighborhood(&self, v: usize, d: usize) -> Result<BTreeSet<usize>> {
        self.check_vertex(v)?;
        Ok((0..self.n).filter(|&u| self.hops.dist(u, v) <= d).collect())
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            n: self.n,
            gso: self.gso,
            edges: self.edges.iter().map(|e| EdgeDoc(e.u, e.v, e.w)).collect(),
        }
    }

    pub fn from_doc(doc: &GraphDoc) -> Result<Self> {
        let edges: Vec<_> = doc.edges.iter().map(|e| (e.0, e.1, e.2)).collect();
        Self::with_gso(doc.n, &edges, doc.gso)
    }

    /// Serialize as the edge-list text format, header included.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for e in &self.edges {
            out.push_str(&format!("{} {} {}\n", e.u, e.v, e.w));
        }
        out
    }
}

/// Embeddable JSON form of a graph with bit-exact weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub n: usize,
    #[serde(default)]
    pub gso: Gso,
    pub edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeDoc(pub usize, pub usize, #[serde(with = "crate::hexfloat::scalar")] pub f64);

fn count_components(hops: &HopTable) -> usize {
    let n = hops.len();
    let mut assigned = vec![false; n];
    let mut components = 0;
    for s in 0..n {
        if assigned[s] {
            continue;
        }
        components += 1;
        for (t, flag) in assigned.iter_mut().enumerate() {
            if hops.dist(s, t) < n {
                *flag = true;
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_laplacian_and_spectrum() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(g.laplacian(), &expected);
        assert!(g.eigenvalues()[0].abs() < 1e-14);
        assert!((g.eigenvalues()[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn single_vertex_is_connected() {
        let g = Graph::from_edges(1, &[]).unwrap();
        assert_eq!(g.laplacian(), &DMatrix::zeros(1, 1));
    }

    #[test]
    fn two_isolated_vertices_rejected() {
        assert!(matches!(
            Graph::from_edges(2, &[]),
            Err(Error::DisconnectedGraph { components: 2 })
        ));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(Graph::from_edges(2, &[(1, 1, 1.0)]), Err(Error::SelfLoop(1))));
        assert!(matches!(
            Graph::from_edges(2, &[(0, 1, 1.0), (1, 0, 2.0)]),
            Err(Error::DuplicateEdge(1, 0))
        ));
        assert!(matches!(
            Graph::from_edges(2, &[(0, 2, 1.0)]),
            Err(Error::InvalidVertex { vertex: 2, n: 2 })
        ));
        assert!(matches!(
            Graph::from_edges(2, &[(0, 1, 0.0)]),
            Err(Error::InvalidWeight { .. })
        ));
    }

    #[test]
    fn neighborhoods() {
        let p2 = Graph::path(2).unwrap();
        assert_eq!(p2.hop_neighborhood(0, 1).unwrap(), BTreeSet::from([1]));
        assert!(p2.hop_neighborhood(0, 0).unwrap().is_empty());
        assert_eq!(p2.closed_hop_neighborhood(0, 0).unwrap(), BTreeSet::from([0]));

        let p4 = Graph::path(4).unwrap();
        assert_eq!(p4.hop_neighborhood(0, 2).unwrap(), BTreeSet::from([1, 2]));
        assert!(matches!(p4.hop_neighborhood(4, 1), Err(Error::InvalidVertex { .. })));
    }

    #[test]
    fn edge_list_parsing() {
        let text = "# comment\nn 4\n0 1 1.0\n1 2 0.5\n\n2 3 2\n";
        let g = Graph::parse_edge_list(text, Gso::Combinatorial).unwrap();
        assert_eq!(g.n_vertices(), 4);
        assert_eq!(g.laplacian()[(1, 1)], 1.5);

        let inferred = Graph::parse_edge_list("0 1 1\n1 2 1\n", Gso::Combinatorial).unwrap();
        assert_eq!(inferred.n_vertices(), 3);

        let err = Graph::parse_edge_list("0 1 1\n1 x 1\n", Gso::Combinatorial).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        let round = Graph::parse_edge_list(&g.to_edge_list(), Gso::Combinatorial).unwrap();
        assert_eq!(round.laplacian(), g.laplacian());
    }

    #[test]
    fn normalized_laplacian_spectrum_bounded() {
        let g = Graph::with_gso(4, &[(0, 1, 1.0), (1, 2, 3.0), (2, 3, 1.0)], Gso::Normalized)
            .unwrap();
        assert!(g.lambda_min().abs() < 1e-12);
        assert!(g.lambda_max() <= 2.0 + 1e-12);
    }

    #[test]
    fn grid_and_cycle_generators() {
        let g = Graph::grid(2, 3).unwrap();
        assert_eq!(g.n_vertices(), 6);
        assert_eq!(g.edges().len(), 7);
        assert_eq!(g.hops().dist(0, 5), 3);
        let c = Graph::cycle(6).unwrap();
        assert_eq!(c.hops().dist(0, 3), 3);
        assert_eq!(c.hops().dist(0, 5), 1);
    }
}
