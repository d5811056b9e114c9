//! Region adjacency graphs with positive symmetric edge weights.
//!
//! A graph is built once, validated, and then treated as immutable: the
//! constructors reject self-loops, duplicate pairs, and non-positive
//! weights, so downstream code can rely on symmetry without re-checking.
//! Connected components are computed at construction and cached.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One areal unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    /// Stable identifier used to join against dataset rows.
    pub id: String,
    /// Human-readable name (defaults to the id).
    pub name: String,
    /// Index of the source geometry feature, when the graph came from
    /// polygon contiguity.
    pub geometry_ref: Option<usize>,
}

impl Region {
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        Region { name: id.clone(), id, geometry_ref: None }
    }
}

/// Undirected weighted adjacency structure over a fixed region set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph<F> {
    regions: Vec<Region>,
    neighbors: Vec<Vec<usize>>,
    weights: Vec<Vec<F>>,
    component_ids: Vec<usize>,
    n_components: usize,
}

impl<F: Scalar> AdjacencyGraph<F> {
    /// Builds a graph with unit weights from an undirected edge list.
    pub fn from_edges(n_regions: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let weighted: Vec<(usize, usize, F)> =
            edges.iter().map(|&(i, j)| (i, j, F::one())).collect();
        Self::from_weighted_edges(n_regions, &weighted)
    }

    /// Builds a graph from an undirected weighted edge list; regions are
    /// labeled by index.
    pub fn from_weighted_edges(n_regions: usize, edges: &[(usize, usize, F)]) -> Result<Self> {
        let regions = (0..n_regions).map(|i| Region::new(i.to_string())).collect();
        Self::with_regions(regions, edges)
    }

    /// Builds a graph over explicit regions from an undirected weighted
    /// edge list. Each unordered pair may appear at most once, self-loops
    /// are rejected, and weights must be finite and positive.
    pub fn with_regions(regions: Vec<Region>, edges: &[(usize, usize, F)]) -> Result<Self> {
        let n = regions.len();
        let mut seen_ids = BTreeSet::new();
        for r in &regions {
            if !seen_ids.insert(r.id.as_str()) {
                return Err(Error::Graph(format!("duplicate region id '{}'", r.id)));
            }
        }

        let mut neighbors = vec![Vec::new(); n];
        let mut weights: Vec<Vec<F>> = vec![Vec::new(); n];
        let mut seen_pairs = BTreeSet::new();
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Graph(format!(
                    "edge ({i}, {j}) out of range for {n} regions"
                )));
            }
            if i == j {
                return Err(Error::Graph(format!("self-loop on region {i}")));
            }
            if !w.is_finite() || w <= F::zero() {
                return Err(Error::Graph(format!(
                    "edge ({i}, {j}) has non-positive weight {w}"
                )));
            }
            let key = (i.min(j), i.max(j));
            if !seen_pairs.insert(key) {
                return Err(Error::Graph(format!("duplicate edge ({}, {})", key.0, key.1)));
            }
            neighbors[i].push(j);
            weights[i].push(w);
            neighbors[j].push(i);
            weights[j].push(w);
        }

        for i in 0..n {
            let mut order: Vec<usize> = (0..neighbors[i].len()).collect();
            order.sort_by_key(|&k| neighbors[i][k]);
            neighbors[i] = order.iter().map(|&k| neighbors[i][k]).collect();
            weights[i] = order.iter().map(|&k| weights[i][k]).collect();
        }

        let (component_ids, n_components) = label_components(&neighbors);
        Ok(AdjacencyGraph { regions, neighbors, weights, component_ids, n_components })
    }

    /// Regular `rows x cols` lattice with 4-neighbour (rook) adjacency and
    /// unit weights. Region `(r, c)` gets index `r * cols + c`.
    pub fn lattice(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Graph("lattice dimensions must be positive".into()));
        }
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        Self::from_edges(rows * cols, &edges)
    }

    /// Reads an edge list CSV with header `i,j` or `i,j,w` (zero-based
    /// region indices). The region count is one past the largest index
    /// unless `n_regions` is given.
    pub fn from_edge_csv(path: &Path, n_regions: Option<usize>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let has_weight = match headers.len() {
            2 => false,
            3 => true,
            k => {
                return Err(Error::Graph(format!(
                    "edge csv must have columns i,j or i,j,w, found {k} columns"
                )))
            }
        };
        let mut edges: Vec<(usize, usize, F)> = Vec::new();
        let mut max_index = 0usize;
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parse_idx = |field: &str| -> Result<usize> {
                field.trim().parse::<usize>().map_err(|_| {
                    Error::Graph(format!("edge csv row {}: bad index '{field}'", line + 2))
                })
            };
            let i = parse_idx(&record[0])?;
            let j = parse_idx(&record[1])?;
            let w = if has_weight {
                F::parse_str(&record[2]).ok_or_else(|| {
                    Error::Graph(format!("edge csv row {}: bad weight '{}'", line + 2, &record[2]))
                })?
            } else {
                F::one()
            };
            max_index = max_index.max(i).max(j);
            edges.push((i, j, w));
        }
        let n = match n_regions {
            Some(n) => n,
            None if edges.is_empty() => {
                return Err(Error::Graph(
                    "edge csv has no rows; pass an explicit region count".into(),
                ))
            }
            None => max_index + 1,
        };
        Self::from_weighted_edges(n, &edges)
    }

    /// Writes the edge list as CSV with header `i,j,w`, edges sorted with
    /// `i < j`.
    pub fn to_edge_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "i,j,w")?;
        for (i, j, w) in self.edges() {
            writeln!(out, "{i},{j},{w}")?;
        }
        Ok(())
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, i: usize) -> &Region {
        &self.regions[i]
    }

    /// Neighbour indices of region `i`, sorted ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Edge weights parallel to `neighbors(i)`.
    pub fn weights(&self, i: usize) -> &[F] {
        &self.weights[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Sum of weights incident to region `i`.
    pub fn weight_sum(&self, i: usize) -> F {
        self.weights[i].iter().copied().sum()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Unique undirected edges as `(i, j, w)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, F)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for i in 0..self.n_regions() {
            for (k, &j) in self.neighbors[i].iter().enumerate() {
                if i < j {
                    out.push((i, j, self.weights[i][k]));
                }
            }
        }
        out
    }

    /// Connected-component id of region `i` (ids are dense, ordered by the
    /// smallest member index).
    pub fn component_id(&self, i: usize) -> usize {
        self.component_ids[i]
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    /// Partition of region indices into connected components.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.n_components];
        for (i, &c) in self.component_ids.iter().enumerate() {
            parts[c].push(i);
        }
        parts
    }

    /// Regions with no neighbours.
    pub fn isolated_regions(&self) -> Vec<usize> {
        (0..self.n_regions()).filter(|&i| self.neighbors[i].is_empty()).collect()
    }

    /// Hex digest over the region count and the sorted weighted edge list.
    /// Two graphs with the same topology and weights share a fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("n={}\n", self.n_regions()).as_bytes());
        for (i, j, w) in self.edges() {
            hasher.update(format!("{i},{j},{w}\n").as_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn label_components(neighbors: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let n = neighbors.len();
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if ids[start] != usize::MAX {
            continue;
        }
        ids[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if ids[j] == usize::MAX {
                    ids[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    (ids, next)
}
