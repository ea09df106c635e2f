//! Graph objects for the total-variation penalty: oriented incidence matrix,
//! Laplacian, incidence pseudo-inverse and the projector onto the Laplacian
//! null space.
//!
//! Node indices are 0-based throughout the library; file formats use 1-based
//! indices and convert at the boundary.

use std::collections::BTreeSet;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{l21_norm, spd_inverse, Mat, SymMatrix, DEFAULT_RANK_TOL};

/// An undirected, unweighted graph on `p` nodes with its derived matrices.
///
/// Edge `(k, k')` is stored with `k < k'` and oriented `+1` at `k`, `-1` at `k'`.
#[derive(Clone, Debug)]
pub struct GraphStructure {
    p: usize,
    edges: Vec<(usize, usize)>,
    incidence: Mat,
    incidence_pinv: Mat,
    laplacian: SymMatrix,
    projector: SymMatrix,
    components: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralConstants {
    /// Smallest non-zero Laplacian eigenvalue; `None` for an edgeless graph.
    pub kappa2: Option<f64>,
    pub sigma_max_laplacian: f64,
    /// Largest column norm of the incidence pseudo-inverse.
    pub rho_gamma: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

impl GraphStructure {
    /// Builds the graph and every derived matrix. Edges may be given in either
    /// orientation; self-loops, out-of-range endpoints and duplicates are rejected.
    pub fn new(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= p || b >= p {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has an endpoint outside 0..{p}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    e.0, e.1
                )));
            }
            normalized.push(e);
        }

        let m = normalized.len();
        let mut incidence = Mat::zeros(m, p);
        let mut uf = UnionFind::new(p);
        for (row, &(a, b)) in normalized.iter().enumerate() {
            incidence[(row, a)] = 1.0;
            incidence[(row, b)] = -1.0;
            uf.union(a, b);
        }

        let mut components: Vec<Vec<usize>> = Vec::new();
        let mut root_slot = vec![usize::MAX; p];
        for node in 0..p {
            let root = uf.find(node);
            if root_slot[root] == usize::MAX {
                root_slot[root] = components.len();
                components.push(Vec::new());
            }
            components[root_slot[root]].push(node);
        }

        let mut projector = Mat::zeros(p, p);
        for comp in &components {
            let w = 1.0 / comp.len() as f64;
            for &i in comp {
                for &j in comp {
                    projector[(i, j)] = w;
                }
            }
        }

        let laplacian = SymMatrix::symmetrize(incidence.transpose() * &incidence)?;
        // Gamma^+ = L^+ Gamma' with L^+ = (L + Pi)^-1 - Pi: Pi is the exact
        // projector onto null(L), so L + Pi is positive definite and no rank
        // decision (or iterative SVD) is needed.
        let incidence_pinv = if m == 0 {
            Mat::zeros(p, 0)
        } else {
            let shifted = laplacian.as_mat() + &projector;
            let inv = spd_inverse(&shifted)
                .ok_or_else(|| Error::InvalidGraph("shifted Laplacian is not positive definite".into()))?;
            (inv - &projector) * incidence.transpose()
        };

        Ok(Self {
            p,
            edges: normalized,
            incidence,
            incidence_pinv,
            laplacian,
            projector: SymMatrix::new(projector)?,
            components,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// The `m x p` oriented incidence matrix.
    pub fn incidence(&self) -> &Mat {
        &self.incidence
    }

    /// The `p x m` pseudo-inverse of the incidence matrix.
    pub fn incidence_pinv(&self) -> &Mat {
        &self.incidence_pinv
    }

    pub fn laplacian(&self) -> &SymMatrix {
        &self.laplacian
    }

    /// Orthogonal projector onto the Laplacian null space (componentwise averaging).
    pub fn projector(&self) -> &SymMatrix {
        &self.projector
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Forests have a full-row-rank incidence matrix.
    pub fn is_forest(&self) -> bool {
        self.edges.len() + self.components.len() == self.p
    }

    /// `p x n_c` 0/1 membership matrix.
    pub fn component_indicator(&self) -> Mat {
        let mut a = Mat::zeros(self.p, self.components.len());
        for (c, comp) in self.components.iter().enumerate() {
            for &i in comp {
                a[(i, c)] = 1.0;
            }
        }
        a
    }

    pub fn max_degree(&self) -> usize {
        let mut deg = vec![0usize; self.p];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }

    /// Total-variation norm `||Gamma B||_21`.
    pub fn tv_norm(&self, b: &Mat) -> f64 {
        assert_eq!(b.nrows(), self.p, "tv_norm row count must equal node count");
        if self.edges.is_empty() {
            return 0.0;
        }
        l21_norm(&(&self.incidence * b))
    }

    pub fn spectral_constants(&self) -> SpectralConstants {
        let eig = self.laplacian.eigen();
        let sigma_max = eig.largest().max(0.0);
        let cut = DEFAULT_RANK_TOL.max(1e-9) * sigma_max.max(1.0);
        let kappa2 = eig
            .values
            .iter()
            .copied()
            .filter(|&l| l > cut)
            .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.min(l))));
        let rho_gamma = self
            .incidence_pinv
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        SpectralConstants {
            kappa2,
            sigma_max_laplacian: sigma_max,
            rho_gamma,
        }
    }
}

/// 4-neighbour lattice with row-major node numbering `r * cols + c`.
pub fn grid_graph(rows: usize, cols: usize) -> Result<GraphStructure> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput(format!(
            "grid dimensions must be positive, got {rows}x{cols}"
        )));
    }
    let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            if c + 1 < cols {
                edges.push((k, k + 1));
            }
            if r + 1 < rows {
                edges.push((k, k + cols));
            }
        }
    }
    GraphStructure::new(rows * cols, &edges)
}

/// Symmetrized k-nearest-neighbour graph under Euclidean distance; ties go to
/// the lower node index.
pub fn knn_graph(coords: &[Vec<f64>], k: usize) -> Result<GraphStructure> {
    let n = coords.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidInput(format!(
            "k must lie in 1..{n} for {n} points, got {k}"
        )));
    }
    let dim = coords[0].len();
    if coords.iter().any(|c| c.len() != dim) {
        return Err(Error::DimensionMismatch(
            "all coordinates must share one dimension".into(),
        ));
    }
    let mut edges = BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2: f64 = coords[i]
                    .iter()
                    .zip(&coords[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    let edges: Vec<_> = edges.into_iter().collect();
    GraphStructure::new(n, &edges)
}

/// Degree vector, handy for tests and diagnostics.
pub fn degrees(g: &GraphStructure) -> DVector<f64> {
    DVector::from_iterator(g.p(), (0..g.p()).map(|i| g.laplacian()[(i, i)]))
}
