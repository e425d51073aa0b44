//! Network topologies and Metropolis mixing matrices.
//!
//! A [`MixingMatrix`] always carries its spectrum. Matrices that break the
//! mixing assumptions (disconnected graphs, `lambda_2 = 1`) can still be
//! represented so that negative tests can exercise them, but
//! [`MixingMatrix::require_valid`] refuses them and every algorithm calls it.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::rng::{substream, StreamTag};
use crate::{Error, Result};

/// Maximum number of Erdős–Rényi draws before giving up on connectivity.
pub const ER_MAX_ATTEMPTS: usize = 100;

const STOCHASTIC_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    Ring,
    Star,
    Complete,
    ErdosRenyi,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 4] = [
        TopologyKind::Ring,
        TopologyKind::Star,
        TopologyKind::Complete,
        TopologyKind::ErdosRenyi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Ring => "ring",
            TopologyKind::Star => "star",
            TopologyKind::Complete => "complete",
            TopologyKind::ErdosRenyi => "erdos_renyi",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ring" => Ok(TopologyKind::Ring),
            "star" => Ok(TopologyKind::Star),
            "complete" | "fc" | "full" => Ok(TopologyKind::Complete),
            "erdos_renyi" | "er" | "rand" => Ok(TopologyKind::ErdosRenyi),
            other => Err(Error::InvalidInput(format!("unknown topology `{other}`"))),
        }
    }
}

/// Undirected simple graph on `0..n`. Edges are stored once as `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub kind: TopologyKind,
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub er_prob: Option<f64>,
    pub seed: u64,
}

impl Topology {
    /// Builds a graph from an explicit edge list without checking connectivity.
    ///
    /// Used for negative tests; the `kind` is informational only.
    pub fn from_edges(kind: TopologyKind, n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!("edge ({a},{b}) out of range for n={n}")));
            }
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop at node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Topology {
            kind,
            n,
            edges: set.into_iter().collect(),
            er_prob: None,
            seed: 0,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }
}

pub fn build_topology(
    kind: TopologyKind,
    n: usize,
    er_prob: Option<f64>,
    seed: u64,
) -> Result<Topology> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("topology needs n >= 2, got {n}")));
    }
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Ring => {
            let mut set = BTreeSet::new();
            for i in 0..n {
                let j = (i + 1) % n;
                set.insert((i.min(j), i.max(j)));
            }
            set.into_iter().collect()
        }
        TopologyKind::Star => (1..n).map(|j| (0, j)).collect(),
        TopologyKind::Complete => (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect(),
        TopologyKind::ErdosRenyi => {
            let p = er_prob.ok_or_else(|| {
                Error::InvalidInput("erdos_renyi topology requires er_prob".into())
            })?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidInput(format!("er_prob must lie in (0,1], got {p}")));
            }
            return sample_erdos_renyi(n, p, seed);
        }
    };
    Ok(Topology {
        kind,
        n,
        edges,
        er_prob: None,
        seed,
    })
}

fn sample_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Topology> {
    for attempt in 0..ER_MAX_ATTEMPTS {
        let mut rng = substream(seed, StreamTag::Topology, &[attempt as u64]);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let topo = Topology {
            kind: TopologyKind::ErdosRenyi,
            n,
            edges,
            er_prob: Some(p),
            seed,
        };
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(Error::Unconnectable {
        attempts: ER_MAX_ATTEMPTS,
    })
}

/// Eigen-data of a symmetric mixing matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// Sorted in descending order.
    pub eigenvalues: Vec<f64>,
    pub lambda2: f64,
    pub lambda_n: f64,
    /// `1 - max(|lambda_2|, |lambda_n|)`.
    pub spectral_gap: f64,
    /// False when the gap is not positive or `lambda_1 != 1`.
    pub assumption_ok: bool,
}

/// Computes the spectrum of a symmetric matrix with the self-adjoint solver.
///
/// For a 1x1 matrix there are no disagreement modes; `lambda2` and
/// `lambda_n` are reported as 0 and the gap as 1.
pub fn spectrum(w: &DMatrix<f64>) -> Result<Spectrum> {
    let n = w.nrows();
    if n == 0 || w.ncols() != n {
        return Err(Error::InvalidMatrix(format!(
            "expected a non-empty square matrix, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let asym = (w - w.transpose()).amax();
    if asym > SYMMETRY_TOL {
        return Err(Error::InvalidMatrix(format!("matrix is not symmetric (max |W - W^T| = {asym:e})")));
    }
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(w.clone()).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    if n == 1 {
        let ok = (eigenvalues[0] - 1.0).abs() <= SYMMETRY_TOL;
        return Ok(Spectrum {
            eigenvalues,
            lambda2: 0.0,
            lambda_n: 0.0,
            spectral_gap: 1.0,
            assumption_ok: ok,
        });
    }
    let lambda1 = eigenvalues[0];
    let lambda2 = eigenvalues[1];
    let lambda_n = eigenvalues[n - 1];
    let spectral_gap = 1.0 - lambda2.abs().max(lambda_n.abs());
    let assumption_ok = (lambda1 - 1.0).abs() <= SYMMETRY_TOL
        && lambda2 < 1.0 - SYMMETRY_TOL
        && lambda_n > -1.0 + SYMMETRY_TOL
        && spectral_gap > 0.0;
    Ok(Spectrum {
        eigenvalues,
        lambda2,
        lambda_n,
        spectral_gap,
        assumption_ok,
    })
}

/// Symmetric doubly stochastic consensus weights together with their spectrum.
#[derive(Clone, Debug)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    spectrum: Spectrum,
}

impl MixingMatrix {
    /// Wraps an arbitrary symmetric matrix. Stochasticity violations are
    /// recorded in the spectrum's `assumption_ok` flag rather than rejected.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        let mut spectrum = spectrum(&w)?;
        if !is_doubly_stochastic(&w, STOCHASTIC_TOL) || w.iter().any(|&v| v < 0.0) {
            spectrum.assumption_ok = false;
        }
        Ok(MixingMatrix { w, spectrum })
    }

    /// The trivial single-node mixing matrix `[1]`.
    pub fn single() -> Self {
        Self::from_matrix(DMatrix::from_element(1, 1, 1.0)).expect("1x1 identity is valid")
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn lambda2(&self) -> f64 {
        self.spectrum.lambda2
    }

    pub fn lambda_n(&self) -> f64 {
        self.spectrum.lambda_n
    }

    pub fn spectral_gap(&self) -> f64 {
        self.spectrum.spectral_gap
    }

    /// Errors unless the matrix is symmetric, doubly stochastic, non-negative
    /// and has `1 = lambda_1 > lambda_2` and `lambda_n > -1`.
    pub fn require_valid(&self) -> Result<()> {
        if self.spectrum.assumption_ok {
            Ok(())
        } else {
            Err(Error::PreconditionViolation(format!(
                "mixing matrix violates the consensus assumptions (lambda2 = {}, lambda_n = {}, gap = {})",
                self.spectrum.lambda2, self.spectrum.lambda_n, self.spectrum.spectral_gap
            )))
        }
    }

    /// Off-diagonal neighbours of node `i` with their weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n()).filter(move |&j| j != i && self.w[(i, j)] > 0.0).map(move |j| (j, self.w[(i, j)]))
    }
}

pub fn is_doubly_stochastic(w: &DMatrix<f64>, tol: f64) -> bool {
    let rows_ok = w.row_iter().all(|r| (r.sum() - 1.0).abs() <= tol);
    let cols_ok = w.column_iter().all(|c| (c.sum() - 1.0).abs() <= tol);
    rows_ok && cols_ok
}

/// Metropolis weights: `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges and
/// `w_ii = 1 - sum_{j != i} w_ij`.
pub fn metropolis_weights(topology: &Topology) -> Result<MixingMatrix> {
    if !topology.is_connected() {
        return Err(Error::PreconditionViolation(
            "Metropolis weights require a connected topology".into(),
        ));
    }
    let n = topology.n;
    let deg = topology.degrees();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for &(i, j) in &topology.edges {
        let wij = 1.0 / (1 + deg[i].max(deg[j])) as f64;
        w[(i, j)] = wij;
        w[(j, i)] = wij;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_matrix(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ring_of_four() {
        let t = build_topology(TopologyKind::Ring, 4, None, 0).unwrap();
        assert_eq!(t.edges, vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn star_of_three() {
        let t = build_topology(TopologyKind::Star, 3, None, 0).unwrap();
        assert_eq!(t.edges, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn complete_edge_count() {
        let t = build_topology(TopologyKind::Complete, 5, None, 0).unwrap();
        assert_eq!(t.num_edges(), 10);
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            build_topology(TopologyKind::Ring, 1, None, 0),
            Err(Error::InvalidSize(_))
        ));
    }

    #[test]
    fn erdos_renyi_needs_probability() {
        assert!(build_topology(TopologyKind::ErdosRenyi, 5, None, 0).is_err());
        assert!(build_topology(TopologyKind::ErdosRenyi, 5, Some(0.0), 0).is_err());
        assert!(build_topology(TopologyKind::ErdosRenyi, 5, Some(1.5), 0).is_err());
    }

    #[test]
    fn erdos_renyi_gives_up_on_sparse_graphs() {
        let err = build_topology(TopologyKind::ErdosRenyi, 40, Some(1e-6), 3).unwrap_err();
        assert!(matches!(err, Error::Unconnectable { attempts: 100 }));
    }

    #[test]
    fn erdos_renyi_is_seeded() {
        let a = build_topology(TopologyKind::ErdosRenyi, 12, Some(0.5), 9).unwrap();
        let b = build_topology(TopologyKind::ErdosRenyi, 12, Some(0.5), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
    }

    #[test]
    fn metropolis_triangle_is_uniform() {
        let t = build_topology(TopologyKind::Ring, 3, None, 0).unwrap();
        let w = metropolis_weights(&t).unwrap();
        for v in w.matrix().iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn metropolis_star_three() {
        let t = build_topology(TopologyKind::Star, 3, None, 0).unwrap();
        let w = metropolis_weights(&t).unwrap();
        let expect = DMatrix::from_row_slice(
            3,
            3,
            &[1. / 3., 1. / 3., 1. / 3., 1. / 3., 2. / 3., 0., 1. / 3., 0., 2. / 3.],
        );
        assert_abs_diff_eq!(w.matrix(), &expect, epsilon = 1e-15);
        let s = w.spectrum();
        assert_abs_diff_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.lambda2, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.lambda_n, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.spectral_gap, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn metropolis_single_edge() {
        let t = build_topology(TopologyKind::Ring, 2, None, 0).unwrap();
        assert_eq!(t.num_edges(), 1);
        let w = metropolis_weights(&t).unwrap();
        for v in w.matrix().iter() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn metropolis_refuses_disconnected() {
        let t = Topology::from_edges(TopologyKind::Ring, 4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(metropolis_weights(&t), Err(Error::PreconditionViolation(_))));
    }

    #[test]
    fn rank_one_spectrum() {
        let s = spectrum(&DMatrix::from_element(3, 3, 1.0 / 3.0)).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eigenvalues[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eigenvalues[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.spectral_gap, 1.0, epsilon = 1e-12);
        assert!(s.assumption_ok);
    }

    #[test]
    fn identity_is_flagged_not_rejected() {
        let m = MixingMatrix::from_matrix(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(m.lambda2(), 1.0);
        assert_eq!(m.spectral_gap(), 0.0);
        assert!(!m.spectrum().assumption_ok);
        assert!(m.require_valid().is_err());
    }

    #[test]
    fn asymmetric_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.2, 0.8]);
        assert!(matches!(spectrum(&w), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn parse_kinds() {
        for k in TopologyKind::ALL {
            assert_eq!(k.as_str().parse::<TopologyKind>().unwrap(), k);
        }
        assert!("torus".parse::<TopologyKind>().is_err());
    }
}
