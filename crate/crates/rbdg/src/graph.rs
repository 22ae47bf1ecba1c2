//! Ground-truth graphs, graph shift operators, polynomial graph filters and
//! their inverses, and perturbed observations of the shift operator.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{RbdgError, Result};
use crate::seed::derive_seed;

/// Retry budget for rejection-sampled constructions (connected graphs,
/// well-conditioned filters).
const RETRY_BUDGET: usize = 64;

/// Lower bound on |Tr(H^{-1})| below which the unit-trace normalization of
/// the inverse filter is numerically meaningless. The eigenvalues of the
/// inverse can nearly cancel in the trace even for well-conditioned
/// filters, so the floor grows with the node count.
pub fn trace_scale_floor(n: usize) -> f64 {
    0.25 * n as f64
}

/// Role played by the shift-operator matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsoKind {
    Adjacency,
}

/// Graph shift operator: a symmetric, hollow, nonnegative N x N matrix
/// encoding the graph structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Gso {
    entries: DMatrix<f64>,
    kind: GsoKind,
}

impl Gso {
    /// Wraps a matrix as an adjacency-type shift operator, validating the
    /// structural invariants (square, symmetric, hollow, nonnegative).
    pub fn adjacency(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(RbdgError::DimensionMismatch(format!(
                "shift operator must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let n = entries.nrows();
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(RbdgError::InvalidParameter(format!(
                    "shift operator must be hollow, entry ({i},{i}) = {}",
                    entries[(i, i)]
                )));
            }
            for j in 0..n {
                if entries[(i, j)] < 0.0 {
                    return Err(RbdgError::InvalidParameter(format!(
                        "shift operator entries must be nonnegative, ({i},{j}) = {}",
                        entries[(i, j)]
                    )));
                }
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(RbdgError::InvalidParameter(format!(
                        "shift operator must be symmetric, mismatch at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Gso {
            entries,
            kind: GsoKind::Adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn kind(&self) -> GsoKind {
        self.kind
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    /// Upper-triangle edge list (i < j with nonzero entry).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.entries[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// Breadth-first connectivity check.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        seen[0] = true;
        queue.push_back(0);
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if !seen[v] && self.entries[(u, v)] != 0.0 {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }
}

/// Which perturbation to apply to a shift operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    /// Delete a fraction of existing edges and create the same number of
    /// previously absent ones.
    Rewire,
}

/// Specification of a graph perturbation.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    /// Fraction of existing edges to perturb, in [0, 1].
    pub ratio: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn rewire(ratio: f64, seed: u64) -> Self {
        PerturbationSpec {
            kind: PerturbationKind::Rewire,
            ratio,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) || !self.ratio.is_finite() {
            return Err(RbdgError::InvalidParameter(format!(
                "perturbation ratio must lie in [0, 1], got {}",
                self.ratio
            )));
        }
        Ok(())
    }
}

/// A polynomial graph filter together with its unit-trace-normalized inverse.
///
/// `forward` is the filter matrix assembled from `coeffs` as a polynomial of
/// the generating shift operator. `inverse` stores the inverse of `forward`
/// rescaled to unit trace, and `trace_scale` records the trace of the raw
/// inverse so that `forward * inverse = I / trace_scale`.
#[derive(Debug, Clone)]
pub struct FilterPair {
    pub coeffs: Vec<f64>,
    pub forward: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub trace_scale: f64,
}

impl FilterPair {
    /// Builds the filter for given coefficients without resampling. Fails if
    /// the resulting matrix is singular or its inverse has near-zero trace.
    pub fn from_coeffs(s: &Gso, coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > s.n() {
            return Err(RbdgError::InvalidParameter(format!(
                "filter order must lie in 1..={}, got {}",
                s.n(),
                coeffs.len()
            )));
        }
        let forward = polynomial_of(s.entries(), coeffs);
        let raw_inverse = forward.clone().try_inverse().ok_or_else(|| {
            RbdgError::FilterSynthesis("filter matrix is singular".to_string())
        })?;
        let trace_scale = raw_inverse.trace();
        let floor = trace_scale_floor(s.n());
        if trace_scale.abs() < floor {
            return Err(RbdgError::FilterSynthesis(format!(
                "inverse filter trace {trace_scale:.3e} below floor {floor:.3e}"
            )));
        }
        let inverse = &raw_inverse / trace_scale;
        Ok(FilterPair {
            coeffs: coeffs.to_vec(),
            forward,
            inverse,
            trace_scale,
        })
    }

    pub fn n(&self) -> usize {
        self.forward.nrows()
    }

    /// The raw (un-normalized) inverse `forward^{-1}`.
    pub fn inverse_unnormalized(&self) -> DMatrix<f64> {
        &self.inverse * self.trace_scale
    }
}

/// Evaluates sum_r coeffs[r] * S^r by Horner's rule.
fn polynomial_of(s: &DMatrix<f64>, coeffs: &[f64]) -> DMatrix<f64> {
    let n = s.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut acc = &eye * coeffs[coeffs.len() - 1];
    for &c in coeffs.iter().rev().skip(1) {
        acc = &acc * s + &eye * c;
    }
    acc
}

/// Samples a connected Watts-Strogatz small-world graph.
///
/// Starts from a ring lattice where every node connects to its
/// `mean_degree` nearest neighbors and rewires the far endpoint of each
/// lattice edge with probability `rewire_prob`. Edge count is preserved.
/// Disconnected draws are rejected and resampled with a derived seed; the
/// construction fails after a fixed retry budget.
pub fn generate_small_world(
    n: usize,
    mean_degree: usize,
    rewire_prob: f64,
    seed: u64,
) -> Result<Gso> {
    if n < 3 {
        return Err(RbdgError::InvalidParameter(format!(
            "need at least 3 nodes, got {n}"
        )));
    }
    if mean_degree == 0 || mean_degree >= n || mean_degree % 2 != 0 {
        return Err(RbdgError::InvalidParameter(format!(
            "mean degree must be even and in 1..{n}, got {mean_degree}"
        )));
    }
    if !(0.0..=1.0).contains(&rewire_prob) || !rewire_prob.is_finite() {
        return Err(RbdgError::InvalidParameter(format!(
            "rewire probability must lie in [0, 1], got {rewire_prob}"
        )));
    }

    for attempt in 0..RETRY_BUDGET {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[attempt as u64]));
        let mut adj = DMatrix::<f64>::zeros(n, n);
        for lane in 1..=(mean_degree / 2) {
            for i in 0..n {
                let j = (i + lane) % n;
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
        for lane in 1..=(mean_degree / 2) {
            for i in 0..n {
                if !rng.random_bool(rewire_prob) {
                    continue;
                }
                let degree_i = (0..n).filter(|&v| adj[(i, v)] != 0.0).count();
                if degree_i >= n - 1 {
                    continue;
                }
                let old = (i + lane) % n;
                let mut target = rng.random_range(0..n);
                while target == i || adj[(i, target)] != 0.0 {
                    target = rng.random_range(0..n);
                }
                adj[(i, old)] = 0.0;
                adj[(old, i)] = 0.0;
                adj[(i, target)] = 1.0;
                adj[(target, i)] = 1.0;
            }
        }
        let gso = Gso::adjacency(adj)?;
        if gso.is_connected() {
            return Ok(gso);
        }
    }
    Err(RbdgError::GraphGeneration(format!(
        "no connected small-world graph after {RETRY_BUDGET} attempts (n={n}, k={mean_degree}, p={rewire_prob})"
    )))
}

/// Rewires `round(ratio * E)` edges of `s`: that many existing edges are
/// deleted and the same number of currently absent node pairs are created.
/// Edge count, symmetry and hollowness are preserved.
pub fn perturb_rewire(s: &Gso, spec: &PerturbationSpec) -> Result<Gso> {
    spec.validate()?;
    let n = s.n();
    let present = s.edges();
    let edge_count = present.len();
    if edge_count == 0 {
        return Err(RbdgError::InvalidParameter(
            "cannot rewire an empty graph".to_string(),
        ));
    }
    let flips = (spec.ratio * edge_count as f64).round() as usize;
    if flips == 0 {
        return Ok(s.clone());
    }
    let mut absent = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if s.entries()[(i, j)] == 0.0 {
                absent.push((i, j));
            }
        }
    }
    if absent.len() < flips {
        return Err(RbdgError::GraphGeneration(format!(
            "graph too dense to rewire {flips} edges: only {} absent pairs",
            absent.len()
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let delete = rand::seq::index::sample(&mut rng, edge_count, flips).into_vec();
    let create = rand::seq::index::sample(&mut rng, absent.len(), flips).into_vec();

    let mut entries = s.entries().clone();
    for &idx in &delete {
        let (i, j) = present[idx];
        entries[(i, j)] = 0.0;
        entries[(j, i)] = 0.0;
    }
    for &idx in &create {
        let (i, j) = absent[idx];
        entries[(i, j)] = 1.0;
        entries[(j, i)] = 1.0;
    }
    Gso::adjacency(entries)
}

/// Draws filter coefficients i.i.d. uniform on [0, 1] and assembles the
/// polynomial filter, resampling until the filter is invertible with
/// condition number at most `cond_limit` and an inverse trace away from zero.
pub fn synthesize_filter(s: &Gso, order: usize, seed: u64, cond_limit: f64) -> Result<FilterPair> {
    if order == 0 || order > s.n() {
        return Err(RbdgError::InvalidParameter(format!(
            "filter order must lie in 1..={}, got {order}",
            s.n()
        )));
    }
    if !(cond_limit > 1.0) {
        return Err(RbdgError::InvalidParameter(format!(
            "condition limit must exceed 1, got {cond_limit}"
        )));
    }

    for attempt in 0..RETRY_BUDGET {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[attempt as u64]));
        let coeffs: Vec<f64> = (0..order).map(|_| rng.random::<f64>()).collect();
        let forward = polynomial_of(s.entries(), &coeffs);
        let svals = forward.clone().svd(false, false).singular_values;
        let smax = svals[0];
        let smin = svals[svals.len() - 1];
        if smin <= 0.0 || smax / smin > cond_limit {
            continue;
        }
        match FilterPair::from_coeffs(s, &coeffs) {
            Ok(pair) => return Ok(pair),
            Err(_) => continue,
        }
    }
    Err(RbdgError::FilterSynthesis(format!(
        "no well-conditioned invertible filter after {RETRY_BUDGET} attempts (order={order}, cond_limit={cond_limit})"
    )))
}

/// The commutator `a * b - b * a` of two square matrices.
pub fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() || b.nrows() != b.ncols() || a.nrows() != b.nrows() {
        return Err(RbdgError::DimensionMismatch(format!(
            "commutator needs conformable square matrices, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a * b - b * a)
}
