//! Type reductions of forests and the exact recursions attached to them:
//! reduced mean matrices and generating functions, size laws, component
//! counts and height tails.

mod series;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forest::PlanarForest;
use crate::spectra::{Matrix, OffspringModel, SpectralData};

pub use series::{component_count_distribution, exact_size_distribution, projected_offspring_law, SizeDistribution};

const FIXED_POINT_TOL: f64 = 1e-14;
const FIXED_POINT_MAX_ITER: u64 = 10_000_000;

/// A forest contracted onto a subset of its vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionResult {
    pub reduced: PlanarForest,
    /// Index in the original forest of each reduced vertex.
    pub origin: Vec<usize>,
    /// Per reduced vertex `u`: deleted vertices whose nearest kept ancestor is `u`.
    pub deleted_between: Vec<usize>,
    /// Per original component: deleted vertices without a kept ancestor.
    pub deleted_floor: Vec<usize>,
}

impl ProjectionResult {
    pub fn deleted_total(&self) -> usize {
        self.deleted_between.iter().sum::<usize>() + self.deleted_floor.iter().sum::<usize>()
    }

    /// Number of children of each reduced vertex.
    pub fn offspring_counts(&self) -> Vec<usize> {
        (0..self.reduced.len()).map(|v| self.reduced.children_count(v)).collect()
    }
}

/// Keeps the vertices with `keep[v]`: each kept vertex is attached to its
/// nearest kept strict ancestor, sibling order following depth-first order.
pub fn contract(f: &PlanarForest, keep: &[bool], k: usize) -> ProjectionResult {
    let n = f.len();
    let mut nearest: Vec<Option<usize>> = vec![None; n];
    let mut new_index = vec![u32::MAX; n];
    let mut parent: Vec<u32> = Vec::new();
    let mut types = Vec::new();
    let mut origin = Vec::new();
    let mut deleted_between = Vec::new();
    let mut deleted_floor = vec![0; f.num_components()];
    for v in 0..n {
        let above = f.parent(v).and_then(|p| nearest[p]);
        if keep[v] {
            new_index[v] = parent.len() as u32;
            parent.push(above.map_or(u32::MAX, |a| new_index[a]));
            types.push(f.type_of(v));
            origin.push(v);
            deleted_between.push(0);
            nearest[v] = Some(v);
        } else {
            nearest[v] = above;
            match above {
                Some(a) => deleted_between[new_index[a] as usize] += 1,
                None => deleted_floor[f.component(v) - 1] += 1,
            }
        }
    }
    ProjectionResult {
        reduced: PlanarForest::from_preorder_unchecked(parent, &types, k),
        origin,
        deleted_between,
        deleted_floor,
    }
}

/// Projection onto the type-`i` vertices; the reduced forest is monotype
/// (every vertex keeps its label `i`).
pub fn project_monotype(f: &PlanarForest, i: usize) -> ProjectionResult {
    let keep: Vec<bool> = f.types().map(|t| t == i).collect();
    contract(f, &keep, f.num_types())
}

/// Contracts the vertices of the last type; the result has one type fewer.
pub fn reduce_one_type(f: &PlanarForest) -> Result<ProjectionResult> {
    let k = f.num_types();
    if k < 2 {
        return Err(Error::InvalidArgument("reduction needs at least two types".into()));
    }
    let keep: Vec<bool> = f.types().map(|t| t != k - 1).collect();
    Ok(contract(f, &keep, k - 1))
}

/// `m_ij + m_ir m_rj / (1 - m_rr)` over the types other than `r`.
pub fn reduced_mean(m: &Matrix, removed: usize) -> Result<Matrix> {
    let k = m.rows();
    if removed >= k || k < 2 {
        return Err(Error::InvalidArgument("cannot remove this type".into()));
    }
    let mrr = m[(removed, removed)];
    if mrr >= 1.0 {
        return Err(Error::InvalidRemoval(removed + 1));
    }
    let keep: Vec<usize> = (0..k).filter(|&t| t != removed).collect();
    let mut out = Matrix::zeros(k - 1, k - 1);
    for (a, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            out[(a, c)] = m[(i, j)] + m[(i, removed)] * m[(removed, j)] / (1.0 - mrr);
        }
    }
    Ok(out)
}

/// Monotone iteration `x <- g(x)` from 0 to the minimal fixed point.
fn minimal_fixed_point(g: impl Fn(f64) -> f64, what: &'static str) -> Result<f64> {
    let mut x = 0.0;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let next = g(x);
        if (next - x).abs() < FIXED_POINT_TOL {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NoConvergence {
        what,
        iterations: FIXED_POINT_MAX_ITER,
    })
}

/// Generating functions of the model with the last type removed, at
/// `s in [0,1]^(K-1)`. Entry `K-1` of the result is the inner fixed point
/// `x = phi^(K)(s, x)`; entries `i < K-1` are `phi^(i)(s, x)`.
pub fn reduced_pgf_eval(model: &OffspringModel, s: &[f64]) -> Result<Vec<f64>> {
    let k = model.num_types();
    if k < 2 || s.len() != k - 1 {
        return Err(Error::InvalidArgument(format!("expected {} arguments", k.saturating_sub(1))));
    }
    let with = |x: f64| -> Vec<f64> { s.iter().copied().chain(std::iter::once(x)).collect() };
    let x = minimal_fixed_point(|x| model.pgf(k - 1, &with(x)), "reduced generating function")?;
    let full = with(x);
    let mut out: Vec<f64> = (0..k - 1).map(|i| model.pgf(i, &full)).collect();
    out.push(x);
    Ok(out)
}

/// Generating functions of the number of deleted last-type vertices:
/// `psi^(K)(s) = s phi^(K)(1,..,1, psi^(K)(s))` (entry `K-1`) and, for the
/// other types, `phi^(i)(1,..,1, psi^(K)(s))`.
pub fn deleted_pgf_eval(model: &OffspringModel, s: f64) -> Result<Vec<f64>> {
    let k = model.num_types();
    if k < 2 {
        return Err(Error::InvalidArgument("needs at least two types".into()));
    }
    let with = |x: f64| -> Vec<f64> { (0..k).map(|t| if t == k - 1 { x } else { 1.0 }).collect() };
    let x = minimal_fixed_point(|x| s * model.pgf(k - 1, &with(x)), "deleted-count generating function")?;
    let full = with(x);
    let mut out: Vec<f64> = (0..k - 1).map(|i| model.pgf(i, &full)).collect();
    out.push(x);
    Ok(out)
}

/// `t[n] = P^(i)(ht(T) >= n)`, `n = 0..=n_max`.
pub fn height_tail(model: &OffspringModel, i: usize, n_max: usize) -> Vec<f64> {
    height_tail_all(model, n_max).into_iter().map(|t| t[i]).collect()
}

/// Height tails of every type: `1 - t(n) = phi(1 - t(n-1))`, evaluated in
/// complement form to avoid cancellation.
pub fn height_tail_all(model: &OffspringModel, n_max: usize) -> Vec<Vec<f64>> {
    let k = model.num_types();
    let mut t = vec![1.0; k];
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(t.clone());
    for _ in 0..n_max {
        t = (0..k)
            .map(|ty| {
                model
                    .law(ty)
                    .iter()
                    .map(|wl| {
                        // 1 - prod (1 - t_l)
                        let c = wl.word.iter().fold(0.0, |acc, &l| acc + t[l] - acc * t[l]);
                        wl.prob.value * c
                    })
                    .sum()
            })
            .collect();
        out.push(t.clone());
    }
    out
}

/// Comparison of `n^{3/2} P^(i)(#T^(j) = n)` with its local-limit constant.
#[derive(Debug, Clone, Serialize)]
pub struct LocalLimit {
    /// First support point `>= n_target`.
    pub n: usize,
    pub scaled: f64,
    pub constant: f64,
    /// Lattice span of the projected offspring law.
    pub span: usize,
    pub sigma_bar: f64,
    pub mean_components: f64,
    pub relative_error: f64,
}

/// Evaluates `n^{3/2} q[n]` at the first support point `n >= n_target` and
/// the constant `d sum_{r} r p(r; i, j) / (sigma_bar_j sqrt(2 pi))`, where `d`
/// is the span of the projected offspring law and the sum runs over the
/// component counts `r` compatible with `n` on that lattice.
pub fn local_limit(model: &OffspringModel, spec: &SpectralData, i: usize, j: usize, n_target: usize) -> Result<LocalLimit> {
    let mu = projected_offspring_law::<f64>(model, j, 64)?;
    let span = mu.support_period.max(1);
    let s0 = mu.support_offset.unwrap_or(0) as i64;
    let dist = exact_size_distribution::<f64>(model, i, j, n_target + 2 * span)?;
    let n = (n_target..dist.q.len())
        .find(|&n| dist.q[n] > 0.0)
        .ok_or_else(|| Error::ZeroProbabilityEvent(format!("no support point near {n_target}")))?;
    let p = component_count_distribution::<f64>(model, i, j, n)?;
    let d = span as i64;
    let residue = (-(n as i64) * (s0 - 1)).rem_euclid(d);
    let mean_components: f64 = p
        .q
        .iter()
        .enumerate()
        .filter(|&(r, _)| (r as i64).rem_euclid(d) == residue)
        .map(|(r, &x)| r as f64 * x)
        .sum();
    let sigma_bar = spec.projected_variance(j).sqrt();
    let constant = span as f64 * mean_components / (sigma_bar * (2.0 * std::f64::consts::PI).sqrt());
    let scaled = (n as f64).powf(1.5) * dist.q[n];
    Ok(LocalLimit {
        n,
        scaled,
        constant,
        span,
        sigma_bar,
        mean_components,
        relative_error: (scaled - constant).abs() / constant,
    })
}
