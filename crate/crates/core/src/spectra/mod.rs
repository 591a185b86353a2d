//! Mean matrices, Perron-Frobenius data and second-moment forms of an
//! offspring model, plus its size-biased (spine) counterpart.

mod matrix;
mod model;

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};

pub use matrix::Matrix;
pub use model::{fixtures, OffspringModel, Prob, WordLaw, MASS_TOL};
pub(crate) use model::one_based;

/// Tolerance on `|rho - 1|` for the critical class.
pub const CRITICALITY_TOL: f64 = 1e-9;
/// Damping used by [`perron`]: iterate on `(M + δI)/(1 + δ)`.
pub const PERRON_DAMPING: f64 = 0.5;
const PERRON_STEP_TOL: f64 = 1e-14;
const PERRON_MAX_ITER: u64 = 1_000_000;

/// Count vector `z` with `z_j` = number of type-`j` letters.
pub fn count_vector(word: &[usize], k: usize) -> Vec<usize> {
    let mut z = vec![0; k];
    for &t in word {
        z[t] += 1;
    }
    z
}

/// Unordered offspring laws: per type, a map from count vector to mass.
#[derive(Debug, Clone, PartialEq)]
pub struct UnorderedOffspring {
    k: usize,
    laws: Vec<BTreeMap<Vec<usize>, Prob>>,
}

impl UnorderedOffspring {
    pub fn num_types(&self) -> usize {
        self.k
    }

    pub fn law(&self, ty: usize) -> &BTreeMap<Vec<usize>, Prob> {
        &self.laws[ty]
    }

    pub fn prob(&self, ty: usize, z: &[usize]) -> f64 {
        self.laws[ty].get(z).map_or(0.0, |p| p.value)
    }
}

/// Pushes every ordered law forward by the letter-counting map.
pub fn project_unordered(model: &OffspringModel) -> UnorderedOffspring {
    let k = model.num_types();
    let laws = model
        .laws()
        .iter()
        .map(|law| {
            let mut exact: BTreeMap<Vec<usize>, BigRational> = BTreeMap::new();
            for wl in law {
                let slot = exact.entry(count_vector(&wl.word, k)).or_insert_with(BigRational::zero);
                *slot += &wl.prob.exact;
            }
            // floats are summed separately so float-only models keep their values
            let mut out: BTreeMap<Vec<usize>, Prob> = BTreeMap::new();
            for (z, q) in exact {
                out.insert(z, Prob { value: 0.0, exact: q });
            }
            for wl in law {
                out.get_mut(&count_vector(&wl.word, k)).unwrap().value += wl.prob.value;
            }
            out
        })
        .collect();
    UnorderedOffspring { k, laws }
}

/// `m_ij = E[# type-j children of a type-i parent]`.
pub fn mean_matrix(mu: &UnorderedOffspring) -> Matrix {
    let k = mu.k;
    let mut m = Matrix::zeros(k, k);
    for (i, law) in mu.laws.iter().enumerate() {
        for (z, p) in law {
            for (j, &zj) in z.iter().enumerate() {
                m[(i, j)] += zj as f64 * p.value;
            }
        }
    }
    m
}

/// Strong connectivity of the graph `{i -> j : m_ij > 0}`.
pub fn is_irreducible(m: &Matrix) -> bool {
    assert!(m.is_square());
    let k = m.rows();
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                let w = if forward { m[(i, j)] } else { m[(j, i)] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    k > 0 && reach(true) && reach(false)
}

/// True when some type has positive probability of not having exactly one child.
pub fn is_nondegenerate(mu: &UnorderedOffspring) -> bool {
    mu.laws
        .iter()
        .any(|law| law.iter().any(|(z, p)| p.value > 0.0 && z.iter().sum::<usize>() != 1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Perron {
    pub rho: f64,
    /// Left eigenvector, `a . 1 = 1`.
    pub a: Vec<f64>,
    /// Right eigenvector, `a . b = 1`.
    pub b: Vec<f64>,
}

fn damped_power_iteration(m: &Matrix) -> Result<Vec<f64>> {
    let k = m.rows();
    let mut v = vec![1.0 / k as f64; k];
    for _ in 0..PERRON_MAX_ITER {
        let mv = m.mul_vec(&v);
        let mut next: Vec<f64> = mv
            .iter()
            .zip(&v)
            .map(|(x, y)| (x + PERRON_DAMPING * y) / (1.0 + PERRON_DAMPING))
            .collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let step = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        v = next;
        if step < PERRON_STEP_TOL {
            return Ok(v);
        }
    }
    Err(Error::NoConvergence {
        what: "Perron power iteration",
        iterations: PERRON_MAX_ITER,
    })
}

/// Perron root and positive Perron vectors of an irreducible nonnegative matrix.
pub fn perron(m: &Matrix) -> Result<Perron> {
    if !m.is_square() || !m.is_nonnegative() {
        return Err(Error::InvalidArgument("perron needs a square nonnegative matrix".into()));
    }
    if !is_irreducible(m) {
        return Err(Error::NotIrreducible);
    }
    let b = damped_power_iteration(m)?;
    let a = damped_power_iteration(&m.transpose())?;
    // Rayleigh-type quotient with the biorthogonal pair is second-order accurate.
    let mb = m.mul_vec(&b);
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let amb: f64 = a.iter().zip(&mb).map(|(x, y)| x * y).sum();
    let rho = amb / ab;
    let asum: f64 = a.iter().sum();
    let a: Vec<f64> = a.iter().map(|x| x / asum).collect();
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let b: Vec<f64> = b.iter().map(|x| x / ab).collect();
    Ok(Perron { rho, a, b })
}

/// Residuals `(||aM - rho a||_inf, ||Mb - rho b||_inf)`.
pub fn perron_residuals(m: &Matrix, p: &Perron) -> (f64, f64) {
    let left = m
        .vec_mul(&p.a)
        .iter()
        .zip(&p.a)
        .map(|(x, y)| (x - p.rho * y).abs())
        .fold(0.0, f64::max);
    let right = m
        .mul_vec(&p.b)
        .iter()
        .zip(&p.b)
        .map(|(x, y)| (x - p.rho * y).abs())
        .fold(0.0, f64::max);
    (left, right)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

pub fn classify(rho: f64) -> Criticality {
    if rho < 1.0 - CRITICALITY_TOL {
        Criticality::Subcritical
    } else if (rho - 1.0).abs() <= CRITICALITY_TOL {
        Criticality::Critical
    } else {
        Criticality::Supercritical
    }
}

/// Hessians at `1` of the generating functions:
/// `Q^(i)_jk = E[z_j z_k - δ_jk z_j]` under `mu^(i)`.
pub fn q_forms(mu: &UnorderedOffspring) -> Vec<Matrix> {
    let k = mu.k;
    mu.laws
        .iter()
        .map(|law| {
            let mut q = Matrix::zeros(k, k);
            for (z, p) in law {
                for j in 0..k {
                    for l in 0..k {
                        let zz = z[j] * z[l] - if j == l { z[j] } else { 0 };
                        q[(j, l)] += zz as f64 * p.value;
                    }
                }
            }
            q
        })
        .collect()
}

/// `Q(s) = s^T Q s`.
pub fn quadratic(q: &Matrix, s: &[f64]) -> f64 {
    q.mul_vec(s).iter().zip(s).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralData {
    #[serde(rename = "M")]
    pub m: Matrix,
    pub rho: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Matrix>,
    /// `sqrt(a . Q(b))`; meaningful for critical nondegenerate models.
    pub sigma: f64,
    pub criticality: Criticality,
    pub irreducible: bool,
    pub nondegenerate: bool,
}

impl SpectralData {
    /// Computes every spectral quantity of an irreducible model.
    pub fn compute(model: &OffspringModel) -> Result<Self> {
        let mu = project_unordered(model);
        let m = mean_matrix(&mu);
        let p = perron(&m)?;
        let q = q_forms(&mu);
        let sigma2: f64 = p
            .a
            .iter()
            .zip(&q)
            .map(|(ai, qi)| ai * quadratic(qi, &p.b))
            .sum();
        Ok(SpectralData {
            criticality: classify(p.rho),
            sigma: sigma2.max(0.0).sqrt(),
            irreducible: true,
            nondegenerate: is_nondegenerate(&mu),
            m,
            rho: p.rho,
            a: p.a,
            b: p.b,
            q,
        })
    }

    pub fn num_types(&self) -> usize {
        self.a.len()
    }

    pub fn require_critical(&self) -> Result<()> {
        match self.criticality {
            Criticality::Critical => Ok(()),
            c => Err(Error::NotCritical(c)),
        }
    }

    /// `a . Q(b)`.
    pub fn sigma_squared(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// Limit of `n * P^(i)(ht(T) >= n)`: `2 b_i / (a . Q(b))`.
    pub fn height_tail_constant(&self, ty: usize) -> f64 {
        2.0 * self.b[ty] / self.sigma_squared()
    }

    /// Variance of the offspring law of the type-`ty` projection:
    /// `sigma^2 / (a_i b_i^2)`.
    pub fn projected_variance(&self, ty: usize) -> f64 {
        self.sigma_squared() / (self.a[ty] * self.b[ty] * self.b[ty])
    }
}

/// Checked `sigma` for a critical, irreducible, nondegenerate model.
pub fn sigma(spec: &SpectralData) -> Result<f64> {
    spec.require_critical()?;
    if !spec.irreducible {
        return Err(Error::NotIrreducible);
    }
    if !spec.nondegenerate || spec.sigma == 0.0 {
        return Err(Error::DegenerateModel);
    }
    Ok(spec.sigma)
}

/// Size-biased ordered laws and the spine type chain.
#[derive(Debug, Clone, Serialize)]
pub struct SizeBiasedModel {
    /// Per type, `(word, prob)` pairs of the size-biased law (empty word removed).
    pub zeta_hat: Vec<Vec<(Vec<usize>, f64)>>,
    /// `p_jj' = b_j' m_jj' / b_j`.
    pub spine_transition: Matrix,
    /// `(a_j b_j)_j`.
    pub spine_stationary: Vec<f64>,
}

pub fn size_biased(model: &OffspringModel, spec: &SpectralData) -> Result<SizeBiasedModel> {
    spec.require_critical()?;
    let k = model.num_types();
    let b = &spec.b;
    let zeta_hat = (0..k)
        .map(|i| {
            model
                .law(i)
                .iter()
                .filter_map(|wl| {
                    let weight: f64 = wl.word.iter().map(|&t| b[t]).sum();
                    let p = weight / b[i] * wl.prob.value;
                    (p > 0.0).then(|| (wl.word.clone(), p))
                })
                .collect()
        })
        .collect();
    let mut spine_transition = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            spine_transition[(i, j)] = b[j] * spec.m[(i, j)] / b[i];
        }
    }
    let spine_stationary = spec.a.iter().zip(b).map(|(x, y)| x * y).collect();
    Ok(SizeBiasedModel {
        zeta_hat,
        spine_transition,
        spine_stationary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn alt2_projection_and_means() {
        let mu = project_unordered(&fixtures::alt2());
        assert_eq!(mu.prob(0, &[0, 2]), 0.5);
        assert_eq!(mu.prob(0, &[0, 0]), 0.5);
        assert_eq!(mu.prob(1, &[1, 0]), 1.0);
        assert_eq!(mean_matrix(&mu), Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]));
        assert!(is_nondegenerate(&mu));
    }

    #[test]
    fn words_with_same_counts_merge() {
        let model = OffspringModel::from_f64(vec![
            vec![(vec![0, 1], 0.5), (vec![1, 0], 0.5)],
            vec![(vec![], 1.0)],
        ])
        .unwrap();
        let mu = project_unordered(&model);
        assert_eq!(mu.law(0).len(), 1);
        assert_eq!(mu.prob(0, &[1, 1]), 1.0);
        assert_eq!(mu.law(0)[&vec![1, 1]].exact, BigRational::from_integer(1.into()));
    }

    #[test]
    fn mono1_basics() {
        let mu = project_unordered(&fixtures::mono1());
        assert_eq!(mu.prob(0, &[0]), 0.5);
        assert_eq!(mu.prob(0, &[2]), 0.5);
        assert_eq!(mean_matrix(&mu), Matrix::from_rows(vec![vec![1.0]]));
        assert_eq!(q_forms(&mu), vec![Matrix::from_rows(vec![vec![1.0]])]);
    }

    #[test]
    fn permutation_chain_is_degenerate() {
        let model = fixtures::permutation_chain(3);
        let mu = project_unordered(&model);
        assert!(!is_nondegenerate(&mu));
        let m = mean_matrix(&mu);
        assert_eq!(m.pow(3), Matrix::identity(3));
        assert!(q_forms(&mu).iter().all(|q| q == &Matrix::zeros(3, 3)));
        let spec = SpectralData::compute(&model).unwrap();
        assert_eq!(sigma(&spec), Err(Error::DegenerateModel));
    }

    #[test]
    fn irreducibility_examples() {
        let alt = Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(is_irreducible(&alt));
        assert!(!is_irreducible(&Matrix::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]])));
        assert!(!is_irreducible(&Matrix::identity(2)));
        assert!(matches!(
            perron(&Matrix::identity(2)),
            Err(Error::NotIrreducible)
        ));
    }

    #[test]
    fn perron_examples() {
        let p = perron(&Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(p.rho, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.a.as_slice(), [0.5, 0.5].as_slice(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.b.as_slice(), [1.0, 1.0].as_slice(), epsilon = 1e-12);

        let p = perron(&Matrix::from_rows(vec![vec![0.0, 2.0], vec![0.5, 0.0]])).unwrap();
        assert_abs_diff_eq!(p.rho, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.a.as_slice(), [1.0 / 3.0, 2.0 / 3.0].as_slice(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.b.as_slice(), [1.5, 0.75].as_slice(), epsilon = 1e-12);

        let p = perron(&Matrix::from_rows(vec![vec![1.0]])).unwrap();
        assert_eq!((p.rho, p.a.clone(), p.b.clone()), (1.0, vec![1.0], vec![1.0]));
    }

    #[test]
    fn classification() {
        assert_eq!(classify(1.0), Criticality::Critical);
        assert_eq!(classify(1.0 + 5e-10), Criticality::Critical);
        assert_eq!(classify(0.5), Criticality::Subcritical);
        assert_eq!(classify(2.0), Criticality::Supercritical);
    }

    #[test]
    fn alt2_q_forms_and_sigma() {
        let mu = project_unordered(&fixtures::alt2());
        let q = q_forms(&mu);
        assert_eq!(q[0], Matrix::from_rows(vec![vec![0.0, 0.0], vec![0.0, 1.0]]));
        assert_eq!(q[1], Matrix::zeros(2, 2));
        let spec = SpectralData::compute(&fixtures::alt2()).unwrap();
        assert_abs_diff_eq!(spec.sigma_squared(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma(&spec).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(spec.height_tail_constant(0), 4.0, epsilon = 1e-10);
        assert_abs_diff_eq!(spec.projected_variance(0), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn three3_constants() {
        let spec = SpectralData::compute(&fixtures::three3()).unwrap();
        let a = [14.0 / 41.0, 12.0 / 41.0, 15.0 / 41.0];
        assert_abs_diff_eq!(spec.a.as_slice(), a.as_slice(), epsilon = 1e-12);
        assert_abs_diff_eq!(spec.b.as_slice(), [1.0; 3].as_slice(), epsilon = 1e-12);
        assert_abs_diff_eq!(spec.sigma_squared(), 50.0 / 41.0, epsilon = 1e-12);
        assert_eq!(spec.criticality, Criticality::Critical);
    }

    #[test]
    fn size_biased_alt2_and_mono1() {
        let model = fixtures::alt2();
        let spec = SpectralData::compute(&model).unwrap();
        let sb = size_biased(&model, &spec).unwrap();
        assert_eq!(sb.zeta_hat[0].len(), 1);
        assert_eq!(sb.zeta_hat[0][0].0, vec![1, 1]);
        assert_abs_diff_eq!(sb.zeta_hat[0][0].1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sb.zeta_hat[1][0].1, 1.0, epsilon = 1e-12);
        assert!(sb.spine_transition.max_abs_diff(&Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]])) < 1e-12);
        assert_abs_diff_eq!(sb.spine_stationary.as_slice(), [0.5, 0.5].as_slice(), epsilon = 1e-12);

        let model = fixtures::mono1();
        let spec = SpectralData::compute(&model).unwrap();
        let sb = size_biased(&model, &spec).unwrap();
        assert_eq!(sb.zeta_hat[0].len(), 1);
        assert_eq!(sb.zeta_hat[0][0].0, vec![0, 0]);
        assert_abs_diff_eq!(sb.zeta_hat[0][0].1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn size_biasing_needs_criticality() {
        let model = OffspringModel::from_f64(vec![vec![(vec![0], 0.5), (vec![], 0.5)]]).unwrap();
        let spec = SpectralData::compute(&model).unwrap();
        assert_eq!(spec.criticality, Criticality::Subcritical);
        assert!(matches!(size_biased(&model, &spec), Err(Error::NotCritical(_))));
    }

    /// Random critical model: arbitrary words, then the empty word absorbs
    /// the mass needed to scale the mean matrix down to spectral radius one.
    pub(crate) fn random_critical_model(k: usize, seed: u64) -> OffspringModel {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        loop {
            let raw: Vec<Vec<(Vec<usize>, f64)>> = (0..k)
                .map(|_| {
                    let n_words = rng.random_range(1..=3);
                    let mut words: Vec<Vec<usize>> = Vec::new();
                    while words.len() < n_words {
                        let len = rng.random_range(1..=3);
                        let w: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
                        if !words.contains(&w) {
                            words.push(w);
                        }
                    }
                    let weights: Vec<f64> = words.iter().map(|_| rng.random_range(0.1..1.0)).collect();
                    let total: f64 = weights.iter().sum();
                    words.into_iter().zip(weights).map(|(w, x)| (w, x / total)).collect()
                })
                .collect();
            let model = OffspringModel::from_f64(raw.clone()).unwrap();
            let m = mean_matrix(&project_unordered(&model));
            if !is_irreducible(&m) {
                continue;
            }
            let rho = perron(&m).unwrap().rho;
            if rho <= 1.05 {
                continue;
            }
            let lambda = 1.0 / rho;
            let scaled: Vec<Vec<(Vec<usize>, f64)>> = raw
                .into_iter()
                .map(|law| {
                    let mut out: Vec<(Vec<usize>, f64)> =
                        law.into_iter().map(|(w, p)| (w, p * lambda)).collect();
                    let mass: f64 = out.iter().map(|(_, p)| p).sum();
                    out.push((vec![], 1.0 - mass));
                    out
                })
                .collect();
            return OffspringModel::from_f64(scaled).unwrap();
        }
    }

    #[test]
    fn random_critical_models_satisfy_eigen_identities() {
        for seed in 0..50 {
            let model = random_critical_model(3, seed);
            let spec = SpectralData::compute(&model).unwrap();
            assert_eq!(spec.criticality, Criticality::Critical, "seed {seed}");
            let mb = spec.m.mul_vec(&spec.b);
            let am = spec.m.vec_mul(&spec.a);
            for i in 0..3 {
                assert!((mb[i] - spec.b[i]).abs() < 1e-10);
                assert!((am[i] - spec.a[i]).abs() < 1e-10);
            }
            let sb = size_biased(&model, &spec).unwrap();
            for (i, law) in sb.zeta_hat.iter().enumerate() {
                let mass: f64 = law.iter().map(|(_, p)| p).sum();
                assert!((mass - 1.0).abs() < 1e-12, "seed {seed} type {i}");
                assert!(law.iter().all(|(w, _)| !w.is_empty()));
                let row: f64 = sb.spine_transition.row(i).iter().sum();
                assert!((row - 1.0).abs() < 1e-12);
            }
            let pi = sb.spine_transition.vec_mul(&sb.spine_stationary);
            for i in 0..3 {
                assert!((pi[i] - sb.spine_stationary[i]).abs() < 1e-10);
            }
        }
    }

    fn irreducible_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..6).prop_flat_map(|k| {
            prop::collection::vec(0.0f64..2.0, k * k).prop_filter_map("reducible", move |v| {
                let rows = v.chunks(k).map(|c| c.to_vec()).collect();
                let m = Matrix::from_rows(rows);
                is_irreducible(&m).then_some(m)
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn perron_residuals_are_small(m in irreducible_matrix()) {
            let p = perron(&m).unwrap();
            let (l, r) = perron_residuals(&m, &p);
            let scale = m.norm_inf();
            prop_assert!(l <= 1e-10 * scale && r <= 1e-10 * scale, "{l} {r} {m:?}");
            prop_assert!(p.a.iter().chain(&p.b).all(|&x| x > 0.0));
            let asum: f64 = p.a.iter().sum();
            let ab: f64 = p.a.iter().zip(&p.b).map(|(x, y)| x * y).sum();
            prop_assert!((asum - 1.0).abs() < 1e-10 && (ab - 1.0).abs() < 1e-10);
        }
    }
}
