//! Coefficient-by-coefficient solution of the generating-function systems
//! behind the size law of `#T^(j)` and the number of first-layer type-`j`
//! descendants.
//!
//! With `F_t(s) = E^(t)[s^X]`, write `phi^(t)(x) = sum_w zeta_t(w) prod_l x_{w_l}`.
//! For the size law, `F_j = s phi^(j)(F)` and `F_t = phi^(t)(F)` for `t != j`;
//! for the layer law `F_j = s`. Order `n` of `F_j` only needs orders `< n`;
//! the other types enter order `n` linearly through the Jacobian of `phi`
//! at `F(0)`, so each order is one small linear solve.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectra::OffspringModel;

const ZERO_ORDER_MAX_ITER: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// `F_j = s phi^(j)(F)`: counts every type-`j` vertex.
    Count,
    /// `F_j = s`: counts type-`j` vertices without a type-`j` ancestor.
    Layer,
}

/// A distribution on `{0, .., n_max}` with the remaining mass as `tail`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeDistribution<S> {
    pub root_type: usize,
    pub count_type: usize,
    pub q: Vec<S>,
    pub tail: S,
    /// Smallest `n` with `q[n] > 0`.
    pub support_offset: Option<usize>,
    /// gcd of the differences of support points seen (0 for one point).
    pub support_period: usize,
}

impl<S: Scalar> SizeDistribution<S> {
    fn new(root_type: usize, count_type: usize, q: Vec<S>) -> Self {
        let mut total = S::zero();
        for x in &q {
            total = total + x.clone();
        }
        let tail = S::one() - total;
        let support: Vec<usize> = (0..q.len()).filter(|&n| !q[n].is_zero()).collect();
        let offset = support.first().copied();
        let period = support.iter().fold(0, |g, &n| gcd(g, n - offset.unwrap()));
        SizeDistribution {
            root_type,
            count_type,
            q,
            tail,
            support_offset: offset,
            support_period: period,
        }
    }

    pub fn to_f64(&self) -> SizeDistribution<f64> {
        SizeDistribution {
            root_type: self.root_type,
            count_type: self.count_type,
            q: self.q.iter().map(Scalar::to_f64).collect(),
            tail: self.tail.to_f64(),
            support_offset: self.support_offset,
            support_period: self.support_period,
        }
    }

    /// Whether `n` lies on the support lattice found so far.
    pub fn on_lattice(&self, n: usize) -> bool {
        match self.support_offset {
            None => false,
            Some(o) if n < o => false,
            Some(o) => self.support_period == 0 && n == o || self.support_period > 0 && (n - o) % self.support_period == 0,
        }
    }
}

pub(crate) fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

pub(crate) struct SeriesSolution<S> {
    /// Coefficients of `F_t`, per type.
    pub f: Vec<Vec<S>>,
    /// Coefficients of `phi^(t)(F)`, per type.
    pub phi: Vec<Vec<S>>,
}

struct Word<S> {
    letters: Vec<usize>,
    prob: S,
    /// `prefix[m]` = coefficients of `prod_{l <= m} F_{w_l}`.
    prefix: Vec<Vec<S>>,
}

pub(crate) fn solve<S: Scalar>(model: &OffspringModel, j: usize, mode: Mode, n_max: usize) -> Result<SeriesSolution<S>> {
    let k = model.num_types();
    if j >= k {
        return Err(Error::InvalidArgument(format!("type {} outside 1..={k}", j + 1)));
    }
    let mut words: Vec<Vec<Word<S>>> = (0..k)
        .map(|t| {
            model
                .law(t)
                .iter()
                .filter(|wl| wl.prob.value > 0.0 || !num_traits::Zero::is_zero(&wl.prob.exact))
                .map(|wl| Word {
                    letters: wl.word.clone(),
                    prob: S::from_prob(&wl.prob.exact, wl.prob.value),
                    prefix: vec![Vec::with_capacity(n_max + 1); wl.word.len()],
                })
                .collect()
        })
        .collect();
    let others: Vec<usize> = (0..k).filter(|&t| t != j).collect();

    let f0 = zero_order(&words, j, &others)?;
    let mut f: Vec<Vec<S>> = f0.iter().map(|x| vec![x.clone()]).collect();
    let mut phi: Vec<Vec<S>> = vec![Vec::with_capacity(n_max + 1); k];
    for t in 0..k {
        let mut acc = S::zero();
        for w in words[t].iter_mut() {
            let mut p = S::one();
            for (m, &l) in w.letters.iter().enumerate() {
                p = p * f0[l].clone();
                w.prefix[m].push(p.clone());
            }
            acc = acc + w.prob.clone() * p;
        }
        phi[t].push(acc);
    }

    let inv = if others.is_empty() {
        Vec::new()
    } else {
        let a = jacobian(&words, &others, &f0);
        invert_i_minus(&a)?
    };

    for n in 1..=n_max {
        let fj = match mode {
            Mode::Count => phi[j][n - 1].clone(),
            Mode::Layer if n == 1 => S::one(),
            Mode::Layer => S::zero(),
        };
        for t in 0..k {
            f[t].push(if t == j { fj.clone() } else { S::zero() });
        }
        if !others.is_empty() {
            let c: Vec<S> = others
                .iter()
                .map(|&t| {
                    let mut acc = S::zero();
                    for w in &words[t] {
                        if let Some(p) = order_n_prefixes(w, &f, n).pop() {
                            acc = acc + w.prob.clone() * p;
                        }
                    }
                    acc
                })
                .collect();
            for (a, &t) in others.iter().enumerate() {
                let mut u = S::zero();
                for (b, cb) in c.iter().enumerate() {
                    if !inv[a][b].is_zero() && !cb.is_zero() {
                        u = u + inv[a][b].clone() * cb.clone();
                    }
                }
                f[t][n] = u;
            }
        }
        for t in 0..k {
            let mut acc = S::zero();
            for w in words[t].iter_mut() {
                let values = order_n_prefixes(w, &f, n);
                if let Some(p) = values.last() {
                    acc = acc + w.prob.clone() * p.clone();
                }
                for (prefix, v) in w.prefix.iter_mut().zip(values) {
                    prefix.push(v);
                }
            }
            phi[t].push(acc);
        }
    }
    Ok(SeriesSolution { f, phi })
}

/// Order-`n` coefficients of every prefix product of `w`, given orders
/// `< n` in `w.prefix` and the current order-`n` values of `f`.
fn order_n_prefixes<S: Scalar>(w: &Word<S>, f: &[Vec<S>], n: usize) -> Vec<S> {
    let mut out: Vec<S> = Vec::with_capacity(w.letters.len());
    for (m, &letter) in w.letters.iter().enumerate() {
        let fl = &f[letter];
        let value = match out.last() {
            None => fl[n].clone(),
            Some(prev_n) => {
                let prev = &w.prefix[m - 1];
                let mut acc = S::zero();
                for r in 0..n {
                    let (x, y) = (&prev[r], &fl[n - r]);
                    if !x.is_zero() && !y.is_zero() {
                        acc = acc + x.clone() * y.clone();
                    }
                }
                if !prev_n.is_zero() && !fl[0].is_zero() {
                    acc = acc + prev_n.clone() * fl[0].clone();
                }
                acc
            }
        };
        out.push(value);
    }
    out
}

/// Minimal fixed point of `x_t = phi^(t)(x)` on the non-`j` types with `x_j = 0`.
fn zero_order<S: Scalar>(words: &[Vec<Word<S>>], j: usize, others: &[usize]) -> Result<Vec<S>> {
    let k = words.len();
    let mut x = vec![S::zero(); k];
    let limit = if S::EXACT { others.len() as u64 + 2 } else { ZERO_ORDER_MAX_ITER };
    for _ in 0..limit {
        let mut next = vec![S::zero(); k];
        let mut delta = 0.0f64;
        for &t in others {
            let mut acc = S::zero();
            for w in &words[t] {
                let mut p = w.prob.clone();
                for &l in &w.letters {
                    p = p * x[l].clone();
                }
                acc = acc + p;
            }
            delta = delta.max(acc.abs_diff(&x[t]));
            next[t] = acc;
        }
        let stable = if S::EXACT {
            others.iter().all(|&t| next[t] == x[t])
        } else {
            delta < 1e-16
        };
        x = next;
        if stable {
            x[j] = S::zero();
            return Ok(x);
        }
    }
    if S::EXACT {
        Err(Error::RationalUnsupported(
            "the probability of no type-j vertex is not reached in finitely many steps".into(),
        ))
    } else {
        Err(Error::NonConvergentCoefficients(
            "zero-order fixed point did not stabilise".into(),
        ))
    }
}

/// `A_{tu} = d phi^(t) / d x_u` at `F(0)`, restricted to the non-`j` types.
fn jacobian<S: Scalar>(words: &[Vec<Word<S>>], others: &[usize], f0: &[S]) -> Vec<Vec<S>> {
    others
        .iter()
        .map(|&t| {
            others
                .iter()
                .map(|&u| {
                    let mut acc = S::zero();
                    for w in &words[t] {
                        for (l, &letter) in w.letters.iter().enumerate() {
                            if letter != u {
                                continue;
                            }
                            let mut p = w.prob.clone();
                            for (l2, &other) in w.letters.iter().enumerate() {
                                if l2 != l {
                                    p = p * f0[other].clone();
                                }
                            }
                            acc = acc + p;
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// `(I - A)^{-1}` by Gauss-Jordan elimination; entries that are zero by the
/// reachability structure of `A` are forced to exact zeros.
fn invert_i_minus<S: Scalar>(a: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
    let n = a.len();
    let mut m: Vec<Vec<S>> = (0..n)
        .map(|r| {
            let mut row: Vec<S> = (0..n)
                .map(|c| if r == c { S::one() - a[r][c].clone() } else { S::zero() - a[r][c].clone() })
                .collect();
            row.extend((0..n).map(|c| if r == c { S::one() } else { S::zero() }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].to_f64().abs().total_cmp(&m[y][col].to_f64().abs()))
            .unwrap();
        if m[pivot][col].is_zero() {
            return Err(Error::NonConvergentCoefficients(
                "types other than j form a critical subsystem".into(),
            ));
        }
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for c in 0..2 * n {
            m[col][c] = m[col][c].div(&p);
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for c in 0..2 * n {
                    let v = m[r][c].clone() - factor.clone() * m[col][c].clone();
                    m[r][c] = v;
                }
            }
        }
    }
    let mut reach = vec![vec![false; n]; n];
    for (r, row) in reach.iter_mut().enumerate() {
        let mut stack = vec![r];
        row[r] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                if !a[x][y].is_zero() && !row[y] {
                    row[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    let mut inv = vec![vec![S::zero(); n]; n];
    for r in 0..n {
        for c in 0..n {
            if reach[r][c] {
                let v = m[r][n + c].clone();
                if v.to_f64() < 0.0 && !S::EXACT {
                    return Err(Error::NonConvergentCoefficients("types other than j are not subcritical".into()));
                }
                inv[r][c] = v;
            }
        }
    }
    Ok(inv)
}

/// `q[n] = P^(i)(#T^(j) = n)` for `n <= n_max`.
pub fn exact_size_distribution<S: Scalar>(
    model: &OffspringModel,
    i: usize,
    j: usize,
    n_max: usize,
) -> Result<SizeDistribution<S>> {
    check_type(model, i)?;
    let sol = solve::<S>(model, j, Mode::Count, n_max)?;
    Ok(SizeDistribution::new(i, j, sol.f[i].clone()))
}

/// `p(r; i, j)`: law of the number of type-`j` vertices of a type-`i` tree
/// that have no type-`j` strict ancestor, i.e. of the number of trees of the
/// type-`j` projection.
pub fn component_count_distribution<S: Scalar>(
    model: &OffspringModel,
    i: usize,
    j: usize,
    r_max: usize,
) -> Result<SizeDistribution<S>> {
    check_type(model, i)?;
    let sol = solve::<S>(model, j, Mode::Layer, r_max)?;
    Ok(SizeDistribution::new(i, j, sol.f[i].clone()))
}

/// Offspring law of the type-`j` projection: the number of type-`j`
/// descendants of a type-`j` vertex with no type-`j` vertex in between.
pub fn projected_offspring_law<S: Scalar>(model: &OffspringModel, j: usize, r_max: usize) -> Result<SizeDistribution<S>> {
    let sol = solve::<S>(model, j, Mode::Layer, r_max)?;
    Ok(SizeDistribution::new(j, j, sol.phi[j].clone()))
}

fn check_type(model: &OffspringModel, i: usize) -> Result<()> {
    if i >= model.num_types() {
        return Err(Error::InvalidArgument(format!("type {} outside 1..={}", i + 1, model.num_types())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::fixtures;
    use num_rational::BigRational;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn mono1_exact() {
        let d = exact_size_distribution::<BigRational>(&fixtures::mono1(), 0, 0, 9).unwrap();
        assert_eq!(d.q[0], r(0, 1));
        assert_eq!(d.q[1], r(1, 2));
        assert_eq!(d.q[2], r(0, 1));
        assert_eq!(d.q[3], r(1, 8));
        assert_eq!(d.q[5], r(1, 16));
        // Catalan: q[2m+1] = C_m 2^-(2m+1)
        assert_eq!(d.q[7], r(5, 128));
        assert_eq!(d.q[9], r(14, 512));
        assert_eq!((d.support_offset, d.support_period), (Some(1), 2));
    }

    #[test]
    fn alt2_exact() {
        let d = exact_size_distribution::<BigRational>(&fixtures::alt2(), 0, 0, 7).unwrap();
        assert_eq!(d.q[1], r(1, 2));
        assert_eq!(d.q[2], r(0, 1));
        assert_eq!(d.q[3], r(1, 8));
        let mono = exact_size_distribution::<BigRational>(&fixtures::mono1(), 0, 0, 7).unwrap();
        assert_eq!(d.q, mono.q);
        // from a type-2 root: one type-1 child
        let d2 = exact_size_distribution::<BigRational>(&fixtures::alt2(), 1, 0, 7).unwrap();
        assert_eq!(d2.q, mono.q);
        // counting type 2 from a type-1 root
        let d3 = exact_size_distribution::<BigRational>(&fixtures::alt2(), 0, 1, 6).unwrap();
        assert_eq!(d3.q[0], r(1, 2));
        assert_eq!(d3.q[2], r(1, 8));
    }

    #[test]
    fn float_matches_rational() {
        for model in [fixtures::mono1(), fixtures::alt2()] {
            let e = exact_size_distribution::<BigRational>(&model, 0, 0, 40).unwrap();
            let f = exact_size_distribution::<f64>(&model, 0, 0, 40).unwrap();
            for n in 0..=40 {
                assert!((e.q[n].to_f64() - f.q[n]).abs() < 1e-15);
                assert_eq!(e.q[n].is_zero(), f.q[n] == 0.0);
            }
        }
    }

    #[test]
    fn three3_float_and_rational_agree() {
        let e = exact_size_distribution::<BigRational>(&fixtures::three3(), 0, 0, 30).unwrap();
        let f = exact_size_distribution::<f64>(&fixtures::three3(), 0, 0, 400).unwrap();
        for n in 0..=30 {
            assert!((e.q[n].to_f64() - f.q[n]).abs() < 1e-14);
        }
        let total: f64 = f.q.iter().sum::<f64>() + f.tail;
        assert!((total - 1.0).abs() < 1e-12);
        assert!(f.q.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(f.tail > 0.0 && f.tail < 0.2);
    }

    #[test]
    fn irrational_zero_order_needs_floats() {
        // P(no type-2 vertex) solves x = x^2/4 + 1/2, so x = 2 - sqrt(2)
        let model = OffspringModel::new(vec![
            vec![(vec![0, 0], r(1, 4)), (vec![1], r(1, 4)), (vec![], r(1, 2))],
            vec![(vec![0], r(1, 1))],
        ])
        .unwrap();
        assert!(matches!(
            exact_size_distribution::<BigRational>(&model, 0, 1, 5),
            Err(Error::RationalUnsupported(_))
        ));
        let f = exact_size_distribution::<f64>(&model, 0, 1, 5).unwrap();
        assert!((f.q[0] - (2.0 - 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn component_counts() {
        let p = component_count_distribution::<BigRational>(&fixtures::alt2(), 0, 0, 5).unwrap();
        assert_eq!(p.q[1], r(1, 1));
        let p = component_count_distribution::<BigRational>(&fixtures::alt2(), 1, 0, 5).unwrap();
        assert_eq!(p.q[1], r(1, 1));
        assert_eq!(p.tail, r(0, 1));
        // type-1 root, count first-layer type-2 vertices: 0 or 2
        let p = component_count_distribution::<BigRational>(&fixtures::alt2(), 0, 1, 5).unwrap();
        assert_eq!(p.q[0], r(1, 2));
        assert_eq!(p.q[2], r(1, 2));
    }

    #[test]
    fn projected_law_alt2_is_mono1() {
        let mu = projected_offspring_law::<BigRational>(&fixtures::alt2(), 0, 6).unwrap();
        assert_eq!(mu.q[0], r(1, 2));
        assert_eq!(mu.q[2], r(1, 2));
        assert_eq!(mu.tail, r(0, 1));
        assert_eq!(mu.support_period, 2);
    }

    #[test]
    fn lattice_membership() {
        let d = exact_size_distribution::<f64>(&fixtures::mono1(), 0, 0, 10).unwrap();
        assert!(d.on_lattice(5001));
        assert!(!d.on_lattice(5000));
        assert!(!d.on_lattice(0));
    }
}
