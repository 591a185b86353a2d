//! Spatial displacement laws, discrete snakes and the spatial variance
//! constant `Sigma`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::forest::PlanarForest;
use crate::scalar::parse_rational;
use crate::spectra::{OffspringModel, SpectralData};

const LAW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub y: Vec<f64>,
    #[serde(deserialize_with = "prob_literal")]
    pub prob: f64,
}

fn prob_literal<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Lit {
        Text(String),
        Number(f64),
    }
    match Lit::deserialize(d)? {
        Lit::Number(x) => Ok(x),
        Lit::Text(t) => {
            let q = parse_rational(&t).map_err(serde::de::Error::custom)?;
            Ok(num_traits::ToPrimitive::to_f64(&q).unwrap_or(f64::NAN))
        }
    }
}

/// Joint law of the displacements of the children of one parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpatialLaw {
    /// Finitely supported joint law; siblings may be correlated.
    Discrete { atoms: Vec<Atom> },
    /// Independent centred Gaussians with the given variances.
    Gaussian { var: Vec<f64> },
}

impl SpatialLaw {
    pub fn dirac(dim: usize) -> Self {
        SpatialLaw::Discrete {
            atoms: vec![Atom {
                y: vec![0.0; dim],
                prob: 1.0,
            }],
        }
    }

    /// Independent fair signs for each of `dim` children.
    pub fn independent_signs(dim: usize) -> Self {
        let n = 1usize << dim;
        let atoms = (0..n)
            .map(|mask| Atom {
                y: (0..dim).map(|l| if mask >> l & 1 == 1 { 1.0 } else { -1.0 }).collect(),
                prob: 1.0 / n as f64,
            })
            .collect();
        SpatialLaw::Discrete { atoms }
    }

    pub fn dimension(&self) -> usize {
        match self {
            SpatialLaw::Discrete { atoms } => atoms.first().map_or(0, |a| a.y.len()),
            SpatialLaw::Gaussian { var } => var.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invariant("spatial law", m));
        match self {
            SpatialLaw::Discrete { atoms } => {
                if atoms.is_empty() {
                    return bad("discrete law without atoms".into());
                }
                let dim = atoms[0].y.len();
                if atoms.iter().any(|a| a.y.len() != dim) {
                    return bad("atoms of different dimensions".into());
                }
                if atoms.iter().any(|a| !(a.prob >= 0.0) || a.y.iter().any(|y| !y.is_finite())) {
                    return bad("negative probability or non-finite atom".into());
                }
                let mass: f64 = atoms.iter().map(|a| a.prob).sum();
                if (mass - 1.0).abs() > LAW_TOL {
                    return bad(format!("atom probabilities sum to {mass}"));
                }
                for l in 0..dim {
                    let mean: f64 = atoms.iter().map(|a| a.prob * a.y[l]).sum();
                    if mean.abs() > LAW_TOL {
                        return Err(Error::invariant(
                            "centered",
                            format!("coordinate {} has mean {mean}", l + 1),
                        ));
                    }
                }
            }
            SpatialLaw::Gaussian { var } => {
                if var.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return bad("variances must be finite and nonnegative".into());
                }
            }
        }
        Ok(())
    }

    /// The law of `c * Y`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            SpatialLaw::Discrete { atoms } => SpatialLaw::Discrete {
                atoms: atoms
                    .iter()
                    .map(|a| Atom {
                        y: a.y.iter().map(|y| c * y).collect(),
                        prob: a.prob,
                    })
                    .collect(),
            },
            SpatialLaw::Gaussian { var } => SpatialLaw::Gaussian {
                var: var.iter().map(|v| c * c * v).collect(),
            },
        }
    }

    /// `E[Y_l^2]`.
    pub fn second_moment(&self, l: usize) -> f64 {
        match self {
            SpatialLaw::Discrete { atoms } => atoms.iter().map(|a| a.prob * a.y[l] * a.y[l]).sum(),
            SpatialLaw::Gaussian { var } => var[l],
        }
    }

    /// `E[|Y|_2^p]`.
    pub fn norm_moment(&self, p: f64) -> f64 {
        match self {
            SpatialLaw::Discrete { atoms } => atoms
                .iter()
                .map(|a| {
                    let r2: f64 = a.y.iter().map(|y| y * y).sum();
                    if r2 == 0.0 { 0.0 } else { a.prob * r2.powf(p / 2.0) }
                })
                .sum(),
            SpatialLaw::Gaussian { var } => gaussian_norm_moment(var, p),
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        match self {
            SpatialLaw::Discrete { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = atoms.len() - 1;
                for (idx, a) in atoms.iter().enumerate() {
                    acc += a.prob;
                    if u < acc {
                        chosen = idx;
                        break;
                    }
                }
                out.extend_from_slice(&atoms[chosen].y);
            }
            SpatialLaw::Gaussian { var } => {
                for v in var {
                    let z: f64 = StandardNormal.sample(rng);
                    out.push(v.sqrt() * z);
                }
            }
        }
    }
}

/// `E[(sum_l v_l Z_l^2)^(p/2)]` for independent standard normals `Z_l`.
fn gaussian_norm_moment(var: &[f64], p: f64) -> f64 {
    let var: Vec<f64> = var.iter().copied().filter(|&v| v > 0.0).collect();
    if var.is_empty() || p == 0.0 {
        return if p == 0.0 { 1.0 } else { 0.0 };
    }
    let m = var.len() as f64;
    let q = p / 2.0;
    if var.iter().all(|&v| (v - var[0]).abs() <= 1e-15 * var[0]) {
        // v * chi^2_m
        let v = var[0];
        return (q * (2.0 * v).ln() + ln_gamma(m / 2.0 + q) - ln_gamma(m / 2.0)).exp();
    }
    if q.fract() == 0.0 {
        return laplace_derivative(&var, q as usize, 0.0) * if q as usize % 2 == 0 { 1.0 } else { -1.0 };
    }
    // X^q = X^n X^(q-n), X^(-a) = Gamma(a)^-1 int t^(a-1) e^(-tX) dt, with t = e^u
    let n = q.floor() as usize + 2;
    let a = n as f64 - q;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let (lo, hi, steps) = (-60.0f64, 60.0f64, 24_000usize);
    let du = (hi - lo) / steps as f64;
    let mut sum = 0.0;
    for s in 0..=steps {
        let u = lo + s as f64 * du;
        let t = u.exp();
        let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
        sum += w * (a * u).exp() * sign * laplace_derivative(&var, n, t);
    }
    sum * du / statrs::function::gamma::gamma(a)
}

/// `n`-th derivative at `t` of `L(t) = prod_l (1 + 2 v_l t)^(-1/2)`.
fn laplace_derivative(var: &[f64], n: usize, t: f64) -> f64 {
    // L = exp(g); g^(k)(t) = -1/2 sum (-1)^(k-1) (k-1)! (2v)^k / (1+2vt)^k
    let g = |k: usize| -> f64 {
        let fact: f64 = (1..k).map(|x| x as f64).product();
        let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
        -0.5 * sign * fact * var.iter().map(|&v| (2.0 * v / (1.0 + 2.0 * v * t)).powi(k as i32)).sum::<f64>()
    };
    let l0: f64 = var.iter().map(|&v| (1.0 + 2.0 * v * t).powf(-0.5)).product();
    let mut d = vec![l0];
    for m in 1..=n {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for k in 0..m {
            acc += binom * g(k + 1) * d[m - 1 - k];
            binom = binom * (m - 1 - k) as f64 / (k + 1) as f64;
        }
        d.push(acc);
    }
    d[n]
}

/// A forest with per-vertex displacements `y` and positions `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialForest {
    pub forest: PlanarForest,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
}

/// Draws the children's displacements of every vertex jointly from the law
/// of its (type, child word), independently across vertices. Missing laws
/// default to a Dirac mass at 0 unless `strict`.
pub fn attach_spatial<R: Rng + ?Sized>(
    f: &PlanarForest,
    model: &OffspringModel,
    rng: &mut R,
    strict: bool,
) -> Result<SpatialForest> {
    let n = f.len();
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut buf = Vec::new();
    for v in 0..n {
        if let Some(p) = f.parent(v) {
            s[v] = s[p] + y[v];
        }
        if f.children_count(v) == 0 {
            continue;
        }
        let word = f.child_word(v);
        match model.spatial_law(f.type_of(v), &word) {
            Some(law) => {
                law.sample_into(rng, &mut buf);
                for (c, dy) in f.children(v).zip(&buf) {
                    y[c] = *dy;
                }
            }
            None if strict => {
                return Err(Error::MissingLaw {
                    ty: f.type_of(v) + 1,
                    word: crate::spectra::one_based(&word),
                })
            }
            None => {}
        }
    }
    Ok(SpatialForest {
        forest: f.clone(),
        y,
        s,
    })
}

/// Positions in depth-first order.
pub fn snake_process(sf: &SpatialForest) -> Vec<f64> {
    sf.s.clone()
}

/// `Sigma^2 = sum_i a_i sum_w zeta_i(w) sum_l b_{w_l} E[y_l^2]`.
pub fn big_sigma_squared(model: &OffspringModel, spec: &SpectralData) -> f64 {
    model
        .realized_words()
        .filter_map(|(i, wl)| {
            let law = model.spatial_law(i, &wl.word)?;
            let inner: f64 = wl
                .word
                .iter()
                .enumerate()
                .map(|(l, &t)| spec.b[t] * law.second_moment(l))
                .sum();
            Some(spec.a[i] * wl.prob.value * inner)
        })
        .sum()
}

pub fn big_sigma(model: &OffspringModel, spec: &SpectralData) -> Result<f64> {
    let s2 = big_sigma_squared(model, spec);
    if s2 <= 0.0 {
        return Err(Error::DegenerateSpatial);
    }
    Ok(s2.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentEntry {
    #[serde(rename = "type")]
    pub ty: usize,
    pub word: Vec<usize>,
    pub moment: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub exponent: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub entries: Vec<MomentEntry>,
    pub max_ratio: f64,
}

/// `M_{i,w} = E|y|^exponent` for every realized nonempty word, and the
/// largest `M_{i,w} / |w|^D`. Types and words are reported 1-based.
pub fn check_moment_condition(model: &OffspringModel, exponent: f64, d: f64) -> MomentReport {
    let entries: Vec<MomentEntry> = model
        .realized_words()
        .filter(|(_, wl)| !wl.word.is_empty())
        .map(|(i, wl)| {
            let moment = model
                .spatial_law(i, &wl.word)
                .map_or(0.0, |law| law.norm_moment(exponent));
            MomentEntry {
                ty: i + 1,
                word: crate::spectra::one_based(&wl.word),
                moment,
                ratio: moment / (wl.word.len() as f64).powf(d),
            }
        })
        .collect();
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    MomentReport {
        exponent,
        d,
        entries,
        max_ratio,
    }
}
