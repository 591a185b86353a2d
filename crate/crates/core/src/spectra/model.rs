//! Ordered offspring distributions and their JSON model files.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{is_nonnegative, parse_rational, rational_from_f64};
use crate::snake::SpatialLaw;

/// Tolerance on the total mass of every offspring law.
pub const MASS_TOL: f64 = 1e-12;

/// A probability carried both exactly and as a float.
#[derive(Debug, Clone, PartialEq)]
pub struct Prob {
    pub value: f64,
    pub exact: BigRational,
}

impl Prob {
    pub fn from_exact(exact: BigRational) -> Self {
        let value = exact.to_f64().unwrap_or(f64::NAN);
        Prob { value, exact }
    }

    pub fn from_f64(value: f64) -> Result<Self> {
        Ok(Prob {
            value,
            exact: rational_from_f64(value)?,
        })
    }

    pub fn zero() -> Self {
        Prob::from_exact(BigRational::zero())
    }
}

/// One atom of an ordered offspring law: the child-type word and its mass.
#[derive(Debug, Clone, PartialEq)]
pub struct WordLaw {
    pub word: Vec<usize>,
    pub prob: Prob,
}

/// Ordered offspring distribution over finite type-words, with optional
/// spatial displacement laws keyed by `(parent type, child word)`.
///
/// Types are 0-based. Only finitely supported laws are representable.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringModel {
    k: usize,
    laws: Vec<Vec<WordLaw>>,
    spatial: BTreeMap<(usize, Vec<usize>), SpatialLaw>,
}

impl OffspringModel {
    /// Validates and builds a model from exact per-type word laws.
    pub fn new(laws: Vec<Vec<(Vec<usize>, BigRational)>>) -> Result<Self> {
        let k = laws.len();
        let laws = laws
            .into_iter()
            .map(|law| {
                law.into_iter()
                    .map(|(word, p)| WordLaw {
                        word,
                        prob: Prob::from_exact(p),
                    })
                    .collect()
            })
            .collect();
        Self::from_word_laws(k, laws)
    }

    /// Same as [`OffspringModel::new`] with float probabilities.
    pub fn from_f64(laws: Vec<Vec<(Vec<usize>, f64)>>) -> Result<Self> {
        let k = laws.len();
        let mut out = Vec::with_capacity(k);
        for law in laws {
            let mut row = Vec::with_capacity(law.len());
            for (word, p) in law {
                row.push(WordLaw {
                    word,
                    prob: Prob::from_f64(p)?,
                });
            }
            out.push(row);
        }
        Self::from_word_laws(k, out)
    }

    fn from_word_laws(k: usize, laws: Vec<Vec<WordLaw>>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invariant("type count", "K must be positive"));
        }
        for (i, law) in laws.iter().enumerate() {
            if law.is_empty() {
                return Err(Error::invariant(
                    "probability mass",
                    format!("type {} has no offspring words", i + 1),
                ));
            }
            let mut seen = BTreeSet::new();
            let mut total = 0.0;
            for wl in law {
                if let Some(&bad) = wl.word.iter().find(|&&t| t >= k) {
                    return Err(Error::invariant(
                        "word letters",
                        format!("type {} has a word with letter {} > K = {k}", i + 1, bad + 1),
                    ));
                }
                if !seen.insert(wl.word.clone()) {
                    return Err(Error::invariant(
                        "duplicate words",
                        format!("type {} lists word {:?} twice", i + 1, one_based(&wl.word)),
                    ));
                }
                if !is_nonnegative(&wl.prob.exact) || wl.prob.value > 1.0 + MASS_TOL {
                    return Err(Error::invariant(
                        "probability range",
                        format!("type {} has probability {} outside [0,1]", i + 1, wl.prob.value),
                    ));
                }
                total += wl.prob.value;
            }
            if (total - 1.0).abs() > MASS_TOL {
                return Err(Error::invariant(
                    "probability mass",
                    format!("type {} offspring law sums to {total}", i + 1),
                ));
            }
        }
        Ok(OffspringModel {
            k,
            laws,
            spatial: BTreeMap::new(),
        })
    }

    /// Attaches a displacement law for parents of type `ty` with child word `word`.
    pub fn with_spatial(mut self, ty: usize, word: Vec<usize>, law: SpatialLaw) -> Result<Self> {
        self.insert_spatial(ty, word, law)?;
        Ok(self)
    }

    fn insert_spatial(&mut self, ty: usize, word: Vec<usize>, law: SpatialLaw) -> Result<()> {
        if ty >= self.k || word.iter().any(|&t| t >= self.k) {
            return Err(Error::invariant(
                "spatial key",
                format!("type {} / word {:?} outside [K]", ty + 1, one_based(&word)),
            ));
        }
        if law.dimension() != word.len() {
            return Err(Error::invariant(
                "spatial dimension",
                format!(
                    "law for type {} word {:?} has dimension {} instead of {}",
                    ty + 1,
                    one_based(&word),
                    law.dimension(),
                    word.len()
                ),
            ));
        }
        law.validate()?;
        self.spatial.insert((ty, word), law);
        Ok(())
    }

    pub fn num_types(&self) -> usize {
        self.k
    }

    pub fn law(&self, ty: usize) -> &[WordLaw] {
        &self.laws[ty]
    }

    pub fn laws(&self) -> &[Vec<WordLaw>] {
        &self.laws
    }

    pub fn has_spatial(&self) -> bool {
        !self.spatial.is_empty()
    }

    pub fn spatial_law(&self, ty: usize, word: &[usize]) -> Option<&SpatialLaw> {
        self.spatial.get(&(ty, word.to_vec()))
    }

    pub fn spatial_laws(&self) -> &BTreeMap<(usize, Vec<usize>), SpatialLaw> {
        &self.spatial
    }

    /// Returns a copy whose displacements are all multiplied by `c`.
    pub fn scaled_spatial(&self, c: f64) -> Self {
        let mut out = self.clone();
        for law in out.spatial.values_mut() {
            *law = law.scaled(c);
        }
        out
    }

    /// `(type, word)` pairs charged by the model.
    pub fn realized_words(&self) -> impl Iterator<Item = (usize, &WordLaw)> {
        self.laws
            .iter()
            .enumerate()
            .flat_map(|(i, law)| law.iter().filter(|wl| wl.prob.value > 0.0).map(move |wl| (i, wl)))
    }

    /// Probability generating function `phi^(i)(s)`.
    pub fn pgf(&self, ty: usize, s: &[f64]) -> f64 {
        self.laws[ty]
            .iter()
            .map(|wl| wl.prob.value * wl.word.iter().map(|&t| s[t]).product::<f64>())
            .sum()
    }

    /// Probability that a type-`ty` parent has word `word`.
    pub fn word_prob(&self, ty: usize, word: &[usize]) -> f64 {
        self.laws[ty]
            .iter()
            .find(|wl| wl.word == word)
            .map_or(0.0, |wl| wl.prob.value)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_model()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ModelFile::from_model(self)).expect("model serialization")
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&ModelFile::from_model(self)).expect("model serialization");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

pub(crate) fn one_based(word: &[usize]) -> Vec<usize> {
    word.iter().map(|t| t + 1).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ProbLiteral {
    Text(String),
    Number(f64),
}

impl ProbLiteral {
    fn to_rational(&self) -> Result<BigRational> {
        match self {
            ProbLiteral::Text(t) => parse_rational(t),
            ProbLiteral::Number(x) => rational_from_f64(*x),
        }
    }
}

fn rational_literal(q: &BigRational) -> ProbLiteral {
    if q.denom().is_one() {
        ProbLiteral::Text(q.numer().to_string())
    } else {
        ProbLiteral::Text(format!("{}/{}", q.numer(), q.denom()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WordEntry {
    word: Vec<usize>,
    prob: ProbLiteral,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(rename = "K")]
    k: usize,
    offspring: BTreeMap<String, Vec<WordEntry>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    spatial: BTreeMap<String, SpatialLaw>,
}

fn parse_type_label(label: &str, k: usize) -> Result<usize> {
    let t: usize = label
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad type label {label:?}")))?;
    if t == 0 || t > k {
        return Err(Error::invariant("word letters", format!("type label {t} outside 1..={k}")));
    }
    Ok(t - 1)
}

fn to_zero_based(word: &[usize], k: usize) -> Result<Vec<usize>> {
    word.iter()
        .map(|&t| {
            if t == 0 || t > k {
                Err(Error::invariant("word letters", format!("letter {t} outside 1..={k}")))
            } else {
                Ok(t - 1)
            }
        })
        .collect()
}

impl ModelFile {
    fn into_model(self) -> Result<OffspringModel> {
        let k = self.k;
        if k == 0 {
            return Err(Error::invariant("type count", "K must be positive"));
        }
        let mut laws: Vec<Option<Vec<WordLaw>>> = vec![None; k];
        for (label, entries) in &self.offspring {
            let i = parse_type_label(label, k)?;
            let mut law = Vec::with_capacity(entries.len());
            for e in entries {
                law.push(WordLaw {
                    word: to_zero_based(&e.word, k)?,
                    prob: Prob::from_exact(e.prob.to_rational()?),
                });
            }
            laws[i] = Some(law);
        }
        let laws = laws
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                l.ok_or_else(|| {
                    Error::invariant("probability mass", format!("type {} has no offspring law", i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = OffspringModel::from_word_laws(k, laws)?;
        for (key, law) in self.spatial {
            let (ty, word) = key
                .split_once('|')
                .ok_or_else(|| Error::Parse(format!("spatial key {key:?} is not of the form i|w1,w2")))?;
            let ty = parse_type_label(ty, k)?;
            let word: Vec<usize> = if word.trim().is_empty() {
                Vec::new()
            } else {
                word.split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Parse(format!("bad spatial key {key:?}")))
                    })
                    .collect::<Result<_>>()?
            };
            let word = to_zero_based(&word, k)?;
            model.insert_spatial(ty, word, law)?;
        }
        Ok(model)
    }

    fn from_model(model: &OffspringModel) -> Self {
        let offspring = model
            .laws
            .iter()
            .enumerate()
            .map(|(i, law)| {
                let entries = law
                    .iter()
                    .map(|wl| WordEntry {
                        word: one_based(&wl.word),
                        prob: rational_literal(&wl.prob.exact),
                    })
                    .collect();
                ((i + 1).to_string(), entries)
            })
            .collect();
        let spatial = model
            .spatial
            .iter()
            .map(|((ty, word), law)| {
                let w: Vec<String> = one_based(word).iter().map(|t| t.to_string()).collect();
                (format!("{}|{}", ty + 1, w.join(",")), law.clone())
            })
            .collect();
        ModelFile {
            k: model.k,
            offspring,
            spatial,
        }
    }
}

/// Fixture models used in tests, docs and the acceptance suite.
pub mod fixtures {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    /// One type; two children or none with probability 1/2 each.
    pub fn mono1() -> OffspringModel {
        OffspringModel::new(vec![vec![(vec![0, 0], q(1, 2)), (vec![], q(1, 2))]]).unwrap()
    }

    /// Two alternating types: type 1 has two type-2 children or none, type 2
    /// has exactly one type-1 child.
    pub fn alt2() -> OffspringModel {
        OffspringModel::new(vec![
            vec![(vec![1, 1], q(1, 2)), (vec![], q(1, 2))],
            vec![(vec![0], q(1, 1))],
        ])
        .unwrap()
    }

    /// [`alt2`] with independent symmetric +-1 displacements for every child.
    pub fn alt2_spatial() -> OffspringModel {
        let pm = |dim: usize| SpatialLaw::independent_signs(dim);
        alt2()
            .with_spatial(0, vec![1, 1], pm(2))
            .unwrap()
            .with_spatial(1, vec![0], pm(1))
            .unwrap()
    }

    /// A critical, aperiodic three-type model with every row of the mean
    /// matrix summing to one, so `b = (1,1,1)` and `a = (14,12,15)/41`.
    pub fn three3() -> OffspringModel {
        OffspringModel::new(vec![
            vec![(vec![1, 2], q(1, 2)), (vec![], q(1, 2))],
            vec![
                (vec![0, 0], q(1, 4)),
                (vec![2], q(1, 4)),
                (vec![0], q(1, 4)),
                (vec![], q(1, 4)),
            ],
            vec![(vec![2, 0, 1], q(1, 3)), (vec![], q(2, 3))],
        ])
        .unwrap()
    }

    /// Every type has exactly one child: `i -> i+1 mod K`.
    pub fn permutation_chain(k: usize) -> OffspringModel {
        OffspringModel::new((0..k).map(|i| vec![(vec![(i + 1) % k], q(1, 1))]).collect()).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALT2_JSON: &str = r#"{"K":2,"offspring":{"1":[{"word":[2,2],"prob":"1/2"},{"word":[],"prob":"1/2"}],"2":[{"word":[1],"prob":"1"}]}}"#;

    #[test]
    fn parses_alt2_file() {
        let m = OffspringModel::from_json_str(ALT2_JSON).unwrap();
        assert_eq!(m, fixtures::alt2());
    }

    #[test]
    fn json_roundtrip_preserves_model_and_hash() {
        let m = fixtures::alt2_spatial();
        let text = serde_json::to_string(&m.to_json_value()).unwrap();
        let back = OffspringModel::from_json_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash(), m.hash());
        assert_ne!(fixtures::alt2().hash(), m.hash());
    }

    #[test]
    fn accepts_decimal_and_numeric_probabilities() {
        let text = r#"{"K":1,"offspring":{"1":[{"word":[1,1],"prob":0.5},{"word":[],"prob":"0.5"}]}}"#;
        assert_eq!(OffspringModel::from_json_str(text).unwrap(), fixtures::mono1());
    }

    #[test]
    fn rejects_invalid_models() {
        let cases = [
            (r#"{"K":1,"offspring":{"1":[{"word":[1,1],"prob":"1/2"}]}}"#, "probability mass"),
            (r#"{"K":1,"offspring":{"1":[{"word":[2],"prob":"1"}]}}"#, "word letters"),
            (
                r#"{"K":1,"offspring":{"1":[{"word":[1],"prob":"1/2"},{"word":[1],"prob":"1/2"}]}}"#,
                "duplicate words",
            ),
            (r#"{"K":2,"offspring":{"1":[{"word":[],"prob":"1"}]}}"#, "probability mass"),
            (
                r#"{"K":1,"offspring":{"1":[{"word":[],"prob":"3/2"},{"word":[1],"prob":"-1/2"}]}}"#,
                "probability range",
            ),
        ];
        for (text, what) in cases {
            match OffspringModel::from_json_str(text) {
                Err(Error::Invariant { invariant, .. }) => assert_eq!(invariant, what, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(OffspringModel::from_json_str("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn parses_spatial_section() {
        let text = r#"{"K":2,"offspring":{"1":[{"word":[2,2],"prob":"1/2"},{"word":[],"prob":"1/2"}],"2":[{"word":[1],"prob":"1"}]},
            "spatial":{"1|2,2":{"kind":"discrete","atoms":[{"y":[1,1],"prob":"1/4"},{"y":[1,-1],"prob":"1/4"},{"y":[-1,1],"prob":"1/4"},{"y":[-1,-1],"prob":"1/4"}]},
                       "2|1":{"kind":"gaussian","var":[2.0]}}}"#;
        let m = OffspringModel::from_json_str(text).unwrap();
        assert!(m.spatial_law(0, &[1, 1]).is_some());
        assert_eq!(m.spatial_law(1, &[0]), Some(&SpatialLaw::Gaussian { var: vec![2.0] }));

        let wrong_dim = r#"{"K":1,"offspring":{"1":[{"word":[1],"prob":"1/2"},{"word":[],"prob":"1/2"}]},
            "spatial":{"1|1":{"kind":"gaussian","var":[1,1]}}}"#;
        assert!(matches!(
            OffspringModel::from_json_str(wrong_dim),
            Err(Error::Invariant { invariant: "spatial dimension", .. })
        ));
    }

    #[test]
    fn pgf_is_one_at_one() {
        let m = fixtures::three3();
        for i in 0..3 {
            assert!((m.pgf(i, &[1.0, 1.0, 1.0]) - 1.0).abs() < 1e-15);
        }
        assert_eq!(fixtures::alt2().pgf(0, &[0.3, 0.0]), 0.5);
    }
}
