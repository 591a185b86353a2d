#![allow(dead_code)]

use std::path::PathBuf;

use mgw::spectra::{mean_matrix, perron, project_unordered, is_irreducible, OffspringModel};
use mgw::PlanarForest;
use rand::{Rng, SeedableRng};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Random irreducible model rescaled to criticality by shrinking every
/// non-empty word's mass by `1/rho` and moving the rest to the empty word.
pub fn random_critical_model(k: usize, seed: u64) -> OffspringModel {
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
        let scaled = raw
            .into_iter()
            .map(|law| {
                let mut out: Vec<(Vec<usize>, f64)> = law.into_iter().map(|(w, p)| (w, p / rho)).collect();
                let mass: f64 = out.iter().map(|(_, p)| p).sum();
                out.push((vec![], 1.0 - mass));
                out
            })
            .collect();
        return OffspringModel::from_f64(scaled).unwrap();
    }
}

/// Depths by walking parent pointers.
pub fn naive_heights(f: &PlanarForest) -> Vec<u32> {
    (0..f.len())
        .map(|v| {
            let mut d = 0;
            let mut u = v;
            while let Some(p) = f.parent(u) {
                d += 1;
                u = p;
            }
            d
        })
        .collect()
}

/// Lukasiewicz walk from child counts: `V_{m+1} = V_m + c(v_m) - 1`.
pub fn naive_walk(f: &PlanarForest) -> Vec<i64> {
    let mut v = vec![0i64];
    for u in 0..f.len() {
        let last = *v.last().unwrap();
        v.push(last + f.children_count(u) as i64 - 1);
    }
    v
}
