use rayon::prelude::*;
use serde_json::json;

use super::stats::{
    batch_means_se, batch_variance_se, brownian_abs_inf_mean, brownian_abs_mean, covariance_with_se,
    excursion_max_mean, half_normal_cdf, kolmogorov_pvalue, ks_statistic, mean, quantile, variance,
};
use super::{ExperimentConfig, ExperimentReport, RawTable, Statistic, Tolerance};
use crate::error::{Error, Result};
use crate::reduce::{height_tail, local_limit};
use crate::sampler::{
    sample_forest, sample_tree, ConditionedSampler, ForestStream, OffspringSampler, RngStream, Roots, SampleOptions,
    SpineSampler, StreamRng,
};
use crate::snake::big_sigma_squared;
use crate::spectra::{one_based, sigma, size_biased, OffspringModel, SpectralData};

/// Stream-id blocks, so that auxiliary samplers never reuse replicate streams.
const MAIN_STREAMS: u64 = 0;
const SPINE_STREAMS: u64 = 1 << 40;
const REFERENCE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Runs `f` once per replicate on its own stream. Replicates that hit the
/// vertex cap are counted and dropped; any other error aborts.
fn replicates<T, F>(cfg: &ExperimentConfig, block: u64, f: F) -> Result<(Vec<T>, u64)>
where
    T: Send,
    F: Fn(StreamRng) -> Result<T> + Sync + Send,
{
    let one = |r: usize| f(RngStream::new(cfg.seed, block + r as u64).rng());
    let results: Vec<Result<T>> = if cfg.parallel {
        (0..cfg.reps).into_par_iter().map(one).collect()
    } else {
        (0..cfg.reps).map(one).collect()
    };
    let mut out = Vec::with_capacity(results.len());
    let mut caps = 0;
    for r in results {
        match r {
            Ok(x) => out.push(x),
            Err(Error::CapExceeded { .. }) => caps += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, caps))
}

struct Setup {
    spec: SpectralData,
    sigma: f64,
}

fn setup(model: &OffspringModel, types: &[usize]) -> Result<Setup> {
    let spec = SpectralData::compute(model)?;
    spec.require_critical()?;
    let sigma = sigma(&spec)?;
    let k = model.num_types();
    if let Some(&t) = types.iter().find(|&&t| t >= k) {
        return Err(Error::InvalidArgument(format!("type {} outside 1..={k}", t + 1)));
    }
    Ok(Setup { spec, sigma })
}

fn require_roots(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.roots.is_empty() {
        return Err(Error::InvalidArgument("empty root sequence".into()));
    }
    Ok(())
}

fn require_reps(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.reps < 2 {
        return Err(Error::InsufficientSamples(format!("need at least 2 replicates, got {}", cfg.reps)));
    }
    Ok(())
}

fn grid_index(n: usize, s: f64) -> Result<usize> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::InvalidArgument(format!("time s = {s} must be finite and >= 0")));
    }
    Ok((n as f64 * s).floor() as usize)
}

fn stream<'a>(sampler: &'a OffspringSampler, cfg: &ExperimentConfig, rng: StreamRng) -> ForestStream<'a> {
    ForestStream::new(sampler, Roots::Cycle(cfg.roots.clone()), rng, SampleOptions::with_cap(cfg.vertex_cap))
}

fn raw(columns: &[&str], rows: Vec<Vec<f64>>) -> RawTable {
    RawTable {
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows,
    }
}

fn finish(mut report: ExperimentReport, reps: usize, caps: u64, forced_inconclusive: bool) -> ExperimentReport {
    report.replicates = reps;
    report.cap_exceeded_count = caps;
    report.finish(forced_inconclusive);
    report
}

/// `H_{floor(ns)} / sqrt(n)` against `(2/sigma)|B_s|`.
pub fn exp_height_fdd(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_roots(cfg)?;
    require_reps(cfg)?;
    let st = setup(model, &cfg.roots)?;
    let k = grid_index(cfg.n, cfg.s)?;
    let sampler = OffspringSampler::new(model);
    let sqrt_n = (cfg.n as f64).sqrt();
    let (xs, caps) = replicates(cfg, MAIN_STREAMS, |rng| {
        let mut fs = stream(&sampler, cfg, rng);
        let mut h = 0;
        for _ in 0..=k {
            h = fs.next_vertex().expect("cyclic roots never run out").depth;
        }
        Ok(h as f64 / sqrt_n)
    })?;
    let mut report = ExperimentReport::new(
        "height-fdd",
        json!({"roots": one_based(&cfg.roots), "n": cfg.n, "reps": cfg.reps, "seed": cfg.seed, "s": cfg.s, "k": k}),
    );
    let scale = 2.0 / st.sigma * cfg.s.sqrt();
    let m = mean(&xs);
    if k == 0 {
        let max = xs.iter().cloned().fold(0.0, f64::max);
        report.statistics.push(Statistic::new(
            "max_sample",
            max,
            0.0,
            0.0,
            "H_0 = 0",
            Tolerance::Absolute(0.0),
        ));
    } else {
        let d = ks_statistic(&xs, |x| half_normal_cdf(x, scale))?;
        report.extras.insert("ks_pvalue".into(), kolmogorov_pvalue(d, xs.len()));
        report.statistics.push(Statistic::new(
            "ks_distance",
            d,
            0.0,
            0.03,
            "sup |F_n - F| against |N(0, (2/sigma)^2 s)|",
            Tolerance::Below(0.03),
        ));
        report.statistics.push(Statistic::new(
            "mean",
            m,
            batch_means_se(&xs),
            scale * brownian_abs_mean(1.0),
            "(2/sigma) E|B_s| = (2/sigma) sqrt(2s/pi)",
            Tolerance::Relative(0.03),
        ));
    }
    report.extras.insert("variance".into(), variance(&xs));
    report.extras.insert("sigma".into(), st.sigma);
    report.raw = raw(&["height_scaled"], xs.iter().map(|&x| vec![x]).collect());
    Ok(finish(report, cfg.reps, caps, false))
}

/// `Lambda_i(floor(ns)) / n` against `a_i s` for every type.
pub fn exp_type_frequency(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_roots(cfg)?;
    require_reps(cfg)?;
    let st = setup(model, &cfg.roots)?;
    let k = grid_index(cfg.n, cfg.s)?;
    let kk = model.num_types();
    let sampler = OffspringSampler::new(model);
    let (rows, caps) = replicates(cfg, MAIN_STREAMS, |rng| {
        let mut fs = stream(&sampler, cfg, rng);
        let mut counts = vec![0u64; kk];
        for _ in 0..k {
            counts[fs.next_vertex().expect("cyclic roots never run out").ty] += 1;
        }
        Ok(counts.into_iter().map(|c| c as f64 / cfg.n as f64).collect::<Vec<f64>>())
    })?;
    let mut report = ExperimentReport::new(
        "type-frequency",
        json!({"roots": one_based(&cfg.roots), "n": cfg.n, "reps": cfg.reps, "seed": cfg.seed, "s": cfg.s, "k": k}),
    );
    for ty in 0..kk {
        let col: Vec<f64> = rows.iter().map(|r| r[ty]).collect();
        report.statistics.push(Statistic::new(
            &format!("lambda_{}", ty + 1),
            mean(&col),
            batch_means_se(&col),
            st.spec.a[ty] * cfg.s,
            "a_i s",
            Tolerance::Relative(0.01),
        ));
        report.extras.insert(format!("variance_{}", ty + 1), variance(&col));
    }
    let names: Vec<String> = (1..=kk).map(|t| format!("lambda_{t}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    report.raw = raw(&names, rows);
    Ok(finish(report, cfg.reps, caps, false))
}

/// `E[Upsilon_{floor(ns)} / sqrt(n)]` against `(sigma/b_i) E[L^0_s]` for a
/// constant root sequence.
pub fn exp_upsilon(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_roots(cfg)?;
    require_reps(cfg)?;
    let i = cfg.roots[0];
    if cfg.roots.iter().any(|&r| r != i) {
        return Err(Error::InvalidArgument("upsilon needs a constant root sequence".into()));
    }
    let st = setup(model, &[i])?;
    let k = grid_index(cfg.n, cfg.s)?;
    let sampler = OffspringSampler::new(model);
    let sqrt_n = (cfg.n as f64).sqrt();
    let (xs, caps) = replicates(cfg, MAIN_STREAMS, |rng| {
        let mut fs = stream(&sampler, cfg, rng);
        let mut c = 0;
        for _ in 0..=k {
            c = fs.next_vertex().expect("cyclic roots never run out").component;
        }
        Ok(c as f64 / sqrt_n)
    })?;
    let mut report = ExperimentReport::new(
        "upsilon",
        json!({"root_type": i + 1, "n": cfg.n, "reps": cfg.reps, "seed": cfg.seed, "s": cfg.s, "k": k}),
    );
    let target = st.sigma / st.spec.b[i] * brownian_abs_mean(cfg.s);
    let tol = if k == 0 { Tolerance::Absolute(1.0 / sqrt_n) } else { Tolerance::Relative(0.05) };
    report.statistics.push(Statistic::new(
        "mean",
        mean(&xs),
        batch_means_se(&xs),
        target,
        "(sigma/b_i) E[L^0_s] = (sigma/b_i) sqrt(2s/pi)",
        tol,
    ));
    report.extras.insert("variance".into(), variance(&xs));
    report.raw = raw(&["upsilon_scaled"], xs.iter().map(|&x| vec![x]).collect());
    Ok(finish(report, cfg.reps, caps, false))
}

/// Trees conditioned on `#T^(j) = n`: `E[max H / sqrt(n)]` against
/// `(2/(sigma sqrt(a_j))) E[max B^ex]`, and type fractions along the walk.
pub fn exp_conditioned_height(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_reps(cfg)?;
    let (i, j, n) = (cfg.i, cfg.j, cfg.n);
    let st = setup(model, &[i, j])?;
    let cs = ConditionedSampler::new(model, i, j, n)?;
    let kk = model.num_types();
    let sqrt_n = (n as f64).sqrt();
    let (rows, caps) = replicates(cfg, MAIN_STREAMS, |mut rng| {
        let c = cs.sample(&mut rng, cfg.max_attempts, cfg.vertex_cap)?;
        let t = &c.tree;
        let size = t.len();
        let max_h = (0..size).map(|v| t.depth(v)).max().unwrap_or(0);
        let half = size / 2;
        let mut row = vec![max_h as f64 / sqrt_n, size as f64, c.attempts as f64];
        let mut counts = vec![0usize; kk];
        for v in 0..size {
            if v == half {
                row.extend(counts.iter().map(|&x| x as f64 / size as f64));
            }
            counts[t.type_of(v)] += 1;
        }
        row.extend(counts.iter().map(|&x| x as f64 / size as f64));
        Ok(row)
    })?;
    let mut report = ExperimentReport::new(
        "conditioned-height",
        json!({"root_type": i + 1, "count_type": j + 1, "n": n, "reps": cfg.reps, "seed": cfg.seed}),
    );
    let col = |c: usize| -> Vec<f64> { rows.iter().map(|r| r[c]).collect() };
    let hs = col(0);
    report.statistics.push(Statistic::new(
        "mean_max_height",
        mean(&hs),
        batch_means_se(&hs),
        2.0 / (st.sigma * st.spec.a[j].sqrt()) * excursion_max_mean(),
        "(2/(sigma sqrt(a_j))) E[max B^ex] = (2/(sigma sqrt(a_j))) sqrt(pi/2)",
        Tolerance::Relative(0.07),
    ));
    for (offset, t) in [(3, 0.5), (3 + kk, 1.0)] {
        for ty in 0..kk {
            let c = col(offset + ty);
            report.statistics.push(Statistic::new(
                &format!("type_fraction_{}_t{t}", ty + 1),
                mean(&c),
                batch_means_se(&c),
                st.spec.a[ty] * t,
                "a_k t",
                Tolerance::Relative(0.02),
            ));
        }
    }
    report.extras.insert("probability".into(), cs.probability);
    report.extras.insert("mean_attempts".into(), mean(&col(2)));
    report.extras.insert("mean_size".into(), mean(&col(1)));
    let mut names = vec!["max_height_scaled".to_string(), "size".into(), "attempts".into()];
    for t in ["half", "full"] {
        names.extend((1..=kk).map(|ty| format!("fraction_{ty}_{t}")));
    }
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    report.raw = raw(&names, rows);
    Ok(finish(report, cfg.reps, caps, false))
}

fn check_spatial_laws(model: &OffspringModel) -> Result<()> {
    for (i, wl) in model.realized_words() {
        if !wl.word.is_empty() && model.spatial_law(i, &wl.word).is_none() {
            return Err(Error::MissingLaw {
                ty: i + 1,
                word: one_based(&wl.word),
            });
        }
    }
    Ok(())
}

/// `Var(S_{floor(ns)} / n^{1/4})` against `Sigma^2 (2/sigma) E|B_s|`, and
/// optionally the covariance at `(s, s2)` against a Brownian reference.
pub fn exp_snake_variance(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_roots(cfg)?;
    require_reps(cfg)?;
    let st = setup(model, &cfg.roots)?;
    if cfg.strict {
        check_spatial_laws(model)?;
    }
    let big2 = big_sigma_squared(model, &st.spec);
    if big2 <= 0.0 && cfg.strict {
        return Err(Error::DegenerateSpatial);
    }
    let k = grid_index(cfg.n, cfg.s)?;
    let k2 = cfg.s2.map(|s2| grid_index(cfg.n, s2)).transpose()?;
    let last = k.max(k2.unwrap_or(0));
    let sampler = OffspringSampler::new(model);
    let scale = (cfg.n as f64).powf(0.25);
    let (rows, caps) = replicates(cfg, MAIN_STREAMS, |rng| {
        let mut fs = stream(&sampler, cfg, rng).with_spatial(true);
        let (mut a, mut b) = (0.0, 0.0);
        for idx in 0..=last {
            let v = fs.next_vertex().expect("cyclic roots never run out");
            if idx == k {
                a = v.position / scale;
            }
            if Some(idx) == k2 {
                b = v.position / scale;
            }
        }
        Ok(vec![a, b])
    })?;
    let mut report = ExperimentReport::new(
        "snake-variance",
        json!({
            "roots": one_based(&cfg.roots), "n": cfg.n, "reps": cfg.reps, "seed": cfg.seed,
            "s": cfg.s, "s2": cfg.s2, "strict": cfg.strict,
        }),
    );
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let factor = big2 * 2.0 / st.sigma;
    let tol = if big2 > 0.0 { Tolerance::Relative(0.05) } else { Tolerance::Absolute(0.0) };
    report.statistics.push(Statistic::new(
        "variance",
        variance(&xs),
        batch_variance_se(&xs),
        factor * brownian_abs_mean(cfg.s),
        "Sigma^2 (2/sigma) E|B_s| = Sigma^2 (2/sigma) sqrt(2s/pi)",
        tol,
    ));
    if let Some(s2) = cfg.s2 {
        let ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        let (cov, se) = covariance_with_se(&xs, &ys);
        let (inf, inf_se) = brownian_abs_inf_mean(
            cfg.s,
            s2,
            cfg.reference_steps,
            cfg.reference_reps,
            cfg.seed ^ REFERENCE_SEED_SALT,
            cfg.parallel,
        );
        report.extras.insert("reference_inf_abs_b".into(), inf);
        report.statistics.push(Statistic::with_target_se(
            "covariance",
            cov,
            se,
            factor * inf,
            factor * inf_se,
            "Sigma^2 (2/sigma) E[inf_{s<=u<=s'} |B_u|] (random-walk reference)",
            Tolerance::StdErrors(4.0),
        ));
    }
    report.extras.insert("big_sigma_squared".into(), big2);
    report.extras.insert("mean".into(), mean(&xs));
    report.raw = raw(&["position_s", "position_s2"], rows);
    Ok(finish(report, cfg.reps, caps, false))
}

/// Expected generation sizes from matrix powers against the spine-chain
/// expectation; with `reps > 0` also Monte Carlo versions of both sides.
pub fn exp_many_to_one(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_roots(cfg)?;
    let spec = SpectralData::compute(model)?;
    spec.require_critical()?;
    let k = model.num_types();
    if let Some(&t) = cfg.roots.iter().find(|&&t| t >= k) {
        return Err(Error::InvalidArgument(format!("type {} outside 1..={k}", t + 1)));
    }
    let p = size_biased(model, &spec)?.spine_transition;
    let mut u = vec![1.0; k];
    let mut w: Vec<f64> = spec.b.iter().map(|b| 1.0 / b).collect();
    let mut max_diff = 0.0f64;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for g in 0..=cfg.h {
        if g > 0 {
            u = spec.m.mul_vec(&u);
            w = p.mul_vec(&w);
        }
        lhs = cfg.roots.iter().map(|&x| u[x]).sum::<f64>();
        rhs = cfg.roots.iter().map(|&x| spec.b[x] * w[x]).sum::<f64>();
        max_diff = max_diff.max((lhs - rhs).abs());
    }
    let mut report = ExperimentReport::new(
        "many-to-one",
        json!({"roots": one_based(&cfg.roots), "h": cfg.h, "reps": cfg.reps, "seed": cfg.seed}),
    );
    report.statistics.push(Statistic::new(
        "max_abs_difference",
        max_diff,
        0.0,
        0.0,
        "sum_j (M^g 1)_{x_j} = sum_j b_{x_j} (P^g (1/b))_{x_j}, g <= h",
        Tolerance::Absolute(1e-10),
    ));
    report.extras.insert("generation_size_matrix".into(), lhs);
    report.extras.insert("generation_size_spine".into(), rhs);
    let mut caps = 0;
    if cfg.reps >= 2 {
        let sampler = OffspringSampler::new(model);
        let opts = SampleOptions {
            max_depth: Some(cfg.h),
            ..SampleOptions::with_cap(cfg.vertex_cap)
        };
        let (forest, c) = replicates(cfg, MAIN_STREAMS, |mut rng| {
            let f = sample_forest(&sampler, &cfg.roots, &mut rng, opts)?;
            Ok((0..f.len()).filter(|&v| f.depth(v) == cfg.h).count() as f64)
        })?;
        caps = c;
        report.statistics.push(Statistic::new(
            "generation_size_forests",
            mean(&forest),
            batch_means_se(&forest),
            lhs,
            "sum_j (M^h 1)_{x_j}",
            Tolerance::StdErrors(4.0),
        ));
        let spine = SpineSampler::new(model, &spec)?;
        let (sp, _) = replicates(cfg, SPINE_STREAMS, |mut rng| {
            Ok(cfg
                .roots
                .iter()
                .map(|&x| {
                    let path = spine.sample_spine_path(x, cfg.h, &mut rng);
                    spec.b[x] / spec.b[path.types[cfg.h]]
                })
                .sum::<f64>())
        })?;
        report.statistics.push(Statistic::new(
            "generation_size_spines",
            mean(&sp),
            batch_means_se(&sp),
            lhs,
            "sum_j b_{x_j} E[1/b_{e(V_h)}]",
            Tolerance::StdErrors(4.0),
        ));
        report.raw = raw(
            &["forest_generation_size", "spine_estimate"],
            forest.iter().zip(&sp).map(|(&a, &b)| vec![a, b]).collect(),
        );
    }
    Ok(finish(report, cfg.reps.max(1), caps, false))
}

/// `Anc(i, w, l, h) / h` along spines started from the stationary type
/// law, against `a_i b_{w_l} zeta_i(w)`.
pub fn exp_branch_frequency(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_reps(cfg)?;
    let (i, l, h) = (cfg.i, cfg.rank, cfg.h);
    let mut types = vec![i];
    types.extend(&cfg.word);
    let st = setup(model, &types)?;
    if h == 0 {
        return Err(Error::InvalidArgument("spine length h must be positive".into()));
    }
    let spine = SpineSampler::new(model, &st.spec)?;
    let w_idx = spine.base().words(i).iter().position(|w| *w == cfg.word);
    let target = match l < cfg.word.len() {
        true => st.spec.a[i] * st.spec.b[cfg.word[l]] * model.word_prob(i, &cfg.word),
        false => 0.0,
    };
    let (xs, caps) = replicates(cfg, MAIN_STREAMS, |mut rng| {
        let root = spine.stationary_type(&mut rng);
        let path = spine.sample_spine_path(root, h, &mut rng);
        let hits = (0..h)
            .filter(|&g| path.types[g] == i && Some(path.words[g]) == w_idx && path.ranks[g] == l)
            .count();
        Ok(hits as f64 / h as f64)
    })?;
    let mut report = ExperimentReport::new(
        "branch-frequency",
        json!({
            "type": i + 1, "word": one_based(&cfg.word), "rank": l + 1, "h": h,
            "reps": cfg.reps, "seed": cfg.seed,
        }),
    );
    report.statistics.push(Statistic::new(
        "frequency",
        mean(&xs),
        batch_means_se(&xs),
        target,
        "a_i b_{w_l} zeta_i(w)",
        Tolerance::StdErrors(4.0),
    ));
    report.raw = raw(&["frequency"], xs.iter().map(|&x| vec![x]).collect());
    Ok(finish(report, cfg.reps, caps, false))
}

/// Empirical spine type transitions against `b_j' m_jj' / b_j`.
pub fn exp_spine_transition(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_reps(cfg)?;
    let st = setup(model, &[])?;
    let k = model.num_types();
    let target = size_biased(model, &st.spec)?.spine_transition;
    let spine = SpineSampler::new(model, &st.spec)?;
    let (counts, caps) = replicates(cfg, MAIN_STREAMS, |mut rng| {
        let root = spine.stationary_type(&mut rng);
        let path = spine.sample_spine_path(root, cfg.h, &mut rng);
        let mut c = vec![0u64; k * k];
        for g in 0..cfg.h {
            c[path.types[g] * k + path.types[g + 1]] += 1;
        }
        Ok(c)
    })?;
    let mut total = vec![0u64; k * k];
    for c in &counts {
        for (t, x) in total.iter_mut().zip(c) {
            *t += x;
        }
    }
    let mut report = ExperimentReport::new(
        "spine-transition",
        json!({"h": cfg.h, "reps": cfg.reps, "seed": cfg.seed}),
    );
    for a in 0..k {
        let row: u64 = total[a * k..(a + 1) * k].iter().sum();
        if row == 0 {
            continue;
        }
        for b in 0..k {
            let p = target[(a, b)];
            let est = total[a * k + b] as f64 / row as f64;
            report.statistics.push(Statistic::new(
                &format!("p_{}_{}", a + 1, b + 1),
                est,
                (p * (1.0 - p) / row as f64).sqrt(),
                p,
                "b_j' m_jj' / b_j",
                Tolerance::StdErrors(4.0),
            ));
        }
        report.extras.insert(format!("visits_{}", a + 1), row as f64);
    }
    Ok(finish(report, cfg.reps, caps, false))
}

/// `max_{k <= n} |H_k - Anc_i(k) / (a_i b_i)| / n^{1/4 + gamma}`: its 99th
/// percentile must stay below 1.
pub fn exp_height_anc_coupling(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_roots(cfg)?;
    require_reps(cfg)?;
    let i = cfg.i;
    let mut types = cfg.roots.clone();
    types.push(i);
    let st = setup(model, &types)?;
    let ab = st.spec.a[i] * st.spec.b[i];
    let norm = (cfg.n as f64).powf(0.25 + cfg.gamma);
    let sampler = OffspringSampler::new(model);
    let (xs, caps) = replicates(cfg, MAIN_STREAMS, |rng| {
        let mut fs = stream(&sampler, cfg, rng);
        let mut worst = 0.0f64;
        for _ in 0..=cfg.n {
            let v = fs.next_vertex().expect("cyclic roots never run out");
            let anc = fs.path_type_counts()[i] - u32::from(v.ty == i);
            worst = worst.max((v.depth as f64 - anc as f64 / ab).abs());
        }
        Ok(worst / norm)
    })?;
    let mut report = ExperimentReport::new(
        "height-anc-coupling",
        json!({
            "roots": one_based(&cfg.roots), "type": i + 1, "n": cfg.n, "reps": cfg.reps,
            "seed": cfg.seed, "gamma": cfg.gamma,
        }),
    );
    report.statistics.push(Statistic::new(
        "quantile_99",
        quantile(&xs, 0.99),
        0.0,
        1.0,
        "max_k |H_k - Anc_i(k)/(a_i b_i)| = o(n^{1/4 + gamma})",
        Tolerance::Below(1.0),
    ));
    report.extras.insert("mean".into(), mean(&xs));
    report.raw = raw(&["discrepancy_scaled"], xs.iter().map(|&x| vec![x]).collect());
    Ok(finish(report, cfg.reps, caps, false))
}

/// Frequencies of `max H > n^{1/2 + 2 eta}` and `Upsilon_n > n^{1/2 + 2 eta}`.
/// Diagnostic only: a failed bound makes the report inconclusive.
pub fn exp_tail_diagnostics(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_roots(cfg)?;
    require_reps(cfg)?;
    setup(model, &cfg.roots)?;
    let threshold = (cfg.n as f64).powf(0.5 + 2.0 * cfg.eta);
    let sampler = OffspringSampler::new(model);
    let (rows, caps) = replicates(cfg, MAIN_STREAMS, |rng| {
        let mut fs = stream(&sampler, cfg, rng);
        let (mut max_h, mut comp) = (0, 0);
        for _ in 0..=cfg.n {
            let v = fs.next_vertex().expect("cyclic roots never run out");
            max_h = max_h.max(v.depth);
            comp = v.component;
        }
        Ok(vec![max_h as f64, comp as f64])
    })?;
    let mut report = ExperimentReport::new(
        "tail-diagnostics",
        json!({
            "roots": one_based(&cfg.roots), "n": cfg.n, "reps": cfg.reps, "seed": cfg.seed,
            "eta": cfg.eta, "threshold": threshold,
        }),
    );
    for (c, name) in [(0, "p_max_height"), (1, "p_upsilon")] {
        let ind: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r[c] > threshold))).collect();
        report.statistics.push(
            Statistic::new(name, mean(&ind), batch_means_se(&ind), 0.01, "below 1%", Tolerance::Below(0.01))
                .diagnostic(),
        );
    }
    report.raw = raw(&["max_height", "upsilon_n"], rows);
    Ok(finish(report, cfg.reps, caps, cfg.eta <= 0.0))
}

/// Offspring of the type-i projection from independent layers: a type-i
/// root grown until type-i descendants, which are the reduced children.
pub fn exp_projection(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    require_reps(cfg)?;
    let i = cfg.i;
    let st = setup(model, &[i])?;
    let sampler = OffspringSampler::new(model);
    let opts = SampleOptions {
        stop_type: Some(i),
        ..SampleOptions::with_cap(cfg.vertex_cap)
    };
    let (rows, caps) = replicates(cfg, MAIN_STREAMS, |mut rng| {
        let t = sample_tree(&sampler, i, &mut rng, opts)?;
        let children = t.types().skip(1).filter(|&x| x == i).count();
        Ok([children as f64, (t.len() - 1 - children) as f64])
    })?;
    let mut report = ExperimentReport::new(
        "projection",
        json!({"type": i + 1, "reps": cfg.reps, "seed": cfg.seed}),
    );
    let zs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ns: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    report.statistics.push(Statistic::new(
        "offspring_mean",
        mean(&zs),
        batch_means_se(&zs),
        1.0,
        "critical reduced law",
        Tolerance::StdErrors(4.0),
    ));
    report.statistics.push(Statistic::new(
        "offspring_variance",
        variance(&zs),
        batch_variance_se(&zs),
        st.spec.projected_variance(i),
        "sigma^2 / (a_i b_i^2)",
        Tolerance::StdErrors(5.0),
    ));
    report.statistics.push(Statistic::new(
        "deleted_mean",
        mean(&ns),
        batch_means_se(&ns),
        1.0 / st.spec.a[i] - 1.0,
        "1/a_i - 1",
        Tolerance::StdErrors(4.0),
    ));
    report.raw = raw(&["reduced_children", "deleted"], rows.iter().map(|r| r.to_vec()).collect());
    Ok(finish(report, cfg.reps, caps, false))
}

/// Exact `n P^(i)(ht >= n)` against `2 b_i / (a . Q(b))`.
pub fn exp_height_tail(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let i = cfg.i;
    let st = setup(model, &[i])?;
    let t = height_tail(model, i, cfg.n);
    let mut report = ExperimentReport::new("height-tail", json!({"type": i + 1, "n": cfg.n}));
    report.statistics.push(Statistic::new(
        "scaled_tail",
        cfg.n as f64 * t[cfg.n],
        0.0,
        st.spec.height_tail_constant(i),
        "2 b_i / (a . Q(b))",
        Tolerance::Relative(0.02),
    ));
    Ok(finish(report, 1, 0, false))
}

/// Exact `n^{3/2} P^(i)(#T^(j) = n)` against its local-limit constant.
pub fn exp_local_limit(model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (i, j) = (cfg.i, cfg.j);
    let st = setup(model, &[i, j])?;
    let ll = local_limit(model, &st.spec, i, j, cfg.n)?;
    let mut report = ExperimentReport::new(
        "local-limit",
        json!({"root_type": i + 1, "count_type": j + 1, "n_target": cfg.n, "n": ll.n}),
    );
    report.statistics.push(Statistic::new(
        "scaled_probability",
        ll.scaled,
        0.0,
        ll.constant,
        "d sum_r r p(r; i, j) / (sigma_bar_j sqrt(2 pi))",
        Tolerance::Relative(0.03),
    ));
    report.extras.insert("span".into(), ll.span as f64);
    report.extras.insert("sigma_bar".into(), ll.sigma_bar);
    Ok(finish(report, 1, 0, false))
}
