//! Experiment harness: exact identities and Monte Carlo estimators checked
//! against Brownian limit functionals.

mod experiments;
pub mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sampler::DEFAULT_VERTEX_CAP;
use crate::spectra::OffspringModel;

pub use experiments::*;

/// Fraction of replicates allowed to hit the vertex cap before a report is
/// declared inconclusive.
pub const CAP_FRACTION_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// How far an estimate may sit from its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    /// `|est - target| <= r |target|`.
    Relative(f64),
    /// `|est - target| <= k sqrt(se^2 + se_target^2)`.
    StdErrors(f64),
    /// `est < x`; the target field holds `x`.
    Below(f64),
    /// `|est - target| <= eps`.
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub target_std_error: f64,
    /// The limit functional the target comes from.
    pub target_formula: String,
    pub tolerance: Tolerance,
    /// `estimate - target`.
    pub discrepancy: f64,
    /// Maximal allowed `|discrepancy|` (or the bound for `Below`).
    pub threshold: f64,
    pub pass: bool,
    /// Diagnostic statistics can only make a report inconclusive.
    pub diagnostic: bool,
}

impl Statistic {
    pub fn new(name: &str, estimate: f64, std_error: f64, target: f64, formula: &str, tolerance: Tolerance) -> Self {
        Self::with_target_se(name, estimate, std_error, target, 0.0, formula, tolerance)
    }

    pub fn with_target_se(
        name: &str,
        estimate: f64,
        std_error: f64,
        target: f64,
        target_std_error: f64,
        formula: &str,
        tolerance: Tolerance,
    ) -> Self {
        let discrepancy = estimate - target;
        let (threshold, pass) = match tolerance {
            Tolerance::Relative(r) => {
                let t = r * target.abs();
                (t, discrepancy.abs() <= t)
            }
            Tolerance::StdErrors(k) => {
                let se = std_error.hypot(target_std_error);
                let t = k * se;
                if se > 0.0 {
                    (t, discrepancy.abs() <= t)
                } else {
                    (t, discrepancy.abs() <= 1e-12 * target.abs().max(1.0))
                }
            }
            Tolerance::Below(x) => (x, estimate < x),
            Tolerance::Absolute(eps) => (eps, discrepancy.abs() <= eps),
        };
        Statistic {
            name: name.to_string(),
            estimate,
            std_error,
            target,
            target_std_error,
            target_formula: formula.to_string(),
            tolerance,
            discrepancy,
            threshold,
            pass: pass && estimate.is_finite(),
            diagnostic: false,
        }
    }

    pub fn diagnostic(mut self) -> Self {
        self.diagnostic = true;
        self
    }
}

/// Per-replicate values for external plotting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RawTable {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["replicate".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (r, row) in self.rows.iter().enumerate() {
            let mut rec = vec![r.to_string()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub parameters: serde_json::Value,
    pub statistics: Vec<Statistic>,
    /// Informational numbers that carry no verdict.
    pub extras: BTreeMap<String, f64>,
    pub verdict: Verdict,
    pub replicates: usize,
    pub cap_exceeded_count: u64,
    pub wall_time_secs: f64,
    #[serde(skip)]
    pub raw: RawTable,
}

impl ExperimentReport {
    pub(crate) fn new(name: &str, parameters: serde_json::Value) -> Self {
        ExperimentReport {
            name: name.to_string(),
            parameters,
            statistics: Vec::new(),
            extras: BTreeMap::new(),
            verdict: Verdict::Inconclusive,
            replicates: 0,
            cap_exceeded_count: 0,
            wall_time_secs: 0.0,
            raw: RawTable::default(),
        }
    }

    /// Fail if a primary statistic fails; inconclusive if diagnostics fail,
    /// too many replicates hit the cap, or nothing was measured.
    pub(crate) fn finish(&mut self, forced_inconclusive: bool) {
        let caps_ok = (self.cap_exceeded_count as f64) <= CAP_FRACTION_LIMIT * self.replicates.max(1) as f64;
        let primary_fail = self.statistics.iter().any(|s| !s.diagnostic && !s.pass);
        let diag_fail = self.statistics.iter().any(|s| s.diagnostic && !s.pass);
        self.verdict = if !caps_ok || forced_inconclusive || self.statistics.is_empty() {
            Verdict::Inconclusive
        } else if primary_fail {
            Verdict::Fail
        } else if diag_fail {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
    }

    pub fn statistic(&self, name: &str) -> Option<&Statistic> {
        self.statistics.iter().find(|s| s.name == name)
    }

    /// SHA-256 of the canonical JSON form without the wall time.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serialises");
        if let Some(o) = v.as_object_mut() {
            o.remove("wall_time_secs");
        }
        let mut h = Sha256::new();
        h.update(v.to_string().as_bytes());
        h.update(b"\n");
        for row in &self.raw.rows {
            for x in row {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Parameters shared by all experiments; each experiment reads the ones it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// 0-based root types, repeated cyclically for streamed forests.
    pub roots: Vec<usize>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub s: f64,
    pub s2: Option<f64>,
    /// 0-based type parameters.
    pub i: usize,
    pub j: usize,
    /// 0-based child word and rank for branch events.
    pub word: Vec<usize>,
    pub rank: usize,
    pub h: usize,
    pub gamma: f64,
    pub eta: f64,
    pub vertex_cap: usize,
    pub max_attempts: u64,
    pub strict: bool,
    pub parallel: bool,
    pub reference_steps: usize,
    pub reference_reps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            roots: vec![0],
            n: 10_000,
            reps: 1000,
            seed: 0,
            s: 1.0,
            s2: None,
            i: 0,
            j: 0,
            word: Vec::new(),
            rank: 0,
            h: 200,
            gamma: 0.1,
            eta: 0.05,
            vertex_cap: DEFAULT_VERTEX_CAP,
            max_attempts: 100_000_000,
            strict: false,
            parallel: true,
            reference_steps: 100_000,
            reference_reps: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    HeightFdd,
    TypeFrequency,
    Upsilon,
    ConditionedHeight,
    SnakeVariance,
    ManyToOne,
    BranchFrequency,
    SpineTransition,
    HeightAncCoupling,
    TailDiagnostics,
    Projection,
    HeightTail,
    LocalLimit,
}

impl Experiment {
    pub const ALL: [Experiment; 13] = [
        Experiment::HeightFdd,
        Experiment::TypeFrequency,
        Experiment::Upsilon,
        Experiment::ConditionedHeight,
        Experiment::SnakeVariance,
        Experiment::ManyToOne,
        Experiment::BranchFrequency,
        Experiment::SpineTransition,
        Experiment::HeightAncCoupling,
        Experiment::TailDiagnostics,
        Experiment::Projection,
        Experiment::HeightTail,
        Experiment::LocalLimit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::HeightFdd => "height-fdd",
            Experiment::TypeFrequency => "type-frequency",
            Experiment::Upsilon => "upsilon",
            Experiment::ConditionedHeight => "conditioned-height",
            Experiment::SnakeVariance => "snake-variance",
            Experiment::ManyToOne => "many-to-one",
            Experiment::BranchFrequency => "branch-frequency",
            Experiment::SpineTransition => "spine-transition",
            Experiment::HeightAncCoupling => "height-anc-coupling",
            Experiment::TailDiagnostics => "tail-diagnostics",
            Experiment::Projection => "projection",
            Experiment::HeightTail => "height-tail",
            Experiment::LocalLimit => "local-limit",
        }
    }

    pub fn run(self, model: &OffspringModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        let start = std::time::Instant::now();
        let mut report = match self {
            Experiment::HeightFdd => exp_height_fdd(model, cfg),
            Experiment::TypeFrequency => exp_type_frequency(model, cfg),
            Experiment::Upsilon => exp_upsilon(model, cfg),
            Experiment::ConditionedHeight => exp_conditioned_height(model, cfg),
            Experiment::SnakeVariance => exp_snake_variance(model, cfg),
            Experiment::ManyToOne => exp_many_to_one(model, cfg),
            Experiment::BranchFrequency => exp_branch_frequency(model, cfg),
            Experiment::SpineTransition => exp_spine_transition(model, cfg),
            Experiment::HeightAncCoupling => exp_height_anc_coupling(model, cfg),
            Experiment::TailDiagnostics => exp_tail_diagnostics(model, cfg),
            Experiment::Projection => exp_projection(model, cfg),
            Experiment::HeightTail => exp_height_tail(model, cfg),
            Experiment::LocalLimit => exp_local_limit(model, cfg),
        }?;
        report.wall_time_secs = start.elapsed().as_secs_f64();
        Ok(report)
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let norm = norm.strip_prefix("exp-").unwrap_or(&norm);
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                Error::InvalidArgument(format!("unknown experiment {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
