//! Trial manifests, confusion matrices and term-weighted value scoring.
//!
//! A trial is "detected" when its score is strictly greater than the
//! threshold; a score equal to the threshold counts as a miss.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trial {
    pub term_id: String,
    pub query: PathBuf,
    pub reference: PathBuf,
    /// 1 when the query term occurs in the reference.
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialSet {
    pub terms: Vec<String>,
    pub trials: Vec<Trial>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    terms: Vec<RawTerm>,
    trials: Vec<RawTrial>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrial {
    term_id: String,
    query: PathBuf,
    reference: PathBuf,
    label: i64,
}

/// Loads and validates a JSON manifest. Relative paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<TrialSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<TrialSet> {
    let raw: RawManifest = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    let mut terms = Vec::with_capacity(raw.terms.len());
    let mut known = BTreeSet::new();
    for t in raw.terms {
        if !known.insert(t.id.clone()) {
            return Err(Error::Manifest(format!("duplicate term id {:?}", t.id)));
        }
        terms.push(t.id);
    }
    let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
    let mut trials = Vec::with_capacity(raw.trials.len());
    for (i, t) in raw.trials.into_iter().enumerate() {
        let label = match t.label {
            0 => 0,
            1 => 1,
            other => return Err(Error::Manifest(format!("trial {i}: label {other} is not 0 or 1"))),
        };
        if !known.contains(&t.term_id) {
            return Err(Error::UnknownTerm(t.term_id));
        }
        let (query, reference) = (resolve(t.query), resolve(t.reference));
        for p in [&query, &reference] {
            if !p.is_file() {
                return Err(Error::DanglingReference(p.clone()));
            }
        }
        trials.push(Trial {
            term_id: t.term_id,
            query,
            reference,
            label,
        });
    }
    Ok(TrialSet { terms, trials })
}

/// One scored trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub term_id: String,
    pub label: u8,
    pub score: f64,
}

impl Scored {
    pub fn new(term_id: impl Into<String>, label: u8, score: f64) -> Self {
        Scored {
            term_id: term_id.into(),
            label,
            score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwvConfig {
    pub cost_fa: f64,
    pub cost_miss: f64,
    pub prior: f64,
}

impl Default for TwvConfig {
    fn default() -> Self {
        TwvConfig {
            cost_fa: 1.0,
            cost_miss: 10.0,
            prior: 0.0278,
        }
    }
}

impl TwvConfig {
    /// `(C_fa / C_miss) * (1 / prior - 1)`.
    pub fn beta(&self) -> f64 {
        (self.cost_fa / self.cost_miss) * (1.0 / self.prior - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(Error::InvalidParams(format!("prior must be in (0, 1), got {}", self.prior)));
        }
        if !(self.cost_fa > 0.0 && self.cost_miss > 0.0 && self.cost_fa.is_finite() && self.cost_miss.is_finite()) {
            return Err(Error::InvalidParams("costs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub fn confusion_matrix(scored: &[Scored], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for s in scored {
        match (s.label == 1, s.score > threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Per-term scores, sorted ascending, split by label.
struct TermScores {
    positives: Vec<f64>,
    negatives: Vec<f64>,
}

impl TermScores {
    fn rates(&self, threshold: f64) -> (f64, f64) {
        let at_or_below = |v: &[f64]| v.partition_point(|&s| s <= threshold);
        let misses = at_or_below(&self.positives);
        let false_alarms = self.negatives.len() - at_or_below(&self.negatives);
        let p_miss = misses as f64 / self.positives.len() as f64;
        let p_fa = if self.negatives.is_empty() {
            0.0
        } else {
            false_alarms as f64 / self.negatives.len() as f64
        };
        (p_miss, p_fa)
    }
}

struct Prepared {
    terms: BTreeMap<String, TermScores>,
    excluded: Vec<String>,
}

fn prepare(scored: &[Scored]) -> Result<Prepared> {
    let mut by_term: BTreeMap<String, TermScores> = BTreeMap::new();
    for s in scored {
        if !s.score.is_finite() {
            return Err(Error::NonFiniteScore(s.score));
        }
        let entry = by_term.entry(s.term_id.clone()).or_insert(TermScores {
            positives: Vec::new(),
            negatives: Vec::new(),
        });
        if s.label == 1 {
            entry.positives.push(s.score);
        } else {
            entry.negatives.push(s.score);
        }
    }
    let excluded: Vec<String> = by_term
        .iter()
        .filter(|(_, t)| t.positives.is_empty())
        .map(|(id, _)| id.clone())
        .collect();
    by_term.retain(|_, t| !t.positives.is_empty());
    if by_term.is_empty() {
        return Err(Error::NoPositiveTrials);
    }
    for t in by_term.values_mut() {
        t.positives.sort_by(f64::total_cmp);
        t.negatives.sort_by(f64::total_cmp);
    }
    Ok(Prepared {
        terms: by_term,
        excluded,
    })
}

fn twv_at(prep: &Prepared, threshold: f64, beta: f64) -> f64 {
    let sum: f64 = prep
        .terms
        .values()
        .map(|t| {
            let (p_miss, p_fa) = t.rates(threshold);
            p_miss + beta * p_fa
        })
        .sum();
    1.0 - sum / prep.terms.len() as f64
}

/// `1 - mean_t [P_miss(t) + beta * P_fa(t)]` over terms with at least one
/// positive trial. Terms without positives are left out of the mean.
pub fn compute_twv(scored: &[Scored], threshold: f64, cfg: &TwvConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(twv_at(&prepare(scored)?, threshold, cfg.beta()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    #[serde(serialize_with = "threshold_repr")]
    pub threshold: f64,
    pub twv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermRates {
    pub term_id: String,
    pub positives: usize,
    pub negatives: usize,
    pub p_miss: f64,
    pub p_fa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Maximum TWV over the sweep, clamped to `[0, 1]`.
    pub mtwv: f64,
    /// Smallest threshold attaining the maximum; `-inf` means "accept all".
    #[serde(serialize_with = "threshold_repr")]
    pub best_threshold: f64,
    pub beta: f64,
    pub confusion: Confusion,
    pub per_term: Vec<TermRates>,
    /// Terms dropped from the average for lack of positive trials.
    pub excluded_terms: Vec<String>,
    pub twv_curve: Vec<CurvePoint>,
}

fn threshold_repr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(if *v < 0.0 { "-inf" } else { "inf" })
    }
}

/// Sweeps every distinct score (plus `-inf`) as a threshold; TWV is
/// piecewise constant between observed scores, so the sweep is exhaustive.
pub fn compute_mtwv(scored: &[Scored], cfg: &TwvConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let prep = prepare(scored)?;
    let beta = cfg.beta();
    let mut thresholds: Vec<f64> = scored.iter().map(|s| s.score).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let twv_curve: Vec<CurvePoint> = std::iter::once(f64::NEG_INFINITY)
        .chain(thresholds)
        .map(|threshold| CurvePoint {
            threshold,
            twv: twv_at(&prep, threshold, beta),
        })
        .collect();
    let best = twv_curve
        .iter()
        .fold(None::<CurvePoint>, |acc, p| match acc {
            Some(b) if b.twv >= p.twv => Some(b),
            _ => Some(*p),
        })
        .expect("curve has the -inf point");
    let per_term = prep
        .terms
        .iter()
        .map(|(id, t)| {
            let (p_miss, p_fa) = t.rates(best.threshold);
            TermRates {
                term_id: id.clone(),
                positives: t.positives.len(),
                negatives: t.negatives.len(),
                p_miss,
                p_fa,
            }
        })
        .collect();
    Ok(EvalReport {
        mtwv: best.twv.clamp(0.0, 1.0),
        best_threshold: best.threshold,
        beta,
        confusion: confusion_matrix(scored, best.threshold),
        per_term,
        excluded_terms: prep.excluded,
        twv_curve,
    })
}

/// `threshold,twv` CSV of the sweep.
pub fn curve_csv(report: &EvalReport) -> String {
    let mut out = String::from("threshold,twv\n");
    for p in &report.twv_curve {
        if p.threshold.is_finite() {
            out.push_str(&format!("{},{}\n", p.threshold, p.twv));
        } else {
            out.push_str(&format!("-inf,{}\n", p.twv));
        }
    }
    out
}
