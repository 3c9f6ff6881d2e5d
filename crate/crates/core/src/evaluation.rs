//! Fine- and coarse-grained scoring against multi-label gold, and McNemar's
//! paired test for comparing two systems.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::corpus::Instance;

/// Discordant-pair count below which the exact binomial test is used.
pub const EXACT_THRESHOLD: u64 = 25;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("UnknownInstanceId: {0:?} has no gold entry")]
    UnknownInstanceId(String),
    #[error("MismatchedIds: systems disagree on instance {0:?}")]
    MismatchedIds(String),
    #[error("DuplicatePrediction: {0:?}")]
    DuplicatePrediction(String),
    #[error("MalformedPrediction: line {line}: {reason}")]
    MalformedPrediction { line: usize, reason: String },
    #[error("MalformedCoarseMap: line {0}")]
    MalformedCoarseMap(usize),
    #[error("io error: {0}")]
    Io(String),
}

impl From<io::Error> for EvalError {
    fn from(e: io::Error) -> Self {
        EvalError::Io(e.to_string())
    }
}

/// Gold senses per instance id, with each instance's lemma for breakdowns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldStandard {
    entries: BTreeMap<String, GoldEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldEntry {
    pub lemma: String,
    pub senses: BTreeSet<String>,
}

impl GoldStandard {
    /// Optionally drops instances flagged as part of a proper noun.
    pub fn from_instances(instances: &[Instance], exclude_proper_nouns: bool) -> Self {
        let entries = instances
            .iter()
            .filter(|i| !(exclude_proper_nouns && i.is_proper_noun_part))
            .map(|i| {
                (
                    i.id.clone(),
                    GoldEntry {
                        lemma: i.target_lemma.clone(),
                        senses: i.gold.iter().cloned().collect(),
                    },
                )
            })
            .collect();
        GoldStandard { entries }
    }

    pub fn insert(&mut self, id: &str, lemma: &str, senses: &[&str]) {
        self.entries.insert(
            id.to_string(),
            GoldEntry {
                lemma: lemma.to_string(),
                senses: senses.iter().map(|s| s.to_string()).collect(),
            },
        );
    }

    pub fn get(&self, id: &str) -> Option<&GoldEntry> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Predicted sense per instance id.
pub type Predictions = BTreeMap<String, String>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    id: String,
    sense: String,
}

/// Reads `{"id": ..., "sense": ...}` lines.
pub fn read_predictions<R: BufRead>(reader: R) -> Result<Predictions, EvalError> {
    let mut out = Predictions::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| EvalError::MalformedPrediction {
                line: n + 1,
                reason: e.to_string(),
            })?;
        if out.insert(rec.id.clone(), rec.sense).is_some() {
            return Err(EvalError::DuplicatePrediction(rec.id));
        }
    }
    Ok(out)
}

/// Writes predictions in the given order, one JSON object per line.
pub fn write_predictions<'a, W, I>(mut writer: W, predictions: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    for (id, sense) in predictions {
        let rec = PredictionRecord {
            id: id.to_string(),
            sense: sense.to_string(),
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Sense-to-cluster map. Unmapped senses are their own cluster.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoarseMap(HashMap<String, String>);

impl CoarseMap {
    pub fn identity() -> Self {
        CoarseMap::default()
    }

    pub fn from_pairs<'a, I: IntoIterator<Item = (&'a str, &'a str)>>(pairs: I) -> Self {
        CoarseMap(
            pairs
                .into_iter()
                .map(|(s, c)| (s.to_string(), c.to_string()))
                .collect(),
        )
    }

    /// `sense<TAB>cluster` lines.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, EvalError> {
        let mut map = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(s), Some(c), None) if !s.is_empty() && !c.is_empty() => {
                    map.insert(s.to_string(), c.to_string());
                }
                _ => return Err(EvalError::MalformedCoarseMap(n + 1)),
            }
        }
        Ok(CoarseMap(map))
    }

    pub fn cluster<'a>(&'a self, sense: &'a str) -> &'a str {
        self.0.get(sense).map_or(sense, String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LemmaScore {
    pub n: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub n_scored: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    /// Predictions whose gold set is empty, excluded from scoring.
    pub n_excluded_empty_gold: usize,
    pub per_lemma: BTreeMap<String, LemmaScore>,
}

/// Per-id correctness over scorable instances (non-empty gold).
fn judge(
    predictions: &Predictions,
    gold: &GoldStandard,
    coarse: Option<&CoarseMap>,
) -> Result<(BTreeMap<String, bool>, usize), EvalError> {
    let mut verdicts = BTreeMap::new();
    let mut excluded = 0;
    for (id, pred) in predictions {
        let entry = gold
            .get(id)
            .ok_or_else(|| EvalError::UnknownInstanceId(id.clone()))?;
        if entry.senses.is_empty() {
            excluded += 1;
            continue;
        }
        let ok = match coarse {
            None => entry.senses.contains(pred),
            Some(map) => {
                let c = map.cluster(pred);
                entry.senses.iter().any(|g| map.cluster(g) == c)
            }
        };
        verdicts.insert(id.clone(), ok);
    }
    Ok((verdicts, excluded))
}

fn report(verdicts: &BTreeMap<String, bool>, excluded: usize, gold: &GoldStandard) -> ScoreReport {
    let mut per_lemma: BTreeMap<String, LemmaScore> = BTreeMap::new();
    for (id, &ok) in verdicts {
        // ids were validated against gold in judge()
        let lemma = gold.get(id).map_or("", |e| e.lemma.as_str());
        let s = per_lemma.entry(lemma.to_string()).or_default();
        s.n += 1;
        s.correct += ok as usize;
    }
    let n_scored = verdicts.len();
    let n_correct = verdicts.values().filter(|&&ok| ok).count();
    ScoreReport {
        n_scored,
        n_correct,
        accuracy: if n_scored == 0 {
            0.0
        } else {
            n_correct as f64 / n_scored as f64
        },
        n_excluded_empty_gold: excluded,
        per_lemma,
    }
}

/// Exact-match scoring: correct iff the prediction is one of the gold senses.
pub fn score_fine(
    predictions: &Predictions,
    gold: &GoldStandard,
) -> Result<ScoreReport, EvalError> {
    let (v, excluded) = judge(predictions, gold, None)?;
    Ok(report(&v, excluded, gold))
}

/// Cluster-match scoring: correct iff the predicted cluster contains a gold sense.
pub fn score_coarse(
    predictions: &Predictions,
    gold: &GoldStandard,
    coarse: &CoarseMap,
) -> Result<ScoreReport, EvalError> {
    let (v, excluded) = judge(predictions, gold, Some(coarse))?;
    Ok(report(&v, excluded, gold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum McNemarMethod {
    Exact,
    Chi2cc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McNemarResult {
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    /// Continuity-corrected statistic `(|b - c| - 1)^2 / (b + c)`, reported for both methods.
    pub statistic: f64,
    /// Upper-tail chi-square(1) probability of `statistic`.
    pub chi2_p_value: f64,
    /// p-value of the selected method.
    pub p_value: f64,
    pub method: McNemarMethod,
    /// No discordant pairs: the test is uninformative and `p_value` is 1.
    pub degenerate: bool,
}

/// Two-sided exact binomial test on the discordant counts.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    let k = b.min(c);
    // C(n, i) by recurrence; every partial value is an integer well below 2^53 here
    let mut coef = 1.0f64;
    let mut tail = 0.0f64;
    for i in 0..=k {
        if i > 0 {
            coef = coef * (n - i + 1) as f64 / i as f64;
        }
        tail += coef;
    }
    (2.0 * tail * 0.5f64.powi(n as i32)).min(1.0)
}

/// Continuity-corrected chi-square statistic and its 1-df upper-tail p-value.
pub fn mcnemar_chi2cc(b: u64, c: u64) -> (f64, f64) {
    let n = (b + c) as f64;
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let stat = diff * diff / n;
    // survival function of chi-square with one degree of freedom
    (stat, erfc((stat / 2.0).sqrt()))
}

/// Applies the exact test below [`EXACT_THRESHOLD`] discordant pairs and the
/// corrected chi-square at or above it.
pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemarResult {
    if b + c == 0 {
        return McNemarResult {
            b,
            c,
            statistic: 0.0,
            chi2_p_value: 1.0,
            p_value: 1.0,
            method: McNemarMethod::Exact,
            degenerate: true,
        };
    }
    let (statistic, chi2_p) = mcnemar_chi2cc(b, c);
    let chi2_p_value = chi2_p.clamp(0.0, 1.0);
    let (method, p_value) = if b + c < EXACT_THRESHOLD {
        (McNemarMethod::Exact, mcnemar_exact(b, c))
    } else {
        (McNemarMethod::Chi2cc, chi2_p_value)
    };
    McNemarResult {
        b,
        c,
        statistic,
        chi2_p_value,
        p_value,
        method,
        degenerate: false,
    }
}

/// Compares systems A and B over the instances with non-empty gold.
pub fn mcnemar_test(
    pred_a: &Predictions,
    pred_b: &Predictions,
    gold: &GoldStandard,
) -> Result<McNemarResult, EvalError> {
    if let Some(id) = pred_a
        .keys()
        .find(|k| !pred_b.contains_key(*k))
        .or_else(|| pred_b.keys().find(|k| !pred_a.contains_key(*k)))
    {
        return Err(EvalError::MismatchedIds(id.clone()));
    }
    let (va, _) = judge(pred_a, gold, None)?;
    let (vb, _) = judge(pred_b, gold, None)?;
    let mut b = 0;
    let mut c = 0;
    for (id, &a_ok) in &va {
        let b_ok = vb[id];
        match (a_ok, b_ok) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}
