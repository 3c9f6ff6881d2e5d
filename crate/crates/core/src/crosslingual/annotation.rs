//! Multi-label translation annotations: dataset filters and the pairwise
//! agreement coefficient adapted to multiple selections per annotator.
//!
//! Observed agreement for a pair of annotators is optimistic: each annotator
//! may have picked several translations, and the pair agrees whenever some
//! picked translation is shared. Chance agreement comes from the label
//! distribution in training data, restricted to each lemma's three most
//! frequent translations:
//!
//! ```text
//! q(s)  = count(s) / sum of counts over the top 3
//! p_E   = mean over annotator pairs of  sum_{s in top 3} q(s)^2
//! kappa = (p_A - p_E) / (1 - p_E)
//! ```
//!
//! Other readings of the chance term exist (q normalized over every
//! translation; "both annotators picked some top-3 translation" instead of
//! "the same one"). Only the same-translation, top-3-normalized form is
//! implemented.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;
use std::str::FromStr;

use serde::Serialize;

use super::{BilingualDictionary, XlingError};

pub const CHANCE_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub instance_id: String,
    pub annotator_id: String,
    pub selected: BTreeSet<String>,
    /// Translations the annotator supplied that were not offered by the dictionary.
    pub added_oov: BTreeSet<String>,
}

impl AnnotationRecord {
    /// Everything the annotator considered correct.
    pub fn labels(&self) -> BTreeSet<&str> {
        self.selected
            .iter()
            .chain(&self.added_oov)
            .map(String::as_str)
            .collect()
    }

    /// The annotator left the case blank ("no suitable translation").
    pub fn is_blank(&self) -> bool {
        self.selected.is_empty() && self.added_oov.is_empty()
    }
}

fn comma_set(field: Option<&str>) -> BTreeSet<String> {
    field
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Reads `instance_id<TAB>annotator_id<TAB>selections<TAB>oov_additions` lines.
///
/// The last two fields are comma-joined and may be empty or absent.
pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<AnnotationRecord>, XlingError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 || cols.len() > 4 {
            return Err(XlingError::MalformedAnnotation(
                n + 1,
                format!("expected 2 to 4 tab-separated fields, found {}", cols.len()),
            ));
        }
        let (iid, aid) = (cols[0].trim(), cols[1].trim());
        if iid.is_empty() || aid.is_empty() {
            return Err(XlingError::MalformedAnnotation(n + 1, "empty id".into()));
        }
        if !seen.insert((iid.to_string(), aid.to_string())) {
            return Err(XlingError::MalformedAnnotation(
                n + 1,
                format!("annotator {aid:?} annotated {iid:?} twice"),
            ));
        }
        out.push(AnnotationRecord {
            instance_id: iid.to_string(),
            annotator_id: aid.to_string(),
            selected: comma_set(cols.get(2).copied()),
            added_oov: comma_set(cols.get(3).copied()),
        });
    }
    Ok(out)
}

/// Annotation records grouped by instance id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    pub instances: BTreeMap<String, Vec<AnnotationRecord>>,
}

impl AnnotationSet {
    pub fn from_records(records: Vec<AnnotationRecord>) -> Self {
        let mut instances: BTreeMap<String, Vec<AnnotationRecord>> = BTreeMap::new();
        for r in records {
            instances.entry(r.instance_id.clone()).or_default().push(r);
        }
        AnnotationSet { instances }
    }

    /// Keeps only the listed instances.
    pub fn restrict(&self, ids: &BTreeSet<String>) -> AnnotationSet {
        AnnotationSet {
            instances: self
                .instances
                .iter()
                .filter(|(id, _)| ids.contains(*id))
                .map(|(id, r)| (id.clone(), r.clone()))
                .collect(),
        }
    }

    /// Union of all annotators' labels for `id`.
    pub fn union_labels(&self, id: &str) -> BTreeSet<&str> {
        self.instances
            .get(id)
            .map(|rs| rs.iter().flat_map(|r| r.labels()).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    IncludeAll,
    ExcludeOov,
    PartialAgreement,
    CompleteAgreement,
}

impl FilterMode {
    pub const ALL: [FilterMode; 4] = [
        FilterMode::IncludeAll,
        FilterMode::ExcludeOov,
        FilterMode::PartialAgreement,
        FilterMode::CompleteAgreement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterMode::IncludeAll => "include_all",
            FilterMode::ExcludeOov => "exclude_oov",
            FilterMode::PartialAgreement => "partial_agreement",
            FilterMode::CompleteAgreement => "complete_agreement",
        }
    }
}

impl FromStr for FilterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown filter mode {s:?} (expected include_all, exclude_oov, partial_agreement or complete_agreement)"
                )
            })
    }
}

fn label_votes(records: &[AnnotationRecord]) -> HashMap<&str, usize> {
    let mut votes: HashMap<&str, usize> = HashMap::new();
    for r in records {
        for l in r.labels() {
            *votes.entry(l).or_default() += 1;
        }
    }
    votes
}

fn keep(records: &[AnnotationRecord], mode: FilterMode) -> bool {
    if records.iter().all(AnnotationRecord::is_blank) {
        return false;
    }
    let votes = label_votes(records);
    let partial = votes.values().any(|&v| v >= 2);
    match mode {
        FilterMode::IncludeAll => true,
        FilterMode::ExcludeOov => records.iter().all(|r| r.added_oov.is_empty()),
        FilterMode::PartialAgreement => partial,
        FilterMode::CompleteAgreement => partial && votes.values().any(|&v| v == records.len()),
    }
}

/// Instance ids retained under `mode`.
///
/// Every mode drops instances whose annotators all left them blank.
/// `exclude_oov` also drops instances where any annotator added a translation;
/// `partial_agreement` requires a translation chosen by at least two
/// annotators; `complete_agreement` requires one chosen by all of them (and at
/// least two).
pub fn filter_annotations(set: &AnnotationSet, mode: FilterMode) -> BTreeSet<String> {
    set.instances
        .iter()
        .filter(|(_, records)| keep(records, mode))
        .map(|(id, _)| id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub p_a: f64,
    pub p_e: f64,
    pub pairs: usize,
    pub instances: usize,
}

fn chance_agreement(lemma: &str, dictionary: &BilingualDictionary) -> Result<f64, XlingError> {
    let top = dictionary.top_by_count(lemma, CHANCE_TOP_K);
    if top.is_empty() {
        return Err(XlingError::MissingLemma(lemma.to_string()));
    }
    let total: u64 = top.iter().map(|(_, c)| c).sum();
    if total == 0 {
        // no training counts: uniform over the listed translations
        return Ok(1.0 / top.len() as f64);
    }
    Ok(top
        .iter()
        .map(|&(_, c)| {
            let q = c as f64 / total as f64;
            q * q
        })
        .sum())
}

/// Pairwise agreement over every annotator pair sharing an instance.
///
/// `lemma_of` maps instance ids to their target lemma. Instances with fewer
/// than two annotators, or left blank by everyone, contribute no pairs.
pub fn compute_kappa(
    set: &AnnotationSet,
    lemma_of: &HashMap<String, String>,
    dictionary: &BilingualDictionary,
) -> Result<KappaResult, XlingError> {
    let mut pairs = 0usize;
    let mut agree = 0usize;
    let mut chance_sum = 0.0f64;
    let mut instances = 0usize;
    for (id, records) in &set.instances {
        if records.len() < 2 || records.iter().all(AnnotationRecord::is_blank) {
            continue;
        }
        let lemma = lemma_of
            .get(id)
            .ok_or_else(|| XlingError::UnknownInstance(id.clone()))?;
        let chance = chance_agreement(lemma, dictionary)?;
        instances += 1;
        let labels: Vec<BTreeSet<&str>> = records.iter().map(AnnotationRecord::labels).collect();
        for a in 0..labels.len() {
            for b in a + 1..labels.len() {
                pairs += 1;
                if !labels[a].is_disjoint(&labels[b]) {
                    agree += 1;
                }
                chance_sum += chance;
            }
        }
    }
    if pairs == 0 {
        return Err(XlingError::NoPairs);
    }
    let p_a = agree as f64 / pairs as f64;
    let p_e = chance_sum / pairs as f64;
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(XlingError::DegenerateAgreement);
    }
    Ok(KappaResult {
        kappa: (p_a - p_e) / (1.0 - p_e),
        p_a,
        p_e,
        pairs,
        instances,
    })
}
