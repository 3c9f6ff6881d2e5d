//! IBM Model 1 word alignment trained by EM, Viterbi link extraction and
//! Pharaoh-format alignment files.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{self, BufRead, Write};

use super::{ParallelCorpus, XlingError};
use crate::json::format_f64;

const NULL_ID: u32 = 0;

/// Lexical translation probabilities `t(target | source)`, including the NULL source.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationTable {
    // index 0 is NULL
    sources: Vec<String>,
    source_ids: HashMap<String, u32>,
    targets: Vec<String>,
    target_ids: HashMap<String, u32>,
    probs: HashMap<(u32, u32), f64>,
}

impl TranslationTable {
    /// `t(target | source)`; `None` is the NULL source. Unseen pairs have probability 0.
    pub fn prob(&self, source: Option<&str>, target: &str) -> f64 {
        let s = match source {
            None => NULL_ID,
            Some(w) => match self.source_ids.get(w) {
                Some(&id) => id,
                None => return 0.0,
            },
        };
        let Some(&t) = self.target_ids.get(target) else {
            return 0.0;
        };
        self.probs.get(&(s, t)).copied().unwrap_or(0.0)
    }

    /// Largest deviation of any source's outgoing mass from 1.
    pub fn max_normalization_error(&self) -> f64 {
        let mut totals = vec![0.0f64; self.sources.len()];
        for (&(s, _), &p) in &self.probs {
            totals[s as usize] += p;
        }
        totals.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `source<TAB>target<TAB>probability`, sorted; the NULL source is written as `NULL`.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> io::Result<()> {
        let name = |s: u32| {
            if s == NULL_ID {
                "NULL"
            } else {
                self.sources[s as usize].as_str()
            }
        };
        let mut rows: Vec<(&str, &str, f64)> = self
            .probs
            .iter()
            .map(|(&(s, t), &p)| (name(s), self.targets[t as usize].as_str(), p))
            .collect();
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (s, t, p) in rows {
            writeln!(writer, "{s}\t{t}\t{}", format_f64(p))?;
        }
        Ok(())
    }
}

/// A trained model with the corpus log-likelihood before the first and after
/// every EM iteration.
#[derive(Debug, Clone)]
pub struct Ibm1Model {
    pub table: TranslationTable,
    pub log_likelihoods: Vec<f64>,
}

struct Encoded {
    // source ids with NULL prepended
    pairs: Vec<(Vec<u32>, Vec<u32>)>,
}

fn encode(corpus: &ParallelCorpus) -> (TranslationTable, Encoded) {
    let mut table = TranslationTable {
        sources: vec![String::new()],
        source_ids: HashMap::new(),
        targets: Vec::new(),
        target_ids: HashMap::new(),
        probs: HashMap::new(),
    };
    let mut pairs = Vec::with_capacity(corpus.len());
    for pair in &corpus.pairs {
        let mut src = vec![NULL_ID];
        for w in &pair.source {
            let next = table.sources.len() as u32;
            let id = *table.source_ids.entry(w.clone()).or_insert(next);
            if id == next {
                table.sources.push(w.clone());
            }
            src.push(id);
        }
        let mut tgt = Vec::with_capacity(pair.target.len());
        for w in &pair.target {
            let next = table.targets.len() as u32;
            let id = *table.target_ids.entry(w.clone()).or_insert(next);
            if id == next {
                table.targets.push(w.clone());
            }
            tgt.push(id);
        }
        pairs.push((src, tgt));
    }
    (table, Encoded { pairs })
}

fn log_likelihood(table: &TranslationTable, data: &Encoded) -> f64 {
    let mut ll = 0.0;
    for (src, tgt) in &data.pairs {
        let norm = src.len() as f64;
        for &f in tgt {
            let s: f64 = src.iter().map(|&e| table.probs[&(e, f)]).sum();
            ll += (s / norm).ln();
        }
    }
    ll
}

/// Trains IBM Model 1 for `iterations` EM rounds.
pub fn ibm1_train(corpus: &ParallelCorpus, iterations: usize) -> Result<Ibm1Model, XlingError> {
    ibm1_train_with(corpus, iterations, |_, _| {})
}

/// As [`ibm1_train`], calling `observe(iteration, table)` after each M-step.
///
/// `t` starts uniform over the targets co-occurring with each source. Every
/// source sentence gets a NULL token prepended.
pub fn ibm1_train_with<F>(
    corpus: &ParallelCorpus,
    iterations: usize,
    mut observe: F,
) -> Result<Ibm1Model, XlingError>
where
    F: FnMut(usize, &TranslationTable),
{
    if corpus.is_empty() {
        return Err(XlingError::EmptyCorpus);
    }
    let (mut table, data) = encode(corpus);

    let mut cooc: HashSet<(u32, u32)> = HashSet::new();
    for (src, tgt) in &data.pairs {
        for &e in src {
            for &f in tgt {
                cooc.insert((e, f));
            }
        }
    }
    let mut fanout = vec![0usize; table.sources.len()];
    for &(e, _) in &cooc {
        fanout[e as usize] += 1;
    }
    table.probs = cooc
        .into_iter()
        .map(|(e, f)| ((e, f), 1.0 / fanout[e as usize] as f64))
        .collect();

    let mut history = Vec::with_capacity(iterations + 1);
    for iter in 1..=iterations {
        let mut counts: HashMap<(u32, u32), f64> = HashMap::with_capacity(table.probs.len());
        let mut totals = vec![0.0f64; table.sources.len()];
        let mut ll = 0.0;
        for (src, tgt) in &data.pairs {
            let norm = src.len() as f64;
            for &f in tgt {
                let denom: f64 = src.iter().map(|&e| table.probs[&(e, f)]).sum();
                ll += (denom / norm).ln();
                for &e in src {
                    let c = table.probs[&(e, f)] / denom;
                    *counts.entry((e, f)).or_insert(0.0) += c;
                    totals[e as usize] += c;
                }
            }
        }
        history.push(ll);
        for (key, p) in table.probs.iter_mut() {
            *p = counts[key] / totals[key.0 as usize];
        }
        observe(iter, &table);
    }
    history.push(log_likelihood(&table, &data));

    Ok(Ibm1Model {
        table,
        log_likelihoods: history,
    })
}

/// Alignment links per sentence pair as `(source index, target index)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentTable {
    pub links: Vec<BTreeSet<(usize, usize)>>,
}

impl AlignmentTable {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Checks pair count and index ranges against `corpus`.
    pub fn validate(&self, corpus: &ParallelCorpus) -> Result<(), XlingError> {
        if self.links.len() != corpus.len() {
            return Err(XlingError::AlignmentMismatch(format!(
                "{} alignment lines for {} sentence pairs",
                self.links.len(),
                corpus.len()
            )));
        }
        for (n, (links, pair)) in self.links.iter().zip(&corpus.pairs).enumerate() {
            if let Some((i, j)) = links
                .iter()
                .find(|(i, j)| *i >= pair.source.len() || *j >= pair.target.len())
            {
                return Err(XlingError::AlignmentMismatch(format!(
                    "line {}: link {i}-{j} out of range",
                    n + 1
                )));
            }
        }
        Ok(())
    }
}

/// Links each target position to its most probable source word.
///
/// Ties among source words go to the smallest position. NULL takes the
/// target position (and no link is emitted) only when strictly more probable
/// than every source word, or when no source word has any mass.
pub fn viterbi_align(corpus: &ParallelCorpus, table: &TranslationTable) -> AlignmentTable {
    let links = corpus
        .pairs
        .iter()
        .map(|pair| {
            let mut out = BTreeSet::new();
            for (j, f) in pair.target.iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (i, e) in pair.source.iter().enumerate() {
                    let p = table.prob(Some(e), f);
                    if best.is_none_or(|(_, bp)| p > bp) {
                        best = Some((i, p));
                    }
                }
                if let Some((i, p)) = best {
                    if p > 0.0 && p >= table.prob(None, f) {
                        out.insert((i, j));
                    }
                }
            }
            out
        })
        .collect();
    AlignmentTable { links }
}

/// Reads Pharaoh alignments: one line per pair, space-separated 0-based `i-j` links.
pub fn read_alignment_file<R: BufRead>(reader: R) -> Result<AlignmentTable, XlingError> {
    let mut links = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let mut set = BTreeSet::new();
        for tok in line.split([' ', '\t', '\r']).filter(|t| !t.is_empty()) {
            let (i, j) = tok
                .split_once('-')
                .ok_or(XlingError::MalformedLink(n + 1))?;
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| XlingError::MalformedLink(n + 1))
            };
            set.insert((parse(i)?, parse(j)?));
        }
        links.push(set);
    }
    Ok(AlignmentTable { links })
}

pub fn write_alignment_file<W: Write>(mut writer: W, alignment: &AlignmentTable) -> io::Result<()> {
    for links in &alignment.links {
        let line: Vec<String> = links.iter().map(|(i, j)| format!("{i}-{j}")).collect();
        writeln!(writer, "{}", line.join(" "))?;
    }
    Ok(())
}
