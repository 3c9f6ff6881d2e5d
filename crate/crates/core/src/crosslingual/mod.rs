//! Cross-lingual WSD: senses are translations.
//!
//! Training data comes from a sentence-aligned parallel corpus. Word
//! alignment links each English token to target-language words, and links
//! that land on a dictionary translation become training labels.

mod alignment;
mod annotation;
mod projection;

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::corpus::SenseInventory;

pub use alignment::{
    ibm1_train, ibm1_train_with, read_alignment_file, viterbi_align, write_alignment_file,
    AlignmentTable, Ibm1Model, TranslationTable,
};
pub use annotation::{
    compute_kappa, filter_annotations, read_annotations, AnnotationRecord, AnnotationSet,
    FilterMode, KappaResult,
};
pub use projection::{build_xling_training, ProjectionReport};

#[derive(Debug, Error, PartialEq)]
pub enum XlingError {
    #[error("EmptyCorpus: parallel corpus has no sentence pairs")]
    EmptyCorpus,
    #[error("LineCountMismatch: source has {source_lines} lines, target has {target_lines}")]
    LineCountMismatch {
        source_lines: usize,
        target_lines: usize,
    },
    #[error("EmptySentence: line {0} has an empty side")]
    EmptySentence(usize),
    #[error("MalformedLink: line {0}")]
    MalformedLink(usize),
    #[error("AlignmentMismatch: {0}")]
    AlignmentMismatch(String),
    #[error("MalformedDictionary: line {0}")]
    MalformedDictionary(usize),
    #[error("MalformedCounts: line {0}")]
    MalformedCounts(usize),
    #[error("MalformedAnnotation: line {0}: {1}")]
    MalformedAnnotation(usize, String),
    #[error("NoPairs: no instance has two or more annotators")]
    NoPairs,
    #[error("DegenerateAgreement: chance agreement is 1, kappa is undefined")]
    DegenerateAgreement,
    #[error("MissingLemma: {0:?} has no dictionary entry")]
    MissingLemma(String),
    #[error("UnknownInstance: {0:?}")]
    UnknownInstance(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<io::Error> for XlingError {
    fn from(e: io::Error) -> Self {
        XlingError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

/// Sentence-aligned bitext; source tokens are lowercased, target tokens opaque.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
}

fn split_tokens(line: &str) -> Vec<String> {
    line.split([' ', '\t'])
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl ParallelCorpus {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, XlingError>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut corpus = ParallelCorpus::default();
        for (n, (src, tgt)) in pairs.into_iter().enumerate() {
            corpus.push_line(n + 1, src.as_ref(), tgt.as_ref())?;
        }
        Ok(corpus)
    }

    fn push_line(&mut self, lineno: usize, src: &str, tgt: &str) -> Result<(), XlingError> {
        let source: Vec<String> = split_tokens(src.trim_end_matches('\r'))
            .into_iter()
            .map(|t| t.to_lowercase())
            .collect();
        let target = split_tokens(tgt.trim_end_matches('\r'));
        if source.is_empty() || target.is_empty() {
            return Err(XlingError::EmptySentence(lineno));
        }
        self.pairs.push(SentencePair { source, target });
        Ok(())
    }

    /// Reads two line-aligned files, one sentence per line.
    pub fn read<R1: BufRead, R2: BufRead>(source: R1, target: R2) -> Result<Self, XlingError> {
        let src: Vec<String> = source.lines().collect::<io::Result<_>>()?;
        let tgt: Vec<String> = target.lines().collect::<io::Result<_>>()?;
        if src.len() != tgt.len() {
            return Err(XlingError::LineCountMismatch {
                source_lines: src.len(),
                target_lines: tgt.len(),
            });
        }
        let mut corpus = ParallelCorpus::default();
        for (n, (s, t)) in src.iter().zip(&tgt).enumerate() {
            corpus.push_line(n + 1, s, t)?;
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// English headwords with their candidate translations and observed label counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BilingualDictionary {
    entries: BTreeMap<String, Vec<String>>,
    counts: HashMap<(String, String), u64>,
}

impl BilingualDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds translations for `lemma`, skipping ones already listed.
    pub fn add(&mut self, lemma: &str, translations: &[&str]) {
        let list = self.entries.entry(lemma.to_lowercase()).or_default();
        for t in translations {
            if !t.is_empty() && !list.iter().any(|x| x == t) {
                list.push(t.to_string());
            }
        }
    }

    /// `english_lemma<TAB>translation1<TAB>translation2...`; repeated headwords merge.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, XlingError> {
        let mut dict = BilingualDictionary::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t').map(str::trim);
            let lemma = cols.next().unwrap_or_default();
            if lemma.is_empty() {
                return Err(XlingError::MalformedDictionary(n + 1));
            }
            let translations: Vec<&str> = cols.filter(|t| !t.is_empty()).collect();
            dict.add(lemma, &translations);
        }
        Ok(dict)
    }

    pub fn write_tsv<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for (lemma, translations) in &self.entries {
            write!(writer, "{lemma}")?;
            for t in translations {
                write!(writer, "\t{t}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }

    /// `lemma<TAB>translation<TAB>count` lines, merged into this dictionary.
    pub fn read_counts<R: BufRead>(&mut self, reader: R) -> Result<(), XlingError> {
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [lemma, translation, count] = cols[..] else {
                return Err(XlingError::MalformedCounts(n + 1));
            };
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| XlingError::MalformedCounts(n + 1))?;
            self.add(lemma, &[translation]);
            self.counts
                .insert((lemma.to_lowercase(), translation.to_string()), count);
        }
        Ok(())
    }

    /// Nonzero counts, sorted by lemma then translation order.
    pub fn write_counts<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for (lemma, translations) in &self.entries {
            for t in translations {
                let c = self.count(lemma, t);
                if c > 0 {
                    writeln!(writer, "{lemma}\t{t}\t{c}")?;
                }
            }
        }
        Ok(())
    }

    pub fn translations(&self, lemma: &str) -> Option<&[String]> {
        self.entries.get(lemma).map(Vec::as_slice)
    }

    pub fn contains(&self, lemma: &str, translation: &str) -> bool {
        self.translations(lemma)
            .is_some_and(|ts| ts.iter().any(|t| t == translation))
    }

    pub fn is_headword(&self, lemma: &str) -> bool {
        self.entries.contains_key(lemma)
    }

    pub fn count(&self, lemma: &str, translation: &str) -> u64 {
        self.counts
            .get(&(lemma.to_string(), translation.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn increment(&mut self, lemma: &str, translation: &str) {
        *self
            .counts
            .entry((lemma.to_string(), translation.to_string()))
            .or_insert(0) += 1;
    }

    /// Re-sorts every translation list by descending count; ties keep their order.
    pub fn sort_by_count(&mut self) {
        let counts = &self.counts;
        for (lemma, list) in self.entries.iter_mut() {
            list.sort_by_key(|t| {
                std::cmp::Reverse(
                    counts
                        .get(&(lemma.clone(), t.clone()))
                        .copied()
                        .unwrap_or(0),
                )
            });
        }
    }

    /// The `k` most frequent translations of `lemma` with their counts.
    pub fn top_by_count(&self, lemma: &str, k: usize) -> Vec<(&str, u64)> {
        let Some(list) = self.entries.get(lemma) else {
            return Vec::new();
        };
        let mut v: Vec<(usize, &str, u64)> = list
            .iter()
            .enumerate()
            .map(|(i, t)| (i, t.as_str(), self.count(lemma, t)))
            .collect();
        v.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
        v.into_iter().take(k).map(|(_, t, c)| (t, c)).collect()
    }

    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The dictionary as a sense inventory in its current translation order.
    pub fn to_inventory(&self) -> SenseInventory {
        let mut inv = SenseInventory::new();
        for (lemma, list) in &self.entries {
            inv.insert(lemma, list.clone());
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_reading() {
        let c = ParallelCorpus::read("The bank\nriver\n".as_bytes(), "银行\n河 流\n".as_bytes())
            .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.pairs[0].source, ["the", "bank"]);
        assert_eq!(c.pairs[1].target, ["河", "流"]);
        assert_eq!(
            ParallelCorpus::read("a\nb\n".as_bytes(), "x\n".as_bytes()).unwrap_err(),
            XlingError::LineCountMismatch {
                source_lines: 2,
                target_lines: 1
            }
        );
        assert_eq!(
            ParallelCorpus::read("a\n\n".as_bytes(), "x\ny\n".as_bytes()).unwrap_err(),
            XlingError::EmptySentence(2)
        );
    }

    #[test]
    fn dictionary_tsv_and_counts() {
        let mut d =
            BilingualDictionary::from_tsv("bank\t银行\t河岸\nBank\t银行\t岸\n".as_bytes()).unwrap();
        assert_eq!(d.translations("bank").unwrap(), ["银行", "河岸", "岸"]);
        d.read_counts("bank\t岸\t5\nbank\t银行\t2\n".as_bytes())
            .unwrap();
        assert_eq!(d.top_by_count("bank", 2), vec![("岸", 5), ("银行", 2)]);
        d.sort_by_count();
        assert_eq!(d.translations("bank").unwrap(), ["岸", "银行", "河岸"]);
        let mut out = Vec::new();
        d.write_counts(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "bank\t岸\t5\nbank\t银行\t2\n"
        );
        assert!(d.read_counts("bank\tx\n".as_bytes()).is_err());
        assert!(BilingualDictionary::from_tsv("\tx\n".as_bytes()).is_err());
    }
}
