//! Projection of translation labels through word alignments.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{AlignmentTable, BilingualDictionary, ParallelCorpus, XlingError};
use crate::corpus::{Instance, Token};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProjectionReport {
    pub emitted: usize,
    /// Linked headword occurrences whose aligned words are all outside the dictionary.
    pub skipped_not_in_dictionary: usize,
    /// Headword occurrences without any alignment link.
    pub unlinked_headwords: usize,
    pub per_lemma: BTreeMap<String, usize>,
}

fn source_token(word: &str) -> Token {
    Token {
        surface: word.to_string(),
        lemma: word.to_string(),
        pos: String::new(),
        sentence_index: 0,
        is_punct: word.chars().all(|c| !c.is_alphanumeric()),
    }
}

/// Emits one training instance per linked dictionary headword occurrence.
///
/// The gold set holds the aligned target words that are listed translations
/// of the headword. The returned dictionary carries the label counts and
/// lists each headword's translations by descending count.
pub fn build_xling_training(
    corpus: &ParallelCorpus,
    alignment: &AlignmentTable,
    dictionary: &BilingualDictionary,
) -> Result<(Vec<Instance>, BilingualDictionary, ProjectionReport), XlingError> {
    alignment.validate(corpus)?;
    let mut enriched = dictionary.clone();
    let mut report = ProjectionReport::default();
    let mut instances = Vec::new();

    for (p, (pair, links)) in corpus.pairs.iter().zip(&alignment.links).enumerate() {
        let tokens: Vec<Token> = pair.source.iter().map(|w| source_token(w)).collect();
        for (i, lemma) in pair.source.iter().enumerate() {
            if !dictionary.is_headword(lemma) {
                continue;
            }
            let aligned: Vec<&str> = links
                .iter()
                .filter(|(s, _)| *s == i)
                .map(|&(_, j)| pair.target[j].as_str())
                .collect();
            if aligned.is_empty() {
                report.unlinked_headwords += 1;
                continue;
            }
            let mut gold: Vec<String> = Vec::new();
            for w in aligned {
                if dictionary.contains(lemma, w) && !gold.iter().any(|g| g == w) {
                    gold.push(w.to_string());
                }
            }
            if gold.is_empty() {
                report.skipped_not_in_dictionary += 1;
                continue;
            }
            for g in &gold {
                enriched.increment(lemma, g);
            }
            report.emitted += 1;
            *report.per_lemma.entry(lemma.clone()).or_default() += 1;
            instances.push(Instance {
                id: format!("xl.{p}.{i}"),
                target_lemma: lemma.clone(),
                target_pos: String::new(),
                target_index: i,
                is_proper_noun_part: false,
                gold,
                tokens: tokens.clone(),
            });
        }
    }
    enriched.sort_by_count();
    Ok((instances, enriched, report))
}
