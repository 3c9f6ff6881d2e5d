//! Sparse lexical features and dense embedding-composition features.
//!
//! Feature names are part of the model-file contract:
//!
//! * `SW=<lemma>` surrounding words over the normalized context,
//! * `C[<start>,<end>]=<l1>_<l2>...` collocations over raw token order,
//! * `P[<k>]=<tag>` POS tags over raw token order.
//!
//! Out-of-range positions produce the padding symbol `^` in sparse features
//! and a zero vector in the concatenated dense block.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_tokens, Instance, Stoplist};
use crate::embeddings::EmbeddingTable;

pub const PAD: &str = "^";

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("TableNotScaled: embedding table must be scaled before composition")]
    TableNotScaled,
    #[error("MissingEmbeddings: composition mode {0:?} needs an embedding table")]
    MissingEmbeddings(Composition),
    #[error("SigmaMismatch: table scaled to {table}, configuration expects {config}")]
    SigmaMismatch { table: f64, config: f64 },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Composition {
    Sum,
    Average,
    Concat,
    Off,
}

impl std::str::FromStr for Composition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Composition::Sum),
            "average" => Ok(Composition::Average),
            "concat" => Ok(Composition::Concat),
            "off" => Ok(Composition::Off),
            other => Err(format!(
                "unknown composition {other:?} (expected sum, average, concat or off)"
            )),
        }
    }
}

/// The standard eleven IMS-style collocation windows.
pub fn default_collocation_offsets() -> Vec<(i32, i32)> {
    vec![
        (-2, -2),
        (-1, -1),
        (1, 1),
        (2, 2),
        (-2, -1),
        (-1, 1),
        (1, 2),
        (-3, -1),
        (-2, 1),
        (-1, 2),
        (1, 3),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub window_w: usize,
    pub collocation_offsets: Vec<(i32, i32)>,
    pub pos_offsets: Vec<i32>,
    pub composition: Composition,
    /// Defaults to `window_w` when absent.
    pub concat_window: Option<usize>,
    pub sigma: f64,
    pub use_surrounding: bool,
    pub use_collocations: bool,
    pub use_pos: bool,
    /// Custom stoplist; `None` selects the bundled English list.
    pub stoplist: Option<Vec<String>>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_w: 7,
            collocation_offsets: default_collocation_offsets(),
            pos_offsets: (-3..=3).collect(),
            composition: Composition::Sum,
            concat_window: None,
            sigma: 0.1,
            use_surrounding: true,
            use_collocations: true,
            use_pos: true,
            stoplist: None,
        }
    }
}

impl FeatureConfig {
    pub fn concat_window(&self) -> usize {
        self.concat_window.unwrap_or(self.window_w)
    }

    /// Number of context slots filled by concatenation.
    pub fn concat_slots(&self) -> usize {
        self.concat_window() - 1
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let odd = |w: usize| w > 0 && w % 2 == 1;
        if !odd(self.window_w) {
            return Err(FeatureError::InvalidConfig(format!(
                "window_w must be a positive odd integer, got {}",
                self.window_w
            )));
        }
        if !odd(self.concat_window()) {
            return Err(FeatureError::InvalidConfig(format!(
                "concat_window must be a positive odd integer, got {}",
                self.concat_window()
            )));
        }
        if let Some(&(s, e)) = self.collocation_offsets.iter().find(|(s, e)| s > e) {
            return Err(FeatureError::InvalidConfig(format!(
                "collocation offset ({s},{e}) has start after end"
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(FeatureError::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Dense block length for a table of dimensionality `dim`.
    pub fn dense_len(&self, dim: usize) -> usize {
        match self.composition {
            Composition::Sum | Composition::Average => dim,
            Composition::Concat => dim * self.concat_slots(),
            Composition::Off => 0,
        }
    }
}

/// Named binary features plus an ordered dense block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    pub binary: BTreeSet<String>,
    pub dense: Vec<f64>,
}

fn token_at(instance: &Instance, offset: i32) -> Option<&crate::corpus::Token> {
    let pos = instance.target_index as i64 + offset as i64;
    if pos < 0 {
        return None;
    }
    instance.tokens.get(pos as usize)
}

/// `SW=<lemma>` for every distinct lemma outside the target position.
///
/// Expects an instance already passed through [`normalize_tokens`].
pub fn surrounding_word_features(normalized: &Instance) -> BTreeSet<String> {
    normalized
        .tokens
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != normalized.target_index)
        .map(|(_, t)| format!("SW={}", t.lemma))
        .collect()
}

pub fn collocation_features(instance: &Instance, offsets: &[(i32, i32)]) -> BTreeSet<String> {
    offsets
        .iter()
        .map(|&(start, end)| {
            let joined: Vec<&str> = (start..=end)
                .map(|k| token_at(instance, k).map_or(PAD, |t| t.lemma.as_str()))
                .collect();
            format!("C[{start},{end}]={}", joined.join("_"))
        })
        .collect()
}

pub fn pos_features(instance: &Instance, offsets: &[i32]) -> BTreeSet<String> {
    offsets
        .iter()
        .filter_map(|&k| match token_at(instance, k) {
            None => Some(format!("P[{k}]={PAD}")),
            Some(t) if t.pos.is_empty() => None,
            Some(t) => Some(format!("P[{k}]={}", t.pos)),
        })
        .collect()
}

/// Componentwise sum of the vectors of every in-vocabulary context lemma.
///
/// Returns the sum and the number of contributing tokens.
pub fn compose_sum(normalized: &Instance, table: &EmbeddingTable) -> (Vec<f64>, usize) {
    let mut acc = vec![0.0; table.dim()];
    let mut hits = 0;
    for (i, tok) in normalized.tokens.iter().enumerate() {
        if i == normalized.target_index {
            continue;
        }
        if let Some(v) = table.lookup(&tok.lemma) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            hits += 1;
        }
    }
    (acc, hits)
}

pub fn compose_average(normalized: &Instance, table: &EmbeddingTable) -> Vec<f64> {
    let (mut acc, hits) = compose_sum(normalized, table);
    if hits > 0 {
        for a in acc.iter_mut() {
            *a /= hits as f64;
        }
    }
    acc
}

/// Vectors of the `window - 1` raw positions nearest the target, left to right.
///
/// Boundary and out-of-vocabulary slots are zero vectors.
pub fn compose_concat(instance: &Instance, table: &EmbeddingTable, window: usize) -> Vec<f64> {
    let half = (window / 2) as i32;
    let dim = table.dim();
    let mut out = Vec::with_capacity(dim * (window - 1));
    for k in (-half..=half).filter(|&k| k != 0) {
        match token_at(instance, k).and_then(|t| table.lookup(&t.lemma)) {
            Some(v) => out.extend_from_slice(v),
            None => out.extend(std::iter::repeat_n(0.0, dim)),
        }
    }
    out
}

/// Applies a [`FeatureConfig`] with a resolved stoplist and optional embedding table.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<'a> {
    config: FeatureConfig,
    stoplist: Stoplist,
    table: Option<&'a EmbeddingTable>,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(
        config: FeatureConfig,
        table: Option<&'a EmbeddingTable>,
    ) -> Result<Self, FeatureError> {
        config.validate()?;
        if config.composition != Composition::Off {
            let table = table.ok_or(FeatureError::MissingEmbeddings(config.composition))?;
            let sigma = table.scaled_sigma().ok_or(FeatureError::TableNotScaled)?;
            if (sigma - config.sigma).abs() > 1e-12 * config.sigma {
                return Err(FeatureError::SigmaMismatch {
                    table: sigma,
                    config: config.sigma,
                });
            }
        }
        let stoplist = match &config.stoplist {
            Some(words) => Stoplist::from_words(words.iter().map(String::as_str)),
            None => Stoplist::english(),
        };
        Ok(FeatureExtractor {
            config,
            stoplist,
            table,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn stoplist(&self) -> &Stoplist {
        &self.stoplist
    }

    pub fn table(&self) -> Option<&'a EmbeddingTable> {
        self.table
    }

    /// Expected dense block length.
    pub fn dense_len(&self) -> usize {
        self.config
            .dense_len(self.table.map_or(0, EmbeddingTable::dim))
    }

    /// Dense composition features for a raw (unfiltered) instance.
    pub fn compose(&self, instance: &Instance) -> Vec<f64> {
        let normalized = normalize_tokens(instance, &self.stoplist);
        self.compose_with(instance, &normalized)
    }

    fn compose_with(&self, raw: &Instance, normalized: &Instance) -> Vec<f64> {
        let Some(table) = self.table else {
            return Vec::new();
        };
        match self.config.composition {
            Composition::Sum => compose_sum(normalized, table).0,
            Composition::Average => compose_average(normalized, table),
            Composition::Concat => compose_concat(raw, table, self.config.concat_window()),
            Composition::Off => Vec::new(),
        }
    }

    /// The full hybrid feature vector of a raw instance.
    pub fn assemble(&self, instance: &Instance) -> FeatureVector {
        let normalized = normalize_tokens(instance, &self.stoplist);
        let mut binary = BTreeSet::new();
        if self.config.use_surrounding {
            binary.extend(surrounding_word_features(&normalized));
        }
        if self.config.use_collocations {
            binary.extend(collocation_features(
                instance,
                &self.config.collocation_offsets,
            ));
        }
        if self.config.use_pos {
            binary.extend(pos_features(instance, &self.config.pos_offsets));
        }
        FeatureVector {
            binary,
            dense: self.compose_with(instance, &normalized),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    fn inst(lemmas: &[&str], tags: &[&str], target: usize) -> Instance {
        let tokens = lemmas
            .iter()
            .enumerate()
            .map(|(i, l)| Token::word(l, tags.get(i).copied().unwrap_or("")))
            .collect();
        Instance {
            id: "t".into(),
            target_lemma: lemmas[target].to_string(),
            target_pos: String::new(),
            target_index: target,
            is_proper_noun_part: false,
            gold: vec![],
            tokens,
        }
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn scaled(pairs: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        let dim = pairs[0].1.len();
        EmbeddingTable::from_pairs(dim, "t", pairs.iter().cloned())
            .unwrap()
            .scale(0.1)
            .unwrap()
    }

    #[test]
    fn surrounding_words_dedup() {
        let i = inst(&["river", "bank", "water", "river"], &[], 1);
        assert_eq!(
            surrounding_word_features(&i),
            set(&["SW=river", "SW=water"])
        );
        assert!(surrounding_word_features(&inst(&["bank"], &[], 0)).is_empty());
    }

    #[test]
    fn surrounding_words_include_repeated_target_lemma() {
        let i = inst(&["bank", "of", "bank"], &[], 0);
        assert_eq!(surrounding_word_features(&i), set(&["SW=of", "SW=bank"]));
    }

    #[test]
    fn collocations() {
        let i = inst(&["the", "bank", "of"], &[], 1);
        assert_eq!(
            collocation_features(&i, &[(-1, -1)]),
            set(&["C[-1,-1]=the"])
        );
        assert_eq!(collocation_features(&i, &[(1, 2)]), set(&["C[1,2]=of_^"]));
        assert_eq!(
            collocation_features(&i, &[(-1, 1)]),
            set(&["C[-1,1]=the_bank_of"])
        );
        let j = inst(&["big", "red", "dog"], &[], 2);
        assert_eq!(
            collocation_features(&j, &[(-2, -1)]),
            set(&["C[-2,-1]=big_red"])
        );
        assert_eq!(collocation_features(&j, &[(-3, -3)]), set(&["C[-3,-3]=^"]));
    }

    #[test]
    fn pos_window() {
        let i = inst(&["the", "bank", "of"], &["DT", "NN", "IN"], 1);
        assert_eq!(
            pos_features(&i, &[-1, 0, 1]),
            set(&["P[-1]=DT", "P[0]=NN", "P[1]=IN"])
        );
        let j = inst(&["bank", "of"], &["NN", "IN"], 0);
        assert!(pos_features(&j, &[-1]).contains("P[-1]=^"));
        let k = inst(&["bank", "of", "x"], &["NN", "IN", ""], 0);
        assert_eq!(pos_features(&k, &[2]), BTreeSet::new());
    }

    #[test]
    fn sum_and_average() {
        let table = EmbeddingTable::from_pairs(
            2,
            "t",
            [
                ("a", vec![1.0, 0.0]),
                ("b", vec![0.5, 0.5]),
                ("bank", vec![9.0, 9.0]),
            ],
        )
        .unwrap();
        let i = inst(&["a", "bank", "b", "oov"], &[], 1);
        let (sum, hits) = compose_sum(&i, &table);
        assert_eq!(sum, vec![1.5, 0.5]);
        assert_eq!(hits, 2);
        assert_eq!(compose_average(&i, &table), vec![0.75, 0.25]);
        let lonely = inst(&["bank"], &[], 0);
        assert_eq!(compose_average(&lonely, &table), vec![0.0, 0.0]);
    }

    #[test]
    fn concat_pads_boundaries() {
        let table =
            EmbeddingTable::from_pairs(2, "t", [("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])])
                .unwrap();
        let i = inst(&["a", "bank"], &[], 1);
        assert_eq!(compose_concat(&i, &table, 3), vec![1.0, 0.0, 0.0, 0.0]);
        let j = inst(&["x", "b", "bank", "a"], &[], 2);
        assert_eq!(
            compose_concat(&j, &table, 5),
            vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn extractor_requires_scaled_table() {
        let raw = EmbeddingTable::from_pairs(1, "t", [("a", vec![1.0]), ("b", vec![2.0])]).unwrap();
        let cfg = FeatureConfig::default();
        assert_eq!(
            FeatureExtractor::new(cfg.clone(), Some(&raw)).unwrap_err(),
            FeatureError::TableNotScaled
        );
        assert_eq!(
            FeatureExtractor::new(cfg.clone(), None).unwrap_err(),
            FeatureError::MissingEmbeddings(Composition::Sum)
        );
        let s = raw.scale(0.2).unwrap();
        assert!(matches!(
            FeatureExtractor::new(cfg, Some(&s)),
            Err(FeatureError::SigmaMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = FeatureConfig {
            composition: Composition::Off,
            ..FeatureConfig::default()
        };
        cfg.window_w = 4;
        assert!(cfg.validate().is_err());
        cfg.window_w = 7;
        cfg.concat_window = Some(2);
        assert!(cfg.validate().is_err());
        cfg.concat_window = None;
        cfg.collocation_offsets = vec![(1, -1)];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn assemble_switches() {
        let table = scaled(&[
            ("river", vec![1.0, 2.0]),
            ("water", vec![3.0, -1.0]),
            ("x", vec![0.0, 0.5]),
        ]);
        let i = inst(&["the", "river", "bank", "."], &["DT", "NN", "NN", "."], 2);

        let sparse_only = FeatureConfig {
            composition: Composition::Off,
            ..FeatureConfig::default()
        };
        let fv = FeatureExtractor::new(sparse_only, None)
            .unwrap()
            .assemble(&i);
        assert!(fv.dense.is_empty());
        assert!(!fv.binary.is_empty());

        let dense_only = FeatureConfig {
            use_surrounding: false,
            use_collocations: false,
            use_pos: false,
            ..FeatureConfig::default()
        };
        let fv = FeatureExtractor::new(dense_only, Some(&table))
            .unwrap()
            .assemble(&i);
        assert!(fv.binary.is_empty());
        assert_eq!(fv.dense.len(), 2);
        assert_eq!(fv.dense, table.lookup("river").unwrap());
    }

    #[test]
    fn assemble_counts_on_three_token_fixture() {
        // Hand count: tokens [river, bank, water], target 1, nothing stoplisted.
        // SW: {river, water} = 2; collocations: one per offset pair = 11;
        // POS offsets -3..3: -3,-2,+2,+3 are out of range -> "^" (4), -1,0,+1 tagged (3) = 7;
        // sum dense = d = 2.
        let table = scaled(&[
            ("river", vec![1.0, 2.0]),
            ("water", vec![3.0, -1.0]),
            ("x", vec![0.0, 0.5]),
        ]);
        let i = inst(&["river", "bank", "water"], &["NN", "NN", "NN"], 1);
        let fx = FeatureExtractor::new(FeatureConfig::default(), Some(&table)).unwrap();
        let fv = fx.assemble(&i);
        let count = |prefix: &str| fv.binary.iter().filter(|n| n.starts_with(prefix)).count();
        assert_eq!(count("SW="), 2);
        assert_eq!(count("C["), 11);
        assert_eq!(count("P["), 7);
        assert_eq!(fv.binary.len(), 2 + 11 + 7);
        assert_eq!(fv.dense.len(), 2);
    }
}
