//! Per-lemma one-vs-rest linear SVMs trained with a Pegasos-style primal
//! subgradient method, and the model store that holds them.
//!
//! Training is deterministic: each lemma draws its example order from a
//! ChaCha stream seeded with a stable hash of the lemma, so the result does
//! not depend on which worker trains which lemma.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Instance, SenseInventory};
use crate::embeddings::EmbeddingTable;
use crate::features::{FeatureConfig, FeatureError, FeatureExtractor, FeatureVector};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("UnknownLabel: lemma {lemma:?} has no sense {sense:?} in the inventory")]
    UnknownLabel { lemma: String, sense: String },
    #[error("EmptyTrainingSet: no labeled examples for lemma {0:?}")]
    EmptyTrainingSet(String),
    #[error(
        "DenseLengthMismatch: lemma {lemma:?}: expected {expected} dense values, found {found}"
    )]
    DenseLengthMismatch {
        lemma: String,
        expected: usize,
        found: usize,
    },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("LemmaUnknownEverywhere: lemma {0:?} has neither a model nor an inventory entry")]
    LemmaUnknownEverywhere(String),
    #[error("MissingLemma: lemma {0:?} is not in the sense inventory")]
    MissingLemma(String),
    #[error("DenseLengthMismatch: lemma {lemma:?}: model expects {expected} dense values, found {found}")]
    DenseLengthMismatch {
        lemma: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("MalformedModel: {0}")]
    Json(#[from] serde_json::Error),
    #[error("UnsupportedVersion: {0}")]
    Version(u32),
    #[error("InvalidModel: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed_base: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-4,
            epochs: 50,
            seed_base: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig(
                "epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A feature vector with its gold senses.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub labels: Vec<String>,
}

/// One-vs-rest linear model for a single lemma.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaModel {
    pub lemma: String,
    pub senses: Vec<String>,
    /// Binary feature name to column. Dense features occupy the columns after these.
    pub features: BTreeMap<String, usize>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub mfs: String,
}

impl LemmaModel {
    pub fn dense_len(&self) -> usize {
        self.weights
            .first()
            .map_or(0, |row| row.len() - self.features.len())
    }

    fn sparse_row(&self, fv: &FeatureVector) -> Vec<(usize, f64)> {
        let nb = self.features.len();
        let mut row: Vec<(usize, f64)> = fv
            .binary
            .iter()
            .filter_map(|name| self.features.get(name).map(|&i| (i, 1.0)))
            .collect();
        row.extend(fv.dense.iter().enumerate().map(|(j, &v)| (nb + j, v)));
        row
    }

    /// Per-sense margins. Binary features absent from the dictionary are ignored.
    pub fn margins(&self, fv: &FeatureVector) -> Result<Vec<f64>, PredictError> {
        if fv.dense.len() != self.dense_len() {
            return Err(PredictError::DenseLengthMismatch {
                lemma: self.lemma.clone(),
                expected: self.dense_len(),
                found: fv.dense.len(),
            });
        }
        let row = self.sparse_row(fv);
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + row.iter().map(|&(i, x)| w[i] * x).sum::<f64>())
            .collect())
    }

    /// Argmax sense; ties go to the earlier (more frequent) sense.
    pub fn predict(&self, fv: &FeatureVector) -> Result<(&str, Vec<f64>), PredictError> {
        let margins = self.margins(fv)?;
        let mut best = 0;
        for (k, &m) in margins.iter().enumerate() {
            if m > margins[best] {
                best = k;
            }
        }
        Ok((self.senses[best].as_str(), margins))
    }
}

/// Trains the one-vs-rest model of `lemma`. Examples with no labels are skipped.
pub fn train_lemma_model(
    lemma: &str,
    examples: &[LabeledExample],
    inventory: &SenseInventory,
    config: &TrainConfig,
) -> Result<LemmaModel, TrainError> {
    config.validate()?;
    let examples: Vec<&LabeledExample> = examples.iter().filter(|e| !e.labels.is_empty()).collect();
    if examples.is_empty() {
        return Err(TrainError::EmptyTrainingSet(lemma.to_string()));
    }
    let unknown = |sense: &str| TrainError::UnknownLabel {
        lemma: lemma.to_string(),
        sense: sense.to_string(),
    };
    let senses: Vec<String> = inventory
        .senses(lemma)
        .ok_or_else(|| unknown(&examples[0].labels[0]))?
        .to_vec();
    let sense_index: HashMap<&str, usize> = senses
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    let dense_len = examples[0].features.dense.len();
    let mut counts = vec![0usize; senses.len()];
    let mut targets: Vec<Vec<bool>> = Vec::with_capacity(examples.len());
    for ex in &examples {
        if ex.features.dense.len() != dense_len {
            return Err(TrainError::DenseLengthMismatch {
                lemma: lemma.to_string(),
                expected: dense_len,
                found: ex.features.dense.len(),
            });
        }
        let mut pos = vec![false; senses.len()];
        for label in &ex.labels {
            let k = *sense_index
                .get(label.as_str())
                .ok_or_else(|| unknown(label))?;
            pos[k] = true;
            counts[k] += 1;
        }
        targets.push(pos);
    }

    // most frequent, ties to inventory order
    let mut mfs = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[mfs] {
            mfs = k;
        }
    }

    let names: BTreeSet<&str> = examples
        .iter()
        .flat_map(|e| e.features.binary.iter().map(String::as_str))
        .collect();
    let features: BTreeMap<String, usize> = names
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n.to_string(), i))
        .collect();
    let cols = features.len() + dense_len;

    let mut model = LemmaModel {
        lemma: lemma.to_string(),
        senses,
        features,
        weights: Vec::new(),
        bias: Vec::new(),
        mfs: String::new(),
    };
    model.mfs = model.senses[mfs].clone();

    let observed = counts.iter().filter(|&&c| c > 0).count();
    if observed == 1 {
        model.weights = vec![vec![0.0; cols]; model.senses.len()];
        model.bias = (0..model.senses.len())
            .map(|k| if k == mfs { 1.0 } else { 0.0 })
            .collect();
        return Ok(model);
    }

    let rows: Vec<Vec<(usize, f64)>> = examples
        .iter()
        .map(|e| model.sparse_row(&e.features))
        .collect();
    let (weights, bias) = pegasos(
        &rows,
        &targets,
        cols,
        model.senses.len(),
        config,
        stable_hash(lemma) ^ config.seed_base,
    );
    model.weights = weights;
    model.bias = bias;
    Ok(model)
}

/// Jointly runs one binary Pegasos problem per sense over a shared example order.
///
/// The bias is an extra constant-one column and is regularized with the rest.
/// Weights are kept as `scale * v` so each step costs O(nonzeros).
fn pegasos(
    rows: &[Vec<(usize, f64)>],
    targets: &[Vec<bool>],
    cols: usize,
    n_senses: usize,
    config: &TrainConfig,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let width = cols + 1;
    let bias_col = cols;
    let mut v = vec![vec![0.0f64; width]; n_senses];
    let mut scale = 1.0f64;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t: u64 = 0;
    let mut margins = vec![0.0f64; n_senses];

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            t += 1;
            let eta = 1.0 / (config.lambda * t as f64);
            let row = &rows[idx];
            for (m, vk) in margins.iter_mut().zip(&v) {
                let dot: f64 = row.iter().map(|&(i, x)| vk[i] * x).sum::<f64>() + vk[bias_col];
                *m = scale * dot;
            }

            let shrink = 1.0 - 1.0 / t as f64;
            if shrink == 0.0 {
                for vk in v.iter_mut() {
                    vk.fill(0.0);
                }
                scale = 1.0;
            } else {
                scale *= shrink;
            }

            for (k, vk) in v.iter_mut().enumerate() {
                let y = if targets[idx][k] { 1.0 } else { -1.0 };
                if y * margins[k] < 1.0 {
                    let step = eta * y / scale;
                    for &(i, x) in row {
                        vk[i] += step * x;
                    }
                    vk[bias_col] += step;
                }
            }

            if scale < 1e-9 {
                for vk in v.iter_mut() {
                    for x in vk.iter_mut() {
                        *x *= scale;
                    }
                }
                scale = 1.0;
            }
        }
    }

    let mut weights = Vec::with_capacity(n_senses);
    let mut bias = Vec::with_capacity(n_senses);
    for vk in v {
        let mut w: Vec<f64> = vk.iter().map(|x| x * scale).collect();
        bias.push(w.pop().unwrap_or(0.0));
        weights.push(w);
    }
    (weights, bias)
}

/// Trained models keyed by lemma plus the configuration needed to reproduce features.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStore {
    pub feature_config: FeatureConfig,
    pub train_config: TrainConfig,
    pub embedding_provenance: String,
    pub sigma: f64,
    pub lemmas: BTreeMap<String, LemmaModel>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LemmaModelFile {
    senses: Vec<String>,
    features: BTreeMap<String, usize>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    mfs: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelStoreFile {
    version: u32,
    feature_config: FeatureConfig,
    train_config: TrainConfig,
    embedding_provenance: String,
    sigma: f64,
    stdev_divisor: String,
    lemmas: BTreeMap<String, LemmaModelFile>,
}

const STDEV_DIVISOR: &str = "n-1";

impl ModelStore {
    pub fn new(
        feature_config: FeatureConfig,
        train_config: TrainConfig,
        embedding_provenance: &str,
    ) -> Self {
        ModelStore {
            sigma: feature_config.sigma,
            feature_config,
            train_config,
            embedding_provenance: embedding_provenance.to_string(),
            lemmas: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.lemmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lemmas.is_empty()
    }

    /// A feature extractor matching the configuration the models were trained with.
    pub fn extractor<'a>(
        &self,
        table: Option<&'a EmbeddingTable>,
    ) -> Result<FeatureExtractor<'a>, FeatureError> {
        FeatureExtractor::new(self.feature_config.clone(), table)
    }

    /// Compact JSON with sorted keys and 17-significant-digit floats.
    pub fn to_json(&self) -> String {
        let file = ModelStoreFile {
            version: MODEL_FORMAT_VERSION,
            feature_config: self.feature_config.clone(),
            train_config: self.train_config.clone(),
            embedding_provenance: self.embedding_provenance.clone(),
            sigma: self.sigma,
            stdev_divisor: STDEV_DIVISOR.to_string(),
            lemmas: self
                .lemmas
                .iter()
                .map(|(lemma, m)| {
                    (
                        lemma.clone(),
                        LemmaModelFile {
                            senses: m.senses.clone(),
                            features: m.features.clone(),
                            weights: m.weights.clone(),
                            bias: m.bias.clone(),
                            mfs: m.mfs.clone(),
                        },
                    )
                })
                .collect(),
        };
        // plain data, serialization cannot fail
        let mut s = crate::json::to_string_fixed(&file).unwrap_or_default();
        s.push('\n');
        s
    }

    pub fn write<W: Write>(&self, mut writer: W) -> io::Result<()> {
        writer.write_all(self.to_json().as_bytes())
    }

    pub fn read<R: Read>(reader: R) -> Result<ModelStore, ModelFileError> {
        let file: ModelStoreFile = serde_json::from_reader(reader)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(ModelFileError::Version(file.version));
        }
        if file.stdev_divisor != STDEV_DIVISOR {
            return Err(ModelFileError::Invalid(format!(
                "unsupported stdev_divisor {:?}",
                file.stdev_divisor
            )));
        }
        let mut lemmas = BTreeMap::new();
        for (lemma, m) in file.lemmas {
            let invalid = |why: &str| ModelFileError::Invalid(format!("lemma {lemma:?}: {why}"));
            let nb = m.features.len();
            let mut seen = vec![false; nb];
            for &i in m.features.values() {
                if i >= nb || std::mem::replace(&mut seen[i], true) {
                    return Err(invalid("feature indices are not contiguous from 0"));
                }
            }
            if m.senses.is_empty()
                || m.weights.len() != m.senses.len()
                || m.bias.len() != m.senses.len()
            {
                return Err(invalid("weight/bias rows do not match senses"));
            }
            let width = m.weights[0].len();
            if width < nb || m.weights.iter().any(|r| r.len() != width) {
                return Err(invalid("ragged weight matrix"));
            }
            if !m.senses.contains(&m.mfs) {
                return Err(invalid("mfs is not one of the senses"));
            }
            lemmas.insert(
                lemma.clone(),
                LemmaModel {
                    lemma,
                    senses: m.senses,
                    features: m.features,
                    weights: m.weights,
                    bias: m.bias,
                    mfs: m.mfs,
                },
            );
        }
        Ok(ModelStore {
            feature_config: file.feature_config,
            train_config: file.train_config,
            embedding_provenance: file.embedding_provenance,
            sigma: file.sigma,
            lemmas,
        })
    }
}

/// Labeled feature vectors for one lemma's instances; unlabeled instances are dropped.
pub fn labeled_examples(
    instances: &[Instance],
    extractor: &FeatureExtractor,
) -> Vec<LabeledExample> {
    instances
        .iter()
        .filter(|i| !i.gold.is_empty())
        .map(|i| LabeledExample {
            features: extractor.assemble(i),
            labels: i.gold.clone(),
        })
        .collect()
}

/// Trains every lemma group on `workers` threads.
///
/// Lemmas without labeled data are omitted. Failures are returned per lemma
/// alongside the store of the lemmas that trained.
pub fn train_all(
    groups: &BTreeMap<String, Vec<Instance>>,
    extractor: &FeatureExtractor,
    train_config: &TrainConfig,
    inventory: &SenseInventory,
    workers: usize,
) -> Result<(ModelStore, Vec<TrainError>), TrainError> {
    train_config.validate()?;
    let train_one = |(lemma, instances): (&String, &Vec<Instance>)| {
        let examples = labeled_examples(instances, extractor);
        if examples.is_empty() {
            return None;
        }
        Some(train_lemma_model(lemma, &examples, inventory, train_config))
    };
    let results: Vec<Option<Result<LemmaModel, TrainError>>> = if workers <= 1 {
        groups.iter().map(train_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        pool.install(|| groups.par_iter().map(train_one).collect())
    };

    let mut store = ModelStore::new(
        extractor.config().clone(),
        train_config.clone(),
        extractor.table().map_or("", EmbeddingTable::provenance),
    );
    let mut errors = Vec::new();
    for r in results.into_iter().flatten() {
        match r {
            Ok(m) => {
                store.lemmas.insert(m.lemma.clone(), m);
            }
            Err(e) => errors.push(e),
        }
    }
    Ok((store, errors))
}

/// How a prediction was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSource {
    Model,
    FirstSense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sense: String,
    pub scores: Vec<(String, f64)>,
    pub source: PredictionSource,
}

/// Predicts with the lemma's model, falling back to the inventory's first sense.
pub fn predict(
    store: &ModelStore,
    instance: &Instance,
    extractor: &FeatureExtractor,
    inventory: &SenseInventory,
) -> Result<Prediction, PredictError> {
    if let Some(model) = store.lemmas.get(&instance.target_lemma) {
        let fv = extractor.assemble(instance);
        let (sense, margins) = model.predict(&fv)?;
        return Ok(Prediction {
            sense: sense.to_string(),
            scores: model.senses.iter().cloned().zip(margins).collect(),
            source: PredictionSource::Model,
        });
    }
    match inventory.first_sense(&instance.target_lemma) {
        Some(s) => Ok(Prediction {
            sense: s.to_string(),
            scores: Vec::new(),
            source: PredictionSource::FirstSense,
        }),
        None => Err(PredictError::LemmaUnknownEverywhere(
            instance.target_lemma.clone(),
        )),
    }
}

/// First-listed sense for every instance, as `(id, sense)` pairs.
pub fn mfs_predict(
    inventory: &SenseInventory,
    instances: &[Instance],
) -> Result<Vec<(String, String)>, PredictError> {
    instances
        .iter()
        .map(|i| {
            inventory
                .first_sense(&i.target_lemma)
                .map(|s| (i.id.clone(), s.to_string()))
                .ok_or_else(|| PredictError::MissingLemma(i.target_lemma.clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(names: &[&str], dense: &[f64]) -> FeatureVector {
        FeatureVector {
            binary: names.iter().map(|s| s.to_string()).collect(),
            dense: dense.to_vec(),
        }
    }

    fn ex(names: &[&str], label: &str) -> LabeledExample {
        LabeledExample {
            features: fv(names, &[]),
            labels: vec![label.to_string()],
        }
    }

    fn inventory(lemma: &str, senses: &[&str]) -> SenseInventory {
        let mut inv = SenseInventory::new();
        inv.insert(lemma, senses.iter().map(|s| s.to_string()).collect());
        inv
    }

    /// Cue feature CUE_A marks sense a, CUE_B marks b; noise features are shared.
    fn separable() -> Vec<LabeledExample> {
        (0..40)
            .map(|i| {
                let noise = format!("N{}", i % 5);
                if i % 2 == 0 {
                    ex(&["CUE_A", &noise], "a")
                } else {
                    ex(&["CUE_B", &noise], "b")
                }
            })
            .collect()
    }

    fn hinge_objective(model: &LemmaModel, data: &[LabeledExample], lambda: f64) -> f64 {
        let mut loss = 0.0;
        let mut norm = 0.0;
        for (k, sense) in model.senses.iter().enumerate() {
            norm += model.weights[k].iter().map(|w| w * w).sum::<f64>() + model.bias[k].powi(2);
            for e in data {
                let y = if e.labels.contains(sense) { 1.0 } else { -1.0 };
                let m = model.margins(&e.features).unwrap()[k];
                loss += (1.0 - y * m).max(0.0) / data.len() as f64;
            }
        }
        lambda / 2.0 * norm + loss
    }

    #[test]
    fn stable_hash_known_values() {
        assert_eq!(stable_hash(""), 0xcbf29ce484222325);
        assert_eq!(stable_hash("a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn separable_cue_is_learned() {
        let data = separable();
        let inv = inventory("bank", &["a", "b"]);
        let cfg = TrainConfig::default();

        // a separating solution exists: +1/-1 on the cues, zero elsewhere
        let reference = LemmaModel {
            lemma: "bank".into(),
            senses: vec!["a".into(), "b".into()],
            features: [("CUE_A", 0), ("CUE_B", 1)]
                .into_iter()
                .map(|(n, i)| (n.to_string(), i))
                .collect(),
            weights: vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
            bias: vec![0.0, 0.0],
            mfs: "a".into(),
        };
        assert_eq!(
            hinge_objective(&reference, &data, cfg.lambda),
            cfg.lambda / 2.0 * 4.0
        );

        let model = train_lemma_model("bank", &data, &inv, &cfg).unwrap();
        for e in &data {
            assert_eq!(model.predict(&e.features).unwrap().0, e.labels[0]);
        }
        // near-optimal: objective within the reference separator's regularization budget
        let obj = hinge_objective(&model, &data, cfg.lambda);
        assert!(
            obj < hinge_objective(&reference, &data, cfg.lambda) + 0.05,
            "objective {obj}"
        );
        assert_eq!(
            model.predict(&fv(&["CUE_B", "UNSEEN"], &[])).unwrap().0,
            "b"
        );
    }

    #[test]
    fn single_sense_gives_constant_model() {
        let data = vec![ex(&["x"], "b"), ex(&["y"], "b")];
        let inv = inventory("bank", &["a", "b"]);
        let model = train_lemma_model("bank", &data, &inv, &TrainConfig::default()).unwrap();
        assert_eq!(model.mfs, "b");
        for f in [fv(&["x"], &[]), fv(&[], &[]), fv(&["zzz"], &[])] {
            assert_eq!(model.predict(&f).unwrap().0, "b");
        }
    }

    #[test]
    fn training_errors() {
        let inv = inventory("bank", &["a"]);
        let cfg = TrainConfig::default();
        assert_eq!(
            train_lemma_model("bank", &[ex(&["x"], "zz")], &inv, &cfg).unwrap_err(),
            TrainError::UnknownLabel {
                lemma: "bank".into(),
                sense: "zz".into()
            }
        );
        assert_eq!(
            train_lemma_model("bank", &[], &inv, &cfg).unwrap_err(),
            TrainError::EmptyTrainingSet("bank".into())
        );
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train_lemma_model("bank", &[ex(&["x"], "a")], &inv, &bad).is_err());
    }

    #[test]
    fn mfs_ties_follow_inventory_order() {
        let data = vec![ex(&["x"], "b"), ex(&["y"], "a")];
        let inv = inventory("bank", &["a", "b"]);
        let model = train_lemma_model("bank", &data, &inv, &TrainConfig::default()).unwrap();
        assert_eq!(model.mfs, "a");
    }

    #[test]
    fn ties_in_margins_go_to_first_sense() {
        let model = LemmaModel {
            lemma: "l".into(),
            senses: vec!["s1".into(), "s2".into()],
            features: BTreeMap::new(),
            weights: vec![vec![], vec![]],
            bias: vec![0.5, 0.5],
            mfs: "s1".into(),
        };
        assert_eq!(model.predict(&fv(&[], &[])).unwrap().0, "s1");
        assert!(matches!(
            model.predict(&fv(&[], &[1.0])),
            Err(PredictError::DenseLengthMismatch { .. })
        ));
    }

    #[test]
    fn dense_scale_consistency_on_separable_fixture() {
        // cue lives only in the dense block: dim 0 positive for a, negative for b
        let mk = |c: f64| -> Vec<LabeledExample> {
            (0..30)
                .map(|i| {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    let jitter = (i % 7) as f64 * 0.01;
                    LabeledExample {
                        features: fv(&[], &[c * sign * (0.1 + jitter), c * 0.05 * (i % 3) as f64]),
                        labels: vec![if sign > 0.0 { "a" } else { "b" }.to_string()],
                    }
                })
                .collect()
        };
        let inv = inventory("l", &["a", "b"]);
        let cfg = TrainConfig::default();
        let base = mk(1.0);
        let m1 = train_lemma_model("l", &base, &inv, &cfg).unwrap();
        for c in [0.5, 3.0] {
            let scaled = mk(c);
            let mc = train_lemma_model("l", &scaled, &inv, &cfg).unwrap();
            for (a, b) in base.iter().zip(&scaled) {
                assert_eq!(
                    m1.predict(&a.features).unwrap().0,
                    mc.predict(&b.features).unwrap().0
                );
            }
        }
    }

    #[test]
    fn store_round_trip_and_validation() {
        let inv = inventory("bank", &["a", "b"]);
        let model = train_lemma_model("bank", &separable(), &inv, &TrainConfig::default()).unwrap();
        let mut store =
            ModelStore::new(FeatureConfig::default(), TrainConfig::default(), "vecs.txt");
        store.lemmas.insert("bank".into(), model);
        let text = store.to_json();
        let back = ModelStore::read(text.as_bytes()).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.to_json(), text);

        let bad = text.replace("\"version\":1", "\"version\":2");
        assert!(matches!(
            ModelStore::read(bad.as_bytes()),
            Err(ModelFileError::Version(2))
        ));
        let bad = text.replace("\"mfs\":\"a\"", "\"mfs\":\"q\"");
        assert!(matches!(
            ModelStore::read(bad.as_bytes()),
            Err(ModelFileError::Invalid(_))
        ));
    }

    #[test]
    fn mfs_baseline() {
        let inv = inventory("bank", &["b%1", "b%2"]);
        let mk = |id: &str| Instance {
            id: id.into(),
            target_lemma: "bank".into(),
            target_pos: String::new(),
            target_index: 0,
            is_proper_noun_part: false,
            gold: vec![],
            tokens: vec![crate::corpus::Token::word("bank", "")],
        };
        let preds = mfs_predict(&inv, &[mk("1"), mk("2")]).unwrap();
        assert!(preds.iter().all(|(_, s)| s == "b%1"));
        assert!(mfs_predict(&inv, &[]).unwrap().is_empty());
        let mut other = mk("3");
        other.target_lemma = "art".into();
        assert_eq!(
            mfs_predict(&inv, &[other]).unwrap_err(),
            PredictError::MissingLemma("art".into())
        );
    }
}
