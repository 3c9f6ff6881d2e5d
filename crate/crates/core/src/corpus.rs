//! Disambiguation instances, their line-delimited JSON encoding, stopword
//! normalization and sense inventories.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("MalformedRecord: line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("DuplicateId: {0:?}")]
    DuplicateId(String),
    #[error("IndexOutOfRange: instance {0:?} target_index is outside its tokens")]
    IndexOutOfRange(String),
    #[error("MalformedInventory: line {line}: {reason}")]
    MalformedInventory { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    #[serde(default)]
    pub pos: String,
    #[serde(rename = "sent", default)]
    pub sentence_index: u32,
    #[serde(rename = "punct", default)]
    pub is_punct: bool,
}

impl Token {
    /// A bare token whose surface and lemma coincide.
    pub fn word(lemma: &str, pos: &str) -> Self {
        Token {
            surface: lemma.to_string(),
            lemma: lemma.to_lowercase(),
            pos: pos.to_string(),
            sentence_index: 0,
            is_punct: false,
        }
    }

    pub fn punct(surface: &str) -> Self {
        Token {
            surface: surface.to_string(),
            lemma: surface.to_string(),
            pos: String::new(),
            sentence_index: 0,
            is_punct: true,
        }
    }
}

/// One disambiguation case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: String,
    pub target_lemma: String,
    #[serde(default)]
    pub target_pos: String,
    pub target_index: usize,
    #[serde(rename = "proper_noun", default)]
    pub is_proper_noun_part: bool,
    #[serde(default)]
    pub gold: Vec<String>,
    pub tokens: Vec<Token>,
}

impl Instance {
    pub fn target(&self) -> &Token {
        &self.tokens[self.target_index]
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        let target = &self.tokens[self.target_index];
        if target.lemma != self.target_lemma {
            return Err(format!(
                "token at target_index has lemma {:?}, expected {:?}",
                target.lemma, self.target_lemma
            ));
        }
        let mut seen = HashSet::new();
        for g in &self.gold {
            if !seen.insert(g.as_str()) {
                return Err(format!("duplicate gold sense {g:?}"));
            }
        }
        let mut last_sent = 0;
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.lemma.is_empty() && !tok.is_punct {
                return Err(format!("token {i} has an empty lemma"));
            }
            if tok.sentence_index < last_sent {
                return Err(format!("token {i} sentence index decreases"));
            }
            last_sent = tok.sentence_index;
        }
        Ok(())
    }

    fn fold_case(&mut self) {
        self.target_lemma = self.target_lemma.to_lowercase();
        for tok in &mut self.tokens {
            tok.lemma = tok.lemma.to_lowercase();
        }
    }
}

/// Parses line-delimited JSON instances. Blank lines are skipped.
///
/// Lemmas are lowercased on input.
pub fn parse_instances<R: BufRead>(reader: R) -> Result<Vec<Instance>, CorpusError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut inst: Instance =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line: lineno,
                reason: e.to_string(),
            })?;
        if inst.target_index >= inst.tokens.len() {
            return Err(CorpusError::IndexOutOfRange(inst.id));
        }
        inst.fold_case();
        inst.validate()
            .map_err(|reason| CorpusError::MalformedRecord {
                line: lineno,
                reason,
            })?;
        if !ids.insert(inst.id.clone()) {
            return Err(CorpusError::DuplicateId(inst.id));
        }
        out.push(inst);
    }
    Ok(out)
}

/// Writes instances as one compact JSON object per line.
pub fn write_instances<W: Write>(mut writer: W, instances: &[Instance]) -> io::Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut writer, inst)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// A set of lemmas removed before bag-of-words features and composition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stoplist(HashSet<String>);

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

impl Stoplist {
    /// The bundled list of 127 English function words.
    pub fn english() -> Self {
        Self::from_words(ENGLISH_STOPWORDS.lines())
    }

    pub fn empty() -> Self {
        Stoplist(HashSet::new())
    }

    pub fn from_words<'a, I: IntoIterator<Item = &'a str>>(words: I) -> Self {
        Stoplist(
            words
                .into_iter()
                .map(str::trim)
                .filter(|w| !w.is_empty())
                .map(str::to_lowercase)
                .collect(),
        )
    }

    /// One lemma per line.
    pub fn from_reader<R: BufRead>(reader: R) -> io::Result<Self> {
        let lines = reader.lines().collect::<io::Result<Vec<_>>>()?;
        Ok(Self::from_words(lines.iter().map(String::as_str)))
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.0.contains(lemma)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sorted words, for recording in model files.
    pub fn sorted_words(&self) -> Vec<String> {
        let mut v: Vec<String> = self.0.iter().cloned().collect();
        v.sort();
        v
    }
}

/// Drops punctuation and stoplisted tokens, always keeping the target.
///
/// The returned instance has `target_index` re-pointed at the retained target.
pub fn normalize_tokens(instance: &Instance, stoplist: &Stoplist) -> Instance {
    let mut tokens = Vec::with_capacity(instance.tokens.len());
    let mut target_index = 0;
    for (i, tok) in instance.tokens.iter().enumerate() {
        if i == instance.target_index {
            target_index = tokens.len();
            tokens.push(tok.clone());
        } else if !(tok.is_punct || stoplist.contains(&tok.lemma)) {
            tokens.push(tok.clone());
        }
    }
    Instance {
        tokens,
        target_index,
        ..instance.clone()
    }
}

/// Partitions instances by target lemma, preserving input order within each group.
pub fn group_by_lemma(instances: Vec<Instance>) -> BTreeMap<String, Vec<Instance>> {
    let mut groups: BTreeMap<String, Vec<Instance>> = BTreeMap::new();
    for inst in instances {
        groups
            .entry(inst.target_lemma.clone())
            .or_default()
            .push(inst);
    }
    groups
}

/// Permissible senses per lemma, most frequent first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SenseInventory {
    senses: BTreeMap<String, Vec<String>>,
}

impl SenseInventory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Orders each lemma's senses by descending frequency in `instances`,
    /// ties broken by first occurrence.
    pub fn from_training(instances: &[Instance]) -> Self {
        // lemma -> sense -> (count, first seen)
        let mut counts: BTreeMap<&str, HashMap<&str, (usize, usize)>> = BTreeMap::new();
        let mut order = 0usize;
        for inst in instances {
            let per = counts.entry(inst.target_lemma.as_str()).or_default();
            for g in &inst.gold {
                let e = per.entry(g.as_str()).or_insert((0, order));
                e.0 += 1;
                order += 1;
            }
        }
        let senses = counts
            .into_iter()
            .filter(|(_, per)| !per.is_empty())
            .map(|(lemma, per)| {
                let mut v: Vec<(&str, (usize, usize))> = per.into_iter().collect();
                v.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
                (
                    lemma.to_string(),
                    v.into_iter().map(|(s, _)| s.to_string()).collect(),
                )
            })
            .collect();
        SenseInventory { senses }
    }

    /// Reads `lemma<TAB>sense1<TAB>sense2...` lines. Order within a line is kept.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut inv = SenseInventory::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let lemma = cols.next().unwrap_or_default().trim().to_lowercase();
            if lemma.is_empty() {
                return Err(CorpusError::MalformedInventory {
                    line: n + 1,
                    reason: "empty lemma".into(),
                });
            }
            if inv.senses.contains_key(&lemma) {
                return Err(CorpusError::MalformedInventory {
                    line: n + 1,
                    reason: format!("lemma {lemma:?} listed twice"),
                });
            }
            let mut senses: Vec<String> = Vec::new();
            for s in cols.map(str::trim).filter(|s| !s.is_empty()) {
                if senses.iter().any(|x| x == s) {
                    return Err(CorpusError::MalformedInventory {
                        line: n + 1,
                        reason: format!("sense {s:?} listed twice"),
                    });
                }
                senses.push(s.to_string());
            }
            inv.senses.insert(lemma, senses);
        }
        Ok(inv)
    }

    pub fn write_tsv<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for (lemma, senses) in &self.senses {
            write!(writer, "{lemma}")?;
            for s in senses {
                write!(writer, "\t{s}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }

    pub fn insert(&mut self, lemma: &str, senses: Vec<String>) {
        self.senses.insert(lemma.to_string(), senses);
    }

    /// Appends senses found in `other` but missing here, keeping existing order.
    pub fn merge_missing(&mut self, other: &SenseInventory) {
        for (lemma, senses) in &other.senses {
            let list = self.senses.entry(lemma.clone()).or_default();
            for s in senses {
                if !list.contains(s) {
                    list.push(s.clone());
                }
            }
        }
    }

    pub fn senses(&self, lemma: &str) -> Option<&[String]> {
        self.senses.get(lemma).map(Vec::as_slice)
    }

    pub fn first_sense(&self, lemma: &str) -> Option<&str> {
        self.senses(lemma)?.first().map(String::as_str)
    }

    pub fn contains(&self, lemma: &str, sense: &str) -> bool {
        self.senses(lemma)
            .is_some_and(|s| s.iter().any(|x| x == sense))
    }

    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.senses.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.senses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senses.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LINE: &str = r#"{"id":"i1","target_lemma":"bank","target_pos":"NN","target_index":1,"proper_noun":false,"gold":["bank%1"],"tokens":[{"surface":"The","lemma":"the","pos":"DT","sent":0,"punct":false},{"surface":"bank","lemma":"bank","pos":"NN","sent":0,"punct":false},{"surface":".","lemma":".","pos":".","sent":0,"punct":true}]}"#;

    fn fixture() -> Instance {
        parse_instances(LINE.as_bytes()).unwrap().remove(0)
    }

    #[test]
    fn parses_one_record() {
        let v = parse_instances(LINE.as_bytes()).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].tokens.len(), 3);
        assert_eq!(v[0].target().lemma, "bank");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("{LINE}\n{LINE}\n");
        assert!(matches!(
            parse_instances(text.as_bytes()),
            Err(CorpusError::DuplicateId(id)) if id == "i1"
        ));
    }

    #[test]
    fn target_index_out_of_range() {
        let text = LINE.replace("\"target_index\":1", "\"target_index\":5");
        assert!(matches!(
            parse_instances(text.as_bytes()),
            Err(CorpusError::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = LINE.replace("\"proper_noun\"", "\"extra\":1,\"proper_noun\"");
        assert!(matches!(
            parse_instances(text.as_bytes()),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn target_lemma_must_match_token() {
        let text = LINE.replace("\"target_lemma\":\"bank\"", "\"target_lemma\":\"river\"");
        assert!(matches!(
            parse_instances(text.as_bytes()),
            Err(CorpusError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn duplicate_gold_rejected() {
        let text = LINE.replace(r#"["bank%1"]"#, r#"["bank%1","bank%1"]"#);
        assert!(parse_instances(text.as_bytes()).is_err());
    }

    #[test]
    fn normalize_drops_stopwords_and_punct() {
        let norm = normalize_tokens(&fixture(), &Stoplist::english());
        let lemmas: Vec<&str> = norm.tokens.iter().map(|t| t.lemma.as_str()).collect();
        assert_eq!(lemmas, ["bank"]);
        assert_eq!(norm.target_index, 0);
    }

    #[test]
    fn normalize_keeps_stoplisted_target() {
        let inst = Instance {
            id: "x".into(),
            target_lemma: "will".into(),
            target_pos: String::new(),
            target_index: 1,
            is_proper_noun_part: false,
            gold: vec![],
            tokens: vec![
                Token::word("the", ""),
                Token::word("will", ""),
                Token::word("testament", ""),
            ],
        };
        let norm = normalize_tokens(&inst, &Stoplist::english());
        let lemmas: Vec<&str> = norm.tokens.iter().map(|t| t.lemma.as_str()).collect();
        assert_eq!(lemmas, ["will", "testament"]);
        assert_eq!(norm.target().lemma, "will");
    }

    #[test]
    fn normalize_without_stopwords_is_identity() {
        let mut inst = fixture();
        inst.tokens.retain(|t| t.lemma == "bank");
        inst.tokens.push(Token::word("river", "NN"));
        inst.target_index = 0;
        assert_eq!(normalize_tokens(&inst, &Stoplist::english()), inst);
    }

    #[test]
    fn english_stoplist_size() {
        assert_eq!(Stoplist::english().len(), 127);
        assert!(Stoplist::english().contains("the"));
    }

    #[test]
    fn grouping() {
        let mk = |id: &str, lemma: &str| {
            let mut i = fixture();
            i.id = id.into();
            i.target_lemma = lemma.into();
            i
        };
        let g = group_by_lemma(vec![mk("1", "bank"), mk("2", "bank"), mk("3", "art")]);
        assert_eq!(g.len(), 2);
        assert_eq!(g["bank"].len(), 2);
        assert_eq!(g["art"].len(), 1);
        assert_eq!(g["bank"][1].id, "2");
        assert!(group_by_lemma(vec![]).is_empty());
        let five: Vec<_> = (0..5)
            .map(|i| mk(&i.to_string(), &format!("l{i}")))
            .collect();
        assert!(group_by_lemma(five).values().all(|v| v.len() == 1));
    }

    #[test]
    fn inventory_from_training_orders_by_frequency() {
        let mk = |id: &str, gold: &[&str]| {
            let mut i = fixture();
            i.id = id.into();
            i.gold = gold.iter().map(|s| s.to_string()).collect();
            i
        };
        let inv = SenseInventory::from_training(&[
            mk("1", &["b"]),
            mk("2", &["a"]),
            mk("3", &["a"]),
            mk("4", &["c"]),
            mk("5", &[]),
        ]);
        assert_eq!(inv.senses("bank").unwrap(), ["a", "b", "c"]);
        assert_eq!(inv.first_sense("bank"), Some("a"));
    }

    #[test]
    fn inventory_tsv() {
        let inv = SenseInventory::from_tsv("Bank\tb%1\tb%2\nart\ta%1\n".as_bytes()).unwrap();
        assert_eq!(inv.senses("bank").unwrap(), ["b%1", "b%2"]);
        let mut out = Vec::new();
        inv.write_tsv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "art\ta%1\nbank\tb%1\tb%2\n"
        );
        assert!(SenseInventory::from_tsv("a\tx\tx\n".as_bytes()).is_err());
    }

    fn arb_instance() -> impl Strategy<Value = Instance> {
        let tok = ("[a-z]{1,6}", "[A-Z]{0,3}", any::<bool>()).prop_map(|(l, p, punct)| Token {
            surface: l.clone(),
            lemma: l,
            pos: p,
            sentence_index: 0,
            is_punct: punct,
        });
        (
            prop::collection::vec(tok, 1..12),
            any::<prop::sample::Index>(),
            "[a-z0-9]{1,8}",
        )
            .prop_map(|(tokens, idx, id)| {
                let target_index = idx.index(tokens.len());
                Instance {
                    id,
                    target_lemma: tokens[target_index].lemma.clone(),
                    target_pos: String::new(),
                    target_index,
                    is_proper_noun_part: false,
                    gold: vec!["s1".into()],
                    tokens,
                }
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(inst in arb_instance()) {
            let mut buf = Vec::new();
            write_instances(&mut buf, std::slice::from_ref(&inst)).unwrap();
            let back = parse_instances(&buf[..]).unwrap();
            prop_assert_eq!(&back[0], &inst);
        }

        #[test]
        fn normalize_is_idempotent(inst in arb_instance()) {
            let stop = Stoplist::english();
            let once = normalize_tokens(&inst, &stop);
            prop_assert_eq!(normalize_tokens(&once, &stop), once.clone());
            prop_assert_eq!(&once.target().lemma, &inst.target_lemma);
        }

        #[test]
        fn group_sizes_sum_to_input(insts in prop::collection::vec(arb_instance(), 0..20)) {
            let n = insts.len();
            let g = group_by_lemma(insts);
            prop_assert_eq!(g.values().map(Vec::len).sum::<usize>(), n);
        }
    }
}
