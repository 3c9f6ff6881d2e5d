//! Pretrained word-embedding tables: text loading, per-dimension statistics
//! and standard-deviation scaling.
//!
//! Keys are case-folded on insertion and on lookup. All vectors of a table
//! share one dimensionality and contain only finite values.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::json::format_f64;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("DimensionMismatch: line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("DuplicateWord: {0:?}")]
    DuplicateWord(String),
    #[error("NonNumericValue: line {line}: {value:?}")]
    NonNumericValue { line: usize, value: String },
    #[error("EmptyInput: no embedding records")]
    EmptyInput,
    #[error("MalformedHeader: {0}")]
    MalformedHeader(String),
    #[error("HeaderCountMismatch: header declares {declared} words, found {found}")]
    HeaderCountMismatch { declared: usize, found: usize },
    #[error("ZeroDimension: line {0} has no vector components")]
    ZeroDimension(usize),
    #[error("TooFewEntries: need at least 2 entries, table has {0}")]
    TooFewEntries(usize),
    #[error("ZeroVarianceDimension: dimension {0} has zero standard deviation")]
    ZeroVarianceDimension(usize),
    #[error("NonPositiveSigma: {0}")]
    NonPositiveSigma(f64),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Text layout of an embedding file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextFormat {
    /// One record per line: `word v1 ... vd`.
    Plain,
    /// A first line `V d`, then `V` plain records.
    Header,
}

impl FromStr for TextFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(TextFormat::Plain),
            "header" => Ok(TextFormat::Header),
            other => Err(format!(
                "unknown embedding format {other:?} (expected plain or header)"
            )),
        }
    }
}

/// A vocabulary-indexed matrix of `dim`-dimensional vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    // row-major, words.len() * dim
    values: Vec<f64>,
    provenance: String,
    scaled_sigma: Option<f64>,
}

fn is_field_sep(c: char) -> bool {
    c == ' ' || c == '\t'
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(is_field_sep).filter(|f| !f.is_empty())
}

fn parse_value(field: &str, line: usize) -> Result<f64, EmbeddingError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(EmbeddingError::NonNumericValue {
            line,
            value: field.to_string(),
        }),
    }
}

impl EmbeddingTable {
    /// Creates an empty table of the given dimensionality.
    pub fn new(dim: usize, provenance: impl Into<String>) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            provenance: provenance.into(),
            scaled_sigma: None,
        }
    }

    /// Builds a table from `(word, vector)` pairs, applying the same checks as loading.
    pub fn from_pairs<I, S>(dim: usize, provenance: &str, pairs: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        let mut table = EmbeddingTable::new(dim, provenance);
        for (i, (word, vector)) in pairs.into_iter().enumerate() {
            if vector.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: i + 1,
                    expected: dim,
                    found: vector.len(),
                });
            }
            if let Some(bad) = vector.iter().find(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonNumericValue {
                    line: i + 1,
                    value: bad.to_string(),
                });
            }
            table.insert(word.as_ref(), &vector)?;
        }
        Ok(table)
    }

    fn insert(&mut self, word: &str, vector: &[f64]) -> Result<(), EmbeddingError> {
        debug_assert_eq!(vector.len(), self.dim);
        let key = word.to_lowercase();
        if key.is_empty() {
            return Err(EmbeddingError::MalformedHeader("empty word".into()));
        }
        if self.index.contains_key(&key) {
            return Err(EmbeddingError::DuplicateWord(key));
        }
        self.index.insert(key.clone(), self.words.len());
        self.words.push(key);
        self.values.extend_from_slice(vector);
        Ok(())
    }

    /// Reads a table from UTF-8 text.
    ///
    /// Blank lines are ignored. Fields are separated by runs of ASCII spaces
    /// or tabs, and both LF and CRLF line endings are accepted.
    pub fn load<R: BufRead>(
        reader: R,
        format: TextFormat,
        provenance: &str,
    ) -> Result<Self, EmbeddingError> {
        let mut table: Option<EmbeddingTable> = None;
        let mut declared: Option<usize> = None;

        for (n, line) in reader.lines().enumerate() {
            let lineno = n + 1;
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            let mut parts = fields(line);
            let Some(word) = parts.next() else {
                continue;
            };

            if format == TextFormat::Header && declared.is_none() {
                let rest: Vec<&str> = parts.collect();
                if rest.len() != 1 {
                    return Err(EmbeddingError::MalformedHeader(format!(
                        "line {lineno}: expected \"V d\""
                    )));
                }
                let count = word.parse::<usize>().map_err(|_| {
                    EmbeddingError::MalformedHeader(format!(
                        "line {lineno}: bad word count {word:?}"
                    ))
                })?;
                let dim = rest[0].parse::<usize>().map_err(|_| {
                    EmbeddingError::MalformedHeader(format!(
                        "line {lineno}: bad dimension {:?}",
                        rest[0]
                    ))
                })?;
                if dim == 0 {
                    return Err(EmbeddingError::ZeroDimension(lineno));
                }
                declared = Some(count);
                table = Some(EmbeddingTable::new(dim, provenance));
                continue;
            }

            let vector = parts
                .map(|f| parse_value(f, lineno))
                .collect::<Result<Vec<f64>, _>>()?;
            if table.is_none() && vector.is_empty() {
                return Err(EmbeddingError::ZeroDimension(lineno));
            }
            let table = table.get_or_insert_with(|| EmbeddingTable::new(vector.len(), provenance));
            if vector.len() != table.dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: lineno,
                    expected: table.dim,
                    found: vector.len(),
                });
            }
            table.insert(word, &vector)?;
        }

        let table = table.ok_or(EmbeddingError::EmptyInput)?;
        if let Some(declared) = declared {
            if declared != table.len() {
                return Err(EmbeddingError::HeaderCountMismatch {
                    declared,
                    found: table.len(),
                });
            }
        }
        if table.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        Ok(table)
    }

    /// Writes the table in `plain` format with 17 significant digits per value.
    pub fn write_plain<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for (word, vector) in self.iter() {
            writer.write_all(word.as_bytes())?;
            for v in vector {
                writer.write_all(b" ")?;
                writer.write_all(format_f64(*v).as_bytes())?;
            }
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// The target standard deviation, once [`scale`](Self::scale) has been applied.
    pub fn scaled_sigma(&self) -> Option<f64> {
        self.scaled_sigma
    }

    /// Words and vectors in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.words
            .iter()
            .map(String::as_str)
            .zip(self.values.chunks_exact(self.dim.max(1)))
    }

    /// Case-folded exact-match lookup. Out-of-vocabulary words yield `None`.
    pub fn lookup(&self, word: &str) -> Option<&[f64]> {
        let idx = if word.chars().any(char::is_uppercase) {
            *self.index.get(&word.to_lowercase())?
        } else {
            *self.index.get(word)?
        };
        Some(&self.values[idx * self.dim..(idx + 1) * self.dim])
    }

    /// Sample standard deviation (divisor `n - 1`) of every dimension.
    pub fn column_stdevs(&self) -> Result<Vec<f64>, EmbeddingError> {
        let n = self.len();
        if n < 2 {
            return Err(EmbeddingError::TooFewEntries(n));
        }
        let mut mean = vec![0.0; self.dim];
        for (_, v) in self.iter() {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let mut ss = vec![0.0; self.dim];
        for (_, v) in self.iter() {
            for ((s, x), m) in ss.iter_mut().zip(v).zip(&mean) {
                let d = x - m;
                *s += d * d;
            }
        }
        Ok(ss
            .into_iter()
            .map(|s| (s / (n - 1) as f64).sqrt())
            .collect())
    }

    /// Returns a copy with each dimension multiplied by `sigma / stdev(dimension)`.
    pub fn scale(&self, sigma: f64) -> Result<EmbeddingTable, EmbeddingError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(EmbeddingError::NonPositiveSigma(sigma));
        }
        let stdevs = self.column_stdevs()?;
        if let Some(i) = stdevs.iter().position(|&s| s == 0.0) {
            return Err(EmbeddingError::ZeroVarianceDimension(i));
        }
        let factors: Vec<f64> = stdevs.iter().map(|s| sigma / s).collect();
        let mut scaled = self.clone();
        for row in scaled.values.chunks_exact_mut(self.dim) {
            for (x, f) in row.iter_mut().zip(&factors) {
                *x *= f;
            }
        }
        scaled.scaled_sigma = Some(sigma);
        Ok(scaled)
    }

    /// A new table restricted to `words` (case-folded), keeping insertion order.
    ///
    /// The scaling marker is carried over unchanged: subsetting a scaled table
    /// does not rescale it.
    pub fn subset<'a, I>(&self, words: I) -> EmbeddingTable
    where
        I: IntoIterator<Item = &'a str>,
    {
        let keep: std::collections::HashSet<String> =
            words.into_iter().map(str::to_lowercase).collect();
        let mut out = EmbeddingTable::new(self.dim, self.provenance.clone());
        for (word, vector) in self.iter() {
            if keep.contains(word) {
                // keys are already unique and non-empty
                let _ = out.insert(word, vector);
            }
        }
        out.scaled_sigma = self.scaled_sigma;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_plain(text: &str) -> Result<EmbeddingTable, EmbeddingError> {
        EmbeddingTable::load(text.as_bytes(), TextFormat::Plain, "test")
    }

    /// Independent sample standard deviation over a plain slice.
    fn sample_stdev(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn plain_identity_basis() {
        let t = load_plain("a 1.0 0.0\nb 0.0 1.0").unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup("b"), Some(&[0.0, 1.0][..]));
    }

    #[test]
    fn header_format() {
        let t = EmbeddingTable::load("2 3\nx 1 2 3\ny 4 5 6".as_bytes(), TextFormat::Header, "h")
            .unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup("y"), Some(&[4.0, 5.0, 6.0][..]));
    }

    #[test]
    fn header_count_checked() {
        let err =
            EmbeddingTable::load("3 1\nx 1\ny 2".as_bytes(), TextFormat::Header, "h").unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::HeaderCountMismatch {
                declared: 3,
                found: 2
            }
        ));
    }

    #[test]
    fn arity_mismatch_reports_line() {
        let err = load_plain("a 1.0\nb 2.0 3.0").unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::DimensionMismatch { line: 2, .. }
        ));
    }

    #[test]
    fn load_errors() {
        assert!(matches!(load_plain(""), Err(EmbeddingError::EmptyInput)));
        assert!(matches!(
            load_plain("\n\n"),
            Err(EmbeddingError::EmptyInput)
        ));
        assert!(matches!(
            load_plain("a 1\nA 2"),
            Err(EmbeddingError::DuplicateWord(w)) if w == "a"
        ));
        assert!(matches!(
            load_plain("a 1\nb x"),
            Err(EmbeddingError::NonNumericValue { line: 2, .. })
        ));
        assert!(matches!(
            load_plain("a nan"),
            Err(EmbeddingError::NonNumericValue { line: 1, .. })
        ));
    }

    #[test]
    fn crlf_tabs_and_runs_of_spaces() {
        let t = load_plain("a\t1   2\r\nb 3\t\t4\r\n").unwrap();
        assert_eq!(t.lookup("a"), Some(&[1.0, 2.0][..]));
        assert_eq!(t.lookup("b"), Some(&[3.0, 4.0][..]));
    }

    #[test]
    fn lookup_case_folds() {
        let t = load_plain("a 1\nb 2").unwrap();
        assert_eq!(t.lookup("A"), Some(&[1.0][..]));
        assert_eq!(t.lookup("zzz"), None);
    }

    #[test]
    fn stdevs_of_small_tables() {
        let t = load_plain("a 1 5\nb 2 5\nc 3 5").unwrap();
        let s = t.column_stdevs().unwrap();
        assert_eq!(s[0], sample_stdev(&[1.0, 2.0, 3.0]));
        assert_eq!(s[0], 1.0);
        assert_eq!(s[1], 0.0);

        let t = load_plain("a 0 0\nb 0 2").unwrap();
        let s = t.column_stdevs().unwrap();
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 2f64.sqrt()).abs() < 1e-15);

        let single = load_plain("a 1 2").unwrap();
        assert!(matches!(
            single.column_stdevs(),
            Err(EmbeddingError::TooFewEntries(1))
        ));
    }

    #[test]
    fn scale_unit_stdev_column() {
        let t = load_plain("a 1 0\nb 2 1\nc 3 0").unwrap();
        let s = t.scale(0.1).unwrap();
        let col: Vec<f64> = s.iter().map(|(_, v)| v[0]).collect();
        for (got, want) in col.iter().zip([0.1, 0.2, 0.3]) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        assert_eq!(s.scaled_sigma(), Some(0.1));
        // original untouched
        assert_eq!(t.lookup("c"), Some(&[3.0, 0.0][..]));
        assert_eq!(t.scaled_sigma(), None);
    }

    #[test]
    fn scale_errors() {
        let t = load_plain("a 1 7\nb 2 7").unwrap();
        assert!(matches!(
            t.scale(0.1),
            Err(EmbeddingError::ZeroVarianceDimension(1))
        ));
        let t = load_plain("a 1\nb 2").unwrap();
        assert!(matches!(
            t.scale(0.0),
            Err(EmbeddingError::NonPositiveSigma(_))
        ));
        assert!(matches!(
            t.scale(-1.0),
            Err(EmbeddingError::NonPositiveSigma(_))
        ));
    }

    #[test]
    fn rescaling_is_idempotent() {
        let t = load_plain("a 1.5 -2\nb 2.25 0.5\nc -3 8\nd 0.1 0.2").unwrap();
        let once = t.scale(0.1).unwrap();
        let twice = once.scale(0.1).unwrap();
        for ((_, a), (_, b)) in once.iter().zip(twice.iter()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn scaling_does_not_commute_with_subsetting() {
        let t = load_plain("a 1\nb 2\nc 3\nd 10").unwrap();
        let scale_then_subset = t.scale(0.1).unwrap().subset(["a", "b"]);
        let subset_then_scale = t.subset(["a", "b"]).scale(0.1).unwrap();
        assert_ne!(
            scale_then_subset.lookup("a").unwrap()[0],
            subset_then_scale.lookup("a").unwrap()[0]
        );
    }

    #[test]
    fn plain_round_trip_is_exact() {
        let t = load_plain("w 0.1 -1e-300\nv 3.141592653589793 2.5e10").unwrap();
        let mut buf = Vec::new();
        t.write_plain(&mut buf).unwrap();
        let back = EmbeddingTable::load(&buf[..], TextFormat::Plain, "test").unwrap();
        assert_eq!(back, t);
    }
}
