//! Text to sparse bag-of-words vectors: tokenisation, vocabulary pruning,
//! and l2-count / l1-binary-idf weighting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_DF: usize = 10;

const ENGLISH_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// Lowercases, splits on whitespace, trims non-alphanumeric edges (keeping
/// `#`), and drops @-mentions.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric() && c != '#' && c != '@');
            if trimmed.starts_with('@') {
                return None;
            }
            let trimmed = trimmed.trim_matches(|c: char| !c.is_alphanumeric() && c != '#');
            trimmed.chars().any(char::is_alphanumeric).then(|| trimmed.to_string())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StopwordList {
    words: HashSet<String>,
    hash: String,
}

impl StopwordList {
    /// The bundled English list.
    pub fn english() -> Self {
        Self::from_text(ENGLISH_STOPWORDS)
    }

    pub fn empty() -> Self {
        Self::from_text("")
    }

    /// One word per line.
    pub fn from_text(text: &str) -> Self {
        let words = text.lines().map(str::trim).filter(|w| !w.is_empty()).map(str::to_lowercase).collect();
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        StopwordList { words, hash }
    }

    pub fn contains(&self, w: &str) -> bool {
        self.words.contains(w)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }
}

/// Term ↔ index map with document frequencies. Indices are dense and ordered
/// by descending df, then lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    index: HashMap<String, usize>,
    pub doc_count: usize,
    pub min_df: usize,
    pub stopword_hash: String,
}

impl Vocabulary {
    fn from_parts(
        terms: Vec<String>,
        df: Vec<usize>,
        doc_count: usize,
        min_df: usize,
        stopword_hash: String,
    ) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { terms, df, index, doc_count, min_df, stopword_hash }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, i: usize) -> usize {
        self.df[i]
    }

    pub fn idf(&self, i: usize) -> f64 {
        (self.doc_count as f64 / self.df[i] as f64).ln()
    }

    /// Header line `doc_count<TAB>min_df<TAB>stopword_hash`, then `index<TAB>term<TAB>df` rows.
    pub fn to_tsv(&self) -> String {
        let mut s = format!("{}\t{}\t{}\n", self.doc_count, self.min_df, self.stopword_hash);
        for (i, (t, d)) in self.terms.iter().zip(&self.df).enumerate() {
            s.push_str(&format!("{i}\t{t}\t{d}\n"));
        }
        s
    }

    /// SHA-256 of the serialised file, used to pair checkpoints with vocabularies.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_tsv().as_bytes())?;
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Pipeline("vocabulary file is empty".into()))??;
        let h: Vec<&str> = header.split('\t').collect();
        if h.len() != 3 {
            return Err(Error::Pipeline(format!("bad vocabulary header '{header}'")));
        }
        let parse_usize = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| Error::Pipeline(format!("bad {what} '{s}' in vocabulary file")))
        };
        let doc_count = parse_usize(h[0], "doc count")?;
        let min_df = parse_usize(h[1], "min_df")?;
        let mut terms = Vec::new();
        let mut df = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::Pipeline(format!("vocabulary line {}: expected 3 fields", n + 2)));
            }
            if parse_usize(f[0], "index")? != terms.len() {
                return Err(Error::Pipeline(format!("vocabulary line {}: indices must be dense", n + 2)));
            }
            terms.push(f[1].to_string());
            df.push(parse_usize(f[2], "df")?);
        }
        Ok(Self::from_parts(terms, df, doc_count, min_df, h[2].to_string()))
    }
}

/// Keeps terms with `df >= min_df` that are not stopwords.
pub fn build_vocab<D, T>(docs: D, min_df: usize, stopwords: &StopwordList) -> Result<Vocabulary>
where
    D: IntoIterator<Item = T>,
    T: AsRef<[String]>,
{
    if min_df == 0 {
        return Err(Error::Config("min_df must be at least 1".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut doc_count = 0;
    for doc in docs {
        doc_count += 1;
        let unique: HashSet<&String> = doc.as_ref().iter().collect();
        for t in unique {
            *df.entry(t.clone()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> =
        df.into_iter().filter(|(t, d)| *d >= min_df && !stopwords.contains(t)).collect();
    if kept.is_empty() {
        return Err(Error::Pipeline(format!(
            "vocabulary is empty after filtering (min_df={min_df}, {doc_count} documents)"
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let (terms, dfs) = kept.into_iter().unzip();
    Ok(Vocabulary::from_parts(terms, dfs, doc_count, min_df, stopwords.hash().to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingScheme {
    /// Raw counts, l2-normalised. Geolocation inputs.
    L2Count,
    /// 1{tf>0}·ln(|U|/df), l1-normalised. Dialectology targets.
    L1BinaryIdf,
}

/// Sparse vector, sorted by index, no duplicates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Writes the vector into a dense row of width `dim`.
    pub fn fill_dense(&self, row: &mut [f64]) {
        for &(i, w) in &self.entries {
            row[i] = w;
        }
    }
}

/// Weights in-vocabulary tokens. Returns an empty vector when nothing survives.
pub fn vectorize(tokens: &[String], vocab: &Vocabulary, scheme: WeightingScheme) -> FeatureVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.index_of(t) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = match scheme {
        WeightingScheme::L2Count => counts.into_iter().collect(),
        WeightingScheme::L1BinaryIdf => {
            counts.into_keys().map(|i| (i, vocab.idf(i))).filter(|(_, w)| *w > 0.0).collect()
        }
    };
    let norm = match scheme {
        WeightingScheme::L2Count => entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt(),
        WeightingScheme::L1BinaryIdf => entries.iter().map(|(_, w)| w).sum::<f64>(),
    };
    if norm > 0.0 {
        for e in entries.iter_mut() {
            e.1 /= norm;
        }
    } else {
        entries.clear();
    }
    FeatureVector { entries }
}

/// In-vocabulary token counts, for perplexity.
pub fn token_counts(tokens: &[String], vocab: &Vocabulary) -> Vec<(usize, f64)> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.index_of(t) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    counts.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Hella cold in NorCal!"), vec!["hella", "cold", "in", "norcal"]);
        assert_eq!(tokenize("@user yall #jawn"), vec!["yall", "#jawn"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("(@someone) ... wow!!"), vec!["wow"]);
    }

    #[test]
    fn bundled_stopwords() {
        let s = StopwordList::english();
        assert!(s.len() > 300);
        assert!(s.contains("the") && s.contains("and"));
        assert_eq!(s.hash().len(), 64);
    }

    #[test]
    fn min_df_boundary() {
        let mut docs = Vec::new();
        for i in 0..10 {
            let mut d = vec!["ten".to_string()];
            if i < 9 {
                d.push("nine".into());
            }
            docs.push(d);
        }
        let v = build_vocab(&docs, 10, &StopwordList::empty()).unwrap();
        assert!(v.index_of("ten").is_some());
        assert!(v.index_of("nine").is_none());
    }

    #[test]
    fn stopwords_are_excluded_regardless_of_df() {
        let docs: Vec<Vec<String>> = (0..1000).map(|_| toks("the pierogi")).collect();
        let v = build_vocab(&docs, 10, &StopwordList::english()).unwrap();
        assert!(v.index_of("the").is_none());
        assert_eq!(v.index_of("pierogi"), Some(0));
    }

    #[test]
    fn index_order_is_df_desc_then_lexicographic() {
        let docs = vec![toks("b a c"), toks("b a"), toks("d")];
        let v = build_vocab(&docs, 1, &StopwordList::empty()).unwrap();
        assert_eq!(v.terms(), &["a", "b", "c", "d"]);
        assert_eq!(v.df(0), 2);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let docs = vec![toks("x")];
        assert!(matches!(build_vocab(&docs, 2, &StopwordList::empty()), Err(Error::Pipeline(_))));
    }

    #[test]
    fn l2_counts() {
        let docs = vec![toks("x y"), toks("x"), toks("y")];
        let v = build_vocab(&docs, 1, &StopwordList::empty()).unwrap();
        let f = vectorize(&toks("x x x y y y y"), &v, WeightingScheme::L2Count);
        let x = v.index_of("x").unwrap();
        let w: HashMap<usize, f64> = f.entries.iter().cloned().collect();
        assert!((w[&x] - 0.6).abs() < 1e-15);
        assert!((w[&v.index_of("y").unwrap()] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn single_term_binary_idf_gets_unit_weight() {
        let docs = vec![toks("x y"), toks("y"), toks("z")];
        let v = build_vocab(&docs, 1, &StopwordList::empty()).unwrap();
        let f = vectorize(&toks("x x x"), &v, WeightingScheme::L1BinaryIdf);
        assert_eq!(f.entries, vec![(v.index_of("x").unwrap(), 1.0)]);
    }

    #[test]
    fn ubiquitous_term_has_zero_idf() {
        let docs = vec![toks("x y"), toks("x"), toks("x")];
        let v = build_vocab(&docs, 1, &StopwordList::empty()).unwrap();
        let f = vectorize(&toks("x y"), &v, WeightingScheme::L1BinaryIdf);
        assert_eq!(f.entries, vec![(v.index_of("y").unwrap(), 1.0)]);
        assert!(vectorize(&toks("x"), &v, WeightingScheme::L1BinaryIdf).is_empty());
    }

    #[test]
    fn all_oov_gives_empty_vector() {
        let docs = vec![toks("x")];
        let v = build_vocab(&docs, 1, &StopwordList::empty()).unwrap();
        assert!(vectorize(&toks("q r"), &v, WeightingScheme::L2Count).is_empty());
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let docs = vec![toks("b a c"), toks("b a"), toks("d")];
        let v = build_vocab(&docs, 1, &StopwordList::english()).unwrap();
        let back = Vocabulary::read_tsv(v.to_tsv().as_bytes()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.content_hash(), v.content_hash());
    }

    fn corpus_and_doc() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<String>)> {
        let word = prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g"]).prop_map(String::from);
        (
            prop::collection::vec(prop::collection::vec(word.clone(), 1..6), 2..12),
            prop::collection::vec(word, 0..10),
        )
    }

    proptest! {
        #[test]
        fn norms_and_order_independence((corpus, doc) in corpus_and_doc(), rot in 0usize..10) {
            let v = build_vocab(&corpus, 1, &StopwordList::empty()).unwrap();
            let reloaded = Vocabulary::read_tsv(v.to_tsv().as_bytes()).unwrap();
            let mut shuffled = doc.clone();
            if !shuffled.is_empty() {
                let k = rot % shuffled.len();
                shuffled.rotate_left(k);
            }
            for scheme in [WeightingScheme::L2Count, WeightingScheme::L1BinaryIdf] {
                let f = vectorize(&doc, &v, scheme);
                prop_assert_eq!(&f, &vectorize(&shuffled, &v, scheme));
                prop_assert_eq!(&f, &vectorize(&doc, &reloaded, scheme));
                prop_assert!(f.entries.windows(2).all(|w| w[0].0 < w[1].0));
                if !f.is_empty() {
                    match scheme {
                        WeightingScheme::L2Count => prop_assert!((f.l2_norm() - 1.0).abs() < 1e-9),
                        WeightingScheme::L1BinaryIdf => prop_assert!((f.l1_norm() - 1.0).abs() < 1e-9),
                    }
                }
            }
        }
    }
}
