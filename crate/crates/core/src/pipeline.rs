//! Corpus-to-model plumbing shared by the command-line tool and tests.

use crate::data::UserRecord;
use crate::dialect::{DialectConfig, DialectExample, DialectModel, EvalUser};
use crate::error::{Error, Result};
use crate::features::{build_vocab, token_counts, tokenize, vectorize, FeatureVector, StopwordList, Vocabulary, WeightingScheme};
use crate::geo::{evaluate_users, EvalReport, GeoPoint};
use crate::geoloc::{GeoExample, GeoModel, GeoModelConfig};
use crate::mdn::SelectionRule;
use crate::nn::{train_loop, TrainLog, TrainOptions};

pub fn tokenize_records(records: &[UserRecord]) -> Vec<Vec<String>> {
    records.iter().map(|r| tokenize(&r.text)).collect()
}

pub fn vocab_from_records(records: &[UserRecord], min_df: usize, stopwords: &StopwordList) -> Result<Vocabulary> {
    build_vocab(tokenize_records(records), min_df, stopwords)
}

pub fn geo_examples(records: &[UserRecord], vocab: &Vocabulary) -> Vec<GeoExample> {
    records
        .iter()
        .map(|r| GeoExample { features: vectorize(&tokenize(&r.text), vocab, WeightingScheme::L2Count), label: r.location })
        .collect()
}

pub fn geo_features(texts: &[&str], vocab: &Vocabulary) -> Vec<FeatureVector> {
    texts.iter().map(|t| vectorize(&tokenize(t), vocab, WeightingScheme::L2Count)).collect()
}

/// Users whose target would be all zero are dropped.
pub fn dialect_examples(records: &[UserRecord], vocab: &Vocabulary) -> Vec<DialectExample> {
    records
        .iter()
        .map(|r| DialectExample { location: r.location, target: vectorize(&tokenize(&r.text), vocab, WeightingScheme::L1BinaryIdf) })
        .filter(|e| !e.target.is_empty())
        .collect()
}

pub fn eval_users(records: &[UserRecord], vocab: &Vocabulary) -> Vec<EvalUser> {
    records
        .iter()
        .map(|r| EvalUser { location: r.location, counts: token_counts(&tokenize(&r.text), vocab) })
        .filter(|u| !u.counts.is_empty())
        .collect()
}

pub struct GeoRun {
    pub model: GeoModel,
    pub vocab: Vocabulary,
    pub log: TrainLog,
}

/// Builds the vocabulary on `train`, initialises, and trains with early stopping on `dev`.
pub fn train_geo(
    cfg: &GeoModelConfig,
    opts: &TrainOptions,
    train: &[UserRecord],
    dev: &[UserRecord],
    min_df: usize,
    stopwords: &StopwordList,
) -> Result<GeoRun> {
    let vocab = vocab_from_records(train, min_df, stopwords)?;
    let train_ex = geo_examples(train, &vocab);
    let dev_ex = geo_examples(dev, &vocab);
    let labels: Vec<GeoPoint> = train.iter().map(|r| r.location).collect();
    let model = GeoModel::new(cfg, vocab.len(), &labels)?;
    let (model, log) = train_loop(model, &train_ex, &dev_ex, opts)?;
    Ok(GeoRun { model, vocab, log })
}

pub fn evaluate_geo(model: &GeoModel, vocab: &Vocabulary, records: &[UserRecord], rule: SelectionRule) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Domain("nothing to evaluate".into()));
    }
    let ex = geo_examples(records, vocab);
    let feats: Vec<&FeatureVector> = ex.iter().map(|e| &e.features).collect();
    let preds = model.predict_points(&feats, rule)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let truths: Vec<GeoPoint> = records.iter().map(|r| r.location).collect();
    evaluate_users(&ids, &preds, &truths)
}

pub struct DialectRun {
    pub model: DialectModel,
    pub vocab: Vocabulary,
    pub log: TrainLog,
}

/// `cfg.vocab_size` is replaced by the size of the vocabulary built from `train`.
pub fn train_dialect(
    cfg: &DialectConfig,
    opts: &TrainOptions,
    train: &[UserRecord],
    dev: &[UserRecord],
    min_df: usize,
    stopwords: &StopwordList,
) -> Result<DialectRun> {
    let vocab = vocab_from_records(train, min_df, stopwords)?;
    let train_ex = dialect_examples(train, &vocab);
    let dev_ex = dialect_examples(dev, &vocab);
    if train_ex.is_empty() || dev_ex.is_empty() {
        return Err(Error::Pipeline("no user has an in-vocabulary token".into()));
    }
    let locations: Vec<GeoPoint> = train.iter().map(|r| r.location).collect();
    let cfg = DialectConfig { vocab_size: vocab.len(), ..cfg.clone() };
    let model = DialectModel::new(&cfg, &locations)?;
    let (model, log) = train_loop(model, &train_ex, &dev_ex, opts)?;
    Ok(DialectRun { model, vocab, log })
}
