//! The `geomix` command-line tool.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_ini, resolve_synthetic, RunConfig};
use crate::data::{generate_synthetic, load_model, read_corpus, save_model, write_corpus, LoadedModel, SavedModel, SyntheticCorpus, UserRecord};
use crate::dialect::{
    dialect_rank, parse_regions, perplexity, recall_at_k, sample_points, score_regions, DialectModel, WordDistribution,
    DEFAULT_REGION_RADIUS_KM, DEFAULT_SAMPLE_POINTS,
};
use crate::error::{Error, Result};
use crate::features::{tokenize, vectorize, Vocabulary, WeightingScheme};
use crate::geo::{write_error_tsv, GeoPoint};
use crate::geoloc::{GeoModel, GeoModelKind};
use crate::mdn::{predictive_density_grid, BBox, DensityGrid, SelectionRule};
use crate::pipeline::{eval_users, evaluate_geo, geo_examples, train_dialect, train_geo};

#[derive(Debug, Parser)]
#[command(name = "geomix", version, about = "Mixture density networks for text geolocation and lexical dialectology")]
pub struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a vocabulary, train a model with early stopping and write a checkpoint.
    Train(TrainArgs),
    /// Score a geolocation checkpoint on a labelled corpus.
    Evaluate(EvaluateArgs),
    /// Predict locations and mixture components for new text.
    Predict(PredictArgs),
    /// Rank region-specific words with a dialect checkpoint.
    Dialect(DialectArgs),
    /// Export a log-probability grid for a word or a text.
    Heatmap(HeatmapArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// INI file with [run], [paths] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub profile: Option<String>,
    /// regression, mdn, mdn_shared or dialect.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    /// Comma-separated hidden layer sizes.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    /// Elastic-net strength, split equally between l1 and l2.
    #[arg(long)]
    pub regul: Option<String>,
    #[arg(long)]
    pub l1: Option<String>,
    #[arg(long)]
    pub l2: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub beta1: Option<String>,
    #[arg(long)]
    pub beta2: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub max_epochs: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    /// dev_loss (alias dev_nll) or dev_median_km.
    #[arg(long)]
    pub monitored_metric: Option<String>,
    #[arg(long)]
    pub min_df: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// strongest_pi or max_mixture_prob.
    #[arg(long)]
    pub selection_rule: Option<String>,
    /// softplus_softsign or exp_tanh.
    #[arg(long)]
    pub transform: Option<String>,
    /// Gaussian-layer activation of the dialect model: density or log_density.
    #[arg(long)]
    pub activation: Option<String>,
    /// english, none, or a file with one word per line.
    #[arg(long)]
    pub stopwords: Option<String>,
    #[arg(long)]
    pub train: Option<String>,
    #[arg(long)]
    pub dev: Option<String>,
    #[arg(long)]
    pub test: Option<String>,
    /// Where to write the vocabulary (default: next to the checkpoint).
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Training log (default: next to the checkpoint).
    #[arg(long)]
    pub log: Option<String>,
    #[arg(long)]
    pub output: Option<String>,
}

impl TrainArgs {
    /// Flag values as `(key, value)` pairs in configuration-key order.
    pub fn overrides(&self) -> Vec<(String, String)> {
        let fields: [(&str, &Option<String>); 28] = [
            ("model", &self.model),
            ("k", &self.k),
            ("hidden", &self.hidden),
            ("dropout", &self.dropout),
            ("regul", &self.regul),
            ("l1", &self.l1),
            ("l2", &self.l2),
            ("learning_rate", &self.learning_rate),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("epsilon", &self.epsilon),
            ("batch_size", &self.batch_size),
            ("max_epochs", &self.max_epochs),
            ("patience", &self.patience),
            ("monitored_metric", &self.monitored_metric),
            ("min_df", &self.min_df),
            ("seed", &self.seed),
            ("selection_rule", &self.selection_rule),
            ("transform", &self.transform),
            ("activation", &self.activation),
            ("stopwords", &self.stopwords),
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
            ("vocab", &self.vocab),
            ("checkpoint", &self.checkpoint),
            ("log", &self.log),
            ("output", &self.output),
        ];
        fields.iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect()
    }
}

#[derive(Debug, Args)]
pub struct ModelFiles {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Vocabulary TSV written by `train` (default: next to the checkpoint).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub files: ModelFiles,
    /// Labelled corpus TSV.
    #[arg(long)]
    pub test: PathBuf,
    /// Per-user error TSV (default: next to the checkpoint).
    #[arg(long)]
    pub errors: Option<PathBuf>,
    /// Overrides the selection rule stored in the checkpoint.
    #[arg(long)]
    pub rule: Option<SelectionRule>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub files: ModelFiles,
    /// Text of a single user.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub text: Option<String>,
    /// Corpus TSV; the coordinates in it are ignored.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub rule: Option<SelectionRule>,
    /// Mixture components listed per user, strongest first.
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct DialectArgs {
    #[command(flatten)]
    pub files: ModelFiles,
    /// Region file: name<TAB>lat,lon;lat,lon<TAB>term,term
    #[arg(long)]
    pub regions: PathBuf,
    /// Training corpus the query points are sampled from.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_POINTS)]
    pub points: usize,
    /// Recall cut-off.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Ranked terms written per region.
    #[arg(long, default_value_t = 50)]
    pub top: usize,
    #[arg(long, default_value_t = DEFAULT_REGION_RADIUS_KM)]
    pub radius_km: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Rankings TSV (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub files: ModelFiles,
    /// Word to map (dialect models).
    #[arg(long, conflicts_with = "text", required_unless_present = "text")]
    pub word: Option<String>,
    /// User text whose predictive density is mapped (geolocation models).
    #[arg(long)]
    pub text: Option<String>,
    /// min_lat,max_lat,min_lon,max_lon
    #[arg(long, default_value = "24,50,-125,-66", allow_hyphen_values = true)]
    pub bbox: BBox,
    #[arg(long, default_value_t = 50)]
    pub resolution: usize,
    /// CSV output (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// INI file with a [synthetic] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// bimodal or dialect.
    #[arg(long)]
    pub preset: Option<String>,
    /// lat,lon;lat,lon;...
    #[arg(long, allow_hyphen_values = true)]
    pub modes: Option<String>,
    #[arg(long)]
    pub mode_stddev: Option<String>,
    /// Comma-separated, one per mode.
    #[arg(long)]
    pub users_per_mode: Option<String>,
    #[arg(long)]
    pub tokens_per_user: Option<String>,
    #[arg(long)]
    pub exclusive_per_mode: Option<String>,
    /// One mode list per ambiguous word: 0,1;0,1
    #[arg(long)]
    pub ambiguous: Option<String>,
    #[arg(long)]
    pub noise_words: Option<String>,
    #[arg(long)]
    pub noise_rate: Option<String>,
    #[arg(long)]
    pub ambiguous_rate: Option<String>,
    #[arg(long)]
    pub ambiguous_user_fraction: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
}

impl SynthArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let fields: [(&str, &Option<String>); 12] = [
            ("preset", &self.preset),
            ("modes", &self.modes),
            ("mode_stddev", &self.mode_stddev),
            ("users_per_mode", &self.users_per_mode),
            ("tokens_per_user", &self.tokens_per_user),
            ("exclusive_per_mode", &self.exclusive_per_mode),
            ("ambiguous", &self.ambiguous),
            ("noise_words", &self.noise_words),
            ("noise_rate", &self.noise_rate),
            ("ambiguous_rate", &self.ambiguous_rate),
            ("ambiguous_user_fraction", &self.ambiguous_user_fraction),
            ("seed", &self.seed),
        ];
        fields.iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect()
    }
}

/// `model.json` → `model.vocab.tsv`
pub fn sibling(checkpoint: &Path, suffix: &str) -> PathBuf {
    checkpoint.with_extension(suffix)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Dialect(a) => cmd_dialect(&a, out),
        Command::Heatmap(a) => cmd_heatmap(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    }
}

fn read_records(path: &Path) -> Result<Vec<UserRecord>> {
    let c = read_corpus(path)?;
    if !c.malformed.is_empty() {
        log::warn!("{}: skipped {} malformed rows", path.display(), c.malformed.len());
    }
    Ok(c.records)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let ini = a.config.as_deref().map(load_ini).transpose()?;
    let cfg = RunConfig::resolve(a.profile.as_deref(), ini.as_ref(), &a.overrides())?;
    let need = |p: &Option<PathBuf>, name: &str| p.clone().ok_or_else(|| Error::Config(format!("missing path '{name}'")));
    let train_path = need(&cfg.paths.train, "train")?;
    let dev_path = need(&cfg.paths.dev, "dev")?;
    let ckpt = need(&cfg.paths.checkpoint, "checkpoint")?;
    let vocab_path = cfg.paths.vocab.clone().unwrap_or_else(|| sibling(&ckpt, "vocab.tsv"));
    let log_path = cfg.paths.log.clone().unwrap_or_else(|| sibling(&ckpt, "log"));
    let train = read_records(&train_path)?;
    let dev = read_records(&dev_path)?;
    let stopwords = cfg.stopwords.load()?;
    let opts = cfg.train_options();
    let (saved, vocab, log) = if cfg.model.geo().is_some() {
        let run = train_geo(&cfg.geo_model_config()?, &opts, &train, &dev, cfg.min_df, &stopwords)?;
        (SavedModel::Geo(run.model), run.vocab, run.log)
    } else {
        let run = train_dialect(&cfg.dialect_config()?, &opts, &train, &dev, cfg.min_df, &stopwords)?;
        (SavedModel::Dialect(run.model), run.vocab, run.log)
    };
    let mut vbytes = Vec::new();
    vocab.write_tsv(&mut vbytes)?;
    write_file(&vocab_path, &String::from_utf8(vbytes).expect("vocabulary is UTF-8"))?;
    save_model(&ckpt, &saved, &vocab.content_hash())?;
    write_file(&log_path, &log.to_lines())?;
    writeln!(out, "model: {}", cfg.model.as_str())?;
    writeln!(out, "vocabulary: {} terms -> {}", vocab.len(), vocab_path.display())?;
    writeln!(
        out,
        "epochs: {} (best {}, dev metric {:.6} -> {:.6})",
        log.records.len(),
        log.best_epoch,
        log.initial_dev_metric,
        log.best_dev_metric
    )?;
    writeln!(out, "checkpoint: {}", ckpt.display())?;
    writeln!(out, "log: {}", log_path.display())?;
    Ok(())
}

/// Loads a checkpoint and its vocabulary, refusing mismatched pairs.
pub fn load_pair(files: &ModelFiles) -> Result<(LoadedModel, Vocabulary)> {
    let loaded = load_model(&files.checkpoint)?;
    let vpath = files.vocab.clone().unwrap_or_else(|| sibling(&files.checkpoint, "vocab.tsv"));
    let f = fs::File::open(&vpath).map_err(|e| Error::Config(format!("cannot open vocabulary {}: {e}", vpath.display())))?;
    let vocab = Vocabulary::read_tsv(BufReader::new(f))?;
    let hash = vocab.content_hash();
    if hash != loaded.vocab_hash {
        return Err(Error::Load(format!(
            "vocabulary {} (hash {}) does not match the checkpoint (hash {})",
            vpath.display(),
            &hash[..12.min(hash.len())],
            &loaded.vocab_hash[..12.min(loaded.vocab_hash.len())]
        )));
    }
    Ok((loaded, vocab))
}

fn geo_model(m: &SavedModel) -> Result<&GeoModel> {
    match m {
        SavedModel::Geo(g) => Ok(g),
        SavedModel::Dialect(_) => Err(Error::Config("this command needs a geolocation checkpoint".into())),
    }
}

fn dialect_model(m: &SavedModel) -> Result<&DialectModel> {
    match m {
        SavedModel::Dialect(d) => Ok(d),
        SavedModel::Geo(_) => Err(Error::Config("this command needs a dialect checkpoint".into())),
    }
}

pub fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let (loaded, vocab) = load_pair(&a.files)?;
    let records = read_records(&a.test)?;
    if let SavedModel::Dialect(d) = &loaded.model {
        let users = eval_users(&records, &vocab);
        writeln!(out, "Perplexity: {:.4} ({} users, vocabulary {})", perplexity(d, &users)?, users.len(), vocab.len())?;
        return Ok(());
    }
    let model = geo_model(&loaded.model)?;
    let rule = a.rule.unwrap_or(model.head.selection_rule);
    let report = evaluate_geo(model, &vocab, &records, rule)?;
    let errors_path = a.errors.clone().unwrap_or_else(|| sibling(&a.files.checkpoint, "errors.tsv"));
    let ex = geo_examples(&records, &vocab);
    let feats: Vec<_> = ex.iter().map(|e| &e.features).collect();
    let preds = model.predict_points(&feats, rule)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let truths: Vec<GeoPoint> = records.iter().map(|r| r.location).collect();
    let mut buf = Vec::new();
    write_error_tsv(&mut buf, &ids, &truths, &preds)?;
    fs::write(&errors_path, buf)?;
    writeln!(out, "{}", report.summary_lines())?;
    writeln!(out, "Errors: {}", errors_path.display())?;
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let (loaded, vocab) = load_pair(&a.files)?;
    let model = geo_model(&loaded.model)?;
    let rule = a.rule.unwrap_or(model.head.selection_rule);
    let users: Vec<(String, String)> = match (&a.text, &a.input) {
        (Some(t), _) => vec![("input".to_string(), t.clone())],
        (None, Some(p)) => read_records(p)?.into_iter().map(|r| (r.id, r.text)).collect(),
        (None, None) => return Err(Error::Config("give --text or --input".into())),
    };
    let shown = if model.kind == GeoModelKind::Regression { 0 } else { a.top_k.min(model.head.k) };
    writeln!(out, "# rule={}", rule.as_str())?;
    let mut header = String::from("user_id\tlat\tlon");
    for i in 1..=shown {
        header.push_str(&format!("\tpi_{i}\tmu_lat_{i}\tmu_lon_{i}\tsigma_lat_{i}\tsigma_lon_{i}\trho_{i}"));
    }
    writeln!(out, "{header}")?;
    for (id, text) in &users {
        let fv = vectorize(&tokenize(text), &vocab, WeightingScheme::L2Count);
        if fv.is_empty() {
            writeln!(out, "{id}\tno-features")?;
            continue;
        }
        let p = model.predict_points(&[&fv], rule)?[0];
        let mut line = format!("{id}\t{}\t{}", p.lat, p.lon);
        if shown > 0 {
            let m = model.mixtures(&[&fv])?.remove(0);
            let mut order: Vec<usize> = (0..m.k()).collect();
            order.sort_by(|&i, &j| m.weights[j].total_cmp(&m.weights[i]).then(i.cmp(&j)));
            for &c in order.iter().take(shown) {
                let g = &m.components[c];
                line.push_str(&format!("\t{}\t{}\t{}\t{}\t{}\t{}", m.weights[c], g.mu1, g.mu2, g.sigma1, g.sigma2, g.rho));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn cmd_dialect(a: &DialectArgs, out: &mut dyn Write) -> Result<()> {
    let (loaded, vocab) = load_pair(&a.files)?;
    let model = dialect_model(&loaded.model)?;
    let regions = parse_regions(&fs::read_to_string(&a.regions)?)?;
    let locations: Vec<GeoPoint> = read_records(&a.train)?.iter().map(|r| r.location).collect();
    let points = sample_points(&locations, a.points, a.seed)?;
    let scored = score_regions(model, &regions, &points, a.radius_km)?;
    let mut rankings = String::from("region\trank\tterm\tscore\n");
    let mut table = format!("region\tin_region\trecall@{}\thits\tgold_in_vocab\tgold_oov\n", a.k);
    for (region, result) in regions.iter().zip(scored) {
        let s = match result {
            Ok(s) => s,
            Err(e) => {
                log::warn!("skipping region '{}': {e}", region.name);
                table.push_str(&format!("{}\t0\tNA\t0\t0\t{}\n", region.name, region.terms.len()));
                continue;
            }
        };
        let ranked = dialect_rank(&s.scores, vocab.terms());
        for (i, (term, score)) in ranked.iter().take(a.top).enumerate() {
            rankings.push_str(&format!("{}\t{}\t{}\t{:.6}\n", region.name, i + 1, term, score));
        }
        let words: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
        let rep = recall_at_k(&words, &region.terms, |w| vocab.index_of(w).is_some(), a.k)?;
        let recall = rep.recall.map_or("NA".to_string(), |r| format!("{r:.4}"));
        table.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            region.name,
            s.in_region,
            recall,
            rep.hits,
            rep.gold_in_vocab,
            rep.gold_oov.len()
        ));
    }
    match &a.output {
        Some(p) => {
            write_file(p, &rankings)?;
            write!(out, "{table}")?;
            writeln!(out, "rankings: {}", p.display())?;
        }
        None => write!(out, "{rankings}\n{table}")?,
    }
    Ok(())
}

/// In-vocabulary terms closest to `word` by edit distance, ties lexicographic.
pub fn nearest_terms(word: &str, vocab: &Vocabulary, n: usize) -> Vec<String> {
    let mut d: Vec<(usize, &String)> = vocab.terms().iter().map(|t| (strsim::levenshtein(word, t), t)).collect();
    d.sort();
    d.into_iter().take(n).map(|(_, t)| t.clone()).collect()
}

pub fn cmd_heatmap(a: &HeatmapArgs, out: &mut dyn Write) -> Result<()> {
    let (loaded, vocab) = load_pair(&a.files)?;
    let grid = match &loaded.model {
        SavedModel::Dialect(m) => {
            let word = a.word.as_deref().ok_or_else(|| Error::Config("dialect heatmaps need --word".into()))?;
            let w = word.to_lowercase();
            let idx = vocab.index_of(&w).ok_or_else(|| {
                Error::Config(format!("'{word}' is not in the vocabulary; nearest terms: {}", nearest_terms(&w, &vocab, 5).join(", ")))
            })?;
            let centers = a.bbox.cell_centers(a.resolution)?;
            let lp = m.log_probs(&centers)?;
            let values = (0..centers.len()).map(|i| lp.get(i, idx)).collect();
            DensityGrid { bbox: a.bbox, resolution: a.resolution, centers, values }
        }
        SavedModel::Geo(m) => {
            if m.kind == GeoModelKind::Regression {
                return Err(Error::Config("regression models have no predictive density to map".into()));
            }
            let text = a.text.as_deref().or(a.word.as_deref()).unwrap_or_default();
            let fv = vectorize(&tokenize(text), &vocab, WeightingScheme::L2Count);
            if fv.is_empty() {
                return Err(Error::Config("the text has no in-vocabulary tokens".into()));
            }
            let mix = m.mixtures(&[&fv])?.remove(0);
            predictive_density_grid(&mix, a.bbox, a.resolution)?
        }
    };
    match &a.output {
        Some(p) => {
            write_file(p, &grid.to_csv())?;
            let best = grid.argmax();
            writeln!(out, "grid: {} cells -> {} (max at {}, {})", grid.values.len(), p.display(), best.lat, best.lon)?;
        }
        None => write!(out, "{}", grid.to_csv())?,
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let ini = a.config.as_deref().map(load_ini).transpose()?;
    let spec = resolve_synthetic(ini.as_ref(), &a.overrides())?;
    let corpus = generate_synthetic(&spec)?;
    fs::create_dir_all(&a.out_dir)?;
    let splits = [("train.tsv", &corpus.train), ("dev.tsv", &corpus.dev), ("test.tsv", &corpus.test)];
    for (name, users) in splits {
        write_corpus(&a.out_dir.join(name), &SyntheticCorpus::records(users))?;
    }
    let amb = corpus.ambiguous_test();
    if !amb.is_empty() {
        write_corpus(&a.out_dir.join("test_ambiguous.tsv"), &amb)?;
    }
    let mut regions = String::from("# planted words around each mode centre\n");
    for (m, c) in spec.modes.iter().enumerate() {
        regions.push_str(&format!("mode{m}\t{},{}\t{}\n", c.lat, c.lon, spec.planted_words(m).join(",")));
    }
    write_file(&a.out_dir.join("regions.tsv"), &regions)?;
    writeln!(
        out,
        "wrote {} train, {} dev, {} test ({} ambiguous-only) users to {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        amb.len(),
        a.out_dir.display()
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_vocab, StopwordList};

    #[test]
    fn nearest_terms_by_edit_distance() {
        let docs = vec![vec!["hella".to_string(), "yall".to_string(), "hello".to_string()]];
        let v = build_vocab(docs, 1, &StopwordList::empty()).unwrap();
        assert_eq!(nearest_terms("hellq", &v, 2), vec!["hella", "hello"]);
        assert_eq!(nearest_terms("yal", &v, 1), vec!["yall"]);
    }

    #[test]
    fn flags_map_to_config_keys() {
        let cli = Cli::try_parse_from(["geomix", "train", "--profile", "synthetic-mdn", "--k", "5", "--regul", "0.1", "--l1", "0"]).unwrap();
        let Command::Train(a) = cli.command else { panic!("expected train") };
        let cfg = RunConfig::resolve(a.profile.as_deref(), None, &a.overrides()).unwrap();
        assert_eq!((cfg.k, cfg.l1, cfg.l2), (5, 0.0, 0.05));
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("out/model.json"), "vocab.tsv"), PathBuf::from("out/model.vocab.tsv"));
    }
}
