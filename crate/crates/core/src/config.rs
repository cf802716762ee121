//! Run configuration: named hyper-parameter profiles, INI config files and
//! key-by-key overrides. Precedence is profile < config file < command line.

use std::path::{Path, PathBuf};

use ini::Ini;

use crate::data::{ModelKind, SyntheticSpec};
use crate::dialect::{DialectConfig, GaussianActivation};
use crate::error::{Error, Result};
use crate::features::{StopwordList, DEFAULT_MIN_DF};
use crate::geo::GeoPoint;
use crate::geoloc::GeoModelConfig;
use crate::math::Transform;
use crate::mdn::{MdnHeadConfig, SelectionRule};
use crate::nn::{AdamConfig, EarlyStopConfig, MonitoredMetric, TrainOptions};

pub const DEFAULT_PROFILE: &str = "geotext-mdn-shared";

/// Profile names accepted by [`RunConfig::profile`].
pub const PROFILES: &[&str] = &[
    "geotext-regression",
    "geotext-mdn",
    "geotext-mdn-shared",
    "twitterus-regression",
    "twitterus-mdn",
    "twitterus-mdn-shared",
    "twitterus-dialect",
    "synthetic-regression",
    "synthetic-mdn",
    "synthetic-mdn-shared",
    "synthetic-dialect",
];

/// Keys of the `[run]` section.
pub const RUN_KEYS: &[&str] = &[
    "model",
    "k",
    "hidden",
    "dropout",
    "regul",
    "l1",
    "l2",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "batch_size",
    "max_epochs",
    "patience",
    "monitored_metric",
    "min_df",
    "seed",
    "selection_rule",
    "transform",
    "activation",
    "stopwords",
];

/// Keys of the `[paths]` section.
pub const PATH_KEYS: &[&str] = &["train", "dev", "test", "vocab", "checkpoint", "log", "output"];

/// Keys of the `[synthetic]` section.
pub const SYNTHETIC_KEYS: &[&str] = &[
    "preset",
    "modes",
    "mode_stddev",
    "users_per_mode",
    "tokens_per_user",
    "exclusive_per_mode",
    "ambiguous",
    "noise_words",
    "noise_rate",
    "ambiguous_rate",
    "ambiguous_user_fraction",
    "seed",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

/// `english`, `none`, or a file with one word per line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopwordSource {
    English,
    Empty,
    File(PathBuf),
}

impl StopwordSource {
    pub fn load(&self) -> Result<StopwordList> {
        match self {
            StopwordSource::English => Ok(StopwordList::english()),
            StopwordSource::Empty => Ok(StopwordList::empty()),
            StopwordSource::File(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read stopword list {}: {e}", p.display())))?;
                Ok(StopwordList::from_text(&text))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub l1: f64,
    pub l2: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub monitored_metric: MonitoredMetric,
    pub min_df: usize,
    pub seed: u64,
    pub selection_rule: SelectionRule,
    pub transform: Transform,
    pub activation: GaussianActivation,
    pub stopwords: StopwordSource,
    pub paths: Paths,
}

fn base(model: ModelKind, hidden: Vec<usize>, k: usize, dropout: f64, regul: f64) -> RunConfig {
    RunConfig {
        model,
        k,
        hidden,
        dropout,
        l1: regul / 2.0,
        l2: regul / 2.0,
        adam: AdamConfig::default(),
        batch_size: 32,
        max_epochs: 100,
        patience: 5,
        monitored_metric: MonitoredMetric::DevLoss,
        min_df: DEFAULT_MIN_DF,
        seed: 1,
        selection_rule: SelectionRule::StrongestPi,
        transform: Transform::SoftplusSoftsign,
        activation: GaussianActivation::Density,
        stopwords: StopwordSource::English,
        paths: Paths::default(),
    }
}

/// Small-corpus settings: low document-frequency cut-off and longer patience.
fn synthetic(model: ModelKind, hidden: Vec<usize>, k: usize) -> RunConfig {
    RunConfig { min_df: 2, patience: 10, max_epochs: 500, ..base(model, hidden, k, 0.0, 0.0) }
}

impl RunConfig {
    /// Named settings. `regul` values are split equally between l1 and l2.
    pub fn profile(name: &str) -> Result<Self> {
        use ModelKind::*;
        Ok(match name {
            "geotext-regression" => base(Regression, vec![100, 50], 0, 0.0, 0.0),
            "geotext-mdn" => base(Mdn, vec![100], 100, 0.5, 0.0),
            "geotext-mdn-shared" => base(MdnShared, vec![100], 300, 0.0, 0.0),
            "twitterus-regression" => base(Regression, vec![100, 50], 0, 0.0, 1e-5),
            "twitterus-mdn" => base(Mdn, vec![300], 100, 0.0, 1e-5),
            "twitterus-mdn-shared" => base(MdnShared, vec![900], 900, 0.0, 0.0),
            "twitterus-dialect" => base(Dialect, vec![100], 100, 0.0, 0.0),
            "synthetic-regression" => synthetic(Regression, vec![50, 25], 0),
            "synthetic-mdn" => synthetic(Mdn, vec![50], 2),
            "synthetic-mdn-shared" => synthetic(MdnShared, vec![50], 2),
            "synthetic-dialect" => synthetic(Dialect, vec![50], 4),
            other => {
                return Err(Error::Config(format!("unknown profile '{other}' (known: {})", PROFILES.join(", "))));
            }
        })
    }

    /// Sets one `[run]` or `[paths]` key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model" => self.model = v.parse()?,
            "k" => self.k = parse(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "regul" => {
                let r: f64 = parse(key, v)?;
                self.l1 = r / 2.0;
                self.l2 = r / 2.0;
            }
            "l1" => self.l1 = parse(key, v)?,
            "l2" => self.l2 = parse(key, v)?,
            "learning_rate" => self.adam.learning_rate = parse(key, v)?,
            "beta1" => self.adam.beta1 = parse(key, v)?,
            "beta2" => self.adam.beta2 = parse(key, v)?,
            "epsilon" => self.adam.epsilon = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "monitored_metric" => self.monitored_metric = v.parse()?,
            "min_df" => self.min_df = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "selection_rule" => self.selection_rule = v.parse()?,
            "transform" => self.transform = v.parse()?,
            "activation" => self.activation = v.parse()?,
            "stopwords" => {
                self.stopwords = match v {
                    "english" => StopwordSource::English,
                    "none" => StopwordSource::Empty,
                    path => StopwordSource::File(PathBuf::from(path)),
                }
            }
            "train" => self.paths.train = Some(v.into()),
            "dev" => self.paths.dev = Some(v.into()),
            "test" => self.paths.test = Some(v.into()),
            "vocab" => self.paths.vocab = Some(v.into()),
            "checkpoint" => self.paths.checkpoint = Some(v.into()),
            "log" => self.paths.log = Some(v.into()),
            "output" => self.paths.output = Some(v.into()),
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Builds a configuration from a profile, an optional INI file and
    /// ordered command-line overrides. A profile named on the command line
    /// beats one named in the file.
    pub fn resolve(profile: Option<&str>, file: Option<&Ini>, overrides: &[(String, String)]) -> Result<Self> {
        let file_profile = file.and_then(|f| f.get_from(Some("run"), "profile"));
        let mut cfg = Self::profile(profile.or(file_profile).unwrap_or(DEFAULT_PROFILE))?;
        if let Some(ini) = file {
            for (section, props) in ini.iter() {
                match section {
                    Some("run") | Some("paths") => {
                        for (k, v) in props.iter() {
                            if k != "profile" {
                                cfg.set(k, v).map_err(|e| Error::Config(format!("[{}] {e}", section.unwrap_or(""))))?;
                            }
                        }
                    }
                    Some("synthetic") => {}
                    None if props.is_empty() => {}
                    None => return Err(Error::Config("configuration keys must sit under a section header".into())),
                    Some(other) => return Err(Error::Config(format!("unknown configuration section [{other}]"))),
                }
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.l1 >= 0.0 && self.l2 >= 0.0) {
            return bad("l1 and l2 must be non-negative".into());
        }
        if self.batch_size == 0 || self.patience == 0 {
            return bad("batch_size and patience must be at least 1".into());
        }
        if self.min_df == 0 {
            return bad("min_df must be at least 1".into());
        }
        self.adam.validate()?;
        match self.model {
            ModelKind::Regression => {
                if self.k != 0 {
                    log::warn!("K={} is ignored by the regression model", self.k);
                }
            }
            ModelKind::Mdn | ModelKind::MdnShared => {
                if self.k == 0 {
                    return bad(format!("{} needs K >= 1", self.model.as_str()));
                }
            }
            ModelKind::Dialect => {
                if self.k == 0 {
                    return bad("dialect needs K >= 1".into());
                }
                if self.hidden.len() != 1 {
                    return bad("the dialect model takes exactly one hidden size".into());
                }
                if self.monitored_metric == MonitoredMetric::DevMedianKm {
                    return bad("dev_median_km is undefined for the dialect model".into());
                }
            }
        }
        Ok(())
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            adam: self.adam,
            early_stop: EarlyStopConfig { patience: self.patience, monitored_metric: self.monitored_metric },
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            seed: self.seed,
        }
    }

    pub fn geo_model_config(&self) -> Result<GeoModelConfig> {
        let kind = self.model.geo().ok_or_else(|| Error::Config("not a geolocation model".into()))?;
        let mut head = MdnHeadConfig::new(self.k.max(1));
        head.selection_rule = self.selection_rule;
        head.transform = self.transform;
        Ok(GeoModelConfig {
            kind,
            hidden: self.hidden.clone(),
            head,
            dropout: self.dropout,
            l1: self.l1,
            l2: self.l2,
            seed: self.seed,
        })
    }

    /// `vocab_size` is left at 0; training fills it in from the vocabulary.
    pub fn dialect_config(&self) -> Result<DialectConfig> {
        if self.model != ModelKind::Dialect {
            return Err(Error::Config("not a dialect model".into()));
        }
        Ok(DialectConfig {
            k: self.k,
            hidden: self.hidden[0],
            vocab_size: 0,
            dropout: self.dropout,
            l1: self.l1,
            l2: self.l2,
            seed: self.seed,
            activation: self.activation,
            transform: self.transform,
        })
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| parse(key, x.trim())).collect()
}

fn parse_point(key: &str, v: &str) -> Result<GeoPoint> {
    let (lat, lon) = v.split_once(',').ok_or_else(|| Error::Config(format!("'{key}' expects lat,lon pairs")))?;
    GeoPoint::new(parse(key, lat.trim())?, parse(key, lon.trim())?)
}

pub fn synthetic_preset(name: &str, seed: u64) -> Result<SyntheticSpec> {
    match name {
        "bimodal" => Ok(SyntheticSpec::bimodal(seed)),
        "dialect" => Ok(SyntheticSpec::dialect(seed)),
        other => Err(Error::Config(format!("unknown synthetic preset '{other}' (known: bimodal, dialect)"))),
    }
}

/// Sets one `[synthetic]` key. Lists use `,` between numbers and `;`
/// between points or ambiguous-word mode sets.
pub fn set_synthetic(spec: &mut SyntheticSpec, key: &str, value: &str) -> Result<()> {
    let v = value.trim();
    match key {
        "preset" => *spec = synthetic_preset(v, spec.seed)?,
        "modes" => spec.modes = v.split(';').map(|p| parse_point(key, p)).collect::<Result<_>>()?,
        "mode_stddev" => spec.mode_stddev = parse(key, v)?,
        "users_per_mode" => spec.users_per_mode = parse_list(key, v)?,
        "tokens_per_user" => spec.tokens_per_user = parse(key, v)?,
        "exclusive_per_mode" => spec.exclusive_per_mode = parse(key, v)?,
        "ambiguous" => {
            spec.ambiguous = if v.is_empty() {
                Vec::new()
            } else {
                v.split(';').map(|m| parse_list(key, m)).collect::<Result<_>>()?
            }
        }
        "noise_words" => spec.noise_words = parse(key, v)?,
        "noise_rate" => spec.noise_rate = parse(key, v)?,
        "ambiguous_rate" => spec.ambiguous_rate = parse(key, v)?,
        "ambiguous_user_fraction" => spec.ambiguous_user_fraction = parse(key, v)?,
        "seed" => spec.seed = parse(key, v)?,
        other => return Err(Error::Config(format!("unknown synthetic key '{other}'"))),
    }
    Ok(())
}

/// Starts from the preset (bimodal unless named), applies the file's
/// `[synthetic]` section, then the overrides. `preset` and `seed` are
/// applied before everything else.
pub fn resolve_synthetic(file: Option<&Ini>, overrides: &[(String, String)]) -> Result<SyntheticSpec> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(sec) = file.and_then(|f| f.section(Some("synthetic"))) {
        pairs.extend(sec.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    }
    pairs.extend(overrides.iter().cloned());
    let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.clone());
    let seed: u64 = match last("seed") {
        Some(s) => parse("seed", s.trim())?,
        None => 1,
    };
    let mut spec = synthetic_preset(last("preset").as_deref().unwrap_or("bimodal").trim(), seed)?;
    for (k, v) in &pairs {
        if k != "preset" && k != "seed" {
            set_synthetic(&mut spec, k, v)?;
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn load_ini(path: &Path) -> Result<Ini> {
    Ini::load_from_file(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_profiles() {
        let p = RunConfig::profile("geotext-mdn-shared").unwrap();
        assert_eq!((p.model, p.hidden.clone(), p.k, p.dropout, p.l1 + p.l2), (ModelKind::MdnShared, vec![100], 300, 0.0, 0.0));
        let p = RunConfig::profile("twitterus-mdn").unwrap();
        assert_eq!((p.model, p.hidden.clone(), p.k, p.dropout), (ModelKind::Mdn, vec![300], 100, 0.0));
        assert_eq!((p.l1, p.l2), (5e-6, 5e-6));
        let p = RunConfig::profile("geotext-mdn").unwrap();
        assert_eq!((p.hidden.clone(), p.k, p.dropout), (vec![100], 100, 0.5));
        let p = RunConfig::profile("twitterus-regression").unwrap();
        assert_eq!((p.hidden.clone(), p.l1 + p.l2), (vec![100, 50], 1e-5));
        let p = RunConfig::profile("twitterus-mdn-shared").unwrap();
        assert_eq!((p.hidden.clone(), p.k, p.l1), (vec![900], 900, 0.0));
        assert_eq!(RunConfig::profile("geotext-regression").unwrap().hidden, vec![100, 50]);
        for name in PROFILES {
            RunConfig::profile(name).unwrap().validate().unwrap();
        }
        assert!(RunConfig::profile("nope").is_err());
    }

    #[test]
    fn flags_beat_file_beats_profile() {
        let ini = Ini::load_from_str("[run]\nprofile = twitterus-mdn\nk = 7\nhidden = 20,10\n[paths]\ntrain = a.tsv\n").unwrap();
        let cfg = RunConfig::resolve(None, Some(&ini), &[]).unwrap();
        assert_eq!((cfg.model, cfg.k, cfg.hidden.clone()), (ModelKind::Mdn, 7, vec![20, 10]));
        assert_eq!(cfg.paths.train, Some(PathBuf::from("a.tsv")));
        let cfg = RunConfig::resolve(None, Some(&ini), &[("k".into(), "9".into())]).unwrap();
        assert_eq!(cfg.k, 9);
        let cfg = RunConfig::resolve(Some("geotext-regression"), Some(&ini), &[]).unwrap();
        assert_eq!((cfg.model, cfg.k), (ModelKind::Regression, 7));
    }

    #[test]
    fn regul_splits_evenly() {
        let mut c = RunConfig::profile("geotext-mdn").unwrap();
        c.set("regul", "0.002").unwrap();
        assert_eq!((c.l1, c.l2), (0.001, 0.001));
    }

    #[test]
    fn bad_keys_and_values() {
        let mut c = RunConfig::profile("geotext-mdn").unwrap();
        assert!(c.set("colour", "red").is_err());
        assert!(c.set("k", "many").is_err());
        let ini = Ini::load_from_str("[training]\nk = 3\n").unwrap();
        assert!(RunConfig::resolve(None, Some(&ini), &[]).is_err());
        assert!(RunConfig::resolve(Some("geotext-mdn"), None, &[("dropout".into(), "1.5".into())]).is_err());
        assert!(RunConfig::resolve(Some("synthetic-dialect"), None, &[("hidden".into(), "5,5".into())]).is_err());
    }

    #[test]
    fn synthetic_section() {
        let ini = Ini::load_from_str(
            "[synthetic]\npreset = dialect\nusers_per_mode = 10,20,30,40\nmodes = 1,2;3,4;5,6;7,8\nambiguous = 0,1;2,3\nseed = 5\n",
        )
        .unwrap();
        let s = resolve_synthetic(Some(&ini), &[("noise_rate".into(), "0.1".into())]).unwrap();
        assert_eq!(s.users_per_mode, vec![10, 20, 30, 40]);
        assert_eq!(s.modes[3], GeoPoint { lat: 7.0, lon: 8.0 });
        assert_eq!(s.ambiguous, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!((s.seed, s.noise_rate, s.exclusive_per_mode), (5, 0.1, 5));
        assert_eq!(resolve_synthetic(None, &[]).unwrap(), SyntheticSpec::bimodal(1));
        assert!(resolve_synthetic(None, &[("users_per_mode".into(), "1,2,3".into())]).is_err());
    }
}
