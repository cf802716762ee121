use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialect::{DialectModel, GaussianActivation};
use crate::error::{Error, Result};
use crate::geoloc::{GeoModel, GeoModelKind};
use crate::math::Transform;
use crate::mdn::{MdnHeadConfig, SharedMixtureState, MDN_SLICE_LAYOUT};
use crate::nn::{Dense, Network, NetworkSpec, Parameters};

pub const CHECKPOINT_FORMAT: &str = "geomix-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Regression,
    Mdn,
    MdnShared,
    Dialect,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Regression => "regression",
            ModelKind::Mdn => "mdn",
            ModelKind::MdnShared => "mdn_shared",
            ModelKind::Dialect => "dialect",
        }
    }

    /// Output-layer layout tag stored with each checkpoint.
    pub fn slice_layout(self) -> &'static str {
        match self {
            ModelKind::Regression => "lat,lon",
            ModelKind::Mdn => MDN_SLICE_LAYOUT,
            ModelKind::MdnShared => "pi",
            ModelKind::Dialect => "vocab",
        }
    }

    pub fn geo(self) -> Option<GeoModelKind> {
        match self {
            ModelKind::Regression => Some(GeoModelKind::Regression),
            ModelKind::Mdn => Some(GeoModelKind::Mdn),
            ModelKind::MdnShared => Some(GeoModelKind::MdnShared),
            ModelKind::Dialect => None,
        }
    }
}

impl From<GeoModelKind> for ModelKind {
    fn from(k: GeoModelKind) -> Self {
        match k {
            GeoModelKind::Regression => ModelKind::Regression,
            GeoModelKind::Mdn => ModelKind::Mdn,
            GeoModelKind::MdnShared => ModelKind::MdnShared,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(ModelKind::Regression),
            "mdn" => Ok(ModelKind::Mdn),
            "mdn_shared" | "mdn-shared" => Ok(ModelKind::MdnShared),
            "dialect" => Ok(ModelKind::Dialect),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SavedModel {
    Geo(GeoModel),
    Dialect(DialectModel),
}

impl SavedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Geo(m) => m.kind.into(),
            SavedModel::Dialect(_) => ModelKind::Dialect,
        }
    }

    /// Number of Gaussian components (0 for regression).
    pub fn k(&self) -> usize {
        match self {
            SavedModel::Geo(m) if m.kind == GeoModelKind::Regression => 0,
            SavedModel::Geo(m) => m.head.k,
            SavedModel::Dialect(m) => m.k(),
        }
    }

    fn all_finite(&self) -> bool {
        let blocks = match self {
            SavedModel::Geo(m) => m.param_blocks(),
            SavedModel::Dialect(m) => m.param_blocks(),
        };
        blocks.iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }
}

/// On-disk form. Arrays are row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: ModelKind,
    slice_layout: String,
    network: NetworkSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head: Option<MdnHeadConfig>,
    transform: Transform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gaussian_activation: Option<GaussianActivation>,
    layers: Vec<Dense>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    components: Option<SharedMixtureState>,
    vocab_hash: String,
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: SavedModel,
    pub vocab_hash: String,
}

pub fn checkpoint_to_string(model: &SavedModel, vocab_hash: &str) -> Result<String> {
    if !model.all_finite() {
        return Err(Error::Contract("refusing to save a model with non-finite parameters".into()));
    }
    let ck = match model {
        SavedModel::Geo(m) => Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: m.kind.into(),
            slice_layout: ModelKind::from(m.kind).slice_layout().into(),
            network: m.net.spec.clone(),
            head: Some(m.head),
            transform: m.head.transform,
            gaussian_activation: None,
            layers: m.net.layers.clone(),
            components: m.shared.clone(),
            vocab_hash: vocab_hash.into(),
        },
        SavedModel::Dialect(m) => Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: ModelKind::Dialect,
            slice_layout: ModelKind::Dialect.slice_layout().into(),
            network: m.net.spec.clone(),
            head: None,
            transform: m.transform,
            gaussian_activation: Some(m.activation),
            layers: m.net.layers.clone(),
            components: Some(m.layer.clone()),
            vocab_hash: vocab_hash.into(),
        },
    };
    let mut s = serde_json::to_string_pretty(&ck)?;
    s.push('\n');
    Ok(s)
}

/// Writes via a temporary sibling file so a crash never leaves half a checkpoint.
pub fn save_model(path: &Path, model: &SavedModel, vocab_hash: &str) -> Result<()> {
    let s = checkpoint_to_string(model, vocab_hash)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, s)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn checkpoint_from_str(s: &str) -> Result<LoadedModel> {
    let ck: Checkpoint = serde_json::from_str(s).map_err(|e| Error::Load(format!("unreadable checkpoint: {e}")))?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(Error::Load(format!("not a checkpoint file (format '{}')", ck.format)));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Load(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    if ck.slice_layout != ck.model.slice_layout() {
        return Err(Error::Load(format!(
            "slice layout '{}' does not match the {} layout '{}'",
            ck.slice_layout,
            ck.model.as_str(),
            ck.model.slice_layout()
        )));
    }
    let net = Network::from_layers(ck.network, ck.layers).map_err(|e| Error::Load(e.to_string()))?;
    let model = match ck.model.geo() {
        Some(kind) => {
            let head = ck.head.ok_or_else(|| Error::Load("geolocation checkpoint lacks a head config".into()))?;
            SavedModel::Geo(GeoModel::from_parts(kind, head, net, ck.components)?)
        }
        None => {
            let layer = ck.components.ok_or_else(|| Error::Load("dialect checkpoint lacks its Gaussian layer".into()))?;
            let act = ck.gaussian_activation.unwrap_or_default();
            SavedModel::Dialect(DialectModel::from_parts(layer, act, ck.transform, net)?)
        }
    };
    if !model.all_finite() {
        return Err(Error::Load("checkpoint contains non-finite parameters".into()));
    }
    Ok(LoadedModel { model, vocab_hash: ck.vocab_hash })
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let s = fs::read_to_string(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    checkpoint_from_str(&s)
}

/// Loads and refuses a checkpoint whose component count differs from `expected_k`.
pub fn load_model_expecting(path: &Path, expected_k: usize) -> Result<LoadedModel> {
    let m = load_model(path)?;
    if m.model.k() != expected_k {
        return Err(Error::Load(format!(
            "checkpoint has K={} components but K={expected_k} was expected",
            m.model.k()
        )));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialect::DialectConfig;
    use crate::features::FeatureVector;
    use crate::geo::GeoPoint;
    use crate::geoloc::GeoModelConfig;
    use crate::mdn::SelectionRule;

    fn labels() -> Vec<GeoPoint> {
        (0..12).map(|i| GeoPoint { lat: (i % 4) as f64 * 3.1, lon: -(i as f64) * 0.7 }).collect()
    }

    fn geo(kind: GeoModelKind, k: usize) -> GeoModel {
        let cfg = GeoModelConfig { kind, hidden: vec![4], head: MdnHeadConfig::new(k), dropout: 0.0, l1: 0.0, l2: 0.0, seed: 5 };
        GeoModel::new(&cfg, 6, &labels()).unwrap()
    }

    fn feats() -> Vec<FeatureVector> {
        vec![
            FeatureVector { entries: vec![(0, 0.6), (3, 0.8)] },
            FeatureVector { entries: vec![(5, 1.0)] },
            FeatureVector::default(),
        ]
    }

    #[test]
    fn geo_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for (kind, k) in [(GeoModelKind::Regression, 1), (GeoModelKind::Mdn, 3), (GeoModelKind::MdnShared, 3)] {
            let mut m = geo(kind, k);
            m.net.layers[0].weights.data[0] = 0.1 + 0.2;
            let p = dir.path().join(format!("{}.json", kind.as_str()));
            save_model(&p, &SavedModel::Geo(m.clone()), "abc").unwrap();
            let back = load_model(&p).unwrap();
            assert_eq!(back.vocab_hash, "abc");
            let SavedModel::Geo(b) = back.model else { panic!("wrong kind") };
            let bits = |m: &GeoModel| -> Vec<u64> {
                m.param_blocks().iter().flat_map(|(_, v)| v.iter().map(|x| x.to_bits())).collect()
            };
            assert_eq!(bits(&m), bits(&b));
            let f = feats();
            let refs: Vec<&FeatureVector> = f.iter().collect();
            for rule in [SelectionRule::StrongestPi, SelectionRule::MaxMixtureProb] {
                assert_eq!(m.predict_points(&refs, rule).unwrap(), b.predict_points(&refs, rule).unwrap());
            }
        }
    }

    #[test]
    fn dialect_round_trip() {
        let cfg = DialectConfig {
            k: 2,
            hidden: 3,
            vocab_size: 5,
            dropout: 0.0,
            l1: 0.0,
            l2: 0.0,
            seed: 1,
            activation: GaussianActivation::LogDensity,
            transform: Transform::default(),
        };
        let m = DialectModel::new(&cfg, &labels()).unwrap();
        let s = checkpoint_to_string(&SavedModel::Dialect(m.clone()), "h").unwrap();
        let SavedModel::Dialect(b) = checkpoint_from_str(&s).unwrap().model else { panic!("wrong kind") };
        assert_eq!(b.activation, GaussianActivation::LogDensity);
        let x = GeoPoint { lat: 1.0, lon: -2.0 };
        assert_eq!(m.forward(x).unwrap(), b.forward(x).unwrap());
    }

    #[test]
    fn truncated_file_is_refused() {
        let s = checkpoint_to_string(&SavedModel::Geo(geo(GeoModelKind::Mdn, 2)), "h").unwrap();
        let err = checkpoint_from_str(&s[..s.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Load(_)));
    }

    #[test]
    fn mismatched_k_names_both_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_model(&p, &SavedModel::Geo(geo(GeoModelKind::MdnShared, 3)), "h").unwrap();
        let msg = load_model_expecting(&p, 5).unwrap_err().to_string();
        assert!(msg.contains("K=3") && msg.contains("K=5"), "{msg}");
        assert!(load_model_expecting(&p, 3).is_ok());
    }

    #[test]
    fn layout_and_version_are_checked() {
        let s = checkpoint_to_string(&SavedModel::Geo(geo(GeoModelKind::Mdn, 2)), "h").unwrap();
        let relabeled = s.replace(MDN_SLICE_LAYOUT, "pi,mu1,mu2,sigma1,sigma2,rho");
        assert!(checkpoint_from_str(&relabeled).unwrap_err().to_string().contains("slice layout"));
        let v2 = s.replace("\"version\": 1", "\"version\": 2");
        assert!(checkpoint_from_str(&v2).unwrap_err().to_string().contains("version"));
    }
}
