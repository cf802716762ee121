//! Text-to-location models: a feedforward network over bag-of-words input
//! with a regression, MDN, or MDN-SHARED output head.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::geo::{evaluate, GeoPoint};
use crate::math::MixtureDensity;
use crate::mdn::{init_shared, mdn_nll, mdn_unpack, predict, regression_loss, shared_nll, MdnHeadConfig, SelectionRule, SharedMixtureState};
use crate::nn::{Matrix, MonitoredMetric, Network, NetworkSpec, Parameters, Trainable};

const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoModelKind {
    Regression,
    Mdn,
    MdnShared,
}

impl GeoModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeoModelKind::Regression => "regression",
            GeoModelKind::Mdn => "mdn",
            GeoModelKind::MdnShared => "mdn_shared",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoExample {
    pub features: FeatureVector,
    pub label: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoModelConfig {
    pub kind: GeoModelKind,
    pub hidden: Vec<usize>,
    pub head: MdnHeadConfig,
    pub dropout: f64,
    pub l1: f64,
    pub l2: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GeoModel {
    pub kind: GeoModelKind,
    pub head: MdnHeadConfig,
    pub net: Network,
    pub shared: Option<SharedMixtureState>,
}

impl GeoModel {
    /// Builds and initialises a model. Output biases start at the label mean
    /// (regression) or at K-means centroids (MDN); MDN-SHARED components come
    /// from [`init_shared`].
    pub fn new(cfg: &GeoModelConfig, input_dim: usize, train_labels: &[GeoPoint]) -> Result<Self> {
        if train_labels.is_empty() {
            return Err(Error::Init("no training labels".into()));
        }
        let k = cfg.head.k;
        let out = match cfg.kind {
            GeoModelKind::Regression => 2,
            GeoModelKind::Mdn => {
                cfg.head.validate()?;
                6 * k
            }
            GeoModelKind::MdnShared => {
                cfg.head.validate()?;
                k
            }
        };
        let mut sizes = vec![input_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(out);
        let spec = NetworkSpec { dropout_rate: cfg.dropout, l1_coeff: cfg.l1, l2_coeff: cfg.l2, ..NetworkSpec::new(sizes, cfg.seed) };
        let mut net = Network::new(spec)?;
        let mut shared = None;
        match cfg.kind {
            GeoModelKind::Regression => {
                let n = train_labels.len() as f64;
                let b = net.output_bias_mut();
                b[0] = train_labels.iter().map(|p| p.lat).sum::<f64>() / n;
                b[1] = train_labels.iter().map(|p| p.lon).sum::<f64>() / n;
            }
            GeoModelKind::Mdn => {
                let st = init_shared(train_labels, k, cfg.seed, cfg.head.transform)?;
                let b = net.output_bias_mut();
                for j in 0..k {
                    b[j] = st.mus[2 * j];
                    b[k + j] = st.mus[2 * j + 1];
                    b[2 * k + j] = st.raw_sigmas[2 * j];
                    b[3 * k + j] = st.raw_sigmas[2 * j + 1];
                }
            }
            GeoModelKind::MdnShared => {
                shared = Some(init_shared(train_labels, k, cfg.seed, cfg.head.transform)?);
            }
        }
        Ok(GeoModel { kind: cfg.kind, head: cfg.head, net, shared })
    }

    /// Reassembles a model from stored parts, checking consistency.
    pub fn from_parts(kind: GeoModelKind, head: MdnHeadConfig, net: Network, shared: Option<SharedMixtureState>) -> Result<Self> {
        let out = net.spec.output_size();
        let ok = match kind {
            GeoModelKind::Regression => out == 2 && shared.is_none(),
            GeoModelKind::Mdn => out == 6 * head.k && shared.is_none(),
            GeoModelKind::MdnShared => out == head.k && shared.as_ref().map_or(false, |s| s.k() == head.k),
        };
        if !ok {
            return Err(Error::Load(format!(
                "{} model with K={} does not fit a network output of width {out}",
                kind.as_str(),
                head.k
            )));
        }
        if let Some(s) = &shared {
            s.validate()?;
        }
        Ok(GeoModel { kind, head, net, shared })
    }

    pub fn input_dim(&self) -> usize {
        self.net.spec.input_size()
    }

    fn batch_matrix(&self, feats: &[&FeatureVector]) -> Matrix {
        let d = self.input_dim();
        let mut m = Matrix::zeros(feats.len(), d);
        for (i, f) in feats.iter().enumerate() {
            f.fill_dense(m.row_mut(i));
        }
        m
    }

    fn mixtures_from_output(&self, out: &Matrix) -> Result<Vec<MixtureDensity>> {
        match self.kind {
            GeoModelKind::Regression => Err(Error::Contract("a regression model has no mixture output".into())),
            GeoModelKind::Mdn => mdn_unpack(out, self.head.k, self.head.transform),
            GeoModelKind::MdnShared => {
                let comps = self.shared.as_ref().expect("shared state present").components(self.head.transform);
                (0..out.rows)
                    .map(|i| Ok(MixtureDensity { components: comps.clone(), weights: crate::math::softmax(out.row(i)) }))
                    .collect()
            }
        }
    }

    /// Predictive mixtures (MDN kinds only).
    pub fn mixtures(&self, feats: &[&FeatureVector]) -> Result<Vec<MixtureDensity>> {
        let mut all = Vec::with_capacity(feats.len());
        for chunk in feats.chunks(EVAL_CHUNK) {
            let out = self.net.predict(&self.batch_matrix(chunk))?;
            all.extend(self.mixtures_from_output(&out)?);
        }
        Ok(all)
    }

    pub fn predict_points(&self, feats: &[&FeatureVector], rule: SelectionRule) -> Result<Vec<GeoPoint>> {
        let mut all = Vec::with_capacity(feats.len());
        for chunk in feats.chunks(EVAL_CHUNK) {
            let out = self.net.predict(&self.batch_matrix(chunk))?;
            match self.kind {
                GeoModelKind::Regression => {
                    all.extend((0..out.rows).map(|i| GeoPoint { lat: out.get(i, 0), lon: out.get(i, 1) }))
                }
                _ => all.extend(self.mixtures_from_output(&out)?.iter().map(|m| predict(m, rule))),
            }
        }
        Ok(all)
    }

    /// Head loss (no regularisation) averaged over `examples`, eval mode.
    pub fn mean_loss(&self, examples: &[GeoExample]) -> Result<f64> {
        let mut total = 0.0;
        for chunk in examples.chunks(EVAL_CHUNK) {
            let refs: Vec<&GeoExample> = chunk.iter().collect();
            let out = self.net.predict(&self.batch_matrix(&refs.iter().map(|e| &e.features).collect::<Vec<_>>()))?;
            total += self.head_loss(&out, &refs)?.0 * chunk.len() as f64;
        }
        Ok(total / examples.len() as f64)
    }

    fn head_loss(&self, out: &Matrix, batch: &[&GeoExample]) -> Result<(f64, Matrix, Option<SharedMixtureState>)> {
        let labels: Vec<GeoPoint> = batch.iter().map(|e| e.label).collect();
        match self.kind {
            GeoModelKind::Regression => regression_loss(out, &labels).map(|(l, g)| (l, g, None)),
            GeoModelKind::Mdn => mdn_nll(out, &labels, self.head.k, self.head.transform).map(|(l, g)| (l, g, None)),
            GeoModelKind::MdnShared => {
                let st = self.shared.as_ref().expect("shared state present");
                shared_nll(out, st, &labels, self.head.transform).map(|(l, g, s)| (l, g, Some(s)))
            }
        }
    }
}

impl Parameters for GeoModel {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        let mut b = self.net.param_blocks();
        if let Some(s) = &self.shared {
            b.push(("shared.mus".into(), &s.mus));
            b.push(("shared.raw_sigmas".into(), &s.raw_sigmas));
            b.push(("shared.raw_rhos".into(), &s.raw_rhos));
        }
        b
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = self.net.param_blocks_mut();
        if let Some(s) = &mut self.shared {
            b.push(&mut s.mus);
            b.push(&mut s.raw_sigmas);
            b.push(&mut s.raw_rhos);
        }
        b
    }
}

impl Trainable for GeoModel {
    type Example = GeoExample;

    fn loss_and_grad(&self, batch: &[&GeoExample], dropout: Option<&mut ChaCha8Rng>) -> Result<(f64, Vec<Vec<f64>>)> {
        let x = self.batch_matrix(&batch.iter().map(|e| &e.features).collect::<Vec<_>>());
        let pass = self.net.forward(&x, dropout)?;
        let (loss, d_out, d_shared) = self.head_loss(&pass.output, batch)?;
        let mut grads = self.net.backward(&pass, &d_out, false)?.into_blocks();
        if let Some(s) = d_shared {
            grads.extend([s.mus, s.raw_sigmas, s.raw_rhos]);
        }
        Ok((loss + self.net.regularization_penalty(), grads))
    }

    fn dev_metric(&self, dev: &[GeoExample], metric: MonitoredMetric) -> Result<f64> {
        match metric {
            MonitoredMetric::DevLoss => self.mean_loss(dev),
            MonitoredMetric::DevMedianKm => {
                let feats: Vec<&FeatureVector> = dev.iter().map(|e| &e.features).collect();
                let preds = self.predict_points(&feats, self.head.selection_rule)?;
                let truths: Vec<GeoPoint> = dev.iter().map(|e| e.label).collect();
                Ok(evaluate(&preds, &truths)?.median_km)
            }
        }
    }
}
