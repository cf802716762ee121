//! Location-to-word model for lexical dialectology: a layer of K bivariate
//! Gaussians over the input coordinate, a tanh layer, and a softmax over the
//! vocabulary. Also dialect-term scoring, ranking, recall@k and perplexity.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::geo::{haversine_km, GeoPoint, ACC_RADIUS_KM};
use crate::math::{log_pdf_with_grad, log_softmax, LogPdfGrad, Transform};
use crate::mdn::{init_components, SharedMixtureState};
use crate::nn::{Matrix, MonitoredMetric, Network, NetworkSpec, Parameters, Trainable};

/// Same arrays as the MDN-SHARED components; there are no mixture weights.
pub type GaussianLayerState = SharedMixtureState;

pub const DEFAULT_SAMPLE_POINTS: usize = 10_000;
pub const DEFAULT_REGION_RADIUS_KM: f64 = ACC_RADIUS_KM;

/// Effective σ range drawn when the Gaussian layer is initialised.
pub const LAYER_INIT_SIGMA: (f64, f64) = (1.0, 5.0);

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianActivation {
    /// N(x | μk, Σk)
    #[default]
    Density,
    /// log N(x | μk, Σk)
    LogDensity,
}

impl GaussianActivation {
    pub fn as_str(self) -> &'static str {
        match self {
            GaussianActivation::Density => "density",
            GaussianActivation::LogDensity => "log_density",
        }
    }
}

impl std::str::FromStr for GaussianActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "density" => Ok(GaussianActivation::Density),
            "log_density" => Ok(GaussianActivation::LogDensity),
            other => Err(Error::Config(format!("unknown gaussian activation '{other}'"))),
        }
    }
}

/// Layer activations plus the per-component log-density gradients backprop needs.
#[derive(Debug, Clone)]
pub struct GaussianLayerOutput {
    pub activations: Vec<f64>,
    pub(crate) log_grads: Vec<LogPdfGrad>,
}

pub fn gaussian_layer_forward(
    state: &GaussianLayerState,
    x: GeoPoint,
    transform: Transform,
    activation: GaussianActivation,
) -> GaussianLayerOutput {
    let comps = state.components(transform);
    let mut activations = Vec::with_capacity(comps.len());
    let mut log_grads = Vec::with_capacity(comps.len());
    for g in &comps {
        let (lp, d) = log_pdf_with_grad(g, x);
        activations.push(match activation {
            GaussianActivation::Density => lp.exp(),
            GaussianActivation::LogDensity => lp,
        });
        log_grads.push(d);
    }
    GaussianLayerOutput { activations, log_grads }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialectExample {
    pub location: GeoPoint,
    /// l1-normalised binary tf·idf over the output vocabulary.
    pub target: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialectConfig {
    pub k: usize,
    pub hidden: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub l1: f64,
    pub l2: f64,
    pub seed: u64,
    pub activation: GaussianActivation,
    pub transform: Transform,
}

#[derive(Debug, Clone)]
pub struct DialectModel {
    pub layer: GaussianLayerState,
    pub activation: GaussianActivation,
    pub transform: Transform,
    /// K → hidden → V
    pub net: Network,
}

/// Anything that yields log P(word | location) over a fixed vocabulary.
pub trait WordDistribution {
    fn vocab_size(&self) -> usize;
    /// One row of log-probabilities per location.
    fn log_probs(&self, xs: &[GeoPoint]) -> Result<Matrix>;
}

/// Predicts 1/V everywhere.
#[derive(Debug, Clone, Copy)]
pub struct UniformPredictor {
    pub vocab_size: usize,
}

impl WordDistribution for UniformPredictor {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn log_probs(&self, xs: &[GeoPoint]) -> Result<Matrix> {
        let v = -(self.vocab_size as f64).ln();
        Matrix::from_vec(xs.len(), self.vocab_size, vec![v; xs.len() * self.vocab_size])
    }
}

impl DialectModel {
    /// K-means μ over training locations, σ uniform on (1, 5), ρ = 0, Glorot weights.
    pub fn new(cfg: &DialectConfig, train_locations: &[GeoPoint]) -> Result<Self> {
        if cfg.k == 0 || cfg.hidden == 0 || cfg.vocab_size == 0 {
            return Err(Error::Config("dialect model needs K, hidden size and vocabulary size ≥ 1".into()));
        }
        let layer = init_components(train_locations, cfg.k, cfg.seed, LAYER_INIT_SIGMA, cfg.transform)?;
        let spec = NetworkSpec {
            dropout_rate: cfg.dropout,
            l1_coeff: cfg.l1,
            l2_coeff: cfg.l2,
            ..NetworkSpec::new(vec![cfg.k, cfg.hidden, cfg.vocab_size], cfg.seed)
        };
        Ok(DialectModel { layer, activation: cfg.activation, transform: cfg.transform, net: Network::new(spec)? })
    }

    pub fn from_parts(layer: GaussianLayerState, activation: GaussianActivation, transform: Transform, net: Network) -> Result<Self> {
        layer.validate()?;
        if net.spec.input_size() != layer.k() {
            return Err(Error::Load(format!(
                "Gaussian layer has K={} components but the network expects {} inputs",
                layer.k(),
                net.spec.input_size()
            )));
        }
        Ok(DialectModel { layer, activation, transform, net })
    }

    pub fn k(&self) -> usize {
        self.layer.k()
    }

    fn layer_batch(&self, xs: &[GeoPoint]) -> (Matrix, Vec<GaussianLayerOutput>) {
        let outs: Vec<GaussianLayerOutput> =
            xs.iter().map(|&x| gaussian_layer_forward(&self.layer, x, self.transform, self.activation)).collect();
        let mut a = Matrix::zeros(xs.len(), self.k());
        for (i, o) in outs.iter().enumerate() {
            a.row_mut(i).copy_from_slice(&o.activations);
        }
        (a, outs)
    }

    /// Probability vector over the vocabulary at `x`.
    pub fn forward(&self, x: GeoPoint) -> Result<Vec<f64>> {
        Ok(self.log_probs(&[x])?.data.into_iter().map(f64::exp).collect())
    }

    pub fn mean_loss(&self, examples: &[DialectExample]) -> Result<f64> {
        let (mut total, mut rows) = (0.0, 0usize);
        for chunk in examples.chunks(EVAL_CHUNK) {
            let xs: Vec<GeoPoint> = chunk.iter().map(|e| e.location).collect();
            let logits = self.net.predict(&self.layer_batch(&xs).0)?;
            let targets = dense_targets(chunk.iter(), self.net.spec.output_size());
            let (loss, _, used) = cross_entropy(&logits, &targets)?;
            total += loss * used as f64;
            rows += used;
        }
        if rows == 0 {
            return Err(Error::Training("no dev example has a non-empty target".into()));
        }
        Ok(total / rows as f64)
    }
}

impl WordDistribution for DialectModel {
    fn vocab_size(&self) -> usize {
        self.net.spec.output_size()
    }

    fn log_probs(&self, xs: &[GeoPoint]) -> Result<Matrix> {
        let mut logits = self.net.predict(&self.layer_batch(xs).0)?;
        for r in 0..logits.rows {
            let lp = log_softmax(logits.row(r));
            logits.row_mut(r).copy_from_slice(&lp);
        }
        Ok(logits)
    }
}

/// Model probability vector at `x`; convenience for [`DialectModel::forward`].
pub fn dialect_forward(model: &DialectModel, x: GeoPoint) -> Result<Vec<f64>> {
    model.forward(x)
}

fn dense_targets<'a>(examples: impl Iterator<Item = &'a DialectExample>, v: usize) -> Matrix {
    let rows: Vec<&DialectExample> = examples.collect();
    let mut t = Matrix::zeros(rows.len(), v);
    for (i, e) in rows.iter().enumerate() {
        e.target.fill_dense(t.row_mut(i));
    }
    t
}

fn check_targets(targets: &Matrix) -> Result<()> {
    if targets.data.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::Contract("target rows must be non-negative".into()));
    }
    Ok(())
}

/// Cross-entropy from logits; returns mean loss, d/dlogits and the number of non-empty rows.
fn cross_entropy(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix, usize)> {
    if logits.rows != targets.rows || logits.cols != targets.cols {
        return Err(Error::Contract("logits and targets differ in shape".into()));
    }
    check_targets(targets)?;
    let used = (0..targets.rows).filter(|&i| targets.row(i).iter().any(|&t| t > 0.0)).count();
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    if used == 0 {
        return Ok((0.0, grad, 0));
    }
    let n = used as f64;
    let mut total = 0.0;
    for i in 0..logits.rows {
        let t = targets.row(i);
        if !t.iter().any(|&v| v > 0.0) {
            continue;
        }
        let lp = log_softmax(logits.row(i));
        total -= t.iter().zip(&lp).filter(|(t, _)| **t > 0.0).map(|(t, l)| t * l).sum::<f64>();
        for (g, (l, t)) in grad.row_mut(i).iter_mut().zip(lp.iter().zip(t)) {
            *g = (l.exp() - t) / n;
        }
    }
    Ok((total / n, grad, used))
}

/// Mean cross-entropy between predicted distributions and l1-normalised
/// targets. The gradient is with respect to the pre-softmax logits.
/// All-zero target rows are skipped.
pub fn dialect_loss(predicted: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if predicted.rows != targets.rows || predicted.cols != targets.cols {
        return Err(Error::Contract("predictions and targets differ in shape".into()));
    }
    check_targets(targets)?;
    let used = (0..targets.rows).filter(|&i| targets.row(i).iter().any(|&t| t > 0.0)).count();
    let mut grad = Matrix::zeros(predicted.rows, predicted.cols);
    if used == 0 {
        return Ok((0.0, grad));
    }
    let n = used as f64;
    let mut total = 0.0;
    for i in 0..predicted.rows {
        let t = targets.row(i);
        if !t.iter().any(|&v| v > 0.0) {
            continue;
        }
        let p = predicted.row(i);
        total -= t.iter().zip(p).filter(|(t, _)| **t > 0.0).map(|(t, p)| t * p.ln()).sum::<f64>();
        for (g, (p, t)) in grad.row_mut(i).iter_mut().zip(p.iter().zip(t)) {
            *g = (p - t) / n;
        }
    }
    Ok((total / n, grad))
}

impl Parameters for DialectModel {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        let mut b: Vec<(String, &[f64])> = vec![
            ("gaussian.mus".into(), &self.layer.mus),
            ("gaussian.raw_sigmas".into(), &self.layer.raw_sigmas),
            ("gaussian.raw_rhos".into(), &self.layer.raw_rhos),
        ];
        b.extend(self.net.param_blocks());
        b
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b: Vec<&mut [f64]> = vec![&mut self.layer.mus, &mut self.layer.raw_sigmas, &mut self.layer.raw_rhos];
        b.extend(self.net.param_blocks_mut());
        b
    }
}

impl Trainable for DialectModel {
    type Example = DialectExample;

    fn loss_and_grad(&self, batch: &[&DialectExample], dropout: Option<&mut ChaCha8Rng>) -> Result<(f64, Vec<Vec<f64>>)> {
        let xs: Vec<GeoPoint> = batch.iter().map(|e| e.location).collect();
        let (a, outs) = self.layer_batch(&xs);
        let pass = self.net.forward(&a, dropout)?;
        let targets = dense_targets(batch.iter().copied(), self.vocab_size());
        let (loss, d_logits, _) = cross_entropy(&pass.output, &targets)?;
        let net_grads = self.net.backward(&pass, &d_logits, true)?;
        let d_a = net_grads.input.clone().expect("input gradient requested");

        let cache = self.layer.cache(self.transform);
        let mut d_layer = self.layer.zeros_like();
        for (i, o) in outs.iter().enumerate() {
            for j in 0..self.k() {
                let upstream = match self.activation {
                    GaussianActivation::Density => d_a.get(i, j) * o.activations[j],
                    GaussianActivation::LogDensity => d_a.get(i, j),
                };
                if upstream == 0.0 {
                    continue;
                }
                let g = &o.log_grads[j];
                d_layer.mus[2 * j] += upstream * g.mu1;
                d_layer.mus[2 * j + 1] += upstream * g.mu2;
                d_layer.raw_sigmas[2 * j] += upstream * g.sigma1 * cache.dsigma1[j];
                d_layer.raw_sigmas[2 * j + 1] += upstream * g.sigma2 * cache.dsigma2[j];
                d_layer.raw_rhos[j] += upstream * g.rho * cache.drho[j];
            }
        }
        let mut grads = vec![d_layer.mus, d_layer.raw_sigmas, d_layer.raw_rhos];
        grads.extend(net_grads.into_blocks());
        Ok((loss + self.net.regularization_penalty(), grads))
    }

    fn dev_metric(&self, dev: &[DialectExample], metric: MonitoredMetric) -> Result<f64> {
        match metric {
            MonitoredMetric::DevLoss => self.mean_loss(dev),
            MonitoredMetric::DevMedianKm => {
                Err(Error::Config("dev_median_km is not defined for the dialect model".into()))
            }
        }
    }
}

/// A held-out user: location and in-vocabulary token counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalUser {
    pub location: GeoPoint,
    pub counts: Vec<(usize, f64)>,
}

/// exp of the token-level average negative log-probability. Returns
/// `f64::INFINITY` when some observed token has probability zero.
pub fn perplexity<P: WordDistribution + ?Sized>(model: &P, users: &[EvalUser]) -> Result<f64> {
    let total_tokens: f64 = users.iter().flat_map(|u| u.counts.iter().map(|c| c.1)).sum();
    if users.is_empty() || total_tokens <= 0.0 {
        return Err(Error::Domain("perplexity needs at least one in-vocabulary token".into()));
    }
    let mut nll = 0.0;
    for chunk in users.chunks(EVAL_CHUNK) {
        let xs: Vec<GeoPoint> = chunk.iter().map(|u| u.location).collect();
        let lp = model.log_probs(&xs)?;
        for (i, u) in chunk.iter().enumerate() {
            for &(v, c) in &u.counts {
                let l = lp.get(i, v);
                if l == f64::NEG_INFINITY {
                    log::warn!("token {v} has zero probability; perplexity is infinite");
                    return Ok(f64::INFINITY);
                }
                nll -= c * l;
            }
        }
    }
    Ok((nll / total_tokens).exp())
}

/// Dialect region: city points and gold-standard terms.
#[derive(Debug, Clone, PartialEq)]
pub struct DialectRegion {
    pub name: String,
    pub points: Vec<GeoPoint>,
    pub terms: Vec<String>,
}

impl DialectRegion {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() || self.terms.is_empty() {
            return Err(Error::Contract(format!("region '{}' needs at least one point and one term", self.name)));
        }
        Ok(())
    }

    /// `name<TAB>lat,lon;lat,lon<TAB>term,term`
    pub fn to_line(&self) -> String {
        let pts: Vec<String> = self.points.iter().map(|p| format!("{},{}", p.lat, p.lon)).collect();
        format!("{}\t{}\t{}", self.name, pts.join(";"), self.terms.join(","))
    }
}

/// Parses a region file; blank lines and `#` comments are ignored.
pub fn parse_regions(text: &str) -> Result<Vec<DialectRegion>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |why: &str| Error::Pipeline(format!("region file line {}: {why}", n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("expected name, points and terms separated by tabs"));
        }
        let mut points = Vec::new();
        for p in f[1].split(';').filter(|s| !s.trim().is_empty()) {
            let (lat, lon) = p.split_once(',').ok_or_else(|| bad("point must be 'lat,lon'"))?;
            let lat = lat.trim().parse().map_err(|_| bad("bad latitude"))?;
            let lon = lon.trim().parse().map_err(|_| bad("bad longitude"))?;
            points.push(GeoPoint::new(lat, lon)?);
        }
        let terms = f[2].split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::to_lowercase).collect();
        let r = DialectRegion { name: f[0].to_string(), points, terms };
        r.validate().map_err(|e| bad(&e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

pub fn region_membership(p: GeoPoint, r: &DialectRegion, radius_km: f64) -> Result<bool> {
    if !(radius_km > 0.0) {
        return Err(Error::Domain(format!("region radius must be positive, got {radius_km}")));
    }
    if r.points.is_empty() {
        return Err(Error::Contract(format!("region '{}' has no points", r.name)));
    }
    Ok(r.points.iter().any(|&c| haversine_km(p, c) <= radius_km))
}

/// `P` locations drawn with replacement from `locations`.
pub fn sample_points(locations: &[GeoPoint], p: usize, seed: u64) -> Result<Vec<GeoPoint>> {
    if locations.is_empty() || p == 0 {
        return Err(Error::Domain("cannot sample points from an empty set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..p).map(|_| locations[rng.gen_range(0..locations.len())]).collect())
}

/// Mean of `log_p` over in-region points minus its mean over all points.
pub fn dialect_score(log_p: &[f64], in_region: &[bool]) -> Result<f64> {
    if log_p.len() != in_region.len() || log_p.is_empty() {
        return Err(Error::Contract("score inputs differ in length".into()));
    }
    let n = in_region.iter().filter(|&&b| b).count();
    if n == 0 {
        return Err(Error::Domain("no sampled point falls inside the region; score undefined".into()));
    }
    let inside: f64 = log_p.iter().zip(in_region).filter(|(_, &b)| b).map(|(l, _)| l).sum();
    let all: f64 = log_p.iter().sum();
    Ok(inside / n as f64 - all / log_p.len() as f64)
}

/// Per-word scores for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionScores {
    pub region: String,
    pub in_region: usize,
    pub scores: Vec<f64>,
}

/// Scores every vocabulary word for every region in one pass over the
/// sampled points. Regions containing no sampled point come back as errors.
pub fn score_regions<P: WordDistribution + ?Sized>(
    model: &P,
    regions: &[DialectRegion],
    points: &[GeoPoint],
    radius_km: f64,
) -> Result<Vec<Result<RegionScores>>> {
    if points.is_empty() {
        return Err(Error::Domain("no sampled points".into()));
    }
    let v = model.vocab_size();
    let membership: Vec<Vec<bool>> = regions
        .iter()
        .map(|r| points.iter().map(|&p| region_membership(p, r, radius_km)).collect())
        .collect::<Result<_>>()?;
    let mut global = vec![0.0; v];
    let mut sums = vec![vec![0.0; v]; regions.len()];
    for (c, chunk) in points.chunks(EVAL_CHUNK).enumerate() {
        let lp = model.log_probs(chunk)?;
        for i in 0..chunk.len() {
            let row = lp.row(i);
            for (g, l) in global.iter_mut().zip(row) {
                *g += l;
            }
            for (r, mem) in membership.iter().enumerate() {
                if mem[c * EVAL_CHUNK + i] {
                    for (s, l) in sums[r].iter_mut().zip(row) {
                        *s += l;
                    }
                }
            }
        }
    }
    let p = points.len() as f64;
    Ok(regions
        .iter()
        .zip(sums)
        .zip(&membership)
        .map(|((r, s), mem)| {
            let n = mem.iter().filter(|&&b| b).count();
            if n == 0 {
                return Err(Error::Domain(format!("region '{}' contains none of the sampled points", r.name)));
            }
            let scores = s.iter().zip(&global).map(|(s, g)| s / n as f64 - g / p).collect();
            Ok(RegionScores { region: r.name.clone(), in_region: n, scores })
        })
        .collect())
}

/// Terms sorted by descending score, ties lexicographic.
pub fn dialect_rank(scores: &[f64], terms: &[String]) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = terms.iter().cloned().zip(scores.iter().copied()).collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    /// `None` when no gold term is in the vocabulary.
    pub recall: Option<f64>,
    pub hits: usize,
    pub gold_in_vocab: usize,
    pub gold_oov: Vec<String>,
}

pub fn recall_at_k(ranked: &[String], gold: &[String], in_vocab: impl Fn(&str) -> bool, k: usize) -> Result<RecallReport> {
    if k == 0 {
        return Err(Error::Domain("recall@k needs k ≥ 1".into()));
    }
    let (known, oov): (Vec<&String>, Vec<&String>) = gold.iter().partition(|g| in_vocab(g));
    let top = &ranked[..k.min(ranked.len())];
    let hits = known.iter().filter(|g| top.contains(g)).count();
    Ok(RecallReport {
        recall: (!known.is_empty()).then(|| hits as f64 / known.len() as f64),
        hits,
        gold_in_vocab: known.len(),
        gold_oov: oov.into_iter().cloned().collect(),
    })
}
