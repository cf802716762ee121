//! Geolocation output heads: per-sample mixtures (MDN), globally shared
//! components with per-sample weights (MDN-SHARED), and the squared-error
//! regression baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::kmeans::{kmeans, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::math::{log_pdf_with_grad, log_softmax, logsumexp_nonempty, mixture_log_pdf, GaussianParams, LogPdfGrad, MixtureDensity, Transform};
use crate::nn::Matrix;

/// Order of the six K-wide blocks in a raw MDN output row.
pub const MDN_SLICE_LAYOUT: &str = "mu1,mu2,sigma1,sigma2,rho,pi";

/// Upper bound of the effective σ drawn at initialisation, in degrees.
pub const INIT_SIGMA_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    #[default]
    StrongestPi,
    MaxMixtureProb,
}

impl SelectionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionRule::StrongestPi => "strongest_pi",
            SelectionRule::MaxMixtureProb => "max_mixture_prob",
        }
    }
}

impl std::str::FromStr for SelectionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strongest_pi" => Ok(SelectionRule::StrongestPi),
            "max_mixture_prob" => Ok(SelectionRule::MaxMixtureProb),
            other => Err(Error::Config(format!("unknown selection rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdnHeadConfig {
    pub k: usize,
    pub selection_rule: SelectionRule,
    #[serde(default)]
    pub transform: Transform,
}

impl MdnHeadConfig {
    pub fn new(k: usize) -> Self {
        MdnHeadConfig { k, selection_rule: SelectionRule::default(), transform: Transform::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("number of mixture components must be at least 1".into()));
        }
        Ok(())
    }
}

/// Global components of MDN-SHARED (and of the dialect model's input layer).
/// Arrays are flat: `mus` and `raw_sigmas` hold K (lat, lon) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedMixtureState {
    pub mus: Vec<f64>,
    pub raw_sigmas: Vec<f64>,
    pub raw_rhos: Vec<f64>,
}

/// Transformed components plus the transform derivatives needed by backprop.
pub(crate) struct ComponentCache {
    pub params: Vec<GaussianParams>,
    pub dsigma1: Vec<f64>,
    pub dsigma2: Vec<f64>,
    pub drho: Vec<f64>,
}

impl SharedMixtureState {
    pub fn k(&self) -> usize {
        self.raw_rhos.len()
    }

    pub fn mu(&self, k: usize) -> GeoPoint {
        GeoPoint { lat: self.mus[2 * k], lon: self.mus[2 * k + 1] }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.mus.len() != 2 * k || self.raw_sigmas.len() != 2 * k {
            return Err(Error::Contract(format!(
                "shared components have inconsistent sizes: {} mus, {} sigmas, {} rhos",
                self.mus.len(),
                self.raw_sigmas.len(),
                k
            )));
        }
        Ok(())
    }

    pub fn components(&self, transform: Transform) -> Vec<GaussianParams> {
        self.cache(transform).params
    }

    pub(crate) fn cache(&self, transform: Transform) -> ComponentCache {
        let k = self.k();
        let mut c = ComponentCache {
            params: Vec::with_capacity(k),
            dsigma1: Vec::with_capacity(k),
            dsigma2: Vec::with_capacity(k),
            drho: Vec::with_capacity(k),
        };
        for j in 0..k {
            let (s1, d1) = transform.sigma(self.raw_sigmas[2 * j]);
            let (s2, d2) = transform.sigma(self.raw_sigmas[2 * j + 1]);
            let (r, dr) = transform.rho(self.raw_rhos[j]);
            c.params.push(GaussianParams { mu1: self.mus[2 * j], mu2: self.mus[2 * j + 1], sigma1: s1, sigma2: s2, rho: r });
            c.dsigma1.push(d1);
            c.dsigma2.push(d2);
            c.drho.push(dr);
        }
        c
    }

    pub fn zeros_like(&self) -> Self {
        SharedMixtureState {
            mus: vec![0.0; self.mus.len()],
            raw_sigmas: vec![0.0; self.raw_sigmas.len()],
            raw_rhos: vec![0.0; self.raw_rhos.len()],
        }
    }
}

/// K-means centroids plus σ values uniform on (lo, hi) and zero correlation.
pub(crate) fn init_components(
    labels: &[GeoPoint],
    k: usize,
    seed: u64,
    sigma_range: (f64, f64),
    transform: Transform,
) -> Result<SharedMixtureState> {
    let km = kmeans(labels, k, seed, DEFAULT_MAX_ITERS, DEFAULT_TOL)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let (lo, hi) = sigma_range;
    let mut raw_sigmas = Vec::with_capacity(2 * k);
    for _ in 0..2 * k {
        let u: f64 = rng.sample(Open01);
        raw_sigmas.push(transform.inverse_sigma(lo + (hi - lo) * u));
    }
    Ok(SharedMixtureState {
        mus: km.centroids.iter().flat_map(|c| [c.lat, c.lon]).collect(),
        raw_sigmas,
        raw_rhos: vec![0.0; k],
    })
}

/// Shared components seeded by K-means, effective σ uniform on (0, 10), ρ = 0.
pub fn init_shared(labels: &[GeoPoint], k: usize, seed: u64, transform: Transform) -> Result<SharedMixtureState> {
    init_components(labels, k, seed, (0.0, INIT_SIGMA_MAX), transform)
}

fn check_width(raw: &Matrix, k: usize) -> Result<()> {
    if k == 0 || raw.cols != 6 * k {
        return Err(Error::Contract(format!("raw MDN output has width {}, expected 6·K = {}", raw.cols, 6 * k)));
    }
    Ok(())
}

fn unpack_row_cached(row: &[f64], k: usize, transform: Transform) -> (ComponentCache, Vec<f64>) {
    let state = SharedMixtureState {
        mus: (0..k).flat_map(|j| [row[j], row[k + j]]).collect(),
        raw_sigmas: (0..k).flat_map(|j| [row[2 * k + j], row[3 * k + j]]).collect(),
        raw_rhos: row[4 * k..5 * k].to_vec(),
    };
    (state.cache(transform), log_softmax(&row[5 * k..6 * k]))
}

/// One raw row of width 6K into a mixture.
pub fn mdn_unpack_row(row: &[f64], k: usize, transform: Transform) -> Result<MixtureDensity> {
    if k == 0 || row.len() != 6 * k {
        return Err(Error::Contract(format!("raw MDN row has width {}, expected 6·K = {}", row.len(), 6 * k)));
    }
    let (cache, log_pi) = unpack_row_cached(row, k, transform);
    Ok(MixtureDensity { components: cache.params, weights: log_pi.into_iter().map(f64::exp).collect() })
}

pub fn mdn_unpack(raw: &Matrix, k: usize, transform: Transform) -> Result<Vec<MixtureDensity>> {
    check_width(raw, k)?;
    (0..raw.rows).map(|i| mdn_unpack_row(raw.row(i), k, transform)).collect()
}

/// −log p(y) for one sample, its responsibilities, and per-component log-pdf gradients.
fn sample_nll(params: &[GaussianParams], log_pi: &[f64], y: GeoPoint) -> (f64, Vec<f64>, Vec<LogPdfGrad>) {
    let mut terms = Vec::with_capacity(params.len());
    let mut grads = Vec::with_capacity(params.len());
    for (g, lp) in params.iter().zip(log_pi) {
        let (v, d) = log_pdf_with_grad(g, y);
        terms.push(lp + v);
        grads.push(d);
    }
    let lse = logsumexp_nonempty(&terms);
    let gamma = terms.iter().map(|t| (t - lse).exp()).collect();
    (-lse, gamma, grads)
}

fn check_labels(rows: usize, labels: &[GeoPoint]) -> Result<()> {
    if rows != labels.len() || rows == 0 {
        return Err(Error::Contract(format!("{rows} raw rows but {} labels", labels.len())));
    }
    Ok(())
}

/// Mean mixture NLL and its gradient with respect to the raw 6K outputs.
pub fn mdn_nll(raw: &Matrix, labels: &[GeoPoint], k: usize, transform: Transform) -> Result<(f64, Matrix)> {
    check_width(raw, k)?;
    check_labels(raw.rows, labels)?;
    if !raw.is_finite() {
        return Err(Error::Training("non-finite raw MDN output".into()));
    }
    let n = raw.rows as f64;
    let mut grad = Matrix::zeros(raw.rows, raw.cols);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let (c, log_pi) = unpack_row_cached(raw.row(i), k, transform);
        let (nll, gamma, lg) = sample_nll(&c.params, &log_pi, y);
        total += nll;
        let g = grad.row_mut(i);
        for j in 0..k {
            let w = -gamma[j] / n;
            g[j] = w * lg[j].mu1;
            g[k + j] = w * lg[j].mu2;
            g[2 * k + j] = w * lg[j].sigma1 * c.dsigma1[j];
            g[3 * k + j] = w * lg[j].sigma2 * c.dsigma2[j];
            g[4 * k + j] = w * lg[j].rho * c.drho[j];
            g[5 * k + j] = (log_pi[j].exp() - gamma[j]) / n;
        }
    }
    Ok((total / n, grad))
}

/// Mean NLL with per-sample weights `softmax(pi_raw)` over shared components.
/// Returns the loss, d/dPiRaw, and d/dShared accumulated over the batch.
pub fn shared_nll(
    pi_raw: &Matrix,
    shared: &SharedMixtureState,
    labels: &[GeoPoint],
    transform: Transform,
) -> Result<(f64, Matrix, SharedMixtureState)> {
    shared.validate()?;
    let k = shared.k();
    if pi_raw.cols != k {
        return Err(Error::Contract(format!("mixture-weight logits have width {}, expected K = {k}", pi_raw.cols)));
    }
    check_labels(pi_raw.rows, labels)?;
    if !pi_raw.is_finite() {
        return Err(Error::Training("non-finite mixture-weight logits".into()));
    }
    let n = pi_raw.rows as f64;
    let c = shared.cache(transform);
    let mut d_pi = Matrix::zeros(pi_raw.rows, k);
    let mut d_shared = shared.zeros_like();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let log_pi = log_softmax(pi_raw.row(i));
        let (nll, gamma, lg) = sample_nll(&c.params, &log_pi, y);
        total += nll;
        let g = d_pi.row_mut(i);
        for j in 0..k {
            g[j] = (log_pi[j].exp() - gamma[j]) / n;
            let w = -gamma[j] / n;
            d_shared.mus[2 * j] += w * lg[j].mu1;
            d_shared.mus[2 * j + 1] += w * lg[j].mu2;
            d_shared.raw_sigmas[2 * j] += w * lg[j].sigma1 * c.dsigma1[j];
            d_shared.raw_sigmas[2 * j + 1] += w * lg[j].sigma2 * c.dsigma2[j];
            d_shared.raw_rhos[j] += w * lg[j].rho * c.drho[j];
        }
    }
    Ok((total / n, d_pi, d_shared))
}

/// Point estimate from a mixture. Ties go to the lowest component index.
pub fn predict(m: &MixtureDensity, rule: SelectionRule) -> GeoPoint {
    let scores: Vec<f64> = match rule {
        SelectionRule::StrongestPi => m.weights.clone(),
        SelectionRule::MaxMixtureProb => m
            .components
            .iter()
            .map(|g| mixture_log_pdf(m, g.mean()).unwrap_or(f64::NEG_INFINITY))
            .collect(),
    };
    let mut best = 0;
    for (j, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = j;
        }
    }
    m.components[best].mean()
}

/// Mean over samples of the squared error summed over both coordinates.
pub fn regression_loss(raw: &Matrix, labels: &[GeoPoint]) -> Result<(f64, Matrix)> {
    if raw.cols != 2 {
        return Err(Error::Contract(format!("regression output has width {}, expected 2", raw.cols)));
    }
    check_labels(raw.rows, labels)?;
    let n = raw.rows as f64;
    let mut grad = Matrix::zeros(raw.rows, 2);
    let mut total = 0.0;
    for (i, y) in labels.iter().enumerate() {
        let r = raw.row(i);
        let (e1, e2) = (r[0] - y.lat, r[1] - y.lon);
        total += e1 * e1 + e2 * e2;
        grad.set(i, 0, 2.0 * e1 / n);
        grad.set(i, 1, 2.0 * e2 / n);
    }
    Ok((total / n, grad))
}

/// Latitude/longitude box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.min_lat, self.max_lat, self.min_lon, self.max_lon].iter().all(|v| v.is_finite());
        if !finite || self.min_lat >= self.max_lat || self.min_lon >= self.max_lon {
            return Err(Error::Domain(format!("invalid bounding box {self:?}")));
        }
        Ok(())
    }

    /// Cell centres of a `resolution × resolution` grid, latitude-major.
    pub fn cell_centers(&self, resolution: usize) -> Result<Vec<GeoPoint>> {
        self.validate()?;
        if resolution < 2 {
            return Err(Error::Domain(format!("grid resolution must be at least 2, got {resolution}")));
        }
        let dlat = (self.max_lat - self.min_lat) / resolution as f64;
        let dlon = (self.max_lon - self.min_lon) / resolution as f64;
        let mut out = Vec::with_capacity(resolution * resolution);
        for i in 0..resolution {
            for j in 0..resolution {
                out.push(GeoPoint {
                    lat: self.min_lat + (i as f64 + 0.5) * dlat,
                    lon: self.min_lon + (j as f64 + 0.5) * dlon,
                });
            }
        }
        Ok(out)
    }

    pub fn cell_area(&self, resolution: usize) -> f64 {
        (self.max_lat - self.min_lat) * (self.max_lon - self.min_lon) / (resolution * resolution) as f64
    }
}

impl std::str::FromStr for BBox {
    type Err = Error;

    /// `min_lat,max_lat,min_lon,max_lon`
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad bounding box '{s}'")))?;
        if v.len() != 4 {
            return Err(Error::Config(format!("bounding box needs 4 numbers, got '{s}'")));
        }
        let b = BBox { min_lat: v[0], max_lat: v[1], min_lon: v[2], max_lon: v[3] };
        b.validate()?;
        Ok(b)
    }
}

/// Log-densities on a regular grid, row-major over (lat, lon) cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub bbox: BBox,
    pub resolution: usize,
    pub centers: Vec<GeoPoint>,
    pub values: Vec<f64>,
}

impl DensityGrid {
    /// `lat,lon,log_value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lat,lon,log_value\n");
        for (p, v) in self.centers.iter().zip(&self.values) {
            s.push_str(&format!("{},{},{}\n", p.lat, p.lon, v));
        }
        s
    }

    pub fn argmax(&self) -> GeoPoint {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        self.centers[best]
    }
}

pub fn predictive_density_grid(m: &MixtureDensity, bbox: BBox, resolution: usize) -> Result<DensityGrid> {
    m.validate()?;
    let centers = bbox.cell_centers(resolution)?;
    let values = centers.iter().map(|&p| mixture_log_pdf(m, p)).collect::<Result<_>>()?;
    Ok(DensityGrid { bbox, resolution, centers, values })
}
