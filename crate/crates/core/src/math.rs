//! Bivariate Gaussian and mixture densities, constraint transforms, and
//! log-domain reductions.
//!
//! Everything is composed in log space. The bivariate density uses the
//! expanded scalar form, with `(1 - rho^2)` floored at [`MIN_ONE_MINUS_RHO_SQ`].
//! Inside that floor the gradient with respect to `rho` is zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// ln(2π)
pub const LOG_2PI: f64 = 1.837_877_066_409_345_5;

pub const MIN_ONE_MINUS_RHO_SQ: f64 = 1e-9;

/// Lower bound on a transformed standard deviation, in degrees.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Upper bound on a transformed standard deviation (exp transform only).
pub const SIGMA_CEIL: f64 = 1e150;

/// Largest |rho| a transform may produce.
pub const RHO_MAX: f64 = 1.0 - 1e-12;

/// One bivariate Gaussian component. `mu1`/`sigma1` pair with latitude,
/// `mu2`/`sigma2` with longitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
}

impl GaussianParams {
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        let g = GaussianParams { mu1, mu2, sigma1, sigma2, rho };
        g.validate()?;
        Ok(g)
    }

    pub fn isotropic(mu: GeoPoint, sigma: f64) -> Result<Self> {
        Self::new(mu.lat, mu.lon, sigma, sigma, 0.0)
    }

    pub fn mean(&self) -> GeoPoint {
        GeoPoint { lat: self.mu1, lon: self.mu2 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu1, self.mu2, self.sigma1, self.sigma2, self.rho].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain(format!("non-finite Gaussian parameter: {self:?}")));
        }
        if self.sigma1 <= 0.0 || self.sigma2 <= 0.0 {
            return Err(Error::Domain(format!("sigma must be positive: {self:?}")));
        }
        if self.rho <= -1.0 || self.rho >= 1.0 {
            return Err(Error::Domain(format!("rho must lie in (-1, 1): {self:?}")));
        }
        Ok(())
    }
}

/// Partial derivatives of a log-density with respect to each Gaussian parameter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogPdfGrad {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
}

/// Log-density of `x` under `g`. Validates `g` first.
pub fn log_pdf(g: &GaussianParams, x: GeoPoint) -> Result<f64> {
    g.validate()?;
    Ok(log_pdf_unchecked(g, x))
}

/// Linear-domain density.
pub fn pdf(g: &GaussianParams, x: GeoPoint) -> Result<f64> {
    log_pdf(g, x).map(f64::exp)
}

pub(crate) fn log_pdf_unchecked(g: &GaussianParams, x: GeoPoint) -> f64 {
    let d1 = x.lat - g.mu1;
    let d2 = x.lon - g.mu2;
    let q = (1.0 - g.rho * g.rho).max(MIN_ONE_MINUS_RHO_SQ);
    let z = d1 * d1 / (g.sigma1 * g.sigma1) - 2.0 * g.rho * d1 * d2 / (g.sigma1 * g.sigma2)
        + d2 * d2 / (g.sigma2 * g.sigma2);
    -LOG_2PI - g.sigma1.ln() - g.sigma2.ln() - 0.5 * q.ln() - z / (2.0 * q)
}

/// Log-density together with its analytic gradient.
pub fn log_pdf_with_grad(g: &GaussianParams, x: GeoPoint) -> (f64, LogPdfGrad) {
    let (s1, s2, rho) = (g.sigma1, g.sigma2, g.rho);
    let d1 = x.lat - g.mu1;
    let d2 = x.lon - g.mu2;
    let raw_q = 1.0 - rho * rho;
    let clamped = raw_q < MIN_ONE_MINUS_RHO_SQ;
    let q = if clamped { MIN_ONE_MINUS_RHO_SQ } else { raw_q };
    let a = d1 / s1;
    let b = d2 / s2;
    let z = a * a - 2.0 * rho * a * b + b * b;
    let value = -LOG_2PI - s1.ln() - s2.ln() - 0.5 * q.ln() - z / (2.0 * q);

    let grad = LogPdfGrad {
        mu1: (a - rho * b) / (s1 * q),
        mu2: (b - rho * a) / (s2 * q),
        sigma1: -1.0 / s1 + (a * a - rho * a * b) / (s1 * q),
        sigma2: -1.0 / s2 + (b * b - rho * a * b) / (s2 * q),
        rho: if clamped { 0.0 } else { rho / q + a * b / q - rho * z / (q * q) },
    };
    (value, grad)
}

/// K weighted bivariate components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensity {
    pub components: Vec<GaussianParams>,
    pub weights: Vec<f64>,
}

impl MixtureDensity {
    pub fn new(components: Vec<GaussianParams>, weights: Vec<f64>) -> Result<Self> {
        let m = MixtureDensity { components, weights };
        m.validate()?;
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        if self.components.len() != self.weights.len() {
            return Err(Error::Domain(format!(
                "{} components but {} weights",
                self.components.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain("mixture weights must be finite and non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("mixture weights sum to {total}")));
        }
        for c in &self.components {
            c.validate()?;
        }
        Ok(())
    }
}

/// `log Σ πk N(x | μk, Σk)`; components with zero weight are skipped.
pub fn mixture_log_pdf(m: &MixtureDensity, x: GeoPoint) -> Result<f64> {
    if m.components.len() != m.weights.len() || m.components.is_empty() {
        return Err(Error::Domain("malformed mixture".into()));
    }
    let terms: Vec<f64> = m
        .components
        .iter()
        .zip(&m.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(g, &w)| w.ln() + log_pdf_unchecked(g, x))
        .collect();
    if terms.is_empty() {
        return Err(Error::Domain("all mixture weights are zero".into()));
    }
    logsumexp(&terms)
}

/// Max-shifted `log Σ exp(v_i)`.
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Domain("logsumexp of empty input".into()));
    }
    Ok(logsumexp_nonempty(v))
}

pub(crate) fn logsumexp_nonempty(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Derivative of softplus: the logistic function.
pub fn softplus_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of softplus for `y > 0`.
pub fn inv_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

pub fn softsign(x: f64) -> f64 {
    x / (1.0 + x.abs())
}

pub fn softsign_grad(x: f64) -> f64 {
    let d = 1.0 + x.abs();
    1.0 / (d * d)
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Log-softmax, stable for large logits.
pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let lse = logsumexp_nonempty(v);
    v.iter().map(|x| x - lse).collect()
}

/// Product of the softmax Jacobian at `probs` with `upstream`.
/// The Jacobian is symmetric so this serves both directions.
pub fn softmax_jacobian_vector_product(probs: &[f64], upstream: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(upstream).map(|(p, g)| p * g).sum();
    probs.iter().zip(upstream).map(|(p, g)| p * (g - dot)).collect()
}

/// Maps unconstrained network outputs to σ and ρ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// σ = softplus(s), ρ = softsign(r)
    #[default]
    SoftplusSoftsign,
    /// σ = exp(s), ρ = tanh(r)
    ExpTanh,
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softplus_softsign" => Ok(Transform::SoftplusSoftsign),
            "exp_tanh" => Ok(Transform::ExpTanh),
            other => Err(Error::Config(format!("unknown transform '{other}'"))),
        }
    }
}

impl Transform {
    pub fn as_str(self) -> &'static str {
        match self {
            Transform::SoftplusSoftsign => "softplus_softsign",
            Transform::ExpTanh => "exp_tanh",
        }
    }

    /// Returns (σ, dσ/ds). The derivative is zero wherever a bound is active.
    pub fn sigma(self, raw: f64) -> (f64, f64) {
        let (v, d) = match self {
            Transform::SoftplusSoftsign => (softplus(raw), softplus_grad(raw)),
            Transform::ExpTanh => {
                let v = raw.exp();
                (v, v)
            }
        };
        if v < SIGMA_FLOOR {
            (SIGMA_FLOOR, 0.0)
        } else if v > SIGMA_CEIL {
            (SIGMA_CEIL, 0.0)
        } else {
            (v, d)
        }
    }

    /// Returns (ρ, dρ/dr).
    pub fn rho(self, raw: f64) -> (f64, f64) {
        let (v, d) = match self {
            Transform::SoftplusSoftsign => (softsign(raw), softsign_grad(raw)),
            Transform::ExpTanh => {
                let t = raw.tanh();
                (t, 1.0 - t * t)
            }
        };
        if v.abs() > RHO_MAX {
            (RHO_MAX.copysign(v), 0.0)
        } else {
            (v, d)
        }
    }

    /// Raw value whose transform is `sigma`.
    pub fn inverse_sigma(self, sigma: f64) -> f64 {
        match self {
            Transform::SoftplusSoftsign => inv_softplus(sigma),
            Transform::ExpTanh => sigma.ln(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint { lat, lon }
    }

    /// Matrix form: (2π)^-1 |Σ|^-1/2 exp(-½ dᵀ Σ⁻¹ d) with an explicit 2x2 inverse.
    fn matrix_form_pdf(g: &GaussianParams, x: GeoPoint) -> f64 {
        let c11 = g.sigma1 * g.sigma1;
        let c22 = g.sigma2 * g.sigma2;
        let c12 = g.rho * g.sigma1 * g.sigma2;
        let det = c11 * c22 - c12 * c12;
        let (i11, i22, i12) = (c22 / det, c11 / det, -c12 / det);
        let d = [x.lat - g.mu1, x.lon - g.mu2];
        let quad = d[0] * (i11 * d[0] + i12 * d[1]) + d[1] * (i12 * d[0] + i22 * d[1]);
        (-0.5 * quad).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    }

    fn random_params(rng: &mut ChaCha8Rng) -> GaussianParams {
        GaussianParams {
            mu1: rng.gen_range(-5.0..5.0),
            mu2: rng.gen_range(-5.0..5.0),
            sigma1: rng.gen_range(0.3..3.0),
            sigma2: rng.gen_range(0.3..3.0),
            rho: rng.gen_range(-0.9..0.9),
        }
    }

    #[test]
    fn log_pdf_at_mean_isotropic() {
        let g = GaussianParams::new(0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let v = log_pdf(&g, p(0.0, 0.0)).unwrap();
        assert!((v - (-1.837_877)).abs() < 1e-6);
        assert!((pdf(&g, p(0.0, 0.0)).unwrap() - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn log_pdf_at_mean_correlated() {
        let g = GaussianParams::new(0.0, 0.0, 1.0, 1.0, 0.5).unwrap();
        let v = log_pdf(&g, p(0.0, 0.0)).unwrap();
        let expected = -(2.0 * std::f64::consts::PI * 0.75f64.sqrt()).ln();
        assert!((v - expected).abs() < 1e-12, "{v}");
        assert!((v - (-1.694_036)).abs() < 1e-6, "{v}");
    }

    #[test]
    fn log_pdf_matches_matrix_form() {
        let g = GaussianParams::new(2.0, -3.0, 1.5, 0.7, -0.3).unwrap();
        let x = p(2.5, -2.8);
        let expected = matrix_form_pdf(&g, x).ln();
        let got = log_pdf(&g, x).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        // Frozen value of the same oracle.
        assert!((got - (-1.976_812_232_225_130_7)).abs() < 1e-10, "{got}");
    }

    #[test]
    fn log_pdf_rejects_bad_domain() {
        let bad = GaussianParams { mu1: 0.0, mu2: 0.0, sigma1: 0.0, sigma2: 1.0, rho: 0.0 };
        assert!(matches!(log_pdf(&bad, p(0.0, 0.0)), Err(Error::Domain(_))));
        let bad = GaussianParams { mu1: 0.0, mu2: 0.0, sigma1: 1.0, sigma2: 1.0, rho: 1.0 };
        assert!(matches!(log_pdf(&bad, p(0.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn log_pdf_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for _ in 0..100 {
            let g = random_params(&mut rng);
            let x = p(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0));
            let (_, grad) = log_pdf_with_grad(&g, x);
            let analytic = [grad.mu1, grad.mu2, grad.sigma1, grad.sigma2, grad.rho];
            for (i, a) in analytic.iter().enumerate() {
                let bump = |delta: f64| {
                    let mut q = g;
                    match i {
                        0 => q.mu1 += delta,
                        1 => q.mu2 += delta,
                        2 => q.sigma1 += delta,
                        3 => q.sigma2 += delta,
                        _ => q.rho += delta,
                    }
                    log_pdf_unchecked(&q, x)
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-5, "param {i}: analytic {a}, numeric {numeric}");
            }
        }
    }

    #[test]
    fn clamp_zone_has_zero_rho_gradient() {
        let g = GaussianParams { mu1: 0.0, mu2: 0.0, sigma1: 1.0, sigma2: 1.0, rho: 1.0 - 1e-12 };
        let (v, grad) = log_pdf_with_grad(&g, p(0.3, -0.2));
        assert!(v.is_finite());
        assert_eq!(grad.rho, 0.0);
    }

    #[test]
    fn single_component_mixture_is_its_component() {
        let g = GaussianParams::new(1.0, 2.0, 0.5, 1.5, 0.2).unwrap();
        let m = MixtureDensity::new(vec![g], vec![1.0]).unwrap();
        let x = p(0.7, 2.9);
        assert!((mixture_log_pdf(&m, x).unwrap() - log_pdf(&g, x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn duplicate_components_collapse() {
        let g = GaussianParams::new(1.0, 2.0, 0.5, 1.5, 0.2).unwrap();
        let m = MixtureDensity::new(vec![g, g], vec![0.5, 0.5]).unwrap();
        let x = p(-0.4, 1.1);
        assert!((mixture_log_pdf(&m, x).unwrap() - log_pdf(&g, x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mixture_matches_linear_domain_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let comps: Vec<_> = (0..3).map(|_| random_params(&mut rng)).collect();
        let w = softmax(&[0.3, -1.0, 0.8]);
        let m = MixtureDensity::new(comps.clone(), w.clone()).unwrap();
        for _ in 0..10 {
            let x = p(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let direct: f64 = comps.iter().zip(&w).map(|(g, wk)| wk * matrix_form_pdf(g, x)).sum();
            let got = mixture_log_pdf(&m, x).unwrap().exp();
            assert!((got - direct).abs() / direct < 1e-10);
        }
    }

    #[test]
    fn zero_weight_components_are_skipped() {
        let g = GaussianParams::new(0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let m = MixtureDensity { components: vec![g, g], weights: vec![0.0, 1.0] };
        assert!(mixture_log_pdf(&m, p(0.0, 0.0)).unwrap().is_finite());
        let m = MixtureDensity { components: vec![g], weights: vec![0.0] };
        assert!(matches!(mixture_log_pdf(&m, p(0.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn logsumexp_cases() {
        assert_eq!(logsumexp(&[3.5]).unwrap(), 3.5);
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((logsumexp(&[1000.0, 1000.0]).unwrap() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(), f64::NEG_INFINITY);
        assert!(logsumexp(&[]).is_err());
    }

    #[test]
    fn softplus_cases() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        let tiny = softplus(-50.0);
        assert!(tiny >= 0.0 && (tiny - (-50f64).exp()).abs() < 1e-30);
        assert!((softplus_grad(0.0) - 0.5).abs() < 1e-15);
        for y in [1e-3, 0.5, 1.0, 7.0, 40.0] {
            assert!((softplus(inv_softplus(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn softsign_cases() {
        assert_eq!(softsign(0.0), 0.0);
        assert_eq!(softsign(1.0), 0.5);
        assert_eq!(softsign(-3.0), -0.75);
        assert_eq!(softsign_grad(1.0), 0.25);
    }

    #[test]
    fn softmax_cases() {
        let s = softmax(&[0.0, 0.0, 0.0]);
        assert!(s.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let s = softmax(&[1000.0, 0.0]);
        assert!(s.iter().all(|v| v.is_finite()));
        assert!((s[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_jvp_matches_finite_differences() {
        let v = [0.2, -1.3, 0.7, 2.0];
        let up = [0.5, -0.1, 1.2, 0.3];
        let probs = softmax(&v);
        let jvp = softmax_jacobian_vector_product(&probs, &up);
        let h = 1e-6;
        for i in 0..v.len() {
            let f = |d: f64| {
                let mut w = v;
                w[i] += d;
                softmax(&w).iter().zip(&up).map(|(p, u)| p * u).sum::<f64>()
            };
            let num = (f(h) - f(-h)) / (2.0 * h);
            assert!((num - jvp[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn transforms_respect_bounds() {
        for t in [Transform::SoftplusSoftsign, Transform::ExpTanh] {
            for raw in [-1e6, -800.0, -30.0, 0.0, 30.0, 800.0, 1e6] {
                let (s, _) = t.sigma(raw);
                let (r, _) = t.rho(raw);
                assert!(s > 0.0 && s.is_finite());
                assert!(r.abs() < 1.0);
            }
            assert!((t.sigma(t.inverse_sigma(2.5)).0 - 2.5).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn logsumexp_shift(v in proptest::collection::vec(-50.0f64..50.0, 1..10), c in -1e3f64..1e3) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let lhs = logsumexp(&shifted).unwrap();
            let rhs = logsumexp(&v).unwrap() + c;
            prop_assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0));
        }

        #[test]
        fn softmax_shift_invariant(v in proptest::collection::vec(-50.0f64..50.0, 1..10), c in -1e3f64..1e3) {
            let a = softmax(&v);
            let b = softmax(&v.iter().map(|x| x + c).collect::<Vec<_>>());
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn transformed_params_satisfy_invariants(
            s1 in -1e6f64..1e6, s2 in -1e6f64..1e6, r in -1e6f64..1e6,
            logits in proptest::collection::vec(-1e6f64..1e6, 1..6),
        ) {
            let t = Transform::SoftplusSoftsign;
            let g = GaussianParams { mu1: 0.0, mu2: 0.0, sigma1: t.sigma(s1).0, sigma2: t.sigma(s2).0, rho: t.rho(r).0 };
            prop_assert!(g.validate().is_ok());
            let pi = softmax(&logits);
            let comps = vec![g; pi.len()];
            prop_assert!(MixtureDensity::new(comps, pi).is_ok());
        }

        #[test]
        fn mixture_permutation_invariant(seed in 0u64..1000, rot in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let comps: Vec<_> = (0..4).map(|_| random_params(&mut rng)).collect();
            let w = softmax(&(0..4).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
            let x = p(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let a = mixture_log_pdf(&MixtureDensity { components: comps.clone(), weights: w.clone() }, x).unwrap();
            let (mut c2, mut w2) = (comps, w);
            c2.rotate_left(rot);
            w2.rotate_left(rot);
            let b = mixture_log_pdf(&MixtureDensity { components: c2, weights: w2 }, x).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
