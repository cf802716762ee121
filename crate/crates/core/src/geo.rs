//! Geodesic distance and the geolocation evaluation metrics.
//!
//! Model math works in raw degree space; the great-circle correction lives
//! only here, at evaluation time.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Radius used by the Acc@161 metric (100 miles).
pub const ACC_RADIUS_KM: f64 = 161.0;

/// A latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Checked constructor; latitude must lie in [-90, 90] and longitude in [-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Domain(format!(
                "coordinate ({}, {}) outside lat [-90,90] / lon [-180,180]",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percentage of users predicted within 161 km (inclusive).
    pub acc_at_161: f64,
    pub mean_km: f64,
    /// Lower-middle element for even counts.
    pub median_km: f64,
    pub per_user_errors: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn summary_lines(&self) -> String {
        format!(
            "Acc@161: {:.2}\nMean: {:.2} km\nMedian: {:.2} km (lower-middle for even counts)",
            self.acc_at_161, self.mean_km, self.median_km
        )
    }
}

/// Evaluates predictions against truths, labelling users by position.
pub fn evaluate(predictions: &[GeoPoint], truths: &[GeoPoint]) -> Result<EvalReport> {
    let ids: Vec<String> = (0..predictions.len()).map(|i| i.to_string()).collect();
    evaluate_users(&ids, predictions, truths)
}

pub fn evaluate_users(ids: &[String], predictions: &[GeoPoint], truths: &[GeoPoint]) -> Result<EvalReport> {
    if predictions.len() != truths.len() || ids.len() != truths.len() {
        return Err(Error::Contract(format!(
            "evaluate: {} ids, {} predictions, {} truths",
            ids.len(),
            predictions.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::Contract("evaluate: empty evaluation set".into()));
    }
    let errors: Vec<f64> = predictions.iter().zip(truths).map(|(p, t)| haversine_km(*p, *t)).collect();
    let n = errors.len() as f64;
    let hits = errors.iter().filter(|&&e| e <= ACC_RADIUS_KM).count();
    let mean = errors.iter().sum::<f64>() / n;
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    Ok(EvalReport {
        acc_at_161: 100.0 * hits as f64 / n,
        mean_km: mean,
        median_km: median,
        per_user_errors: ids.iter().cloned().zip(errors).collect(),
    })
}

/// Per-user error export: user id, true lat, true lon, pred lat, pred lon, km error.
pub fn write_error_tsv<W: Write>(
    mut out: W,
    ids: &[String],
    truths: &[GeoPoint],
    predictions: &[GeoPoint],
) -> Result<()> {
    if ids.len() != truths.len() || truths.len() != predictions.len() {
        return Err(Error::Contract("error export: length mismatch".into()));
    }
    writeln!(out, "user_id\ttrue_lat\ttrue_lon\tpred_lat\tpred_lon\terror_km")?;
    for ((id, t), p) in ids.iter().zip(truths).zip(predictions) {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}",
            id,
            t.lat,
            t.lon,
            p.lat,
            p.lon,
            haversine_km(*t, *p)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    /// Spherical law of cosines; an independent route to the same distance.
    fn cosine_law_km(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
        let dl = (b.lon - a.lon).to_radians();
        let c = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0);
        EARTH_RADIUS_KM * c.acos()
    }

    #[test]
    fn identical_points_are_zero_apart() {
        let a = pt(12.5, -70.25);
        assert_eq!(haversine_km(a, a), 0.0);
    }

    #[test]
    fn nyc_to_la() {
        let nyc = pt(40.7128, -74.0060);
        let la = pt(34.0522, -118.2437);
        let d = haversine_km(nyc, la);
        assert!((d - cosine_law_km(nyc, la)).abs() < 1.0);
        assert!((d - 3936.0).abs() < 2.0, "{d}");
    }

    #[test]
    fn antipodes_are_half_circumference() {
        let d = haversine_km(pt(0.0, 0.0), pt(0.0, 180.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-6);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
    }

    #[test]
    fn exact_predictions_score_perfectly() {
        let pts = vec![pt(1.0, 2.0), pt(-30.0, 100.0)];
        let r = evaluate(&pts, &pts).unwrap();
        assert_eq!((r.acc_at_161, r.mean_km, r.median_km), (100.0, 0.0, 0.0));
    }

    #[test]
    fn mean_and_median_of_known_errors() {
        // 1 degree of latitude = 6371*pi/180 km, so scale to hit exact distances.
        let km_per_deg = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        let truths = vec![pt(0.0, 0.0); 3];
        let preds: Vec<_> = [100.0, 200.0, 600.0].iter().map(|km| pt(km / km_per_deg, 0.0)).collect();
        let r = evaluate(&preds, &truths).unwrap();
        assert!((r.mean_km - 300.0).abs() < 1e-9);
        assert!((r.median_km - 200.0).abs() < 1e-9);
        assert!((r.acc_at_161 - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_error_counts_as_correct() {
        let truths = vec![pt(0.0, 0.0)];
        let km_per_deg = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        let mut lat = 161.0 / km_per_deg;
        // Nudge until the computed distance is exactly at or just under 161.
        while haversine_km(pt(lat, 0.0), truths[0]) > 161.0 {
            lat = f64::from_bits(lat.to_bits() - 1);
        }
        let r = evaluate(&[pt(lat, 0.0)], &truths).unwrap();
        assert_eq!(r.acc_at_161, 100.0);
    }

    #[test]
    fn even_count_median_is_lower_middle() {
        let km_per_deg = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        let truths = vec![pt(0.0, 0.0); 4];
        let preds: Vec<_> = [10.0, 20.0, 30.0, 40.0].iter().map(|km| pt(km / km_per_deg, 0.0)).collect();
        let r = evaluate(&preds, &truths).unwrap();
        assert!((r.median_km - 20.0).abs() < 1e-9);
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        assert!(matches!(evaluate(&[pt(0.0, 0.0)], &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn error_tsv_layout() {
        let mut buf = Vec::new();
        write_error_tsv(&mut buf, &["u1".to_string()], &[pt(1.0, 2.0)], &[pt(1.0, 2.0)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "user_id\ttrue_lat\ttrue_lon\tpred_lat\tpred_lon\terror_km");
        assert_eq!(lines[1], "u1\t1\t2\t1\t2\t0.000000");
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (-90.0f64..=90.0, -180.0f64..=180.0).prop_map(|(lat, lon)| GeoPoint { lat, lon })
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in arb_point(), b in arb_point(), c in arb_point()) {
            prop_assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-6);
        }

        #[test]
        fn symmetric(a in arb_point(), b in arb_point()) {
            prop_assert!((haversine_km(a, b) - haversine_km(b, a)).abs() < 1e-9);
        }

        #[test]
        fn evaluate_is_permutation_invariant(
            pairs in proptest::collection::vec((arb_point(), arb_point()), 1..40),
            rot in 0usize..40,
        ) {
            let (p, t): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let r1 = evaluate(&p, &t).unwrap();
            let k = rot % pairs.len();
            let mut shifted = pairs.clone();
            shifted.rotate_left(k);
            let (p2, t2): (Vec<_>, Vec<_>) = shifted.into_iter().unzip();
            let r2 = evaluate(&p2, &t2).unwrap();
            prop_assert_eq!(r1.acc_at_161, r2.acc_at_161);
            prop_assert_eq!(r1.median_km, r2.median_km);
            prop_assert!((r1.mean_km - r2.mean_km).abs() <= 1e-9 * r1.mean_km.max(1.0));
        }
    }
}
