//! Seeded synthetic corpora with planted geographic structure: users around
//! a few mode centres, words exclusive to a mode, words shared by several
//! modes, and location-independent noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::corpus::UserRecord;
use crate::error::{Error, Result};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub modes: Vec<GeoPoint>,
    /// Per-axis standard deviation of user locations around their mode, degrees.
    pub mode_stddev: f64,
    /// One count per mode.
    pub users_per_mode: Vec<usize>,
    pub tokens_per_user: usize,
    pub exclusive_per_mode: usize,
    /// Each entry is one ambiguous word, listing the modes that use it.
    pub ambiguous: Vec<Vec<usize>>,
    pub noise_words: usize,
    /// Chance that any token is a noise word.
    pub noise_rate: f64,
    /// For ordinary users, chance that a non-noise token is ambiguous.
    pub ambiguous_rate: f64,
    /// Share of users whose non-noise tokens are all ambiguous.
    pub ambiguous_user_fraction: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Two modes 20° of latitude apart with unequal populations (1250/750)
    /// and three words shared by both.
    pub fn bimodal(seed: u64) -> Self {
        SyntheticSpec {
            modes: vec![GeoPoint { lat: 30.0, lon: -95.0 }, GeoPoint { lat: 50.0, lon: -95.0 }],
            mode_stddev: 1.0,
            users_per_mode: vec![1250, 750],
            tokens_per_user: 20,
            exclusive_per_mode: 10,
            ambiguous: vec![vec![0, 1]; 3],
            noise_words: 20,
            noise_rate: 0.3,
            ambiguous_rate: 0.2,
            ambiguous_user_fraction: 0.5,
            seed,
        }
    }

    /// Four well-separated regions, five exclusive words each, fifty noise words.
    pub fn dialect(seed: u64) -> Self {
        SyntheticSpec {
            modes: vec![
                GeoPoint { lat: 45.0, lon: -120.0 },
                GeoPoint { lat: 45.0, lon: -75.0 },
                GeoPoint { lat: 32.0, lon: -112.0 },
                GeoPoint { lat: 32.0, lon: -84.0 },
            ],
            mode_stddev: 1.0,
            users_per_mode: vec![250; 4],
            tokens_per_user: 20,
            exclusive_per_mode: 5,
            ambiguous: Vec::new(),
            noise_words: 50,
            noise_rate: 0.6,
            ambiguous_rate: 0.0,
            ambiguous_user_fraction: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.modes.len() < 2 {
            return bad("at least two modes are required".into());
        }
        for m in &self.modes {
            m.validate()?;
        }
        if self.users_per_mode.len() != self.modes.len() {
            return bad(format!("{} user counts for {} modes", self.users_per_mode.len(), self.modes.len()));
        }
        if !(self.mode_stddev >= 0.0 && self.mode_stddev.is_finite()) {
            return bad("mode_stddev must be a non-negative number".into());
        }
        if self.tokens_per_user == 0 || self.exclusive_per_mode == 0 {
            return bad("tokens_per_user and exclusive_per_mode must be positive".into());
        }
        for (i, a) in self.ambiguous.iter().enumerate() {
            if a.len() < 2 || a.iter().any(|&m| m >= self.modes.len()) {
                return bad(format!("ambiguous word {i} must list at least two valid modes"));
            }
        }
        for (name, p) in [
            ("noise_rate", self.noise_rate),
            ("ambiguous_rate", self.ambiguous_rate),
            ("ambiguous_user_fraction", self.ambiguous_user_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.noise_rate > 0.0 && self.noise_words == 0 {
            return bad("noise_rate > 0 needs noise words".into());
        }
        if self.noise_rate >= 1.0 && self.ambiguous_user_fraction > 0.0 {
            return bad("ambiguous-only users need a noise rate below 1".into());
        }
        if self.ambiguous_user_fraction > 0.0 && self.ambiguous.is_empty() {
            return bad("ambiguous-only users need at least one ambiguous word".into());
        }
        Ok(())
    }

    pub fn exclusive_word(mode: usize, j: usize) -> String {
        format!("m{mode}x{j}")
    }

    pub fn ambiguous_word(i: usize) -> String {
        format!("amb{i}")
    }

    pub fn noise_word(i: usize) -> String {
        format!("noise{i}")
    }

    /// Words exclusive to `mode`.
    pub fn planted_words(&self, mode: usize) -> Vec<String> {
        (0..self.exclusive_per_mode).map(|j| Self::exclusive_word(mode, j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUser {
    pub record: UserRecord,
    pub mode: usize,
    pub ambiguous_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<SyntheticUser>,
    pub dev: Vec<SyntheticUser>,
    pub test: Vec<SyntheticUser>,
}

impl SyntheticCorpus {
    pub fn records(users: &[SyntheticUser]) -> Vec<UserRecord> {
        users.iter().map(|u| u.record.clone()).collect()
    }

    pub fn ambiguous_test(&self) -> Vec<UserRecord> {
        self.test.iter().filter(|u| u.ambiguous_only).map(|u| u.record.clone()).collect()
    }
}

fn wrap_lon(lon: f64) -> f64 {
    let w = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 && lon > 0.0 {
        180.0
    } else {
        w
    }
}

/// Generates users and splits them 80/10/10 after a seeded shuffle.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let amb_for_mode: Vec<Vec<usize>> = (0..spec.modes.len())
        .map(|m| (0..spec.ambiguous.len()).filter(|&i| spec.ambiguous[i].contains(&m)).collect())
        .collect();
    let mut users = Vec::new();
    for (m, (&centre, &count)) in spec.modes.iter().zip(&spec.users_per_mode).enumerate() {
        for _ in 0..count {
            let dlat: f64 = rng.sample(StandardNormal);
            let dlon: f64 = rng.sample(StandardNormal);
            let location = GeoPoint {
                lat: (centre.lat + spec.mode_stddev * dlat).clamp(-90.0, 90.0),
                lon: wrap_lon(centre.lon + spec.mode_stddev * dlon),
            };
            let amb = &amb_for_mode[m];
            let ambiguous_only = !amb.is_empty() && rng.gen_bool(spec.ambiguous_user_fraction);
            let mut tokens = Vec::with_capacity(spec.tokens_per_user);
            for _ in 0..spec.tokens_per_user {
                let word = if rng.gen_bool(spec.noise_rate) {
                    SyntheticSpec::noise_word(rng.gen_range(0..spec.noise_words))
                } else if ambiguous_only || (!amb.is_empty() && rng.gen_bool(spec.ambiguous_rate)) {
                    SyntheticSpec::ambiguous_word(amb[rng.gen_range(0..amb.len())])
                } else {
                    SyntheticSpec::exclusive_word(m, rng.gen_range(0..spec.exclusive_per_mode))
                };
                tokens.push(word);
            }
            let id = format!("u{:05}", users.len());
            users.push(SyntheticUser { record: UserRecord { id, location, text: tokens.join(" ") }, mode: m, ambiguous_only });
        }
    }
    users.shuffle(&mut rng);
    let n = users.len();
    let n_train = n * 8 / 10;
    let n_dev = n / 10;
    let test = users.split_off(n_train + n_dev);
    let dev = users.split_off(n_train);
    Ok(SyntheticCorpus { train: users, dev, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::format_corpus;
    use crate::geo::haversine_km;

    #[test]
    fn split_sizes_and_determinism() {
        let spec = SyntheticSpec::bimodal(3);
        let a = generate_synthetic(&spec).unwrap();
        assert_eq!((a.train.len(), a.dev.len(), a.test.len()), (1600, 200, 200));
        let b = generate_synthetic(&spec).unwrap();
        let bytes = |c: &SyntheticCorpus| format_corpus(&SyntheticCorpus::records(&c.train)).unwrap();
        assert_eq!(bytes(&a), bytes(&b));
        let c = generate_synthetic(&SyntheticSpec::bimodal(4)).unwrap();
        assert_ne!(bytes(&a), bytes(&c));
    }

    #[test]
    fn ambiguous_users_sit_about_ten_degrees_from_the_midpoint() {
        let spec = SyntheticSpec { mode_stddev: 0.0, ambiguous_user_fraction: 1.0, ..SyntheticSpec::bimodal(1) };
        let c = generate_synthetic(&spec).unwrap();
        let mid = GeoPoint { lat: 40.0, lon: -95.0 };
        let ten_deg = crate::geo::EARTH_RADIUS_KM * 10f64.to_radians();
        for u in &c.test {
            assert!(u.ambiguous_only);
            assert!((haversine_km(u.record.location, mid) - ten_deg).abs() < 1e-6);
            assert!(u.record.text.split(' ').all(|w| w.starts_with("amb") || w.starts_with("noise")));
        }
    }

    #[test]
    fn noise_only_text_carries_no_mode_words() {
        let spec = SyntheticSpec { noise_rate: 1.0, ambiguous_user_fraction: 0.0, ..SyntheticSpec::bimodal(1) };
        let c = generate_synthetic(&spec).unwrap();
        assert!(c.train.iter().all(|u| u.record.text.split(' ').all(|w| w.starts_with("noise"))));
    }

    #[test]
    fn exclusive_words_follow_their_mode() {
        let c = generate_synthetic(&SyntheticSpec::dialect(2)).unwrap();
        for u in c.train.iter().chain(&c.test) {
            for w in u.record.text.split(' ').filter(|w| w.starts_with('m')) {
                assert!(w.starts_with(&format!("m{}x", u.mode)));
            }
        }
    }

    #[test]
    fn invalid_specs() {
        let one_mode = SyntheticSpec { modes: vec![GeoPoint { lat: 0.0, lon: 0.0 }], users_per_mode: vec![5], ..SyntheticSpec::bimodal(0) };
        assert!(generate_synthetic(&one_mode).is_err());
        let bad_amb = SyntheticSpec { ambiguous: vec![vec![0]], ..SyntheticSpec::bimodal(0) };
        assert!(generate_synthetic(&bad_amb).is_err());
    }

    #[test]
    fn longitude_wraps() {
        assert_eq!(wrap_lon(181.0), -179.0);
        assert_eq!(wrap_lon(-181.0), 179.0);
        assert_eq!(wrap_lon(180.0), 180.0);
    }
}
