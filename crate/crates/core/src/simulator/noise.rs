//! Detector noise model and keyed random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{Confidence, TlClass, TlType, NUM_CLASSES};
use crate::error::{Error, Result};

/// `P(observed | true)` per type. Rows are true states and columns observed
/// states, both in the type's canonical state order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeConfusion {
    pub three_bulb: Vec<Vec<f64>>,
    pub four_arrow: Vec<Vec<f64>>,
    pub five_doghouse: Vec<Vec<f64>>,
}

impl TypeConfusion {
    pub fn identity() -> Self {
        let eye = |t: TlType| {
            let n = t.num_states();
            (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect()
        };
        TypeConfusion {
            three_bulb: eye(TlType::ThreeBulb),
            four_arrow: eye(TlType::FourArrow),
            five_doghouse: eye(TlType::FiveDoghouse),
        }
    }

    pub fn get(&self, tl_type: TlType) -> &Vec<Vec<f64>> {
        match tl_type {
            TlType::ThreeBulb => &self.three_bulb,
            TlType::FourArrow => &self.four_arrow,
            TlType::FiveDoghouse => &self.five_doghouse,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub confusion: TypeConfusion,
    /// Probability that a visible light yields no detection in a camera.
    pub miss_rate: f64,
    /// Probability of one false positive per camera per frame.
    pub fp_rate: f64,
    /// Standard deviation of the Gaussian added to each box component.
    pub jitter_px: f64,
    /// Spread confidence mass over the type's other states; one-hot when off.
    #[serde(default = "soft_default")]
    pub soft_confidence: bool,
    pub seed: u64,
}

fn soft_default() -> bool {
    true
}

impl NoiseModel {
    pub fn noiseless(seed: u64) -> Self {
        NoiseModel {
            confusion: TypeConfusion::identity(),
            miss_rate: 0.0,
            fp_rate: 0.0,
            jitter_px: 0.0,
            soft_confidence: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in TlType::ALL {
            let m = self.confusion.get(t);
            let n = t.num_states();
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::Scenario(format!("{t} confusion must be {n}x{n}")));
            }
            for (i, row) in m.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Scenario(format!("{t} confusion row {i} is not a distribution")));
                }
            }
        }
        for (name, p) in [("miss_rate", self.miss_rate), ("fp_rate", self.fp_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Scenario(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.jitter_px >= 0.0 && self.jitter_px.is_finite()) {
            return Err(Error::Scenario("jitter_px must be >= 0".into()));
        }
        Ok(())
    }

    /// Confusion row of `true_class`; `None` if the class is not one of the
    /// type's states.
    pub fn row(&self, tl_type: TlType, true_class: TlClass) -> Option<&[f64]> {
        let i = tl_type.state_index(true_class)?;
        self.confusion.get(tl_type).get(i).map(Vec::as_slice)
    }

    pub fn sample_observed(&self, rng: &mut impl Rng, tl_type: TlType, true_class: TlClass) -> TlClass {
        let states = tl_type.valid_states();
        let Some(row) = self.row(tl_type, true_class) else {
            return true_class;
        };
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (p, s) in row.iter().zip(states) {
            acc += p;
            if u < acc {
                return *s;
            }
        }
        // rounding left u above the final partial sum
        states[row.iter().rposition(|p| *p > 0.0).unwrap_or(0)]
    }

    /// Integer confusion counts `[true][observed]` with `scale` samples per
    /// true state, as shipped in HMM config files.
    pub fn confusion_counts(&self, tl_type: TlType, scale: f64) -> Vec<Vec<u64>> {
        self.confusion
            .get(tl_type)
            .iter()
            .map(|row| row.iter().map(|p| (p * scale).round() as u64).collect())
            .collect()
    }
}

/// Draws a confidence vector whose argmax is `class`: the top class gets
/// a mass in [0.6, 0.95) and the rest is spread over the other states of
/// the same type.
pub fn sample_confidence(rng: &mut impl Rng, class: TlClass) -> Confidence {
    let mut v = [0.0; NUM_CLASSES];
    let top: f64 = rng.random_range(0.6..0.95);
    let others: Vec<TlClass> = class
        .tl_type()
        .map(|t| t.valid_states().iter().copied().filter(|c| *c != class).collect())
        .unwrap_or_default();
    if others.is_empty() {
        return Confidence::one_hot(class);
    }
    let weights: Vec<f64> = others.iter().map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    v[class.index()] = top;
    for (c, w) in others.iter().zip(&weights) {
        // a share can never reach the top mass: each is below 0.4
        v[c.index()] = (1.0 - top) * w / total;
    }
    Confidence::new(v).expect("sums to one by construction")
}

/// Independent draw streams. Each (seed, frame, camera, light, stream) key
/// gets its own generator, so adding or reordering lights never changes
/// another light's draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Miss = 1,
    Class = 2,
    Confidence = 3,
    Jitter = 4,
    FalsePositive = 5,
    Score = 6,
}

pub fn keyed_rng(seed: u64, frame: u64, camera: &str, light: &str, stream: Stream) -> ChaCha8Rng {
    let mut key = splitmix64(seed);
    for part in [frame, fnv1a(camera), fnv1a(light), stream as u64] {
        key = splitmix64(key ^ part);
    }
    ChaCha8Rng::seed_from_u64(key)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}
