//! Per-type HMM forward filtering of light states and duty-cycle flashing
//! detection.
//!
//! Each housing type runs its own HMM over its valid states. The update is
//! `α' ∝ c ⊙ (Aᵀ α)` with evidence `c = C x`, where `C(j, k) = P(S_j | V_k)`
//! comes from the detector confusion matrix and `x` is the detector
//! confidence restricted to the type.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detection::{confusion_from_counts, ConfusionModel, TlClass, TlType};
use crate::error::{Error, Result};

const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Legal next states (self-transitions excluded) under the regulated
/// signal sequence of each housing type.
pub fn regulated_successors(state: TlClass) -> &'static [TlClass] {
    use TlClass::*;
    match state {
        Red3 => &[Green3],
        Green3 => &[Yellow3],
        Yellow3 => &[Red3],
        RedLeft4 => &[GreenLeft4],
        GreenLeft4 => &[YellowLeft4],
        YellowLeft4 => &[FlashingYellowLeft4, Off4],
        FlashingYellowLeft4 => &[Off4, RedLeft4],
        Off4 => &[FlashingYellowLeft4, RedLeft4],
        Red5 => &[RedGreenLeft5, Green5],
        RedGreenLeft5 => &[RedYellowLeft5],
        RedYellowLeft5 => &[Red5],
        Green5 => &[Yellow5],
        Yellow5 => &[Red5],
        Background => &[],
    }
}

pub fn is_legal_transition(from: TlClass, to: TlClass) -> bool {
    from == to || regulated_successors(from).contains(&to)
}

/// A lit class can flash when the regulated sequence lets it alternate
/// with the dark state in both directions.
pub fn can_flash(class: TlClass) -> bool {
    class.is_on()
        && regulated_successors(class).contains(&TlClass::Off4)
        && regulated_successors(TlClass::Off4).contains(&class)
}

/// Transition matrix over `tl_type`'s states: `self_prob` on the diagonal,
/// the rest split evenly over legal successors, zero elsewhere.
pub fn default_transition(tl_type: TlType, self_prob: f64) -> DMatrix<f64> {
    let states = tl_type.valid_states();
    let n = states.len();
    let mut a = DMatrix::zeros(n, n);
    for (i, &from) in states.iter().enumerate() {
        let next = regulated_successors(from);
        if next.is_empty() {
            a[(i, i)] = 1.0;
            continue;
        }
        a[(i, i)] = self_prob;
        let share = (1.0 - self_prob) / next.len() as f64;
        for to in next {
            if let Some(j) = tl_type.state_index(*to) {
                a[(i, j)] = share;
            }
        }
    }
    a
}

/// Filtered belief `α(j) = P(q_t = S_j | o_1:t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState {
    pub alpha: DVector<f64>,
    pub last_update: f64,
}

impl BeliefState {
    pub fn new(alpha: DVector<f64>, last_update: f64) -> Self {
        BeliefState { alpha, last_update }
    }

    pub fn is_valid(&self) -> bool {
        self.alpha.iter().all(|v| *v >= 0.0 && v.is_finite())
            && (self.alpha.sum() - 1.0).abs() <= STOCHASTIC_TOLERANCE
    }
}

/// `c = C x`, left unnormalized. `x` is renormalized here if it does not
/// already sum to one.
pub fn build_evidence(confusion: &ConfusionModel, x: &[f64]) -> Result<DVector<f64>> {
    let c = confusion.matrix();
    if x.len() != c.ncols() {
        return Err(Error::Dimension(format!(
            "confidence has {} states, confusion model {}",
            x.len(),
            c.ncols()
        )));
    }
    let total: f64 = x.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoEvidence);
    }
    let x = DVector::from_iterator(x.len(), x.iter().map(|v| v / total));
    Ok(c * x)
}

/// Pure prediction `Aᵀ α`.
pub fn predict(alpha: &DVector<f64>, transition: &DMatrix<f64>) -> DVector<f64> {
    transition.tr_mul(alpha)
}

/// One forward step: `α' = normalize(c ⊙ (Aᵀ α))`.
pub fn forward_update(
    belief: &BeliefState,
    transition: &DMatrix<f64>,
    evidence: &DVector<f64>,
) -> Result<BeliefState> {
    let n = belief.alpha.len();
    if transition.shape() != (n, n) || evidence.len() != n {
        return Err(Error::Dimension(format!(
            "belief {n}, transition {:?}, evidence {}",
            transition.shape(),
            evidence.len()
        )));
    }
    let unnormalized = evidence.component_mul(&predict(&belief.alpha, transition));
    let z = unnormalized.sum();
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::ImpossibleObservation);
    }
    Ok(BeliefState::new(unnormalized / z, belief.last_update))
}

/// Argmax over `states`; exact ties go to the lower canonical rank.
pub fn map_state(belief: &BeliefState, states: &[TlClass]) -> TlClass {
    let mut best: Option<(f64, TlClass)> = None;
    for (&p, &class) in belief.alpha.iter().zip(states) {
        best = match best {
            Some((bp, bc))
                if bp > p || (bp == p && bc.canonical_rank() <= class.canonical_rank()) =>
            {
                Some((bp, bc))
            }
            _ => Some((p, class)),
        };
    }
    best.map_or(TlClass::Background, |(_, c)| c)
}

/// HMM for one housing type.
#[derive(Clone, Debug, PartialEq)]
pub struct Hmm {
    pub tl_type: TlType,
    pub transition: DMatrix<f64>,
    pub confusion: ConfusionModel,
    pub pi: DVector<f64>,
}

/// What happened when an observation was folded into a belief.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Updated,
    /// The confidence had no mass on this type's states.
    Skipped,
    /// Zero normalizer; the belief was reset to the prior.
    Reset,
}

impl Hmm {
    pub fn new(
        tl_type: TlType,
        transition: DMatrix<f64>,
        confusion: ConfusionModel,
        pi: DVector<f64>,
    ) -> Result<Self> {
        let hmm = Hmm {
            tl_type,
            transition,
            confusion,
            pi,
        };
        hmm.validate()?;
        Ok(hmm)
    }

    /// Regulated default transitions, uniform prior.
    pub fn with_defaults(
        tl_type: TlType,
        self_prob: f64,
        confusion: ConfusionModel,
    ) -> Result<Self> {
        let n = tl_type.num_states();
        Hmm::new(
            tl_type,
            default_transition(tl_type, self_prob),
            confusion,
            DVector::from_element(n, 1.0 / n as f64),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let states = self.tl_type.valid_states();
        let n = states.len();
        if self.transition.shape() != (n, n) || self.pi.len() != n || self.confusion.dim() != n {
            return Err(Error::Dimension(format!(
                "{} HMM must have {n} states",
                self.tl_type
            )));
        }
        for (i, row) in self.transition.row_iter().enumerate() {
            if row.iter().any(|v| *v < 0.0 || !v.is_finite())
                || (row.sum() - 1.0).abs() > STOCHASTIC_TOLERANCE
            {
                return Err(Error::invalid(
                    "transition",
                    format!("row {i} is not a distribution"),
                ));
            }
            for (j, &v) in row.iter().enumerate() {
                if v > 0.0 && !is_legal_transition(states[i], states[j]) {
                    return Err(Error::invalid(
                        "transition",
                        format!(
                            "{} -> {} is not a regulated transition",
                            states[i], states[j]
                        ),
                    ));
                }
            }
        }
        if self.pi.iter().any(|v| *v < 0.0) || (self.pi.sum() - 1.0).abs() > STOCHASTIC_TOLERANCE {
            return Err(Error::invalid("pi", "must be a distribution"));
        }
        Ok(())
    }

    pub fn states(&self) -> &'static [TlClass] {
        self.tl_type.valid_states()
    }

    pub fn initial_belief(&self, t: f64) -> BeliefState {
        BeliefState::new(self.pi.clone(), t)
    }

    /// Folds one observation (restricted confidence `x`) into `belief`.
    pub fn observe(&self, belief: &mut BeliefState, x: &[f64], t: f64) -> Result<StepOutcome> {
        let evidence = match build_evidence(&self.confusion, x) {
            Ok(e) => e,
            Err(Error::NoEvidence) => return Ok(StepOutcome::Skipped),
            Err(e) => return Err(e),
        };
        match forward_update(belief, &self.transition, &evidence) {
            Ok(next) => {
                *belief = next;
                belief.last_update = t;
                Ok(StepOutcome::Updated)
            }
            Err(Error::ImpossibleObservation) => {
                log::warn!(
                    "{} belief hit a zero normalizer at t={t}; reset to prior",
                    self.tl_type
                );
                *belief = self.initial_belief(t);
                Ok(StepOutcome::Reset)
            }
            Err(e) => Err(e),
        }
    }

    /// Advances the belief one step without evidence.
    pub fn predict(&self, belief: &mut BeliefState) {
        let next = predict(&belief.alpha, &self.transition);
        let z = next.sum();
        if z > 0.0 {
            belief.alpha = next / z;
        }
    }

    pub fn map_state(&self, belief: &BeliefState) -> TlClass {
        map_state(belief, self.states())
    }

    pub fn to_config(&self) -> HmmConfig {
        HmmConfig {
            tl_type: self.tl_type,
            states: self.states().to_vec(),
            a: self.transition.transpose().iter().copied().collect(),
            pi: self.pi.iter().copied().collect(),
            confusion_counts: None,
            confusion: Some(
                self.confusion
                    .matrix()
                    .transpose()
                    .iter()
                    .copied()
                    .collect(),
            ),
        }
    }
}

/// HMM parameter file for one type. `a` and `confusion` are row-major.
/// Either `confusion_counts` (`[true][observed]`) or a column-stochastic
/// `confusion` matrix must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmConfig {
    pub tl_type: TlType,
    pub states: Vec<TlClass>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub pi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion_counts: Option<Vec<Vec<u64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Vec<f64>>,
}

impl HmmConfig {
    pub fn build(&self) -> Result<Hmm> {
        let expected = self.tl_type.valid_states();
        if self.states.len() != expected.len()
            || self.states.iter().any(|s| !self.tl_type.contains(*s))
        {
            return Err(Error::invalid(
                "hmm config",
                format!("states must be {:?}", expected),
            ));
        }
        // reorder from file order into canonical order
        let perm: Vec<usize> = expected
            .iter()
            .map(|c| self.states.iter().position(|s| s == c))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::invalid("hmm config", "states must not repeat"))?;
        let n = expected.len();
        let square = |v: &[f64], what: &'static str| -> Result<DMatrix<f64>> {
            if v.len() != n * n {
                return Err(Error::Dimension(format!("{what} needs {} entries", n * n)));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| v[perm[i] * n + perm[j]]))
        };
        let transition = square(&self.a, "A")?;
        if self.pi.len() != n {
            return Err(Error::Dimension(format!("pi needs {n} entries")));
        }
        let pi = DVector::from_fn(n, |i, _| self.pi[perm[i]]);
        let confusion = match (&self.confusion_counts, &self.confusion) {
            (Some(counts), _) => {
                if counts.len() != n || counts.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension(format!(
                        "confusion_counts must be {n}x{n}"
                    )));
                }
                let reordered: Vec<Vec<u64>> = (0..n)
                    .map(|i| (0..n).map(|j| counts[perm[i]][perm[j]]).collect())
                    .collect();
                confusion_from_counts(&reordered)?
            }
            (None, Some(c)) => ConfusionModel::from_matrix(square(c, "confusion")?)?,
            (None, None) => {
                return Err(Error::invalid(
                    "hmm config",
                    "needs confusion_counts or confusion",
                ))
            }
        };
        Hmm::new(self.tl_type, transition, confusion, pi)
    }
}

/// One HMM per housing type.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmSet {
    three_bulb: Hmm,
    four_arrow: Hmm,
    five_doghouse: Hmm,
}

impl HmmSet {
    /// Regulated transitions with `self_prob` self-transition, uniform
    /// prior, identity confusion.
    pub fn defaults(self_prob: f64) -> Result<Self> {
        let make = |t: TlType| Hmm::with_defaults(t, self_prob, ConfusionModel::identity(t.num_states()));
        Ok(HmmSet {
            three_bulb: make(TlType::ThreeBulb)?,
            four_arrow: make(TlType::FourArrow)?,
            five_doghouse: make(TlType::FiveDoghouse)?,
        })
    }

    /// Defaults, with any type listed in `configs` replaced.
    pub fn from_configs(self_prob: f64, configs: &[HmmConfig]) -> Result<Self> {
        let mut set = HmmSet::defaults(self_prob)?;
        for cfg in configs {
            set.insert(cfg.build()?);
        }
        Ok(set)
    }

    pub fn insert(&mut self, hmm: Hmm) {
        match hmm.tl_type {
            TlType::ThreeBulb => self.three_bulb = hmm,
            TlType::FourArrow => self.four_arrow = hmm,
            TlType::FiveDoghouse => self.five_doghouse = hmm,
        }
    }

    pub fn get(&self, tl_type: TlType) -> &Hmm {
        match tl_type {
            TlType::ThreeBulb => &self.three_bulb,
            TlType::FourArrow => &self.four_arrow,
            TlType::FiveDoghouse => &self.five_doghouse,
        }
    }
}

/// Duty-cycle window for flashing detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlashingConfig {
    /// Number of most recent observations inspected.
    pub window: usize,
    pub duty_min: f64,
    pub duty_max: f64,
    /// Once flashing is declared it is held while the on-fraction stays
    /// within `[duty_min - release_margin, duty_max + release_margin]`.
    pub release_margin: f64,
    /// This many newest observations, all lit and none of the flashing
    /// class, end a flash at once; 0 disables the rule.
    pub release_run: usize,
}

impl Default for FlashingConfig {
    fn default() -> Self {
        FlashingConfig {
            window: 20,
            duty_min: 0.5,
            duty_max: 2.0 / 3.0,
            release_margin: 0.15,
            release_run: 4,
        }
    }
}

impl FlashingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid("flashing", "window must be >= 1"));
        }
        if !(0.0 < self.duty_min && self.duty_min < self.duty_max && self.duty_max < 1.0) {
            return Err(Error::invalid(
                "flashing",
                "need 0 < duty_min < duty_max < 1",
            ));
        }
        if !(self.release_margin >= 0.0) {
            return Err(Error::invalid("flashing", "release_margin must be >= 0"));
        }
        Ok(())
    }
}

struct WindowStats {
    on_fraction: f64,
    /// Most frequent on-class and its count.
    dominant: Option<(TlClass, usize)>,
    on: usize,
}

fn window_stats(window: &[TlClass]) -> WindowStats {
    let mut counts: Vec<(TlClass, usize)> = Vec::new();
    let mut on = 0;
    for &c in window.iter().filter(|c| c.is_on()) {
        on += 1;
        match counts.iter_mut().find(|(k, _)| *k == c) {
            Some(e) => e.1 += 1,
            None => counts.push((c, 1)),
        }
    }
    let dominant = counts.into_iter().max_by(|a, b| {
        a.1.cmp(&b.1)
            .then(b.0.canonical_rank().cmp(&a.0.canonical_rank()))
    });
    WindowStats {
        on_fraction: on as f64 / window.len() as f64,
        dominant,
        on,
    }
}

/// Flashing test over the last `cfg.window` detected classes (oldest
/// first). Flashing iff the on-fraction lies in `[duty_min, duty_max]` and
/// a strict majority of the on-observations share one class, which is
/// returned.
pub fn detect_flashing(history: &[TlClass], cfg: &FlashingConfig) -> Option<TlClass> {
    if cfg.window == 0 || history.len() < cfg.window {
        return None;
    }
    let stats = window_stats(&history[history.len() - cfg.window..]);
    let in_band =
        cfg.duty_min - 1e-12 <= stats.on_fraction && stats.on_fraction <= cfg.duty_max + 1e-12;
    match stats.dominant {
        Some((class, n)) if in_band && 2 * n > stats.on => Some(class),
        _ => None,
    }
}

/// True when the newest `run` observations are lit and differ from `class`.
fn steady_run(history: &[TlClass], class: TlClass, run: usize) -> bool {
    run > 0
        && history.len() >= run
        && history[history.len() - run..].iter().all(|c| c.is_on() && *c != class)
}

/// Flashing state with hysteresis on release.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlashingLatch {
    active: Option<TlClass>,
}

impl FlashingLatch {
    pub fn active(&self) -> Option<TlClass> {
        self.active
    }

    pub fn reset(&mut self) {
        self.active = None;
    }

    pub fn update(&mut self, history: &[TlClass], cfg: &FlashingConfig) -> Option<TlClass> {
        let detected = detect_flashing(history, cfg).filter(|c| can_flash(*c));
        if let Some(class) = self.active.or(detected) {
            if steady_run(history, class, cfg.release_run) {
                self.active = None;
                return None;
            }
        }
        if let Some(class) = detected {
            self.active = Some(class);
            return self.active;
        }
        if let Some(class) = self.active {
            let hold = history.len() >= cfg.window && {
                let stats = window_stats(&history[history.len() - cfg.window..]);
                let lo = cfg.duty_min - cfg.release_margin;
                let hi = cfg.duty_max + cfg.release_margin;
                lo <= stats.on_fraction
                    && stats.on_fraction <= hi
                    && stats.dominant.is_some_and(|(c, _)| c == class)
            };
            if !hold {
                self.active = None;
            }
        }
        self.active
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn belief(v: &[f64]) -> BeliefState {
        BeliefState::new(DVector::from_row_slice(v), 0.0)
    }

    #[test]
    fn evidence_identity() {
        let c = build_evidence(&ConfusionModel::identity(3), &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(c, dvector![1.0, 0.0, 0.0]);
    }

    #[test]
    fn evidence_matrix_vector_product() {
        // columns (0.9, 0.1) and (0.2, 0.8)
        let cm = ConfusionModel::from_matrix(dmatrix![0.9, 0.2; 0.1, 0.8]).unwrap();
        let c = build_evidence(&cm, &[0.5, 0.5]).unwrap();
        assert_relative_eq!(c, dvector![0.55, 0.45], epsilon = 1e-15);
    }

    #[test]
    fn evidence_uniform_gives_scaled_row_sums() {
        let cm = ConfusionModel::from_matrix(dmatrix![0.7, 0.2, 0.1; 0.2, 0.5, 0.3; 0.1, 0.3, 0.6])
            .unwrap();
        let c = build_evidence(&cm, &[1.0 / 3.0; 3]).unwrap();
        for j in 0..3 {
            assert_relative_eq!(c[j], cm.matrix().row(j).sum() / 3.0, epsilon = 1e-15);
        }
        assert!(matches!(
            build_evidence(&cm, &[0.0; 3]),
            Err(Error::NoEvidence)
        ));
    }

    #[test]
    fn forward_absorbing_evidence() {
        let a = DMatrix::identity(3, 3);
        let b = forward_update(&belief(&[0.2, 0.3, 0.5]), &a, &dvector![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(b.alpha, dvector![0.0, 1.0, 0.0]);
    }

    #[test]
    fn forward_hand_example() {
        let a = dmatrix![0.9, 0.1; 0.1, 0.9];
        let b = forward_update(&belief(&[0.5, 0.5]), &a, &dvector![0.8, 0.2]).unwrap();
        assert_relative_eq!(b.alpha, dvector![0.8, 0.2], epsilon = 1e-15);
    }

    #[test]
    fn forward_uniform_evidence_is_prediction() {
        let a = dmatrix![0.9, 0.1, 0.0; 0.0, 0.8, 0.2; 0.3, 0.0, 0.7];
        let b0 = belief(&[0.6, 0.3, 0.1]);
        let b = forward_update(&b0, &a, &dvector![0.25, 0.25, 0.25]).unwrap();
        let p = predict(&b0.alpha, &a);
        assert_relative_eq!(b.alpha, &p / p.sum(), epsilon = 1e-15);
    }

    #[test]
    fn forward_impossible_observation() {
        let a = DMatrix::identity(2, 2);
        assert!(matches!(
            forward_update(&belief(&[1.0, 0.0]), &a, &dvector![0.0, 1.0]),
            Err(Error::ImpossibleObservation)
        ));
    }

    #[test]
    fn observe_resets_on_impossible() {
        let hmm = Hmm::new(
            TlType::ThreeBulb,
            DMatrix::identity(3, 3),
            ConfusionModel::identity(3),
            dvector![0.2, 0.3, 0.5],
        )
        .unwrap();
        let mut b = belief(&[1.0, 0.0, 0.0]);
        let out = hmm.observe(&mut b, &[0.0, 0.0, 1.0], 4.0).unwrap();
        assert_eq!(out, StepOutcome::Reset);
        assert_eq!(b.alpha, hmm.pi);
        assert_eq!(
            hmm.observe(&mut b, &[0.0; 3], 5.0).unwrap(),
            StepOutcome::Skipped
        );
    }

    #[test]
    fn map_state_examples() {
        let states = [TlClass::Red3, TlClass::Green3];
        assert_eq!(map_state(&belief(&[0.8, 0.2]), &states), TlClass::Red3);
        assert_eq!(map_state(&belief(&[0.0, 1.0]), &states), TlClass::Green3);
        assert_eq!(map_state(&belief(&[0.5, 0.5]), &states), TlClass::Red3);
        // order of the slice does not matter for ties
        assert_eq!(
            map_state(&belief(&[0.5, 0.5]), &[TlClass::Green3, TlClass::Red3]),
            TlClass::Red3
        );
    }

    #[test]
    fn default_transitions_are_regulated() {
        for t in TlType::ALL {
            let hmm =
                Hmm::with_defaults(t, 0.98, ConfusionModel::identity(t.num_states())).unwrap();
            assert!(hmm.validate().is_ok());
        }
        let a = default_transition(TlType::ThreeBulb, 0.98);
        // red -> yellow is forbidden; red -> green carries all leaving mass
        assert_eq!(a[(0, 1)], 0.0);
        assert_relative_eq!(a[(0, 2)], 0.02, epsilon = 1e-15);
    }

    #[test]
    fn forbidden_transition_rejected() {
        let mut a = default_transition(TlType::ThreeBulb, 0.98);
        a[(0, 0)] = 0.97;
        a[(0, 1)] = 0.01;
        let err = Hmm::new(
            TlType::ThreeBulb,
            a,
            ConfusionModel::identity(3),
            DVector::from_element(3, 1.0 / 3.0),
        );
        assert!(err.is_err());
    }

    #[test]
    fn regulated_zero_is_preserved() {
        // belief one-hot red; red cannot reach yellow in one step
        let hmm = Hmm::with_defaults(TlType::ThreeBulb, 0.9, ConfusionModel::identity(3)).unwrap();
        let mut b = belief(&[1.0, 0.0, 0.0]);
        hmm.observe(&mut b, &[0.01, 0.98, 0.01], 0.0).unwrap();
        assert_eq!(b.alpha[1], 0.0);
    }

    #[test]
    fn hmm_config_round_trip_and_reordering() {
        let hmm =
            Hmm::with_defaults(TlType::FiveDoghouse, 0.95, ConfusionModel::identity(5)).unwrap();
        let cfg = hmm.to_config();
        assert_eq!(cfg.build().unwrap(), hmm);
        // the same model written with states in a different order
        let mut shuffled = cfg.clone();
        let order = [4usize, 2, 0, 1, 3];
        shuffled.states = order.iter().map(|&i| cfg.states[i]).collect();
        let a = &cfg.a;
        shuffled.a = order
            .iter()
            .flat_map(|&i| order.iter().map(move |&j| a[i * 5 + j]))
            .collect();
        shuffled.confusion = None;
        shuffled.confusion_counts = Some(
            (0..5)
                .map(|i| (0..5).map(|j| u64::from(i == j) * 7).collect())
                .collect(),
        );
        shuffled.pi = order.iter().map(|&i| cfg.pi[i]).collect();
        assert_eq!(shuffled.build().unwrap(), hmm);
    }

    fn classes(on: TlClass, pattern: &str) -> Vec<TlClass> {
        pattern
            .chars()
            .map(|c| if c == '1' { on } else { TlClass::Off4 })
            .collect()
    }

    #[test]
    fn flashing_examples() {
        let y = TlClass::FlashingYellowLeft4;
        let cfg = FlashingConfig {
            window: 10,
            ..Default::default()
        };
        assert_eq!(detect_flashing(&classes(y, "1010101010"), &cfg), Some(y));
        assert_eq!(detect_flashing(&classes(y, "1111111111"), &cfg), None);
        let cfg15 = FlashingConfig {
            window: 15,
            ..Default::default()
        };
        // 9 on / 6 off = 0.6
        assert_eq!(
            detect_flashing(&classes(y, "111000111000111"), &cfg15),
            Some(y)
        );
        // 8 on / 2 off = 0.8
        assert_eq!(detect_flashing(&classes(y, "1111011110"), &cfg), None);
        // too short
        assert_eq!(detect_flashing(&classes(y, "10101"), &cfg), None);
    }

    #[test]
    fn flashing_boundaries_inclusive() {
        let y = TlClass::FlashingYellowLeft4;
        let cfg = FlashingConfig {
            window: 6,
            ..Default::default()
        };
        // 4 / 6 = 2/3 exactly
        assert_eq!(detect_flashing(&classes(y, "110110"), &cfg), Some(y));
        // 2 / 6 below
        assert_eq!(detect_flashing(&classes(y, "100100"), &cfg), None);
    }

    #[test]
    fn flashing_needs_a_dominant_on_class() {
        let cfg = FlashingConfig {
            window: 4,
            ..Default::default()
        };
        let h = [
            TlClass::RedLeft4,
            TlClass::Off4,
            TlClass::GreenLeft4,
            TlClass::Off4,
        ];
        assert_eq!(detect_flashing(&h, &cfg), None);
    }

    #[test]
    fn latch_holds_through_a_dip_and_releases_on_steady() {
        let y = TlClass::FlashingYellowLeft4;
        let cfg = FlashingConfig {
            window: 10,
            ..Default::default()
        };
        let mut latch = FlashingLatch::default();
        let mut h = classes(y, "1010101010");
        assert_eq!(latch.update(&h, &cfg), Some(y));
        // 4 on / 10: below duty_min but inside the release band
        h.extend(classes(y, "00"));
        assert!(detect_flashing(&h, &cfg).is_none());
        assert_eq!(latch.update(&h, &cfg), Some(y));
        h.extend(std::iter::repeat_n(TlClass::RedLeft4, 10));
        assert_eq!(latch.update(&h, &cfg), None);
    }

    #[test]
    fn short_steady_run_releases_at_once() {
        let y = TlClass::FlashingYellowLeft4;
        let r = TlClass::RedLeft4;
        let cfg = FlashingConfig::default();
        let mut latch = FlashingLatch::default();
        let mut h = classes(y, "10101010101010101010");
        assert_eq!(latch.update(&h, &cfg), Some(y));
        // a single foreign reading inside the flash is tolerated
        h.extend([r, TlClass::Off4]);
        assert_eq!(latch.update(&h, &cfg), Some(y));
        h.extend([r, r, r]);
        assert_eq!(latch.update(&h, &cfg), Some(y));
        // the majority is still the arrow; only the run ends the flash
        h.push(r);
        assert_eq!(latch.update(&h, &cfg), None);
    }

    #[test]
    fn only_the_flashing_arrow_can_flash() {
        let flashable: Vec<TlClass> = TlClass::ALL.into_iter().filter(|c| can_flash(*c)).collect();
        assert_eq!(flashable, vec![TlClass::FlashingYellowLeft4]);
        let cfg = FlashingConfig { window: 10, ..Default::default() };
        let mut latch = FlashingLatch::default();
        assert_eq!(latch.update(&classes(TlClass::RedLeft4, "1010101010"), &cfg), None);
    }

    /// Brute-force filtered posterior by summing over every hidden path.
    fn path_marginal(pi: &[f64], a: &DMatrix<f64>, evidence: &[Vec<f64>]) -> Vec<f64> {
        let n = pi.len();
        let steps = evidence.len();
        let mut out = vec![0.0; n];
        let mut path = vec![0usize; steps + 1];
        let total_paths = n.pow(steps as u32 + 1);
        for code in 0..total_paths {
            let mut c = code;
            for s in path.iter_mut() {
                *s = c % n;
                c /= n;
            }
            let mut p = pi[path[0]];
            for t in 1..=steps {
                p *= a[(path[t - 1], path[t])] * evidence[t - 1][path[t]];
            }
            out[path[steps]] += p;
        }
        let z: f64 = out.iter().sum();
        out.iter().map(|v| v / z).collect()
    }

    fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn forward_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=4);
            let steps = rng.random_range(1..=6);
            let pi = random_stochastic(&mut rng, n);
            let a = DMatrix::from_fn(n, n, |_, _| 0.0);
            let a = {
                let mut a = a;
                for i in 0..n {
                    let row = random_stochastic(&mut rng, n);
                    for j in 0..n {
                        a[(i, j)] = row[j];
                    }
                }
                a
            };
            let ev: Vec<Vec<f64>> = (0..steps)
                .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let mut b = BeliefState::new(DVector::from_vec(pi.clone()), 0.0);
            for e in &ev {
                b = forward_update(&b, &a, &DVector::from_vec(e.clone())).unwrap();
            }
            let oracle = path_marginal(&pi, &a, &ev);
            for j in 0..n {
                assert!((b.alpha[j] - oracle[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn belief_stays_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hmm = Hmm::with_defaults(TlType::FourArrow, 0.9, {
            let counts: Vec<Vec<u64>> = (0..5)
                .map(|i| (0..5).map(|j| if i == j { 90 } else { 3 }).collect())
                .collect();
            confusion_from_counts(&counts).unwrap()
        })
        .unwrap();
        let mut b = hmm.initial_belief(0.0);
        for step in 0..1_000_000 {
            let x = random_stochastic(&mut rng, 5);
            hmm.observe(&mut b, &x, step as f64).unwrap();
            assert!(b.is_valid(), "invalid belief at step {step}: {:?}", b.alpha);
        }
    }

    #[test]
    fn occlusion_prediction_keeps_argmax() {
        // from a one-hot belief the stay/advance odds after k blind steps
        // are p / ((1 - p) k), so p = 0.9 holds for k <= 9
        for (self_prob, steps) in [(0.9, 9), (0.98, 15)] {
            for t in TlType::ALL {
                let n = t.num_states();
                let hmm = Hmm::with_defaults(t, self_prob, ConfusionModel::identity(n)).unwrap();
                for start in 0..n {
                    let mut alpha = DVector::zeros(n);
                    alpha[start] = 1.0;
                    let mut b = BeliefState::new(alpha, 0.0);
                    let uniform = vec![1.0 / n as f64; n];
                    for _ in 0..steps {
                        hmm.observe(&mut b, &uniform, 0.0).unwrap();
                        assert_eq!(hmm.map_state(&b), t.valid_states()[start]);
                    }
                }
            }
        }
    }

    #[test]
    fn evidence_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let counts: Vec<Vec<u64>> = (0..3)
            .map(|_| (0..3).map(|_| rng.random_range(1..50)).collect())
            .collect();
        let cm = confusion_from_counts(&counts).unwrap();
        for _ in 0..100 {
            let x1 = random_stochastic(&mut rng, 3);
            let x2 = random_stochastic(&mut rng, 3);
            let a: f64 = rng.random_range(0.0..1.0);
            let mix: Vec<f64> = x1
                .iter()
                .zip(&x2)
                .map(|(p, q)| a * p + (1.0 - a) * q)
                .collect();
            let lhs = build_evidence(&cm, &mix).unwrap();
            let rhs = build_evidence(&cm, &x1).unwrap() * a
                + build_evidence(&cm, &x2).unwrap() * (1.0 - a);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
        }
    }
}
