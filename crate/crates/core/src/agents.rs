//! Linear Q-learning agents.
//!
//! Each agent scores the two actions (ignore / relay) for one Layer 2 device
//! at a time with a shared linear Q-function `Q(s, a) = phi(s) . theta[:, a]`.
//! The access point hands out rewards and, at the end of an episode, picks
//! the best-rewarded agent's weights as the global policy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::MAX_QUEUE_CAPACITY;
use crate::error::{Error, Result};

/// Relay decision for one Layer 2 device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Ignore = 0,
    Relay = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Ignore, Action::Relay];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Ignore
        } else {
            Action::Relay
        }
    }
}

/// `[1, f_1, ..., f_m]`; element 0 is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(features: &[f64]) -> Result<Self> {
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite feature {bad}")));
        }
        let mut v = Vec::with_capacity(features.len() + 1);
        v.push(1.0);
        v.extend_from_slice(features);
        Ok(Self(v))
    }

    /// Build from a full vector whose first element must be the bias 1.0.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&1.0) {
            return Err(Error::Contract("feature vector must start with bias 1.0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite feature".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Scale factors that map raw features to roughly `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizers {
    /// Relay range d_0 in meters.
    pub max_distance: f64,
    pub queue_max: u32,
    pub neighbor_cap: u32,
}

impl Default for Normalizers {
    fn default() -> Self {
        Self {
            max_distance: 3.0,
            queue_max: MAX_QUEUE_CAPACITY,
            neighbor_cap: 10,
        }
    }
}

/// Location-based features: distance to the candidate and free queue slots.
pub fn features_model1(distance: f64, remaining_queue: u32, norm: &Normalizers) -> Result<FeatureVector> {
    if !(distance > 0.0) {
        return Err(Error::domain("distance", distance));
    }
    FeatureVector::new(&[
        distance / norm.max_distance,
        f64::from(remaining_queue) / f64::from(norm.queue_max),
    ])
}

/// Neighbourhood features: nearby agents (capped) and free queue slots.
pub fn features_model2(neighbor_count: usize, remaining_queue: u32, norm: &Normalizers) -> Result<FeatureVector> {
    let cap = f64::from(norm.neighbor_cap);
    FeatureVector::new(&[
        (neighbor_count as f64).min(cap) / cap,
        f64::from(remaining_queue) / f64::from(norm.queue_max),
    ])
}

/// Weight matrix of the linear Q-function, `(m + 1) x 2`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyWeights {
    rows: usize,
    values: Vec<f64>,
}

/// Flat JSON form of [`PolicyWeights`].
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyWeightsFile {
    shape: [usize; 2],
    values: Vec<f64>,
}

impl PolicyWeights {
    pub const ACTIONS: usize = 2;

    pub fn zeros(rows: usize) -> Self {
        Self {
            rows,
            values: vec![0.0; rows * Self::ACTIONS],
        }
    }

    /// Build from per-action columns.
    pub fn from_columns(ignore: &[f64], relay: &[f64]) -> Result<Self> {
        if ignore.len() != relay.len() || ignore.is_empty() {
            return Err(Error::Contract(
                "weight columns must have equal, non-zero length".into(),
            ));
        }
        let values = ignore.iter().zip(relay).flat_map(|(&a, &b)| [a, b]).collect();
        Self::from_row_major(ignore.len(), values)
    }

    pub fn from_row_major(rows: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * Self::ACTIONS {
            return Err(Error::Contract(format!(
                "expected {} weights for {rows} rows, got {}",
                rows * Self::ACTIONS,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite weight".into()));
        }
        Ok(Self { rows, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn get(&self, row: usize, action: Action) -> f64 {
        self.values[row * Self::ACTIONS + action.index()]
    }

    pub fn column(&self, action: Action) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, action)).collect()
    }

    pub fn row_major(&self) -> &[f64] {
        &self.values
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PolicyWeightsFile {
            shape: [self.rows, Self::ACTIONS],
            values: self.values.clone(),
        })
        .expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PolicyWeightsFile =
            serde_json::from_str(text).map_err(|e| Error::Contract(format!("policy weights: {e}")))?;
        if file.shape[1] != Self::ACTIONS {
            return Err(Error::Contract(format!(
                "policy weights need {} columns",
                Self::ACTIONS
            )));
        }
        Self::from_row_major(file.shape[0], file.values)
    }
}

/// `phi . theta[:, action]`. Panics if the shapes disagree.
pub fn q_value(weights: &PolicyWeights, features: &FeatureVector, action: Action) -> f64 {
    assert_eq!(
        weights.rows(),
        features.len(),
        "feature length does not match weight rows"
    );
    features
        .values()
        .iter()
        .enumerate()
        .map(|(r, &f)| f * weights.get(r, action))
        .sum()
}

/// Greedy action; ties go to [`Action::Ignore`].
pub fn greedy_action(weights: &PolicyWeights, features: &FeatureVector) -> Action {
    let ignore = q_value(weights, features, Action::Ignore);
    let relay = q_value(weights, features, Action::Relay);
    if relay > ignore {
        Action::Relay
    } else {
        Action::Ignore
    }
}

fn max_q(weights: &PolicyWeights, features: &FeatureVector) -> f64 {
    q_value(weights, features, Action::Ignore).max(q_value(weights, features, Action::Relay))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningConfig {
    /// alpha
    pub learning_rate: f64,
    /// beta
    pub discount: f64,
    /// Initial epsilon.
    pub epsilon: f64,
    pub epsilon_decay_factor: f64,
    pub decay_period_episodes: u32,
    /// R* in bits per second.
    pub reward_normalizer_bps: f64,
    /// When true, epsilon is the probability of the greedy branch and
    /// `1 - epsilon` the probability of a uniform random action.
    pub greedy_prob_is_epsilon: bool,
    pub neighbor_cap: u32,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            discount: 0.7,
            epsilon: 0.5,
            epsilon_decay_factor: 0.9,
            decay_period_episodes: 50,
            reward_normalizer_bps: 10e9,
            greedy_prob_is_epsilon: true,
            neighbor_cap: 10,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(format!(
                "learning.learning_rate must be in (0, 1], got {}",
                self.learning_rate
            ));
        }
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return Err(format!("learning.discount must be in [0, 1), got {}", self.discount));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(format!("learning.epsilon must be in [0, 1], got {}", self.epsilon));
        }
        if !(self.epsilon_decay_factor > 0.0 && self.epsilon_decay_factor <= 1.0) {
            return Err(format!(
                "learning.epsilon_decay_factor must be in (0, 1], got {}",
                self.epsilon_decay_factor
            ));
        }
        if self.decay_period_episodes == 0 {
            return Err("learning.decay_period_episodes must be at least 1".into());
        }
        if !(self.reward_normalizer_bps > 0.0) {
            return Err(format!(
                "learning.reward_normalizer_bps must be positive, got {}",
                self.reward_normalizer_bps
            ));
        }
        if self.neighbor_cap == 0 {
            return Err("learning.neighbor_cap must be at least 1".into());
        }
        Ok(())
    }
}

/// Epsilon-greedy choice following the configured branch assignment.
pub fn select_action<R: Rng + ?Sized>(
    weights: &PolicyWeights,
    features: &FeatureVector,
    epsilon: f64,
    greedy_prob_is_epsilon: bool,
    rng: &mut R,
) -> Action {
    let greedy_prob = if greedy_prob_is_epsilon { epsilon } else { 1.0 - epsilon };
    if rng.random::<f64>() < greedy_prob {
        greedy_action(weights, features)
    } else if rng.random::<bool>() {
        Action::Relay
    } else {
        Action::Ignore
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub action: Action,
    /// Whether the target was already covered when the decision was made.
    pub already_covered: bool,
    /// Private rate R_ij of the relay link (bits/s).
    pub link_rate: f64,
    /// Public system rate R_0 (bits/s).
    pub system_rate: f64,
}

/// Four-case reward balancing under- and over-coverage.
pub fn reward(inputs: &RewardInputs, normalizer: f64) -> f64 {
    let RewardInputs {
        action,
        already_covered,
        link_rate,
        system_rate,
    } = *inputs;
    match (action, already_covered) {
        (Action::Relay, false) => (link_rate + system_rate) / normalizer,
        (Action::Relay, true) => -(link_rate + system_rate) / normalizer,
        (Action::Ignore, false) => system_rate / normalizer,
        (Action::Ignore, true) => -system_rate / normalizer,
    }
}

/// One TD(0) step on the taken action's column.
///
/// `next` is the following state's features, or `None` when the agent has no
/// further decisions this episode (terminal, bootstrap value 0).
pub fn td_update(
    weights: &mut PolicyWeights,
    features: &FeatureVector,
    action: Action,
    reward: f64,
    next: Option<&FeatureVector>,
    config: &LearningConfig,
) -> Result<f64> {
    let bootstrap = next.map_or(0.0, |n| max_q(weights, n));
    let td_error = reward + config.discount * bootstrap - q_value(weights, features, action);
    if !td_error.is_finite() {
        return Err(Error::Training(format!("TD error is {td_error}")));
    }
    let step = config.learning_rate * td_error;
    for (r, &f) in features.values().iter().enumerate() {
        let idx = r * PolicyWeights::ACTIONS + action.index();
        weights.values[idx] += step * f;
    }
    if weights.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("weights diverged".into()));
    }
    Ok(td_error)
}

/// Index of the agent whose weights become the global policy: highest
/// cumulative reward, lowest position on ties.
pub fn best_policy_index(rewards: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rewards.into_iter().enumerate() {
        match best {
            Some((_, b)) if r <= b => {}
            _ => best = Some((i, r)),
        }
    }
    best.map(|(i, _)| i)
}

/// Weights of the best-rewarded agent. Entries are `(weights, cumulative
/// reward)` in ascending agent id order.
pub fn merge_policies(policies: &[(PolicyWeights, f64)]) -> Result<PolicyWeights> {
    best_policy_index(policies.iter().map(|(_, r)| *r))
        .map(|i| policies[i].0.clone())
        .ok_or_else(|| Error::Contract("merge_policies needs at least one policy".into()))
}

/// `epsilon0 * factor^floor(episode / period)`.
pub fn decay_epsilon(epsilon0: f64, episode: u32, config: &LearningConfig) -> f64 {
    let steps = episode / config.decay_period_episodes;
    epsilon0 * config.epsilon_decay_factor.powi(steps as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::from_raw(v.to_vec()).unwrap()
    }

    #[test]
    fn model1_scaling() {
        let n = Normalizers::default();
        assert_eq!(features_model1(3.0, 5, &n).unwrap(), fv(&[1.0, 1.0, 1.0]));
        assert_eq!(features_model1(1.5, 0, &n).unwrap(), fv(&[1.0, 0.5, 0.0]));
        let f = features_model1(0.6, 2, &n).unwrap();
        assert_abs_diff_eq!(f.values()[1], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(f.values()[2], 0.4, epsilon = 1e-15);
        assert!(features_model1(0.0, 2, &n).is_err());
    }

    #[test]
    fn model2_scaling() {
        let n = Normalizers::default();
        assert_eq!(features_model2(0, 5, &n).unwrap(), fv(&[1.0, 0.0, 1.0]));
        assert_eq!(features_model2(10, 0, &n).unwrap(), fv(&[1.0, 1.0, 0.0]));
        assert_eq!(features_model2(25, 0, &n).unwrap(), fv(&[1.0, 1.0, 0.0]));
        let f = features_model2(4, 3, &n).unwrap();
        assert_abs_diff_eq!(f.values()[1], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(f.values()[2], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn feature_vector_requires_bias() {
        assert!(FeatureVector::from_raw(vec![0.5, 1.0]).is_err());
        assert!(FeatureVector::new(&[f64::NAN]).is_err());
    }

    #[test]
    fn q_value_cases() {
        let zero = PolicyWeights::zeros(3);
        let phi = fv(&[1.0, 0.5, 1.0]);
        assert_eq!(q_value(&zero, &phi, Action::Ignore), 0.0);
        assert_eq!(q_value(&zero, &phi, Action::Relay), 0.0);

        let w = PolicyWeights::from_columns(&[7.0, 0.0, 0.0], &[1.0, 2.0, -1.0]).unwrap();
        assert_eq!(q_value(&w, &phi, Action::Relay), 1.0);
        assert_eq!(q_value(&w, &fv(&[1.0, 0.0, 0.0]), Action::Ignore), 7.0);
    }

    #[test]
    #[should_panic(expected = "feature length")]
    fn q_value_shape_mismatch_panics() {
        q_value(&PolicyWeights::zeros(4), &fv(&[1.0, 0.5]), Action::Relay);
    }

    #[test]
    fn epsilon_one_is_always_greedy() {
        let w = PolicyWeights::from_columns(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        let phi = fv(&[1.0, 0.3, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(select_action(&w, &phi, 1.0, true, &mut rng), Action::Relay);
        }
    }

    #[test]
    fn ties_break_to_ignore() {
        let w = PolicyWeights::zeros(3);
        let phi = fv(&[1.0, 0.3, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(select_action(&w, &phi, 1.0, true, &mut rng), Action::Ignore);
        }
    }

    #[test]
    fn epsilon_zero_is_uniform() {
        let w = PolicyWeights::from_columns(&[0.0, 0.0, 0.0], &[5.0, 0.0, 0.0]).unwrap();
        let phi = fv(&[1.0, 0.3, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let relays = (0..n)
            .filter(|_| select_action(&w, &phi, 0.0, true, &mut rng) == Action::Relay)
            .count() as f64;
        let expected = n as f64 / 2.0;
        let chi2 = 2.0 * (relays - expected).powi(2) / expected;
        // chi-square, 1 dof, p = 0.001
        assert!(chi2 < 10.83, "chi2 = {chi2}");
    }

    #[test]
    fn swapped_branches_follow_standard_convention() {
        let w = PolicyWeights::from_columns(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        let phi = fv(&[1.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            assert_eq!(select_action(&w, &phi, 0.0, false, &mut rng), Action::Relay);
        }
    }

    #[test]
    fn reward_cases() {
        let base = RewardInputs {
            action: Action::Relay,
            already_covered: false,
            link_rate: 2e9,
            system_rate: 3e9,
        };
        assert_abs_diff_eq!(reward(&base, 10e9), 0.5, epsilon = 1e-15);
        let over = RewardInputs {
            already_covered: true,
            ..base
        };
        assert_abs_diff_eq!(reward(&over, 10e9), -0.5, epsilon = 1e-15);
        let idle_uncovered = RewardInputs {
            action: Action::Ignore,
            ..base
        };
        assert_abs_diff_eq!(reward(&idle_uncovered, 10e9), 0.3, epsilon = 1e-15);
        let idle_covered = RewardInputs {
            action: Action::Ignore,
            already_covered: true,
            ..base
        };
        assert_abs_diff_eq!(reward(&idle_covered, 10e9), -0.3, epsilon = 1e-15);
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let cfg = LearningConfig {
            learning_rate: 0.0,
            ..LearningConfig::default()
        };
        let mut w = PolicyWeights::from_columns(&[0.1, 0.2, 0.3], &[0.4, 0.5, 0.6]).unwrap();
        let before = w.clone();
        td_update(&mut w, &fv(&[1.0, 0.5, 0.5]), Action::Relay, 1.0, None, &cfg).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn hand_evaluated_update() {
        let cfg = LearningConfig::default();
        let mut w = PolicyWeights::zeros(3);
        let next = fv(&[1.0, 0.0, 0.0]);
        let td = td_update(&mut w, &fv(&[1.0, 0.5, 0.5]), Action::Relay, 1.0, Some(&next), &cfg).unwrap();
        assert_abs_diff_eq!(td, 1.0, epsilon = 1e-15);
        let col = w.column(Action::Relay);
        assert_abs_diff_eq!(col[0], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(col[1], 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(col[2], 0.005, epsilon = 1e-15);
        assert_eq!(w.column(Action::Ignore), vec![0.0; 3]);
    }

    #[test]
    fn non_finite_reward_is_a_training_fault() {
        let mut w = PolicyWeights::zeros(3);
        let r = td_update(
            &mut w,
            &fv(&[1.0, 0.5, 0.5]),
            Action::Relay,
            f64::NAN,
            None,
            &LearningConfig::default(),
        );
        assert!(matches!(r, Err(Error::Training(_))));
    }

    #[test]
    fn merge_picks_the_best_reward() {
        let a = PolicyWeights::from_columns(&[1.0], &[1.0]).unwrap();
        let b = PolicyWeights::from_columns(&[2.0], &[2.0]).unwrap();
        let c = PolicyWeights::from_columns(&[3.0], &[3.0]).unwrap();
        assert_eq!(merge_policies(&[(a.clone(), 0.0)]).unwrap(), a);
        let list = [(a.clone(), 2.0), (b.clone(), 5.0), (c.clone(), 1.0)];
        assert_eq!(merge_policies(&list).unwrap(), b);
        let tied = [(a.clone(), 1.0), (b, 1.0), (c, 1.0)];
        assert_eq!(merge_policies(&tied).unwrap(), a);
        assert!(matches!(merge_policies(&[]), Err(Error::Contract(_))));
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = LearningConfig::default();
        assert_eq!(decay_epsilon(0.5, 0, &cfg), 0.5);
        assert_eq!(decay_epsilon(0.5, 49, &cfg), 0.5);
        assert_abs_diff_eq!(decay_epsilon(0.5, 50, &cfg), 0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(decay_epsilon(0.5, 100, &cfg), 0.405, epsilon = 1e-15);
    }

    #[test]
    fn weights_json_round_trip() {
        let w = PolicyWeights::from_columns(&[0.25, -1.5, 3.0], &[1e-3, 0.0, -7.0]).unwrap();
        let text = w.to_json();
        assert_eq!(text, r#"{"shape":[3,2],"values":[0.25,0.001,-1.5,0.0,3.0,-7.0]}"#);
        assert_eq!(PolicyWeights::from_json(&text).unwrap(), w);
        assert!(PolicyWeights::from_json(r#"{"shape":[3,2],"values":[1.0]}"#).is_err());
        assert!(PolicyWeights::from_json(r#"{"shape":[1,3],"values":[1.0,2.0,3.0]}"#).is_err());
    }
}
