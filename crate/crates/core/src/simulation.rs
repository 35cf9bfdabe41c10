//! Episode loop: layer classification, bandwidth split, agent decisions,
//! access-point bookkeeping, policy merge and mobility.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    decay_epsilon, features_model1, features_model2, merge_policies, reward, select_action, td_update, Action,
    FeatureVector, LearningConfig, Normalizers, PolicyWeights, RewardInputs,
};
use crate::config::{RadioConfig, SimConfig};
use crate::environment::{neighbors_within, Scene, TopologySnapshot};
use crate::error::{Error, Result};
use crate::link_budget::{self, max_range, required_snr_db, LinkBudgetParams, Solution};
use crate::matching::{max_coverage_assignment, Edge};
use crate::metrics::EpisodeMetrics;

const MOBILITY_STREAM: u64 = 1;
const LEARNING_STREAM: u64 = 2;

/// Link-allocation scheme driving an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Learning agents using distance and queue features.
    Model1,
    /// Learning agents using neighbour count and queue features.
    Model2,
    /// Optimal assignment with full topology knowledge.
    Central,
    /// Direct AP coverage only.
    NoD2d,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Central, Model::Model1, Model::Model2, Model::NoD2d];

    pub fn name(self) -> &'static str {
        match self {
            Model::Model1 => "model1",
            Model::Model2 => "model2",
            Model::Central => "central",
            Model::NoD2d => "no_d2d",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, Model::Model1 | Model::Model2)
    }
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "model1" => Ok(Model::Model1),
            "model2" => Ok(Model::Model2),
            "central" => Ok(Model::Central),
            "no_d2d" => Ok(Model::NoD2d),
            other => Err(format!(
                "unknown model {other:?} (expected model1, model2, central or no_d2d)"
            )),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Radio quantities every episode needs, resolved once per run.
#[derive(Debug, Clone)]
pub struct RadioContext {
    pub params: LinkBudgetParams,
    pub total_bandwidth: f64,
    /// d_0: relay and neighbourhood radius.
    pub service_range: f64,
    /// Layer 1 received-power threshold.
    pub gamma0_dbm: f64,
    pub cap_relay_by_ap_leg: bool,
}

impl RadioContext {
    pub fn from_config(radio: &RadioConfig) -> Result<Self> {
        let params = radio.link_params()?;
        let service_range = match max_range(&params, radio.reference_bandwidth_hz, radio.target_spectral_efficiency)? {
            Solution::Feasible(d) if d.is_finite() => d,
            _ => {
                return Err(Error::Config(format!(
                    "radio: {} bps/Hz is unreachable at any distance with these parameters",
                    radio.target_spectral_efficiency
                )))
            }
        };
        let gamma0_dbm = radio.gamma0_dbm.unwrap_or_else(|| {
            params.noise_density_dbm_hz
                + 10.0 * radio.reference_bandwidth_hz.log10()
                + required_snr_db(radio.target_spectral_efficiency)
        });
        Ok(Self {
            params,
            total_bandwidth: radio.total_bandwidth_hz(),
            service_range,
            gamma0_dbm,
            cap_relay_by_ap_leg: radio.cap_relay_by_ap_leg,
        })
    }

    /// Rate of the relay link `agent -> target` on a `bandwidth` slice.
    pub fn relay_rate(&self, snapshot: &TopologySnapshot, agent: usize, target: usize, bandwidth: f64) -> Result<f64> {
        let rate = link_budget::capacity(&self.params, bandwidth, snapshot.distance(agent, target))?;
        let ap_distance = snapshot.ap_distance[agent];
        if self.cap_relay_by_ap_leg && ap_distance > 0.0 {
            return Ok(rate.min(link_budget::capacity(&self.params, bandwidth, ap_distance)?));
        }
        Ok(rate)
    }

    pub fn normalizers(&self, learning: &LearningConfig) -> Normalizers {
        Normalizers {
            max_distance: self.service_range,
            neighbor_cap: learning.neighbor_cap,
            ..Normalizers::default()
        }
    }
}

/// Equal split of the band among Layer 1 devices; `None` without agents.
pub fn partition_bandwidth(total: f64, layer1_count: usize) -> Option<f64> {
    (layer1_count > 0).then(|| total / layer1_count as f64)
}

/// Relay candidates of `agent`: Layer 2 devices within `range` and in line of
/// sight, nearest first.
pub fn candidates(snapshot: &TopologySnapshot, agent: usize, range: f64) -> Vec<usize> {
    let mut c: Vec<usize> = snapshot
        .layer2
        .iter()
        .copied()
        .filter(|&j| snapshot.has_los(agent, j) && snapshot.distance(agent, j) <= range)
        .collect();
    c.sort_by(|&a, &b| {
        snapshot
            .distance(agent, a)
            .total_cmp(&snapshot.distance(agent, b))
            .then(a.cmp(&b))
    });
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub agent: usize,
    pub target: usize,
    pub rate: f64,
}

/// One agent decision as seen by the access point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub agent: usize,
    pub target: usize,
    pub action: Action,
    pub already_covered: bool,
    pub link_rate: f64,
    pub system_rate: f64,
    pub reward: f64,
}

impl DecisionRecord {
    pub fn reward_inputs(&self) -> RewardInputs {
        RewardInputs {
            action: self.action,
            already_covered: self.already_covered,
            link_rate: self.link_rate,
            system_rate: self.system_rate,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub snapshot: TopologySnapshot,
    /// M_R, in the order links were opened.
    pub links: Vec<Link>,
    /// c_j indexed by device id; only Layer 2 entries can be set.
    pub coverage_flags: Vec<bool>,
    /// `(agent id, cumulative reward)` in ascending id order.
    pub agent_rewards: Vec<(usize, f64)>,
    /// B_i, absent when there are no agents.
    pub per_agent_bandwidth: Option<f64>,
    pub decisions: Vec<DecisionRecord>,
}

impl EpisodeState {
    pub fn new(snapshot: TopologySnapshot, per_agent_bandwidth: Option<f64>) -> Self {
        let n = snapshot.device_count;
        let agent_rewards = snapshot.layer1.iter().map(|&i| (i, 0.0)).collect();
        Self {
            snapshot,
            links: Vec::new(),
            coverage_flags: vec![false; n],
            agent_rewards,
            per_agent_bandwidth,
            decisions: Vec::new(),
        }
    }

    pub fn covered_layer2(&self) -> usize {
        self.coverage_flags.iter().filter(|&&c| c).count()
    }

    /// `(|M_F| + covered Layer 2) / |M|`.
    pub fn coverage(&self) -> f64 {
        let n = self.snapshot.device_count;
        if n == 0 {
            return 0.0;
        }
        (self.snapshot.layer1.len() + self.covered_layer2()) as f64 / n as f64
    }

    pub fn total_reward(&self) -> f64 {
        self.agent_rewards.iter().map(|(_, r)| r).sum()
    }

    pub fn link_count(&self, agent: usize) -> usize {
        self.links.iter().filter(|l| l.agent == agent).count()
    }

    pub fn metrics(&self, episode: u32, epsilon: f64) -> EpisodeMetrics {
        let layer1 = self.snapshot.layer1.len();
        let total = self.total_reward();
        EpisodeMetrics {
            episode,
            coverage: self.coverage(),
            total_reward: total,
            mean_reward_per_agent: if layer1 > 0 { total / layer1 as f64 } else { 0.0 },
            layer1_count: layer1,
            layer2_count: self.snapshot.layer2.len(),
            link_count: self.links.len(),
            epsilon,
        }
    }

    fn open_link(&mut self, link: Link) {
        self.coverage_flags[link.target] = true;
        self.links.push(link);
    }

    /// R_0: mean throughput of the links open so far.
    fn system_rate(&self) -> f64 {
        if self.links.is_empty() {
            0.0
        } else {
            self.links.iter().map(|l| l.rate).sum::<f64>() / self.links.len() as f64
        }
    }
}

/// Which feature set the learning agents observe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureModel {
    Distance,
    Neighbors,
}

/// Shared policy state of the learning models.
#[derive(Debug, Clone)]
pub struct Learner {
    /// Global weights broadcast to every agent at the start of an episode.
    pub weights: PolicyWeights,
    pub features: FeatureModel,
    pub config: LearningConfig,
}

impl Learner {
    pub const FEATURE_ROWS: usize = 3;

    pub fn new(features: FeatureModel, config: LearningConfig) -> Self {
        Self {
            weights: PolicyWeights::zeros(Self::FEATURE_ROWS),
            features,
            config,
        }
    }

    fn observe(
        &self,
        snapshot: &TopologySnapshot,
        agent: usize,
        target: usize,
        remaining_queue: u32,
        neighbor_count: usize,
        norm: &Normalizers,
    ) -> Result<FeatureVector> {
        match self.features {
            FeatureModel::Distance => features_model1(snapshot.distance(agent, target), remaining_queue, norm),
            FeatureModel::Neighbors => features_model2(neighbor_count, remaining_queue, norm),
        }
    }
}

/// One learning episode over a classified snapshot.
///
/// Agents act in a shuffled order. For each relay candidate an agent picks an
/// action, the access point scores it against the coverage flag as it stood
/// before the action, and the agent takes a TD step. At the end the
/// best-rewarded agent's weights become the global policy.
pub fn run_episode<R: Rng + ?Sized>(
    snapshot: TopologySnapshot,
    learner: &mut Learner,
    radio: &RadioContext,
    epsilon: f64,
    rng: &mut R,
) -> Result<EpisodeState> {
    let bandwidth = partition_bandwidth(radio.total_bandwidth, snapshot.layer1.len());
    let mut state = EpisodeState::new(snapshot, bandwidth);
    let Some(bandwidth) = bandwidth else {
        return Ok(state);
    };
    let norm = radio.normalizers(&learner.config);
    let normalizer = learner.config.reward_normalizer_bps;

    let mut order = state.snapshot.layer1.clone();
    order.shuffle(rng);

    let mut local: Vec<(usize, PolicyWeights, f64)> = Vec::with_capacity(order.len());
    for agent in order {
        let mut theta = learner.weights.clone();
        let mut total = 0.0;
        let capacity = state.snapshot.queue_capacity[agent];
        let mut used = 0u32;
        let cands = candidates(&state.snapshot, agent, radio.service_range);
        let neighbors = match learner.features {
            FeatureModel::Neighbors => neighbors_within(agent, &state.snapshot, radio.service_range)?,
            FeatureModel::Distance => 0,
        };

        for (k, &target) in cands.iter().enumerate() {
            if used >= capacity {
                break;
            }
            let phi = learner.observe(&state.snapshot, agent, target, capacity - used, neighbors, &norm)?;
            let action = select_action(&theta, &phi, epsilon, learner.config.greedy_prob_is_epsilon, rng);
            let already_covered = state.coverage_flags[target];
            let mut link_rate = 0.0;
            if action == Action::Relay {
                link_rate = radio.relay_rate(&state.snapshot, agent, target, bandwidth)?;
                state.open_link(Link {
                    agent,
                    target,
                    rate: link_rate,
                });
                used += 1;
            }
            let inputs = RewardInputs {
                action,
                already_covered,
                link_rate,
                system_rate: state.system_rate(),
            };
            let r = reward(&inputs, normalizer);

            let next = match cands.get(k + 1) {
                Some(&nt) if used < capacity => {
                    Some(learner.observe(&state.snapshot, agent, nt, capacity - used, neighbors, &norm)?)
                }
                _ => None,
            };
            td_update(&mut theta, &phi, action, r, next.as_ref(), &learner.config)?;
            total += r;
            state.decisions.push(DecisionRecord {
                agent,
                target,
                action,
                already_covered,
                link_rate,
                system_rate: inputs.system_rate,
                reward: r,
            });
        }
        local.push((agent, theta, total));
    }

    local.sort_by_key(|(id, _, _)| *id);
    for (slot, (_, _, total)) in state.agent_rewards.iter_mut().zip(&local) {
        slot.1 = *total;
    }
    let policies: Vec<(PolicyWeights, f64)> = local.into_iter().map(|(_, w, r)| (w, r)).collect();
    learner.weights = merge_policies(&policies)?;
    Ok(state)
}

/// Optimal relay assignment with full topology knowledge: maximise covered
/// Layer 2 devices, then total relay rate, under queue capacity, range and
/// line-of-sight limits.
pub fn baseline_central(snapshot: TopologySnapshot, radio: &RadioContext) -> Result<EpisodeState> {
    let bandwidth = partition_bandwidth(radio.total_bandwidth, snapshot.layer1.len());
    let mut state = EpisodeState::new(snapshot, bandwidth);
    let Some(bandwidth) = bandwidth else {
        return Ok(state);
    };
    let snap = &state.snapshot;
    let mut edges = Vec::new();
    for (ai, &agent) in snap.layer1.iter().enumerate() {
        for &target in &candidates(snap, agent, radio.service_range) {
            let ti = snap.layer2.binary_search(&target).expect("candidate is layer 2");
            edges.push(Edge {
                agent: ai,
                target: ti,
                weight: radio.relay_rate(snap, agent, target, bandwidth)?,
            });
        }
    }
    let capacities: Vec<u32> = snap.layer1.iter().map(|&a| snap.queue_capacity[a]).collect();
    let assignment = max_coverage_assignment(&capacities, snap.layer2.len(), &edges);
    let links: Vec<Link> = assignment
        .pairs
        .iter()
        .map(|&(ai, ti)| {
            let e = edges
                .iter()
                .find(|e| e.agent == ai && e.target == ti)
                .expect("assigned pair is an edge");
            Link {
                agent: snap.layer1[ai],
                target: snap.layer2[ti],
                rate: e.weight,
            }
        })
        .collect();
    for l in links {
        state.open_link(l);
    }
    Ok(state)
}

/// Direct coverage only: no relays and no rewards.
pub fn baseline_no_d2d(snapshot: TopologySnapshot, radio: &RadioContext) -> EpisodeState {
    let bandwidth = partition_bandwidth(radio.total_bandwidth, snapshot.layer1.len());
    EpisodeState::new(snapshot, bandwidth)
}

/// Full result of one simulated episode.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub state: EpisodeState,
    pub metrics: EpisodeMetrics,
}

/// A seeded run of one model over a mobile scene.
///
/// Mobility and learning draw from separate random streams, so every model
/// sees the same device trajectories for a given seed.
pub struct Simulation {
    model: Model,
    radio: RadioContext,
    scene: Scene,
    learner: Option<Learner>,
    epsilon0: f64,
    dt: f64,
    episodes: u32,
    episode: u32,
    mobility_rng: ChaCha8Rng,
    learning_rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let radio = RadioContext::from_config(&config.radio)?;
        let mut mobility_rng = ChaCha8Rng::seed_from_u64(config.simulation.seed);
        mobility_rng.set_stream(MOBILITY_STREAM);
        let mut learning_rng = ChaCha8Rng::seed_from_u64(config.simulation.seed);
        learning_rng.set_stream(LEARNING_STREAM);
        let scene = Scene::generate(&config.scene, &mut mobility_rng)?;
        let model = config.simulation.model;
        let learner = match model {
            Model::Model1 => Some(Learner::new(FeatureModel::Distance, config.learning.clone())),
            Model::Model2 => Some(Learner::new(FeatureModel::Neighbors, config.learning.clone())),
            Model::Central | Model::NoD2d => None,
        };
        Ok(Self {
            model,
            radio,
            scene,
            learner,
            epsilon0: config.learning.epsilon,
            dt: config.simulation.dt_s,
            episodes: config.simulation.episodes,
            episode: 0,
            mobility_rng,
            learning_rng,
        })
    }

    /// Start the learners from `weights` instead of zeros.
    pub fn with_weights(mut self, weights: PolicyWeights) -> Result<Self> {
        if weights.rows() != Learner::FEATURE_ROWS {
            return Err(Error::Contract(format!(
                "warm-start weights need {} rows, got {}",
                Learner::FEATURE_ROWS,
                weights.rows()
            )));
        }
        if let Some(l) = self.learner.as_mut() {
            l.weights = weights;
        }
        Ok(self)
    }

    pub fn radio(&self) -> &RadioContext {
        &self.radio
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn learner(&self) -> Option<&Learner> {
        self.learner.as_ref()
    }

    pub fn episodes_done(&self) -> u32 {
        self.episode
    }

    /// Classify, allocate, learn, then move the devices.
    pub fn step(&mut self) -> Result<EpisodeOutcome> {
        let snapshot = self.scene.classify(&self.radio.params, self.radio.gamma0_dbm)?;
        let (state, epsilon) = match (self.model, self.learner.as_mut()) {
            (Model::Model1 | Model::Model2, Some(learner)) => {
                let eps = decay_epsilon(self.epsilon0, self.episode, &learner.config);
                (
                    run_episode(snapshot, learner, &self.radio, eps, &mut self.learning_rng)?,
                    eps,
                )
            }
            (Model::Central, _) => (baseline_central(snapshot, &self.radio)?, 0.0),
            _ => (baseline_no_d2d(snapshot, &self.radio), 0.0),
        };
        let metrics = state.metrics(self.episode, epsilon);
        self.scene.step(self.dt, &mut self.mobility_rng);
        self.episode += 1;
        Ok(EpisodeOutcome { state, metrics })
    }
}

impl Iterator for Simulation {
    type Item = Result<EpisodeMetrics>;

    fn next(&mut self) -> Option<Self::Item> {
        (self.episode < self.episodes).then(|| self.step().map(|o| o.metrics))
    }
}

/// Stream of per-episode metrics for `config`.
pub fn run_simulation(config: &SimConfig) -> Result<Simulation> {
    Simulation::new(config)
}

/// Run to completion and collect the metrics.
pub fn simulate(config: &SimConfig) -> Result<Vec<EpisodeMetrics>> {
    run_simulation(config)?.collect()
}
