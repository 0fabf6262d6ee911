//! Q-learning, experience replay and Dyna agents.
//!
//! Every agent makes one Q-learning update per real transition at stepsize
//! `α`. Replay and Dyna agents then make `n` planning updates at `α/√n`,
//! drawing from a recency buffer of transitions (replay) or from a
//! search-control queue of states fed to a learned model (Dyna).
//!
//! Acting and planning use separate RNG streams, so an agent with `n = 0`
//! follows exactly the trajectory of plain Q-learning under the same seed.

mod linear;
mod tabular;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use linear::{LinearDynaModel, NORM_GUARD};
pub use tabular::{Edge, TabularKind, TabularModel, TabularSample};

use crate::buffer::{PriorityBuffer, Slot};
use crate::envs::Environment;
use crate::features::{greedy, select_action, FeatureMap, LinearQ, Phi};
use crate::kernels::Transition;
use crate::rem::{RemConfig, RemModel};
use crate::{derive_seed, rng_from_seed, SimRng};

/// How planning seeds are drawn and whether predecessors are added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Control {
    /// Uniform draws; stored priority is 1.
    Random,
    /// Proportional to `|δ| + ε_p`.
    Prioritized,
    /// Prioritized, plus predecessors of each planned state.
    Predecessors,
    /// Prioritized with predecessors, storing only states; the planning action
    /// is greedy.
    OnPolicy,
}

impl Control {
    fn prioritized(self) -> bool {
        self != Control::Random
    }

    fn predecessors(self) -> bool {
        matches!(self, Control::Predecessors | Control::OnPolicy)
    }

    fn suffix(self) -> &'static str {
        match self {
            Control::Random => "random",
            Control::Prioritized => "prioritized",
            Control::Predecessors => "pred",
            Control::OnPolicy => "onpolicy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Q,
    Er(Control),
    TabularDyna(Control),
    LinearDyna(Control),
    RemDyna(Control),
}

impl Variant {
    pub fn control(self) -> Option<Control> {
        match self {
            Variant::Q => None,
            Variant::Er(c) | Variant::TabularDyna(c) | Variant::LinearDyna(c) | Variant::RemDyna(c) => Some(c),
        }
    }

    pub fn is_dyna(self) -> bool {
        matches!(self, Variant::TabularDyna(_) | Variant::LinearDyna(_) | Variant::RemDyna(_))
    }

    /// Every valid variant.
    pub fn all() -> Vec<Variant> {
        let mut v = vec![Variant::Q];
        for c in [Control::Random, Control::Prioritized, Control::Predecessors] {
            v.push(Variant::Er(c));
        }
        for c in [Control::Random, Control::Prioritized, Control::Predecessors, Control::OnPolicy] {
            v.push(Variant::TabularDyna(c));
            v.push(Variant::LinearDyna(c));
            v.push(Variant::RemDyna(c));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown agent variant {0:?}")]
pub struct UnknownVariant(pub String);

impl FromStr for Variant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "Q" {
            return Ok(Variant::Q);
        }
        let err = || UnknownVariant(s.to_string());
        let (family, ctl) = s.split_once('_').ok_or_else(err)?;
        let control = match ctl {
            "random" => Control::Random,
            "prioritized" => Control::Prioritized,
            "pred" => Control::Predecessors,
            "onpolicy" => Control::OnPolicy,
            _ => return Err(err()),
        };
        match family {
            "ER" if control != Control::OnPolicy => Ok(Variant::Er(control)),
            "TabularDyna" => Ok(Variant::TabularDyna(control)),
            "LinearDyna" => Ok(Variant::LinearDyna(control)),
            "REMDyna" => Ok(Variant::RemDyna(control)),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (family, c) = match self {
            Variant::Q => return write!(f, "Q"),
            Variant::Er(c) => ("ER", c),
            Variant::TabularDyna(c) => ("TabularDyna", c),
            Variant::LinearDyna(c) => ("LinearDyna", c),
            Variant::RemDyna(c) => ("REMDyna", c),
        };
        write!(f, "{family}_{}", c.suffix())
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub variant: Variant,
    /// Planning (replay) updates per real step.
    pub n: usize,
    /// Predecessors drawn per planning update.
    pub f: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub epsilon_p: f64,
    /// Replay buffer / search-control queue size.
    pub capacity: usize,
    /// Stepsize of the linear model's regression updates.
    pub model_alpha: f64,
    pub tabular_model: TabularKind,
    /// Overrides the environment's initial action value.
    pub initial_value: Option<f64>,
    pub rem: RemConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Q,
            n: 5,
            f: 4,
            alpha: 0.1,
            epsilon: 0.1,
            epsilon_p: 1e-4,
            capacity: 1000,
            model_alpha: 0.125,
            tabular_model: TabularKind::Counts,
            initial_value: None,
            rem: RemConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("alpha must lie in (0, 1], got {0}")]
    Alpha(f64),
    #[error("epsilon must lie in [0, 1], got {0}")]
    Epsilon(f64),
    #[error("epsilon_p must be positive, got {0}")]
    EpsilonP(f64),
    #[error("capacity must be positive")]
    Capacity,
    #[error("model_alpha must be positive, got {0}")]
    ModelAlpha(f64),
    #[error("prototype budget must be positive")]
    Budget,
}

impl AgentConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ConfigError::Alpha(self.alpha));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(ConfigError::Epsilon(self.epsilon));
        }
        if !(self.epsilon_p > 0.0) {
            return Err(ConfigError::EpsilonP(self.epsilon_p));
        }
        if self.capacity == 0 {
            return Err(ConfigError::Capacity);
        }
        if !(self.model_alpha > 0.0) {
            return Err(ConfigError::ModelAlpha(self.model_alpha));
        }
        if self.rem.budget == 0 {
            return Err(ConfigError::Budget);
        }
        Ok(())
    }
}

/// What an agent needs to know about its environment.
#[derive(Debug, Clone)]
pub struct TaskSpace {
    pub state_dim: usize,
    pub num_actions: usize,
    pub features: FeatureMap,
    pub initial_value: f64,
}

impl TaskSpace {
    pub fn of(env: &dyn Environment) -> Self {
        Self {
            state_dim: env.state_dim(),
            num_actions: env.num_actions(),
            features: env.feature_map(),
            initial_value: env.initial_value(),
        }
    }
}

/// A planning seed: a state for tabular and kernel models, a feature vector
/// for the linear model.
#[derive(Debug, Clone, PartialEq)]
pub enum Seed {
    State(Vec<f64>),
    Features(Phi),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub seed: Seed,
    /// `None` for on-policy entries.
    pub a: Option<usize>,
}

/// A simulated transition in feature space.
#[derive(Debug, Clone)]
struct Simulated {
    phi: Phi,
    phi_next: Phi,
    r: f64,
    gamma: f64,
}

#[derive(Debug, Clone)]
pub enum Model {
    Tabular(TabularModel),
    Linear {
        model: LinearDynaModel,
        /// Discount used when bootstrapping from predicted features.
        gamma: f64,
    },
    Rem(Box<RemModel>),
}

impl Model {
    fn update(&mut self, features: &FeatureMap, t: &Transition) {
        match self {
            Model::Tabular(m) => {
                let k = features.active(&t.s)[0];
                let kn = features.active(&t.s_next)[0];
                m.update(k, &t.s, t.a, kn, &t.s_next, t.r, t.gamma);
            }
            Model::Linear { model, gamma } => {
                let phi = features.active(&t.s);
                let phi_next = features.active(&t.s_next);
                let target: &[usize] = if t.gamma > 0.0 { &phi_next } else { &[] };
                model.update(&phi, t.a, t.r, target, &phi_next);
                if t.gamma > 0.0 {
                    *gamma = t.gamma;
                }
            }
            Model::Rem(m) => m.update(t),
        }
    }

    fn phi_of(features: &FeatureMap, seed: &Seed) -> Phi {
        match seed {
            Seed::State(s) => Phi::Active(features.active(s)),
            Seed::Features(phi) => phi.clone(),
        }
    }

    fn simulate<R: Rng + ?Sized>(&self, features: &FeatureMap, seed: &Seed, a: usize, rng: &mut R) -> Option<Simulated> {
        let phi = Self::phi_of(features, seed);
        match (self, seed) {
            (Model::Tabular(m), Seed::State(s)) => {
                let key = features.active(s)[0];
                let o = m.sample(key, a, rng)?;
                Some(Simulated {
                    phi,
                    phi_next: Phi::Active(vec![o.next_key]),
                    r: o.r,
                    gamma: o.gamma,
                })
            }
            (Model::Linear { model, gamma }, _) => {
                let (next, r) = model.predict(&phi, a)?;
                Some(Simulated {
                    phi,
                    phi_next: Phi::Dense(next),
                    r,
                    gamma: *gamma,
                })
            }
            (Model::Rem(m), Seed::State(s)) => {
                let o = m.sample_forward(s, a, rng).ok()?;
                if !(o.r.is_finite() && o.gamma.is_finite()) {
                    return None;
                }
                Some(Simulated {
                    phi,
                    phi_next: Phi::Active(features.active(&o.s_next)),
                    r: o.r,
                    gamma: o.gamma,
                })
            }
            _ => None,
        }
    }

    /// Up to `f` `(predecessor, action)` pairs of `seed`; each draw picks an
    /// action uniformly among those with reverse support.
    fn predecessors<R: Rng + ?Sized>(
        &self,
        features: &FeatureMap,
        seed: &Seed,
        num_actions: usize,
        f: usize,
        rng: &mut R,
    ) -> Vec<(Seed, usize)> {
        let mut out = Vec::new();
        match (self, seed) {
            (Model::Tabular(m), Seed::State(s)) => {
                let key = features.active(s)[0];
                let acts = m.predecessor_actions(key);
                if acts.is_empty() {
                    return out;
                }
                for _ in 0..f {
                    let a = acts[rng.random_range(0..acts.len())];
                    if let Some(k) = m.sample_predecessor(key, a, rng) {
                        let st = m.state_of(k).expect("predecessor state recorded").to_vec();
                        out.push((Seed::State(st), a));
                    }
                }
            }
            (Model::Linear { model, .. }, _) => {
                let phi = Self::phi_of(features, seed);
                let preds: Vec<(usize, Vec<f64>)> = (0..num_actions)
                    .filter_map(|a| model.predict_reverse(&phi, a).map(|v| (a, v)))
                    .filter(|(_, v)| v.iter().any(|x| *x != 0.0))
                    .collect();
                if preds.is_empty() {
                    return out;
                }
                for _ in 0..f {
                    let (a, v) = &preds[rng.random_range(0..preds.len())];
                    out.push((Seed::Features(Phi::Dense(v.clone())), *a));
                }
            }
            (Model::Rem(m), Seed::State(s)) => {
                let mixes: Vec<_> = (0..num_actions)
                    .filter_map(|a| m.reverse_mixture(s, a).map(|mix| (a, mix)))
                    .collect();
                if mixes.is_empty() {
                    return out;
                }
                for _ in 0..f {
                    let (a, mix) = &mixes[rng.random_range(0..mixes.len())];
                    out.push((Seed::State(m.sample_from_reverse(mix, rng)), *a));
                }
            }
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Store {
    None,
    Replay {
        buffer: PriorityBuffer<Transition>,
        /// Slot of the previous transition, cleared at episode ends.
        prev: Option<Slot>,
    },
    Dyna {
        queue: PriorityBuffer<QueueEntry>,
        model: Model,
    },
}

/// `|δ| + ε_p` without touching the weights.
pub fn priority_of(q: &LinearQ, phi: &Phi, a: usize, r: f64, gamma: f64, phi_next: &Phi, epsilon_p: f64) -> f64 {
    q.td_error(phi, a, r, gamma, phi_next).abs() + epsilon_p
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    space: TaskSpace,
    q: LinearQ,
    act_rng: SimRng,
    plan_rng: SimRng,
    store: Store,
}

impl Agent {
    pub fn new(config: AgentConfig, env: &dyn Environment, seed: u64) -> Self {
        Self::with_space(config, TaskSpace::of(env), seed)
    }

    pub fn with_space(config: AgentConfig, space: TaskSpace, seed: u64) -> Self {
        config.validate().expect("invalid agent configuration");
        let init = config.initial_value.unwrap_or(space.initial_value);
        let q = LinearQ::new(space.num_actions, space.features.memory_size(), init);
        let store = match config.variant {
            Variant::Q => Store::None,
            Variant::Er(_) => Store::Replay {
                buffer: PriorityBuffer::new(config.capacity),
                prev: None,
            },
            v => {
                let model = match v {
                    Variant::TabularDyna(_) => Model::Tabular(TabularModel::new(config.tabular_model)),
                    Variant::LinearDyna(_) => Model::Linear {
                        model: LinearDynaModel::new(space.features.feature_count(), space.num_actions, config.model_alpha),
                        gamma: 0.0,
                    },
                    _ => Model::Rem(Box::new(RemModel::new(config.rem.clone(), space.state_dim, derive_seed(seed, 3)))),
                };
                Store::Dyna {
                    queue: PriorityBuffer::new(config.capacity),
                    model,
                }
            }
        };
        Self {
            config,
            space,
            q,
            act_rng: rng_from_seed(derive_seed(seed, 1)),
            plan_rng: rng_from_seed(derive_seed(seed, 2)),
            store,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn q(&self) -> &LinearQ {
        &self.q
    }

    pub fn q_mut(&mut self) -> &mut LinearQ {
        &mut self.q
    }

    pub fn features(&self) -> &FeatureMap {
        &self.space.features
    }

    pub fn model(&self) -> Option<&Model> {
        match &self.store {
            Store::Dyna { model, .. } => Some(model),
            _ => None,
        }
    }

    pub fn queue(&self) -> Option<&PriorityBuffer<QueueEntry>> {
        match &self.store {
            Store::Dyna { queue, .. } => Some(queue),
            _ => None,
        }
    }

    pub fn replay_buffer(&self) -> Option<&PriorityBuffer<Transition>> {
        match &self.store {
            Store::Replay { buffer, .. } => Some(buffer),
            _ => None,
        }
    }

    fn phi(&self, s: &[f64]) -> Phi {
        Phi::Active(self.space.features.active(s))
    }

    pub fn values(&self, s: &[f64]) -> Vec<f64> {
        self.q.values(&self.phi(s))
    }

    /// ε-greedy action.
    pub fn act(&mut self, s: &[f64]) -> usize {
        let v = self.values(s);
        select_action(&v, self.config.epsilon, &mut self.act_rng)
    }

    /// `|δ| + ε_p` for a real transition under the current weights.
    pub fn priority_of(&self, t: &Transition) -> f64 {
        priority_of(&self.q, &self.phi(&t.s), t.a, t.r, t.gamma, &self.phi(&t.s_next), self.config.epsilon_p)
    }

    /// Learn from one real transition, then plan.
    pub fn observe(&mut self, t: &Transition) {
        let phi = self.phi(&t.s);
        let phi_next = self.phi(&t.s_next);
        self.q.q_learning_update(&phi, t.a, t.r, t.gamma, &phi_next, self.config.alpha);

        let control = self.config.variant.control();
        let eps_p = self.config.epsilon_p;
        let p = self.q.td_error(&phi, t.a, t.r, t.gamma, &phi_next).abs() + eps_p;
        match &mut self.store {
            Store::None => return,
            Store::Replay { buffer, prev } => {
                let control = control.unwrap();
                let stored = if control.prioritized() { p } else { 1.0 };
                let slot = buffer.insert(t.clone(), stored);
                if control == Control::Predecessors {
                    if let Some(prev_slot) = prev.take() {
                        buffer.update_priority(prev_slot, p);
                    }
                }
                *prev = (t.gamma > 0.0).then_some(slot);
            }
            Store::Dyna { queue, model } => {
                model.update(&self.space.features, t);
                let control = control.unwrap();
                let seed = match model {
                    Model::Linear { .. } => Seed::Features(phi),
                    _ => Seed::State(t.s.clone()),
                };
                let a = (control != Control::OnPolicy).then_some(t.a);
                let stored = if control.prioritized() { p } else { 1.0 };
                queue.insert(QueueEntry { seed, a }, stored);
            }
        }
        self.plan(self.config.n);
    }

    /// Run `steps` planning updates at stepsize `α/√n`.
    pub fn plan(&mut self, steps: usize) {
        if steps == 0 {
            return;
        }
        let alpha = self.config.alpha / (self.config.n.max(1) as f64).sqrt();
        for _ in 0..steps {
            match self.store {
                Store::None => return,
                Store::Replay { .. } => self.replay_step(alpha),
                Store::Dyna { .. } => self.dyna_step(alpha),
            }
        }
    }

    fn replay_step(&mut self, alpha: f64) {
        let Store::Replay { buffer, .. } = &mut self.store else { return };
        let control = self.config.variant.control().unwrap();
        let drawn = if control.prioritized() {
            buffer.sample(&mut self.plan_rng)
        } else {
            buffer.sample_uniform(&mut self.plan_rng)
        };
        let Ok((slot, t)) = drawn else { return };
        let t = t.clone();
        let phi = Phi::Active(self.space.features.active(&t.s));
        let phi_next = Phi::Active(self.space.features.active(&t.s_next));
        self.q.q_learning_update(&phi, t.a, t.r, t.gamma, &phi_next, alpha);
        if control.prioritized() {
            let p = priority_of(&self.q, &phi, t.a, t.r, t.gamma, &phi_next, self.config.epsilon_p);
            buffer.update_priority(slot, p);
        }
    }

    fn dyna_step(&mut self, alpha: f64) {
        let Store::Dyna { queue, model } = &mut self.store else { return };
        let control = self.config.variant.control().unwrap();
        let eps_p = self.config.epsilon_p;
        let features = &self.space.features;
        let drawn = if control.prioritized() {
            queue.sample(&mut self.plan_rng)
        } else {
            queue.sample_uniform(&mut self.plan_rng)
        };
        let Ok((slot, entry)) = drawn else { return };
        let entry = entry.clone();
        let a = match entry.a {
            Some(a) => a,
            None => {
                let phi = Model::phi_of(features, &entry.seed);
                greedy(&self.q.values(&phi), &mut self.plan_rng)
            }
        };
        let Some(sim) = model.simulate(features, &entry.seed, a, &mut self.plan_rng) else {
            if control.prioritized() {
                let halved = (queue.priority(slot.index) / 2.0).max(eps_p);
                queue.update_priority(slot, halved);
            }
            return;
        };
        self.q.q_learning_update(&sim.phi, a, sim.r, sim.gamma, &sim.phi_next, alpha);
        if control.prioritized() {
            let p = priority_of(&self.q, &sim.phi, a, sim.r, sim.gamma, &sim.phi_next, eps_p);
            queue.update_priority(slot, p);
        }
        if !control.predecessors() {
            return;
        }
        let preds = model.predecessors(features, &entry.seed, self.space.num_actions, self.config.f, &mut self.plan_rng);
        for (pred, pa) in preds {
            let Some(ps) = model.simulate(features, &pred, pa, &mut self.plan_rng) else { continue };
            let p = priority_of(&self.q, &ps.phi, pa, ps.r, ps.gamma, &ps.phi_next, eps_p);
            let a = (control != Control::OnPolicy).then_some(pa);
            queue.insert(QueueEntry { seed: pred, a }, p);
        }
    }
}

/// Drive `agent` in `env` for `steps` interactions, resetting at episode
/// ends. Returns the per-step rewards. `inspect` runs after every step.
pub fn run_stream_with<F: FnMut(&Agent, usize)>(
    agent: &mut Agent,
    env: &mut dyn Environment,
    steps: usize,
    seed: u64,
    mut inspect: F,
) -> Vec<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let mut s = env.reset(&mut rng);
    let mut rewards = Vec::with_capacity(steps);
    for step in 0..steps {
        let a = agent.act(&s);
        let out = env.step(a, &mut rng);
        let t = Transition::new(s, a, out.s_next.clone(), out.r, out.gamma);
        agent.observe(&t);
        rewards.push(out.r);
        inspect(agent, step);
        s = if out.episode_end { env.reset(&mut rng) } else { out.s_next };
    }
    rewards
}

pub fn run_stream(agent: &mut Agent, env: &mut dyn Environment, steps: usize, seed: u64) -> Vec<f64> {
    run_stream_with(agent, env, steps, seed, |_, _| {})
}
