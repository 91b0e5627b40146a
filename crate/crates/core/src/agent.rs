//! Deterministic policy gradient learner with hand-written backpropagation.
//!
//! Actor `π(s, g)` and critic `Q(s, a, g)` are small tanh MLPs. The critic
//! regresses onto `y = r + γ Q'(s', π'(s'), g)` computed with slowly tracking
//! target copies, and the actor ascends `Q(s, π(s), g)` by backpropagating
//! through the critic.

use std::fs;
use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, EnvSpec, GoalEnv, GoalVector};
use crate::replay::CandidateTransition;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("non-finite gradient in {network} layer {layer}")]
    NonFiniteGradient { network: &'static str, layer: usize },
    #[error("non-finite parameter in {network} after update")]
    NonFiniteParameter { network: &'static str },
    #[error("evaluation needs at least one episode")]
    NoEpisodes,
    #[error("empty minibatch")]
    EmptyBatch,
    #[error("unsupported agent checkpoint version {0}")]
    Version(u32),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("agent checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("agent checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AgentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Linear,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LayerShape {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the `fan_in × fan_out` weight block (input-major).
    weights: usize,
    /// Offset of the `fan_out` biases.
    bias: usize,
}

/// Fully connected network: tanh on hidden layers, configurable output.
/// All parameters live in one flat buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<LayerShape>,
    output: OutputActivation,
    params: Vec<f64>,
}

/// Per-layer activations of a batched forward pass; `acts[0]` is the input.
pub struct ForwardCache {
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            layers.push(LayerShape {
                fan_in,
                fan_out,
                weights: offset,
                bias: offset + fan_in * fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        }
        Self {
            sizes: sizes.to_vec(),
            layers,
            output,
            params: vec![0.0; offset],
        }
    }

    /// Hidden layers uniform in ±1/√fan_in (weights and biases); the output
    /// layer uniform in ±3e-3 so initial outputs sit near zero.
    pub fn new(sizes: &[usize], output: OutputActivation, rng: &mut dyn RngCore) -> Self {
        let mut net = Self::zeros(sizes, output);
        let last = net.layers.len() - 1;
        for (li, l) in net.layers.clone().into_iter().enumerate() {
            let limit = if li == last {
                3e-3
            } else {
                1.0 / (l.fan_in as f64).sqrt()
            };
            for p in &mut net.params[l.weights..l.bias + l.fan_out] {
                *p = rng.random_range(-limit..limit);
            }
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Sets one weight, addressed as `(layer, input unit, output unit)`.
    pub fn set_weight(&mut self, layer: usize, from: usize, to: usize, value: f64) {
        let l = self.layers[layer];
        self.params[l.weights + from * l.fan_out + to] = value;
    }

    pub fn set_bias(&mut self, layer: usize, unit: usize, value: f64) {
        let l = self.layers[layer];
        self.params[l.bias + unit] = value;
    }

    /// Layer index owning flat parameter `i`.
    fn layer_of(&self, i: usize) -> usize {
        self.layers
            .iter()
            .position(|l| i < l.bias + l.fan_out)
            .unwrap_or(self.layers.len() - 1)
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward(&self, input: &[f64], batch: usize) -> ForwardCache {
        debug_assert_eq!(input.len(), batch * self.input_dim());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let x = &acts[li];
            let w = &self.params[l.weights..l.bias];
            let bias = &self.params[l.bias..l.bias + l.fan_out];
            let mut out = Vec::with_capacity(batch * l.fan_out);
            for _ in 0..batch {
                out.extend_from_slice(bias);
            }
            // out += x · W
            gemm(
                (batch, l.fan_in, l.fan_out),
                (x, l.fan_in, 1),
                (w, l.fan_out, 1),
                1.0,
                (&mut out, l.fan_out),
            );
            if li < last || self.output == OutputActivation::Tanh {
                out.iter_mut().for_each(|z| *z = tanh(*z));
            }
            acts.push(out);
        }
        ForwardCache { batch, acts }
    }

    /// Backpropagates `grad_output` (dLoss/dOutput, row-major) through the
    /// cached pass. Parameter gradients are accumulated into `grads`; the
    /// gradient with respect to the input is returned.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        grads: &mut [f64],
    ) -> Vec<f64> {
        self.backprop(cache, grad_output, Some(grads), true)
            .expect("input gradient requested")
    }

    /// Parameter gradients only.
    pub fn backward_params(&self, cache: &ForwardCache, grad_output: &[f64], grads: &mut [f64]) {
        self.backprop(cache, grad_output, Some(grads), false);
    }

    /// Input gradient only.
    pub fn backward_input(&self, cache: &ForwardCache, grad_output: &[f64]) -> Vec<f64> {
        self.backprop(cache, grad_output, None, true)
            .expect("input gradient requested")
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        mut grads: Option<&mut [f64]>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let batch = cache.batch;
        let last = self.layers.len() - 1;
        let mut delta = grad_output.to_vec();
        for li in (0..self.layers.len()).rev() {
            let l = self.layers[li];
            let y = &cache.acts[li + 1];
            if li < last || self.output == OutputActivation::Tanh {
                for (d, yv) in delta.iter_mut().zip(y) {
                    *d *= 1.0 - yv * yv;
                }
            }
            if let Some(grads) = grads.as_deref_mut() {
                let x = &cache.acts[li];
                let (gw, gb) =
                    grads[l.weights..l.bias + l.fan_out].split_at_mut(l.bias - l.weights);
                for d in delta.chunks_exact(l.fan_out) {
                    axpy(1.0, d, gb);
                }
                // gW += xᵀ · δ
                gemm(
                    (l.fan_in, batch, l.fan_out),
                    (x, 1, l.fan_in),
                    (&delta, l.fan_out, 1),
                    1.0,
                    (gw, l.fan_out),
                );
            }
            if li == 0 && !want_input {
                return None;
            }
            let w = &self.params[l.weights..l.bias];
            let mut prev = vec![0.0; batch * l.fan_in];
            // δ_prev = δ · Wᵀ
            gemm(
                (batch, l.fan_out, l.fan_in),
                (&delta, l.fan_out, 1),
                (w, 1, l.fan_out),
                0.0,
                (&mut prev, l.fan_in),
            );
            delta = prev;
        }
        Some(delta)
    }

    /// `self ← p·self + (1 − p)·online`.
    pub fn polyak_toward(&mut self, online: &Mlp, p: f64) {
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = p * *t + (1.0 - p) * o;
        }
    }
}

/// `tanh` through a single `exp`; absolute error stays near 1e-16, and it is
/// several times cheaper than the libm routine on this hot path.
#[inline]
fn tanh(x: f64) -> f64 {
    let t = 1.0 - 2.0 / ((2.0 * x.abs()).exp() + 1.0);
    t.copysign(x)
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

type Operand<'a> = (&'a [f64], usize, usize);

/// `c ← a·b + beta·c` for `(m, k, n)` shapes; operands carry their row and
/// column strides, `c` is row-major with the given row stride.
fn gemm(
    (m, k, n): (usize, usize, usize),
    (a, rsa, csa): Operand,
    (b, rsb, csb): Operand,
    beta: f64,
    (c, rsc): (&mut [f64], usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + n <= c.len());
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Adaptive moment estimation over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

/// Running mean/std standardisation with clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    count: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
    min_std: f64,
    clip: f64,
}

impl Normalizer {
    pub fn new(dim: usize, min_std: f64, clip: f64) -> Self {
        Self {
            sum: vec![0.0; dim],
            sumsq: vec![0.0; dim],
            count: 0.0,
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            min_std,
            clip,
        }
    }

    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        for row in rows {
            for (i, x) in row.iter().enumerate() {
                self.sum[i] += x;
                self.sumsq[i] += x * x;
            }
            self.count += 1.0;
        }
        if self.count > 0.0 {
            for i in 0..self.sum.len() {
                let mean = self.sum[i] / self.count;
                let var = (self.sumsq[i] / self.count - mean * mean).max(0.0);
                self.mean[i] = mean;
                self.std[i] = var.sqrt().max(self.min_std);
            }
        }
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut Vec<f64>) {
        for (i, v) in x.iter().enumerate() {
            out.push(((v - self.mean[i]) / self.std[i]).clamp(-self.clip, self.clip));
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }
}

/// When the target networks take their polyak step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetUpdate {
    /// After every optimiser step.
    Step,
    /// Once per block of optimiser steps, via [`Agent::end_update_phase`].
    Phase,
}

impl std::str::FromStr for TargetUpdate {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "step" => Ok(Self::Step),
            "phase" => Ok(Self::Phase),
            _ => Err(format!("unknown target update {s:?} (step|phase)")),
        }
    }
}

impl std::fmt::Display for TargetUpdate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Step => "step",
            Self::Phase => "phase",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Target networks keep this fraction of their old weights each update.
    pub polyak: f64,
    pub target_update: TargetUpdate,
    pub gamma: f64,
    /// Weight of the squared-action penalty in the actor loss.
    pub action_l2: f64,
    pub clip_obs: f64,
    pub norm_min_std: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            polyak: 0.95,
            target_update: TargetUpdate::Step,
            gamma: 0.98,
            action_l2: 1.0,
            clip_obs: 5.0,
            norm_min_std: 1e-2,
        }
    }
}

/// Flat gradients of both losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub gradients: Gradients,
}

/// Actor, critic, their targets, optimisers and input normalisers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    config: AgentConfig,
    state_dim: usize,
    goal_dim: usize,
    action_dim: usize,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
    actor: Mlp,
    critic: Mlp,
    target_actor: Mlp,
    target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    obs_norm: Normalizer,
    goal_norm: Normalizer,
}

impl Agent {
    pub fn new(spec: &EnvSpec, config: AgentConfig, rng: &mut dyn RngCore) -> Self {
        let obs_in = spec.state_dim + spec.goal_dim;
        let mut actor_sizes = vec![obs_in];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(spec.action_dim);
        let mut critic_sizes = vec![obs_in + spec.action_dim];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);

        let actor = Mlp::new(&actor_sizes, OutputActivation::Tanh, rng);
        let critic = Mlp::new(&critic_sizes, OutputActivation::Linear, rng);
        Self {
            state_dim: spec.state_dim,
            goal_dim: spec.goal_dim,
            action_dim: spec.action_dim,
            action_low: spec.action_low.clone(),
            action_high: spec.action_high.clone(),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: Adam::new(actor.n_params(), config.actor_lr),
            critic_opt: Adam::new(critic.n_params(), config.critic_lr),
            obs_norm: Normalizer::new(spec.state_dim, config.norm_min_std, config.clip_obs),
            goal_norm: Normalizer::new(spec.goal_dim, config.norm_min_std, config.clip_obs),
            actor,
            critic,
            config,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn target_actor(&self) -> &Mlp {
        &self.target_actor
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.target_critic
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    /// Copies the online networks into the targets.
    pub fn sync_targets(&mut self) {
        self.target_actor = self.actor.clone();
        self.target_critic = self.critic.clone();
    }

    pub fn update_normalizers<'a>(
        &mut self,
        states: impl IntoIterator<Item = &'a [f64]>,
        goals: impl IntoIterator<Item = &'a [f64]>,
    ) {
        self.obs_norm.update(states);
        self.goal_norm.update(goals);
    }

    fn push_obs(&self, state: &[f64], goal: &[f64], out: &mut Vec<f64>) {
        self.obs_norm.normalize_into(state, out);
        self.goal_norm.normalize_into(goal, out);
    }

    /// Maps an env action onto `[-1, 1]` per dimension.
    fn unit_action(&self, action: &[f64], out: &mut Vec<f64>) {
        for (i, a) in action.iter().enumerate() {
            let half = 0.5 * (self.action_high[i] - self.action_low[i]);
            let centre = 0.5 * (self.action_high[i] + self.action_low[i]);
            out.push((a - centre) / half);
        }
    }

    fn env_action(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .enumerate()
            .map(|(i, u)| {
                let half = 0.5 * (self.action_high[i] - self.action_low[i]);
                let centre = 0.5 * (self.action_high[i] + self.action_low[i]);
                centre + half * u
            })
            .collect()
    }

    /// Deterministic policy output, within the action bounds.
    pub fn act(&self, state: &[f64], goal: &GoalVector) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.actor.input_dim());
        self.push_obs(state, goal.as_slice(), &mut x);
        let cache = self.actor.forward(&x, 1);
        self.env_action(cache.output())
    }

    /// Raw critic estimate `Q(s, a, g)`.
    pub fn q_value(&self, state: &[f64], action: &[f64], goal: &GoalVector) -> f64 {
        let mut x = Vec::with_capacity(self.critic.input_dim());
        self.push_obs(state, goal.as_slice(), &mut x);
        self.unit_action(action, &mut x);
        self.critic.forward(&x, 1).output()[0]
    }

    /// Exploratory action: with probability `random_eps` a uniform random
    /// action, otherwise the policy plus Gaussian noise of standard deviation
    /// `noise_scale × (high − low)`, clipped to bounds.
    pub fn act_with_noise(
        &self,
        state: &[f64],
        goal: &GoalVector,
        noise_scale: f64,
        random_eps: f64,
        rng: &mut dyn RngCore,
    ) -> Vec<f64> {
        if random_eps > 0.0 && rng.random::<f64>() < random_eps {
            return (0..self.action_dim)
                .map(|i| rng.random_range(self.action_low[i]..=self.action_high[i]))
                .collect();
        }
        let mut a = self.act(state, goal);
        if noise_scale > 0.0 {
            for (i, ai) in a.iter_mut().enumerate() {
                let range = self.action_high[i] - self.action_low[i];
                let z: f64 = StandardNormal.sample(rng);
                *ai =
                    (*ai + noise_scale * range * z).clamp(self.action_low[i], self.action_high[i]);
            }
        }
        a
    }

    /// Lower bound of the return under −1/0 rewards.
    pub fn q_floor(&self) -> f64 {
        -1.0 / (1.0 - self.config.gamma)
    }

    /// Clips a bootstrapped target to `[−1/(1−γ), 0]`.
    pub fn clip_target(&self, y: f64) -> f64 {
        y.clamp(self.q_floor(), 0.0)
    }

    /// Critic and actor losses on a minibatch with their exact gradients.
    pub fn compute_losses(&self, batch: &[CandidateTransition]) -> Result<LossReport> {
        let n = batch.len();
        if n == 0 {
            return Err(AgentError::EmptyBatch);
        }
        let obs_in = self.state_dim + self.goal_dim;
        let mut obs = Vec::with_capacity(n * obs_in);
        let mut next_obs = Vec::with_capacity(n * obs_in);
        let mut actions = Vec::with_capacity(n * self.action_dim);
        for c in batch {
            let g = c.relabelled_goal.as_slice();
            self.push_obs(&c.base.state, g, &mut obs);
            self.push_obs(&c.base.next_state, g, &mut next_obs);
            self.unit_action(&c.base.action, &mut actions);
        }

        // bootstrapped targets from the target networks
        let next_pi = self.target_actor.forward(&next_obs, n);
        let next_q = self.target_critic.forward(
            &concat_rows(&next_obs, obs_in, next_pi.output(), self.action_dim),
            n,
        );
        let gamma = self.config.gamma;
        let targets: Vec<f64> = batch
            .iter()
            .zip(next_q.output())
            .map(|(c, q)| self.clip_target(c.recomputed_reward + gamma * q))
            .collect();

        // critic regression
        let q = self
            .critic
            .forward(&concat_rows(&obs, obs_in, &actions, self.action_dim), n);
        let mut critic_loss = 0.0;
        let mut grad_q = Vec::with_capacity(n);
        for (qv, y) in q.output().iter().zip(&targets) {
            let diff = qv - y;
            critic_loss += diff * diff;
            grad_q.push(2.0 * diff / n as f64);
        }
        critic_loss /= n as f64;
        let mut critic_grad = vec![0.0; self.critic.n_params()];
        self.critic.backward_params(&q, &grad_q, &mut critic_grad);

        // actor: maximise Q(s, π(s)) with a squared-action penalty
        let pi = self.actor.forward(&obs, n);
        let q_pi = self
            .critic
            .forward(&concat_rows(&obs, obs_in, pi.output(), self.action_dim), n);
        let l2 = self.config.action_l2;
        let denom = (n * self.action_dim) as f64;
        let mean_q = q_pi.output().iter().sum::<f64>() / n as f64;
        let mean_sq = pi.output().iter().map(|a| a * a).sum::<f64>() / denom;
        let actor_loss = -mean_q + l2 * mean_sq;

        let grad_in = self.critic.backward_input(&q_pi, &vec![-1.0 / n as f64; n]);
        let critic_in = obs_in + self.action_dim;
        let mut grad_pi = Vec::with_capacity(n * self.action_dim);
        for b in 0..n {
            let row = &grad_in[b * critic_in + obs_in..(b + 1) * critic_in];
            let act = &pi.output()[b * self.action_dim..(b + 1) * self.action_dim];
            for (g, a) in row.iter().zip(act) {
                grad_pi.push(g + 2.0 * l2 * a / denom);
            }
        }
        let mut actor_grad = vec![0.0; self.actor.n_params()];
        self.actor.backward_params(&pi, &grad_pi, &mut actor_grad);

        let gradients = Gradients {
            actor: actor_grad,
            critic: critic_grad,
        };
        check_finite(&self.actor, &gradients.actor, "actor")?;
        check_finite(&self.critic, &gradients.critic, "critic")?;
        Ok(LossReport {
            critic_loss,
            actor_loss,
            gradients,
        })
    }

    /// One optimiser step on both networks, followed by the target update
    /// when targets track every step.
    pub fn update(&mut self, gradients: &Gradients) -> Result<()> {
        self.actor_opt
            .step(&mut self.actor.params, &gradients.actor);
        self.critic_opt
            .step(&mut self.critic.params, &gradients.critic);
        if !self.actor.params.iter().all(|p| p.is_finite()) {
            return Err(AgentError::NonFiniteParameter { network: "actor" });
        }
        if !self.critic.params.iter().all(|p| p.is_finite()) {
            return Err(AgentError::NonFiniteParameter { network: "critic" });
        }
        if self.config.target_update == TargetUpdate::Step {
            self.update_targets();
        }
        Ok(())
    }

    /// Marks the end of a block of optimiser steps.
    pub fn end_update_phase(&mut self) {
        if self.config.target_update == TargetUpdate::Phase {
            self.update_targets();
        }
    }

    pub fn update_targets(&mut self) {
        let p = self.config.polyak;
        self.target_actor.polyak_toward(&self.actor, p);
        self.target_critic.polyak_toward(&self.critic, p);
    }

    /// Losses, gradients and update in one call; returns `(critic, actor)` losses.
    pub fn train_step(&mut self, batch: &[CandidateTransition]) -> Result<(f64, f64)> {
        let report = self.compute_losses(batch)?;
        self.update(&report.gradients)?;
        Ok((report.critic_loss, report.actor_loss))
    }

    /// Success rate of the noiseless policy: an episode succeeds when its
    /// final step earns reward 0.
    pub fn evaluate(
        &self,
        env: &mut dyn GoalEnv,
        n_episodes: usize,
        rng: &mut dyn RngCore,
    ) -> Result<f64> {
        if n_episodes == 0 {
            return Err(AgentError::NoEpisodes);
        }
        let mut successes = 0;
        for _ in 0..n_episodes {
            let (mut state, goal) = env.reset(rng);
            let mut last_reward = -1.0;
            for _ in 0..env.spec().horizon {
                let step = env.step(&self.act(&state, &goal))?;
                last_reward = step.reward;
                state = step.next_state;
                if step.terminal {
                    break;
                }
            }
            if last_reward == 0.0 {
                successes += 1;
            }
        }
        Ok(successes as f64 / n_episodes as f64)
    }

    pub fn save(
        &self,
        path: &Path,
        env_name: &str,
        env_overrides: &[(String, String)],
    ) -> Result<()> {
        let ckpt = AgentCheckpointRef {
            version: CHECKPOINT_VERSION,
            env: env_name,
            env_overrides,
            agent: self,
        };
        fs::write(path, serde_json::to_vec(&ckpt)?)?;
        Ok(())
    }

    /// Loads a checkpoint, returning the agent and the environment it was
    /// trained on.
    pub fn load(path: &Path) -> Result<AgentCheckpoint> {
        let ckpt: AgentCheckpoint = serde_json::from_slice(&fs::read(path)?)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(AgentError::Version(ckpt.version));
        }
        Ok(ckpt)
    }
}

#[derive(Serialize)]
struct AgentCheckpointRef<'a> {
    version: u32,
    env: &'a str,
    env_overrides: &'a [(String, String)],
    agent: &'a Agent,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub env: String,
    pub env_overrides: Vec<(String, String)>,
    pub agent: Agent,
}

/// Backprop spreads a NaN towards the input, so the deepest offending layer
/// is reported.
fn check_finite(net: &Mlp, grads: &[f64], network: &'static str) -> Result<()> {
    match grads.iter().rposition(|g| !g.is_finite()) {
        None => Ok(()),
        Some(i) => Err(AgentError::NonFiniteGradient {
            network,
            layer: net.layer_of(i),
        }),
    }
}

fn concat_rows(a: &[f64], a_cols: usize, b: &[f64], b_cols: usize) -> Vec<f64> {
    let rows = a.len() / a_cols;
    let mut out = Vec::with_capacity(rows * (a_cols + b_cols));
    for r in 0..rows {
        out.extend_from_slice(&a[r * a_cols..(r + 1) * a_cols]);
        out.extend_from_slice(&b[r * b_cols..(r + 1) * b_cols]);
    }
    out
}
