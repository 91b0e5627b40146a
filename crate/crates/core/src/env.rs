//! Goal-conditioned environments with the sparse goal reward.
//!
//! Two tasks are provided:
//!
//! * `bitflip`: flip one bit per step until the bit string matches the goal.
//! * `pointpush`: a disc agent pushes a disc block onto a goal location in the
//!   unit square. The block position is the achieved goal.

use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("goal dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("goal contains a non-finite entry")]
    NonFiniteGoal,
    #[error("action has {got} components, expected {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("step called after the episode ended (horizon {horizon})")]
    EpisodeOver { horizon: usize },
    #[error("step called before reset")]
    NotReset,
    #[error("unknown environment {0:?} (expected \"bitflip\" or \"pointpush\")")]
    UnknownEnv(String),
    #[error("bad environment parameter {key}={value}: {reason}")]
    BadParameter {
        key: String,
        value: String,
        reason: String,
    },
}

/// A point in goal space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GoalVector(Vec<f64>);

impl GoalVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EnvError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(EnvError::NonFiniteGoal)
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &GoalVector) -> Result<f64, EnvError> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    fn check_dim(&self, other: &GoalVector) -> Result<(), EnvError> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(EnvError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            })
        }
    }
}

impl TryFrom<Vec<f64>> for GoalVector {
    type Error = EnvError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<GoalVector> for Vec<f64> {
    fn from(g: GoalVector) -> Self {
        g.0
    }
}

/// 0 when the achieved goal is within `epsilon` (ℓ2) of the desired goal,
/// −1 otherwise.
pub fn sparse_reward(
    desired: &GoalVector,
    achieved: &GoalVector,
    epsilon: f64,
) -> Result<f64, EnvError> {
    let d = desired.distance(achieved)?;
    Ok(if d <= epsilon { 0.0 } else { -1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoalMetric {
    Euclidean,
    /// Number of coordinates that differ by more than one half.
    Hamming,
}

/// The sparse reward of one task: metric plus tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalReward {
    pub metric: GoalMetric,
    pub epsilon: f64,
}

impl GoalReward {
    pub fn reward(&self, desired: &GoalVector, achieved: &GoalVector) -> Result<f64, EnvError> {
        match self.metric {
            GoalMetric::Euclidean => sparse_reward(desired, achieved, self.epsilon),
            GoalMetric::Hamming => {
                desired.check_dim(achieved)?;
                let d = desired
                    .0
                    .iter()
                    .zip(&achieved.0)
                    .filter(|(a, b)| (*a - *b).abs() > 0.5)
                    .count() as f64;
                Ok(if d <= self.epsilon { 0.0 } else { -1.0 })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    pub horizon: usize,
    pub reward: GoalReward,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

impl EnvSpec {
    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub achieved_goal: GoalVector,
    pub reward: f64,
    pub terminal: bool,
}

pub trait GoalEnv: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode and returns `(state, desired_goal)`.
    fn reset(&mut self, rng: &mut dyn RngCore) -> (Vec<f64>, GoalVector);

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;

    /// Achieved goal of the current state.
    fn achieved_goal(&self) -> GoalVector;

    fn name(&self) -> &'static str;
}

/// Builds an environment by name with `key=value` overrides.
pub fn make_env(name: &str, overrides: &[(String, String)]) -> Result<Box<dyn GoalEnv>, EnvError> {
    match name {
        "bitflip" => {
            let mut bits = BitFlip::DEFAULT_BITS;
            for (key, value) in overrides {
                match key.as_str() {
                    "bits" | "n" => bits = parse_param(key, value)?,
                    _ => return Err(unknown_param(key, value)),
                }
            }
            if bits < 2 {
                return Err(EnvError::BadParameter {
                    key: "bits".into(),
                    value: bits.to_string(),
                    reason: "need at least 2 bits".into(),
                });
            }
            Ok(Box::new(BitFlip::new(bits)))
        }
        "pointpush" => {
            let mut params = PointPushParams::default();
            for (key, value) in overrides {
                match key.as_str() {
                    "epsilon" => params.epsilon = parse_param(key, value)?,
                    "horizon" => params.horizon = parse_param(key, value)?,
                    _ => return Err(unknown_param(key, value)),
                }
            }
            if params.epsilon <= 0.0 || params.horizon < 2 {
                return Err(EnvError::BadParameter {
                    key: "epsilon/horizon".into(),
                    value: format!("{}/{}", params.epsilon, params.horizon),
                    reason: "need epsilon > 0 and horizon >= 2".into(),
                });
            }
            Ok(Box::new(PointPush::new(params)))
        }
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}

fn parse_param<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, EnvError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| EnvError::BadParameter {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn unknown_param(key: &str, value: &str) -> EnvError {
    EnvError::BadParameter {
        key: key.into(),
        value: value.into(),
        reason: "unknown parameter".into(),
    }
}

/// Bit-flipping task. The action is a real vector with one entry per bit
/// plus a trailing "no flip" entry; its argmax picks what happens.
#[derive(Debug, Clone)]
pub struct BitFlip {
    spec: EnvSpec,
    state: Vec<f64>,
    goal: Vec<f64>,
    t: usize,
    active: bool,
}

impl BitFlip {
    pub const DEFAULT_BITS: usize = 15;

    pub fn new(bits: usize) -> Self {
        Self {
            spec: EnvSpec {
                state_dim: bits,
                action_dim: bits + 1,
                goal_dim: bits,
                horizon: bits,
                reward: GoalReward {
                    metric: GoalMetric::Hamming,
                    epsilon: 0.5,
                },
                action_low: vec![-1.0; bits + 1],
                action_high: vec![1.0; bits + 1],
            },
            state: vec![0.0; bits],
            goal: vec![0.0; bits],
            t: 0,
            active: false,
        }
    }

    pub fn bits(&self) -> usize {
        self.state.len()
    }

    /// Flip index chosen by an action, or `None` for the no-op entry.
    pub fn decode_action(&self, action: &[f64]) -> Option<usize> {
        let idx = action
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &a)| {
                if a > best.1 {
                    (i, a)
                } else {
                    best
                }
            })
            .0;
        (idx < self.bits()).then_some(idx)
    }

    /// Sets the internal state directly; used by scripted tests.
    pub fn set_state(&mut self, state: &[f64], goal: &[f64]) {
        self.state = state.to_vec();
        self.goal = goal.to_vec();
        self.t = 0;
        self.active = true;
    }
}

impl GoalEnv for BitFlip {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> (Vec<f64>, GoalVector) {
        let n = self.bits();
        self.state = (0..n).map(|_| rng.random_range(0..2u8) as f64).collect();
        loop {
            self.goal = (0..n).map(|_| rng.random_range(0..2u8) as f64).collect();
            if self.goal != self.state {
                break;
            }
        }
        self.t = 0;
        self.active = true;
        (self.state.clone(), GoalVector(self.goal.clone()))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if !self.active {
            return Err(if self.t == 0 {
                EnvError::NotReset
            } else {
                EnvError::EpisodeOver {
                    horizon: self.spec.horizon,
                }
            });
        }
        if action.len() != self.spec.action_dim {
            return Err(EnvError::ActionDimension {
                expected: self.spec.action_dim,
                got: action.len(),
            });
        }
        if let Some(i) = self.decode_action(action) {
            self.state[i] = 1.0 - self.state[i];
        }
        self.t += 1;
        let terminal = self.t >= self.spec.horizon;
        self.active = !terminal;
        let achieved = GoalVector(self.state.clone());
        let reward = self
            .spec
            .reward
            .reward(&GoalVector(self.goal.clone()), &achieved)?;
        Ok(StepResult {
            next_state: self.state.clone(),
            achieved_goal: achieved,
            reward,
            terminal,
        })
    }

    fn achieved_goal(&self) -> GoalVector {
        GoalVector(self.state.clone())
    }

    fn name(&self) -> &'static str {
        "bitflip"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPushParams {
    pub epsilon: f64,
    pub horizon: usize,
    pub max_speed: f64,
    pub agent_radius: f64,
    pub block_radius: f64,
    /// Goals and block starts are drawn from `[spawn_low, spawn_high]²`.
    pub spawn_low: f64,
    pub spawn_high: f64,
    /// The agent starts this far (at most) from the block centre.
    pub agent_spawn_radius: f64,
}

impl Default for PointPushParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            horizon: 50,
            max_speed: 0.05,
            agent_radius: 0.03,
            block_radius: 0.04,
            spawn_low: 0.2,
            spawn_high: 0.8,
            agent_spawn_radius: 0.15,
        }
    }
}

/// Planar pushing: the agent disc is velocity controlled, the block disc
/// only moves when the agent runs into it.
///
/// State layout: `[agent_x, agent_y, block_x, block_y, block_x - agent_x,
/// block_y - agent_y]`.
#[derive(Debug, Clone)]
pub struct PointPush {
    params: PointPushParams,
    spec: EnvSpec,
    agent: [f64; 2],
    block: [f64; 2],
    goal: [f64; 2],
    t: usize,
    active: bool,
}

impl PointPush {
    pub fn new(params: PointPushParams) -> Self {
        Self {
            spec: EnvSpec {
                state_dim: 6,
                action_dim: 2,
                goal_dim: 2,
                horizon: params.horizon,
                reward: GoalReward {
                    metric: GoalMetric::Euclidean,
                    epsilon: params.epsilon,
                },
                action_low: vec![-1.0; 2],
                action_high: vec![1.0; 2],
            },
            params,
            agent: [0.0; 2],
            block: [0.5; 2],
            goal: [0.5; 2],
            t: 0,
            active: false,
        }
    }

    pub fn params(&self) -> &PointPushParams {
        &self.params
    }

    pub fn agent(&self) -> [f64; 2] {
        self.agent
    }

    pub fn block(&self) -> [f64; 2] {
        self.block
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    /// Places agent, block and goal directly; used by scripted tests.
    pub fn set_positions(&mut self, agent: [f64; 2], block: [f64; 2], goal: [f64; 2]) {
        self.agent = agent;
        self.block = block;
        self.goal = goal;
        self.t = 0;
        self.active = true;
    }

    fn state(&self) -> Vec<f64> {
        vec![
            self.agent[0],
            self.agent[1],
            self.block[0],
            self.block[1],
            self.block[0] - self.agent[0],
            self.block[1] - self.agent[1],
        ]
    }

    fn contact_distance(&self) -> f64 {
        self.params.agent_radius + self.params.block_radius
    }

    /// Moves the agent by the (clipped) velocity command and resolves contact.
    fn advance(&mut self, action: &[f64]) {
        let p = &self.params;
        let mut v = [
            action[0].clamp(-1.0, 1.0) * p.max_speed,
            action[1].clamp(-1.0, 1.0) * p.max_speed,
        ];
        let speed = norm(v);
        if speed > p.max_speed {
            v = [v[0] * p.max_speed / speed, v[1] * p.max_speed / speed];
        }
        let old_agent = self.agent;
        let old_block = self.block;
        let agent = clamp_to_arena(add(self.agent, v), p.agent_radius);
        let reach = self.contact_distance();

        let gap = sub(self.block, agent);
        let dist = norm(gap);
        if dist >= reach {
            self.agent = agent;
            return;
        }
        // Push the block out along the contact normal.
        let normal = if dist > 1e-12 {
            scale(gap, 1.0 / dist)
        } else if speed > 0.0 {
            scale(v, 1.0 / speed)
        } else {
            [1.0, 0.0]
        };
        let block = clamp_to_arena(add(agent, scale(normal, reach)), p.block_radius);
        if norm(sub(block, agent)) >= reach - 1e-12 {
            self.agent = agent;
            self.block = block;
            return;
        }
        // Block is pinned by a wall: back the agent off along the normal.
        let back = sub(agent, block);
        let back_len = norm(back);
        if back_len > 1e-12 {
            let retreat = add(block, scale(back, reach / back_len));
            if clamp_to_arena(retreat, p.agent_radius) == retreat {
                self.agent = retreat;
                self.block = block;
                return;
            }
        }
        self.agent = old_agent;
        self.block = old_block;
    }
}

impl GoalEnv for PointPush {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> (Vec<f64>, GoalVector) {
        let p = self.params;
        let spawn = |rng: &mut dyn RngCore| {
            [
                rng.random_range(p.spawn_low..p.spawn_high),
                rng.random_range(p.spawn_low..p.spawn_high),
            ]
        };
        self.block = spawn(rng);
        loop {
            self.goal = spawn(rng);
            if norm(sub(self.goal, self.block)) > p.epsilon {
                break;
            }
        }
        let reach = self.contact_distance();
        loop {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let r = rng.random_range(reach + 0.01..p.agent_spawn_radius.max(reach + 0.02));
            let cand = add(self.block, [r * angle.cos(), r * angle.sin()]);
            if clamp_to_arena(cand, p.agent_radius) == cand {
                self.agent = cand;
                break;
            }
        }
        self.t = 0;
        self.active = true;
        (self.state(), GoalVector(self.goal.to_vec()))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if !self.active {
            return Err(if self.t == 0 {
                EnvError::NotReset
            } else {
                EnvError::EpisodeOver {
                    horizon: self.spec.horizon,
                }
            });
        }
        if action.len() != 2 {
            return Err(EnvError::ActionDimension {
                expected: 2,
                got: action.len(),
            });
        }
        self.advance(action);
        self.t += 1;
        let terminal = self.t >= self.spec.horizon;
        self.active = !terminal;
        let achieved = GoalVector(self.block.to_vec());
        let reward = self
            .spec
            .reward
            .reward(&GoalVector(self.goal.to_vec()), &achieved)?;
        Ok(StepResult {
            next_state: self.state(),
            achieved_goal: achieved,
            reward,
            terminal,
        })
    }

    fn achieved_goal(&self) -> GoalVector {
        GoalVector(self.block.to_vec())
    }

    fn name(&self) -> &'static str {
        "pointpush"
    }
}

/// A scripted pusher: circle to the far side of the block, then push it
/// towards the goal. Returns an action in `[-1, 1]²`.
pub fn scripted_push_action(env: &PointPush) -> Vec<f64> {
    let p = env.params;
    let reach = p.agent_radius + p.block_radius;
    let to_goal = sub(env.goal, env.block);
    let goal_dist = norm(to_goal);
    if goal_dist <= 0.5 * p.epsilon {
        return vec![0.0, 0.0];
    }
    let dir = scale(to_goal, 1.0 / goal_dist);
    let behind = sub(env.block, scale(dir, reach));
    let from_block = sub(env.agent, env.block);
    let along = from_block[0] * dir[0] + from_block[1] * dir[1];
    let lateral = norm(sub(env.agent, behind));

    let target = if lateral < 0.25 * reach {
        // Aligned: push through, stopping once the block would reach the goal.
        let step = goal_dist.min(p.max_speed);
        add(env.agent, scale(dir, step))
    } else if along > -0.5 * reach {
        // On the wrong side: go around the block at a safe radius.
        let radial = norm(from_block).max(1e-9);
        let tangent = [-from_block[1] / radial, from_block[0] / radial];
        let cross = from_block[0] * dir[1] - from_block[1] * dir[0];
        let sign = if cross > 0.0 { -1.0 } else { 1.0 };
        let orbit = reach + 0.03;
        add(
            env.block,
            add(
                scale(from_block, orbit / radial),
                scale(tangent, sign * p.max_speed * 1.5),
            ),
        )
    } else {
        behind
    };
    let delta = sub(target, env.agent);
    let len = norm(delta);
    if len < 1e-12 {
        return vec![0.0, 0.0];
    }
    let s = (len / p.max_speed).min(1.0) / len;
    vec![delta[0] * s, delta[1] * s]
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn scale(a: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] * s, a[1] * s]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn clamp_to_arena(p: [f64; 2], radius: f64) -> [f64; 2] {
    [
        p[0].clamp(radius, 1.0 - radius),
        p[1].clamp(radius, 1.0 - radius),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(v: &[f64]) -> GoalVector {
        GoalVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn reward_examples() {
        let eps = 0.05;
        assert_eq!(
            sparse_reward(&g(&[0.3, 0.3]), &g(&[0.3, 0.3]), eps).unwrap(),
            0.0
        );
        assert_eq!(
            sparse_reward(&g(&[0.0, 0.0]), &g(&[0.05, 0.0]), eps).unwrap(),
            0.0
        );
        assert_eq!(
            sparse_reward(&g(&[0.0, 0.0]), &g(&[0.1, 0.0]), eps).unwrap(),
            -1.0
        );
        assert!(matches!(
            sparse_reward(&g(&[0.0]), &g(&[0.0, 1.0]), eps),
            Err(EnvError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn hamming_reward_is_exact_match() {
        let r = GoalReward {
            metric: GoalMetric::Hamming,
            epsilon: 0.5,
        };
        assert_eq!(
            r.reward(&g(&[1.0, 0.0, 1.0]), &g(&[1.0, 0.0, 1.0]))
                .unwrap(),
            0.0
        );
        assert_eq!(
            r.reward(&g(&[1.0, 0.0, 1.0]), &g(&[1.0, 1.0, 1.0]))
                .unwrap(),
            -1.0
        );
    }

    #[test]
    fn non_finite_goal_rejected() {
        assert_eq!(
            GoalVector::new(vec![f64::NAN]),
            Err(EnvError::NonFiniteGoal)
        );
    }

    #[test]
    fn bitflip_reset_never_starts_solved() {
        let mut env = BitFlip::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let (s, goal) = env.reset(&mut rng);
            assert_eq!(s.len(), 8);
            assert!(s
                .iter()
                .chain(goal.as_slice())
                .all(|&b| b == 0.0 || b == 1.0));
            assert_ne!(s.as_slice(), goal.as_slice());
        }
    }

    #[test]
    fn bitflip_flip_and_noop() {
        let mut env = BitFlip::new(4);
        env.set_state(&[0.0; 4], &[1.0; 4]);
        let mut a = vec![0.0; 5];
        a[2] = 1.0;
        let r = env.step(&a).unwrap();
        assert_eq!(r.next_state, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(r.achieved_goal.as_slice(), r.next_state.as_slice());
        let mut noop = vec![0.0; 5];
        noop[4] = 1.0;
        let r = env.step(&noop).unwrap();
        assert_eq!(r.next_state, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn bitflip_episode_length_and_terminal() {
        let mut env = BitFlip::new(5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(env.step(&[0.0; 6]), Err(EnvError::NotReset));
        env.reset(&mut rng);
        let mut terminals = 0;
        for _ in 0..5 {
            if env.step(&[0.1, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap().terminal {
                terminals += 1;
            }
        }
        assert_eq!(terminals, 1);
        assert_eq!(
            env.step(&[0.0; 6]),
            Err(EnvError::EpisodeOver { horizon: 5 })
        );
    }

    #[test]
    fn pointpush_reset_ranges() {
        let mut env = PointPush::new(PointPushParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let (s, goal) = env.reset(&mut rng);
            let (b, gl) = ([s[2], s[3]], goal.as_slice());
            assert!(b.iter().chain(gl).all(|&x| (0.2..0.8).contains(&x)));
            assert!(norm(sub(b, [gl[0], gl[1]])) > 0.05);
            assert!(norm(sub(env.agent, env.block)) >= 0.07);
        }
    }

    #[test]
    fn pointpush_no_contact_leaves_block() {
        let mut env = PointPush::new(PointPushParams::default());
        env.set_positions([0.2, 0.2], [0.7, 0.7], [0.5, 0.5]);
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert_eq!(&r.next_state[2..4], &[0.7, 0.7]);
        assert!((r.next_state[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn pointpush_contact_pushes_block() {
        let mut env = PointPush::new(PointPushParams::default());
        env.set_positions([0.5, 0.5], [0.57, 0.5], [0.8, 0.5]);
        let r = env.step(&[1.0, 0.0]).unwrap();
        // agent advances 0.05, block sits exactly one contact distance ahead
        assert!((r.next_state[0] - 0.55).abs() < 1e-12);
        assert!((r.next_state[2] - 0.62).abs() < 1e-12);
        assert!((r.next_state[3] - 0.5).abs() < 1e-12);
        assert_eq!(r.achieved_goal.as_slice(), &r.next_state[2..4]);
    }

    #[test]
    fn pointpush_wall_never_overlaps() {
        let mut env = PointPush::new(PointPushParams::default());
        env.set_positions([0.5, 0.1], [0.5, 0.04], [0.5, 0.5]);
        for _ in 0..10 {
            env.step(&[0.3, -1.0]).unwrap();
            assert!(norm(sub(env.agent, env.block)) >= 0.07 - 1e-9);
        }
    }

    fn push_success_rate(
        policy: impl Fn(&PointPush, &mut ChaCha8Rng) -> Vec<f64>,
        seed: u64,
    ) -> f64 {
        let mut env = PointPush::new(PointPushParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let episodes = 1000;
        let mut wins = 0;
        for _ in 0..episodes {
            env.reset(&mut rng);
            let mut last = -1.0;
            for _ in 0..env.spec().horizon {
                let a = policy(&env, &mut rng);
                let r = env.step(&a).unwrap();
                assert!(norm(sub(env.agent, env.block)) >= 0.07 - 1e-9);
                last = r.reward;
            }
            if last == 0.0 {
                wins += 1;
            }
        }
        wins as f64 / episodes as f64
    }

    #[test]
    fn scripted_pusher_solves_pointpush() {
        let rate = push_success_rate(|env, _| scripted_push_action(env), 21);
        assert!(rate >= 0.95, "scripted success {rate}");
    }

    #[test]
    fn random_policy_rarely_solves_pointpush() {
        let rate = push_success_rate(
            |_, rng| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            22,
        );
        assert!(rate < 0.05, "random success {rate}");
    }
}
