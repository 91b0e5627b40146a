//! Episodic replay with diversity-prioritised trajectories and k-DPP goal
//! selection.
//!
//! Every stored episode carries a diversity score: the sum, over sliding
//! windows of `b` consecutive achieved goals, of the Gram determinant of the
//! ℓ2-normalised goals in the window. Episodes are replayed with probability
//! proportional to that score, one transition is drawn per replayed episode,
//! its goal is relabelled in hindsight, and a k-DPP over the relabelled goals
//! picks the final minibatch.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpp::{self, DppError, FeatureMatrix};
use crate::env::{EnvError, GoalReward, GoalVector};

/// Default episode capacity.
pub const DEFAULT_CAPACITY: usize = 10_000;
/// The cached total is rebuilt from scratch after this many stores.
pub const RECOMPUTE_EVERY: usize = 100;
const BUFFER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("goal sequence of length {len} is shorter than the window {window}")]
    SequenceTooShort { len: usize, window: usize },
    #[error("window length must be at least 2, got {0}")]
    WindowTooSmall(usize),
    #[error("minibatch size {k} exceeds candidate count {m}")]
    MinibatchTooLarge { k: usize, m: usize },
    #[error("malformed trajectory: {0}")]
    BadTrajectory(String),
    #[error("unsupported buffer checkpoint version {0}")]
    Version(u32),
    #[error(transparent)]
    Dpp(#[from] DppError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("buffer checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("buffer checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ReplayError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub desired_goal: GoalVector,
    pub achieved_goal_next: GoalVector,
}

/// One episode: `T` transitions and the `T + 1` achieved goals around them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    transitions: Vec<Transition>,
    achieved_goals: Vec<GoalVector>,
    diversity: f64,
}

impl Trajectory {
    /// Validates the episode and caches its diversity for window length `window`.
    pub fn new(
        transitions: Vec<Transition>,
        achieved_goals: Vec<GoalVector>,
        window: usize,
    ) -> Result<Self> {
        if transitions.is_empty() {
            return Err(ReplayError::BadTrajectory("no transitions".into()));
        }
        if achieved_goals.len() != transitions.len() + 1 {
            return Err(ReplayError::BadTrajectory(format!(
                "{} transitions need {} achieved goals, got {}",
                transitions.len(),
                transitions.len() + 1,
                achieved_goals.len()
            )));
        }
        let goal = &transitions[0].desired_goal;
        for (t, tr) in transitions.iter().enumerate() {
            if &tr.desired_goal != goal {
                return Err(ReplayError::BadTrajectory(format!(
                    "transition {t} has a different desired goal"
                )));
            }
            if tr.achieved_goal_next != achieved_goals[t + 1] {
                return Err(ReplayError::BadTrajectory(format!(
                    "transition {t} disagrees with achieved goal {}",
                    t + 1
                )));
            }
        }
        let diversity = trajectory_diversity(&achieved_goals, window)?;
        Ok(Self {
            transitions,
            achieved_goals,
            diversity,
        })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn achieved_goals(&self) -> &[GoalVector] {
        &self.achieved_goals
    }

    pub fn diversity(&self) -> f64 {
        self.diversity
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Sum of window determinants over all `len - window + 1` overlapping
/// windows of consecutive goals.
pub fn trajectory_diversity(goals: &[GoalVector], window: usize) -> Result<f64> {
    if window < 2 {
        return Err(ReplayError::WindowTooSmall(window));
    }
    if goals.len() < window {
        return Err(ReplayError::SequenceTooShort {
            len: goals.len(),
            window,
        });
    }
    let mut total = 0.0;
    for w in goals.windows(window) {
        let cols = w.iter().map(|g| g.as_slice().to_vec()).collect();
        let m = dpp::normalize_columns(&FeatureMatrix::new(cols)?);
        total += dpp::det_psd(&dpp::gram_kernel(&m));
    }
    Ok(total)
}

/// Bounded FIFO of episodes with a cached diversity total.
#[derive(Debug, Clone)]
pub struct EpisodicBuffer {
    episodes: VecDeque<Trajectory>,
    capacity: usize,
    window: usize,
    total_diversity: f64,
    stores_since_rebuild: usize,
}

impl EpisodicBuffer {
    pub fn new(capacity: usize, window: usize) -> Result<Self> {
        if window < 2 {
            return Err(ReplayError::WindowTooSmall(window));
        }
        Ok(Self {
            episodes: VecDeque::with_capacity(capacity.min(1024)),
            capacity: capacity.max(1),
            window,
            total_diversity: 0.0,
            stores_since_rebuild: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn total_diversity(&self) -> f64 {
        self.total_diversity
    }

    pub fn get(&self, i: usize) -> &Trajectory {
        &self.episodes[i]
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Trajectory> {
        self.episodes.iter()
    }

    /// Appends an episode, evicting the oldest one when full.
    pub fn store_episode(&mut self, trajectory: Trajectory) {
        let evicted = if self.episodes.len() == self.capacity {
            self.episodes.pop_front()
        } else {
            None
        };
        self.episodes.push_back(trajectory);
        self.stores_since_rebuild += 1;
        if evicted.is_some() || self.stores_since_rebuild >= RECOMPUTE_EVERY {
            self.rebuild_total();
        } else {
            self.total_diversity += self.episodes.back().map_or(0.0, |t| t.diversity);
        }
    }

    fn rebuild_total(&mut self) {
        self.total_diversity = self.episodes.iter().map(|t| t.diversity).sum();
        self.stores_since_rebuild = 0;
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = BufferCheckpoint {
            version: BUFFER_FORMAT_VERSION,
            capacity: self.capacity,
            window: self.window,
            episodes: self.episodes.iter().cloned().collect(),
        };
        fs::write(path, serde_json::to_vec(&ckpt)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: BufferCheckpoint = serde_json::from_slice(&fs::read(path)?)?;
        if ckpt.version != BUFFER_FORMAT_VERSION {
            return Err(ReplayError::Version(ckpt.version));
        }
        let mut buffer = Self::new(ckpt.capacity, ckpt.window)?;
        for t in ckpt.episodes {
            buffer.episodes.push_back(t);
        }
        buffer.rebuild_total();
        Ok(buffer)
    }
}

#[derive(Serialize, Deserialize)]
struct BufferCheckpoint {
    version: u32,
    capacity: usize,
    window: usize,
    episodes: Vec<Trajectory>,
}

/// `m` draws with replacement, episode `i` with probability `d_i / Σ d`.
/// Falls back to uniform draws when the buffer holds no diversity at all.
pub fn sample_trajectories(
    buffer: &EpisodicBuffer,
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<usize>> {
    if buffer.is_empty() {
        return Err(ReplayError::EmptyBuffer);
    }
    if buffer.total_diversity < 1e-12 {
        return sample_trajectories_uniform(buffer, m, rng);
    }
    let mut cumulative = Vec::with_capacity(buffer.len());
    let mut acc = 0.0;
    for t in &buffer.episodes {
        acc += t.diversity;
        cumulative.push(acc);
    }
    Ok((0..m)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let i = cumulative.partition_point(|&c| c <= u);
            // u < acc, but guard the rounding edge
            i.min(buffer.len() - 1)
        })
        .collect())
}

pub fn sample_trajectories_uniform(
    buffer: &EpisodicBuffer,
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<usize>> {
    if buffer.is_empty() {
        return Err(ReplayError::EmptyBuffer);
    }
    Ok((0..m).map(|_| rng.random_range(0..buffer.len())).collect())
}

/// A replayed transition with its (possibly) relabelled goal and reward.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTransition {
    pub base: Transition,
    pub relabelled_goal: GoalVector,
    pub recomputed_reward: f64,
}

/// With probability `her_ratio` swaps the desired goal for a uniformly chosen
/// future achieved goal and recomputes the reward.
pub fn relabel(
    transition: &Transition,
    future_achieved: &[GoalVector],
    her_ratio: f64,
    reward: &GoalReward,
    rng: &mut dyn RngCore,
) -> Result<CandidateTransition> {
    let goal = if !future_achieved.is_empty() && her_ratio > 0.0 && rng.random::<f64>() < her_ratio
    {
        future_achieved[rng.random_range(0..future_achieved.len())].clone()
    } else {
        transition.desired_goal.clone()
    };
    let recomputed_reward = reward.reward(&goal, &transition.achieved_goal_next)?;
    Ok(CandidateTransition {
        base: transition.clone(),
        relabelled_goal: goal,
        recomputed_reward,
    })
}

/// Which replay scheme the learner uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SamplerVariant {
    /// Diversity-weighted trajectories and k-DPP goal selection.
    Dtgsh,
    /// Diversity-weighted trajectories, uniform goal selection.
    Dtsh,
    /// Uniform trajectories, k-DPP goal selection.
    Dgsh,
    /// Plain hindsight replay: uniform everywhere.
    HerUniform,
    /// No relabelling at all.
    None,
}

impl SamplerVariant {
    pub const ALL: [SamplerVariant; 5] = [
        SamplerVariant::Dtgsh,
        SamplerVariant::Dtsh,
        SamplerVariant::Dgsh,
        SamplerVariant::HerUniform,
        SamplerVariant::None,
    ];

    pub fn diverse_trajectories(self) -> bool {
        matches!(self, Self::Dtgsh | Self::Dtsh)
    }

    pub fn diverse_goals(self) -> bool {
        matches!(self, Self::Dtgsh | Self::Dgsh)
    }

    pub fn relabels(self) -> bool {
        !matches!(self, Self::None)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Dtgsh => "dtgsh",
            Self::Dtsh => "dtsh",
            Self::Dgsh => "dgsh",
            Self::HerUniform => "her-uniform",
            Self::None => "none",
        }
    }
}

impl std::str::FromStr for SamplerVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown sampler variant {s:?}"))
    }
}

impl std::fmt::Display for SamplerVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of one minibatch draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinibatchPlan {
    /// Candidate count.
    pub m: usize,
    /// Minibatch size.
    pub k: usize,
    pub her_ratio: f64,
    pub variant: SamplerVariant,
}

#[derive(Debug, Clone)]
pub struct Minibatch {
    pub candidates: Vec<CandidateTransition>,
    /// The k-DPP had to top up a rank-deficient selection uniformly.
    pub fallback: bool,
}

/// Draws `m` candidate transitions and keeps `k` of them.
pub fn sample_minibatch(
    buffer: &EpisodicBuffer,
    plan: &MinibatchPlan,
    reward: &GoalReward,
    rng: &mut dyn RngCore,
    dpp_rng: &mut dyn RngCore,
) -> Result<Minibatch> {
    if plan.k > plan.m {
        return Err(ReplayError::MinibatchTooLarge {
            k: plan.k,
            m: plan.m,
        });
    }
    let her_ratio = if plan.variant.relabels() {
        plan.her_ratio
    } else {
        0.0
    };
    let picks = if plan.variant.diverse_trajectories() {
        sample_trajectories(buffer, plan.m, rng)?
    } else {
        sample_trajectories_uniform(buffer, plan.m, rng)?
    };

    let mut candidates = Vec::with_capacity(plan.m);
    for ep in picks {
        let traj = buffer.get(ep);
        // keep one future goal available when relabelling
        let last = if her_ratio > 0.0 && traj.len() > 1 {
            traj.len() - 1
        } else {
            traj.len()
        };
        let t = rng.random_range(0..last);
        let future = &traj.achieved_goals[t + 1..];
        candidates.push(relabel(
            &traj.transitions[t],
            future,
            her_ratio,
            reward,
            rng,
        )?);
    }

    let (chosen, fallback) = if plan.variant.diverse_goals() {
        let cols = candidates
            .iter()
            .map(|c| c.relabelled_goal.as_slice().to_vec())
            .collect();
        let sample = dpp::kdpp_sample(&FeatureMatrix::new(cols)?, plan.k, dpp_rng)?;
        (sample.indices, sample.fallback)
    } else {
        (index::sample(rng, plan.m, plan.k).into_vec(), false)
    };

    let mut slots: Vec<Option<CandidateTransition>> = candidates.into_iter().map(Some).collect();
    let candidates = chosen
        .into_iter()
        .map(|i| slots[i].take().expect("sampler returned distinct indices"))
        .collect();
    Ok(Minibatch {
        candidates,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GoalMetric;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(v: &[f64]) -> GoalVector {
        GoalVector::new(v.to_vec()).unwrap()
    }

    const REWARD: GoalReward = GoalReward {
        metric: GoalMetric::Euclidean,
        epsilon: 0.05,
    };

    /// Episode whose achieved goals are exactly `goals`.
    fn episode(goals: &[[f64; 2]], desired: [f64; 2], window: usize) -> Trajectory {
        let desired = g(&desired);
        let transitions = goals
            .windows(2)
            .map(|w| {
                let ag = g(&w[1]);
                Transition {
                    state: w[0].to_vec(),
                    action: vec![0.0, 0.0],
                    reward: REWARD.reward(&desired, &ag).unwrap(),
                    next_state: w[1].to_vec(),
                    desired_goal: desired.clone(),
                    achieved_goal_next: ag,
                }
            })
            .collect();
        let achieved = goals.iter().map(|p| g(p)).collect();
        Trajectory::new(transitions, achieved, window).unwrap()
    }

    #[test]
    fn diversity_examples() {
        let same = vec![g(&[0.3, 0.4]); 6];
        assert_eq!(trajectory_diversity(&same, 2).unwrap(), 0.0);
        assert_eq!(trajectory_diversity(&same, 3).unwrap(), 0.0);

        let zigzag = [g(&[1.0, 0.0]), g(&[0.0, 1.0]), g(&[1.0, 0.0])];
        assert!((trajectory_diversity(&zigzag, 2).unwrap() - 2.0).abs() < 1e-10);

        let s = 0.5f64.sqrt();
        let diag = [g(&[1.0, 0.0]), g(&[s, s])];
        assert!((trajectory_diversity(&diag, 2).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn diversity_errors() {
        let goals = vec![g(&[1.0, 0.0]); 3];
        assert!(matches!(
            trajectory_diversity(&goals, 4),
            Err(ReplayError::SequenceTooShort { len: 3, window: 4 })
        ));
        assert!(matches!(
            trajectory_diversity(&goals, 1),
            Err(ReplayError::WindowTooSmall(1))
        ));
    }

    #[test]
    fn trajectory_rejects_mixed_goals() {
        let mut t = episode(&[[0.1, 0.2], [0.2, 0.2], [0.3, 0.2]], [0.5, 0.5], 2);
        let mut transitions = t.transitions.clone();
        transitions[1].desired_goal = g(&[0.9, 0.9]);
        let goals = std::mem::take(&mut t.achieved_goals);
        assert!(matches!(
            Trajectory::new(transitions, goals, 2),
            Err(ReplayError::BadTrajectory(_))
        ));
    }

    #[test]
    fn store_and_evict() {
        let mut buf = EpisodicBuffer::new(2, 2).unwrap();
        let a = episode(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], [0.5, 0.5], 2);
        let still = episode(&[[0.3, 0.3], [0.3, 0.3], [0.3, 0.3]], [0.5, 0.5], 2);
        let b = episode(&[[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], [0.5, 0.5], 2);

        buf.store_episode(a.clone());
        assert_eq!(buf.len(), 1);
        assert!((buf.total_diversity() - a.diversity()).abs() < 1e-12);

        buf.store_episode(still.clone());
        assert_eq!(still.diversity(), 0.0);
        assert!((buf.total_diversity() - a.diversity()).abs() < 1e-12);

        buf.store_episode(b.clone());
        assert_eq!(buf.len(), 2);
        assert_eq!(buf.get(0), &still);
        assert!((buf.total_diversity() - b.diversity()).abs() < 1e-12);
    }

    #[test]
    fn sampling_from_empty_buffer_fails() {
        let buf = EpisodicBuffer::new(4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_trajectories(&buf, 3, &mut rng),
            Err(ReplayError::EmptyBuffer)
        ));
    }

    #[test]
    fn single_episode_is_always_drawn() {
        let mut buf = EpisodicBuffer::new(4, 2).unwrap();
        buf.store_episode(episode(&[[1.0, 0.0], [0.0, 1.0]], [0.5, 0.5], 2));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_trajectories(&buf, 50, &mut rng)
            .unwrap()
            .iter()
            .all(|&i| i == 0));
    }

    #[test]
    fn zero_diversity_is_uniform() {
        let mut buf = EpisodicBuffer::new(4, 2).unwrap();
        for _ in 0..4 {
            buf.store_episode(episode(&[[0.3, 0.3], [0.3, 0.3]], [0.5, 0.5], 2));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        let draws = 40_000;
        for i in sample_trajectories(&buf, draws, &mut rng).unwrap() {
            counts[i] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn zero_diversity_episodes_never_drawn_when_others_exist() {
        let mut buf = EpisodicBuffer::new(8, 2).unwrap();
        buf.store_episode(episode(&[[0.3, 0.3], [0.3, 0.3]], [0.5, 0.5], 2));
        buf.store_episode(episode(&[[1.0, 0.0], [0.0, 1.0]], [0.5, 0.5], 2));
        buf.store_episode(episode(&[[0.3, 0.3], [0.3, 0.3]], [0.5, 0.5], 2));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(sample_trajectories(&buf, 5_000, &mut rng)
            .unwrap()
            .iter()
            .all(|&i| i == 1));
    }

    #[test]
    fn relabel_modes() {
        let t = episode(&[[0.1, 0.1], [0.2, 0.1], [0.9, 0.9]], [0.5, 0.5], 2);
        let tr = &t.transitions()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);

        let c = relabel(tr, &t.achieved_goals()[1..], 0.0, &REWARD, &mut rng).unwrap();
        assert_eq!(c.relabelled_goal, tr.desired_goal);
        assert_eq!(c.recomputed_reward, tr.reward);

        let near = [tr.achieved_goal_next.clone()];
        let c = relabel(tr, &near, 1.0, &REWARD, &mut rng).unwrap();
        assert_eq!(c.recomputed_reward, 0.0);

        let far = [g(&[0.9, 0.9])];
        let c = relabel(tr, &far, 1.0, &REWARD, &mut rng).unwrap();
        assert_eq!(c.relabelled_goal, far[0]);
        assert_eq!(c.recomputed_reward, -1.0);

        let c = relabel(tr, &[], 1.0, &REWARD, &mut rng).unwrap();
        assert_eq!(c.relabelled_goal, tr.desired_goal);
    }

    #[test]
    fn minibatch_k_equals_m_returns_every_candidate() {
        let mut buf = EpisodicBuffer::new(16, 2).unwrap();
        buf.store_episode(episode(
            &[[1.0, 0.0], [0.0, 1.0], [0.7, 0.7], [0.2, 0.9]],
            [0.5, 0.5],
            2,
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut dpp_rng = ChaCha8Rng::seed_from_u64(5 + 100);
        let plan = MinibatchPlan {
            m: 6,
            k: 6,
            her_ratio: 0.8,
            variant: SamplerVariant::Dtgsh,
        };
        let batch = sample_minibatch(&buf, &plan, &REWARD, &mut rng, &mut dpp_rng).unwrap();
        assert_eq!(batch.candidates.len(), 6);
        // six 2-d goals have rank at most 2
        assert!(batch.fallback);
    }

    #[test]
    fn identical_goals_trigger_fallback_with_full_batch() {
        let mut buf = EpisodicBuffer::new(16, 2).unwrap();
        buf.store_episode(episode(&[[0.4, 0.4]; 5], [0.5, 0.5], 2));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut dpp_rng = ChaCha8Rng::seed_from_u64(6 + 100);
        let plan = MinibatchPlan {
            m: 10,
            k: 4,
            her_ratio: 1.0,
            variant: SamplerVariant::Dgsh,
        };
        let batch = sample_minibatch(&buf, &plan, &REWARD, &mut rng, &mut dpp_rng).unwrap();
        assert_eq!(batch.candidates.len(), 4);
        assert!(batch.fallback);
        for c in &batch.candidates {
            assert_eq!(
                c.recomputed_reward,
                REWARD
                    .reward(&c.relabelled_goal, &c.base.achieved_goal_next)
                    .unwrap()
            );
        }
    }

    #[test]
    fn minibatch_rejects_k_above_m() {
        let mut buf = EpisodicBuffer::new(4, 2).unwrap();
        buf.store_episode(episode(&[[1.0, 0.0], [0.0, 1.0]], [0.5, 0.5], 2));
        let plan = MinibatchPlan {
            m: 2,
            k: 3,
            her_ratio: 0.8,
            variant: SamplerVariant::HerUniform,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut dpp_rng = ChaCha8Rng::seed_from_u64(100);
        assert!(matches!(
            sample_minibatch(&buf, &plan, &REWARD, &mut rng, &mut dpp_rng),
            Err(ReplayError::MinibatchTooLarge { k: 3, m: 2 })
        ));
    }

    #[test]
    fn variant_none_keeps_original_goals() {
        let mut buf = EpisodicBuffer::new(4, 2).unwrap();
        buf.store_episode(episode(
            &[[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]],
            [0.5, 0.5],
            2,
        ));
        let plan = MinibatchPlan {
            m: 20,
            k: 8,
            her_ratio: 1.0,
            variant: SamplerVariant::None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut dpp_rng = ChaCha8Rng::seed_from_u64(3 + 100);
        let batch = sample_minibatch(&buf, &plan, &REWARD, &mut rng, &mut dpp_rng).unwrap();
        assert!(batch
            .candidates
            .iter()
            .all(|c| c.relabelled_goal == c.base.desired_goal));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in SamplerVariant::ALL {
            assert_eq!(v.name().parse::<SamplerVariant>().unwrap(), v);
        }
        assert!("dpp".parse::<SamplerVariant>().is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut buf = EpisodicBuffer::new(8, 2).unwrap();
        buf.store_episode(episode(
            &[
                [0.1, 0.2],
                [0.1 + 1e-17, 0.2],
                [std::f64::consts::PI / 7.0, 0.3],
            ],
            [0.123456789012345, 0.5],
            2,
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("buffer.json");
        buf.save(&path).unwrap();
        let back = EpisodicBuffer::load(&path).unwrap();
        assert_eq!(back.len(), buf.len());
        assert_eq!(back.get(0), buf.get(0));
        assert_eq!(
            back.total_diversity().to_bits(),
            buf.total_diversity().to_bits()
        );
    }
}
