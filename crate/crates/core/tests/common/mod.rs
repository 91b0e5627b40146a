#![allow(dead_code)]

use dtgsh::agent::{Agent, AgentConfig};
use dtgsh::env::{EnvSpec, GoalMetric, GoalReward, GoalVector};
use dtgsh::replay::{CandidateTransition, Transition};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Below this magnitude both derivatives count as zero-ish and the check
/// becomes absolute (1e-4 × 1e-5); central differences are accurate to
/// about 1e-10 here.
pub const FD_FLOOR: f64 = 1e-5;

pub fn tiny_spec(state_dim: usize, goal_dim: usize, action_dim: usize) -> EnvSpec {
    EnvSpec {
        state_dim,
        action_dim,
        goal_dim,
        horizon: 5,
        reward: GoalReward {
            metric: GoalMetric::Euclidean,
            epsilon: 0.1,
        },
        action_low: vec![-1.5; action_dim],
        action_high: vec![1.0; action_dim],
    }
}

fn vec_in(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_candidate(rng: &mut ChaCha8Rng, spec: &EnvSpec) -> CandidateTransition {
    let goal = GoalVector::new(vec_in(rng, spec.goal_dim, -1.0, 1.0)).unwrap();
    let reward = if rng.random::<f64>() < 0.3 { 0.0 } else { -1.0 };
    CandidateTransition {
        base: Transition {
            state: vec_in(rng, spec.state_dim, -1.0, 1.0),
            action: vec_in(rng, spec.action_dim, -1.5, 1.0),
            reward,
            next_state: vec_in(rng, spec.state_dim, -1.0, 1.0),
            desired_goal: goal.clone(),
            achieved_goal_next: GoalVector::new(vec![0.0; spec.goal_dim]).unwrap(),
        },
        relabelled_goal: goal,
        recomputed_reward: reward,
    }
}

#[derive(Debug, Default)]
pub struct FdOutcome {
    pub checked: usize,
    pub worst_rel: f64,
    pub failures: Vec<String>,
}

fn compare(out: &mut FdOutcome, what: &str, i: usize, analytic: f64, numeric: f64) {
    let scale = analytic.abs().max(numeric.abs()).max(FD_FLOOR);
    let rel = (analytic - numeric).abs() / scale;
    out.checked += 1;
    out.worst_rel = out.worst_rel.max(rel);
    if rel > FD_REL_TOL {
        out.failures.push(format!(
            "{what}[{i}]: analytic {analytic:e} numeric {numeric:e}"
        ));
    }
}

/// One trial: a randomly initialised tiny agent and batch, every actor and
/// critic gradient component against central differences.
pub fn finite_difference_trial(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state_dim = rng.random_range(1..=3);
    let goal_dim = rng.random_range(1..=2);
    let action_dim = rng.random_range(1..=2);
    let spec = tiny_spec(state_dim, goal_dim, action_dim);
    let config = AgentConfig {
        hidden: vec![rng.random_range(2..=4), rng.random_range(2..=4)],
        gamma: rng.random_range(0.0..0.99),
        action_l2: rng.random_range(0.0..2.0),
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(&spec, config, &mut rng);
    let batch: Vec<_> = (0..rng.random_range(1..=5))
        .map(|_| random_candidate(&mut rng, &spec))
        .collect();
    agent.update_normalizers(
        batch.iter().map(|c| c.base.state.as_slice()),
        batch.iter().map(|c| c.relabelled_goal.as_slice()),
    );
    let report = agent.compute_losses(&batch).unwrap();
    let mut out = FdOutcome::default();

    for i in 0..agent.critic().n_params() {
        let x = agent.critic().params()[i];
        agent.critic_mut().params_mut()[i] = x + FD_STEP;
        let up = agent.compute_losses(&batch).unwrap().critic_loss;
        agent.critic_mut().params_mut()[i] = x - FD_STEP;
        let down = agent.compute_losses(&batch).unwrap().critic_loss;
        agent.critic_mut().params_mut()[i] = x;
        compare(
            &mut out,
            "critic",
            i,
            report.gradients.critic[i],
            (up - down) / (2.0 * FD_STEP),
        );
    }
    for i in 0..agent.actor().n_params() {
        let x = agent.actor().params()[i];
        agent.actor_mut().params_mut()[i] = x + FD_STEP;
        let up = agent.compute_losses(&batch).unwrap().actor_loss;
        agent.actor_mut().params_mut()[i] = x - FD_STEP;
        let down = agent.compute_losses(&batch).unwrap().actor_loss;
        agent.actor_mut().params_mut()[i] = x;
        compare(
            &mut out,
            "actor",
            i,
            report.gradients.actor[i],
            (up - down) / (2.0 * FD_STEP),
        );
    }
    out
}
