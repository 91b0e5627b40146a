//! Browser demo: k-DPP versus uniform goal picking, trajectory diversity of a
//! drawn path, and point-push rollouts. The plain functions carry the logic;
//! the `#[wasm_bindgen]` wrappers only convert errors.

use dtgsh::dpp::{self, KernelMatrix};
use dtgsh::env::{scripted_push_action, GoalEnv, GoalVector, PointPush, PointPushParams};
use dtgsh::replay;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// Values per rollout frame: agent x/y, block x/y, goal x/y.
pub const FRAME: usize = 6;

fn pairs(points: &[f64]) -> Result<Vec<[f64; 2]>, String> {
    if !points.len().is_multiple_of(2) {
        return Err("points must be x,y pairs".into());
    }
    Ok(points.chunks_exact(2).map(|p| [p[0], p[1]]).collect())
}

/// Gaussian similarity between 2-D points.
pub fn rbf_kernel(points: &[[f64; 2]], bandwidth: f64) -> KernelMatrix {
    let n = points.len();
    let mut entries = Vec::with_capacity(n * n);
    for a in points {
        for b in points {
            let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
            entries.push((-d2 / (2.0 * bandwidth * bandwidth)).exp());
        }
    }
    KernelMatrix::from_row_major(n, entries).expect("square symmetric kernel")
}

/// Picks `k` of the points, either by a k-DPP over an RBF kernel or
/// uniformly without replacement.
pub fn pick_goals(
    points: &[f64],
    k: usize,
    seed: u64,
    diverse: bool,
    bandwidth: f64,
) -> Result<Vec<usize>, String> {
    let pts = pairs(points)?;
    if k == 0 || k > pts.len() {
        return Err(format!("cannot pick {k} of {} points", pts.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = if diverse {
        let l = rbf_kernel(&pts, bandwidth);
        dpp::kdpp_sample_kernel(&l, k, &mut rng)
            .map_err(|e| e.to_string())?
            .indices
    } else {
        index::sample(&mut rng, pts.len(), k).into_vec()
    };
    picked.sort_unstable();
    Ok(picked)
}

/// Diversity score of a drawn path of 2-D achieved goals.
pub fn path_diversity(points: &[f64], window: usize) -> Result<f64, String> {
    let goals = pairs(points)?
        .into_iter()
        .map(|p| GoalVector::new(p.to_vec()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    replay::trajectory_diversity(&goals, window).map_err(|e| e.to_string())
}

/// One point-push episode, driven by the scripted pusher or by uniformly
/// random velocities. Returns `horizon + 1` frames of [`FRAME`] values.
pub fn push_rollout(seed: u64, scripted: bool) -> Vec<f64> {
    let mut env = PointPush::new(PointPushParams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    env.reset(&mut rng);
    let speed = env.params().max_speed;
    let mut frames = Vec::with_capacity((env.params().horizon + 1) * FRAME);
    let push_frame = |env: &PointPush, frames: &mut Vec<f64>| {
        frames.extend(env.agent());
        frames.extend(env.block());
        frames.extend(env.goal());
    };
    push_frame(&env, &mut frames);
    loop {
        let action = if scripted {
            scripted_push_action(&env)
        } else {
            vec![
                rng.random_range(-speed..speed),
                rng.random_range(-speed..speed),
            ]
        };
        let step = env.step(&action).expect("episode still running");
        push_frame(&env, &mut frames);
        if step.terminal {
            return frames;
        }
    }
}

#[wasm_bindgen(js_name = pickGoals)]
pub fn pick_goals_js(
    points: Vec<f64>,
    k: usize,
    seed: u32,
    diverse: bool,
    bandwidth: f64,
) -> Result<Vec<u32>, JsError> {
    pick_goals(&points, k, seed.into(), diverse, bandwidth)
        .map(|v| v.into_iter().map(|i| i as u32).collect())
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = pathDiversity)]
pub fn path_diversity_js(points: Vec<f64>, window: usize) -> Result<f64, JsError> {
    path_diversity(&points, window).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = pushRollout)]
pub fn push_rollout_js(seed: u32, scripted: bool) -> Vec<f64> {
    push_rollout(seed.into(), scripted)
}

#[wasm_bindgen(js_name = goalTolerance)]
pub fn goal_tolerance() -> f64 {
    PointPushParams::default().epsilon
}
