//! Hindsight replay that favours episodes with diverse achieved goals and
//! picks relabelling goals with a k-DPP.
//!
//! * [`dpp`]: kernels, determinants, Jacobi eigensolver and the k-DPP sampler.
//! * [`env`]: goal-conditioned environments with sparse rewards.
//! * [`replay`]: episodic buffer with diversity priorities and relabelling.
//! * [`agent`]: a small deterministic policy gradient learner.
//! * [`run`]: training, evaluation and benchmark orchestration.

pub mod agent;
pub mod dpp;
pub mod env;
pub mod replay;
pub mod run;
