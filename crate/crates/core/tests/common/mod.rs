#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scoba::problem::InstanceBuilder;
use scoba::{CompletionModel, ProblemInstance, TaskSpec, Time};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn model(rng: &mut ChaCha8Rng, len: Time) -> CompletionModel {
    if rng.gen_bool(0.5) {
        CompletionModel::Geometric {
            p: (rng.gen_range(1..=9) as f64) / 10.0,
        }
    } else {
        // Non-decreasing table over the window length.
        let mut v = vec![0.0];
        let mut acc = 0.0;
        for _ in 0..len {
            acc = f64::min(1.0, acc + rng.gen_range(0.0..0.5));
            v.push(acc);
        }
        CompletionModel::Table(v)
    }
}

/// Small static instance: every task has one window shared by each agent
/// able to serve it (at least one), with random per-pair completion models.
pub fn small_static_instance(rng: &mut ChaCha8Rng, max_agents: u32, max_tasks: u32, max_horizon: Time) -> ProblemInstance {
    let agents = rng.gen_range(1..=max_agents);
    let tasks = rng.gen_range(1..=max_tasks);
    let horizon = rng.gen_range(4..=max_horizon);
    let mut b: InstanceBuilder = ProblemInstance::builder(horizon).agents(agents);
    for k in 0..tasks {
        let penalty = if rng.gen_bool(0.7) { 1.0 } else { rng.gen_range(1..=3) as f64 };
        b = b.task(TaskSpec {
            penalty,
            ..TaskSpec::unit(k, rng.gen_range(0..=3))
        });
        let lo = rng.gen_range(0..horizon - 1);
        let hi = rng.gen_range(lo + 1..=horizon.min(lo + 6));
        let mut servers: Vec<u32> = (0..agents).filter(|_| rng.gen_bool(0.6)).collect();
        if servers.is_empty() {
            servers.push(rng.gen_range(0..agents));
        }
        for a in servers {
            let m = model(rng, hi - lo);
            b = b.pair(a, k, lo, hi, m);
        }
    }
    b.build().expect("generated instance is valid")
}
