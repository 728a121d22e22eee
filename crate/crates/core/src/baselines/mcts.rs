use std::collections::BTreeSet;

use rand::Rng;

use crate::conveyor::{slot_occupancy, ConveyorWorld};
use crate::drone::{request_windows, DroneWorld, RequestStatus};
use crate::problem::{AgentId, Allocation, TaskId, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutPolicy {
    Edd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MctsConfig {
    pub iterations: usize,
    pub depth: usize,
    pub exploration_constant: f64,
    pub rollout: RolloutPolicy,
    /// Cap on candidate tasks per agent in the drone domain.
    pub max_actions: usize,
    pub slot_width: f64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            iterations: 100,
            depth: 20,
            exploration_constant: 1.0,
            rollout: RolloutPolicy::Edd,
            max_actions: 8,
            slot_width: 0.02,
        }
    }
}

/// One agent's choice for the current step: start work on a task now, or wait.
pub type Action = Option<TaskId>;

/// Simulator that MCTS can copy and step forward.
pub trait GenerativeModel: Clone {
    fn is_terminal(&self) -> bool;
    /// Agents that can start something at the current step, in priority order.
    fn deciding_agents(&self) -> Vec<AgentId>;
    /// Candidate tasks for `agent`, most urgent first, skipping tasks in `taken`.
    fn candidates(&self, agent: AgentId, taken: &BTreeSet<TaskId>, cfg: &MctsConfig) -> Vec<TaskId>;
    /// Applies one joint action, advances one step and returns the reward.
    fn step<R: Rng + ?Sized>(&mut self, joint: &[(AgentId, Action)], rng: &mut R) -> f64;
    fn now(&self) -> Time;
}

fn rollout_joint<M: GenerativeModel>(model: &M, fixed: &[(AgentId, Action)], cfg: &MctsConfig) -> Vec<(AgentId, Action)> {
    let mut joint = fixed.to_vec();
    let mut taken: BTreeSet<TaskId> = fixed.iter().filter_map(|&(_, a)| a).collect();
    for agent in model.deciding_agents() {
        if joint.iter().any(|&(a, _)| a == agent) {
            continue;
        }
        let choice = match cfg.rollout {
            RolloutPolicy::Edd => model.candidates(agent, &taken, cfg).first().copied(),
        };
        if let Some(k) = choice {
            taken.insert(k);
        }
        joint.push((agent, choice));
    }
    joint
}

fn simulate<M: GenerativeModel, R: Rng + ?Sized>(model: &M, first: &[(AgentId, Action)], cfg: &MctsConfig, rng: &mut R) -> f64 {
    let mut sim = model.clone();
    let mut total = 0.0;
    let joint = rollout_joint(&sim, first, cfg);
    total += sim.step(&joint, rng);
    for _ in 1..cfg.depth {
        if sim.is_terminal() {
            break;
        }
        let joint = rollout_joint(&sim, &[], cfg);
        total += sim.step(&joint, rng);
    }
    total
}

/// UCT over one agent's immediate action with earlier agents' choices held
/// fixed; later agents and all following steps follow the rollout policy.
fn choose<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    agent: AgentId,
    fixed: &[(AgentId, Action)],
    cfg: &MctsConfig,
    rng: &mut R,
) -> Action {
    let taken: BTreeSet<TaskId> = fixed.iter().filter_map(|&(_, a)| a).collect();
    let mut actions: Vec<Action> = model.candidates(agent, &taken, cfg).into_iter().map(Some).collect();
    if cfg.iterations == 0 || actions.is_empty() {
        return actions.first().copied().flatten();
    }
    // Waiting is listed last so that ties favour acting.
    actions.push(None);
    let mut visits = vec![0usize; actions.len()];
    let mut sums = vec![0.0f64; actions.len()];
    for it in 0..cfg.iterations {
        let pick = if it < actions.len() {
            it
        } else {
            let ln = (it as f64).ln();
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for i in 0..actions.len() {
                let mean = sums[i] / visits[i] as f64;
                let score = mean + cfg.exploration_constant * (ln / visits[i] as f64).sqrt();
                if score > best_score {
                    best_score = score;
                    best = i;
                }
            }
            best
        };
        let mut first = fixed.to_vec();
        first.push((agent, actions[pick]));
        let r = simulate(model, &first, cfg, rng);
        visits[pick] += 1;
        sums[pick] += r;
    }
    let mut best = 0;
    for i in 1..actions.len() {
        if visits[i] == 0 {
            continue;
        }
        let (mi, mb) = (sums[i] / visits[i] as f64, sums[best] / visits[best] as f64);
        if visits[best] == 0 || mi > mb {
            best = i;
        }
    }
    actions[best]
}

/// Joint action for the agents able to act now, chosen one agent at a time
/// in id order. A terminal state yields no actions.
pub fn mcts_plan<M: GenerativeModel, R: Rng + ?Sized>(model: &M, cfg: &MctsConfig, rng: &mut R) -> Vec<(AgentId, Action)> {
    let mut joint = Vec::new();
    if model.is_terminal() {
        return joint;
    }
    for agent in model.deciding_agents() {
        let a = choose(model, agent, &joint, cfg, rng);
        joint.push((agent, a));
    }
    joint
}

/// Turns a joint action into an allocation starting now.
pub fn joint_to_allocation(joint: &[(AgentId, Action)], now: Time) -> Allocation {
    let mut alloc = Allocation::new();
    for &(a, k) in joint {
        if let Some(k) = k {
            alloc.assign(a, k, now);
        }
    }
    alloc
}

/// Conveyor copy used for look-ahead; the event log and history are dropped.
#[derive(Debug, Clone)]
pub struct ConveyorModel(pub ConveyorWorld);

impl ConveyorModel {
    pub fn new(world: &ConveyorWorld) -> Self {
        let mut w = world.clone();
        w.log = None;
        w.finished.clear();
        ConveyorModel(w)
    }
}

impl GenerativeModel for ConveyorModel {
    fn is_terminal(&self) -> bool {
        self.0.is_drained()
    }

    fn deciding_agents(&self) -> Vec<AgentId> {
        self.0.idle_arms()
    }

    /// One candidate per occupied belt slot, most downstream slot first.
    fn candidates(&self, agent: AgentId, taken: &BTreeSet<TaskId>, cfg: &MctsConfig) -> Vec<TaskId> {
        slot_occupancy(&self.0, agent.0 as usize, cfg.slot_width)
            .into_iter()
            .rev()
            .flatten()
            .filter(|k| !taken.contains(k))
            .collect()
    }

    fn step<R: Rng + ?Sized>(&mut self, joint: &[(AgentId, Action)], rng: &mut R) -> f64 {
        let before = self.0.counts.missed;
        let now = self.0.now;
        for &(a, k) in joint {
            self.0.set_pending(a, k.map(|k| (k, now)));
        }
        self.0.end_step(rng);
        self.0.begin_step(rng);
        -((self.0.counts.missed - before) as f64)
    }

    fn now(&self) -> Time {
        self.0.now
    }
}

#[derive(Debug, Clone)]
pub struct DroneModel(pub DroneWorld);

impl DroneModel {
    pub fn new(world: &DroneWorld) -> Self {
        let mut w = world.clone();
        w.log = None;
        w.finished.clear();
        DroneModel(w)
    }
}

impl GenerativeModel for DroneModel {
    fn is_terminal(&self) -> bool {
        self.0.is_drained()
    }

    fn deciding_agents(&self) -> Vec<AgentId> {
        self.0.idle_drones()
    }

    /// Reachable open requests by deadline. Drones at their depot may wait
    /// for a closer request, so only the most urgent few are offered.
    fn candidates(&self, agent: AgentId, taken: &BTreeSet<TaskId>, cfg: &MctsConfig) -> Vec<TaskId> {
        let w = &self.0;
        let drone = &w.drones[agent.0 as usize];
        let mut c: Vec<(Time, TaskId)> = w
            .open_requests()
            .filter(|r| r.status == RequestStatus::Pending && !taken.contains(&r.id))
            .filter_map(|r| request_windows(&w.config.city, drone, r, w.now).map(|(win, _)| (win.upper(), r.id)))
            .collect();
        c.sort();
        c.truncate(cfg.max_actions);
        c.into_iter().map(|(_, k)| k).collect()
    }

    fn step<R: Rng + ?Sized>(&mut self, joint: &[(AgentId, Action)], rng: &mut R) -> f64 {
        let before = self.0.counts.late;
        let now = self.0.now;
        for &(a, k) in joint {
            self.0.set_pending(a, k.map(|k| (k, now)));
        }
        self.0.end_step(rng);
        self.0.begin_step(rng);
        -((self.0.counts.late - before) as f64)
    }

    fn now(&self) -> Time {
        self.0.now
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conveyor::{ArmSpec, BeltConfig, BeltObject, ObjectStatus};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_arm_world(obj_pos: f64) -> ConveyorWorld {
        let config = BeltConfig {
            length: 1.0,
            arms: vec![ArmSpec {
                workspace: (0.05, 0.35),
                grasp_prob: 0.9,
            }],
            speed: 0.07,
            new_object_prob: 0.0,
            downtime: 2,
        };
        let mut w = ConveyorWorld::new(config);
        w.generating = false;
        w.objects.insert(
            TaskId(0),
            BeltObject {
                id: TaskId(0),
                spawn_time: 0,
                spawn_pos: obj_pos,
                arrival_time: 0,
                status: ObjectStatus::OnBelt,
                origin: None,
            },
        );
        w
    }

    #[test]
    fn dominant_task_is_attempted() {
        // The object leaves the workspace after this step, so waiting always misses it.
        let model = ConveyorModel::new(&one_arm_world(0.33));
        let mut hits = 0;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let joint = mcts_plan(&model, &MctsConfig::default(), &mut rng);
            if joint == vec![(AgentId(0), Some(TaskId(0)))] {
                hits += 1;
            }
        }
        assert!(hits >= 48, "{hits}");
    }

    #[test]
    fn zero_iterations_follow_rollout() {
        let model = ConveyorModel::new(&one_arm_world(0.1));
        let cfg = MctsConfig {
            iterations: 0,
            ..MctsConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mcts_plan(&model, &cfg, &mut rng), vec![(AgentId(0), Some(TaskId(0)))]);
    }

    #[test]
    fn terminal_state_is_noop() {
        let mut w = one_arm_world(0.1);
        w.objects.clear();
        let model = ConveyorModel::new(&w);
        assert!(model.is_terminal());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mcts_plan(&model, &MctsConfig::default(), &mut rng).is_empty());
    }

    #[test]
    fn reproducible_for_a_seed() {
        let model = ConveyorModel::new(&one_arm_world(0.2));
        let run = |s| mcts_plan(&model, &MctsConfig::default(), &mut ChaCha8Rng::seed_from_u64(s));
        assert_eq!(run(7), run(7));
        assert_eq!(joint_to_allocation(&run(7), 0).get(AgentId(0)).len(), 1);
    }
}
