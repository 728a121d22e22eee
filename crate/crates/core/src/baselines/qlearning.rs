use std::fmt::Write as _;

use rand::Rng;

use crate::conveyor::{slot_occupancy, BeltConfig, ConveyorWorld};
use crate::error::{Error, Result};
use crate::problem::{AgentId, Allocation, Time};

#[derive(Debug, Clone, PartialEq)]
pub struct QLearnConfig {
    pub learning_rate: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub training_steps: usize,
    pub belt_discretization: f64,
    pub discount: f64,
    /// Training episode length before the belt is reset.
    pub episode_len: Time,
    pub max_states: usize,
}

impl Default for QLearnConfig {
    fn default() -> Self {
        QLearnConfig {
            learning_rate: 0.01,
            epsilon_decay: 0.9995,
            epsilon_min: 0.01,
            training_steps: 100_000,
            belt_discretization: 0.05,
            discount: 0.95,
            episode_len: 500,
            max_states: 1 << 20,
        }
    }
}

/// Tabular action values. Action 0 is idle, action `j + 1` grasps the object
/// in slot `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub states: usize,
    pub actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize, cap: usize) -> Result<Self> {
        if states > cap {
            return Err(Error::Resource(format!("{states} states exceed the cap of {cap}")));
        }
        Ok(QTable {
            states,
            actions,
            values: vec![0.0; states * actions],
        })
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    /// Best valid action; ties go to the lowest index.
    pub fn greedy(&self, s: usize, valid: &[usize]) -> usize {
        let mut best = valid[0];
        for &a in &valid[1..] {
            if self.get(s, a) > self.get(s, best) {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, s: usize, valid: &[usize]) -> f64 {
        valid.iter().map(|&a| self.get(s, a)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn update(&mut self, s: usize, a: usize, target: f64, lr: f64) {
        let q = &mut self.values[s * self.actions + a];
        *q += lr * (target - *q);
    }

    /// Plain-text dump: a header line `qtable <states> <actions>`, then one
    /// line per state with the state index followed by its action values.
    pub fn to_text(&self) -> String {
        let mut out = format!("qtable {} {}\n", self.states, self.actions);
        for s in 0..self.states {
            let row = &self.values[s * self.actions..(s + 1) * self.actions];
            if row.iter().all(|&q| q == 0.0) {
                continue;
            }
            let _ = write!(out, "{s}");
            for q in row {
                let _ = write!(out, " {q:e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty q-table"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 || h[0] != "qtable" {
            return Err(err(1, "expected `qtable <states> <actions>`"));
        }
        let states: usize = h[1].parse().map_err(|_| err(1, "bad state count"))?;
        let actions: usize = h[2].parse().map_err(|_| err(1, "bad action count"))?;
        let mut table = QTable::new(states, actions, usize::MAX)?;
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let s: usize = fields
                .next()
                .and_then(|f| f.parse().ok())
                .filter(|&s| s < states)
                .ok_or_else(|| err(line_no, "bad state index"))?;
            let row: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(line_no, "bad action value"))?;
            if row.len() != actions {
                return Err(err(line_no, "wrong number of action values"));
            }
            table.values[s * actions..(s + 1) * actions].copy_from_slice(&row);
        }
        Ok(table)
    }
}

/// Arm-local view shared by all arms: slot occupancy plus remaining downtime.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmEncoding {
    pub slots: usize,
    pub downtime: Time,
    pub slot_width: f64,
}

impl ArmEncoding {
    pub fn for_belt(config: &BeltConfig, slot_width: f64) -> Self {
        let width = config.arms.iter().map(|a| a.workspace.1 - a.workspace.0).fold(0.0, f64::max);
        ArmEncoding {
            slots: ((width / slot_width).round() as usize).max(1),
            downtime: config.downtime,
            slot_width,
        }
    }

    /// Busy levels: remaining downtime 0..=downtime, plus one for an attempt in progress.
    pub fn states(&self) -> usize {
        (1usize << self.slots.min(63)) * (self.downtime as usize + 2)
    }

    pub fn actions(&self) -> usize {
        self.slots + 1
    }

    /// State index and valid actions of one arm.
    pub fn observe(&self, world: &ConveyorWorld, arm: usize) -> (usize, Vec<usize>, Vec<Option<crate::TaskId>>) {
        let occ = slot_occupancy(world, arm, self.slot_width);
        let state = &world.arms[arm];
        let busy = if state.attempt.is_some() {
            self.downtime + 1
        } else {
            (state.available_at - world.now).clamp(0, self.downtime)
        };
        let mut mask = 0usize;
        for (j, o) in occ.iter().enumerate().take(self.slots) {
            if o.is_some() {
                mask |= 1 << j;
            }
        }
        let mut valid = vec![0];
        if busy == 0 {
            valid.extend(occ.iter().enumerate().filter(|(_, o)| o.is_some()).map(|(j, _)| j + 1));
        }
        (mask * (self.downtime as usize + 2) + busy as usize, valid, occ)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QPolicy {
    pub encoding: ArmEncoding,
    pub table: QTable,
}

impl QPolicy {
    pub fn untrained(belt: &BeltConfig, cfg: &QLearnConfig) -> Result<Self> {
        let encoding = ArmEncoding::for_belt(belt, cfg.belt_discretization);
        let table = QTable::new(encoding.states(), encoding.actions(), cfg.max_states)?;
        Ok(QPolicy { encoding, table })
    }

    /// Greedy decisions for the idle arms, starting now.
    pub fn act(&self, world: &ConveyorWorld) -> Allocation {
        let mut alloc = Allocation::new();
        for a in world.idle_arms() {
            let (s, valid, occ) = self.encoding.observe(world, a.0 as usize);
            let action = self.table.greedy(s, &valid);
            if action > 0 {
                if let Some(k) = occ[action - 1] {
                    alloc.assign(a, k, world.now);
                }
            }
        }
        alloc
    }
}

/// Independent learners sharing one table, trained on simulated belts. Each
/// arm is penalised for every object that leaves its workspace unpicked.
pub fn qlearn_train<R: Rng + ?Sized>(belt: &BeltConfig, cfg: &QLearnConfig, rng: &mut R) -> Result<QPolicy> {
    let mut policy = QPolicy::untrained(belt, cfg)?;
    let enc = policy.encoding.clone();
    let n = belt.arms.len();
    let mut world = ConveyorWorld::new(belt.clone());
    world.begin_step(rng);
    let mut epsilon = 1.0f64;
    for _ in 0..cfg.training_steps {
        if world.now >= cfg.episode_len {
            world = ConveyorWorld::new(belt.clone());
            world.begin_step(rng);
        }
        let mut taken = Vec::with_capacity(n);
        for i in 0..n {
            let (s, valid, occ) = enc.observe(&world, i);
            let a = if rng.gen_bool(epsilon) {
                valid[rng.gen_range(0..valid.len())]
            } else {
                policy.table.greedy(s, &valid)
            };
            if a > 0 {
                world.set_pending(AgentId(i as u32), occ[a - 1].map(|k| (k, world.now)));
            }
            taken.push((s, a));
        }
        let before = world.passed_unpicked.clone();
        world.end_step(rng);
        world.begin_step(rng);
        for (i, &(s, a)) in taken.iter().enumerate() {
            let r = -((world.passed_unpicked[i] - before[i]) as f64);
            let (s2, valid2, _) = enc.observe(&world, i);
            let target = r + cfg.discount * policy.table.max_value(s2, &valid2);
            policy.table.update(s, a, target, cfg.learning_rate);
        }
        epsilon = (epsilon * cfg.epsilon_decay).max(cfg.epsilon_min);
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn untrained_ties_pick_lowest_index() {
        let t = QTable::new(4, 3, 10).unwrap();
        assert_eq!(t.greedy(2, &[0, 1, 2]), 0);
        assert_eq!(t.greedy(2, &[2, 1]), 2);
    }

    #[test]
    fn state_cap_is_enforced() {
        assert!(matches!(QTable::new(11, 2, 10), Err(Error::Resource(_))));
        let cfg = QLearnConfig {
            max_states: 100,
            ..QLearnConfig::default()
        };
        assert!(QPolicy::untrained(&BeltConfig::standard(0.75, 0.07, 0.75), &cfg).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut t = QTable::new(5, 2, 10).unwrap();
        t.update(3, 1, -0.7, 0.5);
        t.update(0, 0, 0.125, 1.0);
        assert_eq!(QTable::parse(&t.to_text()).unwrap(), t);
        assert!(QTable::parse("qtable 2 2\n5 0 0\n").is_err());
        assert!(QTable::parse("nope").is_err());
    }

    /// One object drifting through `n` slots; grasping succeeds surely and
    /// ends the episode, leaving the last slot unpicked costs 1.
    fn chain_value_iteration(n: usize, gamma: f64) -> Vec<[f64; 2]> {
        let mut q = vec![[0.0f64; 2]; n];
        for _ in 0..1000 {
            for s in (0..n).rev() {
                let next = if s + 1 < n { q[s + 1][0].max(q[s + 1][1]) } else { 0.0 };
                let idle = if s + 1 < n { gamma * next } else { -1.0 };
                q[s] = [idle, 0.0];
            }
        }
        q
    }

    #[test]
    fn tiny_mdp_matches_value_iteration() {
        let (n, gamma) = (4, 0.95);
        let exact = chain_value_iteration(n, gamma);
        let mut t = QTable::new(n, 2, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20_000 {
            let mut s = 0;
            loop {
                let a = rng.gen_range(0..2);
                if a == 1 {
                    t.update(s, 1, 0.0, 0.05);
                    break;
                }
                if s + 1 == n {
                    t.update(s, 0, -1.0, 0.05);
                    break;
                }
                let target = gamma * t.max_value(s + 1, &[0, 1]);
                t.update(s, 0, target, 0.05);
                s += 1;
            }
        }
        // Upstream slots tie (the object can still be grasped later); the last one does not.
        assert_eq!(t.greedy(n - 1, &[0, 1]), 1);
        assert!(exact[n - 1][1] > exact[n - 1][0]);
        for s in 0..n {
            for a in 0..2 {
                assert!((t.get(s, a) - exact[s][a]).abs() < 0.02, "{s} {a}");
            }
        }
    }

    #[test]
    fn empty_belt_stays_idle() {
        let belt = BeltConfig::standard(1.0, 0.07, 0.75);
        let cfg = QLearnConfig {
            training_steps: 2000,
            ..QLearnConfig::default()
        };
        let policy = qlearn_train(&belt, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let world = ConveyorWorld::new(belt);
        assert!(policy.act(&world).is_empty());
    }

    #[test]
    fn trained_policy_grasps_single_object() {
        let belt = BeltConfig::standard(1.0, 0.07, 0.75);
        let cfg = QLearnConfig {
            training_steps: 100_000,
            ..QLearnConfig::default()
        };
        let policy = qlearn_train(&belt, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let enc = &policy.encoding;
        // Object in the most downstream slot of an idle arm: waiting loses it.
        let s = (1usize << (enc.slots - 1)) * (enc.downtime as usize + 2);
        assert_eq!(policy.table.greedy(s, &[0, enc.slots]), enc.slots);
    }
}
