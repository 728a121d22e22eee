//! Online experiment runner: interleaves planning and execution in either
//! domain, sweeps parameters and reports miss/late fractions and timings.
//!
//! Every trial owns three ChaCha8 streams derived from `(seed, trial)`: task
//! generation, execution outcomes and planner randomness. All planners in a
//! sweep therefore see the same arrivals for a given trial index.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::mcts::{joint_to_allocation, mcts_plan, ConveyorModel, DroneModel, MctsConfig};
use crate::baselines::qlearning::{qlearn_train, QLearnConfig, QPolicy};
use crate::baselines::{edd_assign, hungarian_assign, AssignmentMatrix};
use crate::conveyor::{self, generate_step, window_for, BeltConfig, ConveyorWorld, GeneratorState};
use crate::coordination::allocate_components;
use crate::drone::{self, generate_requests, DroneConfig, DroneWorld};
use crate::error::{Error, Result};
use crate::policy_tree::plan_tree;
use crate::problem::{AgentId, Allocation, CompletionModel, ProblemInstance, TaskId, TaskSpec, Time};
use crate::search::{SearchConfig, TieBreak};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Conveyor,
    Drone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Planner {
    Scoba,
    Edd,
    Hungarian,
    Mcts,
    Qlearning,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Conveyor => "conveyor",
            Domain::Drone => "drone",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "conveyor" => Ok(Domain::Conveyor),
            "drone" => Ok(Domain::Drone),
            _ => Err(Error::Config(format!("unknown domain `{s}`"))),
        }
    }
}

impl Planner {
    pub const ALL: [Planner; 5] = [Planner::Scoba, Planner::Edd, Planner::Hungarian, Planner::Mcts, Planner::Qlearning];

    pub fn name(self) -> &'static str {
        match self {
            Planner::Scoba => "scoba",
            Planner::Edd => "edd",
            Planner::Hungarian => "hungarian",
            Planner::Mcts => "mcts",
            Planner::Qlearning => "qlearning",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Planner::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown planner `{s}`")))
    }
}

/// One experimental setting. Config files are flat `key = value` lines
/// (TOML syntax); unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub domain: Domain,
    pub planner: Planner,
    /// Steps with new arrivals; 500 on the conveyor and 100 for drones when unset.
    pub horizon: Option<Time>,
    pub trials: usize,
    pub seed: u64,

    pub grasp_prob: f64,
    /// Per-arm grasp probabilities; overrides `grasp_prob`.
    pub grasp_probs: Option<Vec<f64>>,
    pub speed: f64,
    pub new_object_prob: f64,

    pub depots: usize,
    pub drones: usize,
    pub new_request_prob: f64,
    pub noisy_return: bool,

    /// Constraint-tree expansions per call; 0 means unlimited.
    pub conflict_budget: usize,
    pub truncate: bool,
    pub tie_break: TieBreak,

    pub mcts_iterations: usize,
    pub mcts_depth: usize,
    pub mcts_exploration: f64,
    pub mcts_max_actions: usize,

    pub qlearn_steps: usize,
    pub qlearn_learning_rate: f64,
    pub qlearn_epsilon_decay: f64,
    pub qlearn_discretization: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        let m = MctsConfig::default();
        let q = QLearnConfig::default();
        TrialConfig {
            domain: Domain::Conveyor,
            planner: Planner::Scoba,
            horizon: None,
            trials: 100,
            seed: 0,
            grasp_prob: 0.75,
            grasp_probs: None,
            speed: 0.07,
            new_object_prob: 0.75,
            depots: 3,
            drones: 18,
            new_request_prob: 0.5,
            noisy_return: false,
            conflict_budget: crate::search::DEFAULT_CONFLICT_BUDGET,
            truncate: true,
            tie_break: TieBreak::EarliestAttempt,
            mcts_iterations: m.iterations,
            mcts_depth: m.depth,
            mcts_exploration: m.exploration_constant,
            mcts_max_actions: m.max_actions,
            qlearn_steps: q.training_steps,
            qlearn_learning_rate: q.learning_rate,
            qlearn_epsilon_decay: q.epsilon_decay,
            qlearn_discretization: q.belt_discretization,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")))
    }
}

impl TrialConfig {
    pub fn conveyor(planner: Planner) -> Self {
        TrialConfig {
            planner,
            ..TrialConfig::default()
        }
    }

    pub fn drone(planner: Planner, depots: usize, drones: usize, new_request_prob: f64) -> Self {
        TrialConfig {
            domain: Domain::Drone,
            planner,
            depots,
            drones,
            new_request_prob,
            ..TrialConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrialConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn horizon(&self) -> Time {
        self.horizon.unwrap_or(match self.domain {
            Domain::Conveyor => 500,
            Domain::Drone => 100,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon() < 0 {
            return Err(Error::Config("horizon must be non-negative".into()));
        }
        match self.domain {
            Domain::Conveyor => {
                for &p in self.grasp_probs.as_deref().unwrap_or(&[self.grasp_prob]) {
                    check_prob("grasp_prob", p)?;
                }
                if let Some(ps) = &self.grasp_probs {
                    if ps.len() != 3 {
                        return Err(Error::Config("grasp_probs needs one value per arm (3)".into()));
                    }
                }
                check_prob("new_object_prob", self.new_object_prob)?;
                if !(self.speed > 0.0 && self.speed <= 1.0) {
                    return Err(Error::Config(format!("speed must lie in (0, 1], got {}", self.speed)));
                }
            }
            Domain::Drone => {
                check_prob("new_request_prob", self.new_request_prob)?;
                if self.planner == Planner::Qlearning {
                    return Err(Error::Config("q-learning is only available on the conveyor".into()));
                }
                if self.drones == 0 {
                    return Err(Error::Config("need at least one drone".into()));
                }
                crate::drone::CityModel::standard(self.depots).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn belt_config(&self) -> BeltConfig {
        match &self.grasp_probs {
            Some(ps) => BeltConfig::with_grasp_probs(ps, self.speed, self.new_object_prob),
            None => BeltConfig::standard(self.grasp_prob, self.speed, self.new_object_prob),
        }
    }

    pub fn drone_config(&self) -> Result<DroneConfig> {
        let mut cfg = DroneConfig::standard(self.depots, self.drones, self.new_request_prob)?;
        cfg.noisy_return = self.noisy_return;
        Ok(cfg)
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            conflict_budget: (self.conflict_budget > 0).then_some(self.conflict_budget),
            truncate: self.truncate,
            trace: false,
            tie_break: self.tie_break,
        }
    }

    pub fn mcts_config(&self) -> MctsConfig {
        MctsConfig {
            iterations: self.mcts_iterations,
            depth: self.mcts_depth,
            exploration_constant: self.mcts_exploration,
            max_actions: self.mcts_max_actions,
            ..MctsConfig::default()
        }
    }

    pub fn qlearn_config(&self) -> QLearnConfig {
        QLearnConfig {
            training_steps: self.qlearn_steps,
            learning_rate: self.qlearn_learning_rate,
            epsilon_decay: self.qlearn_epsilon_decay,
            belt_discretization: self.qlearn_discretization,
            ..QLearnConfig::default()
        }
    }

    /// Sets one named parameter from its textual value. `fleet` takes
    /// `<depots>x<drones>`.
    pub fn set_param(&mut self, name: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(name: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{v}` for {name}")))
        }
        match name {
            "grasp_prob" => self.grasp_prob = num(name, value)?,
            "speed" => self.speed = num(name, value)?,
            "new_object_prob" => self.new_object_prob = num(name, value)?,
            "new_request_prob" => self.new_request_prob = num(name, value)?,
            "depots" => self.depots = num(name, value)?,
            "drones" => self.drones = num(name, value)?,
            "horizon" => self.horizon = Some(num(name, value)?),
            "conflict_budget" => self.conflict_budget = num(name, value)?,
            "mcts_iterations" => self.mcts_iterations = num(name, value)?,
            "fleet" => {
                let (d, n) = value
                    .split_once('x')
                    .ok_or_else(|| Error::Config(format!("fleet expects <depots>x<drones>, got `{value}`")))?;
                self.depots = num(name, d)?;
                self.drones = num(name, n)?;
            }
            "planner" => self.planner = Planner::parse(value)?,
            "domain" => self.domain = Domain::parse(value)?,
            _ => return Err(Error::Config(format!("cannot sweep over `{name}`"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub trial: u64,
    pub total_tasks: usize,
    pub unsuccessful: usize,
    pub fraction: f64,
    pub planner_calls: usize,
    pub planner_time_mean: f64,
    pub planner_time_max: f64,
}

/// Generation, execution and planner streams of one trial.
pub fn trial_rngs(seed: u64, trial: u64) -> [ChaCha8Rng; 3] {
    let stream = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial.wrapping_mul(4).wrapping_add(k));
        rng
    };
    [stream(0), stream(1), stream(2)]
}

/// Planner state shared by all trials of one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: TrialConfig,
    pub policy: Option<Arc<QPolicy>>,
}

/// Validates the config and trains the Q-table once when needed.
pub fn prepare(config: &TrialConfig) -> Result<Prepared> {
    config.validate()?;
    let policy = if config.planner == Planner::Qlearning {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(u64::MAX);
        Some(Arc::new(qlearn_train(&config.belt_config(), &config.qlearn_config(), &mut rng)?))
    } else {
        None
    };
    Ok(Prepared {
        config: config.clone(),
        policy,
    })
}

fn plan_static(planner: Planner, inst: &ProblemInstance, cfg: &TrialConfig) -> Result<Allocation> {
    if inst.tasks().is_empty() {
        return Ok(Allocation::new());
    }
    Ok(match planner {
        Planner::Scoba => allocate_components(inst, &cfg.search_config())?.allocation,
        Planner::Edd => edd_assign(inst, &inst.agents().iter().copied().collect()),
        Planner::Hungarian => hungarian_assign(&AssignmentMatrix::from_instance(inst, inst.agents())),
        Planner::Mcts | Planner::Qlearning => unreachable!("stateful planners are handled by the caller"),
    })
}

/// Online SCoBA state. When the conflict budget runs out, agents that lost a
/// tie keep their remaining entries for now and are replanned at the next
/// step over the tasks the other agents do not hold.
#[derive(Debug, Default)]
pub struct ScobaSession {
    kept: Allocation,
    unassigned: BTreeSet<AgentId>,
}

impl ScobaSession {
    pub fn pending(&self) -> bool {
        !self.unassigned.is_empty()
    }

    /// `event` forces a full replan; otherwise only carried-over agents are planned.
    pub fn plan(&mut self, inst: &ProblemInstance, event: bool, cfg: &SearchConfig) -> Result<Option<Allocation>> {
        if event {
            self.kept = Allocation::new();
            self.unassigned.clear();
            return self.solve_with(inst, Allocation::new(), cfg).map(Some);
        }
        if self.unassigned.is_empty() {
            return Ok(None);
        }
        let held: BTreeSet<TaskId> = self.kept.assignments.values().flatten().map(|&(k, _)| k).collect();
        let sub = inst.restrict_agents(&self.unassigned).without_tasks(&held);
        let kept = std::mem::take(&mut self.kept);
        self.unassigned.clear();
        self.solve_with(&sub, kept, cfg).map(Some)
    }

    fn solve_with(&mut self, inst: &ProblemInstance, mut kept: Allocation, cfg: &SearchConfig) -> Result<Allocation> {
        let out = if inst.tasks().is_empty() {
            crate::coordination::Combined::default()
        } else {
            allocate_components(inst, cfg)?
        };
        let mut full = kept.clone();
        full.merge(out.allocation.clone());
        for (a, list) in out.allocation.assignments {
            if !out.unassigned.contains(&a) {
                kept.assignments.insert(a, list);
            }
        }
        self.kept = kept;
        self.unassigned = out.unassigned;
        Ok(full)
    }
}

#[derive(Default)]
struct Clock {
    times: Vec<f64>,
}

impl Clock {
    fn time<T>(&mut self, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f();
        self.times.push(t.elapsed().as_secs_f64());
        out
    }

    fn summary(&self) -> (usize, f64, f64) {
        let n = self.times.len();
        let mean = if n == 0 { 0.0 } else { self.times.iter().sum::<f64>() / n as f64 };
        (n, mean, self.times.iter().copied().fold(0.0, f64::max))
    }
}

/// Simulates one trial, replanning whenever an arrival, completion, failure
/// or expiry happens. Identical `(config, trial)` give identical task
/// outcomes; only the timing columns vary between runs.
pub fn run_prepared(prepared: &Prepared, trial: u64) -> Result<TrialMetrics> {
    let cfg = &prepared.config;
    let [mut gen, mut exec, mut plan_rng] = trial_rngs(cfg.seed, trial);
    let mut clock = Clock::default();
    let mut session = ScobaSession::default();
    let scfg = cfg.search_config();
    let (total, failed) = match cfg.domain {
        Domain::Conveyor => {
            let mut world = ConveyorWorld::new(cfg.belt_config());
            let counts = conveyor::run_episode(&mut world, cfg.horizon(), &mut gen, &mut exec, |w, event| {
                if cfg.planner == Planner::Scoba {
                    if !event && !session.pending() {
                        return Ok(None);
                    }
                    return clock.time(|| session.plan(&w.planning_instance(), event, &scfg));
                }
                if !event {
                    return Ok(None);
                }
                clock
                    .time(|| match cfg.planner {
                        Planner::Mcts => {
                            let joint = mcts_plan(&ConveyorModel::new(w), &cfg.mcts_config(), &mut plan_rng);
                            Ok(joint_to_allocation(&joint, w.now))
                        }
                        Planner::Qlearning => Ok(prepared.policy.as_ref().expect("trained in prepare").act(w)),
                        p => plan_static(p, &w.planning_instance(), cfg),
                    })
                    .map(Some)
            })?;
            (counts.spawned, counts.missed)
        }
        Domain::Drone => {
            let mut world = DroneWorld::new(cfg.drone_config()?);
            let counts = drone::run_episode(&mut world, cfg.horizon(), &mut gen, &mut exec, |w, event| {
                if cfg.planner == Planner::Scoba {
                    if !event && !session.pending() {
                        return Ok(None);
                    }
                    return clock.time(|| session.plan(&w.planning_instance(), event, &scfg));
                }
                if !event {
                    return Ok(None);
                }
                clock
                    .time(|| match cfg.planner {
                        Planner::Mcts => {
                            let joint = mcts_plan(&DroneModel::new(w), &cfg.mcts_config(), &mut plan_rng);
                            Ok(joint_to_allocation(&joint, w.now))
                        }
                        Planner::Qlearning => Err(Error::Config("q-learning is only available on the conveyor".into())),
                        p => plan_static(p, &w.planning_instance(), cfg),
                    })
                    .map(Some)
            })?;
            (counts.requests, counts.late)
        }
    };
    let (calls, mean, max) = clock.summary();
    Ok(TrialMetrics {
        trial,
        total_tasks: total,
        unsuccessful: failed,
        fraction: if total == 0 { 0.0 } else { failed as f64 / total as f64 },
        planner_calls: calls,
        planner_time_mean: mean,
        planner_time_max: max,
    })
}

pub fn run_trial(config: &TrialConfig, trial: u64) -> Result<TrialMetrics> {
    run_prepared(&prepare(config)?, trial)
}

/// All trials of a config on the current rayon pool, in trial order.
pub fn run_trials(config: &TrialConfig) -> Result<Vec<TrialMetrics>> {
    let prepared = prepare(config)?;
    (0..config.trials as u64)
        .into_par_iter()
        .map(|t| run_prepared(&prepared, t))
        .collect()
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub domain: String,
    pub planner: String,
    pub param: String,
    pub value: String,
    pub trials: usize,
    pub mean_fraction: f64,
    pub stderr: f64,
    pub mean_planner_time: f64,
}

pub fn summarize(config: &TrialConfig, param: &str, value: &str, metrics: &[TrialMetrics]) -> SweepRow {
    let fractions: Vec<f64> = metrics.iter().map(|m| m.fraction).collect();
    let (mean, se) = mean_stderr(&fractions);
    let times: Vec<f64> = metrics.iter().map(|m| m.planner_time_mean).collect();
    SweepRow {
        domain: config.domain.name().into(),
        planner: config.planner.name().into(),
        param: param.into(),
        value: value.into(),
        trials: metrics.len(),
        mean_fraction: mean,
        stderr: se,
        mean_planner_time: mean_stderr(&times).0,
    }
}

/// A base config, one parameter to vary and the planners to compare.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub base: TrialConfig,
    pub sweep: SweepAxis,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: String,
    pub values: Vec<String>,
    pub planners: Vec<Planner>,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Configs in report order: values outer, planners inner.
    pub fn expand(&self) -> Result<Vec<(String, TrialConfig)>> {
        let mut out = Vec::new();
        for v in &self.sweep.values {
            for &p in &self.sweep.planners {
                let mut cfg = self.base.clone();
                cfg.planner = p;
                cfg.set_param(&self.sweep.param, v)?;
                cfg.validate()?;
                out.push((v.clone(), cfg));
            }
        }
        Ok(out)
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.expand()?
        .into_iter()
        .map(|(v, cfg)| Ok(summarize(&cfg, &spec.sweep.param, &v, &run_trials(&cfg)?)))
        .collect()
}

/// Perfect-grasp grid over belt speed and new-object probability for SCoBA.
pub fn oracle_grid(base: &TrialConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for speed in ["0.04", "0.07", "0.1"] {
        for prob in ["0.5", "0.75", "1.0"] {
            let mut cfg = base.clone();
            cfg.domain = Domain::Conveyor;
            cfg.planner = Planner::Scoba;
            cfg.grasp_prob = 1.0;
            cfg.grasp_probs = None;
            cfg.set_param("speed", speed)?;
            cfg.set_param("new_object_prob", prob)?;
            let metrics = run_trials(&cfg)?;
            rows.push(summarize(&cfg, "speed,new_object_prob", &format!("{speed},{prob}"), &metrics));
        }
    }
    Ok(rows)
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Planner wall-clock per call (logging disabled), with tree sizes for SCoBA.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub domain: String,
    pub planner: String,
    pub setting: String,
    pub tasks: usize,
    pub reps: usize,
    pub mean_seconds: f64,
    pub stderr_seconds: f64,
    pub mean_tree_nodes: f64,
}

/// Single-arm instance over the first `objects` objects of a generated belt
/// stream; every object's window for the upstream arm is kept.
pub fn conveyor_timing_instance(belt: &BeltConfig, objects: usize, rng: &mut ChaCha8Rng) -> ProblemInstance {
    let mut gen = GeneratorState::default();
    let mut all = Vec::new();
    let mut now = 0;
    while all.len() < objects {
        all.extend(generate_step(&mut gen, belt, now, rng));
        now += 1;
    }
    all.truncate(objects);
    let arm = &belt.arms[0];
    let mut b = ProblemInstance::builder(1).agent(0);
    let mut horizon = 1;
    for obj in &all {
        if let Some(w) = window_for(arm, obj, belt.speed, 0) {
            horizon = horizon.max(w.upper());
            b = b
                .task(TaskSpec::unit(obj.id.0, belt.downtime))
                .pair(0, obj.id.0, w.lower(), w.upper(), CompletionModel::Geometric { p: arm.grasp_prob });
        }
    }
    b.horizon(horizon).build().expect("timing instance is well formed")
}

/// Fresh city with `requests` open requests at minute 0.
pub fn drone_timing_instance(cfg: &DroneConfig, requests: usize, rng: &mut ChaCha8Rng) -> ProblemInstance {
    let mut world = DroneWorld::new(cfg.clone());
    let mut next_id = 0;
    for req in generate_requests(&cfg.city, 1.0, rng, 0, &mut next_id, requests) {
        world.requests.insert(req.id, req);
    }
    world.planning_instance()
}

fn time_reps(reps: usize, mut f: impl FnMut(usize) -> Result<usize>) -> Result<(f64, f64, f64)> {
    let mut secs = Vec::with_capacity(reps);
    let mut nodes = Vec::with_capacity(reps);
    for r in 0..reps {
        let t = Instant::now();
        let n = f(r)?;
        secs.push(t.elapsed().as_secs_f64());
        nodes.push(n as f64);
    }
    let (m, se) = mean_stderr(&secs);
    Ok((m, se, mean_stderr(&nodes).0))
}

/// Conveyor: single-arm tree build vs object count. Drone: full allocation
/// vs fleet and request count. EDD and Hungarian are timed on the same instances.
pub fn timing_report(config: &TrialConfig) -> Result<Vec<TimingRow>> {
    let reps = config.trials.max(1);
    let mut rows = Vec::new();
    let mut push = |planner: &str, setting: String, tasks: usize, (m, se, nodes): (f64, f64, f64)| {
        rows.push(TimingRow {
            domain: config.domain.name().into(),
            planner: planner.into(),
            setting,
            tasks,
            reps,
            mean_seconds: m,
            stderr_seconds: se,
            mean_tree_nodes: nodes,
        });
    };
    let instances = |make: &dyn Fn(&mut ChaCha8Rng) -> ProblemInstance| -> Vec<ProblemInstance> {
        (0..reps as u64)
            .map(|r| make(&mut trial_rngs(config.seed, r)[0].clone()))
            .collect()
    };
    match config.domain {
        Domain::Conveyor => {
            let belt = config.belt_config();
            for n in [40, 80, 120, 160, 200] {
                let insts = instances(&|rng| conveyor_timing_instance(&belt, n, rng));
                let setting = format!("objects={n}");
                push(
                    "scoba",
                    setting.clone(),
                    n,
                    time_reps(reps, |r| {
                        let inst = &insts[r];
                        let tasks: Vec<_> = inst.tasks().iter().map(|t| t.id).collect();
                        Ok(plan_tree(inst, AgentId(0), &tasks, false)?.len())
                    })?,
                );
                push_baselines(&mut push, &insts, &setting, n, config)?;
            }
        }
        Domain::Drone => {
            for (depots, drones) in [(3, 18), (5, 15), (5, 30)] {
                let dcfg = DroneConfig::standard(depots, drones, config.new_request_prob)?;
                for n in [20, 50, 100] {
                    let insts = instances(&|rng| drone_timing_instance(&dcfg, n, rng));
                    let setting = format!("{depots}x{drones}");
                    let scfg = config.search_config();
                    push(
                        "scoba",
                        setting.clone(),
                        n,
                        time_reps(reps, |r| Ok(allocate_components(&insts[r], &scfg)?.tree_nodes))?,
                    );
                    push_baselines(&mut push, &insts, &setting, n, config)?;
                }
            }
        }
    }
    Ok(rows)
}

fn push_baselines(
    push: &mut impl FnMut(&str, String, usize, (f64, f64, f64)),
    insts: &[ProblemInstance],
    setting: &str,
    n: usize,
    config: &TrialConfig,
) -> Result<()> {
    for p in [Planner::Edd, Planner::Hungarian] {
        let stats = time_reps(insts.len(), |r| plan_static(p, &insts[r], config).map(|_| 0))?;
        push(p.name(), setting.to_string(), n, stats);
    }
    Ok(())
}
