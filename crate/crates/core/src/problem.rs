//! Problem model: agents, tasks, time windows, completion models, allocations,
//! conflicts, exact expected-penalty evaluation and the exhaustive oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// Discrete time-step.
pub type Time = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}", self.0)
    }
}

/// Half-open interval `[lower, upper)` of steps at which an attempt may start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeWindow {
    lower: Time,
    upper: Time,
}

impl TimeWindow {
    pub fn new(lower: Time, upper: Time) -> Result<Self> {
        if lower >= upper {
            return Err(Error::InvalidWindow { lower, upper });
        }
        Ok(TimeWindow { lower, upper })
    }

    pub fn lower(&self) -> Time {
        self.lower
    }

    pub fn upper(&self) -> Time {
        self.upper
    }

    pub fn len(&self) -> Time {
        self.upper - self.lower
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: Time) -> bool {
        self.lower <= t && t < self.upper
    }

    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        self.lower < other.upper && other.lower < self.upper
    }

    /// Restricts the window to start no earlier than `t`; `None` if nothing is left.
    pub fn clip_lower(&self, t: Time) -> Option<TimeWindow> {
        let lower = self.lower.max(t);
        (lower < self.upper).then_some(TimeWindow {
            lower,
            upper: self.upper,
        })
    }

    pub fn shift(&self, dt: Time) -> TimeWindow {
        TimeWindow {
            lower: self.lower + dt,
            upper: self.upper + dt,
        }
    }
}

/// Probability that an agent finishes a task within `t` steps of starting it.
#[derive(Debug, Clone, PartialEq)]
pub enum CompletionModel {
    /// Per-step Bernoulli success with probability `p`: `1 - (1 - p)^t`.
    Geometric { p: f64 },
    /// Epanechnikov duration centred at `mu` with half-width `r`.
    Epanechnikov { mu: f64, r: f64 },
    /// Explicit CDF values for `t = 0, 1, 2, ...`; saturates at the last value.
    Table(Vec<f64>),
}

impl CompletionModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            CompletionModel::Geometric { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidModel(format!("geometric p={p} outside [0,1]")));
                }
            }
            CompletionModel::Epanechnikov { mu, r } => {
                if !mu.is_finite() || !r.is_finite() || *mu < 0.0 || *r < 0.0 {
                    return Err(Error::InvalidModel(format!("epanechnikov mu={mu} r={r}")));
                }
            }
            CompletionModel::Table(values) => {
                let mut prev = 0.0;
                for (i, &v) in values.iter().enumerate() {
                    if i == 0 && v != 0.0 {
                        return Err(Error::InvalidModel("table cdf(0) must be 0".into()));
                    }
                    if !(0.0..=1.0).contains(&v) || v < prev {
                        return Err(Error::InvalidModel(format!(
                            "table value {v} at t={i} is not a non-decreasing probability"
                        )));
                    }
                    prev = v;
                }
            }
        }
        Ok(())
    }

    pub fn cdf(&self, t: Time) -> f64 {
        if t <= 0 {
            return 0.0;
        }
        match self {
            CompletionModel::Geometric { p } => crate::conveyor::grasp_cdf(*p, t as u32),
            CompletionModel::Epanechnikov { mu, r } => {
                crate::drone::epan_cdf_unchecked(*mu, *r, t as f64)
            }
            CompletionModel::Table(values) => match values.get(t as usize) {
                Some(v) => *v,
                None => values.last().copied().unwrap_or(0.0),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: TaskId,
    pub penalty: f64,
    /// Steps the agent stays busy after a successful completion.
    pub downtime: Time,
}

impl TaskSpec {
    pub fn unit(id: u32, downtime: Time) -> Self {
        TaskSpec {
            id: TaskId(id),
            penalty: 1.0,
            downtime,
        }
    }
}

/// Agents, tasks, per-pair windows and completion models over a horizon.
///
/// A missing `(agent, task)` window means the agent can never attempt that task.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    agents: Vec<AgentId>,
    tasks: Vec<TaskSpec>,
    horizon: Time,
    windows: BTreeMap<(AgentId, TaskId), TimeWindow>,
    completion: BTreeMap<(AgentId, TaskId), CompletionModel>,
    pair_downtime: BTreeMap<(AgentId, TaskId), Time>,
}

impl ProblemInstance {
    pub fn builder(horizon: Time) -> InstanceBuilder {
        InstanceBuilder {
            inner: ProblemInstance {
                agents: Vec::new(),
                tasks: Vec::new(),
                horizon,
                windows: BTreeMap::new(),
                completion: BTreeMap::new(),
                pair_downtime: BTreeMap::new(),
            },
        }
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn horizon(&self) -> Time {
        self.horizon
    }

    pub fn windows(&self) -> &BTreeMap<(AgentId, TaskId), TimeWindow> {
        &self.windows
    }

    pub fn has_agent(&self, agent: AgentId) -> bool {
        self.agents.binary_search(&agent).is_ok()
    }

    pub fn task(&self, task: TaskId) -> Result<&TaskSpec> {
        self.tasks
            .binary_search_by_key(&task, |t| t.id)
            .map(|i| &self.tasks[i])
            .map_err(|_| Error::UnknownTask(task))
    }

    pub fn penalty(&self, task: TaskId) -> f64 {
        self.task(task).map(|t| t.penalty).unwrap_or(0.0)
    }

    pub fn total_penalty(&self) -> f64 {
        self.tasks.iter().map(|t| t.penalty).sum()
    }

    fn check_pair(&self, agent: AgentId, task: TaskId) -> Result<()> {
        if !self.has_agent(agent) {
            return Err(Error::UnknownAgent(agent));
        }
        self.task(task).map(|_| ())
    }

    pub fn window(&self, agent: AgentId, task: TaskId) -> Option<TimeWindow> {
        self.windows.get(&(agent, task)).copied()
    }

    pub fn completion(&self, agent: AgentId, task: TaskId) -> Option<&CompletionModel> {
        self.completion.get(&(agent, task))
    }

    /// Probability of finishing `task` within `t` steps; 0 for infeasible pairs.
    pub fn cdf(&self, agent: AgentId, task: TaskId, t: Time) -> f64 {
        self.completion(agent, task).map_or(0.0, |m| m.cdf(t))
    }

    pub fn downtime(&self, agent: AgentId, task: TaskId) -> Time {
        if let Some(dt) = self.pair_downtime.get(&(agent, task)) {
            return *dt;
        }
        self.task(task).map(|t| t.downtime).unwrap_or(0)
    }

    pub fn pair_downtimes(&self) -> &BTreeMap<(AgentId, TaskId), Time> {
        &self.pair_downtime
    }

    pub fn completions(&self) -> &BTreeMap<(AgentId, TaskId), CompletionModel> {
        &self.completion
    }

    /// Tasks the agent has a window for, in task-id order.
    pub fn feasible_tasks(&self, agent: AgentId) -> Vec<TaskId> {
        self.windows
            .range((agent, TaskId(0))..=(agent, TaskId(u32::MAX)))
            .map(|((_, k), _)| *k)
            .collect()
    }

    /// Sub-instance with only the given agents and the tasks at least one of them can serve.
    pub fn restrict_agents(&self, keep: &BTreeSet<AgentId>) -> ProblemInstance {
        let windows: BTreeMap<_, _> = self
            .windows
            .iter()
            .filter(|((a, _), _)| keep.contains(a))
            .map(|(k, v)| (*k, *v))
            .collect();
        let used: BTreeSet<TaskId> = windows.keys().map(|(_, k)| *k).collect();
        ProblemInstance {
            agents: self.agents.iter().copied().filter(|a| keep.contains(a)).collect(),
            tasks: self
                .tasks
                .iter()
                .filter(|t| used.contains(&t.id))
                .cloned()
                .collect(),
            horizon: self.horizon,
            completion: self
                .completion
                .iter()
                .filter(|((a, k), _)| keep.contains(a) && used.contains(k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
            pair_downtime: self
                .pair_downtime
                .iter()
                .filter(|((a, k), _)| keep.contains(a) && used.contains(k))
                .map(|(k, v)| (*k, *v))
                .collect(),
            windows,
        }
    }

    /// Same instance with the given tasks removed.
    pub fn without_tasks(&self, drop: &BTreeSet<TaskId>) -> ProblemInstance {
        let keep = |k: &TaskId| !drop.contains(k);
        ProblemInstance {
            agents: self.agents.clone(),
            tasks: self.tasks.iter().filter(|t| keep(&t.id)).cloned().collect(),
            horizon: self.horizon,
            windows: self.windows.iter().filter(|((_, k), _)| keep(k)).map(|(k, v)| (*k, *v)).collect(),
            completion: self
                .completion
                .iter()
                .filter(|((_, k), _)| keep(k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
            pair_downtime: self
                .pair_downtime
                .iter()
                .filter(|((_, k), _)| keep(k))
                .map(|(k, v)| (*k, *v))
                .collect(),
        }
    }
}

pub struct InstanceBuilder {
    inner: ProblemInstance,
}

impl InstanceBuilder {
    pub fn horizon(mut self, horizon: Time) -> Self {
        self.inner.horizon = horizon;
        self
    }

    pub fn agent(mut self, id: u32) -> Self {
        self.inner.agents.push(AgentId(id));
        self
    }

    pub fn agents(mut self, n: u32) -> Self {
        self.inner.agents.extend((0..n).map(AgentId));
        self
    }

    pub fn task(mut self, spec: TaskSpec) -> Self {
        self.inner.tasks.push(spec);
        self
    }

    pub fn window(mut self, agent: u32, task: u32, lower: Time, upper: Time) -> Self {
        // Invalid bounds are re-checked in `build`.
        self.inner.windows.insert(
            (AgentId(agent), TaskId(task)),
            TimeWindow { lower, upper },
        );
        self
    }

    pub fn model(mut self, agent: u32, task: u32, model: CompletionModel) -> Self {
        self.inner
            .completion
            .insert((AgentId(agent), TaskId(task)), model);
        self
    }

    /// Window plus completion model in one call.
    pub fn pair(self, agent: u32, task: u32, lower: Time, upper: Time, model: CompletionModel) -> Self {
        self.window(agent, task, lower, upper).model(agent, task, model)
    }

    pub fn pair_downtime(mut self, agent: u32, task: u32, downtime: Time) -> Self {
        self.inner
            .pair_downtime
            .insert((AgentId(agent), TaskId(task)), downtime);
        self
    }

    pub fn build(self) -> Result<ProblemInstance> {
        let mut inst = self.inner;
        if inst.horizon < 1 {
            return Err(Error::InvalidInstance(format!("horizon {} < 1", inst.horizon)));
        }
        inst.agents.sort();
        inst.agents.dedup();
        inst.tasks.sort_by_key(|t| t.id);
        if inst.tasks.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidInstance("duplicate task id".into()));
        }
        for t in &inst.tasks {
            if !(t.penalty >= 0.0) || t.downtime < 0 {
                return Err(Error::InvalidInstance(format!(
                    "task {} has penalty {} downtime {}",
                    t.id, t.penalty, t.downtime
                )));
            }
        }
        for (&(a, k), w) in &inst.windows {
            inst.check_pair(a, k)?;
            if w.lower < 0 || w.lower >= w.upper || w.upper > inst.horizon {
                return Err(Error::InvalidWindow {
                    lower: w.lower,
                    upper: w.upper,
                });
            }
            match inst.completion.get(&(a, k)) {
                Some(m) => m.validate()?,
                None => return Err(Error::MissingModel(a, k)),
            }
        }
        for &(a, k) in inst.completion.keys().chain(inst.pair_downtime.keys()) {
            inst.check_pair(a, k)?;
        }
        if inst.pair_downtime.values().any(|d| *d < 0) {
            return Err(Error::InvalidInstance("negative downtime".into()));
        }
        Ok(inst)
    }
}

/// True iff the pair has a window and `t` lies inside it.
pub fn attempt_feasible(
    instance: &ProblemInstance,
    agent: AgentId,
    task: TaskId,
    t: Time,
) -> Result<bool> {
    instance.check_pair(agent, task)?;
    Ok(instance.window(agent, task).is_some_and(|w| w.contains(t)))
}

/// `cdf(t^u - t^l)`: no attempt within the window can succeed more often.
pub fn completion_upper_bound(instance: &ProblemInstance, agent: AgentId, task: TaskId) -> Result<f64> {
    instance.check_pair(agent, task)?;
    let w = instance
        .window(agent, task)
        .ok_or(Error::MissingWindow(agent, task))?;
    Ok(instance.cdf(agent, task, w.len()))
}

/// Agent -> ordered `(task, attempt-time)` list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Allocation {
    pub assignments: BTreeMap<AgentId, Vec<(TaskId, Time)>>,
}

impl Allocation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assign(&mut self, agent: AgentId, task: TaskId, t: Time) {
        let list = self.assignments.entry(agent).or_default();
        list.push((task, t));
        list.sort_by_key(|&(k, t)| (t, k));
    }

    pub fn get(&self, agent: AgentId) -> &[(TaskId, Time)] {
        self.assignments.get(&agent).map_or(&[], |v| v.as_slice())
    }

    /// First entry of each agent's list.
    pub fn next_assignment(&self, agent: AgentId) -> Option<(TaskId, Time)> {
        self.get(agent).first().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.values().all(|v| v.is_empty())
    }

    pub fn merge(&mut self, other: Allocation) {
        for (a, list) in other.assignments {
            self.assignments.entry(a).or_default().extend(list);
        }
    }

    /// Every entry lies inside its pair's window.
    pub fn check_windows(&self, instance: &ProblemInstance) -> Result<()> {
        for (&a, list) in &self.assignments {
            for &(k, t) in list {
                if !attempt_feasible(instance, a, k, t)? {
                    return Err(Error::InfeasibleAttempt { agent: a, task: k, t });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conflict {
    pub agents: (AgentId, AgentId),
    pub task: TaskId,
    pub times: (Time, Time),
}

/// Pairs of agents holding the same task where either attempt time falls inside
/// the other agent's window. One conflict per unordered agent pair and task.
pub fn detect_conflicts(instance: &ProblemInstance, alloc: &Allocation) -> Vec<Conflict> {
    let mut by_task: BTreeMap<TaskId, Vec<(AgentId, Time)>> = BTreeMap::new();
    for (&a, list) in &alloc.assignments {
        for &(k, t) in list {
            by_task.entry(k).or_default().push((a, t));
        }
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (&k, holders) in &by_task {
        for (i, &(a1, t1)) in holders.iter().enumerate() {
            for &(a2, t2) in &holders[i + 1..] {
                if a1 == a2 {
                    continue;
                }
                let (lo, hi, tlo, thi) = if a1 < a2 { (a1, a2, t1, t2) } else { (a2, a1, t2, t1) };
                let inside_lo = instance.window(lo, k).is_some_and(|w| w.contains(thi));
                let inside_hi = instance.window(hi, k).is_some_and(|w| w.contains(tlo));
                if (inside_lo || inside_hi) && seen.insert((lo, hi, k)) {
                    out.push(Conflict {
                        agents: (lo, hi),
                        task: k,
                        times: (tlo, thi),
                    });
                }
            }
        }
    }
    out
}

/// A single agent's full contingency plan under end-of-window outcomes.
#[derive(Debug, Clone, PartialEq)]
pub enum ContingentPlan {
    Done,
    Attempt {
        task: TaskId,
        time: Time,
        on_success: Box<ContingentPlan>,
        on_failure: Box<ContingentPlan>,
    },
}

impl ContingentPlan {
    pub fn attempt(task: TaskId, time: Time, on_success: ContingentPlan, on_failure: ContingentPlan) -> Self {
        ContingentPlan::Attempt {
            task,
            time,
            on_success: Box::new(on_success),
            on_failure: Box::new(on_failure),
        }
    }

    /// Chain of attempts whose continuation ignores the outcome.
    pub fn sequence(steps: &[(TaskId, Time)]) -> Self {
        steps.iter().rev().fold(ContingentPlan::Done, |rest, &(k, t)| {
            ContingentPlan::attempt(k, t, rest.clone(), rest)
        })
    }

    /// Tasks appearing anywhere in the plan.
    pub fn tasks(&self, out: &mut BTreeSet<TaskId>) {
        if let ContingentPlan::Attempt {
            task,
            on_success,
            on_failure,
            ..
        } = self
        {
            out.insert(*task);
            on_success.tasks(out);
            on_failure.tasks(out);
        }
    }
}

pub type JointPolicy = BTreeMap<AgentId, ContingentPlan>;

/// Outcome branch of one agent: probability and the set of tasks completed.
type Branch = (f64, BTreeSet<TaskId>);

fn agent_branches(
    instance: &ProblemInstance,
    agent: AgentId,
    plan: &ContingentPlan,
    busy: Time,
    attempted: &mut BTreeSet<TaskId>,
    prob: f64,
    done: &mut BTreeSet<TaskId>,
    out: &mut Vec<Branch>,
) -> Result<()> {
    match plan {
        ContingentPlan::Done => {
            out.push((prob, done.clone()));
            Ok(())
        }
        ContingentPlan::Attempt {
            task,
            time,
            on_success,
            on_failure,
        } => {
            let w = instance
                .window(agent, *task)
                .filter(|w| w.contains(*time))
                .ok_or(Error::InfeasibleAttempt {
                    agent,
                    task: *task,
                    t: *time,
                })?;
            if *time < busy || !attempted.insert(*task) {
                return Err(Error::InfeasibleAttempt {
                    agent,
                    task: *task,
                    t: *time,
                });
            }
            let q = instance.cdf(agent, *task, w.upper() - *time);
            done.insert(*task);
            agent_branches(
                instance,
                agent,
                on_success,
                w.upper() + instance.downtime(agent, *task),
                attempted,
                prob * q,
                done,
                out,
            )?;
            done.remove(task);
            agent_branches(instance, agent, on_failure, w.upper(), attempted, prob * (1.0 - q), done, out)?;
            attempted.remove(task);
            Ok(())
        }
    }
}

/// Exact expectation of the summed penalty of tasks left incomplete, by
/// enumerating every joint outcome branch of the agents' plans.
pub fn evaluate_expected_penalty(instance: &ProblemInstance, policy: &JointPolicy) -> Result<f64> {
    let mut per_agent = Vec::with_capacity(policy.len());
    for (&a, plan) in policy {
        if !instance.has_agent(a) {
            return Err(Error::UnknownAgent(a));
        }
        let mut branches = Vec::new();
        agent_branches(
            instance,
            a,
            plan,
            Time::MIN,
            &mut BTreeSet::new(),
            1.0,
            &mut BTreeSet::new(),
            &mut branches,
        )?;
        per_agent.push(branches);
    }
    let mut total = 0.0;
    joint_expectation(instance, &per_agent, 0, 1.0, &mut BTreeSet::new(), &mut total);
    Ok(total)
}

fn joint_expectation(
    instance: &ProblemInstance,
    per_agent: &[Vec<Branch>],
    idx: usize,
    prob: f64,
    done: &mut BTreeSet<TaskId>,
    total: &mut f64,
) {
    if idx == per_agent.len() {
        let missed: f64 = instance
            .tasks()
            .iter()
            .filter(|t| !done.contains(&t.id))
            .map(|t| t.penalty)
            .sum();
        *total += prob * missed;
        return;
    }
    for (p, completed) in &per_agent[idx] {
        if *p == 0.0 {
            continue;
        }
        let added: Vec<TaskId> = completed.iter().filter(|k| done.insert(**k)).copied().collect();
        joint_expectation(instance, per_agent, idx + 1, prob * p, done, total);
        for k in added {
            done.remove(&k);
        }
    }
}

/// Default enumeration budget for [`brute_force_optimal`].
pub const DEFAULT_ORACLE_BUDGET: u64 = 10_000_000;

/// Every contingent plan over `tasks` (already in sweep order) that attempts
/// tasks in that order at the earliest feasible step.
fn enumerate_plans(
    instance: &ProblemInstance,
    agent: AgentId,
    tasks: &[TaskId],
    busy: Time,
    budget: &mut u64,
) -> Result<Vec<ContingentPlan>> {
    let Some((&k, rest)) = tasks.split_first() else {
        return Ok(vec![ContingentPlan::Done]);
    };
    let mut plans = enumerate_plans(instance, agent, rest, busy, budget)?;
    let w = instance.window(agent, k).ok_or(Error::MissingWindow(agent, k))?;
    let start = w.lower().max(busy);
    if start < w.upper() {
        let on_success = enumerate_plans(instance, agent, rest, w.upper() + instance.downtime(agent, k), budget)?;
        let on_failure = enumerate_plans(instance, agent, rest, w.upper(), budget)?;
        let count = (on_success.len() * on_failure.len()) as u64;
        if count > *budget {
            return Err(Error::BudgetExceeded);
        }
        *budget -= count;
        for s in &on_success {
            for f in &on_failure {
                plans.push(ContingentPlan::attempt(k, start, s.clone(), f.clone()));
            }
        }
    }
    Ok(plans)
}

/// Exhaustive optimum over conflict-free contingent policies: every assignment
/// of tasks to at most one owning agent, times every plan of every agent over
/// its owned tasks, each scored by [`evaluate_expected_penalty`].
pub fn brute_force_optimal(instance: &ProblemInstance) -> Result<(JointPolicy, f64)> {
    brute_force_optimal_with_budget(instance, DEFAULT_ORACLE_BUDGET)
}

pub fn brute_force_optimal_with_budget(instance: &ProblemInstance, budget: u64) -> Result<(JointPolicy, f64)> {
    let mut budget = budget;
    let tasks: Vec<TaskId> = instance.tasks().iter().map(|t| t.id).collect();
    let agents = instance.agents().to_vec();
    // owners[i] = candidate owners of task i (None = nobody).
    let owners: Vec<Vec<Option<AgentId>>> = tasks
        .iter()
        .map(|&k| {
            std::iter::once(None)
                .chain(agents.iter().filter(|&&a| instance.window(a, k).is_some()).map(|&a| Some(a)))
                .collect()
        })
        .collect();

    let mut plan_cache: BTreeMap<(AgentId, Vec<TaskId>), Vec<ContingentPlan>> = BTreeMap::new();
    let mut best: Option<(JointPolicy, f64)> = None;
    let mut choice = vec![0usize; tasks.len()];
    loop {
        let mut owned: BTreeMap<AgentId, Vec<TaskId>> = BTreeMap::new();
        for (i, &c) in choice.iter().enumerate() {
            if let Some(a) = owners[i][c] {
                owned.entry(a).or_default().push(tasks[i]);
            }
        }
        let mut plan_sets: Vec<(AgentId, Vec<ContingentPlan>)> = Vec::new();
        for (a, mut ks) in owned {
            ks.sort_by_key(|&k| (instance.window(a, k).map(|w| (w.lower(), w.upper())), k));
            if let std::collections::btree_map::Entry::Vacant(e) = plan_cache.entry((a, ks.clone())) {
                let plans = enumerate_plans(instance, a, &ks, Time::MIN, &mut budget)?;
                e.insert(plans);
            }
            plan_sets.push((a, plan_cache[&(a, ks)].clone()));
        }
        let mut idx = vec![0usize; plan_sets.len()];
        loop {
            let policy: JointPolicy = plan_sets
                .iter()
                .zip(&idx)
                .map(|((a, plans), &i)| (*a, plans[i].clone()))
                .collect();
            let cost = 1u64 << tasks.len().min(40);
            if cost > budget {
                return Err(Error::BudgetExceeded);
            }
            budget -= cost;
            let value = evaluate_expected_penalty(instance, &policy)?;
            if best.as_ref().is_none_or(|(_, v)| value < *v) {
                best = Some((policy, value));
            }
            if !advance(&mut idx, |j| plan_sets[j].1.len()) {
                break;
            }
        }
        if !advance(&mut choice, |i| owners[i].len()) {
            break;
        }
    }
    Ok(best.unwrap_or_else(|| (JointPolicy::new(), instance.total_penalty())))
}

/// Mixed-radix counter increment; false once it wraps around.
fn advance(digits: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for (i, d) in digits.iter_mut().enumerate() {
        *d += 1;
        if *d < radix(i) {
            return true;
        }
        *d = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(p: f64) -> CompletionModel {
        CompletionModel::Geometric { p }
    }

    fn one_window() -> ProblemInstance {
        ProblemInstance::builder(10)
            .agents(1)
            .task(TaskSpec::unit(0, 0))
            .task(TaskSpec::unit(1, 0))
            .pair(0, 0, 2, 7, geo(0.5))
            .build()
            .unwrap()
    }

    #[test]
    fn attempt_window_boundaries() {
        let inst = one_window();
        assert!(attempt_feasible(&inst, AgentId(0), TaskId(0), 2).unwrap());
        assert!(!attempt_feasible(&inst, AgentId(0), TaskId(0), 7).unwrap());
        assert!(!attempt_feasible(&inst, AgentId(0), TaskId(1), 3).unwrap());
        assert!(matches!(
            attempt_feasible(&inst, AgentId(4), TaskId(0), 3),
            Err(Error::UnknownAgent(_))
        ));
        assert!(matches!(
            attempt_feasible(&inst, AgentId(0), TaskId(9), 3),
            Err(Error::UnknownTask(_))
        ));
    }

    #[test]
    fn upper_bound_values() {
        let inst = ProblemInstance::builder(10)
            .agents(1)
            .task(TaskSpec::unit(0, 0))
            .task(TaskSpec::unit(1, 0))
            .pair(0, 0, 3, 5, geo(0.75))
            .pair(0, 1, 0, 5, CompletionModel::Table(vec![0.0, 1.0]))
            .build()
            .unwrap();
        assert_eq!(completion_upper_bound(&inst, AgentId(0), TaskId(0)).unwrap(), 0.9375);
        assert_eq!(completion_upper_bound(&inst, AgentId(0), TaskId(1)).unwrap(), 1.0);
        assert!(TimeWindow::new(4, 4).is_err());
        let bad = ProblemInstance::builder(10)
            .agents(1)
            .task(TaskSpec::unit(0, 0))
            .pair(0, 0, 4, 4, geo(0.75))
            .build();
        assert!(matches!(bad, Err(Error::InvalidWindow { .. })));
        assert!(matches!(
            completion_upper_bound(&one_window(), AgentId(0), TaskId(1)),
            Err(Error::MissingWindow(..))
        ));
    }

    #[test]
    fn conflicts_follow_window_predicate() {
        let inst = ProblemInstance::builder(20)
            .agents(3)
            .task(TaskSpec::unit(1, 0))
            .task(TaskSpec::unit(2, 0))
            .pair(0, 1, 0, 5, geo(0.5))
            .pair(2, 1, 2, 6, geo(0.5))
            .pair(1, 2, 0, 5, geo(0.5))
            .pair(0, 2, 10, 15, geo(0.5))
            .build()
            .unwrap();
        let mut alloc = Allocation::new();
        alloc.assign(AgentId(0), TaskId(1), 0);
        alloc.assign(AgentId(2), TaskId(1), 2);
        let c = detect_conflicts(&inst, &alloc);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].agents, (AgentId(0), AgentId(2)));
        assert_eq!(c[0].task, TaskId(1));

        let mut distinct = Allocation::new();
        distinct.assign(AgentId(0), TaskId(1), 0);
        distinct.assign(AgentId(1), TaskId(2), 0);
        assert!(detect_conflicts(&inst, &distinct).is_empty());

        // Same task, disjoint windows, neither attempt inside the other window.
        let mut disjoint = Allocation::new();
        disjoint.assign(AgentId(1), TaskId(2), 1);
        disjoint.assign(AgentId(0), TaskId(2), 11);
        assert!(detect_conflicts(&inst, &disjoint).is_empty());
    }

    #[test]
    fn expected_penalty_by_enumeration() {
        let inst = ProblemInstance::builder(10)
            .agents(1)
            .task(TaskSpec::unit(0, 0))
            .task(TaskSpec::unit(1, 0))
            .task(TaskSpec::unit(2, 0))
            .pair(0, 0, 0, 2, geo(0.75))
            .pair(0, 1, 4, 5, geo(0.5))
            .build()
            .unwrap();
        let empty = JointPolicy::new();
        assert_eq!(evaluate_expected_penalty(&inst, &empty).unwrap(), 3.0);

        let single: JointPolicy = [(AgentId(0), ContingentPlan::sequence(&[(TaskId(0), 0)]))].into();
        assert!((evaluate_expected_penalty(&inst, &single).unwrap() - (0.0625 + 2.0)).abs() < 1e-15);

        // Two tasks with success 0.9375 and 0.5: (1-0.9375)+(1-0.5)+1 unattempted.
        let both: JointPolicy = [(AgentId(0), ContingentPlan::sequence(&[(TaskId(0), 0), (TaskId(1), 4)]))].into();
        assert!((evaluate_expected_penalty(&inst, &both).unwrap() - (0.0625 + 0.5 + 1.0)).abs() < 1e-15);

        let outside: JointPolicy = [(AgentId(0), ContingentPlan::sequence(&[(TaskId(1), 7)]))].into();
        assert!(matches!(
            evaluate_expected_penalty(&inst, &outside),
            Err(Error::InfeasibleAttempt { .. })
        ));
    }

    #[test]
    fn expected_penalty_two_tasks_four_branches() {
        let inst = ProblemInstance::builder(10)
            .agents(1)
            .task(TaskSpec::unit(0, 0))
            .task(TaskSpec::unit(1, 0))
            .pair(0, 0, 0, 1, geo(0.75))
            .pair(0, 1, 1, 2, geo(0.5))
            .build()
            .unwrap();
        let p: JointPolicy = [(AgentId(0), ContingentPlan::sequence(&[(TaskId(0), 0), (TaskId(1), 1)]))].into();
        // Branches: ss 0.375*0, sf 0.375*1, fs 0.125*1, ff 0.125*2.
        assert!((evaluate_expected_penalty(&inst, &p).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn oracle_small_cases() {
        let one = ProblemInstance::builder(5)
            .agents(1)
            .task(TaskSpec::unit(0, 0))
            .pair(0, 0, 0, 1, geo(0.9))
            .build()
            .unwrap();
        let (_, v) = brute_force_optimal(&one).unwrap();
        assert!((v - 0.1).abs() < 1e-12);

        let none = ProblemInstance::builder(5).agents(2).build().unwrap();
        assert_eq!(brute_force_optimal(&none).unwrap().1, 0.0);

        let shared = ProblemInstance::builder(5)
            .agents(2)
            .task(TaskSpec::unit(0, 0))
            .pair(0, 0, 0, 1, geo(0.9))
            .pair(1, 0, 0, 1, geo(0.5))
            .build()
            .unwrap();
        let (policy, v) = brute_force_optimal(&shared).unwrap();
        assert!((v - 0.1).abs() < 1e-12);
        let mut owned = BTreeSet::new();
        policy[&AgentId(0)].tasks(&mut owned);
        assert!(owned.contains(&TaskId(0)));
        assert!(policy.get(&AgentId(1)).is_none_or(|p| *p == ContingentPlan::Done));
    }

    #[test]
    fn oracle_budget_fails_loudly() {
        let mut b = ProblemInstance::builder(12).agents(1);
        for k in 0..4 {
            b = b.task(TaskSpec::unit(k, 0)).pair(0, k, 0, 12, geo(0.3));
        }
        let inst = b.build().unwrap();
        assert!(matches!(
            brute_force_optimal_with_budget(&inst, 10),
            Err(Error::BudgetExceeded)
        ));
    }
}
