//! Best-first search over a binary constraint tree. Each node excludes some
//! tasks from some agents, replans those agents with their policy tree, and
//! resolves the earliest remaining conflict by branching on who gives up the
//! task.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::policy_tree::{plan_tree, PolicyTree};
use crate::problem::{completion_upper_bound, detect_conflicts, AgentId, Allocation, Conflict, JointPolicy, ProblemInstance, TaskId};

pub const DEFAULT_CONFLICT_BUDGET: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    /// Maximum number of conflict expansions; `None` searches to completion.
    pub conflict_budget: Option<usize>,
    /// Plan only each agent's leading block of coupled tasks.
    pub truncate: bool,
    pub trace: bool,
    /// Who keeps a contested task when the budget runs out.
    pub tie_break: TieBreak,
}

/// Keeper of a contested task after the conflict budget is exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestId,
    /// Earliest planned attempt, then highest success bound, then lowest id.
    EarliestAttempt,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            conflict_budget: Some(DEFAULT_CONFLICT_BUDGET),
            truncate: true,
            trace: false,
            tie_break: TieBreak::LowestId,
        }
    }
}

impl SearchConfig {
    /// Complete, untruncated search.
    pub fn exact() -> Self {
        SearchConfig {
            conflict_budget: None,
            truncate: false,
            trace: false,
            tie_break: TieBreak::LowestId,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentPlan {
    pub tree: Arc<PolicyTree>,
    /// Expected penalty this agent's policy saves over leaving everything.
    pub saved: f64,
    pub entries: Vec<(TaskId, crate::Time)>,
}

impl AgentPlan {
    fn new(instance: &ProblemInstance, agent: AgentId, tasks: &[TaskId], cfg: &SearchConfig) -> Result<Self> {
        let tree = plan_tree(instance, agent, tasks, cfg.truncate)?;
        let considered: f64 = tree.considered_tasks.iter().map(|&k| instance.penalty(k)).sum();
        let saved = considered - tree.root_value();
        let entries = tree.policy_entries();
        Ok(AgentPlan {
            tree: Arc::new(tree),
            saved,
            entries,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintTreeNode {
    pub constraints: BTreeMap<AgentId, BTreeSet<TaskId>>,
    pub plans: BTreeMap<AgentId, AgentPlan>,
    pub solution: Allocation,
    /// Total penalty minus the penalty every agent expects to save. Equals the
    /// sum of the agents' root values with each task's penalty counted once.
    pub cost: f64,
}

impl ConstraintTreeNode {
    fn from_plans(
        instance: &ProblemInstance,
        constraints: BTreeMap<AgentId, BTreeSet<TaskId>>,
        plans: BTreeMap<AgentId, AgentPlan>,
    ) -> Self {
        let mut solution = Allocation::new();
        for (&a, p) in &plans {
            if !p.entries.is_empty() {
                solution.assignments.insert(a, p.entries.clone());
            }
        }
        let cost = instance.total_penalty() - plans.values().map(|p| p.saved).sum::<f64>();
        ConstraintTreeNode {
            constraints,
            plans,
            solution,
            cost,
        }
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.values().map(BTreeSet::len).sum()
    }

    pub fn tree_nodes(&self) -> usize {
        self.plans.values().map(|p| p.tree.len()).sum()
    }

    /// Each agent's optimal contingent policy.
    pub fn joint_policy(&self) -> JointPolicy {
        self.plans
            .iter()
            .map(|(&a, p)| (a, p.tree.optimal_plan()))
            .collect()
    }

    fn key(&self) -> Vec<(AgentId, TaskId)> {
        self.constraints
            .iter()
            .flat_map(|(&a, ks)| ks.iter().map(move |&k| (a, k)))
            .collect()
    }
}

fn planned_tasks(instance: &ProblemInstance, agent: AgentId, excluded: Option<&BTreeSet<TaskId>>) -> Vec<TaskId> {
    instance
        .feasible_tasks(agent)
        .into_iter()
        .filter(|k| excluded.is_none_or(|ex| !ex.contains(k)))
        .collect()
}

/// Unconstrained node: every agent planned independently.
pub fn root_node(instance: &ProblemInstance, cfg: &SearchConfig) -> Result<ConstraintTreeNode> {
    let mut plans = BTreeMap::new();
    for &a in instance.agents() {
        let tasks = planned_tasks(instance, a, None);
        plans.insert(a, AgentPlan::new(instance, a, &tasks, cfg)?);
    }
    Ok(ConstraintTreeNode::from_plans(instance, BTreeMap::new(), plans))
}

/// Copy of `parent` with `task` excluded for `agent` and that agent replanned.
pub fn generate_child(
    parent: &ConstraintTreeNode,
    agent: AgentId,
    task: TaskId,
    instance: &ProblemInstance,
    cfg: &SearchConfig,
) -> Result<ConstraintTreeNode> {
    child_with_cache(parent, agent, task, instance, cfg, &mut PlanCache::new())
}

/// Plans keyed by agent and its excluded tasks; the same exclusion set comes
/// up in many constraint-tree nodes.
type PlanCache = HashMap<(AgentId, BTreeSet<TaskId>), AgentPlan>;

fn child_with_cache(
    parent: &ConstraintTreeNode,
    agent: AgentId,
    task: TaskId,
    instance: &ProblemInstance,
    cfg: &SearchConfig,
    cache: &mut PlanCache,
) -> Result<ConstraintTreeNode> {
    let mut constraints = parent.constraints.clone();
    let excluded = constraints.entry(agent).or_default();
    excluded.insert(task);
    let key = (agent, excluded.clone());
    let plan = match cache.get(&key) {
        Some(p) => p.clone(),
        None => {
            let tasks = planned_tasks(instance, agent, Some(&key.1));
            let p = AgentPlan::new(instance, agent, &tasks, cfg)?;
            cache.insert(key, p.clone());
            p
        }
    };
    let mut plans = parent.plans.clone();
    plans.insert(agent, plan);
    Ok(ConstraintTreeNode::from_plans(instance, constraints, plans))
}

fn involved_agents(conflicts: &[Conflict], task: TaskId) -> BTreeSet<AgentId> {
    conflicts
        .iter()
        .filter(|c| c.task == task)
        .flat_map(|c| [c.agents.0, c.agents.1])
        .collect()
}

/// Conflict to resolve first: smallest overlap start, then lowest task id.
pub fn select_conflict(instance: &ProblemInstance, conflicts: &[Conflict]) -> Option<Conflict> {
    conflicts.iter().copied().min_by_key(|c| {
        let lo = |a| instance.window(a, c.task).map_or(crate::Time::MIN, |w| w.lower());
        (lo(c.agents.0).max(lo(c.agents.1)), c.task, c.agents)
    })
}

/// One child per agent involved in a conflict on the earliest conflicted task.
pub fn expand_conflicts(
    node: &ConstraintTreeNode,
    instance: &ProblemInstance,
    cfg: &SearchConfig,
) -> Result<Vec<ConstraintTreeNode>> {
    let conflicts = detect_conflicts(instance, &node.solution);
    let chosen = select_conflict(instance, &conflicts)
        .ok_or_else(|| Error::Precondition("node has no conflicts".into()))?;
    involved_agents(&conflicts, chosen.task)
        .into_iter()
        .map(|a| generate_child(node, a, chosen.task, instance, cfg))
        .collect()
}

/// Resolves leftover conflicts: on each conflicted task the lowest agent id
/// keeps it and the others drop it and are reported unassigned.
pub fn tie_break(alloc: &Allocation, instance: &ProblemInstance) -> (Allocation, BTreeSet<AgentId>) {
    tie_break_with(alloc, instance, TieBreak::LowestId)
}

pub fn tie_break_with(alloc: &Allocation, instance: &ProblemInstance, rule: TieBreak) -> (Allocation, BTreeSet<AgentId>) {
    let conflicts = detect_conflicts(instance, alloc);
    let mut losers: BTreeMap<TaskId, BTreeSet<AgentId>> = BTreeMap::new();
    for c in &conflicts {
        losers.entry(c.task).or_default().extend([c.agents.0, c.agents.1]);
    }
    let mut out = alloc.clone();
    let mut unassigned = BTreeSet::new();
    for (k, agents) in losers {
        let keeper = match rule {
            TieBreak::LowestId => *agents.first().expect("a conflict involves two agents"),
            TieBreak::EarliestAttempt => {
                let attempt = |a: AgentId| alloc.get(a).iter().find(|e| e.0 == k).map_or(crate::Time::MAX, |e| e.1);
                let bound = |a: AgentId| completion_upper_bound(instance, a, k).unwrap_or(0.0);
                *agents
                    .iter()
                    .min_by(|&&x, &&y| {
                        attempt(x)
                            .cmp(&attempt(y))
                            .then(bound(y).total_cmp(&bound(x)))
                            .then(x.cmp(&y))
                    })
                    .expect("a conflict involves two agents")
            }
        };
        for &a in agents.iter().filter(|&&a| a != keeper) {
            if let Some(list) = out.assignments.get_mut(&a) {
                list.retain(|&(task, _)| task != k);
            }
            unassigned.insert(a);
        }
    }
    out.assignments.retain(|_, l| !l.is_empty());
    (out, unassigned)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub cost: f64,
    pub constraints: usize,
    pub conflict: Option<Conflict>,
}

impl TraceEntry {
    pub fn line(&self) -> String {
        let conflict = match &self.conflict {
            Some(c) => format!("{} {}@{} {}@{}", c.task, c.agents.0, c.times.0, c.agents.1, c.times.1),
            None => "none".to_string(),
        };
        format!("cost={:.9} constraints={} conflict={}", self.cost, self.constraints, conflict)
    }
}

pub fn format_trace(trace: &[TraceEntry]) -> String {
    let mut s = String::new();
    for e in trace {
        let _ = writeln!(s, "{}", e.line());
    }
    s
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub allocation: Allocation,
    pub cost: f64,
    pub unassigned: BTreeSet<AgentId>,
    pub budget_exceeded: bool,
    pub expansions: usize,
    pub children_generated: usize,
    /// Policy-tree nodes of the returned constraint-tree node.
    pub tree_nodes: usize,
    pub node: ConstraintTreeNode,
    pub trace: Vec<TraceEntry>,
}

impl SearchOutcome {
    pub fn joint_policy(&self) -> JointPolicy {
        self.node.joint_policy()
    }
}

struct Queued {
    cost: f64,
    seq: u64,
    node: ConstraintTreeNode,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Reversed so the max-heap pops lowest cost, then earliest insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

pub fn allocate(instance: &ProblemInstance, conflict_budget: Option<usize>) -> Allocation {
    let cfg = SearchConfig {
        conflict_budget,
        ..SearchConfig::default()
    };
    match allocate_with(instance, &cfg) {
        Ok(out) => out.allocation,
        Err(_) => Allocation::new(),
    }
}

pub fn allocate_with(instance: &ProblemInstance, cfg: &SearchConfig) -> Result<SearchOutcome> {
    let mut open = BinaryHeap::new();
    let mut seen: HashSet<Vec<(AgentId, TaskId)>> = HashSet::new();
    let mut cache = PlanCache::new();
    let mut seq = 0u64;
    let root = root_node(instance, cfg)?;
    seen.insert(root.key());
    open.push(Queued {
        cost: root.cost,
        seq,
        node: root,
    });
    let mut expansions = 0;
    let mut children_generated = 0;
    let mut trace = Vec::new();
    while let Some(Queued { node, .. }) = open.pop() {
        let conflicts = detect_conflicts(instance, &node.solution);
        let chosen = select_conflict(instance, &conflicts);
        if cfg.trace {
            trace.push(TraceEntry {
                cost: node.cost,
                constraints: node.constraint_count(),
                conflict: chosen,
            });
        }
        let budget_hit = cfg.conflict_budget.is_some_and(|b| expansions >= b);
        if chosen.is_none() || budget_hit {
            let (allocation, unassigned) = tie_break_with(&node.solution, instance, cfg.tie_break);
            return Ok(SearchOutcome {
                allocation,
                cost: node.cost,
                unassigned,
                budget_exceeded: chosen.is_some(),
                expansions,
                children_generated,
                tree_nodes: node.tree_nodes(),
                node,
                trace,
            });
        }
        expansions += 1;
        let task = chosen.expect("checked above").task;
        let parent_key = node.key();
        for a in involved_agents(&conflicts, task) {
            let mut key = parent_key.clone();
            let at = key.partition_point(|&e| e < (a, task));
            key.insert(at, (a, task));
            // Identical constraint sets give identical nodes.
            if !seen.insert(key) {
                continue;
            }
            let child = child_with_cache(&node, a, task, instance, cfg, &mut cache)?;
            children_generated += 1;
            seq += 1;
            open.push(Queued {
                cost: child.cost,
                seq,
                node: child,
            });
        }
    }
    // Every branch was a duplicate; cannot happen since each child adds a new
    // constraint and the set of possible constraints is finite.
    Err(Error::Precondition("constraint tree exhausted".into()))
}
