//! Single-agent policy tree: sweep-line events, tree construction over
//! attempt/leave decisions and fail/success outcomes, and DP valuation.
//!
//! Continuations that only differ in an irrelevant busy-until time are
//! shared, so the tree is stored as a DAG of nodes in an arena. Each node's
//! `value` is the expected penalty from that node onwards, including the
//! penalty incurred by entering it (a left or failed task).

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::problem::{AgentId, ContingentPlan, ProblemInstance, TaskId, Time};

/// Values closer than this are treated as a tie at decision pairs.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    WindowEnd(TaskId),
    WindowStart(TaskId),
    DowntimeEnd(TaskId),
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::WindowEnd(_) => 0,
            EventKind::WindowStart(_) => 1,
            EventKind::DowntimeEnd(_) => 2,
        }
    }

    pub fn task(&self) -> TaskId {
        match *self {
            EventKind::WindowEnd(k) | EventKind::WindowStart(k) | EventKind::DowntimeEnd(k) => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventPoint {
    pub time: Time,
    pub kind: EventKind,
}

/// Window start, window end and downtime end of every task, in time order.
/// Equal times order as end, start, downtime end, then by task id.
pub fn event_sweep(instance: &ProblemInstance, agent: AgentId, tasks: &[TaskId]) -> Result<Vec<EventPoint>> {
    let mut events = Vec::with_capacity(tasks.len() * 3);
    for &k in tasks {
        let w = instance.window(agent, k).ok_or(Error::MissingWindow(agent, k))?;
        events.push(EventPoint {
            time: w.lower(),
            kind: EventKind::WindowStart(k),
        });
        events.push(EventPoint {
            time: w.upper(),
            kind: EventKind::WindowEnd(k),
        });
        events.push(EventPoint {
            time: w.upper() + instance.downtime(agent, k),
            kind: EventKind::DowntimeEnd(k),
        });
    }
    events.sort_by_key(|e| (e.time, e.kind.rank(), e.kind.task()));
    Ok(events)
}

/// Tasks in the order their windows open; equal starts go earliest deadline first.
pub fn sweep_order(instance: &ProblemInstance, agent: AgentId, tasks: &[TaskId]) -> Result<Vec<TaskId>> {
    let mut keyed = Vec::with_capacity(tasks.len());
    for &k in tasks {
        let w = instance.window(agent, k).ok_or(Error::MissingWindow(agent, k))?;
        keyed.push((w.lower(), w.upper(), k));
    }
    keyed.sort();
    Ok(keyed.into_iter().map(|(_, _, k)| k).collect())
}

/// Number of leading tasks (sorted by window start) that are coupled: the
/// first task whose window opens after every earlier task's window end plus
/// downtime starts an independent block and is excluded.
pub fn truncation_point(instance: &ProblemInstance, agent: AgentId, tasks: &[TaskId]) -> Result<usize> {
    let mut resolved: Option<Time> = None;
    for (m, &k) in tasks.iter().enumerate() {
        let w = instance.window(agent, k).ok_or(Error::MissingWindow(agent, k))?;
        if let Some(r) = resolved {
            if w.lower() >= r {
                return Ok(m);
            }
        }
        let end = w.upper() + instance.downtime(agent, k);
        resolved = Some(resolved.map_or(end, |r| r.max(end)));
    }
    Ok(tasks.len())
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Root,
    Attempt(TaskId),
    Leave(TaskId),
    Success(TaskId),
    Fail(TaskId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNode {
    pub kind: NodeKind,
    pub value: f64,
    /// Penalty incurred on entering the node (left or failed task).
    pub penalty: f64,
    /// Outcome nodes only: probability of this outcome.
    pub outcome_prob: Option<f64>,
    /// Attempt nodes only: branch-dependent earliest start.
    pub earliest_attempt: Option<Time>,
    pub children: Vec<NodeId>,
}

impl PolicyNode {
    pub fn new(kind: NodeKind) -> Self {
        PolicyNode {
            kind,
            value: 0.0,
            penalty: 0.0,
            outcome_prob: None,
            earliest_attempt: None,
            children: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PolicyTree {
    pub nodes: Vec<PolicyNode>,
    pub root: NodeId,
    pub agent: AgentId,
    pub considered_tasks: Vec<TaskId>,
}

impl PolicyTree {
    /// Empty tree for hand-assembled tests and tools.
    pub fn empty(agent: AgentId) -> Self {
        PolicyTree {
            nodes: Vec::new(),
            root: 0,
            agent,
            considered_tasks: Vec::new(),
        }
    }

    pub fn push(&mut self, node: PolicyNode) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_value(&self) -> f64 {
        self.nodes[self.root].value
    }

    pub fn node(&self, id: NodeId) -> &PolicyNode {
        &self.nodes[id]
    }

    /// Child chosen at a decision point: attempt unless leaving is strictly better.
    pub fn preferred_child(&self, id: NodeId) -> Option<NodeId> {
        let ch = &self.nodes[id].children;
        match ch.as_slice() {
            [a, l] if matches!(self.nodes[*a].kind, NodeKind::Attempt(_)) => {
                if self.nodes[*a].value <= self.nodes[*l].value + TIE_EPS {
                    Some(*a)
                } else {
                    Some(*l)
                }
            }
            [only] if matches!(self.nodes[*only].kind, NodeKind::Leave(_)) => Some(*only),
            _ => None,
        }
    }

    fn outcome_children(&self, attempt: NodeId) -> (NodeId, NodeId) {
        let ch = &self.nodes[attempt].children;
        (ch[0], ch[1])
    }

    /// Every `(task, earliest start)` on positive-probability branches of the
    /// optimal policy, keeping the earliest start per task.
    pub fn policy_entries(&self) -> Vec<(TaskId, Time)> {
        let mut best: HashMap<TaskId, Time> = HashMap::new();
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut visited[id], true) {
                continue;
            }
            let Some(next) = self.preferred_child(id) else {
                continue;
            };
            match self.nodes[next].kind {
                NodeKind::Attempt(k) => {
                    let t = self.nodes[next].earliest_attempt.unwrap_or(0);
                    best.entry(k).and_modify(|e| *e = (*e).min(t)).or_insert(t);
                    let (fail, succ) = self.outcome_children(next);
                    for o in [fail, succ] {
                        if self.nodes[o].outcome_prob.unwrap_or(0.0) > 0.0 {
                            stack.push(o);
                        }
                    }
                }
                _ => stack.push(next),
            }
        }
        let mut out: Vec<(TaskId, Time)> = best.into_iter().collect();
        out.sort_by_key(|&(k, t)| (t, k));
        out
    }

    /// The optimal policy unfolded as a contingent plan. Exponential in the
    /// number of coupled tasks; meant for small instances.
    pub fn optimal_plan(&self) -> ContingentPlan {
        self.plan_from(self.root)
    }

    fn plan_from(&self, id: NodeId) -> ContingentPlan {
        let Some(next) = self.preferred_child(id) else {
            return ContingentPlan::Done;
        };
        match self.nodes[next].kind {
            NodeKind::Attempt(k) => {
                let (fail, succ) = self.outcome_children(next);
                ContingentPlan::attempt(
                    k,
                    self.nodes[next].earliest_attempt.unwrap_or(0),
                    self.plan_from(succ),
                    self.plan_from(fail),
                )
            }
            _ => self.plan_from(next),
        }
    }

    /// Indented text dump; shared subtrees after their first appearance are
    /// printed as a reference to the node id.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut printed = BTreeSet::new();
        self.dump_node(self.root, 0, &mut printed, &mut out);
        out
    }

    fn dump_node(&self, id: NodeId, depth: usize, printed: &mut BTreeSet<NodeId>, out: &mut String) {
        let n = &self.nodes[id];
        let label = match n.kind {
            NodeKind::Root => format!("root[{}]", self.agent),
            NodeKind::Attempt(k) => format!("attempt {k} @{}", n.earliest_attempt.unwrap_or(0)),
            NodeKind::Leave(k) => format!("leave {k}"),
            NodeKind::Success(k) => format!("success {k}"),
            NodeKind::Fail(k) => format!("fail {k}"),
        };
        let indent = "  ".repeat(depth);
        let prob = n.outcome_prob.map(|p| format!(" p={p:.6}")).unwrap_or_default();
        if !printed.insert(id) {
            let _ = writeln!(out, "{indent}#{id} {label} (shared)");
            return;
        }
        let _ = writeln!(out, "{indent}#{id} {label} V={:.6}{prob}", n.value);
        for &c in &n.children {
            self.dump_node(c, depth + 1, printed, out);
        }
    }
}

struct Builder<'a> {
    instance: &'a ProblemInstance,
    agent: AgentId,
    tasks: Vec<TaskId>,
    tree: PolicyTree,
    memo: HashMap<(usize, Time), Vec<NodeId>>,
}

impl Builder<'_> {
    /// Decision children for the state "next task index, busy until".
    fn decision(&mut self, idx: usize, busy: Time) -> Vec<NodeId> {
        let Some(&k) = self.tasks.get(idx) else {
            return Vec::new();
        };
        let w = self
            .instance
            .window(self.agent, k)
            .expect("windows checked by the sweep");
        // Later windows open no earlier than this one, so only max(busy, lower) matters.
        let busy = busy.max(w.lower());
        if let Some(ch) = self.memo.get(&(idx, busy)) {
            return ch.clone();
        }
        let penalty = self.instance.penalty(k);
        let start = busy;
        let mut children = Vec::with_capacity(2);
        if start < w.upper() {
            let q = self.instance.cdf(self.agent, k, w.upper() - start);
            let fail_next = self.decision(idx + 1, w.upper());
            let succ_next = self.decision(idx + 1, w.upper() + self.instance.downtime(self.agent, k));
            let fail = self.tree.push(PolicyNode {
                penalty,
                outcome_prob: Some(1.0 - q),
                children: fail_next,
                ..PolicyNode::new(NodeKind::Fail(k))
            });
            let succ = self.tree.push(PolicyNode {
                outcome_prob: Some(q),
                children: succ_next,
                ..PolicyNode::new(NodeKind::Success(k))
            });
            let attempt = self.tree.push(PolicyNode {
                earliest_attempt: Some(start),
                children: vec![fail, succ],
                ..PolicyNode::new(NodeKind::Attempt(k))
            });
            children.push(attempt);
        }
        let leave_next = self.decision(idx + 1, busy);
        let leave = self.tree.push(PolicyNode {
            penalty,
            children: leave_next,
            ..PolicyNode::new(NodeKind::Leave(k))
        });
        children.push(leave);
        self.memo.insert((idx, busy), children.clone());
        children
    }
}

/// Builds and values the agent's policy tree over `tasks` (windows assumed
/// already clipped to when the agent is available). With `truncate`, only the
/// leading coupled block of tasks is planned.
pub fn plan_tree(instance: &ProblemInstance, agent: AgentId, tasks: &[TaskId], truncate: bool) -> Result<PolicyTree> {
    let mut order = sweep_order(instance, agent, tasks)?;
    if truncate {
        let m = truncation_point(instance, agent, &order)?;
        order.truncate(m);
    }
    let mut b = Builder {
        instance,
        agent,
        tasks: order.clone(),
        tree: PolicyTree::empty(agent),
        memo: HashMap::new(),
    };
    let children = b.decision(0, Time::MIN);
    let mut tree = b.tree;
    tree.root = tree.push(PolicyNode {
        children,
        ..PolicyNode::new(NodeKind::Root)
    });
    tree.considered_tasks = order;
    propagate_values(&mut tree)?;
    Ok(tree)
}

/// Expectation over outcome pairs, minimum over decision pairs; returns V(root).
pub fn propagate_values(tree: &mut PolicyTree) -> Result<f64> {
    if tree.nodes.is_empty() {
        return Err(Error::Structure("empty tree".into()));
    }
    let mut done = vec![false; tree.nodes.len()];
    // Iterative post-order over the DAG.
    let mut stack = vec![(tree.root, false)];
    while let Some((id, expanded)) = stack.pop() {
        if done[id] {
            continue;
        }
        if !expanded {
            stack.push((id, true));
            for &c in &tree.nodes[id].children {
                if c >= tree.nodes.len() {
                    return Err(Error::Structure(format!("child {c} out of range")));
                }
                if !done[c] {
                    stack.push((c, false));
                }
            }
            continue;
        }
        let node = &tree.nodes[id];
        let kinds: Vec<NodeKind> = node.children.iter().map(|&c| tree.nodes[c].kind).collect();
        let v = |i: usize| tree.nodes[node.children[i]].value;
        let below = match kinds.as_slice() {
            [] => 0.0,
            [NodeKind::Attempt(a), NodeKind::Leave(l)] if a == l => v(0).min(v(1)),
            [NodeKind::Leave(_)] => v(0),
            [NodeKind::Fail(f), NodeKind::Success(s)] if f == s => {
                let p = tree.nodes[node.children[0]]
                    .outcome_prob
                    .ok_or_else(|| Error::Structure(format!("fail node under #{id} has no probability")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Structure(format!("outcome probability {p} under #{id}")));
                }
                p * v(0) + (1.0 - p) * v(1)
            }
            other => {
                return Err(Error::Structure(format!("node #{id} has children {other:?}")));
            }
        };
        tree.nodes[id].value = node.penalty + below;
        done[id] = true;
    }
    Ok(tree.root_value())
}

/// First attempt on the optimal branch, descending through leave choices.
pub fn extract_assignment(tree: &PolicyTree) -> Option<(TaskId, Time)> {
    if tree.nodes.is_empty() {
        return None;
    }
    let mut id = tree.root;
    while let Some(next) = tree.preferred_child(id) {
        if let NodeKind::Attempt(k) = tree.nodes[next].kind {
            return Some((k, tree.nodes[next].earliest_attempt.unwrap_or(0)));
        }
        id = next;
    }
    None
}
