//! Coordination graphs over agents: an edge joins two agents whose feasible
//! task sets intersect. Disconnected components are planned independently and
//! a directed acyclic graph can be planned greedily in topological order.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy_tree::plan_tree;
use crate::problem::{detect_conflicts, AgentId, Allocation, ProblemInstance, TaskId};
use crate::search::{allocate_with, SearchConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinationGraph {
    pub nodes: BTreeSet<AgentId>,
    pub edges: BTreeSet<(AgentId, AgentId)>,
    pub directed: bool,
}

impl CoordinationGraph {
    pub fn has_edge(&self, a: AgentId, b: AgentId) -> bool {
        self.edges.contains(&(a, b)) || (!self.directed && self.edges.contains(&(b, a)))
    }
}

/// Edges point from the lower agent id to the higher one; conveyor arms are
/// numbered upstream first, so this is the upstream-to-downstream chain.
pub fn build_graph(instance: &ProblemInstance, directed: bool) -> CoordinationGraph {
    let sets: Vec<(AgentId, BTreeSet<TaskId>)> = instance
        .agents()
        .iter()
        .map(|&a| (a, instance.feasible_tasks(a).into_iter().collect()))
        .collect();
    let mut edges = BTreeSet::new();
    for (i, (a, sa)) in sets.iter().enumerate() {
        for (b, sb) in &sets[i + 1..] {
            if !sa.is_disjoint(sb) {
                edges.insert((*a.min(b), *a.max(b)));
            }
        }
    }
    CoordinationGraph {
        nodes: sets.into_iter().map(|(a, _)| a).collect(),
        edges,
        directed,
    }
}

/// Connected components ignoring direction, each sorted, ordered by smallest member.
pub fn components(graph: &CoordinationGraph) -> Vec<BTreeSet<AgentId>> {
    let nodes: Vec<AgentId> = graph.nodes.iter().copied().collect();
    let index: BTreeMap<AgentId, usize> = nodes.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in &graph.edges {
        let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) else {
            continue;
        };
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<AgentId>> = BTreeMap::new();
    for (i, &a) in nodes.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().insert(a);
    }
    groups.into_values().collect()
}

/// Kahn's algorithm, lowest ready agent id first.
pub fn topological_order(graph: &CoordinationGraph) -> Result<Vec<AgentId>> {
    if !graph.directed {
        return Err(Error::Precondition("topological order needs a directed graph".into()));
    }
    let mut indegree: BTreeMap<AgentId, usize> = graph.nodes.iter().map(|&a| (a, 0)).collect();
    for (_, b) in &graph.edges {
        *indegree.entry(*b).or_default() += 1;
    }
    let mut ready: BTreeSet<AgentId> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&a, _)| a).collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(a) = ready.pop_first() {
        order.push(a);
        for (_, b) in graph.edges.range((a, AgentId(0))..=(a, AgentId(u32::MAX))) {
            let d = indegree.get_mut(b).expect("edge endpoint is a node");
            *d -= 1;
            if *d == 0 {
                ready.insert(*b);
            }
        }
    }
    if order.len() != indegree.len() {
        return Err(Error::CyclicGraph);
    }
    Ok(order)
}

/// Result of a decomposed planning call.
#[derive(Debug, Clone, Default)]
pub struct Combined {
    pub allocation: Allocation,
    pub cost: f64,
    pub unassigned: BTreeSet<AgentId>,
    pub budget_exceeded: bool,
    pub expansions: usize,
    pub children_generated: usize,
    pub tree_nodes: usize,
    pub components: usize,
}

/// Plans agents one at a time in topological order. A task already held by
/// an earlier agent is withheld from a later one whenever their windows for
/// it overlap, which is exactly when the two holdings could conflict.
pub fn topological_allocate(instance: &ProblemInstance, graph: &CoordinationGraph, cfg: &SearchConfig) -> Result<Combined> {
    let order = topological_order(graph)?;
    let mut allocation = Allocation::new();
    let mut saved = 0.0;
    let mut tree_nodes = 0;
    let mut held: BTreeMap<TaskId, Vec<AgentId>> = BTreeMap::new();
    for a in order {
        if !instance.has_agent(a) {
            return Err(Error::UnknownAgent(a));
        }
        let tasks: Vec<TaskId> = instance
            .feasible_tasks(a)
            .into_iter()
            .filter(|&k| {
                let mine = instance.window(a, k).expect("feasible task has a window");
                held.get(&k).is_none_or(|holders| {
                    holders
                        .iter()
                        .all(|&h| !instance.window(h, k).is_some_and(|w| w.overlaps(&mine)))
                })
            })
            .collect();
        let tree = plan_tree(instance, a, &tasks, cfg.truncate)?;
        let considered: f64 = tree.considered_tasks.iter().map(|&k| instance.penalty(k)).sum();
        saved += considered - tree.root_value();
        tree_nodes += tree.len();
        let entries = tree.policy_entries();
        for &(k, _) in &entries {
            held.entry(k).or_default().push(a);
        }
        if !entries.is_empty() {
            allocation.assignments.insert(a, entries);
        }
    }
    debug_assert!(detect_conflicts(instance, &allocation).is_empty());
    Ok(Combined {
        allocation,
        cost: instance.total_penalty() - saved,
        components: 1,
        tree_nodes,
        ..Combined::default()
    })
}

/// Runs the constraint-tree search on each connected component in parallel
/// and merges the results.
pub fn allocate_components(instance: &ProblemInstance, cfg: &SearchConfig) -> Result<Combined> {
    let graph = build_graph(instance, false);
    let comps = components(&graph);
    let outcomes: Vec<_> = comps
        .par_iter()
        .map(|agents| {
            let sub = instance.restrict_agents(agents);
            allocate_with(&sub, cfg).map(|o| (sub.total_penalty(), o))
        })
        .collect::<Result<_>>()?;
    let mut merged = Combined {
        cost: instance.total_penalty(),
        components: comps.len(),
        ..Combined::default()
    };
    for (total, o) in outcomes {
        merged.cost -= total - o.cost;
        merged.allocation.merge(o.allocation);
        merged.unassigned.extend(o.unassigned);
        merged.budget_exceeded |= o.budget_exceeded;
        merged.expansions += o.expansions;
        merged.children_generated += o.children_generated;
        merged.tree_nodes += o.tree_nodes;
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{CompletionModel, TaskSpec};

    fn geo() -> CompletionModel {
        CompletionModel::Geometric { p: 0.5 }
    }

    fn graph(n: u32, edges: &[(u32, u32)], directed: bool) -> CoordinationGraph {
        CoordinationGraph {
            nodes: (0..n).map(AgentId).collect(),
            edges: edges.iter().map(|&(a, b)| (AgentId(a), AgentId(b))).collect(),
            directed,
        }
    }

    #[test]
    fn chain_from_disjoint_windows() {
        let inst = ProblemInstance::builder(20)
            .agents(3)
            .task(TaskSpec::unit(0, 0))
            .task(TaskSpec::unit(1, 0))
            .pair(0, 0, 0, 3, geo())
            .pair(1, 0, 3, 6, geo())
            .pair(1, 1, 4, 7, geo())
            .pair(2, 1, 7, 9, geo())
            .build()
            .unwrap();
        let g = build_graph(&inst, true);
        assert_eq!(g.edges, graph(3, &[(0, 1), (1, 2)], true).edges);
        assert!(g.has_edge(AgentId(0), AgentId(1)));
        assert!(!g.has_edge(AgentId(1), AgentId(0)));
        assert_eq!(topological_order(&g).unwrap(), vec![AgentId(0), AgentId(1), AgentId(2)]);
        assert_eq!(components(&g).len(), 1);
    }

    #[test]
    fn shared_task_gives_complete_graph() {
        let mut b = ProblemInstance::builder(5).agents(4).task(TaskSpec::unit(0, 0));
        for a in 0..4 {
            b = b.pair(a, 0, 0, 3, geo());
        }
        let g = build_graph(&b.build().unwrap(), false);
        assert_eq!(g.edges.len(), 6);
    }

    #[test]
    fn component_partitions() {
        assert_eq!(components(&graph(5, &[], false)).len(), 5);
        let pairs = components(&graph(4, &[(0, 2), (1, 3)], false));
        assert_eq!(
            pairs,
            vec![
                BTreeSet::from([AgentId(0), AgentId(2)]),
                BTreeSet::from([AgentId(1), AgentId(3)])
            ]
        );
    }

    #[test]
    fn cycle_is_rejected() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)], true);
        assert_eq!(topological_order(&g), Err(Error::CyclicGraph));
        let inst = ProblemInstance::builder(5).agents(3).build().unwrap();
        assert!(matches!(
            topological_allocate(&inst, &g, &SearchConfig::exact()),
            Err(Error::CyclicGraph)
        ));
    }

    #[test]
    fn overlapping_predecessor_task_is_withheld() {
        let inst = ProblemInstance::builder(10)
            .agents(2)
            .task(TaskSpec::unit(0, 0))
            .pair(0, 0, 0, 4, geo())
            .pair(1, 0, 2, 6, geo())
            .build()
            .unwrap();
        let g = build_graph(&inst, true);
        let out = topological_allocate(&inst, &g, &SearchConfig::exact()).unwrap();
        assert_eq!(out.allocation.get(AgentId(0)), &[(TaskId(0), 0)]);
        assert!(out.allocation.get(AgentId(1)).is_empty());
        assert!((out.cost - 0.0625).abs() < 1e-12);
        assert_eq!(out.children_generated, 0);
    }

    #[test]
    fn independent_agents_plan_separately() {
        let inst = ProblemInstance::builder(10)
            .agents(2)
            .task(TaskSpec::unit(0, 0))
            .task(TaskSpec::unit(1, 0))
            .pair(0, 0, 0, 2, geo())
            .pair(1, 1, 0, 2, geo())
            .build()
            .unwrap();
        let g = build_graph(&inst, true);
        assert!(g.edges.is_empty());
        let topo = topological_allocate(&inst, &g, &SearchConfig::exact()).unwrap();
        let comp = allocate_components(&inst, &SearchConfig::exact()).unwrap();
        assert_eq!(comp.components, 2);
        assert_eq!(topo.allocation, comp.allocation);
        assert!((topo.cost - 0.5).abs() < 1e-12);
        assert!((comp.cost - 0.5).abs() < 1e-12);
    }
}
