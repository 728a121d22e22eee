use std::collections::BTreeSet;

use crate::problem::{AgentId, Allocation, ProblemInstance, TaskId, Time};

/// Each free agent, in id order, takes its unclaimed feasible task with the
/// earliest deadline and attempts it when the window opens.
pub fn edd_assign(instance: &ProblemInstance, free_agents: &BTreeSet<AgentId>) -> Allocation {
    let mut alloc = Allocation::new();
    let mut claimed: BTreeSet<TaskId> = BTreeSet::new();
    for &a in free_agents {
        let best = instance
            .feasible_tasks(a)
            .into_iter()
            .filter(|k| !claimed.contains(k))
            .filter_map(|k| instance.window(a, k).map(|w| (w.upper(), k, w.lower())))
            .min();
        if let Some((_, k, lower)) = best {
            claimed.insert(k);
            alloc.assign(a, k, lower);
        }
    }
    alloc
}

/// Deadline-ordered pick for one agent ignoring other agents' claims.
pub fn edd_choice(instance: &ProblemInstance, agent: AgentId, exclude: &BTreeSet<TaskId>) -> Option<(TaskId, Time)> {
    instance
        .feasible_tasks(agent)
        .into_iter()
        .filter(|k| !exclude.contains(k))
        .filter_map(|k| instance.window(agent, k).map(|w| (w.upper(), k, w.lower())))
        .min()
        .map(|(_, k, t)| (k, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{CompletionModel, TaskSpec};

    fn geo() -> CompletionModel {
        CompletionModel::Geometric { p: 0.5 }
    }

    #[test]
    fn nearest_deadline_wins() {
        let inst = ProblemInstance::builder(20)
            .agents(1)
            .task(TaskSpec::unit(0, 0))
            .task(TaskSpec::unit(1, 0))
            .task(TaskSpec::unit(2, 0))
            .pair(0, 0, 0, 5, geo())
            .pair(0, 1, 1, 3, geo())
            .pair(0, 2, 0, 9, geo())
            .build()
            .unwrap();
        let alloc = edd_assign(&inst, &BTreeSet::from([AgentId(0)]));
        assert_eq!(alloc.get(AgentId(0)), &[(TaskId(1), 1)]);
        assert!(alloc.check_windows(&inst).is_ok());
    }

    #[test]
    fn empty_and_shared() {
        let inst = ProblemInstance::builder(20).agents(2).build().unwrap();
        assert!(edd_assign(&inst, &BTreeSet::from([AgentId(0), AgentId(1)])).is_empty());
        let inst = ProblemInstance::builder(20)
            .agents(2)
            .task(TaskSpec::unit(0, 0))
            .pair(0, 0, 0, 5, geo())
            .pair(1, 0, 0, 5, geo())
            .build()
            .unwrap();
        let alloc = edd_assign(&inst, &BTreeSet::from([AgentId(0), AgentId(1)]));
        assert_eq!(alloc.get(AgentId(0)), &[(TaskId(0), 0)]);
        assert!(alloc.get(AgentId(1)).is_empty());
    }
}
