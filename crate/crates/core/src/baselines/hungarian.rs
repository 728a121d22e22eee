use crate::problem::{completion_upper_bound, AgentId, Allocation, ProblemInstance, TaskId, Time};

/// Agent x task success probabilities; infeasible pairs weigh 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    pub agents: Vec<AgentId>,
    pub tasks: Vec<TaskId>,
    pub weights: Vec<Vec<f64>>,
    /// Earliest attempt step per feasible pair.
    pub starts: Vec<Vec<Option<Time>>>,
}

impl AssignmentMatrix {
    pub fn from_instance(instance: &ProblemInstance, agents: &[AgentId]) -> Self {
        let tasks: Vec<TaskId> = instance.tasks().iter().map(|t| t.id).collect();
        let mut weights = Vec::with_capacity(agents.len());
        let mut starts = Vec::with_capacity(agents.len());
        for &a in agents {
            let mut wrow = Vec::with_capacity(tasks.len());
            let mut srow = Vec::with_capacity(tasks.len());
            for &k in &tasks {
                match instance.window(a, k) {
                    Some(w) => {
                        wrow.push(completion_upper_bound(instance, a, k).unwrap_or(0.0));
                        srow.push(Some(w.lower()));
                    }
                    None => {
                        wrow.push(0.0);
                        srow.push(None);
                    }
                }
            }
            weights.push(wrow);
            starts.push(srow);
        }
        AssignmentMatrix {
            agents: agents.to_vec(),
            tasks,
            weights,
            starts,
        }
    }
}

/// Maximum-weight one-to-one matching of rows to columns; rectangular input
/// is padded with zero-weight dummies. Returns the column of each row.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.iter().map(Vec::len).max().unwrap_or(0);
    let n = rows.max(cols);
    if n == 0 {
        return vec![None; rows];
    }
    let cost = |i: usize, j: usize| -> f64 { -weights.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0) };
    // Shortest augmenting paths with potentials, 1-based with a virtual column 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols && weights[i - 1].get(j - 1).is_some() {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// One task per agent by maximum total success probability; zero-weight
/// matches are dropped and attempts start when the window opens.
pub fn hungarian_assign(matrix: &AssignmentMatrix) -> Allocation {
    let mut alloc = Allocation::new();
    for (i, j) in max_weight_matching(&matrix.weights).into_iter().enumerate() {
        let Some(j) = j else { continue };
        if matrix.weights[i][j] > 0.0 {
            if let Some(t) = matrix.starts[i][j] {
                alloc.assign(matrix.agents[i], matrix.tasks[j], t);
            }
        }
    }
    alloc
}
