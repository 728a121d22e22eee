//! Plain-text instance files.
//!
//! One record per line, `#` starts a comment:
//!
//! ```text
//! horizon 12
//! agent 0
//! task 3 penalty 1 downtime 2
//! window 0 3 2 7                 # agent task lower upper
//! model 0 3 geometric 0.75       # or: epanechnikov MU R | table V0 V1 ...
//! downtime 0 3 4                 # optional per-pair override
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::problem::{CompletionModel, ProblemInstance, TaskSpec, Time};

fn field<T: std::str::FromStr>(parts: &[&str], i: usize, line: usize) -> Result<T> {
    parts
        .get(i)
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("missing field {i}"),
        })?
        .parse()
        .map_err(|_| Error::Parse {
            line,
            msg: format!("bad value {:?}", parts[i]),
        })
}

pub fn parse_instance(text: &str) -> Result<ProblemInstance> {
    let mut horizon: Option<Time> = None;
    let mut agents = Vec::new();
    let mut tasks = Vec::new();
    let mut windows = Vec::new();
    let mut models = Vec::new();
    let mut downtimes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parts: Vec<&str> = content.split_whitespace().collect();
        match parts[0] {
            "horizon" => horizon = Some(field(&parts, 1, line)?),
            "agent" => agents.push(field::<u32>(&parts, 1, line)?),
            "task" => {
                let id: u32 = field(&parts, 1, line)?;
                let mut spec = TaskSpec::unit(id, 0);
                let mut j = 2;
                while j < parts.len() {
                    match parts[j] {
                        "penalty" => spec.penalty = field(&parts, j + 1, line)?,
                        "downtime" => spec.downtime = field(&parts, j + 1, line)?,
                        other => {
                            return Err(Error::Parse {
                                line,
                                msg: format!("unknown task attribute {other:?}"),
                            })
                        }
                    }
                    j += 2;
                }
                tasks.push(spec);
            }
            "window" => windows.push((
                field::<u32>(&parts, 1, line)?,
                field::<u32>(&parts, 2, line)?,
                field::<Time>(&parts, 3, line)?,
                field::<Time>(&parts, 4, line)?,
            )),
            "model" => {
                let a: u32 = field(&parts, 1, line)?;
                let k: u32 = field(&parts, 2, line)?;
                let kind = parts.get(3).copied().unwrap_or("");
                let model = match kind {
                    "geometric" => CompletionModel::Geometric {
                        p: field(&parts, 4, line)?,
                    },
                    "epanechnikov" => CompletionModel::Epanechnikov {
                        mu: field(&parts, 4, line)?,
                        r: field(&parts, 5, line)?,
                    },
                    "table" => CompletionModel::Table(
                        (4..parts.len())
                            .map(|j| field(&parts, j, line))
                            .collect::<Result<_>>()?,
                    ),
                    other => {
                        return Err(Error::Parse {
                            line,
                            msg: format!("unknown model {other:?}"),
                        })
                    }
                };
                models.push((a, k, model));
            }
            "downtime" => downtimes.push((
                field::<u32>(&parts, 1, line)?,
                field::<u32>(&parts, 2, line)?,
                field::<Time>(&parts, 3, line)?,
            )),
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown record {other:?}"),
                })
            }
        }
    }
    let horizon = horizon.ok_or(Error::Parse {
        line: 0,
        msg: "missing horizon".into(),
    })?;
    let mut b = ProblemInstance::builder(horizon);
    for a in agents {
        b = b.agent(a);
    }
    for t in tasks {
        b = b.task(t);
    }
    for (a, k, lo, hi) in windows {
        b = b.window(a, k, lo, hi);
    }
    for (a, k, m) in models {
        b = b.model(a, k, m);
    }
    for (a, k, d) in downtimes {
        b = b.pair_downtime(a, k, d);
    }
    b.build()
}

pub fn write_instance(inst: &ProblemInstance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "horizon {}", inst.horizon());
    for a in inst.agents() {
        let _ = writeln!(s, "agent {}", a.0);
    }
    for t in inst.tasks() {
        let _ = writeln!(s, "task {} penalty {} downtime {}", t.id.0, t.penalty, t.downtime);
    }
    for ((a, k), w) in inst.windows() {
        let _ = writeln!(s, "window {} {} {} {}", a.0, k.0, w.lower(), w.upper());
    }
    for ((a, k), m) in inst.completions() {
        let _ = match m {
            CompletionModel::Geometric { p } => writeln!(s, "model {} {} geometric {p}", a.0, k.0),
            CompletionModel::Epanechnikov { mu, r } => {
                writeln!(s, "model {} {} epanechnikov {mu} {r}", a.0, k.0)
            }
            CompletionModel::Table(v) => {
                let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                writeln!(s, "model {} {} table {}", a.0, k.0, vals.join(" "))
            }
        };
    }
    for ((a, k), d) in inst.pair_downtimes() {
        let _ = writeln!(s, "downtime {} {} {d}", a.0, k.0);
    }
    s
}
