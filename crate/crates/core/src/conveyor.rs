//! Conveyor-belt picking domain: belt geometry, a mirrored object generator
//! that always admits a perfect pick schedule, and a step-wise world driven
//! by per-step Bernoulli grasps.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::problem::{AgentId, Allocation, CompletionModel, ProblemInstance, TaskId, TaskSpec, Time, TimeWindow};

/// Probability that a grasp with per-step success `p` has succeeded within `t` steps.
pub fn grasp_cdf(p: f64, t: u32) -> f64 {
    1.0 - (1.0 - p).powi(t.min(i32::MAX as u32) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSpec {
    pub workspace: (f64, f64),
    pub grasp_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeltConfig {
    pub length: f64,
    pub arms: Vec<ArmSpec>,
    pub speed: f64,
    pub new_object_prob: f64,
    pub downtime: Time,
}

impl BeltConfig {
    /// Three adjacent 0.3-unit workspaces from 0.05 to 0.95.
    pub fn standard(grasp_prob: f64, speed: f64, new_object_prob: f64) -> Self {
        Self::with_grasp_probs(&[grasp_prob; 3], speed, new_object_prob)
    }

    pub fn with_grasp_probs(grasp_probs: &[f64], speed: f64, new_object_prob: f64) -> Self {
        let arms = grasp_probs
            .iter()
            .enumerate()
            .map(|(i, &p)| ArmSpec {
                workspace: (0.05 + 0.3 * i as f64, 0.05 + 0.3 * (i + 1) as f64),
                grasp_prob: p,
            })
            .collect();
        BeltConfig {
            length: 1.0,
            arms,
            speed,
            new_object_prob,
            downtime: 2,
        }
    }

    /// Steps between a virtual drop and the matching real pick.
    pub fn pipeline_delay(&self) -> Time {
        (self.length / self.speed).ceil() as Time + 1
    }

    pub fn last_edge(&self) -> f64 {
        self.arms.iter().map(|a| a.workspace.1).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectStatus {
    OnBelt,
    Picked(AgentId),
    Missed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeltObject {
    pub id: TaskId,
    pub spawn_time: Time,
    pub spawn_pos: f64,
    /// First step at which the object is on the belt (position >= 0).
    pub arrival_time: Time,
    pub status: ObjectStatus,
    /// Real arm and step at which the mirrored schedule picks this object.
    pub origin: Option<(AgentId, Time)>,
}

impl BeltObject {
    pub fn position(&self, speed: f64, t: Time) -> f64 {
        self.spawn_pos + speed * (t - self.spawn_time) as f64
    }

    /// First step `t >= spawn_time` at which the position is at least `x`.
    pub fn crossing_step(&self, speed: f64, x: f64) -> Time {
        let guess = ((x - self.spawn_pos) / speed).ceil().max(0.0) as Time + self.spawn_time;
        let mut t = guess.max(self.spawn_time);
        while t > self.spawn_time && self.position(speed, t - 1) >= x {
            t -= 1;
        }
        while self.position(speed, t) < x {
            t += 1;
        }
        t
    }
}

/// Steps the object spends inside the arm's workspace, from `now` on.
pub fn window_for(arm: &ArmSpec, object: &BeltObject, speed: f64, now: Time) -> Option<TimeWindow> {
    let lower = object.crossing_step(speed, arm.workspace.0).max(now);
    let upper = object.crossing_step(speed, arm.workspace.1);
    TimeWindow::new(lower, upper).ok()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneratorState {
    pub virtual_ready: Vec<Time>,
    pub next_id: u32,
}

/// One step of the virtual arms mirrored across the belt's origin: each
/// ready virtual arm drops with probability `new_object_prob` at a uniform
/// point of its workspace. The drop is placed on the real belt so that it sits
/// at the same point of the matching real arm's workspace `pipeline_delay`
/// steps later; the virtual arm then rests for the downtime.
pub fn generate_step<R: Rng + ?Sized>(gen: &mut GeneratorState, config: &BeltConfig, now: Time, rng: &mut R) -> Vec<BeltObject> {
    if gen.virtual_ready.len() != config.arms.len() {
        gen.virtual_ready = vec![Time::MIN; config.arms.len()];
    }
    let delay = config.pipeline_delay();
    let mut out = Vec::new();
    for (i, arm) in config.arms.iter().enumerate() {
        if gen.virtual_ready[i] > now || !rng.gen_bool(config.new_object_prob) {
            continue;
        }
        let (lo, hi) = arm.workspace;
        let y = rng.gen_range(lo + 1e-9..hi - 1e-9);
        let mut obj = BeltObject {
            id: TaskId(gen.next_id),
            spawn_time: now,
            spawn_pos: y - config.speed * delay as f64,
            arrival_time: 0,
            status: ObjectStatus::OnBelt,
            origin: Some((AgentId(i as u32), now + delay)),
        };
        obj.arrival_time = obj.crossing_step(config.speed, 0.0);
        gen.next_id += 1;
        gen.virtual_ready[i] = now + 1 + config.downtime;
        out.push(obj);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival,
    Attempt,
    Success,
    Failure,
    Missed,
}

impl EventKind {
    fn name(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Attempt => "attempt",
            EventKind::Success => "success",
            EventKind::Failure => "failure",
            EventKind::Missed => "missed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEvent {
    pub time: Time,
    pub kind: EventKind,
    pub object: TaskId,
    pub arm: Option<AgentId>,
}

pub fn log_to_csv(log: &[LogEvent]) -> String {
    let mut s = String::from("time,event,object,arm\n");
    for e in log {
        let arm = e.arm.map(|a| a.0.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", e.time, e.kind.name(), e.object.0, arm);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ArmState {
    /// First step at which the arm may start a new attempt.
    pub available_at: Time,
    pub attempt: Option<TaskId>,
    pub pending: Option<(TaskId, Time)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub spawned: usize,
    pub picked: usize,
    pub missed: usize,
}

impl Counts {
    pub fn miss_fraction(&self) -> f64 {
        if self.spawned == 0 {
            0.0
        } else {
            self.missed as f64 / self.spawned as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConveyorWorld {
    pub config: BeltConfig,
    pub now: Time,
    /// Spawned objects that are not yet picked or missed.
    pub objects: BTreeMap<TaskId, BeltObject>,
    pub arms: Vec<ArmState>,
    pub generator: GeneratorState,
    pub generating: bool,
    pub counts: Counts,
    pub log: Option<Vec<LogEvent>>,
    /// Picked and missed objects with their final status.
    pub finished: Vec<BeltObject>,
    /// Per-arm count of objects that left the arm's workspace unpicked, for learners.
    pub passed_unpicked: Vec<usize>,
    /// A success or a dropped decision during the last step; reported as an event.
    pub stale: bool,
}

impl ConveyorWorld {
    pub fn new(config: BeltConfig) -> Self {
        let n = config.arms.len();
        ConveyorWorld {
            config,
            now: 0,
            objects: BTreeMap::new(),
            arms: vec![ArmState::default(); n],
            generator: GeneratorState::default(),
            generating: true,
            counts: Counts::default(),
            log: None,
            finished: Vec::new(),
            passed_unpicked: vec![0; n],
            stale: false,
        }
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    fn record(&mut self, kind: EventKind, object: TaskId, arm: Option<AgentId>) {
        if let Some(log) = &mut self.log {
            log.push(LogEvent {
                time: self.now,
                kind,
                object,
                arm,
            });
        }
    }

    pub fn position(&self, obj: &BeltObject) -> f64 {
        obj.position(self.config.speed, self.now)
    }

    /// Objects on the belt and visible at the current step.
    pub fn visible(&self) -> impl Iterator<Item = &BeltObject> + '_ {
        self.objects.values().filter(move |o| o.arrival_time <= self.now)
    }

    pub fn in_workspace(&self, arm: usize, obj: &BeltObject) -> bool {
        let x = self.position(obj);
        let (lo, hi) = self.config.arms[arm].workspace;
        x >= lo && x < hi
    }

    pub fn is_attempted(&self, k: TaskId) -> bool {
        self.arms.iter().any(|a| a.attempt == Some(k))
    }

    pub fn is_idle(&self, arm: usize) -> bool {
        let a = &self.arms[arm];
        a.attempt.is_none() && a.available_at <= self.now
    }

    pub fn idle_arms(&self) -> Vec<AgentId> {
        (0..self.arms.len())
            .filter(|&i| self.is_idle(i))
            .map(|i| AgentId(i as u32))
            .collect()
    }

    /// Nothing spawned is left and no more objects will be generated.
    pub fn is_drained(&self) -> bool {
        !self.generating && self.objects.is_empty()
    }

    /// Generation, arrivals, failed attempts and misses for the current
    /// step. Returns whether anything happened that warrants replanning.
    pub fn begin_step<R: Rng + ?Sized>(&mut self, gen_rng: &mut R) -> bool {
        let mut event = std::mem::take(&mut self.stale);
        if self.generating {
            for obj in generate_step(&mut self.generator, &self.config, self.now, gen_rng) {
                self.counts.spawned += 1;
                self.objects.insert(obj.id, obj);
            }
        }
        let arrivals: Vec<TaskId> = self
            .objects
            .values()
            .filter(|o| o.arrival_time == self.now)
            .map(|o| o.id)
            .collect();
        for k in arrivals {
            self.record(EventKind::Arrival, k, None);
            event = true;
        }
        for i in 0..self.arms.len() {
            if let Some(k) = self.arms[i].attempt {
                let x = self.position(&self.objects[&k]);
                if x >= self.config.arms[i].workspace.1 {
                    self.arms[i].attempt = None;
                    self.arms[i].available_at = self.now;
                    self.record(EventKind::Failure, k, Some(AgentId(i as u32)));
                    event = true;
                }
            }
            if self.arms[i].attempt.is_none() && self.arms[i].available_at == self.now {
                event = true;
            }
        }
        let speed = self.config.speed;
        let prev = self.now - 1;
        for (i, arm) in self.config.arms.iter().enumerate() {
            let edge = arm.workspace.1;
            let crossed = self
                .objects
                .values()
                .filter(|o| o.position(speed, self.now) >= edge && o.position(speed, prev) < edge)
                .count();
            self.passed_unpicked[i] += crossed;
        }
        let last = self.config.last_edge();
        let missed: Vec<TaskId> = self
            .objects
            .values()
            .filter(|o| o.position(speed, self.now) >= last)
            .map(|o| o.id)
            .collect();
        for k in missed {
            let mut obj = self.objects.remove(&k).expect("listed above");
            obj.status = ObjectStatus::Missed;
            self.finished.push(obj);
            self.counts.missed += 1;
            self.record(EventKind::Missed, k, None);
            event = true;
        }
        event
    }

    /// Arms that can take new work: those not in the middle of an attempt.
    pub fn plannable_arms(&self) -> Vec<AgentId> {
        (0..self.arms.len())
            .filter(|&i| self.arms[i].attempt.is_none())
            .map(|i| AgentId(i as u32))
            .collect()
    }

    /// Allocation problem over visible, unattempted objects for arms not in
    /// the middle of an attempt; windows start when the arm is free.
    pub fn planning_instance(&self) -> ProblemInstance {
        let mut b = ProblemInstance::builder(1);
        let mut horizon = self.now + 1;
        let arms = self.plannable_arms();
        for &a in &arms {
            b = b.agent(a.0);
        }
        for obj in self.visible() {
            if self.is_attempted(obj.id) {
                continue;
            }
            b = b.task(TaskSpec::unit(obj.id.0, self.config.downtime));
            for &a in &arms {
                let i = a.0 as usize;
                let from = self.now.max(self.arms[i].available_at);
                if let Some(w) = window_for(&self.config.arms[i], obj, self.config.speed, from) {
                    horizon = horizon.max(w.upper());
                    b = b.pair(
                        a.0,
                        obj.id.0,
                        w.lower(),
                        w.upper(),
                        CompletionModel::Geometric {
                            p: self.config.arms[i].grasp_prob,
                        },
                    );
                }
            }
        }
        b.horizon(horizon).build().expect("planning instance is well formed")
    }

    /// Replaces each listed arm's pending decision with its first assignment.
    pub fn commit(&mut self, alloc: &Allocation) {
        for a in self.plannable_arms() {
            let i = a.0 as usize;
            self.arms[i].pending = alloc.next_assignment(a);
        }
    }

    /// Directly sets one arm's pending decision.
    pub fn set_pending(&mut self, arm: AgentId, decision: Option<(TaskId, Time)>) {
        self.arms[arm.0 as usize].pending = decision;
    }

    /// Starts due attempts, runs one grasp trial per attempting arm and
    /// advances the clock.
    pub fn end_step<R: Rng + ?Sized>(&mut self, exec_rng: &mut R) {
        for i in 0..self.arms.len() {
            let Some((k, t)) = self.arms[i].pending else {
                continue;
            };
            if t > self.now || !self.is_idle(i) {
                continue;
            }
            self.arms[i].pending = None;
            let startable = self.objects.get(&k).is_some_and(|o| {
                o.arrival_time <= self.now && !self.is_attempted(k) && self.in_workspace(i, o)
            });
            if startable {
                self.arms[i].attempt = Some(k);
                self.record(EventKind::Attempt, k, Some(AgentId(i as u32)));
            } else {
                self.stale = true;
            }
        }
        for i in 0..self.arms.len() {
            let Some(k) = self.arms[i].attempt else {
                continue;
            };
            if !self.in_workspace(i, &self.objects[&k]) {
                continue;
            }
            if exec_rng.gen_bool(self.config.arms[i].grasp_prob) {
                let arm = AgentId(i as u32);
                let mut obj = self.objects.remove(&k).expect("attempted object is on the belt");
                obj.status = ObjectStatus::Picked(arm);
                self.finished.push(obj);
                self.counts.picked += 1;
                self.arms[i].attempt = None;
                self.arms[i].available_at = self.now + self.config.downtime;
                self.stale = true;
                self.record(EventKind::Success, k, Some(arm));
            }
        }
        self.now += 1;
    }
}

/// Runs the world until `horizon`, then drains it without new arrivals.
/// `decide` sees the world after each step's events (and whether any event
/// happened) and may return a fresh allocation to commit.
pub fn run_episode<G, E, F>(
    world: &mut ConveyorWorld,
    horizon: Time,
    gen_rng: &mut G,
    exec_rng: &mut E,
    mut decide: F,
) -> crate::Result<Counts>
where
    G: Rng + ?Sized,
    E: Rng + ?Sized,
    F: FnMut(&mut ConveyorWorld, bool) -> crate::Result<Option<Allocation>>,
{
    while !world.is_drained() {
        if world.now >= horizon {
            world.generating = false;
        }
        let event = world.begin_step(gen_rng);
        if let Some(alloc) = decide(world, event)? {
            world.commit(&alloc);
        }
        world.end_step(exec_rng);
    }
    Ok(world.counts)
}

/// Mirrored schedule: every arm picks exactly the objects its virtual twin
/// dropped, at the step the mirror maps them to.
pub fn mirror_allocation(world: &ConveyorWorld) -> Allocation {
    let mut alloc = Allocation::new();
    for obj in world.objects.values() {
        if let Some((arm, t)) = obj.origin {
            if t >= world.now {
                alloc.assignments.entry(arm).or_default().push((obj.id, t));
            }
        }
    }
    for list in alloc.assignments.values_mut() {
        list.sort_by_key(|&(k, t)| (t, k));
    }
    alloc
}

/// Occupancy of equal-width slots over an arm's workspace (slot 0 upstream).
pub fn slot_occupancy(world: &ConveyorWorld, arm: usize, slot_width: f64) -> Vec<Option<TaskId>> {
    let (lo, hi) = world.config.arms[arm].workspace;
    let n = ((hi - lo) / slot_width).round().max(1.0) as usize;
    let mut slots = vec![None; n];
    for obj in world.visible() {
        if world.is_attempted(obj.id) || !world.in_workspace(arm, obj) {
            continue;
        }
        let j = (((world.position(obj) - lo) / slot_width) as usize).min(n - 1);
        // Keep the most downstream object of a slot: it leaves first.
        let replace = slots[j].is_none_or(|cur: TaskId| world.objects[&cur].spawn_pos < obj.spawn_pos);
        if replace {
            slots[j] = Some(obj.id);
        }
    }
    slots
}
