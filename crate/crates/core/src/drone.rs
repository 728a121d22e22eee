//! Drone delivery domain: depots in a city box, range-limited drones,
//! Epanechnikov travel-time noise and time-windowed delivery requests.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::problem::{AgentId, Allocation, CompletionModel, ProblemInstance, TaskId, TaskSpec, Time, TimeWindow};

/// Epanechnikov CDF centred on `mu` with half-width `r`.
pub fn epan_cdf(mu: f64, r: f64, t: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidModel(format!("epanechnikov half-width {r}")));
    }
    Ok(epan_cdf_unchecked(mu, r, t))
}

pub fn epan_cdf_unchecked(mu: f64, r: f64, t: f64) -> f64 {
    if t <= mu - r {
        0.0
    } else if t >= mu + r {
        1.0
    } else {
        let z = (t - mu) / r;
        0.5 + 0.75 * z - 0.25 * z * z * z
    }
}

/// Inverse-CDF draw. Below a tiny half-width the distribution is a point mass.
pub fn sample_travel_time<R: Rng + ?Sized>(mu: f64, r: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    if r < 1e-12 {
        return mu;
    }
    let z = 2.0 * ((2.0 * u - 1.0).clamp(-1.0, 1.0).asin() / 3.0).sin();
    mu + r * z
}

pub type Point = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct CityModel {
    pub depots: Vec<Point>,
    /// Width and height of the service area, with its corner at the origin.
    pub bounding_box: (f64, f64),
    /// Kilometres per minute.
    pub cruise_speed: f64,
    pub range_limit: f64,
}

impl CityModel {
    /// 12 km x 12.5 km with 3 or 5 depots spread for coverage.
    pub fn standard(depots: usize) -> Result<Self> {
        let depots = match depots {
            3 => vec![(3.0, 3.5), (9.0, 3.5), (6.0, 9.5)],
            5 => vec![(2.5, 2.5), (9.5, 2.5), (6.0, 6.25), (2.5, 10.0), (9.5, 10.0)],
            n => return Err(Error::Config(format!("no standard layout with {n} depots"))),
        };
        Ok(CityModel {
            depots,
            bounding_box: (12.0, 12.5),
            cruise_speed: 0.6,
            range_limit: 10.0,
        })
    }

    pub fn distance(a: Point, b: Point) -> f64 {
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
    }

    /// Deterministic travel-time estimate in minutes.
    pub fn travel_time(&self, a: Point, b: Point) -> f64 {
        Self::distance(a, b) / self.cruise_speed
    }

    pub fn in_range(&self, depot: usize, p: Point) -> bool {
        Self::distance(self.depots[depot], p) <= self.range_limit
    }

    /// Plain-text layout: `box W H`, `speed V`, `range R`, one `depot X Y` per depot.
    pub fn parse(text: &str) -> Result<Self> {
        let mut city = CityModel {
            depots: Vec::new(),
            bounding_box: (12.0, 12.5),
            cruise_speed: 0.6,
            range_limit: 10.0,
        };
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let parts: Vec<&str> = content.split_whitespace().collect();
            let num = |j: usize| -> Result<f64> {
                parts.get(j).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                    line: i + 1,
                    msg: format!("expected a number at field {j}"),
                })
            };
            match parts[0] {
                "box" => city.bounding_box = (num(1)?, num(2)?),
                "speed" => city.cruise_speed = num(1)?,
                "range" => city.range_limit = num(1)?,
                "depot" => city.depots.push((num(1)?, num(2)?)),
                other => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("unknown record {other:?}"),
                    })
                }
            }
        }
        if city.depots.is_empty() || !(city.cruise_speed > 0.0) {
            return Err(Error::Config("city needs a depot and a positive speed".into()));
        }
        Ok(city)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "box {} {}", self.bounding_box.0, self.bounding_box.1);
        let _ = writeln!(s, "speed {}", self.cruise_speed);
        let _ = writeln!(s, "range {}", self.range_limit);
        for d in &self.depots {
            let _ = writeln!(s, "depot {} {}", d.0, d.1);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestStatus {
    Pending,
    Dispatched(AgentId),
    Delivered,
    Late,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRequest {
    pub id: TaskId,
    pub location: Point,
    pub window: TimeWindow,
    pub status: RequestStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DroneState {
    AtDepot,
    /// `back` is the duration of the return leg after delivery.
    Enroute { task: TaskId, arrival: f64, back: f64 },
    Returning { ready: Time },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drone {
    pub id: AgentId,
    pub home_depot: usize,
    pub state: DroneState,
    pub pending: Option<(TaskId, Time)>,
}

impl Drone {
    /// Step from which the drone can be dispatched, if known.
    pub fn ready_at(&self, now: Time) -> Option<Time> {
        match self.state {
            DroneState::AtDepot => Some(now),
            DroneState::Returning { ready } => Some(ready.max(now)),
            DroneState::Enroute { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroneConfig {
    pub city: CityModel,
    pub drones: usize,
    pub new_request_prob: f64,
    /// Sample the return leg instead of using the mean travel time.
    pub noisy_return: bool,
}

impl DroneConfig {
    pub fn standard(depots: usize, drones: usize, new_request_prob: f64) -> Result<Self> {
        Ok(DroneConfig {
            city: CityModel::standard(depots)?,
            drones,
            new_request_prob,
            noisy_return: false,
        })
    }

    pub fn initial_batch(&self) -> usize {
        (1.5 * self.drones as f64).round() as usize
    }
}

/// Planner-facing window and completion model for a drone-request pair, or
/// `None` when the request is out of range, already over, or cannot succeed.
pub fn request_windows(
    city: &CityModel,
    drone: &Drone,
    request: &DeliveryRequest,
    now: Time,
) -> Option<(TimeWindow, CompletionModel)> {
    let depot = city.depots[drone.home_depot];
    if !city.in_range(drone.home_depot, request.location) {
        return None;
    }
    let from = drone.ready_at(now)?;
    let w = request.window.clip_lower(from)?;
    let mu = city.travel_time(depot, request.location);
    if mu <= 0.0 {
        return Some((w, CompletionModel::Table(vec![0.0, 1.0])));
    }
    let r = mu / 3.0;
    if epan_cdf_unchecked(mu, r, w.len() as f64) <= 0.0 {
        return None;
    }
    Some((w, CompletionModel::Epanechnikov { mu, r }))
}

/// Steps past the window end until the drone is expected back at its depot
/// when dispatched at the window start: max(upper, lower + 2 mu) - upper.
pub fn return_downtime(window: TimeWindow, mu: f64) -> Time {
    ((window.lower() as f64 + 2.0 * mu).ceil() as Time - window.upper()).max(0)
}

/// Requests arriving this minute: Bernoulli arrival, uniform location,
/// window of 15 to 30 minutes starting now.
pub fn generate_requests<R: Rng + ?Sized>(
    city: &CityModel,
    new_request_prob: f64,
    rng: &mut R,
    now: Time,
    next_id: &mut u32,
    count: usize,
) -> Vec<DeliveryRequest> {
    let mut out = Vec::new();
    for _ in 0..count {
        if !rng.gen_bool(new_request_prob) {
            continue;
        }
        let location = (
            rng.gen_range(0.0..city.bounding_box.0),
            rng.gen_range(0.0..city.bounding_box.1),
        );
        let len: Time = rng.gen_range(15..=30);
        out.push(DeliveryRequest {
            id: TaskId(*next_id),
            location,
            window: TimeWindow::new(now, now + len).expect("positive duration"),
            status: RequestStatus::Pending,
        });
        *next_id += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Request,
    Dispatch,
    Delivered,
    Late,
    Expired,
    Ready,
}

impl EventKind {
    fn name(self) -> &'static str {
        match self {
            EventKind::Request => "request",
            EventKind::Dispatch => "dispatch",
            EventKind::Delivered => "delivered",
            EventKind::Late => "late",
            EventKind::Expired => "expired",
            EventKind::Ready => "ready",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEvent {
    pub time: Time,
    pub kind: EventKind,
    pub request: Option<TaskId>,
    pub drone: Option<AgentId>,
}

pub fn log_to_csv(log: &[LogEvent]) -> String {
    let mut s = String::from("time,event,request,drone\n");
    for e in log {
        let req = e.request.map(|k| k.0.to_string()).unwrap_or_default();
        let drone = e.drone.map(|a| a.0.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", e.time, e.kind.name(), req, drone);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub requests: usize,
    pub delivered: usize,
    pub late: usize,
}

impl Counts {
    pub fn late_fraction(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.late as f64 / self.requests as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct DroneWorld {
    pub config: DroneConfig,
    pub now: Time,
    pub drones: Vec<Drone>,
    /// Requests not yet delivered or late.
    pub requests: BTreeMap<TaskId, DeliveryRequest>,
    pub finished: Vec<DeliveryRequest>,
    pub generating: bool,
    pub counts: Counts,
    pub next_id: u32,
    pub log: Option<Vec<LogEvent>>,
    /// A pending decision could not be carried out; reported as an event.
    pub stale: bool,
}

impl DroneWorld {
    pub fn new(config: DroneConfig) -> Self {
        let depots = config.city.depots.len();
        let drones = (0..config.drones)
            .map(|i| Drone {
                id: AgentId(i as u32),
                home_depot: i % depots,
                state: DroneState::AtDepot,
                pending: None,
            })
            .collect();
        DroneWorld {
            config,
            now: 0,
            drones,
            requests: BTreeMap::new(),
            finished: Vec::new(),
            generating: true,
            counts: Counts::default(),
            next_id: 0,
            log: None,
            stale: false,
        }
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    fn record(&mut self, kind: EventKind, request: Option<TaskId>, drone: Option<AgentId>) {
        if let Some(log) = &mut self.log {
            log.push(LogEvent {
                time: self.now,
                kind,
                request,
                drone,
            });
        }
    }

    fn finish(&mut self, k: TaskId, status: RequestStatus) {
        if let Some(mut req) = self.requests.remove(&k) {
            req.status = status;
            match status {
                RequestStatus::Delivered => self.counts.delivered += 1,
                _ => self.counts.late += 1,
            }
            self.finished.push(req);
        }
    }

    pub fn is_drained(&self) -> bool {
        !self.generating
            && self.requests.is_empty()
            && self.drones.iter().all(|d| !matches!(d.state, DroneState::Enroute { .. }))
    }

    /// Requests not yet dispatched.
    pub fn open_requests(&self) -> impl Iterator<Item = &DeliveryRequest> + '_ {
        self.requests.values().filter(|r| r.status == RequestStatus::Pending)
    }

    pub fn idle_drones(&self) -> Vec<AgentId> {
        self.drones
            .iter()
            .filter(|d| d.ready_at(self.now) == Some(self.now))
            .map(|d| d.id)
            .collect()
    }

    /// New requests, deliveries, expiries and returning drones for the
    /// current minute. Returns whether anything happened.
    pub fn begin_step<R: Rng + ?Sized>(&mut self, gen_rng: &mut R) -> bool {
        let mut event = std::mem::take(&mut self.stale);
        if self.generating {
            let count = if self.now == 0 { self.config.initial_batch() + 1 } else { 1 };
            let mut next_id = self.next_id;
            let mut fresh = Vec::new();
            if self.now == 0 {
                // Initial backlog is always present; the per-minute draw follows.
                let always = generate_requests(&self.config.city, 1.0, gen_rng, 0, &mut next_id, count - 1);
                fresh.extend(always);
            }
            fresh.extend(generate_requests(
                &self.config.city,
                self.config.new_request_prob,
                gen_rng,
                self.now,
                &mut next_id,
                1,
            ));
            self.next_id = next_id;
            for req in fresh {
                self.counts.requests += 1;
                self.record(EventKind::Request, Some(req.id), None);
                self.requests.insert(req.id, req);
                event = true;
            }
        }
        for i in 0..self.drones.len() {
            match self.drones[i].state {
                DroneState::Enroute { task, arrival, back } if arrival <= self.now as f64 => {
                    let drone = self.drones[i];
                    let req = self.requests[&task];
                    let delivered_at = arrival.max(req.window.lower() as f64);
                    let on_time = delivered_at < req.window.upper() as f64;
                    let ready = (delivered_at + back).ceil() as Time;
                    self.drones[i].state = DroneState::Returning {
                        ready: ready.max(self.now + 1),
                    };
                    let (kind, status) = if on_time {
                        (EventKind::Delivered, RequestStatus::Delivered)
                    } else {
                        (EventKind::Late, RequestStatus::Late)
                    };
                    self.record(kind, Some(task), Some(drone.id));
                    self.finish(task, status);
                    event = true;
                }
                DroneState::Returning { ready } if ready <= self.now => {
                    self.drones[i].state = DroneState::AtDepot;
                    let id = self.drones[i].id;
                    self.record(EventKind::Ready, None, Some(id));
                    event = true;
                }
                _ => {}
            }
        }
        let expired: Vec<TaskId> = self
            .open_requests()
            .filter(|r| r.window.upper() <= self.now)
            .map(|r| r.id)
            .collect();
        for k in expired {
            self.record(EventKind::Expired, Some(k), None);
            self.finish(k, RequestStatus::Late);
            event = true;
        }
        event
    }

    /// Allocation problem over undispatched requests for drones that are at
    /// their depot or returning; windows start when the drone is ready.
    pub fn planning_instance(&self) -> ProblemInstance {
        let mut b = ProblemInstance::builder(1);
        let mut horizon = self.now + 1;
        let planners: Vec<&Drone> = self.drones.iter().filter(|d| d.ready_at(self.now).is_some()).collect();
        for d in &planners {
            b = b.agent(d.id.0);
        }
        for req in self.open_requests() {
            b = b.task(TaskSpec::unit(req.id.0, 0));
            for d in &planners {
                if let Some((w, model)) = request_windows(&self.config.city, d, req, self.now) {
                    horizon = horizon.max(w.upper());
                    let depot = self.config.city.depots[d.home_depot];
                    let mu = self.config.city.travel_time(depot, req.location);
                    let back = return_downtime(w, mu);
                    b = b
                        .pair(d.id.0, req.id.0, w.lower(), w.upper(), model)
                        .pair_downtime(d.id.0, req.id.0, back);
                }
            }
        }
        b.horizon(horizon).build().expect("planning instance is well formed")
    }

    pub fn commit(&mut self, alloc: &Allocation) {
        let now = self.now;
        for d in &mut self.drones {
            if d.ready_at(now).is_some() {
                d.pending = alloc.next_assignment(d.id);
            }
        }
    }

    pub fn set_pending(&mut self, drone: AgentId, decision: Option<(TaskId, Time)>) {
        self.drones[drone.0 as usize].pending = decision;
    }

    /// Dispatches idle drones whose pending decision is due, then advances the clock.
    pub fn end_step<R: Rng + ?Sized>(&mut self, exec_rng: &mut R) {
        for i in 0..self.drones.len() {
            let Some((k, t)) = self.drones[i].pending else {
                continue;
            };
            if t > self.now || self.drones[i].ready_at(self.now) != Some(self.now) {
                continue;
            }
            self.drones[i].pending = None;
            let Some(req) = self.requests.get(&k).copied() else {
                self.stale = true;
                continue;
            };
            let home = self.drones[i].home_depot;
            let dispatchable = req.status == RequestStatus::Pending
                && req.window.upper() > self.now
                && self.config.city.in_range(home, req.location);
            if !dispatchable {
                self.stale = true;
                continue;
            }
            let mu = self.config.city.travel_time(self.config.city.depots[home], req.location);
            let tt = sample_travel_time(mu, mu / 3.0, exec_rng);
            let back = if self.config.noisy_return {
                sample_travel_time(mu, mu / 3.0, exec_rng)
            } else {
                mu
            };
            let id = self.drones[i].id;
            self.drones[i].state = DroneState::Enroute {
                task: k,
                arrival: self.now as f64 + tt,
                back,
            };
            self.requests.get_mut(&k).expect("checked above").status = RequestStatus::Dispatched(id);
            self.record(EventKind::Dispatch, Some(k), Some(id));
        }
        self.now += 1;
    }
}

/// Runs the world until `horizon`, then drains it without new requests.
pub fn run_episode<G, E, F>(
    world: &mut DroneWorld,
    horizon: Time,
    gen_rng: &mut G,
    exec_rng: &mut E,
    mut decide: F,
) -> Result<Counts>
where
    G: Rng + ?Sized,
    E: Rng + ?Sized,
    F: FnMut(&mut DroneWorld, bool) -> Result<Option<Allocation>>,
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
