//! Discrete-event simulator for redundancy-`r` dispatch with cancel-on-start.
//!
//! Jobs arrive as a Poisson stream. Each arrival is copied into the FIFO
//! queues of the `r` servers its policy picks. The first copy to reach a
//! server starts service and every sibling copy is cancelled at that instant,
//! so a job consumes exactly one service draw. Service is exponential with
//! rate `mu1` for regular jobs and `mu1 / q` for data-intensive ones (drawn
//! with probability `p`).
//!
//! Cancelled copies are left in place as tombstones and skipped when they
//! reach the head of their queue.

use crate::derive_seed;
use crate::policies::{Policy, PolicyConfig, PolicyError};
use crate::stats::{ci_halfwidth, BatchMeansCI, RunningMoments};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use thiserror::Error;

/// Batches used for the within-run confidence interval.
pub const CI_BATCHES: usize = 30;
/// Batches used for the instability trend check.
pub const TREND_BATCHES: usize = 10;

const SIM_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobClass {
    Regular,
    DataIntensive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub r: usize,
    /// Regular service rate.
    pub mu1: f64,
    /// Mean data-intensive service time over mean regular service time.
    pub q: f64,
    /// Probability an arrival is data-intensive.
    pub p: f64,
    /// Poisson arrival rate.
    pub lambda: f64,
    pub total_jobs: u64,
    pub warmup_jobs: u64,
    pub seed: u64,
}

impl SimConfig {
    /// Warmup defaults to 10% of `total_jobs`.
    pub fn new(n: usize, r: usize, mu1: f64, q: f64, p: f64, lambda: f64, total_jobs: u64) -> Self {
        Self {
            n,
            r,
            mu1,
            q,
            p,
            lambda,
            total_jobs,
            warmup_jobs: total_jobs / 10,
            seed: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn mean_service(&self) -> f64 {
        mean_service(self.mu1, self.q, self.p)
    }

    /// Arrival rate at which offered work equals total capacity, `n / E[S]`.
    pub fn saturation_rate(&self) -> f64 {
        self.n as f64 / self.mean_service()
    }

    pub fn load(&self) -> f64 {
        self.lambda / self.saturation_rate()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.n == 0 || self.r == 0 || self.r > self.n {
            return bad(format!("need 1 <= r <= n, got r={}, n={}", self.r, self.n));
        }
        if !(self.mu1 > 0.0 && self.mu1.is_finite()) {
            return bad(format!("mu1 must be positive, got {}", self.mu1));
        }
        if !(self.q >= 1.0 && self.q.is_finite()) {
            return bad(format!("q must be >= 1, got {}", self.q));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p must lie in [0,1], got {}", self.p));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.total_jobs == 0 || self.warmup_jobs >= self.total_jobs {
            return bad(format!(
                "need warmup_jobs < total_jobs, got {} / {}",
                self.warmup_jobs, self.total_jobs
            ));
        }
        Ok(())
    }
}

/// `E[S] = ((1 - p) + p q) / mu1`.
pub fn mean_service(mu1: f64, q: f64, p: f64) -> f64 {
    ((1.0 - p) + p * q) / mu1
}

/// Inverse-transform exponential draw with rate `mu1` (regular) or
/// `mu1 / q` (data-intensive).
#[inline]
pub fn sample_service<R: Rng + ?Sized>(class: JobClass, mu1: f64, q: f64, rng: &mut R) -> f64 {
    let rate = match class {
        JobClass::Regular => mu1,
        JobClass::DataIntensive => mu1 / q,
    };
    exponential(rate, rng)
}

#[inline]
fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -(-u).ln_1p() / rate
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub jobs: u64,
    pub mean_queue_time: f64,
    pub mean_response_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub reps: usize,
    pub jobs_measured: u64,
    pub mean_queue_time: f64,
    /// Batch means within a single run, replication means otherwise.
    pub ci95_queue: f64,
    pub mean_response_time: f64,
    pub ci95_response: f64,
    pub regular: ClassMetrics,
    pub data_intensive: ClassMetrics,
    pub utilization: Vec<f64>,
    /// Time-average number of jobs waiting (seen by arrivals).
    pub mean_waiting_jobs: f64,
    /// Waiting-jobs batch means grew monotonically across the run.
    pub unstable: bool,
}

impl MetricsRecord {
    pub fn mean_utilization(&self) -> f64 {
        self.utilization.iter().sum::<f64>() / self.utilization.len().max(1) as f64
    }
}

/// Observer hooks into the event loop. All methods default to no-ops.
pub trait Probe {
    fn arrive(&mut self, _t: f64, _job: u64, _class: JobClass, _servers: &[usize]) {}
    fn start(&mut self, _t: f64, _job: u64, _server: usize) {}
    fn cancel(&mut self, _t: f64, _job: u64, _server: usize) {}
    fn depart(&mut self, _t: f64, _job: u64, _server: usize) {}
}

pub struct NoProbe;

impl Probe for NoProbe {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceEvent {
    Arrive { t: f64, job: u64, class: JobClass, servers: Vec<usize> },
    Start { t: f64, job: u64, server: usize },
    Cancel { t: f64, job: u64, server: usize },
    Depart { t: f64, job: u64, server: usize },
}

/// Records every hook call in order.
#[derive(Debug, Default, Clone)]
pub struct TraceRecorder {
    pub events: Vec<TraceEvent>,
}

impl Probe for TraceRecorder {
    fn arrive(&mut self, t: f64, job: u64, class: JobClass, servers: &[usize]) {
        self.events.push(TraceEvent::Arrive {
            t,
            job,
            class,
            servers: servers.to_vec(),
        });
    }
    fn start(&mut self, t: f64, job: u64, server: usize) {
        self.events.push(TraceEvent::Start { t, job, server });
    }
    fn cancel(&mut self, t: f64, job: u64, server: usize) {
        self.events.push(TraceEvent::Cancel { t, job, server });
    }
    fn depart(&mut self, t: f64, job: u64, server: usize) {
        self.events.push(TraceEvent::Depart { t, job, server });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival,
    Departure(usize),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap, we pop the earliest (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Slot {
    id: u64,
    arrival: f64,
    class: JobClass,
    waiting: bool,
    servers: Vec<usize>,
}

#[derive(Clone, Copy)]
struct InService {
    id: u64,
    arrival: f64,
    class: JobClass,
}

#[derive(Default)]
struct Server {
    queue: VecDeque<(u32, u64)>,
    busy: Option<InService>,
    busy_since: f64,
    busy_total: f64,
}

struct Collector {
    warmup: u64,
    measured: u64,
    queue: RunningMoments,
    response: RunningMoments,
    queue_by_class: [RunningMoments; 2],
    response_by_class: [RunningMoments; 2],
    queue_batches: Vec<f64>,
    response_batches: Vec<f64>,
    waiting: RunningMoments,
    waiting_batches: Vec<RunningMoments>,
}

impl Collector {
    fn new(cfg: &SimConfig) -> Self {
        Self {
            warmup: cfg.warmup_jobs,
            measured: cfg.total_jobs - cfg.warmup_jobs,
            queue: RunningMoments::new(),
            response: RunningMoments::new(),
            queue_by_class: Default::default(),
            response_by_class: Default::default(),
            queue_batches: vec![0.0; CI_BATCHES],
            response_batches: vec![0.0; CI_BATCHES],
            waiting: RunningMoments::new(),
            waiting_batches: vec![RunningMoments::new(); TREND_BATCHES],
        }
    }

    #[inline]
    fn batch(&self, id: u64, batches: usize) -> Option<usize> {
        (id >= self.warmup).then(|| ((id - self.warmup) as u128 * batches as u128 / self.measured as u128) as usize)
    }

    fn queue_time(&mut self, id: u64, class: JobClass, w: f64) {
        if let Some(b) = self.batch(id, CI_BATCHES) {
            self.queue.update(w);
            self.queue_by_class[class as usize].update(w);
            self.queue_batches[b] += w;
        }
    }

    fn response_time(&mut self, id: u64, class: JobClass, d: f64) {
        if let Some(b) = self.batch(id, CI_BATCHES) {
            self.response.update(d);
            self.response_by_class[class as usize].update(d);
            self.response_batches[b] += d;
        }
    }

    fn waiting_seen(&mut self, id: u64, waiting: u64) {
        if let Some(b) = self.batch(id, TREND_BATCHES) {
            self.waiting.update(waiting as f64);
            self.waiting_batches[b].update(waiting as f64);
        }
    }

    fn finish(self, utilization: Vec<f64>) -> MetricsRecord {
        let ci = |sums: &[f64]| {
            // batch sizes differ by at most one job; divide by the actual count
            let mut counts = vec![0u64; CI_BATCHES];
            for k in 0..self.measured {
                counts[(k as u128 * CI_BATCHES as u128 / self.measured as u128) as usize] += 1;
            }
            let means: Vec<f64> = sums
                .iter()
                .zip(&counts)
                .filter(|(_, &c)| c > 0)
                .map(|(s, &c)| s / c as f64)
                .collect();
            BatchMeansCI::new((self.measured as usize) / CI_BATCHES, means)
                .half_width()
                .unwrap_or(0.0)
        };
        let trend: Vec<f64> = self
            .waiting_batches
            .iter()
            .filter(|b| b.count() > 0)
            .map(RunningMoments::mean)
            .collect();
        let unstable = trend.len() == TREND_BATCHES && trend.windows(2).all(|w| w[1] > w[0]);
        let class = |i: usize| ClassMetrics {
            jobs: self.queue_by_class[i].count(),
            mean_queue_time: self.queue_by_class[i].mean(),
            mean_response_time: self.response_by_class[i].mean(),
        };
        MetricsRecord {
            reps: 1,
            jobs_measured: self.queue.count(),
            mean_queue_time: self.queue.mean(),
            ci95_queue: ci(&self.queue_batches),
            mean_response_time: self.response.mean(),
            ci95_response: ci(&self.response_batches),
            regular: class(JobClass::Regular as usize),
            data_intensive: class(JobClass::DataIntensive as usize),
            utilization,
            mean_waiting_jobs: self.waiting.mean(),
            unstable,
        }
    }
}

struct Simulation<'a, P: Probe> {
    cfg: &'a SimConfig,
    policy: Policy,
    rng: ChaCha8Rng,
    probe: &'a mut P,
    servers: Vec<Server>,
    slots: Vec<Slot>,
    free: Vec<u32>,
    events: BinaryHeap<Event>,
    seq: u64,
    next_id: u64,
    waiting: u64,
    stats: Collector,
}

impl<'a, P: Probe> Simulation<'a, P> {
    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.events.push(Event {
            time,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    fn alloc_slot(&mut self, id: u64, arrival: f64, class: JobClass) -> u32 {
        match self.free.pop() {
            Some(s) => {
                let slot = &mut self.slots[s as usize];
                slot.id = id;
                slot.arrival = arrival;
                slot.class = class;
                slot.waiting = true;
                s
            }
            None => {
                self.slots.push(Slot {
                    id,
                    arrival,
                    class,
                    waiting: true,
                    servers: Vec::with_capacity(self.cfg.r),
                });
                (self.slots.len() - 1) as u32
            }
        }
    }

    fn arrival(&mut self, now: f64) {
        let id = self.next_id;
        self.next_id += 1;
        let class = if self.rng.random::<f64>() < self.cfg.p {
            JobClass::DataIntensive
        } else {
            JobClass::Regular
        };
        let s = self.alloc_slot(id, now, class);
        let mut servers = std::mem::take(&mut self.slots[s as usize].servers);
        self.policy.next_into(&mut servers);
        self.probe.arrive(now, id, class, &servers);
        self.stats.waiting_seen(id, self.waiting);

        // an idle server has no live copies queued, so the new copy is its head
        let idle = servers.iter().copied().find(|&k| self.servers[k].busy.is_none());
        if idle.is_none() {
            for &k in &servers {
                self.servers[k].queue.push_back((s, id));
            }
            self.waiting += 1;
        }
        self.slots[s as usize].servers = servers;
        if let Some(k) = idle {
            self.start(k, s, now);
        }

        if self.next_id < self.cfg.total_jobs {
            let dt = exponential(self.cfg.lambda, &mut self.rng);
            self.schedule(now + dt, EventKind::Arrival);
        }
    }

    fn start(&mut self, server: usize, s: u32, now: f64) {
        let slot = &mut self.slots[s as usize];
        debug_assert!(slot.waiting);
        slot.waiting = false;
        let job = InService {
            id: slot.id,
            arrival: slot.arrival,
            class: slot.class,
        };
        self.probe.start(now, job.id, server);
        for &k in slot.servers.iter().filter(|&&k| k != server) {
            self.probe.cancel(now, job.id, k);
        }
        self.free.push(s);
        self.stats.queue_time(job.id, job.class, now - job.arrival);

        let service = sample_service(job.class, self.cfg.mu1, self.cfg.q, &mut self.rng);
        let srv = &mut self.servers[server];
        debug_assert!(srv.busy.is_none());
        srv.busy = Some(job);
        srv.busy_since = now;
        self.schedule(now + service, EventKind::Departure(server));
    }

    fn departure(&mut self, server: usize, now: f64) {
        let srv = &mut self.servers[server];
        let done = srv.busy.take().expect("departure from a busy server");
        srv.busy_total += now - srv.busy_since;
        self.probe.depart(now, done.id, server);
        self.stats.response_time(done.id, done.class, now - done.arrival);

        while let Some((s, id)) = self.servers[server].queue.pop_front() {
            let slot = &self.slots[s as usize];
            if slot.id == id && slot.waiting {
                self.waiting -= 1;
                self.start(server, s, now);
                break;
            }
        }
    }

    fn run(mut self) -> MetricsRecord {
        let first = exponential(self.cfg.lambda, &mut self.rng);
        self.schedule(first, EventKind::Arrival);
        let mut now = 0.0;
        while let Some(ev) = self.events.pop() {
            now = ev.time;
            match ev.kind {
                EventKind::Arrival => self.arrival(now),
                EventKind::Departure(k) => self.departure(k, now),
            }
        }
        debug_assert_eq!(self.waiting, 0);
        let utilization = self
            .servers
            .iter()
            .map(|s| if now > 0.0 { s.busy_total / now } else { 0.0 })
            .collect();
        self.stats.finish(utilization)
    }
}

fn check_pair(cfg: &SimConfig, policy: &PolicyConfig) -> Result<(), SimError> {
    cfg.validate()?;
    policy.validate()?;
    if policy.n != cfg.n || policy.r != cfg.r {
        return Err(SimError::InvalidConfig(format!(
            "policy is for n={}, r={} but simulation has n={}, r={}",
            policy.n, policy.r, cfg.n, cfg.r
        )));
    }
    Ok(())
}

/// One replication. The policy's seed is replaced by one derived from
/// `cfg.seed`, so `cfg.seed` alone fixes the sample path.
pub fn run(cfg: &SimConfig, policy: &PolicyConfig) -> Result<MetricsRecord, SimError> {
    run_with_probe(cfg, policy, &mut NoProbe)
}

pub fn run_with_probe<P: Probe>(
    cfg: &SimConfig,
    policy: &PolicyConfig,
    probe: &mut P,
) -> Result<MetricsRecord, SimError> {
    check_pair(cfg, policy)?;
    let policy = Policy::new(policy.clone().with_seed(derive_seed(cfg.seed, POLICY_STREAM)))?;
    let sim = Simulation {
        cfg,
        policy,
        rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SIM_STREAM)),
        probe,
        servers: (0..cfg.n).map(|_| Server::default()).collect(),
        slots: Vec::new(),
        free: Vec::new(),
        events: BinaryHeap::with_capacity(cfg.n + 1),
        seq: 0,
        next_id: 0,
        waiting: 0,
        stats: Collector::new(cfg),
    };
    Ok(sim.run())
}

/// Seed of replication `rep`: the config seed itself for rep 0, derived
/// substreams after that.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    if rep == 0 {
        seed
    } else {
        derive_seed(seed, 0x5245_5000 + rep as u64)
    }
}

/// `reps` independent runs pooled into one record.
///
/// With one replication the record is exactly [`run`]'s. Otherwise means are
/// averages of replication means and the CI is a Student-t interval over them.
pub fn run_replications(
    cfg: &SimConfig,
    policy: &PolicyConfig,
    reps: usize,
) -> Result<MetricsRecord, SimError> {
    if reps == 0 {
        return Err(SimError::InvalidConfig("reps must be >= 1".into()));
    }
    check_pair(cfg, policy)?;
    let records: Vec<MetricsRecord> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let cfg = cfg.clone().with_seed(replication_seed(cfg.seed, rep));
            run(&cfg, policy)
        })
        .collect::<Result<_, _>>()?;
    Ok(pool(records))
}

/// Sequential reduction of replication records.
pub fn pool(records: Vec<MetricsRecord>) -> MetricsRecord {
    assert!(!records.is_empty());
    if records.len() == 1 {
        return records.into_iter().next().unwrap();
    }
    let reps = records.len();
    let mean_of = |f: &dyn Fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / reps as f64;
    let queue: Vec<f64> = records.iter().map(|m| m.mean_queue_time).collect();
    let response: Vec<f64> = records.iter().map(|m| m.mean_response_time).collect();
    let class = |f: &dyn Fn(&MetricsRecord) -> ClassMetrics| {
        let jobs: u64 = records.iter().map(|m| f(m).jobs).sum();
        let weighted = |g: &dyn Fn(&ClassMetrics) -> f64| {
            if jobs == 0 {
                0.0
            } else {
                records.iter().map(|m| g(&f(m)) * f(m).jobs as f64).sum::<f64>() / jobs as f64
            }
        };
        ClassMetrics {
            jobs,
            mean_queue_time: weighted(&|c| c.mean_queue_time),
            mean_response_time: weighted(&|c| c.mean_response_time),
        }
    };
    let n = records[0].utilization.len();
    let utilization = (0..n)
        .map(|k| records.iter().map(|m| m.utilization[k]).sum::<f64>() / reps as f64)
        .collect();
    MetricsRecord {
        reps,
        jobs_measured: records.iter().map(|m| m.jobs_measured).sum(),
        mean_queue_time: mean_of(&|m| m.mean_queue_time),
        ci95_queue: ci_halfwidth(&queue, 0.95).unwrap_or(0.0),
        mean_response_time: mean_of(&|m| m.mean_response_time),
        ci95_response: ci_halfwidth(&response, 0.95).unwrap_or(0.0),
        regular: class(&|m| m.regular),
        data_intensive: class(&|m| m.data_intensive),
        utilization,
        mean_waiting_jobs: mean_of(&|m| m.mean_waiting_jobs),
        unstable: records.iter().any(|m| m.unstable),
    }
}
