//! Test-only oracles shared by the integration and acceptance targets.

#![allow(dead_code)]

use redsched_core::simcore::TraceEvent;
use std::collections::{HashMap, VecDeque};

#[derive(Debug, Default)]
pub struct TraceSummary {
    pub jobs: usize,
    pub starts: usize,
    pub departures: usize,
    pub cancellations: usize,
}

/// Replays a simulator trace against an independent model of the queues and
/// checks: served exactly once, departs exactly once, `r - 1` cancellations
/// per job, FIFO per queue, work conservation after every event, and
/// non-decreasing time.
pub fn check_trace(events: &[TraceEvent], n: usize, r: usize) -> Result<TraceSummary, String> {
    let mut queues: Vec<VecDeque<u64>> = vec![VecDeque::new(); n];
    let mut busy: Vec<Option<u64>> = vec![None; n];
    let mut assigned: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut served_at: HashMap<u64, usize> = HashMap::new();
    let mut departed: HashMap<u64, usize> = HashMap::new();
    let mut cancels: HashMap<u64, usize> = HashMap::new();
    let mut last_t = f64::NEG_INFINITY;

    let conserving = |queues: &[VecDeque<u64>], busy: &[Option<u64>]| -> Result<(), String> {
        for k in 0..n {
            if busy[k].is_none() && !queues[k].is_empty() {
                return Err(format!("server {k} idle with queue {:?}", queues[k]));
            }
        }
        Ok(())
    };

    for (i, ev) in events.iter().enumerate() {
        let t = match ev {
            TraceEvent::Arrive { t, .. }
            | TraceEvent::Start { t, .. }
            | TraceEvent::Cancel { t, .. }
            | TraceEvent::Depart { t, .. } => *t,
        };
        if t < last_t {
            return Err(format!("event {i}: time went backwards {last_t} -> {t}"));
        }
        last_t = t;
        match ev {
            TraceEvent::Arrive { job, servers, .. } => {
                // a new simulation event begins: the previous one left a consistent state
                conserving(&queues, &busy).map_err(|e| format!("before event {i}: {e}"))?;
                let mut s = servers.clone();
                s.sort_unstable();
                s.dedup();
                if s.len() != r || s.iter().any(|&k| k >= n) {
                    return Err(format!("job {job}: bad assignment {servers:?}"));
                }
                if assigned.insert(*job, servers.clone()).is_some() {
                    return Err(format!("job {job} arrived twice"));
                }
                for &k in servers {
                    queues[k].push_back(*job);
                }
            }
            TraceEvent::Start { job, server, .. } => {
                if busy[*server].is_some() {
                    return Err(format!("job {job} started on busy server {server}"));
                }
                if queues[*server].front() != Some(job) {
                    return Err(format!(
                        "job {job} started on {server} but head is {:?} (FIFO)",
                        queues[*server].front()
                    ));
                }
                queues[*server].pop_front();
                if served_at.insert(*job, *server).is_some() {
                    return Err(format!("job {job} served twice"));
                }
                busy[*server] = Some(*job);
            }
            TraceEvent::Cancel { job, server, .. } => {
                let home = served_at
                    .get(job)
                    .ok_or_else(|| format!("job {job} cancelled before starting"))?;
                if home == server || !assigned[job].contains(server) {
                    return Err(format!("job {job}: cancel on {server} is not a sibling"));
                }
                let pos = queues[*server]
                    .iter()
                    .position(|j| j == job)
                    .ok_or_else(|| format!("job {job}: no copy at {server} to cancel"))?;
                queues[*server].remove(pos);
                *cancels.entry(*job).or_default() += 1;
            }
            TraceEvent::Depart { job, server, .. } => {
                conserving(&queues, &busy).map_err(|e| format!("before event {i}: {e}"))?;
                if busy[*server] != Some(*job) {
                    return Err(format!("job {job} departed {server} which serves {:?}", busy[*server]));
                }
                busy[*server] = None;
                *departed.entry(*job).or_default() += 1;
            }
        }
    }
    conserving(&queues, &busy).map_err(|e| format!("at end: {e}"))?;

    for job in assigned.keys() {
        if !served_at.contains_key(job) {
            return Err(format!("job {job} never served"));
        }
        if departed.get(job) != Some(&1) {
            return Err(format!("job {job} departed {:?} times", departed.get(job)));
        }
        let c = cancels.get(job).copied().unwrap_or(0);
        if c != r - 1 {
            return Err(format!("job {job}: {c} cancellations, expected {}", r - 1));
        }
    }
    // FIFO restated as in-order service: per server, start order follows arrival order
    // among jobs that were served there
    let mut per_server: Vec<Vec<u64>> = vec![Vec::new(); n];
    for ev in events {
        if let TraceEvent::Start { job, server, .. } = ev {
            per_server[*server].push(*job);
        }
    }
    for (k, jobs) in per_server.iter().enumerate() {
        if jobs.windows(2).any(|w| w[0] > w[1]) {
            return Err(format!("server {k} served out of arrival order"));
        }
    }

    Ok(TraceSummary {
        jobs: assigned.len(),
        starts: served_at.len(),
        departures: departed.values().sum(),
        cancellations: cancels.values().sum(),
    })
}

/// `E[X^2]` for the overlap of a fixed `r`-subset with a uniform one, by
/// enumerating every `r`-subset of `0..n`.
pub fn brute_force_overlap_second_moment(n: usize, r: usize) -> f64 {
    fn walk(start: usize, n: usize, left: usize, hits: u64, r: usize, acc: &mut (u64, u64)) {
        if left == 0 {
            acc.0 += hits * hits;
            acc.1 += 1;
            return;
        }
        for k in start..=n - left {
            // the fixed subset is 0..r
            walk(k + 1, n, left - 1, hits + u64::from(k < r), r, acc);
        }
    }
    let mut acc = (0, 0);
    walk(0, n, r, 0, r, &mut acc);
    acc.0 as f64 / acc.1 as f64
}

/// Mean wait in queue for GI/M/1 with Erlang-`k` interarrivals of total rate
/// `arrival_rate` and service rate `mu`: `W = sigma / (mu (1 - sigma))`,
/// sigma the root in (0,1) of `sigma = (k a / (k a + mu (1 - sigma)))^k`.
pub fn erlang_m1_wait(k: u32, arrival_rate: f64, mu: f64) -> f64 {
    let stage = k as f64 * arrival_rate;
    let mut sigma = 0.0f64;
    for _ in 0..10_000 {
        let next = (stage / (stage + mu * (1.0 - sigma))).powi(k as i32);
        if (next - sigma).abs() < 1e-15 {
            sigma = next;
            break;
        }
        sigma = next;
    }
    sigma / (mu * (1.0 - sigma))
}

/// M/M/1 mean wait in queue.
pub fn mm1_wait(lambda: f64, mu: f64) -> f64 {
    lambda / (mu * (mu - lambda))
}
