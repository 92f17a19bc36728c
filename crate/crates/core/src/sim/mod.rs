//! Deterministic discrete-event simulation of sources feeding one bottleneck
//! gateway.
//!
//! Everything in a run is driven from a single event queue ordered by
//! `(time, insertion order)`, and every random draw comes from a substream of
//! the run seed (see [`crate::rng`]), so identical scenarios produce
//! identical [`RunOutput`]s.
//!
//! Congestion feedback: a marked or dropped packet signals its source
//! `feedback_delay` after the gateway's verdict. Marked packets still occupy
//! the buffer and are delivered carrying the congestion-experienced flag.

mod event;
mod gateway;

pub use event::{Event, EventKind, EventQueue};
pub use gateway::{ArrivalOutcome, GatewayState};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{sync_index, BackoffEvent, IntervalRecord};
use crate::aqm::{
    DropTail, FnParams, FnPolicy, PolicyError, PolicyKind, PolicyState, Reason, RedParams,
    RedPolicy, Verdict,
};
use crate::error::Violations;
use crate::rng::{source_stream, stream_rng, GATEWAY_STREAM};
use crate::traffic::{Source, SourceKind, SourceSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(#[from] Violations),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("internal consistency violated: {0}")]
    Inconsistent(String),
}

/// Policy selection plus its parameters. Buffer limit and link rate come
/// from the enclosing [`GatewaySpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyConfig {
    DropTail,
    Red {
        min_th: f64,
        max_th: f64,
        max_p: f64,
        w_q: f64,
        gentle: bool,
    },
    Fn {
        q_opt: f64,
        t_const: f64,
        rate_time_constant: f64,
    },
}

impl PolicyConfig {
    /// RED with thresholds at capacity/6 and capacity/2.
    pub fn red_defaults(capacity: u64, gentle: bool) -> Self {
        let c = capacity as f64;
        PolicyConfig::Red {
            min_th: c / 6.0,
            max_th: c / 2.0,
            max_p: 0.1,
            w_q: 0.002,
            gentle,
        }
    }

    /// FN with `q_opt = capacity/2`, `T = 0.05 s`, estimator `K = 0.1 s`.
    pub fn fn_defaults(capacity: u64) -> Self {
        PolicyConfig::Fn {
            q_opt: capacity as f64 / 2.0,
            t_const: 0.05,
            rate_time_constant: 0.1,
        }
    }

    pub fn build(&self, mu: f64, capacity: u64) -> Result<PolicyState<f64>, Violations> {
        let limit = capacity as f64;
        match *self {
            PolicyConfig::DropTail => Ok(PolicyState::DropTail(DropTail { limit })),
            PolicyConfig::Red {
                min_th,
                max_th,
                max_p,
                w_q,
                gentle,
            } => RedParams::new(min_th, max_th, max_p, w_q, gentle, limit)
                .map(|p| PolicyState::Red(RedPolicy::new(p))),
            PolicyConfig::Fn {
                q_opt,
                t_const,
                rate_time_constant,
            } => {
                let params = FnParams::new(mu, limit, q_opt, t_const, rate_time_constant)?;
                let policy = FnPolicy::new(params).map_err(|e| {
                    Violations(vec![crate::error::Violation::new(
                        "rate_time_constant",
                        e.to_string(),
                    )])
                })?;
                Ok(PolicyState::Fn(policy))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewaySpec {
    /// Link rate, bytes/second.
    pub mu: f64,
    /// Buffer capacity, bytes.
    pub capacity: u64,
    pub policy: PolicyConfig,
    /// Bytes of source 0's packets placed in the buffer at time zero
    /// (rounded down to whole packets).
    pub initial_backlog: u64,
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sources: Vec<SourceSpec>,
    pub gateway: GatewaySpec,
    pub duration: f64,
    pub seed: u64,
    pub sampling_interval: f64,
}

impl Scenario {
    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<(), Violations> {
        let mut v = Violations::default();
        v.check(
            self.duration > 0.0 && self.duration.is_finite(),
            "duration",
            || format!("must be positive, got {}", self.duration),
        );
        v.check(
            self.sampling_interval > 0.0 && self.sampling_interval.is_finite(),
            "sampling_interval",
            || format!("must be positive, got {}", self.sampling_interval),
        );
        v.check(!self.sources.is_empty(), "sources", || {
            "at least one source is required".into()
        });
        for (i, s) in self.sources.iter().enumerate() {
            if let Err(e) = s.validate() {
                v.extend_prefixed(&format!("sources[{i}]"), e);
            }
        }
        let g = &self.gateway;
        v.check(g.mu > 0.0 && g.mu.is_finite(), "gateway.mu", || {
            format!("must be positive, got {}", g.mu)
        });
        v.check(g.capacity > 0, "gateway.capacity", || {
            "must be positive".into()
        });
        v.check(
            g.initial_backlog <= g.capacity,
            "gateway.initial_backlog",
            || {
                format!(
                    "must not exceed capacity ({}), got {}",
                    g.capacity, g.initial_backlog
                )
            },
        );
        if g.capacity > 0 && g.mu > 0.0 {
            if let Err(e) = g.policy.build(g.mu, g.capacity) {
                v.extend_prefixed("gateway.policy", e);
            }
        }
        v.into_result(())
    }

    pub fn responsive_flows(&self) -> usize {
        self.sources
            .iter()
            .filter(|s| matches!(s.kind, SourceKind::Aimd(_)))
            .count()
    }

    /// Smallest rtt among AIMD sources.
    pub fn min_rtt(&self) -> Option<f64> {
        self.sources
            .iter()
            .filter_map(|s| match &s.kind {
                SourceKind::Aimd(a) => Some(a.rtt),
                _ => None,
            })
            .min_by(f64::total_cmp)
    }
}

/// One policy verdict, in arrival order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub time: f64,
    pub flow: usize,
    pub seq: u64,
    pub verdict: Verdict,
    pub reason: Reason,
    pub probability_used: f64,
    /// Occupancy seen by the policy.
    pub q_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueSample {
    pub time: f64,
    pub q_bytes: u64,
    pub avg_if_red: Option<f64>,
    pub rate_estimate_if_fn: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeliveryRecord {
    pub time: f64,
    pub flow: usize,
    pub seq: u64,
    pub size: u32,
    pub enqueued_at: f64,
    pub ce: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowSample {
    pub time: f64,
    /// Sum of AIMD windows, packets.
    pub aggregate_window: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FlowStats {
    pub flow_id: usize,
    pub kind: &'static str,
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub marked: u64,
    pub residual: u64,
    pub delivered_bytes: u64,
}

impl FlowStats {
    pub fn conserves(&self) -> bool {
        self.generated == self.delivered + self.dropped + self.residual
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub policy: &'static str,
    pub duration_s: f64,
    pub utilization: f64,
    pub mean_delay_s: f64,
    pub mean_queue_bytes: f64,
    pub sync_index: f64,
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub marked: u64,
    pub overflow_drops: u64,
    pub early_drops: u64,
    pub residual: u64,
}

/// Everything a run produces. Immutable once returned.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub policy: PolicyKind,
    pub seed: u64,
    pub duration: f64,
    pub responsive_flows: usize,
    pub decisions: Vec<DecisionRecord>,
    pub deliveries: Vec<DeliveryRecord>,
    pub queue_trace: Vec<QueueSample>,
    pub window_trace: Vec<WindowSample>,
    pub flows: Vec<FlowStats>,
    pub intervals: IntervalRecord,
    pub backoffs: Vec<BackoffEvent>,
    pub summary: Summary,
}

impl RunOutput {
    /// Synchronization index over this run's backoffs with the given window.
    pub fn sync_index(&self, window: f64) -> f64 {
        sync_index(&self.backoffs, self.responsive_flows, window)
    }

    /// Mean of the sampled queue occupancy over `[from, to]`.
    pub fn mean_sampled_queue(&self, from: f64, to: f64) -> f64 {
        let (sum, n) = self
            .queue_trace
            .iter()
            .filter(|s| s.time >= from && s.time <= to)
            .fold((0.0, 0_u64), |(sum, n), s| (sum + s.q_bytes as f64, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Overflow drops that happened at or after `from`.
    pub fn overflow_drops_after(&self, from: f64) -> usize {
        self.decisions
            .iter()
            .filter(|d| d.time >= from && d.reason == Reason::BufferOverflow)
            .count()
    }
}

/// Simulates `[0, duration]`.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput, SimError> {
    s.validate()?;
    Engine::new(s)?.run()
}

struct Engine<'a> {
    scenario: &'a Scenario,
    events: EventQueue,
    gateway: GatewayState,
    gateway_rng: rand_chacha::ChaCha8Rng,
    sources: Vec<Source>,
    flows: Vec<FlowStats>,
    decisions: Vec<DecisionRecord>,
    deliveries: Vec<DeliveryRecord>,
    queue_trace: Vec<QueueSample>,
    window_trace: Vec<WindowSample>,
    intervals: Vec<u64>,
    accepted_since_signal: u64,
    backoffs: Vec<BackoffEvent>,
    now: f64,
    queue_area: f64,
    busy_since: Option<f64>,
    busy_time: f64,
    delay_sum: f64,
}

impl<'a> Engine<'a> {
    fn new(s: &'a Scenario) -> Result<Self, SimError> {
        let policy = s.gateway.policy.build(s.gateway.mu, s.gateway.capacity)?;
        let sources: Vec<Source> = s
            .sources
            .iter()
            .enumerate()
            .map(|(i, spec)| Source::new(i, spec.clone(), stream_rng(s.seed, source_stream(i))))
            .collect();
        let flows = sources
            .iter()
            .map(|src| FlowStats {
                flow_id: src.flow_id,
                kind: src.spec.kind.name(),
                ..FlowStats::default()
            })
            .collect();
        Ok(Self {
            scenario: s,
            events: EventQueue::new(),
            gateway: GatewayState::new(s.gateway.mu, s.gateway.capacity, policy),
            gateway_rng: stream_rng(s.seed, GATEWAY_STREAM),
            sources,
            flows,
            decisions: Vec::new(),
            deliveries: Vec::new(),
            queue_trace: Vec::new(),
            window_trace: Vec::new(),
            intervals: Vec::new(),
            accepted_since_signal: 0,
            backoffs: Vec::new(),
            now: 0.0,
            queue_area: 0.0,
            busy_since: None,
            busy_time: 0.0,
            delay_sum: 0.0,
        })
    }

    fn run(mut self) -> Result<RunOutput, SimError> {
        let duration = self.scenario.duration;
        self.preload()?;
        for i in 0..self.sources.len() {
            let t = self.sources[i].peek_time();
            if t <= duration {
                self.events.schedule(t, EventKind::Emit { source: i });
            }
            if let Some(a) = &self.sources[i].aimd {
                let t = self.sources[i].spec.start + a.rtt;
                if t <= duration {
                    self.events.schedule(t, EventKind::Epoch { source: i });
                }
            }
        }
        self.events.schedule(0.0, EventKind::Sample);

        while let Some(ev) = self.events.pop() {
            if ev.time > duration {
                break;
            }
            self.advance(ev.time);
            match ev.kind {
                EventKind::Emit { source } => self.on_emit(source)?,
                EventKind::Departure => self.on_departure()?,
                EventKind::Signal { source } => self.on_signal(source),
                EventKind::Epoch { source } => self.on_epoch(source),
                EventKind::Sample => self.on_sample(),
            }
        }
        self.advance(duration);
        if let Some(since) = self.busy_since {
            self.busy_time += duration - since;
        }
        self.finish()
    }

    fn advance(&mut self, t: f64) {
        self.queue_area += self.gateway.q_bytes() as f64 * (t - self.now);
        self.now = t;
    }

    fn preload(&mut self) -> Result<(), SimError> {
        let backlog = self.scenario.gateway.initial_backlog;
        let size = u64::from(self.scenario.sources[0].packet_size);
        for _ in 0..backlog / size {
            let pkt = self.sources[0].backlog_packet();
            self.flows[0].generated += 1;
            if let Some(t) = self.gateway.preload(pkt, 0.0)? {
                self.start_service(t);
            }
        }
        Ok(())
    }

    fn start_service(&mut self, departure_at: f64) {
        self.busy_since = Some(self.now);
        self.events.schedule(departure_at, EventKind::Departure);
    }

    fn on_emit(&mut self, i: usize) -> Result<(), SimError> {
        let (t, pkt) = self.sources[i].next_emission();
        debug_assert_eq!(t, self.now);
        let (flow, seq) = (pkt.flow_id, pkt.seq);
        self.flows[i].generated += 1;
        let draw: f64 = self.gateway_rng.random();
        let out = self.gateway.on_arrival(pkt, t, draw)?;
        let d = out.decision;
        self.decisions.push(DecisionRecord {
            time: t,
            flow,
            seq,
            verdict: d.verdict,
            reason: d.reason,
            probability_used: d.probability_used,
            q_bytes: out.q_before,
        });
        match d.verdict {
            Verdict::Accept => self.accepted_since_signal += 1,
            Verdict::Mark | Verdict::Drop => {
                self.intervals.push(self.accepted_since_signal + 1);
                self.accepted_since_signal = 0;
            }
        }
        match d.verdict {
            Verdict::Mark => {
                self.flows[i].marked += 1;
                self.schedule_signal(i);
            }
            Verdict::Drop => {
                self.flows[i].dropped += 1;
                self.schedule_signal(i);
            }
            Verdict::Accept => {}
        }
        if let Some(dep) = out.departure_at {
            self.start_service(dep);
        }
        let next = self.sources[i].peek_time();
        if next <= self.scenario.duration {
            self.events.schedule(next, EventKind::Emit { source: i });
        }
        Ok(())
    }

    fn schedule_signal(&mut self, i: usize) {
        if self.sources[i].aimd.is_some() {
            let delay = self.sources[i].spec.effective_feedback_delay();
            self.events
                .schedule(self.now + delay, EventKind::Signal { source: i });
        }
    }

    fn on_departure(&mut self) -> Result<(), SimError> {
        let (pkt, next) = self.gateway.on_departure(self.now)?;
        let enqueued_at = pkt.enqueued_at.unwrap_or(pkt.created_at);
        let f = &mut self.flows[pkt.flow_id];
        f.delivered += 1;
        f.delivered_bytes += u64::from(pkt.size);
        self.delay_sum += self.now - enqueued_at;
        self.deliveries.push(DeliveryRecord {
            time: self.now,
            flow: pkt.flow_id,
            seq: pkt.seq,
            size: pkt.size,
            enqueued_at,
            ce: pkt.ce,
        });
        match next {
            Some(t) => self.events.schedule(t, EventKind::Departure),
            None => {
                if let Some(since) = self.busy_since.take() {
                    self.busy_time += self.now - since;
                }
            }
        }
        Ok(())
    }

    fn on_signal(&mut self, i: usize) {
        if let Some(a) = self.sources[i].aimd.as_mut() {
            if a.on_congestion_signal(self.now) {
                self.backoffs.push(BackoffEvent {
                    time: self.now,
                    flow_id: i,
                });
            }
        }
    }

    fn on_epoch(&mut self, i: usize) {
        if let Some(a) = self.sources[i].aimd.as_mut() {
            a.end_epoch(self.now);
            let next = self.now + a.rtt;
            if next <= self.scenario.duration {
                self.events.schedule(next, EventKind::Epoch { source: i });
            }
        }
    }

    fn on_sample(&mut self) {
        self.queue_trace.push(QueueSample {
            time: self.now,
            q_bytes: self.gateway.q_bytes(),
            avg_if_red: self.gateway.policy.red_avg(),
            rate_estimate_if_fn: self.gateway.policy.rate_estimate(),
        });
        let aggregate_window = self
            .sources
            .iter()
            .filter_map(|s| s.aimd.as_ref().map(|a| a.window))
            .sum();
        self.window_trace.push(WindowSample {
            time: self.now,
            aggregate_window,
        });
        let next = self.now + self.scenario.sampling_interval;
        if next <= self.scenario.duration {
            self.events.schedule(next, EventKind::Sample);
        }
    }

    fn finish(mut self) -> Result<RunOutput, SimError> {
        for pkt in self.gateway.queued() {
            self.flows[pkt.flow_id].residual += 1;
        }
        if let Some(f) = self.flows.iter().find(|f| !f.conserves()) {
            return Err(SimError::Inconsistent(format!(
                "flow {} does not conserve packets: generated {} != delivered {} + dropped {} + residual {}",
                f.flow_id, f.generated, f.delivered, f.dropped, f.residual
            )));
        }
        let s = self.scenario;
        let responsive_flows = s.responsive_flows();
        let window = s.min_rtt().unwrap_or(0.0);
        let total = |g: fn(&FlowStats) -> u64| self.flows.iter().map(g).sum::<u64>();
        let delivered = total(|f| f.delivered);
        let overflow_drops = self
            .decisions
            .iter()
            .filter(|d| d.reason == Reason::BufferOverflow)
            .count() as u64;
        let dropped = total(|f| f.dropped);
        let summary = Summary {
            policy: self.gateway.policy.kind().as_str(),
            duration_s: s.duration,
            utilization: self.busy_time / s.duration,
            mean_delay_s: if delivered == 0 {
                0.0
            } else {
                self.delay_sum / delivered as f64
            },
            mean_queue_bytes: self.queue_area / s.duration,
            sync_index: sync_index(&self.backoffs, responsive_flows, window),
            generated: total(|f| f.generated),
            delivered,
            dropped,
            marked: total(|f| f.marked),
            overflow_drops,
            early_drops: dropped - overflow_drops,
            residual: total(|f| f.residual),
        };
        Ok(RunOutput {
            policy: self.gateway.policy.kind(),
            seed: s.seed,
            duration: s.duration,
            responsive_flows,
            decisions: self.decisions,
            deliveries: self.deliveries,
            queue_trace: self.queue_trace,
            window_trace: self.window_trace,
            flows: self.flows,
            intervals: IntervalRecord {
                intervals: self.intervals,
            },
            backoffs: self.backoffs,
            summary,
        })
    }
}
