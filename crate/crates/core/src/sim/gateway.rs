use std::collections::VecDeque;

use crate::aqm::{AqmPolicy, MarkDecision, PolicyState, Verdict};
use crate::packet::Packet;

use super::SimError;

/// Bottleneck gateway: a FIFO byte queue served at `mu` bytes/second and
/// guarded by an AQM policy.
#[derive(Debug, Clone)]
pub struct GatewayState {
    queue: VecDeque<Packet>,
    q_bytes: u64,
    capacity: u64,
    mu: f64,
    busy: bool,
    pub policy: PolicyState<f64>,
}

/// What an arrival did at the gateway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalOutcome {
    pub decision: MarkDecision<f64>,
    /// Occupancy seen by the policy, before enqueueing.
    pub q_before: u64,
    /// Set when the arrival found the link idle and started service.
    pub departure_at: Option<f64>,
}

impl GatewayState {
    pub fn new(mu: f64, capacity: u64, policy: PolicyState<f64>) -> Self {
        Self {
            queue: VecDeque::new(),
            q_bytes: 0,
            capacity,
            mu,
            busy: false,
            policy,
        }
    }

    pub fn q_bytes(&self) -> u64 {
        self.q_bytes
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn is_busy(&self) -> bool {
        self.busy
    }

    pub fn queued(&self) -> impl Iterator<Item = &Packet> {
        self.queue.iter()
    }

    pub fn service_time(&self, pkt: &Packet) -> f64 {
        f64::from(pkt.size) / self.mu
    }

    /// Puts `pkt` in the buffer without consulting the policy.
    pub(crate) fn preload(&mut self, mut pkt: Packet, now: f64) -> Result<Option<f64>, SimError> {
        pkt.enqueued_at = Some(now);
        self.enqueue(pkt, now)
    }

    pub fn on_arrival(
        &mut self,
        mut pkt: Packet,
        now: f64,
        draw: f64,
    ) -> Result<ArrivalOutcome, SimError> {
        let q_before = self.q_bytes;
        let decision = self.policy.on_arrival(&pkt, q_before as f64, now, draw)?;
        let departure_at = match decision.verdict {
            Verdict::Drop => None,
            Verdict::Accept | Verdict::Mark => {
                pkt.ce = decision.verdict == Verdict::Mark;
                pkt.enqueued_at = Some(now);
                self.enqueue(pkt, now)?
            }
        };
        Ok(ArrivalOutcome {
            decision,
            q_before,
            departure_at,
        })
    }

    fn enqueue(&mut self, pkt: Packet, now: f64) -> Result<Option<f64>, SimError> {
        let q = self.q_bytes + u64::from(pkt.size);
        if q > self.capacity {
            return Err(SimError::Inconsistent(format!(
                "admitted packet overfills buffer: {q} > {}",
                self.capacity
            )));
        }
        self.q_bytes = q;
        let start = !self.busy;
        let service = self.service_time(&pkt);
        self.queue.push_back(pkt);
        if start {
            self.busy = true;
            Ok(Some(now + service))
        } else {
            Ok(None)
        }
    }

    /// Head-of-line packet leaves. Returns it and the time of the next
    /// departure when the queue is still nonempty.
    pub fn on_departure(&mut self, now: f64) -> Result<(Packet, Option<f64>), SimError> {
        if !self.busy {
            return Err(SimError::Inconsistent("departure while link idle".into()));
        }
        let pkt = self
            .queue
            .pop_front()
            .ok_or_else(|| SimError::Inconsistent("departure from empty queue".into()))?;
        self.q_bytes -= u64::from(pkt.size);
        let next = match self.queue.front() {
            Some(head) => Some(now + self.service_time(head)),
            None => {
                self.busy = false;
                None
            }
        };
        Ok((pkt, next))
    }
}
