//! Per-packet mark/drop decisions for drop-tail, RED, gentle RED and FN.
//!
//! All policies share one contract: given the queue occupancy *before* the
//! arriving packet is enqueued and a uniform draw in `[0, 1)`, return a
//! [`MarkDecision`]. A packet that would not fit in the buffer is always
//! dropped with [`Reason::BufferOverflow`]; otherwise the policy's
//! probabilistic stage runs and the packet is signalled iff `draw < p`.
//! Signalled packets are marked when ECN-capable and dropped otherwise.

mod fast;
mod red;

pub use fast::{fn_initial_prob, fn_uniformize, FnParams, FnPolicy, FnState};
pub use red::{red_base_prob, red_final_prob, red_update_avg, RedParams, RedPolicy, RedState};

use num_traits::Float;
use serde::Serialize;
use thiserror::Error;

use crate::packet::Packet;
use crate::rate_estimator::EstimatorError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Mark,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Probabilistic,
    BufferOverflow,
    ForcedAboveMaxTh,
}

/// Per-arrival verdict plus the probability that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkDecision<S> {
    pub verdict: Verdict,
    pub probability_used: S,
    pub reason: Reason,
}

impl<S: Scalar> MarkDecision<S> {
    pub fn accept(probability_used: S) -> Self {
        Self {
            verdict: Verdict::Accept,
            probability_used,
            reason: Reason::Probabilistic,
        }
    }

    pub fn overflow() -> Self {
        Self {
            verdict: Verdict::Drop,
            probability_used: S::one(),
            reason: Reason::BufferOverflow,
        }
    }

    /// Mark if the packet is ECN-capable, drop otherwise.
    pub fn signal(pkt: &Packet, probability_used: S, reason: Reason) -> Self {
        let verdict = if pkt.ecn_capable {
            Verdict::Mark
        } else {
            Verdict::Drop
        };
        Self {
            verdict,
            probability_used,
            reason,
        }
    }

    /// Whether the packet is admitted to the queue (accepted or marked).
    pub fn admits(&self) -> bool {
        self.verdict != Verdict::Drop
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Common interface of every queue management policy.
pub trait AqmPolicy<S> {
    /// Buffer limit in bytes.
    fn limit(&self) -> S;

    /// Decides the fate of `pkt`. `q_inst` is the occupancy in bytes before
    /// enqueueing; `draw` is uniform on `[0, 1)`.
    fn on_arrival(
        &mut self,
        pkt: &Packet,
        q_inst: S,
        now: S,
        draw: S,
    ) -> Result<MarkDecision<S>, PolicyError>;
}

pub(crate) fn overflows<S: Scalar>(pkt: &Packet, q_inst: S, limit: S) -> bool {
    q_inst + S::from_count(pkt.size.into()) > limit
}

/// Passive queueing: only buffer overflow drops.
#[derive(Debug, Clone, PartialEq)]
pub struct DropTail<S> {
    pub limit: S,
}

impl<S: Scalar> AqmPolicy<S> for DropTail<S> {
    fn limit(&self) -> S {
        self.limit
    }

    fn on_arrival(
        &mut self,
        pkt: &Packet,
        q_inst: S,
        _now: S,
        _draw: S,
    ) -> Result<MarkDecision<S>, PolicyError> {
        if overflows(pkt, q_inst, self.limit) {
            Ok(MarkDecision::overflow())
        } else {
            Ok(MarkDecision::accept(S::zero()))
        }
    }
}

/// Any of the supported policies, with its mutable state.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyState<S> {
    DropTail(DropTail<S>),
    Red(RedPolicy<S>),
    Fn(FnPolicy<S>),
}

impl<S: Float + Scalar> PolicyState<S> {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyState::DropTail(_) => PolicyKind::DropTail,
            PolicyState::Red(r) if r.params.gentle => PolicyKind::GentleRed,
            PolicyState::Red(_) => PolicyKind::Red,
            PolicyState::Fn(_) => PolicyKind::Fn,
        }
    }

    /// RED's average queue size, if this is a RED policy.
    pub fn red_avg(&self) -> Option<S> {
        match self {
            PolicyState::Red(r) => Some(r.state.avg),
            _ => None,
        }
    }

    /// FN's arrival-rate estimate, if this is an FN policy.
    pub fn rate_estimate(&self) -> Option<S> {
        match self {
            PolicyState::Fn(f) => Some(f.rate_estimate()),
            _ => None,
        }
    }
}

impl<S: Float + Scalar> AqmPolicy<S> for PolicyState<S> {
    fn limit(&self) -> S {
        match self {
            PolicyState::DropTail(p) => p.limit(),
            PolicyState::Red(p) => p.limit(),
            PolicyState::Fn(p) => p.limit(),
        }
    }

    fn on_arrival(
        &mut self,
        pkt: &Packet,
        q_inst: S,
        now: S,
        draw: S,
    ) -> Result<MarkDecision<S>, PolicyError> {
        match self {
            PolicyState::DropTail(p) => p.on_arrival(pkt, q_inst, now, draw),
            PolicyState::Red(p) => p.on_arrival(pkt, q_inst, now, draw),
            PolicyState::Fn(p) => p.on_arrival(pkt, q_inst, now, draw),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    DropTail,
    Red,
    GentleRed,
    Fn,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::DropTail => "drop_tail",
            PolicyKind::Red => "red",
            PolicyKind::GentleRed => "gentle_red",
            PolicyKind::Fn => "fn",
        }
    }
}
