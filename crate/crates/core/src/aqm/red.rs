//! Random Early Detection, with the optional gentle ramp above `max_th`.

use crate::error::Violations;
use crate::packet::Packet;
use crate::scalar::{clamp_unit, Scalar};

use super::{AqmPolicy, MarkDecision, PolicyError, Reason};

/// Immutable RED configuration. Thresholds and the queue limit are in bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RedParams<S> {
    pub min_th: S,
    pub max_th: S,
    pub max_p: S,
    pub w_q: S,
    pub gentle: bool,
    pub queue_limit: S,
}

impl<S: Scalar> RedParams<S> {
    pub fn new(
        min_th: S,
        max_th: S,
        max_p: S,
        w_q: S,
        gentle: bool,
        queue_limit: S,
    ) -> Result<Self, Violations> {
        let zero = S::zero();
        let one = S::one();
        let mut v = Violations::default();
        v.check(min_th > zero, "min_th", || {
            format!("must be positive, got {min_th:?}")
        });
        v.check(max_th > min_th, "max_th", || {
            format!("must exceed min_th ({min_th:?}), got {max_th:?}")
        });
        v.check(max_th <= queue_limit, "max_th", || {
            format!("must not exceed queue_limit ({queue_limit:?}), got {max_th:?}")
        });
        v.check(max_p > zero && max_p <= one, "max_p", || {
            format!("must lie in (0, 1], got {max_p:?}")
        });
        v.check(w_q > zero && w_q <= one, "w_q", || {
            format!("must lie in (0, 1], got {w_q:?}")
        });
        v.into_result(Self {
            min_th,
            max_th,
            max_p,
            w_q,
            gentle,
            queue_limit,
        })
    }

    /// Thresholds at capacity/6 and capacity/2, `max_p = 0.1`, `w_q = 0.002`.
    pub fn with_defaults(capacity: S, gentle: bool) -> Result<Self, Violations> {
        let c = |x: f64| S::from_f64(x).expect("constant representable");
        Self::new(
            capacity / S::from_count(6),
            capacity / S::two(),
            c(0.1),
            c(0.002),
            gentle,
            capacity,
        )
    }
}

/// Mutable RED state.
#[derive(Debug, Clone, PartialEq)]
pub struct RedState<S> {
    /// EWMA of the instantaneous queue size, bytes.
    pub avg: S,
    /// Accepted packets since the last mark/drop that went through the
    /// probabilistic stage.
    pub count: u64,
}

impl<S: Scalar> Default for RedState<S> {
    fn default() -> Self {
        Self {
            avg: S::zero(),
            count: 0,
        }
    }
}

impl<S: Scalar> RedState<S> {
    /// Updates and returns the EWMA average queue size.
    pub fn update_avg(&mut self, q_inst: S, w_q: S) -> S {
        self.avg = red_update_avg(self.avg, q_inst, w_q);
        self.avg
    }
}

/// `(1 - w_q) * avg_prev + w_q * q_inst`.
pub fn red_update_avg<S: Scalar>(avg_prev: S, q_inst: S, w_q: S) -> S {
    (S::one() - w_q) * avg_prev + w_q * q_inst
}

/// Base drop probability as a function of the average queue size.
///
/// Zero below `min_th`, linear up to `max_p` at `max_th`. Above `max_th` the
/// classic variant jumps to 1; the gentle variant ramps linearly from `max_p`
/// to 1 over `[max_th, 2*max_th)`.
pub fn red_base_prob<S: Scalar>(params: &RedParams<S>, avg: S) -> S {
    let p = if avg < params.min_th {
        S::zero()
    } else if avg < params.max_th {
        params.max_p * (avg - params.min_th) / (params.max_th - params.min_th)
    } else if !params.gentle {
        S::one()
    } else if avg < S::two() * params.max_th {
        params.max_p + (S::one() - params.max_p) * (avg - params.max_th) / params.max_th
    } else {
        S::one()
    };
    clamp_unit(p)
}

/// `p_b / (1 - count * p_b)`, saturating at 1 once `count * p_b >= 1`.
pub fn red_final_prob<S: Scalar>(p_b: S, count: u64) -> S {
    let spent = S::from_count(count) * p_b;
    if spent >= S::one() {
        return S::one();
    }
    clamp_unit(p_b / (S::one() - spent))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedPolicy<S> {
    pub params: RedParams<S>,
    pub state: RedState<S>,
}

impl<S: Scalar> RedPolicy<S> {
    pub fn new(params: RedParams<S>) -> Self {
        Self {
            params,
            state: RedState::default(),
        }
    }

    fn forced_region(&self, avg: S) -> bool {
        if self.params.gentle {
            avg >= S::two() * self.params.max_th
        } else {
            avg >= self.params.max_th
        }
    }
}

impl<S: Scalar> AqmPolicy<S> for RedPolicy<S> {
    fn limit(&self) -> S {
        self.params.queue_limit
    }

    fn on_arrival(
        &mut self,
        pkt: &Packet,
        q_inst: S,
        _now: S,
        draw: S,
    ) -> Result<MarkDecision<S>, PolicyError> {
        let avg = self.state.update_avg(q_inst, self.params.w_q);
        if super::overflows(pkt, q_inst, self.limit()) {
            self.state.count = 0;
            return Ok(MarkDecision::overflow());
        }
        if avg < self.params.min_th {
            return Ok(MarkDecision::accept(S::zero()));
        }
        if self.forced_region(avg) {
            self.state.count = 0;
            return Ok(MarkDecision::signal(
                pkt,
                S::one(),
                Reason::ForcedAboveMaxTh,
            ));
        }
        let p_a = red_final_prob(red_base_prob(&self.params, avg), self.state.count);
        if draw < p_a {
            self.state.count = 0;
            Ok(MarkDecision::signal(pkt, p_a, Reason::Probabilistic))
        } else {
            self.state.count += 1;
            Ok(MarkDecision::accept(p_a))
        }
    }
}
