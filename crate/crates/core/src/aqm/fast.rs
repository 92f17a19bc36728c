//! Fast Congestion Notification (FN).
//!
//! FN computes an initial probability from the estimated arrival rate and
//! the instantaneous queue, chosen so that the queue would reach `q_opt`
//! after `t_const` seconds if the current rate persisted. The uniformization
//! stage then raises that probability with the number of packets accepted
//! since the last mark/drop, which turns geometric intermarking intervals
//! into uniform ones.

use num_traits::Float;

use crate::error::Violations;
use crate::packet::Packet;
use crate::rate_estimator::RateEstimator;
use crate::scalar::{clamp_unit, Scalar};

use super::{AqmPolicy, MarkDecision, PolicyError, Reason};

/// Immutable FN configuration. Bytes and bytes/second throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct FnParams<S> {
    /// Outgoing link rate.
    pub mu: S,
    /// Buffer capacity.
    pub capacity: S,
    pub q_opt: S,
    /// Control time constant `T`, seconds.
    pub t_const: S,
    /// Time constant of the arrival-rate estimator, seconds.
    pub ewma_time_constant: S,
}

impl<S: Scalar> FnParams<S> {
    pub fn new(
        mu: S,
        capacity: S,
        q_opt: S,
        t_const: S,
        ewma_time_constant: S,
    ) -> Result<Self, Violations> {
        let zero = S::zero();
        let mut v = Violations::default();
        v.check(mu > zero, "mu", || format!("must be positive, got {mu:?}"));
        v.check(capacity > zero, "capacity", || {
            format!("must be positive, got {capacity:?}")
        });
        v.check(q_opt > zero && q_opt < capacity, "q_opt", || {
            format!("must lie in (0, capacity = {capacity:?}), got {q_opt:?}")
        });
        v.check(t_const > zero, "t_const", || {
            format!("must be positive, got {t_const:?}")
        });
        v.check(ewma_time_constant > zero, "ewma_time_constant", || {
            format!("must be positive, got {ewma_time_constant:?}")
        });
        v.into_result(Self {
            mu,
            capacity,
            q_opt,
            t_const,
            ewma_time_constant,
        })
    }

    /// `T = 0.05 s`, `q_opt = capacity/2`, estimator `K = 0.1 s`.
    pub fn with_defaults(mu: S, capacity: S) -> Result<Self, Violations> {
        let c = |x: f64| S::from_f64(x).expect("constant representable");
        Self::new(mu, capacity, capacity / S::two(), c(0.05), c(0.1))
    }
}

/// Initial mark/drop probability
/// `((rate - mu) * T + (q_cur - q_opt)) / (rate * T)`, clamped to `[0, 1]`.
///
/// A zero rate means nothing is arriving and yields 0.
pub fn fn_initial_prob<S: Scalar>(params: &FnParams<S>, rate: S, q_cur: S) -> S {
    if rate <= S::zero() {
        return S::zero();
    }
    let numer = (rate - params.mu) * params.t_const + (q_cur - params.q_opt);
    clamp_unit(numer / (rate * params.t_const))
}

/// Uniformized probability `p_mi / (2 - count * p_mi)`, or 1 once
/// `count * p_mi >= 2`.
pub fn fn_uniformize<S: Scalar>(p_mi: S, count: u64) -> S {
    let spent = S::from_count(count) * p_mi;
    if spent >= S::two() {
        return S::one();
    }
    clamp_unit(p_mi / (S::two() - spent))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnState<S> {
    pub estimator: RateEstimator<S>,
    /// Accepted packets since the last mark/drop.
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnPolicy<S> {
    pub params: FnParams<S>,
    pub state: FnState<S>,
}

impl<S: Float + Scalar> FnPolicy<S> {
    pub fn new(params: FnParams<S>) -> Result<Self, PolicyError> {
        let estimator = RateEstimator::new(params.mu, params.ewma_time_constant)?;
        Ok(Self {
            params,
            state: FnState {
                estimator,
                count: 0,
            },
        })
    }

    pub fn rate_estimate(&self) -> S {
        self.state.estimator.rate()
    }
}

impl<S: Float + Scalar> AqmPolicy<S> for FnPolicy<S> {
    fn limit(&self) -> S {
        self.params.capacity
    }

    fn on_arrival(
        &mut self,
        pkt: &Packet,
        q_inst: S,
        now: S,
        draw: S,
    ) -> Result<MarkDecision<S>, PolicyError> {
        // Offered load: every arrival feeds the estimator, admitted or not.
        let rate = self
            .state
            .estimator
            .update(S::from_count(pkt.size.into()), now)?;
        if super::overflows(pkt, q_inst, self.limit()) {
            self.state.count = 0;
            return Ok(MarkDecision::overflow());
        }
        let p_mi = fn_initial_prob(&self.params, rate, q_inst);
        let p_fin = fn_uniformize(p_mi, self.state.count);
        if draw < p_fin {
            self.state.count = 0;
            Ok(MarkDecision::signal(pkt, p_fin, Reason::Probabilistic))
        } else {
            self.state.count += 1;
            Ok(MarkDecision::accept(p_fin))
        }
    }
}
