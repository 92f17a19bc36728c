//! Average arrival rate estimation for the FN gateway.
//!
//! The estimate is a time-decayed exponential average: after an interarrival
//! gap `dt` the previous estimate keeps weight `exp(-dt/K)` and the sample
//! `size/dt` receives the remainder. Arrivals that share a timestamp are
//! batched into the next update with a positive gap, so simultaneous events
//! never produce an infinite instantaneous rate.

use num_traits::Float;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("initial rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("time constant must be positive and finite, got {0}")]
    InvalidTimeConstant(f64),
    #[error("arrival at {now} precedes previous arrival at {last}")]
    TimeRegression { now: f64, last: f64 },
}

/// Arrival-rate estimator in bytes per second.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimator<S> {
    rate: S,
    last_arrival: Option<S>,
    time_constant: S,
    /// Bytes that arrived at `last_arrival` after the first packet at that
    /// instant; folded into the next positive-gap sample.
    pending: S,
}

impl<S: Float + Scalar> RateEstimator<S> {
    /// Starts the estimate at `mu`, the outgoing link rate.
    pub fn new(mu: S, time_constant: S) -> Result<Self, EstimatorError> {
        let as_f64 = |x: S| x.to_f64().unwrap_or(f64::NAN);
        if !(mu > S::zero() && mu.is_finite()) {
            return Err(EstimatorError::InvalidRate(as_f64(mu)));
        }
        if !(time_constant > S::zero() && time_constant.is_finite()) {
            return Err(EstimatorError::InvalidTimeConstant(as_f64(time_constant)));
        }
        Ok(Self {
            rate: mu,
            last_arrival: None,
            time_constant,
            pending: S::zero(),
        })
    }

    pub fn rate(&self) -> S {
        self.rate
    }

    pub fn last_arrival(&self) -> Option<S> {
        self.last_arrival
    }

    pub fn time_constant(&self) -> S {
        self.time_constant
    }

    /// Folds an arrival of `size` bytes at time `now` into the estimate and
    /// returns the updated rate.
    pub fn update(&mut self, size: S, now: S) -> Result<S, EstimatorError> {
        let Some(last) = self.last_arrival else {
            self.last_arrival = Some(now);
            return Ok(self.rate);
        };
        if now < last {
            return Err(EstimatorError::TimeRegression {
                now: now.to_f64().unwrap_or(f64::NAN),
                last: last.to_f64().unwrap_or(f64::NAN),
            });
        }
        let dt = now - last;
        if dt == S::zero() {
            self.pending = self.pending + size;
            return Ok(self.rate);
        }
        let decay = (-dt / self.time_constant).exp();
        let sample = (size + self.pending) / dt;
        self.rate = (S::one() - decay) * sample + decay * self.rate;
        self.pending = S::zero();
        self.last_arrival = Some(now);
        Ok(self.rate)
    }
}
