//! Active queue management at a single bottleneck gateway.
//!
//! * [`aqm`]: per-packet mark/drop probabilities for drop-tail, RED, gentle
//!   RED and FN (Fast Congestion Notification) with its uniformization stage.
//! * [`rate_estimator`]: FN's average arrival-rate estimate.
//! * [`sim`]: deterministic discrete-event simulation of sources feeding the
//!   gateway.
//! * [`traffic`]: Poisson, CBR and AIMD sources.
//! * [`analysis`]: interval distributions, expected-time curves, Monte Carlo
//!   interval experiments, KS distances and the synchronization index.
//! * [`report`]: CSV emission.
//!
//! The probability formulas and closed-form distributions are generic over
//! [`Scalar`], so they evaluate exactly on rationals as well as on `f32` and
//! `f64`. The simulator runs on `f64`; the aliases below name the concrete
//! types it uses.

pub mod analysis;
pub mod aqm;
pub mod error;
pub mod packet;
pub mod rate_estimator;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod traffic;

pub use error::{Violation, Violations};
pub use packet::{FlowId, Packet};
pub use scalar::Scalar;

pub type RedParamsF64 = aqm::RedParams<f64>;
pub type RedStateF64 = aqm::RedState<f64>;
pub type FnParamsF64 = aqm::FnParams<f64>;
pub type FnStateF64 = aqm::FnState<f64>;
pub type PolicyStateF64 = aqm::PolicyState<f64>;
pub type MarkDecisionF64 = aqm::MarkDecision<f64>;
pub type RateEstimatorF64 = rate_estimator::RateEstimator<f64>;
pub type CurveRowF64 = analysis::CurveRow<f64>;

pub type RedParamsF32 = aqm::RedParams<f32>;
pub type FnParamsF32 = aqm::FnParams<f32>;
pub type RateEstimatorF32 = rate_estimator::RateEstimator<f32>;
