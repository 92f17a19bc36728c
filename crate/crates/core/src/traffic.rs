//! Packet sources: Poisson, constant bit rate, and a rate-paced AIMD model
//! that reacts to congestion signals.
//!
//! The AIMD model is congestion avoidance only: `window` packets are paced
//! evenly over one `rtt`, the window grows by one packet per `rtt` without a
//! backoff and halves at most once per `rtt` on a congestion signal.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::Violations;
use crate::packet::{FlowId, Packet};

#[derive(Debug, Clone, PartialEq)]
pub struct AimdSpec {
    pub rtt: f64,
    pub initial_window: f64,
    pub max_window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    /// Exponential interarrivals; `rate` in bytes/second.
    Poisson {
        rate: f64,
    },
    /// Fixed spacing `packet_size / rate`.
    Cbr {
        rate: f64,
    },
    Aimd(AimdSpec),
}

impl SourceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SourceKind::Poisson { .. } => "poisson",
            SourceKind::Cbr { .. } => "cbr",
            SourceKind::Aimd(_) => "aimd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub packet_size: u32,
    pub ecn_capable: bool,
    /// Time of the first emission (Poisson: start of the arrival process).
    pub start: f64,
    /// Delay between a mark/drop and the source hearing about it. Defaults
    /// to the rtt for AIMD sources; unresponsive sources ignore signals.
    pub feedback_delay: Option<f64>,
}

impl SourceSpec {
    pub fn new(kind: SourceKind, packet_size: u32, ecn_capable: bool) -> Self {
        Self {
            kind,
            packet_size,
            ecn_capable,
            start: 0.0,
            feedback_delay: None,
        }
    }

    pub fn cbr(rate: f64, packet_size: u32) -> Self {
        Self::new(SourceKind::Cbr { rate }, packet_size, true)
    }

    pub fn poisson(rate: f64, packet_size: u32) -> Self {
        Self::new(SourceKind::Poisson { rate }, packet_size, true)
    }

    pub fn aimd(rtt: f64, initial_window: f64, max_window: f64, packet_size: u32) -> Self {
        Self::new(
            SourceKind::Aimd(AimdSpec {
                rtt,
                initial_window,
                max_window,
            }),
            packet_size,
            true,
        )
    }

    pub fn starting_at(mut self, start: f64) -> Self {
        self.start = start;
        self
    }

    pub fn with_ecn(mut self, ecn_capable: bool) -> Self {
        self.ecn_capable = ecn_capable;
        self
    }

    pub fn with_feedback_delay(mut self, delay: f64) -> Self {
        self.feedback_delay = Some(delay);
        self
    }

    pub fn effective_feedback_delay(&self) -> f64 {
        match (&self.feedback_delay, &self.kind) {
            (Some(d), _) => *d,
            (None, SourceKind::Aimd(a)) => a.rtt,
            (None, _) => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), Violations> {
        let mut v = Violations::default();
        v.check(self.packet_size > 0, "packet_size", || {
            "must be positive".into()
        });
        v.check(self.start >= 0.0 && self.start.is_finite(), "start", || {
            format!("must be a finite nonnegative time, got {}", self.start)
        });
        if let Some(d) = self.feedback_delay {
            v.check(d >= 0.0 && d.is_finite(), "feedback_delay", || {
                format!("must be finite and nonnegative, got {d}")
            });
        }
        match &self.kind {
            SourceKind::Poisson { rate } | SourceKind::Cbr { rate } => {
                v.check(*rate > 0.0 && rate.is_finite(), "rate", || {
                    format!("must be positive, got {rate}")
                });
            }
            SourceKind::Aimd(a) => {
                v.check(a.rtt > 0.0 && a.rtt.is_finite(), "rtt", || {
                    format!("must be positive, got {}", a.rtt)
                });
                v.check(a.initial_window >= 1.0, "initial_window", || {
                    format!("must be at least 1, got {}", a.initial_window)
                });
                v.check(a.initial_window <= a.max_window, "max_window", || {
                    format!(
                        "must be at least initial_window ({}), got {}",
                        a.initial_window, a.max_window
                    )
                });
            }
        }
        v.into_result(())
    }
}

/// Window state of an AIMD source.
#[derive(Debug, Clone, PartialEq)]
pub struct AimdState {
    pub window: f64,
    pub max_window: f64,
    pub rtt: f64,
    pub last_backoff_at: f64,
}

impl AimdState {
    pub fn new(spec: &AimdSpec) -> Self {
        Self {
            window: spec.initial_window,
            max_window: spec.max_window,
            rtt: spec.rtt,
            last_backoff_at: f64::NEG_INFINITY,
        }
    }

    /// Multiplicative decrease, at most once per rtt. Returns whether the
    /// signal caused a backoff.
    pub fn on_congestion_signal(&mut self, now: f64) -> bool {
        if now - self.last_backoff_at < self.rtt {
            return false;
        }
        self.window = (self.window / 2.0).max(1.0);
        self.last_backoff_at = now;
        true
    }

    /// Additive increase by one packet, capped at `max_window`.
    pub fn on_epoch_complete(&mut self) {
        self.window = (self.window + 1.0).min(self.max_window);
    }

    /// Closes the epoch ending at `now`; grows the window if no backoff
    /// happened during it. Returns whether the window grew.
    pub fn end_epoch(&mut self, now: f64) -> bool {
        if self.last_backoff_at > now - self.rtt {
            return false;
        }
        self.on_epoch_complete();
        true
    }

    pub fn pacing_gap(&self) -> f64 {
        self.rtt / self.window
    }
}

/// A running source: spec plus emission state and its own RNG substream.
#[derive(Debug, Clone)]
pub struct Source {
    pub flow_id: FlowId,
    pub spec: SourceSpec,
    pub aimd: Option<AimdState>,
    next_seq: u64,
    next_time: f64,
    rng: ChaCha8Rng,
}

impl Source {
    pub fn new(flow_id: FlowId, spec: SourceSpec, mut rng: ChaCha8Rng) -> Self {
        let aimd = match &spec.kind {
            SourceKind::Aimd(a) => Some(AimdState::new(a)),
            _ => None,
        };
        let next_time = match &spec.kind {
            SourceKind::Poisson { rate } => spec.start + exp_gap(*rate, spec.packet_size, &mut rng),
            _ => spec.start,
        };
        Self {
            flow_id,
            spec,
            aimd,
            next_seq: 0,
            next_time,
            rng,
        }
    }

    /// Time of the next emission without consuming it.
    pub fn peek_time(&self) -> f64 {
        self.next_time
    }

    pub fn generated(&self) -> u64 {
        self.next_seq
    }

    /// Emits the pending packet and advances the emission clock. Returns the
    /// emission time and the packet.
    pub fn next_emission(&mut self) -> (f64, Packet) {
        let now = self.next_time;
        let pkt = Packet::new(
            self.flow_id,
            self.spec.packet_size,
            self.spec.ecn_capable,
            self.next_seq,
            now,
        );
        self.next_seq += 1;
        let size = self.spec.packet_size;
        let gap = match &self.spec.kind {
            SourceKind::Poisson { rate } => exp_gap(*rate, size, &mut self.rng),
            SourceKind::Cbr { rate } => f64::from(size) / rate,
            SourceKind::Aimd(_) => self.aimd.as_ref().map_or(0.0, AimdState::pacing_gap),
        };
        self.next_time = now + gap;
        (now, pkt)
    }

    /// Packet injected straight into the buffer at time zero (initial
    /// backlog); counts as generated by this source.
    pub fn backlog_packet(&mut self) -> Packet {
        let pkt = Packet::new(
            self.flow_id,
            self.spec.packet_size,
            self.spec.ecn_capable,
            self.next_seq,
            0.0,
        );
        self.next_seq += 1;
        pkt
    }
}

fn exp_gap(rate: f64, size: u32, rng: &mut impl Rng) -> f64 {
    let lambda = rate / f64::from(size);
    Exp::new(lambda)
        .expect("validated positive rate")
        .sample(rng)
}
