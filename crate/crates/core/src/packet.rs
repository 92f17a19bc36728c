use serde::Serialize;

/// Identifier of a traffic source. Flow ids are dense indices into the
/// scenario's source list.
pub type FlowId = usize;

/// A simulated datagram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Packet {
    pub flow_id: FlowId,
    /// Size in bytes, always positive.
    pub size: u32,
    pub ecn_capable: bool,
    /// Per-flow sequence number, strictly increasing.
    pub seq: u64,
    pub created_at: f64,
    /// Set when the gateway admits the packet.
    pub enqueued_at: Option<f64>,
    /// Congestion-experienced flag set by an ECN mark.
    pub ce: bool,
}

impl Packet {
    pub fn new(flow_id: FlowId, size: u32, ecn_capable: bool, seq: u64, created_at: f64) -> Self {
        debug_assert!(size > 0, "packet size must be positive");
        Self {
            flow_id,
            size,
            ecn_capable,
            seq,
            created_at,
            enqueued_at: None,
            ce: false,
        }
    }
}
