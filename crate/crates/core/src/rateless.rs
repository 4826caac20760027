//! Per-user rateless-code state and the queue recursions.
//!
//! The transmitter keeps an encoder backlog `q` that only shrinks on ACKs; the
//! receiver keeps a decoder residual `r`, the mutual information still missing
//! before the current message of `m` bits decodes. Two virtual queues track
//! the long-run constraints: `z` for average power and, per user, `w` for
//! average block size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State of one receiver and its encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    /// Encoder backlog in bits.
    pub q: f64,
    /// Decoder residual in bits.
    pub r: f64,
    /// Size of the message currently being sent, in bits.
    pub m: f64,
    /// Code index: number of ACKs received so far.
    pub n: u64,
    /// Scheduled slots spent on the current code.
    pub packets_in_flight: u64,
    /// Block-size virtual queue (slots; signed).
    pub w: f64,
    /// Utility slope at zero, `U′(0)`.
    pub b_slope: f64,
    /// Per-slot admission cap `D`.
    pub d_cap: f64,
}

impl UserState {
    /// Fresh user with empty queues and a first message of `m0` bits.
    pub fn new(m0: f64, overhead: f64, b_slope: f64, d_cap: f64) -> Self {
        Self {
            q: 0.0,
            r: (1.0 + overhead) * m0,
            m: m0,
            n: 0,
            packets_in_flight: 0,
            w: 0.0,
            b_slope,
            d_cap,
        }
    }

    /// Starts a new message of `m` bits.
    pub fn begin_message(&mut self, m: f64, overhead: f64) {
        self.m = m;
        self.r = (1.0 + overhead) * m;
    }

    /// Auxiliary backlog `q + r − m`. Diagnostic only; the controller never
    /// reads it.
    pub fn aux_backlog(&self) -> f64 {
        self.q + self.r - self.m
    }
}

/// Power virtual queue.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VirtualState {
    pub z: f64,
}

/// What the transmitter learns at the end of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AckOutcome {
    pub acked_user: Option<usize>,
    pub recorded_block_size: Option<u64>,
    pub delivered_bits: f64,
}

impl AckOutcome {
    pub const NONE: AckOutcome = AckOutcome {
        acked_user: None,
        recorded_block_size: None,
        delivered_bits: 0.0,
    };

    pub fn is_ack_for(&self, user: usize) -> bool {
        self.acked_user == Some(user)
    }
}

/// Decoder update for user `user` in one slot.
///
/// On decode the ACK reports the block size (counting this slot) and the
/// message just delivered; the code index advances and the next message of
/// `next_message` bits begins with residual `(1+overhead)·next_message`.
pub fn decoder_step(
    u: &mut UserState,
    user: usize,
    scheduled: bool,
    info_bits: f64,
    next_message: f64,
    overhead: f64,
) -> Result<AckOutcome> {
    if !scheduled {
        return Ok(AckOutcome::NONE);
    }
    if info_bits < 0.0 || info_bits.is_nan() {
        return Err(Error::NegativeInformation(info_bits));
    }
    if u.r > info_bits {
        u.r -= info_bits;
        u.packets_in_flight += 1;
        return Ok(AckOutcome::NONE);
    }
    let outcome = AckOutcome {
        acked_user: Some(user),
        recorded_block_size: Some(u.packets_in_flight + 1),
        delivered_bits: u.m,
    };
    u.n += 1;
    u.packets_in_flight = 0;
    u.begin_message(next_message, overhead);
    Ok(outcome)
}

/// Encoder backlog update `q ← (q − m·1{ack})⁺ + x`.
///
/// Returns the bits actually drained from the backlog.
pub fn encoder_step(u: &mut UserState, user: usize, ack: &AckOutcome, x: f64) -> Result<f64> {
    if !(0.0..=u.d_cap).contains(&x) {
        return Err(Error::RateOutOfRange { rate: x, cap: u.d_cap });
    }
    let served = if ack.is_ack_for(user) {
        ack.delivered_bits
    } else {
        0.0
    };
    let drained = served.min(u.q);
    u.q = (u.q - served).max(0.0) + x;
    Ok(drained)
}

/// Power virtual queue update `z ← (z − p_av)⁺ + p`.
pub fn z_step(v: &mut VirtualState, p: f64, p_av: f64) {
    v.z = (v.z - p_av).max(0.0) + p;
}

/// Block-size virtual queue update `w ← w + L − L_av`, once per ACK.
pub fn w_step(u: &mut UserState, block_size: u64, l_av: f64) {
    u.w += block_size as f64 - l_av;
}
