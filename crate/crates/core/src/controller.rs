//! Per-slot decisions of the network control algorithm: message sizing on
//! ACKs, power allocation, scheduling and rate control.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{capped_log2, ChannelDraw, ComplexGain, ConditionalLaw, Quadrature};
use crate::error::{invalid, Error, Result};
use crate::rateless::{decoder_step, encoder_step, w_step, z_step, AckOutcome, UserState, VirtualState};
use crate::utility::{rate_control, Utility};

/// Algorithm constants shared by all users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcaParams {
    /// Utility weight `V`.
    pub v: f64,
    /// Target average block size.
    pub l_av: f64,
    /// Message-size step.
    pub delta: f64,
    /// Power floor below which nobody transmits.
    pub eps_power: f64,
    /// Largest message, `i_max·l_av·k`.
    pub m_max: f64,
    /// Symbols per packet.
    pub k: f64,
    pub i_max: f64,
    pub p_av: f64,
    pub p_peak: f64,
    /// Reception overhead `ε_oh`.
    pub overhead: f64,
    /// Admission cap per slot.
    pub d_cap: f64,
    /// At `ρ = 1`, size each new message to the slot's mutual information.
    pub rho1_encoding_fix: bool,
}

impl NcaParams {
    /// Parameters with the default knobs: `δ = 10⁻³·M_max`, `ε = 10⁻³·P_peak`,
    /// `D = i_max·K`, no overhead.
    pub fn new(v: f64, l_av: f64, k: f64, i_max: f64, p_av: f64, p_peak: f64) -> Result<Self> {
        let m_max = i_max * l_av * k;
        let p = Self {
            v,
            l_av,
            delta: 1e-3 * m_max,
            eps_power: 1e-3 * p_peak,
            m_max,
            k,
            i_max,
            p_av,
            p_peak,
            overhead: 0.0,
            d_cap: i_max * k,
            rho1_encoding_fix: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v", self.v),
            ("delta", self.delta),
            ("eps_power", self.eps_power),
            ("k", self.k),
            ("i_max", self.i_max),
            ("p_av", self.p_av),
            ("p_peak", self.p_peak),
            ("d_cap", self.d_cap),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(name, format!("{value} must be positive and finite")));
            }
        }
        if !(self.l_av >= 1.0 && self.l_av.is_finite()) {
            return Err(invalid("l_av", format!("{} must be at least 1", self.l_av)));
        }
        if self.p_av > self.p_peak {
            return Err(invalid("p_av", "must not exceed p_peak"));
        }
        if !(self.overhead >= 0.0) {
            return Err(invalid("eps_overhead", "must be non-negative"));
        }
        let expected = self.i_max * self.l_av * self.k;
        if (self.m_max - expected).abs() > 1e-9 * expected {
            return Err(invalid("m_max", format!("must equal i_max·l_av·k = {expected}")));
        }
        Ok(())
    }

    /// Encoder-queue bound `U′(0)·V/2`.
    pub fn queue_bound(&self, utility: &Utility) -> f64 {
        utility.slope_at_zero() * self.v / 2.0
    }
}

/// Outcome of the decision rules for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    pub scheduled_user: Option<usize>,
    pub power: f64,
    pub admitted: Vec<f64>,
}

/// A user's best power and the drift-plus-penalty value it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerChoice {
    pub power: f64,
    pub value: f64,
}

impl PowerChoice {
    pub const IDLE: PowerChoice = PowerChoice { power: 0.0, value: 0.0 };
}

/// Next message size after an ACK, driven by the block-size queue `w`.
pub fn encoding_control(w: f64, m: f64, params: &NcaParams) -> f64 {
    if w >= 0.0 {
        (m - params.delta).max(0.0)
    } else {
        (m + params.delta).min(params.m_max)
    }
}

/// Maximizes `q·K·E{I(h,P) | ĥ} − z·P` over `P ∈ [0, P_peak]`.
///
/// The objective is concave, so the optimum is either an endpoint or the
/// root of its derivative, which is found by bracketed Newton iteration.
pub fn power_for_user(
    q: f64,
    z: f64,
    law: &ConditionalLaw,
    params: &NcaParams,
    rule: &Quadrature,
) -> PowerChoice {
    let (k, i_max, p_peak) = (params.k, params.i_max, params.p_peak);
    if q <= 0.0 {
        return PowerChoice::IDLE;
    }
    let a = q * k;
    if z <= 0.0 {
        return PowerChoice {
            power: p_peak,
            value: a * law.expected_mi(p_peak, i_max, rule),
        };
    }
    if a * law.mean_power() / LN_2 <= z {
        return PowerChoice::IDLE;
    }
    if law.is_deterministic() {
        let y = law.los_power();
        let saturation = (i_max.exp2() - 1.0) / y;
        let p = (a / (z * LN_2) - 1.0 / y).clamp(0.0, p_peak.min(saturation));
        return PowerChoice {
            power: p,
            value: a * capped_log2(y * p, i_max) - z * p,
        };
    }

    let tol = 1e-7 * p_peak;
    let mut lo = 0.0;
    let mut hi = p_peak;
    let mut hi_checked = false;
    // Jensen's bound log(1+E{Y}P) gives a start on the right side of the optimum.
    let mut x = (a / (z * LN_2) - 1.0 / law.mean_power()).clamp(0.0, p_peak);
    if x <= 0.0 {
        x = 0.5 * p_peak;
    }
    for _ in 0..200 {
        let s = law.expected_mi_with_slope(x, i_max, rule);
        let value = a * s.value - z * x;
        let g = a * s.slope - z;
        if x >= p_peak {
            hi_checked = true;
            if g >= 0.0 {
                return PowerChoice { power: p_peak, value };
            }
        }
        if g > 0.0 {
            lo = x;
        } else {
            hi = x;
            hi_checked = true;
        }
        let d = a * s.curvature;
        let newton = if d < 0.0 { x - g / d } else { f64::INFINITY };
        let next = if newton > lo && newton < hi {
            newton
        } else if newton >= hi && !hi_checked {
            p_peak
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= tol || (hi_checked && hi - lo <= tol) {
            return PowerChoice { power: x, value };
        }
        x = next;
    }
    let value = a * law.expected_mi(x, i_max, rule) - z * x;
    PowerChoice { power: x, value }
}

/// Convenience wrapper taking the estimate and CSI accuracy directly.
pub fn power_for_user_at(
    q: f64,
    z: f64,
    h_hat: ComplexGain,
    rho: f64,
    params: &NcaParams,
    rule: &Quadrature,
) -> Result<PowerChoice> {
    if q < 0.0 || z < 0.0 {
        return Err(invalid("q, z", "backlogs must be non-negative"));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} is outside [0, 1]")));
    }
    Ok(power_for_user(q, z, &ConditionalLaw::new(h_hat, rho), params, rule))
}

/// Picks the user with the largest value (lowest index on ties) and applies
/// the power floor. Returns `(user, power)`.
pub fn schedule(candidates: &[PowerChoice], eps_power: f64) -> (Option<usize>, f64) {
    let labeled: Vec<(usize, PowerChoice)> = candidates.iter().copied().enumerate().collect();
    schedule_labeled(&labeled, eps_power)
}

/// [`schedule`] over `(label, candidate)` pairs in any order. Ties go to the
/// smallest label, so the outcome does not depend on how users are listed.
pub fn schedule_labeled(candidates: &[(usize, PowerChoice)], eps_power: f64) -> (Option<usize>, f64) {
    let mut best: Option<(usize, PowerChoice)> = None;
    for &(label, c) in candidates {
        best = match best {
            Some((l, b)) if b.value > c.value || (b.value == c.value && l < label) => Some((l, b)),
            _ => Some((label, c)),
        };
    }
    match best {
        Some((label, c)) if c.power >= eps_power => (Some(label), c.power),
        _ => (None, 0.0),
    }
}

/// Mutable state of one NCA (or genie) run.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub users: Vec<UserState>,
    pub virt: VirtualState,
}

impl NetworkState {
    /// Empty queues and first messages of `M_max/2`.
    pub fn new(s_users: usize, params: &NcaParams, utility: &Utility) -> Self {
        let user = UserState::new(params.m_max / 2.0, params.overhead, utility.slope_at_zero(), params.d_cap);
        Self {
            users: vec![user; s_users],
            virt: VirtualState::default(),
        }
    }
}

/// Per-slot record returned by the slot functions.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    pub decision: SlotDecision,
    pub ack: AckOutcome,
    /// Bits removed from each encoder queue this slot.
    pub drained: Vec<f64>,
    /// Information delivered to the scheduled receiver (`I(h,P)·K`).
    pub info_bits: f64,
}

/// Rate control for every user from the pre-update backlogs.
pub fn admit_all(users: &[UserState], params: &NcaParams, utility: &Utility) -> Vec<f64> {
    users.iter().map(|u| rate_control(u.q, params.v, utility, params.d_cap)).collect()
}

/// Upper bound on a user's value from Jensen's inequality,
/// `E{I} ≤ min(log₂(1+E{|h|²}·P), i_max)`, in closed form.
pub fn value_upper_bound(q: f64, z: f64, law: &ConditionalLaw, params: &NcaParams) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let a = q * params.k;
    let y = law.mean_power();
    let saturation = (params.i_max.exp2() - 1.0) / y;
    let p = if z <= 0.0 {
        params.p_peak
    } else {
        (a / (z * LN_2) - 1.0 / y).clamp(0.0, params.p_peak.min(saturation))
    };
    a * capped_log2(y * p, params.i_max) - z * p
}

/// Candidate power and value for every user.
///
/// Users are visited in order of their Jensen bound; a user whose bound is
/// strictly below the best exact value so far cannot be scheduled and is
/// reported with value `-∞` and zero power instead of being optimized.
pub fn nca_candidates(
    state: &NetworkState,
    draw: &ChannelDraw,
    rho: f64,
    params: &NcaParams,
    rule: &Quadrature,
) -> Vec<PowerChoice> {
    let z = state.virt.z;
    let laws: Vec<ConditionalLaw> = draw.estimated_gains.iter().map(|&h| ConditionalLaw::new(h, rho)).collect();
    let bounds: Vec<f64> = state
        .users
        .iter()
        .zip(&laws)
        .map(|(u, law)| value_upper_bound(u.q, z, law, params))
        .collect();
    let mut order: Vec<usize> = (0..bounds.len()).collect();
    order.sort_by(|&i, &j| bounds[j].total_cmp(&bounds[i]).then(i.cmp(&j)));

    let skipped = PowerChoice { power: 0.0, value: f64::NEG_INFINITY };
    let mut out = vec![skipped; bounds.len()];
    let mut best = f64::NEG_INFINITY;
    for s in order {
        if bounds[s] < best {
            break;
        }
        let c = power_for_user(state.users[s].q, z, &laws[s], params, rule);
        best = best.max(c.value);
        out[s] = c;
    }
    out
}

/// One slot of the network control algorithm.
///
/// Order: rate control on the current backlogs, scheduling and power from
/// `ĥ`, decoding with the true gain, and on ACK the block-size queue and next
/// message size; then every encoder queue and the power queue advance.
pub fn nca_slot(
    state: &mut NetworkState,
    draw: &ChannelDraw,
    rho: f64,
    params: &NcaParams,
    utility: &Utility,
    rule: &Quadrature,
) -> Result<SlotReport> {
    let admitted = admit_all(&state.users, params, utility);
    let candidates = nca_candidates(state, draw, rho, params, rule);
    let (scheduled, power) = schedule(&candidates, params.eps_power);

    let mut ack = AckOutcome::NONE;
    let mut info_bits = 0.0;
    if let Some(s) = scheduled {
        info_bits = capped_log2(draw.true_gains[s].norm_sqr() * power, params.i_max) * params.k;
        let u = &mut state.users[s];
        if params.rho1_encoding_fix && u.packets_in_flight == 0 {
            let m = capped_log2(draw.estimated_gains[s].norm_sqr() * power, params.i_max) * params.k;
            u.begin_message(m.min(params.m_max), params.overhead);
        }
        let m_next = encoding_control(u.w, u.m, params);
        ack = decoder_step(u, s, true, info_bits, m_next, params.overhead)?;
        if let Some(l) = ack.recorded_block_size {
            w_step(u, l, params.l_av);
        }
    }
    let drained = finish_slot(state, &ack, &admitted, power, params)?;
    Ok(SlotReport {
        decision: SlotDecision {
            scheduled_user: scheduled,
            power,
            admitted,
        },
        ack,
        drained,
        info_bits,
    })
}

/// Bits delivered this slot under genie coding: the scheduled user receives
/// its realized `I(h,P)·K`, everyone else nothing.
pub fn genie_ack_override(params: &NcaParams, draw: &ChannelDraw, decision: &SlotDecision) -> Vec<f64> {
    let mut bits = vec![0.0; draw.users()];
    if let Some(s) = decision.scheduled_user {
        bits[s] = capped_log2(draw.true_gains[s].norm_sqr() * decision.power, params.i_max) * params.k;
    }
    bits
}

pub(crate) fn finish_slot(
    state: &mut NetworkState,
    ack: &AckOutcome,
    admitted: &[f64],
    power: f64,
    params: &NcaParams,
) -> Result<Vec<f64>> {
    if power < 0.0 {
        return Err(Error::NegativePower(power));
    }
    let mut drained = Vec::with_capacity(admitted.len());
    for (s, (u, &x)) in state.users.iter_mut().zip(admitted).enumerate() {
        drained.push(encoder_step(u, s, ack, x)?);
    }
    z_step(&mut state.virt, power, params.p_av);
    Ok(drained)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NcaParams {
        NcaParams::new(1e4 * 100.0, 10.0, 100.0, 8.0, 10f64.powf(1.2), 4.0 * 10f64.powf(1.2)).unwrap()
    }

    #[test]
    fn encoding_control_examples() {
        let mut p = params();
        p.delta = 10.0;
        p.m_max = 1000.0;
        assert_eq!(encoding_control(0.0, 100.0, &p), 90.0);
        assert_eq!(encoding_control(-1.0, 995.0, &p), 1000.0);
        assert_eq!(encoding_control(5.0, 4.0, &p), 0.0);
    }

    #[test]
    fn power_trivial_cases() {
        let p = params();
        let rule = Quadrature::default_rule();
        let law = ConditionalLaw::new(ComplexGain::new(0.7, -0.2), 0.8);
        assert_eq!(power_for_user(0.0, 3.0, &law, &p, rule).power, 0.0);
        assert_eq!(power_for_user(10.0, 0.0, &law, &p, rule).power, p.p_peak);
    }

    #[test]
    fn perfect_csi_stationary_point() {
        let p = params();
        let rule = Quadrature::default_rule();
        let h = ComplexGain::new(0.6, 0.3);
        let y = h.norm_sqr();
        let law = ConditionalLaw::new(h, 1.0);
        let (q, z) = (0.5, 2.0);
        let got = power_for_user(q, z, &law, &p, rule).power;
        let expected = (q * p.k / (z * LN_2) - 1.0 / y).clamp(0.0, p.p_peak);
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn newton_matches_golden_section() {
        let p = params();
        let rule = Quadrature::default_rule();
        for &(re, im, rho, q, z) in &[
            (0.7, 0.1, 0.8, 40.0, 300.0),
            (0.1, 0.1, 0.0, 5.0, 20.0),
            (1.5, 0.4, 0.5, 2.0, 3.0),
            (0.3, 0.9, 0.95, 100.0, 5000.0),
        ] {
            let law = ConditionalLaw::new(ComplexGain::new(re, im), rho);
            let got = power_for_user(q, z, &law, &p, rule);
            let obj = |pw: f64| q * p.k * law.expected_mi(pw, p.i_max, rule) - z * pw;
            let (_, best) = crate::optimize::golden_section_max(obj, 0.0, p.p_peak, 1e-10);
            assert!(got.value >= best - 1e-9 * best.abs().max(1.0), "{got:?} vs {best}");
            assert!((obj(got.power) - got.value).abs() < 1e-9 * got.value.abs().max(1.0));
        }
    }

    #[test]
    fn jensen_bound_dominates_exact_value() {
        let p = params();
        let rule = Quadrature::default_rule();
        for &(re, im, rho, q, z) in &[(0.7, 0.1, 0.8, 40.0, 300.0), (0.1, 0.1, 0.0, 5.0, 20.0), (2.0, 0.0, 0.3, 9.0, 1.0)] {
            let law = ConditionalLaw::new(ComplexGain::new(re, im), rho);
            let exact = power_for_user(q, z, &law, &p, rule).value;
            assert!(value_upper_bound(q, z, &law, &p) >= exact);
        }
    }

    #[test]
    fn pruning_keeps_the_winner() {
        let p = params();
        let rule = Quadrature::default_rule();
        let mut st = NetworkState::new(4, &p, &Utility::Log { scale: p.k });
        for (i, u) in st.users.iter_mut().enumerate() {
            u.q = 100.0 + 50.0 * i as f64;
        }
        st.virt.z = 800.0;
        let draw = ChannelDraw {
            true_gains: vec![ComplexGain::ZERO; 4],
            estimated_gains: vec![
                ComplexGain::new(0.3, 0.1),
                ComplexGain::new(1.2, -0.4),
                ComplexGain::new(0.9, 0.9),
                ComplexGain::new(0.2, 0.0),
            ],
            slot_index: 0,
        };
        let pruned = nca_candidates(&st, &draw, 0.8, &p, rule);
        let full: Vec<PowerChoice> = st
            .users
            .iter()
            .zip(&draw.estimated_gains)
            .map(|(u, &h)| power_for_user(u.q, st.virt.z, &ConditionalLaw::new(h, 0.8), &p, rule))
            .collect();
        assert_eq!(schedule(&pruned, p.eps_power), schedule(&full, p.eps_power));
    }

    #[test]
    fn schedule_ties_and_floor() {
        let c = [
            PowerChoice { power: 1.0, value: 5.0 },
            PowerChoice { power: 2.0, value: 5.0 },
        ];
        assert_eq!(schedule(&c, 0.1), (Some(0), 1.0));
        let c = [PowerChoice { power: 0.01, value: 0.0 }];
        assert_eq!(schedule(&c, 0.1), (None, 0.0));
        assert_eq!(schedule(&[], 0.1), (None, 0.0));
    }

    #[test]
    fn cold_start_admits_into_empty_queue() {
        let p = params();
        let u = Utility::Log { scale: p.k };
        let mut st = NetworkState::new(1, &p, &u);
        let draw = ChannelDraw {
            true_gains: vec![ComplexGain::new(1.0, 0.0)],
            estimated_gains: vec![ComplexGain::new(1.0, 0.0)],
            slot_index: 0,
        };
        let rep = nca_slot(&mut st, &draw, 0.8, &p, &u, Quadrature::default_rule()).unwrap();
        assert_eq!(rep.decision.scheduled_user, None);
        assert_eq!(st.users[0].q, rep.decision.admitted[0]);
        assert!(st.users[0].q > 0.0);
    }
}
