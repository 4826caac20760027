//! Reference strategies: genie coding (realized mutual information is
//! delivered every scheduled slot) and goodput-optimal fixed-rate coding.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{capped_log2, ChannelDraw, ComplexGain, ConditionalLaw, Quadrature};
use crate::controller::{
    admit_all, finish_slot, genie_ack_override, nca_candidates, schedule, value_upper_bound, NcaParams, NetworkState,
    PowerChoice, SlotDecision, SlotReport,
};
use crate::error::{invalid, Result};
use crate::optimize::golden_section_max;
use crate::rateless::AckOutcome;
use crate::utility::Utility;

/// Grid size used by [`fixed_rate_select`].
pub const FIXED_RATE_GRID: usize = 2048;

/// Per-user bookkeeping of the fixed-rate baseline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedRateState {
    /// Rate chosen in the user's most recent scheduled slot (bits/packet).
    pub r_star: Vec<f64>,
    pub outage_count: Vec<u64>,
    pub success_count: Vec<u64>,
}

impl FixedRateState {
    pub fn new(s_users: usize) -> Self {
        Self {
            r_star: vec![0.0; s_users],
            outage_count: vec![0; s_users],
            success_count: vec![0; s_users],
        }
    }
}

/// Goodput `R·Pr{I(h,P)·k ≥ R | ĥ}` of a fixed rate `R`.
pub fn goodput(law: &ConditionalLaw, rate: f64, power: f64, k: f64, i_max: f64) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    if rate > i_max * k || power <= 0.0 {
        return 0.0;
    }
    let threshold = ((rate / k).exp2() - 1.0) / power;
    rate * law.power_survival(threshold)
}

/// Goodput-maximizing rate for estimate `ĥ` at power `p`.
///
/// Dense grid over `[0, i_max·k]` followed by golden-section refinement in the
/// neighbourhood of the best grid point; no unimodality is assumed globally.
pub fn fixed_rate_select(h_hat: ComplexGain, p: f64, rho: f64, k: f64, i_max: f64) -> Result<f64> {
    if p < 0.0 {
        return Err(crate::error::Error::NegativePower(p));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} is outside [0, 1]")));
    }
    let law = ConditionalLaw::new(h_hat, rho);
    Ok(select_rate(&law, p, k, i_max, FIXED_RATE_GRID))
}

fn select_rate(law: &ConditionalLaw, p: f64, k: f64, i_max: f64, grid: usize) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if law.is_deterministic() {
        return capped_log2(law.los_power() * p, i_max) * k;
    }
    let top = i_max * k;
    let step = top / grid as f64;
    let mut best = (0usize, 0.0);
    for j in 1..=grid {
        let g = goodput(law, j as f64 * step, p, k, i_max);
        if g > best.1 {
            best = (j, g);
        }
    }
    if best.1 <= 0.0 {
        return 0.0;
    }
    let lo = (best.0 as f64 - 1.0) * step;
    let hi = ((best.0 + 1) as f64 * step).min(top);
    let (r, g) = golden_section_max(|r| goodput(law, r, p, k, i_max), lo, hi, 1e-12 * top);
    if g >= best.1 {
        r
    } else {
        best.0 as f64 * step
    }
}

/// A fixed-rate candidate: power, value, and the SNR threshold `y` whose rate
/// `k·min(log₂(1+yP), i_max)` is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedRateChoice {
    pub power: f64,
    pub value: f64,
    pub threshold: f64,
}

impl FixedRateChoice {
    pub fn rate(&self, k: f64, i_max: f64) -> f64 {
        capped_log2(self.threshold * self.power, i_max) * k
    }
}

const THRESHOLD_GRID: usize = 48;

/// Jointly maximizes `q·k·S(y)·min(log₂(1+yP), i_max) − z·P` over the
/// threshold `y` and power `P`, where `S(y) = Pr{|h|² ≥ y | ĥ}`.
///
/// For fixed `y` the optimal power has a closed form; the outer search over
/// `√y` uses a coarse grid and golden-section refinement.
pub fn fixed_rate_power(q: f64, z: f64, law: &ConditionalLaw, params: &NcaParams) -> FixedRateChoice {
    let idle = FixedRateChoice { power: 0.0, value: 0.0, threshold: 0.0 };
    if q <= 0.0 {
        return idle;
    }
    let a = q * params.k;
    let ceiling = params.i_max.exp2() - 1.0;
    let inner = |y: f64, survival: f64| -> (f64, f64) {
        let limit = params.p_peak.min(ceiling / y);
        let gain = a * survival;
        let p = if z <= 0.0 {
            limit
        } else {
            (gain / (z * LN_2) - 1.0 / y).clamp(0.0, limit)
        };
        (p, gain * capped_log2(y * p, params.i_max) - z * p)
    };
    if law.is_deterministic() {
        let y = law.los_power();
        if y <= 0.0 {
            return idle;
        }
        let (p, v) = inner(y, 1.0);
        return FixedRateChoice { power: p, value: v, threshold: y };
    }
    let objective = |r: f64| -> f64 {
        let y = r * r;
        if y <= 0.0 {
            return 0.0;
        }
        inner(y, law.power_survival(y)).1
    };
    let (lo, hi) = law.window();
    let step = (hi - lo) / THRESHOLD_GRID as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for j in 0..=THRESHOLD_GRID {
        let v = objective(lo + j as f64 * step);
        if v > best.1 {
            best = (j, v);
        }
    }
    let a_r = lo + (best.0 as f64 - 1.0).max(0.0) * step;
    let b_r = lo + ((best.0 + 1).min(THRESHOLD_GRID)) as f64 * step;
    let (mut r, mut v) = golden_section_max(objective, a_r, b_r, 1e-7 * hi);
    if best.1 > v {
        r = lo + best.0 as f64 * step;
        v = best.1;
    }
    let y = r * r;
    if y <= 0.0 || v <= 0.0 {
        return idle;
    }
    let (p, value) = inner(y, law.power_survival(y));
    FixedRateChoice { power: p, value, threshold: y }
}

/// Fixed-rate candidates for every user, pruned like
/// [`crate::controller::nca_candidates`]: goodput never exceeds `k·E{I}`, so
/// the Jensen bound also caps the fixed-rate value.
pub fn fixed_rate_candidates(
    state: &NetworkState,
    draw: &ChannelDraw,
    rho: f64,
    params: &NcaParams,
) -> Vec<FixedRateChoice> {
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

    let skipped = FixedRateChoice { power: 0.0, value: f64::NEG_INFINITY, threshold: 0.0 };
    let mut out = vec![skipped; bounds.len()];
    let mut best = f64::NEG_INFINITY;
    for s in order {
        if bounds[s] < best {
            break;
        }
        let c = fixed_rate_power(state.users[s].q, z, &laws[s], params);
        best = best.max(c.value);
        out[s] = c;
    }
    out
}

/// One slot of the fixed-rate baseline.
///
/// Scheduling uses `q·(expected goodput) − z·P`; the scheduled user's packet
/// carries `R*` bits and decodes iff `I(h,P)·k ≥ R*`.
pub fn fixed_rate_slot(
    state: &mut NetworkState,
    fixed: &mut FixedRateState,
    draw: &ChannelDraw,
    rho: f64,
    params: &NcaParams,
    utility: &Utility,
) -> Result<SlotReport> {
    let admitted = admit_all(&state.users, params, utility);
    let choices = fixed_rate_candidates(state, draw, rho, params);
    let candidates: Vec<PowerChoice> = choices
        .iter()
        .map(|c| PowerChoice { power: c.power, value: c.value })
        .collect();
    let (scheduled, power) = schedule(&candidates, params.eps_power);

    let mut ack = AckOutcome::NONE;
    let mut info_bits = 0.0;
    if let Some(s) = scheduled {
        let r_star = choices[s].rate(params.k, params.i_max);
        fixed.r_star[s] = r_star;
        info_bits = capped_log2(draw.true_gains[s].norm_sqr() * power, params.i_max) * params.k;
        if info_bits >= r_star {
            fixed.success_count[s] += 1;
            ack = AckOutcome {
                acked_user: Some(s),
                recorded_block_size: Some(1),
                delivered_bits: r_star,
            };
        } else {
            fixed.outage_count[s] += 1;
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

/// One slot of the genie baseline: NCA's scheduling, power and rate control,
/// with every scheduled slot delivering the realized `I(h,P)·k` bits.
pub fn genie_slot(
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
    let decision = SlotDecision {
        scheduled_user: scheduled,
        power,
        admitted,
    };
    let bits = genie_ack_override(params, draw, &decision);
    let ack = match scheduled {
        Some(s) => AckOutcome {
            acked_user: Some(s),
            recorded_block_size: Some(1),
            delivered_bits: bits[s],
        },
        None => AckOutcome::NONE,
    };
    let info_bits = scheduled.map_or(0.0, |s| bits[s]);
    let drained = finish_slot(state, &ack, &decision.admitted, power, params)?;
    Ok(SlotReport {
        decision,
        ack,
        drained,
        info_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NcaParams {
        let p_av = 10f64.powf(1.2);
        NcaParams::new(1e6, 10.0, 100.0, 8.0, p_av, 4.0 * p_av).unwrap()
    }

    #[test]
    fn perfect_csi_rate_is_mutual_information() {
        let h = ComplexGain::new(0.9, 0.2);
        let r = fixed_rate_select(h, 7.0, 1.0, 100.0, 8.0).unwrap();
        assert!((r - 100.0 * (1.0 + h.norm_sqr() * 7.0).log2()).abs() < 1e-9);
        assert_eq!(fixed_rate_select(h, 0.0, 0.5, 100.0, 8.0).unwrap(), 0.0);
    }

    #[test]
    fn rayleigh_rate_matches_closed_form_grid() {
        let (p, k) = (15.85, 100.0);
        let r = fixed_rate_select(ComplexGain::new(0.3, 0.4), p, 0.0, k, 8.0).unwrap();
        let g = |r: f64| r * (-((r / k).exp2() - 1.0) / p).exp();
        let best = (0..=100_000)
            .map(|j| g(j as f64 * 8.0 * k / 100_000.0))
            .fold(0.0, f64::max);
        assert!(g(r) >= best * (1.0 - 1e-4));
    }

    #[test]
    fn joint_threshold_search_matches_rate_selection() {
        let p = params();
        let law = ConditionalLaw::new(ComplexGain::new(0.8, -0.4), 0.8);
        let (q, z) = (300.0, 2000.0);
        let c = fixed_rate_power(q, z, &law, &p);
        assert!(c.power > 0.0);
        // At the chosen power the rate must be (near) goodput optimal.
        let r_sel = select_rate(&law, c.power, p.k, p.i_max, FIXED_RATE_GRID);
        let g_sel = goodput(&law, r_sel, c.power, p.k, p.i_max);
        let g_joint = goodput(&law, c.rate(p.k, p.i_max), c.power, p.k, p.i_max);
        assert!(g_joint >= g_sel * (1.0 - 1e-5), "{g_joint} vs {g_sel}");
        // And the power must be optimal for that goodput curve.
        let obj = |pw: f64| {
            let r = select_rate(&law, pw, p.k, p.i_max, 256);
            q * goodput(&law, r, pw, p.k, p.i_max) - z * pw
        };
        let grid_best = (0..=400).map(|j| obj(j as f64 * p.p_peak / 400.0)).fold(f64::MIN, f64::max);
        assert!(c.value >= grid_best * (1.0 - 1e-3), "{} vs {grid_best}", c.value);
    }

    #[test]
    fn outage_and_success_branches() {
        let p = params();
        let u = Utility::Log { scale: p.k };
        let mut st = NetworkState::new(1, &p, &u);
        st.users[0].q = 1000.0;
        st.virt.z = 50.0;
        let mut fr = FixedRateState::new(1);
        let h_hat = ComplexGain::new(1.0, 0.0);
        let good = ChannelDraw {
            true_gains: vec![ComplexGain::new(3.0, 0.0)],
            estimated_gains: vec![h_hat],
            slot_index: 0,
        };
        let rep = fixed_rate_slot(&mut st, &mut fr, &good, 0.8, &p, &u).unwrap();
        assert_eq!(rep.decision.scheduled_user, Some(0));
        assert_eq!(fr.success_count[0], 1);
        let expected_q = (1000.0 - fr.r_star[0]).max(0.0) + rep.decision.admitted[0];
        assert!((st.users[0].q - expected_q).abs() < 1e-9);

        let q_before = st.users[0].q;
        let bad = ChannelDraw {
            true_gains: vec![ComplexGain::new(0.01, 0.0)],
            ..good
        };
        let rep = fixed_rate_slot(&mut st, &mut fr, &bad, 0.8, &p, &u).unwrap();
        assert_eq!(fr.outage_count[0], 1);
        assert_eq!(st.users[0].q, q_before + rep.decision.admitted[0]);
    }

    #[test]
    fn genie_delivers_realized_information() {
        let p = params();
        let u = Utility::Log { scale: p.k };
        let mut st = NetworkState::new(2, &p, &u);
        st.users[0].q = 2000.0;
        st.virt.z = 10.0;
        let draw = ChannelDraw {
            true_gains: vec![ComplexGain::new(0.5, 0.5), ComplexGain::new(1.0, 0.0)],
            estimated_gains: vec![ComplexGain::new(0.6, 0.4), ComplexGain::new(1.0, 0.0)],
            slot_index: 0,
        };
        let rep = genie_slot(&mut st, &draw, 0.8, &p, &u, Quadrature::default_rule()).unwrap();
        assert_eq!(rep.decision.scheduled_user, Some(0));
        let bits = capped_log2(0.5 * rep.decision.power, p.i_max) * p.k;
        assert!((rep.ack.delivered_bits - bits).abs() < 1e-9);
        assert!((st.users[0].q - ((2000.0 - bits).max(0.0) + rep.decision.admitted[0])).abs() < 1e-9);
        // The idle user only accumulates arrivals.
        assert_eq!(st.users[1].q, rep.decision.admitted[1]);
    }
}
