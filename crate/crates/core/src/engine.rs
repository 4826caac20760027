//! Complete runs and parameter sweeps.
//!
//! A run owns its random stream, its queues and its metric accumulators. The
//! channel trajectory depends only on the seed, so different strategies with
//! the same seed see identical fading.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fixed_rate_slot, genie_slot, FixedRateState};
use crate::channel::{step_channel, ChannelDraw, ChannelMode, ChannelParams, Quadrature};
use crate::controller::{nca_slot, NcaParams, NetworkState, SlotReport};
use crate::error::{invalid, Error, Result};
use crate::utility::Utility;

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "RATELESS_SIM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Nca,
    Genie,
    FixedRate,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Nca, Strategy::Genie, Strategy::FixedRate];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Nca => "nca",
            Strategy::Genie => "genie",
            Strategy::FixedRate => "fixed_rate",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nca" => Ok(Strategy::Nca),
            "genie" => Ok(Strategy::Genie),
            "fixed_rate" | "fixed-rate" => Ok(Strategy::FixedRate),
            other => Err(Error::BadValue {
                key: "strategy".into(),
                reason: format!("unknown strategy `{other}`"),
            }),
        }
    }
}

/// Family of the per-user utility; the scale is always `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    Log,
    Linear,
    Isoelastic,
}

/// Everything needed to reproduce one run.
///
/// `delta`, `eps_power` and `d_cap` left as `None` follow `m_max`, `p_peak`
/// and `i_max·k`, so sweeping `l_av` rescales the step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub s_users: usize,
    pub v: f64,
    pub l_av: f64,
    pub rho: f64,
    pub k: f64,
    pub i_max: f64,
    pub p_av: f64,
    pub p_peak: f64,
    pub delta: Option<f64>,
    pub eps_power: Option<f64>,
    pub eps_overhead: f64,
    pub d_cap: Option<f64>,
    pub t_slots: u64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub channel_mode: ChannelMode,
    pub rho1_encoding_fix: bool,
    pub quadrature_nodes: usize,
    pub utility: UtilityKind,
    /// Exponent of the isoelastic utility.
    pub utility_alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let k = 10.0;
        let p_av = 10f64.powf(1.2);
        Self {
            strategy: Strategy::Nca,
            s_users: 3,
            v: 1e4 * k,
            l_av: 10.0,
            rho: 0.8,
            k,
            i_max: 8.0,
            p_av,
            p_peak: 4.0 * p_av,
            delta: None,
            eps_power: None,
            eps_overhead: 0.0,
            d_cap: None,
            t_slots: 100_000,
            warmup_fraction: 0.1,
            seed: 1,
            channel_mode: ChannelMode::Ar1,
            rho1_encoding_fix: false,
            quadrature_nodes: crate::channel::DEFAULT_QUADRATURE_NODES,
            utility: UtilityKind::Log,
            utility_alpha: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn m_max(&self) -> f64 {
        self.i_max * self.l_av * self.k
    }

    pub fn resolved_delta(&self) -> f64 {
        self.delta.unwrap_or(1e-3 * self.m_max())
    }

    pub fn resolved_eps_power(&self) -> f64 {
        self.eps_power.unwrap_or(1e-3 * self.p_peak)
    }

    pub fn resolved_d_cap(&self) -> f64 {
        self.d_cap.unwrap_or(self.i_max * self.k)
    }

    pub fn utility_fn(&self) -> Utility {
        match self.utility {
            UtilityKind::Log => Utility::Log { scale: self.k },
            UtilityKind::Linear => Utility::Linear { b: 1.0 / self.k },
            UtilityKind::Isoelastic => Utility::Isoelastic {
                scale: self.k,
                alpha: self.utility_alpha,
            },
        }
    }

    pub fn nca_params(&self) -> Result<NcaParams> {
        let mut p = NcaParams::new(self.v, self.l_av, self.k, self.i_max, self.p_av, self.p_peak)?;
        p.delta = self.resolved_delta();
        p.eps_power = self.resolved_eps_power();
        p.d_cap = self.resolved_d_cap();
        p.overhead = self.eps_overhead;
        p.rho1_encoding_fix = self.rho1_encoding_fix;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_users == 0 {
            return Err(invalid("s_users", "need at least one user"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(invalid("warmup_fraction", "must lie in [0, 1)"));
        }
        if self.quadrature_nodes < 2 {
            return Err(invalid("quadrature_nodes", "need at least two nodes"));
        }
        if self.eps_power.is_some_and(|e| e > self.p_peak) {
            return Err(invalid("eps_power", "must not exceed p_peak"));
        }
        ChannelParams::new(self.rho, self.channel_mode)?;
        self.utility_fn().validate()?;
        self.nca_params()?;
        Ok(())
    }

    /// The same configuration with one axis set to `value`.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match axis {
            Axis::V => c.v = value,
            Axis::LAv => c.l_av = value,
            Axis::Rho => c.rho = value,
            Axis::SUsers => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(invalid("s_users", format!("{value} is not a positive integer")));
                }
                c.s_users = value as usize;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Counters of online invariant checks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    /// Slots where some backlog exceeded `U′(0)·V/2`.
    pub queue_bound: u64,
    /// Emitted powers outside `{0} ∪ [ε, P_peak]`.
    pub power_support: u64,
    /// Negative queue values.
    pub negativity: u64,
}

impl Violations {
    pub fn total(&self) -> u64 {
        self.queue_bound + self.power_support + self.negativity
    }
}

/// Where and why a run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub slot: u64,
    pub reason: String,
    pub snapshot: String,
}

/// Time averages over the post-warmup window, plus whole-run extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub config: ExperimentConfig,
    /// `Σ_s U(x̄_s)` with `x̄_s` the average admitted rate.
    pub total_utility: f64,
    /// Average admitted bits per slot, per user.
    pub per_user_throughput: Vec<f64>,
    /// Average bits drained from each encoder queue per slot.
    pub delivered_throughput: Vec<f64>,
    /// `Σ_s x̄_s / k`, bits per symbol.
    #[serde(rename = "spectral_efficiency_total")]
    pub spectral_efficiency: f64,
    pub avg_power: f64,
    /// Mean block size over codes completed in the window; 0 without ACKs.
    pub avg_block_size: Vec<f64>,
    /// Fraction of window slots carrying an ACK.
    pub ack_fraction: f64,
    pub ack_count: u64,
    pub scheduled_count: u64,
    /// Feedback messages: ACKs for NCA, one per scheduled slot otherwise.
    pub feedback_count: u64,
    pub outage_count: u64,
    pub max_queue: Vec<f64>,
    pub max_z: f64,
    pub violations: Violations,
    pub failure: Option<RunFailure>,
}

impl MetricsReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.violations.total() == 0
    }
}

/// One slot as seen by an observer of [`run_with_observer`].
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord<'a> {
    pub slot: u64,
    pub draw: &'a ChannelDraw,
    pub report: &'a SlotReport,
    pub state: &'a NetworkState,
}

pub fn run(config: &ExperimentConfig) -> Result<MetricsReport> {
    run_with_observer(config, |_| {})
}

/// Runs `config`, calling `observe` after every slot.
pub fn run_with_observer<F: FnMut(&SlotRecord)>(config: &ExperimentConfig, mut observe: F) -> Result<MetricsReport> {
    config.validate()?;
    let params = config.nca_params()?;
    let utility = config.utility_fn();
    let channel = ChannelParams::new(config.rho, config.channel_mode)?;
    let rule = Quadrature::new(config.quadrature_nodes)?;
    let s_users = config.s_users;
    let bound = params.queue_bound(&utility);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = NetworkState::new(s_users, &params, &utility);
    let mut fixed = FixedRateState::new(s_users);
    let mut draw: Option<ChannelDraw> = None;

    let warmup = (config.warmup_fraction * config.t_slots as f64).floor() as u64;
    let mut acc = Accumulator::new(s_users);
    let mut violations = Violations::default();
    let mut failure = None;
    let mut max_queue = vec![0.0f64; s_users];
    let mut max_z = 0.0f64;

    for t in 0..config.t_slots {
        let next = step_channel(draw.as_ref(), s_users, &channel, &mut rng);
        let draw_ref = draw.insert(next);
        let report = match config.strategy {
            Strategy::Nca => nca_slot(&mut state, draw_ref, config.rho, &params, &utility, &rule)?,
            Strategy::Genie => genie_slot(&mut state, draw_ref, config.rho, &params, &utility, &rule)?,
            Strategy::FixedRate => fixed_rate_slot(&mut state, &mut fixed, draw_ref, config.rho, &params, &utility)?,
        };

        let p = report.decision.power;
        if !(p == 0.0 || (p >= params.eps_power && p <= params.p_peak)) {
            violations.power_support += 1;
        }
        if state.users.iter().any(|u| u.q > bound) {
            violations.queue_bound += 1;
        }
        if state.virt.z < 0.0 || state.users.iter().any(|u| u.q < 0.0 || u.r < 0.0) {
            violations.negativity += 1;
        }
        for (m, u) in max_queue.iter_mut().zip(&state.users) {
            *m = m.max(u.q);
        }
        max_z = max_z.max(state.virt.z);

        observe(&SlotRecord {
            slot: t,
            draw: draw_ref,
            report: &report,
            state: &state,
        });
        if violations.total() > 0 {
            failure = Some(RunFailure {
                slot: t,
                reason: format!("{violations:?}"),
                snapshot: format!("{:?}", state),
            });
            break;
        }
        if t >= warmup {
            acc.record(config.strategy, &report);
        }
    }

    Ok(acc.finish(config, &utility, fixed.outage_count.iter().sum(), max_queue, max_z, violations, failure))
}

struct Accumulator {
    slots: u64,
    admitted: Vec<f64>,
    drained: Vec<f64>,
    power: f64,
    block_sum: Vec<u64>,
    block_count: Vec<u64>,
    acks: u64,
    scheduled: u64,
    feedback: u64,
}

impl Accumulator {
    fn new(s: usize) -> Self {
        Self {
            slots: 0,
            admitted: vec![0.0; s],
            drained: vec![0.0; s],
            power: 0.0,
            block_sum: vec![0; s],
            block_count: vec![0; s],
            acks: 0,
            scheduled: 0,
            feedback: 0,
        }
    }

    fn record(&mut self, strategy: Strategy, rep: &SlotReport) {
        self.slots += 1;
        for (a, x) in self.admitted.iter_mut().zip(&rep.decision.admitted) {
            *a += x;
        }
        for (d, x) in self.drained.iter_mut().zip(&rep.drained) {
            *d += x;
        }
        self.power += rep.decision.power;
        if rep.decision.scheduled_user.is_some() {
            self.scheduled += 1;
            if strategy != Strategy::Nca {
                self.feedback += 1;
            }
        }
        if let (Some(s), Some(l)) = (rep.ack.acked_user, rep.ack.recorded_block_size) {
            self.acks += 1;
            self.block_sum[s] += l;
            self.block_count[s] += 1;
            if strategy == Strategy::Nca {
                self.feedback += 1;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        self,
        config: &ExperimentConfig,
        utility: &Utility,
        outage_count: u64,
        max_queue: Vec<f64>,
        max_z: f64,
        violations: Violations,
        failure: Option<RunFailure>,
    ) -> MetricsReport {
        let n = self.slots.max(1) as f64;
        let per_user_throughput: Vec<f64> = self.admitted.iter().map(|a| a / n).collect();
        let delivered_throughput = self.drained.iter().map(|d| d / n).collect();
        let total_utility = per_user_throughput.iter().map(|&x| utility.value(x)).sum();
        let spectral_efficiency = per_user_throughput.iter().sum::<f64>() / config.k;
        let avg_block_size = self
            .block_sum
            .iter()
            .zip(&self.block_count)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s as f64 / c as f64 })
            .collect();
        MetricsReport {
            config: config.clone(),
            total_utility,
            per_user_throughput,
            delivered_throughput,
            spectral_efficiency,
            avg_power: self.power / n,
            avg_block_size,
            ack_fraction: self.acks as f64 / n,
            ack_count: self.acks,
            scheduled_count: self.scheduled,
            feedback_count: self.feedback,
            outage_count,
            max_queue,
            max_z,
            violations,
            failure,
        }
    }
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    V,
    LAv,
    Rho,
    SUsers,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::V => "v",
            Axis::LAv => "l_av",
            Axis::Rho => "rho",
            Axis::SUsers => "s_users",
        }
    }

    pub fn value_of(self, c: &ExperimentConfig) -> f64 {
        match self {
            Axis::V => c.v,
            Axis::LAv => c.l_av,
            Axis::Rho => c.rho,
            Axis::SUsers => c.s_users as f64,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "v" => Ok(Axis::V),
            "l_av" => Ok(Axis::LAv),
            "rho" => Ok(Axis::Rho),
            "s_users" => Ok(Axis::SUsers),
            other => Err(Error::UnknownAxis(other.to_string())),
        }
    }
}

/// Every combination of axis value, seed and strategy, in that nesting order.
pub fn sweep_configs(
    base: &ExperimentConfig,
    axis: Axis,
    values: &[f64],
    seeds: &[u64],
    strategies: &[Strategy],
) -> Result<Vec<ExperimentConfig>> {
    let mut out = Vec::with_capacity(values.len() * seeds.len() * strategies.len());
    for &value in values {
        let at = base.with_axis(axis, value)?;
        for &seed in seeds {
            for &strategy in strategies {
                out.push(ExperimentConfig {
                    seed,
                    strategy,
                    ..at.clone()
                });
            }
        }
    }
    Ok(out)
}

/// Runs a sweep, possibly in parallel. Reports come back in
/// [`sweep_configs`] order regardless of completion order.
pub fn sweep(
    base: &ExperimentConfig,
    axis: Axis,
    values: &[f64],
    seeds: &[u64],
    strategies: &[Strategy],
) -> Result<Vec<MetricsReport>> {
    run_all(&sweep_configs(base, axis, values, seeds, strategies)?)
}

/// Runs independent configurations on a pool sized by `RATELESS_SIM_THREADS`.
pub fn run_all(configs: &[ExperimentConfig]) -> Result<Vec<MetricsReport>> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?;
    pool.install(|| configs.par_iter().map(run).collect())
}
