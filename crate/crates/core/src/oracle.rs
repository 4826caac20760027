//! Brute-force oracles behind `selftest`.
//!
//! Each suite draws randomized instances, solves them with the production
//! routine and with an independent exhaustive method, and records the worst
//! discrepancy against a fixed tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::{fixed_rate_select, goodput};
use crate::channel::{ComplexGain, ConditionalLaw, Quadrature};
use crate::controller::{power_for_user, NcaParams};
use crate::engine::{run_with_observer, ExperimentConfig};
use crate::utility::{rate_control, Utility};

/// Sizes of the oracle suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestOptions {
    pub instances: usize,
    pub rate_grid: usize,
    pub power_grid: usize,
    pub fixed_rate_grid: usize,
    pub mc_samples: usize,
    pub replay_slots: u64,
    pub seed: u64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self {
            instances: 1000,
            rate_grid: 1_000_000,
            power_grid: 10_000,
            fixed_rate_grid: 100_000,
            mc_samples: 10_000_000,
            replay_slots: 5_000,
            seed: 20_240_601,
        }
    }
}

impl SelftestOptions {
    /// Reduced sizes for quick checks.
    pub fn quick() -> Self {
        Self {
            instances: 50,
            rate_grid: 100_000,
            power_grid: 2_000,
            fixed_rate_grid: 20_000,
            mc_samples: 400_000,
            replay_slots: 1_000,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub name: String,
    pub instances: usize,
    /// Largest observed error in the suite's own units.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleResult {
    fn new(name: &str, instances: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            instances,
            worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }
}

/// Runs every suite.
pub fn selftest(opts: &SelftestOptions) -> Vec<OracleResult> {
    vec![
        rate_control_suite(opts),
        power_suite(opts),
        fixed_rate_suite(opts),
        expected_mi_suite(opts),
        queue_replay_suite(opts),
    ]
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn random_gain(rng: &mut ChaCha8Rng) -> ComplexGain {
    let scale = rng.random_range(0.05..2.0);
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    ComplexGain::new(re * scale, im * scale)
}

fn default_params() -> NcaParams {
    let c = ExperimentConfig::default();
    c.nca_params().expect("default config is valid")
}

/// `rate_control` against a uniform grid over `[0, D]`; error is the argmax
/// distance in units of `D`.
pub fn rate_control_suite(opts: &SelftestOptions) -> OracleResult {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;
    for i in 0..opts.instances {
        let k = log_uniform(&mut rng, 1.0, 200.0);
        let v = log_uniform(&mut rng, 1e2 * k, 1e5 * k);
        let utility = match i % 4 {
            0 => Utility::Linear { b: 1.0 / k },
            1 => Utility::Isoelastic {
                scale: k,
                alpha: rng.random_range(0.05..1.0),
            },
            _ => Utility::Log { scale: k },
        };
        let d_cap = 8.0 * k;
        let q = rng.random_range(0.0..1.2) * utility.slope_at_zero() * v / 2.0;
        let x = rate_control(q, v, &utility, d_cap);
        let objective = |x: f64| v * utility.value(x) - x * x - 2.0 * q * x;
        let mut best = (0.0, f64::NEG_INFINITY);
        for j in 0..=opts.rate_grid {
            let xj = d_cap * j as f64 / opts.rate_grid as f64;
            let f = objective(xj);
            if f > best.1 {
                best = (xj, f);
            }
        }
        worst = worst.max((x - best.0).abs() / d_cap);
    }
    OracleResult::new("rate_control", opts.instances, worst, 1e-3)
}

/// `power_for_user` against a grid over `[0, P_peak]`; error is the relative
/// shortfall of the returned objective.
pub fn power_suite(opts: &SelftestOptions) -> OracleResult {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37);
    let params = default_params();
    let rule = Quadrature::default_rule();
    let mut worst = 0.0f64;
    for i in 0..opts.instances {
        let rho = match i % 10 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        };
        let law = ConditionalLaw::new(random_gain(&mut rng), rho);
        let q = log_uniform(&mut rng, 1.0, 5000.0);
        let z = log_uniform(&mut rng, 1.0, 1e4);
        let got = power_for_user(q, z, &law, &params, rule);
        let objective = |p: f64| q * params.k * law.expected_mi(p, params.i_max, rule) - z * p;
        let at_returned = objective(got.power);
        let grid_best = (0..=opts.power_grid)
            .map(|j| objective(params.p_peak * j as f64 / opts.power_grid as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        let shortfall = (grid_best - at_returned).max(0.0) / grid_best.abs().max(1e-300);
        let consistency = (at_returned - got.value).abs() / at_returned.abs().max(1.0);
        worst = worst.max(shortfall).max(consistency);
    }
    OracleResult::new("power_for_user", opts.instances, worst, 1e-6)
}

/// `fixed_rate_select` against a grid over `[0, i_max·k]`; error is the
/// relative goodput shortfall.
pub fn fixed_rate_suite(opts: &SelftestOptions) -> OracleResult {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x51f1);
    let params = default_params();
    let (k, i_max) = (params.k, params.i_max);
    let mut worst = 0.0f64;
    for _ in 0..opts.instances {
        let h = random_gain(&mut rng);
        let rho = rng.random_range(0.0..1.0);
        let p = rng.random_range(0.01..params.p_peak);
        let law = ConditionalLaw::new(h, rho);
        let r = fixed_rate_select(h, p, rho, k, i_max).expect("valid inputs");
        let g = goodput(&law, r, p, k, i_max);
        let grid_best = (1..=opts.fixed_rate_grid)
            .map(|j| goodput(&law, i_max * k * j as f64 / opts.fixed_rate_grid as f64, p, k, i_max))
            .fold(0.0, f64::max);
        if grid_best > 0.0 {
            worst = worst.max((grid_best - g).max(0.0) / grid_best);
        }
    }
    OracleResult::new("fixed_rate_select", opts.instances, worst, 1e-4)
}

/// Monte Carlo estimate of `E{min(log₂(1+|h|²P), i_max) | ĥ}` and its
/// standard error.
pub fn monte_carlo_expected_mi(
    h_hat: ComplexGain,
    power: f64,
    rho: f64,
    i_max: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let (mr, mi) = (rho.sqrt() * h_hat.re, rho.sqrt() * h_hat.im);
    let sd = ((1.0 - rho) / 2.0).sqrt();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let (re, im) = (mr + sd * a, mi + sd * b);
        let v = (1.0 + (re * re + im * im) * power).log2().min(i_max);
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Quadrature against Monte Carlo on a 5×5 grid of `(|ĥ|, P)` at `ρ = 0.5`,
/// plus the Rayleigh case `ρ = 0`. Error is measured in standard errors.
pub fn expected_mi_suite(opts: &SelftestOptions) -> OracleResult {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x3c3c);
    let p_av = 10f64.powf(1.2);
    let i_max = 8.0;
    let mut cases = Vec::new();
    for &mag in &[0.2, 0.6, 1.0, 1.5, 2.2] {
        for &p in &[1.0, 4.0, p_av, 40.0, 4.0 * p_av] {
            cases.push((ComplexGain::new(mag * 0.6, mag * 0.8), p, 0.5));
        }
    }
    cases.push((ComplexGain::new(0.3, -0.1), p_av, 0.0));
    let mut worst = 0.0f64;
    for &(h, p, rho) in &cases {
        let quad = crate::channel::expected_mutual_info(h, p, rho, i_max).expect("valid inputs");
        let (mc, se) = monte_carlo_expected_mi(h, p, rho, i_max, opts.mc_samples, &mut rng);
        let err = if se > 0.0 {
            (quad - mc).abs() / se
        } else if (quad - mc).abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(err);
    }
    OracleResult::new("expected_mutual_info", cases.len(), worst, 3.0)
}

/// Replays a short NCA trajectory with an independent implementation of the
/// encoder, block-size and power queue recursions; any mismatch fails.
pub fn queue_replay_suite(opts: &SelftestOptions) -> OracleResult {
    let cfg = ExperimentConfig {
        t_slots: opts.replay_slots,
        seed: opts.seed,
        ..ExperimentConfig::default()
    };
    let s = cfg.s_users;
    let mut q = vec![0.0f64; s];
    let mut w = vec![0.0f64; s];
    let mut z = 0.0f64;
    let mut worst = 0.0f64;
    let outcome = run_with_observer(&cfg, |rec| {
        let d = &rec.report.decision;
        for u in 0..s {
            let served = if rec.report.ack.acked_user == Some(u) {
                rec.report.ack.delivered_bits
            } else {
                0.0
            };
            q[u] = f64::max(q[u] - served, 0.0) + d.admitted[u];
            if let (Some(a), Some(l)) = (rec.report.ack.acked_user, rec.report.ack.recorded_block_size) {
                if a == u {
                    w[u] += l as f64 - cfg.l_av;
                }
            }
            worst = worst
                .max((q[u] - rec.state.users[u].q).abs())
                .max((w[u] - rec.state.users[u].w).abs());
        }
        z = f64::max(z - cfg.p_av, 0.0) + d.power;
        worst = worst.max((z - rec.state.virt.z).abs());
    });
    if outcome.is_err() {
        worst = f64::INFINITY;
    }
    OracleResult::new("queue_replay", opts.replay_slots as usize, worst, 1e-9)
}
