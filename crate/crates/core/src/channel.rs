//! Correlated Rayleigh fading, imperfect CSI, and mutual information.
//!
//! The true gain of every user follows an AR(1) process (or is redrawn each
//! slot in `Iid` mode) with unit steady-state power. The transmitter only sees
//! `ĥ = √ρ·h + √(1−ρ)·n̂`; conditioned on `ĥ`, the true gain is circular
//! Gaussian with mean `√ρ·ĥ` and variance `1−ρ`. [`ConditionalLaw`] captures
//! that law and evaluates `E{min(log₂(1+|h|²P), I_max) | ĥ}` by Gauss–Legendre
//! quadrature over the Rician envelope.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::rician_pdf;

/// Default number of Gauss–Legendre nodes for conditional expectations.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// Complex channel coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexGain {
    pub re: f64,
    pub im: f64,
}

impl ComplexGain {
    pub const ZERO: ComplexGain = ComplexGain { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// `|h|²`.
    #[inline]
    pub fn norm_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.re.hypot(self.im)
    }

    #[inline]
    fn scale(self, a: f64) -> Self {
        Self::new(self.re * a, self.im * a)
    }

    #[inline]
    fn add(self, other: Self) -> Self {
        Self::new(self.re + other.re, self.im + other.im)
    }

    /// Circular-symmetric complex Gaussian with zero mean and unit variance.
    pub fn sample_standard<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Self::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Iid,
    Ar1,
}

/// Fading and CSI model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    ar_old_weight: f64,
    ar_innovation_weight: f64,
    csi_accuracy: f64,
    mode: ChannelMode,
}

impl ChannelParams {
    /// AR(1) weights 0.1 / 0.9 with CSI accuracy `rho`.
    pub fn new(rho: f64, mode: ChannelMode) -> Result<Self> {
        Self::with_ar_weights(rho, mode, 0.1, 0.9)
    }

    pub fn with_ar_weights(
        rho: f64,
        mode: ChannelMode,
        ar_old_weight: f64,
        ar_innovation_weight: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(invalid("rho", format!("{rho} is outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&ar_old_weight) || ar_innovation_weight < 0.0 {
            return Err(invalid("ar_old_weight", "AR weights must lie in [0, 1]"));
        }
        if ((ar_old_weight + ar_innovation_weight) - 1.0).abs() > 1e-12 {
            return Err(invalid(
                "ar_innovation_weight",
                "AR weights must sum to one for unit channel power",
            ));
        }
        Ok(Self {
            ar_old_weight,
            ar_innovation_weight,
            csi_accuracy: rho,
            mode,
        })
    }

    pub fn rho(&self) -> f64 {
        self.csi_accuracy
    }

    pub fn mode(&self) -> ChannelMode {
        self.mode
    }
}

/// True and estimated gains of every user in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDraw {
    pub true_gains: Vec<ComplexGain>,
    pub estimated_gains: Vec<ComplexGain>,
    pub slot_index: u64,
}

impl ChannelDraw {
    pub fn users(&self) -> usize {
        self.true_gains.len()
    }
}

/// Draw the next slot's gains.
///
/// With no previous draw (or in `Iid` mode) the true gains are fresh unit-power
/// complex Gaussians. Per user, the innovation is drawn before the CSI noise,
/// so a given seed fixes the whole trajectory independently of any control
/// decision.
pub fn step_channel<R: Rng + ?Sized>(
    prev: Option<&ChannelDraw>,
    users: usize,
    params: &ChannelParams,
    rng: &mut R,
) -> ChannelDraw {
    let keep = params.ar_old_weight.sqrt();
    let fresh = params.ar_innovation_weight.sqrt();
    let rho = params.csi_accuracy;
    let (est_keep, est_noise) = (rho.sqrt(), (1.0 - rho).sqrt());

    let mut true_gains = Vec::with_capacity(users);
    let mut estimated_gains = Vec::with_capacity(users);
    for s in 0..users {
        let innovation = ComplexGain::sample_standard(rng);
        let h = match (params.mode, prev) {
            (ChannelMode::Ar1, Some(p)) => p.true_gains[s].scale(keep).add(innovation.scale(fresh)),
            _ => innovation,
        };
        let csi_noise = ComplexGain::sample_standard(rng);
        let h_hat = if rho == 1.0 {
            h
        } else {
            h.scale(est_keep).add(csi_noise.scale(est_noise))
        };
        true_gains.push(h);
        estimated_gains.push(h_hat);
    }
    ChannelDraw {
        true_gains,
        estimated_gains,
        slot_index: prev.map_or(0, |p| p.slot_index + 1),
    }
}

/// `min(log₂(1+|h|²P), i_max)`.
pub fn mutual_info(h: ComplexGain, power: f64, i_max: f64) -> Result<f64> {
    if power < 0.0 {
        return Err(Error::NegativePower(power));
    }
    if i_max <= 0.0 {
        return Err(invalid("i_max", "must be positive"));
    }
    Ok(capped_log2(h.norm_sqr() * power, i_max))
}

#[inline]
pub(crate) fn capped_log2(snr: f64, i_max: f64) -> f64 {
    snr.ln_1p().min(i_max * LN_2) / LN_2
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pairs: Vec<(f64, f64)>,
}

impl Quadrature {
    pub fn new(nodes: usize) -> Result<Self> {
        let degree = std::num::NonZeroUsize::new(nodes)
            .filter(|n| n.get() >= 2)
            .ok_or_else(|| invalid("quadrature_nodes", "need at least two nodes"))?;
        let rule = GaussLegendre::new(degree);
        Ok(Self {
            pairs: rule.as_node_weight_pairs().to_vec(),
        })
    }

    /// Shared rule with [`DEFAULT_QUADRATURE_NODES`] nodes.
    pub fn default_rule() -> &'static Quadrature {
        static RULE: OnceLock<Quadrature> = OnceLock::new();
        RULE.get_or_init(|| Quadrature::new(DEFAULT_QUADRATURE_NODES).expect("valid node count"))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Value of the conditional expectation together with its first two
/// derivatives in `P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiSample {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

/// Law of `|h|` given an estimate `ĥ`: Rician with line-of-sight amplitude
/// `ν = √ρ·|ĥ|` and diffuse power `σ² = 1−ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalLaw {
    nu: f64,
    los_power: f64,
    sigma2: f64,
    lo: f64,
    hi: f64,
}

/// Half-width of the integration window in units of the envelope's
/// Gaussian spread `σ/√2`; the neglected tail mass is below `e^{-32}`.
const WINDOW_SPREADS: f64 = 8.0;

impl ConditionalLaw {
    pub fn new(h_hat: ComplexGain, rho: f64) -> Self {
        let los_power = rho * h_hat.norm_sqr();
        let nu = los_power.sqrt();
        let sigma2 = (1.0 - rho).max(0.0);
        let spread = (sigma2 / 2.0).sqrt();
        Self {
            nu,
            los_power,
            sigma2,
            lo: (nu - WINDOW_SPREADS * spread).max(0.0),
            hi: nu + WINDOW_SPREADS * spread,
        }
    }

    /// Line-of-sight amplitude `ν`.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Line-of-sight power `ν² = ρ·|ĥ|²`; equals `|ĥ|²` exactly when `ρ = 1`.
    pub fn los_power(&self) -> f64 {
        self.los_power
    }

    /// Diffuse power `σ²`.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma2 == 0.0
    }

    /// `E{|h|²}`.
    pub fn mean_power(&self) -> f64 {
        self.los_power + self.sigma2
    }

    /// `Pr{|h|² ≥ y}`.
    pub fn power_survival(&self, y: f64) -> f64 {
        crate::special::rician_power_survival(y, self.nu, self.sigma2)
    }

    /// Envelope window `[lo, hi]` outside which the density is negligible.
    pub fn window(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// `E{min(log₂(1+|h|²P), i_max)}`.
    pub fn expected_mi(&self, power: f64, i_max: f64, rule: &Quadrature) -> f64 {
        self.evaluate(power, i_max, rule, false).value
    }

    /// Value, slope and curvature in `P` of the conditional expectation.
    ///
    /// The cap makes the integrand kink at `r_c = √((2^{I_max}−1)/P)`. The
    /// panel therefore stops at `r_c`: below it the integrand is smooth and the
    /// mass beyond contributes exactly `I_max`. This keeps Gauss–Legendre at
    /// full order instead of losing it to the kink.
    pub fn expected_mi_with_slope(&self, power: f64, i_max: f64, rule: &Quadrature) -> MiSample {
        self.evaluate(power, i_max, rule, true)
    }

    fn evaluate(&self, power: f64, i_max: f64, rule: &Quadrature, derivatives: bool) -> MiSample {
        if power <= 0.0 {
            let slope = self.mean_power() / LN_2;
            return MiSample {
                value: 0.0,
                slope,
                curvature: -self.second_moment_over_ln2(),
            };
        }
        let ceiling = i_max.exp2() - 1.0;
        if self.is_deterministic() {
            let y = self.los_power;
            let snr = y * power;
            if snr >= ceiling {
                return MiSample { value: i_max, slope: 0.0, curvature: 0.0 };
            }
            let d = 1.0 + snr;
            return MiSample {
                value: snr.ln_1p() / LN_2,
                slope: y / (d * LN_2),
                curvature: -y * y / (d * d * LN_2),
            };
        }

        let r_cap = (ceiling / power).sqrt();
        let capped = r_cap < self.hi;
        let upper = if capped { r_cap } else { self.hi };
        if upper <= self.lo {
            return MiSample { value: i_max, slope: 0.0, curvature: 0.0 };
        }
        let half = 0.5 * (upper - self.lo);
        let mid = 0.5 * (upper + self.lo);

        let mut mass = 0.0;
        let mut info = 0.0;
        let mut slope = 0.0;
        let mut curvature = 0.0;
        for &(x, w) in &rule.pairs {
            let r = mid + half * x;
            let y = r * r;
            let wf = w * rician_pdf(r, self.nu, self.sigma2);
            let snr = y * power;
            mass += wf;
            info += wf * snr.ln_1p();
            if derivatives {
                let g = y / (1.0 + snr);
                slope += wf * g;
                curvature += wf * g * g;
            }
        }
        let mut value = half * info / LN_2;
        if capped {
            value += i_max * (1.0 - half * mass).max(0.0);
        }
        let mut sample = MiSample {
            value,
            slope: half * slope / LN_2,
            curvature: -half * curvature / LN_2,
        };
        if derivatives && capped {
            // The moving upper limit r_c(P) contributes −k(r_c)·f(r_c)·r_c/(2P).
            let k_at_cap = r_cap * r_cap / (ceiling + 1.0) / LN_2;
            let f_at_cap = rician_pdf(r_cap, self.nu, self.sigma2);
            sample.curvature -= k_at_cap * f_at_cap * r_cap / (2.0 * power);
        }
        sample
    }

    fn second_moment_over_ln2(&self) -> f64 {
        // E{|h|⁴} for a complex Gaussian with mean power ν² and variance σ².
        let (m2, s2) = (self.los_power, self.sigma2);
        (m2 * m2 + 4.0 * m2 * s2 + 2.0 * s2 * s2) / LN_2
    }
}

/// `E{min(log₂(1+|h|²P), i_max) | ĥ}` with the default quadrature rule.
pub fn expected_mutual_info(h_hat: ComplexGain, power: f64, rho: f64, i_max: f64) -> Result<f64> {
    expected_mutual_info_with(h_hat, power, rho, i_max, Quadrature::default_rule())
}

pub fn expected_mutual_info_with(
    h_hat: ComplexGain,
    power: f64,
    rho: f64,
    i_max: f64,
    rule: &Quadrature,
) -> Result<f64> {
    if power < 0.0 {
        return Err(Error::NegativePower(power));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} is outside [0, 1]")));
    }
    if i_max <= 0.0 {
        return Err(invalid("i_max", "must be positive"));
    }
    Ok(ConditionalLaw::new(h_hat, rho).expected_mi(power, i_max, rule))
}
