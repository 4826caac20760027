//! Special functions behind the conditional channel law.
//!
//! Given an estimate `ĥ`, the true gain is circular complex Gaussian with
//! mean `√ρ·ĥ` and variance `1−ρ`, so the envelope `|h|` is Rician. Everything
//! here works with the envelope `r = |h|` and its density
//!
//! ```text
//! f(r) = (2r/σ²) · exp(−(r²+ν²)/σ²) · I₀(2νr/σ²),   ν = √ρ·|ĥ|, σ² = 1−ρ
//! ```
//!
//! evaluated through the exponentially scaled Bessel function so that large
//! line-of-sight components do not overflow.

/// Exponentially scaled modified Bessel function of the first kind, order
/// zero: `I₀(x)·e^{−|x|}`.
///
/// Rational approximations from Boost.Math (double-precision branch, max
/// relative error around 5e-16).
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x < 7.75 {
        const P: [f64; 15] = [
            1.000_000_000_000_000_00e+00,
            2.499_999_999_999_999_09e-01,
            2.777_777_777_777_822_57e-02,
            1.736_111_111_110_237_92e-03,
            6.944_444_444_533_525_21e-05,
            1.929_012_345_132_199_20e-06,
            3.936_759_911_025_107_39e-08,
            6.151_186_727_044_392_89e-10,
            7.594_070_020_589_734_46e-12,
            7.593_897_933_698_363_67e-14,
            6.277_677_736_362_926_11e-16,
            4.347_097_041_532_722_87e-18,
            2.634_177_426_901_091_54e-20,
            1.139_430_377_448_228_25e-22,
            9.079_269_200_856_248_12e-25,
        ];
        let a = x * x / 4.0;
        (a * horner(&P, a) + 1.0) * (-x).exp()
    } else if x < 500.0 {
        const P: [f64; 22] = [
            3.989_422_804_014_250_88e-01,
            4.986_778_506_049_619_85e-02,
            2.805_062_339_283_126_23e-02,
            2.922_112_251_660_478_73e-02,
            4.442_072_994_936_595_61e-02,
            1.309_705_746_058_567_19e-01,
            -3.350_522_802_317_270_22e+00,
            2.330_257_115_835_147_27e+02,
            -1.133_663_506_971_723_55e+04,
            4.240_576_743_178_673_31e+05,
            -1.231_570_285_956_987_31e+07,
            2.802_319_381_552_675_16e+08,
            -5.018_839_997_137_779_29e+09,
            7.080_292_430_151_091_13e+10,
            -7.842_610_821_248_111_06e+11,
            6.768_257_378_540_965_65e+12,
            -4.490_348_496_961_380_65e+13,
            2.241_552_399_669_589_95e+14,
            -8.134_264_678_656_593_18e+14,
            2.023_910_973_916_877_77e+15,
            -3.086_757_152_953_708_78e+15,
            2.175_875_438_638_190_74e+15,
        ];
        horner(&P, 1.0 / x) / x.sqrt()
    } else {
        const P: [f64; 5] = [
            3.989_422_804_014_329_05e-01,
            4.986_778_504_914_345_60e-02,
            2.805_063_089_165_061_02e-02,
            2.921_790_968_539_151_76e-02,
            4.533_712_087_625_794_42e-02,
        ];
        horner(&P, 1.0 / x) / x.sqrt()
    }
}

#[inline]
fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Rician envelope density at `r` for line-of-sight amplitude `nu` and
/// diffuse power `sigma2`.
#[inline]
pub fn rician_pdf(r: f64, nu: f64, sigma2: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let d = r - nu;
    let base = 2.0 * r / sigma2 * (-(d * d) / sigma2).exp();
    if nu == 0.0 {
        base
    } else {
        base * bessel_i0e(2.0 * nu * r / sigma2)
    }
}

/// `Pr{|h|² ≥ y}` for the conditional law (the Marcum Q₁ function in power
/// units).
///
/// Uses the Poisson mixture of Erlang tails,
/// `Σ_k Pois(k; λ)·Γ_upper(k+1, x)`, with `λ = ν²/σ²` and `x = y/σ²`. All terms
/// are non-negative, so there is no cancellation. Very strong line-of-sight
/// components or far tails (where `e^{−λ}` or `e^{−x}` would underflow) fall back
/// to integrating the density directly.
pub fn rician_power_survival(y: f64, nu: f64, sigma2: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    if sigma2 <= 0.0 {
        return if nu * nu >= y { 1.0 } else { 0.0 };
    }
    let lambda = nu * nu / sigma2;
    let x = y / sigma2;
    if lambda > 600.0 || x > 600.0 {
        return survival_by_quadrature(y, nu, sigma2);
    }

    let mut pois = (-lambda).exp();
    let mut erlang_term = (-x).exp();
    let mut erlang_tail = erlang_term;
    let mut sum = pois * erlang_tail;
    let mut k = 0.0_f64;
    loop {
        k += 1.0;
        pois *= lambda / k;
        erlang_term *= x / k;
        erlang_tail = (erlang_tail + erlang_term).min(1.0);
        sum += pois * erlang_tail;
        // Σ_{j>k} Pois(j) ≤ Pois(k)·λ/(k+1−λ) once k+1 > λ; erlang tails are ≤ 1.
        if k + 1.0 > lambda && pois * lambda / (k + 1.0 - lambda) < 1e-17 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn survival_by_quadrature(y: f64, nu: f64, sigma2: f64) -> f64 {
    use gauss_quad::GaussLegendre;
    use std::sync::OnceLock;
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    let rule = RULE.get_or_init(|| GaussLegendre::new(64.try_into().unwrap()));

    let spread = (sigma2 / 2.0).sqrt();
    let lo = (nu - 9.0 * spread).max(0.0);
    let hi = nu + 9.0 * spread;
    let r = y.sqrt();
    if r >= hi {
        return 0.0;
    }
    if r <= lo {
        return 1.0;
    }
    // Integrate whichever side is narrower; both are smooth panels.
    if hi - r < r - lo {
        rule.integrate(r, hi, |t| rician_pdf(t, nu, sigma2)).clamp(0.0, 1.0)
    } else {
        (1.0 - rule.integrate(lo, r, |t| rician_pdf(t, nu, sigma2))).clamp(0.0, 1.0)
    }
}
