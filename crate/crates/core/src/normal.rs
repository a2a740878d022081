//! Standard normal distribution functions.
//!
//! `Φ` comes from `libm::erfc`. The inverse starts from Acklam's rational
//! approximation and is polished with Halley steps inside a bisection
//! bracket.

use std::f64::consts::{PI, SQRT_2};

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF `Φ(x)`.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 - Φ(x)`, accurate in the far tail.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Solves `Φ(x) = p` for `p <= 1/2` using the lower tail directly.
fn lower_tail_inverse(p: f64) -> f64 {
    let mut x = acklam(p);
    let (mut lo, mut hi) = (-40.0f64, 0.0f64);
    for _ in 0..60 {
        let fx = cdf(x) - p;
        if fx > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        if fx == 0.0 {
            break;
        }
        let u = fx / pdf(x);
        let step = u / (1.0 + 0.5 * x * u);
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            x -= step;
            break;
        }
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        x = next;
    }
    x
}

/// Quantile function `Φ^{-1}(p)`; returns `±inf` at 0 and 1.
pub fn inv_cdf(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p <= 0.5 {
        lower_tail_inverse(p)
    } else {
        -lower_tail_inverse(1.0 - p)
    }
}

/// Inverse upper tail: `x` with `1 - Φ(x) = p`. Accurate for tiny `p`.
pub fn inv_sf(p: f64) -> f64 {
    if p <= 0.5 {
        -inv_cdf(p)
    } else {
        inv_cdf(1.0 - p)
    }
}

/// Two-sided critical value `z_{1-α/2}`.
pub fn two_sided_z(alpha: f64) -> f64 {
    inv_sf(alpha / 2.0)
}
