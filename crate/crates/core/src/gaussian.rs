//! Gaussian tail functions and the bivariate-normal orthant kernel.

use std::f64::consts::{PI, SQRT_2};

/// `Q(x) = P(Z > x)` for a standard normal `Z`.
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal CDF.
pub fn phi_cdf(x: f64) -> f64 {
    q_func(-x)
}

/// Standard normal density.
pub fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `ln Q(x)`, finite far into both tails.
pub fn ln_q(x: f64) -> f64 {
    if x < 0.0 {
        return (-q_func(-x)).ln_1p();
    }
    if x < 30.0 {
        return q_func(x).ln();
    }
    // Q(x) = φ(x)/x · (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸ - …)
    let inv2 = 1.0 / (x * x);
    let series = 1.0 - inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2 * (1.0 - 7.0 * inv2)));
    -0.5 * x * x - (x * (2.0 * PI).sqrt()).ln() + series.ln()
}

/// `ln(Q(x) Q(-x))`.
pub fn ln_q_product(x: f64) -> f64 {
    ln_q(x) + ln_q(-x)
}

// Gauss-Legendre nodes on [-1, 0) with weights; orders 6, 12 and 20.
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
];

const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];

const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

/// Upper orthant `P(X > h, Y > k)` of a standard bivariate normal with
/// correlation `r`.
///
/// Drezner-Wesolowsky integration over the correlation, with Genz's
/// double-precision refinements for `|r| > 0.925`. Fixed 6/12/20-point
/// Gauss-Legendre rules depending on `|r|`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let ar = r.abs();
    let rule: &[(f64, f64)] = if ar < 0.3 {
        &GL6
    } else if ar < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if ar < 0.925 {
        if ar > 0.0 {
            let hs = 0.5 * (h * h + k * k);
            let asr = 0.5 * r.asin();
            for &(w, x) in rule {
                for s in [-1.0, 1.0] {
                    let sn = (asr * (1.0 + s * x)).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / two_pi;
        }
        bvn += phi_cdf(-h) * phi_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if ar < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -0.5 * (bs / as_ + hk);
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                bvn -= (-0.5 * hk).exp() * two_pi.sqrt() * phi_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a *= 0.5;
            for &(w, x) in rule {
                for s in [-1.0, 1.0] {
                    let xs = (a + a * s * x).powi(2);
                    let rs = (1.0 - xs).sqrt();
                    let asr = -0.5 * (bs / xs + hk);
                    if asr > -100.0 {
                        bvn += a
                            * w
                            * asr.exp()
                            * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
                    }
                }
            }
            bvn = -bvn / two_pi;
        }
        if r > 0.0 {
            bvn += phi_cdf(-h.max(k));
        } else {
            bvn = -bvn;
            if k > h {
                bvn += phi_cdf(k) - phi_cdf(h);
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sheppard(r: f64) -> f64 {
        0.25 + r.asin() / (2.0 * PI)
    }

    // P(X > h, Y > k) = ∫_h^∞ φ(x) Q((k - r x)/√(1-r²)) dx, composite Simpson.
    fn bvn_quadrature(h: f64, k: f64, r: f64) -> f64 {
        let upper = h.max(0.0) + 12.0;
        let n = 200_000;
        let step = (upper - h) / n as f64;
        let s = (1.0 - r * r).sqrt();
        let f = |x: f64| phi_pdf(x) * q_func((k - r * x) / s);
        let mut acc = f(h) + f(upper);
        for i in 1..n {
            let x = h + i as f64 * step;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        acc * step / 3.0
    }

    #[test]
    fn q_values() {
        assert!((q_func(0.0) - 0.5).abs() < 1e-16);
        assert!((q_func(1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((q_func(-1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
    }

    #[test]
    fn ln_q_tails() {
        for x in [-5.0, -0.3, 0.0, 2.0, 10.0, 29.0] {
            assert!((ln_q(x) - q_func(x).ln()).abs() < 1e-12 * q_func(x).ln().abs().max(1.0));
        }
        // continuity across the asymptotic switch
        let below = q_func(29.999_999).ln();
        let above = ln_q(30.0);
        assert!((below - above).abs() < 1e-4);
        assert!(ln_q(200.0).is_finite());
        assert!(ln_q_product(50.0).is_finite());
    }

    #[test]
    fn orthant_matches_sheppard() {
        for r in [-0.99, -0.95, -0.9, -0.5, -0.1, 0.0, 0.2, 0.5, 0.8, 0.9, 0.93, 0.99] {
            let p = bvn_upper(0.0, 0.0, r);
            assert!((p - sheppard(r)).abs() < 1e-12, "r={r}: {p} vs {}", sheppard(r));
        }
    }

    #[test]
    fn orthant_matches_quadrature_with_offsets() {
        for &(h, k) in &[(0.5, -0.3), (-1.2, 0.7), (1.5, 2.0), (-2.0, -1.0), (0.1, 0.1)] {
            for r in [-0.95, -0.6, -0.2, 0.3, 0.77, 0.96] {
                let p = bvn_upper(h, k, r);
                let q = bvn_quadrature(h, k, r);
                assert!((p - q).abs() < 1e-10, "h={h} k={k} r={r}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn reflection_identity() {
        for r in [0.1, 0.4, 0.77, 0.95] {
            assert!((bvn_upper(0.0, 0.0, r) + bvn_upper(0.0, 0.0, -r) - 0.5).abs() < 1e-12);
        }
    }
}
