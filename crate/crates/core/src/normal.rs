//! Univariate and bivariate standard normal distribution functions.
//!
//! The univariate CDF goes through `erfc` so both tails keep full relative
//! precision. The quantile starts from Acklam's rational approximation and
//! takes one Halley step against the CDF, which brings it to near machine
//! precision.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF, Φ(x).
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x) without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// ln Φ(x), accurate far into the lower tail.
pub fn log_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-sf(x)).ln_1p()
    } else if x > -35.0 {
        cdf(x).ln()
    } else {
        // Asymptotic expansion of the Mills ratio.
        let z = 1.0 / (x * x);
        -0.5 * x * x - LN_SQRT_2PI - (-x).ln() + (1.0 - z + 3.0 * z * z - 15.0 * z * z * z).ln()
    }
}

/// (ln Φ(x), φ(x)/Φ(x)) with a single `erfc` evaluation.
pub fn log_cdf_and_mills(x: f64) -> (f64, f64) {
    if x > 0.0 {
        let tail = sf(x);
        ((-tail).ln_1p(), pdf(x) / (1.0 - tail))
    } else if x > -35.0 {
        let c = cdf(x);
        (c.ln(), pdf(x) / c)
    } else {
        (log_cdf(x), pdf_over_cdf(x))
    }
}

/// φ(x)/Φ(x), the inverse Mills ratio of the lower tail.
pub fn pdf_over_cdf(x: f64) -> f64 {
    if x > -35.0 {
        pdf(x) / cdf(x)
    } else {
        let z = 1.0 / (x * x);
        -x / (1.0 - z + 3.0 * z * z - 15.0 * z * z * z)
    }
}

const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

/// Standard normal quantile Φ⁻¹(p). Returns ±∞ at p = 1 and p = 0, NaN outside [0, 1].
pub fn quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // 1 − p is exact for p ≥ 0.5.
        -lower_quantile(1.0 - p)
    } else {
        lower_quantile(p)
    }
}

fn lower_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 0.5);
    let a = &ACKLAM_A;
    let b = &ACKLAM_B;
    let x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((ACKLAM_C[0] * q + ACKLAM_C[1]) * q + ACKLAM_C[2]) * q + ACKLAM_C[3]) * q + ACKLAM_C[4])
            * q
            + ACKLAM_C[5])
            / ((((ACKLAM_D[0] * q + ACKLAM_D[1]) * q + ACKLAM_D[2]) * q + ACKLAM_D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    };
    // Halley refinement.
    let e = cdf(x) - p;
    if e == 0.0 {
        return x;
    }
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

// Gauss–Legendre nodes (negative half) and weights for 6, 12 and 20 points.
const GL_X6: [f64; 3] = [-0.932_469_514_203_152_2, -0.661_209_386_466_264_7, -0.238_619_186_083_197];
const GL_W6: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const GL_X12: [f64; 6] = [
    -0.981_560_634_246_719_1,
    -0.904_117_256_370_475,
    -0.769_902_674_194_305,
    -0.587_317_954_286_617_1,
    -0.367_831_498_998_180_2,
    -0.125_233_408_511_469_2,
];
const GL_W12: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL_X20: [f64; 10] = [
    -0.993_128_599_185_094_9,
    -0.963_971_927_277_913_8,
    -0.912_234_428_251_325_9,
    -0.839_116_971_822_218_8,
    -0.746_331_906_460_150_8,
    -0.636_053_680_726_515,
    -0.510_867_001_950_827_1,
    -0.373_706_088_715_419_6,
    -0.227_785_851_141_645_1,
    -0.076_526_521_133_497_33,
];
const GL_W20: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];

/// Upper orthant probability P(X > h, Y > k) for a standard bivariate normal
/// with correlation `r` (Genz's BVNU, Drezner–Wesolowsky with Gauss–Legendre rules).
pub fn bivariate_upper(h: f64, k: f64, r: f64) -> f64 {
    let (xs, ws): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL_X6, &GL_W6)
    } else if r.abs() < 0.75 {
        (&GL_X12, &GL_W12)
    } else {
        (&GL_X20, &GL_W20)
    };
    let two_pi = 2.0 * PI;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (&x, &w) in xs.iter().zip(ws) {
            for sign in [1.0, -1.0] {
                let sn = (asr * (sign * x + 1.0) / 2.0).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (2.0 * two_pi) + sf(h) * sf(k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(bs / a_s + hk) / 2.0).exp()
            * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp()
                * two_pi.sqrt()
                * cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (&x, &w) in xs.iter().zip(ws) {
            for sign in [1.0, -1.0] {
                let xs2 = (a * (sign * x + 1.0)).powi(2);
                let rs = (1.0 - xs2).sqrt();
                let asr = -(bs / xs2 + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                            - (1.0 + c * xs2 * (1.0 + d * xs2)));
                }
            }
        }
        bvn = -bvn / two_pi;
    }
    if r > 0.0 {
        bvn + sf(h.max(k))
    } else {
        bvn = -bvn;
        if k > h {
            if h < 0.0 {
                bvn += cdf(k) - cdf(h);
            } else {
                bvn += sf(h) - sf(k);
            }
        }
        bvn
    }
}

/// Bivariate standard normal CDF P(X ≤ x, Y ≤ y) with correlation `r`.
pub fn bivariate_cdf(x: f64, y: f64, r: f64) -> f64 {
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return cdf(y);
    }
    if y == f64::INFINITY {
        return cdf(x);
    }
    bivariate_upper(-x, -y, r).clamp(0.0, 1.0)
}
