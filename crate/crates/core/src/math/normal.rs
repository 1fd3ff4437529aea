//! Standard normal density and distribution function.
//!
//! The CDF uses W. J. Cody's rational Chebyshev approximations to the error
//! function (three ranges: central, intermediate, tail), which keep full
//! double precision in both tails. Expected improvement underflows long
//! before these do.

use crate::scalar::Scalar;

const A: [f64; 5] = [
    2.235_252_035_460_683_9e0,
    1.610_282_310_685_558_8e2,
    1.067_689_485_460_370_9e3,
    1.815_498_125_334_356_1e4,
    6.568_233_791_820_745e-2,
];
const B: [f64; 4] = [
    4.720_258_190_468_824e1,
    9.760_985_517_377_767e2,
    1.026_093_220_861_897_8e4,
    4.550_778_933_502_673e4,
];
const C: [f64; 9] = [
    3.989_415_120_881_346_6e-1,
    8.883_149_794_388_375,
    9.350_665_613_217_785e1,
    5.972_702_763_948_002e2,
    2.494_537_585_290_372_6e3,
    6.848_190_450_536_282e3,
    1.160_265_143_764_735e4,
    9.842_714_838_383_978e3,
    1.076_557_677_372_019_2e-8,
];
const D: [f64; 8] = [
    2.226_668_804_432_811_5e1,
    2.353_879_017_826_25e2,
    1.519_377_599_407_554_8e3,
    6.485_558_298_266_761e3,
    1.861_557_164_088_51e4,
    3.490_095_272_114_598e4,
    3.891_200_328_609_327e4,
    1.968_542_967_685_999e4,
];
const P: [f64; 6] = [
    2.158_985_340_579_57e-1,
    1.274_011_611_602_473_6e-1,
    2.223_527_787_064_980_7e-2,
    1.421_619_193_227_893_4e-3,
    2.911_287_495_116_879e-5,
    2.307_344_176_494_017_3e-2,
];
const Q: [f64; 5] = [
    1.284_260_096_144_911_2,
    4.682_382_124_808_651e-1,
    6.598_813_786_892_856e-2,
    3.782_396_332_027_582_4e-3,
    7.297_515_550_839_662e-5,
];

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn normal_pdf<T: Scalar>(z: T) -> T {
    T::lit(FRAC_1_SQRT_2PI) * (-T::lit(0.5) * z * z).exp()
}

#[inline]
pub fn normal_log_pdf<T: Scalar>(z: T) -> T {
    -T::lit(0.5) * z * z - T::lit(0.5) * (T::lit(2.0) * T::PI()).ln()
}

/// Log density of `N(mean, var)` at `x`.
pub fn gaussian_log_density<T: Scalar>(x: T, mean: T, var: T) -> T {
    let r = x - mean;
    -T::lit(0.5) * (r * r / var + (T::lit(2.0) * T::PI() * var).ln())
}

/// Standard normal CDF `Φ(z)`.
#[inline]
pub fn normal_cdf<T: Scalar>(z: T) -> T {
    normal_cdf_both(z).0
}

/// Upper tail `1 - Φ(z)`, accurate for large positive `z`.
#[inline]
pub fn normal_sf<T: Scalar>(z: T) -> T {
    normal_cdf_both(z).1
}

/// Returns `(Φ(z), 1 - Φ(z))`, each computed without cancellation.
pub fn normal_cdf_both<T: Scalar>(z: T) -> (T, T) {
    if z.is_nan() {
        return (z, z);
    }
    let half = T::lit(0.5);
    let y = z.abs();
    if y <= T::lit(0.674_489_75) {
        let (mut xnum, mut xden) = (T::zero(), T::zero());
        if y > T::epsilon() * half {
            let xsq = z * z;
            xnum = T::lit(A[4]) * xsq;
            xden = xsq;
            for i in 0..3 {
                xnum = (xnum + T::lit(A[i])) * xsq;
                xden = (xden + T::lit(B[i])) * xsq;
            }
        }
        let temp = z * (xnum + T::lit(A[3])) / (xden + T::lit(B[3]));
        return (half + temp, half - temp);
    }
    let tail = if y <= T::lit(32.0_f64.sqrt()) {
        let mut xnum = T::lit(C[8]) * y;
        let mut xden = y;
        for i in 0..7 {
            xnum = (xnum + T::lit(C[i])) * y;
            xden = (xden + T::lit(D[i])) * y;
        }
        let temp = (xnum + T::lit(C[7])) / (xden + T::lit(D[7]));
        split_exp(y) * temp
    } else {
        let xsq = T::one() / (z * z);
        let mut xnum = T::lit(P[5]) * xsq;
        let mut xden = xsq;
        for i in 0..4 {
            xnum = (xnum + T::lit(P[i])) * xsq;
            xden = (xden + T::lit(Q[i])) * xsq;
        }
        let temp = xsq * (xnum + T::lit(P[4])) / (xden + T::lit(Q[4]));
        let temp = (T::lit(FRAC_1_SQRT_2PI) - temp) / y;
        split_exp(y) * temp
    };
    if z > T::zero() {
        (T::one() - tail, tail)
    } else {
        (tail, T::one() - tail)
    }
}

/// `exp(-y²/2)` evaluated as a product of two exponentials so the rounding
/// of `y²` does not cost relative accuracy in the tail.
#[inline]
fn split_exp<T: Scalar>(y: T) -> T {
    let sixteen = T::lit(16.0);
    let xsq = (y * sixteen).trunc() / sixteen;
    let del = (y - xsq) * (y + xsq);
    (-xsq * xsq * T::lit(0.5)).exp() * (-del * T::lit(0.5)).exp()
}

/// `z Φ(z) + φ(z)`, the standardized expected improvement. Uses the
/// asymptotic expansion far in the lower tail where the direct formula
/// cancels.
pub fn standardized_ei<T: Scalar>(z: T) -> T {
    if z < T::lit(-10.0) {
        let r = T::one() / (z * z);
        // 1 - 3r + 15r² - 105r³ + 945r⁴ - 10395r⁵
        let series = T::one()
            + r * (T::lit(-3.0)
                + r * (T::lit(15.0) + r * (T::lit(-105.0) + r * (T::lit(945.0) + r * T::lit(-10395.0)))));
        return (normal_pdf(z) * r * series).max(T::zero());
    }
    (z * normal_cdf(z) + normal_pdf(z)).max(T::zero())
}
