//! Normal and generalized Pareto building blocks.

use crate::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / SQRT_2PI
}

/// Standard normal cdf, evaluated through `erfc` so both tails keep full
/// relative precision.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile.
///
/// Wichura's AS 241 rational approximation followed by one Newton step on
/// the `erfc`-based cdf. The lower half is computed directly and the upper
/// half by reflection, which keeps `1 - p` exact.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain("normal quantile needs 0 < p < 1"));
    }
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    let x = as241(p);
    let err = normal_cdf(x) - p;
    let dens = normal_pdf(x);
    if dens > 0.0 && err.is_finite() {
        x - err / dens
    } else {
        x
    }
}

fn poly(c: &[f64; 8], r: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * r + k)
}

// published coefficients, kept digit for digit
#[allow(clippy::excessive_precision)]
fn as241(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = libm::sqrt(-libm::log(if q < 0.0 { p } else { 1.0 - p }));
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Upper end of the GPD support (`+inf` unless `xi < 0`).
pub fn gpd_upper_endpoint(xi: f64, beta: f64) -> f64 {
    if xi < 0.0 {
        -beta / xi
    } else {
        f64::INFINITY
    }
}

/// GPD survival function `P(Y > y)`, clamped outside the support.
pub fn gpd_sf(y: f64, xi: f64, beta: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    if y >= gpd_upper_endpoint(xi, beta) {
        return 0.0;
    }
    if xi == 0.0 {
        libm::exp(-y / beta)
    } else {
        libm::exp(-libm::log1p(xi * y / beta) / xi)
    }
}

/// GPD density, zero outside the support.
pub fn gpd_pdf(y: f64, xi: f64, beta: f64) -> f64 {
    if y < 0.0 || y > gpd_upper_endpoint(xi, beta) {
        return 0.0;
    }
    if xi == 0.0 {
        libm::exp(-y / beta) / beta
    } else {
        libm::exp(-(1.0 + 1.0 / xi) * libm::log1p(xi * y / beta)) / beta
    }
}

/// GPD cdf of an excess `y` over the threshold.
pub fn gpd_cdf(y: f64, xi: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !xi.is_finite() {
        return Err(Error::InvalidParams("GPD needs beta > 0 and finite xi"));
    }
    if !(y >= 0.0) || y > gpd_upper_endpoint(xi, beta) {
        return Err(Error::Domain("excess outside the GPD support"));
    }
    if xi == 0.0 {
        Ok(-libm::expm1(-y / beta))
    } else {
        Ok(-libm::expm1(-libm::log1p(xi * y / beta) / xi))
    }
}

/// GPD quantile of order `p` in `[0, 1)`.
pub fn gpd_quantile(p: f64, xi: f64, beta: f64) -> f64 {
    if xi == 0.0 {
        -beta * libm::log1p(-p)
    } else {
        beta * libm::expm1(-xi * libm::log1p(-p)) / xi
    }
}
