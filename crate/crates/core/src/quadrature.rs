//! Globally adaptive Gauss–Kronrod (7/15 point) quadrature on finite intervals.
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for nodes XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 4096;

/// Value and absolute error estimate of a definite integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lower: f64,
    upper: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lower: f64, upper: f64) -> Segment {
    let centre = 0.5 * (lower + upper);
    let half = 0.5 * (upper - lower);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (k, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += w * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    Segment {
        lower,
        upper,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[lower, upper]`, bisecting the worst segment until
/// the summed error estimate drops below `tolerance` (absolute).
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    upper: f64,
    tolerance: f64,
) -> Result<Quadrature> {
    if !(lower.is_finite() && upper.is_finite()) || lower > upper {
        return Err(Error::InvalidInput(format!(
            "bad integration range [{lower}, {upper}]"
        )));
    }
    if lower == upper {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
        });
    }
    let mut segments = vec![kronrod(&f, lower, upper)];
    loop {
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if error <= tolerance {
            let value = segments.iter().map(|s| s.value).sum();
            return Ok(Quadrature { value, error });
        }
        if segments.len() >= MAX_INTERVALS || !error.is_finite() {
            return Err(Error::NonConvergence {
                lower,
                upper,
                error,
                tolerance,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .expect("non-empty");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.lower + s.upper);
        if mid <= s.lower || mid >= s.upper {
            return Err(Error::NonConvergence {
                lower,
                upper,
                error,
                tolerance,
            });
        }
        segments.push(kronrod(&f, s.lower, mid));
        segments.push(kronrod(&f, mid, s.upper));
    }
}

/// Integrates over consecutive pieces `[b0, b1], [b1, b2], ...`, sharing the
/// tolerance evenly. Used for integrands with kinks at known points.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    tolerance: f64,
) -> Result<Quadrature> {
    if breakpoints.len() < 2 {
        return Err(Error::InvalidInput("need at least two breakpoints".into()));
    }
    let share = tolerance / (breakpoints.len() - 1) as f64;
    let mut total = Quadrature {
        value: 0.0,
        error: 0.0,
    };
    for w in breakpoints.windows(2) {
        let q = integrate(&f, w[0], w[1], share)?;
        total.value += q.value;
        total.error += q.error;
    }
    Ok(total)
}
