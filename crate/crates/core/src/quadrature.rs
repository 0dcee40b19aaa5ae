//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

// nodes and weights are tabulated beyond f64 precision
#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Real;

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

// Gauss weights for the Kronrod nodes with odd index (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_subdivisions: usize,
}

impl<T: Real> Default for QuadOptions<T> {
    fn default() -> Self {
        Self { abs_tol: T::lit(1e-13), rel_tol: T::lit(1e-12), max_subdivisions: 2000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub abs_error: T,
    pub evaluations: usize,
}

/// Single 15-point Kronrod panel; returns (kronrod, |kronrod − gauss|).
fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half_len * T::lit(XGK[j]);
        let s = f(center - dx) + f(center + dx);
        kron = kron + T::lit(WGK[j]) * s;
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * s;
        }
    }
    (kron * half_len, ((kron - gauss) * half_len).abs())
}

struct Panel<T> {
    a: T,
    b: T,
    value: T,
    err: T,
}

impl<T: Real> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<T: Real> Eq for Panel<T> {}
impl<T: Real> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// Integrates `f` over `[a, b]`, bisecting the panel with the largest error
/// estimate until the total error meets `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, opts: &QuadOptions<T>) -> Result<QuadResult<T>> {
    if a == b {
        return Ok(QuadResult { value: T::zero(), abs_error: T::zero(), evaluations: 0 });
    }
    let (value, err) = gk15(&mut f, a, b);
    let mut evaluations = 15;
    let mut total = value;
    let mut total_err = err;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, err });
    let mut subdivisions = 0;
    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= target {
            break;
        }
        if !total.is_finite() {
            return Err(Error::QuadratureFailure("non-finite integrand".into()));
        }
        if subdivisions >= opts.max_subdivisions {
            return Err(Error::QuadratureFailure(format!(
                "subdivision limit {} reached, error estimate {}",
                opts.max_subdivisions, total_err
            )));
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = T::lit(0.5) * (worst.a + worst.b);
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evaluations += 30;
        subdivisions += 1;
        total = total - worst.value + v1 + v2;
        total_err = total_err - worst.err + e1 + e2;
        // panels too narrow to split further are frozen at their estimate
        if mid != worst.a && mid != worst.b {
            heap.push(Panel { a: worst.a, b: mid, value: v1, err: e1 });
            heap.push(Panel { a: mid, b: worst.b, value: v2, err: e2 });
        } else {
            return Err(Error::QuadratureFailure("interval underflow".into()));
        }
    }
    // re-sum to shed accumulated rounding from the running updates
    let (mut value, mut abs_error) = (T::zero(), T::zero());
    for p in heap.iter() {
        value = value + p.value;
        abs_error = abs_error + p.err;
    }
    Ok(QuadResult { value, abs_error, evaluations })
}
