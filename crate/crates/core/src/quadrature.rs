//! Adaptive Gauss-Kronrod (7/15) quadrature for small fixed-size vector
//! integrands. All components share the same subdivision, so integrals that
//! should be equal by symmetry come out bit-identical.

use std::collections::BinaryHeap;

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
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 0.0,
            max_intervals: 2000,
        }
    }
}

struct Segment<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
}

impl<const N: usize> PartialEq for Segment<N> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const N: usize> Eq for Segment<N> {}
impl<const N: usize> PartialOrd for Segment<N> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Segment<N> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<const N: usize, F>(f: &mut F, a: f64, b: f64) -> Segment<N>
where
    F: FnMut(f64) -> [f64; N],
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = [0.0; N];
    let mut g = [0.0; N];
    for i in 0..N {
        k[i] = WGK[7] * fc[i];
        g[i] = WG[3] * fc[i];
    }
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        for i in 0..N {
            let s = f1[i] + f2[i];
            k[i] += w * s;
            if j % 2 == 1 {
                g[i] += WG[j / 2] * s;
            }
        }
    }
    let mut error = 0.0f64;
    for i in 0..N {
        k[i] *= h;
        g[i] *= h;
        error = error.max((k[i] - g[i]).abs());
    }
    Segment { a, b, value: k, error }
}

/// Integrate `f` over `[a, b]` component-wise. Converges when the summed
/// error estimate is below `rel_tol` times the largest component magnitude
/// (or `abs_tol`).
pub fn integrate<const N: usize, F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<[f64; N]>
where
    F: FnMut(f64) -> [f64; N],
{
    let mut heap = BinaryHeap::new();
    heap.push(kronrod(&mut f, a, b));
    loop {
        let mut total = [0.0; N];
        let mut err = 0.0;
        for s in heap.iter() {
            for i in 0..N {
                total[i] += s.value[i];
            }
            err += s.error;
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = (opts.rel_tol * scale).max(opts.abs_tol);
        if err <= target {
            return Ok(total);
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Numerical(format!(
                "quadrature on [{a:e}, {b:e}] did not converge: error {err:e} > target {target:e}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            return Err(Error::Numerical(format!(
                "quadrature interval collapsed near {mid:e}"
            )));
        }
        heap.push(kronrod(&mut f, worst.a, mid));
        heap.push(kronrod(&mut f, mid, worst.b));
    }
}

pub fn integrate_scalar<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate(|x| [f(x)], a, b, opts).map(|v| v[0])
}

/// Integrate over `[0, ∞)` through `x = s·t/(1−t)`; `scale` should be
/// comparable to where the integrand's mass sits.
pub fn integrate_half_line<F>(mut f: F, scale: f64, opts: QuadOptions) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_scalar(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let u = 1.0 - t;
            let x = scale * t / u;
            f(x) * scale / (u * u)
        },
        0.0,
        1.0,
        opts,
    )
}
