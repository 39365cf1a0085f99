//! Small numerical kernels shared by the estimators: compensated summation,
//! adaptive Gauss–Kronrod quadrature and midpoint grids.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Neumaier (improved Kahan) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator of floats.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Midpoints `u_1 < … < u_N` of the partition of `[-1, 1]` into `N` equal cells.
pub fn midpoints(cells: usize) -> Vec<f64> {
    let h = 2.0 / cells as f64;
    (0..cells).map(|s| -1.0 + h * (s as f64 + 0.5)).collect()
}

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

// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod evaluation on `[a, b]`: (estimate, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

const MAX_SEGMENTS: usize = 4000;

/// Globally adaptive Gauss–Kronrod quadrature over the finite pieces
/// `[breaks[0], breaks[1]], …`. Keeps bisecting the segment with the largest
/// error estimate until the summed estimate falls below `abs_tol`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, breaks: &[f64], abs_tol: f64) -> f64 {
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gk15(&f, w[0], w[1]);
            heap.push(Segment { a: w[0], b: w[1], value, error });
        }
    }
    let mut count = heap.len();
    let mut total_err: f64 = heap.iter().map(|s| s.error).sum();
    while count < MAX_SEGMENTS {
        if total_err <= abs_tol {
            break;
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        total_err -= worst.error;
        if mid <= worst.a || mid >= worst.b {
            heap.push(Segment { error: 0.0, ..worst });
            continue;
        }
        let (lv, le) = gk15(&f, worst.a, mid);
        let (rv, re) = gk15(&f, mid, worst.b);
        total_err += le + re;
        heap.push(Segment { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Segment { a: mid, b: worst.b, value: rv, error: re });
        count += 1;
    }
    compensated_sum(heap.iter().map(|s| s.value))
}

/// Adaptive quadrature on a finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    integrate_pieces(f, &[a, b], abs_tol)
}

/// Integral over the whole real line. The finite part spans the sorted `breaks`
/// (at least one point); the two tails are mapped onto `(0, 1]` with
/// `y = edge ± (1 - t)/t`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, breaks: &[f64], abs_tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|v| v.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    assert!(!pts.is_empty(), "integrate_real_line needs at least one break");
    let lo = pts[0];
    let hi = pts[pts.len() - 1];
    let tol = abs_tol / 3.0;
    let middle = if pts.len() > 1 { integrate_pieces(&f, &pts, tol) } else { 0.0 };
    let upper = integrate(
        |t: f64| {
            let s = (1.0 - t) / t;
            f(hi + s) / (t * t)
        },
        0.0,
        1.0,
        tol,
    );
    let lower = integrate(
        |t: f64| {
            let s = (1.0 - t) / t;
            f(lo - s) / (t * t)
        },
        0.0,
        1.0,
        tol,
    );
    lower + middle + upper
}

/// Bisection for a nondecreasing `g` on `[lo, hi]`: returns the smallest `t`
/// (up to `tol`) with `g(t) >= level`, assuming `g(hi) >= level`.
pub fn left_inverse<G: FnMut(f64) -> f64>(mut g: G, level: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    if g(lo) >= level {
        return lo;
    }
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn midpoints_are_symmetric() {
        let u = midpoints(4);
        assert_eq!(u, vec![-0.75, -0.25, 0.25, 0.75]);
    }

    #[test]
    fn gauss_kronrod_polynomials_exact() {
        let v = integrate(|x| x.powi(6) - 3.0 * x.powi(3) + 1.0, -1.0, 2.0, 1e-13);
        let exact = (2f64.powi(7) + 1.0) / 7.0 - 3.0 * (16.0 - 1.0) / 4.0 + 3.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn real_line_gaussian_and_cauchy() {
        let g = integrate_real_line(|x| (-0.5 * x * x).exp(), &[0.0], 1e-12);
        assert!((g - (2.0 * PI).sqrt()).abs() < 1e-10);
        let c = integrate_real_line(|x| 1.0 / (PI * (1.0 + x * x)), &[-1.0, 1.0], 1e-12);
        assert!((c - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kinked_integrand_split_at_break() {
        let v = integrate_pieces(|x: f64| x.abs(), &[-1.0, 0.0, 1.0], 1e-14);
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn left_inverse_of_step() {
        let t = left_inverse(|x| if x >= 0.3 { 1.0 } else { 0.0 }, 0.5, -1.0, 1.0, 1e-12);
        assert!((t - 0.3).abs() < 1e-11);
    }
}
