//! Small numerical kernels shared by the solvers: Lagrange interpolation on
//! uniform grids, composite quadrature, fourth-order differences and a
//! least-squares line.

/// Cubic Lagrange interpolation through four points.
pub fn lagrange4(xs: [f64; 4], ys: [f64; 4], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let mut w = 1.0;
        for j in 0..4 {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += w * ys[i];
    }
    acc
}

/// Lagrange interpolation through the first `n ≤ 4` points.
pub fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut w = 1.0;
        for j in 0..n {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += w * ys[i];
    }
    acc
}

/// Start index of the 4-point stencil for interpolation at `x` on the grid
/// x_k = x0 + k h, k = 0..n, shifted inward at the ends.
pub fn stencil_start(n: usize, x0: f64, h: f64, x: f64) -> usize {
    let s = ((x - x0) / h).floor() as isize - 1;
    s.clamp(0, n as isize - 4) as usize
}

/// Cubic interpolation of nodal values on a uniform grid.
pub fn interp_uniform(values: &[f64], x0: f64, h: f64, x: f64) -> f64 {
    let s = stencil_start(values.len(), x0, h, x);
    let xs = [0, 1, 2, 3].map(|k| x0 + (s + k) as f64 * h);
    let ys = [0, 1, 2, 3].map(|k| values[s + k]);
    lagrange4(xs, ys, x)
}

/// Periodic cubic interpolation, period `n h`.
pub fn interp_periodic(values: &[f64], h: f64, x: f64) -> f64 {
    let n = values.len() as isize;
    let xf = x / h;
    let i = xf.floor() as isize;
    let frac = xf - i as f64;
    let ys = [-1, 0, 1, 2].map(|k| values[(i + k).rem_euclid(n) as usize]);
    lagrange4([-1.0, 0.0, 1.0, 2.0], ys, frac)
}

/// Composite trapezoid rule for nodal values with spacing h.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Composite Simpson rule; an odd number of intervals closes with the 3/8 rule.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 3 {
        return trapezoid(values, h);
    }
    let intervals = n - 1;
    let (even_end, tail) = if intervals % 2 == 0 {
        (n - 1, 0.0)
    } else if n >= 4 {
        let k = n - 4;
        (
            k,
            3.0 * h / 8.0 * (values[k] + 3.0 * values[k + 1] + 3.0 * values[k + 2] + values[k + 3]),
        )
    } else {
        return trapezoid(values, h);
    };
    let mut s = 0.0;
    let mut i = 0;
    while i + 2 <= even_end {
        s += values[i] + 4.0 * values[i + 1] + values[i + 2];
        i += 2;
    }
    s * h / 3.0 + tail
}

/// Sum of periodic nodal values times h (spectrally accurate for smooth data).
pub fn periodic_sum(values: &[f64], h: f64) -> f64 {
    values.iter().sum::<f64>() * h
}

/// Fourth-order first derivative of nodal values on a non-periodic uniform
/// grid with one-sided closures at the two ends. `stride` selects the axis
/// in a flattened array; `n` is the number of nodes along it.
pub fn d1_open(f: &[f64], n: usize, stride: usize, offset: usize, h: f64, out: &mut [f64]) {
    let c = 1.0 / (12.0 * h);
    let at = |k: usize| f[offset + k * stride];
    for k in 0..n {
        let v = if k >= 2 && k + 2 < n {
            at(k - 2) - 8.0 * at(k - 1) + 8.0 * at(k + 1) - at(k + 2)
        } else if k == 0 {
            -25.0 * at(0) + 48.0 * at(1) - 36.0 * at(2) + 16.0 * at(3) - 3.0 * at(4)
        } else if k == 1 {
            -3.0 * at(0) - 10.0 * at(1) + 18.0 * at(2) - 6.0 * at(3) + at(4)
        } else if k == n - 2 {
            3.0 * at(n - 1) + 10.0 * at(n - 2) - 18.0 * at(n - 3) + 6.0 * at(n - 4) - at(n - 5)
        } else {
            25.0 * at(n - 1) - 48.0 * at(n - 2) + 36.0 * at(n - 3) - 16.0 * at(n - 4) + 3.0 * at(n - 5)
        };
        out[offset + k * stride] = v * c;
    }
}

/// Fourth-order centered first derivative on a periodic axis.
pub fn d1_periodic(f: &[f64], n: usize, stride: usize, offset: usize, h: f64, out: &mut [f64]) {
    let c = 1.0 / (12.0 * h);
    let at = |k: isize| f[offset + (k.rem_euclid(n as isize) as usize) * stride];
    for k in 0..n as isize {
        let v = at(k - 2) - 8.0 * at(k - 1) + 8.0 * at(k + 1) - at(k + 2);
        out[offset + k as usize * stride] = v * c;
    }
}

/// Fourth-order centered second derivative on a periodic axis.
pub fn d2_periodic(f: &[f64], n: usize, stride: usize, offset: usize, h: f64, out: &mut [f64]) {
    let c = 1.0 / (12.0 * h * h);
    let at = |k: isize| f[offset + (k.rem_euclid(n as isize) as usize) * stride];
    for k in 0..n as isize {
        let v = -at(k - 2) + 16.0 * at(k - 1) - 30.0 * at(k) + 16.0 * at(k + 1) - at(k + 2);
        out[offset + k as usize * stride] = v * c;
    }
}

/// Fourth-order centered first and second derivatives on an open axis whose
/// values vanish beyond both ends (compactly supported data).
pub fn d12_zero_padded(f: &[f64], n: usize, stride: usize, offset: usize, h: f64, d1: &mut [f64], d2: &mut [f64]) {
    let at = |k: isize| {
        if k < 0 || k >= n as isize {
            0.0
        } else {
            f[offset + k as usize * stride]
        }
    };
    let c1 = 1.0 / (12.0 * h);
    let c2 = c1 / h;
    for k in 0..n as isize {
        let (m2, m1, z, p1, p2) = (at(k - 2), at(k - 1), at(k), at(k + 1), at(k + 2));
        let o = offset + k as usize * stride;
        d1[o] = (m2 - 8.0 * m1 + 8.0 * p1 - p2) * c1;
        d2[o] = (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) * c2;
    }
}

/// Least-squares line y ≈ intercept + slope·x with its coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Vertex value of the parabola through (−1, a), (0, b), (1, c) when b is a
/// discrete minimum; b itself otherwise.
pub fn parabolic_min(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den > 0.0 && a >= b && c >= b {
        b - (a - c) * (a - c) / (8.0 * den)
    } else {
        b
    }
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept,
        r2,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.25 * x * x * x;
        let vals: Vec<f64> = (0..11).map(|k| f(k as f64 * 0.1)).collect();
        for x in [0.0, 0.03, 0.47, 0.95, 1.0] {
            assert!((interp_uniform(&vals, 0.0, 0.1, x) - f(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn periodic_interpolation_converges() {
        let errs: Vec<f64> = [32usize, 64]
            .iter()
            .map(|&n| {
                let h = 1.0 / n as f64;
                let vals: Vec<f64> = (0..n).map(|k| (2.0 * std::f64::consts::PI * k as f64 * h).sin()).collect();
                (0..200)
                    .map(|k| {
                        let x = k as f64 / 200.0 + 0.0013;
                        (interp_periodic(&vals, h, x) - (2.0 * std::f64::consts::PI * x).sin()).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] / errs[1] > 12.0, "{errs:?}");
    }

    #[test]
    fn quadrature_orders() {
        let f = |x: f64| (3.0 * x).exp();
        let exact = ((3.0f64).exp() - 1.0) / 3.0;
        let err = |n: usize, simp: bool| {
            let h = 1.0 / (n - 1) as f64;
            let v: Vec<f64> = (0..n).map(|k| f(k as f64 * h)).collect();
            let q = if simp { simpson(&v, h) } else { trapezoid(&v, h) };
            (q - exact).abs()
        };
        let tr = err(33, false) / err(65, false);
        let si = err(33, true) / err(65, true);
        assert!((tr - 4.0).abs() < 0.1, "{tr}");
        assert!((si - 16.0).abs() < 1.0, "{si}");
        // odd number of intervals
        assert!(err(34, true) < 2.0 * err(33, true));
    }

    #[test]
    fn open_derivative_is_fourth_order() {
        let err = |n: usize| {
            let h = 1.0 / (n - 1) as f64;
            let f: Vec<f64> = (0..n).map(|k| (2.0 * k as f64 * h).sin()).collect();
            let mut d = vec![0.0; n];
            d1_open(&f, n, 1, 0, h, &mut d);
            (0..n)
                .map(|k| (d[k] - 2.0 * (2.0 * k as f64 * h).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(41) / err(81);
        assert!(ratio > 14.0, "{ratio}");
    }

    #[test]
    fn parabolic_min_is_exact_on_parabolas() {
        let q = |x: f64| 2.0 * (x - 0.3) * (x - 0.3) + 0.1;
        assert!((parabolic_min(q(-1.0), q(0.0), q(1.0)) - 0.1).abs() < 1e-15);
        assert_eq!(parabolic_min(1.0, 2.0, 3.0), 2.0);
    }

    #[test]
    fn fit_of_exact_line() {
        let x: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 3.0).abs() < 1e-13);
        assert!((fit.r2 - 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0], &[2.0]).is_none());
    }

    #[test]
    fn second_derivatives_are_fourth_order() {
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let w = 2.0 * std::f64::consts::PI;
            let f: Vec<f64> = (0..n).map(|k| (w * k as f64 * h).sin()).collect();
            let mut d = vec![0.0; n];
            d2_periodic(&f, n, 1, 0, h, &mut d);
            let e1 = (0..n).map(|k| (d[k] + w * w * f[k]).abs()).fold(0.0, f64::max);
            // A bump well inside [0, 1] for the zero-padded version.
            let g: Vec<f64> = (0..n).map(|k| (-100.0 * (k as f64 * h - 0.5).powi(2)).exp()).collect();
            let (mut g1, mut g2) = (vec![0.0; n], vec![0.0; n]);
            d12_zero_padded(&g, n, 1, 0, h, &mut g1, &mut g2);
            let e2 = (0..n)
                .map(|k| {
                    let x = k as f64 * h - 0.5;
                    let exact = (40000.0 * x * x - 200.0) * g[k];
                    (g2[k] - exact).abs().max((g1[k] + 200.0 * x * g[k]).abs())
                })
                .fold(0.0, f64::max);
            (e1, e2)
        };
        let (a1, b1) = err(64);
        let (a2, b2) = err(128);
        assert!(a1 / a2 > 14.0, "{a1} {a2}");
        assert!(b1 / b2 > 14.0, "{b1} {b2}");
    }

    proptest! {
        #[test]
        fn periodic_derivative_of_trig(k in 1usize..4, shift in 0.0f64..1.0) {
            let n = 64;
            let h = 1.0 / n as f64;
            let w = 2.0 * std::f64::consts::PI * k as f64;
            let f: Vec<f64> = (0..n).map(|j| (w * (j as f64 * h + shift)).cos()).collect();
            let mut d = vec![0.0; n];
            d1_periodic(&f, n, 1, 0, h, &mut d);
            for j in 0..n {
                let exact = -w * (w * (j as f64 * h + shift)).sin();
                prop_assert!((d[j] - exact).abs() < 1e-3 * w);
            }
        }
    }
}
