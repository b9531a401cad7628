//! Quadrature and small dense optimizers used by the model fits.

/// Gauss-Kronrod 7/15 nodes on [-1, 1] (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd Kronrod nodes (indices 1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss-Kronrod integration of `f` over each consecutive
/// interval of `breaks` until the summed error estimate is below `abs_tol`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], abs_tol: f64) -> Quadrature {
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            parts.push((w[0], w[1], v, e));
        }
    }
    let mut evaluations = parts.len() * 15;
    const MAX_PARTS: usize = 4000;
    loop {
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= abs_tol || parts.len() >= MAX_PARTS {
            let value = parts.iter().map(|p| p.2).sum();
            return Quadrature { value, error: err, evaluations };
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (a, b, _, _) = parts.swap_remove(idx);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            // interval no longer divisible, accept it as is
            let (v, _) = gk15(&mut f, a, b);
            parts.push((a, b, v, 0.0));
            evaluations += 15;
            continue;
        }
        let (v1, e1) = gk15(&mut f, a, m);
        let (v2, e2) = gk15(&mut f, m, b);
        evaluations += 30;
        parts.push((a, m, v1, e1));
        parts.push((m, b, v2, e2));
    }
}

/// Outcome of a local optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Bounds<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

impl Bounds<'_> {
    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Levenberg-Marquardt on `residuals(x)`, with a central-difference
/// Jacobian and iterates clamped to `bounds`. Minimizes half the squared norm.
pub fn levenberg_marquardt<R>(mut residuals: R, x0: &[f64], bounds: Bounds<'_>, max_iter: usize) -> Optimum
where
    R: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut r = residuals(&x);
    let sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut cost = sq(&r);
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut jac = vec![vec![0.0; n]; r.len()];
        for j in 0..n {
            let h = 1e-5 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] = (x[j] + h).min(bounds.upper[j]);
            xm[j] = (x[j] - h).max(bounds.lower[j]);
            let span = xp[j] - xm[j];
            if span <= 0.0 {
                continue;
            }
            let rp = residuals(&xp);
            let rm = residuals(&xm);
            for i in 0..r.len() {
                jac[i][j] = (rp[i] - rm[i]) / span;
            }
        }
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for i in 0..r.len() {
            for a in 0..n {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..n {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let grad_norm = jtr.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if grad_norm < 1e-14 || cost < 1e-28 {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[k][k] += mu * (jtj[k][k] + 1e-12);
            }
            let Some(step) = solve(a, jtr.iter().map(|v| -v).collect()) else {
                mu *= 10.0;
                continue;
            };
            let mut xn: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            bounds.project(&mut xn);
            let rn = residuals(&xn);
            let cn = sq(&rn);
            if cn.is_finite() && cn < cost {
                let rel = (cost - cn) / cost.max(1e-300);
                let dx = x.iter().zip(&xn).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                x = xn;
                r = rn;
                cost = cn;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-12 || dx < 1e-10 {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            // no descent possible at any damping: stationary to working precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Optimum { x, value: cost.sqrt(), iterations, converged }
}

/// Projected BFGS minimizer with backtracking (Armijo) line search.
/// `fg` returns the objective and its gradient.
pub fn bfgs<F>(mut fg: F, x0: &[f64], bounds: Bounds<'_>, max_iter: usize, grad_tol: f64) -> Optimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let (mut f, mut g) = fg(&x);
    let identity = |n: usize| {
        let mut h = vec![vec![0.0; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        h
    };
    let mut h = identity(n);
    let mut converged = false;
    let mut iterations = 0;
    // components pinned at a bound with the gradient pushing outward
    let active = |x: &[f64], g: &[f64], i: usize| {
        (x[i] <= bounds.lower[i] && g[i] > 0.0) || (x[i] >= bounds.upper[i] && g[i] < 0.0)
    };
    while iterations < max_iter {
        iterations += 1;
        if !f.is_finite() {
            break;
        }
        let free_grad: Vec<f64> = (0..n).map(|i| if active(&x, &g, i) { 0.0 } else { g[i] }).collect();
        if free_grad.iter().map(|v| v.abs()).fold(0.0, f64::max) < grad_tol {
            converged = true;
            break;
        }
        let mut d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i][j] * free_grad[j]).sum::<f64>()).collect();
        for i in 0..n {
            if active(&x, &g, i) {
                d[i] = 0.0;
            }
        }
        let mut slope: f64 = d.iter().zip(&free_grad).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            h = identity(n);
            d = free_grad.iter().map(|v| -v).collect();
            slope = -free_grad.iter().map(|v| v * v).sum::<f64>();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            bounds.project(&mut xn);
            let (fnew, gnew) = fg(&xn);
            if fnew.is_finite() && fnew <= f + 1e-4 * t * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            // line search exhausted: treat as stationary if the gradient is small
            converged = free_grad.iter().map(|v| v.abs()).fold(0.0, f64::max) < grad_tol.sqrt();
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rel_change = (f - fnew).abs() / f.abs().max(1.0);
        x = xn;
        f = fnew;
        g = gnew;
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += ((sy + yhy) * s[i] * s[j]) / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        if rel_change < 1e-15 && s.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-12 {
            converged = true;
            break;
        }
    }
    Optimum { x, value: f, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_polynomial_and_kink() {
        let q = integrate(|x| x * x, &[0.0, 3.0], 1e-12);
        assert!((q.value - 9.0).abs() < 1e-12);
        let q = integrate(|x: f64| x.abs(), &[-1.0, 2.0], 1e-10);
        assert!((q.value - 2.5).abs() < 1e-9);
        let q = integrate(|x: f64| (-x * x / 2.0).exp(), &[-12.0, 12.0], 1e-12);
        assert!((q.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-11);
    }

    #[test]
    fn lm_fits_exponential() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 * (-0.7 * t).exp()).collect();
        let lo = [-10.0, -10.0];
        let hi = [10.0, 10.0];
        let opt = levenberg_marquardt(
            |p| ts.iter().zip(&ys).map(|(t, y)| p[0] * (-p[1] * t).exp() - y).collect(),
            &[1.0, 0.1],
            Bounds { lower: &lo, upper: &hi },
            200,
        );
        assert!(opt.converged);
        assert!((opt.x[0] - 2.0).abs() < 1e-7 && (opt.x[1] - 0.7).abs() < 1e-7);
    }

    #[test]
    fn bfgs_rosenbrock_and_bounds() {
        let rosen = |x: &[f64]| {
            let f = (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
            let g = vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ];
            (f, g)
        };
        let lo = [-5.0, -5.0];
        let hi = [5.0, 5.0];
        let opt = bfgs(rosen, &[-1.2, 1.0], Bounds { lower: &lo, upper: &hi }, 500, 1e-9);
        assert!(opt.converged);
        assert!((opt.x[0] - 1.0).abs() < 1e-6 && (opt.x[1] - 1.0).abs() < 1e-6);

        // minimum of (x-3)^2 constrained to x <= 1
        let lo = [-5.0];
        let hi = [1.0];
        let opt = bfgs(|x| ((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]), &[0.0], Bounds { lower: &lo, upper: &hi }, 100, 1e-10);
        assert_eq!(opt.x[0], 1.0);
        assert!(opt.converged);
    }
}
