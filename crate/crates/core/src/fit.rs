//! Small dense least-squares machinery shared by the scaling fits.
//!
//! [`levenberg_marquardt`] is a damped Gauss–Newton iteration for models with
//! a handful of parameters; the normal equations are solved directly.

/// Stopping rules for [`levenberg_marquardt`].
#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub max_iter: usize,
    /// Converged once every proposed update satisfies `|Δp| <= rel_tol * (|p| + rel_tol)`.
    pub rel_tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self { max_iter: 200, rel_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome<const N: usize> {
    pub params: [f64; N],
    /// Root-mean-square of the residuals at `params`.
    pub rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Minimizes `Σ r_i(p)²`.
///
/// `eval(p, r, jac)` fills the residual vector `r` and its Jacobian rows
/// `jac[i][k] = ∂r_i/∂p_k`. It returns `false` when `p` lies outside the
/// model's domain, which the iteration treats as a rejected step.
pub fn levenberg_marquardt<const N: usize, F>(
    init: [f64; N],
    n_residuals: usize,
    options: Options,
    mut eval: F,
) -> Outcome<N>
where
    F: FnMut(&[f64; N], &mut [f64], &mut [[f64; N]]) -> bool,
{
    let mut r = vec![0.0; n_residuals];
    let mut jac = vec![[0.0; N]; n_residuals];
    let mut trial_r = vec![0.0; n_residuals];
    let mut trial_jac = vec![[0.0; N]; n_residuals];

    let mut p = init;
    if !eval(&p, &mut r, &mut jac) {
        return Outcome { params: p, rms: f64::NAN, converged: false, iterations: 0 };
    }
    let mut cost = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&jac, &r);

        let mut a = jtj;
        for k in 0..N {
            a[k][k] += lambda * jtj[k][k].max(1e-300);
        }
        let neg: [f64; N] = std::array::from_fn(|k| -jtr[k]);
        let Some(delta) = solve(a, neg) else {
            lambda *= 10.0;
            if lambda > 1e20 {
                break;
            }
            continue;
        };

        let small = (0..N).all(|k| delta[k].abs() <= options.rel_tol * (p[k].abs() + options.rel_tol));
        let trial: [f64; N] = std::array::from_fn(|k| p[k] + delta[k]);
        let ok = eval(&trial, &mut trial_r, &mut trial_jac);
        let trial_cost = if ok { sum_sq(&trial_r) } else { f64::INFINITY };

        if trial_cost.is_finite() && trial_cost <= cost {
            p = trial;
            cost = trial_cost;
            std::mem::swap(&mut r, &mut trial_r);
            std::mem::swap(&mut jac, &mut trial_jac);
            lambda = (lambda / 10.0).max(1e-12);
        } else {
            lambda *= 10.0;
        }
        if small {
            converged = true;
            break;
        }
        if lambda > 1e20 {
            break;
        }
    }

    Outcome {
        params: p,
        rms: (cost / n_residuals.max(1) as f64).sqrt(),
        converged,
        iterations,
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn normal_equations<const N: usize>(jac: &[[f64; N]], r: &[f64]) -> ([[f64; N]; N], [f64; N]) {
    let mut jtj = [[0.0; N]; N];
    let mut jtr = [0.0; N];
    for (row, ri) in jac.iter().zip(r) {
        for i in 0..N {
            jtr[i] += row[i] * ri;
            for j in 0..N {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    (jtj, jtr)
}

/// Gaussian elimination with partial pivoting; `None` for a singular system.
pub fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let factor = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let tail: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub intercept: f64,
    pub slope: f64,
    pub rms: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<Line> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / nf)
        .sqrt();
    Some(Line { intercept, slope, rms })
}
