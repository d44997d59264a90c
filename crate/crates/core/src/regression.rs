//! Least-squares estimates of conditional expectations on polynomial bases.
//!
//! States are standardised and the normal equations accumulated and solved in
//! `f64` whatever the engine scalar; a diagonal-pivoted Cholesky detects rank
//! deficiency, in which case a small ridge is added.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::Driver;
use crate::scalar::Scalar;

/// Minimum paths per basis function before falling back to the sample mean.
pub const PATHS_PER_BASIS: usize = 10;

const ROWS_PER_CHUNK: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionSpec {
    /// Total degree of the monomial basis.
    pub degree: usize,
    /// State drivers; `None` uses every stochastic driver of the scenario.
    pub state: Option<Vec<Driver>>,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self { degree: 2, state: None }
    }
}

/// Fit diagnostics and the fitted conditional expectation.
#[derive(Clone, Debug)]
pub struct RegressionFit<S> {
    pub fitted: Vec<S>,
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    /// Ratio of the largest to the smallest Cholesky pivot, squared.
    pub condition: f64,
    /// Too few paths for the basis; the sample mean was used.
    pub mean_fallback: bool,
    pub ridge: bool,
    exponents: Vec<Vec<u32>>,
    columns: Vec<usize>,
    centre: Vec<f64>,
    scale: Vec<f64>,
}

impl<S: Scalar> RegressionFit<S> {
    /// Evaluates the fitted function at a raw state vector.
    pub fn predict(&self, state: &[S]) -> S {
        let z: Vec<f64> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, &c)| (state[c].to_f64_lossy() - self.centre[i]) / self.scale[i])
            .collect();
        let mut row = vec![0.0; self.exponents.len()];
        basis_row(&self.exponents, &z, &mut row);
        S::lit(row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }
}

fn monomials(vars: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; vars]];
    if vars == 0 {
        return out;
    }
    for d in 1..=degree {
        let mut cur = vec![0u32; vars];
        fill(&mut out, &mut cur, 0, d as u32);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, i: usize, left: u32) {
    if i + 1 == cur.len() {
        cur[i] = left;
        out.push(cur.clone());
        cur[i] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[i] = e;
        fill(out, cur, i + 1, left - e);
    }
    cur[i] = 0;
}

fn basis_row(exponents: &[Vec<u32>], z: &[f64], row: &mut [f64]) {
    for (r, e) in row.iter_mut().zip(exponents) {
        *r = e.iter().zip(z).map(|(&k, &x)| x.powi(k as i32)).product();
    }
}

/// Diagonal-pivoted Cholesky of a symmetric positive semi-definite matrix.
/// Returns the factor, the pivot order and the rank.
fn pivoted_cholesky(a: &[f64], p: usize) -> (Vec<f64>, Vec<usize>, usize, f64) {
    let mut m = a.to_vec();
    let mut perm: Vec<usize> = (0..p).collect();
    let max_diag = (0..p).map(|i| a[i * p + i]).fold(0.0f64, f64::max);
    let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; p * p];
    let (mut big, mut small) = (0.0f64, f64::INFINITY);
    for k in 0..p {
        let (piv, val) = (k..p)
            .map(|i| (i, m[i * p + i]))
            .fold((k, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            return (
                l,
                perm,
                k,
                if small > 0.0 {
                    (big / small).powi(2)
                } else {
                    f64::INFINITY
                },
            );
        }
        if piv != k {
            perm.swap(k, piv);
            for j in 0..p {
                m.swap(k * p + j, piv * p + j);
            }
            for i in 0..p {
                m.swap(i * p + k, i * p + piv);
            }
            for j in 0..k {
                l.swap(k * p + j, piv * p + j);
            }
        }
        let d = m[k * p + k].sqrt();
        big = big.max(d);
        small = small.min(d);
        l[k * p + k] = d;
        for i in k + 1..p {
            l[i * p + k] = m[i * p + k] / d;
        }
        for i in k + 1..p {
            for j in k + 1..=i {
                let v = m[i * p + j] - l[i * p + k] * l[j * p + k];
                m[i * p + j] = v;
                m[j * p + i] = v;
            }
        }
    }
    (l, perm, p, (big / small).powi(2))
}

fn cholesky_solve(l: &[f64], perm: &[usize], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
    for i in 0..p {
        let s: f64 = (0..i).map(|j| l[i * p + j] * y[j]).sum();
        y[i] = (y[i] - s) / l[i * p + i];
    }
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| l[j * p + i] * y[j]).sum();
        y[i] = (y[i] - s) / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for (k, &i) in perm.iter().enumerate() {
        x[i] = y[k];
    }
    x
}

/// Regresses `targets` on a total-degree-`degree` monomial basis of the state
/// columns (`states[c][path]`). Returns fitted values for every path.
pub fn regress_conditional_expectation<S: Scalar>(
    states: &[Vec<S>],
    targets: &[S],
    degree: usize,
) -> Result<RegressionFit<S>> {
    let n = targets.len();
    if n == 0 {
        return Err(Error::Solver("regression population is empty".into()));
    }
    if let Some(i) = targets.iter().position(|y| !y.is_finite()) {
        return Err(Error::Solver(format!("non-finite regression target on row {i}")));
    }
    let nf = n as f64;
    let mut columns = Vec::new();
    let (mut centre, mut scale) = (Vec::new(), Vec::new());
    for (c, col) in states.iter().enumerate() {
        if col.len() != n {
            return Err(Error::Solver("state column length differs from the target".into()));
        }
        let mean = col.iter().map(|x| x.to_f64_lossy()).sum::<f64>() / nf;
        let var = col.iter().map(|x| (x.to_f64_lossy() - mean).powi(2)).sum::<f64>() / nf;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            columns.push(c);
            centre.push(mean);
            scale.push(sd);
        }
    }
    let mut exponents = monomials(columns.len(), degree);
    let mut mean_fallback = false;
    if exponents.len() > 1 && n < PATHS_PER_BASIS * exponents.len() {
        exponents.truncate(1);
        mean_fallback = true;
    }
    let p = exponents.len();
    debug_assert!(exponents[0].iter().all(|&e| e == 0), "first monomial is the constant");
    // regress on targets shifted by the first one: a constant population is
    // then fitted exactly, and sums carry less cancellation
    let shift = targets[0].to_f64_lossy();
    let row_of = |i: usize, row: &mut [f64]| {
        let z: Vec<f64> = columns
            .iter()
            .enumerate()
            .map(|(k, &c)| (states[c][i].to_f64_lossy() - centre[k]) / scale[k])
            .collect();
        basis_row(&exponents, &z, row);
    };

    // Fixed chunks summed in order keep the result independent of scheduling.
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(ROWS_PER_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let (mut a, mut b, mut row) = (vec![0.0; p * p], vec![0.0; p], vec![0.0; p]);
            let (lo, hi) = (chunk * ROWS_PER_CHUNK, ((chunk + 1) * ROWS_PER_CHUNK).min(n));
            for (i, t) in (lo..hi).zip(&targets[lo..hi]) {
                row_of(i, &mut row);
                let y = t.to_f64_lossy() - shift;
                for r in 0..p {
                    b[r] += row[r] * y;
                    for c in 0..=r {
                        a[r * p + c] += row[r] * row[c];
                    }
                }
            }
            (a, b)
        })
        .collect();
    let (mut xtx, mut xty) = (vec![0.0; p * p], vec![0.0; p]);
    for (a, b) in partial {
        xtx.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        xty.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
    let mut a = xtx;
    for r in 0..p {
        for c in 0..r {
            a[c * p + r] = a[r * p + c];
        }
    }

    let (mut l, mut perm, rank, mut condition) = pivoted_cholesky(&a, p);
    let mut ridge = false;
    if rank < p {
        let trace: f64 = (0..p).map(|i| a[i * p + i]).sum();
        let lambda = 1e-10 * trace / p as f64;
        for i in 0..p {
            a[i * p + i] += lambda;
        }
        let (l2, perm2, rank2, cond2) = pivoted_cholesky(&a, p);
        if rank2 < p {
            return Err(Error::Solver(
                "regression normal equations are singular after ridge".into(),
            ));
        }
        (l, perm, condition, ridge) = (l2, perm2, cond2, true);
    }
    let mut beta = cholesky_solve(&l, &perm, p, &xty);
    beta[0] += shift;

    let fitted_f: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; p],
            |row, i| {
                row_of(i, row);
                row.iter().zip(&beta).map(|(a, b)| a * b).sum()
            },
        )
        .collect();
    let residual_norm = fitted_f
        .iter()
        .zip(targets)
        .map(|(f, y)| (y.to_f64_lossy() - f).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(RegressionFit {
        fitted: fitted_f.into_iter().map(S::lit).collect(),
        coefficients: beta,
        residual_norm,
        condition,
        mean_fallback,
        ridge,
        exponents,
        columns,
        centre,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn basis_size() {
        assert_eq!(monomials(2, 2).len(), 6);
        assert_eq!(monomials(3, 2).len(), 10);
        assert_eq!(monomials(0, 2).len(), 1);
    }

    #[test]
    fn constant_target_is_reproduced() {
        let x = normals(500, 1);
        let fit = regress_conditional_expectation(&[x], &vec![7.0; 500], 2).unwrap();
        assert!(fit.fitted.iter().all(|v: &f64| (v - 7.0).abs() < 1e-10));
    }

    #[test]
    fn target_in_span_is_exact() {
        let s: Vec<f64> = normals(1000, 2).iter().map(|z| 100.0 + 20.0 * z).collect();
        let y: Vec<f64> = s.iter().map(|x| 3.0 * x + 1.0).collect();
        let fit = regress_conditional_expectation(std::slice::from_ref(&s), &y, 2).unwrap();
        for (f, t) in fit.fitted.iter().zip(&y) {
            assert!((f - t).abs() <= 1e-10 * t.abs());
        }
        assert!((fit.predict(&[110.0]) - 331.0).abs() < 1e-8);
    }

    #[test]
    fn quadratic_coefficient_within_three_standard_errors() {
        let n = 100_000;
        let s = normals(n, 3);
        let e = normals(n, 4);
        let sigma = 0.5;
        let y: Vec<f64> = s.iter().zip(&e).map(|(x, z)| x * x + sigma * z).collect();
        let fit = regress_conditional_expectation(&[s], &y, 2).unwrap();
        let curvature = (fit.predict(&[1.0]) + fit.predict(&[-1.0]) - 2.0 * fit.predict(&[0.0])) / 2.0;
        let se = sigma / (2.0 * n as f64).sqrt();
        assert!((curvature - 1.0).abs() < 3.0 * se, "{curvature}");
    }

    #[test]
    fn small_population_falls_back_to_the_mean() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let fit = regress_conditional_expectation(&[x], &[1.0, 2.0, 3.0, 6.0], 2).unwrap();
        assert!(fit.mean_fallback);
        assert!(fit.fitted.iter().all(|v: &f64| (v - 3.0).abs() < 1e-12));
        assert!(matches!(
            regress_conditional_expectation::<f64>(&[vec![]], &[], 2),
            Err(Error::Solver(_))
        ));
    }

    #[test]
    fn collinear_states_use_the_ridge() {
        let x = normals(2000, 5);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = regress_conditional_expectation(&[x.clone(), y.clone()], &y, 1).unwrap();
        assert!(fit.ridge);
        for (f, t) in fit.fitted.iter().zip(&y) {
            assert!((f - t).abs() < 1e-6);
        }
    }

    #[test]
    fn runs_in_single_precision() {
        let x: Vec<f32> = (0..400).map(|i| i as f32 / 400.0).collect();
        let y: Vec<f32> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = regress_conditional_expectation(&[x], &y, 1).unwrap();
        assert!((fit.fitted[200] - y[200]).abs() < 1e-5);
    }
}
