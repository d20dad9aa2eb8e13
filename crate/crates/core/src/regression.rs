//! Least-squares conditional expectations on polynomials of the Brownian
//! state.
//!
//! `E[Y | W_t = w]` is approximated by a cubic in `w`. The basis is written
//! as probabilists' Hermite polynomials of the standardised state
//! `x = w / sqrt(t)`, which spans the same cubic space as `{1, w, w^2, w^3}`
//! but keeps the normal equations close to diagonal at every node. The
//! standardised state is clamped at [`CLAMP`], so fits do not extrapolate
//! the cubic into sparse tails. At `t = 0` the state is degenerate and only
//! the constant is fitted.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::stats::CHUNK;

/// Ridge added to the non-intercept diagonal of the scaled normal equations.
pub const RIDGE: f64 = 1e-8;

/// Polynomial degree used away from `t = 0`.
pub const DEGREE: usize = 3;

/// The standardised state is clamped to `[-CLAMP, CLAMP]` before the basis
/// is evaluated, so fits are flat beyond it.
pub const CLAMP: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Basis {
    degree: usize,
    scale: f64,
}

impl Basis {
    /// Cubic basis standardised by the law of `W_t`; constant at `t = 0`.
    pub fn at_time(t: f64) -> Self {
        if t > 0.0 {
            Basis {
                degree: DEGREE,
                scale: t.sqrt(),
            }
        } else {
            Basis {
                degree: 0,
                scale: 1.0,
            }
        }
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn eval(&self, w: f64) -> [f64; 4] {
        let x = (w / self.scale).clamp(-CLAMP, CLAMP);
        match self.degree {
            0 => [1.0, 0.0, 0.0, 0.0],
            1 => [1.0, x, 0.0, 0.0],
            2 => [1.0, x, x * x - 1.0, 0.0],
            _ => [1.0, x, x * x - 1.0, x * (x * x - 3.0)],
        }
    }
}

/// A fitted conditional expectation `w -> E[Y | W_t = w]`.
#[derive(Clone, Debug)]
pub struct Fit {
    basis: Basis,
    coeffs: [f64; 4],
    /// Heteroskedasticity-consistent covariance of the coefficients, when
    /// requested.
    covariance: Option<Matrix4<f64>>,
}

impl Fit {
    #[inline]
    pub fn evaluate(&self, w: f64) -> f64 {
        let b = self.basis.eval(w);
        b[0] * self.coeffs[0] + b[1] * self.coeffs[1] + b[2] * self.coeffs[2] + b[3] * self.coeffs[3]
    }

    pub fn predict(&self, w: &[f64]) -> Vec<f64> {
        w.par_iter().map(|x| self.evaluate(*x)).collect()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs[..self.basis.len()]
    }

    /// Standard error of the fitted value at `w`. Only available for fits
    /// built with [`fit_with_se`].
    pub fn standard_error(&self, w: f64) -> Option<f64> {
        let cov = self.covariance.as_ref()?;
        let b = Vector4::from(self.basis.eval(w));
        Some((b.transpose() * cov * b)[(0, 0)].max(0.0).sqrt())
    }
}

/// Normal equations for `y - shift`, scaled by `1/n`.
fn gram(basis: Basis, w: &[f64], y: &[f64], shift: f64) -> (Matrix4<f64>, Vector4<f64>) {
    let partials: Vec<([f64; 16], [f64; 4])> = w
        .par_chunks(CHUNK)
        .zip(y.par_chunks(CHUNK))
        .map(|(wc, yc)| {
            let mut g = [0.0; 16];
            let mut r = [0.0; 4];
            for (wi, yi) in wc.iter().zip(yc) {
                let b = basis.eval(*wi);
                let yi = yi - shift;
                for i in 0..4 {
                    r[i] += b[i] * yi;
                    for j in i..4 {
                        g[i * 4 + j] += b[i] * b[j];
                    }
                }
            }
            (g, r)
        })
        .collect();
    let mut g = Matrix4::zeros();
    let mut r = Vector4::zeros();
    for (pg, pr) in partials {
        for i in 0..4 {
            r[i] += pr[i];
            for j in i..4 {
                g[(i, j)] += pg[i * 4 + j];
            }
        }
    }
    for i in 0..4 {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    let n = w.len() as f64;
    (g / n, r / n)
}

fn solve(basis: Basis, mut g: Matrix4<f64>, r: Vector4<f64>) -> Option<(Matrix4<f64>, [f64; 4])> {
    let p = basis.len();
    for i in 0..4 {
        if i >= p {
            for j in 0..4 {
                g[(i, j)] = 0.0;
                g[(j, i)] = 0.0;
            }
            g[(i, i)] = 1.0;
        } else if i > 0 {
            g[(i, i)] += RIDGE;
        }
    }
    let mut r = r;
    for i in p..4 {
        r[i] = 0.0;
    }
    let chol = g.cholesky()?;
    let x = chol.solve(&r);
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut inv = chol.inverse();
    for i in p..4 {
        for j in 0..4 {
            inv[(i, j)] = 0.0;
            inv[(j, i)] = 0.0;
        }
    }
    Some((inv, [x[0], x[1], x[2], x[3]]))
}

/// Least-squares fit of `y` on the basis evaluated at `w`. Returns `None`
/// when the normal equations cannot be factorised.
pub fn fit(basis: Basis, w: &[f64], y: &[f64]) -> Option<Fit> {
    assert_eq!(w.len(), y.len());
    let shift = crate::stats::mean(y);
    let (g, r) = gram(basis, w, y, shift);
    let (_, mut coeffs) = solve(basis, g, r)?;
    coeffs[0] += shift;
    Some(Fit {
        basis,
        coeffs,
        covariance: None,
    })
}

/// Like [`fit`], additionally estimating the sandwich (HC1) covariance of the
/// coefficients so that fitted values carry standard errors.
pub fn fit_with_se(basis: Basis, w: &[f64], y: &[f64]) -> Option<Fit> {
    assert_eq!(w.len(), y.len());
    let n = w.len();
    let shift = crate::stats::mean(y);
    let (g, r) = gram(basis, w, y, shift);
    let (ginv, mut coeffs) = solve(basis, g, r)?;
    coeffs[0] += shift;
    let partial = Fit {
        basis,
        coeffs,
        covariance: None,
    };
    let meats: Vec<[f64; 16]> = w
        .par_chunks(CHUNK)
        .zip(y.par_chunks(CHUNK))
        .map(|(wc, yc)| {
            let mut m = [0.0; 16];
            for (wi, yi) in wc.iter().zip(yc) {
                let b = basis.eval(*wi);
                let e = yi - partial.evaluate(*wi);
                let e2 = e * e;
                for i in 0..4 {
                    for j in 0..4 {
                        m[i * 4 + j] += e2 * b[i] * b[j];
                    }
                }
            }
            m
        })
        .collect();
    let mut meat = Matrix4::zeros();
    for m in meats {
        for i in 0..4 {
            for j in 0..4 {
                meat[(i, j)] += m[i * 4 + j];
            }
        }
    }
    let p = basis.len();
    let dof = if n > p { n as f64 / (n - p) as f64 } else { 1.0 };
    let nf = n as f64;
    let cov = ginv * (meat / nf) * ginv * (dof / nf);
    Some(Fit {
        covariance: Some(cov),
        ..partial
    })
}
