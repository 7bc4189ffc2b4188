//! Exact quadratic model of the sensitivity subproblem.
//!
//! With the demosaicker fixed, the training objective is a quadratic in
//! the N*L free sensitivity entries x (index n*L + l):
//!
//!   J(x) = c0 - 2 beta.x + x^T H x
//!
//! where every coefficient is assembled once from the neighborhood second
//! moment Rp = mean(u' u'^T) and the center-rows operator M. Evaluating J
//! or its gradient then costs O((NL)^2) regardless of the number of
//! training samples, which is what makes hundreds of outer iterations
//! affordable.
//!
//! Derivation sketch: the estimate for sample c is M Phi' u'_c, whose
//! entry dependence on x is linear with coefficients drawn from u'_c.
//! Averaging the expanded square over samples leaves only Rp (for the
//! quadratic and cross terms, using that the target u_c is the center
//! slot of u'_c) and G = M^T M.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct InnerModel {
    h: DMatrix<f64>,
    beta: DVector<f64>,
    c0: f64,
}

impl InnerModel {
    /// Assembles the model from the neighborhood second moment
    /// (9LN x 9LN) and the center-rows operator M (LN x 9N).
    pub(crate) fn new(rp: &DMatrix<f64>, m: &DMatrix<f64>, n_pixels: usize, bands: usize) -> Self {
        let ln = n_pixels * bands;
        debug_assert_eq!(rp.nrows(), 9 * ln);
        debug_assert_eq!(m.nrows(), ln);
        debug_assert_eq!(m.ncols(), 9 * n_pixels);

        let g = m.transpose() * m;

        // H[(n,l),(m,k)] = sum over block pairs (b,b') of
        //   G[bN+n, b'N+m] * Rp[bLN+nL+l, b'LN+mL+k]
        // assembled column-wise so Rp and H are walked contiguously.
        let mut h = DMatrix::zeros(ln, ln);
        for m_pix in 0..n_pixels {
            for k in 0..bands {
                let hcol_idx = m_pix * bands + k;
                let mut hcol = h.column_mut(hcol_idx);
                for bp in 0..9 {
                    let gcol = g.column(bp * n_pixels + m_pix);
                    let rcol = rp.column(bp * ln + m_pix * bands + k);
                    for b in 0..9 {
                        let g_base = b * n_pixels;
                        let r_base = b * ln;
                        for n_pix in 0..n_pixels {
                            let gv = gcol[g_base + n_pix];
                            if gv == 0.0 {
                                continue;
                            }
                            let h_base = n_pix * bands;
                            let r_off = r_base + n_pix * bands;
                            for l in 0..bands {
                                hcol[h_base + l] += gv * rcol[r_off + l];
                            }
                        }
                    }
                }
            }
        }
        // exact symmetry so 2(Hx - beta) is the exact gradient of x^T H x
        let h = (&h + h.transpose()) * 0.5;

        // beta[(n,l)] = sum_b sum_i M[i, bN+n] * Rp[4LN+i, bLN+nL+l]
        // (the cross moment of targets with neighborhoods is the center
        // row block of Rp)
        let mut beta = DVector::zeros(ln);
        let r4 = 4 * ln;
        for n_pix in 0..n_pixels {
            for l in 0..bands {
                let mut acc = 0.0;
                for b in 0..9 {
                    let mcol = m.column(b * n_pixels + n_pix);
                    let rcol = rp.column(b * ln + n_pix * bands + l);
                    for i in 0..ln {
                        acc += mcol[i] * rcol[r4 + i];
                    }
                }
                beta[n_pix * bands + l] = acc;
            }
        }

        let mut c0 = 0.0;
        for i in 0..ln {
            c0 += rp[(r4 + i, r4 + i)];
        }

        Self { h, beta, c0 }
    }

    /// Mean squared reconstruction norm at sensitivities `x`.
    pub(crate) fn objective(&self, x: &DVector<f64>) -> f64 {
        let hx = &self.h * x;
        self.c0 - 2.0 * self.beta.dot(x) + x.dot(&hx)
    }

    pub(crate) fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.h * x - &self.beta)
    }

    fn curvature_along(&self, g: &DVector<f64>) -> f64 {
        g.dot(&(&self.h * g))
    }
}

/// Infinity norm of the projected gradient on [0, 1]: at a bound only the
/// inward component counts.
pub(crate) fn projected_gradient_norm(x: &DVector<f64>, g: &DVector<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let v = if x[i] <= 0.0 {
            g[i].min(0.0)
        } else if x[i] >= 1.0 {
            g[i].max(0.0)
        } else {
            g[i]
        };
        worst = worst.max(v.abs());
    }
    worst
}

fn project(mut x: DVector<f64>) -> DVector<f64> {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    x
}

/// Projected gradient descent with Armijo backtracking on the box [0, 1].
/// Accepts a step only on sufficient decrease, so the objective never
/// increases. Returns the final point and the number of accepted steps;
/// an already-stationary start returns zero steps.
pub(crate) fn pg_minimize(
    model: &InnerModel,
    x0: Vec<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<(Vec<f64>, usize)> {
    let mut x = project(DVector::from_vec(x0));
    let mut j = model.objective(&x);
    if !j.is_finite() {
        return Err(Error::NonFiniteObjective(format!(
            "objective {j} at the starting point"
        )));
    }
    let mut steps = 0;
    for _ in 0..max_iters {
        let g = model.gradient(&x);
        if projected_gradient_norm(&x, &g) < tol {
            break;
        }
        // exact minimizer along -g for the unconstrained quadratic
        let curvature = model.curvature_along(&g);
        let gg = g.dot(&g);
        let mut alpha = if curvature > 0.0 {
            gg / (2.0 * curvature)
        } else {
            1.0
        };
        let mut accepted = false;
        for _ in 0..60 {
            let xn = project(&x - alpha * &g);
            let predicted = g.dot(&(&x - &xn));
            if predicted <= 0.0 {
                break;
            }
            let jn = model.objective(&xn);
            if !jn.is_finite() {
                return Err(Error::NonFiniteObjective(format!(
                    "objective {jn} during line search"
                )));
            }
            if jn <= j - 1e-4 * predicted {
                x = xn;
                j = jn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        steps += 1;
    }
    Ok((x.data.into(), steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-built model: J(x) = (x0 - a)^2 + (x1 - b)^2 + c, via
    /// H = I, beta = (a, b), c0 = a^2 + b^2 + c.
    fn toy_model(a: f64, b: f64, c: f64) -> InnerModel {
        InnerModel {
            h: DMatrix::identity(2, 2),
            beta: DVector::from_vec(vec![a, b]),
            c0: a * a + b * b + c,
        }
    }

    #[test]
    fn descends_to_interior_minimum() {
        let m = toy_model(0.3, 0.7, 0.05);
        let (x, steps) = pg_minimize(&m, vec![0.9, 0.1], 100, 1e-10).unwrap();
        assert!(steps >= 1);
        assert!((x[0] - 0.3).abs() < 1e-8);
        assert!((x[1] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn saturates_when_minimum_is_outside_box() {
        let m = toy_model(1.8, -0.4, 0.0);
        let (x, _) = pg_minimize(&m, vec![0.5, 0.5], 200, 1e-10).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
    }

    #[test]
    fn stationary_start_takes_no_steps() {
        let m = toy_model(0.25, 0.5, 0.0);
        let (x, steps) = pg_minimize(&m, vec![0.25, 0.5], 100, 1e-8).unwrap();
        assert_eq!(steps, 0);
        assert_eq!(x, vec![0.25, 0.5]);
    }

    #[test]
    fn projected_norm_ignores_outward_components_at_bounds() {
        let x = DVector::from_vec(vec![0.0, 1.0, 0.5]);
        // at the lower bound a positive gradient pushes outward: ignored
        let g = DVector::from_vec(vec![5.0, -5.0, 0.25]);
        assert_eq!(projected_gradient_norm(&x, &g), 0.25);
        let g2 = DVector::from_vec(vec![-2.0, 0.0, 0.0]);
        assert_eq!(projected_gradient_norm(&x, &g2), 2.0);
    }

    #[test]
    fn objective_never_increases_along_the_run() {
        let m = toy_model(0.9, 0.2, 0.1);
        let mut x = DVector::from_vec(vec![0.05, 0.95]);
        let mut last = m.objective(&x);
        for _ in 0..20 {
            let (xn, steps) = pg_minimize(&m, x.data.as_vec().clone(), 1, 1e-14).unwrap();
            x = DVector::from_vec(xn);
            let j = m.objective(&x);
            assert!(j <= last + 1e-15);
            last = j;
            if steps == 0 {
                break;
            }
        }
    }
}
