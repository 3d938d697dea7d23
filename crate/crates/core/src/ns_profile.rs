//! Steady compressible Navier–Stokes profile in the slab with
//! temperature-jump wall conditions.
//!
//! With vanishing bulk velocity the steady system reduces to
//!   ρθ ≡ P₀,   d/dx(√θ dθ/dx) = 0,
//! with the jump conditions
//!   (θ(0)−θ₀)/θ(0) =  (c_{β,2}/P₀) ε θ'(0),
//!   (θ(1)−θ₁)/θ(1) = −(c_{β,2}/P₀) ε θ'(1),
//! and unit total mass ∫₀¹ ρ dx = 1. The general solution is
//! θ(x) = (D₁x + D₂)^{2/3}, ρ = P₀/θ, and (D₁, D₂, P₀) solve a 3×3
//! algebraic system treated here by damped Newton with the analytic
//! Jacobian, seeded at the ε = 0 closed form.

use crate::error::{CoreError, Result};
use crate::numerics::lu_solve;

/// Solved slab profile: θ(x) = (D₁x+D₂)^{2/3}, ρ(x) = P₀/θ(x).
#[derive(Debug, Clone, Copy)]
pub struct NsProfile {
    pub d1: f64,
    pub d2: f64,
    pub p0: f64,
    pub theta0: f64,
    pub theta1: f64,
    pub eps: f64,
    pub c_beta2: f64,
}

/// Slip/jump coefficients extracted from the Milne limits.
#[derive(Debug, Clone, Copy)]
pub struct SlipCoefficients {
    pub c_alpha1: f64,
    pub c_alpha2: f64,
    pub c_bar: f64,
    pub c_beta1: f64,
    pub c_beta2: f64,
}

/// Point values of the profile.
#[derive(Debug, Clone, Copy)]
pub struct ProfilePoint {
    pub rho: f64,
    pub theta: f64,
    pub dtheta_dx: f64,
    pub d2theta_dx2: f64,
}

/// Residuals of the algebraic system (jump at 0, jump at 1, mass).
pub fn residuals(d1: f64, d2: f64, p0: f64, theta0: f64, theta1: f64, eps: f64, c: f64) -> [f64; 3] {
    let s = d1 + d2;
    let f1 = d2.powf(2.0 / 3.0) - theta0 - 2.0 * c / (3.0 * p0) * eps * d1 * d2.powf(1.0 / 3.0);
    let f2 = s.powf(2.0 / 3.0) - theta1 + 2.0 * c / (3.0 * p0) * eps * d1 * s.powf(1.0 / 3.0);
    let f3 = 3.0 * p0 * phi(d1, d2) - 1.0;
    [f1, f2, f3]
}

/// φ(D₁,D₂) = [(D₁+D₂)^{1/3} − D₂^{1/3}]/D₁, continuous through D₁ = 0.
fn phi(d1: f64, d2: f64) -> f64 {
    let t = d1 / d2;
    if t.abs() < 1e-6 {
        // ((1+t)^{1/3} − 1)/t · D₂^{-2/3}, series in t.
        d2.powf(-2.0 / 3.0) * (1.0 / 3.0 - t / 9.0 + 5.0 * t * t / 81.0)
    } else {
        ((d1 + d2).powf(1.0 / 3.0) - d2.powf(1.0 / 3.0)) / d1
    }
}

fn dphi(d1: f64, d2: f64) -> (f64, f64) {
    let t = d1 / d2;
    if t.abs() < 1e-6 {
        // Series derivatives of φ = D₂^{-2/3}ψ(t), ψ = 1/3 − t/9 + 5t²/81.
        let psi_t = -1.0 / 9.0 + 10.0 * t / 81.0;
        let psi = 1.0 / 3.0 - t / 9.0 + 5.0 * t * t / 81.0;
        let d_d1 = d2.powf(-2.0 / 3.0) * psi_t / d2;
        let d_d2 = -2.0 / 3.0 * d2.powf(-5.0 / 3.0) * psi
            + d2.powf(-2.0 / 3.0) * psi_t * (-d1 / (d2 * d2));
        (d_d1, d_d2)
    } else {
        let s = d1 + d2;
        let d_d1 = (s.powf(1.0 / 3.0) / 3.0 / s * d1 - (s.powf(1.0 / 3.0) - d2.powf(1.0 / 3.0)))
            / (d1 * d1);
        let d_d2 = (s.powf(-2.0 / 3.0) - d2.powf(-2.0 / 3.0)) / (3.0 * d1);
        (d_d1, d_d2)
    }
}

/// Solve the algebraic system for (D₁, D₂, P₀).
///
/// Newton is seeded at the ε = 0 closed form
/// (θ₁^{3/2}−θ₀^{3/2}, θ₀^{3/2}, (θ₁^{3/2}−θ₀^{3/2})/(3(θ₁^{1/2}−θ₀^{1/2})))
/// and damped by halving while the residual norm does not decrease. Equal
/// wall temperatures return the constant profile directly.
pub fn solve_algebraic(theta0: f64, theta1: f64, eps: f64, c_beta2: f64) -> Result<NsProfile> {
    if !(theta0 > 0.0 && theta1 > 0.0) {
        return Err(CoreError::InvalidParameter(
            "wall temperatures must be positive".into(),
        ));
    }
    if !(eps >= 0.0 && eps <= 0.2) {
        return Err(CoreError::InvalidParameter(format!(
            "eps = {eps} outside the Newton continuation guard [0, 0.2]"
        )));
    }
    if theta0 == theta1 {
        return Ok(NsProfile {
            d1: 0.0,
            d2: theta0.powf(1.5),
            p0: theta0,
            theta0,
            theta1,
            eps,
            c_beta2,
        });
    }
    let d1_star = theta1.powf(1.5) - theta0.powf(1.5);
    let d2_star = theta0.powf(1.5);
    let p0_star = d1_star / (3.0 * (theta1.sqrt() - theta0.sqrt()));
    let det_floor = {
        let det0 = 4.0 / 9.0 / (theta0.sqrt() * theta1.sqrt() * p0_star);
        1e-12 * det0.abs()
    };
    let mut x = [d1_star, d2_star, p0_star];
    let mut res = residuals(x[0], x[1], x[2], theta0, theta1, eps, c_beta2);
    let norm = |r: &[f64; 3]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rn = norm(&res);
    for it in 0..50 {
        if rn <= 1e-13 {
            break;
        }
        let (d1, d2, p0) = (x[0], x[1], x[2]);
        let s = d1 + d2;
        let k = 2.0 * c_beta2 * eps / 3.0;
        // Analytic Jacobian of the residuals.
        let mut jac = [
            // ∂F₁/∂(D₁,D₂,P₀)
            -k / p0 * d2.powf(1.0 / 3.0),
            2.0 / 3.0 * d2.powf(-1.0 / 3.0) - k / p0 * d1 / 3.0 * d2.powf(-2.0 / 3.0),
            k / (p0 * p0) * d1 * d2.powf(1.0 / 3.0),
            // ∂F₂
            2.0 / 3.0 * s.powf(-1.0 / 3.0)
                + k / p0 * (s.powf(1.0 / 3.0) + d1 / 3.0 * s.powf(-2.0 / 3.0)),
            2.0 / 3.0 * s.powf(-1.0 / 3.0) + k / p0 * d1 / 3.0 * s.powf(-2.0 / 3.0),
            -k / (p0 * p0) * d1 * s.powf(1.0 / 3.0),
            // ∂F₃
            0.0,
            0.0,
            3.0 * phi(d1, d2),
        ];
        let (p1, p2) = dphi(d1, d2);
        jac[6] = 3.0 * p0 * p1;
        jac[7] = 3.0 * p0 * p2;
        let mut step = [-res[0], -res[1], -res[2]];
        let det = lu_solve(&mut jac, &mut step, 3)
            .ok_or(CoreError::SingularJacobian { det: 0.0, floor: det_floor })?;
        if det.abs() < det_floor {
            return Err(CoreError::SingularJacobian { det, floor: det_floor });
        }
        // Damped update.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = [
                x[0] + lambda * step[0],
                x[1] + lambda * step[1],
                x[2] + lambda * step[2],
            ];
            if cand[1] > 0.0 && cand[1] + cand[0] > 0.0 && cand[2] > 0.0 {
                let cres = residuals(cand[0], cand[1], cand[2], theta0, theta1, eps, c_beta2);
                let cn = norm(&cres);
                if cn < rn || rn <= 1e-13 {
                    x = cand;
                    res = cres;
                    rn = cn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(CoreError::NewtonDiverged {
                iterations: it + 1,
                residual: rn,
            });
        }
    }
    if rn > 1e-12 {
        return Err(CoreError::NewtonDiverged {
            iterations: 50,
            residual: rn,
        });
    }
    Ok(NsProfile {
        d1: x[0],
        d2: x[1],
        p0: x[2],
        theta0,
        theta1,
        eps,
        c_beta2,
    })
}

impl NsProfile {
    /// Exact point evaluation with analytic derivatives.
    pub fn eval(&self, x: f64) -> ProfilePoint {
        let b = self.d1 * x + self.d2;
        let theta = b.powf(2.0 / 3.0);
        let dtheta = 2.0 / 3.0 * self.d1 * b.powf(-1.0 / 3.0);
        let d2theta = -2.0 / 9.0 * self.d1 * self.d1 * b.powf(-4.0 / 3.0);
        ProfilePoint {
            rho: self.p0 / theta,
            theta,
            dtheta_dx: dtheta,
            d2theta_dx2: d2theta,
        }
    }

    /// ∫₀¹ ρ dx via the closed-form antiderivative (3P₀/D₁)[(D₁+D₂)^{1/3}−D₂^{1/3}].
    pub fn mass_integral(&self) -> f64 {
        3.0 * self.p0 * phi(self.d1, self.d2)
    }

    /// Number of Newton iterations is not stored; residuals of the
    /// algebraic system, recomputed.
    pub fn residuals(&self) -> [f64; 3] {
        residuals(
            self.d1, self.d2, self.p0, self.theta0, self.theta1, self.eps, self.c_beta2,
        )
    }

    /// Absolute residuals of the two wall jump relations
    /// (θ(0)−θ₀)/θ(0) − (c/P₀)εθ'(0) and (θ(1)−θ₁)/θ(1) + (c/P₀)εθ'(1).
    pub fn jump_residuals(&self) -> (f64, f64) {
        let p0pt = self.eval(0.0);
        let p1pt = self.eval(1.0);
        let r0 = (p0pt.theta - self.theta0) / p0pt.theta
            - self.c_beta2 / self.p0 * self.eps * p0pt.dtheta_dx;
        let r1 = (p1pt.theta - self.theta1) / p1pt.theta
            + self.c_beta2 / self.p0 * self.eps * p1pt.dtheta_dx;
        (r0.abs(), r1.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equal_walls_constant_profile() {
        let p = solve_algebraic(1.0, 1.0, 0.1, 1.7).unwrap();
        for x in [0.0, 0.3, 1.0] {
            let pt = p.eval(x);
            assert_relative_eq!(pt.theta, 1.0, epsilon = 1e-14);
            assert_relative_eq!(pt.rho, 1.0, epsilon = 1e-14);
        }
        assert_relative_eq!(p.p0, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_eps_closed_form() {
        let p = solve_algebraic(1.0, 4.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(p.d1, 7.0, epsilon = 1e-12);
        assert_relative_eq!(p.d2, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.p0, 7.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(p.mass_integral(), 1.0, epsilon = 1e-13);
        let mid = p.eval(0.5);
        assert_relative_eq!(mid.theta, 4.5f64.powf(2.0 / 3.0), epsilon = 1e-13);
        let w0 = p.eval(0.0);
        assert_relative_eq!(w0.theta, 1.0, epsilon = 1e-13);
        assert_relative_eq!(w0.dtheta_dx, 14.0 / 3.0, epsilon = 1e-13);
        let w1 = p.eval(1.0);
        assert_relative_eq!(w1.theta, 4.0, epsilon = 1e-13);
        assert_relative_eq!(w1.rho, 7.0 / 12.0, epsilon = 1e-13);
    }

    #[test]
    fn finite_difference_matches_analytic_derivative() {
        let p = solve_algebraic(1.0, 4.0, 0.0, 0.0).unwrap();
        let h = 1e-5;
        for x in [0.2, 0.5, 0.8] {
            let fd = (p.eval(x + h).theta - p.eval(x - h).theta) / (2.0 * h);
            assert_relative_eq!(fd, p.eval(x).dtheta_dx, epsilon = 1e-8);
            let fd2 = (p.eval(x + h).dtheta_dx - p.eval(x - h).dtheta_dx) / (2.0 * h);
            assert_relative_eq!(fd2, p.eval(x).d2theta_dx2, epsilon = 1e-7);
        }
    }

    #[test]
    fn newton_with_jump_and_bisection_oracle() {
        // Cross-check: eliminate P₀ = 1/(3φ) and D₂ (from F₁, by 1-D Newton),
        // then bisect the remaining scalar equation F₂(D₁) = 0.
        let (theta0, theta1, eps, c) = (1.0, 1.2, 0.01, 1.5);
        let p = solve_algebraic(theta0, theta1, eps, c).unwrap();
        let r = p.residuals();
        assert!(r.iter().all(|v| v.abs() <= 1e-12), "{r:?}");
        // θ(0)−θ₀ and θ'(0) share a sign.
        let w0 = p.eval(0.0);
        assert!((w0.theta - theta0) * w0.dtheta_dx > 0.0);

        let solve_d2 = |d1: f64| -> f64 {
            // F₁(D₂) = 0 at fixed D₁ with P₀ = 1/(3φ(D₁,D₂)).
            let mut d2 = theta0.powf(1.5);
            for _ in 0..100 {
                let p0 = 1.0 / (3.0 * phi(d1, d2));
                let f = d2.powf(2.0 / 3.0) - theta0 - 2.0 * c / (3.0 * p0) * eps * d1 * d2.powf(1.0 / 3.0);
                let h = 1e-8 * d2.max(1.0);
                let p0h = 1.0 / (3.0 * phi(d1, d2 + h));
                let fh = (d2 + h).powf(2.0 / 3.0)
                    - theta0
                    - 2.0 * c / (3.0 * p0h) * eps * d1 * (d2 + h).powf(1.0 / 3.0);
                let step = f / ((fh - f) / h);
                d2 -= step;
                if step.abs() < 1e-14 * d2.abs() {
                    break;
                }
            }
            d2
        };
        let f2_of_d1 = |d1: f64| -> f64 {
            let d2 = solve_d2(d1);
            let p0 = 1.0 / (3.0 * phi(d1, d2));
            let s = d1 + d2;
            s.powf(2.0 / 3.0) - theta1 + 2.0 * c / (3.0 * p0) * eps * d1 * s.powf(1.0 / 3.0)
        };
        let (mut lo, mut hi) = (0.5 * p.d1, 1.5 * p.d1);
        assert!(f2_of_d1(lo) * f2_of_d1(hi) < 0.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f2_of_d1(lo) * f2_of_d1(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let d1_oracle = 0.5 * (lo + hi);
        assert_relative_eq!(p.d1, d1_oracle, max_relative = 1e-9);
    }

    #[test]
    fn jump_scales_linearly_in_eps() {
        let c = 1.5;
        let epses = [0.01, 0.02, 0.04];
        let jumps: Vec<f64> = epses
            .iter()
            .map(|&e| {
                let p = solve_algebraic(1.0, 1.2, e, c).unwrap();
                (p.eval(0.0).theta - 1.0).abs()
            })
            .collect();
        let (slope, _, _) = crate::numerics::fit_loglog(&epses, &jumps);
        assert!((slope - 1.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn jump_residuals_enforced() {
        let p = solve_algebraic(1.0, 1.2, 0.01, 1.5).unwrap();
        let (r0, r1) = p.jump_residuals();
        assert!(r0 <= 1e-12 && r1 <= 1e-12);
        let p0 = solve_algebraic(1.0, 4.0, 0.0, 1.5).unwrap();
        let (s0, s1) = p0.jump_residuals();
        assert!(s0 <= 1e-13 && s1 <= 1e-13);
    }

    #[test]
    fn mass_integral_matches_quadrature_and_monotone_theta() {
        let p = solve_algebraic(1.0, 1.5, 0.05, 1.5).unwrap();
        assert_relative_eq!(p.mass_integral(), 1.0, epsilon = 1e-10);
        // Independent fine quadrature of ρ.
        let m = 200_000;
        let mut s = 0.0;
        for i in 0..m {
            let x = (i as f64 + 0.5) / m as f64;
            s += p.eval(x).rho / m as f64;
        }
        assert_relative_eq!(s, 1.0, epsilon = 1e-9);
        assert!(p.d1 > 0.0);
        // Reversed walls also accepted.
        let q = solve_algebraic(1.5, 1.0, 0.05, 1.5).unwrap();
        assert!(q.d1 < 0.0);
        assert_relative_eq!(q.mass_integral(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn profiles_continuous_in_eps() {
        let mut diffs = Vec::new();
        let epses = [0.04, 0.02, 0.01];
        for &e in &epses {
            let p = solve_algebraic(1.0, 1.3, e, 1.5).unwrap();
            let p2 = solve_algebraic(1.0, 1.3, e / 2.0, 1.5).unwrap();
            let mut d: f64 = 0.0;
            for i in 0..=50 {
                let x = i as f64 / 50.0;
                d = d.max((p.eval(x).theta - p2.eval(x).theta).abs());
            }
            diffs.push(d);
        }
        let (slope, _, _) = crate::numerics::fit_loglog(&epses, &diffs);
        assert!(slope >= 0.9, "slope {slope}");
    }
}
