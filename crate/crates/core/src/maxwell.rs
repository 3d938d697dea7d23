//! Maxwellians, moments, the macroscopic projection P_M, Burnett functions,
//! and the polynomial-exponential weight w(v).
//!
//! The projection basis is Gram–Schmidt-orthonormalized on the discrete grid
//! under ⟨f,g⟩_M = ∫ fg/M dv, so P_M is a projection to machine precision
//! even where quadrature is inexact. Weighted quantities are always formed
//! as h = wF/√μ node-wise; nothing divides by Maxwellian tails.

use crate::error::{CoreError, Result};
use crate::grid::VelocityGrid;
use crate::numerics::det_sum;
use std::sync::Arc;

/// Normalized global Maxwellian μ(v) = (2π)^{-3/2} e^{-|v|²/2}, taking |v|².
pub fn global_maxwellian(speed2: f64) -> f64 {
    (2.0 * std::f64::consts::PI).powf(-1.5) * (-0.5 * speed2).exp()
}

/// Wall Maxwellian μ_θ(v) = (2πθ²)^{-1} e^{-|v|²/(2θ)}, flux-normalized so
/// that ∫_{v₁≷0} |v₁| μ_θ dv = 1.
pub fn wall_maxwellian(speed2: f64, theta: f64) -> f64 {
    (-0.5 * speed2 / theta).exp() / (2.0 * std::f64::consts::PI * theta * theta)
}

/// Density, bulk velocity, temperature of a local Maxwellian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroState {
    pub rho: f64,
    pub u: [f64; 3],
    pub theta: f64,
}

impl MacroState {
    pub fn new(rho: f64, u: [f64; 3], theta: f64) -> Result<Self> {
        if !(rho > 0.0) || !(theta > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "MacroState needs rho > 0 and theta > 0, got rho = {rho}, theta = {theta}"
            )));
        }
        Ok(Self { rho, u, theta })
    }

    pub fn resting(rho: f64, theta: f64) -> Result<Self> {
        Self::new(rho, [0.0; 3], theta)
    }

    /// M_{[ρ,u,θ]}(v).
    pub fn eval(&self, v: [f64; 3]) -> f64 {
        let d0 = v[0] - self.u[0];
        let d1 = v[1] - self.u[1];
        let d2 = v[2] - self.u[2];
        let q = d0 * d0 + d1 * d1 + d2 * d2;
        self.rho * (2.0 * std::f64::consts::PI * self.theta).powf(-1.5)
            * (-0.5 * q / self.theta).exp()
    }
}

/// Sample M_{[ρ,u,θ]} on the velocity grid (one spatial slice).
pub fn maxwellian(state: &MacroState, grid: &VelocityGrid) -> Vec<f64> {
    grid.nodes.iter().map(|&v| state.eval(v)).collect()
}

/// Weight function w(v) = (1+|v|²)^{β/2} e^{ϖ|v|²} with β > 3, 0 < ϖ ≤ 1/8.
#[derive(Debug, Clone, Copy)]
pub struct WeightSpec {
    pub beta: f64,
    pub varpi: f64,
}

impl WeightSpec {
    pub fn new(beta: f64, varpi: f64) -> Result<Self> {
        if !(beta > 3.0) {
            return Err(CoreError::InvalidParameter(format!("weight beta must be > 3, got {beta}")));
        }
        if !(varpi > 0.0 && varpi <= 0.125) {
            return Err(CoreError::InvalidParameter(format!(
                "weight varpi must lie in (0, 1/8], got {varpi}"
            )));
        }
        Ok(Self { beta, varpi })
    }

    pub fn eval(&self, speed2: f64) -> f64 {
        (1.0 + speed2).powf(0.5 * self.beta) * (self.varpi * speed2).exp()
    }
}

/// Burnett function selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Burnett {
    /// A_j(ξ) = ξ_j ξ₁ − δ_{1j}|ξ|²/3.
    A(usize),
    /// B(ξ) = (|ξ|² − 5) ξ₁ / 2.
    B,
}

/// Evaluate a Burnett function at ξ.
pub fn burnett(kind: Burnett, xi: [f64; 3]) -> f64 {
    let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    match kind {
        Burnett::A(j) => {
            assert!((1..=3).contains(&j), "A_j defined for j ∈ {{1,2,3}}");
            let d = if j == 1 { r2 / 3.0 } else { 0.0 };
            xi[j - 1] * xi[0] - d
        }
        Burnett::B => 0.5 * (r2 - 5.0) * xi[0],
    }
}

/// Distribution function sampled on spatial × velocity grids (F-space values).
#[derive(Debug, Clone)]
pub struct DistributionField {
    pub values: Vec<f64>,
    pub nx: usize,
    pub grid: Arc<VelocityGrid>,
}

impl DistributionField {
    pub fn zeros(nx: usize, grid: Arc<VelocityGrid>) -> Self {
        Self {
            values: vec![0.0; nx * grid.len()],
            nx,
            grid,
        }
    }

    pub fn slice(&self, ix: usize) -> &[f64] {
        let nv = self.grid.len();
        &self.values[ix * nv..(ix + 1) * nv]
    }

    pub fn slice_mut(&mut self, ix: usize) -> &mut [f64] {
        let nv = self.grid.len();
        &mut self.values[ix * nv..(ix + 1) * nv]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Per-slice macroscopic record.
#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    /// ∫ v₁ f dv, returned separately for flux-invariant tests.
    pub flux: f64,
}

/// Moments of one velocity slice.
pub fn moments_slice(f: &[f64], grid: &VelocityGrid) -> Moments {
    let n = grid.len();
    let mut acc = [0.0f64; 6];
    let mut bufs: Vec<[f64; 6]> = Vec::new();
    // Deterministic: single pass, serial accumulation in index order per chunk.
    let chunk = 8192;
    for start in (0..n).step_by(chunk) {
        let end = (start + chunk).min(n);
        let mut local = [0.0f64; 6];
        for id in start..end {
            let w = grid.weights[id] * f[id];
            let v = grid.nodes[id];
            let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            local[0] += w;
            local[1] += w * v[0];
            local[2] += w * v[1];
            local[3] += w * v[2];
            local[4] += w * r2;
            local[5] += w * v[0];
        }
        bufs.push(local);
    }
    for local in bufs {
        for k in 0..6 {
            acc[k] += local[k];
        }
    }
    Moments {
        mass: acc[0],
        momentum: [acc[1], acc[2], acc[3]],
        energy: acc[4],
        flux: acc[5],
    }
}

/// Moments at every spatial node.
pub fn moments(field: &DistributionField) -> Vec<Moments> {
    (0..field.nx)
        .map(|ix| moments_slice(field.slice(ix), &field.grid))
        .collect()
}

/// Discrete macroscopic projection onto Ker L_M.
///
/// Holds √M and the five-dimensional kernel basis {M, v_iM, (|v|²−3θ)M}
/// orthonormalized under the discrete ⟨f,g⟩_M inner product (represented in
/// f/√M coordinates where that inner product is the plain weighted ℓ²).
#[derive(Debug, Clone)]
pub struct Projector {
    pub state: MacroState,
    pub sqrt_m: Vec<f64>,
    /// Orthonormal basis vectors in f/√M coordinates, length 5·n.
    basis: Vec<f64>,
    n: usize,
    weights: Vec<f64>,
}

impl Projector {
    pub fn new(state: MacroState, grid: &VelocityGrid) -> Self {
        let n = grid.len();
        let m = maxwellian(&state, grid);
        let sqrt_m: Vec<f64> = m.iter().map(|x| x.sqrt()).collect();
        // Raw kernel basis in f/√M coordinates: poly(v)·√M.
        let mut basis = vec![0.0; 5 * n];
        for (id, &v) in grid.nodes.iter().enumerate() {
            let r2c = {
                let d0 = v[0] - state.u[0];
                let d1 = v[1] - state.u[1];
                let d2 = v[2] - state.u[2];
                d0 * d0 + d1 * d1 + d2 * d2
            };
            let s = sqrt_m[id];
            basis[id] = s;
            basis[n + id] = (v[0] - state.u[0]) * s;
            basis[2 * n + id] = (v[1] - state.u[1]) * s;
            basis[3 * n + id] = (v[2] - state.u[2]) * s;
            basis[4 * n + id] = (r2c - 3.0 * state.theta) * s;
        }
        // Modified Gram–Schmidt with one reorthogonalization pass.
        let w = grid.weights.clone();
        let dotw = |a: &[f64], b: &[f64]| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                s += w[i] * a[i] * b[i];
            }
            s
        };
        for k in 0..5 {
            for _pass in 0..2 {
                for j in 0..k {
                    let (head, tail) = basis.split_at_mut(k * n);
                    let bj = &head[j * n..(j + 1) * n];
                    let bk = &mut tail[..n];
                    let c = dotw(bj, bk);
                    for i in 0..n {
                        bk[i] -= c * bj[i];
                    }
                }
            }
            let bk = &mut basis[k * n..(k + 1) * n];
            let nrm = {
                let mut s = 0.0;
                for i in 0..n {
                    s += w[i] * bk[i] * bk[i];
                }
                s.sqrt()
            };
            for x in bk.iter_mut() {
                *x /= nrm;
            }
        }
        Self {
            state,
            sqrt_m,
            basis,
            n,
            weights: w,
        }
    }

    /// P_M f for a velocity slice in F-space.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.accumulate_projection(f, &mut out, 1.0);
        out
    }

    /// f ← (I − P_M) f in place.
    pub fn remove_kernel(&self, f: &mut [f64]) {
        let mut proj = vec![0.0; self.n];
        self.accumulate_projection(f, &mut proj, 1.0);
        for i in 0..self.n {
            f[i] -= proj[i];
        }
    }

    fn accumulate_projection(&self, f: &[f64], out: &mut [f64], scale: f64) {
        // h = f/√M, coefficients cₖ = Σ w bₖ h, P f = √M Σ cₖ bₖ.
        let n = self.n;
        let mut h = vec![0.0; n];
        for i in 0..n {
            h[i] = f[i] / self.sqrt_m[i];
        }
        let mut coeff = [0.0f64; 5];
        for k in 0..5 {
            let bk = &self.basis[k * n..(k + 1) * n];
            let mut s = 0.0;
            for i in 0..n {
                s += self.weights[i] * bk[i] * h[i];
            }
            coeff[k] = s;
        }
        for k in 0..5 {
            let bk = &self.basis[k * n..(k + 1) * n];
            let c = coeff[k] * scale;
            for i in 0..n {
                out[i] += c * bk[i] * self.sqrt_m[i];
            }
        }
    }

    /// Norm of P_M f relative to ‖f‖ in the ⟨·,·⟩_M metric.
    pub fn kernel_fraction(&self, f: &[f64]) -> f64 {
        let n = self.n;
        let mut h = vec![0.0; n];
        for i in 0..n {
            h[i] = f[i] / self.sqrt_m[i];
        }
        let total = {
            let prods: Vec<f64> = (0..n).map(|i| self.weights[i] * h[i] * h[i]).collect();
            det_sum(&prods).sqrt()
        };
        let mut proj2 = 0.0;
        for k in 0..5 {
            let bk = &self.basis[k * n..(k + 1) * n];
            let mut s = 0.0;
            for i in 0..n {
                s += self.weights[i] * bk[i] * h[i];
            }
            proj2 += s * s;
        }
        if total == 0.0 {
            0.0
        } else {
            proj2.sqrt() / total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn grid() -> Arc<VelocityGrid> {
        Arc::new(VelocityGrid::uniform(24, 6.0).unwrap())
    }

    #[test]
    fn standard_maxwellian_moments() {
        let g = grid();
        let st = MacroState::resting(1.0, 1.0).unwrap();
        let f = maxwellian(&st, &g);
        let m = moments_slice(&f, &g);
        assert_relative_eq!(m.mass, 1.0, epsilon = 1e-6);
        assert!(m.momentum.iter().all(|c| c.abs() < 1e-6));
        assert_relative_eq!(m.energy, 3.0, epsilon = 1e-6);
    }

    #[test]
    fn maxwellian_linear_in_density() {
        let g = grid();
        let f1 = maxwellian(&MacroState::resting(1.0, 1.0).unwrap(), &g);
        let f2 = maxwellian(&MacroState::resting(2.0, 1.0).unwrap(), &g);
        for (a, b) in f1.iter().zip(&f2) {
            assert_relative_eq!(2.0 * a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn hot_maxwellian_energy() {
        // θ = 4 doubles the thermal speed; the box must widen accordingly.
        let g = Arc::new(VelocityGrid::uniform(24, 12.0).unwrap());
        let f = maxwellian(&MacroState::resting(1.0, 4.0).unwrap(), &g);
        let m = moments_slice(&f, &g);
        assert_relative_eq!(m.mass, 1.0, epsilon = 1e-5);
        assert_relative_eq!(m.energy, 12.0, epsilon = 1e-5);
    }

    #[test]
    fn drifting_maxwellian_flux() {
        let g = grid();
        let f = maxwellian(&MacroState::new(1.0, [0.1, 0.0, 0.0], 1.0).unwrap(), &g);
        let m = moments_slice(&f, &g);
        assert_relative_eq!(m.flux, 0.1, epsilon = 1e-6);
    }

    #[test]
    fn odd_field_has_zero_mass() {
        let g = grid();
        let f: Vec<f64> = g.nodes.iter().map(|v| v[0] * global_maxwellian(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).collect();
        let m = moments_slice(&f, &g);
        assert!(m.mass.abs() < 1e-14);
    }

    #[test]
    fn projector_fixes_maxwellian() {
        let g = grid();
        let st = MacroState::resting(1.3, 1.4).unwrap();
        let p = Projector::new(st, &g);
        let f = maxwellian(&st, &g);
        let pf = p.project(&f);
        for (a, b) in f.iter().zip(&pf) {
            assert_relative_eq!(*a, *b, epsilon = 1e-10 * f[0].abs().max(1.0));
        }
    }

    #[test]
    fn projector_idempotent() {
        let g = grid();
        let st = MacroState::resting(1.0, 1.1).unwrap();
        let p = Projector::new(st, &g);
        // An arbitrary smooth field.
        let f: Vec<f64> = g
            .nodes
            .iter()
            .map(|v| (1.0 + v[0] + 0.3 * v[1] * v[2]) * st.eval(*v))
            .collect();
        let p1 = p.project(&f);
        let p2 = p.project(&p1);
        let scale = p1.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn burnett_times_maxwellian_is_microscopic() {
        // Oracle: brute-force Gram-matrix projection of A₂(ξ)M onto the raw
        // (non-orthogonalized) kernel basis, solved via normal equations.
        let g = grid();
        let st = MacroState::resting(1.0, 1.0).unwrap();
        let p = Projector::new(st, &g);
        let f: Vec<f64> = g
            .nodes
            .iter()
            .map(|&v| burnett(Burnett::A(2), v) * st.eval(v))
            .collect();
        let frac = p.kernel_fraction(&f);
        assert!(frac < 1e-10, "kernel fraction {frac}");

        // Brute-force oracle.
        let n = g.len();
        let m = maxwellian(&st, &g);
        let raw: Vec<Vec<f64>> = vec![
            m.clone(),
            g.nodes.iter().zip(&m).map(|(v, mm)| v[0] * mm).collect(),
            g.nodes.iter().zip(&m).map(|(v, mm)| v[1] * mm).collect(),
            g.nodes.iter().zip(&m).map(|(v, mm)| v[2] * mm).collect(),
            g.nodes
                .iter()
                .zip(&m)
                .map(|(v, mm)| ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - 3.0) * mm)
                .collect(),
        ];
        let dot_m = |a: &[f64], b: &[f64]| -> f64 {
            (0..n).map(|i| g.weights[i] * a[i] * b[i] / m[i]).sum()
        };
        let mut gram = vec![0.0; 25];
        let mut rhs = vec![0.0; 5];
        for i in 0..5 {
            for j in 0..5 {
                gram[i * 5 + j] = dot_m(&raw[i], &raw[j]);
            }
            rhs[i] = dot_m(&raw[i], &f);
        }
        crate::numerics::lu_solve(&mut gram, &mut rhs, 5).unwrap();
        let mut proj = vec![0.0; n];
        for k in 0..5 {
            for i in 0..n {
                proj[i] += rhs[k] * raw[k][i];
            }
        }
        let pnorm = dot_m(&proj, &proj).sqrt();
        let fnorm = dot_m(&f, &f).sqrt();
        assert!(pnorm / fnorm < 1e-8, "oracle projection {pnorm} vs {fnorm}");
    }

    #[test]
    fn burnett_values() {
        assert_relative_eq!(burnett(Burnett::A(1), [1.0, 0.0, 0.0]), 2.0 / 3.0);
        assert_relative_eq!(burnett(Burnett::A(2), [1.0, 1.0, 0.0]), 1.0);
        assert_relative_eq!(burnett(Burnett::B, [1.0, 2.0, 0.0]), 0.0);
    }

    #[test]
    fn weight_function_values_and_monotonicity() {
        let w = WeightSpec::new(4.0, 0.125).unwrap();
        assert_relative_eq!(w.eval(0.0), 1.0);
        assert_relative_eq!(w.eval(8.0), 81.0 * std::f64::consts::E, epsilon = 1e-12);
        let mut prev = 0.0;
        for k in 0..50 {
            let v2 = k as f64 * 0.5;
            let val = w.eval(v2);
            assert!(val > prev);
            prev = val;
        }
        assert!(WeightSpec::new(4.0, 0.2).is_err());
        assert!(WeightSpec::new(2.0, 0.1).is_err());
    }
}
