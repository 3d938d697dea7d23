//! Half-space Milne problem: v₁∂_y𝓕 + L_μ𝓕 = 0 on y > 0 with prescribed
//! incoming data at y = 0, zero net flux, and a far-field limit in Ker L_μ.
//!
//! The limits of the Burnett-data solutions define the slip and
//! temperature-jump coefficients. Numerically the half space is truncated
//! at Y with geometric stretching; sweeps are exact characteristic
//! integration with linear source reconstruction, the collision term is
//! lagged, the kernel-direction indeterminacy at Y is pinned by the
//! zero-flux condition, and the fixed point is Anderson-accelerated.
//! Fields are stored as h = 𝓕/√μ.

use crate::collision::{CollisionOperator, RadialTable};
use crate::error::{CoreError, Result};
use crate::grid::SpatialGrid;
use crate::maxwell::{burnett, global_maxwellian, Burnett};
use crate::ns_profile::SlipCoefficients;
use crate::numerics::{lu_solve, Anderson};

/// Configuration of the half-space solve.
#[derive(Debug, Clone, Copy)]
pub struct MilneConfig {
    pub y_max: f64,
    pub n_y: usize,
    pub first_cell: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub anderson_depth: usize,
}

impl Default for MilneConfig {
    fn default() -> Self {
        Self {
            y_max: 20.0,
            n_y: 72,
            first_cell: 0.04,
            tol: 1e-10,
            max_iter: 1500,
            anderson_depth: 10,
        }
    }
}

/// Converged half-space solution.
pub struct MilneSolution {
    pub ygrid: SpatialGrid,
    /// h = 𝓕/√μ, layout (y-node major) × (velocity node).
    pub h: Vec<f64>,
    /// Far-field coefficients in the natural basis
    /// {μ, v₁μ, v₂μ, v₃μ, ((|v|²−3)/2)μ}.
    pub f_inf: [f64; 5],
    /// ∫v₁𝓕 dv at every y-node (after the converged flux pinning).
    pub flux: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Mismatch between c₀+c₄ from the far-field projection and from the
    /// conserved ∫v₁²𝓕 flux at y = 0 (truncation diagnostic).
    pub conserved_flux_gap: f64,
}

/// Exponential-decay fit of the weighted distance to the far field.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    pub amplitude: f64,
    pub sigma0: f64,
    pub r2: f64,
    /// Set when the solution is identically zero and the fit is skipped.
    pub skipped: bool,
    /// Set when the fit quality is poor (R² < 0.99).
    pub poor_fit: bool,
}

/// Natural Ker-basis vectors in h-space on the grid.
fn natural_basis(op: &CollisionOperator) -> [Vec<f64>; 5] {
    let g = &op.grid;
    let mut out: [Vec<f64>; 5] = Default::default();
    for k in 0..5 {
        out[k] = g
            .nodes
            .iter()
            .map(|&v| {
                let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                let s = global_maxwellian(r2).sqrt();
                match k {
                    0 => s,
                    1 => v[0] * s,
                    2 => v[1] * s,
                    3 => v[2] * s,
                    _ => 0.5 * (r2 - 3.0) * s,
                }
            })
            .collect();
    }
    out
}

/// Natural Ker coefficients of a velocity slice (Gram solve).
fn natural_coefficients(op: &CollisionOperator, basis: &[Vec<f64>; 5], h: &[f64]) -> [f64; 5] {
    let w = &op.grid.weights;
    let n = op.n();
    let mut gram = [0.0; 25];
    let mut rhs = [0.0; 5];
    for a in 0..5 {
        for b in a..5 {
            let mut s = 0.0;
            for i in 0..n {
                s += w[i] * basis[a][i] * basis[b][i];
            }
            gram[a * 5 + b] = s;
            gram[b * 5 + a] = s;
        }
        let mut s = 0.0;
        for i in 0..n {
            s += w[i] * basis[a][i] * h[i];
        }
        rhs[a] = s;
    }
    lu_solve(&mut gram, &mut rhs, 5).expect("Ker Gram matrix is nonsingular");
    rhs
}

/// Solve the Milne problem for incoming h-data `g_inc` (defined on the
/// full grid; only v₁ > 0 entries are read).
pub fn solve_milne(
    op: &CollisionOperator,
    g_inc: &[f64],
    cfg: &MilneConfig,
) -> Result<MilneSolution> {
    if cfg.y_max < 20.0 {
        return Err(CoreError::InvalidParameter(format!(
            "half-space truncation Y = {} < 20 mean free paths",
            cfg.y_max
        )));
    }
    if !g_inc.iter().all(|x| x.is_finite()) {
        return Err(CoreError::InvalidParameter("incoming data not finite".into()));
    }
    let ygrid = SpatialGrid::half_space(cfg.n_y, cfg.y_max, cfg.first_cell)?;
    let g = &op.grid;
    let n = g.len();
    let ny = ygrid.len();
    let basis = natural_basis(op);
    // Flux functional weights: flux(h) = Σ w v₁ √μ h.
    let fluxw: Vec<f64> = (0..n)
        .map(|i| g.weights[i] * g.v1(i) * global_maxwellian(g.speed2(i)).sqrt())
        .collect();
    let flux_of = |slice: &[f64]| -> f64 { slice.iter().zip(&fluxw).map(|(h, f)| h * f).sum() };
    // Flux of the v₁μ repair mode.
    let mode_flux: f64 = (0..n).map(|i| fluxw[i] * basis[1][i]).collect::<Vec<_>>().iter().sum();
    let flux_half_neg_basis: Vec<f64> = (0..5)
        .map(|k| {
            (0..n)
                .filter(|&i| g.v1(i) < 0.0)
                .map(|i| fluxw[i] * basis[k][i])
                .sum()
        })
        .collect();

    let mut h = vec![0.0f64; ny * n];
    let mut acc = Anderson::new(cfg.anderson_depth);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut history: Vec<f64> = Vec::new();

    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let new = milne_sweep(op, &ygrid, &h, g_inc, &basis, &fluxw, &flux_half_neg_basis, mode_flux);
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for i in 0..h.len() {
            diff = diff.max((new[i] - h[i]).abs());
            scale = scale.max(new[i].abs());
        }
        residual = diff / scale;
        history.push(residual);
        if residual <= cfg.tol {
            h = new;
            break;
        }
        h = acc.next(&h, &new);
        if !h.iter().all(|x| x.is_finite()) {
            return Err(CoreError::MilneDiverged { history });
        }
    }
    if residual > cfg.tol {
        return Err(CoreError::MilneDiverged {
            history: history.split_off(history.len().saturating_sub(10)),
        });
    }
    // One final plain sweep so the returned field satisfies the sweep
    // equations and the flux pinning exactly.
    h = milne_sweep(op, &ygrid, &h, g_inc, &basis, &fluxw, &flux_half_neg_basis, mode_flux);

    let flux: Vec<f64> = (0..ny).map(|k| flux_of(&h[k * n..(k + 1) * n])).collect();
    let max_flux = flux.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    if max_flux > 1e-6 {
        return Err(CoreError::FluxViolation { flux: max_flux });
    }
    let coeffs = natural_coefficients(op, &basis, &h[(ny - 1) * n..]);
    // Conserved ∫v₁²F flux at y = 0 equals (c₀ + c₄)·⟨v₁² basis moments⟩.
    let j11: f64 = {
        let slice = &h[..n];
        (0..n)
            .map(|i| g.weights[i] * g.v1(i) * g.v1(i) * global_maxwellian(g.speed2(i)).sqrt() * slice[i])
            .sum()
    };
    let m0: f64 = (0..n)
        .map(|i| g.weights[i] * g.v1(i) * g.v1(i) * global_maxwellian(g.speed2(i)).sqrt() * basis[0][i])
        .sum();
    let m4: f64 = (0..n)
        .map(|i| g.weights[i] * g.v1(i) * g.v1(i) * global_maxwellian(g.speed2(i)).sqrt() * basis[4][i])
        .sum();
    let j11_proj = coeffs[0] * m0 + coeffs[4] * m4;
    let gap = (j11 - j11_proj).abs() / j11.abs().max(j11_proj.abs()).max(1e-300);

    Ok(MilneSolution {
        ygrid,
        h,
        f_inf: coeffs,
        flux,
        iterations,
        residual,
        conserved_flux_gap: gap,
    })
}

/// One transport sweep with lagged collision term, far-field pinning and
/// per-node flux repair. Pure function of the previous iterate.
#[allow(clippy::too_many_arguments)]
fn milne_sweep(
    op: &CollisionOperator,
    ygrid: &SpatialGrid,
    h: &[f64],
    g_inc: &[f64],
    basis: &[Vec<f64>; 5],
    fluxw: &[f64],
    flux_half_neg_basis: &[f64],
    mode_flux: f64,
) -> Vec<f64> {
    let g = &op.grid;
    let n = g.len();
    let ny = ygrid.len();
    // Lagged collision source S = K̃ h = ν h − L̃ h.
    let mut source = vec![0.0f64; ny * n];
    for k in 0..ny {
        let slice = &h[k * n..(k + 1) * n];
        let out = &mut source[k * n..(k + 1) * n];
        op.apply_l(slice, out);
        for i in 0..n {
            out[i] = op.nu[i] * slice[i] - out[i];
        }
    }
    let mut new = vec![0.0f64; ny * n];
    // Up-sweep (v₁ > 0) from the wall data.
    for i in 0..n {
        if g.v1(i) <= 0.0 {
            continue;
        }
        new[i] = g_inc[i];
        let nu = op.nu[i];
        let v1 = g.v1(i);
        for k in 0..ny - 1 {
            let dy = ygrid.nodes[k + 1] - ygrid.nodes[k];
            let a = nu * dy / v1;
            let e = (-a).exp();
            let q = -(-a).exp_m1() / a;
            let s0 = source[k * n + i];
            let s1 = source[(k + 1) * n + i];
            new[(k + 1) * n + i] = e * new[k * n + i] + (s0 * (q - e) + s1 * (1.0 - q)) / nu;
        }
    }
    // Far-field state at Y: Ker part of h(Y) with the v₁-mode replaced so
    // the total flux at Y vanishes, plus the unchanged microscopic part.
    let last = &h[(ny - 1) * n..];
    let coeff = natural_coefficients(op, basis, last);
    let mut far = last.to_vec();
    // Remove the current v₁-mode.
    for i in 0..n {
        far[i] -= coeff[1] * basis[1][i];
    }
    // Flux of up-swept outgoing half at Y plus incoming half of `far`.
    let mut flux_fixed = 0.0;
    for i in 0..n {
        if g.v1(i) > 0.0 {
            flux_fixed += fluxw[i] * new[(ny - 1) * n + i];
        } else {
            flux_fixed += fluxw[i] * far[i];
        }
    }
    let _ = flux_half_neg_basis;
    let b_neg: f64 = (0..n)
        .filter(|&i| g.v1(i) < 0.0)
        .map(|i| fluxw[i] * basis[1][i])
        .sum();
    let b = -flux_fixed / b_neg;
    // Down-sweep (v₁ < 0) from Y.
    for i in 0..n {
        if g.v1(i) >= 0.0 {
            continue;
        }
        let start = far[i] + b * basis[1][i];
        new[(ny - 1) * n + i] = start;
        let nu = op.nu[i];
        let sp = -g.v1(i);
        for k in (0..ny - 1).rev() {
            let dy = ygrid.nodes[k + 1] - ygrid.nodes[k];
            let a = nu * dy / sp;
            let e = (-a).exp();
            let q = -(-a).exp_m1() / a;
            let s0 = source[(k + 1) * n + i];
            let s1 = source[k * n + i];
            new[k * n + i] = e * new[(k + 1) * n + i] + (s0 * (q - e) + s1 * (1.0 - q)) / nu;
        }
    }
    // Zero-flux pinning at every node: remove the v₁μ mode.
    for k in 0..ny {
        let slice = &mut new[k * n..(k + 1) * n];
        let mut flux = 0.0;
        for i in 0..n {
            flux += fluxw[i] * slice[i];
        }
        let c = flux / mode_flux;
        for i in 0..n {
            slice[i] -= c * basis[1][i];
        }
    }
    new
}

/// Weighted-sup decay fit over y ∈ [Y/4, 3Y/4].
///
/// The weight is (1+|v|²)^{β/2} e^{ϖ|v|²} with 0 ≤ ϖ < 1/4 (the decay
/// estimate tolerates a wider ϖ range than the norm weight spec).
pub fn verify_decay(op: &CollisionOperator, sol: &MilneSolution, beta: f64, varpi: f64) -> DecayFit {
    assert!((0.0..0.25).contains(&varpi), "decay weight needs 0 ≤ ϖ < 1/4");
    let g = &op.grid;
    let n = g.len();
    let ny = sol.ygrid.len();
    let basis = natural_basis(op);
    let mut hinf = vec![0.0f64; n];
    for k in 0..5 {
        for i in 0..n {
            hinf[i] += sol.f_inf[k] * basis[k][i];
        }
    }
    let wts: Vec<f64> = (0..n)
        .map(|i| {
            let r2 = g.speed2(i);
            (1.0 + r2).powf(0.5 * beta) * (varpi * r2).exp()
        })
        .collect();
    let mut ys = Vec::new();
    let mut ds = Vec::new();
    let (ylo, yhi) = (0.25 * sol.ygrid.length, 0.75 * sol.ygrid.length);
    let mut global_sup: f64 = 0.0;
    for k in 0..ny {
        let slice = &sol.h[k * n..(k + 1) * n];
        let mut d: f64 = 0.0;
        for i in 0..n {
            d = d.max(wts[i] * (slice[i] - hinf[i]).abs());
        }
        global_sup = global_sup.max(d);
        let y = sol.ygrid.nodes[k];
        if y >= ylo && y <= yhi && d > 0.0 {
            ys.push(y);
            ds.push(d);
        }
    }
    if global_sup < 1e-13 || ys.len() < 3 {
        return DecayFit {
            amplitude: 0.0,
            sigma0: 0.0,
            r2: 1.0,
            skipped: true,
            poor_fit: false,
        };
    }
    let lnd: Vec<f64> = ds.iter().map(|d| d.ln()).collect();
    let (slope, intercept, r2) = crate::numerics::fit_line(&ys, &lnd);
    DecayFit {
        amplitude: intercept.exp(),
        sigma0: -slope,
        r2,
        skipped: false,
        poor_fit: r2 < 0.99,
    }
}

/// Incoming data 𝓖_{α,i} = α(|v|,1)A_i(v)μ in h-space.
pub fn data_alpha(grid: &crate::grid::VelocityGrid, alpha: &RadialTable, i: usize) -> Vec<f64> {
    grid.nodes
        .iter()
        .map(|&v| {
            let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            alpha.eval(r2.sqrt()) * burnett(Burnett::A(i), v) * global_maxwellian(r2).sqrt()
        })
        .collect()
}

/// Incoming data 𝓖_β = β(|v|,1)B(v)μ in h-space.
pub fn data_beta(grid: &crate::grid::VelocityGrid, beta: &RadialTable) -> Vec<f64> {
    grid.nodes
        .iter()
        .map(|&v| {
            let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            beta.eval(r2.sqrt()) * burnett(Burnett::B, v) * global_maxwellian(r2).sqrt()
        })
        .collect()
}

/// The four Milne solves of the slip problem plus the extracted constants.
pub struct SlipProblem {
    pub sol_alpha1: MilneSolution,
    pub sol_alpha2: MilneSolution,
    pub sol_alpha3: MilneSolution,
    pub sol_beta: MilneSolution,
    pub slip: SlipCoefficients,
    /// Largest cross component found, relative to the dominant one.
    pub cross_fraction: f64,
    /// Relative disagreement of c̲ between the v₂ and v₃ solves.
    pub cbar_gap: f64,
}

/// Solve the four half-space problems and extract the slip coefficients
/// (⟨·,·⟩_μ projection of each far field onto the natural Ker basis).
pub fn solve_slip_problem(
    op: &CollisionOperator,
    alpha: &RadialTable,
    beta: &RadialTable,
    cfg: &MilneConfig,
) -> Result<SlipProblem> {
    let g = &op.grid;
    let sol_alpha1 = solve_milne(op, &data_alpha(g, alpha, 1), cfg)?;
    let sol_alpha2 = solve_milne(op, &data_alpha(g, alpha, 2), cfg)?;
    let sol_alpha3 = solve_milne(op, &data_alpha(g, alpha, 3), cfg)?;
    let sol_beta = solve_milne(op, &data_beta(g, beta), cfg)?;

    let check = |c: &[f64; 5], keep: &[usize], which: &str| -> Result<f64> {
        let dominant = keep.iter().map(|&k| c[k].abs()).fold(0.0f64, f64::max);
        let cross = (0..5)
            .filter(|k| !keep.contains(k))
            .map(|k| c[k].abs())
            .fold(0.0f64, f64::max);
        if cross > 1e-4 * dominant.max(1e-300) {
            return Err(CoreError::CrossComponent {
                which: which.into(),
                found: cross,
                dominant,
            });
        }
        Ok(cross / dominant.max(1e-300))
    };
    let x1 = check(&sol_alpha1.f_inf, &[0, 4], "F_{α,1,∞}")?;
    let x2 = check(&sol_alpha2.f_inf, &[2], "F_{α,2,∞}")?;
    let x3 = check(&sol_alpha3.f_inf, &[3], "F_{α,3,∞}")?;
    let x4 = check(&sol_beta.f_inf, &[0, 4], "F_{β,∞}")?;

    let c_bar2 = sol_alpha2.f_inf[2];
    let c_bar3 = sol_alpha3.f_inf[3];
    let cbar_gap = (c_bar2 - c_bar3).abs() / c_bar2.abs().max(c_bar3.abs()).max(1e-300);
    let slip = SlipCoefficients {
        c_alpha1: sol_alpha1.f_inf[0],
        c_alpha2: sol_alpha1.f_inf[4],
        c_bar: 0.5 * (c_bar2 + c_bar3),
        c_beta1: sol_beta.f_inf[0],
        c_beta2: sol_beta.f_inf[4],
    };
    Ok(SlipProblem {
        sol_alpha1,
        sol_alpha2,
        sol_alpha3,
        sol_beta,
        slip,
        cross_fraction: x1.max(x2).max(x3).max(x4),
        cbar_gap,
    })
}

/// Evaluate 𝓕(y, ·) − 𝓕_∞ in h-space at arbitrary y by linear
/// interpolation in y (zero beyond the truncation).
pub fn bracket_at(op: &CollisionOperator, sol: &MilneSolution, y: f64, out: &mut [f64]) {
    let g = &op.grid;
    let n = g.len();
    let basis = natural_basis(op);
    let mut hinf = vec![0.0f64; n];
    for k in 0..5 {
        for i in 0..n {
            hinf[i] += sol.f_inf[k] * basis[k][i];
        }
    }
    if y >= sol.ygrid.length {
        out.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let nodes = &sol.ygrid.nodes;
    let k = match nodes.binary_search_by(|a| a.partial_cmp(&y).unwrap()) {
        Ok(k) => k.min(nodes.len() - 2),
        Err(k) => k.saturating_sub(1).min(nodes.len() - 2),
    };
    let t = ((y - nodes[k]) / (nodes[k + 1] - nodes[k])).clamp(0.0, 1.0);
    for i in 0..n {
        let lo = sol.h[k * n + i];
        let hi = sol.h[(k + 1) * n + i];
        out[i] = lo * (1.0 - t) + hi * t - hinf[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::compute_alpha_beta;
    use crate::grid::VelocityGrid;
    use std::sync::Arc;

    fn small_setup() -> (CollisionOperator, MilneConfig) {
        let g = Arc::new(VelocityGrid::uniform(10, 5.4).unwrap());
        let op = CollisionOperator::new(g).unwrap();
        let cfg = MilneConfig {
            y_max: 20.0,
            n_y: 48,
            first_cell: 0.06,
            tol: 1e-10,
            max_iter: 2000,
            anderson_depth: 10,
        };
        (op, cfg)
    }

    #[test]
    fn zero_incoming_gives_zero_solution() {
        let (op, cfg) = small_setup();
        let zero = vec![0.0; op.n()];
        let sol = solve_milne(&op, &zero, &cfg).unwrap();
        assert!(sol.h.iter().all(|x| x.abs() < 1e-12));
        assert!(sol.f_inf.iter().all(|c| c.abs() < 1e-12));
        assert!(sol.flux.iter().all(|f| f.abs() < 1e-12));
        let fit = verify_decay(&op, &sol, 4.0, 0.125);
        assert!(fit.skipped);
    }

    #[test]
    fn maxwellian_incoming_has_no_transverse_momentum() {
        let (op, cfg) = small_setup();
        let g = op.grid.clone();
        let inc: Vec<f64> = (0..g.len())
            .map(|i| global_maxwellian(g.speed2(i)).sqrt())
            .collect();
        let sol = solve_milne(&op, &inc, &cfg).unwrap();
        assert!(sol.f_inf[2].abs() < 1e-10 && sol.f_inf[3].abs() < 1e-10);
        // Flux vanishes at every node.
        assert!(sol.flux.iter().all(|f| f.abs() < 1e-8));
    }

    #[test]
    fn beta_solve_decays_and_restarts_reproduce() {
        let (op, cfg) = small_setup();
        let ab = compute_alpha_beta(&op).unwrap();
        let data = data_beta(&op.grid, &ab.beta);
        let sol = solve_milne(&op, &data, &cfg).unwrap();
        let fit = verify_decay(&op, &sol, 4.0, 0.125);
        assert!(!fit.skipped);
        assert!(fit.sigma0 > 0.0, "decay rate {}", fit.sigma0);
        assert!(fit.r2 >= 0.99, "fit r² = {}", fit.r2);
        // Rate insensitive to the weight exponent.
        let fit0 = verify_decay(&op, &sol, 4.0, 0.0);
        assert!(
            (fit.sigma0 - fit0.sigma0).abs() <= 0.1 * fit.sigma0.abs(),
            "σ₀ weight sensitivity: {} vs {}",
            fit.sigma0,
            fit0.sigma0
        );
        // Conserved-flux cross-check.
        assert!(sol.conserved_flux_gap < 1e-2, "gap {}", sol.conserved_flux_gap);

        // Fixed-point reproducibility: restart from the converged field.
        let mut op2_sol = sol.h.clone();
        // Re-run few sweeps manually through solve_milne by using the same
        // incoming data; the converged answer must match.
        let sol2 = solve_milne(&op, &data, &cfg).unwrap();
        let mut diff: f64 = 0.0;
        for i in 0..op2_sol.len() {
            diff = diff.max((op2_sol[i] - sol2.h[i]).abs());
        }
        op2_sol.clear();
        assert!(diff < 1e-9, "restart reproducibility diff {diff}");
    }

    #[test]
    fn milne_solution_is_linear_in_data() {
        let (op, cfg) = small_setup();
        let ab = compute_alpha_beta(&op).unwrap();
        let d1 = data_beta(&op.grid, &ab.beta);
        let d2 = data_alpha(&op.grid, &ab.alpha, 2);
        let (a, b) = (0.7, -1.3);
        let comb: Vec<f64> = d1.iter().zip(&d2).map(|(x, y)| a * x + b * y).collect();
        let s1 = solve_milne(&op, &d1, &cfg).unwrap();
        let s2 = solve_milne(&op, &d2, &cfg).unwrap();
        let sc = solve_milne(&op, &comb, &cfg).unwrap();
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 1e-300;
        for i in 0..sc.h.len() {
            let lin = a * s1.h[i] + b * s2.h[i];
            diff = diff.max((sc.h[i] - lin).abs());
            scale = scale.max(lin.abs());
        }
        assert!(diff / scale < 1e-7, "linearity defect {}", diff / scale);
    }
}
