//! Velocity and spatial discretizations; all quadrature lives here.
//!
//! The default velocity grid is a cell-centered uniform tensor grid on
//! [-V, V]³ with an even point count per axis, so the node set is closed
//! under v → -v and v₁ → -v₁ and contains no node with v₁ = 0. A
//! Gauss–Hermite constructor is provided as an alternative.

use crate::error::{CoreError, Result};
use crate::numerics::{det_sum, gauss_hermite, gauss_legendre};

/// Truncated 3-D velocity grid with quadrature weights for ∫ f(v) dv.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    /// Points per axis (even).
    pub points_per_axis: usize,
    /// Truncation half-width V.
    pub v_max: f64,
    /// 1-D node coordinates, ascending.
    pub axis: Vec<f64>,
    /// 1-D quadrature weights matching `axis`.
    pub axis_w: Vec<f64>,
    /// Flattened 3-D nodes, index (i·n + j)·n + k.
    pub nodes: Vec<[f64; 3]>,
    /// Tensor-product weights per node.
    pub weights: Vec<f64>,
    /// Uniform spacing (cell-centered grids only; 0 for Gauss–Hermite).
    pub h: f64,
    /// Declared relative tolerance for Gaussian moment exactness.
    pub moment_tol: f64,
    /// Permutation implementing v → -v.
    pub reflect_all: Vec<usize>,
    /// Permutation implementing v₁ → -v₁.
    pub reflect_v1: Vec<usize>,
}

impl VelocityGrid {
    /// Cell-centered uniform tensor grid. `points_per_axis` must be even
    /// (keeps v₁ = 0 off the grid); `v_max` must be ≥ 3 so the truncated
    /// Maxwellian mass defect stays below the declared tolerance.
    pub fn uniform(points_per_axis: usize, v_max: f64) -> Result<Self> {
        if points_per_axis % 2 != 0 || points_per_axis == 0 {
            return Err(CoreError::InvalidGrid(format!(
                "points_per_axis must be even and positive, got {points_per_axis}"
            )));
        }
        if v_max < 3.0 {
            return Err(CoreError::InvalidGrid(format!(
                "v_max = {v_max} too small: truncated Maxwellian loses more mass than tolerated"
            )));
        }
        let n = points_per_axis;
        let h = 2.0 * v_max / n as f64;
        let axis: Vec<f64> = (0..n).map(|i| -v_max + (i as f64 + 0.5) * h).collect();
        let axis_w = vec![h; n];
        Ok(Self::assemble(n, v_max, axis, axis_w, h))
    }

    /// Gauss–Hermite tensor grid: nodes of the e^{-x²} rule rescaled to the
    /// unit Gaussian, weights converted to plain-dv quadrature weights.
    pub fn gauss_hermite(points_per_axis: usize) -> Result<Self> {
        if points_per_axis % 2 != 0 || points_per_axis == 0 {
            return Err(CoreError::InvalidGrid(format!(
                "points_per_axis must be even and positive, got {points_per_axis}"
            )));
        }
        let n = points_per_axis;
        let (x, w) = gauss_hermite(n);
        // v = √2 x makes e^{-x²} = e^{-v²/2}; plain weights absorb e^{+x²}.
        let axis: Vec<f64> = x.iter().map(|xi| std::f64::consts::SQRT_2 * xi).collect();
        let axis_w: Vec<f64> = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| std::f64::consts::SQRT_2 * wi * (xi * xi).exp())
            .collect();
        let v_max = axis.last().copied().unwrap_or(0.0);
        Ok(Self::assemble(n, v_max, axis, axis_w, 0.0))
    }

    fn assemble(n: usize, v_max: f64, axis: Vec<f64>, axis_w: Vec<f64>, h: f64) -> Self {
        let nv = n * n * n;
        let mut nodes = Vec::with_capacity(nv);
        let mut weights = Vec::with_capacity(nv);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    nodes.push([axis[i], axis[j], axis[k]]);
                    weights.push(axis_w[i] * axis_w[j] * axis_w[k]);
                }
            }
        }
        let flip = |i: usize| n - 1 - i;
        let mut reflect_all = vec![0usize; nv];
        let mut reflect_v1 = vec![0usize; nv];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let id = (i * n + j) * n + k;
                    reflect_all[id] = (flip(i) * n + flip(j)) * n + flip(k);
                    reflect_v1[id] = (flip(i) * n + j) * n + k;
                }
            }
        }
        Self {
            points_per_axis: n,
            v_max,
            axis,
            axis_w,
            nodes,
            weights,
            h,
            moment_tol: 1e-6,
            reflect_all,
            reflect_v1,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature ∫ f dv of nodal values.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let prods: Vec<f64> = self.weights.iter().zip(f).map(|(w, x)| w * x).collect();
        det_sum(&prods)
    }

    /// First coordinate of every node (cached pattern for flux integrals).
    pub fn v1(&self, id: usize) -> f64 {
        self.nodes[id][0]
    }

    pub fn speed2(&self, id: usize) -> f64 {
        let v = self.nodes[id];
        v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    }

    /// Relative errors of the Gaussian moments (mass, v₁-moment scaled
    /// against mass, energy, fourth moment) on this grid.
    pub fn gaussian_moment_errors(&self) -> [f64; 4] {
        let mut m0 = Vec::with_capacity(self.len());
        let mut m1 = Vec::with_capacity(self.len());
        let mut m2 = Vec::with_capacity(self.len());
        let mut m4 = Vec::with_capacity(self.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let r2 = node[0] * node[0] + node[1] * node[1] + node[2] * node[2];
            let mu = crate::maxwell::global_maxwellian(r2);
            let w = self.weights[id];
            m0.push(w * mu);
            m1.push(w * node[0] * mu);
            m2.push(w * r2 * mu);
            m4.push(w * r2 * r2 * mu);
        }
        [
            (det_sum(&m0) - 1.0).abs(),
            det_sum(&m1).abs(),
            (det_sum(&m2) - 3.0).abs() / 3.0,
            (det_sum(&m4) - 15.0).abs() / 15.0,
        ]
    }

    /// Check the stored moment tolerance and the reflection symmetries.
    pub fn validate(&self) -> Result<()> {
        let errs = self.gaussian_moment_errors();
        for (k, e) in errs.iter().enumerate() {
            if *e > self.moment_tol {
                return Err(CoreError::InvalidGrid(format!(
                    "Gaussian moment {k} off by relative {e:.3e} (tolerance {:.1e})",
                    self.moment_tol
                )));
            }
        }
        for (id, &rid) in self.reflect_all.iter().enumerate() {
            let a = self.nodes[id];
            let b = self.nodes[rid];
            if (a[0] + b[0]).abs() > 1e-14 || (a[1] + b[1]).abs() > 1e-14 || (a[2] + b[2]).abs() > 1e-14
            {
                return Err(CoreError::InvalidGrid("reflection map broken".into()));
            }
            if (self.weights[id] - self.weights[rid]).abs() > 1e-300 {
                return Err(CoreError::InvalidGrid("reflection weights differ".into()));
            }
        }
        Ok(())
    }
}

/// Monotone spatial grid on [0, L].
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    pub nodes: Vec<f64>,
    pub kind: SpatialKind,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialKind {
    Uniform,
    /// Geometric refinement toward both walls; `ratio` is the cell growth
    /// factor away from the wall, `eps` the layer width to resolve.
    WallRefined {
        ratio: f64,
        eps: f64,
    },
}

impl SpatialGrid {
    pub fn uniform(count: usize, length: f64) -> Result<Self> {
        if count < 2 {
            return Err(CoreError::InvalidGrid(format!("count = {count} < 2")));
        }
        let nodes: Vec<f64> = (0..count)
            .map(|i| length * i as f64 / (count - 1) as f64)
            .collect();
        let mut g = Self {
            nodes,
            kind: SpatialKind::Uniform,
            length,
        };
        // Endpoints exactly 0 and L.
        g.nodes[0] = 0.0;
        *g.nodes.last_mut().unwrap() = length;
        Ok(g)
    }

    /// Wall-refined grid: at least 25% of the nodes within distance `eps`
    /// of each wall, geometric spacing inside the layers.
    pub fn wall_refined(count: usize, length: f64, eps: f64, ratio: f64) -> Result<Self> {
        if count < 2 {
            return Err(CoreError::InvalidGrid(format!("count = {count} < 2")));
        }
        if !(eps > 0.0 && eps < 0.5 * length) {
            return Err(CoreError::InvalidGrid(format!("layer width eps = {eps} out of range")));
        }
        let ratio = ratio.max(1.0 + 1e-9);
        let n_cells = count - 1;
        // A quarter of the nodes inside each wall layer [0, eps] and [L-eps, L].
        let layer_nodes = (count as f64 * 0.25).ceil() as usize;
        let layer_cells = layer_nodes.max(2);
        let bulk_cells = n_cells.saturating_sub(2 * layer_cells).max(1);

        // Geometric partition of [0, eps] into layer_cells cells, finest at the wall.
        let geo: Vec<f64> = {
            let mut cum = Vec::with_capacity(layer_cells + 1);
            let mut acc = 0.0;
            cum.push(0.0);
            let mut step = 1.0;
            for _ in 0..layer_cells {
                acc += step;
                cum.push(acc);
                step *= ratio;
            }
            cum.iter().map(|c| eps * c / acc).collect()
        };

        let mut nodes = Vec::with_capacity(count);
        nodes.extend(geo.iter().copied());
        let bulk_lo = eps;
        let bulk_hi = length - eps;
        for i in 1..bulk_cells {
            nodes.push(bulk_lo + (bulk_hi - bulk_lo) * i as f64 / bulk_cells as f64);
        }
        for g in geo.iter().rev() {
            nodes.push(length - g);
        }
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let mut grid = Self {
            nodes,
            kind: SpatialKind::WallRefined { ratio, eps },
            length,
        };
        grid.nodes[0] = 0.0;
        *grid.nodes.last_mut().unwrap() = length;
        for w in grid.nodes.windows(2) {
            if w[1] <= w[0] {
                return Err(CoreError::InvalidGrid("wall-refined grid not increasing".into()));
            }
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trapezoid quadrature of nodal values over the grid.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.nodes.len() - 1 {
            s += 0.5 * (f[i] + f[i + 1]) * (self.nodes[i + 1] - self.nodes[i]);
        }
        s
    }

    /// Geometrically stretched half-space grid on [0, Y], finest at y = 0.
    pub fn half_space(count: usize, y_max: f64, first_cell: f64) -> Result<Self> {
        if count < 2 {
            return Err(CoreError::InvalidGrid(format!("count = {count} < 2")));
        }
        // Find the growth factor r with first_cell·(r^n - 1)/(r - 1) = y_max.
        let n = (count - 1) as f64;
        let target = y_max / first_cell;
        let mut lo = 1.0 + 1e-12;
        let mut hi = 2.0;
        let total = |r: f64| (r.powf(n) - 1.0) / (r - 1.0);
        while total(hi) < target {
            hi *= 1.5;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let mut nodes = Vec::with_capacity(count);
        let mut acc = 0.0;
        let mut step = first_cell;
        nodes.push(0.0);
        for _ in 0..count - 1 {
            acc += step;
            nodes.push(acc);
            step *= r;
        }
        *nodes.last_mut().unwrap() = y_max;
        Ok(Self {
            nodes,
            kind: SpatialKind::WallRefined { ratio: r, eps: first_cell },
            length: y_max,
        })
    }
}

/// Unit-sphere quadrature for the collision angular integral, built as a
/// product rule in (cosψ, φ) around a per-pair collision axis. The polar
/// rule is a Gauss–Legendre rule on [0,1] mirrored to [-1,0], so the
/// |cosψ| factor of the hard-sphere kernel is integrated exactly.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    /// cosψ nodes.
    pub cos_psi: Vec<f64>,
    /// Azimuthal angles.
    pub phi: Vec<f64>,
    /// Weight per (cosψ, φ) pair: w_polar · 2π/n_phi.
    pub weight: Vec<f64>,
    pub n_polar: usize,
    pub n_phi: usize,
}

impl SphereQuadrature {
    /// `n_polar` must be even (half the nodes per hemisphere).
    pub fn product(n_polar: usize, n_phi: usize) -> Result<Self> {
        if n_polar < 2 || n_polar % 2 != 0 || n_phi < 4 {
            return Err(CoreError::InvalidGrid(format!(
                "sphere quadrature needs even n_polar ≥ 2 and n_phi ≥ 4, got {n_polar}×{n_phi}"
            )));
        }
        let half = n_polar / 2;
        let (x, w) = gauss_legendre(half);
        // Map [-1,1] → [0,1], then mirror.
        let mut cos_psi = Vec::with_capacity(n_polar);
        let mut polar_w = Vec::with_capacity(n_polar);
        for i in 0..half {
            let c = 0.5 * (x[i] + 1.0);
            cos_psi.push(-c);
            polar_w.push(0.5 * w[i]);
        }
        for i in 0..half {
            let c = 0.5 * (x[i] + 1.0);
            cos_psi.push(c);
            polar_w.push(0.5 * w[i]);
        }
        let phi: Vec<f64> = (0..n_phi)
            .map(|j| 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n_phi as f64)
            .collect();
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let mut weight = Vec::with_capacity(n_polar * n_phi);
        for wp in &polar_w {
            for _ in 0..n_phi {
                weight.push(wp * dphi);
            }
        }
        Ok(Self {
            cos_psi,
            phi,
            weight,
            n_polar,
            n_phi,
        })
    }

    /// Total weight: should be 4π.
    pub fn total_weight(&self) -> f64 {
        self.weight.iter().sum()
    }

    /// Quadrature of |cosψ| over the sphere: should be 2π.
    pub fn abs_cos_integral(&self) -> f64 {
        let mut s = 0.0;
        let mut k = 0;
        for c in &self.cos_psi {
            for _ in 0..self.n_phi {
                s += self.weight[k] * c.abs();
                k += 1;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_grid_moments_at_default_tolerance() {
        let g = VelocityGrid::uniform(24, 6.0).unwrap();
        g.validate().unwrap();
        let errs = g.gaussian_moment_errors();
        // Mass within 1e-6 absolute, fourth moment within 1e-4 absolute.
        assert!(errs[0] < 1e-6, "mass error {}", errs[0]);
        assert!(errs[3] * 15.0 < 1e-4, "fourth moment error {}", errs[3] * 15.0);
    }

    #[test]
    fn sixteen_cubed_nodes_closed_under_reflection() {
        let g = VelocityGrid::uniform(16, 6.0).unwrap();
        assert_eq!(g.len(), 16 * 16 * 16);
        for (id, &rid) in g.reflect_all.iter().enumerate() {
            let a = g.nodes[id];
            let b = g.nodes[rid];
            for c in 0..3 {
                assert_relative_eq!(a[c], -b[c], epsilon = 1e-14);
            }
        }
        // No node on v₁ = 0.
        assert!(g.nodes.iter().all(|v| v[0].abs() > 1e-12));
    }

    #[test]
    fn odd_count_and_small_vmax_rejected() {
        assert!(VelocityGrid::uniform(15, 6.0).is_err());
        assert!(VelocityGrid::uniform(16, 2.5).is_err());
    }

    #[test]
    fn moment_errors_decrease_when_doubling() {
        // Strictly decreasing from coarse grids; plateaus at the truncation
        // floor once the lattice is fine enough, hence the tiny slack.
        let mut prev = f64::INFINITY;
        for n in [6usize, 12, 24] {
            let g = VelocityGrid::uniform(n, 6.0).unwrap();
            let worst = g
                .gaussian_moment_errors()
                .into_iter()
                .fold(0.0f64, f64::max);
            assert!(worst <= prev * (1.0 + 1e-9), "n = {n}: {worst} vs {prev}");
            prev = worst;
        }
    }

    #[test]
    fn gauss_hermite_grid_moments() {
        let g = VelocityGrid::gauss_hermite(16).unwrap();
        let errs = g.gaussian_moment_errors();
        assert!(errs[0] < 1e-10 && errs[2] < 1e-10 && errs[3] < 1e-9);
        assert!(g.nodes.iter().all(|v| v[0].abs() > 1e-12));
    }

    #[test]
    fn uniform_spatial_grid_examples() {
        let g = SpatialGrid::uniform(11, 1.0).unwrap();
        for (i, x) in g.nodes.iter().enumerate() {
            assert_relative_eq!(*x, i as f64 * 0.1, epsilon = 1e-14);
        }
        let g2 = SpatialGrid::uniform(2, 1.0).unwrap();
        assert_eq!(g2.nodes, vec![0.0, 1.0]);
        assert!(SpatialGrid::uniform(1, 1.0).is_err());
    }

    #[test]
    fn wall_refined_puts_quarter_in_layer() {
        let eps = 0.01;
        let g = SpatialGrid::wall_refined(101, 1.0, eps, 1.2).unwrap();
        let inside = g.nodes.iter().filter(|&&x| x <= eps + 1e-15).count();
        assert!(inside >= 25, "only {inside} nodes in [0, eps]");
        let inside_hi = g.nodes.iter().filter(|&&x| x >= 1.0 - eps - 1e-15).count();
        assert!(inside_hi >= 25);
        assert_eq!(g.nodes[0], 0.0);
        assert_eq!(*g.nodes.last().unwrap(), 1.0);
    }

    #[test]
    fn sphere_quadrature_invariants() {
        let q = SphereQuadrature::product(16, 32).unwrap();
        assert_relative_eq!(q.total_weight(), 4.0 * std::f64::consts::PI, epsilon = 1e-12);
        assert_relative_eq!(q.abs_cos_integral(), 2.0 * std::f64::consts::PI, epsilon = 1e-12);
    }
}
