//! Shared numerical machinery: deterministic reductions, quadrature rules,
//! small dense solves, preconditioned CG, Anderson mixing, and line fits.
//!
//! Floating-point reductions here are fixed-shape (chunked pairwise trees),
//! so results do not depend on thread count or scheduling.

use rayon::prelude::*;

/// Chunk size for deterministic parallel reductions.
const DET_CHUNK: usize = 4096;

/// Deterministic sum: fixed chunking, serial fold per chunk, in-order merge.
pub fn det_sum(values: &[f64]) -> f64 {
    if values.len() <= DET_CHUNK {
        return values.iter().sum();
    }
    let partials: Vec<f64> = values
        .par_chunks(DET_CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect();
    partials.iter().sum()
}

/// Deterministic weighted dot Σ wᵢ aᵢ bᵢ.
pub fn det_dot3(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), a.len());
    debug_assert_eq!(w.len(), b.len());
    if w.len() <= DET_CHUNK {
        let mut s = 0.0;
        for i in 0..w.len() {
            s += w[i] * a[i] * b[i];
        }
        return s;
    }
    let partials: Vec<f64> = (0..w.len())
        .into_par_iter()
        .chunks(DET_CHUNK)
        .map(|idx| {
            let mut s = 0.0;
            for i in idx {
                s += w[i] * a[i] * b[i];
            }
            s
        })
        .collect();
    partials.iter().sum()
}

/// Deterministic dot Σ aᵢ bᵢ.
pub fn det_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= DET_CHUNK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let partials: Vec<f64> = a
        .par_chunks(DET_CHUNK)
        .zip(b.par_chunks(DET_CHUNK))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    partials.iter().sum()
}

pub fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Newton on the recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and P'_n(x) by upward recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Hermite nodes and weights for ∫ f(x) e^{-x²} dx.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut x = 0.0f64;
    for i in 0..m {
        // Initial guesses (Numerical Recipes).
        x = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => x - 1.14 * nf.powf(0.426) / x,
            2 => 1.86 * x - 0.86 * nodes[0],
            3 => 1.91 * x - 0.91 * nodes[1],
            _ => 2.0 * x - nodes[i - 2],
        };
        let mut dp = 0.0;
        for _ in 0..200 {
            // Orthonormal Hermite recurrence.
            let mut p0 = 1.0 / sqrt_pi.sqrt();
            let mut p1 = x * (2.0f64).sqrt() / sqrt_pi.sqrt();
            for k in 2..=n {
                let kf = k as f64;
                let p2 = x * (2.0 / kf).sqrt() * p1 - ((kf - 1.0) / kf).sqrt() * p0;
                p0 = p1;
                p1 = p2;
            }
            dp = (2.0 * nf).sqrt() * p0;
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-14 {
                break;
            }
        }
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        let w = 2.0 / (dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    // Ascending order.
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// In-place LU solve with partial pivoting for small dense systems.
/// `a` is row-major n×n, `b` the right-hand side; returns the determinant.
pub fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Option<f64> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        let mut max = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > max {
                max = v;
                piv = r;
            }
        }
        if max == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
            det = -det;
        }
        det *= a[col * n + col];
        let inv = 1.0 / a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] * inv;
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Some(det)
}

/// Preconditioned conjugate gradients for an SPD operator.
///
/// `apply` writes A·x into the output slice; `precond_diag` is a Jacobi
/// preconditioner (entries of a positive diagonal). Returns (solution,
/// relative residual, iterations).
pub fn cg_solve<F>(
    apply: F,
    precond_diag: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = det_dot(b, b).sqrt();
    if bnorm == 0.0 {
        return (vec![0.0; n], 0.0, 0);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(precond_diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = det_dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iters = 0;
    for it in 0..max_iter {
        iters = it + 1;
        apply(&p, &mut ap);
        let pap = det_dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rnorm = det_dot(&r, &r).sqrt();
        if rnorm <= tol * bnorm {
            return (x, rnorm / bnorm, iters);
        }
        for i in 0..n {
            z[i] = r[i] / precond_diag[i];
        }
        let rz_new = det_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = det_dot(&r, &r).sqrt();
    (x, rnorm / bnorm, iters)
}

/// Anderson mixing for fixed-point iterations x ↦ g(x).
///
/// Keeps the last `depth` residual pairs and solves the least-squares
/// mixing problem with a small Tikhonov regularization.
pub struct Anderson {
    depth: usize,
    xs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
}

impl Anderson {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            xs: Vec::new(),
            fs: Vec::new(),
        }
    }

    pub fn reset(&mut self) {
        self.xs.clear();
        self.fs.clear();
    }

    /// Given the current iterate x and its image g = g(x), propose the next iterate.
    pub fn next(&mut self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = g.iter().zip(x).map(|(gi, xi)| gi - xi).collect();
        self.xs.push(x.to_vec());
        self.fs.push(f);
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        let m = self.xs.len() - 1;
        if m == 0 {
            return g.to_vec();
        }
        // Columns: Δf_j = f_{j+1} - f_j.
        let last = m;
        let mut gram = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        let dot_df = |j: usize, k: usize| -> f64 {
            let mut s = 0.0;
            let (fj1, fj0) = (&self.fs[j + 1], &self.fs[j]);
            let (fk1, fk0) = (&self.fs[k + 1], &self.fs[k]);
            for i in 0..fj1.len() {
                s += (fj1[i] - fj0[i]) * (fk1[i] - fk0[i]);
            }
            s
        };
        let mut diag_scale = 0.0;
        for j in 0..m {
            for k in j..m {
                let v = dot_df(j, k);
                gram[j * m + k] = v;
                gram[k * m + j] = v;
            }
            diag_scale = f64::max(diag_scale, gram[j * m + j]);
            let mut s = 0.0;
            let fl = &self.fs[last];
            let (fj1, fj0) = (&self.fs[j + 1], &self.fs[j]);
            for i in 0..fl.len() {
                s += (fj1[i] - fj0[i]) * fl[i];
            }
            rhs[j] = s;
        }
        // Degenerate history (already converged): plain update.
        let fnorm2: f64 = self.fs[last].iter().map(|v| v * v).sum();
        if diag_scale <= 1e-28 * fnorm2.max(1e-300) {
            return g.to_vec();
        }
        let reg = 1e-12 * diag_scale;
        for j in 0..m {
            gram[j * m + j] += reg;
        }
        let mut theta = rhs.clone();
        if lu_solve(&mut gram, &mut theta, m).is_none() || theta.iter().any(|t| !t.is_finite()) {
            return g.to_vec();
        }
        // Mixed update: x_{new} = g(x_last) - Σ θ_j (g_{j+1} - g_j),
        // with g_j = x_j + f_j.
        let n = x.len();
        let mut out = g.to_vec();
        for j in 0..m {
            let t = theta[j];
            if t == 0.0 {
                continue;
            }
            let (xj1, xj0) = (&self.xs[j + 1], &self.xs[j]);
            let (fj1, fj0) = (&self.fs[j + 1], &self.fs[j]);
            for i in 0..n {
                out[i] -= t * ((xj1[i] + fj1[i]) - (xj0[i] + fj0[i]));
            }
        }
        out
    }
}

/// Least-squares line fit y = a·x + b; returns (a, b, r²).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}

/// Log-log slope fit; ignores non-positive values.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (x, y) in xs.iter().zip(ys) {
        if *x > 0.0 && *y > 0.0 {
            lx.push(x.ln());
            ly.push(y.ln());
        }
    }
    fit_line(&lx, &ly)
}

/// Trilinear stencil on a cell-centered uniform grid.
///
/// `origin` is the first node coordinate, `h` the spacing, `n` nodes per axis.
/// Returns up to 8 (flat index, weight) pairs; corners outside the box are
/// dropped (their weight is lost — callers that need conservation must
/// account for the dropped mass, callers that resample should clamp instead).
pub struct TrilinearStencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
    pub len: usize,
    /// Total weight dropped outside the box.
    pub dropped: f64,
}

pub fn trilinear_stencil(p: [f64; 3], origin: f64, h: f64, n: usize, clamp: bool) -> TrilinearStencil {
    let mut base = [0isize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let t = (p[a] - origin) / h;
        let b = t.floor();
        base[a] = b as isize;
        frac[a] = t - b;
    }
    let mut st = TrilinearStencil {
        idx: [0; 8],
        w: [0.0; 8],
        len: 0,
        dropped: 0.0,
    };
    for corner in 0..8usize {
        let mut w = 1.0;
        let mut ijk = [0usize; 3];
        let mut inside = true;
        for a in 0..3 {
            let bit = (corner >> a) & 1;
            let f = if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            w *= f;
            let mut ia = base[a] + bit as isize;
            if ia < 0 || ia >= n as isize {
                if clamp {
                    ia = ia.clamp(0, n as isize - 1);
                } else {
                    inside = false;
                }
            }
            ijk[a] = ia.max(0).min(n as isize - 1) as usize;
        }
        if w == 0.0 {
            continue;
        }
        if inside {
            st.idx[st.len] = (ijk[0] * n + ijk[1]) * n + ijk[2];
            st.w[st.len] = w;
            st.len += 1;
        } else {
            st.dropped += w;
        }
    }
    st
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        // ∫_{-1}^{1} x^k dx for k = 0..15 exactly.
        for k in 0..16usize {
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert_relative_eq!(q, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi * xi).sum();
        assert_relative_eq!(m0, sqrt_pi, epsilon = 1e-12);
        assert_relative_eq!(m2, sqrt_pi / 2.0, epsilon = 1e-11);
    }

    #[test]
    fn lu_solves_small_system() {
        let mut a = vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let mut b = vec![1.0, 2.0, 3.0];
        let det = lu_solve(&mut a, &mut b, 3).unwrap();
        // Verify against the original system.
        let a0 = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let rhs = [1.0, 2.0, 3.0];
        for r in 0..3 {
            let s: f64 = (0..3).map(|c| a0[r][c] * b[c]).sum();
            assert_relative_eq!(s, rhs[r], epsilon = 1e-12);
        }
        assert!(det > 0.0);
    }

    #[test]
    fn cg_solves_diagonally_dominant_system() {
        let n = 50;
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let mut s = 4.0 * x[i];
                if i > 0 {
                    s -= x[i - 1];
                }
                if i + 1 < n {
                    s -= x[i + 1];
                }
                out[i] = s;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let d = vec![4.0; n];
        let (x, res, _) = cg_solve(apply, &d, &b, 1e-12, 500);
        assert!(res < 1e-12);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        for i in 0..n {
            assert_relative_eq!(ax[i], b[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn anderson_accelerates_affine_map() {
        // x ↦ A x + c with spectral radius ~0.95: plain iteration is slow.
        let g = |x: &[f64]| -> Vec<f64> {
            vec![0.95 * x[0] + 0.02 * x[1] + 1.0, 0.9 * x[1] - 0.03 * x[0] + 0.5]
        };
        let mut acc = Anderson::new(5);
        let mut x = vec![0.0, 0.0];
        for _ in 0..25 {
            let gx = g(&x);
            x = acc.next(&x, &gx);
        }
        let gx = g(&x);
        assert!((gx[0] - x[0]).abs() < 1e-8 && (gx[1] - x[1]).abs() < 1e-8);
    }

    #[test]
    fn loglog_slope_recovers_power() {
        let xs = [0.1f64, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.25)).collect();
        let (s, _, r2) = fit_loglog(&xs, &ys);
        assert_relative_eq!(s, 1.25, epsilon = 1e-10);
        assert!(r2 > 0.999999);
    }

    #[test]
    fn trilinear_partition_of_unity_inside() {
        let st = trilinear_stencil([0.2, -0.4, 1.1], -5.625, 0.75, 16, false);
        let total: f64 = st.w[..st.len].iter().sum();
        assert_relative_eq!(total + st.dropped, 1.0, epsilon = 1e-14);
        assert_eq!(st.dropped, 0.0);
    }
}
