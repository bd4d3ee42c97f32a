//! Linear solves for implicit diffusion steps on Neumann grids.
//!
//! `(I - c L) x = b` is solved directly: in 1D with the Thomas algorithm, in
//! 2D by an orthonormal cosine transform along x (which diagonalises the
//! cell-centred Neumann stencil) followed by one tridiagonal solve in y per
//! x-mode. Variable-coefficient systems `(diag(w) - dt L) x = b` are SPD and
//! go through preconditioned conjugate gradients, preconditioned by the
//! constant-coefficient direct solve.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, Grid};

#[derive(Debug, Clone)]
pub struct NeumannSolver {
    grid: Grid,
    /// Row `k` holds cosine mode `k` sampled at the x cell centres (2D only).
    basis: Vec<f64>,
    /// Eigenvalues of the 1D x stencil, `-L_x e_k = lambda_x[k] e_k`.
    lambda_x: Vec<f64>,
}

/// Eigenvalue of the negative cell-centred Neumann second difference for mode `k`.
pub fn neumann_eigenvalue(k: usize, n: usize, h: f64) -> f64 {
    let s = (PI * k as f64 / (2.0 * n as f64)).sin();
    4.0 * s * s / (h * h)
}

impl NeumannSolver {
    pub fn new(grid: Grid) -> Self {
        let nx = grid.cells()[0];
        let hx = grid.spacing(0);
        let lambda_x = (0..nx).map(|k| neumann_eigenvalue(k, nx, hx)).collect();
        let basis = if grid.dims() == 2 {
            let mut b = vec![0.0; nx * nx];
            for k in 0..nx {
                let s = if k == 0 {
                    (1.0 / nx as f64).sqrt()
                } else {
                    (2.0 / nx as f64).sqrt()
                };
                for i in 0..nx {
                    b[k * nx + i] = s * (PI * k as f64 * (i as f64 + 0.5) / nx as f64).cos();
                }
            }
            b
        } else {
            Vec::new()
        };
        NeumannSolver {
            grid,
            basis,
            lambda_x,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solves `(I - c L) x = b` for `c >= 0`.
    pub fn solve_shifted(&self, c: f64, b: &[f64], x: &mut [f64]) {
        debug_assert!(c >= 0.0);
        let [nx, ny] = self.grid.cells();
        if c == 0.0 {
            x.copy_from_slice(b);
            return;
        }
        if self.grid.dims() == 1 {
            let e = c / (self.grid.spacing(0) * self.grid.spacing(0));
            x.copy_from_slice(b);
            let mut scratch = vec![0.0; nx];
            thomas_neumann(1.0, e, x, &mut scratch);
            return;
        }

        // hat[k * ny + j] = sum_i basis[k][i] * b[j][i]
        let mut hat = vec![0.0; nx * ny];
        for j in 0..ny {
            let row = &b[j * nx..(j + 1) * nx];
            for k in 0..nx {
                let bk = &self.basis[k * nx..(k + 1) * nx];
                hat[k * ny + j] = bk.iter().zip(row).map(|(p, q)| p * q).sum();
            }
        }
        let e = c / (self.grid.spacing(1) * self.grid.spacing(1));
        let mut scratch = vec![0.0; ny];
        for k in 0..nx {
            let line = &mut hat[k * ny..(k + 1) * ny];
            thomas_neumann(1.0 + c * self.lambda_x[k], e, line, &mut scratch);
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..ny {
            let out = &mut x[j * nx..(j + 1) * nx];
            for k in 0..nx {
                let coef = hat[k * ny + j];
                let bk = &self.basis[k * nx..(k + 1) * nx];
                for (o, p) in out.iter_mut().zip(bk) {
                    *o += coef * p;
                }
            }
        }
    }

    /// Solves `(diag(w) - dt L) x = b` by preconditioned CG. `w` must be
    /// strictly positive; `x` holds the initial guess on entry. Returns the
    /// iteration count.
    pub fn solve_weighted(
        &self,
        w: &[f64],
        dt: f64,
        b: &[f64],
        x: &mut [f64],
        rel_tol: f64,
    ) -> Result<usize> {
        let n = b.len();
        let (wmin, wmax) = w
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(wmin > 0.0 && wmax.is_finite()) {
            return Err(Error::Numerical("CG weights must be positive and finite".into()));
        }
        let wbar = (wmin * wmax).sqrt();
        let precond = |r: &[f64], z: &mut [f64]| {
            self.solve_shifted(dt / wbar, r, z);
            z.iter_mut().for_each(|v| *v /= wbar);
        };
        let apply = |v: &[f64], out: &mut [f64]| {
            apply_laplacian(&self.grid, v, out);
            for i in 0..n {
                out[i] = w[i] * v[i] - dt * out[i];
            }
        };

        let bnorm = dot(b, b).sqrt();
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(0);
        }
        let mut r = vec![0.0; n];
        apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let mut z = vec![0.0; n];
        precond(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let max_iter = 500;
        for it in 0..max_iter {
            if dot(&r, &r).sqrt() <= rel_tol * bnorm {
                return Ok(it);
            }
            apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        let res = dot(&r, &r).sqrt() / bnorm;
        if res <= rel_tol {
            Ok(max_iter)
        } else {
            Err(Error::NonConvergence {
                iterations: max_iter,
                residual: res,
            })
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place Thomas solve of the Neumann tridiagonal system with diagonal
/// `s + 2e` (`s + e` at both ends) and off-diagonals `-e`.
fn thomas_neumann(s: f64, e: f64, rhs: &mut [f64], cprime: &mut [f64]) {
    let n = rhs.len();
    if n == 1 || e == 0.0 {
        rhs.iter_mut().for_each(|v| *v /= s);
        return;
    }
    let diag = |j: usize| if j == 0 || j == n - 1 { s + e } else { s + 2.0 * e };
    let mut denom = diag(0);
    cprime[0] = -e / denom;
    rhs[0] /= denom;
    for j in 1..n {
        denom = diag(j) + e * cprime[j - 1];
        cprime[j] = -e / denom;
        rhs[j] = (rhs[j] + e * rhs[j - 1]) / denom;
    }
    for j in (0..n - 1).rev() {
        rhs[j] -= cprime[j] * rhs[j + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual_shifted(g: &Grid, c: f64, x: &[f64], b: &[f64]) -> f64 {
        let mut lx = vec![0.0; x.len()];
        apply_laplacian(g, x, &mut lx);
        x.iter()
            .zip(&lx)
            .zip(b)
            .map(|((xi, li), bi)| (xi - c * li - bi).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn direct_solve_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in [
            Grid::new_1d(2.0, 37).unwrap(),
            Grid::new_2d([1.0, 0.5], [16, 9]).unwrap(),
            Grid::new_2d([3.0, 3.0], [64, 64]).unwrap(),
        ] {
            let solver = NeumannSolver::new(g);
            let b: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for c in [1e-4, 0.1, 10.0] {
                let mut x = vec![0.0; g.len()];
                solver.solve_shifted(c, &b, &mut x);
                let res = residual_shifted(&g, c, &x, &b);
                assert!(res < 1e-10, "residual {res} for c = {c}");
                let sb: f64 = b.iter().sum();
                let sx: f64 = x.iter().sum();
                assert!((sb - sx).abs() < 1e-11 * (1.0 + sb.abs()));
            }
        }
    }

    #[test]
    fn cosine_modes_are_eigenvectors() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        let k = 3;
        let v: Vec<f64> = (0..16)
            .map(|i| (PI * k as f64 * (i as f64 + 0.5) / 16.0).cos())
            .collect();
        let mut lv = vec![0.0; 16];
        apply_laplacian(&g, &v, &mut lv);
        let lam = neumann_eigenvalue(k, 16, g.spacing(0));
        for i in 0..16 {
            assert!((lv[i] + lam * v[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn weighted_cg_matches_direct_for_constant_weight() {
        let g = Grid::new_2d([1.0, 1.0], [20, 12]).unwrap();
        let solver = NeumannSolver::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = vec![0.5; g.len()];
        let mut x = vec![0.0; g.len()];
        let its = solver.solve_weighted(&w, 0.01, &b, &mut x, 1e-14).unwrap();
        assert!(its <= 2);
        let mut y = vec![0.0; g.len()];
        solver.solve_shifted(0.02, &b, &mut y);
        for i in 0..g.len() {
            assert!((x[i] - 2.0 * y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_cg_variable_weight() {
        let g = Grid::new_2d([1.0, 1.0], [32, 32]).unwrap();
        let solver = NeumannSolver::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..g.len())
            .map(|i| if (i + i / 32) % 2 == 0 { 1.0 } else { 1.0 / 3.0 })
            .collect();
        let mut x = vec![0.0; g.len()];
        let its = solver.solve_weighted(&w, 0.05, &b, &mut x, 1e-12).unwrap();
        assert!(its < 60, "{its} iterations");
        let mut lx = vec![0.0; g.len()];
        apply_laplacian(&g, &x, &mut lx);
        let res = (0..g.len())
            .map(|i| (w[i] * x[i] - 0.05 * lx[i] - b[i]).abs())
            .fold(0.0, f64::max);
        assert!(res < 1e-9, "{res}");
    }
}
