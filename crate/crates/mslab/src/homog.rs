//! Periodic homogenization: cell problems on the unit cell, the effective
//! tensor, the homogenized solve, and the first-order corrector expansion.
//! Serves as an independent validation oracle for the multiscale solvers on
//! periodic coefficients.

use crate::fem::{self, FieldSolution, QuadRule};
use crate::linalg::{cg, Preconditioner, SparseMatrix};
use crate::mesh::{Point, SquareMesh};
use crate::{MsError, Result};

/// Uniform triangulation of the unit cell with opposite-edge DOF
/// identification: DOF of lattice node (i,j) is `(j mod n)*n + (i mod n)`.
/// Element geometry keeps the unwrapped coordinates.
#[derive(Debug, Clone)]
pub struct PeriodicCellMesh {
    pub n: usize,
    /// wrapped DOF indices per element
    pub elements: Vec<[usize; 3]>,
    /// unwrapped vertex coordinates per element
    pub geometry: Vec<[Point; 3]>,
}

impl PeriodicCellMesh {
    pub fn new(n: usize) -> Self {
        let nf = n as f64;
        let dof = |i: usize, j: usize| (j % n) * n + (i % n);
        let pt = |i: usize, j: usize| [i as f64 / nf, j as f64 / nf];
        let mut elements = Vec::with_capacity(2 * n * n);
        let mut geometry = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                elements.push([dof(i, j), dof(i + 1, j), dof(i + 1, j + 1)]);
                geometry.push([pt(i, j), pt(i + 1, j), pt(i + 1, j + 1)]);
                elements.push([dof(i, j), dof(i + 1, j + 1), dof(i, j + 1)]);
                geometry.push([pt(i, j), pt(i + 1, j + 1), pt(i, j + 1)]);
            }
        }
        PeriodicCellMesh { n, elements, geometry }
    }

    pub fn n_dofs(&self) -> usize {
        self.n * self.n
    }

    /// Periodic P1 interpolation of a DOF vector at any point of the plane.
    pub fn eval_periodic(&self, values: &[f64], p: Point) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let wrap = |x: f64| x - x.floor();
        let (x, y) = (wrap(p[0]) * nf, wrap(p[1]) * nf);
        let i = (x.floor() as usize).min(n - 1);
        let j = (y.floor() as usize).min(n - 1);
        let (fx, fy) = (x - i as f64, y - j as f64);
        let dof = |a: usize, b: usize| values[(b % n) * n + (a % n)];
        if fx >= fy {
            // lower triangle (ll, lr, ur)
            (1.0 - fx) * dof(i, j) + (fx - fy) * dof(i + 1, j) + fy * dof(i + 1, j + 1)
        } else {
            (1.0 - fy) * dof(i, j) + fx * dof(i + 1, j + 1) + (fy - fx) * dof(i, j + 1)
        }
    }
}

/// The two cell-problem solutions, zero-mean, on a periodic cell mesh.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub mesh: PeriodicCellMesh,
    pub chi: [Vec<f64>; 2],
}

impl CellSolution {
    pub fn eval_chi(&self, j: usize, y: Point) -> f64 {
        self.mesh.eval_periodic(&self.chi[j], y)
    }

    /// Quadrature mean of chi^j over the cell.
    pub fn mean_chi(&self, j: usize) -> f64 {
        cell_mean(&self.mesh, &self.chi[j])
    }
}

fn cell_mean(mesh: &PeriodicCellMesh, values: &[f64]) -> f64 {
    let area = 0.5 / (mesh.n * mesh.n) as f64;
    let mut s = 0.0;
    for t in &mesh.elements {
        s += area / 3.0 * (values[t[0]] + values[t[1]] + values[t[2]]);
    }
    s
}

/// Solve the two periodic cell problems
/// `-div_y(a grad chi^j) = div_y(a e_j)` for the coefficient `a(y)` on the
/// unit cell, by DOF identification, one pinned node, and mean removal.
pub fn solve_cell(a: &dyn Fn(Point) -> f64, resolution: usize) -> Result<CellSolution> {
    if resolution < 16 {
        return Err(MsError::Mesh(format!(
            "cell resolution must be at least 16, got {resolution}"
        )));
    }
    let mesh = PeriodicCellMesh::new(resolution);
    let nd = mesh.n_dofs();
    // centroid sampling: over the full periodic cell the triangle centroids
    // form a uniform lattice, so the aggregate quadrature converges
    // spectrally for smooth periodic profiles, whereas in-element averaging
    // biases each element value by O(h^2)
    let quad = QuadRule::centroid();
    // wrap sampling into the unit cell so the caller's profile only needs to
    // be defined there
    let aw = |p: Point| a([p[0] - p[0].floor(), p[1] - p[1].floor()]);
    let mut triplets = Vec::with_capacity(9 * mesh.elements.len());
    let mut rhs = [vec![0.0; nd], vec![0.0; nd]];
    for (t, tri) in mesh.elements.iter().zip(&mesh.geometry) {
        let a_mean = fem::quad_average(tri, &aw, &quad);
        let (g, area) = fem::p1_gradients(tri);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((t[i], t[j], a_mean * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
            }
            // weak form of div(a e_j): -int a e_j . grad phi_i
            for dir in 0..2 {
                rhs[dir][t[i]] -= a_mean * area * g[i][dir];
            }
        }
    }
    let mut mat = SparseMatrix::from_triplets(nd, nd, &triplets)?;
    // pin DOF 0 to lift the constant kernel, then shift the mean out
    let mut pinned = vec![false; nd];
    pinned[0] = true;
    let zeros = vec![0.0; nd];
    let mut rhs0 = rhs[0].clone();
    let mut rhs1 = rhs[1].clone();
    fem::apply_dirichlet(&mut mat, &mut rhs0, &pinned, &zeros);
    // the same elimination applies to both right-hand sides
    rhs1[0] = 0.0;
    let mut chi = [Vec::new(), Vec::new()];
    for (dir, b) in [rhs0, rhs1].into_iter().enumerate() {
        let (mut x, rep) = cg(&mat, &b, 1e-11, 100_000, Preconditioner::Jacobi);
        if !rep.converged {
            return Err(MsError::NonConverged {
                context: format!("cell problem chi^{}", dir + 1),
                iterations: rep.iterations,
                residual: rep.residual,
            });
        }
        let mean = cell_mean(&mesh, &x);
        for v in x.iter_mut() {
            *v -= mean;
        }
        chi[dir] = x;
    }
    Ok(CellSolution { mesh, chi })
}

/// Symmetric effective tensor with the largest asymmetry found before
/// symmetrization.
#[derive(Debug, Clone, Copy)]
pub struct EffectiveTensor {
    pub a: [[f64; 2]; 2],
    pub asymmetry: f64,
}

/// Effective tensor `a*_ij = int_Y a(y) (delta_ij + d chi^j / d y_i) dy`.
pub fn effective_tensor(a: &dyn Fn(Point) -> f64, cell: &CellSolution) -> EffectiveTensor {
    // same centroid sampling as the cell solve, so the tensor integrand uses
    // the coefficient values the discrete solution was computed with
    let quad = QuadRule::centroid();
    let aw = |p: Point| a([p[0] - p[0].floor(), p[1] - p[1].floor()]);
    let mut astar = [[0.0; 2]; 2];
    for (t, tri) in cell.mesh.elements.iter().zip(&cell.mesh.geometry) {
        let a_mean = fem::quad_average(tri, &aw, &quad);
        let (g, area) = fem::p1_gradients(tri);
        for j in 0..2 {
            let mut gchi = [0.0; 2];
            for k in 0..3 {
                gchi[0] += cell.chi[j][t[k]] * g[k][0];
                gchi[1] += cell.chi[j][t[k]] * g[k][1];
            }
            for i in 0..2 {
                let delta = if i == j { 1.0 } else { 0.0 };
                astar[i][j] += a_mean * area * (delta + gchi[i]);
            }
        }
    }
    let asym = (astar[0][1] - astar[1][0]).abs();
    let off = 0.5 * (astar[0][1] + astar[1][0]);
    EffectiveTensor {
        a: [[astar[0][0], off], [off, astar[1][1]]],
        asymmetry: asym,
    }
}

/// Solve the constant-tensor problem `-div(a* grad u0) = f` with zero
/// Dirichlet data on an `n x n` uniform mesh.
pub fn homogenized_solve(
    astar: &EffectiveTensor,
    f: &dyn Fn(Point) -> f64,
    n: usize,
    rtol: f64,
) -> Result<FieldSolution> {
    let grid = SquareMesh::new(n);
    let mut a = fem::tensor_stiffness(&grid.mesh, &astar.a);
    let mut b = fem::assemble_load(&grid.mesh, f, &QuadRule::midpoint());
    let zeros = vec![0.0; b.len()];
    fem::apply_dirichlet(&mut a, &mut b, &grid.boundary_node, &zeros);
    let (values, report) = cg(&a, &b, rtol, 100_000, Preconditioner::Jacobi);
    if !report.converged {
        return Err(MsError::NonConverged {
            context: format!("homogenized solve on {n}x{n} mesh"),
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok(FieldSolution { grid, values, report })
}

/// Nodal gradient recovery by area-weighted averaging of element gradients.
pub fn recover_nodal_gradients(sol: &FieldSolution) -> Vec<[f64; 2]> {
    let mesh = &sol.grid.mesh;
    let mut grad = vec![[0.0; 2]; mesh.nodes.len()];
    let mut weight = vec![0.0; mesh.nodes.len()];
    for (e, t) in mesh.elements.iter().enumerate() {
        let tri = mesh.element_vertices(e);
        let (g, area) = fem::p1_gradients(&tri);
        let mut ge = [0.0; 2];
        for k in 0..3 {
            ge[0] += sol.values[t[k]] * g[k][0];
            ge[1] += sol.values[t[k]] * g[k][1];
        }
        for &v in t {
            grad[v][0] += area * ge[0];
            grad[v][1] += area * ge[1];
            weight[v] += area;
        }
    }
    for (gv, w) in grad.iter_mut().zip(&weight) {
        gv[0] /= w;
        gv[1] /= w;
    }
    grad
}

/// First-order expansion `u1(x) = u0(x) + eps chi^j(x/eps) d u0/d x_j`,
/// evaluated at the nodes of `u0`'s mesh with recovered nodal gradients.
pub fn first_order_expansion(u0: &FieldSolution, cell: &CellSolution, eps: f64) -> Vec<f64> {
    let grads = recover_nodal_gradients(u0);
    u0.grid
        .mesh
        .nodes
        .iter()
        .zip(&grads)
        .zip(&u0.values)
        .map(|((p, g), &v)| {
            let y = [p[0] / eps, p[1] / eps];
            v + eps * (cell.eval_chi(0, y) * g[0] + cell.eval_chi(1, y) * g[1])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientField;

    /// The oscillatory benchmark profile on the unit cell (epsilon = 1).
    fn paper_cell_profile() -> impl Fn(Point) -> f64 {
        let f = CoefficientField::PeriodicOscillatory { epsilon: 1.0 };
        move |p| f.eval(p)
    }

    #[test]
    fn constant_coefficient_chi_zero_tensor_identity() {
        let cell = solve_cell(&|_| 3.0, 32).unwrap();
        for j in 0..2 {
            for &v in &cell.chi[j] {
                assert!(v.abs() < 1e-12);
            }
        }
        let t = effective_tensor(&|_| 3.0, &cell);
        assert!((t.a[0][0] - 3.0).abs() < 1e-12);
        assert!((t.a[1][1] - 3.0).abs() < 1e-12);
        assert!(t.a[0][1].abs() < 1e-12);
        assert!(t.asymmetry < 1e-12);
    }

    #[test]
    fn chi_zero_mean_and_periodic_by_construction() {
        let a = paper_cell_profile();
        let cell = solve_cell(&a, 64).unwrap();
        for j in 0..2 {
            assert!(cell.mean_chi(j).abs() < 1e-10);
            // shared DOFs make opposite traces equal exactly
            for k in 0..64 {
                let left = cell.eval_chi(j, [0.0, k as f64 / 64.0]);
                let right = cell.eval_chi(j, [1.0, k as f64 / 64.0]);
                assert_eq!(left, right);
            }
        }
    }

    #[test]
    fn layered_profile_harmonic_and_arithmetic_means() {
        // a(y) = 2 + 1.8 sin(2 pi y1): a*_11 = harmonic mean = sqrt(2^2-1.8^2),
        // a*_22 = arithmetic mean = 2, chi^2 = 0
        let a = |p: Point| 2.0 + 1.8 * (2.0 * std::f64::consts::PI * p[0]).sin();
        let cell = solve_cell(&a, 256).unwrap();
        for &v in &cell.chi[1] {
            assert!(v.abs() < 1e-8, "chi^2 should vanish, got {v:.3e}");
        }
        // chi^1 depends on y1 only
        for i in 0..256 {
            let base = cell.chi[0][i];
            for j in 1..256 {
                assert!((cell.chi[0][j * 256 + i] - base).abs() < 1e-8);
            }
        }
        let t = effective_tensor(&a, &cell);
        let harmonic = (4.0f64 - 1.8 * 1.8).sqrt();
        assert!((t.a[0][0] - harmonic).abs() < 1e-4, "a11 {} vs {harmonic}", t.a[0][0]);
        assert!((t.a[1][1] - 2.0).abs() < 1e-4, "a22 {}", t.a[1][1]);
        assert!(t.a[0][1].abs() < 1e-6);
    }

    #[test]
    fn layered_chi_matches_1d_analytic_derivative() {
        // 1D oracle: chi' = harmonic_mean/a - 1; compare column differences
        let a = |p: Point| 2.0 + 1.8 * (2.0 * std::f64::consts::PI * p[0]).sin();
        let n = 256;
        let cell = solve_cell(&a, n).unwrap();
        let hm = (4.0f64 - 1.8 * 1.8).sqrt();
        let h = 1.0 / n as f64;
        let mut worst = 0.0f64;
        for i in 0..n {
            let d = (cell.chi[0][(i + 1) % n] - cell.chi[0][i]) / h;
            // derivative at the midpoint of the lattice interval
            let mid = (i as f64 + 0.5) * h;
            let exact = hm / a([mid, 0.0]) - 1.0;
            worst = worst.max((d - exact).abs());
        }
        assert!(worst < 1e-2, "chi' max error {worst:.3e}");
    }

    #[test]
    fn swap_symmetric_profile_relates_chis() {
        let tp = 2.0 * std::f64::consts::PI;
        let a = move |p: Point| {
            2.0 + (tp * p[0]).sin() * (tp * p[1]).sin()
                + 0.5 * (tp * p[0]).cos()
                + 0.5 * (tp * p[1]).cos()
        };
        let n = 64;
        let cell = solve_cell(&a, n).unwrap();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let v1 = cell.chi[0][j * n + i];
                let v2 = cell.chi[1][i * n + j];
                worst = worst.max((v1 - v2).abs());
            }
        }
        assert!(worst < 1e-8, "swap-symmetry violation {worst:.3e}");
    }

    #[test]
    fn voigt_reuss_bracketing() {
        let a = paper_cell_profile();
        let n = 128;
        let cell = solve_cell(&a, n).unwrap();
        let t = effective_tensor(&a, &cell);
        // quadrature means over the cell mesh
        let quad = QuadRule::midpoint();
        let mut arith = 0.0;
        let mut harm_inv = 0.0;
        for tri in &cell.mesh.geometry {
            let area = crate::mesh::signed_area(tri[0], tri[1], tri[2]);
            arith += area * fem::quad_average(tri, &a, &quad);
            harm_inv += area * fem::quad_average(tri, &|p| 1.0 / a(p), &quad);
        }
        let harm = 1.0 / harm_inv;
        // eigenvalues of the 2x2 symmetric tensor
        let tr = t.a[0][0] + t.a[1][1];
        let det = t.a[0][0] * t.a[1][1] - t.a[0][1] * t.a[0][1];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let (lo, hi) = (tr / 2.0 - disc, tr / 2.0 + disc);
        assert!(lo >= harm - 1e-8, "min eig {lo} below harmonic mean {harm}");
        assert!(hi <= arith + 1e-8, "max eig {hi} above arithmetic mean {arith}");
        assert!(lo > 0.0);
    }

    #[test]
    fn effective_tensor_resolution_convergence() {
        let a = paper_cell_profile();
        let t128 = effective_tensor(&a, &solve_cell(&a, 128).unwrap());
        let t256 = effective_tensor(&a, &solve_cell(&a, 256).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                let scale = t256.a[i][j].abs().max(1.0);
                assert!(
                    (t128.a[i][j] - t256.a[i][j]).abs() / scale < 1e-3,
                    "({i},{j}): {} vs {}",
                    t128.a[i][j],
                    t256.a[i][j]
                );
            }
        }
    }

    #[test]
    fn homogenized_identity_tensor_matches_series() {
        let t = EffectiveTensor {
            a: [[1.0, 0.0], [0.0, 1.0]],
            asymmetry: 0.0,
        };
        let sol = homogenized_solve(&t, &|_| 1.0, 128, 1e-10).unwrap();
        let exact = fem::laplace_unit_square_series([0.5, 0.5], 199);
        assert!((sol.at(64, 64) - exact).abs() < 5e-4);

        let zero = homogenized_solve(&t, &|_| 0.0, 32, 1e-10).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn anisotropic_tensor_matches_stretched_domain_oracle() {
        // -4 u_xx - u_yy = 1 on (0,1)^2; x = 2 xt maps it to -lap u = 1 on
        // (0, 1/2) x (0, 1), whose sine series is evaluated directly
        let t = EffectiveTensor {
            a: [[4.0, 0.0], [0.0, 1.0]],
            asymmetry: 0.0,
        };
        let sol = homogenized_solve(&t, &|_| 1.0, 128, 1e-12).unwrap();
        let (aa, bb) = (0.5, 1.0);
        let pi = std::f64::consts::PI;
        let series = |x: f64, y: f64| {
            let mut s = 0.0;
            let mut m = 1;
            while m <= 79 {
                let mut n = 1;
                while n <= 79 {
                    let (mf, nf) = (m as f64, n as f64);
                    s += 16.0 / (pi.powi(4) * mf * nf * (mf * mf / (aa * aa) + nf * nf / (bb * bb)))
                        * (mf * pi * x / aa).sin()
                        * (nf * pi * y / bb).sin();
                    n += 2;
                }
                m += 2;
            }
            s
        };
        let exact = series(0.25, 0.5);
        assert!(
            (sol.at(64, 64) - exact).abs() < 1e-3,
            "{} vs {exact}",
            sol.at(64, 64)
        );
    }

    #[test]
    fn expansion_constant_coefficient_is_u0() {
        let cell = solve_cell(&|_| 1.0, 32).unwrap();
        let t = effective_tensor(&|_| 1.0, &cell);
        let u0 = homogenized_solve(&t, &|_| 1.0, 64, 1e-10).unwrap();
        let u1 = first_order_expansion(&u0, &cell, 1.0 / 8.0);
        for (a, b) in u1.iter().zip(&u0.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn expansion_sup_bound() {
        let a = paper_cell_profile();
        let eps = 1.0 / 16.0;
        let cell = solve_cell(&a, 64).unwrap();
        let t = effective_tensor(&a, &cell);
        let u0 = homogenized_solve(&t, &|_| 1.0, 64, 1e-10).unwrap();
        let u1 = first_order_expansion(&u0, &cell, eps);
        let chi_inf = cell
            .chi
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let grad_inf = recover_nodal_gradients(&u0)
            .iter()
            .fold(0.0f64, |m, g| m.max(g[0].abs()).max(g[1].abs()));
        let bound = eps * 2.0 * chi_inf * grad_inf + 1e-12;
        for (v1, v0) in u1.iter().zip(&u0.values) {
            assert!((v1 - v0).abs() <= bound);
        }
    }

    #[test]
    fn corrector_improves_on_homogenized_solution() {
        // energy distance to the oscillatory fine solve: u1 must beat u0
        let eps = 1.0 / 32.0;
        let field = CoefficientField::PeriodicOscillatory { epsilon: eps };
        let n_ref = 256;
        let u_eps = fem::solve_reference(n_ref, &field, &|_| 1.0, 1e-10).unwrap();
        let a = paper_cell_profile();
        let cell = solve_cell(&a, 64).unwrap();
        let t = effective_tensor(&a, &cell);
        let u0 = homogenized_solve(&t, &|_| 1.0, n_ref, 1e-10).unwrap();
        let u1 = first_order_expansion(&u0, &cell, eps);
        let stiff = fem::assemble_stiffness(&u_eps.grid.mesh, &field, &QuadRule::midpoint());
        let energy = |other: &[f64]| {
            let e: Vec<f64> = u_eps.values.iter().zip(other).map(|(a, b)| a - b).collect();
            stiff
                .apply(&e)
                .iter()
                .zip(&e)
                .map(|(x, y)| x * y)
                .sum::<f64>()
                .sqrt()
        };
        let d0 = energy(&u0.values);
        let d1 = energy(&u1);
        assert!(d1 < d0, "corrector must help: |u-u1| = {d1:.4e}, |u-u0| = {d0:.4e}");
    }

    #[test]
    fn cell_resolution_floor_enforced() {
        assert!(solve_cell(&|_| 1.0, 8).is_err());
    }
}
