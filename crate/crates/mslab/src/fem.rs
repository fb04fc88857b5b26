//! Piecewise-linear finite elements on triangle meshes: element matrices,
//! global assembly, Dirichlet elimination, and the fine reference solve.

use crate::coeff::CoefficientField;
use crate::linalg::{cg, Preconditioner, SolveReport, SparseMatrix};
use crate::mesh::{signed_area, Point, SquareMesh, TriMesh};
use crate::{MsError, Result};

/// Quadrature rule on the reference triangle in barycentric coordinates;
/// weights sum to 1 (multiply by the element area).
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    /// One-point centroid rule, exact for linears.
    pub fn centroid() -> QuadRule {
        QuadRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }

    /// Three-point edge-midpoint rule, exact for quadratics. The default for
    /// stiffness and load assembly.
    pub fn midpoint() -> QuadRule {
        QuadRule {
            points: vec![
                [0.5, 0.5, 0.0],
                [0.0, 0.5, 0.5],
                [0.5, 0.0, 0.5],
            ],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    pub fn physical_points(&self, tri: &[Point; 3]) -> Vec<Point> {
        self.points
            .iter()
            .map(|l| {
                [
                    l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
                    l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
                ]
            })
            .collect()
    }
}

/// Mean of `f` over the triangle by quadrature.
pub fn quad_average(tri: &[Point; 3], f: &dyn Fn(Point) -> f64, quad: &QuadRule) -> f64 {
    quad.physical_points(tri)
        .iter()
        .zip(&quad.weights)
        .map(|(p, w)| w * f(*p))
        .sum()
}

/// Constant gradients of the three P1 hat functions and the element area.
pub fn p1_gradients(tri: &[Point; 3]) -> ([[f64; 2]; 3], f64) {
    let area = signed_area(tri[0], tri[1], tri[2]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let a = tri[(i + 1) % 3];
        let b = tri[(i + 2) % 3];
        g[i] = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
    }
    (g, area)
}

/// P1 stiffness element matrix for a scalar coefficient with mean `a_mean`
/// over the element: `a_mean * area * (grad phi_i . grad phi_j)`.
pub fn p1_element_matrix(tri: &[Point; 3], a_mean: f64) -> [[f64; 3]; 3] {
    let (g, area) = p1_gradients(tri);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a_mean * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    m
}

/// P1 stiffness element matrix for a constant 2x2 tensor `a` over the element.
pub fn p1_element_matrix_tensor(tri: &[Point; 3], a: &[[f64; 2]; 2]) -> [[f64; 3]; 3] {
    let (g, area) = p1_gradients(tri);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let agj = [
                a[0][0] * g[j][0] + a[0][1] * g[j][1],
                a[1][0] * g[j][0] + a[1][1] * g[j][1],
            ];
            m[i][j] = area * (g[i][0] * agj[0] + g[i][1] * agj[1]);
        }
    }
    m
}

/// CSR sparsity pattern of the node-to-node graph (including self loops).
fn node_pattern(mesh: &TriMesh) -> (Vec<usize>, Vec<usize>) {
    let n = mesh.nodes.len();
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in &mesh.elements {
        for &i in t {
            for &j in t {
                nbrs[i].push(j);
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    for l in &mut nbrs {
        l.sort_unstable();
        l.dedup();
        col_idx.extend_from_slice(l);
        row_ptr.push(col_idx.len());
    }
    (row_ptr, col_idx)
}

fn scatter(m: &mut SparseMatrix, i: usize, j: usize, v: f64) {
    let range = m.row_ptr[i]..m.row_ptr[i + 1];
    let k = range.start + m.col_idx[range].binary_search(&j).expect("entry in pattern");
    m.values[k] += v;
}

/// Assemble the global stiffness matrix `sum_K int_K a grad u . grad v`,
/// approximating `a` by its quadrature mean per element. The pattern is built
/// from node adjacency directly (no triplet buffer), so large reference
/// meshes stay cheap in memory.
pub fn assemble_stiffness(mesh: &TriMesh, coeff: &CoefficientField, quad: &QuadRule) -> SparseMatrix {
    assemble_with(mesh, &|_, tri| {
        let a = quad_average(tri, &|p| coeff.eval(p), quad);
        p1_element_matrix(tri, a)
    })
}

/// Assemble the stiffness matrix of a constant 2x2 diffusion tensor
/// (homogenized problems).
pub fn tensor_stiffness(mesh: &TriMesh, a: &[[f64; 2]; 2]) -> SparseMatrix {
    assemble_with(mesh, &|_, tri| p1_element_matrix_tensor(tri, a))
}

/// Core assembly loop over a per-element local matrix.
pub fn assemble_with(
    mesh: &TriMesh,
    local: &dyn Fn(usize, &[Point; 3]) -> [[f64; 3]; 3],
) -> SparseMatrix {
    let n = mesh.nodes.len();
    let (row_ptr, col_idx) = node_pattern(mesh);
    let values = vec![0.0; col_idx.len()];
    let mut m = SparseMatrix {
        n_rows: n,
        n_cols: n,
        row_ptr,
        col_idx,
        values,
    };
    for (e, t) in mesh.elements.iter().enumerate() {
        let tri = mesh.element_vertices(e);
        let loc = local(e, &tri);
        for i in 0..3 {
            for j in 0..3 {
                scatter(&mut m, t[i], t[j], loc[i][j]);
            }
        }
    }
    m
}

/// Assemble the load vector `int f v` with the given quadrature rule.
pub fn assemble_load(mesh: &TriMesh, f: &dyn Fn(Point) -> f64, quad: &QuadRule) -> Vec<f64> {
    let mut b = vec![0.0; mesh.nodes.len()];
    for (e, t) in mesh.elements.iter().enumerate() {
        let tri = mesh.element_vertices(e);
        let area = mesh.element_area(e);
        for (l, w) in quad.points.iter().zip(&quad.weights) {
            let p = [
                l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
                l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
            ];
            let fv = f(p) * area * w;
            for i in 0..3 {
                b[t[i]] += fv * l[i];
            }
        }
    }
    b
}

/// Impose Dirichlet values by symmetric elimination in place: constrained
/// rows/columns are zeroed, diagonals set to 1, and the column contributions
/// `A_ij g_j` moved to the right-hand side. The matrix stays symmetric.
pub fn apply_dirichlet(a: &mut SparseMatrix, b: &mut [f64], constrained: &[bool], values: &[f64]) {
    let n = a.n_rows;
    debug_assert_eq!(constrained.len(), n);
    debug_assert_eq!(values.len(), n);
    for i in 0..n {
        if constrained[i] {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                a.values[k] = if a.col_idx[k] == i { 1.0 } else { 0.0 };
            }
            b[i] = values[i];
        } else {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                if constrained[j] {
                    b[i] -= a.values[k] * values[j];
                    a.values[k] = 0.0;
                }
            }
        }
    }
}

/// A nodal P1 field on a uniform square mesh.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub grid: SquareMesh,
    pub values: Vec<f64>,
    pub report: SolveReport,
}

impl FieldSolution {
    /// Value at a fine lattice node.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.node_index(i, j)]
    }
}

/// Solve `-div(a grad u) = f` on the unit square with homogeneous Dirichlet
/// data on an `n_h x n_h` uniform mesh; Jacobi-preconditioned CG.
pub fn solve_reference(
    n_h: usize,
    coeff: &CoefficientField,
    f: &dyn Fn(Point) -> f64,
    rtol: f64,
) -> Result<FieldSolution> {
    let grid = SquareMesh::new(n_h);
    let quad = QuadRule::midpoint();
    let mut a = assemble_stiffness(&grid.mesh, coeff, &quad);
    let mut b = assemble_load(&grid.mesh, f, &quad);
    let zeros = vec![0.0; b.len()];
    apply_dirichlet(&mut a, &mut b, &grid.boundary_node, &zeros);
    let maxit = 100_000;
    let (values, report) = cg(&a, &b, rtol, maxit, Preconditioner::Jacobi);
    if !report.converged {
        return Err(MsError::NonConverged {
            context: format!("reference solve on {n_h}x{n_h} mesh"),
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok(FieldSolution { grid, values, report })
}

/// `u(0.5, 0.5)` of `-lap u = 1` on the unit square by the classical double
/// sine series, truncated at `max_index` (odd terms only).
pub fn laplace_unit_square_series(p: Point, max_index: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let mut s = 0.0;
    let mut m = 1;
    while m <= max_index {
        let mut n = 1;
        while n <= max_index {
            let (mf, nf) = (m as f64, n as f64);
            s += (mf * pi * p[0]).sin() * (nf * pi * p[1]).sin()
                / (mf * nf * (mf * mf + nf * nf));
            n += 2;
        }
        m += 2;
    }
    16.0 / pi.powi(4) * s
}
