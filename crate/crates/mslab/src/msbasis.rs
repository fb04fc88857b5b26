//! Multiscale basis functions: per coarse element, three coefficient-adapted
//! shape functions obtained from local solves, either with linear hat data on
//! the element boundary (standard) or combined from solves on a dilated
//! oversampling patch.

use crate::coeff::CoefficientField;
use crate::fem::{self, QuadRule};
use crate::linalg::{cg, dense_solve, Preconditioner};
use crate::mesh::{barycentric, refine_triangle, make_oversampling_patch, OversamplingPatch, Point, SubMesh, TriMesh};
use crate::{MsError, Result};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Standard,
    Oversampling,
}

/// The three multiscale shape functions of one coarse element, stored as
/// nodal vectors on the element's sub-mesh.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    pub kind: BasisKind,
    /// coarse element index this basis belongs to
    pub element: usize,
    pub vertices: [Point; 3],
    pub sub: SubMesh,
    /// `values[i]` are the sub-mesh nodal values of the shape function
    /// attached to coarse vertex `i`
    pub values: [Vec<f64>; 3],
    /// oversampling combination matrix; identity for the standard kind
    pub cij: [[f64; 3]; 3],
    pub patch: Option<OversamplingPatch>,
}

impl ElementBasis {
    /// Evaluate shape function `i` at a point of the element.
    pub fn eval(&self, i: usize, p: Point) -> f64 {
        self.sub.eval_p1(&self.values[i], p)
    }

    /// Constant gradient of shape function `i` on sub-element `sub_elem`.
    pub fn gradient(&self, i: usize, sub_elem: usize) -> [f64; 2] {
        let t = self.sub.mesh.elements[sub_elem];
        let tri = self.sub.mesh.element_vertices(sub_elem);
        let (g, _) = fem::p1_gradients(&tri);
        let mut out = [0.0; 2];
        for k in 0..3 {
            let v = self.values[i][t[k]];
            out[0] += v * g[k][0];
            out[1] += v * g[k][1];
        }
        out
    }

    /// Map span coefficients to the coefficients of the linear function that
    /// the projection onto P1 assigns to them. For the standard kind and for
    /// the oversampling construction this is the identity on coefficients:
    /// shape function `i` projects to the hat of coarse vertex `i`.
    pub fn project_to_linear(&self, coeffs: [f64; 3]) -> [f64; 3] {
        coeffs
    }

    /// Value of the projected linear function at `p`.
    pub fn eval_projected(&self, coeffs: [f64; 3], p: Point) -> f64 {
        let l = barycentric(&self.vertices, p);
        coeffs[0] * l[0] + coeffs[1] * l[1] + coeffs[2] * l[2]
    }
}

/// Hat-function values of the parent triangle at sub-mesh lattice node (i,j).
fn hat_values(n_sub: usize, i: usize, j: usize) -> [f64; 3] {
    let n = n_sub as f64;
    [1.0 - (i + j) as f64 / n, i as f64 / n, j as f64 / n]
}

/// Solve the local problem -div(a grad psi) = 0 on the sub-mesh with the
/// given Dirichlet data on its boundary nodes.
fn harmonic_extension(
    sub: &SubMesh,
    field: &CoefficientField,
    data: &[f64],
    context: &str,
) -> Result<Vec<f64>> {
    let quad = QuadRule::midpoint();
    let mut a = fem::assemble_stiffness(&sub.mesh, field, &quad);
    let mut b = vec![0.0; sub.mesh.nodes.len()];
    fem::apply_dirichlet(&mut a, &mut b, &sub.boundary, data);
    let (mut x, rep) = cg(&a, &b, 1e-12, 50_000, Preconditioner::Jacobi);
    if !rep.converged {
        return Err(MsError::NonConverged {
            context: context.to_string(),
            iterations: rep.iterations,
            residual: rep.residual,
        });
    }
    // boundary data is imposed, not approximated
    for (id, v) in x.iter_mut().enumerate() {
        if sub.boundary[id] {
            *v = data[id];
        }
    }
    Ok(x)
}

/// Standard multiscale basis: a-harmonic extension of the linear hats of K.
pub fn build_standard_basis(
    element: usize,
    k: [Point; 3],
    field: &CoefficientField,
    n_sub: usize,
) -> Result<ElementBasis> {
    if n_sub < 2 {
        return Err(MsError::Mesh(format!(
            "basis sub-mesh needs n_sub >= 2, got {n_sub}"
        )));
    }
    let sub = refine_triangle(k, n_sub)?;
    let n_nodes = sub.mesh.nodes.len();
    let mut values: [Vec<f64>; 3] = [vec![0.0; n_nodes], vec![0.0; n_nodes], vec![0.0; n_nodes]];
    for i in 0..2 {
        let mut data = vec![0.0; n_nodes];
        for jj in 0..=n_sub {
            for ii in 0..=(n_sub - jj) {
                let id = sub.node_index(ii, jj);
                if sub.boundary[id] {
                    data[id] = hat_values(n_sub, ii, jj)[i];
                }
            }
        }
        values[i] = harmonic_extension(
            &sub,
            field,
            &data,
            &format!("standard basis {i} on coarse element {element}"),
        )?;
    }
    // the third function is the complement: partition of unity by construction
    values[2] = (0..n_nodes).map(|id| 1.0 - values[0][id] - values[1][id]).collect();
    Ok(ElementBasis {
        kind: BasisKind::Standard,
        element,
        vertices: k,
        sub,
        values,
        cij: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        patch: None,
    })
}

/// Combination matrix C with `C M = I`, where `M_jk` is hat `j` of the patch
/// evaluated at vertex `k` of the base element. Rows of C combine the patch
/// solutions into functions whose P1 projections are the hats of K.
pub fn compute_cij(k: &[Point; 3], patch: &OversamplingPatch) -> Result<[[f64; 3]; 3]> {
    let mut m = [[0.0; 3]; 3];
    for (kk, vk) in k.iter().enumerate() {
        let l = barycentric(&patch.patch, *vk);
        for j in 0..3 {
            m[j][kk] = l[j];
        }
    }
    // C M = I  <=>  M^T C_i^T = e_i per row i
    let mt: Vec<Vec<f64>> = (0..3).map(|r| (0..3).map(|c| m[c][r]).collect()).collect();
    let mut cij = [[0.0; 3]; 3];
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let row = dense_solve(&mt, &e).map_err(|_| {
            MsError::Geometry("oversampling combination matrix is singular (degenerate patch)".into())
        })?;
        cij[i].copy_from_slice(&row);
    }
    // residual guard
    for i in 0..3 {
        for kk in 0..3 {
            let r: f64 = (0..3).map(|j| cij[i][j] * m[j][kk]).sum::<f64>()
                - if i == kk { 1.0 } else { 0.0 };
            if r.abs() > 1e-13 {
                return Err(MsError::Geometry(format!(
                    "combination matrix residual {r:.3e} exceeds 1e-13"
                )));
            }
        }
    }
    Ok(cij)
}

/// Oversampling basis: solve the three patch problems with the patch's hat
/// data, combine with `compute_cij`, and restrict to the element sub-mesh.
///
/// The restriction evaluates the piecewise-linear patch solutions exactly at
/// the element's sub-mesh nodes. (Nodal extraction would need the element
/// lattice to be a subset of the patch lattice, which fails for dilation
/// factors like 3 unless `3 | (sigma-1)*n_sub`; P1 evaluation is exact on the
/// patch mesh either way.)
/// Pick a patch lattice resolution so the element's own lattice nodes coincide
/// with patch lattice nodes whenever the dilation factor is an integer.
///
/// The element occupies barycentric coordinates `(1 - 1/sigma)/3 + beta/sigma`
/// inside the patch, so a patch resolution `N` reproduces the element lattice
/// exactly when `N (sigma - 1) / (3 sigma)` and `N / (sigma n)` are integers.
/// With `N = sigma * n * m` the first condition reads `3 | n m (sigma - 1)`,
/// which fixes `m = 3` when `3` does not divide `n (sigma - 1)` and `m = 1`
/// otherwise. Non-integer dilation factors cannot align and fall back to a
/// comparable rounded resolution.
fn patch_resolution(n_sub: usize, sigma_os: f64) -> usize {
    let rounded = sigma_os.round();
    if (sigma_os - rounded).abs() < 1e-12 && rounded >= 2.0 {
        let sigma = rounded as usize;
        let m = if (n_sub * (sigma - 1)) % 3 == 0 { 1 } else { 3 };
        sigma * n_sub * m
    } else {
        ((sigma_os * n_sub as f64).round() as usize).max(2 * n_sub)
    }
}

pub fn build_oversampling_basis(
    element: usize,
    k: [Point; 3],
    field: &CoefficientField,
    n_sub: usize,
    sigma_os: f64,
) -> Result<ElementBasis> {
    if n_sub < 2 {
        return Err(MsError::Mesh(format!(
            "basis sub-mesh needs n_sub >= 2, got {n_sub}"
        )));
    }
    let patch = make_oversampling_patch(k, sigma_os)?;
    let n_sub_patch = patch_resolution(n_sub, sigma_os);
    let psub = refine_triangle(patch.patch, n_sub_patch)?;
    let pn = psub.mesh.nodes.len();
    let mut psi: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for j in 0..2 {
        let mut data = vec![0.0; pn];
        for jj in 0..=n_sub_patch {
            for ii in 0..=(n_sub_patch - jj) {
                let id = psub.node_index(ii, jj);
                if psub.boundary[id] {
                    data[id] = hat_values(n_sub_patch, ii, jj)[j];
                }
            }
        }
        psi[j] = harmonic_extension(
            &psub,
            field,
            &data,
            &format!("oversampling patch solve {j} on coarse element {element}"),
        )?;
    }
    // third patch solution by complement (constants solve the local problem)
    psi[2] = (0..pn).map(|id| 1.0 - psi[0][id] - psi[1][id]).collect();
    let cij = compute_cij(&k, &patch)?;
    let sub = refine_triangle(k, n_sub)?;
    let n_nodes = sub.mesh.nodes.len();
    let mut values: [Vec<f64>; 3] = [vec![0.0; n_nodes], vec![0.0; n_nodes], vec![0.0; n_nodes]];
    for (id, p) in sub.mesh.nodes.iter().enumerate() {
        let pv = [
            psub.eval_p1(&psi[0], *p),
            psub.eval_p1(&psi[1], *p),
            psub.eval_p1(&psi[2], *p),
        ];
        for i in 0..3 {
            values[i][id] = (0..3).map(|j| cij[i][j] * pv[j]).sum();
        }
    }
    Ok(ElementBasis {
        kind: BasisKind::Oversampling,
        element,
        vertices: k,
        sub,
        values,
        cij,
        patch: Some(patch),
    })
}

/// How to pick the basis kind per element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisSelection {
    AllStandard,
    /// oversampling everywhere; errors if any patch exits the domain
    AllOversampling { sigma_os: f64 },
    /// oversampling where the patch fits, standard near the boundary
    Mixed { sigma_os: f64 },
}

/// Build bases for the given coarse elements in parallel; output order
/// follows the input element order (deterministic).
pub fn build_bases(
    mesh: &TriMesh,
    elements: &[usize],
    field: &CoefficientField,
    n_sub: usize,
    selection: BasisSelection,
) -> Result<Vec<ElementBasis>> {
    elements
        .par_iter()
        .map(|&e| {
            let k = mesh.element_vertices(e);
            match selection {
                BasisSelection::AllStandard => build_standard_basis(e, k, field, n_sub),
                BasisSelection::AllOversampling { sigma_os } => {
                    build_oversampling_basis(e, k, field, n_sub, sigma_os)
                }
                BasisSelection::Mixed { sigma_os } => {
                    match build_oversampling_basis(e, k, field, n_sub, sigma_os) {
                        Ok(b) => Ok(b),
                        Err(MsError::Geometry(_)) => build_standard_basis(e, k, field, n_sub),
                        Err(e) => Err(e),
                    }
                }
            }
        })
        .collect()
}

/// Galerkin system over coarse nodes: entry (p,q) = sum_K int_K a grad
/// psi_p . grad psi_q, integrated on each element's sub-mesh; load
/// b_p = sum_K int_K f psi_p. Rows of coarse nodes outside the region stay
/// empty.
pub fn assemble_ms_global(
    n_coarse_nodes: usize,
    coarse_elements: &dyn Fn(usize) -> [usize; 3],
    bases: &[ElementBasis],
    field: &CoefficientField,
    f: &dyn Fn(Point) -> f64,
) -> Result<(crate::linalg::SparseMatrix, Vec<f64>)> {
    let quad = QuadRule::midpoint();
    let mut triplets = Vec::new();
    let mut b = vec![0.0; n_coarse_nodes];
    for basis in bases {
        let nodes = coarse_elements(basis.element);
        let local = ms_local_matrix(basis, field, &quad);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((nodes[i], nodes[j], local[i][j]));
            }
        }
        let load = ms_local_load(basis, f, &quad);
        for i in 0..3 {
            b[nodes[i]] += load[i];
        }
    }
    let a = crate::linalg::SparseMatrix::from_triplets(n_coarse_nodes, n_coarse_nodes, &triplets)?;
    Ok((a, b))
}

/// 3x3 energy matrix of one element basis, by quadrature on the sub-mesh.
pub fn ms_local_matrix(basis: &ElementBasis, field: &CoefficientField, quad: &QuadRule) -> [[f64; 3]; 3] {
    let mut local = [[0.0; 3]; 3];
    for e in 0..basis.sub.mesh.elements.len() {
        let tri = basis.sub.mesh.element_vertices(e);
        let area = basis.sub.mesh.element_area(e);
        let a_mean = fem::quad_average(&tri, &|p| field.eval(p), quad);
        let g: Vec<[f64; 2]> = (0..3).map(|i| basis.gradient(i, e)).collect();
        for i in 0..3 {
            for j in 0..3 {
                local[i][j] += a_mean * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
    }
    local
}

/// Element load vector `int_K f psi_i` by sub-mesh quadrature.
pub fn ms_local_load(basis: &ElementBasis, f: &dyn Fn(Point) -> f64, quad: &QuadRule) -> [f64; 3] {
    let mut load = [0.0; 3];
    for e in 0..basis.sub.mesh.elements.len() {
        let t = basis.sub.mesh.elements[e];
        let tri = basis.sub.mesh.element_vertices(e);
        let area = basis.sub.mesh.element_area(e);
        for (l, w) in quad.points.iter().zip(&quad.weights) {
            let p = [
                l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0],
                l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1],
            ];
            let fv = f(p) * area * w;
            for i in 0..3 {
                let psi = l[0] * basis.values[i][t[0]]
                    + l[1] * basis.values[i][t[1]]
                    + l[2] * basis.values[i][t[2]];
                load[i] += fv * psi;
            }
        }
    }
    load
}
