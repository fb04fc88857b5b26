//! The combined FE-MsFEM system: fine P1 FEM on the boundary frame, a
//! multiscale coarse block in the interior, and Nitsche-type interface
//! penalty terms gluing the two across the frame interface. Also drives the
//! pure coarse methods (standard and mixed-basis MsFEM) for comparison.

use crate::coeff::CoefficientField;
use crate::fem::{self, QuadRule};
use crate::linalg::{bicgstab, cg, Preconditioner, SolveReport, SparseMatrix};
use crate::mesh::{
    barycentric, CoarseMesh, DomainSplit, FineMesh, InterfacePairing, Point, GEOM_TOL,
};
use crate::msbasis::{self, BasisKind, ElementBasis};
use crate::{MsError, Result};
use rayon::prelude::*;
use std::collections::HashMap;

/// How the penalty scale rho is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoMode {
    /// rho = epsilon of the coefficient (requires an analytic field)
    Epsilon,
    /// rho = fine mesh spacing h
    FineH,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    /// symmetry parameter in {-1, 0, 1}; 1 gives a symmetric matrix
    pub beta: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub rho_mode: RhoMode,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        PenaltyParams {
            beta: 1.0,
            gamma0: 20.0,
            gamma1: 0.1,
            rho_mode: RhoMode::Epsilon,
        }
    }
}

/// Resolve rho from the mode, the coefficient's epsilon (if any), and the
/// fine spacing.
pub fn resolve_rho(params: &PenaltyParams, field: &CoefficientField, fine_h: f64) -> Result<f64> {
    if params.gamma0 <= 0.0 {
        return Err(MsError::Config(vec!["gamma0 must be positive".into()]));
    }
    if params.gamma1 < 0.0 {
        return Err(MsError::Config(vec!["gamma1 must be nonnegative".into()]));
    }
    let rho = match params.rho_mode {
        RhoMode::Epsilon => field.epsilon().ok_or_else(|| {
            MsError::Config(vec![
                "rho mode `epsilon` needs a coefficient with a scale parameter; use rho=h or an explicit value".into(),
            ])
        })?,
        RhoMode::FineH => fine_h,
        RhoMode::Explicit(v) => v,
    };
    if rho <= 0.0 {
        return Err(MsError::Config(vec![format!("resolved rho {rho} must be positive")]));
    }
    if let (RhoMode::Epsilon, Some(eps)) = (params.rho_mode, field.epsilon()) {
        if rho > eps + GEOM_TOL {
            return Err(MsError::Config(vec![format!(
                "rho {rho} exceeds the coefficient scale {eps}"
            )]));
        }
    }
    Ok(rho)
}

/// Trace of one side of an interface edge: per DOF a linear trace (values at
/// the two edge endpoints), a constant gradient, and a jump sign.
#[derive(Debug, Clone)]
pub struct EdgeTrace {
    /// global matrix indices (-1 entries are eliminated boundary DOFs)
    pub dofs: [i64; 3],
    /// endpoint values of each DOF's shape function, [dof][endpoint]
    pub vals: [[f64; 2]; 3],
    /// constant gradient of each shape function on its side of the edge
    pub grads: [[f64; 2]; 3],
    /// +1 on the fine (frame) side, -1 on the coarse side
    pub sign: f64,
}

/// Both traces of one fine interface edge plus its geometry.
#[derive(Debug, Clone)]
pub struct EdgeTraceData {
    pub a: Point,
    pub b: Point,
    pub normal: [f64; 2],
    pub length: f64,
    pub fine: EdgeTrace,
    pub coarse: EdgeTrace,
}

/// Precomputed orientation of a basis sub-mesh trace along a gamma edge.
struct GammaEdgeTraceCtx {
    /// sub-mesh node ids along the edge, ordered from gamma a to gamma b
    node_ids: Vec<usize>,
    /// adjacent sub-element per sub-edge, same order
    adj_elems: Vec<usize>,
}

fn gamma_edge_ctx(
    split: &DomainSplit,
    gamma_edge: usize,
    basis: &ElementBasis,
) -> Result<GammaEdgeTraceCtx> {
    let ge = &split.gamma_edges[gamma_edge];
    let sub = &basis.sub;
    let r = sub.n_sub;
    let le = ge.coarse_local_edge;
    let lat = sub.edge_lattice_nodes(le);
    let ids: Vec<usize> = lat.iter().map(|&(i, j)| sub.node_index(i, j)).collect();
    let close = |p: Point, q: Point| (p[0] - q[0]).abs() < GEOM_TOL && (p[1] - q[1]).abs() < GEOM_TOL;
    let p0 = sub.mesh.nodes[ids[0]];
    let pn = sub.mesh.nodes[ids[r]];
    let (node_ids, adj): (Vec<usize>, Vec<usize>) = if close(p0, ge.a) && close(pn, ge.b) {
        (ids, (0..r).map(|k| sub.edge_adjacent_element(le, k)).collect())
    } else if close(p0, ge.b) && close(pn, ge.a) {
        (
            ids.into_iter().rev().collect(),
            (0..r).map(|k| sub.edge_adjacent_element(le, r - 1 - k)).collect(),
        )
    } else {
        return Err(MsError::Mesh(format!(
            "basis sub-mesh of coarse element {} is not aligned with its interface edge \
             (check that n_sub equals the fine-to-coarse ratio)",
            basis.element
        )));
    };
    Ok(GammaEdgeTraceCtx { node_ids, adj_elems: adj })
}

/// Build the per-edge trace records for every fine interface edge.
pub fn trace_data(
    split: &DomainSplit,
    pairing: &InterfacePairing,
    fine: &FineMesh,
    coarse: &CoarseMesh,
    bases_by_elem: &HashMap<usize, usize>,
    bases: &[ElementBasis],
    fine_global: &[i64],
    coarse_global: &[i64],
) -> Result<Vec<EdgeTraceData>> {
    let mut ctxs: HashMap<usize, GammaEdgeTraceCtx> = HashMap::new();
    let r = fine.n_h / split.n;
    let mut out = Vec::with_capacity(pairing.entries.len());
    // index of the current entry within its gamma edge
    let mut k_in_edge = 0usize;
    let mut prev_edge = usize::MAX;
    for entry in &pairing.entries {
        if entry.gamma_edge != prev_edge {
            prev_edge = entry.gamma_edge;
            k_in_edge = 0;
        }
        let k = k_in_edge;
        k_in_edge += 1;
        let ge = &split.gamma_edges[entry.gamma_edge];
        let bidx = *bases_by_elem.get(&ge.coarse_elem).ok_or_else(|| {
            MsError::Mesh(format!("no basis for interior coarse element {}", ge.coarse_elem))
        })?;
        let basis = &bases[bidx];
        if basis.sub.n_sub != r {
            return Err(MsError::Mesh(format!(
                "basis n_sub {} does not match the fine-to-coarse ratio {r}",
                basis.sub.n_sub
            )));
        }
        let ctx = match ctxs.get(&entry.gamma_edge) {
            Some(c) => c,
            None => {
                let c = gamma_edge_ctx(split, entry.gamma_edge, basis)?;
                ctxs.insert(entry.gamma_edge, c);
                ctxs.get(&entry.gamma_edge).unwrap()
            }
        };
        // alignment check: sub-mesh trace nodes coincide with fine endpoints
        for (sub_id, p) in [(ctx.node_ids[k], entry.a), (ctx.node_ids[k + 1], entry.b)] {
            let q = basis.sub.mesh.nodes[sub_id];
            if (p[0] - q[0]).abs() > GEOM_TOL || (p[1] - q[1]).abs() > GEOM_TOL {
                return Err(MsError::Mesh(format!(
                    "interface trace misalignment at ({:.12}, {:.12}) vs ({:.12}, {:.12})",
                    p[0], p[1], q[0], q[1]
                )));
            }
        }
        // fine side: the frame element adjacent to the edge
        let ft = fine.mesh.elements[entry.fine_elem];
        let tri = fine.mesh.element_vertices(entry.fine_elem);
        let (g, _) = fem::p1_gradients(&tri);
        let mut fine_trace = EdgeTrace {
            dofs: [0; 3],
            vals: [[0.0; 2]; 3],
            grads: [[0.0; 2]; 3],
            sign: 1.0,
        };
        for d in 0..3 {
            fine_trace.dofs[d] = fine_global[ft[d]];
            let la = barycentric(&tri, entry.a);
            let lb = barycentric(&tri, entry.b);
            fine_trace.vals[d] = [la[d], lb[d]];
            fine_trace.grads[d] = g[d];
        }
        // coarse side: the three multiscale shape functions of the element
        let cnodes = coarse.mesh.elements[ge.coarse_elem];
        let adj = ctx.adj_elems[k];
        let mut coarse_trace = EdgeTrace {
            dofs: [0; 3],
            vals: [[0.0; 2]; 3],
            grads: [[0.0; 2]; 3],
            sign: -1.0,
        };
        for d in 0..3 {
            coarse_trace.dofs[d] = coarse_global[cnodes[d]];
            coarse_trace.vals[d] = [
                basis.values[d][ctx.node_ids[k]],
                basis.values[d][ctx.node_ids[k + 1]],
            ];
            coarse_trace.grads[d] = basis.gradient(d, adj);
        }
        out.push(EdgeTraceData {
            a: entry.a,
            b: entry.b,
            normal: entry.normal,
            length: entry.length,
            fine: fine_trace,
            coarse: coarse_trace,
        });
    }
    Ok(out)
}

/// Interface bilinear form contributions for one trial/test DOF pair on one
/// edge, integrated with 2-point Gauss (exact for the P1 trace products).
///
/// The four term families:
///   -int ( {a grad u . n} [v] + beta [u] {a grad v . n} )
///   + (gamma0/rho) int [u][v]
///   + gamma1 rho int [a grad u . n][a grad v . n]
pub fn assemble_interface(
    traces: &[EdgeTraceData],
    field: &CoefficientField,
    params: &PenaltyParams,
    rho: f64,
) -> Vec<(usize, usize, f64)> {
    // 2-point Gauss on [0,1]
    let gauss_t = [0.5 - 0.5 / 3.0f64.sqrt(), 0.5 + 0.5 / 3.0f64.sqrt()];
    let mut triplets = Vec::new();
    for ed in traces {
        let sides = [&ed.fine, &ed.coarse];
        for t in gauss_t {
            let w = 0.5 * ed.length;
            let x = [
                ed.a[0] + t * (ed.b[0] - ed.a[0]),
                ed.a[1] + t * (ed.b[1] - ed.a[1]),
            ];
            let a_val = field.eval(x);
            // per (side, dof): trace value, jump-signed value, flux, jump-signed flux
            let mut tau = [[0.0; 3]; 2];
            let mut flux = [[0.0; 3]; 2];
            for (s, side) in sides.iter().enumerate() {
                for d in 0..3 {
                    tau[s][d] = (1.0 - t) * side.vals[d][0] + t * side.vals[d][1];
                    flux[s][d] = a_val
                        * (side.grads[d][0] * ed.normal[0] + side.grads[d][1] * ed.normal[1]);
                }
            }
            for (sv, vside) in sides.iter().enumerate() {
                for dv in 0..3 {
                    let row = vside.dofs[dv];
                    if row < 0 {
                        continue;
                    }
                    let jump_v = vside.sign * tau[sv][dv];
                    let avg_flux_v = 0.5 * flux[sv][dv];
                    let jump_flux_v = vside.sign * flux[sv][dv];
                    for (su, uside) in sides.iter().enumerate() {
                        for du in 0..3 {
                            let col = uside.dofs[du];
                            if col < 0 {
                                continue;
                            }
                            let jump_u = uside.sign * tau[su][du];
                            let avg_flux_u = 0.5 * flux[su][du];
                            let jump_flux_u = uside.sign * flux[su][du];
                            let val = w
                                * (-(avg_flux_u * jump_v + params.beta * jump_u * avg_flux_v)
                                    + params.gamma0 / rho * jump_u * jump_v
                                    + params.gamma1 * rho * jump_flux_u * jump_flux_v);
                            triplets.push((row as usize, col as usize, val));
                        }
                    }
                }
            }
        }
    }
    triplets
}

/// DOF layout of the combined system: free fine nodes first, then the coarse
/// nodes of the closure of the interior region.
#[derive(Debug, Clone)]
pub struct FeMsDofMap {
    pub fine_global: Vec<i64>,
    pub coarse_global: Vec<i64>,
    pub n_fine_free: usize,
    pub n_coarse: usize,
}

impl FeMsDofMap {
    pub fn n_total(&self) -> usize {
        self.n_fine_free + self.n_coarse
    }
}

pub fn build_dof_map(split: &DomainSplit, fine: &FineMesh, coarse: &CoarseMesh) -> FeMsDofMap {
    let mut fine_global = vec![-1i64; fine.mesh.nodes.len()];
    let mut next = 0i64;
    for (i, &dir) in fine.dirichlet.iter().enumerate() {
        if !dir {
            fine_global[i] = next;
            next += 1;
        }
    }
    let n_fine_free = next as usize;
    let mut coarse_global = vec![-1i64; coarse.mesh.nodes.len()];
    for e in split.omega2_elements(coarse) {
        for &v in &coarse.mesh.elements[e] {
            if coarse_global[v] < 0 {
                coarse_global[v] = 0; // mark
            }
        }
    }
    let mut n_coarse = 0usize;
    for g in coarse_global.iter_mut() {
        if *g == 0 {
            *g = (n_fine_free + n_coarse) as i64;
            n_coarse += 1;
        }
    }
    FeMsDofMap {
        fine_global,
        coarse_global,
        n_fine_free,
        n_coarse,
    }
}

/// The assembled combined system.
pub struct FeMsSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub dofs: FeMsDofMap,
    pub rho: f64,
}

/// Assemble the full FE-MsFEM system: fine stiffness on the frame, the
/// multiscale block on the interior, both load vectors, and the interface
/// penalty terms.
pub fn assemble_fe_msfem(
    split: &DomainSplit,
    fine: &FineMesh,
    coarse: &CoarseMesh,
    pairing: &InterfacePairing,
    bases: &[ElementBasis],
    field: &CoefficientField,
    f: &dyn Fn(Point) -> f64,
    params: &PenaltyParams,
) -> Result<FeMsSystem> {
    for b in bases {
        if b.kind != BasisKind::Oversampling {
            return Err(MsError::Config(vec![format!(
                "interior element {} carries a {:?} basis; the combined method expects oversampling bases",
                b.element, b.kind
            )]));
        }
    }
    let rho = resolve_rho(params, field, fine.spacing())?;
    let dofs = build_dof_map(split, fine, coarse);
    let n = dofs.n_total();
    let quad = QuadRule::midpoint();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; n];
    // frame block: fine P1 stiffness and load, boundary rows dropped
    let aff = fem::assemble_stiffness(&fine.mesh, field, &quad);
    for i in 0..aff.n_rows {
        let gi = dofs.fine_global[i];
        if gi < 0 {
            continue;
        }
        for k in aff.row_ptr[i]..aff.row_ptr[i + 1] {
            let gj = dofs.fine_global[aff.col_idx[k]];
            if gj >= 0 {
                triplets.push((gi as usize, gj as usize, aff.values[k]));
            }
        }
    }
    let bf = fem::assemble_load(&fine.mesh, f, &quad);
    for (i, v) in bf.iter().enumerate() {
        let gi = dofs.fine_global[i];
        if gi >= 0 {
            rhs[gi as usize] += v;
        }
    }
    // interior block: multiscale element matrices and loads
    let mut bases_by_elem = HashMap::new();
    for (idx, b) in bases.iter().enumerate() {
        bases_by_elem.insert(b.element, idx);
    }
    for e in split.omega2_elements(coarse) {
        let bidx = *bases_by_elem.get(&e).ok_or_else(|| {
            MsError::Config(vec![format!("missing basis for interior coarse element {e}")])
        })?;
        let basis = &bases[bidx];
        let local = msbasis::ms_local_matrix(basis, field, &quad);
        let load = msbasis::ms_local_load(basis, f, &quad);
        let nodes = coarse.mesh.elements[e];
        for i in 0..3 {
            let gi = dofs.coarse_global[nodes[i]];
            debug_assert!(gi >= 0);
            rhs[gi as usize] += load[i];
            for j in 0..3 {
                let gj = dofs.coarse_global[nodes[j]];
                triplets.push((gi as usize, gj as usize, local[i][j]));
            }
        }
    }
    // interface terms
    let traces = trace_data(
        split,
        pairing,
        fine,
        coarse,
        &bases_by_elem,
        bases,
        &dofs.fine_global,
        &dofs.coarse_global,
    )?;
    triplets.extend(assemble_interface(&traces, field, params, rho));
    let matrix = SparseMatrix::from_triplets(n, n, &triplets)?;
    Ok(FeMsSystem {
        matrix,
        rhs,
        dofs,
        rho,
    })
}

/// Solution of the combined method: a fine field on the frame and coarse
/// multiscale coefficients on the interior, with the interior bases kept for
/// reconstruction.
pub struct CombinedSolution {
    /// values on all FineMesh nodes (zero on the outer boundary)
    pub fine_values: Vec<f64>,
    /// values on all coarse nodes (zero off the interior closure)
    pub coarse_values: Vec<f64>,
    pub bases: Vec<ElementBasis>,
    pub rho: f64,
    pub report: SolveReport,
}

/// Assemble and solve the combined system; CG for beta = 1, BiCGStab
/// otherwise.
pub fn solve_fe_msfem(
    split: &DomainSplit,
    fine: &FineMesh,
    coarse: &CoarseMesh,
    pairing: &InterfacePairing,
    bases: Vec<ElementBasis>,
    field: &CoefficientField,
    f: &dyn Fn(Point) -> f64,
    params: &PenaltyParams,
    rtol: f64,
) -> Result<CombinedSolution> {
    let sys = assemble_fe_msfem(split, fine, coarse, pairing, &bases, field, f, params)?;
    let (x, report) = if params.beta == 1.0 {
        cg(&sys.matrix, &sys.rhs, rtol, 200_000, Preconditioner::Jacobi)
    } else {
        bicgstab(&sys.matrix, &sys.rhs, rtol, 200_000, Preconditioner::Jacobi)
    };
    if !report.converged {
        return Err(MsError::NonConverged {
            context: "combined FE-MsFEM solve".into(),
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    let mut fine_values = vec![0.0; fine.mesh.nodes.len()];
    for (i, &g) in sys.dofs.fine_global.iter().enumerate() {
        if g >= 0 {
            fine_values[i] = x[g as usize];
        }
    }
    let mut coarse_values = vec![0.0; coarse.mesh.nodes.len()];
    for (i, &g) in sys.dofs.coarse_global.iter().enumerate() {
        if g >= 0 {
            coarse_values[i] = x[g as usize];
        }
    }
    Ok(CombinedSolution {
        fine_values,
        coarse_values,
        bases,
        rho: sys.rho,
        report,
    })
}

/// Pure coarse multiscale solution over the whole domain.
pub struct MsSolution {
    /// values on all coarse nodes (zero on the boundary)
    pub values: Vec<f64>,
    pub bases: Vec<ElementBasis>,
    pub report: SolveReport,
}

fn solve_coarse_galerkin(
    coarse: &CoarseMesh,
    bases: Vec<ElementBasis>,
    field: &CoefficientField,
    f: &dyn Fn(Point) -> f64,
    rtol: f64,
    context: &str,
) -> Result<MsSolution> {
    let elems = &coarse.mesh.elements;
    let (mut a, mut b) = msbasis::assemble_ms_global(
        coarse.mesh.nodes.len(),
        &|e| elems[e],
        &bases,
        field,
        f,
    )?;
    let zeros = vec![0.0; b.len()];
    fem::apply_dirichlet(&mut a, &mut b, &coarse.boundary_node, &zeros);
    let (values, report) = cg(&a, &b, rtol, 100_000, Preconditioner::Jacobi);
    if !report.converged {
        return Err(MsError::NonConverged {
            context: context.to_string(),
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok(MsSolution {
        values,
        bases,
        report,
    })
}

/// Standard MsFEM on the whole domain: a-harmonic bases with linear data.
pub fn solve_msfem_standard(
    coarse: &CoarseMesh,
    field: &CoefficientField,
    f: &dyn Fn(Point) -> f64,
    n_sub: usize,
    rtol: f64,
) -> Result<MsSolution> {
    let elems: Vec<usize> = (0..coarse.mesh.elements.len()).collect();
    let bases = msbasis::build_bases(
        &coarse.mesh,
        &elems,
        field,
        n_sub,
        msbasis::BasisSelection::AllStandard,
    )?;
    solve_coarse_galerkin(coarse, bases, field, f, rtol, "standard MsFEM solve")
}

/// Mixed-basis MsFEM: oversampling bases on cells at least `layers` cell
/// rings away from the boundary (falling back to standard where the patch
/// would exit the domain), standard bases elsewhere.
pub fn solve_msfem_mixed(
    coarse: &CoarseMesh,
    field: &CoefficientField,
    f: &dyn Fn(Point) -> f64,
    n_sub: usize,
    sigma_os: f64,
    layers: usize,
    rtol: f64,
) -> Result<MsSolution> {
    let n = coarse.n;
    let elems: Vec<usize> = (0..coarse.mesh.elements.len()).collect();
    let bases: Result<Vec<ElementBasis>> = elems
        .par_iter()
        .map(|&e| {
            let (ci, cj) = coarse.cell_of_element(e);
            let ring = ci.min(cj).min(n - 1 - ci).min(n - 1 - cj);
            let k = coarse.mesh.element_vertices(e);
            if ring >= layers {
                match msbasis::build_oversampling_basis(e, k, field, n_sub, sigma_os) {
                    Ok(b) => Ok(b),
                    Err(MsError::Geometry(_)) => msbasis::build_standard_basis(e, k, field, n_sub),
                    Err(err) => Err(err),
                }
            } else {
                msbasis::build_standard_basis(e, k, field, n_sub)
            }
        })
        .collect();
    solve_coarse_galerkin(coarse, bases?, field, f, rtol, "mixed-basis MsFEM solve")
}
