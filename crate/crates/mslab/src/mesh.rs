//! Structured triangulations of the unit square, the frame/interior domain
//! split, sub-meshes for local basis problems, oversampling patches, and the
//! matched fine/coarse interface pairing.
//!
//! All meshes are uniform right-triangle meshes: each square cell is split
//! along the diagonal from its lower-left to its upper-right corner. This
//! keeps the fine/coarse interface matching and the reference-mesh nesting
//! exact up to roundoff.

use crate::{MsError, Result};
use std::io::Write;

pub type Point = [f64; 2];

/// Geometric coincidence tolerance. Coordinates are exact rational multiples
/// of the mesh spacings, so this is generous.
pub const GEOM_TOL: f64 = 1e-12;

pub fn signed_area(p0: Point, p1: Point, p2: Point) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))
}

/// Barycentric coordinates of `p` with respect to triangle (p0,p1,p2).
pub fn barycentric(tri: &[Point; 3], p: Point) -> [f64; 3] {
    let a = signed_area(tri[0], tri[1], tri[2]);
    let l0 = signed_area(p, tri[1], tri[2]) / a;
    let l1 = signed_area(tri[0], p, tri[2]) / a;
    [l0, l1, 1.0 - l0 - l1]
}

/// Plain triangle mesh: nodes and vertex-index triples (counterclockwise).
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub nodes: Vec<Point>,
    pub elements: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn element_vertices(&self, e: usize) -> [Point; 3] {
        let [a, b, c] = self.elements[e];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let [p0, p1, p2] = self.element_vertices(e);
        signed_area(p0, p1, p2)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.element_area(e)).sum()
    }

    /// Plain-text dump: `nodes:` then `elements:` listings.
    pub fn dump_text<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "nodes:")?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(w, "{} {:.17e} {:.17e}", i, p[0], p[1])?;
        }
        writeln!(w, "elements:")?;
        for (e, t) in self.elements.iter().enumerate() {
            writeln!(w, "{} {} {} {}", e, t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

/// Uniform triangulation of the closed unit square with `n` cells per side.
///
/// Cell `(i,j)` covers `[i/n,(i+1)/n] x [j/n,(j+1)/n]` and splits into a
/// lower triangle `(ll,lr,ur)` and an upper triangle `(ll,ur,ul)`.
#[derive(Debug, Clone)]
pub struct SquareMesh {
    pub n: usize,
    pub mesh: TriMesh,
    pub boundary_node: Vec<bool>,
}

pub type CoarseMesh = SquareMesh;

impl SquareMesh {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let nf = n as f64;
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        let mut boundary_node = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([i as f64 / nf, j as f64 / nf]);
                boundary_node.push(i == 0 || j == 0 || i == n || j == n);
            }
        }
        let node = |i: usize, j: usize| j * (n + 1) + i;
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (ll, lr, ur, ul) = (node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1));
                elements.push([ll, lr, ur]);
                elements.push([ll, ur, ul]);
            }
        }
        SquareMesh {
            n,
            mesh: TriMesh { nodes, elements },
            boundary_node,
        }
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    /// (lower, upper) element indices of cell (i,j).
    pub fn cell_elements(&self, i: usize, j: usize) -> (usize, usize) {
        let base = 2 * (j * self.n + i);
        (base, base + 1)
    }

    pub fn cell_of_element(&self, e: usize) -> (usize, usize) {
        let c = e / 2;
        (c % self.n, c / self.n)
    }
}

/// Build the coarse triangulation. Rejects `n < 4`: a 2-layer frame needs at
/// least one interior cell.
pub fn build_coarse_mesh(n_cells_per_side: usize) -> Result<CoarseMesh> {
    if n_cells_per_side < 4 {
        return Err(MsError::Mesh(format!(
            "coarse mesh needs at least 4 cells per side to host a 2-layer frame, got {n_cells_per_side}"
        )));
    }
    Ok(SquareMesh::new(n_cells_per_side))
}

/// One coarse edge of the interface, with the cells and the coarse element on
/// either side. Lattice coordinates are in coarse-cell units.
#[derive(Debug, Clone)]
pub struct GammaEdge {
    /// endpoints in coarse lattice coordinates, ordered along the edge
    pub lat_a: (usize, usize),
    pub lat_b: (usize, usize),
    pub a: Point,
    pub b: Point,
    pub omega1_cell: (usize, usize),
    pub omega2_cell: (usize, usize),
    /// coarse element (in the coarse mesh) adjacent on the Omega_2 side
    pub coarse_elem: usize,
    /// local edge index of `coarse_elem` lying on Gamma (0: v0v1, 1: v1v2, 2: v2v0)
    pub coarse_local_edge: usize,
    /// unit normal pointing from Omega_1 into Omega_2
    pub normal: [f64; 2],
}

/// Frame/interior split of the coarse mesh. `in_omega1[j*n+i]` marks cell
/// (i,j) as part of the fine-FEM region.
#[derive(Debug, Clone)]
pub struct DomainSplit {
    pub n: usize,
    pub layers: usize,
    pub in_omega1: Vec<bool>,
    pub gamma_edges: Vec<GammaEdge>,
    /// `(lo, hi)` of the interior square for a pure frame split
    pub gamma_rect: Option<(f64, f64)>,
}

impl DomainSplit {
    pub fn cell_in_omega1(&self, i: usize, j: usize) -> bool {
        self.in_omega1[j * self.n + i]
    }

    pub fn omega1_cells(&self) -> Vec<(usize, usize)> {
        self.cells(true)
    }

    pub fn omega2_cells(&self) -> Vec<(usize, usize)> {
        self.cells(false)
    }

    fn cells(&self, in1: bool) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.n {
            for i in 0..self.n {
                if self.cell_in_omega1(i, j) == in1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Elements of the coarse mesh belonging to Omega_2, in element order.
    pub fn omega2_elements(&self, coarse: &CoarseMesh) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, j) in self.omega2_cells() {
            let (lo, up) = coarse.cell_elements(i, j);
            out.push(lo);
            out.push(up);
        }
        out.sort_unstable();
        out
    }

    pub fn gamma_length(&self) -> f64 {
        self.gamma_edges
            .iter()
            .map(|e| {
                let dx = e.b[0] - e.a[0];
                let dy = e.b[1] - e.a[1];
                (dx * dx + dy * dy).sqrt()
            })
            .sum()
    }
}

/// Split the coarse mesh into a boundary frame Omega_1 of `layers` cell rings
/// and the interior Omega_2.
pub fn split_domain(coarse: &CoarseMesh, layers: usize) -> Result<DomainSplit> {
    split_domain_with_extra(coarse, layers, &[])
}

/// As [`split_domain`], but forcing additional cells (e.g. cells crossed by a
/// high-contrast channel) into Omega_1.
pub fn split_domain_with_extra(
    coarse: &CoarseMesh,
    layers: usize,
    extra_omega1_cells: &[(usize, usize)],
) -> Result<DomainSplit> {
    let n = coarse.n;
    if layers == 0 {
        return Err(MsError::Mesh("split_domain: layers must be positive".into()));
    }
    if 2 * layers >= n {
        return Err(MsError::Mesh(format!(
            "split_domain: 2*layers = {} leaves no interior for n = {}",
            2 * layers,
            n
        )));
    }
    let mut in_omega1 = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            let ring = i < layers || j < layers || i >= n - layers || j >= n - layers;
            in_omega1[j * n + i] = ring;
        }
    }
    let pure_frame = extra_omega1_cells.is_empty();
    for &(i, j) in extra_omega1_cells {
        if i >= n || j >= n {
            return Err(MsError::Mesh(format!(
                "split_domain: extra cell ({i},{j}) out of range for n = {n}"
            )));
        }
        in_omega1[j * n + i] = true;
    }
    if !in_omega1.contains(&false) {
        return Err(MsError::Mesh(
            "split_domain: Omega_2 is empty after forcing extra cells into Omega_1".into(),
        ));
    }
    let gamma_edges = collect_gamma_edges(coarse, &in_omega1);
    let hl = layers as f64 / n as f64;
    Ok(DomainSplit {
        n,
        layers,
        in_omega1,
        gamma_edges,
        gamma_rect: if pure_frame { Some((hl, 1.0 - hl)) } else { None },
    })
}

fn collect_gamma_edges(coarse: &CoarseMesh, in_omega1: &[bool]) -> Vec<GammaEdge> {
    let n = coarse.n;
    let h = coarse.spacing();
    let cell = |i: usize, j: usize| in_omega1[j * n + i];
    let pt = |i: usize, j: usize| [i as f64 * h, j as f64 * h];
    let mut edges = Vec::new();
    // horizontal lattice edges at y = j*h between cells (i, j-1) and (i, j)
    for j in 1..n {
        for i in 0..n {
            let below = cell(i, j - 1);
            let above = cell(i, j);
            if below == above {
                continue;
            }
            let (o1, o2, normal) = if below {
                ((i, j - 1), (i, j), [0.0, 1.0])
            } else {
                ((i, j), (i, j - 1), [0.0, -1.0])
            };
            let (lo, up) = coarse.cell_elements(o2.0, o2.1);
            // bottom edge of a cell lies in its lower triangle (local edge 0);
            // top edge lies in its upper triangle (local edge 1)
            let (coarse_elem, coarse_local_edge) = if o2.1 == j { (lo, 0) } else { (up, 1) };
            edges.push(GammaEdge {
                lat_a: (i, j),
                lat_b: (i + 1, j),
                a: pt(i, j),
                b: pt(i + 1, j),
                omega1_cell: o1,
                omega2_cell: o2,
                coarse_elem,
                coarse_local_edge,
                normal,
            });
        }
    }
    // vertical lattice edges at x = i*h between cells (i-1, j) and (i, j)
    for j in 0..n {
        for i in 1..n {
            let left = cell(i - 1, j);
            let right = cell(i, j);
            if left == right {
                continue;
            }
            let (o1, o2, normal) = if left {
                ((i - 1, j), (i, j), [1.0, 0.0])
            } else {
                ((i, j), (i - 1, j), [-1.0, 0.0])
            };
            let (lo, up) = coarse.cell_elements(o2.0, o2.1);
            // left edge of a cell lies in its upper triangle (local edge 2);
            // right edge lies in its lower triangle (local edge 1)
            let (coarse_elem, coarse_local_edge) = if o2.0 == i { (up, 2) } else { (lo, 1) };
            edges.push(GammaEdge {
                lat_a: (i, j),
                lat_b: (i, j + 1),
                a: pt(i, j),
                b: pt(i, j + 1),
                omega1_cell: o1,
                omega2_cell: o2,
                coarse_elem,
                coarse_local_edge,
                normal,
            });
        }
    }
    edges
}

/// Fine triangulation of the closure of Omega_1 at spacing `1/n_h`.
#[derive(Debug, Clone)]
pub struct FineMesh {
    pub n_h: usize,
    pub mesh: TriMesh,
    /// nodes on the outer boundary of the unit square
    pub dirichlet: Vec<bool>,
    /// lattice (i,j) -> node index, -1 where absent
    node_of_lattice: Vec<i64>,
    /// fine cell (i,j) -> lower element index, -1 where absent (upper = +1)
    elem_of_cell: Vec<i64>,
}

impl FineMesh {
    pub fn spacing(&self) -> f64 {
        1.0 / self.n_h as f64
    }

    pub fn lattice_node(&self, i: usize, j: usize) -> Option<usize> {
        let v = self.node_of_lattice[j * (self.n_h + 1) + i];
        (v >= 0).then_some(v as usize)
    }

    /// (lower, upper) element indices of fine cell (i,j) if it is in Omega_1.
    pub fn cell_elements(&self, i: usize, j: usize) -> Option<(usize, usize)> {
        let v = self.elem_of_cell[j * self.n_h + i];
        (v >= 0).then(|| (v as usize, v as usize + 1))
    }
}

/// Triangulate the closure of Omega_1 with `n_h` fine cells per unit side.
/// `n_h` must be a multiple of the coarse resolution (the matching condition
/// that the fine interface partition refines the coarse one).
pub fn build_frame_fine_mesh(split: &DomainSplit, n_h: usize) -> Result<FineMesh> {
    let n = split.n;
    if n_h % n != 0 {
        return Err(MsError::Mesh(format!(
            "fine resolution {n_h} is not a multiple of coarse resolution {n} (matching condition)"
        )));
    }
    if n_h <= n {
        return Err(MsError::Mesh(format!(
            "fine resolution {n_h} must exceed coarse resolution {n}"
        )));
    }
    let r = n_h / n;
    let hf = 1.0 / n_h as f64;
    let mut node_of_lattice = vec![-1i64; (n_h + 1) * (n_h + 1)];
    let mut elem_of_cell = vec![-1i64; n_h * n_h];
    let mut nodes = Vec::new();
    let mut dirichlet = Vec::new();
    let mut elements = Vec::new();
    let mut get_node = |i: usize, j: usize, nodes: &mut Vec<Point>, dir: &mut Vec<bool>| -> usize {
        let slot = j * (n_h + 1) + i;
        if node_of_lattice[slot] >= 0 {
            node_of_lattice[slot] as usize
        } else {
            let id = nodes.len();
            nodes.push([i as f64 * hf, j as f64 * hf]);
            dir.push(i == 0 || j == 0 || i == n_h || j == n_h);
            node_of_lattice[slot] = id as i64;
            id
        }
    };
    for fj in 0..n_h {
        for fi in 0..n_h {
            if !split.cell_in_omega1(fi / r, fj / r) {
                continue;
            }
            let ll = get_node(fi, fj, &mut nodes, &mut dirichlet);
            let lr = get_node(fi + 1, fj, &mut nodes, &mut dirichlet);
            let ur = get_node(fi + 1, fj + 1, &mut nodes, &mut dirichlet);
            let ul = get_node(fi, fj + 1, &mut nodes, &mut dirichlet);
            elem_of_cell[fj * n_h + fi] = elements.len() as i64;
            elements.push([ll, lr, ur]);
            elements.push([ll, ur, ul]);
        }
    }
    Ok(FineMesh {
        n_h,
        mesh: TriMesh { nodes, elements },
        dirichlet,
        node_of_lattice,
        elem_of_cell,
    })
}

/// One matched fine interface edge: the fine edge, its owning fine element in
/// Omega_1, the coarse edge containing it, the owning coarse element in
/// Omega_2, and the Omega_1 -> Omega_2 unit normal.
#[derive(Debug, Clone)]
pub struct PairingEntry {
    pub fine_nodes: [usize; 2],
    pub a: Point,
    pub b: Point,
    pub fine_elem: usize,
    pub gamma_edge: usize,
    pub coarse_elem: usize,
    pub normal: [f64; 2],
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct InterfacePairing {
    pub entries: Vec<PairingEntry>,
}

/// Match every fine interface edge to the coarse edge it nests in.
pub fn pair_interface(
    split: &DomainSplit,
    fine: &FineMesh,
    coarse: &CoarseMesh,
) -> Result<InterfacePairing> {
    let n = split.n;
    if coarse.n != n {
        return Err(MsError::Mesh(format!(
            "pair_interface: coarse mesh resolution {} does not match the split ({n})",
            coarse.n
        )));
    }
    let n_h = fine.n_h;
    let r = n_h / n;
    let hf = fine.spacing();
    let mut entries = Vec::new();
    for (ge_idx, ge) in split.gamma_edges.iter().enumerate() {
        let (di, dj) = (
            ge.lat_b.0 as i64 - ge.lat_a.0 as i64,
            ge.lat_b.1 as i64 - ge.lat_a.1 as i64,
        );
        for k in 0..r {
            let fa = (
                (ge.lat_a.0 as i64 * r as i64 + k as i64 * di) as usize,
                (ge.lat_a.1 as i64 * r as i64 + k as i64 * dj) as usize,
            );
            let fb = (
                (fa.0 as i64 + di) as usize,
                (fa.1 as i64 + dj) as usize,
            );
            let na = fine.lattice_node(fa.0, fa.1);
            let nb = fine.lattice_node(fb.0, fb.1);
            let (na, nb) = match (na, nb) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(MsError::Mesh(format!(
                        "pair_interface: fine node missing on Gamma at lattice ({},{})",
                        fa.0, fa.1
                    )))
                }
            };
            // fine element on the Omega_1 side
            let fine_elem = if dj == 0 {
                // horizontal edge at fj = fa.1
                let fj = fa.1;
                if ge.normal[1] > 0.0 {
                    // Omega_1 below: upper triangle of the fine cell below
                    fine.cell_elements(fa.0, fj - 1).map(|(_, up)| up)
                } else {
                    // Omega_1 above: lower triangle of the fine cell above
                    fine.cell_elements(fa.0, fj).map(|(lo, _)| lo)
                }
            } else {
                // vertical edge at fi = fa.0
                let fi = fa.0;
                if ge.normal[0] > 0.0 {
                    // Omega_1 left: lower triangle of the fine cell to the left
                    fine.cell_elements(fi - 1, fa.1).map(|(lo, _)| lo)
                } else {
                    // Omega_1 right: upper triangle of the fine cell to the right
                    fine.cell_elements(fi, fa.1).map(|(_, up)| up)
                }
            };
            let fine_elem = fine_elem.ok_or_else(|| {
                MsError::Mesh(format!(
                    "pair_interface: no Omega_1 fine cell adjacent to Gamma edge at lattice ({},{})",
                    fa.0, fa.1
                ))
            })?;
            let pa = fine.mesh.nodes[na];
            let pb = fine.mesh.nodes[nb];
            // coincidence check against the coarse edge segment
            for p in [pa, pb] {
                let t = (p[0] - ge.a[0]) * (ge.b[0] - ge.a[0]) + (p[1] - ge.a[1]) * (ge.b[1] - ge.a[1]);
                let l2 = (ge.b[0] - ge.a[0]).powi(2) + (ge.b[1] - ge.a[1]).powi(2);
                let t = t / l2;
                let proj = [
                    ge.a[0] + t * (ge.b[0] - ge.a[0]),
                    ge.a[1] + t * (ge.b[1] - ge.a[1]),
                ];
                let d = ((p[0] - proj[0]).powi(2) + (p[1] - proj[1]).powi(2)).sqrt();
                if d > GEOM_TOL || t < -GEOM_TOL || t > 1.0 + GEOM_TOL {
                    return Err(MsError::Mesh(format!(
                        "pair_interface: fine node ({:.17},{:.17}) does not lie on its coarse edge",
                        p[0], p[1]
                    )));
                }
            }
            entries.push(PairingEntry {
                fine_nodes: [na, nb],
                a: pa,
                b: pb,
                fine_elem,
                gamma_edge: ge_idx,
                coarse_elem: ge.coarse_elem,
                normal: ge.normal,
                length: hf,
            });
        }
    }
    Ok(InterfacePairing { entries })
}

/// Uniform refinement of a triangle into `n_sub^2` congruent sub-triangles.
///
/// Lattice node `(i,j)` sits at `v0 + (i/n)(v1-v0) + (j/n)(v2-v0)`.
#[derive(Debug, Clone)]
pub struct SubMesh {
    pub parent: [Point; 3],
    pub n_sub: usize,
    pub mesh: TriMesh,
    pub boundary: Vec<bool>,
    up_elem: Vec<i64>,
    down_elem: Vec<i64>,
}

impl SubMesh {
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        let n = self.n_sub;
        debug_assert!(i + j <= n);
        j * (n + 1) - (j * j - j) / 2 + i
    }

    /// Element index of the upward sub-triangle with lower-left lattice
    /// corner (a,b); requires a+b <= n_sub-1.
    pub fn up_element(&self, a: usize, b: usize) -> usize {
        self.up_elem[b * self.n_sub + a] as usize
    }

    /// Element index of the downward sub-triangle at (a,b); requires
    /// a+b <= n_sub-2.
    pub fn down_element(&self, a: usize, b: usize) -> usize {
        self.down_elem[b * self.n_sub + a] as usize
    }

    /// Lattice indices of the sub-mesh nodes along a parent edge, ordered
    /// from the first vertex of the edge to the second.
    /// Edge 0: v0->v1, edge 1: v1->v2, edge 2: v2->v0.
    pub fn edge_lattice_nodes(&self, local_edge: usize) -> Vec<(usize, usize)> {
        let n = self.n_sub;
        match local_edge {
            0 => (0..=n).map(|i| (i, 0)).collect(),
            1 => (0..=n).map(|k| (n - k, k)).collect(),
            2 => (0..=n).map(|k| (0, n - k)).collect(),
            _ => panic!("local edge index out of range"),
        }
    }

    /// The upward sub-triangle adjacent to the k-th sub-edge of a parent
    /// edge (k in 0..n_sub, ordered as in [`edge_lattice_nodes`](Self::edge_lattice_nodes)).
    pub fn edge_adjacent_element(&self, local_edge: usize, k: usize) -> usize {
        let n = self.n_sub;
        match local_edge {
            0 => self.up_element(k, 0),
            1 => self.up_element(n - 1 - k, k),
            2 => self.up_element(0, n - 1 - k),
            _ => panic!("local edge index out of range"),
        }
    }

    /// Evaluate a P1 field given by sub-mesh nodal `values` at point `p`
    /// (must lie in the parent triangle up to roundoff).
    pub fn eval_p1(&self, values: &[f64], p: Point) -> f64 {
        let n = self.n_sub;
        let nf = n as f64;
        let bc = barycentric(&self.parent, p);
        // lattice coordinates along (v1-v0) and (v2-v0)
        let mut a = (bc[1] * nf).clamp(0.0, nf);
        let mut b = (bc[2] * nf).clamp(0.0, nf);
        if a + b > nf {
            // roundoff past the hypotenuse: project back
            let s = nf / (a + b);
            a *= s;
            b *= s;
        }
        let ia = (a.floor() as usize).min(n - 1);
        let ib = (b.floor() as usize).min(n - 1 - ia);
        let mut fa = a - ia as f64;
        let mut fb = b - ib as f64;
        let v = |i: usize, j: usize| values[self.node_index(i, j)];
        if fa + fb <= 1.0 || ia + ib + 2 > n {
            if fa + fb > 1.0 {
                // roundoff on the last diagonal strip
                let s = 1.0 / (fa + fb);
                fa *= s;
                fb *= s;
            }
            (1.0 - fa - fb) * v(ia, ib) + fa * v(ia + 1, ib) + fb * v(ia, ib + 1)
        } else {
            (fa + fb - 1.0) * v(ia + 1, ib + 1) + (1.0 - fb) * v(ia + 1, ib) + (1.0 - fa) * v(ia, ib + 1)
        }
    }
}

pub fn refine_triangle(parent: [Point; 3], n_sub: usize) -> Result<SubMesh> {
    if n_sub == 0 {
        return Err(MsError::Mesh("refine_triangle: n_sub must be positive".into()));
    }
    let n = n_sub;
    let nf = n as f64;
    let [v0, v1, v2] = parent;
    let e1 = [(v1[0] - v0[0]) / nf, (v1[1] - v0[1]) / nf];
    let e2 = [(v2[0] - v0[0]) / nf, (v2[1] - v0[1]) / nf];
    let mut nodes = Vec::with_capacity((n + 1) * (n + 2) / 2);
    let mut boundary = Vec::with_capacity(nodes.capacity());
    for j in 0..=n {
        for i in 0..=(n - j) {
            nodes.push([
                v0[0] + i as f64 * e1[0] + j as f64 * e2[0],
                v0[1] + i as f64 * e1[1] + j as f64 * e2[1],
            ]);
            boundary.push(i == 0 || j == 0 || i + j == n);
        }
    }
    let node = |i: usize, j: usize| j * (n + 1) - (j * j - j) / 2 + i;
    let mut elements = Vec::with_capacity(n * n);
    let mut up_elem = vec![-1i64; n * n];
    let mut down_elem = vec![-1i64; n * n];
    for b in 0..n {
        for a in 0..(n - b) {
            up_elem[b * n + a] = elements.len() as i64;
            elements.push([node(a, b), node(a + 1, b), node(a, b + 1)]);
            if a + b <= n.wrapping_sub(2) && n >= 2 {
                down_elem[b * n + a] = elements.len() as i64;
                elements.push([node(a + 1, b), node(a + 1, b + 1), node(a, b + 1)]);
            }
        }
    }
    Ok(SubMesh {
        parent,
        n_sub,
        mesh: TriMesh { nodes, elements },
        boundary,
        up_elem,
        down_elem,
    })
}

/// Oversampling patch: the base element dilated about its barycenter.
#[derive(Debug, Clone)]
pub struct OversamplingPatch {
    pub base: [Point; 3],
    pub scale: f64,
    pub patch: [Point; 3],
}

/// Dilate element `base` about its barycenter by `scale` (> 1). Fails with a
/// geometry error if the patch leaves the closed unit square; raising
/// `layers` or lowering `scale` fixes that.
pub fn make_oversampling_patch(base: [Point; 3], scale: f64) -> Result<OversamplingPatch> {
    if scale <= 1.0 {
        return Err(MsError::Geometry(format!(
            "oversampling scale must exceed 1, got {scale}"
        )));
    }
    let bc = [
        (base[0][0] + base[1][0] + base[2][0]) / 3.0,
        (base[0][1] + base[1][1] + base[2][1]) / 3.0,
    ];
    let mut patch = [[0.0; 2]; 3];
    for k in 0..3 {
        patch[k] = [
            bc[0] + scale * (base[k][0] - bc[0]),
            bc[1] + scale * (base[k][1] - bc[1]),
        ];
        for d in 0..2 {
            if patch[k][d] < -GEOM_TOL || patch[k][d] > 1.0 + GEOM_TOL {
                return Err(MsError::Geometry(format!(
                    "oversampling patch vertex ({:.6},{:.6}) exits the domain; \
                     raise the frame layers or lower the oversampling scale",
                    patch[k][0], patch[k][1]
                )));
            }
        }
    }
    Ok(OversamplingPatch { base, scale, patch })
}
