//! Vector P1/P2 Lagrange elements on triangles, plane-strain elasticity
//! assembly, and boundary trace evaluation on the contact arc.
//!
//! Scalar Lagrange nodes are mesh vertices (P1) plus edge midpoints (P2);
//! vector DOF numbering is 2*node + component. Boundary frames (n, tau) come
//! from the exact circle geometry, not from facet normals.

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{BoundaryTag, Mesh};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub struct MaterialParams {
    pub young_e: f64,
    pub poisson_nu: f64,
    pub lame_lambda: f64,
    pub lame_mu: f64,
}

impl MaterialParams {
    pub fn new(young_e: f64, poisson_nu: f64) -> MaterialParams {
        assert!(young_e > 0.0);
        assert!(poisson_nu > 0.0 && poisson_nu < 0.5);
        MaterialParams {
            young_e,
            poisson_nu,
            lame_lambda: young_e * poisson_nu / ((1.0 + poisson_nu) * (1.0 - 2.0 * poisson_nu)),
            lame_mu: young_e / (2.0 * (1.0 + poisson_nu)),
        }
    }
}

/// A point on the contact boundary with everything needed to evaluate traces:
/// basis values/gradients of the adjacent element and the exact-circle frame.
#[derive(Debug, Clone)]
pub struct SurfacePoint {
    pub pos: [f64; 2],
    /// Integration weight (physical edge measure); 0 for nodal sample points.
    pub weight: f64,
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    /// Scalar basis values at the point, in adjacent-cell node order.
    pub phi: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct ContactEdge {
    pub cell: usize,
    /// Scalar node ids of the adjacent triangle (3 for P1, 6 for P2).
    pub cell_nodes: Vec<usize>,
    pub end_nodes: [usize; 2],
    pub length: f64,
    pub qps: Vec<SurfacePoint>,
}

/// A contact-boundary Lagrange node with per-adjacent-element stress
/// stencils (stress is element-wise discontinuous; consumers average).
#[derive(Debug, Clone)]
pub struct ContactNode {
    pub node: usize,
    pub pos: [f64; 2],
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    /// One (cell_nodes, basis gradients at the node) pair per adjacent
    /// contact edge, in boundary-edge order.
    pub stress_stencils: Vec<(Vec<usize>, Vec<[f64; 2]>)>,
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    pub mesh: Mesh,
    pub degree: usize,
    /// Scalar Lagrange node count; vector DOF count is twice this.
    pub n_scalar: usize,
    pub dof_coords: Vec<[f64; 2]>,
    /// Scalar node ids per triangle: vertices, then (P2) midpoints of
    /// edges (0,1), (1,2), (2,0).
    pub cells: Vec<Vec<usize>>,
    pub dirichlet_nodes: Vec<usize>,
    pub contact_edges: Vec<ContactEdge>,
    pub contact_nodes: Vec<ContactNode>,
}

pub const TRI_VOLUME_ORDER: usize = 4;
pub const EDGE_ORDER: usize = 6;

impl FeSpace {
    pub fn n_dof(&self) -> usize {
        2 * self.n_scalar
    }

    /// Vector DOF index: nodes sorted first, then component.
    pub fn dof(node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        self.dirichlet_nodes
            .iter()
            .flat_map(|&n| [2 * n, 2 * n + 1])
            .collect()
    }

    pub fn n_contact_qps(&self) -> usize {
        self.contact_edges.iter().map(|e| e.qps.len()).sum()
    }

    /// Nodal interpolation of a vector field (exact for fields in the space).
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_dof()];
        for (i, &p) in self.dof_coords.iter().enumerate() {
            let v = f(p);
            u[2 * i] = v[0];
            u[2 * i + 1] = v[1];
        }
        u
    }
}

/// Barycentric gradients and the orientation determinant (2x area).
fn tri_geometry(x: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]);
    let g = [
        [(x[1][1] - x[2][1]) / det, (x[2][0] - x[1][0]) / det],
        [(x[2][1] - x[0][1]) / det, (x[0][0] - x[2][0]) / det],
        [(x[0][1] - x[1][1]) / det, (x[1][0] - x[0][0]) / det],
    ];
    (g, det)
}

fn barycentric(x: &[[f64; 2]; 3], g: &[[f64; 2]; 3], p: [f64; 2]) -> [f64; 3] {
    let mut lam = [0.0; 3];
    for i in 0..3 {
        let base = if i == 0 { 1.0 } else { 0.0 };
        lam[i] = base + g[i][0] * (p[0] - x[0][0]) + g[i][1] * (p[1] - x[0][1]);
    }
    lam
}

/// Scalar basis values and gradients at a barycentric point.
fn eval_basis(degree: usize, lam: [f64; 3], g: &[[f64; 2]; 3]) -> (Vec<f64>, Vec<[f64; 2]>) {
    match degree {
        1 => (lam.to_vec(), g.to_vec()),
        2 => {
            let mut phi = Vec::with_capacity(6);
            let mut grad = Vec::with_capacity(6);
            for i in 0..3 {
                phi.push(lam[i] * (2.0 * lam[i] - 1.0));
                let c = 4.0 * lam[i] - 1.0;
                grad.push([c * g[i][0], c * g[i][1]]);
            }
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                phi.push(4.0 * lam[a] * lam[b]);
                grad.push([
                    4.0 * (lam[a] * g[b][0] + lam[b] * g[a][0]),
                    4.0 * (lam[a] * g[b][1] + lam[b] * g[a][1]),
                ]);
            }
            (phi, grad)
        }
        _ => unreachable!("degree checked at space construction"),
    }
}

/// Symmetric triangle quadrature (barycentric points, weights summing to 1).
pub fn triangle_rule(order: usize) -> Vec<([f64; 3], f64)> {
    fn perm3(a: f64, b: f64, w: f64) -> Vec<([f64; 3], f64)> {
        vec![([a, b, b], w), ([b, a, b], w), ([b, b, a], w)]
    }
    fn perm6(a: f64, b: f64, c: f64, w: f64) -> Vec<([f64; 3], f64)> {
        vec![
            ([a, b, c], w),
            ([a, c, b], w),
            ([b, a, c], w),
            ([b, c, a], w),
            ([c, a, b], w),
            ([c, b, a], w),
        ]
    }
    match order {
        0 | 1 => vec![([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)],
        2 | 3 => perm3(2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0),
        4 | 5 => {
            let mut r = perm3(0.108_103_018_168_070, 0.445_948_490_915_965, 0.223_381_589_678_011);
            r.extend(perm3(0.816_847_572_980_459, 0.091_576_213_509_771, 0.109_951_743_655_322));
            r
        }
        _ => {
            let mut r = perm3(0.873_821_971_016_996, 0.063_089_014_491_502, 0.050_844_906_370_207);
            r.extend(perm3(0.501_426_509_658_179, 0.249_286_745_170_910, 0.116_786_275_726_379));
            r.extend(perm6(
                0.636_502_499_121_399,
                0.310_352_451_033_785,
                0.053_145_049_844_816,
                0.082_851_075_618_374,
            ));
            r
        }
    }
}

/// Gauss-Legendre rule on [0, 1] exact for polynomials of the given order.
pub fn segment_rule(order: usize) -> Vec<(f64, f64)> {
    let raw: &[(f64, f64)] = match order {
        0 | 1 => &[(0.0, 2.0)],
        2 | 3 => &[(-0.577_350_269_189_625_7, 1.0), (0.577_350_269_189_625_7, 1.0)],
        4 | 5 => &[
            (-0.774_596_669_241_483_4, 5.0 / 9.0),
            (0.0, 8.0 / 9.0),
            (0.774_596_669_241_483_4, 5.0 / 9.0),
        ],
        6 | 7 => &[
            (-0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
            (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
        ],
        8 | 9 => &[
            (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
            (0.906_179_845_938_664, 0.236_926_885_056_189_08),
        ],
        _ => &[
            (-0.932_469_514_203_152_1, 0.171_324_492_379_170_4),
            (-0.661_209_386_466_264_5, 0.360_761_573_048_138_6),
            (-0.238_619_186_083_196_9, 0.467_913_934_572_691),
            (0.238_619_186_083_196_9, 0.467_913_934_572_691),
            (0.661_209_386_466_264_5, 0.360_761_573_048_138_6),
            (0.932_469_514_203_152_1, 0.171_324_492_379_170_4),
        ],
    };
    raw.iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

pub fn build_fe_space(mesh: &Mesh, degree: usize) -> Result<FeSpace> {
    if degree != 1 && degree != 2 {
        return Err(Error::UnsupportedDegree(degree));
    }
    let n_vert = mesh.nodes.len();
    let mut dof_coords = mesh.nodes.clone();

    // P2 midside nodes, numbered deterministically by sorted vertex pair.
    let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    if degree == 2 {
        for t in &mesh.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                mid.entry((a.min(b), a.max(b))).or_insert(0);
            }
        }
        let mut next = n_vert;
        for (key, id) in mid.iter_mut() {
            *id = next;
            next += 1;
            let (a, b) = *key;
            dof_coords.push([
                0.5 * (mesh.nodes[a][0] + mesh.nodes[b][0]),
                0.5 * (mesh.nodes[a][1] + mesh.nodes[b][1]),
            ]);
        }
    }
    let n_scalar = dof_coords.len();

    let midnode = |a: usize, b: usize| -> usize { mid[&(a.min(b), a.max(b))] };
    let mut cells = Vec::with_capacity(mesh.triangles.len());
    for t in &mesh.triangles {
        let mut c = vec![t[0], t[1], t[2]];
        if degree == 2 {
            c.push(midnode(t[0], t[1]));
            c.push(midnode(t[1], t[2]));
            c.push(midnode(t[2], t[0]));
        }
        cells.push(c);
    }

    // Edge-to-triangle adjacency for boundary edges.
    let mut adj: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (ci, t) in mesh.triangles.iter().enumerate() {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            adj.insert((a.min(b), a.max(b)), ci);
        }
    }

    let mut dirichlet_nodes = Vec::new();
    let mut contact_edges = Vec::new();
    let mut contact_node_ids = Vec::new();
    let circle_frame = |p: [f64; 2]| -> ([f64; 2], [f64; 2]) {
        let r = p[0].hypot(p[1]);
        let n = [p[0] / r, p[1] / r];
        (n, [-n[1], n[0]])
    };
    for be in &mesh.boundary_edges {
        let [a, b] = be.nodes;
        let mut edge_nodes = vec![a, b];
        if degree == 2 {
            edge_nodes.push(midnode(a, b));
        }
        match be.tag {
            BoundaryTag::Dirichlet => dirichlet_nodes.extend(&edge_nodes),
            BoundaryTag::Neumann => {}
            BoundaryTag::Contact => {
                let cell = adj[&(a.min(b), a.max(b))];
                let cell_nodes = cells[cell].clone();
                let verts = [
                    mesh.nodes[mesh.triangles[cell][0]],
                    mesh.nodes[mesh.triangles[cell][1]],
                    mesh.nodes[mesh.triangles[cell][2]],
                ];
                let (g, _) = tri_geometry(&verts);
                let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
                let length = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
                let mut qps = Vec::new();
                for (t, w) in segment_rule(EDGE_ORDER) {
                    let pos = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                    let lam = barycentric(&verts, &g, pos);
                    let (phi, grad) = eval_basis(degree, lam, &g);
                    let (normal, tangent) = circle_frame(pos);
                    qps.push(SurfacePoint {
                        pos,
                        weight: w * length,
                        normal,
                        tangent,
                        phi,
                        grad,
                    });
                }
                contact_edges.push(ContactEdge {
                    cell,
                    cell_nodes,
                    end_nodes: [a, b],
                    length,
                    qps,
                });
                contact_node_ids.extend(&edge_nodes);
            }
        }
    }
    dirichlet_nodes.sort_unstable();
    dirichlet_nodes.dedup();
    contact_node_ids.sort_unstable();
    contact_node_ids.dedup();

    // Per-node stress stencils from every adjacent contact edge's element.
    let mut contact_nodes = Vec::with_capacity(contact_node_ids.len());
    for &node in &contact_node_ids {
        let pos = dof_coords[node];
        let (normal, tangent) = circle_frame(pos);
        let mut stress_stencils = Vec::new();
        for ce in &contact_edges {
            let on_edge = ce.end_nodes.contains(&node)
                || (degree == 2 && midnode(ce.end_nodes[0], ce.end_nodes[1]) == node);
            if !on_edge {
                continue;
            }
            let verts = [
                mesh.nodes[mesh.triangles[ce.cell][0]],
                mesh.nodes[mesh.triangles[ce.cell][1]],
                mesh.nodes[mesh.triangles[ce.cell][2]],
            ];
            let (g, _) = tri_geometry(&verts);
            let lam = barycentric(&verts, &g, pos);
            let (_, grad) = eval_basis(degree, lam, &g);
            stress_stencils.push((ce.cell_nodes.clone(), grad));
        }
        contact_nodes.push(ContactNode {
            node,
            pos,
            normal,
            tangent,
            stress_stencils,
        });
    }

    Ok(FeSpace {
        mesh: mesh.clone(),
        degree,
        n_scalar,
        dof_coords,
        cells,
        dirichlet_nodes,
        contact_edges,
        contact_nodes,
    })
}

/// Linear functionals of the vector DOFs of the adjacent cell at one surface
/// point. Row layout: (node0,x), (node0,y), (node1,x), ... matching
/// `ContactEdge::cell_nodes`.
pub struct TraceRows {
    pub snn: Vec<f64>,
    pub snt: Vec<f64>,
    pub vn: Vec<f64>,
    pub vt: Vec<f64>,
}

pub fn trace_rows(sp: &SurfacePoint, mat: &MaterialParams) -> TraceRows {
    let nl = sp.phi.len();
    let (lam, mu) = (mat.lame_lambda, mat.lame_mu);
    let n = sp.normal;
    let t = sp.tangent;
    let mut rows = TraceRows {
        snn: vec![0.0; 2 * nl],
        snt: vec![0.0; 2 * nl],
        vn: vec![0.0; 2 * nl],
        vt: vec![0.0; 2 * nl],
    };
    for i in 0..nl {
        let g = sp.grad[i];
        let gn = g[0] * n[0] + g[1] * n[1];
        let gt = g[0] * t[0] + g[1] * t[1];
        for c in 0..2 {
            let k = 2 * i + c;
            rows.snn[k] = lam * g[c] + 2.0 * mu * n[c] * gn;
            rows.snt[k] = mu * (t[c] * gn + n[c] * gt);
            rows.vn[k] = sp.phi[i] * n[c];
            rows.vt[k] = sp.phi[i] * t[c];
        }
    }
    rows
}

/// sigma_nn / sigma_ntau from a stress stencil (gradients at a point) and a
/// coefficient vector.
fn stencil_stress(
    cell_nodes: &[usize],
    grad: &[[f64; 2]],
    normal: [f64; 2],
    tangent: [f64; 2],
    mat: &MaterialParams,
    u: &[f64],
) -> (f64, f64) {
    let (lam, mu) = (mat.lame_lambda, mat.lame_mu);
    let mut du = [[0.0f64; 2]; 2]; // du[c][d] = d u_c / d x_d
    for (i, &node) in cell_nodes.iter().enumerate() {
        for c in 0..2 {
            let coef = u[2 * node + c];
            du[c][0] += coef * grad[i][0];
            du[c][1] += coef * grad[i][1];
        }
    }
    let div = du[0][0] + du[1][1];
    let e = [
        [du[0][0], 0.5 * (du[0][1] + du[1][0])],
        [0.5 * (du[0][1] + du[1][0]), du[1][1]],
    ];
    let sig = [
        [lam * div + 2.0 * mu * e[0][0], 2.0 * mu * e[0][1]],
        [2.0 * mu * e[1][0], lam * div + 2.0 * mu * e[1][1]],
    ];
    let sn = [
        sig[0][0] * normal[0] + sig[0][1] * normal[1],
        sig[1][0] * normal[0] + sig[1][1] * normal[1],
    ];
    (
        sn[0] * normal[0] + sn[1] * normal[1],
        sn[0] * tangent[0] + sn[1] * tangent[1],
    )
}

/// Raw traces of a displacement field at one boundary point.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub pos: [f64; 2],
    pub weight: f64,
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    pub sigma_nn: f64,
    pub sigma_nt: f64,
    pub v_n: f64,
    pub v_t: f64,
}

#[derive(Debug, Clone)]
pub struct BoundaryTraces {
    /// Quadrature points, flattened in contact-edge order.
    pub qps: Vec<TracePoint>,
    /// Contact Lagrange nodes; stress is the average over adjacent
    /// boundary elements.
    pub nodes: Vec<TracePoint>,
}

pub fn boundary_stress_trace(space: &FeSpace, mat: &MaterialParams, u: &[f64]) -> BoundaryTraces {
    assert_eq!(u.len(), space.n_dof());
    let mut qps = Vec::with_capacity(space.n_contact_qps());
    for ce in &space.contact_edges {
        for sp in &ce.qps {
            let (snn, snt) =
                stencil_stress(&ce.cell_nodes, &sp.grad, sp.normal, sp.tangent, mat, u);
            let mut v = [0.0f64; 2];
            for (i, &node) in ce.cell_nodes.iter().enumerate() {
                v[0] += sp.phi[i] * u[2 * node];
                v[1] += sp.phi[i] * u[2 * node + 1];
            }
            qps.push(TracePoint {
                pos: sp.pos,
                weight: sp.weight,
                normal: sp.normal,
                tangent: sp.tangent,
                sigma_nn: snn,
                sigma_nt: snt,
                v_n: v[0] * sp.normal[0] + v[1] * sp.normal[1],
                v_t: v[0] * sp.tangent[0] + v[1] * sp.tangent[1],
            });
        }
    }
    let mut nodes = Vec::with_capacity(space.contact_nodes.len());
    for cn in &space.contact_nodes {
        let mut snn = 0.0;
        let mut snt = 0.0;
        for (cell_nodes, grad) in &cn.stress_stencils {
            let (a, b) = stencil_stress(cell_nodes, grad, cn.normal, cn.tangent, mat, u);
            snn += a;
            snt += b;
        }
        let m = cn.stress_stencils.len().max(1) as f64;
        let v = [u[2 * cn.node], u[2 * cn.node + 1]];
        nodes.push(TracePoint {
            pos: cn.pos,
            weight: 0.0,
            normal: cn.normal,
            tangent: cn.tangent,
            sigma_nn: snn / m,
            sigma_nt: snt / m,
            v_n: v[0] * cn.normal[0] + v[1] * cn.normal[1],
            v_t: v[0] * cn.tangent[0] + v[1] * cn.tangent[1],
        });
    }
    BoundaryTraces { qps, nodes }
}

fn assemble_cellwise(
    space: &FeSpace,
    order: usize,
    mut local: impl FnMut(&[f64], &[[f64; 2]], f64, &mut [f64]),
) -> CsrMatrix {
    let n = space.n_dof();
    let rule = triangle_rule(order);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (ci, cell) in space.cells.iter().enumerate() {
        let t = &space.mesh.triangles[ci];
        let verts = [
            space.mesh.nodes[t[0]],
            space.mesh.nodes[t[1]],
            space.mesh.nodes[t[2]],
        ];
        let (g, det) = tri_geometry(&verts);
        let area = 0.5 * det;
        let nd = 2 * cell.len();
        let mut k = vec![0.0; nd * nd];
        for &(lam, w) in &rule {
            let (phi, grad) = eval_basis(space.degree, lam, &g);
            local(&phi, &grad, w * area, &mut k);
        }
        for (li, &ni) in cell.iter().enumerate() {
            for ci2 in 0..2 {
                for (lj, &nj) in cell.iter().enumerate() {
                    for cj in 0..2 {
                        // keep exact zeros: the pattern must depend only on
                        // connectivity so it can be shared across assemblies
                        let v = k[(2 * li + ci2) * nd + 2 * lj + cj];
                        triplets.push((2 * ni + ci2, 2 * nj + cj, v));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Plane-strain elasticity stiffness: integral of sigma(u) : epsilon(v).
pub fn assemble_elasticity_with_order(
    space: &FeSpace,
    mat: &MaterialParams,
    order: usize,
) -> CsrMatrix {
    let (lam, mu) = (mat.lame_lambda, mat.lame_mu);
    assemble_cellwise(space, order, |_phi, grad, w, k| {
        let nl = grad.len();
        let nd = 2 * nl;
        for i in 0..nl {
            for c in 0..2 {
                for j in 0..nl {
                    for d in 0..2 {
                        let mut v = lam * grad[i][c] * grad[j][d] + mu * grad[i][d] * grad[j][c];
                        if c == d {
                            v += mu * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                        }
                        k[(2 * i + c) * nd + 2 * j + d] += w * v;
                    }
                }
            }
        }
    })
}

pub fn assemble_elasticity(space: &FeSpace, mat: &MaterialParams) -> CsrMatrix {
    assemble_elasticity_with_order(space, mat, TRI_VOLUME_ORDER)
}

/// Vector-field mass matrix (L2 Gram).
pub fn assemble_mass(space: &FeSpace) -> CsrMatrix {
    assemble_cellwise(space, TRI_VOLUME_ORDER, |phi, _grad, w, k| {
        let nl = phi.len();
        let nd = 2 * nl;
        for i in 0..nl {
            for j in 0..nl {
                let v = w * phi[i] * phi[j];
                k[(2 * i) * nd + 2 * j] += v;
                k[(2 * i + 1) * nd + 2 * j + 1] += v;
            }
        }
    })
}

/// Gradient Gram matrix: integral of grad u : grad v.
pub fn assemble_grad_gram(space: &FeSpace) -> CsrMatrix {
    assemble_cellwise(space, TRI_VOLUME_ORDER, |_phi, grad, w, k| {
        let nl = grad.len();
        let nd = 2 * nl;
        for i in 0..nl {
            for j in 0..nl {
                let v = w * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
                k[(2 * i) * nd + 2 * j] += v;
                k[(2 * i + 1) * nd + 2 * j + 1] += v;
            }
        }
    })
}

/// Gram matrix of the norm |v|_L2^2 + l^2 |grad v|_L2^2.
pub fn assemble_h1_gram(space: &FeSpace, char_length: f64) -> CsrMatrix {
    let l2 = char_length * char_length;
    assemble_cellwise(space, TRI_VOLUME_ORDER, |phi, grad, w, k| {
        let nl = phi.len();
        let nd = 2 * nl;
        for i in 0..nl {
            for j in 0..nl {
                let v = w
                    * (phi[i] * phi[j]
                        + l2 * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]));
                k[(2 * i) * nd + 2 * j] += v;
                k[(2 * i + 1) * nd + 2 * j + 1] += v;
            }
        }
    })
}

pub fn assemble_load(space: &FeSpace, body_force: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let rule = triangle_rule(TRI_VOLUME_ORDER);
    let mut f = vec![0.0; space.n_dof()];
    for (ci, cell) in space.cells.iter().enumerate() {
        let t = &space.mesh.triangles[ci];
        let verts = [
            space.mesh.nodes[t[0]],
            space.mesh.nodes[t[1]],
            space.mesh.nodes[t[2]],
        ];
        let (g, det) = tri_geometry(&verts);
        let area = 0.5 * det;
        for &(lam, w) in &rule {
            let pos = [
                lam[0] * verts[0][0] + lam[1] * verts[1][0] + lam[2] * verts[2][0],
                lam[0] * verts[0][1] + lam[1] * verts[1][1] + lam[2] * verts[2][1],
            ];
            let (phi, _) = eval_basis(space.degree, lam, &g);
            let fv = body_force(pos);
            for (li, &node) in cell.iter().enumerate() {
                f[2 * node] += w * area * phi[li] * fv[0];
                f[2 * node + 1] += w * area * phi[li] * fv[1];
            }
        }
    }
    f
}

/// Symmetric elimination of prescribed DOF values. Keeps the sparsity
/// pattern (entries are zeroed, not removed), so a symbolic factorization
/// of the original pattern stays valid.
pub fn apply_dirichlet_in_place(a: &mut CsrMatrix, rhs: &mut [f64], bc: &[(usize, f64)]) {
    let n = a.n_rows;
    let mut is_bc = vec![false; n];
    let mut val = vec![0.0; n];
    for &(dof, g) in bc {
        is_bc[dof] = true;
        val[dof] = g;
    }
    for i in 0..n {
        let (start, end) = (a.indptr[i], a.indptr[i + 1]);
        if is_bc[i] {
            for p in start..end {
                a.data[p] = if a.indices[p] == i { 1.0 } else { 0.0 };
            }
            rhs[i] = val[i];
        } else {
            for p in start..end {
                let j = a.indices[p];
                if is_bc[j] {
                    rhs[i] -= a.data[p] * val[j];
                    a.data[p] = 0.0;
                }
            }
        }
    }
}

pub fn apply_dirichlet(a: &CsrMatrix, rhs: &[f64], bc: &[(usize, f64)]) -> (CsrMatrix, Vec<f64>) {
    let mut a2 = a.clone();
    let mut r2 = rhs.to_vec();
    apply_dirichlet_in_place(&mut a2, &mut r2, bc);
    (a2, r2)
}
