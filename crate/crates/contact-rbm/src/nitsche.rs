//! Nitsche-type contact operators for the frictionless, Tresca and Coulomb
//! problems, the generalized Newton iteration, and the associated energy
//! functionals.
//!
//! The nonlinearity lives in boundary terms built from the operators
//! P^n_{g}(v) = sigma_nn(v) - gamma (v_n - g), P^n_0(v) = sigma_nn(v) -
//! gamma v_n and P^t(v) = sigma_nt(v) - gamma v_t. The tangent of the
//! residual is A_gamma + B_gamma(w), where B switches quadrature points on
//! and off through the Heaviside of -P^n_g(w) (and, with friction, the
//! jacobian of the ball projection of P^t(w)).

use crate::error::{Error, Result};
use crate::fem::{
    self, assemble_elasticity, assemble_h1_gram, boundary_stress_trace, trace_rows, FeSpace,
    MaterialParams,
};
use crate::linalg::{gram_norm, CsrMatrix, LdlSolver};

#[derive(Debug, Clone, Copy)]
pub struct NitscheParams {
    pub gamma0: f64,
    /// gamma = gamma0 / h, uniform over the contact boundary.
    pub gamma: f64,
    pub mesh_size_h: f64,
}

impl NitscheParams {
    pub fn new(gamma0: f64, mesh_size_h: f64) -> NitscheParams {
        let gamma = gamma0 / mesh_size_h;
        assert!(gamma > 0.0, "gamma must be positive");
        NitscheParams {
            gamma0,
            gamma,
            mesh_size_h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrictionModel {
    Frictionless,
    /// Tresca friction with a fixed threshold s > 0 (Pa).
    Tresca(f64),
    /// Coulomb friction with coefficient nu_F > 0; solved by a fixed point
    /// over Tresca problems (see `solve_coulomb`).
    Coulomb(f64),
}

impl FrictionModel {
    pub fn validate(&self) {
        match *self {
            FrictionModel::Frictionless => {}
            FrictionModel::Tresca(s) => assert!(s > 0.0, "Tresca threshold must be positive"),
            FrictionModel::Coulomb(nu) => assert!(nu > 0.0, "Coulomb coefficient must be positive"),
        }
    }

    /// Whether A_gamma carries the full sigma(u)n . sigma(v)n correction
    /// (friction) or only the sigma_nn sigma_nn part (frictionless).
    pub(crate) fn full_trace(&self) -> bool {
        !matches!(self, FrictionModel::Frictionless)
    }
}

/// Gap to the rigid obstacle, sampled at contact quadrature points and
/// contact nodes (aligned with `FeSpace::contact_edges` / `contact_nodes`).
#[derive(Debug, Clone)]
pub struct GapField {
    pub qps: Vec<f64>,
    pub nodes: Vec<f64>,
}

/// Sentinel gap for boundary points whose normal ray misses the obstacle.
pub const GAP_SENTINEL: f64 = 1e3;

impl GapField {
    pub fn from_fn(space: &FeSpace, f: impl Fn([f64; 2], [f64; 2]) -> f64) -> GapField {
        let mut qps = Vec::with_capacity(space.n_contact_qps());
        for ce in &space.contact_edges {
            for qp in &ce.qps {
                qps.push(f(qp.pos, qp.normal));
            }
        }
        let nodes = space
            .contact_nodes
            .iter()
            .map(|cn| f(cn.pos, cn.normal))
            .collect();
        GapField { qps, nodes }
    }
}

/// Gap along the outward normal to a rigid disk: the smallest t >= 0 with
/// x + t n on the disk boundary, or the sentinel if the ray misses it.
pub fn rigid_disk_gap(space: &FeSpace, center: [f64; 2], radius: f64) -> GapField {
    GapField::from_fn(space, |x, n| {
        let d = [center[0] - x[0], center[1] - x[1]];
        let dn = d[0] * n[0] + d[1] * n[1];
        let disc = dn * dn - (d[0] * d[0] + d[1] * d[1]) + radius * radius;
        if disc < 0.0 {
            return GAP_SENTINEL;
        }
        let t = dn - disc.sqrt();
        if t.is_finite() && t > -radius {
            t
        } else {
            GAP_SENTINEL
        }
    })
}

pub fn neg_part(z: f64) -> f64 {
    z.min(0.0)
}

/// Projection of x onto the ball of radius r (scalar in 2D problems).
pub fn proj_ball(x: f64, r: f64) -> f64 {
    if x.abs() <= r {
        x
    } else {
        r * x.signum()
    }
}

/// Derivative of `proj_ball` in the threshold; the outside branch vanishes
/// identically for a scalar tangential trace.
pub fn ball_proj_jacobian(x: f64, s: f64) -> f64 {
    if x.abs() <= s {
        1.0
    } else {
        0.0
    }
}

/// H(z) = 1 for z >= 0: a quadrature point with P^n_g = 0 counts as active.
fn heaviside(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ContactTracePoint {
    pub sigma_nn: f64,
    pub sigma_ntau: f64,
    pub v_n: f64,
    pub v_tau: f64,
    pub p_n_gamma_g: f64,
    pub p_n_gamma_0: f64,
    pub p_tau: f64,
}

/// Per-quadrature-point traces and Nitsche operator values.
#[derive(Debug, Clone)]
pub struct ContactTrace {
    pub points: Vec<ContactTracePoint>,
}

pub fn eval_contact_traces(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    gap: &GapField,
    u: &[f64],
) -> ContactTrace {
    let raw = boundary_stress_trace(space, mat, u);
    let g = nitsche.gamma;
    let points = raw
        .qps
        .iter()
        .zip(&gap.qps)
        .map(|(pt, &gap_v)| ContactTracePoint {
            sigma_nn: pt.sigma_nn,
            sigma_ntau: pt.sigma_nt,
            v_n: pt.v_n,
            v_tau: pt.v_t,
            p_n_gamma_g: pt.sigma_nn - g * (pt.v_n - gap_v),
            p_n_gamma_0: pt.sigma_nn - g * pt.v_n,
            p_tau: pt.sigma_nt - g * pt.v_t,
        })
        .collect();
    ContactTrace { points }
}

/// Precomputed per-quadrature-point linear functionals on one contact edge.
/// `dofs` are the global vector DOFs of the adjacent cell; each row vector
/// is laid out to match.
pub struct EdgeRows {
    pub dofs: Vec<usize>,
    pub qps: Vec<QpRows>,
}

pub struct QpRows {
    pub weight: f64,
    pub snn: Vec<f64>,
    pub snt: Vec<f64>,
    pub vn: Vec<f64>,
    pub vt: Vec<f64>,
}

pub fn contact_edge_rows(space: &FeSpace, mat: &MaterialParams) -> Vec<EdgeRows> {
    space
        .contact_edges
        .iter()
        .map(|ce| {
            let mut dofs = Vec::with_capacity(2 * ce.cell_nodes.len());
            for &n in &ce.cell_nodes {
                dofs.push(2 * n);
                dofs.push(2 * n + 1);
            }
            let qps = ce
                .qps
                .iter()
                .map(|sp| {
                    let r = trace_rows(sp, mat);
                    QpRows {
                        weight: sp.weight,
                        snn: r.snn,
                        snt: r.snt,
                        vn: r.vn,
                        vt: r.vt,
                    }
                })
                .collect();
            EdgeRows { dofs, qps }
        })
        .collect()
}

/// Tangential threshold at each contact quadrature point.
#[derive(Clone)]
pub(crate) enum Thresh<'a> {
    /// No tangential terms at all (frictionless).
    None,
    Uniform(f64),
    Field(&'a [f64]),
}

impl Thresh<'_> {
    pub(crate) fn at(&self, qp: usize) -> Option<f64> {
        match self {
            Thresh::None => None,
            Thresh::Uniform(s) => Some(*s),
            Thresh::Field(f) => Some(f[qp]),
        }
    }
}

/// Per-quadrature-point contact/slip state, mirroring the conventions of
/// the tangent assembly: active means -P^n_{gamma,g} >= 0, slip means
/// |P^tau| above the threshold.  While this vector repeats between
/// iterates the generalized Newton map is affine.
pub(crate) fn contact_classification(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    gap: &GapField,
    thresh: &Thresh,
    u: &[f64],
) -> Vec<u8> {
    let tr = eval_contact_traces(space, mat, nitsche, gap, u);
    tr.points
        .iter()
        .enumerate()
        .map(|(q, pt)| {
            let active = pt.p_n_gamma_g <= 0.0;
            let slip = thresh.at(q).is_some_and(|s| pt.p_tau.abs() > s);
            (active as u8) | ((slip as u8) << 1)
        })
        .collect()
}

pub(crate) fn friction_thresh(friction: &FrictionModel) -> Thresh<'static> {
    friction.validate();
    match *friction {
        FrictionModel::Frictionless => Thresh::None,
        FrictionModel::Tresca(s) => Thresh::Uniform(s),
        FrictionModel::Coulomb(_) => panic!(
            "Coulomb friction has no fixed threshold; assemble via solve_coulomb's fixed point"
        ),
    }
}

fn rank1(dofs: &[usize], row: &[f64], c: f64, out: &mut Vec<(usize, usize, f64)>) {
    for (i, &di) in dofs.iter().enumerate() {
        if row[i] == 0.0 {
            continue;
        }
        for (j, &dj) in dofs.iter().enumerate() {
            out.push((di, dj, c * row[i] * row[j]));
        }
    }
}

fn trace_correction_triplets(
    edges: &[EdgeRows],
    gamma: f64,
    full_trace: bool,
    sign: f64,
    out: &mut Vec<(usize, usize, f64)>,
) {
    for er in edges {
        for qp in &er.qps {
            let c = sign * (qp.weight / gamma);
            rank1(&er.dofs, &qp.snn, c, out);
            if full_trace {
                rank1(&er.dofs, &qp.snt, c, out);
            }
        }
    }
}

fn a_gamma_triplets(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    full_trace: bool,
) -> Vec<(usize, usize, f64)> {
    let mut t = assemble_elasticity(space, mat).triplets();
    trace_correction_triplets(
        &contact_edge_rows(space, mat),
        nitsche.gamma,
        full_trace,
        -1.0,
        &mut t,
    );
    t
}

/// The 1/gamma stress-trace form subtracted from the elasticity operator,
/// with positive sign.  Exposed separately because it carries the entire
/// geometric parameter dependence of the linear part.
pub fn assemble_trace_correction(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    full_trace: bool,
) -> CsrMatrix {
    let mut t = Vec::new();
    trace_correction_triplets(
        &contact_edge_rows(space, mat),
        nitsche.gamma,
        full_trace,
        1.0,
        &mut t,
    );
    CsrMatrix::from_triplets(space.n_dof(), space.n_dof(), &t)
}

/// A_gamma = elasticity minus the 1/gamma boundary correction (sigma_nn part
/// only when frictionless, full normal trace with friction).
pub fn assemble_a_gamma(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    friction: &FrictionModel,
) -> CsrMatrix {
    let n = space.n_dof();
    let t = a_gamma_triplets(space, mat, nitsche, friction.full_trace());
    CsrMatrix::from_triplets(n, n, &t)
}

/// Which contact directions a state-dependent assembly covers.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Parts {
    pub normal: bool,
    pub tangential: bool,
}

impl Parts {
    pub(crate) const BOTH: Parts = Parts {
        normal: true,
        tangential: true,
    };
    pub(crate) const NORMAL: Parts = Parts {
        normal: true,
        tangential: false,
    };
    pub(crate) const TANGENTIAL: Parts = Parts {
        normal: false,
        tangential: true,
    };
}

/// Tangent contributions of a single contact edge, `qp_base` being the
/// global index of its first quadrature point.  The full assembly and the
/// per-entry local evaluation both run through here so their floating-point
/// results coincide bit for bit.
pub(crate) fn edge_b_triplets(
    er: &EdgeRows,
    qp_base: usize,
    gamma: f64,
    gap: &GapField,
    w: &[f64],
    thresh: &Thresh,
    parts: Parts,
    out: &mut Vec<(usize, usize, f64)>,
) {
    let g = gamma;
    let mut scratch: Vec<f64> = Vec::new();
    for (local, qp) in er.qps.iter().enumerate() {
        let qp_idx = qp_base + local;
        let c = qp.weight / g;
        // normal part: H(-P^n_g(w)) P^n_0 x P^n_0
        if parts.normal {
            let mut pn0w = 0.0;
            for (i, &d) in er.dofs.iter().enumerate() {
                pn0w += (qp.snn[i] - g * qp.vn[i]) * w[d];
            }
            let png = pn0w + g * gap.qps[qp_idx];
            if heaviside(-png) > 0.0 {
                scratch.clear();
                scratch.extend(qp.snn.iter().zip(&qp.vn).map(|(s, v)| s - g * v));
                rank1(&er.dofs, &scratch, c, out);
            }
        }
        // tangential part: G_s(P^t(w)) P^t x P^t
        if parts.tangential {
            if let Some(s) = thresh.at(qp_idx) {
                if s > 0.0 {
                    let mut ptw = 0.0;
                    for (i, &d) in er.dofs.iter().enumerate() {
                        ptw += (qp.snt[i] - g * qp.vt[i]) * w[d];
                    }
                    if ball_proj_jacobian(ptw, s) > 0.0 {
                        scratch.clear();
                        scratch.extend(qp.snt.iter().zip(&qp.vt).map(|(t, v)| t - g * v));
                        rank1(&er.dofs, &scratch, c, out);
                    }
                }
            }
        }
    }
}

fn b_gamma_triplets(
    edges: &[EdgeRows],
    nitsche: &NitscheParams,
    gap: &GapField,
    w: &[f64],
    thresh: &Thresh,
    out: &mut Vec<(usize, usize, f64)>,
) {
    let mut qp_base = 0;
    for er in edges {
        edge_b_triplets(
            er,
            qp_base,
            nitsche.gamma,
            gap,
            w,
            thresh,
            Parts::BOTH,
            out,
        );
        qp_base += er.qps.len();
    }
}

/// B_gamma(w): the state-dependent part of the residual's tangent.
pub fn assemble_b_gamma(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    friction: &FrictionModel,
    gap: &GapField,
    w: &[f64],
) -> CsrMatrix {
    let thresh = friction_thresh(friction);
    let edges = contact_edge_rows(space, mat);
    let mut t = Vec::new();
    b_gamma_triplets(&edges, nitsche, gap, w, &thresh, &mut t);
    CsrMatrix::from_triplets(space.n_dof(), space.n_dof(), &t)
}

/// Residual contributions of a single contact edge, emitted as ordered
/// (dof, increment) updates so scattered and entry-local evaluation add the
/// same numbers in the same order.
pub(crate) fn edge_theta_updates(
    er: &EdgeRows,
    qp_base: usize,
    gamma: f64,
    gap: &GapField,
    w: &[f64],
    thresh: &Thresh,
    parts: Parts,
    out: &mut Vec<(usize, f64)>,
) {
    let g = gamma;
    for (local, qp) in er.qps.iter().enumerate() {
        let qp_idx = qp_base + local;
        let c = qp.weight / g;
        let mut pn0w = 0.0;
        let mut ptw = 0.0;
        for (i, &d) in er.dofs.iter().enumerate() {
            pn0w += (qp.snn[i] - g * qp.vn[i]) * w[d];
            ptw += (qp.snt[i] - g * qp.vt[i]) * w[d];
        }
        if parts.normal {
            let png_neg = neg_part(pn0w + g * gap.qps[qp_idx]);
            if png_neg != 0.0 {
                for (i, &d) in er.dofs.iter().enumerate() {
                    out.push((d, c * png_neg * (qp.snn[i] - g * qp.vn[i])));
                }
            }
        }
        if parts.tangential {
            if let Some(s) = thresh.at(qp_idx) {
                let pts = if s > 0.0 { proj_ball(ptw, s) } else { 0.0 };
                if pts != 0.0 {
                    for (i, &d) in er.dofs.iter().enumerate() {
                        out.push((d, c * pts * (qp.snt[i] - g * qp.vt[i])));
                    }
                }
            }
        }
    }
}

fn theta_gamma_vec(
    edges: &[EdgeRows],
    nitsche: &NitscheParams,
    gap: &GapField,
    w: &[f64],
    thresh: &Thresh,
    n_dof: usize,
) -> Vec<f64> {
    let mut theta = vec![0.0; n_dof];
    let mut updates = Vec::new();
    let mut qp_base = 0;
    for er in edges {
        updates.clear();
        edge_theta_updates(
            er,
            qp_base,
            nitsche.gamma,
            gap,
            w,
            thresh,
            Parts::BOTH,
            &mut updates,
        );
        for &(d, v) in &updates {
            theta[d] += v;
        }
        qp_base += er.qps.len();
    }
    theta
}

/// Theta_gamma(w): the nonlinear boundary term of the residual.
pub fn assemble_theta_gamma(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    friction: &FrictionModel,
    gap: &GapField,
    w: &[f64],
) -> Vec<f64> {
    let thresh = friction_thresh(friction);
    let edges = contact_edge_rows(space, mat);
    theta_gamma_vec(&edges, nitsche, gap, w, &thresh, space.n_dof())
}

/// R(w) = A_gamma w + Theta_gamma(w) - F, with Dirichlet rows zeroed.
pub fn residual(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    friction: &FrictionModel,
    gap: &GapField,
    w: &[f64],
    f: &[f64],
) -> Vec<f64> {
    let a = assemble_a_gamma(space, mat, nitsche, friction);
    let theta = assemble_theta_gamma(space, mat, nitsche, friction, gap, w);
    let mut r = a.matvec(w);
    for i in 0..r.len() {
        r[i] += theta[i] - f[i];
    }
    for d in space.dirichlet_dofs() {
        r[d] = 0.0;
    }
    r
}

#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    pub delta_u: f64,
    pub max_iter: usize,
}

impl Default for SolveConfig {
    fn default() -> SolveConfig {
        SolveConfig {
            delta_u: 1e-8,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u_cv: Vec<f64>,
    pub k_cv: usize,
    pub converged: bool,
    /// U_1 .. U_{k_cv} (post-update iterates, used for collateral training).
    pub iterates: Vec<Vec<f64>>,
    /// Relative V-norm change per iteration.
    pub change_history: Vec<f64>,
}

pub(crate) fn solve_with_threshold(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    full_trace: bool,
    thresh: &Thresh,
    gap: &GapField,
    bc: &[(usize, f64)],
    f: &[f64],
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    assert!(cfg.delta_u > 0.0 && cfg.max_iter >= 1);
    let n = space.n_dof();
    let edges = contact_edge_rows(space, mat);
    let a_el = assemble_elasticity(space, mat);
    let a_gamma = CsrMatrix::from_triplets(n, n, &a_gamma_triplets(space, mat, nitsche, full_trace));
    let w_gram = assemble_h1_gram(space, 1.0);

    // The elasticity, A_gamma and tangent patterns coincide (contact pairs
    // live inside boundary cells), so one symbolic analysis serves all.
    let mut solver = LdlSolver::analyze(&a_el);

    // Initial iterate: linear elasticity with the Dirichlet data, contact
    // terms dropped.
    let (a0, rhs0) = fem::apply_dirichlet(&a_el, f, bc);
    solver.factor(&a0)?;
    let mut u = solver.solve_refined(&a0, &rhs0);

    let bc_zero: Vec<(usize, f64)> = bc.iter().map(|&(d, _)| (d, 0.0)).collect();
    let mut iterates = Vec::new();
    let mut change_history = Vec::new();
    let mut last_change = f64::INFINITY;
    // Step damping for the semismooth iteration.  The active/stick
    // partition can land on a cycle where a handful of quadrature points
    // flip state every iteration; shrinking the step breaks the cycle.
    // Once the partition repeats, the iteration map is affine and a full
    // step finishes it, so damping is dropped for one probe step; if the
    // full step flips the partition again, the probe failed and halving
    // resumes from the pre-probe step size.
    let mut alpha = 1.0f64;
    let mut alpha_saved: Option<f64> = None;
    let mut prev_rel = f64::INFINITY;
    let mut prev_class: Option<Vec<u8>> = None;
    for k in 0..cfg.max_iter {
        // residual at the current iterate
        let theta = theta_gamma_vec(&edges, nitsche, gap, &u, thresh, n);
        let au = a_gamma.matvec(&u);
        let mut rhs: Vec<f64> = (0..n).map(|i| f[i] - au[i] - theta[i]).collect();
        // tangent = A_gamma + B_gamma(u)
        let mut tangent = a_gamma.clone();
        let mut bt = Vec::new();
        b_gamma_triplets(&edges, nitsche, gap, &u, thresh, &mut bt);
        for (i, j, v) in bt {
            let p = tangent
                .entry_index(i, j)
                .expect("contact pairs are inside the volume pattern");
            tangent.data[p] += v;
        }
        fem::apply_dirichlet_in_place(&mut tangent, &mut rhs, &bc_zero);
        solver.factor(&tangent)?;
        let du = solver.solve_refined(&tangent, &rhs);
        for i in 0..n {
            u[i] += alpha * du[i];
        }
        let change = alpha * gram_norm(&w_gram, &du);
        let denom = gram_norm(&w_gram, &u);
        let rel = if denom > 0.0 { change / denom } else { change };
        let class = contact_classification(space, mat, nitsche, gap, thresh, &u);
        if prev_class.as_ref() == Some(&class) {
            if alpha_saved.is_none() {
                alpha_saved = Some(alpha);
            }
            alpha = 1.0;
        } else if let Some(s) = alpha_saved.take() {
            alpha = (0.5 * s).max(1.0 / 256.0);
        } else if rel > 0.9 * prev_rel {
            alpha = (0.5 * alpha).max(1.0 / 256.0);
        } else if rel < 0.5 * prev_rel {
            alpha = (2.0 * alpha).min(1.0);
        }
        prev_class = Some(class);
        prev_rel = rel;
        iterates.push(u.clone());
        change_history.push(rel);
        last_change = rel;
        if rel <= cfg.delta_u {
            return Ok(SolveResult {
                u_cv: u,
                k_cv: k + 1,
                converged: true,
                iterates,
                change_history,
            });
        }
    }
    Err(Error::NonConvergence {
        iters: cfg.max_iter,
        last_change,
    })
}

/// Generalized Newton iteration for the frictionless or Tresca problem.
/// `bc` holds the Dirichlet (dof, value) pairs; `f` the load vector.
pub fn solve_nitsche(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    friction: &FrictionModel,
    gap: &GapField,
    bc: &[(usize, f64)],
    f: &[f64],
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    let thresh = friction_thresh(friction);
    solve_with_threshold(
        space,
        mat,
        nitsche,
        friction.full_trace(),
        &thresh,
        gap,
        bc,
        f,
        cfg,
    )
}

#[derive(Debug, Clone, Copy)]
pub struct Energies {
    /// (1/2) a(v,v) - f(v)
    pub j: f64,
    /// j minus the sigma_nn correction plus the negative-part penalty.
    pub j_nitsche: f64,
    /// Tresca variant with the tangential reformulation terms.
    pub j_f_nitsche: Option<f64>,
}

pub fn energy(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    friction: &FrictionModel,
    gap: &GapField,
    f: &[f64],
    u: &[f64],
) -> Energies {
    let a = assemble_elasticity(space, mat);
    let fv: f64 = f.iter().zip(u).map(|(a, b)| a * b).sum();
    let j = 0.5 * a.bilinear(u, u) - fv;
    let g = nitsche.gamma;
    let traces = eval_contact_traces(space, mat, nitsche, gap, u);
    let mut qp_weights = Vec::with_capacity(traces.points.len());
    for ce in &space.contact_edges {
        for qp in &ce.qps {
            qp_weights.push(qp.weight);
        }
    }
    let mut corr_nn = 0.0;
    let mut pen_n = 0.0;
    let mut corr_nt = 0.0;
    let mut tang = 0.0;
    let s_opt = match friction {
        FrictionModel::Tresca(s) => Some(*s),
        _ => None,
    };
    for (pt, &w) in traces.points.iter().zip(&qp_weights) {
        corr_nn += w / g * pt.sigma_nn * pt.sigma_nn;
        pen_n += w / g * neg_part(pt.p_n_gamma_g).powi(2);
        corr_nt += w / g * pt.sigma_ntau * pt.sigma_ntau;
        if let Some(s) = s_opt {
            let d = pt.p_tau - proj_ball(pt.p_tau, s);
            tang += w / g * (pt.p_tau * pt.p_tau - d * d);
        }
    }
    let j_nitsche = j - 0.5 * corr_nn + 0.5 * pen_n;
    let j_f_nitsche = s_opt.map(|_| j_nitsche - 0.5 * corr_nt + 0.5 * tang);
    Energies {
        j,
        j_nitsche,
        j_f_nitsche,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoulombConfig {
    pub delta_fp: f64,
    pub max_outer: usize,
    pub inner: SolveConfig,
}

impl Default for CoulombConfig {
    fn default() -> CoulombConfig {
        CoulombConfig {
            delta_fp: 1e-6,
            max_outer: 100,
            inner: SolveConfig::default(),
        }
    }
}

/// Coulomb friction as a fixed point over Tresca problems: each outer step
/// solves with the pointwise threshold s = nu_F |[P^n_g(u_prev)]_-|, frozen
/// from the previous outer iterate.
pub fn solve_coulomb(
    space: &FeSpace,
    mat: &MaterialParams,
    nitsche: &NitscheParams,
    nu_f: f64,
    gap: &GapField,
    bc: &[(usize, f64)],
    f: &[f64],
    cfg: &CoulombConfig,
) -> Result<SolveResult> {
    assert!(nu_f > 0.0, "Coulomb coefficient must be positive");
    let w_gram = assemble_h1_gram(space, 1.0);
    let n_qp = space.n_contact_qps();
    let mut s_field = vec![0.0; n_qp];
    let mut u_prev: Option<Vec<f64>> = None;
    let mut last_change = f64::INFINITY;
    for _ in 0..cfg.max_outer {
        let result = solve_with_threshold(
            space,
            mat,
            nitsche,
            true,
            &Thresh::Field(&s_field),
            gap,
            bc,
            f,
            &cfg.inner,
        )?;
        let u = result.u_cv.clone();
        if let Some(prev) = &u_prev {
            let diff: Vec<f64> = u.iter().zip(prev).map(|(a, b)| a - b).collect();
            let denom = gram_norm(&w_gram, &u);
            let change = gram_norm(&w_gram, &diff);
            let rel = if denom > 0.0 { change / denom } else { change };
            last_change = rel;
            if rel <= cfg.delta_fp {
                return Ok(result);
            }
        }
        let traces = eval_contact_traces(space, mat, nitsche, gap, &u);
        for (i, pt) in traces.points.iter().enumerate() {
            s_field[i] = nu_f * neg_part(pt.p_n_gamma_g).abs();
        }
        u_prev = Some(u);
    }
    Err(Error::NonConvergence {
        iters: cfg.max_outer,
        last_change,
    })
}

/// A fully assembled contact problem instance on one (possibly mapped) mesh.
#[derive(Debug, Clone)]
pub struct ContactProblem {
    pub space: FeSpace,
    pub mat: MaterialParams,
    pub nitsche: NitscheParams,
    pub friction: FrictionModel,
    pub gap: GapField,
    pub bc: Vec<(usize, f64)>,
    pub f: Vec<f64>,
}

impl ContactProblem {
    pub fn solve(&self, cfg: &SolveConfig) -> Result<SolveResult> {
        match self.friction {
            FrictionModel::Coulomb(nu_f) => {
                let ccfg = CoulombConfig {
                    inner: *cfg,
                    ..CoulombConfig::default()
                };
                solve_coulomb(
                    &self.space,
                    &self.mat,
                    &self.nitsche,
                    nu_f,
                    &self.gap,
                    &self.bc,
                    &self.f,
                    &ccfg,
                )
            }
            _ => solve_nitsche(
                &self.space,
                &self.mat,
                &self.nitsche,
                &self.friction,
                &self.gap,
                &self.bc,
                &self.f,
                cfg,
            ),
        }
    }

    pub fn residual(&self, w: &[f64]) -> Vec<f64> {
        residual(
            &self.space,
            &self.mat,
            &self.nitsche,
            &self.friction,
            &self.gap,
            w,
            &self.f,
        )
    }

    pub fn traces(&self, u: &[f64]) -> ContactTrace {
        eval_contact_traces(&self.space, &self.mat, &self.nitsche, &self.gap, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{apply_mapping, build_reference_halfdisk, hertz_contact_arc, GeometricMapping};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn hertz_material() -> MaterialParams {
        MaterialParams::new(15.0, 0.35)
    }

    struct Setup {
        space: FeSpace,
        mat: MaterialParams,
        nitsche: NitscheParams,
        gap: GapField,
        bc: Vec<(usize, f64)>,
        f: Vec<f64>,
    }

    /// Paper-style setup: mapped half-disk pressed by d onto a rigid disk.
    fn hertz_setup(h: f64, degree: usize, mu_geom: f64, d: f64) -> Setup {
        let reference = build_reference_halfdisk(h, hertz_contact_arc()).unwrap();
        let mapped = apply_mapping(&reference, &GeometricMapping::scaling(mu_geom));
        let space = crate::fem::build_fe_space(&mapped, degree).unwrap();
        let mat = hertz_material();
        let nitsche = NitscheParams::new(50.0 * mat.lame_mu, h);
        let g0 = 0.001;
        let r2 = 1.0;
        let gap = rigid_disk_gap(&space, [0.0, -(mu_geom + g0 + r2)], r2);
        let bc: Vec<(usize, f64)> = space
            .dirichlet_nodes
            .iter()
            .flat_map(|&n| [(2 * n, 0.0), (2 * n + 1, -d)])
            .collect();
        let f = vec![0.0; space.n_dof()];
        Setup {
            space,
            mat,
            nitsche,
            gap,
            bc,
            f,
        }
    }

    #[test]
    fn pointwise_operators() {
        assert_eq!(neg_part(-3.0), -3.0);
        assert_eq!(neg_part(2.0), 0.0);
        assert_eq!(neg_part(0.0), 0.0);
        assert_eq!(proj_ball(0.05, 0.1), 0.05);
        assert_eq!(proj_ball(-5.0, 0.1), -0.1);
        assert_eq!(ball_proj_jacobian(0.05, 0.1), 1.0);
        assert_eq!(ball_proj_jacobian(5.0, 0.1), 0.0);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-10.0..10.0);
            let r: f64 = rng.random_range(0.01..2.0);
            assert!(proj_ball(x, r).abs() <= r + 1e-15);
        }
        // finite differences away from |x| = s
        let s = 0.3;
        for x in [0.5 * s, -0.5 * s, 2.0 * s, -2.0 * s] {
            let eps = 1e-7;
            let fd = (proj_ball(x + eps, s) - proj_ball(x - eps, s)) / (2.0 * eps);
            assert!((fd - ball_proj_jacobian(x, s)).abs() <= 1e-6);
        }
    }

    #[test]
    fn gap_at_pole_is_g0() {
        let setup = hertz_setup(0.25, 2, 1.0, 0.09);
        // pole node (0, -1): gap must be exactly g0
        let (idx, _) = setup
            .space
            .contact_nodes
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.pos[1].partial_cmp(&b.1.pos[1]).unwrap())
            .unwrap();
        assert!((setup.gap.nodes[idx] - 0.001).abs() <= 1e-12);
        for &g in setup.gap.qps.iter().chain(&setup.gap.nodes) {
            assert!(g >= 0.0);
        }
    }

    #[test]
    fn traces_at_zero_state() {
        let setup = hertz_setup(0.25, 2, 1.0, 0.09);
        let u = vec![0.0; setup.space.n_dof()];
        let tr = eval_contact_traces(&setup.space, &setup.mat, &setup.nitsche, &setup.gap, &u);
        for (pt, &g) in tr.points.iter().zip(&setup.gap.qps) {
            assert_eq!(pt.p_n_gamma_0, 0.0);
            assert_eq!(pt.p_tau, 0.0);
            assert!((pt.p_n_gamma_g - setup.nitsche.gamma * g).abs() <= 1e-9 * setup.nitsche.gamma);
        }
    }

    #[test]
    fn a_gamma_limits_and_friction_difference() {
        let setup = hertz_setup(0.25, 2, 1.0, 0.09);
        let a_el = assemble_elasticity(&setup.space, &setup.mat);
        let big = NitscheParams::new(1e12, setup.nitsche.mesh_size_h);
        let a_big = assemble_a_gamma(&setup.space, &setup.mat, &big, &FrictionModel::Frictionless);
        let diff = a_big.add_scaled(-1.0, &a_el);
        assert!(diff.max_abs() <= 1e-8 * a_el.max_abs());

        // frictionless and Tresca assemblies differ exactly by the
        // tangential-trace correction
        let a_fl = assemble_a_gamma(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &FrictionModel::Frictionless,
        );
        let a_tr = assemble_a_gamma(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &FrictionModel::Tresca(0.1),
        );
        let edges = contact_edge_rows(&setup.space, &setup.mat);
        let mut t = a_fl.triplets();
        for er in &edges {
            for qp in &er.qps {
                rank1(&er.dofs, &qp.snt, -qp.weight / setup.nitsche.gamma, &mut t);
            }
        }
        let rebuilt = CsrMatrix::from_triplets(a_fl.n_rows, a_fl.n_cols, &t);
        let d2 = rebuilt.add_scaled(-1.0, &a_tr);
        assert!(d2.max_abs() <= 1e-12 * a_tr.max_abs());
    }

    #[test]
    fn a_gamma_matches_dense_brute_force_on_boundary() {
        // independent oracle: boundary correction recomputed per quadrature
        // point from unit-vector stress traces
        let setup = hertz_setup(0.25, 1, 1.0, 0.09);
        let space = &setup.space;
        let a_el = assemble_elasticity(space, &setup.mat);
        let a_g = assemble_a_gamma(space, &setup.mat, &setup.nitsche, &FrictionModel::Frictionless);
        let corr = a_el.add_scaled(-1.0, &a_g); // = + boundary term
        let n = space.n_dof();
        let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
        for ce in &space.contact_edges {
            let mut dofs = Vec::new();
            for &nd in &ce.cell_nodes {
                dofs.push(2 * nd);
                dofs.push(2 * nd + 1);
            }
            for sp in &ce.qps {
                // unit-vector traces via the full trace evaluator
                let mut rows = vec![0.0; dofs.len()];
                for (i, &d) in dofs.iter().enumerate() {
                    let mut e = vec![0.0; n];
                    e[d] = 1.0;
                    let tr = boundary_stress_trace(space, &setup.mat, &e);
                    // locate this qp in the flattened trace output
                    let mut k = 0;
                    'outer: for ce2 in &space.contact_edges {
                        for sp2 in &ce2.qps {
                            if std::ptr::eq(sp2, sp) {
                                break 'outer;
                            }
                            k += 1;
                        }
                    }
                    rows[i] = tr.qps[k].sigma_nn;
                }
                for (i, &di) in dofs.iter().enumerate() {
                    for (j, &dj) in dofs.iter().enumerate() {
                        dense[(di, dj)] += sp.weight / setup.nitsche.gamma * rows[i] * rows[j];
                    }
                }
            }
        }
        let scale = setup.mat.young_e;
        for i in 0..n {
            let (cols, _) = corr.row(i);
            for &j in cols {
                assert!((corr.get(i, j) - dense[(i, j)]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn b_gamma_vanishes_without_contact() {
        let setup = hertz_setup(0.25, 2, 1.0, 0.09);
        let w = vec![0.0; setup.space.n_dof()];
        // g > 0 pointwise, so P^n_g(0) = gamma g > 0 and H(-...) = 0
        let b = assemble_b_gamma(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &FrictionModel::Frictionless,
            &setup.gap,
            &w,
        );
        assert_eq!(b.max_abs(), 0.0);
        let theta = assemble_theta_gamma(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &FrictionModel::Frictionless,
            &setup.gap,
            &w,
        );
        assert!(theta.iter().all(|&v| v == 0.0));
        // Tresca at w = 0: P^t(0) = 0, [0]_s = 0
        let theta_t = assemble_theta_gamma(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &FrictionModel::Tresca(0.1),
            &setup.gap,
            &w,
        );
        assert!(theta_t.iter().all(|&v| v == 0.0));
    }

    fn random_state(setup: &Setup, rng: &mut StdRng, amp: f64) -> Vec<f64> {
        let mut w: Vec<f64> = (0..setup.space.n_dof())
            .map(|_| rng.random_range(-amp..amp))
            .collect();
        for &(d, v) in &setup.bc {
            w[d] = v;
        }
        w
    }

    fn qp_kink_distance(setup: &Setup, friction: &FrictionModel, w: &[f64]) -> f64 {
        let tr = eval_contact_traces(&setup.space, &setup.mat, &setup.nitsche, &setup.gap, w);
        let mut dist = f64::INFINITY;
        for pt in &tr.points {
            dist = dist.min(pt.p_n_gamma_g.abs());
            if let FrictionModel::Tresca(s) = friction {
                dist = dist.min((pt.p_tau.abs() - s).abs());
            }
        }
        dist
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let setup = hertz_setup(0.25, 1, 1.0, 0.09);
        let mut rng = StdRng::seed_from_u64(42);
        for friction in [FrictionModel::Frictionless, FrictionModel::Tresca(0.1)] {
            let mut tested = 0;
            while tested < 3 {
                let w = random_state(&setup, &mut rng, 0.05);
                if qp_kink_distance(&setup, &friction, &w) < 1e-6 {
                    continue;
                }
                let a = assemble_a_gamma(&setup.space, &setup.mat, &setup.nitsche, &friction);
                let b = assemble_b_gamma(
                    &setup.space,
                    &setup.mat,
                    &setup.nitsche,
                    &friction,
                    &setup.gap,
                    &w,
                );
                let mut v: Vec<f64> = (0..setup.space.n_dof())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                for &(d, _) in &setup.bc {
                    v[d] = 0.0;
                }
                let eps = 1e-6 * crate::linalg::norm2(&w) / crate::linalg::norm2(&v);
                let wp: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
                let wm: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
                let rp = residual(
                    &setup.space, &setup.mat, &setup.nitsche, &friction, &setup.gap, &wp, &setup.f,
                );
                let rm = residual(
                    &setup.space, &setup.mat, &setup.nitsche, &friction, &setup.gap, &wm, &setup.f,
                );
                let mut jv = a.matvec(&v);
                let bv = b.matvec(&v);
                for i in 0..jv.len() {
                    jv[i] += bv[i];
                }
                for d in setup.space.dirichlet_dofs() {
                    jv[d] = 0.0;
                }
                let fd: Vec<f64> = rp
                    .iter()
                    .zip(&rm)
                    .map(|(p, m)| (p - m) / (2.0 * eps))
                    .collect();
                let scale = crate::linalg::norm2(&jv).max(1e-30);
                let err: f64 = jv
                    .iter()
                    .zip(&fd)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    / scale;
                assert!(err <= 1e-5, "tangent FD mismatch {err:.3e} ({friction:?})");
                tested += 1;
            }
        }
    }

    #[test]
    fn theta_matches_energy_gradient() {
        let setup = hertz_setup(0.25, 1, 1.0, 0.09);
        let mut rng = StdRng::seed_from_u64(11);
        let w = random_state(&setup, &mut rng, 0.05);
        let mut v: Vec<f64> = (0..setup.space.n_dof())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        for &(d, _) in &setup.bc {
            v[d] = 0.0;
        }
        let a = assemble_a_gamma(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &FrictionModel::Frictionless,
        );
        let theta = assemble_theta_gamma(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &FrictionModel::Frictionless,
            &setup.gap,
            &w,
        );
        let av = a.matvec(&v);
        let dir: f64 = av
            .iter()
            .zip(&w)
            .map(|(_, _)| 0.0)
            .sum::<f64>()
            + a.bilinear(&w, &v)
            + theta.iter().zip(&v).map(|(t, vi)| t * vi).sum::<f64>();
        let eps = 1e-6;
        let wp: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        let wm: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
        let ep = energy(
            &setup.space, &setup.mat, &setup.nitsche, &FrictionModel::Frictionless, &setup.gap,
            &setup.f, &wp,
        );
        let em = energy(
            &setup.space, &setup.mat, &setup.nitsche, &FrictionModel::Frictionless, &setup.gap,
            &setup.f, &wm,
        );
        let fd = (ep.j_nitsche - em.j_nitsche) / (2.0 * eps);
        assert!(
            (dir - fd).abs() <= 1e-6 * dir.abs().max(1.0),
            "energy gradient mismatch: {dir:.6e} vs {fd:.6e}"
        );
    }

    #[test]
    fn trivial_solves() {
        // zero Dirichlet data, zero load: converges immediately to zero
        let setup = hertz_setup(0.25, 1, 1.0, 0.0);
        let result = solve_nitsche(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &FrictionModel::Frictionless,
            &setup.gap,
            &setup.bc,
            &setup.f,
            &SolveConfig::default(),
        )
        .unwrap();
        assert!(result.converged);
        assert_eq!(result.k_cv, 1);
        assert!(crate::linalg::norm2(&result.u_cv) <= 1e-12);

        // displacement too small to reach the obstacle: linear elasticity
        let setup = hertz_setup(0.25, 1, 1.0, 0.0005);
        let result = solve_nitsche(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &FrictionModel::Frictionless,
            &setup.gap,
            &setup.bc,
            &setup.f,
            &SolveConfig::default(),
        )
        .unwrap();
        assert_eq!(result.k_cv, 1);
        let a_el = assemble_elasticity(&setup.space, &setup.mat);
        let (a0, rhs0) = fem::apply_dirichlet(&a_el, &setup.f, &setup.bc);
        let mut solver = LdlSolver::analyze(&a0);
        solver.factor(&a0).unwrap();
        let lin = solver.solve_refined(&a0, &rhs0);
        let diff: Vec<f64> = result.u_cv.iter().zip(&lin).map(|(a, b)| a - b).collect();
        assert!(crate::linalg::norm2(&diff) <= 1e-9 * crate::linalg::norm2(&lin).max(1e-30));
    }

    #[test]
    fn hertz_coarse_solve_properties() {
        let setup = hertz_setup(0.1, 1, 1.0, 0.09);
        let result = solve_nitsche(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &FrictionModel::Frictionless,
            &setup.gap,
            &setup.bc,
            &setup.f,
            &SolveConfig::default(),
        )
        .unwrap();
        assert!(result.converged);
        assert!(result.k_cv >= 2, "contact must actually engage");
        // gap violation small relative to the imposed displacement
        let tr = eval_contact_traces(
            &setup.space,
            &setup.mat,
            &setup.nitsche,
            &setup.gap,
            &result.u_cv,
        );
        let mut viol = 0.0f64;
        for (pt, &g) in tr.points.iter().zip(&setup.gap.qps) {
            viol = viol.max(pt.v_n - g);
        }
        // consistency-level violation at this very coarse resolution; the
        // fine-mesh bound is much tighter
        assert!(viol <= 2e-2 * 0.09, "gap violation {viol:.3e}");
        // mirror symmetry of the solution
        let perm = setup.space.mesh.mirror_permutation().unwrap();
        let u = &result.u_cv;
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for node in 0..setup.space.mesh.nodes.len() {
            let m = perm[node];
            err = err.max((u[2 * node] + u[2 * m]).abs());
            err = err.max((u[2 * node + 1] - u[2 * m + 1]).abs());
            scale = scale.max(u[2 * node].abs()).max(u[2 * node + 1].abs());
        }
        assert!(err <= 1e-9 * scale.max(1.0), "symmetry violation {err:.3e}");
        // energy decreased from the initial linear iterate
        let e0 = energy(
            &setup.space, &setup.mat, &setup.nitsche, &FrictionModel::Frictionless, &setup.gap,
            &setup.f, &result.iterates[0],
        );
        let ecv = energy(
            &setup.space, &setup.mat, &setup.nitsche, &FrictionModel::Frictionless, &setup.gap,
            &setup.f, &result.u_cv,
        );
        assert!(ecv.j_nitsche <= e0.j_nitsche + 1e-12 * e0.j_nitsche.abs());
    }

    #[test]
    fn tresca_limits() {
        let setup = hertz_setup(0.1, 1, 1.0, 0.09);
        let cfg = SolveConfig::default();
        let fl = solve_nitsche(
            &setup.space, &setup.mat, &setup.nitsche, &FrictionModel::Frictionless, &setup.gap,
            &setup.bc, &setup.f, &cfg,
        )
        .unwrap();
        // s -> 0 reproduces the frictionless solution
        let tiny = solve_nitsche(
            &setup.space, &setup.mat, &setup.nitsche, &FrictionModel::Tresca(1e-14), &setup.gap,
            &setup.bc, &setup.f, &cfg,
        )
        .unwrap();
        let w_gram = assemble_h1_gram(&setup.space, 1.0);
        let diff: Vec<f64> = fl.u_cv.iter().zip(&tiny.u_cv).map(|(a, b)| a - b).collect();
        // the two formulations differ by the (1/gamma) sigma_nt sigma_nt
        // consistency term, which shrinks with h; at h = 0.1 / P1 the gap
        // between them is a few 1e-3
        let rel = gram_norm(&w_gram, &diff) / gram_norm(&w_gram, &fl.u_cv);
        assert!(rel <= 1e-2, "s->0 limit off by {rel:.3e}");

        // s -> infinity clamps tangential slip where contact is active
        let stick = solve_nitsche(
            &setup.space, &setup.mat, &setup.nitsche, &FrictionModel::Tresca(1e12), &setup.gap,
            &setup.bc, &setup.f, &cfg,
        )
        .unwrap();
        let tr_fl = eval_contact_traces(
            &setup.space, &setup.mat, &setup.nitsche, &setup.gap, &fl.u_cv,
        );
        let tr_st = eval_contact_traces(
            &setup.space, &setup.mat, &setup.nitsche, &setup.gap, &stick.u_cv,
        );
        let mut vt_fl = 0.0f64;
        let mut vt_st = 0.0f64;
        for (a, b) in tr_fl.points.iter().zip(&tr_st.points) {
            if neg_part(a.p_n_gamma_g) < 0.0 {
                vt_fl = vt_fl.max(a.v_tau.abs());
                vt_st = vt_st.max(b.v_tau.abs());
            }
        }
        // Stick is imposed weakly: the tangential velocity only vanishes up
        // to the consistency residual u_tau ~ sigma_nt / gamma, so compare
        // against the free-slip magnitude rather than zero.
        assert!(vt_st <= 0.05 * vt_fl, "stick limit: {vt_st:.3e} vs {vt_fl:.3e}");
    }

    #[test]
    fn coulomb_limit_and_fixed_point() {
        let setup = hertz_setup(0.1, 1, 1.0, 0.09);
        let cfg = CoulombConfig::default();
        let almost_frictionless =
            solve_coulomb(
                &setup.space, &setup.mat, &setup.nitsche, 1e-12, &setup.gap, &setup.bc, &setup.f,
                &cfg,
            )
            .unwrap();
        let fl = solve_nitsche(
            &setup.space, &setup.mat, &setup.nitsche, &FrictionModel::Frictionless, &setup.gap,
            &setup.bc, &setup.f, &SolveConfig::default(),
        )
        .unwrap();
        let w_gram = assemble_h1_gram(&setup.space, 1.0);
        let diff: Vec<f64> = almost_frictionless
            .u_cv
            .iter()
            .zip(&fl.u_cv)
            .map(|(a, b)| a - b)
            .collect();
        // bounded by the same tangential consistency term as the Tresca
        // s -> 0 limit at this resolution
        let rel = gram_norm(&w_gram, &diff) / gram_norm(&w_gram, &fl.u_cv);
        assert!(rel <= 1e-2, "Coulomb nu->0 limit off by {rel:.3e}");

        let real = solve_coulomb(
            &setup.space, &setup.mat, &setup.nitsche, 0.3, &setup.gap, &setup.bc, &setup.f, &cfg,
        )
        .unwrap();
        assert!(real.converged);
    }
}

