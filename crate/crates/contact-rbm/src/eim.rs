//! Greedy empirical interpolation of the state-dependent contact arrays
//! (tangent blocks and residual boundary terms), online coefficient
//! recovery from a handful of matrix/vector entries via local reassembly,
//! and the hyper-reduced online solver built on top of it.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{gram_norm, CsrMatrix};
use crate::nitsche::{
    assemble_trace_correction, contact_edge_rows, edge_b_triplets, edge_theta_updates,
    friction_thresh, ContactProblem, EdgeRows, FrictionModel, GapField, Parts, SolveConfig,
    Thresh,
};
use crate::rom::{project_matrix, project_vector, ReducedBasis, ReducedSolveResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EimKind {
    Matrix,
    Vector,
}

/// The fixed sparsity block the contact arrays live on: every entry any
/// contact edge can touch, in sorted address order.  The pattern depends on
/// connectivity only, so one block serves every parameter value.
#[derive(Debug, Clone)]
pub struct ContactBlock {
    pub kind: EimKind,
    /// Sorted global addresses; the column is 0 for vector blocks.
    pub addresses: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
}

impl ContactBlock {
    fn from_addresses(kind: EimKind, mut addresses: Vec<(usize, usize)>) -> ContactBlock {
        addresses.sort_unstable();
        addresses.dedup();
        let index = addresses
            .iter()
            .enumerate()
            .map(|(p, &a)| (a, p))
            .collect();
        ContactBlock {
            kind,
            addresses,
            index,
        }
    }

    pub fn matrix_block(edges: &[EdgeRows]) -> ContactBlock {
        let mut addresses = Vec::new();
        for er in edges {
            for &i in &er.dofs {
                for &j in &er.dofs {
                    addresses.push((i, j));
                }
            }
        }
        ContactBlock::from_addresses(EimKind::Matrix, addresses)
    }

    pub fn vector_block(edges: &[EdgeRows]) -> ContactBlock {
        let mut addresses = Vec::new();
        for er in edges {
            for &i in &er.dofs {
                addresses.push((i, 0));
            }
        }
        ContactBlock::from_addresses(EimKind::Vector, addresses)
    }

    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }

    pub fn position(&self, address: (usize, usize)) -> Option<usize> {
        self.index.get(&address).copied()
    }
}

/// Everything needed to evaluate the contact arrays of one (mapped) problem
/// instance: precomputed edge functionals, gap, threshold and gamma.
pub struct EimContext {
    pub edges: Vec<EdgeRows>,
    qp_base: Vec<usize>,
    gamma: f64,
    gap: GapField,
    thresh: Thresh<'static>,
}

impl EimContext {
    pub fn new(problem: &ContactProblem) -> EimContext {
        let edges = contact_edge_rows(&problem.space, &problem.mat);
        let mut qp_base = Vec::with_capacity(edges.len());
        let mut acc = 0;
        for er in &edges {
            qp_base.push(acc);
            acc += er.qps.len();
        }
        EimContext {
            edges,
            qp_base,
            gamma: problem.nitsche.gamma,
            gap: problem.gap.clone(),
            thresh: friction_thresh(&problem.friction),
        }
    }

    /// Flattened assembly over the whole block, edge by edge in order.
    pub(crate) fn assemble_block(
        &self,
        block: &ContactBlock,
        parts: Parts,
        w: &[f64],
    ) -> Vec<f64> {
        let mut out = vec![0.0; block.len()];
        match block.kind {
            EimKind::Matrix => {
                let mut tri = Vec::new();
                for (e, er) in self.edges.iter().enumerate() {
                    tri.clear();
                    edge_b_triplets(
                        er,
                        self.qp_base[e],
                        self.gamma,
                        &self.gap,
                        w,
                        &self.thresh,
                        parts,
                        &mut tri,
                    );
                    for &(i, j, v) in &tri {
                        out[block.position((i, j)).expect("entry inside the block")] += v;
                    }
                }
            }
            EimKind::Vector => {
                let mut upd = Vec::new();
                for (e, er) in self.edges.iter().enumerate() {
                    upd.clear();
                    edge_theta_updates(
                        er,
                        self.qp_base[e],
                        self.gamma,
                        &self.gap,
                        w,
                        &self.thresh,
                        parts,
                        &mut upd,
                    );
                    for &(d, v) in &upd {
                        out[block.position((d, 0)).expect("entry inside the block")] += v;
                    }
                }
            }
        }
        out
    }

    /// One entry, assembled only over the edges that can touch it, adding
    /// contributions in the same order as the full assembly — the result is
    /// bit-identical to the block entry.
    pub(crate) fn evaluate_entry(
        &self,
        kind: EimKind,
        parts: Parts,
        address: (usize, usize),
        edge_ids: &[usize],
        w: &[f64],
    ) -> f64 {
        let mut val = 0.0;
        match kind {
            EimKind::Matrix => {
                let mut tri = Vec::new();
                for &e in edge_ids {
                    tri.clear();
                    edge_b_triplets(
                        &self.edges[e],
                        self.qp_base[e],
                        self.gamma,
                        &self.gap,
                        w,
                        &self.thresh,
                        parts,
                        &mut tri,
                    );
                    for &(i, j, v) in &tri {
                        if (i, j) == address {
                            val += v;
                        }
                    }
                }
            }
            EimKind::Vector => {
                let mut upd = Vec::new();
                for &e in edge_ids {
                    upd.clear();
                    edge_theta_updates(
                        &self.edges[e],
                        self.qp_base[e],
                        self.gamma,
                        &self.gap,
                        w,
                        &self.thresh,
                        parts,
                        &mut upd,
                    );
                    for &(d, v) in &upd {
                        if d == address.0 {
                            val += v;
                        }
                    }
                }
            }
        }
        val
    }

    /// Edges whose local assembly can contribute to this address.
    pub fn edges_for(&self, kind: EimKind, address: (usize, usize)) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, er)| {
                er.dofs.contains(&address.0)
                    && (kind == EimKind::Vector || er.dofs.contains(&address.1))
            })
            .map(|(e, _)| e)
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EimConfig {
    /// Relative sup-norm tolerance for greedy termination.
    pub delta_eim: f64,
    pub max_terms: usize,
}

impl Default for EimConfig {
    fn default() -> EimConfig {
        EimConfig {
            delta_eim: 1e-6,
            max_terms: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EimDecomposition {
    pub kind: EimKind,
    /// Interpolation basis members, each normalized to 1 at its own entry.
    pub terms: Vec<Vec<f64>>,
    /// Selected entry positions within the block, pairwise distinct.
    pub positions: Vec<usize>,
    /// Unit-lower-triangular interpolation matrix q[s][t] = terms[t][pos_s].
    pub q: DMatrix<f64>,
    /// Max relative residual that triggered each greedy step.
    pub training_log: Vec<f64>,
}

impl EimDecomposition {
    pub fn rank(&self) -> usize {
        self.terms.len()
    }
}

/// Classical greedy interpolation over a finite family of block vectors:
/// pick the member with the largest sup-norm residual, then the entry where
/// that residual peaks (lowest address on ties), normalize, deflate all
/// residuals in place.
pub fn eim_train(members: &[Vec<f64>], kind: EimKind, cfg: &EimConfig) -> Result<EimDecomposition> {
    assert!(cfg.delta_eim > 0.0 && cfg.max_terms >= 1);
    assert!(!members.is_empty(), "empty training family");
    let len = members[0].len();
    assert!(members.iter().all(|m| m.len() == len));
    let scales: Vec<f64> = members
        .iter()
        .map(|m| m.iter().fold(0.0f64, |a, &v| a.max(v.abs())))
        .collect();
    if scales.iter().all(|&s| s == 0.0) {
        return Err(Error::DegenerateFamily);
    }
    let mut residuals: Vec<Vec<f64>> = members.to_vec();
    let mut terms: Vec<Vec<f64>> = Vec::new();
    let mut positions: Vec<usize> = Vec::new();
    let mut training_log = Vec::new();
    while terms.len() < cfg.max_terms {
        // termination on the worst member-relative residual
        let mut max_rel = 0.0f64;
        let mut pick = 0;
        let mut pick_abs = 0.0f64;
        for (m, r) in residuals.iter().enumerate() {
            let sup = r.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            if scales[m] > 0.0 {
                max_rel = max_rel.max(sup / scales[m]);
            }
            if sup > pick_abs {
                pick_abs = sup;
                pick = m;
            }
        }
        if max_rel <= cfg.delta_eim {
            break;
        }
        training_log.push(max_rel);
        let r = &residuals[pick];
        let mut pos = 0;
        for (p, v) in r.iter().enumerate() {
            if v.abs() > r[pos].abs() {
                pos = p;
            }
        }
        let pivot = r[pos];
        debug_assert!(pivot != 0.0);
        let term: Vec<f64> = r.iter().map(|v| v / pivot).collect();
        for r in residuals.iter_mut() {
            let c = r[pos];
            if c != 0.0 {
                for (a, b) in r.iter_mut().zip(&term) {
                    *a -= c * b;
                }
            }
            r[pos] = 0.0;
        }
        positions.push(pos);
        terms.push(term);
    }
    let s = terms.len();
    let mut q = DMatrix::zeros(s, s);
    for (row, &p) in positions.iter().enumerate() {
        for (col, t) in terms.iter().enumerate() {
            q[(row, col)] = t[p];
        }
    }
    Ok(EimDecomposition {
        kind,
        terms,
        positions,
        q,
        training_log,
    })
}

/// alpha = Q^{-1} t by forward substitution (Q is unit lower-triangular).
pub fn eim_online_coeffs(decomp: &EimDecomposition, entry_values: &[f64]) -> Vec<f64> {
    let s = decomp.rank();
    assert_eq!(entry_values.len(), s);
    let mut alpha = vec![0.0; s];
    for i in 0..s {
        let mut v = entry_values[i];
        for j in 0..i {
            v -= decomp.q[(i, j)] * alpha[j];
        }
        alpha[i] = v;
    }
    alpha
}

/// Reconstruct a block vector from interpolation coefficients.
pub fn eim_interpolate(decomp: &EimDecomposition, alpha: &[f64]) -> Vec<f64> {
    assert!(!decomp.terms.is_empty());
    let mut out = vec![0.0; decomp.terms[0].len()];
    for (a, t) in alpha.iter().zip(&decomp.terms) {
        for (o, v) in out.iter_mut().zip(t) {
            *o += a * v;
        }
    }
    out
}

/// Max relative sup-norm interpolation error over a member set, as a
/// function of the number of terms used (0 ..= rank).  The zero-term
/// interpolant is the zero vector, so the curve starts at 1 whenever the
/// set contains a nonzero member.
pub fn eim_error_curve(decomp: &EimDecomposition, members: &[Vec<f64>]) -> Vec<(usize, f64)> {
    let mut residuals: Vec<Vec<f64>> = members.to_vec();
    let scales: Vec<f64> = members
        .iter()
        .map(|m| m.iter().fold(0.0f64, |a, &v| a.max(v.abs())))
        .collect();
    let max_rel = |rs: &[Vec<f64>]| {
        rs.iter()
            .zip(&scales)
            .filter(|(_, &s)| s > 0.0)
            .map(|(r, &s)| r.iter().fold(0.0f64, |a, &v| a.max(v.abs())) / s)
            .fold(0.0f64, f64::max)
    };
    let mut curve = vec![(0, max_rel(&residuals))];
    for (s, (term, &pos)) in decomp.terms.iter().zip(&decomp.positions).enumerate() {
        for r in residuals.iter_mut() {
            let c = r[pos];
            if c != 0.0 {
                for (a, b) in r.iter_mut().zip(term) {
                    *a -= c * b;
                }
            }
            r[pos] = 0.0;
        }
        curve.push((s + 1, max_rel(&residuals)));
    }
    curve
}

/// Which operator family to interpolate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorFamily {
    /// The state-dependent tangent block (normal part, or the combined
    /// normal + tangential block with friction).
    Tangent,
    /// The normal part of the nonlinear residual boundary term.
    ResidualNormal,
    /// The tangential part of the nonlinear residual boundary term.
    ResidualTangential,
}

impl OperatorFamily {
    fn kind(&self) -> EimKind {
        match self {
            OperatorFamily::Tangent => EimKind::Matrix,
            _ => EimKind::Vector,
        }
    }

    fn parts(&self, friction: &FrictionModel) -> Parts {
        match self {
            OperatorFamily::Tangent => match friction {
                FrictionModel::Frictionless => Parts::NORMAL,
                _ => Parts::BOTH,
            },
            OperatorFamily::ResidualNormal => Parts::NORMAL,
            OperatorFamily::ResidualTangential => Parts::TANGENTIAL,
        }
    }
}

/// Assemble the training family: contexts in ascending parameter order,
/// then every recorded iterate in solve order.
pub fn training_members(
    contexts: &[EimContext],
    iterates: &[Vec<Vec<f64>>],
    family: OperatorFamily,
    friction: &FrictionModel,
    block: &ContactBlock,
) -> Vec<Vec<f64>> {
    assert_eq!(contexts.len(), iterates.len());
    let parts = family.parts(friction);
    let mut members = Vec::new();
    for (ctx, its) in contexts.iter().zip(iterates) {
        for u in its {
            members.push(ctx.assemble_block(block, parts, u));
        }
    }
    members
}

/// A trained interpolation plus everything the online phase needs: the
/// projected (reduced) terms and, per selected entry, the contact edges
/// whose local assembly determines it.
pub struct EimOperator {
    pub decomp: EimDecomposition,
    pub block: ContactBlock,
    pub entry_edges: Vec<Vec<usize>>,
    pub reduced_matrices: Vec<DMatrix<f64>>,
    pub reduced_vectors: Vec<Vec<f64>>,
    pub(crate) parts: Parts,
}

impl EimOperator {
    pub fn selected_addresses(&self) -> Vec<(usize, usize)> {
        self.decomp
            .positions
            .iter()
            .map(|&p| self.block.addresses[p])
            .collect()
    }

    /// Values of the target operator at the selected entries, via local
    /// assembly over precomputed edges only.
    pub fn evaluate_entries(&self, ctx: &EimContext, w: &[f64]) -> Vec<f64> {
        self.decomp
            .positions
            .iter()
            .zip(&self.entry_edges)
            .map(|(&p, edges)| {
                ctx.evaluate_entry(self.decomp.kind, self.parts, self.block.addresses[p], edges, w)
            })
            .collect()
    }
}

fn scatter_matrix(block: &ContactBlock, values: &[f64], n: usize) -> CsrMatrix {
    let triplets: Vec<(usize, usize, f64)> = block
        .addresses
        .iter()
        .zip(values)
        .map(|(&(i, j), &v)| (i, j, v))
        .collect();
    CsrMatrix::from_triplets(n, n, &triplets)
}

fn scatter_vector(block: &ContactBlock, values: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (&(i, _), &v) in block.addresses.iter().zip(values) {
        out[i] += v;
    }
    out
}

fn build_operator(
    contexts: &[EimContext],
    iterates: &[Vec<Vec<f64>>],
    family: OperatorFamily,
    friction: &FrictionModel,
    basis: &ReducedBasis,
    block: ContactBlock,
    cfg: &EimConfig,
) -> Result<EimOperator> {
    let members = training_members(contexts, iterates, family, friction, &block);
    let decomp = eim_train(&members, family.kind(), cfg)?;
    let n = basis.n_dof();
    let entry_edges: Vec<Vec<usize>> = decomp
        .positions
        .iter()
        .map(|&p| contexts[0].edges_for(decomp.kind, block.addresses[p]))
        .collect();
    let mut reduced_matrices = Vec::new();
    let mut reduced_vectors = Vec::new();
    for term in &decomp.terms {
        match decomp.kind {
            EimKind::Matrix => {
                let m = scatter_matrix(&block, term, n);
                reduced_matrices.push(project_matrix(&basis.z, &m));
            }
            EimKind::Vector => {
                let v = scatter_vector(&block, term, n);
                reduced_vectors.push(project_vector(&basis.z, &v));
            }
        }
    }
    Ok(EimOperator {
        decomp,
        block,
        entry_edges,
        reduced_matrices,
        reduced_vectors,
        parts: family.parts(friction),
    })
}

/// All offline artifacts of the efficient reduced solver.  The linear part
/// needs no interpolation: the volumetric elasticity form is invariant
/// under the radial scaling and the boundary trace correction scales as the
/// reciprocal radius, so A_gamma(mu) = A_ref - (1/mu) C_ref exactly.
pub struct HyperReducedModel {
    pub basis: ReducedBasis,
    pub friction: FrictionModel,
    /// Reduced reference elasticity and trace correction.
    pub a_n: DMatrix<f64>,
    pub c_n: DMatrix<f64>,
    /// Their action on the Dirichlet lifting, reduced.
    pub a_l: Vec<f64>,
    pub c_l: Vec<f64>,
    pub f_n: Vec<f64>,
    pub tangent_op: EimOperator,
    pub residual_normal_op: EimOperator,
    pub residual_tangential_op: Option<EimOperator>,
    /// Reference-domain Gram pieces; the mapped convergence norm is
    /// grad + mu^2 mass.
    pub grad_ref: CsrMatrix,
    pub mass_ref: CsrMatrix,
    /// Reduced coordinates of the training solutions, for warm-starting the
    /// online iteration at the nearest trained parameter.  Off the snapshot
    /// manifold the interpolated operators carry no accuracy guarantee, so a
    /// cold start can send the iteration where they mislead it.
    pub train_parameters: Vec<f64>,
    pub train_coeffs: Vec<Vec<f64>>,
}

/// Train every interpolation and project every array.  `problems` must be
/// sorted by ascending parameter and aligned with `iterates`.
pub fn build_hyper_reduced(
    reference: &ContactProblem,
    problems: &[(f64, ContactProblem)],
    iterates: &[Vec<Vec<f64>>],
    basis: &ReducedBasis,
    cfg: &EimConfig,
) -> Result<HyperReducedModel> {
    if matches!(reference.friction, FrictionModel::Coulomb(_)) {
        return Err(Error::NotApplicable(
            "hyper-reduction covers fixed-threshold friction only".into(),
        ));
    }
    assert_eq!(problems.len(), iterates.len());
    assert!(
        problems.windows(2).all(|w| w[0].0 < w[1].0),
        "problems must be sorted by parameter"
    );
    let friction = reference.friction;
    let full_trace = friction.full_trace();
    let space = &reference.space;
    let a_ref = crate::fem::assemble_elasticity(space, &reference.mat);
    let c_ref = assemble_trace_correction(space, &reference.mat, &reference.nitsche, full_trace);
    let a_n = project_matrix(&basis.z, &a_ref);
    let c_n = project_matrix(&basis.z, &c_ref);
    let a_l = project_vector(&basis.z, &a_ref.matvec(&basis.lifting));
    let c_l = project_vector(&basis.z, &c_ref.matvec(&basis.lifting));
    let f_n = project_vector(&basis.z, &reference.f);
    let contexts: Vec<EimContext> = problems.iter().map(|(_, p)| EimContext::new(p)).collect();
    let matrix_block = ContactBlock::matrix_block(&contexts[0].edges);
    let vector_block = ContactBlock::vector_block(&contexts[0].edges);
    let tangent_op = build_operator(
        &contexts,
        iterates,
        OperatorFamily::Tangent,
        &friction,
        basis,
        matrix_block,
        cfg,
    )?;
    let residual_normal_op = build_operator(
        &contexts,
        iterates,
        OperatorFamily::ResidualNormal,
        &friction,
        basis,
        vector_block.clone(),
        cfg,
    )?;
    let residual_tangential_op = match friction {
        FrictionModel::Tresca(_) => Some(build_operator(
            &contexts,
            iterates,
            OperatorFamily::ResidualTangential,
            &friction,
            basis,
            vector_block,
            cfg,
        )?),
        _ => None,
    };
    let grad_ref = crate::fem::assemble_grad_gram(space);
    let mass_ref = crate::fem::assemble_mass(space);
    // W-orthogonal projection of each converged training solution; the
    // small normal system absorbs any residual loss of orthonormality
    let w = grad_ref.add_scaled(1.0, &mass_ref);
    let zwz = crate::rom::project_matrix(&basis.z, &w).lu();
    let train_parameters: Vec<f64> = problems.iter().map(|(mu, _)| *mu).collect();
    let train_coeffs: Vec<Vec<f64>> = iterates
        .iter()
        .map(|its| {
            let last = its.last().expect("every training run has iterates");
            let centered: Vec<f64> = last
                .iter()
                .zip(&basis.lifting)
                .map(|(u, l)| u - l)
                .collect();
            let rhs = crate::rom::project_vector(&basis.z, &w.matvec(&centered));
            zwz.solve(&nalgebra::DVector::from_vec(rhs))
                .expect("projected Gram is positive definite")
                .iter()
                .copied()
                .collect()
        })
        .collect();
    Ok(HyperReducedModel {
        basis: basis.clone(),
        friction,
        a_n,
        c_n,
        a_l,
        c_l,
        f_n,
        tangent_op,
        residual_normal_op,
        residual_tangential_op,
        grad_ref,
        mass_ref,
        train_parameters,
        train_coeffs,
    })
}

impl EimOperator {
    /// Rebuild an operator from persisted pieces.  The sparsity block and
    /// the per-entry edge lists come back from connectivity; everything
    /// else is loaded.
    pub fn restore(
        family: OperatorFamily,
        friction: &FrictionModel,
        decomp: EimDecomposition,
        block: ContactBlock,
        entry_edges: Vec<Vec<usize>>,
        reduced_matrices: Vec<DMatrix<f64>>,
        reduced_vectors: Vec<Vec<f64>>,
    ) -> EimOperator {
        EimOperator {
            decomp,
            block,
            entry_edges,
            reduced_matrices,
            reduced_vectors,
            parts: family.parts(friction),
        }
    }

    fn leading(&self, n: usize) -> EimOperator {
        EimOperator {
            decomp: self.decomp.clone(),
            block: self.block.clone(),
            entry_edges: self.entry_edges.clone(),
            reduced_matrices: self
                .reduced_matrices
                .iter()
                .map(|m| m.view((0, 0), (n, n)).into_owned())
                .collect(),
            reduced_vectors: self
                .reduced_vectors
                .iter()
                .map(|v| v[..n].to_vec())
                .collect(),
            parts: self.parts,
        }
    }
}

impl HyperReducedModel {
    /// Restrict the model to the leading `n` basis modes.  The projected
    /// arrays of a truncated basis are exactly the leading blocks of the
    /// full ones.
    pub fn leading(&self, n: usize) -> HyperReducedModel {
        assert!(n >= 1 && n <= self.basis.n());
        HyperReducedModel {
            basis: self.basis.leading(n),
            friction: self.friction,
            a_n: self.a_n.view((0, 0), (n, n)).into_owned(),
            c_n: self.c_n.view((0, 0), (n, n)).into_owned(),
            a_l: self.a_l[..n].to_vec(),
            c_l: self.c_l[..n].to_vec(),
            f_n: self.f_n[..n].to_vec(),
            tangent_op: self.tangent_op.leading(n),
            residual_normal_op: self.residual_normal_op.leading(n),
            residual_tangential_op: self.residual_tangential_op.as_ref().map(|o| o.leading(n)),
            grad_ref: self.grad_ref.clone(),
            mass_ref: self.mass_ref.clone(),
            train_parameters: self.train_parameters.clone(),
            train_coeffs: self.train_coeffs.iter().map(|c| c[..n].to_vec()).collect(),
        }
    }
}

fn operator_reduced_vector(op: &EimOperator, ctx: &EimContext, u: &[f64], out: &mut [f64]) {
    let t = op.evaluate_entries(ctx, u);
    let alpha = eim_online_coeffs(&op.decomp, &t);
    for (a, rv) in alpha.iter().zip(&op.reduced_vectors) {
        for (o, v) in out.iter_mut().zip(rv) {
            *o += a * v;
        }
    }
}

/// Online reduced solve at one parameter value.  Per-iteration dense work
/// scales with the basis size and the interpolation ranks; the full-order
/// vector appears only in the reconstruction used for entry evaluation and
/// the convergence norm.
pub fn solve_reduced_eim(
    model: &HyperReducedModel,
    problem: &ContactProblem,
    mu: f64,
    cfg: &SolveConfig,
) -> Result<ReducedSolveResult> {
    let n = model.basis.n();
    let ctx = EimContext::new(problem);
    let a_mu = &model.a_n - &model.c_n * (1.0 / mu);
    let a_l_mu: Vec<f64> = model
        .a_l
        .iter()
        .zip(&model.c_l)
        .map(|(a, c)| a - c / mu)
        .collect();
    let w_mu = model.grad_ref.add_scaled(mu * mu, &model.mass_ref);

    // initial iterate: the training solution at the nearest parameter; the
    // reduced linear-elasticity start used by the plain solver is only a
    // fallback, since early iterates leave the snapshot manifold where the
    // interpolated operators are unreliable
    let nearest = model
        .train_parameters
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| (*a - mu).abs().total_cmp(&(*b - mu).abs()))
        .map(|(i, _)| i);
    let mut coeffs: Vec<f64> = match nearest {
        Some(i) => model.train_coeffs[i].clone(),
        None => {
            let rhs0 = nalgebra::DVector::from_vec(
                model
                    .f_n
                    .iter()
                    .zip(&model.a_l)
                    .map(|(f, a)| f - a)
                    .collect::<Vec<f64>>(),
            );
            model
                .a_n
                .clone()
                .lu()
                .solve(&rhs0)
                .ok_or(Error::DegenerateFamily)?
                .iter()
                .copied()
                .collect()
        }
    };

    let mut change_history = Vec::new();
    let mut last_change = f64::INFINITY;
    let thresh = friction_thresh(&problem.friction);
    let mut alpha_step = 1.0f64;
    let mut alpha_saved: Option<f64> = None;
    let mut prev_rel = f64::INFINITY;
    let mut prev_class: Option<Vec<u8>> = None;
    for k in 0..cfg.max_iter {
        let u = model.basis.reconstruct(&coeffs);
        let mut theta_n = vec![0.0; n];
        operator_reduced_vector(&model.residual_normal_op, &ctx, &u, &mut theta_n);
        if let Some(op) = &model.residual_tangential_op {
            operator_reduced_vector(op, &ctx, &u, &mut theta_n);
        }
        let mut tangent = a_mu.clone();
        let t_b = model.tangent_op.evaluate_entries(&ctx, &u);
        let alpha_b = eim_online_coeffs(&model.tangent_op.decomp, &t_b);
        for (a, rm) in alpha_b.iter().zip(&model.tangent_op.reduced_matrices) {
            tangent += rm * *a;
        }
        let c_vec = nalgebra::DVector::from_column_slice(&coeffs);
        let lin = &a_mu * &c_vec;
        let rhs = nalgebra::DVector::from_iterator(
            n,
            (0..n).map(|i| -(lin[i] + a_l_mu[i] + theta_n[i] - model.f_n[i])),
        );
        let dc = tangent.lu().solve(&rhs).ok_or(Error::SingularTangent {
            col: 0,
            pivot: 0.0,
        })?;
        for (c, d) in coeffs.iter_mut().zip(dc.iter()) {
            *c += alpha_step * d;
        }
        let mut du = vec![0.0; model.basis.n_dof()];
        for (d, col) in dc.iter().zip(&model.basis.z) {
            for (vi, zi) in du.iter_mut().zip(col) {
                *vi += alpha_step * d * zi;
            }
        }
        let u_next = model.basis.reconstruct(&coeffs);
        let change = gram_norm(&w_mu, &du);
        let denom = gram_norm(&w_mu, &u_next);
        let rel = if denom > 0.0 { change / denom } else { change };
        let class = crate::nitsche::contact_classification(
            &problem.space,
            &problem.mat,
            &problem.nitsche,
            &problem.gap,
            &thresh,
            &u_next,
        );
        if prev_class.as_ref() == Some(&class) {
            if alpha_saved.is_none() {
                alpha_saved = Some(alpha_step);
            }
            alpha_step = 1.0;
        } else if let Some(s) = alpha_saved.take() {
            alpha_step = (0.5 * s).max(1.0 / 256.0);
        } else if rel > 0.9 * prev_rel {
            alpha_step = (0.5 * alpha_step).max(1.0 / 256.0);
        } else if rel < 0.5 * prev_rel {
            alpha_step = (2.0 * alpha_step).min(1.0);
        }
        prev_class = Some(class);
        prev_rel = rel;
        change_history.push(rel);
        last_change = rel;
        if rel <= cfg.delta_u {
            return Ok(ReducedSolveResult {
                coeffs,
                u: u_next,
                k_cv: k + 1,
                converged: true,
                change_history,
            });
        }
    }
    Err(Error::NonConvergence {
        iters: cfg.max_iter,
        last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{HertzConfig, HertzFamily};
    use crate::fem::assemble_h1_gram;
    use crate::nitsche::assemble_a_gamma;
    use crate::rom::{collect_snapshots, pod, relative_state_error, solve_reduced_naive, PodTarget};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn greedy_on_tiny_families() {
        // two independent members: rank 2, exact reproduction
        let m1 = vec![1.0, 0.0, 2.0, 0.0];
        let m2 = vec![0.0, 3.0, 1.0, 0.0];
        let cfg = EimConfig::default();
        let d = eim_train(&[m1.clone(), m2.clone()], EimKind::Vector, &cfg).unwrap();
        assert_eq!(d.rank(), 2);
        let curve = eim_error_curve(&d, &[m1.clone(), m2.clone()]);
        assert!(curve.last().unwrap().1 <= 1e-12);
        assert_eq!(curve[0], (0, 1.0));

        // single member: rank 1, coefficient = value at the selected entry
        let d1 = eim_train(&[m1.clone()], EimKind::Vector, &cfg).unwrap();
        assert_eq!(d1.rank(), 1);
        let pos = d1.positions[0];
        assert_eq!(pos, 2); // sup-norm entry
        let alpha = eim_online_coeffs(&d1, &[m1[pos]]);
        assert_eq!(alpha, vec![m1[pos]]);
        let rec = eim_interpolate(&d1, &alpha);
        assert_eq!(rec, m1);

        // identically zero family is rejected
        assert!(matches!(
            eim_train(&[vec![0.0; 4]], EimKind::Vector, &cfg),
            Err(Error::DegenerateFamily)
        ));
    }

    fn random_family(len: usize, rank: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = StdRng::seed_from_u64(seed);
        let modes: Vec<Vec<f64>> = (0..rank)
            .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        (0..count)
            .map(|_| {
                let mut v = vec![0.0; len];
                for m in &modes {
                    let c: f64 = rng.random_range(-1.0..1.0);
                    for (a, b) in v.iter_mut().zip(m) {
                        *a += c * b;
                    }
                }
                v
            })
            .collect()
    }

    #[test]
    fn triangular_structure_and_forward_substitution() {
        let members = random_family(50, 5, 12, 9);
        let cfg = EimConfig {
            delta_eim: 1e-12,
            max_terms: 5,
        };
        let d = eim_train(&members, EimKind::Vector, &cfg).unwrap();
        assert_eq!(d.rank(), 5);
        // distinct positions, unit lower-triangular interpolation matrix
        for i in 0..5 {
            assert_eq!(d.q[(i, i)], 1.0);
            for j in i + 1..5 {
                assert_eq!(d.q[(i, j)], 0.0);
                assert_ne!(d.positions[i], d.positions[j]);
            }
        }
        // every logged residual exceeded the tolerance (it triggered a
        // step); selection is by absolute residual, so the member-relative
        // log need not decrease monotonically on adversarial families
        assert!(d.training_log.iter().all(|&v| v > cfg.delta_eim));
        // Q alpha = T for random T
        let mut rng = StdRng::seed_from_u64(17);
        let t: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let alpha = eim_online_coeffs(&d, &t);
        for i in 0..5 {
            let mut v = 0.0;
            for j in 0..5 {
                v += d.q[(i, j)] * alpha[j];
            }
            assert!((v - t[i]).abs() <= 1e-13);
        }
        // exact reproduction of every member at rank = family rank
        let curve = eim_error_curve(&d, &members);
        assert!(curve.last().unwrap().1 <= 1e-12);
    }

    fn hertz_offline(
        friction: FrictionModel,
        mus: &[f64],
    ) -> (
        HertzFamily,
        Vec<(f64, ContactProblem)>,
        crate::rom::SnapshotSet,
        ReducedBasis,
        HyperReducedModel,
    ) {
        let mut cfg = HertzConfig::default();
        cfg.friction = friction;
        let family = HertzFamily::new(cfg, 0.1, 1).unwrap();
        let problems: Vec<(f64, ContactProblem)> = mus
            .iter()
            .map(|&mu| (mu, family.problem(mu).unwrap()))
            .collect();
        let set = collect_snapshots(&problems, &SolveConfig::default()).unwrap();
        let w_ref = assemble_h1_gram(&family.reference_space, 1.0);
        let basis = pod(
            &set.snapshots,
            &family.lifting(),
            &w_ref,
            PodTarget::Rank(mus.len()),
        )
        .unwrap();
        let reference = family.problem(1.0).unwrap();
        let model = build_hyper_reduced(
            &reference,
            &problems,
            &set.iterate_snapshots,
            &basis,
            &EimConfig::default(),
        )
        .unwrap();
        (family, problems, set, basis, model)
    }

    #[test]
    fn linear_part_is_affine_in_the_radius() {
        let cfg = HertzConfig::default();
        let family = HertzFamily::new(cfg, 0.1, 1).unwrap();
        let reference = family.problem(1.0).unwrap();
        let a_ref = crate::fem::assemble_elasticity(&reference.space, &reference.mat);
        let c_ref =
            assemble_trace_correction(&reference.space, &reference.mat, &reference.nitsche, false);
        for mu in [0.75, 1.2] {
            let problem = family.problem(mu).unwrap();
            let direct = assemble_a_gamma(
                &problem.space,
                &problem.mat,
                &problem.nitsche,
                &problem.friction,
            );
            let rescaled = a_ref.add_scaled(-1.0 / mu, &c_ref);
            assert_eq!(direct.indptr, rescaled.indptr);
            let scale = direct.max_abs();
            let diff = direct
                .data
                .iter()
                .zip(&rescaled.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(diff <= 1e-12 * scale, "affine split off by {:.3e}", diff / scale);
        }
    }

    #[test]
    fn training_terminates_and_interpolates_exactly() {
        let mus = [0.8, 0.95, 1.1, 1.25];
        let (_, problems, _, _, model) = hertz_offline(FrictionModel::Frictionless, &mus);
        let contexts: Vec<EimContext> =
            problems.iter().map(|(_, p)| EimContext::new(p)).collect();
        let op = &model.tangent_op;
        assert!(op.decomp.rank() >= 1);
        // independent full pass over the training family
        let friction = FrictionModel::Frictionless;
        let members = training_members(
            &contexts,
            &problems
                .iter()
                .map(|(_, p)| vec![p.solve(&SolveConfig::default()).unwrap().u_cv])
                .collect::<Vec<_>>(),
            OperatorFamily::Tangent,
            &friction,
            &op.block,
        );
        let curve = eim_error_curve(&op.decomp, &members);
        assert!(
            curve.last().unwrap().1 <= 1e-6,
            "converged-state residual {:.3e}",
            curve.last().unwrap().1
        );
        // interpolation reproduces members exactly at the selected entries
        for member in &members {
            let t: Vec<f64> = op.decomp.positions.iter().map(|&p| member[p]).collect();
            let alpha = eim_online_coeffs(&op.decomp, &t);
            let rec = eim_interpolate(&op.decomp, &alpha);
            for &p in &op.decomp.positions {
                assert!((rec[p] - member[p]).abs() <= 1e-12 * member[p].abs().max(1.0));
            }
        }
    }

    #[test]
    fn local_entry_evaluation_matches_full_assembly() {
        let mus = [0.8, 1.0, 1.2];
        let (_, problems, set, _, model) = hertz_offline(FrictionModel::Tresca(0.1), &mus);
        let mut rng = StdRng::seed_from_u64(5);
        for (mu_idx, (_, problem)) in problems.iter().enumerate() {
            let ctx = EimContext::new(problem);
            // a converged state and a perturbed one
            let mut states = vec![set.snapshots[mu_idx].clone()];
            let mut pert = set.snapshots[mu_idx].clone();
            for v in pert.iter_mut() {
                *v += rng.random_range(-1e-3..1e-3);
            }
            states.push(pert);
            for w in &states {
                for op in [&model.tangent_op, &model.residual_normal_op]
                    .into_iter()
                    .chain(model.residual_tangential_op.as_ref())
                {
                    let full = ctx.assemble_block(&op.block, op.parts, w);
                    let local = op.evaluate_entries(&ctx, w);
                    for (&p, l) in op.decomp.positions.iter().zip(&local) {
                        assert_eq!(full[p], *l, "entry {p} differs from full assembly");
                    }
                    // entry evaluators stay local
                    for edges in &op.entry_edges {
                        assert!(!edges.is_empty() && edges.len() <= 6);
                    }
                }
            }
        }
    }

    #[test]
    fn hyper_reduced_solver_reproduces_snapshots() {
        let mus = [0.8, 0.95, 1.1, 1.25];
        let (family, problems, set, basis, model) =
            hertz_offline(FrictionModel::Frictionless, &mus);
        let cfg = SolveConfig::default();
        for ((mu, problem), snap) in problems.iter().zip(&set.snapshots) {
            let red = solve_reduced_eim(&model, problem, *mu, &cfg).unwrap();
            let rel = relative_state_error(&problem.space, snap, &red.u);
            assert!(rel <= 1e-5, "reproduction error {rel:.3e} at mu = {mu}");
        }
        // off-training parameter: close to the plain reduced solver
        let mu = 1.0;
        let problem = family.problem(mu).unwrap();
        let hf = problem.solve(&cfg).unwrap();
        let naive = solve_reduced_naive(&basis, &problem, &cfg).unwrap();
        let eim = solve_reduced_eim(&model, &problem, mu, &cfg).unwrap();
        let e_naive = relative_state_error(&problem.space, &hf.u_cv, &naive.u);
        let e_eim = relative_state_error(&problem.space, &hf.u_cv, &eim.u);
        assert!(
            e_eim <= 3.0 * e_naive + 1e-6,
            "eim {e_eim:.3e} vs naive {e_naive:.3e}"
        );
    }

    #[test]
    fn tresca_models_solve_and_tangential_rank_is_tiny() {
        let mus = [0.8, 1.0, 1.2];
        let (_, problems, set, _, model) = hertz_offline(FrictionModel::Tresca(0.1), &mus);
        assert!(
            model.residual_tangential_op.as_ref().unwrap().decomp.rank() <= 10,
            "tangential residual rank {}",
            model.residual_tangential_op.as_ref().unwrap().decomp.rank()
        );
        let cfg = SolveConfig::default();
        for ((mu, problem), snap) in problems.iter().zip(&set.snapshots) {
            let red = solve_reduced_eim(&model, problem, *mu, &cfg).unwrap();
            let rel = relative_state_error(&problem.space, snap, &red.u);
            assert!(rel <= 1e-5, "reproduction error {rel:.3e} at mu = {mu}");
        }
    }

    #[test]
    fn coulomb_is_rejected() {
        let mut cfg = HertzConfig::default();
        cfg.friction = FrictionModel::Coulomb(0.2);
        let family = HertzFamily::new(cfg, 0.1, 1).unwrap();
        let reference = family.problem(1.0).unwrap();
        let basis = ReducedBasis {
            z: vec![vec![0.0; reference.space.n_dof()]],
            singular_values: vec![1.0],
            lifting: vec![0.0; reference.space.n_dof()],
        };
        assert!(matches!(
            build_hyper_reduced(&reference, &[], &[], &basis, &EimConfig::default()),
            Err(Error::NotApplicable(_))
        ));
    }
}
