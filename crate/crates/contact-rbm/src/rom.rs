//! Reduced-order model: basis compression of solution snapshots, projection
//! of the discrete arrays, and the plain (full-order-reassembly) reduced
//! solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{assemble_elasticity, assemble_h1_gram};
use crate::linalg::{gram_norm, CsrMatrix};
use crate::nitsche::{
    assemble_a_gamma, assemble_b_gamma, assemble_theta_gamma, ContactProblem, FrictionModel,
    SolveConfig,
};

/// Converged solutions (and the iterates that produced them) over a
/// parameter sample, all on the shared reference connectivity.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub parameters: Vec<f64>,
    /// One converged solution vector per parameter.
    pub snapshots: Vec<Vec<f64>>,
    /// Per parameter: every post-update iterate U_1 .. U_cv.
    pub iterate_snapshots: Vec<Vec<Vec<f64>>>,
    pub friction: FrictionModel,
}

impl SnapshotSet {
    pub fn validate(&self) {
        assert_eq!(self.parameters.len(), self.snapshots.len());
        assert!(!self.snapshots.is_empty(), "empty snapshot set");
        let n = self.snapshots[0].len();
        assert!(self.snapshots.iter().all(|s| s.len() == n));
        for (i, a) in self.parameters.iter().enumerate() {
            for b in &self.parameters[i + 1..] {
                assert!(a != b, "duplicate parameter {a}");
            }
        }
    }
}

/// How many modes to keep.
#[derive(Debug, Clone, Copy)]
pub enum PodTarget {
    Rank(usize),
    /// Keep the smallest basis whose relative energy tail is below this.
    Tolerance(f64),
}

#[derive(Debug, Clone)]
pub struct ReducedBasis {
    /// Basis columns, each of full-order length, orthonormal in the
    /// reference Gram inner product.
    pub z: Vec<Vec<f64>>,
    /// Singular values of the (centered) snapshot family, one per mode.
    pub singular_values: Vec<f64>,
    /// Offset satisfying the Dirichlet data; reconstructions are
    /// lifting + Z c, and every basis column vanishes on Dirichlet rows.
    pub lifting: Vec<f64>,
}

impl ReducedBasis {
    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn n_dof(&self) -> usize {
        self.lifting.len()
    }

    /// lifting + sum_j c_j z_j, using the leading `coeffs.len()` modes.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        assert!(coeffs.len() <= self.n());
        let mut u = self.lifting.clone();
        for (c, col) in coeffs.iter().zip(&self.z) {
            for (ui, zi) in u.iter_mut().zip(col) {
                *ui += c * zi;
            }
        }
        u
    }

    /// Truncate to the leading `n` modes.
    pub fn leading(&self, n: usize) -> ReducedBasis {
        assert!(n >= 1 && n <= self.n());
        ReducedBasis {
            z: self.z[..n].to_vec(),
            singular_values: self.singular_values[..n].to_vec(),
            lifting: self.lifting.clone(),
        }
    }
}

fn gram_dot(w: &CsrMatrix, a: &[f64], b: &[f64]) -> f64 {
    w.bilinear(a, b)
}

/// Build an orthonormal basis of the leading left singular directions of the
/// snapshot family.  A weighted QR factorization of the snapshot columns
/// followed by a dense SVD of the small triangular factor keeps the trailing
/// modes accurate to rounding; an eigensolve of the correlation matrix would
/// square the condition number and cap them near sqrt(machine epsilon).
pub fn pod(
    snapshots: &[Vec<f64>],
    lifting: &[f64],
    gram: &CsrMatrix,
    target: PodTarget,
) -> Result<ReducedBasis> {
    assert!(!snapshots.is_empty(), "empty snapshot set");
    let n_dof = lifting.len();
    assert!(snapshots.iter().all(|s| s.len() == n_dof));
    let centered: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|s| s.iter().zip(lifting).map(|(a, b)| a - b).collect())
        .collect();
    // Two-pass modified Gram-Schmidt QR in the given inner product;
    // dependent columns contribute coefficients but no new direction.
    let p = centered.len();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut r = DMatrix::<f64>::zeros(p, p);
    let mut scale = 0.0f64;
    for (j, y0) in centered.iter().enumerate() {
        let mut y = y0.clone();
        scale = scale.max(gram_dot(gram, &y, &y).sqrt());
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let c = gram_dot(gram, &y, qk);
                r[(k, j)] += c;
                for (a, b) in y.iter_mut().zip(qk) {
                    *a -= c * b;
                }
            }
        }
        let nrm = gram_dot(gram, &y, &y).sqrt();
        if nrm > 1e-14 * scale {
            r[(q.len(), j)] = nrm;
            for a in y.iter_mut() {
                *a /= nrm;
            }
            q.push(y);
        }
    }
    if q.is_empty() {
        return Err(Error::DegenerateFamily);
    }
    let m = q.len();
    let svd = r.rows(0, m).into_owned().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors were requested");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let lambdas: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    if sigma[0] <= 0.0 {
        return Err(Error::DegenerateFamily);
    }
    let rank = sigma.iter().filter(|&&s| s >= 1e-14 * sigma[0]).count();
    let n = match target {
        PodTarget::Rank(n) => {
            if n > rank {
                return Err(Error::RankDeficient { requested: n, rank });
            }
            n
        }
        PodTarget::Tolerance(tol) => {
            assert!(tol > 0.0);
            let total: f64 = lambdas.iter().sum();
            let mut tail = total;
            let mut n = rank;
            for (i, l) in lambdas.iter().enumerate().take(rank) {
                tail -= l;
                if (tail.max(0.0) / total).sqrt() <= tol {
                    n = i + 1;
                    break;
                }
            }
            n
        }
    };
    assert!(n >= 1);
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut col = vec![0.0; n_dof];
        for (i, qi) in q.iter().enumerate() {
            let c = u[(i, k)];
            for (ci, yi) in col.iter_mut().zip(qi) {
                *ci += c * yi;
            }
        }
        z.push(col);
    }
    // Modified Gram-Schmidt against accumulated rounding, two passes.
    for i in 0..n {
        for _ in 0..2 {
            for j in 0..i {
                let zj = z[j].clone();
                let r = gram_dot(gram, &z[i], &zj);
                for (a, b) in z[i].iter_mut().zip(&zj) {
                    *a -= r * b;
                }
            }
        }
        let nrm = gram_dot(gram, &z[i], &z[i]).sqrt();
        assert!(nrm > 0.0, "basis column collapsed during orthogonalization");
        for a in z[i].iter_mut() {
            *a /= nrm;
        }
        // Deterministic sign: largest-magnitude entry positive.
        let mut imax = 0;
        for (k, v) in z[i].iter().enumerate() {
            if v.abs() > z[i][imax].abs() {
                imax = k;
            }
        }
        if z[i][imax] < 0.0 {
            for a in z[i].iter_mut() {
                *a = -*a;
            }
        }
    }
    Ok(ReducedBasis {
        z,
        singular_values: sigma[..n].to_vec(),
        lifting: lifting.to_vec(),
    })
}

/// Relative projection error of the snapshot family onto the leading N
/// modes, for N = 1 .. basis size.  Each snapshot is measured (and
/// projected) in its own Gram matrix, so the curve is nonincreasing.
pub fn pod_projection_error(
    snapshots: &[Vec<f64>],
    basis: &ReducedBasis,
    grams: &[CsrMatrix],
) -> Vec<(usize, f64)> {
    assert_eq!(snapshots.len(), grams.len());
    let n = basis.n();
    let mut num = vec![0.0f64; n];
    let mut den = 0.0f64;
    for (s, w) in snapshots.iter().zip(grams) {
        // Orthonormalize the basis in this snapshot's inner product; the
        // leading-k spans are unchanged, and peeling the residual off one
        // direction at a time avoids the cancellation a normal-equations
        // solve would suffer near full rank.
        let mut q: Vec<Vec<f64>> = basis.z.clone();
        let mut wq: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            for _ in 0..2 {
                for j in 0..i {
                    let r: f64 = q[i].iter().zip(&wq[j]).map(|(a, b)| a * b).sum();
                    let qj = q[j].clone();
                    for (a, b) in q[i].iter_mut().zip(&qj) {
                        *a -= r * b;
                    }
                }
            }
            let wqi = w.matvec(&q[i]);
            let nrm: f64 = q[i]
                .iter()
                .zip(&wqi)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .sqrt();
            assert!(nrm > 0.0, "basis is rank-deficient in the given Gram");
            for a in q[i].iter_mut() {
                *a /= nrm;
            }
            wq.push(wqi.iter().map(|v| v / nrm).collect());
        }
        let mut r: Vec<f64> = s.iter().zip(&basis.lifting).map(|(a, b)| a - b).collect();
        den += w.bilinear(&r, &r);
        for k in 0..n {
            let c: f64 = r.iter().zip(&wq[k]).map(|(a, b)| a * b).sum();
            for (a, b) in r.iter_mut().zip(&q[k]) {
                *a -= c * b;
            }
            num[k] += w.bilinear(&r, &r);
        }
    }
    (1..=n)
        .map(|k| (k, (num[k - 1] / den).sqrt()))
        .collect()
}

/// Z' A Z as a dense matrix.
pub fn project_matrix(z: &[Vec<f64>], a: &CsrMatrix) -> DMatrix<f64> {
    let n = z.len();
    let az: Vec<Vec<f64>> = z.iter().map(|col| a.matvec(col)).collect();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = z[i].iter().zip(&az[j]).map(|(a, b)| a * b).sum();
        }
    }
    out
}

/// Z' v.
pub fn project_vector(z: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    z.iter()
        .map(|col| col.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

#[derive(Debug, Clone)]
pub struct ReducedSolveResult {
    pub coeffs: Vec<f64>,
    pub u: Vec<f64>,
    pub k_cv: usize,
    pub converged: bool,
    pub change_history: Vec<f64>,
}

/// Galerkin-reduced generalized Newton iteration with full-order reassembly
/// of the state-dependent arrays at every step.  Deliberately inefficient;
/// it is the reference the hyper-reduced solver is validated against.
pub fn solve_reduced_naive(
    basis: &ReducedBasis,
    problem: &ContactProblem,
    cfg: &SolveConfig,
) -> Result<ReducedSolveResult> {
    if matches!(problem.friction, FrictionModel::Coulomb(_)) {
        return Err(Error::NotApplicable(
            "reduced solver covers fixed-threshold friction only".into(),
        ));
    }
    let n = basis.n();
    let space = &problem.space;
    assert_eq!(basis.n_dof(), space.n_dof());
    let a_gamma = assemble_a_gamma(space, &problem.mat, &problem.nitsche, &problem.friction);
    let w_gram = assemble_h1_gram(space, 1.0);
    let a_n = project_matrix(&basis.z, &a_gamma);

    // Start from the reduced linear-elasticity solution, mirroring the
    // full-order initial iterate.
    let a_el = assemble_elasticity(space, &problem.mat);
    let el_n = project_matrix(&basis.z, &a_el);
    let el_l = a_el.matvec(&basis.lifting);
    let el_rhs: Vec<f64> = problem.f.iter().zip(&el_l).map(|(f, a)| f - a).collect();
    let b0 = DVector::from_vec(project_vector(&basis.z, &el_rhs));
    let mut coeffs: Vec<f64> = el_n
        .lu()
        .solve(&b0)
        .ok_or(Error::DegenerateFamily)?
        .iter()
        .copied()
        .collect();

    let thresh = crate::nitsche::friction_thresh(&problem.friction);
    let mut change_history = Vec::new();
    let mut last_change = f64::INFINITY;
    let mut alpha = 1.0f64;
    let mut alpha_saved: Option<f64> = None;
    let mut prev_rel = f64::INFINITY;
    let mut prev_class: Option<Vec<u8>> = None;
    for k in 0..cfg.max_iter {
        let u = basis.reconstruct(&coeffs);
        let theta = assemble_theta_gamma(
            space,
            &problem.mat,
            &problem.nitsche,
            &problem.friction,
            &problem.gap,
            &u,
        );
        let b_full = assemble_b_gamma(
            space,
            &problem.mat,
            &problem.nitsche,
            &problem.friction,
            &problem.gap,
            &u,
        );
        let mut r_n = vec![0.0; n];
        let au = a_gamma.matvec(&u);
        let r_full: Vec<f64> = (0..space.n_dof())
            .map(|i| au[i] + theta[i] - problem.f[i])
            .collect();
        for (ri, col) in r_n.iter_mut().zip(&basis.z) {
            *ri = col.iter().zip(&r_full).map(|(a, b)| a * b).sum();
        }
        let tangent = &a_n + project_matrix(&basis.z, &b_full);
        let rhs = DVector::from_vec(r_n.iter().map(|r| -r).collect::<Vec<f64>>());
        let dc = tangent.lu().solve(&rhs).ok_or(Error::SingularTangent {
            col: 0,
            pivot: 0.0,
        })?;
        for (c, d) in coeffs.iter_mut().zip(dc.iter()) {
            *c += alpha * d;
        }
        let du = {
            let mut v = vec![0.0; space.n_dof()];
            for (d, col) in dc.iter().zip(&basis.z) {
                for (vi, zi) in v.iter_mut().zip(col) {
                    *vi += alpha * d * zi;
                }
            }
            v
        };
        let u_next = basis.reconstruct(&coeffs);
        let change = gram_norm(&w_gram, &du);
        let denom = gram_norm(&w_gram, &u_next);
        let rel = if denom > 0.0 { change / denom } else { change };
        let class = crate::nitsche::contact_classification(
            space,
            &problem.mat,
            &problem.nitsche,
            &problem.gap,
            &thresh,
            &u_next,
        );
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

/// Relative error between two states in the H1 norm of the given space.
pub fn relative_state_error(space: &crate::fem::FeSpace, u_ref: &[f64], u: &[f64]) -> f64 {
    let w = assemble_h1_gram(space, 1.0);
    let diff: Vec<f64> = u_ref.iter().zip(u).map(|(a, b)| a - b).collect();
    gram_norm(&w, &diff) / gram_norm(&w, u_ref)
}

/// Solve the problems at each parameter and collect snapshots plus iterates.
pub fn collect_snapshots(
    problems: &[(f64, ContactProblem)],
    cfg: &SolveConfig,
) -> Result<SnapshotSet> {
    let mut parameters = Vec::new();
    let mut snapshots = Vec::new();
    let mut iterate_snapshots = Vec::new();
    let mut friction = FrictionModel::Frictionless;
    for (mu, problem) in problems {
        let result = problem.solve(cfg)?;
        parameters.push(*mu);
        snapshots.push(result.u_cv);
        iterate_snapshots.push(result.iterates);
        friction = problem.friction;
    }
    let set = SnapshotSet {
        parameters,
        snapshots,
        iterate_snapshots,
        friction,
    };
    set.validate();
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{HertzConfig, HertzFamily};
    use crate::mesh::build_reference_halfdisk;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn small_gram() -> (crate::fem::FeSpace, CsrMatrix) {
        let mesh = build_reference_halfdisk(0.25, crate::mesh::hertz_contact_arc()).unwrap();
        let space = crate::fem::build_fe_space(&mesh, 1).unwrap();
        let w = assemble_h1_gram(&space, 1.0);
        (space, w)
    }

    fn random_vectors(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..count)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn identical_snapshots_have_rank_one() {
        let (_, w) = small_gram();
        let n = w.n_rows;
        let v = random_vectors(n, 1, 3)[0].clone();
        let snaps = vec![v; 5];
        let lifting = vec![0.0; n];
        let basis = pod(&snaps, &lifting, &w, PodTarget::Rank(1)).unwrap();
        assert_eq!(basis.n(), 1);
        let err = pod_projection_error(&snaps, &basis, &vec![w.clone(); 5]);
        assert!(err[0].1 <= 1e-12, "e(1) = {:.3e}", err[0].1);
        match pod(&snaps, &lifting, &w, PodTarget::Rank(2)) {
            Err(Error::RankDeficient { requested: 2, rank: 1 }) => {}
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn orthonormal_inputs_span_is_preserved() {
        let (_, w) = small_gram();
        let n = w.n_rows;
        // orthonormalize three random vectors in the W inner product
        let mut base = random_vectors(n, 3, 11);
        for i in 0..3 {
            for j in 0..i {
                let zj = base[j].clone();
                let r = w.bilinear(&base[i], &zj);
                for (a, b) in base[i].iter_mut().zip(&zj) {
                    *a -= r * b;
                }
            }
            let nrm = w.bilinear(&base[i], &base[i]).sqrt();
            for a in base[i].iter_mut() {
                *a /= nrm;
            }
        }
        let lifting = vec![0.0; n];
        let basis = pod(&base, &lifting, &w, PodTarget::Rank(3)).unwrap();
        // projecting each input onto the basis must reproduce it
        for v in &base {
            let wv = w.matvec(v);
            let mut proj = vec![0.0; n];
            for col in &basis.z {
                let c: f64 = col.iter().zip(&wv).map(|(a, b)| a * b).sum();
                for (p, z) in proj.iter_mut().zip(col) {
                    *p += c * z;
                }
            }
            let diff: f64 = v
                .iter()
                .zip(&proj)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-12, "span lost: {diff:.3e}");
        }
    }

    #[test]
    fn orthonormality_and_sign_convention() {
        let (_, w) = small_gram();
        let n = w.n_rows;
        let snaps = random_vectors(n, 10, 21);
        let lifting = vec![0.0; n];
        let basis = pod(&snaps, &lifting, &w, PodTarget::Rank(10)).unwrap();
        for i in 0..10 {
            for j in 0..=i {
                let v = w.bilinear(&basis.z[i], &basis.z[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() <= 1e-10, "G[{i}{j}] = {v:.3e}");
            }
            let mx = basis.z[i].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!(basis.z[i].iter().any(|&v| v == mx), "sign convention");
        }
        // decreasing singular values
        for k in 1..10 {
            assert!(basis.singular_values[k] <= basis.singular_values[k - 1] * (1.0 + 1e-12));
        }
    }

    /// Independent reference: eigen-decomposition of the snapshot
    /// correlation matrix, eigenvalues sorted decreasing (clamped at zero).
    fn correlation_eigen(centered: &[Vec<f64>], w: &CsrMatrix) -> (Vec<f64>, DMatrix<f64>) {
        let p = centered.len();
        let wy: Vec<Vec<f64>> = centered.iter().map(|y| w.matvec(y)).collect();
        let mut c = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                let v: f64 = centered[i].iter().zip(&wy[j]).map(|(a, b)| a * b).sum();
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        let eig = c.symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        (lambdas, eig.eigenvectors)
    }

    #[test]
    fn projection_error_matches_eigenvalue_tail() {
        let (_, w) = small_gram();
        let n = w.n_rows;
        let snaps = random_vectors(n, 10, 33);
        let lifting = vec![0.0; n];
        let basis = pod(&snaps, &lifting, &w, PodTarget::Rank(10)).unwrap();
        // with a single shared Gram, e(N)^2 = tail of the correlation spectrum
        let centered = snaps.clone();
        let (lambdas, _) = correlation_eigen(&centered, &w);
        let total: f64 = lambdas.iter().sum();
        let errs = pod_projection_error(&snaps, &basis, &vec![w.clone(); 10]);
        for (k, e) in &errs {
            let tail: f64 = lambdas[*k..].iter().sum();
            let expect = (tail.max(0.0) / total).sqrt();
            assert!(
                (e - expect).abs() <= 1e-10,
                "N = {k}: {e:.6e} vs {expect:.6e}"
            );
        }
    }

    #[test]
    fn tolerance_target_truncates() {
        let (_, w) = small_gram();
        let n = w.n_rows;
        let snaps = random_vectors(n, 8, 55);
        let lifting = vec![0.0; n];
        let full = pod(&snaps, &lifting, &w, PodTarget::Rank(8)).unwrap();
        let trunc = pod(&snaps, &lifting, &w, PodTarget::Tolerance(0.3)).unwrap();
        assert!(trunc.n() >= 1 && trunc.n() < 8);
        let errs = pod_projection_error(&snaps, &full, &vec![w.clone(); 8]);
        assert!(errs[trunc.n() - 1].1 <= 0.3 + 1e-12);
    }

    fn snapshot_family(mus: &[f64]) -> (HertzFamily, Vec<(f64, ContactProblem)>, SnapshotSet) {
        let cfg = HertzConfig::default();
        let family = HertzFamily::new(cfg, 0.1, 1).unwrap();
        let problems: Vec<(f64, ContactProblem)> = mus
            .iter()
            .map(|&mu| (mu, family.problem(mu).unwrap()))
            .collect();
        let set = collect_snapshots(&problems, &SolveConfig::default()).unwrap();
        (family, problems, set)
    }

    #[test]
    fn hertz_projection_error_monotone_with_mapped_grams() {
        let mus = [0.75, 0.9, 1.0, 1.1, 1.25];
        let (family, problems, set) = snapshot_family(&mus);
        let lifting = family.lifting();
        let w_ref = assemble_h1_gram(&family.reference_space, 1.0);
        let rank = mus.len();
        let basis = pod(&set.snapshots, &lifting, &w_ref, PodTarget::Rank(rank)).unwrap();
        let grams: Vec<CsrMatrix> = problems
            .iter()
            .map(|(_, p)| assemble_h1_gram(&p.space, 1.0))
            .collect();
        let errs = pod_projection_error(&set.snapshots, &basis, &grams);
        for k in 1..errs.len() {
            assert!(errs[k].1 <= errs[k - 1].1 + 1e-14, "not monotone at {k}");
        }
        assert!(errs[rank - 1].1 <= 1e-10, "full rank residual {:.3e}", errs[rank - 1].1);
    }

    #[test]
    fn naive_reduced_reproduces_snapshots() {
        let mus = [0.8, 1.0, 1.2];
        let (family, problems, set) = snapshot_family(&mus);
        let lifting = family.lifting();
        let w_ref = assemble_h1_gram(&family.reference_space, 1.0);
        let basis = pod(&set.snapshots, &lifting, &w_ref, PodTarget::Rank(3)).unwrap();
        let cfg = SolveConfig::default();
        for ((_, problem), snap) in problems.iter().zip(&set.snapshots) {
            let red = solve_reduced_naive(&basis, problem, &cfg).unwrap();
            assert!(red.converged);
            let rel = relative_state_error(&problem.space, snap, &red.u);
            assert!(rel <= 1e-6, "reproduction error {rel:.3e}");
            // Galerkin orthogonality: projected residual nearly zero
            // relative to its value at the initial lifting state.
            let r_cv = project_vector(&basis.z, &problem.residual(&red.u));
            let r_0 = project_vector(&basis.z, &problem.residual(&basis.lifting));
            let n2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(n2(&r_cv) <= 10.0 * cfg.delta_u * n2(&r_0));
        }
    }

    #[test]
    fn single_mode_reconstruction_is_symmetric() {
        let mus = [0.8, 1.0, 1.2];
        let (family, problems, set) = snapshot_family(&mus);
        let lifting = family.lifting();
        let w_ref = assemble_h1_gram(&family.reference_space, 1.0);
        let basis = pod(&set.snapshots, &lifting, &w_ref, PodTarget::Rank(3)).unwrap();
        let red = solve_reduced_naive(&basis.leading(1), &problems[1].1, &SolveConfig::default())
            .unwrap();
        let perm = family.reference.mirror_permutation().unwrap();
        let scale = red.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, &j) in perm.iter().enumerate() {
            assert!((red.u[2 * i] + red.u[2 * j]).abs() <= 1e-8 * scale);
            assert!((red.u[2 * i + 1] - red.u[2 * j + 1]).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn coulomb_is_rejected() {
        let mut cfg = HertzConfig::default();
        cfg.friction = FrictionModel::Coulomb(0.2);
        let family = HertzFamily::new(cfg, 0.1, 1).unwrap();
        let problem = family.problem(1.0).unwrap();
        let n = problem.space.n_dof();
        let basis = ReducedBasis {
            z: vec![vec![0.0; n]],
            singular_values: vec![1.0],
            lifting: vec![0.0; n],
        };
        assert!(matches!(
            solve_reduced_naive(&basis, &problem, &SolveConfig::default()),
            Err(Error::NotApplicable(_))
        ));
    }
}
