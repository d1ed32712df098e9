//! Parametric rigid-disk indentation benchmark: a half-disk of radius mu is
//! pressed by an imposed top displacement onto a fixed rigid disk below it.
//! Provides problem construction on the shared reference connectivity,
//! parameter sets, the contact-condition error metrics and convergence
//! studies.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_h1_gram, boundary_stress_trace, build_fe_space, FeSpace, MaterialParams, TracePoint,
};
use crate::linalg::gram_norm;
use crate::mesh::{
    apply_mapping, build_reference_halfdisk, hertz_contact_arc, GeometricMapping, Mesh,
};
use crate::nitsche::{
    energy, neg_part, proj_ball, rigid_disk_gap, ContactProblem, FrictionModel, NitscheParams,
    SolveConfig,
};

#[derive(Debug, Clone, Copy)]
pub struct HertzConfig {
    /// Rigid obstacle disk radius.
    pub r2: f64,
    /// Gap between the two disks at the lowest point, before loading.
    pub g0: f64,
    /// Magnitude of the downward displacement imposed on the top edge.
    pub d: f64,
    /// Admissible radius interval for the elastic half-disk.
    pub mu_range: (f64, f64),
    pub material: MaterialParams,
    /// gamma = gamma0_factor * (shear modulus) / h.
    pub gamma0_factor: f64,
    pub friction: FrictionModel,
}

impl Default for HertzConfig {
    fn default() -> HertzConfig {
        HertzConfig {
            r2: 1.0,
            g0: 0.001,
            d: 0.09,
            mu_range: (0.7, 1.3),
            material: MaterialParams::new(15.0, 0.35),
            gamma0_factor: 50.0,
            friction: FrictionModel::Frictionless,
        }
    }
}

impl HertzConfig {
    pub fn validate(&self) {
        assert!(self.d >= self.g0, "imposed displacement never closes the gap");
        assert!(self.mu_range.0 > 0.0 && self.mu_range.0 <= self.mu_range.1);
        assert!(self.r2 > 0.0 && self.g0 > 0.0 && self.gamma0_factor > 0.0);
        self.friction.validate();
    }
}

/// One benchmark discretization: the reference mesh is built once, every
/// parameter value reuses its connectivity (so solution vectors across
/// parameters live in the same space).
#[derive(Debug, Clone)]
pub struct HertzFamily {
    pub cfg: HertzConfig,
    pub h_target: f64,
    pub degree: usize,
    pub reference: Mesh,
    pub reference_space: FeSpace,
}

impl HertzFamily {
    pub fn new(cfg: HertzConfig, h_target: f64, degree: usize) -> Result<HertzFamily> {
        cfg.validate();
        let reference = build_reference_halfdisk(h_target, hertz_contact_arc())?;
        let reference_space = build_fe_space(&reference, degree)?;
        Ok(HertzFamily {
            cfg,
            h_target,
            degree,
            reference,
            reference_space,
        })
    }

    pub fn nitsche_params(&self) -> NitscheParams {
        NitscheParams::new(self.cfg.gamma0_factor * self.cfg.material.lame_mu, self.h_target)
    }

    /// Assembled problem on the mapped mesh of radius mu.
    pub fn problem(&self, mu: f64) -> Result<ContactProblem> {
        if !(mu >= self.cfg.mu_range.0 && mu <= self.cfg.mu_range.1) {
            return Err(Error::NotApplicable(format!(
                "radius {mu} outside [{}, {}]",
                self.cfg.mu_range.0, self.cfg.mu_range.1
            )));
        }
        self.problem_unchecked(mu)
    }

    /// The radius-1 instance on the unmapped reference mesh, regardless of
    /// the admissible radius interval.  The parameter dependence of the
    /// linear operator factorizes against this geometry.
    pub fn reference_problem(&self) -> Result<ContactProblem> {
        self.problem_unchecked(1.0)
    }

    fn problem_unchecked(&self, mu: f64) -> Result<ContactProblem> {
        let mapped = apply_mapping(&self.reference, &GeometricMapping::scaling(mu));
        let space = build_fe_space(&mapped, self.degree)?;
        let center = [0.0, -(mu + self.cfg.g0 + self.cfg.r2)];
        let gap = rigid_disk_gap(&space, center, self.cfg.r2);
        let d = self.cfg.d;
        let bc: Vec<(usize, f64)> = space
            .dirichlet_nodes
            .iter()
            .flat_map(|&n| [(2 * n, 0.0), (2 * n + 1, -d)])
            .collect();
        let f = vec![0.0; space.n_dof()];
        Ok(ContactProblem {
            space,
            mat: self.cfg.material,
            nitsche: self.nitsche_params(),
            friction: self.cfg.friction,
            gap,
            bc,
            f,
        })
    }

    /// Displacement offset matching the Dirichlet data everywhere: the
    /// constant field (0, -d).
    pub fn lifting(&self) -> Vec<f64> {
        let d = self.cfg.d;
        self.reference_space.interpolate(|_| [0.0, -d])
    }
}

pub fn build_hertz_problem(
    cfg: &HertzConfig,
    mu: f64,
    h_target: f64,
    degree: usize,
) -> Result<ContactProblem> {
    HertzFamily::new(*cfg, h_target, degree)?.problem(mu)
}

#[derive(Debug, Clone)]
pub struct ParameterSets {
    pub d_train: Vec<f64>,
    pub d_valid: Vec<f64>,
    pub seed: u64,
}

/// The 61-point radius grid 0.7 + 0.0075 i, i in 0..=60.
pub fn standard_training_grid() -> Vec<f64> {
    (0..=60).map(|i| 0.7 + 0.0075 * i as f64).collect()
}

impl ParameterSets {
    /// Training grid plus a seeded uniform validation draw from the range.
    pub fn new(d_train: Vec<f64>, range: (f64, f64), n_valid: usize, seed: u64) -> ParameterSets {
        let mut rng = StdRng::seed_from_u64(seed);
        let d_valid: Vec<f64> = (0..n_valid)
            .map(|_| rng.random_range(range.0..range.1))
            .collect();
        ParameterSets {
            d_train,
            d_valid,
            seed,
        }
    }
}

/// ell^2 aggregate of (sigma_nn - [P^n_{gamma,g}]_-) over samples, relative
/// to the ell^2 norm of sigma_nn.
pub fn ac_normal_from_samples(snn: &[f64], png: &[f64]) -> Result<f64> {
    assert_eq!(snn.len(), png.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for (&s, &p) in snn.iter().zip(png) {
        num += (s - neg_part(p)).powi(2);
        den += s * s;
    }
    if den == 0.0 {
        return Err(Error::NotApplicable("no contact pressure anywhere".into()));
    }
    Ok((num / den).sqrt())
}

/// Same aggregate for the friction conditions: sigma_nt against the ball
/// projection of P^tau, still normalized by sigma_nn.
pub fn ac_tangential_from_samples(
    snt: &[f64],
    ptau: &[f64],
    s_thresh: &[f64],
    snn: &[f64],
) -> Result<f64> {
    assert!(snt.len() == ptau.len() && snt.len() == s_thresh.len() && snt.len() == snn.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..snt.len() {
        num += (snt[i] - proj_ball(ptau[i], s_thresh[i])).powi(2);
        den += snn[i] * snn[i];
    }
    if den == 0.0 {
        return Err(Error::NotApplicable("no contact pressure anywhere".into()));
    }
    Ok((num / den).sqrt())
}

/// Nodal traces on the contact boundary together with the Nitsche
/// contact-operator values at the nodes.
pub fn nodal_contact_samples(problem: &ContactProblem, u: &[f64]) -> Vec<(TracePoint, f64, f64)> {
    let traces = boundary_stress_trace(&problem.space, &problem.mat, u);
    let g = problem.nitsche.gamma;
    traces
        .nodes
        .into_iter()
        .zip(&problem.gap.nodes)
        .map(|(pt, &gap_v)| {
            let png = pt.sigma_nn - g * (pt.v_n - gap_v);
            let ptau = pt.sigma_nt - g * pt.v_t;
            (pt, png, ptau)
        })
        .collect()
}

/// Contact-condition residual of a converged state, sampled at the contact
/// boundary nodes.
pub fn error_alart_curnier_normal(problem: &ContactProblem, u: &[f64]) -> Result<f64> {
    let samples = nodal_contact_samples(problem, u);
    let snn: Vec<f64> = samples.iter().map(|(p, _, _)| p.sigma_nn).collect();
    let png: Vec<f64> = samples.iter().map(|(_, png, _)| *png).collect();
    ac_normal_from_samples(&snn, &png)
}

/// Friction-condition residual; `s_at` gives the slip threshold at each
/// contact node (constant for a fixed threshold, field-valued for the
/// pressure-dependent law).
pub fn error_alart_curnier_tangential(
    problem: &ContactProblem,
    u: &[f64],
    s_at: impl Fn(usize, &TracePoint, f64) -> f64,
) -> Result<f64> {
    let samples = nodal_contact_samples(problem, u);
    let snn: Vec<f64> = samples.iter().map(|(p, _, _)| p.sigma_nn).collect();
    let snt: Vec<f64> = samples.iter().map(|(p, _, _)| p.sigma_nt).collect();
    let ptau: Vec<f64> = samples.iter().map(|(_, _, pt)| *pt).collect();
    let s: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(i, (p, png, _))| s_at(i, p, *png))
        .collect();
    ac_tangential_from_samples(&snt, &ptau, &s, &snn)
}

#[derive(Debug, Clone, Copy)]
pub struct RbErrors {
    /// Relative H1 error of the reconstruction.
    pub e_u: f64,
    /// Relative nodal ell^2 error of the normal stress trace.
    pub e_snn: f64,
    /// Relative nodal ell^2 error of the tangential stress trace.
    pub e_snt: f64,
}

fn relative_l2(reference: &[f64], other: &[f64]) -> f64 {
    let num: f64 = reference
        .iter()
        .zip(other)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let den: f64 = reference.iter().map(|a| a * a).sum();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

pub fn rb_error_metrics(problem: &ContactProblem, u_hf: &[f64], u_rb: &[f64]) -> RbErrors {
    let w = assemble_h1_gram(&problem.space, 1.0);
    let diff: Vec<f64> = u_hf.iter().zip(u_rb).map(|(a, b)| a - b).collect();
    let e_u = gram_norm(&w, &diff) / gram_norm(&w, u_hf);
    let hf = boundary_stress_trace(&problem.space, &problem.mat, u_hf);
    let rb = boundary_stress_trace(&problem.space, &problem.mat, u_rb);
    let snn_hf: Vec<f64> = hf.nodes.iter().map(|p| p.sigma_nn).collect();
    let snn_rb: Vec<f64> = rb.nodes.iter().map(|p| p.sigma_nn).collect();
    let snt_hf: Vec<f64> = hf.nodes.iter().map(|p| p.sigma_nt).collect();
    let snt_rb: Vec<f64> = rb.nodes.iter().map(|p| p.sigma_nt).collect();
    RbErrors {
        e_u,
        e_snn: relative_l2(&snn_hf, &snn_rb),
        e_snt: relative_l2(&snt_hf, &snt_rb),
    }
}

#[derive(Debug, Clone)]
pub struct StudyTable {
    pub mus: Vec<f64>,
    pub hs: Vec<f64>,
    /// errors[i][j] = metric at (mus[i], hs[j]).
    pub errors: Vec<Vec<f64>>,
    /// orders[i][j] = estimated rate between hs[j] and hs[j+1]; empty when
    /// only one mesh size was requested.
    pub orders: Vec<Vec<f64>>,
}

/// Contact-condition error per (radius, mesh size), with log-ratio rate
/// estimates between consecutive mesh sizes.  Uses the friction-appropriate
/// metric: the normal one without friction, the tangential one otherwise.
pub fn convergence_study(
    cfg: &HertzConfig,
    degree: usize,
    mus: &[f64],
    hs: &[f64],
    solve_cfg: &SolveConfig,
) -> Result<StudyTable> {
    assert!(!mus.is_empty() && !hs.is_empty());
    let mut errors = vec![vec![0.0; hs.len()]; mus.len()];
    for (j, &h) in hs.iter().enumerate() {
        let family = HertzFamily::new(*cfg, h, degree)?;
        for (i, &mu) in mus.iter().enumerate() {
            let problem = family.problem(mu)?;
            let result = problem.solve(solve_cfg)?;
            errors[i][j] = match cfg.friction {
                FrictionModel::Frictionless => {
                    error_alart_curnier_normal(&problem, &result.u_cv)?
                }
                FrictionModel::Tresca(s) => {
                    error_alart_curnier_tangential(&problem, &result.u_cv, |_, _, _| s)?
                }
                FrictionModel::Coulomb(nu_f) => error_alart_curnier_tangential(
                    &problem,
                    &result.u_cv,
                    |_, _, png| nu_f * neg_part(png).abs(),
                )?,
            };
        }
    }
    let mut orders = vec![Vec::new(); mus.len()];
    if hs.len() >= 2 {
        for i in 0..mus.len() {
            for j in 0..hs.len() - 1 {
                let rate =
                    (errors[i][j] / errors[i][j + 1]).ln() / (hs[j] / hs[j + 1]).ln();
                orders[i].push(rate);
            }
        }
    }
    Ok(StudyTable {
        mus: mus.to_vec(),
        hs: hs.to_vec(),
        errors,
        orders,
    })
}

/// Total potential energy of the converged state at each radius.
pub fn energy_curve(
    family: &HertzFamily,
    mus: &[f64],
    solve_cfg: &SolveConfig,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(mus.len());
    for &mu in mus {
        let problem = family.problem(mu)?;
        let result = problem.solve(solve_cfg)?;
        let e = energy(
            &problem.space,
            &problem.mat,
            &problem.nitsche,
            &problem.friction,
            &problem.gap,
            &problem.f,
            &result.u_cv,
        );
        out.push((mu, e.j));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_arithmetic() {
        let cfg = HertzConfig::default();
        cfg.validate();
        let family = HertzFamily::new(cfg, 0.0025, 1).unwrap();
        let gamma = family.nitsche_params().gamma;
        // 50 * (15 / 2.7) / 0.0025
        assert!((gamma - 111_111.111).abs() / gamma < 1e-4);
    }

    #[test]
    fn problem_construction() {
        let cfg = HertzConfig::default();
        let family = HertzFamily::new(cfg, 0.1, 2).unwrap();
        let problem = family.problem(1.0).unwrap();
        // gap at the bottom pole is exactly g0
        let pole = problem
            .space
            .contact_nodes
            .iter()
            .position(|cn| cn.pos[0].abs() < 1e-12)
            .expect("pole node on the contact boundary");
        assert!((problem.gap.nodes[pole] - cfg.g0).abs() < 1e-12);
        // top edge is pushed down by d
        assert!(problem.bc.iter().any(|&(dof, v)| dof % 2 == 1 && v == -0.09));
        assert!(problem.bc.iter().all(|&(dof, v)| dof % 2 == 1 || v == 0.0));
        // out-of-range radius is rejected
        assert!(family.problem(2.0).is_err());
    }

    #[test]
    fn ac_metrics_on_manufactured_samples() {
        // exact contact state: sigma_nn equals the negative part everywhere
        let snn = [-1.0, -0.5, 0.0];
        let png = [-1.0, -0.5, 2.0];
        assert_eq!(ac_normal_from_samples(&snn, &png).unwrap(), 0.0);
        // stick state inside the ball: sigma_nt = P^tau, |P^tau| <= s
        let snt = [0.05, -0.08, 0.0];
        let s = [0.1, 0.1, 0.1];
        assert_eq!(
            ac_tangential_from_samples(&snt, &snt, &s, &snn).unwrap(),
            0.0
        );
        // no contact pressure anywhere -> not applicable
        assert!(ac_normal_from_samples(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rb_metrics_homogeneity() {
        let cfg = HertzConfig::default();
        let family = HertzFamily::new(cfg, 0.1, 1).unwrap();
        let problem = family.problem(1.0).unwrap();
        let u = problem.space.interpolate(|p| [0.01 * p[1], -0.02 * p[0]]);
        let same = rb_error_metrics(&problem, &u, &u);
        assert_eq!(same.e_u, 0.0);
        assert_eq!(same.e_snn, 0.0);
        let eps = 1e-3;
        let scaled: Vec<f64> = u.iter().map(|v| v * (1.0 + eps)).collect();
        let e = rb_error_metrics(&problem, &scaled, &u);
        assert!((e.e_u - eps / (1.0 + eps)).abs() < 1e-12);
        assert!((e.e_snn - eps / (1.0 + eps)).abs() < 1e-12);
    }

    #[test]
    fn parameter_sets_are_reproducible() {
        let grid = standard_training_grid();
        assert_eq!(grid.len(), 61);
        assert!((grid[0] - 0.7).abs() < 1e-15 && (grid[60] - 1.15).abs() < 1e-12);
        let a = ParameterSets::new(grid.clone(), (0.7, 1.3), 30, 42);
        let b = ParameterSets::new(grid, (0.7, 1.3), 30, 42);
        assert_eq!(a.d_valid, b.d_valid);
        assert_eq!(a.d_valid.len(), 30);
        assert!(a.d_valid.iter().all(|&m| (0.7..1.3).contains(&m)));
    }

    #[test]
    fn coarse_contact_error_is_small() {
        let cfg = HertzConfig::default();
        let family = HertzFamily::new(cfg, 0.05, 2).unwrap();
        let problem = family.problem(1.0).unwrap();
        let result = problem.solve(&SolveConfig::default()).unwrap();
        let e = error_alart_curnier_normal(&problem, &result.u_cv).unwrap();
        assert!(e < 0.1, "contact-condition error {e:.3e}");
    }

    #[test]
    fn single_h_study_has_no_orders() {
        let cfg = HertzConfig::default();
        let table =
            convergence_study(&cfg, 1, &[1.0], &[0.1], &SolveConfig::default()).unwrap();
        assert_eq!(table.errors.len(), 1);
        assert!(table.orders[0].is_empty());
    }
}
