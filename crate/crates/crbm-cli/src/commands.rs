//! The six subcommands, written as plain functions so they can be tested
//! without spawning the binary.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;

use contact_rbm::bench::{
    error_alart_curnier_normal, error_alart_curnier_tangential, rb_error_metrics,
    convergence_study, HertzFamily, ParameterSets,
};
use contact_rbm::eim::{
    build_hyper_reduced, eim_error_curve, solve_reduced_eim, training_members, ContactBlock,
    EimContext, EimDecomposition, EimKind, EimOperator, HyperReducedModel, OperatorFamily,
};
use contact_rbm::fem::{assemble_grad_gram, assemble_h1_gram, assemble_mass};
use contact_rbm::mesh::{build_reference_halfdisk, hertz_contact_arc, BoundaryTag};
use contact_rbm::nitsche::{contact_edge_rows, neg_part, ContactProblem, FrictionModel, SolveResult};
use contact_rbm::rom::{pod, pod_projection_error, solve_reduced_naive, ReducedBasis, SnapshotSet};
use contact_rbm::Error;

use crate::config::RunConfig;
use crate::container::Store;
use crate::report::{fmt_int, fmt_num, write_csv, write_svg_log_plot};

#[derive(Debug)]
pub enum CmdError {
    /// Configuration or usage problem; exit code 1.
    Usage(String),
    /// Propagated solver error; non-convergence maps to exit code 2.
    Lib(Error),
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Usage(msg) => write!(f, "{msg}"),
            CmdError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<String> for CmdError {
    fn from(msg: String) -> CmdError {
        CmdError::Usage(msg)
    }
}

impl From<Error> for CmdError {
    fn from(e: Error) -> CmdError {
        CmdError::Lib(e)
    }
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Lib(Error::NonConvergence { .. }) => 2,
            CmdError::Lib(Error::SingularTangent { .. }) => 2,
            CmdError::Lib(_) => 1,
        }
    }
}

type CmdResult<T> = Result<T, CmdError>;

fn family(cfg: &RunConfig) -> CmdResult<HertzFamily> {
    Ok(HertzFamily::new(cfg.hertz(), cfg.h, cfg.degree)?)
}

fn mu_tag(mu: f64) -> String {
    format!("{mu:?}").replace('.', "p").replace('-', "m")
}

fn report_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.report_dir.join(name)
}

// ---------------------------------------------------------------- mesh

pub fn run_mesh(cfg: &RunConfig) -> CmdResult<()> {
    let mesh = build_reference_halfdisk(cfg.h, hertz_contact_arc())?;
    let mut st = Store::new();
    st.put_f64("nodes", mesh.nodes.iter().flat_map(|p| [p[0], p[1]]).collect());
    st.put_u32(
        "tris",
        mesh.triangles
            .iter()
            .flat_map(|t| t.iter().map(|&n| n as u32).collect::<Vec<_>>())
            .collect(),
    );
    st.put_u32(
        "bedges",
        mesh.boundary_edges
            .iter()
            .flat_map(|e| {
                let tag = match e.tag {
                    BoundaryTag::Dirichlet => 0u32,
                    BoundaryTag::Neumann => 1,
                    BoundaryTag::Contact => 2,
                };
                [e.nodes[0] as u32, e.nodes[1] as u32, tag]
            })
            .collect(),
    );
    st.put_f64("h", vec![mesh.mesh_size_h]);
    let path = report_path(cfg, "mesh.crbm");
    st.write(&path)?;
    println!(
        "mesh: {} nodes, {} triangles, {} boundary edges, h = {} -> {}",
        mesh.nodes.len(),
        mesh.triangles.len(),
        mesh.boundary_edges.len(),
        mesh.mesh_size_h,
        path.display()
    );
    Ok(())
}

// ------------------------------------------------------------ hf-solve

fn contact_condition_error(problem: &ContactProblem, u: &[f64]) -> CmdResult<(f64, f64)> {
    let e_n = error_alart_curnier_normal(problem, u)?;
    let e_t = match problem.friction {
        FrictionModel::Frictionless => f64::NAN,
        FrictionModel::Tresca(s) => {
            error_alart_curnier_tangential(problem, u, |_, _, _| s)?
        }
        FrictionModel::Coulomb(nu_f) => {
            error_alart_curnier_tangential(problem, u, |_, _, png| nu_f * neg_part(png).abs())?
        }
    };
    Ok((e_n, e_t))
}

pub fn run_hf_solve(cfg: &RunConfig, mu: f64) -> CmdResult<()> {
    let fam = family(cfg)?;
    let problem = fam.problem(mu)?;
    let result = problem.solve(&cfg.solver())?;
    let (e_n, e_t) = contact_condition_error(&problem, &result.u_cv)?;

    let tag = mu_tag(mu);
    let mut st = Store::new();
    st.put_f64("u_cv", result.u_cv.clone());
    st.put_u64("k_cv", vec![result.k_cv as u64]);
    st.put_f64("change_history", result.change_history.clone());
    let traces = problem.traces(&result.u_cv);
    st.put_f64("trace/sigma_nn", traces.points.iter().map(|p| p.sigma_nn).collect());
    st.put_f64("trace/sigma_ntau", traces.points.iter().map(|p| p.sigma_ntau).collect());
    st.put_f64("trace/v_n", traces.points.iter().map(|p| p.v_n).collect());
    st.put_f64("trace/v_tau", traces.points.iter().map(|p| p.v_tau).collect());
    st.put_f64("trace/p_n_gamma_g", traces.points.iter().map(|p| p.p_n_gamma_g).collect());
    st.put_f64("trace/p_tau", traces.points.iter().map(|p| p.p_tau).collect());
    let artifact = report_path(cfg, &format!("hf_mu{tag}.crbm"));
    st.write(&artifact)?;

    let (fr_name, fr_value) = friction_columns(&problem.friction);
    write_csv(
        &report_path(cfg, &format!("hf_mu{tag}.csv")),
        &["mu", "h", "degree", "friction", "s_or_nu", "k_cv", "e_ac_normal", "e_ac_tangential"],
        &[vec![
            fmt_num(mu),
            fmt_num(cfg.h),
            fmt_int(cfg.degree),
            fr_name.to_string(),
            fmt_num(fr_value),
            fmt_int(result.k_cv),
            fmt_num(e_n),
            fmt_num(e_t),
        ]],
    )?;
    println!(
        "hf-solve mu = {mu}: {} iterations, e_ac_normal = {e_n:.3e}, e_ac_tangential = {e_t:.3e}",
        result.k_cv
    );
    Ok(())
}

fn friction_columns(friction: &FrictionModel) -> (&'static str, f64) {
    match *friction {
        FrictionModel::Frictionless => ("none", f64::NAN),
        FrictionModel::Tresca(s) => ("tresca", s),
        FrictionModel::Coulomb(nu) => ("coulomb", nu),
    }
}

// ------------------------------------------------------------- offline

pub struct OfflineArtifacts {
    pub set: SnapshotSet,
    pub basis: ReducedBasis,
    pub model: HyperReducedModel,
}

/// Snapshots in parallel over the parameter grid, then compression and the
/// interpolation training.  Fails listing every non-converging parameter.
pub fn offline_pipeline(cfg: &RunConfig) -> CmdResult<OfflineArtifacts> {
    let fam = family(cfg)?;
    let mus = cfg.training_grid();
    let problems: Vec<(f64, ContactProblem)> = mus
        .iter()
        .map(|&mu| Ok((mu, fam.problem(mu)?)))
        .collect::<Result<_, Error>>()?;
    let solve_cfg = cfg.solver();
    let results: Vec<Result<SolveResult, Error>> =
        problems.par_iter().map(|(_, p)| p.solve(&solve_cfg)).collect();

    let failing: Vec<f64> = mus
        .iter()
        .zip(&results)
        .filter(|(_, r)| r.is_err())
        .map(|(&mu, _)| mu)
        .collect();
    if !failing.is_empty() {
        eprintln!("training solves failed at mu = {failing:?}");
        let first = results.into_iter().find_map(|r| r.err()).unwrap();
        return Err(first.into());
    }

    let mut snapshots = Vec::new();
    let mut iterates = Vec::new();
    for r in results {
        let r = r.unwrap();
        snapshots.push(r.u_cv);
        iterates.push(r.iterates);
    }
    let set = SnapshotSet {
        parameters: mus,
        snapshots,
        iterate_snapshots: iterates,
        friction: cfg.friction_model(),
    };
    set.validate();

    let gram = assemble_h1_gram(&fam.reference_space, 1.0);
    let basis = pod(&set.snapshots, &fam.lifting(), &gram, cfg.pod_target())?;
    let reference = fam.reference_problem()?;
    let model = build_hyper_reduced(
        &reference,
        &problems,
        &set.iterate_snapshots,
        &basis,
        &cfg.eim(),
    )?;
    Ok(OfflineArtifacts { set, basis, model })
}

fn matrix_from_columns(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

fn columns_from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols()).map(|j| m.column(j).iter().copied().collect()).collect()
}

fn put_operator(st: &mut Store, prefix: &str, op: &EimOperator) {
    st.put_matrix(&format!("{prefix}/terms"), matrix_from_columns(&op.decomp.terms));
    st.put_u64(
        &format!("{prefix}/pos"),
        op.decomp.positions.iter().map(|&p| p as u64).collect(),
    );
    st.put_matrix(&format!("{prefix}/q"), op.decomp.q.clone());
    st.put_f64(&format!("{prefix}/log"), op.decomp.training_log.clone());
    let mut offsets = vec![0u64];
    let mut data = Vec::new();
    for edges in &op.entry_edges {
        data.extend(edges.iter().map(|&e| e as u64));
        offsets.push(data.len() as u64);
    }
    st.put_u64(&format!("{prefix}/ee_off"), offsets);
    st.put_u64(&format!("{prefix}/ee_dat"), data);
    let n = op.reduced_matrices.first().map_or(0, |m| m.nrows());
    let stacked = DMatrix::from_fn(n, op.reduced_matrices.len() * n, |i, j| {
        op.reduced_matrices[j / n][(i, j % n)]
    });
    st.put_matrix(&format!("{prefix}/red_m"), stacked);
    st.put_matrix(&format!("{prefix}/red_v"), matrix_from_columns(&op.reduced_vectors));
}

fn load_operator(
    st: &Store,
    prefix: &str,
    op_family: OperatorFamily,
    friction: &FrictionModel,
    block: ContactBlock,
) -> CmdResult<EimOperator> {
    let kind = match op_family {
        OperatorFamily::Tangent => EimKind::Matrix,
        _ => EimKind::Vector,
    };
    let terms = columns_from_matrix(st.matrix(&format!("{prefix}/terms"))?);
    let positions: Vec<usize> = st
        .u64s(&format!("{prefix}/pos"))?
        .iter()
        .map(|&p| p as usize)
        .collect();
    let q = st.matrix(&format!("{prefix}/q"))?.clone();
    let training_log = st.f64s(&format!("{prefix}/log"))?.to_vec();
    let offsets = st.u64s(&format!("{prefix}/ee_off"))?;
    let data = st.u64s(&format!("{prefix}/ee_dat"))?;
    let entry_edges: Vec<Vec<usize>> = offsets
        .windows(2)
        .map(|w| data[w[0] as usize..w[1] as usize].iter().map(|&e| e as usize).collect())
        .collect();
    let stacked = st.matrix(&format!("{prefix}/red_m"))?;
    let n = stacked.nrows();
    let reduced_matrices: Vec<DMatrix<f64>> = if n == 0 {
        Vec::new()
    } else {
        (0..stacked.ncols() / n)
            .map(|k| stacked.view((0, k * n), (n, n)).into_owned())
            .collect()
    };
    let reduced_vectors = columns_from_matrix(st.matrix(&format!("{prefix}/red_v"))?);
    let decomp = EimDecomposition {
        kind,
        terms,
        positions,
        q,
        training_log,
    };
    Ok(EimOperator::restore(
        op_family,
        friction,
        decomp,
        block,
        entry_edges,
        reduced_matrices,
        reduced_vectors,
    ))
}

fn persist(cfg: &RunConfig, art: &OfflineArtifacts) -> CmdResult<()> {
    let mut st = Store::new();
    st.put_bytes("config", cfg.canonical().into_bytes());
    st.put_f64("train/mu", art.set.parameters.clone());
    st.put_matrix("snap/u", matrix_from_columns(&art.set.snapshots));
    st.put_u64(
        "snap/iter_counts",
        art.set.iterate_snapshots.iter().map(|it| it.len() as u64).collect(),
    );
    let flat: Vec<Vec<f64>> = art
        .set
        .iterate_snapshots
        .iter()
        .flat_map(|it| it.iter().cloned())
        .collect();
    st.put_matrix("snap/iters", matrix_from_columns(&flat));
    st.put_matrix("basis/z", matrix_from_columns(&art.basis.z));
    st.put_f64("basis/sv", art.basis.singular_values.clone());
    st.put_f64("basis/lift", art.basis.lifting.clone());
    let m = &art.model;
    st.put_matrix("lin/a_n", m.a_n.clone());
    st.put_matrix("lin/c_n", m.c_n.clone());
    st.put_f64("lin/a_l", m.a_l.clone());
    st.put_f64("lin/c_l", m.c_l.clone());
    st.put_f64("lin/f_n", m.f_n.clone());
    st.put_f64("warm/mu", m.train_parameters.clone());
    st.put_matrix("warm/coeffs", matrix_from_columns(&m.train_coeffs));
    put_operator(&mut st, "op/tan", &m.tangent_op);
    put_operator(&mut st, "op/resn", &m.residual_normal_op);
    if let Some(op) = &m.residual_tangential_op {
        put_operator(&mut st, "op/rest", op);
    }
    st.write(&cfg.store)?;
    Ok(())
}

/// Everything `online`/`validate` need, reloaded from the store.  The
/// connectivity-derived pieces (blocks, Gram factors) are rebuilt from the
/// configuration, which must match the one the store was written with.
pub struct LoadedModel {
    pub family: HertzFamily,
    pub parameters: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    pub iterates: Vec<Vec<Vec<f64>>>,
    pub basis: ReducedBasis,
    pub model: HyperReducedModel,
}

pub fn load_store(cfg: &RunConfig) -> CmdResult<LoadedModel> {
    let st = Store::read(&cfg.store)?;
    let stored = String::from_utf8(st.bytes("config")?.to_vec())
        .map_err(|_| "store config section is not UTF-8".to_string())?;
    if stored != cfg.canonical() {
        return Err(CmdError::Usage(format!(
            "the store {} was built with a different configuration; rerun `offline`",
            cfg.store.display()
        )));
    }
    let fam = family(cfg)?;
    let friction = cfg.friction_model();
    let reference = fam.reference_problem()?;

    let parameters = st.f64s("train/mu")?.to_vec();
    let snapshots = columns_from_matrix(st.matrix("snap/u")?);
    let counts = st.u64s("snap/iter_counts")?;
    let flat = columns_from_matrix(st.matrix("snap/iters")?);
    let mut iterates = Vec::new();
    let mut at = 0usize;
    for &c in counts {
        iterates.push(flat[at..at + c as usize].to_vec());
        at += c as usize;
    }
    let basis = ReducedBasis {
        z: columns_from_matrix(st.matrix("basis/z")?),
        singular_values: st.f64s("basis/sv")?.to_vec(),
        lifting: st.f64s("basis/lift")?.to_vec(),
    };

    let edges = contact_edge_rows(&reference.space, &reference.mat);
    let matrix_block = ContactBlock::matrix_block(&edges);
    let vector_block = ContactBlock::vector_block(&edges);
    let tangent_op = load_operator(&st, "op/tan", OperatorFamily::Tangent, &friction, matrix_block)?;
    let residual_normal_op = load_operator(
        &st,
        "op/resn",
        OperatorFamily::ResidualNormal,
        &friction,
        vector_block.clone(),
    )?;
    let residual_tangential_op = if st.has("op/rest/terms") {
        Some(load_operator(
            &st,
            "op/rest",
            OperatorFamily::ResidualTangential,
            &friction,
            vector_block,
        )?)
    } else {
        None
    };
    let model = HyperReducedModel {
        basis: basis.clone(),
        friction,
        a_n: st.matrix("lin/a_n")?.clone(),
        c_n: st.matrix("lin/c_n")?.clone(),
        a_l: st.f64s("lin/a_l")?.to_vec(),
        c_l: st.f64s("lin/c_l")?.to_vec(),
        f_n: st.f64s("lin/f_n")?.to_vec(),
        tangent_op,
        residual_normal_op,
        residual_tangential_op,
        grad_ref: assemble_grad_gram(&reference.space),
        mass_ref: assemble_mass(&reference.space),
        train_parameters: st.f64s("warm/mu")?.to_vec(),
        train_coeffs: columns_from_matrix(st.matrix("warm/coeffs")?),
    };
    Ok(LoadedModel {
        family: fam,
        parameters,
        snapshots,
        iterates,
        basis,
        model,
    })
}

pub fn run_offline(cfg: &RunConfig) -> CmdResult<()> {
    let art = offline_pipeline(cfg)?;
    persist(cfg, &art)?;
    println!(
        "offline: {} snapshots on {} dofs, basis rank {}",
        art.set.parameters.len(),
        art.basis.n_dof(),
        art.basis.n()
    );
    print_ranks(&art.model);
    println!("store -> {}", cfg.store.display());
    Ok(())
}

fn print_ranks(model: &HyperReducedModel) {
    println!("eim rank (tangent block)        S = {}", model.tangent_op.decomp.rank());
    println!(
        "eim rank (normal residual)      S = {}",
        model.residual_normal_op.decomp.rank()
    );
    if let Some(op) = &model.residual_tangential_op {
        println!("eim rank (tangential residual)  S = {}", op.decomp.rank());
    }
}

// -------------------------------------------------------------- online

pub fn run_online(cfg: &RunConfig, mu: f64, n: usize) -> CmdResult<()> {
    if n == 0 {
        return Err(CmdError::Usage("--n must be at least 1".into()));
    }
    let t0 = std::time::Instant::now();
    let loaded = load_store(cfg)?;
    if n > loaded.basis.n() {
        return Err(CmdError::Usage(format!(
            "--n {n} exceeds the stored basis rank {}",
            loaded.basis.n()
        )));
    }
    let model_n = loaded.model.leading(n);
    let problem = loaded.family.problem(mu)?;
    let t_setup = t0.elapsed().as_secs_f64();

    let t1 = std::time::Instant::now();
    let result = solve_reduced_eim(&model_n, &problem, mu, &cfg.reduced_solver())?;
    let t_solve = t1.elapsed().as_secs_f64();

    let t2 = std::time::Instant::now();
    let u = model_n.basis.reconstruct(&result.coeffs);
    let t_reco = t2.elapsed().as_secs_f64();

    let tag = mu_tag(mu);
    let mut st = Store::new();
    st.put_f64("coeffs", result.coeffs.clone());
    st.put_f64("u", u);
    st.write(&report_path(cfg, &format!("online_mu{tag}_n{n}.crbm")))?;
    let last_change = result.change_history.last().copied().unwrap_or(f64::NAN);
    write_csv(
        &report_path(cfg, &format!("online_mu{tag}_n{n}.csv")),
        &["mu", "n", "k_cv", "last_change", "t_setup_s", "t_solve_s", "t_reconstruct_s"],
        &[vec![
            fmt_num(mu),
            fmt_int(n),
            fmt_int(result.k_cv),
            fmt_num(last_change),
            fmt_num(t_setup),
            fmt_num(t_solve),
            fmt_num(t_reco),
        ]],
    )?;
    println!(
        "online mu = {mu}, N = {n}: {} iterations, last change {last_change:.3e}",
        result.k_cv
    );
    println!("timing: setup {t_setup:.3}s, reduced solve {t_solve:.3}s, reconstruction {t_reco:.3}s");
    Ok(())
}

// ------------------------------------------------------------ validate

fn validation_parameters(cfg: &RunConfig) -> Vec<f64> {
    let sets = ParameterSets::new(
        cfg.training_grid(),
        (cfg.mu_min, cfg.mu_max),
        cfg.valid_count,
        cfg.seed,
    );
    sets.d_valid
        .into_iter()
        .filter(|&mu| mu >= cfg.valid_window.0 && mu <= cfg.valid_window.1)
        .collect()
}

fn rb_dimensions(cfg: &RunConfig, rank: usize) -> Vec<usize> {
    let mut ns: Vec<usize> = (cfg.n_start..=rank).step_by(cfg.n_step).collect();
    if ns.last() != Some(&rank) {
        ns.push(rank);
    }
    ns.retain(|&n| n >= 1 && n <= rank);
    ns.dedup();
    if ns.is_empty() {
        ns.push(rank);
    }
    ns
}

pub fn run_validate(cfg: &RunConfig) -> CmdResult<()> {
    let loaded = load_store(cfg)?;
    let solve_cfg = cfg.solver();
    let reduced_cfg = cfg.reduced_solver();
    let friction = cfg.friction_model();
    let model = &loaded.model;

    // compression curve, each snapshot measured in its own mapped norm
    let grams: Vec<_> = loaded
        .parameters
        .iter()
        .map(|&mu| model.grad_ref.add_scaled(mu * mu, &model.mass_ref))
        .collect();
    let pod_curve = pod_projection_error(&loaded.snapshots, &loaded.basis, &grams);
    write_csv(
        &report_path(cfg, "pod_curve.csv"),
        &["n", "e_pod"],
        &pod_curve
            .iter()
            .map(|&(n, e)| vec![fmt_int(n), fmt_num(e)])
            .collect::<Vec<_>>(),
    )?;
    write_svg_log_plot(
        &report_path(cfg, "pod_curve.svg"),
        "snapshot projection error",
        "N",
        "e_POD",
        &[("e_POD".to_string(), pod_curve.iter().map(|&(n, e)| (n as f64, e)).collect())],
    )?;

    // validation sample: high-fidelity references, solved in parallel
    let valid_mus = validation_parameters(cfg);
    let valid_problems: Vec<(f64, ContactProblem)> = valid_mus
        .iter()
        .map(|&mu| Ok((mu, loaded.family.problem(mu)?)))
        .collect::<Result<_, Error>>()?;
    let valid_results: Vec<Result<SolveResult, Error>> = valid_problems
        .par_iter()
        .map(|(_, p)| p.solve(&solve_cfg))
        .collect();
    write_csv(
        &report_path(cfg, "valid_mu.csv"),
        &["mu", "hf_converged", "k_cv"],
        &valid_mus
            .iter()
            .zip(&valid_results)
            .map(|(&mu, r)| match r {
                Ok(res) => vec![fmt_num(mu), fmt_int(1), fmt_int(res.k_cv)],
                Err(_) => vec![fmt_num(mu), fmt_int(0), fmt_int(0)],
            })
            .collect::<Vec<_>>(),
    )?;

    // interpolation error curves: training, validation and converged-only
    let train_problems: Vec<(f64, ContactProblem)> = loaded
        .parameters
        .iter()
        .map(|&mu| Ok((mu, loaded.family.problem(mu)?)))
        .collect::<Result<_, Error>>()?;
    let train_contexts: Vec<EimContext> =
        train_problems.iter().map(|(_, p)| EimContext::new(p)).collect();
    let converged_iterates: Vec<Vec<Vec<f64>>> =
        loaded.snapshots.iter().map(|s| vec![s.clone()]).collect();
    let mut valid_contexts: Vec<EimContext> = Vec::new();
    let mut valid_iterates: Vec<Vec<Vec<f64>>> = Vec::new();
    for ((_, p), r) in valid_problems.iter().zip(&valid_results) {
        if let Ok(res) = r {
            valid_contexts.push(EimContext::new(p));
            valid_iterates.push(res.iterates.clone());
        }
    }

    let ops: Vec<(&str, OperatorFamily, &EimOperator)> = {
        let mut v = vec![
            ("eim_tangent", OperatorFamily::Tangent, &model.tangent_op),
            ("eim_residual_normal", OperatorFamily::ResidualNormal, &model.residual_normal_op),
        ];
        if let Some(op) = &model.residual_tangential_op {
            v.push(("eim_residual_tangential", OperatorFamily::ResidualTangential, op));
        }
        v
    };
    for (name, fam_kind, op) in &ops {
        let members_train =
            training_members(&train_contexts, &loaded.iterates, *fam_kind, &friction, &op.block);
        let members_valid =
            training_members(&valid_contexts, &valid_iterates, *fam_kind, &friction, &op.block);
        let members_conv = training_members(
            &train_contexts,
            &converged_iterates,
            *fam_kind,
            &friction,
            &op.block,
        );
        let c_train = eim_error_curve(&op.decomp, &members_train);
        let c_valid = eim_error_curve(&op.decomp, &members_valid);
        let c_conv = eim_error_curve(&op.decomp, &members_conv);
        let rows: Vec<Vec<String>> = c_train
            .iter()
            .zip(&c_valid)
            .zip(&c_conv)
            .map(|((&(s, et), &(_, ev)), &(_, ec))| {
                vec![fmt_int(s), fmt_num(et), fmt_num(ev), fmt_num(ec)]
            })
            .collect();
        write_csv(
            &report_path(cfg, &format!("{name}.csv")),
            &["s", "e_train", "e_valid", "e_converged"],
            &rows,
        )?;
        write_svg_log_plot(
            &report_path(cfg, &format!("{name}.svg")),
            name,
            "S",
            "max relative sup-norm error",
            &[
                ("train".to_string(), c_train.iter().map(|&(s, e)| (s as f64, e)).collect()),
                ("valid".to_string(), c_valid.iter().map(|&(s, e)| (s as f64, e)).collect()),
                ("converged".to_string(), c_conv.iter().map(|&(s, e)| (s as f64, e)).collect()),
            ],
        )?;
    }

    // reduced-order error curves over the validation sample, plain Galerkin
    // against the interpolated solver
    let hf_ok: Vec<(f64, &ContactProblem, Vec<f64>)> = valid_problems
        .iter()
        .zip(&valid_results)
        .filter_map(|((mu, p), r)| r.as_ref().ok().map(|res| (*mu, p, res.u_cv.clone())))
        .collect();
    let ns = rb_dimensions(cfg, loaded.basis.n());
    let mut rb_rows = Vec::new();
    let mut rb_naive_series = Vec::new();
    let mut rb_eim_series = Vec::new();
    for &n in &ns {
        let basis_n = loaded.basis.leading(n);
        let model_n = model.leading(n);
        let per_mu: Vec<(Option<f64>, Option<(f64, f64, f64)>)> = hf_ok
            .par_iter()
            .map(|(mu, problem, u_hf)| {
                let naive = solve_reduced_naive(&basis_n, problem, &reduced_cfg)
                    .ok()
                    .map(|r| rb_error_metrics(problem, u_hf, &r.u).e_u);
                let eim = solve_reduced_eim(&model_n, problem, *mu, &reduced_cfg).ok().map(|r| {
                    let m = rb_error_metrics(problem, u_hf, &r.u);
                    (m.e_u, m.e_snn, m.e_snt)
                });
                (naive, eim)
            })
            .collect();
        let failed_naive = per_mu.iter().filter(|(a, _)| a.is_none()).count();
        let failed_eim = per_mu.iter().filter(|(_, b)| b.is_none()).count();
        let max_naive = per_mu.iter().filter_map(|(a, _)| *a).fold(f64::NAN, f64::max);
        let max_eim_u = per_mu
            .iter()
            .filter_map(|(_, b)| b.map(|(u, _, _)| u))
            .fold(f64::NAN, f64::max);
        let max_eim_snn = per_mu
            .iter()
            .filter_map(|(_, b)| b.map(|(_, s, _)| s))
            .fold(f64::NAN, f64::max);
        let max_eim_snt = per_mu
            .iter()
            .filter_map(|(_, b)| b.map(|(_, _, t)| t))
            .fold(f64::NAN, f64::max);
        rb_rows.push(vec![
            fmt_int(n),
            fmt_num(max_naive),
            fmt_num(max_eim_u),
            fmt_num(max_eim_snn),
            fmt_num(max_eim_snt),
            fmt_int(failed_naive),
            fmt_int(failed_eim),
        ]);
        rb_naive_series.push((n as f64, max_naive));
        rb_eim_series.push((n as f64, max_eim_u));
    }
    write_csv(
        &report_path(cfg, "rb_curve.csv"),
        &["n", "e_u_naive", "e_u_eim", "e_snn_eim", "e_snt_eim", "failed_naive", "failed_eim"],
        &rb_rows,
    )?;
    write_svg_log_plot(
        &report_path(cfg, "rb_curve.svg"),
        "reduced-basis validation error",
        "N",
        "max relative error",
        &[
            ("plain".to_string(), rb_naive_series),
            ("interpolated".to_string(), rb_eim_series),
        ],
    )?;

    println!(
        "validate: {} validation parameters ({} converged), basis rank {}",
        valid_mus.len(),
        hf_ok.len(),
        loaded.basis.n()
    );
    println!("reports -> {}", cfg.report_dir.display());
    Ok(())
}

// --------------------------------------------------------------- study

pub fn run_study(cfg: &RunConfig, with_eim: bool) -> CmdResult<()> {
    let table = convergence_study(
        &cfg.hertz(),
        cfg.degree,
        &cfg.study_mus,
        &cfg.study_hs,
        &cfg.solver(),
    )?;
    let mut rows = Vec::new();
    for (i, &mu) in table.mus.iter().enumerate() {
        for (j, &h) in table.hs.iter().enumerate() {
            let order = if j + 1 < table.hs.len() {
                table.orders[i][j]
            } else {
                f64::NAN
            };
            rows.push(vec![fmt_num(mu), fmt_num(h), fmt_num(table.errors[i][j]), fmt_num(order)]);
            println!(
                "mu = {mu:5.3}  h = {h:8.5}  e_ac = {:.4e}  order = {order:.3}",
                table.errors[i][j]
            );
        }
    }
    write_csv(&report_path(cfg, "study.csv"), &["mu", "h", "e_ac", "order"], &rows)?;

    if with_eim {
        let art = offline_pipeline(cfg)?;
        print_ranks(&art.model);
        let mut rank_rows = vec![
            vec!["tangent".to_string(), fmt_int(art.model.tangent_op.decomp.rank())],
            vec![
                "residual_normal".to_string(),
                fmt_int(art.model.residual_normal_op.decomp.rank()),
            ],
        ];
        if let Some(op) = &art.model.residual_tangential_op {
            rank_rows.push(vec!["residual_tangential".to_string(), fmt_int(op.decomp.rank())]);
        }
        write_csv(&report_path(cfg, "eim_ranks.csv"), &["operator", "rank"], &rank_rows)?;
    }
    Ok(())
}

pub fn read_config(path: Option<&Path>) -> CmdResult<RunConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CmdError::Usage(format!("reading {}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(CmdError::Usage)
        }
        None => Ok(RunConfig::default()),
    }
}
