//! Flat `key = value` run configuration.  Unknown keys are rejected so a
//! typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::path::PathBuf;

use contact_rbm::bench::HertzConfig;
use contact_rbm::eim::EimConfig;
use contact_rbm::fem::MaterialParams;
use contact_rbm::nitsche::{FrictionModel, SolveConfig};
use contact_rbm::rom::PodTarget;

#[derive(Debug, Clone)]
pub struct RunConfig {
    // scenario
    pub r2: f64,
    pub g0: f64,
    pub d: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub young: f64,
    pub poisson: f64,
    pub gamma0_factor: f64,
    pub friction: String,
    pub s: f64,
    pub nu_f: f64,
    // discretization
    pub h: f64,
    pub degree: usize,
    // solver
    pub delta_u: f64,
    pub max_iter: usize,
    // rom
    pub rom_n: usize,
    pub rom_tol: f64,
    // eim
    pub eim_delta: f64,
    pub eim_max_terms: usize,
    // parameter sets
    pub train: (f64, f64, usize),
    pub valid_count: usize,
    pub seed: u64,
    pub valid_window: (f64, f64),
    // paths
    pub store: PathBuf,
    pub report_dir: PathBuf,
    // study
    pub study_mus: Vec<f64>,
    pub study_hs: Vec<f64>,
    // validate
    pub n_start: usize,
    pub n_step: usize,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            r2: 1.0,
            g0: 0.001,
            d: 0.09,
            mu_min: 0.7,
            mu_max: 1.3,
            young: 15.0,
            poisson: 0.35,
            gamma0_factor: 50.0,
            friction: "none".into(),
            s: 0.1,
            nu_f: 0.3,
            h: 0.1,
            degree: 1,
            delta_u: 1e-8,
            max_iter: 50,
            rom_n: 0,
            rom_tol: 0.0,
            eim_delta: 1e-6,
            eim_max_terms: 2000,
            train: (0.7, 0.0075, 61),
            valid_count: 20,
            seed: 20230815,
            valid_window: (0.7, 1.18),
            store: "crbm_store.bin".into(),
            report_dir: "reports".into(),
            study_mus: vec![0.7, 1.0, 1.3],
            study_hs: vec![0.01, 0.005],
            n_start: 10,
            n_step: 10,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, String> {
    v.parse().map_err(|_| format!("{key}: expected a number, got `{v}`"))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("{key}: expected an integer, got `{v}`"))
}

fn parse_pair(key: &str, v: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() != 2 {
        return Err(format!("{key}: expected `lo:hi`, got `{v}`"));
    }
    Ok((parse_f64(key, parts[0].trim())?, parse_f64(key, parts[1].trim())?))
}

fn parse_grid(key: &str, v: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("{key}: expected `start:step:count`, got `{v}`"));
    }
    Ok((
        parse_f64(key, parts[0].trim())?,
        parse_f64(key, parts[1].trim())?,
        parse_usize(key, parts[2].trim())?,
    ))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .map(|p| parse_f64(key, p.trim()))
        .collect()
}

impl RunConfig {
    /// Parse `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, unset keys take their defaults.
    pub fn parse(text: &str) -> Result<RunConfig, String> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(format!("line {}: expected `key = value`", lineno + 1))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut cfg = RunConfig::default();
        for (key, v) in &map {
            match key.as_str() {
                "scenario.r2" => cfg.r2 = parse_f64(key, v)?,
                "scenario.g0" => cfg.g0 = parse_f64(key, v)?,
                "scenario.d" => cfg.d = parse_f64(key, v)?,
                "scenario.mu_min" => cfg.mu_min = parse_f64(key, v)?,
                "scenario.mu_max" => cfg.mu_max = parse_f64(key, v)?,
                "scenario.young" => cfg.young = parse_f64(key, v)?,
                "scenario.poisson" => cfg.poisson = parse_f64(key, v)?,
                "scenario.gamma0_factor" => cfg.gamma0_factor = parse_f64(key, v)?,
                "scenario.friction" => cfg.friction = v.clone(),
                "scenario.s" => cfg.s = parse_f64(key, v)?,
                "scenario.nu_f" => cfg.nu_f = parse_f64(key, v)?,
                "disc.h" => cfg.h = parse_f64(key, v)?,
                "disc.degree" => cfg.degree = parse_usize(key, v)?,
                "solver.delta_u" => cfg.delta_u = parse_f64(key, v)?,
                "solver.max_iter" => cfg.max_iter = parse_usize(key, v)?,
                "rom.n" => cfg.rom_n = parse_usize(key, v)?,
                "rom.tol" => cfg.rom_tol = parse_f64(key, v)?,
                "eim.delta" => cfg.eim_delta = parse_f64(key, v)?,
                "eim.max_terms" => cfg.eim_max_terms = parse_usize(key, v)?,
                "sets.train" => cfg.train = parse_grid(key, v)?,
                "sets.valid_count" => cfg.valid_count = parse_usize(key, v)?,
                "sets.seed" => {
                    cfg.seed = v.parse().map_err(|_| format!("{key}: expected an integer"))?
                }
                "sets.valid_window" => cfg.valid_window = parse_pair(key, v)?,
                "paths.store" => cfg.store = v.into(),
                "paths.report_dir" => cfg.report_dir = v.into(),
                "study.mus" => cfg.study_mus = parse_list(key, v)?,
                "study.hs" => cfg.study_hs = parse_list(key, v)?,
                "validate.n_start" => cfg.n_start = parse_usize(key, v)?,
                "validate.n_step" => cfg.n_step = parse_usize(key, v)?,
                _ => return Err(format!("unknown configuration key `{key}`")),
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), String> {
        match self.friction.as_str() {
            "none" | "tresca" | "coulomb" => {}
            other => {
                return Err(format!(
                    "scenario.friction: expected none | tresca | coulomb, got `{other}`"
                ))
            }
        }
        if !(self.h > 0.0) {
            return Err("disc.h must be positive".into());
        }
        if self.degree == 0 || self.degree > 2 {
            return Err("disc.degree must be 1 or 2".into());
        }
        if self.train.2 == 0 {
            return Err("sets.train must contain at least one point".into());
        }
        if self.n_start == 0 || self.n_step == 0 {
            return Err("validate.n_start and validate.n_step must be positive".into());
        }
        Ok(())
    }

    pub fn friction_model(&self) -> FrictionModel {
        match self.friction.as_str() {
            "tresca" => FrictionModel::Tresca(self.s),
            "coulomb" => FrictionModel::Coulomb(self.nu_f),
            _ => FrictionModel::Frictionless,
        }
    }

    pub fn hertz(&self) -> HertzConfig {
        HertzConfig {
            r2: self.r2,
            g0: self.g0,
            d: self.d,
            mu_range: (self.mu_min, self.mu_max),
            material: MaterialParams::new(self.young, self.poisson),
            gamma0_factor: self.gamma0_factor,
            friction: self.friction_model(),
        }
    }

    pub fn solver(&self) -> SolveConfig {
        SolveConfig {
            delta_u: self.delta_u,
            max_iter: self.max_iter,
        }
    }

    /// Budget for the online reduced iterations: four times the Newton cap.
    /// The dense reduced steps are cheap, and near an interpolation-induced
    /// kink the damped iteration contracts geometrically rather than
    /// quadratically.
    pub fn reduced_solver(&self) -> SolveConfig {
        SolveConfig {
            delta_u: self.delta_u,
            max_iter: 4 * self.max_iter,
        }
    }

    pub fn eim(&self) -> EimConfig {
        EimConfig {
            delta_eim: self.eim_delta,
            max_terms: self.eim_max_terms,
        }
    }

    /// Compression target: an explicit mode count wins, then an energy
    /// tolerance; otherwise keep the full numerical rank.
    pub fn pod_target(&self) -> PodTarget {
        if self.rom_n > 0 {
            PodTarget::Rank(self.rom_n)
        } else if self.rom_tol > 0.0 {
            PodTarget::Tolerance(self.rom_tol)
        } else {
            PodTarget::Tolerance(1e-15)
        }
    }

    pub fn training_grid(&self) -> Vec<f64> {
        let (start, step, count) = self.train;
        (0..count).map(|i| start + step * i as f64).collect()
    }

    /// Deterministic rendering of every key; stored alongside the offline
    /// artifacts and used to detect configuration drift when reading.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("scenario.r2", format!("{:?}", self.r2));
        kv("scenario.g0", format!("{:?}", self.g0));
        kv("scenario.d", format!("{:?}", self.d));
        kv("scenario.mu_min", format!("{:?}", self.mu_min));
        kv("scenario.mu_max", format!("{:?}", self.mu_max));
        kv("scenario.young", format!("{:?}", self.young));
        kv("scenario.poisson", format!("{:?}", self.poisson));
        kv("scenario.gamma0_factor", format!("{:?}", self.gamma0_factor));
        kv("scenario.friction", self.friction.clone());
        kv("scenario.s", format!("{:?}", self.s));
        kv("scenario.nu_f", format!("{:?}", self.nu_f));
        kv("disc.h", format!("{:?}", self.h));
        kv("disc.degree", format!("{}", self.degree));
        kv("solver.delta_u", format!("{:?}", self.delta_u));
        kv("solver.max_iter", format!("{}", self.max_iter));
        kv("rom.n", format!("{}", self.rom_n));
        kv("rom.tol", format!("{:?}", self.rom_tol));
        kv("eim.delta", format!("{:?}", self.eim_delta));
        kv("eim.max_terms", format!("{}", self.eim_max_terms));
        kv(
            "sets.train",
            format!("{:?}:{:?}:{}", self.train.0, self.train.1, self.train.2),
        );
        kv("sets.valid_count", format!("{}", self.valid_count));
        kv("sets.seed", format!("{}", self.seed));
        kv(
            "sets.valid_window",
            format!("{:?}:{:?}", self.valid_window.0, self.valid_window.1),
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.train.2, 61);
        assert_eq!(cfg.degree, 1);
        assert!(matches!(cfg.friction_model(), FrictionModel::Frictionless));
    }

    #[test]
    fn keys_comments_and_overrides() {
        let text = "
            # comment line
            scenario.friction = tresca   # trailing comment
            scenario.s = 0.2
            disc.h = 0.05
            disc.degree = 2
            sets.train = 0.8:0.1:3
            study.hs = 0.02, 0.01
        ";
        let cfg = RunConfig::parse(text).unwrap();
        assert!(matches!(cfg.friction_model(), FrictionModel::Tresca(s) if s == 0.2));
        assert_eq!(cfg.h, 0.05);
        assert_eq!(cfg.degree, 2);
        assert_eq!(cfg.training_grid(), vec![0.8, 0.9, 1.0]);
        assert_eq!(cfg.study_hs, vec![0.02, 0.01]);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(RunConfig::parse("no_equals_sign").is_err());
        assert!(RunConfig::parse("made.up = 1").is_err());
        assert!(RunConfig::parse("scenario.friction = sticky").is_err());
        assert!(RunConfig::parse("disc.h = fine").is_err());
    }

    #[test]
    fn canonical_text_is_stable() {
        let a = RunConfig::parse("scenario.s = 0.25").unwrap();
        let b = RunConfig::parse("scenario.s = 0.25  # same").unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert!(a.canonical().contains("scenario.s = 0.25"));
    }
}
