//! Configuration, the hydrostatic-limit convergence study and report output.
//!
//! The study runs the hydrostatic system once and, for every `ε`, measures
//! `E(ε) = ‖(v_ε − v, ε(w_ε − w))‖_{E₁(0,T)}` by the difference iteration, by
//! subtracting a direct scaled Navier–Stokes run, or by both with a
//! cross-check against a discretization-error estimate.

pub mod checks;
pub mod report;

pub use report::{emit_report, read_report, ReportFormat, CSV_HEADER};

use crate::dynamics::{difference_iteration, direct_difference, simulate_pe, simulate_sns, DifferenceOptions, InitialData, SimParams, Trajectory};
use crate::fields::norms::{e1_norm, NormSpec};
use crate::fields::SpectralField;
use crate::symbols::least_squares;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Version of the configuration and report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Which estimate of `E(ε)` to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPaths {
    /// Difference iteration and direct subtraction, cross-checked.
    Both,
    Difference,
    Direct,
}

/// Flat experiment configuration, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Must equal [`SCHEMA_VERSION`]; required in files.
    pub schema_version: Option<u32>,
    pub n_h: usize,
    pub n_z: usize,
    pub t_final: f64,
    pub dt: f64,
    /// Strictly decreasing values in `(0, 1]`.
    pub epsilons: Vec<f64>,
    pub p: f64,
    pub q: f64,
    /// Relative stopping tolerance of the difference iteration.
    pub picard_tol: f64,
    pub max_iter: usize,
    /// Largest `‖u‖_{E₁}` of the hydrostatic solution on one Picard subinterval.
    pub split_budget: f64,
    /// Rows whose solver residuals exceed this are left out of the slope fit.
    pub residual_tol: f64,
    /// The two paths agree when their gap is at most this many discretization errors.
    pub agreement_factor: f64,
    /// Extra vertical nodes for the spatial part of the discretization error.
    pub refine_nz: usize,
    pub paths: SolverPaths,
    /// At most `i64::MAX`, the largest TOML integer.
    pub seed: u64,
    pub initial_data: String,
    pub amplitude: f64,
    pub output_dir: String,
    /// Run even when `(p, q)` lies outside the admissible range.
    pub allow_inadmissible: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            schema_version: Some(SCHEMA_VERSION),
            n_h: 8,
            n_z: 24,
            t_final: 0.5,
            dt: 1.0 / 256.0,
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            p: 2.0,
            q: 2.0,
            picard_tol: 1e-8,
            max_iter: 80,
            split_budget: 20.0,
            residual_tol: 1e-6,
            agreement_factor: 5.0,
            refine_nz: 8,
            paths: SolverPaths::Both,
            seed: 0,
            initial_data: "default".into(),
            amplitude: 1.0,
            output_dir: "out".into(),
            allow_inadmissible: false,
        }
    }
}

impl SimConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !table.contains_key("schema_version") {
            return Err(Error::Config("missing schema_version".into()));
        }
        let cfg: SimConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn norm_spec_admissibility(&self) -> Result<(bool, f64)> {
        let s = NormSpec::new(self.p, self.q, vec![0.0, self.t_final]).map_err(|e| Error::Config(e.to_string()))?;
        Ok((s.admissible(), s.admissibility_margin()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return bad(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}")),
            None => return bad("missing schema_version".into()),
        }
        if self.n_h == 0 || self.n_z == 0 || self.max_iter == 0 || self.refine_nz == 0 {
            return bad("n_h, n_z, max_iter and refine_nz must be positive".into());
        }
        for (name, v) in [
            ("t_final", self.t_final),
            ("dt", self.dt),
            ("picard_tol", self.picard_tol),
            ("split_budget", self.split_budget),
            ("residual_tol", self.residual_tol),
            ("agreement_factor", self.agreement_factor),
        ] {
            if !(v > 0.0) || v.is_nan() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed {} does not fit a TOML integer (at most {})", self.seed, i64::MAX));
        }
        if let Some(e) = self.epsilons.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return bad(format!("epsilon {e} outside (0, 1]"));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilons must be strictly decreasing".into());
        }
        let (admissible, margin) = self.norm_spec_admissibility()?;
        if !admissible && !self.allow_inadmissible {
            return bad(format!(
                "(p, q) = ({}, {}) is not admissible (margin {margin:.3}); set allow_inadmissible to override",
                self.p, self.q
            ));
        }
        InitialData::parse(&self.initial_data).map_err(|e| Error::Config(e.to_string()))?;
        self.sim_params()?.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sim_params(&self) -> Result<SimParams> {
        Ok(SimParams {
            nh: self.n_h,
            nz: self.n_z,
            t_final: self.t_final,
            dt: self.dt,
            amplitude: self.amplitude,
            initial: InitialData::parse(&self.initial_data).map_err(|e| Error::Config(e.to_string()))?,
        })
    }

    pub fn difference_options(&self) -> DifferenceOptions {
        DifferenceOptions {
            tol: self.picard_tol,
            max_iter: self.max_iter,
            split_budget: self.split_budget,
            p: self.p,
            q: self.q,
        }
    }
}

/// Build and host information recorded with every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: rayon::current_num_threads(),
        }
    }
}

/// One `ε` of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub epsilon: f64,
    /// `E(ε)`; from the difference iteration whenever it ran.
    pub e_e1: Option<f64>,
    /// `E₁` norm of the horizontal part `v_ε − v`.
    pub e_v_part: Option<f64>,
    /// `E₁` norm of the vertical part `ε(w_ε − w)`.
    pub e_w_part: Option<f64>,
    /// Largest constraint defect of the hydrostatic run.
    pub pe_residual: f64,
    /// Largest of the final Picard increment and the divergence defect of the direct run.
    pub sns_residual: Option<f64>,
    /// Picard iterations over all subintervals.
    pub iterations: usize,
    pub wall_ms: u64,
    pub picard_max_ratio: Option<f64>,
    pub subintervals: usize,
    /// `E(ε)` from the direct run.
    pub direct_e1: Option<f64>,
    /// Largest change of either path under step doubling plus vertical refinement.
    pub discretization_error: Option<f64>,
    pub paths_agree: Option<bool>,
    /// Left out of the slope fit.
    pub excluded: bool,
    pub failure: Option<String>,
}

impl ReportRow {
    fn fit_point(&self) -> Option<(f64, f64)> {
        match (self.excluded, self.failure.as_ref(), self.e_e1) {
            (false, None, Some(e)) if e > 0.0 => Some((self.epsilon.ln(), e.ln())),
            _ => None,
        }
    }
}

/// Output of [`run_convergence_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: SimConfig,
    pub environment: Environment,
    pub admissible: bool,
    pub admissibility_margin: f64,
    pub rows: Vec<ReportRow>,
    /// Least-squares slope of `ln E` against `ln ε`; present iff at least
    /// three rows enter the fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    /// Some row failed.
    pub partial: bool,
}

impl ExperimentReport {
    /// Assembles a report and fits the slope from `rows`.
    pub fn new(config: SimConfig, rows: Vec<ReportRow>) -> Self {
        let (admissible, admissibility_margin) = config.norm_spec_admissibility().unwrap_or((false, f64::NAN));
        let pts: Vec<(f64, f64)> = rows.iter().filter_map(ReportRow::fit_point).collect();
        let slope = (pts.len() >= 3).then(|| least_squares(&pts).0);
        let partial = rows.iter().any(|r| r.failure.is_some());
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            config,
            environment: Environment::current(),
            admissible,
            admissibility_margin,
            rows,
            slope,
            partial,
        }
    }
}

/// Largest constraint defect recorded along a trajectory: the divergence
/// defect, and for hydrostatic states also the vertical variation of the
/// pressure. The scaled pressure varies in `z` at order `ε²` by design.
pub fn trajectory_residual(t: &Trajectory) -> f64 {
    t.diagnostics
        .iter()
        .zip(&t.states)
        .map(|(d, s)| {
            let column = if s.epsilon == 0.0 { d.pressure_z_variation } else { 0.0 };
            d.divergence_defect.max(column)
        })
        .fold(0.0, f64::max)
}

/// Hydrostatic runs shared by every `ε`.
struct PeRuns {
    base: Trajectory,
    /// Step doubled.
    coarse: Option<Trajectory>,
    /// `refine_nz` more vertical nodes.
    fine: Option<Trajectory>,
}

struct PathValue {
    e: f64,
    parts: (f64, f64),
    residual: f64,
    iterations: usize,
    max_ratio: Option<f64>,
    subintervals: usize,
}

fn split_e1(x: &[Vec<SpectralField>], times: &[f64], p: f64, q: f64, nz: usize) -> Result<(f64, f64)> {
    let spec = NormSpec::new(p, q, times.to_vec())?;
    let cheb = crate::fields::Cheb::new(nz);
    let v: Vec<Vec<SpectralField>> = x.iter().map(|c| c[..2].to_vec()).collect();
    let w: Vec<Vec<SpectralField>> = x.iter().map(|c| vec![c[2].clone()]).collect();
    Ok((e1_norm(&v, &spec, &cheb)?, e1_norm(&w, &spec, &cheb)?))
}

fn picard_path(pe: &Trajectory, eps: f64, cfg: &SimConfig) -> Result<PathValue> {
    let r = difference_iteration(pe, eps, &cfg.difference_options())?;
    let x: Vec<Vec<SpectralField>> = r.x.iter().map(|v| v.c.to_vec()).collect();
    let parts = split_e1(&x, &r.times, cfg.p, cfg.q, pe.nz)?;
    Ok(PathValue {
        e: r.e1,
        parts,
        residual: r.residual,
        iterations: r.iterations,
        max_ratio: Some(r.max_ratio()),
        subintervals: r.subintervals.len(),
    })
}

fn direct_path(params: &SimParams, pe: &Trajectory, eps: f64, cfg: &SimConfig) -> Result<PathValue> {
    let sns = simulate_sns(params, eps)?;
    let (e, _) = direct_difference(&sns, pe, eps, cfg.p, cfg.q)?;
    let x: Vec<Vec<SpectralField>> = sns
        .states
        .iter()
        .zip(&pe.states)
        .map(|(a, b)| vec![&a.vh[0] - &b.vh[0], &a.vh[1] - &b.vh[1], (&a.w - &b.w).scale_re(eps)])
        .collect();
    let parts = split_e1(&x, &pe.times, cfg.p, cfg.q, pe.nz)?;
    Ok(PathValue {
        e,
        parts,
        residual: trajectory_residual(&sns),
        iterations: 0,
        max_ratio: None,
        subintervals: 0,
    })
}

fn variants(cfg: &SimConfig) -> Result<(SimParams, SimParams, SimParams)> {
    let base = cfg.sim_params()?;
    let coarse = base.with_dt(2.0 * base.dt);
    let mut fine = base.clone();
    fine.nz += cfg.refine_nz;
    Ok((base, coarse, fine))
}

fn run_row(eps: f64, cfg: &SimConfig, pe: &PeRuns) -> Result<ReportRow> {
    let start = Instant::now();
    let (base, coarse, fine) = variants(cfg)?;
    let want_picard = cfg.paths != SolverPaths::Direct;
    let want_direct = cfg.paths != SolverPaths::Difference;
    let picard = want_picard.then(|| picard_path(&pe.base, eps, cfg)).transpose()?;
    let direct = want_direct.then(|| direct_path(&base, &pe.base, eps, cfg)).transpose()?;
    let mut disc = None;
    let mut agree = None;
    if let (Some(pc), Some(dc), Some(pe_c), Some(pe_f)) = (&picard, &direct, &pe.coarse, &pe.fine) {
        let pc2 = picard_path(pe_c, eps, cfg)?.e;
        let pcz = picard_path(pe_f, eps, cfg)?.e;
        let dc2 = direct_path(&coarse, pe_c, eps, cfg)?.e;
        let dcz = direct_path(&fine, pe_f, eps, cfg)?.e;
        let d = ((pc.e - pc2).abs() + (pc.e - pcz).abs()).max((dc.e - dc2).abs() + (dc.e - dcz).abs());
        disc = Some(d);
        agree = Some((pc.e - dc.e).abs() <= cfg.agreement_factor * d);
    }
    let main = picard.as_ref().or(direct.as_ref()).expect("at least one path runs");
    let sns_residual = [picard.as_ref(), direct.as_ref()]
        .into_iter()
        .flatten()
        .map(|p| p.residual)
        .fold(0.0, f64::max);
    let pe_residual = trajectory_residual(&pe.base);
    Ok(ReportRow {
        epsilon: eps,
        e_e1: Some(main.e),
        e_v_part: Some(main.parts.0),
        e_w_part: Some(main.parts.1),
        pe_residual,
        sns_residual: Some(sns_residual),
        iterations: main.iterations,
        wall_ms: start.elapsed().as_millis() as u64,
        picard_max_ratio: picard.as_ref().and_then(|p| p.max_ratio),
        subintervals: main.subintervals,
        direct_e1: direct.as_ref().map(|d| d.e),
        discretization_error: disc,
        paths_agree: agree,
        excluded: pe_residual > cfg.residual_tol || sns_residual > cfg.residual_tol,
        failure: None,
    })
}

fn failed_row(eps: f64, err: &Error, wall_ms: u64, pe_residual: f64) -> ReportRow {
    ReportRow {
        epsilon: eps,
        e_e1: None,
        e_v_part: None,
        e_w_part: None,
        pe_residual,
        sns_residual: None,
        iterations: 0,
        wall_ms,
        picard_max_ratio: None,
        subintervals: 0,
        direct_e1: None,
        discretization_error: None,
        paths_agree: None,
        excluded: true,
        failure: Some(err.to_string()),
    }
}

/// Runs the sweep over `cfg.epsilons`. A failing `ε` becomes a marked row of
/// a partial report; a failing hydrostatic run is returned as an error.
pub fn run_convergence_study(cfg: &SimConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (base, coarse, fine) = variants(cfg)?;
    let cross = cfg.paths == SolverPaths::Both;
    let pe = PeRuns {
        base: simulate_pe(&base)?,
        coarse: cross.then(|| simulate_pe(&coarse)).transpose()?,
        fine: cross.then(|| simulate_pe(&fine)).transpose()?,
    };
    let rows: Vec<ReportRow> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            run_row(eps, cfg, &pe)
                .unwrap_or_else(|e| failed_row(eps, &e, start.elapsed().as_millis() as u64, trajectory_residual(&pe.base)))
        })
        .collect();
    Ok(ExperimentReport::new(cfg.clone(), rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(eps: f64, e: f64) -> ReportRow {
        ReportRow {
            epsilon: eps,
            e_e1: Some(e),
            e_v_part: Some(e),
            e_w_part: Some(0.0),
            pe_residual: 0.0,
            sns_residual: Some(0.0),
            iterations: 3,
            wall_ms: 1,
            picard_max_ratio: Some(0.1),
            subintervals: 1,
            direct_e1: None,
            discretization_error: None,
            paths_agree: None,
            excluded: false,
            failure: None,
        }
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(SimConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(SimConfig::from_toml_str("n_h = 4"), Err(Error::Config(_))));
        assert!(matches!(SimConfig::from_toml_str("schema_version = 2"), Err(Error::Config(_))));
        assert!(matches!(SimConfig::from_toml_str("schema_version = 1\nbogus = 3"), Err(Error::Config(_))));
        assert!(matches!(
            SimConfig::from_toml_str("schema_version = 1\nepsilons = [0.1, 0.2]"),
            Err(Error::Config(_))
        ));
        assert!(matches!(SimConfig::from_toml_str("schema_version = 1\np = 1.5\nq = 1.5"), Err(Error::Config(_))));
        let ok = SimConfig::from_toml_str("schema_version = 1\np = 1.5\nq = 1.5\nallow_inadmissible = true").unwrap();
        assert!(!ok.norm_spec_admissibility().unwrap().0);
        assert!(matches!(SimConfig::from_toml_str("schema_version = 1\ndt = 0.3"), Err(Error::Config(_))));
    }

    #[test]
    fn slope_needs_three_fitted_rows() {
        let cfg = SimConfig::default();
        let two = ExperimentReport::new(cfg.clone(), vec![row(0.2, 0.2), row(0.1, 0.1)]);
        assert!(two.slope.is_none());
        let three = ExperimentReport::new(cfg.clone(), vec![row(0.2, 0.4), row(0.1, 0.1), row(0.05, 0.025)]);
        assert!((three.slope.unwrap() - 2.0).abs() < 1e-12);
        // an excluded row does not count
        let mut bad = row(0.025, 10.0);
        bad.excluded = true;
        let ex = ExperimentReport::new(cfg, vec![row(0.2, 0.4), row(0.1, 0.1), row(0.05, 0.025), bad]);
        assert!((ex.slope.unwrap() - 2.0).abs() < 1e-12);
        assert!(!ex.partial);
    }

    #[test]
    fn failing_row_marks_partial_report() {
        let cfg = SimConfig {
            epsilons: vec![0.5],
            max_iter: 2,
            picard_tol: 1e-30,
            paths: SolverPaths::Difference,
            n_h: 2,
            n_z: 10,
            t_final: 1.0 / 16.0,
            dt: 1.0 / 64.0,
            ..SimConfig::default()
        };
        let rep = run_convergence_study(&cfg).unwrap();
        assert!(rep.partial);
        assert!(rep.rows[0].failure.is_some() && rep.rows[0].excluded);
        assert!(rep.slope.is_none());
    }

    #[test]
    fn scaled_pressure_variation_is_not_a_defect() {
        let cfg = SimConfig { n_h: 4, n_z: 12, t_final: 1.0 / 32.0, ..SimConfig::default() };
        let sns = simulate_sns(&cfg.sim_params().unwrap(), 0.2).unwrap();
        let column = sns.diagnostics.iter().map(|d| d.pressure_z_variation).fold(0.0, f64::max);
        assert!(column > 1e-6, "{column}");
        assert!(trajectory_residual(&sns) < 1e-8);
        let pe = simulate_pe(&cfg.sim_params().unwrap()).unwrap();
        assert!(trajectory_residual(&pe) < 1e-12);
    }
}
