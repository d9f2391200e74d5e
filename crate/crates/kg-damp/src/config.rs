//! JSON run configuration: schema, defaults, cross-field validation, and
//! assembly of the grid, damper, model, scheme, and initial data.
//!
//! Every field a config omits is filled from the reference run (defocusing
//! quartic on [-60, 60], exterior smoothstep damper, Gaussian data of unit
//! energy) and reported by name, so a minimal config documents itself at
//! load time.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{weighted_sobolev_ratio, RunHistory};
use crate::error::{KgError, Result};
use crate::grid::{DamperProfile, DamperShape, Grid, GridKind};
use crate::nonlinearity::truncate::{truncate_first, truncate_second, TruncatedModel};
use crate::nonlinearity::{Nonlinearity, NonlinearityModel, Sign};
use crate::rates::fit_decay_rate;
use crate::stepper::{simulate, SchemeConfig, SchemeKind, SimulateOptions};
use crate::variational::{classify, shoot_ground_state, Classification};

// Raw schema: every field optional so defaulting can be reported.

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRunConfig {
    pub geometry: Option<RawGeometry>,
    pub damper: Option<RawDamper>,
    pub nonlinearity: Option<RawNonlinearity>,
    pub mode: Option<String>,
    pub initial_data: Option<RawInitialData>,
    pub time: Option<RawTime>,
    pub diagnostics: Option<RawDiagnostics>,
    pub outputs: Option<RawOutputs>,
    pub scheme: Option<RawScheme>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGeometry {
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub dr: Option<f64>,
    pub r_inner: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDamper {
    #[serde(rename = "M")]
    pub m: Option<f64>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub a0: Option<f64>,
    pub shape: Option<DamperShape>,
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNonlinearity {
    pub kind: Option<String>,
    pub terms: Option<Vec<(f64, f64)>>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    pub c0: Option<f64>,
    pub q_growth: Option<f64>,
    pub truncation: Option<RawTruncation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTruncation {
    pub theta: Option<f64>,
    pub k: f64,
    pub l: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitialData {
    pub kind: Option<String>,
    pub amplitude: Option<f64>,
    pub center: Option<f64>,
    pub width: Option<f64>,
    pub velocity_amplitude: Option<f64>,
    pub kappa: Option<f64>,
    pub m_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTime {
    pub dt: Option<f64>,
    #[serde(rename = "T_final")]
    pub t_final: Option<f64>,
    pub sample_stride: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDiagnostics {
    #[serde(rename = "S_cone")]
    pub s_cone: Option<f64>,
    pub p_sobolev: Option<f64>,
    #[serde(rename = "chi_R")]
    pub chi_r: Option<f64>,
    pub fit_window: Option<(f64, f64)>,
    pub cone_margin: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutputs {
    pub csv_path: Option<String>,
    pub summary_path: Option<String>,
    pub snapshot_stride: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScheme {
    pub kind: Option<String>,
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<u32>,
    pub sv_epsilon: Option<f64>,
    pub blowup_threshold: Option<f64>,
    pub disable_sv_quotient: Option<bool>,
}

// Resolved configuration: plain values, ready to build.

#[derive(Debug, Clone, Copy)]
pub struct GeometryCfg {
    pub n_dim: u32,
    pub l: f64,
    pub dr: f64,
    pub r_inner: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DamperCfg {
    pub m_bound: f64,
    pub r_active: f64,
    pub a0: f64,
    pub shape: DamperShape,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    None,
    PowerSum,
    ExponentialPower,
    Exp2d,
}

#[derive(Debug, Clone)]
pub struct ModelCfg {
    pub kind: ModelKind,
    pub terms: Vec<(f64, f64)>,
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub alpha: f64,
    pub c0: Option<f64>,
    pub q_growth: Option<f64>,
    pub truncation: Option<TruncationCfg>,
}

#[derive(Debug, Clone, Copy)]
pub struct TruncationCfg {
    pub theta: f64,
    pub k: f64,
    pub l: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Gaussian,
    Bump,
    Eigenmode,
    GroundStateMultiple,
}

#[derive(Debug, Clone, Copy)]
pub struct InitialCfg {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub velocity_amplitude: f64,
    pub kappa: f64,
    pub m_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct TimeCfg {
    pub dt: f64,
    pub t_final: f64,
    pub sample_stride: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsCfg {
    pub s_cone: f64,
    pub p_sobolev: f64,
    pub chi_r: f64,
    pub fit_window: (f64, f64),
    pub cone_margin: f64,
}

#[derive(Debug, Clone)]
pub struct OutputsCfg {
    pub csv_path: String,
    pub summary_path: String,
    pub snapshot_stride: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: GeometryCfg,
    pub damper: DamperCfg,
    pub model: ModelCfg,
    pub mode: Sign,
    pub initial: InitialCfg,
    pub time: TimeCfg,
    pub diagnostics: DiagnosticsCfg,
    pub outputs: OutputsCfg,
    pub scheme: SchemeConfig,
}

struct Ledger(Vec<String>);

impl Ledger {
    fn take<T: Copy + std::fmt::Display>(&mut self, v: Option<T>, path: &str, default: T) -> T {
        match v {
            Some(x) => x,
            None => {
                self.0.push(format!("defaulted {path} = {default}"));
                default
            }
        }
    }

    fn note(&mut self, path: &str, shown: &str) {
        self.0.push(format!("defaulted {path} = {shown}"));
    }
}

fn parse_mode(s: &str) -> Result<Sign> {
    match s {
        "defocusing" => Ok(Sign::Defocusing),
        "focusing" => Ok(Sign::Focusing),
        other => Err(KgError::Config(format!(
            "mode must be \"defocusing\" or \"focusing\", got \"{other}\""
        ))),
    }
}

fn parse_model_kind(s: &str) -> Result<ModelKind> {
    match s {
        "none" => Ok(ModelKind::None),
        "power_sum" => Ok(ModelKind::PowerSum),
        "exponential_power" => Ok(ModelKind::ExponentialPower),
        "exp2d" => Ok(ModelKind::Exp2d),
        other => Err(KgError::Config(format!(
            "nonlinearity.kind \"{other}\" is not one of none, power_sum, exponential_power, exp2d"
        ))),
    }
}

fn parse_initial_kind(s: &str) -> Result<InitialKind> {
    match s {
        "gaussian" => Ok(InitialKind::Gaussian),
        "bump" => Ok(InitialKind::Bump),
        "eigenmode" => Ok(InitialKind::Eigenmode),
        "ground_state_multiple" => Ok(InitialKind::GroundStateMultiple),
        other => Err(KgError::Config(format!(
            "initial_data.kind \"{other}\" is not one of gaussian, bump, eigenmode, ground_state_multiple"
        ))),
    }
}

fn parse_scheme_kind(s: &str) -> Result<SchemeKind> {
    match s {
        "conservative" => Ok(SchemeKind::Conservative),
        "leapfrog_explicit" => Ok(SchemeKind::LeapfrogExplicit),
        other => Err(KgError::Config(format!(
            "scheme.kind must be \"conservative\" or \"leapfrog_explicit\", got \"{other}\""
        ))),
    }
}

/// Fill defaults and validate; the report lists every applied default.
pub fn from_raw(raw: &RawRunConfig) -> Result<(RunConfig, Vec<String>)> {
    let mut led = Ledger(Vec::new());

    let g = raw.geometry.clone().unwrap_or_default();
    let geometry = GeometryCfg {
        n_dim: led.take(g.n, "geometry.N", 1),
        l: led.take(g.l, "geometry.L", 60.0),
        dr: led.take(g.dr, "geometry.dr", 0.05),
        r_inner: led.take(g.r_inner, "geometry.r_inner", 0.0),
    };

    let d = raw.damper.clone().unwrap_or_default();
    let shape = match d.shape {
        Some(s) => s,
        None => {
            led.note("damper.shape", "smoothstep");
            DamperShape::Smoothstep
        }
    };
    let damper = DamperCfg {
        m_bound: led.take(d.m, "damper.M", 1.0),
        r_active: led.take(d.r, "damper.R", 5.0),
        a0: led.take(d.a0, "damper.a0", 1.0),
        shape,
        width: led.take(d.width, "damper.width", 1.0),
    };

    let nl = raw.nonlinearity.clone().unwrap_or_default();
    let kind = match &nl.kind {
        Some(s) => parse_model_kind(s)?,
        None => {
            led.note("nonlinearity.kind", "power_sum");
            ModelKind::PowerSum
        }
    };
    let terms = match nl.terms {
        Some(t) => t,
        None => {
            if kind == ModelKind::PowerSum {
                led.note("nonlinearity.terms", "[[1, 4]]");
            }
            vec![(1.0, 4.0)]
        }
    };
    let truncation = match &nl.truncation {
        Some(t) => Some(TruncationCfg {
            theta: match t.theta {
                Some(x) => x,
                None => {
                    led.note("nonlinearity.truncation.theta", "0.5");
                    0.5
                }
            },
            k: t.k,
            l: t.l,
        }),
        None => None,
    };
    let model = ModelCfg {
        kind,
        terms,
        lambda: led.take(nl.lambda, "nonlinearity.lambda", 1.0),
        mu: led.take(nl.mu, "nonlinearity.mu", 1.0),
        nu: led.take(nl.nu, "nonlinearity.nu", 2.0),
        alpha: led.take(nl.alpha, "nonlinearity.alpha", 2.0),
        c0: nl.c0,
        q_growth: nl.q_growth,
        truncation,
    };

    let mode = match &raw.mode {
        Some(s) => parse_mode(s)?,
        None => {
            led.note("mode", "defocusing");
            Sign::Defocusing
        }
    };

    let i = raw.initial_data.clone().unwrap_or_default();
    let initial_kind = match &i.kind {
        Some(s) => parse_initial_kind(s)?,
        None => {
            led.note("initial_data.kind", "gaussian");
            InitialKind::Gaussian
        }
    };
    let initial = InitialCfg {
        kind: initial_kind,
        amplitude: led.take(i.amplitude, "initial_data.amplitude", 0.345),
        center: led.take(i.center, "initial_data.center", 0.0),
        width: led.take(i.width, "initial_data.width", 4.0),
        velocity_amplitude: led.take(i.velocity_amplitude, "initial_data.velocity_amplitude", 0.0),
        kappa: if initial_kind == InitialKind::GroundStateMultiple {
            led.take(i.kappa, "initial_data.kappa", 1.0)
        } else {
            i.kappa.unwrap_or(1.0)
        },
        m_threshold: i.m_threshold,
    };

    let t = raw.time.clone().unwrap_or_default();
    let time = TimeCfg {
        dt: led.take(t.dt, "time.dt", 0.04),
        t_final: led.take(t.t_final, "time.T_final", 100.0),
        sample_stride: led.take(t.sample_stride, "time.sample_stride", 2),
    };

    let dg = raw.diagnostics.clone().unwrap_or_default();
    let s_cone_default = (3.0 * damper.r_active).max(1.0);
    let p_default = 2.0 + 4.0 / geometry.n_dim as f64;
    let fit_default = (0.1 * time.t_final, time.t_final);
    let diagnostics = DiagnosticsCfg {
        s_cone: led.take(dg.s_cone, "diagnostics.S_cone", s_cone_default),
        p_sobolev: led.take(dg.p_sobolev, "diagnostics.p_sobolev", p_default),
        chi_r: led.take(dg.chi_r, "diagnostics.chi_R", damper.r_active),
        fit_window: match dg.fit_window {
            Some(w) => w,
            None => {
                led.note(
                    "diagnostics.fit_window",
                    &format!("[{}, {}]", fit_default.0, fit_default.1),
                );
                fit_default
            }
        },
        cone_margin: led.take(dg.cone_margin, "diagnostics.cone_margin", geometry.dr / 2.0),
    };

    let o = raw.outputs.clone().unwrap_or_default();
    let outputs = OutputsCfg {
        csv_path: match o.csv_path {
            Some(p) => p,
            None => {
                led.note("outputs.csv_path", "diagnostics.csv");
                "diagnostics.csv".into()
            }
        },
        summary_path: match o.summary_path {
            Some(p) => p,
            None => {
                led.note("outputs.summary_path", "summary.json");
                "summary.json".into()
            }
        },
        snapshot_stride: o.snapshot_stride,
    };

    let s = raw.scheme.clone().unwrap_or_default();
    let scheme_kind = match &s.kind {
        Some(k) => parse_scheme_kind(k)?,
        None => {
            led.note("scheme.kind", "conservative");
            SchemeKind::Conservative
        }
    };
    let scheme = SchemeConfig {
        dt: time.dt,
        scheme: scheme_kind,
        newton_tol: led.take(s.newton_tol, "scheme.newton_tol", 1e-12),
        newton_max_iter: led.take(s.newton_max_iter, "scheme.newton_max_iter", 50),
        sv_epsilon: led.take(s.sv_epsilon, "scheme.sv_epsilon", 1e-10),
        blowup_threshold: led.take(s.blowup_threshold, "scheme.blowup_threshold", 1e6),
        disable_sv_quotient: led.take(
            s.disable_sv_quotient,
            "scheme.disable_sv_quotient",
            false,
        ),
    };

    let config = RunConfig {
        geometry,
        damper,
        model,
        mode,
        initial,
        time,
        diagnostics,
        outputs,
        scheme,
    };
    config.validate()?;
    Ok((config, led.0))
}

pub fn parse_run_config(value: &serde_json::Value) -> Result<(RunConfig, Vec<String>)> {
    let raw: RawRunConfig = serde_json::from_value(value.clone())
        .map_err(|e| KgError::Config(format!("config schema violation: {e}")))?;
    from_raw(&raw)
}

pub fn load_run_config(path: &Path) -> Result<(RunConfig, Vec<String>)> {
    let text = fs::read_to_string(path)?;
    let raw: RawRunConfig = serde_json::from_str(&text)
        .map_err(|e| KgError::Config(format!("{}: {e}", path.display())))?;
    from_raw(&raw)
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.n_dim < 1 {
            return Err(KgError::Config("geometry.N must be >= 1".into()));
        }
        if !(g.dr > 0.0) || !(g.l > 0.0) {
            return Err(KgError::Config(
                "geometry.L and geometry.dr must be positive".into(),
            ));
        }
        if self.time.dt > g.dr {
            return Err(KgError::Config(format!(
                "CFL violation: time.dt = {} exceeds geometry.dr = {}",
                self.time.dt, g.dr
            )));
        }
        if !(self.time.dt > 0.0) {
            return Err(KgError::Config("time.dt must be positive".into()));
        }
        if self.time.t_final < 0.0 {
            return Err(KgError::Config("time.T_final must be nonnegative".into()));
        }
        if self.time.sample_stride == 0 {
            return Err(KgError::Config("time.sample_stride must be >= 1".into()));
        }

        let n = g.n_dim as f64;
        let p_lo = 2.0 + 4.0 / n;
        if self.diagnostics.p_sobolev < p_lo - 1e-12 {
            return Err(KgError::Config(format!(
                "diagnostics.p_sobolev = {} is below 2+4/N = {p_lo}",
                self.diagnostics.p_sobolev
            )));
        }
        if g.n_dim >= 3 {
            let p_hi = 2.0 * n / (n - 2.0);
            if self.diagnostics.p_sobolev > p_hi + 1e-12 {
                return Err(KgError::Config(format!(
                    "diagnostics.p_sobolev = {} is above 2N/(N-2) = {p_hi}",
                    self.diagnostics.p_sobolev
                )));
            }
        }
        if self.diagnostics.s_cone < 1.0 {
            return Err(KgError::Config(
                "diagnostics.S_cone must be >= 1 (cone weights degenerate earlier)".into(),
            ));
        }
        if !(self.diagnostics.chi_r > 0.0) {
            return Err(KgError::Config("diagnostics.chi_R must be positive".into()));
        }
        if self.diagnostics.cone_margin < 0.0 {
            return Err(KgError::Config(
                "diagnostics.cone_margin must be nonnegative".into(),
            ));
        }
        let (f1, f2) = self.diagnostics.fit_window;
        if !(f1 >= 0.0 && f2 > f1) {
            return Err(KgError::Config(format!(
                "diagnostics.fit_window = [{f1}, {f2}] must satisfy 0 <= start < end"
            )));
        }

        match self.initial.kind {
            InitialKind::Gaussian | InitialKind::Bump => {
                if !(self.initial.width > 0.0) {
                    return Err(KgError::Config("initial_data.width must be positive".into()));
                }
            }
            InitialKind::GroundStateMultiple => {
                if self.mode != Sign::Focusing {
                    return Err(KgError::Config(
                        "initial_data.kind = ground_state_multiple needs mode = focusing".into(),
                    ));
                }
                if !(self.initial.kappa > 0.0) {
                    return Err(KgError::Config("initial_data.kappa must be positive".into()));
                }
            }
            InitialKind::Eigenmode => {
                let ok = match self.geometry.r_inner {
                    ri if ri > 0.0 => false,
                    _ => g.n_dim == 1 || g.n_dim == 3,
                };
                if !ok {
                    return Err(KgError::Config(
                        "initial_data.kind = eigenmode supports N=1 lines and N=3 balls only"
                            .into(),
                    ));
                }
            }
        }

        if self.mode == Sign::Focusing {
            if self.model.kind == ModelKind::None {
                return Err(KgError::Config(
                    "mode = focusing needs a nonzero nonlinearity".into(),
                ));
            }
            if self.model.truncation.is_some() {
                return Err(KgError::Config(
                    "nonlinearity.truncation applies to defocusing mode only".into(),
                ));
            }
        }
        if let Some(tr) = &self.model.truncation {
            if !(tr.theta > 0.0 && tr.theta < 1.0) {
                return Err(KgError::Config(
                    "nonlinearity.truncation.theta must lie in (0, 1)".into(),
                ));
            }
            if g.n_dim >= 3 {
                let cap = 2.0 * n / (n - 2.0);
                if 2.0 + tr.theta >= cap {
                    return Err(KgError::Config(format!(
                        "nonlinearity.truncation.theta = {} needs 2+theta < 2N/(N-2) = {cap}",
                        tr.theta
                    )));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn build_model(&self) -> Result<ModelChoice> {
        let base = match self.model.kind {
            ModelKind::None => NonlinearityModel::none(),
            ModelKind::PowerSum => NonlinearityModel::power_sum(&self.model.terms, self.mode)?,
            ModelKind::ExponentialPower => NonlinearityModel::exponential_power(
                self.model.lambda,
                self.model.mu,
                self.model.nu,
                self.model.alpha,
                self.mode,
            )?,
            ModelKind::Exp2d => NonlinearityModel::exp2d(self.mode),
        };
        let base = match self.model.c0 {
            Some(c0) => base.with_c0(c0),
            None => base,
        };
        let base = match self.model.q_growth {
            Some(q) => base.with_q_growth(q),
            None => base,
        };
        match &self.model.truncation {
            Some(tr) => {
                let first = truncate_first(&base, tr.theta, tr.k)?;
                let trunc = match tr.l {
                    Some(l) => truncate_second(&first, l)?,
                    None => first,
                };
                Ok(ModelChoice::Truncated(trunc))
            }
            None => Ok(ModelChoice::Plain(base)),
        }
    }

    /// Construct every simulation object. Shooting for the threshold mass
    /// happens here when the run is focusing and no override is given.
    pub fn build(&self) -> Result<RunSetup> {
        let g = &self.geometry;
        let grid = Grid::new(g.n_dim, g.r_inner, g.l, g.dr)?;
        let damper = DamperProfile::new(
            &grid,
            self.damper.shape,
            self.damper.m_bound,
            self.damper.r_active,
            self.damper.a0,
            self.damper.width,
        )?;
        let model = self.build_model()?;
        let scheme = self.scheme.clone();
        scheme.validate(&grid)?;

        let mut warnings = Vec::new();
        let (u0, v0, m_threshold, support) = self.build_initial(&grid, &model)?;

        if self.time.t_final > g.l - support {
            warnings.push(format!(
                "T_final = {} exceeds L - data support = {}: boundary reflections can reach the measurement window",
                self.time.t_final,
                g.l - support
            ));
        }
        if self.time.dt * self.time.sample_stride as f64 > 0.1 {
            warnings.push(format!(
                "sample spacing dt*stride = {} is coarse; centered velocities lose accuracy",
                self.time.dt * self.time.sample_stride as f64
            ));
        }
        if self.damper.r_active >= g.l {
            warnings.push("damper.R is at or beyond the outer boundary; damping never activates".into());
        }
        if self.mode == Sign::Focusing && self.model.kind == ModelKind::Exp2d {
            warnings.push(
                "focusing exponential model sits outside the classification theory; thresholds are numerical only"
                    .into(),
            );
        }

        let opts = SimulateOptions {
            t_final: self.time.t_final,
            sample_stride: self.time.sample_stride,
            s_cone: self.diagnostics.s_cone,
            p_sobolev: self.diagnostics.p_sobolev,
            chi_r: self.diagnostics.chi_r,
            cone_margin: self.diagnostics.cone_margin,
            snapshot_stride: self.outputs.snapshot_stride,
        };

        Ok(RunSetup {
            grid,
            damper,
            model,
            scheme,
            opts,
            u0,
            v0,
            mode: self.mode,
            fit_window: self.diagnostics.fit_window,
            m_threshold,
            outputs: self.outputs.clone(),
            warnings,
        })
    }

    /// Initial displacement and velocity, plus the resolved threshold mass
    /// (focusing only) and the data support radius for the reflection check.
    fn build_initial(
        &self,
        grid: &Grid,
        model: &ModelChoice,
    ) -> Result<(Vec<f64>, Vec<f64>, Option<f64>, f64)> {
        let i = &self.initial;
        let n = grid.n_nodes();
        let mut shape = vec![0.0; n];
        let mut support = grid.outer_radius();
        let mut ground: Option<crate::variational::GroundState> = None;

        match i.kind {
            InitialKind::Gaussian => {
                for (j, s) in shape.iter_mut().enumerate() {
                    let x = grid.coords()[j];
                    let z = (x - i.center) / i.width;
                    *s = (-0.5 * z * z).exp();
                }
                support = i.center.abs() + 3.0 * i.width;
            }
            InitialKind::Bump => {
                for (j, s) in shape.iter_mut().enumerate() {
                    let x = grid.coords()[j];
                    let z = (x - i.center) / i.width;
                    if z.abs() < 1.0 {
                        *s = (1.0 - z * z).powi(3);
                    }
                }
                support = i.center.abs() + i.width;
            }
            InitialKind::Eigenmode => {
                let l = grid.outer_radius();
                match grid.kind() {
                    GridKind::Line { .. } => {
                        for (j, s) in shape.iter_mut().enumerate() {
                            let x = grid.coords()[j];
                            *s = (std::f64::consts::PI * x / (2.0 * l)).cos();
                        }
                    }
                    GridKind::Radial { .. } => {
                        for (j, s) in shape.iter_mut().enumerate() {
                            let y = std::f64::consts::PI * grid.coords()[j] / l;
                            *s = if y.abs() < 1e-12 { 1.0 } else { y.sin() / y };
                        }
                    }
                }
            }
            InitialKind::GroundStateMultiple => {
                let gs = shoot_ground_state(model.as_dyn(), 1.0, grid)?;
                for (j, s) in shape.iter_mut().enumerate() {
                    *s = gs.profile[j] / gs.q0;
                }
                support = grid.outer_radius().min(20.0);
                ground = Some(gs);
            }
        }

        let amp = match (i.kind, &ground) {
            (InitialKind::GroundStateMultiple, Some(gs)) => i.kappa * gs.q0,
            _ => i.amplitude,
        };
        let mut u0: Vec<f64> = shape.iter().map(|&s| amp * s).collect();
        let mut v0: Vec<f64> = shape.iter().map(|&s| i.velocity_amplitude * s).collect();
        grid.pin_dirichlet(&mut u0);
        grid.pin_dirichlet(&mut v0);

        let m_threshold = if self.mode == Sign::Focusing {
            match (i.m_threshold, ground) {
                (Some(m), _) => Some(m),
                (None, Some(gs)) => Some(gs.m),
                (None, None) => Some(shoot_ground_state(model.as_dyn(), 1.0, grid)?.m),
            }
        } else {
            None
        };
        Ok((u0, v0, m_threshold, support))
    }
}

pub enum ModelChoice {
    Plain(NonlinearityModel),
    Truncated(TruncatedModel),
}

impl ModelChoice {
    pub fn as_dyn(&self) -> &dyn Nonlinearity {
        match self {
            ModelChoice::Plain(m) => m,
            ModelChoice::Truncated(t) => t,
        }
    }
}

pub struct RunSetup {
    pub grid: Grid,
    pub damper: DamperProfile,
    pub model: ModelChoice,
    pub scheme: SchemeConfig,
    pub opts: SimulateOptions,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub mode: Sign,
    pub fit_window: (f64, f64),
    pub m_threshold: Option<f64>,
    pub outputs: OutputsCfg,
    pub warnings: Vec<String>,
}

pub struct RunArtifacts {
    pub history: RunHistory,
    pub classification: Option<Classification>,
    pub summary: serde_json::Value,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
    pub exit_code: i32,
}

fn join_out(out_dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

/// Serialize the sampled series with stable column order. Floats use the
/// shortest round-trip decimal form, so reruns are byte-identical.
pub fn render_diagnostics_csv(history: &RunHistory) -> String {
    let mut out = String::new();
    out.push_str("# kg-damp v1\n");
    out.push_str("t,E,E_F,A_cum,K,J,pair_vu,max_u,l2_u,mor_grad,mor_g,mor_damp,ws_lhs\n");
    for r in &history.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.e,
            r.e_free,
            r.a_cum,
            r.k_virial,
            r.j_static,
            r.pair_vu,
            r.max_u,
            r.l2_u,
            r.mor_grad,
            r.mor_g,
            r.mor_damp,
            r.ws_lhs
        );
    }
    out
}

fn render_snapshots_csv(history: &RunHistory, grid: &Grid) -> String {
    let mut out = String::new();
    out.push_str("# kg-damp v1\n");
    out.push_str("t,r,u,v\n");
    for snap in &history.snapshots {
        for j in 0..grid.n_nodes() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                snap.t,
                grid.coords()[j],
                snap.u[j],
                snap.v[j]
            );
        }
    }
    out
}

fn summarize(
    history: &RunHistory,
    setup: &RunSetup,
    classification: Option<&Classification>,
) -> serde_json::Value {
    let e0 = history.e0();
    let e_final = history.records.last().map(|r| r.e).unwrap_or(0.0);
    let t_last = history.t_last();
    let t2 = setup.fit_window.1.min(t_last);
    let fit = if t2 > setup.fit_window.0 {
        fit_decay_rate(history, setup.fit_window.0, t2).ok()
    } else {
        None
    };
    let (mor_grad, mor_g, mor_damp) = history
        .records
        .last()
        .map(|r| (r.mor_grad, r.mor_g, r.mor_damp))
        .unwrap_or((0.0, 0.0, 0.0));
    let ws_ratio = if t_last > history.s_cone && e0 > 0.0 {
        weighted_sobolev_ratio(history, history.s_cone, t_last, history.p_sobolev, e0).ok()
    } else {
        None
    };
    let mut warnings = setup.warnings.clone();
    warnings.extend(history.warnings.iter().cloned());

    let mut summary = serde_json::json!({
        "E0": e0,
        "E_final": e_final,
        "gamma_fit": fit.as_ref().map(|f| f.gamma_fit),
        "r_squared": fit.as_ref().map(|f| f.r_squared),
        "blowup": history.blowup.is_some(),
        "blowup_time": history.blowup,
        "mor_grad": mor_grad,
        "mor_g": mor_g,
        "mor_damp": mor_damp,
        "ws_ratio": ws_ratio,
        "warnings": warnings,
    });
    if let Some(c) = classification {
        summary["classification"] = serde_json::to_value(c).unwrap_or(serde_json::Value::Null);
    }
    summary
}

/// Run the configured simulation and persist the CSV series and JSON
/// summary under out_dir. Blowup is a reportable outcome, not an error:
/// the files are still written and the exit code becomes 2.
pub fn execute_run(setup: &RunSetup, out_dir: &Path) -> Result<RunArtifacts> {
    let model = setup.model.as_dyn();
    let classification = match (setup.mode, setup.m_threshold) {
        (Sign::Focusing, Some(m)) => {
            Some(classify(&setup.u0, &setup.v0, &setup.grid, model, m)?)
        }
        _ => None,
    };
    let history = simulate(
        &setup.grid,
        &setup.damper,
        model,
        &setup.scheme,
        &setup.u0,
        &setup.v0,
        &setup.opts,
    )?;
    let summary = summarize(&history, setup, classification.as_ref());

    let csv_path = join_out(out_dir, &setup.outputs.csv_path);
    if let Some(dir) = csv_path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&csv_path, render_diagnostics_csv(&history))?;

    if setup.outputs.snapshot_stride.is_some() {
        let snap_path = csv_path.with_extension("snapshots.csv");
        fs::write(&snap_path, render_snapshots_csv(&history, &setup.grid))?;
    }

    let summary_path = join_out(out_dir, &setup.outputs.summary_path);
    if let Some(dir) = summary_path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut summary_text = serde_json::to_string_pretty(&summary)?;
    summary_text.push('\n');
    fs::write(&summary_path, summary_text)?;

    let exit_code = if history.blowup.is_some() { 2 } else { 0 };
    Ok(RunArtifacts {
        history,
        classification,
        summary,
        csv_path,
        summary_path,
        exit_code,
    })
}

// Parameter sweeps: a base config plus value lists addressed by JSON pointer.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: serde_json::Value,
    pub axes: Vec<SweepAxis>,
    pub parallelism: Option<usize>,
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// JSON pointer into the run config, e.g. "/nonlinearity/terms/0/0".
    pub path: String,
    pub values: Vec<serde_json::Value>,
}

pub fn load_sweep_config(path: &Path) -> Result<SweepConfig> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| KgError::Config(format!("{}: {e}", path.display())))
}

/// One sweep cell: the axis values chosen and the patched raw config.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub index: usize,
    pub axis_values: Vec<serde_json::Value>,
    pub config: serde_json::Value,
}

/// Expand the cross product of the axes over the base config, last axis
/// fastest. Every pointer must address an existing field of the base.
pub fn sweep_cells(sweep: &SweepConfig) -> Result<Vec<SweepCell>> {
    if sweep.axes.is_empty() {
        return Err(KgError::Config("sweep has no axes".into()));
    }
    for axis in &sweep.axes {
        if !axis.path.starts_with('/') {
            return Err(KgError::Config(format!(
                "axis path \"{}\" must be a JSON pointer starting with '/'",
                axis.path
            )));
        }
        if axis.values.is_empty() {
            return Err(KgError::Config(format!(
                "axis \"{}\" has no values",
                axis.path
            )));
        }
        if sweep.base.pointer(&axis.path).is_none() {
            return Err(KgError::Config(format!(
                "axis path \"{}\" does not address a field of the base config; set the field explicitly in base",
                axis.path
            )));
        }
    }
    let total: usize = sweep.axes.iter().map(|a| a.values.len()).product();
    let mut cells = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut picks = vec![0usize; sweep.axes.len()];
        for (ai, axis) in sweep.axes.iter().enumerate().rev() {
            picks[ai] = rem % axis.values.len();
            rem /= axis.values.len();
        }
        let mut config = sweep.base.clone();
        let mut axis_values = Vec::with_capacity(sweep.axes.len());
        for (ai, axis) in sweep.axes.iter().enumerate() {
            let v = axis.values[picks[ai]].clone();
            axis_values.push(v.clone());
            *config
                .pointer_mut(&axis.path)
                .expect("validated above") = v;
        }
        cells.push(SweepCell {
            index,
            axis_values,
            config,
        });
    }
    Ok(cells)
}
