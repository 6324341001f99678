use std::path::{Path, PathBuf};

use fracpk::bench::{MethodSpec, PadeVariant, SuiteConfig};
use fracpk::pk::PkParams;
use fracpk::scheduler::{DosingProblem, Reference};
use serde::{Deserialize, Serialize};

use crate::args::{ApproxMethod, Command, ParamArgs, ProblemArgs, RationalArgs, SimMethod};
use crate::error::{CliError, CliResult};

/// Parameters of the three rational approximations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RationalSettings {
    pub m: usize,
    pub n: usize,
    pub s0: f64,
    pub pade_variant: PadeVariant,
    pub omega_b: f64,
    pub omega_h: f64,
    pub stages: usize,
    pub beta: f64,
    pub k_min: i32,
    pub k_max: i32,
}

impl Default for RationalSettings {
    fn default() -> Self {
        Self {
            m: 2,
            n: 3,
            s0: 1.0,
            pade_variant: PadeVariant::Stable,
            omega_b: 1e-3,
            omega_h: 1e3,
            stages: 8,
            beta: 2.0,
            k_min: -1,
            k_max: 10,
        }
    }
}

impl RationalSettings {
    pub fn pade(&self) -> MethodSpec {
        MethodSpec::Pade {
            m: self.m,
            n: self.n,
            s0: self.s0,
            variant: self.pade_variant,
        }
    }

    pub fn oustaloup(&self) -> MethodSpec {
        MethodSpec::Oustaloup {
            omega_b: self.omega_b,
            omega_h: self.omega_h,
            n: self.stages,
        }
    }

    pub fn matsuda(&self) -> MethodSpec {
        MethodSpec::Matsuda {
            beta: self.beta,
            k_min: self.k_min,
            k_max: self.k_max,
        }
    }

    fn apply(&mut self, a: &RationalArgs) {
        set(&mut self.m, a.m);
        set(&mut self.n, a.n);
        set(&mut self.s0, a.s0);
        if a.literal_pade {
            self.pade_variant = PadeVariant::Literal;
        }
        set(&mut self.omega_b, a.omega_b);
        set(&mut self.omega_h, a.omega_h);
        set(&mut self.stages, a.stages);
        set(&mut self.beta, a.beta);
        set(&mut self.k_min, a.k_min);
        set(&mut self.k_max, a.k_max);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub method: SimMethod,
    pub params: PkParams<f64>,
    pub dose: f64,
    pub horizon: f64,
    pub h: f64,
    /// GL memory in steps; `None` keeps the whole history.
    pub nu: Option<usize>,
    pub p: u32,
    pub q: u32,
    pub a: f64,
    pub terms: usize,
    pub points: usize,
    pub rational: RationalSettings,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            method: SimMethod::Gl,
            params: PkParams::nominal(),
            dose: 0.1,
            horizon: 5.0,
            h: 1e-3,
            nu: None,
            p: 19,
            q: 46,
            a: 11.0,
            terms: 1000,
            points: 500,
            rational: RationalSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxConfig {
    pub method: ApproxMethod,
    pub alpha: f64,
    pub rational: RationalSettings,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            method: ApproxMethod::Pade,
            alpha: PkParams::<f64>::nominal().alpha,
            rational: RationalSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub enabled: bool,
    pub hifi_step: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            hifi_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub n: usize,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self { n: 100, seed: 1 }
    }
}

/// Everything a run depends on. The resolved value is echoed into the
/// output metadata and can be fed back through `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub out: PathBuf,
    pub simulate: SimulateConfig,
    pub approx: ApproxConfig,
    pub benchmark: SuiteConfig,
    pub schedule: DosingProblem,
    pub evaluation: EvaluationConfig,
    pub population: PopulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            out: PathBuf::from("out"),
            simulate: SimulateConfig::default(),
            approx: ApproxConfig::default(),
            benchmark: SuiteConfig::default(),
            schedule: DosingProblem::default(),
            evaluation: EvaluationConfig::default(),
            population: PopulationConfig::default(),
        }
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_params(p: &mut PkParams<f64>, a: &ParamArgs) {
    set(&mut p.alpha, a.alpha);
    set(&mut p.k10, a.k10);
    set(&mut p.k12, a.k12);
    set(&mut p.k21, a.k21);
}

const FAMILIES: [&str; 6] = ["pade", "oustaloup", "matsuda", "abm", "flmm", "gl"];

impl RunConfig {
    /// Parses a JSON or TOML config. A metadata file written by an earlier
    /// run is unwrapped to the config it echoes.
    pub fn from_str(text: &str, path: &Path) -> CliResult<Self> {
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let mut value: serde_json::Value = if is_toml {
            toml::from_str(text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        };
        if value.get("tool").and_then(|t| t.as_str()) == Some("fracpk") {
            value = value
                .get_mut("config")
                .map(serde_json::Value::take)
                .ok_or_else(|| CliError::config(format!("{}: metadata without a config", path.display())))?;
        }
        serde_json::from_value(value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text, path)
    }

    /// File (if any) first, then command-line flags on top.
    pub fn resolve(cmd: &Command) -> CliResult<Self> {
        let common = cmd.common();
        let mut cfg = match &common.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.command = cmd.name().into();
        if let Some(out) = &common.out {
            cfg.out = out.clone();
        }
        match cmd {
            Command::Simulate(a) => {
                let s = &mut cfg.simulate;
                set(&mut s.method, a.method);
                set(&mut s.dose, a.dose);
                set(&mut s.horizon, a.horizon);
                set(&mut s.h, a.h);
                if a.nu.is_some() {
                    s.nu = a.nu;
                }
                set(&mut s.p, a.p);
                set(&mut s.q, a.q);
                set(&mut s.a, a.a);
                set(&mut s.terms, a.terms);
                set(&mut s.points, a.points);
                apply_params(&mut s.params, &a.params);
                s.rational.apply(&a.rational);
            }
            Command::Approx(a) => {
                set(&mut cfg.approx.method, a.method);
                set(&mut cfg.approx.alpha, a.alpha);
                cfg.approx.rational.apply(&a.rational);
            }
            Command::Benchmark(a) => {
                let b = &mut cfg.benchmark;
                set(&mut b.horizon, a.horizon);
                set(&mut b.grid_points, a.points);
                set(&mut b.dose, a.dose);
                set(&mut b.reference.a, a.a);
                apply_params(&mut b.params, &a.params);
                if !a.only.is_empty() {
                    for f in &a.only {
                        if !FAMILIES.contains(&f.as_str()) {
                            return Err(CliError::config(format!("unknown family {f:?}; expected one of {FAMILIES:?}")));
                        }
                    }
                    b.methods.retain(|m| a.only.iter().any(|f| f == m.family()));
                }
            }
            Command::Schedule(a) => {
                cfg.apply_problem(&a.problem);
                if a.no_evaluate {
                    cfg.evaluation.enabled = false;
                }
            }
            Command::Population(a) => {
                cfg.apply_problem(&a.problem);
                set(&mut cfg.population.n, a.n);
                set(&mut cfg.population.seed, a.seed);
            }
        }
        Ok(cfg)
    }

    fn apply_problem(&mut self, a: &ProblemArgs) {
        let p = &mut self.schedule;
        if let Some(r) = a.x_ref {
            p.x_ref = Reference::Constant([0.0, r]);
        }
        set(&mut p.u_max, a.u_max);
        if let Some(m) = a.x_max {
            p.x_max = [m, m];
        }
        set(&mut p.n_d, a.n_d);
        set(&mut p.t_c, a.t_c);
        set(&mut p.t_d, a.t_d);
        set(&mut p.nu, a.nu);
        set(&mut p.solver.tolerance, a.tolerance);
        apply_params(&mut p.params, &a.params);
        set(&mut self.evaluation.hifi_step, a.hifi_step);
    }
}
