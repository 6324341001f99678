//! Method-comparison benchmark on the bolus scenario.
//!
//! Every method simulates the response to a bolus `dose` into the central
//! compartment and is scored against a numerical Laplace inversion of the
//! exact transfer functions on a common grid.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abm::abmpc_solve;
use crate::commensurate::{expand_commensurate, InputSignal};
use crate::error::{Error, Result};
use crate::flmm::flmm_trapezoidal_solve;
use crate::gl::{build_gl_realization, gl_simulate};
use crate::laplace::{invert_on_grid, InversionConfig};
use crate::lti::{pk_state_space_from_oustaloup, pk_state_space_from_tf, simulate_lti, LtiInput};
use crate::metrics::{l2_error, sup_error, ErrorReport};
use crate::pk::{bolus_scenario, PkParams};
use crate::rational::{matsuda_fujii, oustaloup, pade_s_alpha, pade_s_alpha_stable};
use crate::trajectory::{uniform_grid, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PadeVariant {
    /// `s` times the Padé approximant of `s^(alpha - 1)`.
    #[default]
    Stable,
    /// The Padé approximant of `s^alpha` itself.
    Literal,
}

fn unit() -> f64 {
    1.0
}

fn nominal_p() -> u32 {
    19
}

fn nominal_q() -> u32 {
    46
}

/// One benchmark cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodSpec {
    Pade {
        m: usize,
        n: usize,
        #[serde(default = "unit")]
        s0: f64,
        #[serde(default)]
        variant: PadeVariant,
    },
    Oustaloup {
        omega_b: f64,
        omega_h: f64,
        n: usize,
    },
    /// Interpolation points `s_k = beta^k` for `k = k_min..=k_max`.
    Matsuda {
        beta: f64,
        k_min: i32,
        k_max: i32,
    },
    Abm {
        h: f64,
        #[serde(default = "nominal_p")]
        p: u32,
        #[serde(default = "nominal_q")]
        q: u32,
    },
    Flmm {
        h: f64,
        #[serde(default = "nominal_p")]
        p: u32,
        #[serde(default = "nominal_q")]
        q: u32,
    },
    /// Grünwald-Letnikov with `nu = memory / h` steps of history.
    Gl {
        h: f64,
        memory: f64,
    },
}

impl MethodSpec {
    /// Table family the cell belongs to.
    pub fn family(&self) -> &'static str {
        match self {
            MethodSpec::Pade { .. } => "pade",
            MethodSpec::Oustaloup { .. } => "oustaloup",
            MethodSpec::Matsuda { .. } => "matsuda",
            MethodSpec::Abm { .. } => "abm",
            MethodSpec::Flmm { .. } => "flmm",
            MethodSpec::Gl { .. } => "gl",
        }
    }

    pub fn params_label(&self) -> String {
        match self {
            MethodSpec::Pade { m, n, s0, variant } => {
                let v = match variant {
                    PadeVariant::Stable => "",
                    PadeVariant::Literal => " literal",
                };
                format!("[{m}/{n}] s0={s0}{v}")
            }
            MethodSpec::Oustaloup { omega_b, omega_h, n } => format!("wb={omega_b:e} wh={omega_h:e} N={n}"),
            MethodSpec::Matsuda { beta, k_min, k_max } => format!("beta={beta} k={k_min}:{k_max}"),
            MethodSpec::Abm { h, p, q } => format!("h={h:e} order={p}/{q}"),
            MethodSpec::Flmm { h, p, q } => format!("h={h:e} order={p}/{q}"),
            MethodSpec::Gl { h, memory } => format!("h={h:e} hnu={memory}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub methods: Vec<MethodSpec>,
    pub reference: InversionConfig,
    pub horizon: f64,
    pub grid_points: usize,
    pub dose: f64,
    pub params: PkParams<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            methods: table_suite(),
            reference: InversionConfig::valsa(11.0),
            horizon: 5.0,
            grid_points: 500,
            dose: 0.1,
            params: PkParams::nominal(),
        }
    }
}

/// The parameter rows of the five published error tables plus the FLMM
/// cell at the nominal order.
pub fn table_suite() -> Vec<MethodSpec> {
    let mut v = Vec::new();
    for m in 2..=5 {
        v.push(MethodSpec::Pade {
            m,
            n: m + 1,
            s0: 1.0,
            variant: PadeVariant::Stable,
        });
    }
    for (omega_b, omega_h, n) in [(1e-2, 1e3, 8), (1e-2, 1e4, 20), (1e-3, 1e3, 8), (1e-3, 1e4, 20)] {
        v.push(MethodSpec::Oustaloup { omega_b, omega_h, n });
    }
    for (beta, k_min, k_max) in [(2.0, -1, 10), (2.0, 1, 10), (2.3, -1, 11), (3.0, 1, 10)] {
        v.push(MethodSpec::Matsuda { beta, k_min, k_max });
    }
    for h in [1e-2, 1e-3, 1e-4, 1e-5] {
        v.push(MethodSpec::Abm { h, p: 19, q: 46 });
    }
    v.push(MethodSpec::Flmm { h: 1e-2, p: 19, q: 46 });
    for h in [1e-2, 1e-3] {
        for memory in [3.0, 5.0, 7.0] {
            v.push(MethodSpec::Gl { h, memory });
        }
    }
    v
}

/// Simulates one cell of the bolus scenario at the method's native step.
pub fn simulate_method(spec: &MethodSpec, params: &PkParams<f64>, dose: f64, horizon: f64, lti_step: f64) -> Result<Trajectory<f64>> {
    let label = format!("{} {}", spec.family(), spec.params_label());
    let lti = |model: crate::lti::StateSpaceModel| -> Result<Trajectory<f64>> {
        let x0 = model.bolus_state(dose);
        simulate_lti(&model, &LtiInput::Zero, &x0, lti_step, horizon)?.into_trajectory(label.clone())
    };
    match *spec {
        MethodSpec::Pade { m, n, s0, variant } => {
            let approx = match variant {
                PadeVariant::Stable => pade_s_alpha_stable(params.alpha, s0, m, n)?,
                PadeVariant::Literal => pade_s_alpha(params.alpha, s0, m, n)?,
            };
            lti(pk_state_space_from_tf(&approx, params)?)
        }
        MethodSpec::Oustaloup { omega_b, omega_h, n } => {
            let design = oustaloup(params.alpha, omega_b, omega_h, n)?;
            lti(pk_state_space_from_oustaloup(&design, params)?)
        }
        MethodSpec::Matsuda { beta, k_min, k_max } => {
            if !(beta > 0.0 && beta != 1.0) || k_min >= k_max {
                return Err(Error::invalid("Matsuda points need beta > 0, beta != 1 and k_min < k_max"));
            }
            let points: Vec<f64> = (k_min..=k_max).map(|k| beta.powi(k)).collect();
            let alpha = params.alpha;
            let approx = matsuda_fujii(|s| s.powf(alpha), &points)?;
            lti(pk_state_space_from_tf(&approx, params)?)
        }
        MethodSpec::Abm { h, p, q } => {
            let sys = expand_commensurate(params, p, q)?.with_initial_amounts(dose, 0.0);
            abmpc_solve(&sys, &InputSignal::zero(), h, horizon)
        }
        MethodSpec::Flmm { h, p, q } => {
            let sys = expand_commensurate(params, p, q)?.with_initial_amounts(dose, 0.0);
            flmm_trapezoidal_solve(&sys, &InputSignal::zero(), h, horizon)
        }
        MethodSpec::Gl { h, memory } => {
            if !(memory > 0.0) {
                return Err(Error::invalid("GL memory must be positive"));
            }
            let nu = ((memory / h).round() as usize).max(1);
            let r = build_gl_realization(params, h, nu)?;
            gl_simulate(&r, &[], [dose, 0.0], horizon)
        }
    }
}

/// Reference trajectory of the bolus scenario on the comparison grid.
pub fn reference_trajectory(config: &SuiteConfig) -> Result<Trajectory<f64>> {
    if config.grid_points < 2 || !(config.horizon > 0.0) {
        return Err(Error::invalid("benchmark needs a positive horizon and at least two grid points"));
    }
    let grid = uniform_grid(config.horizon, config.grid_points);
    let (f1, f2) = bolus_scenario(config.dose, config.params)?.transforms();
    invert_on_grid((&f1, &f2), &grid, &config.reference)
}

/// Scores every configured method. Failed cells are kept as failure rows and
/// the output order follows `config.methods`.
pub fn run_benchmark(config: &SuiteConfig) -> Result<Vec<ErrorReport>> {
    if config.methods.is_empty() {
        return Ok(Vec::new());
    }
    let reference = reference_trajectory(config)?;
    let lti_step = config.horizon / (config.grid_points - 1) as f64;
    let ref_label = config.reference.label();
    Ok(config
        .methods
        .par_iter()
        .map(|spec| {
            let start = Instant::now();
            let scored = simulate_method(spec, &config.params, config.dose, config.horizon, lti_step).and_then(|traj| {
                let l2 = l2_error(&traj, &reference)?;
                let sup = sup_error(&traj, &reference)?;
                if l2.iter().chain(&sup).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        context: "error indices".into(),
                        t: config.horizon,
                    });
                }
                Ok((l2, sup))
            });
            match scored {
                Ok((l2, sup)) => ErrorReport {
                    method: spec.family().into(),
                    params: spec.params_label(),
                    l2,
                    sup,
                    horizon: config.horizon,
                    grid_points: config.grid_points,
                    reference: ref_label.clone(),
                    status: "ok".into(),
                    wall_seconds: start.elapsed().as_secs_f64(),
                },
                Err(e) => {
                    let mut r = ErrorReport::failed(spec.family(), &spec.params_label(), &e.to_string(), config.horizon, &ref_label);
                    r.wall_seconds = start.elapsed().as_secs_f64();
                    r
                }
            }
        })
        .collect())
}

/// `method,params,e1_l2,e2_l2,e1_sup,e2_sup,status`
pub fn reports_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from("method,params,e1_l2,e2_l2,e1_sup,e2_sup,status\n");
    for r in reports {
        let status = r.status.replace([',', '\n'], ";");
        writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{}",
            r.method, r.params, r.l2[0], r.l2[1], r.sup[0], r.sup[1], status
        )
        .expect("write to string");
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSummary<'a> {
    pub horizon: f64,
    pub grid_points: usize,
    pub dose: f64,
    pub reference: String,
    pub params: PkParams<f64>,
    pub wall_seconds: f64,
    pub reports: &'a [ErrorReport],
}

impl<'a> BenchmarkSummary<'a> {
    pub fn new(config: &SuiteConfig, reports: &'a [ErrorReport], wall_seconds: f64) -> Self {
        Self {
            horizon: config.horizon,
            grid_points: config.grid_points,
            dose: config.dose,
            reference: config.reference.label(),
            params: config.params,
            wall_seconds,
            reports,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
