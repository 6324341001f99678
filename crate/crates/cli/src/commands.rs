use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fracpk::bench::{run_benchmark, simulate_method, BenchmarkSummary, MethodSpec, PadeVariant};
use fracpk::gl::{build_gl_realization, gl_simulate};
use fracpk::laplace::{invert_on_grid, InversionConfig};
use fracpk::metrics::ErrorReport;
use fracpk::pk::{bolus_scenario, population_manifest_json, sample_population, PatientSample, PkParams, PATIENT_ORDER_DENOMINATOR};
use fracpk::rational::{matsuda_fujii, oustaloup, pade_s_alpha, pade_s_alpha_stable, RationalTransferFunction, ZeroPoleGain};
use fracpk::scheduler::{evaluate_schedule, population_run, schedule, Evaluation, Schedule};
use fracpk::trajectory::{uniform_grid, Trajectory};
use serde::Serialize;
use serde_json::json;

use crate::args::{ApproxMethod, SimMethod};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Collects the files of one run and writes its metadata last.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
    start: Instant,
}

impl Output {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Output {
            path: dir.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            start: Instant::now(),
        })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Output {
                path: parent.display().to_string(),
                reason: e.to_string(),
            })?;
        }
        fs::write(&path, contents).map_err(|e| CliError::Output {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, cfg: &RunConfig, summary: serde_json::Value) -> CliResult<PathBuf> {
        let meta = json!({
            "tool": "fracpk",
            "version": env!("CARGO_PKG_VERSION"),
            "command": cfg.command,
            "config": cfg,
            "outputs": self.files,
            "wall_seconds": self.start.elapsed().as_secs_f64(),
            "summary": summary,
        });
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        self.write("metadata.json", text)?;
        Ok(self.dir.join("metadata.json"))
    }
}

fn checked_params(p: &PkParams<f64>) -> CliResult<PkParams<f64>> {
    Ok(PkParams::new(p.alpha, p.k10, p.k12, p.k21)?)
}

pub fn run(cfg: &RunConfig) -> CliResult<PathBuf> {
    match cfg.command.as_str() {
        "simulate" => simulate(cfg),
        "approx" => approx(cfg),
        "benchmark" => benchmark(cfg),
        "schedule" => schedule_cmd(cfg),
        "population" => population(cfg),
        other => Err(CliError::config(format!("unknown command {other:?}"))),
    }
}

pub fn simulate_trajectory(cfg: &RunConfig) -> CliResult<Trajectory<f64>> {
    let s = &cfg.simulate;
    let params = checked_params(&s.params)?;
    if !(s.horizon > 0.0) || s.points < 2 {
        return Err(CliError::config("simulate needs a positive horizon and at least two points"));
    }
    let lti_step = s.horizon / (s.points - 1) as f64;
    let traj = match s.method {
        SimMethod::Gl => {
            if !(s.h > 0.0) {
                return Err(CliError::config("step h must be positive"));
            }
            let nu = s.nu.unwrap_or((s.horizon / s.h).ceil() as usize + 1);
            let r = build_gl_realization(&params, s.h, nu)?;
            gl_simulate(&r, &[], [s.dose, 0.0], s.horizon)?
        }
        SimMethod::Abm | SimMethod::Flmm => {
            let spec = if s.method == SimMethod::Abm {
                MethodSpec::Abm { h: s.h, p: s.p, q: s.q }
            } else {
                MethodSpec::Flmm { h: s.h, p: s.p, q: s.q }
            };
            simulate_method(&spec, &params, s.dose, s.horizon, lti_step)?
        }
        SimMethod::Valsa | SimMethod::Fourier => {
            let mut inv = if s.method == SimMethod::Valsa {
                InversionConfig::valsa(s.a)
            } else {
                InversionConfig::fourier()
            };
            if s.method == SimMethod::Valsa {
                inv.term_count = s.terms;
            }
            let grid = uniform_grid(s.horizon, s.points);
            let (f1, f2) = bolus_scenario(s.dose, params)?.transforms();
            invert_on_grid((&f1, &f2), &grid, &inv)?
        }
        SimMethod::Pade => simulate_method(&s.rational.pade(), &params, s.dose, s.horizon, lti_step)?,
        SimMethod::Oustaloup => simulate_method(&s.rational.oustaloup(), &params, s.dose, s.horizon, lti_step)?,
        SimMethod::Matsuda => simulate_method(&s.rational.matsuda(), &params, s.dose, s.horizon, lti_step)?,
    };
    Ok(traj)
}

fn simulate(cfg: &RunConfig) -> CliResult<PathBuf> {
    let traj = simulate_trajectory(cfg)?;
    let mut out = Output::new(&cfg.out)?;
    out.write("trajectory.csv", traj.to_csv_string())?;
    let (k_peak, peak) = traj
        .values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(kb, vb), (k, v)| if v[1] > vb { (k, v[1]) } else { (kb, vb) });
    let summary = json!({
        "method": traj.method,
        "points": traj.len(),
        "a2_peak": peak,
        "t_a2_peak": traj.grid.get(k_peak),
    });
    out.finish(cfg, summary)
}

#[derive(Serialize)]
struct FilterJson {
    method: ApproxMethod,
    alpha: f64,
    label: String,
    /// Descending powers of `s`.
    numerator: Vec<f64>,
    denominator: Vec<f64>,
    zpk: ZeroPoleGain,
}

pub fn approximant(cfg: &RunConfig) -> CliResult<(RationalTransferFunction, ZeroPoleGain, String)> {
    let a = &cfg.approx;
    let r = &a.rational;
    match a.method {
        ApproxMethod::Pade => {
            let tf = match r.pade_variant {
                PadeVariant::Stable => pade_s_alpha_stable(a.alpha, r.s0, r.m, r.n)?,
                PadeVariant::Literal => pade_s_alpha(a.alpha, r.s0, r.m, r.n)?,
            };
            let zpk = tf.zpk()?;
            Ok((tf, zpk, r.pade().params_label()))
        }
        ApproxMethod::Oustaloup => {
            let d = oustaloup(a.alpha, r.omega_b, r.omega_h, r.stages)?;
            Ok((d.transfer_function(), d.zpk(), r.oustaloup().params_label()))
        }
        ApproxMethod::Matsuda => {
            if !(r.beta > 0.0 && r.beta != 1.0) || r.k_min >= r.k_max {
                return Err(CliError::config("Matsuda points need beta > 0, beta != 1 and k_min < k_max"));
            }
            let points: Vec<f64> = (r.k_min..=r.k_max).map(|k| r.beta.powi(k)).collect();
            let alpha = a.alpha;
            let tf = matsuda_fujii(|s| s.powf(alpha), &points)?;
            let zpk = tf.zpk()?;
            Ok((tf, zpk, r.matsuda().params_label()))
        }
    }
}

fn approx(cfg: &RunConfig) -> CliResult<PathBuf> {
    let (tf, zpk, label) = approximant(cfg)?;
    let filter = FilterJson {
        method: cfg.approx.method,
        alpha: cfg.approx.alpha,
        label,
        numerator: tf.numerator,
        denominator: tf.denominator,
        zpk,
    };
    let text = serde_json::to_string_pretty(&filter).expect("filter serializes");
    println!("{text}");
    let mut out = Output::new(&cfg.out)?;
    out.write("filter.json", &text)?;
    out.finish(cfg, json!({ "label": filter.label }))
}

/// Per-family table with the family's own parameter columns.
pub fn family_table(family: &str, rows: &[(&MethodSpec, &ErrorReport)]) -> String {
    let head = match family {
        "pade" => "m,n,s0,variant",
        "oustaloup" => "omega_b,omega_h,N",
        "matsuda" => "beta,k_min,k_max",
        "abm" | "flmm" => "h,p,q",
        _ => "h,h_nu",
    };
    let mut s = format!("{head},e1_l2,e2_l2,e1_sup,e2_sup,status\n");
    for (spec, r) in rows {
        let cols = match spec {
            MethodSpec::Pade { m, n, s0, variant } => {
                let v = match variant {
                    PadeVariant::Stable => "stable",
                    PadeVariant::Literal => "literal",
                };
                format!("{m},{n},{s0},{v}")
            }
            MethodSpec::Oustaloup { omega_b, omega_h, n } => format!("{omega_b:e},{omega_h:e},{n}"),
            MethodSpec::Matsuda { beta, k_min, k_max } => format!("{beta},{k_min},{k_max}"),
            MethodSpec::Abm { h, p, q } | MethodSpec::Flmm { h, p, q } => format!("{h:e},{p},{q}"),
            MethodSpec::Gl { h, memory } => format!("{h:e},{memory}"),
        };
        let status = r.status.replace([',', '\n'], ";");
        writeln!(s, "{cols},{:e},{:e},{:e},{:e},{status}", r.l2[0], r.l2[1], r.sup[0], r.sup[1]).expect("write to string");
    }
    s
}

fn benchmark(cfg: &RunConfig) -> CliResult<PathBuf> {
    let suite = &cfg.benchmark;
    checked_params(&suite.params)?;
    let start = Instant::now();
    let reports = run_benchmark(suite)?;
    let wall = start.elapsed().as_secs_f64();
    let mut out = Output::new(&cfg.out)?;
    out.write("benchmark.csv", fracpk::bench::reports_csv(&reports))?;
    let mut families: Vec<&str> = Vec::new();
    for spec in &suite.methods {
        if !families.contains(&spec.family()) {
            families.push(spec.family());
        }
    }
    for family in &families {
        let rows: Vec<_> = suite.methods.iter().zip(&reports).filter(|(m, _)| m.family() == *family).collect();
        out.write(&format!("table_{family}.csv"), family_table(family, &rows))?;
    }
    out.write("summary.json", BenchmarkSummary::new(suite, &reports, wall).to_json())?;
    let failed = reports.iter().filter(|r| r.status != "ok").count();
    out.finish(cfg, json!({ "cells": reports.len(), "failed_cells": failed }))
}

/// The patient whose model matches the scheduling parameters, with the order
/// rationalized over the population denominator.
fn nominal_patient(params: &PkParams<f64>) -> PatientSample {
    let q = PATIENT_ORDER_DENOMINATOR;
    PatientSample {
        base: *params,
        p_hat: ((1.0 - params.alpha) * q as f64).round() as u32,
        q,
        ..PatientSample::nominal()
    }
}

/// Largest acceptable gap (ng) between the GL prediction and the
/// high-fidelity response of the nominal patient.
const FIDELITY_BOUND: f64 = 1e-2;

fn evaluation_csv(schedule: &Schedule, ev: &Evaluation) -> String {
    let mut s = String::from("t,A1_pred,A2_pred,A1_applied,A2_applied,d1,d2\n");
    for (k, t) in schedule.predicted.grid.iter().enumerate() {
        let p = schedule.predicted.values[k];
        let a = ev.applied.values[k];
        let d = ev.discrepancy[k];
        writeln!(s, "{t},{},{},{},{},{},{}", p[0], p[1], a[0], a[1], d[0], d[1]).expect("write to string");
    }
    s
}

fn solve_schedule(cfg: &RunConfig, out: &mut Output) -> CliResult<Schedule> {
    checked_params(&cfg.schedule.params)?;
    let (_, s) = schedule(&cfg.schedule)?;
    let mut csv = Vec::new();
    s.write_csv(&mut csv)?;
    out.write("schedule.csv", csv)?;
    out.write("schedule.json", s.to_json())?;
    out.write("prediction.csv", s.predicted.to_csv_string())?;
    Ok(s)
}

fn schedule_cmd(cfg: &RunConfig) -> CliResult<PathBuf> {
    let mut out = Output::new(&cfg.out)?;
    let s = solve_schedule(cfg, &mut out)?;
    let mut summary = json!({
        "doses": s.doses,
        "objective": s.objective,
        "status": s.status,
        "iterations": s.iterations,
        "kkt_max": s.kkt.max(),
        "state_violation": s.state_violation,
    });
    if cfg.evaluation.enabled {
        let patient = nominal_patient(&cfg.schedule.params);
        let ev = evaluate_schedule(&s, &patient, cfg.evaluation.hifi_step, &cfg.schedule)?;
        out.write("evaluation.csv", evaluation_csv(&s, &ev))?;
        summary["sup_discrepancy"] = json!(ev.sup_discrepancy);
        summary["fidelity_bound"] = json!(FIDELITY_BOUND);
        summary["fidelity_ok"] = json!(ev.sup_discrepancy.iter().all(|&d| d <= FIDELITY_BOUND));
        summary["applied_violation"] = json!(ev.max_violation);
    }
    out.finish(cfg, summary)
}

fn population(cfg: &RunConfig) -> CliResult<PathBuf> {
    let pc = &cfg.population;
    let mut patients = sample_population(pc.n, pc.seed)?;
    for p in &mut patients {
        p.base = cfg.schedule.params;
    }
    let mut out = Output::new(&cfg.out)?;
    let s = solve_schedule(cfg, &mut out)?;
    let report = population_run(&s, &patients, cfg.evaluation.hifi_step, &cfg.schedule)?;
    out.write("manifest.json", population_manifest_json(&patients, pc.seed))?;
    let mut env = Vec::new();
    report.write_envelope_csv(&mut env)?;
    out.write("envelope.csv", env)?;
    let mut table = String::from("id,m10,m12,m21,p_hat,status,sup_d1,sup_d2,max_violation,tracking_error\n");
    for (p, r) in patients.iter().zip(&report.results) {
        match r {
            Ok(ev) => {
                writeln!(
                    table,
                    "{},{},{},{},{},ok,{},{},{},{}",
                    p.id, p.m10, p.m12, p.m21, p.p_hat, ev.sup_discrepancy[0], ev.sup_discrepancy[1], ev.max_violation, ev.tracking_error
                )
                .expect("write to string");
                out.write(&format!("patients/patient_{:03}.csv", p.id), ev.applied.to_csv_string())?;
            }
            Err(e) => {
                let msg = e.replace([',', '\n'], ";");
                writeln!(table, "{},{},{},{},{},{msg},,,,", p.id, p.m10, p.m12, p.m21, p.p_hat).expect("write to string");
            }
        }
    }
    out.write("patients.csv", table)?;
    let failures = report.failures();
    let a2_max = report.envelope.iter().map(|e| e[2]).fold(f64::NEG_INFINITY, f64::max);
    let a2_min = report.envelope.iter().map(|e| e[0]).fold(f64::INFINITY, f64::min);
    let path = out.finish(
        cfg,
        json!({
            "patients": patients.len(),
            "failures": failures,
            "a2_min": a2_min,
            "a2_max": a2_max,
        }),
    )?;
    if failures == patients.len() {
        return Err(fracpk::Error::Refused(format!("all {failures} patient evaluations failed")).into());
    }
    Ok(path)
}
