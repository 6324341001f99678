use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Simulation, approximation and dose scheduling for the fractional
/// two-compartment Amiodarone model. Amounts in ng, time in days.
#[derive(Debug, Parser)]
#[command(name = "fracpk", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bolus response of one method, written as `t,A1,A2`.
    Simulate(SimulateArgs),
    /// Rational approximation of `s^alpha` (coefficients and zeros/poles).
    Approx(ApproxArgs),
    /// Error tables of all methods against the inverse-Laplace reference.
    Benchmark(BenchmarkArgs),
    /// Optimal open-loop dosing schedule for the nominal patient.
    Schedule(ScheduleArgs),
    /// Apply the nominal schedule to a sampled patient population.
    Population(PopulationArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Approx(_) => "approx",
            Command::Benchmark(_) => "benchmark",
            Command::Schedule(_) => "schedule",
            Command::Population(_) => "population",
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a) => &a.common,
            Command::Approx(a) => &a.common,
            Command::Benchmark(a) => &a.common,
            Command::Schedule(a) => &a.common,
            Command::Population(a) => &a.common,
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON or TOML config file; a previous run's metadata.json also works.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k10: Option<f64>,
    #[arg(long)]
    pub k12: Option<f64>,
    #[arg(long)]
    pub k21: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RationalArgs {
    /// Padé numerator degree.
    #[arg(long)]
    pub m: Option<usize>,
    /// Padé denominator degree.
    #[arg(long)]
    pub n: Option<usize>,
    /// Padé expansion point.
    #[arg(long)]
    pub s0: Option<f64>,
    /// Use the Padé approximant of `s^alpha` itself instead of `s` times the
    /// approximant of `s^(alpha-1)`.
    #[arg(long)]
    pub literal_pade: bool,
    #[arg(long)]
    pub omega_b: Option<f64>,
    #[arg(long)]
    pub omega_h: Option<f64>,
    /// Oustaloup order: the filter has `2N + 1` zero/pole pairs.
    #[arg(long)]
    pub stages: Option<usize>,
    /// Matsuda points `beta^k`.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k_min: Option<i32>,
    #[arg(long, allow_negative_numbers = true)]
    pub k_max: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SimMethod {
    #[default]
    Gl,
    Abm,
    Flmm,
    Valsa,
    Fourier,
    Pade,
    Oustaloup,
    Matsuda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ApproxMethod {
    #[default]
    Pade,
    Oustaloup,
    Matsuda,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub method: Option<SimMethod>,
    /// Bolus into the central compartment (ng).
    #[arg(long)]
    pub dose: Option<f64>,
    /// Horizon in days.
    #[arg(long = "T", alias = "horizon")]
    pub horizon: Option<f64>,
    /// Step of the time-stepping methods.
    #[arg(long)]
    pub h: Option<f64>,
    /// GL memory in steps (default: the whole horizon).
    #[arg(long)]
    pub nu: Option<usize>,
    /// Commensurate order numerator for ABM and FLMM.
    #[arg(long)]
    pub p: Option<u32>,
    /// Commensurate order denominator for ABM and FLMM.
    #[arg(long)]
    pub q: Option<u32>,
    /// Valsa kernel parameter.
    #[arg(long)]
    pub a: Option<f64>,
    /// Series length of the inverse-Laplace methods.
    #[arg(long)]
    pub terms: Option<usize>,
    /// Output grid size of the inverse-Laplace and rational methods.
    #[arg(long)]
    pub points: Option<usize>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub rational: RationalArgs,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub method: Option<ApproxMethod>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub rational: RationalArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long = "T", alias = "horizon")]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub dose: Option<f64>,
    /// Valsa parameter of the reference.
    #[arg(long)]
    pub a: Option<f64>,
    /// Keep only these families (pade, oustaloup, matsuda, abm, flmm, gl).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// A2 set-point (ng).
    #[arg(long)]
    pub x_ref: Option<f64>,
    #[arg(long)]
    pub u_max: Option<f64>,
    /// Upper bound on both compartments (ng).
    #[arg(long)]
    pub x_max: Option<f64>,
    /// Treatment length in days.
    #[arg(long)]
    pub n_d: Option<f64>,
    #[arg(long)]
    pub t_c: Option<f64>,
    #[arg(long)]
    pub t_d: Option<f64>,
    #[arg(long)]
    pub nu: Option<usize>,
    /// QP stopping tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Step of the high-fidelity evaluation (at most 1e-4).
    #[arg(long)]
    pub hifi_step: Option<f64>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Skip the high-fidelity evaluation of the schedule.
    #[arg(long)]
    pub no_evaluate: bool,
}

#[derive(Debug, Args)]
pub struct PopulationArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}
