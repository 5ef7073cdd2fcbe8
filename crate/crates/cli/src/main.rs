mod commands;
mod config;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prym_core::ErrorClass;

use crate::config::Config;
use crate::report::Report;

#[derive(Parser, Debug)]
#[command(name = "prym", version, about = "Theta-function checks of the Prym and Jacobian flow conditions")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Threshold override (applies to every metric of the command).
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// NXxNT, e.g. 512x64.
    #[arg(long, global = true)]
    pub grid: Option<String>,
    /// NX,NT jet sizes.
    #[arg(long, global = true)]
    pub jet_orders: Option<String>,
    /// TOML overlay of the bundled thresholds.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long, global = true)]
    pub json_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate θ[ε,0](z|B) with optional directional derivatives.
    ThetaEval(commands::ThetaEvalArgs),
    /// Linear solve and PDE residual of the Jacobian (KP) condition.
    CheckJacobian(commands::CheckArgs),
    /// Linear solve and PDE residual of the Prym (Novikov–Veselov) condition.
    CheckPrym(commands::CheckArgs),
    /// Multi-start search for flow vectors satisfying the quadratic condition.
    Search(commands::SearchArgs),
    /// Condition (C) on sampled points of the theta divisor.
    DivisorTest(commands::DataArgs),
    /// Track a zero of τ in t and evaluate the pole-motion equation.
    RootTrack(commands::RootTrackArgs),
    /// Build periodic wave coefficients for a genus-one potential.
    WaveBuild(commands::WaveArgs),
    /// Pseudo-differential identities for the theta-derived Lax operator.
    PsdoVerify(commands::DataArgs),
    /// Pole dynamics: random-state checks and theta-zero comparison.
    CmSim(commands::CmArgs),
    /// H-equation residual of spectral data (bundled dataset by default).
    SpectralCheck(commands::SpectralArgs),
}

/// Failure inside a command: exit class plus message.
#[derive(Debug)]
pub struct Failure {
    pub class: ErrorClass,
    pub message: String,
}

impl From<prym_core::Error> for Failure {
    fn from(e: prym_core::Error) -> Self {
        Failure { class: e.class(), message: e.to_string() }
    }
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure { class: ErrorClass::InvalidInput, message: message.into() }
    }
}

/// Parameters that went into a run, for the digest.
pub type Params = BTreeMap<String, String>;

pub struct Ctx {
    pub common: Common,
    pub config: Config,
    pub params: Params,
    pub files: Vec<Vec<u8>>,
}

impl Ctx {
    pub fn param(&mut self, k: &str, v: impl ToString) {
        self.params.insert(k.to_string(), v.to_string());
    }

    pub fn read(&mut self, path: &std::path::Path) -> Result<Vec<u8>, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        self.files.push(bytes.clone());
        Ok(bytes)
    }

    /// Threshold from the config unless --tolerance overrides it.
    pub fn threshold(&self, section: &str, key: &str) -> f64 {
        self.common.tolerance.unwrap_or_else(|| self.config.num(section, key))
    }

    pub fn samples(&self, section: &str) -> usize {
        self.common.samples.unwrap_or_else(|| self.config.count(section, "samples"))
    }

    pub fn seed(&self) -> u64 {
        self.common.seed.unwrap_or(0)
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::InvalidInput => 2,
        ErrorClass::Limit => 3,
        ErrorClass::Numerical => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let user_config = match &cli.common.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("error: {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => None,
    };
    let config = match Config::load(user_config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let name = command_name(&cli.command);
    let mut ctx = Ctx { common: cli.common.clone(), config, params: Params::new(), files: Vec::new() };
    let outcome = run(&cli.command, &mut ctx);
    let files: Vec<&[u8]> = ctx.files.iter().map(|f| f.as_slice()).collect();
    let digest = report::digest(name, &ctx.params, &files);
    let (mut rep, code) = match outcome {
        Ok(mut r) => {
            r.inputs_digest = digest;
            r.finish();
            let code = if r.pass { 0 } else { 1 };
            (r, code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            let mut r = Report::new(name, digest);
            r.warn(f.message);
            r.finish();
            r.pass = false;
            (r, exit_code(f.class))
        }
    };
    rep.command = name.to_string();
    let text = rep.to_json();
    print!("{text}");
    if let Some(path) = &cli.common.json_out {
        if let Err(e) = std::fs::write(path, &text) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    ExitCode::from(code)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::ThetaEval(_) => "theta-eval",
        Command::CheckJacobian(_) => "check-jacobian",
        Command::CheckPrym(_) => "check-prym",
        Command::Search(_) => "search",
        Command::DivisorTest(_) => "divisor-test",
        Command::RootTrack(_) => "root-track",
        Command::WaveBuild(_) => "wave-build",
        Command::PsdoVerify(_) => "psdo-verify",
        Command::CmSim(_) => "cm-sim",
        Command::SpectralCheck(_) => "spectral-check",
    }
}

fn run(c: &Command, ctx: &mut Ctx) -> Result<Report, Failure> {
    match c {
        Command::ThetaEval(a) => commands::theta_eval(a, ctx),
        Command::CheckJacobian(a) => commands::check(a, prym_core::data::Mode::Jacobian, ctx),
        Command::CheckPrym(a) => commands::check(a, prym_core::data::Mode::Prym, ctx),
        Command::Search(a) => commands::search(a, ctx),
        Command::DivisorTest(a) => commands::divisor_test(a, ctx),
        Command::RootTrack(a) => commands::root_track(a, ctx),
        Command::WaveBuild(a) => commands::wave_build(a, ctx),
        Command::PsdoVerify(a) => commands::psdo_verify(a, ctx),
        Command::CmSim(a) => commands::cm_sim(a, ctx),
        Command::SpectralCheck(a) => commands::spectral_check(a, ctx),
    }
}
