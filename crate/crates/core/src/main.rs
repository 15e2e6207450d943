use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use possg::convolution::{convergence_study, resolvent_pairing_family, Side};
use possg::forms::{associated_generator, perturbed_form};
use possg::kernels::extract_kernel;
use possg::operator::euler_error;
use possg::random::{generate_random_instance, Profile};
use possg::scenario::{
    load_scenario, run_scenario, scenario_from_instance, verdict_csv, CheckKind, RunOptions, Workspace,
};
use possg::{Error, Exponent, LpElement};

#[derive(Parser)]
#[command(name = "possg", version, about = "Verify perturbation estimates for positive semigroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check of a scenario and write the report.
    Verify {
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for `report.json` (and CSV tables); without it the report goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-site CSV tables, one per check.
        #[arg(long, requires = "out")]
        csv: bool,
        /// Treat inconclusive verdicts as failures.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rerun one check over a range of values of a parameter and emit a margin curve.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        check: String,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// CSV output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Euler-formula and discrete-convolution convergence studies for one operator.
    Converge {
        #[arg(long)]
        scenario: PathBuf,
        /// Operator whose generator is studied.
        #[arg(long)]
        operator: String,
        /// Start and test vector of the convolution families (default: first indicator).
        #[arg(long)]
        vector: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64, 128, 256, 512, 1024, 2048, 4096])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 4096)]
        panels: usize,
        /// Output directory for `euler.csv` and `convolution.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the heat kernels of a kernel check and its margin summary.
    Kernel {
        #[arg(long)]
        scenario: PathBuf,
        /// Id of a `kernel_estimate` or `jump_kernel_theorem` check.
        #[arg(long)]
        check: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a random scenario of the given profile.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        size: usize,
        #[arg(long, value_enum)]
        profile: ProfileArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    C,
    JumpScale,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Laplacian,
    Metzler,
    Jump,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Laplacian => Profile::Laplacian,
            ProfileArg::Metzler => Profile::Metzler,
            ProfileArg::Jump => Profile::Jump,
        }
    }
}

/// Input problems exit with 2, numerical failures with 1.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Validation { .. } | Error::Io { .. } | Error::InvalidArgument(_) => 2,
        _ => 1,
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), Error> {
    match out {
        Some(p) => write(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Verify { scenario, out, csv, strict, seed } => {
            let s = load_scenario(&scenario)?;
            let outcome = run_scenario(&s, &RunOptions { seed, strict, ..Default::default() })?;
            match &out {
                Some(dir) => {
                    create_dir(dir)?;
                    write(&dir.join("report.json"), &outcome.report.to_json())?;
                    if csv {
                        for (id, verdict) in &outcome.verdicts {
                            if let Some(v) = verdict {
                                write(&dir.join(format!("{id}.csv")), &verdict_csv(v))?;
                            }
                        }
                    }
                    print!("{}", outcome.text_summary());
                }
                None => {
                    print!("{}", outcome.report.to_json());
                    eprint!("{}", outcome.text_summary());
                }
            }
            Ok(outcome.exit_code() as u8)
        }
        Command::Sweep { scenario, check, param, values, out, seed } => {
            let s = load_scenario(&scenario)?;
            let mut csv = String::from("value,status,worst_margin\n");
            for &value in &values {
                let mut opts = RunOptions { seed, only: Some(check.clone()), ..Default::default() };
                match param {
                    SweepParam::C => opts.c_override = Some(value),
                    SweepParam::JumpScale => opts.jump_scale = Some(value),
                }
                let outcome = run_scenario(&s, &opts)?;
                let report = &outcome.report.checks[0];
                let margin = report
                    .result
                    .as_ref()
                    .and_then(|r| r.get("worst_margin"))
                    .and_then(|m| m.as_f64())
                    .map(|m| m.to_string())
                    .unwrap_or_default();
                csv.push_str(&format!("{value},{},{margin}\n", report.status));
            }
            emit(out.as_deref(), &csv)?;
            Ok(0)
        }
        Command::Converge { scenario, operator, vector, t, n, panels, out } => {
            let s = load_scenario(&scenario)?;
            let ws = Workspace::build(&s, None)?;
            let g = ws.generator(&operator)?;
            create_dir(&out)?;

            let mut euler = String::from("n,error,ratio\n");
            let mut prev: Option<f64> = None;
            for &k in &n {
                let err = euler_error(&g, t, k)?;
                let ratio = prev.map(|p| (err / p).to_string()).unwrap_or_default();
                euler.push_str(&format!("{k},{err},{ratio}\n"));
                prev = Some(err);
            }
            write(&out.join("euler.csv"), &euler)?;

            let v = match &vector {
                Some(name) => ws.vector(name, Exponent::TWO)?,
                None => LpElement::basis(ws.space(), 0, Exponent::TWO),
            };
            let phi = resolvent_pairing_family(&g, &v, &v, Side::Forward)?;
            let psi = resolvent_pairing_family(&g, &v, &v, Side::Adjoint)?;
            let table = convergence_study(&phi, &psi, t, &n, panels)?;
            write(&out.join("convolution.csv"), &table.to_csv())?;
            println!(
                "euler: final error {:e}; convolution: final error {:e}, monotone {}",
                prev.unwrap_or(0.0),
                table.final_error(),
                table.monotone
            );
            Ok(0)
        }
        Command::Kernel { scenario, check, out, seed } => {
            let s = load_scenario(&scenario)?;
            let spec = s
                .checks
                .iter()
                .find(|c| c.id == check)
                .ok_or_else(|| Error::InvalidArgument(format!("no check with id `{check}`")))?;
            let ws = Workspace::build(&s, None)?;
            let (g_s, g_t, times) = match &spec.kind {
                CheckKind::JumpKernelTheorem { form, jump, times, .. } => {
                    let tau0 = ws.form(form)?;
                    let g_t = associated_generator(&perturbed_form(&tau0, &ws.jump(jump)?)?);
                    (associated_generator(&tau0), g_t, times.clone())
                }
                CheckKind::KernelEstimate { estimate, times, .. } => {
                    (ws.generator(&estimate.s)?, ws.generator(&estimate.t)?, times.clone())
                }
                _ => return Err(Error::InvalidArgument(format!("check `{check}` is not a kernel check"))),
            };
            create_dir(&out)?;
            for &t in &times {
                write(&out.join(format!("k_s_t{t}.csv")), &extract_kernel(&g_s, t)?.to_csv())?;
                write(&out.join(format!("k_t_t{t}.csv")), &extract_kernel(&g_t, t)?.to_csv())?;
            }
            let outcome = run_scenario(&s, &RunOptions { seed, only: Some(check), ..Default::default() })?;
            let report = &outcome.report.checks[0];
            let mut summary = serde_json::to_string_pretty(report).expect("serializes");
            summary.push('\n');
            write(&out.join("margins.json"), &summary)?;
            print!("{}", outcome.text_summary());
            Ok(outcome.exit_code() as u8)
        }
        Command::Generate { seed, size, profile, out } => {
            let profile = Profile::from(profile);
            let inst = generate_random_instance(seed, size, profile)?;
            let name = format!("{}-{size}-seed{seed}", format!("{profile:?}").to_lowercase());
            let s = scenario_from_instance(&inst, &name, seed)?;
            let mut json = serde_json::to_string_pretty(&s).expect("serializes");
            json.push('\n');
            emit(out.as_deref(), &json)?;
            Ok(0)
        }
    }
}
