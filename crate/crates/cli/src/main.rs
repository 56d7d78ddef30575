use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use cde_core::asymptotics::{convergence_experiment, summarize, write_csv, z_samples, ExperimentConfig};
use cde_core::coding::{simulate_with_retries, DEFAULT_FIELD_BITS, DEFAULT_RETRIES};
use cde_core::duality::{check_witness, construct_witness_general, construct_witness_m1};
use cde_core::lp::{
    build_full, build_m1_full, build_m1_overconstrained, build_overconstrained_general, build_reduced, check_feasible,
    LinearProgram,
};
use cde_core::quantities::{k_family, relabel_general, relabel_m1};
use cde_core::schedules::{closed_form_general, closed_form_m0, closed_form_m1, evaluate_general, evaluate_m1, round_to_grid};
use cde_core::simplex::solve_exact;
use cde_core::{format_rational, DerivedParams, Instance, Rational, Relabeling, Schedule};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cde", version, about = "Cooperative data exchange with unreliable clients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance.
    Gen {
        #[arg(long)]
        clients: usize,
        #[arg(long, default_value_t = 0)]
        unreliable: usize,
        #[arg(long)]
        packets: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Compute a transmission schedule.
    Solve {
        #[arg(short)]
        i: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::LpExact)]
        method: Method,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Solve one of the LP families exactly, or dump its constraints with `-o`.
    Lp {
        #[arg(short)]
        i: PathBuf,
        #[arg(long, value_enum, default_value_t = Which::Full)]
        which: Which,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Check a schedule against an LP family.
    Verify {
        #[arg(short)]
        i: PathBuf,
        #[arg(short)]
        s: PathBuf,
        #[arg(long, value_enum, default_value_t = Which::Full)]
        against: Which,
    },
    /// Build a dual witness and compare its objective with the closed form.
    Dual {
        #[arg(short)]
        i: PathBuf,
        #[arg(long, value_enum, default_value_t = WitnessWhich::General)]
        which: WitnessWhich,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Simulate random linear network coding of a schedule under every unreliable set.
    Simulate {
        #[arg(short)]
        i: PathBuf,
        #[arg(short)]
        s: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FIELD_BITS)]
        field_bits: u32,
        #[arg(long, default_value_t = DEFAULT_RETRIES)]
        retries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Tabulate limiting demands against a Monte Carlo estimate.
    Asymptotics {
        #[arg(long)]
        clients: usize,
        #[arg(long, default_value_t = 0)]
        unreliable: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 10_000)]
        packets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closed form versus LP optimum over seeds and packet counts, written as CSV.
    Sweep {
        #[arg(long)]
        clients: usize,
        #[arg(long, default_value_t = 1)]
        unreliable: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [100, 500, 2000])]
        packets: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        trials: u64,
        /// First seed; trials use consecutive seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short)]
        o: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    LpExact,
    ClosedGeneral,
    ClosedM1,
    ClosedM0,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Full,
    Reduced,
    OverGeneral,
    M1Full,
    M1Over,
}

#[derive(Clone, Copy, ValueEnum)]
enum WitnessWhich {
    General,
    M1,
}

/// Result of a command that ran to completion.
struct CommandOutcome {
    passed: bool,
    artifacts: Vec<PathBuf>,
}

impl CommandOutcome {
    fn passed() -> Self {
        CommandOutcome {
            passed: true,
            artifacts: Vec::new(),
        }
    }

    fn verdict(passed: bool) -> Self {
        CommandOutcome {
            passed,
            artifacts: Vec::new(),
        }
    }

    fn with_artifact(mut self, path: Option<&Path>) -> Self {
        self.artifacts.extend(path.map(Path::to_path_buf));
        self
    }
}

/// An LP family built for a given instance; the over-constrained families live on re-labeled clients.
struct BuiltLp {
    lp: LinearProgram,
    relabeling: Relabeling,
}

impl BuiltLp {
    fn to_lp_labels(&self, values: &[Rational]) -> Vec<Rational> {
        (1..=values.len()).map(|new| values[self.relabeling.old_of(new) - 1].clone()).collect()
    }

    fn subset_in_original(&self, subset: cde_core::ClientSet) -> Vec<usize> {
        let mut clients: Vec<usize> = subset.iter().map(|c| self.relabeling.old_of(c)).collect();
        clients.sort_unstable();
        clients
    }
}

fn build(inst: &Instance, which: Which) -> anyhow::Result<BuiltLp> {
    let n = inst.n_clients();
    let built = match which {
        Which::Full => BuiltLp {
            lp: build_full(inst)?,
            relabeling: Relabeling::identity(n),
        },
        Which::Reduced => BuiltLp {
            lp: build_reduced(inst)?,
            relabeling: Relabeling::identity(n),
        },
        Which::M1Full => BuiltLp {
            lp: build_m1_full(inst)?,
            relabeling: Relabeling::identity(n),
        },
        Which::OverGeneral => {
            let relabeling = relabel_general(inst)?;
            let relabeled = relabeling.apply(inst)?;
            let params = DerivedParams::of(&relabeled)?;
            let k = k_family(&relabeled, &params)?;
            BuiltLp {
                lp: build_overconstrained_general(&relabeled, &params, &k)?,
                relabeling,
            }
        }
        Which::M1Over => {
            let relabeling = relabel_m1(inst)?;
            let relabeled = relabeling.apply(inst)?;
            let params = DerivedParams::of(&relabeled)?;
            BuiltLp {
                lp: build_m1_overconstrained(&relabeled, &params)?,
                relabeling,
            }
        }
    };
    Ok(built)
}

fn emit(text: &str, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load_instance(path: &Path) -> anyhow::Result<Instance> {
    Instance::load(path).with_context(|| format!("reading instance {}", path.display()))
}

fn load_schedule(path: &Path, inst: &Instance) -> anyhow::Result<Schedule> {
    let schedule = Schedule::load(path).with_context(|| format!("reading schedule {}", path.display()))?;
    if schedule.n_clients() != inst.n_clients() {
        return Err(cde_core::Error::Input(format!(
            "schedule has {} clients, instance has {}",
            schedule.n_clients(),
            inst.n_clients()
        ))
        .into());
    }
    Ok(schedule)
}

fn rationals(values: &[Rational]) -> String {
    values.iter().map(format_rational).collect::<Vec<_>>().join(" ")
}

fn run(command: Command) -> anyhow::Result<CommandOutcome> {
    match command {
        Command::Gen {
            clients,
            unreliable,
            packets,
            alpha,
            seed,
            o,
        } => {
            let inst = Instance::generate_random(clients, unreliable, packets, alpha, seed)?;
            emit(&inst.to_json(), o.as_deref())?;
            Ok(CommandOutcome::passed().with_artifact(o.as_deref()))
        }

        Command::Solve { i, method, o } => {
            let inst = load_instance(&i)?;
            let schedule = match method {
                Method::LpExact => {
                    let params = DerivedParams::of(&inst)?;
                    let solution = solve_exact(&build_full(&inst)?)?;
                    round_to_grid(&solution.r, params.p)?
                }
                Method::ClosedGeneral => closed_form_general(&inst)?,
                Method::ClosedM1 => closed_form_m1(&inst)?,
                Method::ClosedM0 => closed_form_m0(&inst)?,
            };
            eprintln!("total {}: {}", format_rational(&schedule.total()), rationals(schedule.values()));
            emit(&schedule.to_json(), o.as_deref())?;
            Ok(CommandOutcome::passed().with_artifact(o.as_deref()))
        }

        Command::Lp { i, which, o } => {
            let inst = load_instance(&i)?;
            let built = build(&inst, which)?;
            if let Some(path) = &o {
                emit(&built.lp.to_json(), Some(path))?;
            }
            let solution = solve_exact(&built.lp)?;
            solution.verify(&built.lp)?;
            println!("constraints {}", built.lp.len());
            println!("optimum {}", format_rational(&solution.value));
            println!("r {}", rationals(&built.relabeling.to_original(&solution.r)));
            println!("tight {}", solution.tight.len());
            Ok(CommandOutcome::passed().with_artifact(o.as_deref()))
        }

        Command::Verify { i, s, against } => {
            let inst = load_instance(&i)?;
            let schedule = load_schedule(&s, &inst)?;
            let built = build(&inst, against)?;
            let violations = check_feasible(&built.lp, &built.to_lp_labels(schedule.values()))?;
            for v in &violations {
                println!(
                    "violated: clients {:?} need {} short by {}",
                    built.subset_in_original(v.subset),
                    built.lp.constraints()[v.constraint].rhs,
                    format_rational(&-v.slack.clone())
                );
            }
            println!(
                "{} violations of {} constraints; total {}",
                violations.len(),
                built.lp.len(),
                format_rational(&schedule.total())
            );
            Ok(CommandOutcome::verdict(violations.is_empty()))
        }

        Command::Dual { i, which, o } => {
            let inst = load_instance(&i)?;
            let (form, witness, lp_which) = match which {
                WitnessWhich::General => {
                    let form = evaluate_general(&inst)?;
                    let witness = construct_witness_general(&form.params)?;
                    (form, witness, Which::OverGeneral)
                }
                WitnessWhich::M1 => {
                    let form = evaluate_m1(&inst)?;
                    let witness = construct_witness_m1(&form.params)?;
                    (form, witness, Which::M1Over)
                }
            };
            let built = build(&inst, lp_which)?;
            let check = check_witness(&built.lp, &witness)?;
            emit(&witness.to_json(Some(&check.objective)), o.as_deref())?;
            let closed = form.total();
            let gap = &closed - &check.objective;
            println!("dual feasible {}", check.dual_feasible);
            println!("objective {}", format_rational(&check.objective));
            println!("closed form {}", format_rational(&closed));
            println!("gap {}", format_rational(&gap));
            if !form.is_nonnegative() {
                println!("closed form has a negative component");
            }
            let passed = check.dual_feasible && gap == Rational::from_integer(0.into());
            Ok(CommandOutcome::verdict(passed).with_artifact(o.as_deref()))
        }

        Command::Simulate {
            i,
            s,
            field_bits,
            retries,
            seed,
            o,
        } => {
            let inst = load_instance(&i)?;
            let schedule = load_schedule(&s, &inst)?;
            let report = simulate_with_retries(&inst, &schedule, field_bits, retries, seed)?;
            if let Some(path) = &o {
                emit(&report.to_json(), Some(path))?;
            }
            for set in report.failed_sets() {
                let clients: Vec<usize> = set.unreliable.iter().collect();
                for c in set.clients.iter().filter(|c| !c.decoded) {
                    println!(
                        "unreliable {clients:?}: client {} missing {} of {} chunks",
                        c.client, c.missing_chunks, c.required_chunks
                    );
                }
            }
            println!(
                "{} unreliable sets, {} attempts, {}",
                report.sets.len(),
                report.attempts,
                if report.all_success() { "all decoded" } else { "decoding failed" }
            );
            Ok(CommandOutcome::verdict(report.all_success()).with_artifact(o.as_deref()))
        }

        Command::Asymptotics {
            clients,
            unreliable,
            alpha,
            packets,
            seed,
        } => {
            let samples = z_samples(clients, unreliable, alpha, packets, seed)?;
            let mut out = io::stdout().lock();
            writeln!(out, "V\tZ\tempirical\tenvelope\tinside")?;
            let mut all_inside = true;
            for sample in &samples {
                all_inside &= sample.within_envelope();
                writeln!(
                    out,
                    "{}\t{:.6}\t{:.6}\t{:.6}\t{}",
                    sample.subset_size,
                    sample.limit,
                    sample.empirical,
                    sample.envelope,
                    sample.within_envelope()
                )?;
            }
            Ok(CommandOutcome::verdict(all_inside))
        }

        Command::Sweep {
            clients,
            unreliable,
            alpha,
            packets,
            trials,
            seed,
            o,
        } => {
            if trials == 0 {
                bail!(cde_core::Error::Input("--trials must be positive".into()));
            }
            let rows = convergence_experiment(&ExperimentConfig {
                n_clients: clients,
                n_unreliable: unreliable,
                alpha,
                packet_counts: packets,
                seeds: (seed..seed + trials).collect(),
            })?;
            match &o {
                Some(path) => write_csv(&rows, File::create(path).with_context(|| format!("creating {}", path.display()))?)?,
                None => write_csv(&rows, io::stdout().lock())?,
            }
            for s in summarize(&rows) {
                eprintln!(
                    "K={} runs {} feasible {:.3} median gap {:.5} zero gap {:.3}",
                    s.n_packets, s.runs, s.feasible_fraction, s.median_gap, s.zero_gap_fraction
                );
            }
            Ok(CommandOutcome::passed().with_artifact(o.as_deref()))
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<cde_core::Error>() {
        Some(e) if !e.is_input_error() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(outcome) => {
            for path in &outcome.artifacts {
                eprintln!("wrote {}", path.display());
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
