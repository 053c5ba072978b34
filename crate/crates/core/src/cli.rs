//! One deterministic command-line surface over every operation.
//!
//! Exit codes: 0 pass / constructed-and-validated, 1 checked-and-failed,
//! 2 malformed input or unsatisfied precondition, 3 scale refusal. Every
//! numeric field in every emitted document is an exact rational string;
//! the only sampled quantities are the seeded frequency estimates, which
//! are flagged as such. Equal command lines over equal inputs produce
//! byte-identical stdout; the run manifest goes to stderr and, on request,
//! to a file.

use crate::clopen::{self, AlgebraOp, ClopenSet};
use crate::config::Config;
use crate::construction::{self, ConstructionError, GoodQuadruple, QuadrupleContext};
use crate::doc;
use crate::manifest::RunManifest;
use crate::measures::{self, MeasureError, SignedMeasure, WitnessPrefix};
use crate::prop_t::{self, PropTError};
use crate::rational::Rat;
use crate::talagrand::{self, Budget, PzMode, TalagrandError, Verdict};
use crate::tau::{self, TauError};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::path::PathBuf;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAILED_CHECK: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_SCALE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "dyadic", version, disable_help_subcommand = true)]
/// Exact dyadic combinatorics on Cantor-space clopen algebras.
struct Cli {
    /// Largest mask level any operation may materialize (default 22).
    #[arg(long, global = true)]
    level_cap: Option<u32>,
    /// Cap on generated algebra sizes (default 65536 elements).
    #[arg(long, global = true)]
    closure_cap: Option<usize>,
    /// Write the run manifest to this path as well as stderr.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Print the machine-readable document schema and exit.
    #[arg(long)]
    schema: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clopen-set primitives: measure, asymmetry, algebra, level alignment.
    #[command(subcommand)]
    Set(SetCommand),
    /// Uniform-approximation certificates and the open-set witness.
    #[command(subcommand, name = "prop-t")]
    PropT(PropTCommand),
    /// Finite algebra generation and the level projection.
    #[command(subcommand)]
    Tau(TauCommand),
    /// The balanced-subset solver, its oracle, and the tail-probability check.
    #[command(subcommand)]
    Talagrand(TalagrandCommand),
    /// Signed measures: variation, witnesses, oscillation, decompositions.
    #[command(subcommand)]
    Measure(MeasureCommand),
    /// Good-quadruple validation and extension.
    #[command(subcommand)]
    Quadruple(QuadrupleCommand),
    /// Build a balanced avoid-set over disjoint blocks.
    Troisieme(TroisiemeArgs),
    /// Finite assembly identity for the limit set at one position.
    AssembleB(AssembleArgs),
}

#[derive(Subcommand, Debug)]
enum SetCommand {
    /// Re-represent a set at a deeper level.
    Normalize {
        #[arg(long)]
        set: String,
        #[arg(long)]
        target: u32,
    },
    /// Product measure of a set.
    Lambda {
        #[arg(long)]
        set: String,
    },
    /// Coordinate asymmetry phi_m.
    Phi {
        #[arg(long)]
        set: String,
        #[arg(long)]
        m: u32,
    },
    /// Pairwise asymmetry gap psi_m.
    Psi {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        m: u32,
    },
    /// Boolean algebra on sets.
    Algebra {
        #[arg(long)]
        op: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
enum PropTCommand {
    /// Certify a family at the smallest feasible level, or list violations.
    Certify {
        #[arg(long)]
        family: String,
        #[arg(long)]
        epsilon: Rat,
        #[arg(long, default_value_t = 0)]
        min_level: u32,
        /// Check exactly this level instead of searching.
        #[arg(long)]
        at: Option<u32>,
    },
    /// The half-filled-atom witness family inside a clopen base.
    Vw {
        #[arg(long)]
        w: String,
        #[arg(long)]
        depth: u32,
    },
}

#[derive(Subcommand, Debug)]
enum TauCommand {
    /// Close generators into a finite algebra.
    Generate {
        #[arg(long)]
        generators: String,
    },
    /// Build and verify the projection of an algebra into a level algebra.
    Build {
        #[arg(long)]
        elements: String,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        epsilon: Rat,
    },
}

#[derive(Args, Debug, Clone)]
struct BudgetArgs {
    #[arg(long, default_value_t = 4)]
    restarts: u32,
    #[arg(long, default_value_t = 100_000)]
    oracle_cap: u64,
}

impl BudgetArgs {
    fn budget(&self) -> Budget {
        Budget { restarts: self.restarts, oracle_cap: self.oracle_cap }
    }
}

#[derive(Subcommand, Debug)]
enum TalagrandCommand {
    /// Minimal feasible level for a budget.
    NZero {
        #[arg(long)]
        t: u32,
        #[arg(long)]
        eta: Rat,
    },
    /// The target measure: largest granule multiple inside (eta/2, eta).
    EtaPrime {
        #[arg(long)]
        eta: Rat,
        #[arg(long)]
        n: u32,
    },
    /// Steepest-descent solve with seeded restarts.
    Solve {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        relaxed: bool,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Exhaustive enumeration when the candidate count fits the cap.
    Oracle {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value_t = 100_000)]
        cap: u64,
        #[arg(long)]
        relaxed: bool,
    },
    /// Exact balance score of a given set against an instance.
    Score {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        m: String,
        #[arg(long)]
        relaxed: bool,
    },
    /// Tail-probability check on the flip-overlap region.
    Pz {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        m: String,
        #[arg(long)]
        xi: Rat,
        /// "enumerate" or "sample:COUNT:SEED".
        #[arg(long, default_value = "enumerate")]
        mode: String,
        #[arg(long)]
        relaxed: bool,
    },
}

#[derive(Subcommand, Debug)]
enum MeasureCommand {
    /// Total variation, on a set or of the whole measure.
    Tv {
        #[arg(long)]
        measure: String,
        #[arg(long)]
        set: Option<String>,
    },
    /// The growing-norm witness measure at an index.
    Witness {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        level: u32,
    },
    /// Pointwise-null, norm-unbounded exhibit over a family.
    NikodymDemo {
        #[arg(long)]
        family: String,
        #[arg(long)]
        epsilon: Rat,
        #[arg(long)]
        m_max: u32,
    },
    /// Even/odd oscillation bounds along a witness prefix.
    Oscillation {
        #[arg(long)]
        prefix: String,
        #[arg(long)]
        b: String,
    },
    /// Validate a supplied absolutely-continuous/concentrated split.
    DecompValidate {
        #[arg(long)]
        theta: String,
        #[arg(long)]
        theta1: String,
        #[arg(long)]
        theta2: String,
        /// JSON array of [epsilon, delta] rational pairs.
        #[arg(long)]
        modulus: String,
        #[arg(long)]
        x: String,
        #[arg(long)]
        epsilon_x: Rat,
    },
}

#[derive(Subcommand, Debug)]
enum QuadrupleCommand {
    /// Re-derive every condition of a quadruple from raw masks.
    Validate {
        #[arg(long)]
        quadruple: String,
        #[arg(long)]
        context: String,
    },
    /// One extension step; the independent validator has the last word.
    Extend {
        #[arg(long)]
        quadruple: String,
        #[arg(long)]
        context: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        relaxed: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        budget: BudgetArgs,
    },
}

#[derive(Args, Debug)]
struct TroisiemeArgs {
    /// Construction inputs document (blocks, t, eta, x, w, y, h, mode).
    #[arg(long)]
    inputs: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args, Debug)]
struct AssembleArgs {
    /// JSON array of pairwise disjoint kernel sets.
    #[arg(long)]
    nq: String,
    #[arg(long)]
    context: String,
    #[arg(long)]
    k: u32,
}

/// A classified failure: exit code plus a diagnostic for stderr.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn malformed(message: impl Into<String>) -> Self {
        Failure { code: EXIT_MALFORMED, message: message.into() }
    }

    fn check(message: impl Into<String>) -> Self {
        Failure { code: EXIT_FAILED_CHECK, message: message.into() }
    }

    fn scale(message: impl Into<String>) -> Self {
        Failure { code: EXIT_SCALE, message: message.into() }
    }
}

impl From<PropTError> for Failure {
    fn from(e: PropTError) -> Self {
        Failure::malformed(e.to_string())
    }
}

impl From<MeasureError> for Failure {
    fn from(e: MeasureError) -> Self {
        Failure::malformed(e.to_string())
    }
}

impl From<TauError> for Failure {
    fn from(e: TauError) -> Self {
        match e {
            TauError::Scale(_) => Failure::scale(e.to_string()),
            TauError::HypothesisFailed { .. } | TauError::LawReplayFailed { .. } => {
                Failure::check(e.to_string())
            }
            _ => Failure::malformed(e.to_string()),
        }
    }
}

impl From<TalagrandError> for Failure {
    fn from(e: TalagrandError) -> Self {
        match e {
            TalagrandError::Scale(_) => Failure::scale(e.to_string()),
            TalagrandError::InfeasibleCount { .. } | TalagrandError::OmegaEmpty => {
                Failure::check(e.to_string())
            }
            _ => Failure::malformed(e.to_string()),
        }
    }
}

impl From<ConstructionError> for Failure {
    fn from(e: ConstructionError) -> Self {
        match &e {
            ConstructionError::Scale(_) | ConstructionError::NoFeasibleLevel { .. } => {
                Failure::scale(e.to_string())
            }
            ConstructionError::Solver(inner) => {
                let f: Failure = inner.clone().into();
                Failure { code: f.code, message: e.to_string() }
            }
            ConstructionError::Tau(inner) => {
                let f: Failure = inner.clone().into();
                Failure { code: f.code, message: e.to_string() }
            }
            ConstructionError::SolverMissed { .. }
            | ConstructionError::ConstructValidationFailed(_)
            | ConstructionError::BaseNotGood(_)
            | ConstructionError::ContextExhausted { .. }
            | ConstructionError::DecompositionInvalid { .. }
            | ConstructionError::NoModulusRow { .. }
            | ConstructionError::NoOrthoRow
            | ConstructionError::KernelMeetsBlock { .. } => Failure::check(e.to_string()),
            _ => Failure::malformed(e.to_string()),
        }
    }
}

struct Session<'a> {
    stdin: Option<&'a str>,
    manifest: RunManifest,
    cfg: Config,
}

impl<'a> Session<'a> {
    /// Load a document source: a path, or `-` for stdin. Records a digest.
    fn load(&mut self, source: &str) -> Result<String, Failure> {
        let (name, text) = if source == "-" {
            let text = self
                .stdin
                .ok_or_else(|| Failure::malformed("no stdin document supplied"))?
                .to_owned();
            ("<stdin>".to_owned(), text)
        } else {
            let text = std::fs::read_to_string(source)
                .map_err(|e| Failure::malformed(format!("{source}: {e}")))?;
            (source.to_owned(), text)
        };
        self.manifest.record_input(&name, text.as_bytes());
        Ok(text)
    }

    fn doc<T: serde::de::DeserializeOwned>(&mut self, source: &str) -> Result<T, Failure> {
        let text = self.load(source)?;
        doc::parse_json(source, &text).map_err(Failure::malformed)
    }
}

fn to_value<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("reports serialize")
}

fn parse_pz_mode(text: &str) -> Result<PzMode, Failure> {
    if text == "enumerate" {
        return Ok(PzMode::Enumerate);
    }
    if let Some(rest) = text.strip_prefix("sample:") {
        if let Some((count, seed)) = rest.split_once(':') {
            let count = count.parse().map_err(|_| Failure::malformed("bad sample count"))?;
            let seed = seed.parse().map_err(|_| Failure::malformed("bad sample seed"))?;
            return Ok(PzMode::Sample { count, seed });
        }
    }
    Err(Failure::malformed(format!(
        "mode must be \"enumerate\" or \"sample:COUNT:SEED\", got {text:?}"
    )))
}

/// Execute one command line. Returns the exit code, the stdout document,
/// and stderr diagnostics (including the run manifest as the last line).
pub fn run(argv: &[String], stdin: Option<&str>) -> (i32, String, String) {
    let mut full_argv = vec!["dyadic".to_owned()];
    full_argv.extend(argv.iter().cloned());
    let cli = match Cli::try_parse_from(&full_argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_PASS,
                _ => EXIT_MALFORMED,
            };
            return if code == EXIT_PASS {
                (code, e.to_string(), String::new())
            } else {
                (code, String::new(), e.to_string())
            };
        }
    };

    let mut cfg = Config::default();
    if let Some(cap) = cli.level_cap {
        cfg.max_level = cap;
    }
    if let Some(cap) = cli.closure_cap {
        cfg.closure_cap = cap;
    }

    if cli.schema {
        let out = serde_json::to_string_pretty(&doc::schema()).expect("schema serializes");
        return (EXIT_PASS, format!("{out}\n"), String::new());
    }

    let Some(command) = cli.command else {
        return (EXIT_MALFORMED, String::new(), "missing subcommand (try --help)".to_owned());
    };

    let mut session = Session {
        stdin,
        manifest: RunManifest::new(argv.to_vec(), cfg.clone()),
        cfg,
    };

    let outcome = dispatch(&mut session, command);
    let (code, stdout) = match outcome {
        Ok((code, value)) => {
            let body = serde_json::to_string_pretty(&value).expect("documents serialize");
            (code, format!("{body}\n"))
        }
        Err(f) => {
            session.manifest.outcome = f.code;
            let manifest_line =
                serde_json::to_string(&session.manifest).expect("manifest serializes");
            let mut err = f.message;
            if !err.ends_with('\n') {
                err.push('\n');
            }
            err.push_str(&manifest_line);
            err.push('\n');
            if let Some(path) = &cli.manifest {
                let _ = std::fs::write(
                    path,
                    serde_json::to_string_pretty(&session.manifest).unwrap(),
                );
            }
            return (f.code, String::new(), err);
        }
    };
    session.manifest.outcome = code;
    let manifest_line = serde_json::to_string(&session.manifest).expect("manifest serializes");
    if let Some(path) = &cli.manifest {
        let _ = std::fs::write(path, serde_json::to_string_pretty(&session.manifest).unwrap());
    }
    (code, stdout, format!("{manifest_line}\n"))
}

fn dispatch(session: &mut Session, command: Command) -> Result<(i32, Value), Failure> {
    match command {
        Command::Set(cmd) => run_set(session, cmd),
        Command::PropT(cmd) => run_prop_t(session, cmd),
        Command::Tau(cmd) => run_tau(session, cmd),
        Command::Talagrand(cmd) => run_talagrand(session, cmd),
        Command::Measure(cmd) => run_measure(session, cmd),
        Command::Quadruple(cmd) => run_quadruple(session, cmd),
        Command::Troisieme(args) => run_troisieme(session, args),
        Command::AssembleB(args) => run_assemble(session, args),
    }
}

fn run_set(session: &mut Session, cmd: SetCommand) -> Result<(i32, Value), Failure> {
    match cmd {
        SetCommand::Normalize { set, target } => {
            let s: ClopenSet = session.doc(&set)?;
            let out = clopen::normalize(&s, target, &session.cfg).map_err(|e| match e {
                clopen::NormalizeError::Scale(_) => Failure::scale(e.to_string()),
                _ => Failure::malformed(e.to_string()),
            })?;
            Ok((EXIT_PASS, to_value(&out)))
        }
        SetCommand::Lambda { set } => {
            let s: ClopenSet = session.doc(&set)?;
            Ok((EXIT_PASS, json!({ "lambda": s.lambda() })))
        }
        SetCommand::Phi { set, m } => {
            let s: ClopenSet = session.doc(&set)?;
            Ok((EXIT_PASS, json!({ "m": m, "phi": s.phi(m) })))
        }
        SetCommand::Psi { a, b, m } => {
            let a_set: ClopenSet = session.doc(&a)?;
            let b_set: ClopenSet = session.doc(&b)?;
            Ok((EXIT_PASS, json!({ "m": m, "psi": clopen::psi(&a_set, &b_set, m) })))
        }
        SetCommand::Algebra { op, a, b } => {
            let op = AlgebraOp::parse(&op)
                .ok_or_else(|| Failure::malformed(format!("unknown operation {op:?}")))?;
            let a_set: ClopenSet = session.doc(&a)?;
            let b_set: Option<ClopenSet> = b.map(|src| session.doc(&src)).transpose()?;
            let out = clopen::algebra(op, &a_set, b_set.as_ref())
                .map_err(|e| Failure::malformed(e.to_string()))?;
            Ok((EXIT_PASS, to_value(&out)))
        }
    }
}

fn run_prop_t(session: &mut Session, cmd: PropTCommand) -> Result<(i32, Value), Failure> {
    match cmd {
        PropTCommand::Certify { family, epsilon, min_level, at } => {
            let sets: Vec<ClopenSet> = session.doc(&family)?;
            if let Some(n) = at {
                let outcome = prop_t::check_prop_t_at(&sets, &epsilon, n, &session.cfg)?;
                let code = match &outcome {
                    prop_t::CheckOutcome::Certified(_) => EXIT_PASS,
                    prop_t::CheckOutcome::Violated(_) => EXIT_FAILED_CHECK,
                };
                Ok((code, to_value(&outcome)))
            } else {
                let (n, cert) =
                    prop_t::find_prop_t_level(&sets, &epsilon, min_level, &session.cfg)?;
                Ok((EXIT_PASS, json!({ "n": n, "certificate": cert })))
            }
        }
        PropTCommand::Vw { w, depth } => {
            let base: ClopenSet = session.doc(&w)?;
            let out = prop_t::build_vw_counterexample(&base, depth)?;
            Ok((EXIT_PASS, to_value(&out)))
        }
    }
}

fn run_tau(session: &mut Session, cmd: TauCommand) -> Result<(i32, Value), Failure> {
    match cmd {
        TauCommand::Generate { generators } => {
            let gens: Vec<ClopenSet> = session.doc(&generators)?;
            let algebra = tau::generate_algebra(&gens, &session.cfg)?;
            Ok((EXIT_PASS, to_value(&algebra)))
        }
        TauCommand::Build { elements, n, epsilon } => {
            let elems: Vec<ClopenSet> = session.doc(&elements)?;
            let map = tau::build_tau(&elems, n, &epsilon, &session.cfg)?;
            Ok((EXIT_PASS, to_value(&map)))
        }
    }
}

fn run_talagrand(session: &mut Session, cmd: TalagrandCommand) -> Result<(i32, Value), Failure> {
    match cmd {
        TalagrandCommand::NZero { t, eta } => {
            if t == 0 {
                return Err(Failure::malformed("t must be positive"));
            }
            if !eta.is_positive() {
                return Err(Failure::malformed("eta must be positive"));
            }
            Ok((EXIT_PASS, json!({ "t": t, "eta": eta, "nZero": talagrand::n_zero(t, &eta) })))
        }
        TalagrandCommand::EtaPrime { eta, n } => {
            let out = talagrand::select_eta_prime(&eta, n).map_err(Failure::from)?;
            Ok((EXIT_PASS, json!({ "eta": eta, "n": n, "etaPrime": out })))
        }
        TalagrandCommand::Solve { instance, seed, relaxed, budget } => {
            let mut inst: talagrand::Instance = session.doc(&instance)?;
            inst.relaxed |= relaxed;
            session.manifest.seeds.push(seed);
            let report = talagrand::solve(&inst, seed, &budget.budget(), &session.cfg)?;
            let code = match report.verdict {
                Verdict::BoundMet => EXIT_PASS,
                Verdict::BoundMissed => EXIT_FAILED_CHECK,
            };
            Ok((code, to_value(&report)))
        }
        TalagrandCommand::Oracle { instance, cap, relaxed } => {
            let mut inst: talagrand::Instance = session.doc(&instance)?;
            inst.relaxed |= relaxed;
            let report = talagrand::exhaustive_oracle(&inst, cap, &session.cfg)?;
            let code = match report.verdict {
                Verdict::BoundMet => EXIT_PASS,
                Verdict::BoundMissed => EXIT_FAILED_CHECK,
            };
            Ok((code, to_value(&report)))
        }
        TalagrandCommand::Score { instance, m, relaxed } => {
            let mut inst: talagrand::Instance = session.doc(&instance)?;
            inst.relaxed |= relaxed;
            let m_set: ClopenSet = session.doc(&m)?;
            let s = talagrand::s_score(&m_set, &inst, &session.cfg)?;
            Ok((EXIT_PASS, json!({ "sScore": s })))
        }
        TalagrandCommand::Pz { instance, m, xi, mode, relaxed } => {
            let mut inst: talagrand::Instance = session.doc(&instance)?;
            inst.relaxed |= relaxed;
            let m_set: ClopenSet = session.doc(&m)?;
            let mode = parse_pz_mode(&mode)?;
            if let PzMode::Sample { seed, .. } = &mode {
                session.manifest.seeds.push(*seed);
            }
            let report =
                talagrand::paley_zygmund_check(&inst, &m_set, &xi, &mode, &session.cfg)?;
            let code = if report.pass { EXIT_PASS } else { EXIT_FAILED_CHECK };
            Ok((code, to_value(&report)))
        }
    }
}

fn run_measure(session: &mut Session, cmd: MeasureCommand) -> Result<(i32, Value), Failure> {
    match cmd {
        MeasureCommand::Tv { measure, set } => {
            let nu: SignedMeasure = session.doc(&measure)?;
            let on: Option<ClopenSet> = set.map(|s| session.doc(&s)).transpose()?;
            let tv = nu.total_variation(on.as_ref())?;
            Ok((EXIT_PASS, json!({ "totalVariation": tv })))
        }
        MeasureCommand::Witness { n, level } => {
            if level > session.cfg.max_level {
                return Err(Failure::scale(
                    crate::config::ScaleReport::for_level(level, &session.cfg).to_string(),
                ));
            }
            let mu = measures::nikodym_witness(n, level)?;
            Ok((EXIT_PASS, to_value(&mu)))
        }
        MeasureCommand::NikodymDemo { family, epsilon, m_max } => {
            let sets: Vec<ClopenSet> = session.doc(&family)?;
            let report = measures::nikodym_demo(&sets, &epsilon, m_max, &session.cfg)?;
            let code = if report.pass { EXIT_PASS } else { EXIT_FAILED_CHECK };
            Ok((code, to_value(&report)))
        }
        MeasureCommand::Oscillation { prefix, b } => {
            let prefix: WitnessPrefix = session.doc(&prefix)?;
            let b_set: ClopenSet = session.doc(&b)?;
            let report = measures::oscillation_check(&prefix, &b_set)?;
            let ok = report.separated && report.entries.iter().all(|e| e.bound_satisfied);
            Ok((if ok { EXIT_PASS } else { EXIT_FAILED_CHECK }, to_value(&report)))
        }
        MeasureCommand::DecompValidate { theta, theta1, theta2, modulus, x, epsilon_x } => {
            let theta: SignedMeasure = session.doc(&theta)?;
            let theta1: SignedMeasure = session.doc(&theta1)?;
            let theta2: SignedMeasure = session.doc(&theta2)?;
            let modulus: Vec<(Rat, Rat)> = session.doc(&modulus)?;
            let x_set: ClopenSet = session.doc(&x)?;
            let report = measures::validate_decomposition(
                &theta, &theta1, &theta2, &modulus, &x_set, &epsilon_x,
            )?;
            let code = if report.pass { EXIT_PASS } else { EXIT_FAILED_CHECK };
            Ok((code, to_value(&report)))
        }
    }
}

fn run_quadruple(session: &mut Session, cmd: QuadrupleCommand) -> Result<(i32, Value), Failure> {
    match cmd {
        QuadrupleCommand::Validate { quadruple, context } => {
            let quad: GoodQuadruple = session.doc(&quadruple)?;
            let ctx: QuadrupleContext = session.doc(&context)?;
            let report = construction::validate_good_quadruple(&quad, &ctx, &session.cfg)?;
            let code = if report.pass { EXIT_PASS } else { EXIT_FAILED_CHECK };
            Ok((code, to_value(&report)))
        }
        QuadrupleCommand::Extend { quadruple, context, b, relaxed, seed, budget } => {
            let quad: GoodQuadruple = session.doc(&quadruple)?;
            let ctx: QuadrupleContext = session.doc(&context)?;
            let b_set: ClopenSet = session.doc(&b)?;
            session.manifest.seeds.push(seed);
            let mode = if relaxed {
                construction::Mode::Relaxed
            } else {
                construction::Mode::Strict
            };
            let report = construction::extend_quadruple(
                &quad,
                &b_set,
                &ctx,
                mode,
                seed,
                &budget.budget(),
                &session.cfg,
            )?;
            let code = if report.validation.pass { EXIT_PASS } else { EXIT_FAILED_CHECK };
            Ok((code, to_value(&report)))
        }
    }
}

fn run_troisieme(session: &mut Session, args: TroisiemeArgs) -> Result<(i32, Value), Failure> {
    let inputs: construction::ConstructInputs = session.doc(&args.inputs)?;
    session.manifest.seeds.push(args.seed);
    let report = construction::construct_balanced_set(
        &inputs,
        args.seed,
        &args.budget.budget(),
        &session.cfg,
    )?;
    let code = if report.validation.pass { EXIT_PASS } else { EXIT_FAILED_CHECK };
    Ok((code, to_value(&report)))
}

fn run_assemble(session: &mut Session, args: AssembleArgs) -> Result<(i32, Value), Failure> {
    let kernels: Vec<ClopenSet> = session.doc(&args.nq)?;
    let ctx: QuadrupleContext = session.doc(&args.context)?;
    let report = construction::assemble_limit_set(&kernels, &ctx, args.k)?;
    let code = if report.ok { EXIT_PASS } else { EXIT_FAILED_CHECK };
    Ok((code, to_value(&report)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str], stdin: Option<&str>) -> (i32, String, String) {
        let argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        run(&argv, stdin)
    }

    #[test]
    fn schema_prints_and_exits_clean() {
        let (code, out, _) = run_str(&["--schema"], None);
        assert_eq!(code, EXIT_PASS);
        assert!(out.contains("clopenSet"));
    }

    #[test]
    fn lambda_via_stdin() {
        let (code, out, err) =
            run_str(&["set", "lambda", "--set", "-"], Some(r#"{"level":0,"atoms":"1"}"#));
        assert_eq!(code, EXIT_PASS, "{err}");
        assert!(out.contains("\"lambda\": \"1/2\""), "{out}");
        assert!(err.contains("inputDigests"));
    }

    #[test]
    fn malformed_document_exits_two_with_position() {
        let (code, _, err) =
            run_str(&["set", "lambda", "--set", "-"], Some("{\"level\": 0,\n"));
        assert_eq!(code, EXIT_MALFORMED);
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_flag_exits_two() {
        let (code, _, _) = run_str(&["set", "lambda", "--nope", "x"], None);
        assert_eq!(code, EXIT_MALFORMED);
    }

    #[test]
    fn n_zero_at_paper_scale_via_cli() {
        let (code, out, _) = run_str(&["talagrand", "n-zero", "--t", "1", "--eta", "1/8192"], None);
        assert_eq!(code, EXIT_PASS);
        assert!(out.contains("\"nZero\": 28"), "{out}");
    }

    #[test]
    fn determinism_byte_identical() {
        let stdin = r#"{"level":2,"atoms":"a5"}"#;
        let a = run_str(&["set", "phi", "--set", "-", "--m", "1"], Some(stdin));
        let b = run_str(&["set", "phi", "--set", "-", "--m", "1"], Some(stdin));
        assert_eq!(a, b);
    }
}
