//! `casts`: batch dependency analysis, verification and simulation.
//!
//! Exit status: 0 success, 1 candidates found by `analyze`, 2 deadlocks
//! (reported or reachable) or execution refused, 3 input error.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use casts_core::composition::{explore, run_trace, verification_gate, DEFAULT_BOUND};
use casts_core::dependency::{
    analyze_pairs, apply_selection, extended_label_dependencies, Candidate, Choice, DependencySet, LabelDependency,
    Order,
};
use casts_core::model::{Protocol, ProtocolId};
use casts_core::scenario::{
    dependency_set_to_text, load_scenario, parse_dependency_set, serialize_dependency_set, write_atomic, Scenario,
};
use casts_core::verification::{verify_in, DeadlockReport};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "casts", version, about = "Dependency analysis and deadlock verification for CA-STS compositions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List candidate label pairs of two client protocols.
    Analyze {
        scenario: PathBuf,
        /// Defaults to the operands of the first parallel composition.
        #[arg(long)]
        left: Option<String>,
        #[arg(long)]
        right: Option<String>,
        /// Write the candidate set here (`.xml` for XML, text otherwise).
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Orient chosen candidates into a selected dependency set.
    Select {
        scenario: PathBuf,
        #[arg(long)]
        left: Option<String>,
        #[arg(long)]
        right: Option<String>,
        /// `INDEX=left` or `INDEX=right`: which label of the pair runs first.
        #[arg(long = "choose", value_parser = parse_choice)]
        choices: Vec<Choice>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Add the predecessors of every dominant label.
    Extend {
        scenario: PathBuf,
        deps: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Report mutual and crossed deadlocks.
    Verify {
        scenario: PathBuf,
        deps: PathBuf,
        /// Write the deadlocked set here.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Explore the composition, or replay one schedule of move indices.
    Simulate {
        scenario: PathBuf,
        deps: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BOUND)]
        bound: usize,
        /// Comma-separated move indices, e.g. `0,2,0`.
        #[arg(long, value_delimiter = ',')]
        trace: Option<Vec<usize>>,
        /// Run even when verification reports deadlocks.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        json: bool,
    },
    /// Serve the session API.
    Serve {
        /// Checked, then opened as the first session.
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn parse_choice(s: &str) -> Result<Choice, String> {
    let (i, o) = s.split_once('=').ok_or("expected INDEX=left or INDEX=right")?;
    let index = i.trim().parse().map_err(|_| format!("`{i}` is not an index"))?;
    let order = match o.trim() {
        "left" | "leftFirst" => Order::LeftFirst,
        "right" | "rightFirst" => Order::RightFirst,
        other => return Err(format!("`{other}` is neither left nor right")),
    };
    Ok(Choice { index, order })
}

/// Input problems, reported with exit status 3.
struct Failure(String);

impl<E: Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn print_json<T: Serialize>(v: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_set(out: &Path, ds: &DependencySet) -> Result<(), Failure> {
    let body = if out.extension().is_some_and(|e| e == "xml") {
        serialize_dependency_set(ds)
    } else {
        dependency_set_to_text(ds)
    };
    write_atomic(out, body.as_bytes())?;
    Ok(())
}

fn read_set(path: &Path) -> Result<DependencySet, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    parse_dependency_set(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn client<'a>(s: &'a Scenario, id: &str) -> Result<&'a Protocol, Failure> {
    s.client(&ProtocolId::new(id))
        .map(|p| &**p)
        .ok_or_else(|| Failure(format!("`{id}` is not a client protocol of scenario `{}`", s.name)))
}

/// The two protocols to analyse: as given, or the first parallel pair.
fn pair(s: &Scenario, left: Option<String>, right: Option<String>) -> Result<(&Protocol, &Protocol), Failure> {
    let (l, r) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        (None, None) => {
            let sess = casts_core::session::Session::new(s.clone(), None, None)?;
            (sess.left.to_string(), sess.right.to_string())
        }
        _ => return Err(Failure("give both --left and --right, or neither".into())),
    };
    Ok((client(s, &l)?, client(s, &r)?))
}

/// The client protocols a dependency set mentions.
fn protocols_of<'a>(s: &'a Scenario, ld: &BTreeSet<LabelDependency>) -> Result<Vec<&'a Protocol>, Failure> {
    let ids: BTreeSet<&ProtocolId> = ld.iter().flat_map(|d| [&d.dominant.protocol, &d.dominated.protocol]).collect();
    ids.into_iter().map(|id| client(s, id.as_str())).collect()
}

fn matches_text(c: &Candidate) -> String {
    c.matches
        .iter()
        .map(|m| format!("{}~{} {}", m.left, m.right, m.degree))
        .collect::<Vec<_>>()
        .join(", ")
}

fn analyze(scenario: &Path, left: Option<String>, right: Option<String>, out: Option<PathBuf>, json: bool) -> Outcome {
    let s = load_scenario(scenario)?;
    let (p1, p2) = pair(&s, left, right)?;
    let cands = analyze_pairs(p1, p2, &s.ontology)?;
    if let Some(out) = &out {
        write_set(out, &DependencySet::Candidates(cands.iter().map(|c| c.pair.clone()).collect()))?;
    }
    if json {
        print_json(&cands)?;
    } else {
        let w = cands.iter().map(|c| c.pair.left.to_string().len()).max().unwrap_or(4).max(4);
        let v = cands.iter().map(|c| c.pair.right.to_string().len()).max().unwrap_or(5).max(5);
        println!("{:>3}  {:w$}  {:v$}  matches", "#", "left", "right");
        for (i, c) in cands.iter().enumerate() {
            println!("{i:>3}  {:w$}  {:v$}  {}", c.pair.left.to_string(), c.pair.right.to_string(), matches_text(c));
        }
        println!("{} candidate pair(s) between {} and {}", cands.len(), p1.id, p2.id);
    }
    Ok(if cands.is_empty() { 0 } else { 1 })
}

fn select(
    scenario: &Path,
    left: Option<String>,
    right: Option<String>,
    choices: Vec<Choice>,
    out: Option<PathBuf>,
    json: bool,
) -> Outcome {
    let s = load_scenario(scenario)?;
    let (p1, p2) = pair(&s, left, right)?;
    let pairs = analyze_pairs(p1, p2, &s.ontology)?.into_iter().map(|c| c.pair).collect();
    let ds = DependencySet::Selected(apply_selection(&pairs, &choices)?);
    if let Some(out) = &out {
        write_set(out, &ds)?;
    }
    if json {
        print_json(&ds)?;
    } else {
        print!("{}", dependency_set_to_text(&ds));
    }
    Ok(0)
}

fn extend(scenario: &Path, deps: &Path, out: Option<PathBuf>, json: bool) -> Outcome {
    let s = load_scenario(scenario)?;
    let DependencySet::Selected(ld) = read_set(deps)? else {
        return Err(Failure(format!("{}: expected a selected dependency set", deps.display())));
    };
    let ext = match protocols_of(&s, &ld)?.as_slice() {
        [] => BTreeSet::new(),
        [p1, p2] => extended_label_dependencies(p1, p2, &ld)?,
        ps => {
            return Err(Failure(format!(
                "a dependency set relates exactly two client protocols, this one names {}",
                ps.len()
            )))
        }
    };
    let ds = DependencySet::Extended(ext);
    if let Some(out) = &out {
        write_set(out, &ds)?;
    }
    if json {
        print_json(&ds)?;
    } else {
        print!("{}", dependency_set_to_text(&ds));
    }
    Ok(0)
}

/// Selected or extended dependencies; warns on the former.
fn executable_set(path: &Path) -> Result<BTreeSet<LabelDependency>, Failure> {
    match read_set(path)? {
        DependencySet::Extended(ld) => Ok(ld),
        DependencySet::Selected(ld) => {
            eprintln!("warning: using a set that has not been extended; extension may introduce new conflicts");
            Ok(ld)
        }
        other => Err(Failure(format!(
            "{}: expected a selected or extended set, found {}",
            path.display(),
            other.stage().as_str()
        ))),
    }
}

fn verify(scenario: &Path, deps: &Path, out: Option<PathBuf>, json: bool) -> Outcome {
    let s = load_scenario(scenario)?;
    let ld = executable_set(deps)?;
    let report = verify_in(&protocols_of(&s, &ld)?, &ld)?;
    if let Some(out) = &out {
        write_set(out, &DependencySet::Deadlocked(report.conflicts.clone()))?;
    }
    if json {
        print_json(&report)?;
    } else {
        print!("{}", report.to_text());
    }
    Ok(if report.is_empty() { 0 } else { 2 })
}

fn refuse(report: &DeadlockReport) -> u8 {
    eprint!("{}", report.to_text());
    eprintln!("refusing to execute a composition with deadlocked dependencies; pass --force to run anyway");
    2
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TraceOutput<'a> {
    actions: Vec<&'a casts_core::semantics::ActionTag>,
    complete: bool,
    deadlocked: bool,
}

fn simulate(scenario: &Path, deps: &Path, bound: usize, trace: Option<Vec<usize>>, force: bool, json: bool) -> Outcome {
    let s = load_scenario(scenario)?;
    let ld = executable_set(deps)?;
    protocols_of(&s, &ld)?;
    let expr = s.composition_with(&ld);
    let report = verification_gate(&expr, &|id| s.protocol(id).map(|p| &**p))?;
    if !report.is_empty() {
        if !force {
            return Ok(refuse(&report));
        }
        eprintln!("warning: {} deadlocked pair(s) reported; running anyway", report.conflicts.len());
    }
    let system = s.system(&ld)?;
    match trace {
        Some(schedule) => {
            let runner = run_trace(&system, &schedule)?;
            let deadlocked = runner.is_deadlocked()?;
            let out = TraceOutput {
                actions: runner.actions(),
                complete: runner.is_complete(),
                deadlocked,
            };
            if json {
                print_json(&out)?;
            } else {
                for (i, a) in out.actions.iter().enumerate() {
                    let labels: Vec<String> = a.labels().iter().map(ToString::to_string).collect();
                    println!("{i:>3}  {}", labels.join(" -> "));
                }
                let moves = runner.moves()?;
                println!(
                    "{} step(s); {}",
                    out.actions.len(),
                    if out.complete {
                        "all protocols final".to_owned()
                    } else if deadlocked {
                        "deadlock".to_owned()
                    } else {
                        format!("{} move(s) enabled", moves.len())
                    }
                );
            }
            Ok(if deadlocked { 2 } else { 0 })
        }
        None => {
            let r = explore(&system, bound)?;
            let sum = r.summary();
            if json {
                print_json(&sum)?;
            } else {
                println!("states:      {}", sum.states);
                println!("transitions: {}", sum.transitions);
                println!("completions: {}", sum.completions);
                println!("deadlocks:   {}", sum.deadlocks);
                if sum.truncated {
                    println!("truncated:   true (bound {bound} reached)");
                }
            }
            Ok(if sum.deadlocks > 0 { 2 } else { 0 })
        }
    }
}

fn serve(scenario: Option<PathBuf>, host: &str, port: u16) -> Outcome {
    let state = casts_server::AppState::default();
    if let Some(path) = scenario {
        let s = load_scenario(&path)?;
        let sess = casts_core::session::Session::new(s, None, None)?;
        let id = state.insert(sess);
        println!("session {id} opened on {}", path.display());
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| Failure(format!("cannot listen on {host}:{port}: {e}")))?;
        println!("listening on http://{}/api/v1", listener.local_addr()?);
        casts_server::serve(listener, state).await?;
        Ok(0)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze {
            scenario,
            left,
            right,
            out,
            json,
        } => analyze(&scenario, left, right, out, json),
        Command::Select {
            scenario,
            left,
            right,
            choices,
            out,
            json,
        } => select(&scenario, left, right, choices, out, json),
        Command::Extend { scenario, deps, out, json } => extend(&scenario, &deps, out, json),
        Command::Verify { scenario, deps, out, json } => verify(&scenario, &deps, out, json),
        Command::Simulate {
            scenario,
            deps,
            bound,
            trace,
            force,
            json,
        } => simulate(&scenario, &deps, bound, trace, force, json),
        Command::Serve { scenario, host, port } => serve(scenario, &host, port),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
