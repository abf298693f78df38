//! Command line front end: validate circuits, compute probabilities, dump
//! compiled fragment duotensors, test probability ratios, foliate, and export
//! DOT diagrams.
//!
//! Circuits are given either in the textual notation (`A^{a1} B_{a1}`) or as
//! JSON (`{"instances": ..., "wires": ...}`); theories always come from a
//! JSON file. Exit codes: 0 on success, 1 on a domain error (a JSON error
//! object is printed to stderr), 2 on usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use duotensor::circuit::{foliate, Circuit, Foliation, Fragment};
use duotensor::duotensor::Color;
use duotensor::engine::{
    circuit_probability, clamp_probability, compile_fragment, evolve_foliation, plan_contraction,
    ratio_check, ContractionPlan, RatioVerdict, DEFAULT_RATIO_TOL,
};
use duotensor::error::Error;
use duotensor::json::{fragment_from_json, theory_from_json};
use duotensor::theory::Theory;
use duotensor::{dsl, Result};

#[derive(Parser)]
#[command(
    name = "duotensor",
    about = "Probabilistic circuit evaluation via duotensor contraction",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Theory JSON file declaring types and operations.
    #[arg(long, value_name = "FILE")]
    theory: PathBuf,
    /// Circuit or fragment file (textual notation or JSON).
    #[arg(value_name = "CIRCUIT")]
    circuit: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check the wiring rules and report violations.
    Validate(Common),
    /// Compute the probability of a closed circuit by contraction.
    Prob(Common),
    /// Compile a fragment and emit its duotensor as JSON.
    Fragment {
        #[command(flatten)]
        common: Common,
        /// Recolour open ports, one of `b`/`w` per index in label order,
        /// e.g. `bbww`. Default is standard form (inputs black, outputs
        /// white).
        #[arg(long, value_name = "COLORS")]
        colors: Option<String>,
    },
    /// Decide whether the probability ratio of two fragments of the same
    /// experiment is well conditioned.
    Ratio {
        /// Theory JSON file declaring types and operations.
        #[arg(long, value_name = "FILE")]
        theory: PathBuf,
        /// Numerator fragment file.
        #[arg(value_name = "FRAG_I")]
        frag_i: PathBuf,
        /// Denominator fragment file.
        #[arg(value_name = "FRAG_J")]
        frag_j: PathBuf,
        /// Relative tolerance for the proportionality test.
        #[arg(long, default_value_t = DEFAULT_RATIO_TOL)]
        rel_tol: f64,
    },
    /// Foliate a circuit and evaluate it by state evolution.
    Foliate(Common),
    /// Emit a DOT digraph of the wiring.
    Dot {
        #[command(flatten)]
        common: Common,
        /// Group operations into ranks matching the foliation layers
        /// (requires a closed circuit).
        #[arg(long)]
        foliate: bool,
    },
}

#[derive(Serialize)]
struct ErrorObject<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ProbReport {
    probability: f64,
    plan: ContractionPlan,
}

#[derive(Serialize)]
struct FoliateReport {
    probability: f64,
    padding_count: usize,
    hypersurfaces: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct RatioReport {
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

fn read_file(path: &Path, what: &'static str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Malformed {
        what,
        context: format!("{}: {e}", path.display()),
    })
}

fn load_theory(path: &Path) -> Result<Theory> {
    theory_from_json(&read_file(path, "theory file")?)
}

fn load_fragment(path: &Path, theory: &Theory) -> Result<Fragment> {
    let text = read_file(path, "circuit file")?;
    if text.trim_start().starts_with('{') {
        fragment_from_json(&text)
    } else {
        dsl::parse_with_theory(&text, theory)
    }
}

fn load_circuit(path: &Path, theory: &Theory) -> Result<Circuit> {
    Circuit::try_from(load_fragment(path, theory)?)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate(common) => {
            let theory = load_theory(&common.theory)?;
            let fragment = load_fragment(&common.circuit, &theory)?;
            let report = fragment.validate();
            println!("{}", serde_json::to_string_pretty(&report).expect("report"));
            Ok(report.is_valid())
        }
        Command::Prob(common) => {
            let theory = load_theory(&common.theory)?;
            let circuit = load_circuit(&common.circuit, &theory)?;
            let plan = plan_contraction(circuit.fragment(), &theory)?;
            let probability = clamp_probability(circuit_probability(&circuit, &theory)?);
            let report = ProbReport { probability, plan };
            println!("{}", serde_json::to_string_pretty(&report).expect("report"));
            Ok(true)
        }
        Command::Fragment { common, colors } => {
            let theory = load_theory(&common.theory)?;
            let fragment = load_fragment(&common.circuit, &theory)?;
            let compiled = compile_fragment(&fragment, &theory)?;
            let duotensor = match colors {
                None => compiled.duotensor,
                Some(colors) => {
                    let target: Vec<Color> = colors
                        .chars()
                        .map(|c| match c {
                            'b' => Ok(Color::Black),
                            'w' => Ok(Color::White),
                            other => Err(Error::Malformed {
                                what: "colour string",
                                context: format!("`{other}` is not `b` or `w`"),
                            }),
                        })
                        .collect::<Result<_>>()?;
                    compiled.duotensor.to_coloring(&target, &theory)?
                }
            };
            println!("{}", duotensor.to_json());
            Ok(true)
        }
        Command::Ratio {
            theory,
            frag_i,
            frag_j,
            rel_tol,
        } => {
            let theory = load_theory(&theory)?;
            let e_i = load_fragment(&frag_i, &theory)?;
            let e_j = load_fragment(&frag_j, &theory)?;
            let verdict = ratio_check(&e_i, &e_j, &theory, rel_tol)?;
            let report = match verdict {
                RatioVerdict::WellConditioned(k) => RatioReport {
                    verdict: "well_conditioned",
                    k: Some(k),
                    reason: None,
                },
                RatioVerdict::NotWellConditioned => RatioReport {
                    verdict: "not_well_conditioned",
                    k: None,
                    reason: None,
                },
                RatioVerdict::Undefined(reason) => RatioReport {
                    verdict: "undefined",
                    k: None,
                    reason: Some(reason),
                },
            };
            println!("{}", serde_json::to_string_pretty(&report).expect("report"));
            Ok(true)
        }
        Command::Foliate(common) => {
            let theory = load_theory(&common.theory)?;
            let circuit = load_circuit(&common.circuit, &theory)?;
            let foliation = foliate(&circuit)?;
            let eval = evolve_foliation(&circuit, &foliation, &theory)?;
            let report = FoliateReport {
                probability: clamp_probability(eval.probability),
                padding_count: eval.padding_count,
                hypersurfaces: foliation
                    .hypersurfaces
                    .iter()
                    .map(|h| h.iter().copied().collect())
                    .collect(),
            };
            println!("{}", serde_json::to_string_pretty(&report).expect("report"));
            Ok(true)
        }
        Command::Dot {
            common,
            foliate: with_foliation,
        } => {
            let theory = load_theory(&common.theory)?;
            let fragment = load_fragment(&common.circuit, &theory)?;
            let dot = if with_foliation {
                let circuit = Circuit::try_from(fragment)?;
                let foliation: Foliation = foliate(&circuit)?;
                dsl::export_dot_foliated(&circuit, &foliation)?
            } else {
                dsl::export_dot(&fragment)
            };
            print!("{dot}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            let obj = ErrorObject {
                error: ErrorBody {
                    kind: err.kind(),
                    message: err.to_string(),
                },
            };
            eprintln!("{}", serde_json::to_string(&obj).expect("error object"));
            ExitCode::from(1)
        }
    }
}
