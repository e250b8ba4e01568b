use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use curtail_core::analysis::{self, GrowthOptions};
use curtail_core::market::{self, LambdaBounds, MarketOutcome};
use curtail_core::treedp::{self, DpOptions};
use curtail_core::{cases, singlebus, CurtailmentVector, Error, Network};
use serde::Serialize;

/// Ex-post LMP clearing and strategic curtailment analysis.
#[derive(Parser, Debug)]
#[command(name = "curtail", version)]
struct Cli {
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct CaseArgs {
    /// Case file, or the name of a bundled case (two_bus, ring3, six_bus_analog).
    #[arg(long)]
    case: String,
    /// Multiply generation, demand and aggregator shares by this factor.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    scale_demand: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clear the market and report flows, redispatch and LMPs.
    Clear {
        #[command(flatten)]
        case: CaseArgs,
        /// Curtail `--alpha` MW at this bus.
        #[arg(long, requires = "alpha")]
        bus: Option<i64>,
        #[arg(long, requires = "bus")]
        alpha: Option<f64>,
        /// Select the duals most favorable to the aggregator.
        #[arg(long)]
        favorable: bool,
    },
    /// Trace the LMP staircase of one bus as its curtailment grows.
    Staircase {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        bus: i64,
        /// Stop tracing at this curtailment.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Exact profit-maximizing curtailment at a single bus.
    CurtailSingle {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        bus: i64,
    },
    /// ε-accurate multi-bus curtailment on a radial network.
    CurtailTree {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, value_parser = positive)]
        eps: f64,
        #[arg(long, requires = "lambda_hi")]
        lambda_lo: Option<f64>,
        #[arg(long, requires = "lambda_lo")]
        lambda_hi: Option<f64>,
        /// Maximum grid points per tree node.
        #[arg(long, default_value_t = 1_000_000)]
        budget: usize,
    },
    /// Exhaustive grid search over aggregator curtailments.
    BruteForce {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        resolution: u64,
        /// Maximum number of clearings.
        #[arg(long, default_value_t = analysis::DEFAULT_CLEARING_BUDGET)]
        budget: usize,
    },
    /// Market-power index of a single-bus curtailment.
    MarketPower {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        bus: i64,
        #[arg(long)]
        alpha: f64,
    },
    /// Profit against aggregator size over a random bus sequence.
    Grow {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        seed: u64,
        /// Comma-separated prefix sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10.0, value_parser = positive)]
        endowment: f64,
        #[arg(long, default_value_t = 0.01, value_parser = positive)]
        allowance: f64,
    },
    /// Verify the KKT conditions of a clearing outcome file.
    CheckKkt {
        #[command(flatten)]
        case: CaseArgs,
        /// JSON outcome as written by `clear --format json`.
        #[arg(long)]
        outcome: PathBuf,
        #[arg(long, default_value_t = 1e-6, value_parser = positive)]
        tol: f64,
    },
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

fn load_case(args: &CaseArgs) -> anyhow::Result<Network> {
    let path = Path::new(&args.case);
    let net = if path.exists() {
        Network::load(path).with_context(|| format!("loading {}", path.display()))?
    } else if let Some(net) = cases::by_name(&args.case) {
        net
    } else {
        bail!(Error::InvalidArgument(format!("no case file or bundled case named {}", args.case)));
    };
    Ok(if args.scale_demand == 1.0 {
        net
    } else {
        net.with_load_scale(args.scale_demand)
    })
}

struct Output {
    format: Option<Format>,
    path: Option<PathBuf>,
}

impl Output {
    fn writer(&self) -> anyhow::Result<Box<dyn Write>> {
        Ok(match &self.path {
            Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
            None => Box::new(io::stdout().lock()),
        })
    }

    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn json<T: Serialize>(&self, value: &T) -> anyhow::Result<()> {
        let mut w = self.writer()?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        Ok(())
    }

    fn csv<T: Serialize>(&self, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(self.writer()?);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct BusRow {
    bus: i64,
    lmp: f64,
    redispatch: f64,
    curtailment: f64,
}

#[derive(Serialize)]
struct NodeRow {
    node: usize,
    bus: Option<i64>,
    lmp: f64,
    flow: f64,
    curtailment: f64,
}

fn outcome_rows<'a>(net: &'a Network, out: &'a MarketOutcome) -> impl Iterator<Item = BusRow> + 'a {
    net.buses().iter().enumerate().map(|(i, b)| BusRow {
        bus: b.id,
        lmp: out.lmps[i],
        redispatch: out.redispatch[i],
        curtailment: out.curtailment[i],
    })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let out = Output {
        format: cli.format,
        path: cli.out,
    };
    match cli.command {
        Command::Clear {
            case,
            bus,
            alpha,
            favorable,
        } => {
            let net = load_case(&case)?;
            let curtail = match (bus, alpha) {
                (Some(bus), Some(a)) => CurtailmentVector::single(net.n(), net.index_of(bus)?, a),
                _ => CurtailmentVector::zeros(net.n()),
            };
            let outcome = if favorable {
                market::clear_market_favorable(&net, &curtail)?
            } else {
                market::clear_market(&net, &curtail)?
            };
            match out.format(Format::Json) {
                Format::Json => out.json(&outcome)?,
                Format::Csv => out.csv(outcome_rows(&net, &outcome))?,
            }
        }
        Command::Staircase { case, bus, alpha } => {
            let net = load_case(&case)?;
            let profile = singlebus::trace_staircase(&net, bus, alpha)?;
            match out.format(Format::Csv) {
                Format::Json => out.json(&profile)?,
                Format::Csv => profile.write_csv(out.writer()?)?,
            }
        }
        Command::CurtailSingle { case, bus } => {
            let net = load_case(&case)?;
            let result = singlebus::optimize_single_bus(&net, bus)?;
            match out.format(Format::Json) {
                Format::Json => out.json(&result)?,
                Format::Csv => out.csv(&result.evaluated_points)?,
            }
        }
        Command::CurtailTree {
            case,
            eps,
            lambda_lo,
            lambda_hi,
            budget,
        } => {
            let net = load_case(&case)?;
            let tree = treedp::to_binary_tree(&net)?;
            let opts = DpOptions {
                lambda_bounds: lambda_lo.zip(lambda_hi).map(|(lo, hi)| LambdaBounds { lo, hi }),
                budget,
                ..DpOptions::default()
            };
            let sol = treedp::dp_solve_with(&tree, eps, &opts)?;
            match out.format(Format::Json) {
                Format::Json => out.json(&sol)?,
                Format::Csv => out.csv(sol.states.iter().enumerate().map(|(k, s)| NodeRow {
                    node: k,
                    bus: sol.node_bus[k],
                    lmp: s.lmp,
                    flow: s.flow,
                    curtailment: s.curtailment,
                }))?,
            }
        }
        Command::BruteForce {
            case,
            resolution,
            budget,
        } => {
            let net = load_case(&case)?;
            let result = analysis::brute_force_curtailment_with(&net, resolution as usize, budget)?;
            out.json(&result)?;
        }
        Command::MarketPower { case, bus, alpha } => {
            let net = load_case(&case)?;
            out.json(&analysis::market_power(&net, bus, alpha)?)?;
        }
        Command::Grow {
            case,
            seed,
            sizes,
            endowment,
            allowance,
        } => {
            let net = load_case(&case)?;
            let opts = GrowthOptions {
                endowment,
                allowance,
                demand_scale: 1.0,
                ..GrowthOptions::default()
            };
            let mut exp = analysis::growth_experiment(&net, seed, &sizes, &opts)?;
            exp.options.demand_scale = case.scale_demand;
            match out.format(Format::Csv) {
                Format::Json => out.json(&exp)?,
                Format::Csv => {
                    exp.write_csv(out.writer()?)?;
                    if let Some(path) = &out.path {
                        let sidecar = path.with_extension("json");
                        let mut f = File::create(&sidecar).with_context(|| format!("creating {}", sidecar.display()))?;
                        serde_json::to_writer_pretty(&mut f, &exp.sidecar())?;
                        writeln!(f)?;
                    }
                }
            }
        }
        Command::CheckKkt { case, outcome, tol } => {
            let net = load_case(&case)?;
            let text = std::fs::read_to_string(&outcome).with_context(|| format!("reading {}", outcome.display()))?;
            let outcome: MarketOutcome = serde_json::from_str(&text).map_err(Error::from)?;
            let alpha = CurtailmentVector(outcome.curtailment.clone());
            alpha.check(&net)?;
            let report = market::check_kkt(&net, &alpha, &outcome, tol)?;
            out.json(&report)?;
            if !report.pass {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(
            Error::InvalidNetwork(_)
            | Error::NotRadial
            | Error::SingularNetwork
            | Error::UnknownBus(_)
            | Error::InvalidCurtailment(_)
            | Error::InvalidArgument(_)
            | Error::Json(_)
            | Error::Io(_),
        ) => 3,
        Some(Error::ClearingInfeasible) => 4,
        Some(Error::BudgetExceeded { .. }) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
