use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use phbf::eval::{roc_sweep, RocConfig, RocSummary};
use phbf::scenario::{parse_leg, run_probe, ProbeKind, Scenario};
use phbf::state::{self, StateLock};
use phbf::{
    generate_population, ChainConfig, Chip, DayRange, HbfParams, NoiseModel, Signature,
    SupplyChain, TimeTree, TrajectoryLeg,
};

/// Exit status for a benign outcome.
const EXIT_OK: u8 = 0;
/// Exit status when a counterfeit (or a failed scenario expectation) is found.
const EXIT_COUNTERFEIT: u8 = 1;
/// Exit status for usage, configuration and I/O errors.
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "phbf",
    version,
    about = "Noise-tolerant IC authentication and tracking with persistent hierarchical Bloom filters"
)]
struct Cli {
    /// State file path.
    #[arg(long, global = true, env = "PHBF_STATE")]
    state: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ChipArgs {
    /// External marking printed on the package.
    #[arg(long)]
    marking: Option<String>,
    /// PUF response as hexadecimal.
    #[arg(long, conflicts_with = "response_seed")]
    response: Option<String>,
    /// Generate the response from this seed instead.
    #[arg(long)]
    response_seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Theft,
    Clone,
    Remarked,
    Recycled,
}

#[derive(Subcommand)]
enum Command {
    /// Create an empty state file from a TOML config.
    Init {
        #[arg(long)]
        config: PathBuf,
        /// Overwrite an existing state file.
        #[arg(long)]
        force: bool,
    },
    /// Record a chip at a location on a day.
    Observe {
        #[command(flatten)]
        chip: ChipArgs,
        #[arg(long)]
        location: String,
        #[arg(long)]
        day: u64,
    },
    /// Record that a chip was sold to an end user.
    Sell {
        #[command(flatten)]
        chip: ChipArgs,
    },
    /// Run one counterfeit check.
    Detect {
        check: Check,
        #[command(flatten)]
        chip: ChipArgs,
        /// Expected stop as location:start:end (theft only, repeatable).
        #[arg(long = "leg")]
        legs: Vec<String>,
        /// Widen unaligned leg ranges to leaf boundaries.
        #[arg(long)]
        expand: bool,
    },
    /// Print the canonical cover of a day range.
    Cover {
        #[arg(long = "days", alias = "T")]
        days: u64,
        #[arg(long = "granularity", alias = "g")]
        granularity: u64,
        /// start:end
        #[arg(long)]
        range: String,
        #[arg(long)]
        expand: bool,
    },
    /// Sweep the acceptance threshold over a synthetic population.
    Roc {
        /// CSV output path for the (th, tpr, fpr) table.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 1000)]
        impostors: usize,
        /// none | uniform:<p> | clustered:<bursts>:<burst_len>
        #[arg(long, default_value = "clustered:2:16")]
        noise: String,
        #[arg(long, default_value_t = 128)]
        days: u64,
        #[arg(long, default_value_t = 16)]
        granularity: u64,
        #[arg(long, default_value_t = 16)]
        blocks: usize,
        #[arg(long, default_value_t = 16)]
        block_bits: usize,
        #[arg(long, default_value_t = 0.1)]
        fp: f64,
        /// Filter capacity; defaults to the population size.
        #[arg(long)]
        capacity: Option<u64>,
        /// Operating threshold reported in the summary.
        #[arg(long, default_value_t = 5)]
        threshold: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        population_seed: u64,
    },
    /// Replay a scenario script and check its expectations.
    Scenario {
        script: PathBuf,
        /// Replay against the state file instead of the script's config,
        /// writing the result back.
        #[arg(long)]
        persist: bool,
    },
    /// Print the parameters of a state file.
    Info,
}

struct CliError {
    code: u8,
    message: String,
}

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CliResult = Result<u8, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Init { config, force } => init(state_path(cli)?, config, *force),
        Command::Observe {
            chip,
            location,
            day,
        } => {
            let path = state_path(cli)?;
            let _lock = StateLock::acquire(path)?;
            let mut chain = state::load(path)?;
            let chip = chip.resolve(&chain, true)?;
            chain.observe(&chip, location, *day)?;
            state::save(path, &chain)?;
            eprintln!("observed {} at {location} on day {day}", chip.marking);
            Ok(EXIT_OK)
        }
        Command::Sell { chip } => {
            let path = state_path(cli)?;
            let _lock = StateLock::acquire(path)?;
            let mut chain = state::load(path)?;
            let chip = chip.resolve(&chain, false)?;
            chain.mark_sold(&chip.response)?;
            state::save(path, &chain)?;
            eprintln!("recorded sale of {}", chip.marking);
            Ok(EXIT_OK)
        }
        Command::Detect {
            check,
            chip,
            legs,
            expand,
        } => detect(state_path(cli)?, *check, chip, legs, *expand),
        Command::Cover {
            days,
            granularity,
            range,
            expand,
        } => cover(*days, *granularity, range, *expand),
        Command::Roc {
            out,
            count,
            impostors,
            noise,
            days,
            granularity,
            blocks,
            block_bits,
            fp,
            capacity,
            threshold,
            seed,
            population_seed,
        } => {
            let params = HbfParams::for_capacity(
                capacity.unwrap_or(*count as u64),
                *fp,
                *blocks,
                *block_bits,
                (*threshold).min(*blocks),
            )?;
            let cfg = RocConfig {
                days: *days,
                granularity: *granularity,
                params,
                genuine_noise: noise.parse::<NoiseModel>()?,
                impostors: *impostors,
                seed: *seed,
            };
            let population =
                generate_population(*count, params.signature_bits(), *population_seed)?;
            let table = roc_sweep(&population, &cfg)?;
            fs::write(out, table.to_csv())?;
            let summary = RocSummary::new(&table, &cfg, *threshold)?;
            println!("{}", serde_json::to_string(&summary)?);
            eprintln!(
                "th={} tpr={:.3} fpr={:.3}; table written to {}",
                summary.threshold,
                summary.tpr,
                summary.fpr,
                out.display()
            );
            Ok(EXIT_OK)
        }
        Command::Scenario { script, persist } => scenario(cli, script, *persist),
        Command::Info => {
            let path = state_path(cli)?;
            let _lock = StateLock::acquire(path)?;
            let chain = state::load(path)?;
            let p = chain.params();
            let tree = chain.tree();
            println!(
                "{}",
                json!({
                    "days": tree.days(), "granularity": tree.granularity(),
                    "levels": tree.levels(), "u": tree.node_count(),
                    "locations": chain.locations(), "blocks": p.blocks,
                    "block_bits": p.block_bits, "m": p.m, "k": p.k, "threshold": p.threshold,
                })
            );
            Ok(EXIT_OK)
        }
    }
}

fn state_path(cli: &Cli) -> Result<&Path, CliError> {
    cli.state
        .as_deref()
        .ok_or_else(|| usage("no state file given; pass --state or set PHBF_STATE"))
}

impl ChipArgs {
    fn resolve(&self, chain: &SupplyChain, need_marking: bool) -> Result<Chip, CliError> {
        let bits = chain.params().signature_bits();
        let response = match (&self.response, self.response_seed) {
            (Some(hex), _) => Signature::from_hex(hex)?,
            (None, Some(seed)) => generate_population(1, bits, seed)?.remove(0),
            (None, None) => return Err(usage("pass --response <hex> or --response-seed <seed>")),
        };
        if response.len() != bits {
            return Err(usage(format!(
                "response has {} bits, the state expects {bits}",
                response.len()
            )));
        }
        let marking = match &self.marking {
            Some(m) => m.clone(),
            None if need_marking => return Err(usage("--marking is required for this command")),
            None => "unmarked".to_string(),
        };
        Ok(Chip::new(marking, response)?)
    }
}

fn init(path: &Path, config: &Path, force: bool) -> CliResult {
    let text = fs::read_to_string(config)
        .map_err(|e| usage(format!("cannot read {}: {e}", config.display())))?;
    let cfg: ChainConfig = toml::from_str(&text)
        .map_err(|e| usage(format!("config {}: {}", config.display(), e.message())))?;
    let chain = SupplyChain::new(&cfg)?;
    let _lock = StateLock::acquire(path)?;
    if path.exists() && !force {
        return Err(usage(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    state::save(path, &chain)?;
    let p = chain.params();
    let tree = chain.tree();
    println!(
        "m={} k={} levels={} u={} N={} th={} locations={}",
        p.m,
        p.k,
        tree.levels(),
        tree.node_count(),
        p.blocks,
        p.threshold,
        chain.locations().join(",")
    );
    Ok(EXIT_OK)
}

fn detect(path: &Path, check: Check, args: &ChipArgs, legs: &[String], expand: bool) -> CliResult {
    let _lock = StateLock::acquire(path)?;
    let chain = state::load(path)?;
    let kind = match check {
        Check::Theft => ProbeKind::Theft,
        Check::Clone => ProbeKind::Clone,
        Check::Remarked => ProbeKind::Remarked,
        Check::Recycled => ProbeKind::Recycled,
    };
    if !legs.is_empty() && kind != ProbeKind::Theft {
        return Err(usage("--leg only applies to the theft check"));
    }
    if legs.is_empty() && kind == ProbeKind::Theft {
        return Err(usage(
            "the theft check needs at least one --leg location:start:end",
        ));
    }
    let chip = args.resolve(
        &chain,
        matches!(kind, ProbeKind::Clone | ProbeKind::Remarked),
    )?;
    let legs = legs
        .iter()
        .map(|word| {
            let spec = parse_leg(word).map_err(usage)?;
            let mut range = DayRange::new(spec.start, spec.end)?;
            if expand {
                range = chain.tree().expand(range)?;
            }
            Ok(chain.leg(&spec.location, range)?)
        })
        .collect::<Result<Vec<TrajectoryLeg>, CliError>>()?;
    let (verdict, evidence) = run_probe(&chain, kind, &chip, &legs)?;
    let counterfeit = is_counterfeit(&verdict);
    println!(
        "{}",
        json!({
            "check": kind, "marking": chip.marking, "verdict": verdict,
            "counterfeit": counterfeit, "evidence": evidence,
        })
    );
    eprintln!("{}: {verdict}", chip.marking);
    Ok(if counterfeit {
        EXIT_COUNTERFEIT
    } else {
        EXIT_OK
    })
}

fn is_counterfeit(verdict: &str) -> bool {
    !matches!(
        verdict,
        "NotStolen" | "AuthenticAtOem" | "ConsistentMarking" | "NotRecycled" | "Genuine"
    )
}

fn cover(days: u64, granularity: u64, range: &str, expand: bool) -> CliResult {
    let tree = TimeTree::new(days, granularity)?;
    let (start, end) = range
        .split_once(':')
        .and_then(|(s, e)| Some((s.parse().ok()?, e.parse().ok()?)))
        .ok_or_else(|| usage(format!("range `{range}` must be start:end")))?;
    let range = DayRange::new(start, end)?;
    let nodes = if expand {
        tree.canonical_cover_expanded(range)?
    } else {
        tree.canonical_cover(range)?
    };
    let parts = nodes
        .into_iter()
        .map(|i| tree.interval_of(i).map(|iv| iv.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{}", parts.join(", "));
    Ok(EXIT_OK)
}

fn scenario(cli: &Cli, script: &Path, persist: bool) -> CliResult {
    let text = fs::read_to_string(script)
        .map_err(|e| usage(format!("cannot read {}: {e}", script.display())))?;
    let scenario = Scenario::parse(&text)?;
    let records = if persist {
        let path = state_path(cli)?;
        let _lock = StateLock::acquire(path)?;
        let mut chain = state::load(path)?;
        let records = scenario.run_on(&mut chain)?;
        state::save(path, &chain)?;
        records
    } else {
        scenario.run()?
    };
    for r in &records {
        println!("{}", serde_json::to_string(r)?);
    }
    let failed = records.iter().filter(|r| !r.ok).count();
    eprintln!(
        "{} probes, {} matched expectations, {failed} mismatched",
        records.len(),
        records.len() - failed
    );
    Ok(if failed == 0 {
        EXIT_OK
    } else {
        EXIT_COUNTERFEIT
    })
}
