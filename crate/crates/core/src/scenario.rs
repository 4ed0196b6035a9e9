//! Line-oriented scenario scripts for end-to-end supply-chain runs.
//!
//! ```text
//! # comment
//! config capacity=1000 days=128 granularity=16 blocks=16 block_bits=16 locations=oem,dist
//! chip c1 MARK-0001 seed:1
//! chip c1-clone MARK-0001 seed:99
//! chip c1-noisy MARK-0001 @c1 noise=clustered:2:16 noise_seed=7
//! observe c1 oem 3
//! sell c1
//! probe theft c1 oem:1:16 dist:17:32 expect=NotStolen
//! probe clone c1-clone expect=ClonedOrOverproduced
//! ```
//!
//! Responses are `hex:<digits>`, `seed:<u64>` (a generated signature) or
//! `@<chip>` (another chip's response). `config` takes the keys of
//! [`ChainConfig`]; `fp` and `threshold` are optional. Probe kinds are
//! `theft`, `clone`, `remarked`, `recycled` and `classify`; the last two
//! legs-taking kinds accept `location:start:end` legs. `expect=` is optional.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::eval::{apply_noise, generate_population, NoiseModel};
use crate::signature::Signature;
use crate::supply_chain::{ChainConfig, Chip, SupplyChain, TrajectoryLeg};
use crate::temporal::DayRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Theft,
    Clone,
    Remarked,
    Recycled,
    Classify,
}

impl ProbeKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "theft" => Self::Theft,
            "clone" => Self::Clone,
            "remarked" => Self::Remarked,
            "recycled" => Self::Recycled,
            "classify" => Self::Classify,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ResponseSpec {
    Hex(Signature),
    Seed(u64),
    Copy(String),
}

#[derive(Debug, Clone, PartialEq)]
struct ChipSpec {
    id: String,
    marking: String,
    response: ResponseSpec,
    noise: Option<(NoiseModel, u64)>,
}

/// An unvalidated `location:start:end` leg.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegSpec {
    pub location: String,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum Statement {
    Config(ChainConfig),
    Chip(ChipSpec),
    Observe {
        chip: String,
        location: String,
        day: u64,
    },
    Sell {
        chip: String,
    },
    Probe {
        kind: ProbeKind,
        chip: String,
        legs: Vec<LegSpec>,
        expect: Option<String>,
    },
}

/// Outcome of one probe line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRecord {
    pub line: usize,
    pub probe: ProbeKind,
    pub chip: String,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    /// False only when an expectation was given and not met.
    pub ok: bool,
    pub evidence: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    statements: Vec<(usize, Statement)>,
}

fn line_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("line {line}: {msg}"))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut statements = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let stmt = parse_statement(&words).map_err(|e| line_err(line, e))?;
            statements.push((line, stmt));
        }
        Ok(Self { statements })
    }

    /// Whether the script carries its own `config` line.
    pub fn has_config(&self) -> bool {
        self.statements
            .iter()
            .any(|(_, s)| matches!(s, Statement::Config(_)))
    }

    /// Runs against a fresh chain built from the script's `config` line.
    pub fn run(&self) -> Result<Vec<ProbeRecord>> {
        let cfg = self.statements.iter().find_map(|(_, s)| match s {
            Statement::Config(cfg) => Some(cfg),
            _ => None,
        });
        match cfg {
            Some(cfg) => self.run_on(&mut SupplyChain::new(cfg)?),
            None => invalid("scenario has no config line"),
        }
    }

    /// Runs against an existing chain; `config` lines are ignored.
    pub fn run_on(&self, chain: &mut SupplyChain) -> Result<Vec<ProbeRecord>> {
        let bits = chain.params().signature_bits();
        let mut chips: HashMap<String, Chip> = HashMap::new();
        let mut records = Vec::new();
        let lookup = |chips: &HashMap<String, Chip>, id: &str, line: usize| {
            chips
                .get(id)
                .cloned()
                .ok_or_else(|| line_err(line, format!("unknown chip `{id}`")))
        };
        for (line, stmt) in &self.statements {
            let line = *line;
            let at = |e: Error| line_err(line, e);
            match stmt {
                Statement::Config(_) => {}
                Statement::Chip(spec) => {
                    let mut response = match &spec.response {
                        ResponseSpec::Hex(s) => s.clone(),
                        ResponseSpec::Seed(seed) => {
                            generate_population(1, bits, *seed).map_err(at)?.remove(0)
                        }
                        ResponseSpec::Copy(other) => lookup(&chips, other, line)?.response,
                    };
                    if let Some((model, seed)) = &spec.noise {
                        response = apply_noise(&response, model, *seed).map_err(at)?;
                    }
                    let chip = Chip::new(spec.marking.clone(), response).map_err(at)?;
                    chips.insert(spec.id.clone(), chip);
                }
                Statement::Observe {
                    chip,
                    location,
                    day,
                } => {
                    let c = lookup(&chips, chip, line)?;
                    chain.observe(&c, location, *day).map_err(at)?;
                }
                Statement::Sell { chip } => {
                    let c = lookup(&chips, chip, line)?;
                    chain.mark_sold(&c.response).map_err(at)?;
                }
                Statement::Probe {
                    kind,
                    chip,
                    legs,
                    expect,
                } => {
                    let c = lookup(&chips, chip, line)?;
                    let legs = legs
                        .iter()
                        .map(|l| chain.leg(&l.location, DayRange::new(l.start, l.end)?))
                        .collect::<Result<Vec<TrajectoryLeg>>>()
                        .map_err(at)?;
                    let (verdict, evidence) = run_probe(chain, *kind, &c, &legs).map_err(at)?;
                    let ok = expect.as_ref().is_none_or(|e| *e == verdict);
                    records.push(ProbeRecord {
                        line,
                        probe: *kind,
                        chip: chip.clone(),
                        verdict,
                        expected: expect.clone(),
                        ok,
                        evidence,
                    });
                }
            }
        }
        Ok(records)
    }
}

fn json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("report types serialize")
}

/// Runs one check, returning the verdict name and its evidence.
pub fn run_probe(
    chain: &SupplyChain,
    kind: ProbeKind,
    chip: &Chip,
    legs: &[TrajectoryLeg],
) -> Result<(String, serde_json::Value)> {
    Ok(match kind {
        ProbeKind::Theft => {
            let r = chain.detect_theft(chip, legs)?;
            (format!("{:?}", r.verdict), json(&r.legs))
        }
        ProbeKind::Clone => {
            let r = chain.detect_clone(chip)?;
            (format!("{:?}", r.verdict), json(&r))
        }
        ProbeKind::Remarked => {
            let r = chain.detect_remarked(chip)?;
            (format!("{:?}", r.verdict), json(&r))
        }
        ProbeKind::Recycled => {
            let r = chain.detect_recycled(&chip.response)?;
            (format!("{:?}", r.verdict), json(&r))
        }
        ProbeKind::Classify => {
            let c = chain.classify(chip, legs)?;
            (format!("{c:?}"), serde_json::Value::Null)
        }
    })
}

fn parse_statement(words: &[&str]) -> std::result::Result<Statement, String> {
    let num = |s: &str, what: &str| {
        s.parse::<u64>()
            .map_err(|_| format!("`{s}` is not a valid {what}"))
    };
    match words {
        ["config", pairs @ ..] => parse_config(pairs).map(Statement::Config),
        ["chip", id, marking, response, opts @ ..] => {
            let response = if let Some(h) = response.strip_prefix("hex:") {
                ResponseSpec::Hex(Signature::from_hex(h).map_err(|e| e.to_string())?)
            } else if let Some(s) = response.strip_prefix("seed:") {
                ResponseSpec::Seed(num(s, "seed")?)
            } else if let Some(c) = response.strip_prefix('@') {
                ResponseSpec::Copy(c.to_string())
            } else {
                return Err(format!(
                    "response `{response}` must be hex:, seed: or @chip"
                ));
            };
            let mut model = None;
            let mut seed = 0;
            for opt in opts {
                match opt.split_once('=') {
                    Some(("noise", m)) => {
                        model = Some(m.parse::<NoiseModel>().map_err(|e| e.to_string())?)
                    }
                    Some(("noise_seed", s)) => seed = num(s, "noise seed")?,
                    _ => return Err(format!("unknown chip option `{opt}`")),
                }
            }
            Ok(Statement::Chip(ChipSpec {
                id: id.to_string(),
                marking: marking.to_string(),
                response,
                noise: model.map(|m| (m, seed)),
            }))
        }
        ["observe", chip, location, day] => Ok(Statement::Observe {
            chip: chip.to_string(),
            location: location.to_string(),
            day: num(day, "day")?,
        }),
        ["sell", chip] => Ok(Statement::Sell {
            chip: chip.to_string(),
        }),
        ["probe", kind, chip, rest @ ..] => {
            let kind =
                ProbeKind::parse(kind).ok_or_else(|| format!("unknown probe kind `{kind}`"))?;
            let mut legs = Vec::new();
            let mut expect = None;
            for word in rest {
                if let Some(v) = word.strip_prefix("expect=") {
                    expect = Some(v.to_string());
                } else {
                    legs.push(parse_leg(word)?);
                }
            }
            if !legs.is_empty() && !matches!(kind, ProbeKind::Theft | ProbeKind::Classify) {
                return Err("only theft and classify probes take legs".into());
            }
            Ok(Statement::Probe {
                kind,
                chip: chip.to_string(),
                legs,
                expect,
            })
        }
        _ => Err(format!("cannot parse `{}`", words.join(" "))),
    }
}

/// `location:start:end`.
pub fn parse_leg(word: &str) -> std::result::Result<LegSpec, String> {
    let parts: Vec<&str> = word.split(':').collect();
    match parts.as_slice() {
        [loc, s, e] => Ok(LegSpec {
            location: loc.to_string(),
            start: s
                .parse()
                .map_err(|_| format!("bad leg start in `{word}`"))?,
            end: e.parse().map_err(|_| format!("bad leg end in `{word}`"))?,
        }),
        _ => Err(format!("leg `{word}` must be location:start:end")),
    }
}

fn parse_config(pairs: &[&str]) -> std::result::Result<ChainConfig, String> {
    let mut table = toml::Table::new();
    for pair in pairs {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| format!("config entry `{pair}` must be key=value"))?;
        let value = if key == "locations" {
            toml::Value::Array(
                value
                    .split(',')
                    .map(|l| toml::Value::String(l.into()))
                    .collect(),
            )
        } else if let Ok(i) = value.parse::<i64>() {
            toml::Value::Integer(i)
        } else if let Ok(f) = value.parse::<f64>() {
            toml::Value::Float(f)
        } else {
            return Err(format!(
                "config value `{value}` for `{key}` is not a number"
            ));
        };
        table.insert(key.to_string(), value);
    }
    table
        .try_into()
        .map_err(|e: toml::de::Error| e.message().to_string())
}
