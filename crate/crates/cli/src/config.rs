//! Flat experiment configuration: one set of flags shared by every
//! subcommand, readable from a key=value file.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{ArgAction, Parser, ValueEnum};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Sweep,
    Tails,
    Sketch,
    Bounds,
    Lsh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Dsbs,
    Bgs,
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Basis,
    Tao,
    DualBch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GaussianArg {
    Direct,
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundKind {
    Nu,
    NuList,
    Interactive,
    Chernoff,
}

/// A list of numbers written either as `a,b,c` or as an inclusive range `start:stop[:step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

fn parse_range(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<f64> = text.split(':').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    let (start, stop, step) = match parts[..] {
        [a, b] => (a, b, 1.0),
        [a, b, s] => (a, b, s),
        _ => return Err(format!("range {text:?} must be start:stop[:step]")),
    };
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err(format!("range {text:?} needs finite bounds and a positive step"));
    }
    let count = ((stop - start) / step + 1e-9).floor();
    if !(0.0..=1e7).contains(&count) {
        return Err(format!("range {text:?} is empty or too long"));
    }
    Ok((0..=count as u64).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

impl FromStr for List<f64> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.contains(':') {
            return parse_range(s).map(List);
        }
        s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>().map(List)
    }
}

impl FromStr for List<u32> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.contains(':') {
            return parse_range(s)?
                .into_iter()
                .map(|x| if x >= 0.0 && x.fract() == 0.0 && x <= f64::from(u32::MAX) { Ok(x as u32) } else { Err(format!("{x} is not a valid integer")) })
                .collect::<Result<_, _>>()
                .map(List);
        }
        s.split(',').map(|p| p.trim().parse::<u32>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>().map(List)
    }
}

impl FromStr for List<FamilyArg> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',').map(|p| FamilyArg::from_str(p.trim(), true)).collect::<Result<_, _>>().map(List)
    }
}

/// Every parameter of every subcommand. Unused fields are ignored.
#[derive(Parser, Debug, Clone, PartialEq)]
#[command(name = "crgen", version, about = "Common randomness generation experiments", args_override_self = true, allow_negative_numbers = true)]
pub struct ExperimentConfig {
    /// What to run.
    #[arg(value_enum)]
    pub command: Option<Command>,

    /// Read key=value defaults from this file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Correlated source; defaults to dsbs for binary codebooks and bgs otherwise.
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
    /// Block length of the DSBS sums behind the derived Gaussian source.
    #[arg(long, default_value_t = 64)]
    pub clt_block: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Slack δ in φ = ρ + δ√(1−ρ²).
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub zero_comm: bool,
    #[arg(long, value_enum, default_value_t = FamilyArg::Basis)]
    pub codebook: FamilyArg,
    /// Key length; for bounds, the block length.
    #[arg(long)]
    pub k: Option<u32>,
    /// Prime of the character codebook.
    #[arg(long, default_value_t = 13)]
    pub p: u64,
    /// Degree parameter of the character and dual-BCH codebooks.
    #[arg(long, default_value_t = 2)]
    pub d: u32,
    /// Field degree of the dual-BCH codebook; chosen from k when omitted.
    #[arg(long)]
    pub m: Option<u32>,
    /// Subset factor of the dual-BCH codebook.
    #[arg(long, default_value_t = 4.0)]
    pub gamma: f64,
    /// Override the number of color bits c.
    #[arg(long)]
    pub colors: Option<u32>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Run even when fewer than a handful of agreements are expected.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub allow_rare: bool,

    /// Write results here instead of stdout; a manifest goes next to it.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write per-trial outcomes as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,

    /// Sweep: key lengths.
    #[arg(long)]
    pub ks: Option<List<u32>>,
    /// Sweep: source correlations.
    #[arg(long)]
    pub rhos: Option<List<f64>>,
    /// Sweep: slacks δ.
    #[arg(long)]
    pub deltas: Option<List<f64>>,
    /// Sweep: codebook families.
    #[arg(long)]
    pub families: Option<List<FamilyArg>>,

    /// Tails: grid of thresholds.
    #[arg(long)]
    pub grid_t: Option<List<f64>>,
    /// Tails: ratio φ of Bob's threshold to Alice's.
    #[arg(long)]
    pub phi: Option<f64>,

    /// Sketch: file holding u and v, one whitespace-separated vector per line.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Sketch: dimension of generated instances.
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Sketch: inner products of generated instances.
    #[arg(long)]
    pub inner: Option<List<f64>>,
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    #[arg(long, default_value_t = -0.5)]
    pub s: f64,
    /// Sketch: allowed error probability.
    #[arg(long, default_value_t = 0.1)]
    pub error_budget: f64,
    /// Sketch: constant C in the repetition count.
    #[arg(long, default_value_t = 8.0)]
    pub constant: f64,
    #[arg(long, value_enum, default_value_t = GaussianArg::Direct)]
    pub gaussian: GaussianArg,
    /// Sketch: generated instances per inner product.
    #[arg(long, default_value_t = 200)]
    pub instances: u32,

    /// Bounds: which evaluator.
    #[arg(long, value_enum)]
    pub bound: Option<BoundKind>,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub nu: bool,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub nu_list: bool,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub interactive: bool,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub chernoff: bool,
    #[arg(long)]
    pub eps: Option<List<f64>>,
    #[arg(long)]
    pub eps_prime: Option<List<f64>>,
    #[arg(long)]
    pub alpha: Option<List<f64>>,
    /// Bounds: list size.
    #[arg(long, default_value_t = 1)]
    pub list_size: u64,
    /// Bounds: target agreement probability.
    #[arg(long, default_value_t = 1.0)]
    pub agreement: f64,
    /// Bounds: additive slack reported with the interactive bound.
    #[arg(long, default_value_t = 0.0)]
    pub slack: f64,

    /// LSH: grid of correlations for the exponent table.
    #[arg(long)]
    pub grid_rho: Option<List<f64>>,
    /// LSH: collision probability of near pairs.
    #[arg(long)]
    pub p1: Option<f64>,
    /// LSH: collision probability of far pairs.
    #[arg(long)]
    pub p2: Option<f64>,
}

/// Keys left out of the digest because they do not change results.
const UNDIGESTED: [&str; 5] = ["config", "output", "trace", "workers", "format"];

fn value_name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    /// Parse from an argv (program name first), merging any `--config` file.
    pub fn from_argv(argv: &[String]) -> Result<Self, CliError> {
        let config_path = find_config(argv);
        let mut tokens = vec![argv.first().cloned().unwrap_or_else(|| "crgen".into())];
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
            let has_command = argv.iter().skip(1).any(|a| Command::from_str(a, false).is_ok());
            tokens.extend(kv_tokens(&text, !has_command)?);
        }
        tokens.extend(argv.iter().skip(1).cloned());
        ExperimentConfig::try_parse_from(tokens).map_err(CliError::Clap)
    }

    /// Parse a key=value document on its own.
    pub fn from_kv(text: &str) -> Result<Self, CliError> {
        let mut tokens = vec!["crgen".to_string()];
        tokens.extend(kv_tokens(text, true)?);
        ExperimentConfig::try_parse_from(tokens).map_err(CliError::Clap)
    }

    /// Canonical key=value form, one line per explicitly representable field.
    pub fn to_kv(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = Vec::new();
        macro_rules! opt {
            ($key:literal, $v:expr) => {
                if let Some(v) = &$v {
                    out.push(($key, v.to_string()));
                }
            };
        }
        macro_rules! val {
            ($key:literal, $v:expr) => {
                out.push(($key, $v.to_string()));
            };
        }
        macro_rules! en {
            ($key:literal, $v:expr) => {
                out.push(($key, value_name(&$v)));
            };
        }
        if let Some(c) = &self.command {
            en!("command", *c);
        }
        if let Some(p) = &self.config {
            out.push(("config", p.display().to_string()));
        }
        if let Some(s) = &self.source {
            en!("source", *s);
        }
        val!("clt-block", self.clt_block);
        val!("rho", self.rho);
        val!("delta", self.delta);
        val!("zero-comm", self.zero_comm);
        en!("codebook", self.codebook);
        opt!("k", self.k);
        val!("p", self.p);
        val!("d", self.d);
        opt!("m", self.m);
        val!("gamma", self.gamma);
        opt!("colors", self.colors);
        val!("trials", self.trials);
        val!("seed", self.seed);
        val!("workers", self.workers);
        val!("allow-rare", self.allow_rare);
        if let Some(p) = &self.output {
            out.push(("output", p.display().to_string()));
        }
        if let Some(f) = &self.format {
            en!("format", *f);
        }
        if let Some(p) = &self.trace {
            out.push(("trace", p.display().to_string()));
        }
        opt!("ks", self.ks);
        opt!("rhos", self.rhos);
        opt!("deltas", self.deltas);
        if let Some(f) = &self.families {
            out.push(("families", f.0.iter().map(value_name).collect::<Vec<_>>().join(",")));
        }
        opt!("grid-t", self.grid_t);
        opt!("phi", self.phi);
        if let Some(p) = &self.vectors {
            out.push(("vectors", p.display().to_string()));
        }
        val!("dim", self.dim);
        opt!("inner", self.inner);
        val!("r", self.r);
        val!("s", self.s);
        val!("error-budget", self.error_budget);
        val!("constant", self.constant);
        en!("gaussian", self.gaussian);
        val!("instances", self.instances);
        if let Some(b) = &self.bound {
            en!("bound", *b);
        }
        val!("nu", self.nu);
        val!("nu-list", self.nu_list);
        val!("interactive", self.interactive);
        val!("chernoff", self.chernoff);
        opt!("eps", self.eps);
        opt!("eps-prime", self.eps_prime);
        opt!("alpha", self.alpha);
        val!("list-size", self.list_size);
        val!("agreement", self.agreement);
        val!("slack", self.slack);
        opt!("grid-rho", self.grid_rho);
        opt!("p1", self.p1);
        opt!("p2", self.p2);
        out
    }

    /// SHA-256 of the canonical form without the fields that cannot change results.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.pairs() {
            if !UNDIGESTED.contains(&k) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// The bounds evaluator selected by `--bound` or one of the shorthand flags.
    pub fn bound_kind(&self) -> Option<BoundKind> {
        self.bound.or(if self.nu {
            Some(BoundKind::Nu)
        } else if self.nu_list {
            Some(BoundKind::NuList)
        } else if self.interactive {
            Some(BoundKind::Interactive)
        } else if self.chernoff {
            Some(BoundKind::Chernoff)
        } else {
            None
        })
    }
}

fn find_config(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = a.strip_prefix("--config=") {
            return Some(rest.to_string());
        }
    }
    None
}

/// Turns `key=value` lines into `--key=value` flags. Blank lines and `#`
/// comments are skipped; `command` becomes the positional argument.
fn kv_tokens(text: &str, keep_command: bool) -> Result<Vec<String>, CliError> {
    let mut command = None;
    let mut flags = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value, got {line:?}", no + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "command" => command = Some(value.to_string()),
            "config" => {}
            _ => flags.push(format!("--{key}={value}")),
        }
    }
    let mut out = Vec::new();
    if keep_command {
        out.extend(command);
    }
    out.extend(flags);
    Ok(out)
}
