//! Subcommand bodies.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crgen_core::bounds::{chernoff_achievability, interactive_lb, lsh_exponents, nu_correlated, nu_list, rho_bar, CrBoundQuery};
use crgen_core::codebooks::{balanced_coloring, basis_codebook, dual_bch_codebook, dual_bch_with_key_bits, tao_codebook, tao_with_key_bits, Codebook};
use crgen_core::cr_scheme::{derive_params, SchemeParams};
use crgen_core::estimator::{collect_outcomes, exponent_slope_of, predicted_agreement, run_trials, AgreementKind, EstimateReport, TrialPlan};
use crgen_core::gaussian_tails::{mills_ratio, orthant_probability, q_tail};
use crgen_core::gip_sketch::{solve_gip, unit_pair_with_inner, Decision, GaussianMode, GipConfig, GipInstance};
use crgen_core::rng::subseed;
use crgen_core::{CorrelationSource, Error};

use crate::config::{BoundKind, Command, ExperimentConfig, FamilyArg, Format, GaussianArg, List, SourceArg};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn execute(cfg: &ExperimentConfig) -> Result<()> {
    let command = cfg.command.ok_or_else(|| CliError::Usage("missing subcommand: simulate, sweep, tails, sketch, bounds or lsh".into()))?;
    let mut out = Output::open(cfg)?;
    match command {
        Command::Simulate => simulate(cfg, &mut out)?,
        Command::Sweep => sweep(cfg, &mut out)?,
        Command::Tails => tails(cfg, &mut out)?,
        Command::Sketch => sketch_cmd(cfg, &mut out)?,
        Command::Bounds => bounds_cmd(cfg, &mut out)?,
        Command::Lsh => lsh(cfg, &mut out)?,
    }
    out.finish()?;
    if let Some(path) = &cfg.output {
        let mut manifest = path.as_os_str().to_owned();
        manifest.push(".cfg");
        std::fs::write(manifest, format!("# digest {}\n{}", cfg.digest(), cfg.to_kv()))?;
    }
    Ok(())
}

/// Destination for rows: CSV with a header, or one JSON object per line.
struct Output {
    sink: Box<dyn Write>,
    csv: Option<csv::Writer<Vec<u8>>>,
}

impl Output {
    fn open(cfg: &ExperimentConfig) -> Result<Self> {
        let sink: Box<dyn Write> = match &cfg.output {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(std::io::stdout().lock()),
        };
        Ok(Output { sink, csv: None })
    }

    fn row<T: Serialize>(&mut self, format: Format, row: &T) -> Result<()> {
        match format {
            Format::Csv => self.csv.get_or_insert_with(|| csv::Writer::from_writer(Vec::new())).serialize(row)?,
            Format::Json => {
                serde_json::to_writer(&mut self.sink, row)?;
                self.sink.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.sink, "{text}")?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        if let Some(w) = self.csv.take() {
            let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
            self.sink.write_all(&bytes)?;
        }
        self.sink.flush()?;
        Ok(())
    }
}

fn workers(cfg: &ExperimentConfig) -> usize {
    if cfg.workers > 0 {
        cfg.workers
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

/// Field degree for a dual-BCH codebook with at least `k` key bits.
pub fn dual_bch_degree_for(k: u32, d: u32, gamma: f64) -> Result<u32> {
    (2..=31)
        .take_while(|&m| u64::from(d) * u64::from(m) <= 62)
        .find(|&m| {
            let n = ((1u64 << m) - 1) as f64;
            (f64::from(d * m) - (gamma * n).log2()).floor() >= f64::from(k)
        })
        .ok_or_else(|| CliError::Core(Error::Domain(format!("no dual-BCH field reaches {k} key bits with d = {d}"))))
}

fn build_codebook(cfg: &ExperimentConfig, family: FamilyArg, k: Option<u32>) -> Result<Codebook> {
    let cb = match (family, k) {
        (FamilyArg::Basis, Some(k)) => basis_codebook(k)?,
        (FamilyArg::Basis, None) => return Err(CliError::Usage("the basis codebook needs --k".into())),
        (FamilyArg::Tao, Some(k)) => tao_with_key_bits(cfg.p, cfg.d, k)?,
        (FamilyArg::Tao, None) => tao_codebook(cfg.p, cfg.d)?,
        (FamilyArg::DualBch, Some(k)) => {
            let m = match cfg.m {
                Some(m) => m,
                None => dual_bch_degree_for(k, cfg.d, cfg.gamma)?,
            };
            dual_bch_with_key_bits(m, cfg.d, k)?
        }
        (FamilyArg::DualBch, None) => {
            let m = cfg.m.ok_or_else(|| CliError::Usage("the dual-bch codebook needs --k or --m".into()))?;
            dual_bch_codebook(m, cfg.d, cfg.gamma)?
        }
    };
    Ok(cb)
}

fn build_source(cfg: &ExperimentConfig, codebook: &Codebook, rho: f64) -> Result<CorrelationSource> {
    let kind = cfg.source.unwrap_or(if codebook.is_binary() { SourceArg::Dsbs } else { SourceArg::Bgs });
    let src = match kind {
        SourceArg::Dsbs => CorrelationSource::dsbs(rho)?,
        SourceArg::Bgs => CorrelationSource::bgs(rho)?,
        SourceArg::Derived => CorrelationSource::derived_gaussian(rho, cfg.clt_block)?,
    };
    Ok(src)
}

struct Experiment {
    params: SchemeParams,
    report: EstimateReport,
    predicted: f64,
    source: CorrelationSource,
}

fn run_point(cfg: &ExperimentConfig, family: FamilyArg, k: Option<u32>, rho: f64, delta: f64, trace: Option<&Path>) -> Result<Experiment> {
    let codebook = build_codebook(cfg, family, k)?;
    let source = build_source(cfg, &codebook, rho)?;
    let mut params = derive_params(&codebook, rho, delta, cfg.zero_comm)?;
    if let Some(c) = cfg.colors {
        params = params.with_c(c)?;
    }
    let coloring = balanced_coloring(codebook.size(), params.c, subseed(cfg.seed, "coloring"))?;
    let plan = TrialPlan::new(cfg.trials, cfg.seed).workers(workers(cfg)).allow_rare(cfg.allow_rare);
    log::info!("{family:?} k={} n={} rho={rho} delta={delta} c={}", codebook.key_bits(), codebook.n(), params.c);
    let report = run_trials(&params, &codebook, &coloring, &source, &plan)?;
    if let Some(path) = trace {
        let mut w = BufWriter::new(File::create(path)?);
        for outcome in collect_outcomes(&params, &codebook, &coloring, &source, &plan)? {
            serde_json::to_writer(&mut w, &outcome)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(Experiment { predicted: predicted_agreement(&params, &source), params, report, source })
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    digest: String,
    source: &'a CorrelationSource,
    params: &'a SchemeParams,
    predicted_agreement: f64,
    report: &'a EstimateReport,
}

fn simulate(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let exp = run_point(cfg, cfg.codebook, cfg.k, cfg.rho, cfg.delta, cfg.trace.as_deref())?;
    match cfg.format.unwrap_or(Format::Json) {
        Format::Json => out.row(
            Format::Json,
            &SimulateReport { digest: cfg.digest(), source: &exp.source, params: &exp.params, predicted_agreement: exp.predicted, report: &exp.report },
        ),
        Format::Csv => out.row(Format::Csv, &SweepRow::new(cfg, cfg.codebook, &exp)),
    }
}

#[derive(Serialize)]
struct SweepRow {
    family: String,
    source: String,
    k: u32,
    key_bits: u32,
    n: usize,
    rho: f64,
    delta: f64,
    phi: f64,
    t: f64,
    c: u32,
    comm_bits: u32,
    trials: u64,
    successes: u64,
    agreement: f64,
    ci_low: f64,
    ci_high: f64,
    codeword_agreement: f64,
    predicted_agreement: f64,
    max_output_freq: Option<f64>,
    wallclock_secs: f64,
    run_digest: String,
    digest: String,
}

impl SweepRow {
    fn new(cfg: &ExperimentConfig, family: FamilyArg, exp: &Experiment) -> Self {
        let (p, r) = (&exp.params, &exp.report);
        SweepRow {
            family: config_name(family),
            source: serde_json::to_value(exp.source.kind()).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            k: p.k,
            key_bits: p.key_bits,
            n: p.n,
            rho: p.rho,
            delta: p.delta,
            phi: p.phi,
            t: p.t,
            c: p.c,
            comm_bits: r.comm_bits,
            trials: r.trials,
            successes: r.successes,
            agreement: r.agreement,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            codeword_agreement: r.codeword_agreement,
            predicted_agreement: exp.predicted,
            max_output_freq: r.max_output_freq,
            wallclock_secs: r.wallclock_secs,
            run_digest: r.config_digest.clone(),
            digest: cfg.digest(),
        }
    }
}

fn config_name(family: FamilyArg) -> String {
    clap::ValueEnum::to_possible_value(&family).map(|v| v.get_name().to_string()).unwrap_or_default()
}

fn sweep(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    if cfg.trace.is_some() {
        return Err(CliError::Usage("trace output is only available for simulate".into()));
    }
    let families = cfg.families.clone().unwrap_or(List(vec![cfg.codebook])).0;
    let ks: Vec<Option<u32>> = match (&cfg.ks, cfg.k) {
        (Some(ks), _) => ks.0.iter().copied().map(Some).collect(),
        (None, k) => vec![k],
    };
    let rhos = cfg.rhos.clone().unwrap_or(List(vec![cfg.rho])).0;
    let deltas = cfg.deltas.clone().unwrap_or(List(vec![cfg.delta])).0;
    let format = cfg.format.unwrap_or(Format::Csv);
    for &family in &families {
        for &rho in &rhos {
            for &delta in &deltas {
                let mut reports = Vec::with_capacity(ks.len());
                for &k in &ks {
                    let exp = run_point(cfg, family, k, rho, delta, None)?;
                    out.row(format, &SweepRow::new(cfg, family, &exp))?;
                    reports.push(exp.report);
                }
                if reports.len() >= 4 {
                    for kind in [AgreementKind::Total, AgreementKind::Codeword] {
                        match exponent_slope_of(&reports, kind) {
                            Ok(fit) => log::info!("{family:?} rho={rho} delta={delta} {kind:?} slope {:.4} ± {:.4}", fit.slope, fit.stderr),
                            Err(e) => log::warn!("{family:?} rho={rho} delta={delta} {kind:?} slope unavailable: {e}"),
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TailRow {
    t: f64,
    q: f64,
    lambda: f64,
    l: f64,
    digest: String,
}

fn tails(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let grid = cfg.grid_t.as_ref().ok_or_else(|| CliError::Usage("tails needs --grid-t".into()))?;
    let phi = cfg.phi.unwrap_or(cfg.rho + cfg.delta * (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt());
    let digest = cfg.digest();
    let format = cfg.format.unwrap_or(Format::Csv);
    for &t in &grid.0 {
        let row = TailRow { t, q: q_tail(t)?, lambda: mills_ratio(t)?, l: orthant_probability(t, phi, cfg.rho)?, digest: digest.clone() };
        out.row(format, &row)?;
    }
    Ok(())
}

fn read_vectors(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#')).map(|l| {
        l.split_whitespace()
            .map(|x| x.parse::<f64>().map_err(|e| CliError::Usage(format!("{}: bad number {x:?}: {e}", path.display()))))
            .collect::<Result<Vec<f64>>>()
    });
    let (Some(u), Some(v), None) = (rows.next(), rows.next(), rows.next()) else {
        return Err(CliError::Usage(format!("{}: expected exactly two vectors, one per line", path.display())));
    };
    Ok((u?, v?))
}

#[derive(Serialize)]
struct SketchReport {
    decision: Decision,
    inner_product: f64,
    t: usize,
    bits_communicated: usize,
    gamma: f64,
    distance_fraction: f64,
    threshold: f64,
    flipped: bool,
    digest: String,
}

#[derive(Serialize)]
struct SketchBatchRow {
    inner_product: f64,
    expected: Option<Decision>,
    instances: u32,
    yes: u32,
    correct_fraction: Option<f64>,
    t: usize,
    bits_communicated: usize,
    mean_distance_fraction: f64,
    threshold: f64,
    digest: String,
}

fn sketch_cmd(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let gaussian = match cfg.gaussian {
        GaussianArg::Direct => GaussianMode::Direct,
        GaussianArg::Derived => GaussianMode::Derived { block: cfg.clt_block },
    };
    let gip = GipConfig { constant: cfg.constant, gaussian };
    let digest = cfg.digest();
    let format = cfg.format.unwrap_or(Format::Json);
    if let Some(path) = &cfg.vectors {
        let (u, v) = read_vectors(path)?;
        let normalize = |w: Vec<f64>| {
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            w.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
        };
        let inst = GipInstance::new(normalize(u), normalize(v), cfg.r, cfg.s, cfg.error_budget)?;
        let o = solve_gip(&inst, cfg.rho, cfg.seed, &gip)?;
        return out.row(
            format,
            &SketchReport {
                decision: o.decision,
                inner_product: inst.inner_product(),
                t: o.t,
                bits_communicated: o.bits_communicated,
                gamma: o.gamma,
                distance_fraction: o.distance_fraction,
                threshold: o.threshold,
                flipped: o.flipped,
                digest,
            },
        );
    }
    let inners = cfg.inner.clone().unwrap_or(List(vec![cfg.r, cfg.s])).0;
    for (j, &ip) in inners.iter().enumerate() {
        let expected = if ip >= cfg.r {
            Some(Decision::Yes)
        } else if ip <= cfg.s {
            Some(Decision::No)
        } else {
            None
        };
        let (mut yes, mut dist, mut t, mut bits, mut threshold) = (0u32, 0.0, 0, 0, 0.0);
        for i in 0..cfg.instances {
            let seed = subseed(cfg.seed, &format!("sketch-{j}-{i}"));
            let (u, v) = unit_pair_with_inner(cfg.dim, ip, seed)?;
            let inst = GipInstance::new(u, v, cfg.r, cfg.s, cfg.error_budget)?;
            let o = solve_gip(&inst, cfg.rho, seed, &gip)?;
            yes += u32::from(o.decision == Decision::Yes);
            dist += o.distance_fraction;
            (t, bits, threshold) = (o.t, o.bits_communicated, o.threshold);
        }
        let n = f64::from(cfg.instances.max(1));
        let correct = expected.map(|e| f64::from(if e == Decision::Yes { yes } else { cfg.instances - yes }) / n);
        out.row(
            format,
            &SketchBatchRow {
                inner_product: ip,
                expected,
                instances: cfg.instances,
                yes,
                correct_fraction: correct,
                t,
                bits_communicated: bits,
                mean_distance_fraction: dist / n,
                threshold,
                digest: digest.clone(),
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundRow {
    bound: &'static str,
    eps: f64,
    eps_prime: f64,
    alpha: f64,
    k: u64,
    value: Option<f64>,
    status: String,
    digest: String,
}

fn bound_value(cfg: &ExperimentConfig, kind: BoundKind, eps: f64, eps_prime: f64, alpha: f64, k: u64) -> crgen_core::Result<f64> {
    match kind {
        BoundKind::Nu => {
            let mut q = CrBoundQuery::new(eps, eps_prime, alpha, k)?;
            q.gamma_target = cfg.agreement;
            q.list_size = cfg.list_size;
            nu_correlated(&q)
        }
        BoundKind::NuList => nu_list(eps, k, cfg.list_size),
        BoundKind::Interactive => interactive_lb(eps, k, cfg.list_size, cfg.agreement, cfg.slack),
        BoundKind::Chernoff => chernoff_achievability(eps_prime, cfg.delta, k),
    }
}

fn bounds_cmd(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let kind = cfg.bound_kind().ok_or_else(|| CliError::Usage("bounds needs one of --nu, --nu-list, --interactive, --chernoff".into()))?;
    let k = u64::from(cfg.k.ok_or_else(|| CliError::Usage("bounds needs --k".into()))?);
    let pick = |l: &Option<List<f64>>, default: f64| l.clone().map_or(vec![default], |l| l.0);
    let eps = pick(&cfg.eps, 0.25);
    let eps_prime = pick(&cfg.eps_prime, 0.01);
    let alpha = pick(&cfg.alpha, 1.0);
    if eps.len() * eps_prime.len() * alpha.len() == 1 && cfg.format.is_none() {
        let value = bound_value(cfg, kind, eps[0], eps_prime[0], alpha[0], k)?;
        return out.line(&value.to_string());
    }
    let name = match kind {
        BoundKind::Nu => "nu",
        BoundKind::NuList => "nu-list",
        BoundKind::Interactive => "interactive",
        BoundKind::Chernoff => "chernoff",
    };
    let digest = cfg.digest();
    let format = cfg.format.unwrap_or(Format::Csv);
    for &e in &eps {
        for &ep in &eps_prime {
            for &a in &alpha {
                let (value, status) = match bound_value(cfg, kind, e, ep, a, k) {
                    Ok(v) => (Some(v), "ok".to_string()),
                    Err(Error::OutOfRegime(_)) => (None, "out-of-regime".to_string()),
                    Err(err) => return Err(err.into()),
                };
                out.row(format, &BoundRow { bound: name, eps: e, eps_prime: ep, alpha: a, k, value, status, digest: digest.clone() })?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct LshRow {
    rho: f64,
    f0: f64,
    fcr: f64,
    ratio: f64,
    digest: String,
}

#[derive(Serialize)]
struct RhoBarRow {
    p1: f64,
    p2: f64,
    rho_bar: f64,
    digest: String,
}

fn lsh(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let digest = cfg.digest();
    let format = cfg.format.unwrap_or(Format::Csv);
    match (cfg.p1, cfg.p2, &cfg.grid_rho) {
        (Some(p1), Some(p2), _) => out.row(format, &RhoBarRow { p1, p2, rho_bar: rho_bar(p1, p2)?, digest }),
        (None, None, Some(grid)) => {
            for &rho in &grid.0 {
                let (f0, fcr) = lsh_exponents(rho)?;
                out.row(format, &LshRow { rho, f0, fcr, ratio: f0 / fcr, digest: digest.clone() })?;
            }
            Ok(())
        }
        _ => Err(CliError::Usage("lsh needs --grid-rho, or both --p1 and --p2".into())),
    }
}
