//! `muntzlab`: batch front-end for embedding analyses, constructions and property suites.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use muntzlab_core::constructions::{build_example1, build_example2, verify_example1, verify_example2};
use muntzlab_core::embedding::{
    analyze, compact_support_certificate, essential_norm_trend, hilbert_schmidt_certificate, psi_certificate,
    rho_certificate, sublinear_embedding_bound, Certificate, EmbeddingProblem, EssentialPoint, SpectralReport,
};
use muntzlab_core::geometry::PsiEvaluator;
use muntzlab_core::linalg::Precision;
use muntzlab_core::sequences::{classify, LacunarityReport};
use muntzlab_core::suites::{certificate_battery, inequality_suite, interpolation_suite, SuiteReport};
use muntzlab_core::{Error, LambdaSequence, Measure, ModulusReport, PowerMajorant};
use serde::Serialize;

use config::{CertificateRequest, CertificateSuiteConfig, InequalityConfig, InterpolationConfig, RunConfig};
use output::{write_csv, write_json, Cell};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_VIOLATED: u8 = 2;
const EXIT_CONSTRUCTION_BUG: u8 = 3;

#[derive(Parser)]
#[command(name = "muntzlab", version, about = "Spectral analysis of Muntz-space embedding operators")]
struct Cli {
    /// Directory receiving reports; created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Double,
    Extended,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Double => Precision::Double,
            PrecisionArg::Extended => Precision::Extended,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Inequalities,
    Interpolation,
    Certificates,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum, certificates and essential-norm trend for one (sequence, measure) pair.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Override the truncation.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        precision: Option<PrecisionArg>,
    },
    /// Build and verify one of the two explicit constructions.
    Construct {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=2))]
        example: u8,
        #[arg(long, default_value_t = 8)]
        n_max: usize,
        /// Summability exponent of the second construction.
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        /// Non-summability exponent of the second construction; must be below `q`.
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        /// Fixed constant for the first construction's witness ratio; fitted when absent.
        #[arg(long)]
        c_fit: Option<f64>,
    },
    /// Run a randomized property suite.
    Check {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

const TOOL: Tool = Tool {
    name: "muntzlab",
    version: env!("CARGO_PKG_VERSION"),
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum CertificateStatus {
    Ok,
    HypothesisViolated,
    Error,
}

#[derive(Serialize)]
struct CertificateOutcome {
    request: CertificateRequest,
    status: CertificateStatus,
    certificate: Option<Certificate>,
    error: Option<String>,
    /// `value >= op_norm` for operator-norm certificates; absent otherwise.
    dominates_op_norm: Option<bool>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    tool: Tool,
    config: RunConfig,
    lacunarity: LacunarityReport,
    spectral: SpectralReport,
    certificates: Vec<CertificateOutcome>,
    modulus: Option<ModulusReport>,
    modulus_error: Option<String>,
    essential_trend: Vec<EssentialPoint>,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct ConstructReport<B: Serialize, R: Serialize> {
    tool: Tool,
    example: u8,
    build: B,
    verification: R,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct CheckReport<C: Serialize> {
    tool: Tool,
    config: C,
    report: SuiteReport,
    violations: usize,
    wall_time_s: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::ConstructionBug { .. }) => EXIT_CONSTRUCTION_BUG,
                _ => EXIT_ERROR,
            }
        }
    };
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads()?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    match cli.command {
        Command::Analyze {
            config,
            n,
            seed,
            precision,
        } => {
            let mut cfg: RunConfig = config::load(&config)?;
            if let Some(n) = n {
                cfg.n = Some(n);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = precision {
                cfg.precision = p.into();
            }
            cmd_analyze(cfg, &cli.out)
        }
        Command::Construct {
            example,
            n_max,
            q,
            r,
            c_fit,
        } => cmd_construct(example, n_max, q, r, c_fit, &cli.out),
        Command::Check { suite, config, seed } => cmd_check(suite, config.as_deref(), seed, &cli.out),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("MUNTZLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .with_context(|| format!("MUNTZLAB_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn validate(cfg: &RunConfig) -> Result<(LambdaSequence, Measure, usize)> {
    let seq = cfg.sequence.build().context("field `sequence`")?;
    let mu = cfg.measure.build().context("field `measure`")?;
    let n = cfg.n.unwrap_or(seq.len());
    if n == 0 || n > seq.len() {
        bail!("field `n`: truncation {n} outside 1..={}", seq.len());
    }
    if cfg.q_set.iter().any(|q| !(*q > 0.0 && q.is_finite())) {
        bail!("field `q_set`: exponents must be positive and finite");
    }
    if cfg.m_list.iter().any(|&m| m < 2) || cfg.m_list.windows(2).any(|w| w[1] <= w[0]) {
        bail!("field `m_list`: must be strictly increasing integers >= 2");
    }
    Ok((seq, mu, n))
}

fn certificate_for(req: &CertificateRequest, seq: &LambdaSequence, mu: &Measure) -> muntzlab_core::Result<Certificate> {
    match req {
        CertificateRequest::Psi {} => psi_certificate(&PsiEvaluator::new(seq), mu),
        CertificateRequest::Rho { c, alpha } => {
            rho_certificate(&PsiEvaluator::new(seq), mu, &PowerMajorant::new(*c, *alpha)?)
        }
        CertificateRequest::Sublinear {} => sublinear_embedding_bound(seq, mu),
        CertificateRequest::CompactSupport { b, b_prime, k } => {
            compact_support_certificate(&PsiEvaluator::new(seq), mu, *b, *b_prime, *k)
        }
        CertificateRequest::HilbertSchmidt {} => hilbert_schmidt_certificate(seq, mu),
    }
}

fn cmd_analyze(mut cfg: RunConfig, out: &Path) -> Result<u8> {
    let start = Instant::now();
    let (seq, mu, n) = validate(&cfg)?;
    cfg.n = Some(n);
    let problem = EmbeddingProblem::new(&seq, mu.clone(), n)?;
    let spectral = analyze(&problem, &cfg.q_set, cfg.precision)?;
    let essential_trend = essential_norm_trend(&seq, &mu, n, &cfg.m_list, cfg.precision)?;
    let (modulus, modulus_error) = match mu.modulus_report(None) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let certificates: Vec<CertificateOutcome> = cfg
        .certificates
        .iter()
        .map(|req| match certificate_for(req, &problem.lambda, &mu) {
            Ok(cert) => CertificateOutcome {
                request: req.clone(),
                status: CertificateStatus::Ok,
                dominates_op_norm: cert.comparable().then_some(cert.value >= spectral.op_norm),
                certificate: Some(cert),
                error: None,
            },
            Err(e) => CertificateOutcome {
                request: req.clone(),
                status: if matches!(e, Error::HypothesisViolated(_)) {
                    CertificateStatus::HypothesisViolated
                } else {
                    CertificateStatus::Error
                },
                certificate: None,
                error: Some(e.to_string()),
                dominates_op_norm: None,
            },
        })
        .collect();

    let sv_rows: Vec<Vec<Cell>> = spectral
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, s)| vec![Cell::from(i + 1), Cell::from(*s)])
        .collect();
    write_csv(&out.join("singular_values.csv"), &["index", "singular_value"], &sv_rows)?;
    if !essential_trend.is_empty() {
        let rows: Vec<Vec<Cell>> = essential_trend
            .iter()
            .map(|p| vec![Cell::from(p.m), Cell::from(p.norm)])
            .collect();
        write_csv(&out.join("essential_trend.csv"), &["m", "norm"], &rows)?;
    }

    let code = if certificates.iter().any(|c| c.status == CertificateStatus::Error) {
        EXIT_ERROR
    } else if certificates.iter().any(|c| c.status == CertificateStatus::HypothesisViolated) {
        EXIT_VIOLATED
    } else {
        EXIT_OK
    };
    for c in certificates.iter().filter(|c| c.status != CertificateStatus::Ok) {
        eprintln!("certificate {:?}: {}", c.request, c.error.as_deref().unwrap_or(""));
    }
    let report = AnalyzeReport {
        tool: TOOL,
        lacunarity: classify(&problem.lambda),
        config: cfg,
        spectral,
        certificates,
        modulus,
        modulus_error,
        essential_trend,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(code)
}

fn cmd_construct(example: u8, n_max: usize, q: f64, r: f64, c_fit: Option<f64>, out: &Path) -> Result<u8> {
    let start = Instant::now();
    match example {
        1 => {
            let build = build_example1(n_max)?;
            let verification = verify_example1(&build, c_fit)?;
            let rows: Vec<Vec<Cell>> = build
                .rows
                .iter()
                .map(|r| {
                    vec![
                        Cell::from(r.n),
                        Cell::from(r.lambda),
                        Cell::from(r.ln_a),
                        Cell::from(r.ln_c),
                        Cell::from(r.cond_i_slack),
                        Cell::from(r.cond_ii_slack),
                        Cell::from(r.witness),
                    ]
                })
                .collect();
            write_csv(
                &out.join("example1_ledger.csv"),
                &["n", "lambda", "ln_a", "ln_c", "cond_i_slack", "cond_ii_slack", "witness"],
                &rows,
            )?;
            write_json(
                &out.join("example1_report.json"),
                &ConstructReport {
                    tool: TOOL,
                    example,
                    build,
                    verification,
                    wall_time_s: start.elapsed().as_secs_f64(),
                },
            )?;
        }
        _ => {
            let build = build_example2(q, r, n_max)?;
            let verification = verify_example2(&build)?;
            let rows: Vec<Vec<Cell>> = build
                .rows
                .iter()
                .zip(&verification.checks)
                .map(|(r, c)| {
                    vec![
                        Cell::from(r.n),
                        Cell::from(r.lambda),
                        Cell::from(r.alpha),
                        Cell::from(r.ln_a),
                        Cell::from(r.ln_c),
                        Cell::from(c.g_norm_sq),
                        Cell::from(c.lower),
                        Cell::from(c.upper),
                    ]
                })
                .collect();
            write_csv(
                &out.join("example2_ledger.csv"),
                &["n", "lambda", "alpha", "ln_a", "ln_c", "g_norm_sq", "lower", "upper"],
                &rows,
            )?;
            write_json(
                &out.join("example2_report.json"),
                &ConstructReport {
                    tool: TOOL,
                    example,
                    build,
                    verification,
                    wall_time_s: start.elapsed().as_secs_f64(),
                },
            )?;
        }
    }
    Ok(EXIT_OK)
}

fn load_or_default<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map(config::load).unwrap_or_else(|| Ok(T::default()))
}

fn cmd_check(suite: Suite, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<u8> {
    let start = Instant::now();
    let (name, json, violations) = match suite {
        Suite::Inequalities => {
            let mut cfg: InequalityConfig = load_or_default(config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = inequality_suite(cfg.instances, cfg.seed)?;
            finish_check("inequalities", cfg, report, start)?
        }
        Suite::Certificates => {
            let cfg: CertificateSuiteConfig = load_or_default(config)?;
            let report = certificate_battery(&cfg.pairs, &cfg.truncations)?;
            finish_check("certificates", cfg, report, start)?
        }
        Suite::Interpolation => {
            let mut cfg: InterpolationConfig = load_or_default(config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let seq = cfg.sequence.build().context("field `sequence`")?;
            let measures = cfg
                .measures
                .iter()
                .map(|m| Ok((m.name.clone(), m.measure.build().with_context(|| format!("measure `{}`", m.name))?)))
                .collect::<Result<Vec<_>>>()?;
            let report = interpolation_suite(&seq, &measures, &cfg.t_values, cfg.samples, cfg.seed)?;
            finish_check("interpolation", cfg, report, start)?
        }
    };
    output::write_atomic(&out.join(format!("check_{name}.json")), &json)?;
    if violations > 0 {
        eprintln!("{name}: {violations} violations");
        return Ok(EXIT_VIOLATED);
    }
    Ok(EXIT_OK)
}

fn finish_check<C: Serialize>(
    name: &'static str,
    config: C,
    report: SuiteReport,
    start: Instant,
) -> Result<(&'static str, Vec<u8>, usize)> {
    let violations = report.violations();
    let json = output::to_json(&CheckReport {
        tool: TOOL,
        config,
        report,
        violations,
        wall_time_s: start.elapsed().as_secs_f64(),
    })?;
    Ok((name, json, violations))
}
