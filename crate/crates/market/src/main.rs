use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use tpdm::identity::{MasterKeys, PseudoIdentity, Rid};
use tpdm::phe::bgn::Bgn;
use tpdm::phe::DEFAULT_BOUND;
use tpdm::services::fitting::DistanceMetric;
use tpdm::services::matching::SamplePlan;
use tpdm::services::ServiceKind;
use tpdm_market::bench::{self, BenchReport, CorruptionPattern, TermMode, TracingOptions, VtpsOptions};
use tpdm_market::config::{RefitConfig, SessionConfig};
use tpdm_market::dataset::{gen_synthetic, Distribution};
use tpdm_market::session::{self, run_session, run_session_to};
use tpdm_market::steps::{self, Credential, PidRef};
use tpdm_market::store::{BackendState, RcState, Store};

/// Data market with pseudonymous contributors, encrypted profiles and
/// batch-verified signatures.
#[derive(Parser)]
#[command(name = "tpdm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StoreArg {
    /// Directory holding the registration center's state.
    #[arg(long, default_value = "tpdm-rc")]
    dir: PathBuf,
}

#[derive(Args)]
struct SeedArg {
    /// Seed for reproducible randomness; drawn from the OS when omitted.
    #[arg(long)]
    seed: Option<u64>,
}

impl SeedArg {
    fn rng(&self) -> ChaCha20Rng {
        match self.seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct RidArg {
    /// Real identity as 64 hex digits.
    #[arg(long)]
    rid: Option<String>,
    /// Derive the real identity from a human-readable label.
    #[arg(long)]
    label: Option<String>,
}

impl RidArg {
    fn resolve(&self) -> Result<Rid> {
        match (&self.rid, &self.label) {
            (Some(h), _) => Rid::from_hex(h).context("--rid must be 64 hex digits"),
            (None, Some(l)) => Ok(Rid::from_label(l)),
            (None, None) => bail!("give --rid or --label"),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GenDistribution {
    Uniform,
    Zipf,
    Gaussian,
}

#[derive(Subcommand)]
enum Command {
    /// Create a registration center: master keys, PHE keys, public parameters.
    Keygen {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, value_enum, default_value = "bgn")]
        backend: BackendArg,
        /// Bit length of the BGN modulus N.
        #[arg(long, default_value_t = 1024)]
        bits: usize,
        /// Largest absolute plaintext the center will decrypt.
        #[arg(long, default_value_t = DEFAULT_BOUND)]
        bound: u64,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Register a real identity with a password.
    Register {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        rid: RidArg,
        #[arg(long)]
        password: String,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Issue a fresh pseudo identity and signing key to a registered identity.
    Issue {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        rid: RidArg,
        #[arg(long)]
        password: String,
        /// Credential file to create.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Encrypt, sign and submit one profile to a session.
    Submit {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        session: String,
        #[arg(long)]
        credential: PathBuf,
        #[arg(long, value_enum)]
        service: ServiceArg,
        /// Comma-separated ratings.
        #[arg(long, value_delimiter = ',', required = true)]
        ratings: Vec<i64>,
        #[arg(long, default_value_t = 10)]
        theta: u64,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Batch-verify a session's submissions and close it.
    Verify {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        session: String,
    },
    /// Locate invalid signatures and post the white, black and resubmit lists.
    Trace {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        session: String,
        /// Depth limit; unbounded when omitted.
        #[arg(long)]
        depth: Option<u32>,
        /// Revoke the real identities behind blacklisted submissions.
        #[arg(long)]
        revoke: bool,
    },
    /// Profile matching over a verified session, checked by the consumer.
    Match {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        session: String,
        /// The consumer's comma-separated profile.
        #[arg(long, value_delimiter = ',', required = true)]
        query: Vec<i64>,
        #[arg(long)]
        delta: u64,
        #[arg(long, default_value_t = 10)]
        theta: u64,
        /// Unmatched similarities the consumer re-checks.
        #[arg(long, default_value_t = 10)]
        checks: usize,
        /// Corruption rate assumed when reporting detection probability.
        #[arg(long, default_value_t = 0.2)]
        assumed_corruption: f64,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Gaussian fitting over a verified session, checked by the consumer.
    Fit {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long)]
        session: String,
        #[arg(long, default_value_t = 10)]
        theta: u64,
        /// Extra covariance entries to check beyond the diagonal.
        #[arg(long, default_value_t = 0)]
        random_entries: usize,
        /// Fraction of members for a subset refit check.
        #[arg(long)]
        refit_fraction: Option<f64>,
        #[arg(long, default_value_t = 0.25)]
        refit_threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Registration-center operations.
    Rc {
        #[command(subcommand)]
        op: RcOp,
    },
    /// Write a seeded synthetic dataset as CSV.
    Gen {
        #[arg(long, value_enum, default_value = "uniform")]
        distribution: GenDistribution,
        /// Zipf exponent.
        #[arg(long, default_value_t = 1.1)]
        exponent: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        beta: usize,
        #[arg(long, default_value_t = 10)]
        theta: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a whole session from a TOML or JSON config with all roles in process.
    Simulate {
        config: PathBuf,
        /// Transcript file to create.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Re-run a recorded session and compare outcome and transcript.
    Replay { transcript: PathBuf },
    /// Verification-throughput and tracing benchmarks with CSV and SVG output.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum RcOp {
    /// Open a pseudo identity to its real identity.
    Reveal {
        #[command(flatten)]
        store: StoreArg,
        /// Pseudo identity as hex.
        #[arg(long, conflicts_with_all = ["session", "index"])]
        pid: Option<String>,
        #[arg(long, requires = "index")]
        session: Option<String>,
        #[arg(long, requires = "session")]
        index: Option<usize>,
    },
    /// Revoke a real identity.
    Revoke {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        rid: RidArg,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Verification time per signature, single versus batch.
    Vtps {
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 10, 100, 1000, 10000])]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        single_cap: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Directory for CSV and SVG output.
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
    /// Batch-plus-trace versus single verification across corruption rates.
    Tracing {
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [CorruptionPattern::Uniform, CorruptionPattern::Clustered])]
        patterns: Vec<CorruptionPattern>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [TermMode::Recompute, TermMode::Prepared])]
        terms: Vec<TermMode>,
        #[arg(long, default_value_t = 100)]
        single_cap: usize,
        #[arg(long, default_value_t = 2)]
        seed: u64,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Bgn,
    Clear,
}

#[derive(Clone, Copy, ValueEnum)]
enum ServiceArg {
    Matching,
    Fitting,
}

impl From<ServiceArg> for ServiceKind {
    fn from(s: ServiceArg) -> Self {
        match s {
            ServiceArg::Matching => ServiceKind::Matching,
            ServiceArg::Fitting => ServiceKind::Fitting,
        }
    }
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    std::io::Write::write_all(&mut f, bytes)?;
    Ok(())
}

fn print_bench(report: &BenchReport) -> Result<()> {
    for note in &report.notes {
        eprintln!("{note}");
    }
    print(report)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Keygen { store, backend, bits, bound, seed } => {
            let mut rng = seed.rng();
            let master = MasterKeys::generate(&mut rng);
            let backend = match backend {
                BackendArg::Clear => BackendState::Clear { bound },
                BackendArg::Bgn => {
                    let (phe, secret) = Bgn::keygen(bits, bound, &mut rng)?;
                    BackendState::Bgn { params: phe.params().clone(), secret }
                }
            };
            Store::create(&store.dir, &RcState { master, backend })?;
            eprintln!("registration center created in {}", store.dir.display());
        }
        Command::Register { store, rid, password, seed } => {
            let task = steps::Register { rid: rid.resolve()?, password, rng: seed.rng() };
            let rid = Store::open(&store.dir)?.with_center(task)?;
            println!("{}", hex::encode(rid.0));
        }
        Command::Issue { store, rid, password, out, seed } => {
            let task = steps::Issue { rid: rid.resolve()?, password, rng: seed.rng() };
            let cred = Store::open(&store.dir)?.with_center(task)?;
            write_new(&out, &serde_json::to_vec_pretty(&cred)?)?;
            println!("{}", hex::encode(cred.pid.to_bytes()));
        }
        Command::Submit { store, session, credential, service, ratings, theta, seed } => {
            let bytes = fs::read(&credential).with_context(|| format!("cannot read {}", credential.display()))?;
            let credential: Credential = serde_json::from_slice(&bytes).context("malformed credential file")?;
            let task = steps::Submit { session, credential, service: service.into(), ratings, theta, rng: seed.rng() };
            print(&Store::open(&store.dir)?.with_center(task)?)?;
        }
        Command::Verify { store, session } => {
            print(&Store::open(&store.dir)?.with_center(steps::Verify { session })?)?;
        }
        Command::Trace { store, session, depth, revoke } => {
            print(&Store::open(&store.dir)?.with_center(steps::Trace { session, depth, revoke })?)?;
        }
        Command::Match { store, session, query, delta, theta, checks, assumed_corruption, seed } => {
            let plan = SamplePlan { checks, assumed_corruption, seed: seed.seed.unwrap_or(0) };
            let task = steps::Match { session, query, theta, delta, plan, rng: seed.rng() };
            print(&Store::open(&store.dir)?.with_center(task)?)?;
        }
        Command::Fit { store, session, theta, random_entries, refit_fraction, refit_threshold, seed } => {
            let refit = refit_fraction.map(|fraction| RefitConfig {
                fraction,
                threshold: refit_threshold,
                metric: DistanceMetric::StandardizedMax,
            });
            let task = steps::Fit { session, theta, random_entries, refit, seed };
            print(&Store::open(&store.dir)?.with_center(task)?)?;
        }
        Command::Rc { op: RcOp::Reveal { store, pid, session, index } } => {
            let target = match (pid, session, index) {
                (Some(h), _, _) => {
                    let bytes = hex::decode(h).context("--pid must be hex")?;
                    PidRef::Direct(PseudoIdentity::from_bytes(&bytes).context("not a pseudo identity")?)
                }
                (None, Some(session), Some(index)) => PidRef::Submission { session, index },
                _ => bail!("give --pid, or --session with --index"),
            };
            let rid = Store::open(&store.dir)?.with_center(steps::Reveal(target))?;
            println!("{}", hex::encode(rid.0));
        }
        Command::Rc { op: RcOp::Revoke { store, rid } } => {
            let changed = Store::open(&store.dir)?.with_center(steps::Revoke(rid.resolve()?))?;
            println!("{}", if changed { "revoked" } else { "already revoked" });
        }
        Command::Gen { distribution, exponent, n, beta, theta, seed, out } => {
            let dist = match distribution {
                GenDistribution::Uniform => Distribution::Uniform,
                GenDistribution::Zipf => Distribution::Zipf { exponent },
                GenDistribution::Gaussian => Distribution::default_gaussian(beta, theta),
            };
            let data = gen_synthetic(n, beta, theta, &dist, seed)?;
            let mut buf = Vec::new();
            data.write_csv(&mut buf)?;
            write_new(&out, &buf)?;
        }
        Command::Simulate { config, transcript } => {
            let cfg = SessionConfig::load(&config)?;
            let run = match &transcript {
                Some(path) => run_session_to(&cfg, path)?,
                None => run_session(&cfg)?,
            };
            eprintln!("{:?}", run.timings);
            print(&run.outcome)?;
        }
        Command::Replay { transcript } => {
            let report = session::replay(&transcript)?;
            print(&report)?;
            if !(report.identical_outcome && report.identical_transcript) {
                bail!("replay diverged from the recorded session");
            }
        }
        Command::Bench(BenchCmd::Vtps { ns, single_cap, repeats, seed, out }) => {
            let opts = VtpsOptions { ns, single_cap, repeats, seed, ..Default::default() };
            print_bench(&bench::bench_vtps(&opts, Some(&out))?)?;
        }
        Command::Bench(BenchCmd::Tracing { n, alphas, patterns, terms, single_cap, seed, out }) => {
            let mut opts = TracingOptions { n, patterns, terms, single_cap, seed, ..Default::default() };
            if let Some(a) = alphas {
                opts.alphas = a;
            }
            print_bench(&bench::bench_tracing(&opts, Some(&out))?)?;
        }
    }
    Ok(())
}
