//! Verification-time-per-signature (VTPS) and tracing benchmarks.
//!
//! Both benches sign short random payloads with freshly issued pseudo
//! identities on BLS12-381. Verification cost does not depend on the PHE
//! backend beyond the SHA-256 over the message, so no ciphertexts are built.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use plotters::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use tpdm::ibs::{sign, PreparedSignature, Signature, Verifier, VerifyCounts};
use tpdm::identity::{MasterKeys, PseudoIdentity, RcConfig, RcStorage, RegistrationCenter, Rid, SystemParams};
use tpdm::pairing::{hash_to_g1, pair, G1Elem, G2Elem, Scalar};
use tpdm::phe::transparent::Transparent;
use tpdm::tracing::{l_depth_trace, TraceResult};

use crate::session::PhaseTimings;

/// Crossover corruption rate reported for the original hardware, kept for
/// comparison in the tracing report.
pub const REFERENCE_CROSSOVER: f64 = 0.16;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("bench setup failed: {0}")]
    Setup(String),
    #[error("cannot write {path}: {cause}")]
    Artifact { path: PathBuf, cause: String },
}

/// `n` honestly signed messages under distinct pseudo identities.
pub struct SignedBatch {
    pub params: SystemParams,
    pub items: Vec<(PseudoIdentity, Vec<u8>, Signature)>,
}

impl SignedBatch {
    pub fn generate(n: usize, payload_bytes: usize, seed: u64) -> Result<Self, BenchError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (phe, sk) = Transparent::new(1);
        let rc = RegistrationCenter::new(
            MasterKeys::generate(&mut rng),
            Arc::new(phe),
            sk,
            RcConfig::default(),
            RcStorage::in_memory(),
        )
        .map_err(|e| BenchError::Setup(e.to_string()))?;
        let mut items = Vec::with_capacity(n);
        for _ in 0..n {
            let rid = Rid::random(&mut rng);
            let (pid, keys) = rc
                .register(rid, "bench", &mut rng)
                .and_then(|_| rc.issue_credentials(&rid, "bench", &mut rng))
                .map_err(|e| BenchError::Setup(e.to_string()))?;
            let mut msg = vec![0u8; payload_bytes];
            rng.fill_bytes(&mut msg);
            let sigma = sign(rc.params(), &keys, &msg);
            items.push((pid, msg, sigma));
        }
        Ok(SignedBatch { params: rc.params().clone(), items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Copy with the signatures at `indexes` replaced by random group elements.
    pub fn corrupted(&self, indexes: &[usize], rng: &mut impl RngCore) -> Self {
        let mut items = self.items.clone();
        for &i in indexes {
            items[i].2 = Signature(G1Elem::random(rng));
        }
        SignedBatch { params: self.params.clone(), items }
    }

    fn batch(&self, verifier: &Verifier<'_>, head: usize, tail: usize) -> bool {
        verifier.verify_batch(self.items[head..=tail].iter().map(|(p, m, s)| (p, m.as_slice(), s))).unwrap_or(false)
    }

    fn single(&self, verifier: &Verifier<'_>, i: usize) -> bool {
        let (p, m, s) = &self.items[i];
        verifier.verify_single(p, m, s)
    }
}

/// Host timings of the three primitives in the asymptotic VTPS formula, in
/// microseconds (medians).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveTimes {
    pub pairing_us: f64,
    pub map_to_point_us: f64,
    pub exponentiation_us: f64,
}

impl PrimitiveTimes {
    /// `T_mtp + T_exp`, the per-signature limit of batch verification.
    pub fn asymptote_us(&self) -> f64 {
        self.map_to_point_us + self.exponentiation_us
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn micros(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

pub fn measure_primitives(samples: usize, seed: u64) -> PrimitiveTimes {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let samples = samples.max(1);
    let g2 = G2Elem::generator();
    let mut par = Vec::with_capacity(samples);
    let mut mtp = Vec::with_capacity(samples);
    let mut exp = Vec::with_capacity(samples);
    for _ in 0..samples {
        let p = G1Elem::random(&mut rng);
        let k = Scalar::random(&mut rng);
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);

        let t = Instant::now();
        std::hint::black_box(pair(&p, &g2));
        par.push(micros(t.elapsed()));

        let t = Instant::now();
        std::hint::black_box(hash_to_g1(&bytes));
        mtp.push(micros(t.elapsed()));

        let t = Instant::now();
        std::hint::black_box(p * k);
        exp.push(micros(t.elapsed()));
    }
    PrimitiveTimes { pairing_us: median(par), map_to_point_us: median(mtp), exponentiation_us: median(exp) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VtpsOptions {
    pub ns: Vec<usize>,
    /// At most this many signatures are verified one by one per `n`; the
    /// single-mode VTPS is their mean.
    pub single_cap: usize,
    /// Timing repetitions; the median run is kept.
    pub repeats: usize,
    pub payload_bytes: usize,
    pub primitive_samples: usize,
    pub seed: u64,
}

impl Default for VtpsOptions {
    fn default() -> Self {
        VtpsOptions {
            ns: vec![1, 10, 100, 1000, 10_000],
            single_cap: 100,
            repeats: 3,
            payload_bytes: 256,
            primitive_samples: 100,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VtpsPoint {
    pub n: usize,
    pub batch_vtps_us: f64,
    pub single_vtps_us: f64,
    /// Instrumented counts of one batch verification over all `n`.
    pub batch_counts: VerifyCounts,
    /// Instrumented counts of one pass over the singly verified subset.
    pub single_counts: VerifyCounts,
    pub singles_measured: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracingPoint {
    pub alpha: f64,
    pub pattern: CorruptionPattern,
    pub terms: TermMode,
    pub invalid: usize,
    pub batch_calls: u64,
    pub single_calls: u64,
    pub misclassified: usize,
    pub trace_vtps_us: f64,
    pub single_vtps_us: f64,
}

/// How batch checks during tracing obtain each member's hashed term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TermMode {
    /// Every batch check hashes and exponentiates its members again.
    Recompute,
    /// Terms are computed once per signature before tracing starts.
    Prepared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub terms: TermMode,
    /// Smallest uniform corruption rate at which batch-plus-trace stops
    /// beating single verification; `None` if it never does in the sweep.
    pub alpha: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionPattern {
    /// Invalid signatures at uniformly random positions.
    Uniform,
    /// One contiguous run of invalid signatures at a random offset.
    Clustered,
}

/// Measurements, counters and artifacts of one bench or simulation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub phases: Option<PhaseTimings>,
    pub primitives: Option<PrimitiveTimes>,
    pub vtps: Vec<VtpsPoint>,
    /// Largest-`n` batch VTPS divided by `T_mtp + T_exp`.
    pub asymptote_ratio: Option<f64>,
    pub tracing: Vec<TracingPoint>,
    pub crossovers: Vec<Crossover>,
    pub artifacts: Vec<PathBuf>,
    pub notes: Vec<String>,
}

fn reps_for(units: usize, repeats: usize) -> usize {
    repeats.max(1).max(200usize.div_ceil(units.max(1)).min(50))
}

/// Median wall time of `reps` runs.
fn median_time(reps: usize, mut f: impl FnMut()) -> Duration {
    let mut times: Vec<Duration> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .collect();
    times.sort_unstable();
    times[times.len() / 2]
}

pub fn bench_vtps(opts: &VtpsOptions, out_dir: Option<&Path>) -> Result<BenchReport, BenchError> {
    let max_n = opts.ns.iter().copied().max().ok_or_else(|| BenchError::Setup("empty n list".into()))?;
    let fixture = SignedBatch::generate(max_n, opts.payload_bytes, opts.seed)?;
    let primitives = measure_primitives(opts.primitive_samples, opts.seed.wrapping_add(1));
    let verifier = Verifier::new(&fixture.params);
    let mut points = Vec::new();
    for &n in &opts.ns {
        if n == 0 {
            continue;
        }
        verifier.reset();
        assert!(fixture.batch(&verifier, 0, n - 1), "honest batch rejected");
        let batch_counts = verifier.counts();
        let batch = median_time(reps_for(n, opts.repeats), || {
            std::hint::black_box(fixture.batch(&verifier, 0, n - 1));
        });

        let k = n.min(opts.single_cap.max(1));
        verifier.reset();
        assert!((0..k).all(|i| fixture.single(&verifier, i)), "honest signature rejected");
        let single_counts = verifier.counts();
        let single = median_time(reps_for(k, opts.repeats), || {
            for i in 0..k {
                std::hint::black_box(fixture.single(&verifier, i));
            }
        });
        points.push(VtpsPoint {
            n,
            batch_vtps_us: micros(batch) / n as f64,
            single_vtps_us: micros(single) / k as f64,
            batch_counts,
            single_counts,
            singles_measured: k,
        });
    }
    let asymptote_ratio = points.last().map(|p| p.batch_vtps_us / primitives.asymptote_us());
    let mut report = BenchReport { primitives: Some(primitives), vtps: points, asymptote_ratio, ..Default::default() };
    if let Some(ratio) = asymptote_ratio {
        report.notes.push(format!(
            "batch VTPS at n={} is {:.2}× T_mtp + T_exp = {:.1} µs (T_mtp {:.1} µs, T_exp {:.1} µs, T_par {:.1} µs)",
            report.vtps.last().map_or(0, |p| p.n),
            ratio,
            primitives.asymptote_us(),
            primitives.map_to_point_us,
            primitives.exponentiation_us,
            primitives.pairing_us,
        ));
    }
    if let Some(dir) = out_dir {
        write_vtps_artifacts(&mut report, dir)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracingOptions {
    pub n: usize,
    pub alphas: Vec<f64>,
    pub patterns: Vec<CorruptionPattern>,
    pub terms: Vec<TermMode>,
    pub single_cap: usize,
    pub payload_bytes: usize,
    pub seed: u64,
}

impl Default for TracingOptions {
    fn default() -> Self {
        TracingOptions {
            n: 1024,
            alphas: (0..=10).map(|i| i as f64 * 0.02).collect(),
            patterns: vec![CorruptionPattern::Uniform, CorruptionPattern::Clustered],
            terms: vec![TermMode::Recompute, TermMode::Prepared],
            single_cap: 100,
            payload_bytes: 256,
            seed: 2,
        }
    }
}

fn corrupt_indexes(pattern: CorruptionPattern, n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx = match pattern {
        CorruptionPattern::Uniform => sample(rng, n, k).into_vec(),
        CorruptionPattern::Clustered => {
            let start = rng.gen_range(0..=n - k);
            (start..start + k).collect()
        }
    };
    idx.sort_unstable();
    idx
}

pub fn bench_tracing(opts: &TracingOptions, out_dir: Option<&Path>) -> Result<BenchReport, BenchError> {
    if opts.n == 0 {
        return Err(BenchError::Setup("n must be positive".into()));
    }
    let fixture = SignedBatch::generate(opts.n, opts.payload_bytes, opts.seed)?;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let k = opts.n.min(opts.single_cap.max(1));
    let verifier = Verifier::new(&fixture.params);
    let single = median_time(reps_for(k, 1), || {
        for i in 0..k {
            std::hint::black_box(fixture.single(&verifier, i));
        }
    });
    let single_vtps_us = micros(single) / k as f64;

    let mut points = Vec::new();
    for &terms in &opts.terms {
        for &pattern in &opts.patterns {
            for &alpha in &opts.alphas {
                let invalid = ((alpha * opts.n as f64).round() as usize).min(opts.n);
                let bad = corrupt_indexes(pattern, opts.n, invalid, &mut rng);
                let batch = fixture.corrupted(&bad, &mut rng);
                let (result, elapsed) = trace_batch(&batch, terms)?;
                let misclassified = result.blacklist.iter().filter(|i| bad.binary_search(i).is_err()).count()
                    + bad.iter().filter(|i| result.blacklist.binary_search(i).is_err()).count()
                    + result.resubmit.len();
                points.push(TracingPoint {
                    alpha,
                    pattern,
                    terms,
                    invalid,
                    batch_calls: result.batch_calls,
                    single_calls: result.single_calls,
                    misclassified,
                    trace_vtps_us: micros(elapsed) / opts.n as f64,
                    single_vtps_us,
                });
            }
        }
    }
    let crossovers: Vec<Crossover> = opts
        .terms
        .iter()
        .map(|&terms| Crossover {
            terms,
            alpha: crossover(points.iter().filter(|p| p.pattern == CorruptionPattern::Uniform && p.terms == terms)),
        })
        .collect();
    let mut report = BenchReport { tracing: points, crossovers, ..Default::default() };
    for c in &report.crossovers {
        report.notes.push(match c.alpha {
            Some(a) => format!(
                "{:?} terms: measured crossover at α ≈ {:.1}%; reference point {:.0}%",
                c.terms,
                a * 100.0,
                REFERENCE_CROSSOVER * 100.0
            ),
            None => format!(
                "{:?} terms: batch-plus-trace beat single verification over the whole sweep; reference point {:.0}%",
                c.terms,
                REFERENCE_CROSSOVER * 100.0
            ),
        });
    }
    if let Some(dir) = out_dir {
        write_tracing_artifacts(&mut report, dir)?;
    }
    Ok(report)
}

/// Unbounded tracing over `batch`, timed from the first batch check.
fn trace_batch(batch: &SignedBatch, terms: TermMode) -> Result<(TraceResult, Duration), BenchError> {
    let verifier = Verifier::new(&batch.params);
    let t = Instant::now();
    let result = match terms {
        TermMode::Recompute => l_depth_trace(batch.len(), None, &mut |h, t| batch.batch(&verifier, h, t), &mut |i| {
            batch.single(&verifier, i)
        }),
        TermMode::Prepared => {
            let prepared: Vec<PreparedSignature> =
                batch.items.iter().map(|(p, m, s)| verifier.prepare(p, m, s)).collect();
            l_depth_trace(
                batch.len(),
                None,
                &mut |h, t| verifier.verify_prepared(&prepared[h..=t]).unwrap_or(false),
                &mut |i| verifier.verify_prepared(&prepared[i..=i]).unwrap_or(false),
            )
        }
    }
    .map_err(|e| BenchError::Setup(e.to_string()))?;
    Ok((result, t.elapsed()))
}

/// Linear interpolation of the first sign change of `trace − single`.
fn crossover<'a>(points: impl Iterator<Item = &'a TracingPoint>) -> Option<f64> {
    let mut pts: Vec<&TracingPoint> = points.collect();
    pts.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let gap = |p: &TracingPoint| p.trace_vtps_us - p.single_vtps_us;
    if let Some(first) = pts.first() {
        if gap(first) >= 0.0 {
            return Some(first.alpha);
        }
    }
    pts.windows(2).find(|w| gap(w[0]) < 0.0 && gap(w[1]) >= 0.0).map(|w| {
        let (g0, g1) = (gap(w[0]), gap(w[1]));
        w[0].alpha + (w[1].alpha - w[0].alpha) * (-g0) / (g1 - g0)
    })
}

fn artifact_err(path: &Path) -> impl Fn(String) -> BenchError + '_ {
    move |cause| BenchError::Artifact { path: path.to_path_buf(), cause }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let err = artifact_err(path);
    let mut w = csv::Writer::from_path(path).map_err(|e| err(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

#[derive(Serialize)]
struct VtpsRow {
    n: usize,
    batch_vtps_us: f64,
    single_vtps_us: f64,
    batch_pairings: u64,
    single_pairings: u64,
    singles_measured: usize,
}

#[derive(Serialize)]
struct TracingRow {
    alpha: f64,
    pattern: CorruptionPattern,
    terms: TermMode,
    invalid: usize,
    batch_calls: u64,
    single_calls: u64,
    misclassified: usize,
    trace_vtps_us: f64,
    single_vtps_us: f64,
}

fn write_vtps_artifacts(report: &mut BenchReport, dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| artifact_err(dir)(e.to_string()))?;
    let csv_path = dir.join("vtps.csv");
    let rows: Vec<VtpsRow> = report
        .vtps
        .iter()
        .map(|p| VtpsRow {
            n: p.n,
            batch_vtps_us: p.batch_vtps_us,
            single_vtps_us: p.single_vtps_us,
            batch_pairings: p.batch_counts.pairings,
            single_pairings: p.single_counts.pairings,
            singles_measured: p.singles_measured,
        })
        .collect();
    write_csv(&csv_path, &rows)?;
    let svg_path = dir.join("vtps.svg");
    let asymptote = report.primitives.map(|p| p.asymptote_us());
    plot_vtps(&svg_path, &report.vtps, asymptote).map_err(artifact_err(&svg_path))?;
    report.artifacts.extend([csv_path, svg_path]);
    Ok(())
}

fn write_tracing_artifacts(report: &mut BenchReport, dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| artifact_err(dir)(e.to_string()))?;
    let csv_path = dir.join("tracing.csv");
    let rows: Vec<TracingRow> = report
        .tracing
        .iter()
        .map(|p| TracingRow {
            alpha: p.alpha,
            pattern: p.pattern,
            terms: p.terms,
            invalid: p.invalid,
            batch_calls: p.batch_calls,
            single_calls: p.single_calls,
            misclassified: p.misclassified,
            trace_vtps_us: p.trace_vtps_us,
            single_vtps_us: p.single_vtps_us,
        })
        .collect();
    write_csv(&csv_path, &rows)?;
    let svg_path = dir.join("tracing.svg");
    plot_tracing(&svg_path, &report.tracing).map_err(artifact_err(&svg_path))?;
    report.artifacts.extend([csv_path, svg_path]);
    Ok(())
}

fn plot_vtps(path: &Path, points: &[VtpsPoint], asymptote: Option<f64>) -> Result<(), String> {
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let x_max = points.iter().map(|p| p.n).max().unwrap_or(1) as f64 * 1.5;
    let y_max = points.iter().map(|p| p.batch_vtps_us.max(p.single_vtps_us)).fold(1.0, f64::max) * 1.5;
    let y_min = points.iter().map(|p| p.batch_vtps_us).fold(y_max, f64::min) / 1.5;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((0.8f64..x_max).log_scale(), (y_min..y_max).log_scale())
        .map_err(|e| e.to_string())?;
    chart.configure_mesh().draw().map_err(|e| e.to_string())?;
    let batch: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.batch_vtps_us)).collect();
    let single: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.single_vtps_us)).collect();
    chart.draw_series(LineSeries::new(batch.clone(), &BLUE)).map_err(|e| e.to_string())?;
    chart.draw_series(batch.iter().map(|&p| Circle::new(p, 4, BLUE.filled()))).map_err(|e| e.to_string())?;
    chart.draw_series(LineSeries::new(single.clone(), &RED)).map_err(|e| e.to_string())?;
    chart.draw_series(single.iter().map(|&p| Circle::new(p, 4, RED.filled()))).map_err(|e| e.to_string())?;
    if let Some(a) = asymptote {
        chart.draw_series(LineSeries::new([(0.8, a), (x_max, a)], &BLACK)).map_err(|e| e.to_string())?;
    }
    root.present().map_err(|e| e.to_string())
}

fn plot_tracing(path: &Path, points: &[TracingPoint]) -> Result<(), String> {
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let x_max = points.iter().map(|p| p.alpha).fold(0.01, f64::max);
    let y_max = points.iter().map(|p| p.trace_vtps_us.max(p.single_vtps_us)).fold(1.0, f64::max) * 1.1;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..x_max, 0f64..y_max)
        .map_err(|e| e.to_string())?;
    chart.configure_mesh().draw().map_err(|e| e.to_string())?;
    let curves = [
        (CorruptionPattern::Uniform, TermMode::Recompute, BLUE),
        (CorruptionPattern::Clustered, TermMode::Recompute, GREEN),
        (CorruptionPattern::Uniform, TermMode::Prepared, MAGENTA),
        (CorruptionPattern::Clustered, TermMode::Prepared, CYAN),
    ];
    for (pattern, terms, color) in curves {
        let series: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.pattern == pattern && p.terms == terms)
            .map(|p| (p.alpha, p.trace_vtps_us))
            .collect();
        if series.is_empty() {
            continue;
        }
        chart.draw_series(LineSeries::new(series.clone(), &color)).map_err(|e| e.to_string())?;
        chart.draw_series(series.iter().map(|&p| Circle::new(p, 3, color.filled()))).map_err(|e| e.to_string())?;
    }
    if let Some(single) = points.first().map(|p| p.single_vtps_us) {
        chart.draw_series(LineSeries::new([(0.0, single), (x_max, single)], &RED)).map_err(|e| e.to_string())?;
    }
    root.present().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(alpha: f64, trace: f64) -> TracingPoint {
        TracingPoint {
            alpha,
            pattern: CorruptionPattern::Uniform,
            terms: TermMode::Recompute,
            invalid: 0,
            batch_calls: 0,
            single_calls: 0,
            misclassified: 0,
            trace_vtps_us: trace,
            single_vtps_us: 10.0,
        }
    }

    #[test]
    fn crossover_interpolates_between_samples() {
        let pts = [point(0.0, 2.0), point(0.1, 6.0), point(0.2, 14.0)];
        let a = crossover(pts.iter()).unwrap();
        assert!((a - 0.15).abs() < 1e-12);
        assert_eq!(crossover([point(0.0, 1.0), point(0.2, 9.0)].iter()), None);
    }

    #[test]
    fn clustered_indexes_are_contiguous() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let idx = corrupt_indexes(CorruptionPattern::Clustered, 100, 10, &mut rng);
        assert_eq!(idx.len(), 10);
        assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));
        assert_eq!(corrupt_indexes(CorruptionPattern::Uniform, 100, 0, &mut rng), Vec::<usize>::new());
    }

    #[test]
    fn small_vtps_run_counts_pairings_and_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let opts =
            VtpsOptions { ns: vec![1, 4, 16], single_cap: 4, repeats: 1, primitive_samples: 5, ..Default::default() };
        let report = bench_vtps(&opts, Some(dir.path())).unwrap();
        for p in &report.vtps {
            assert_eq!(p.batch_counts.pairings, 3);
            assert_eq!(p.batch_counts.hashes_to_g1, p.n as u64);
            assert_eq!(p.single_counts.pairings, 3 * p.singles_measured as u64);
        }
        assert_eq!(report.artifacts.len(), 2);
        let svg = fs::read_to_string(dir.path().join("vtps.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
        let csv = fs::read_to_string(dir.path().join("vtps.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn small_tracing_run_is_exact() {
        let opts = TracingOptions {
            n: 32,
            alphas: vec![0.0, 0.1, 0.25],
            terms: vec![TermMode::Recompute, TermMode::Prepared],
            single_cap: 4,
            ..Default::default()
        };
        let report = bench_tracing(&opts, None).unwrap();
        assert_eq!(report.tracing.len(), 12);
        assert_eq!(report.crossovers.len(), 2);
        assert!(report.tracing.iter().all(|p| p.misclassified == 0));
        let at_zero = &report.tracing[0];
        assert_eq!((at_zero.batch_calls, at_zero.single_calls), (1, 0));
    }
}
