//! Multivariate Gaussian fitting over encrypted samples.
//!
//! Each contributor submits `E(u_j)` for every attribute and `E(u_j·u_k)` for
//! every `j ≤ k`, computed in the clear before encryption. The provider then
//! needs only additions:
//!
//! ```text
//! S_j  = Σ_i u_ij            μ_j  = S_j / m
//! S_jk = Σ_i u_ij·u_ik       Σ_jk = S_jk/m − μ_j·μ_k = (m·S_jk − S_j·S_k) / m²
//! ```
//!
//! All results are exact rationals.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::{check_fan_in, sample_members, Consumer, Profile, Schema, ServiceError, FITTING_SERVICE, REFIT_SERVICE};
use crate::ibs::{aggregate, AggregateSignature, DataTuple};
use crate::identity::RegistrationCenter;
use crate::phe::{Evaluator, HomomorphicScheme, OpCounts};

pub type Rational = Ratio<i128>;

/// `m·θ²`, the largest cross-term sum a session can produce.
pub fn worst_case_sum(m: usize, theta: u64) -> u128 {
    m as u128 * (theta as u128) * (theta as u128)
}

pub fn check_session(m: usize, theta: u64, bound: u64) -> Result<(), ServiceError> {
    check_fan_in(worst_case_sum(m, theta), bound)
}

/// Decryptions needed for one fit: `β + β(β+1)/2`.
pub fn quota(beta: usize) -> u64 {
    Schema::fitting(beta).vector_len() as u64
}

/// Position of `E(u_j·u_k)` (`j ≤ k`) in the ciphertext vector.
pub fn cross_index(beta: usize, j: usize, k: usize) -> usize {
    let (j, k) = if j <= k { (j, k) } else { (k, j) };
    beta + j * beta - j * (j.saturating_sub(1)) / 2 - j + k
}

/// `[E(u_1), …, E(u_β), E(u_1u_1), E(u_1u_2), …, E(u_βu_β)]`.
pub fn encode_profile_fitting<S: HomomorphicScheme, R: RngCore + ?Sized>(
    eval: &Evaluator<'_, S>,
    profile: &Profile,
    rng: &mut R,
) -> Result<Vec<S::Ciphertext>, ServiceError> {
    let u = profile.ratings();
    let beta = u.len();
    let mut out = Vec::with_capacity(Schema::fitting(beta).vector_len());
    for &x in u {
        out.push(eval.encrypt(x, rng)?);
    }
    for j in 0..beta {
        for k in j..beta {
            out.push(eval.encrypt(u[j] * u[k], rng)?);
        }
    }
    Ok(out)
}

/// Decrypted integer sums: `s[j] = S_j`, `ss[cross_index(j,k) − β] = S_jk`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitSums {
    pub m: u64,
    pub s: Vec<i64>,
    pub ss: Vec<i64>,
}

impl FitSums {
    pub fn beta(&self) -> usize {
        self.s.len()
    }

    pub fn cross(&self, j: usize, k: usize) -> i64 {
        self.ss[cross_index(self.beta(), j, k) - self.beta()]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub m: u64,
    #[serde(with = "rational_text")]
    pub mean: Vec<Rational>,
    #[serde(with = "rational_text::rows")]
    pub cov: Vec<Vec<Rational>>,
}

/// Rationals as `"n/d"` strings, which survive self-describing formats that
/// cannot carry 128-bit integers.
mod rational_text {
    use super::Rational;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|r| r.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        Vec::<String>::deserialize(d)?.iter().map(|t| t.parse().map_err(D::Error::custom)).collect()
    }

    pub mod rows {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[Vec<Rational>], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|row| row.iter().map(|r| r.to_string()).collect::<Vec<_>>()))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Rational>>, D::Error> {
            Vec::<Vec<String>>::deserialize(d)?
                .iter()
                .map(|row| row.iter().map(|t| t.parse().map_err(D::Error::custom)).collect())
                .collect()
        }
    }
}

impl GaussianFit {
    pub fn from_sums(sums: &FitSums) -> Result<Self, ServiceError> {
        if sums.m == 0 {
            return Err(ServiceError::Empty);
        }
        let beta = sums.beta();
        let m = sums.m as i128;
        let mean = sums.s.iter().map(|&s| Ratio::new(s as i128, m)).collect();
        let cov = (0..beta)
            .map(|j| {
                (0..beta)
                    .map(|k| {
                        let num = m * sums.cross(j, k) as i128 - sums.s[j] as i128 * sums.s[k] as i128;
                        Ratio::new(num, m * m)
                    })
                    .collect()
            })
            .collect();
        Ok(GaussianFit { m: sums.m, mean, cov })
    }

    pub fn beta(&self) -> usize {
        self.mean.len()
    }

    /// The integer sums implied by this fit, or `None` if the fit is not
    /// consistent with integer data of size `m`.
    pub fn implied_sums(&self) -> Option<FitSums> {
        let beta = self.beta();
        if self.cov.len() != beta || self.cov.iter().any(|r| r.len() != beta) || self.m == 0 {
            return None;
        }
        let m = Ratio::from_integer(self.m as i128);
        let integer = |r: Rational| if r.is_integer() { r.to_integer().to_i64() } else { None };
        let s = self.mean.iter().map(|mu| integer(mu * m)).collect::<Option<Vec<_>>>()?;
        let mut ss = Vec::with_capacity(beta * (beta + 1) / 2);
        for j in 0..beta {
            for k in j..beta {
                ss.push(integer((self.cov[j][k] + self.mean[j] * self.mean[k]) * m)?);
            }
        }
        Some(FitSums { m: self.m, s, ss })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.beta()).all(|j| (0..j).all(|k| self.cov[j][k] == self.cov[k][j]))
    }

    pub fn mean_f64(&self) -> Vec<f64> {
        self.mean.iter().map(to_f64).collect()
    }

    pub fn cov_f64(&self) -> Vec<Vec<f64>> {
        self.cov.iter().map(|r| r.iter().map(to_f64).collect()).collect()
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Element-wise `⊕` over the listed tuples; entry `e` of the result encrypts
/// the sum of entry `e` across tuples.
pub fn encrypted_sums<S: HomomorphicScheme>(
    eval: &Evaluator<'_, S>,
    tuples: &[&DataTuple<S::Ciphertext>],
    entries: &[usize],
) -> Result<Vec<S::Ciphertext>, ServiceError> {
    entries.iter().map(|&e| eval.sum(tuples.iter().map(|t| &t.ciphertexts[e]))?.ok_or(ServiceError::Empty)).collect()
}

fn decrypt_sums<S: HomomorphicScheme>(
    rc: &RegistrationCenter<S>,
    eval: &Evaluator<'_, S>,
    session: &str,
    service: &str,
    beta: usize,
    tuples: &[&DataTuple<S::Ciphertext>],
) -> Result<FitSums, ServiceError> {
    let len = Schema::fitting(beta).vector_len();
    let all: Vec<usize> = (0..len).collect();
    let plain = encrypted_sums(eval, tuples, &all)?
        .iter()
        .map(|c| rc.quota_decrypt(session, service, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FitSums { m: tuples.len() as u64, s: plain[..beta].to_vec(), ss: plain[beta..].to_vec() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub fit: GaussianFit,
    /// `Σσ_i` over the whitelisted tuples, so they can be forwarded for
    /// checking.
    pub aggregate: AggregateSignature,
}

/// Provider side: sums every entry over the whitelisted tuples and has the
/// registration center decrypt the `β + β(β+1)/2` sums.
pub fn run_fitting<S: HomomorphicScheme>(
    rc: &RegistrationCenter<S>,
    eval: &Evaluator<'_, S>,
    session: &str,
    schema: Schema,
    whitelist: &[(usize, &DataTuple<S::Ciphertext>)],
) -> Result<FitOutcome, ServiceError> {
    if whitelist.is_empty() {
        return Err(ServiceError::Empty);
    }
    for (_, t) in whitelist {
        schema.check(t)?;
    }
    let tuples: Vec<&DataTuple<S::Ciphertext>> = whitelist.iter().map(|(_, t)| *t).collect();
    let sums = decrypt_sums(rc, eval, session, FITTING_SERVICE, schema.beta, &tuples)?;
    let fit = GaussianFit::from_sums(&sums)?;
    let aggregate = aggregate(whitelist.iter().map(|(i, t)| (*i, &t.sigma)));
    Ok(FitOutcome { fit, aggregate })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// `max_j max(|μ'_j − μ_j| / σ_j, |Σ'_jj − Σ_jj| / Σ_jj)`.
    StandardizedMax,
    /// `‖μ' − μ‖ / ‖μ‖ + ‖Σ' − Σ‖_F / ‖Σ‖_F`.
    RelativeFrobenius,
}

/// Distance between a claimed fit and a refit; zero-variance attributes fall
/// back to absolute differences.
pub fn fit_distance(claimed: &GaussianFit, refit: &GaussianFit, metric: DistanceMetric) -> f64 {
    let (mu, mu2) = (claimed.mean_f64(), refit.mean_f64());
    let (cov, cov2) = (claimed.cov_f64(), refit.cov_f64());
    match metric {
        DistanceMetric::StandardizedMax => (0..mu.len())
            .map(|j| {
                let var = cov[j][j];
                let scale = |d: f64, s: f64| if s > 0.0 { d / s } else { d };
                let dm = scale((mu2[j] - mu[j]).abs(), var.sqrt());
                let dv = scale((cov2[j][j] - var).abs(), var);
                dm.max(dv)
            })
            .fold(0.0, f64::max),
        DistanceMetric::RelativeFrobenius => {
            let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
            let rel = |d: f64, s: f64| if s > 0.0 { d / s } else { d };
            let dmu = norm(&mut mu.iter().zip(&mu2).map(|(a, b)| a - b));
            let dcov = norm(&mut cov.iter().flatten().zip(cov2.iter().flatten()).map(|(a, b)| a - b));
            rel(dmu, norm(&mut mu.iter().copied())) + rel(dcov, norm(&mut cov.iter().flatten().copied()))
        }
    }
}

/// Reevaluation of a random fraction of the data items.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetRefit {
    pub fraction: f64,
    pub threshold: f64,
    pub metric: DistanceMetric,
    pub seed: u64,
}

/// Which parts of a returned fit the consumer checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitCheckPlan {
    pub mean_entries: Vec<usize>,
    /// Upper-triangle positions `(j, k)`; `(k, j)` is treated the same.
    pub cov_entries: Vec<(usize, usize)>,
    pub refit: Option<SubsetRefit>,
}

impl FitCheckPlan {
    /// Full mean vector plus every diagonal covariance entry.
    pub fn diagonal(beta: usize) -> Self {
        FitCheckPlan {
            mean_entries: (0..beta).collect(),
            cov_entries: (0..beta).map(|j| (j, j)).collect(),
            refit: None,
        }
    }

    /// `count` covariance entries drawn uniformly from the upper triangle.
    pub fn random_entries(beta: usize, count: usize, seed: u64) -> Self {
        let pairs: Vec<(usize, usize)> = (0..beta).flat_map(|j| (j..beta).map(move |k| (j, k))).collect();
        let idx: Vec<usize> = (0..pairs.len()).collect();
        let cov_entries = sample_members(&idx, count, seed).into_iter().map(|i| pairs[i]).collect();
        FitCheckPlan { mean_entries: Vec::new(), cov_entries, refit: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitFailure {
    CountMismatch { claimed: u64, forwarded: u64 },
    BadTuples,
    Malformed,
    MeanEntry { j: usize },
    CovEntry { j: usize, k: usize },
    RefitDistance { distance: f64, threshold: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub accepted: bool,
    pub failure: Option<FitFailure>,
    pub entries_checked: usize,
    pub refit_distance: Option<f64>,
    pub ops: OpCounts,
}

/// Consumer side. `forwarded` are the whitelisted tuples the provider handed
/// over; they are authenticated against the board, the requested entries are
/// re-summed and matched against the registration center's cached sums, and
/// an optional subset refit is decrypted under its own quota.
pub fn verify_fitting_outcome<S: HomomorphicScheme>(
    consumer: &mut Consumer<'_, S>,
    eval: &Evaluator<'_, S>,
    fit: &GaussianFit,
    forwarded: &[(usize, &DataTuple<S::Ciphertext>)],
    plan: &FitCheckPlan,
) -> Result<FitReport, ServiceError> {
    let before = eval.counts();
    let mut report = FitReport {
        accepted: false,
        failure: None,
        entries_checked: 0,
        refit_distance: None,
        ops: OpCounts::default(),
    };
    let failure = check_fit(consumer, eval, fit, forwarded, plan, &mut report)?;
    report.accepted = failure.is_none();
    report.failure = failure;
    report.ops = eval.counts() - before;
    Ok(report)
}

fn check_fit<S: HomomorphicScheme>(
    consumer: &mut Consumer<'_, S>,
    eval: &Evaluator<'_, S>,
    fit: &GaussianFit,
    forwarded: &[(usize, &DataTuple<S::Ciphertext>)],
    plan: &FitCheckPlan,
    report: &mut FitReport,
) -> Result<Option<FitFailure>, ServiceError> {
    let beta = fit.beta();
    if forwarded.len() as u64 != fit.m {
        return Ok(Some(FitFailure::CountMismatch { claimed: fit.m, forwarded: forwarded.len() as u64 }));
    }
    let schema = Schema::fitting(beta);
    if forwarded.iter().any(|(_, t)| schema.check(t).is_err()) || !consumer.authenticate(forwarded) {
        return Ok(Some(FitFailure::BadTuples));
    }
    let Some(sums) = fit.implied_sums().filter(|_| fit.is_symmetric()) else {
        return Ok(Some(FitFailure::Malformed));
    };
    if plan.mean_entries.iter().any(|&j| j >= beta) || plan.cov_entries.iter().any(|&(j, k)| j >= beta || k >= beta) {
        return Err(ServiceError::WrongLength { expected: beta, got: beta + 1 });
    }
    let tuples: Vec<&DataTuple<S::Ciphertext>> = forwarded.iter().map(|(_, t)| *t).collect();

    // A covariance entry depends on both means, so those are checked with it.
    let mut means: Vec<usize> = plan.mean_entries.clone();
    means.extend(plan.cov_entries.iter().flat_map(|&(j, k)| [j, k]));
    means.sort_unstable();
    means.dedup();
    for j in means {
        let c = &encrypted_sums(eval, &tuples, &[j])?[0];
        report.entries_checked += 1;
        if consumer.lookup(FITTING_SERVICE, c)? != Some(sums.s[j]) {
            return Ok(Some(FitFailure::MeanEntry { j }));
        }
    }
    for &(j, k) in &plan.cov_entries {
        let c = &encrypted_sums(eval, &tuples, &[cross_index(beta, j, k)])?[0];
        report.entries_checked += 1;
        if consumer.lookup(FITTING_SERVICE, c)? != Some(sums.cross(j, k)) {
            return Ok(Some(FitFailure::CovEntry { j: j.min(k), k: j.max(k) }));
        }
    }

    if let Some(refit) = &plan.refit {
        let k = ((refit.fraction * tuples.len() as f64).round() as usize).clamp(1, tuples.len());
        let idx: Vec<usize> = (0..tuples.len()).collect();
        let subset: Vec<&DataTuple<S::Ciphertext>> =
            sample_members(&idx, k, refit.seed).into_iter().map(|i| tuples[i]).collect();
        let sub_sums = decrypt_sums(consumer.rc, eval, consumer.session, REFIT_SERVICE, beta, &subset)?;
        let distance = fit_distance(fit, &GaussianFit::from_sums(&sub_sums)?, refit.metric);
        report.refit_distance = Some(distance);
        if distance.is_nan() || distance > refit.threshold {
            return Ok(Some(FitFailure::RefitDistance { distance, threshold: refit.threshold }));
        }
    }
    Ok(None)
}

/// Matrix of zeros, handy for comparisons.
pub fn zero_matrix(beta: usize) -> Vec<Vec<Rational>> {
    vec![vec![Rational::zero(); beta]; beta]
}
