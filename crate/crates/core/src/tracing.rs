//! ℓ-depth tracing of invalid signatures.
//!
//! When a batch fails, the range is bisected at `⌊(head + tail)/2⌋` and each
//! half is re-verified, down to single signatures, until either every index is
//! classified or the depth budget ℓ runs out. Indexes left undecided go to the
//! resubmit-list.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ibs::{DataTuple, Verifier};
use crate::phe::PheCiphertext;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceResult {
    pub whitelist: Vec<usize>,
    pub blacklist: Vec<usize>,
    pub resubmit: Vec<usize>,
    /// Batch checks over ranges of two or more signatures.
    pub batch_calls: u64,
    /// Single-signature checks.
    pub single_calls: u64,
    /// Deepest recursion level reached (the top call is level 1).
    pub max_depth: u32,
}

impl TraceResult {
    pub fn verification_calls(&self) -> u64 {
        self.batch_calls + self.single_calls
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("nothing to trace")]
    Empty,
}

struct Search<'a> {
    n: usize,
    batch: &'a mut dyn FnMut(usize, usize) -> bool,
    single: &'a mut dyn FnMut(usize) -> bool,
    decided: Vec<Option<bool>>,
    settled: usize,
    result: TraceResult,
}

impl Search<'_> {
    fn run(&mut self, head: usize, tail: usize, limit: Option<u32>, depth: u32) {
        if self.settled == self.n || limit == Some(0) {
            return;
        }
        self.result.max_depth = self.result.max_depth.max(depth);
        let ok = if head == tail {
            self.result.single_calls += 1;
            (self.single)(head)
        } else {
            self.result.batch_calls += 1;
            (self.batch)(head, tail)
        };
        if ok {
            for i in head..=tail {
                self.decided[i] = Some(true);
            }
            self.settled += tail - head + 1;
        } else if head == tail {
            self.decided[head] = Some(false);
            self.settled += 1;
        } else {
            let mid = (head + tail) / 2;
            let next = limit.map(|l| l - 1);
            self.run(head, mid, next, depth + 1);
            self.run(mid + 1, tail, next, depth + 1);
        }
    }
}

/// Runs the search over indexes `0..n`.
///
/// `batch(head, tail)` verifies the inclusive range as one batch and
/// `single(i)` verifies one signature. `limit = None` means unbounded depth.
pub fn l_depth_trace(
    n: usize,
    limit: Option<u32>,
    batch: &mut dyn FnMut(usize, usize) -> bool,
    single: &mut dyn FnMut(usize) -> bool,
) -> Result<TraceResult, TraceError> {
    if n == 0 {
        return Err(TraceError::Empty);
    }
    let mut search = Search { n, batch, single, decided: vec![None; n], settled: 0, result: TraceResult::default() };
    search.run(0, n - 1, limit, 1);
    let mut result = search.result;
    for (i, d) in search.decided.iter().enumerate() {
        match d {
            Some(true) => result.whitelist.push(i),
            Some(false) => result.blacklist.push(i),
            None => result.resubmit.push(i),
        }
    }
    Ok(result)
}

/// Traces a list of submitted tuples with batch and single verification.
pub fn trace_tuples<C: PheCiphertext>(
    verifier: &Verifier<'_>,
    tuples: &[DataTuple<C>],
    limit: Option<u32>,
) -> Result<TraceResult, TraceError> {
    let msgs: Vec<Vec<u8>> = tuples.iter().map(|t| t.message()).collect();
    let mut batch = |h: usize, t: usize| {
        verifier.verify_batch((h..=t).map(|i| (&tuples[i].pid, msgs[i].as_slice(), &tuples[i].sigma))).unwrap_or(false)
    };
    let mut single = |i: usize| verifier.verify_single(&tuples[i].pid, &msgs[i], &tuples[i].sigma);
    l_depth_trace(tuples.len(), limit, &mut batch, &mut single)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::index::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeSet;

    fn run(valid: &[bool], limit: Option<u32>, log: &mut Vec<(usize, usize, bool)>) -> TraceResult {
        let log = std::cell::RefCell::new(log);
        let mut batch = |h: usize, t: usize| {
            let ok = valid[h..=t].iter().all(|&v| v);
            log.borrow_mut().push((h, t, ok));
            ok
        };
        let mut single = |i: usize| {
            log.borrow_mut().push((i, i, valid[i]));
            valid[i]
        };
        l_depth_trace(valid.len(), limit, &mut batch, &mut single).unwrap()
    }

    #[test]
    fn all_valid_takes_one_call() {
        let mut log = Vec::new();
        let r = run(&[true; 8], None, &mut log);
        assert_eq!(r.whitelist, (0..8).collect::<Vec<_>>());
        assert_eq!(r.verification_calls(), 1);
    }

    #[test]
    fn recursion_trace_for_one_invalid_of_eight() {
        let mut valid = [true; 8];
        valid[3] = false;
        let mut log = Vec::new();
        let r = run(&valid, None, &mut log);
        assert_eq!(r.blacklist, vec![3]);
        assert_eq!(r.whitelist, vec![0, 1, 2, 4, 5, 6, 7]);
        assert!(r.resubmit.is_empty());
        // Frozen from an independent simulation of the same control flow.
        assert_eq!(
            log,
            vec![(0, 7, false), (0, 3, false), (0, 1, true), (2, 3, false), (2, 2, true), (3, 3, false), (4, 7, true)]
        );
        assert_eq!(r.batch_calls, 5);
        assert_eq!(r.single_calls, 2);
    }

    #[test]
    fn zero_depth_resubmits_everything() {
        let mut log = Vec::new();
        let r = run(&[true, false, true], Some(0), &mut log);
        assert!(log.is_empty());
        assert_eq!(r.resubmit, vec![0, 1, 2]);
    }

    #[test]
    fn depth_limit_then_unbounded_second_pass() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let n = 1024;
        let bad: BTreeSet<usize> = sample(&mut rng, n, n / 5).into_iter().collect();
        let valid: Vec<bool> = (0..n).map(|i| !bad.contains(&i)).collect();
        let mut log = Vec::new();
        let first = run(&valid, Some(4), &mut log);
        assert!(!first.resubmit.is_empty());
        assert!(first.max_depth <= 4);
        for &i in &first.blacklist {
            assert!(bad.contains(&i));
        }
        for &i in &first.whitelist {
            assert!(!bad.contains(&i));
        }
        let sub: Vec<bool> = first.resubmit.iter().map(|&i| valid[i]).collect();
        let second = run(&sub, None, &mut log);
        let mut found: BTreeSet<usize> = first.blacklist.iter().copied().collect();
        found.extend(second.blacklist.iter().map(|&j| first.resubmit[j]));
        assert_eq!(found, bad);
    }

    #[test]
    fn exact_recovery_and_depth_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for n in [1usize, 2, 3, 7, 100, 257] {
            let k = n / 7;
            let bad: BTreeSet<usize> = sample(&mut rng, n, k).into_iter().collect();
            let valid: Vec<bool> = (0..n).map(|i| !bad.contains(&i)).collect();
            let mut log = Vec::new();
            let r = run(&valid, None, &mut log);
            assert_eq!(r.blacklist.iter().copied().collect::<BTreeSet<_>>(), bad);
            assert_eq!(r.whitelist.len() + r.blacklist.len(), n);
            let ceil_log2 = usize::BITS - (n - 1).leading_zeros();
            assert!(r.max_depth <= ceil_log2 + 1);
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        let mut b = |_: usize, _: usize| true;
        let mut s = |_: usize| true;
        assert_eq!(l_depth_trace(0, None, &mut b, &mut s), Err(TraceError::Empty));
    }
}
