//! Classical layer: XOR secret sharing, random-coding reconciliation from
//! the receivers to the sender, and Toeplitz privacy amplification.
//!
//! The random code is a pure keyed hash: codeword =
//! first `m` bits (MSB-first) of
//! `SHA-256("qss-random-code/1" || seed_le64 || n_le32 || m_le32 || x_le32)`,
//! where `x` is the integer encoding of the input block. Everything is a
//! deterministic function of the seeds, so all three parties can evaluate
//! the same functions without sharing tables.
//!
//! Reconciliation is the exhaustive minimum-distance search over codeword
//! preimage pairs, which is exponential in `n` by construction; block
//! lengths are capped at [`MAX_SEARCH_BITS`].

use crate::analysis::binary_entropy;
use crate::seeding::derive_rng;
use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use thiserror::Error;

/// Cap on exhaustive preimage search.
pub const MAX_SEARCH_BITS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum CodingError {
    #[error("bit string length {got} does not match expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("block length {n} exceeds the exhaustive-search cap {MAX_SEARCH_BITS}")]
    DeskScaleExceeded { n: usize },
    #[error("qber {0} outside [0, 1/2]")]
    InvalidQber(f64),
    #[error("codeword length {m} exceeds block length {n}")]
    CodewordTooLong { m: usize, n: usize },
    #[error("a codeword has no preimage under this code seed; retry with a fresh seed")]
    EmptyPreimage,
    #[error("output length {out_len} exceeds key length {key_len}")]
    OutputTooLong { out_len: usize, key_len: usize },
}

/// A bit string. `bits[0]` is the most significant position, so
/// lexicographic order on the bit vector equals numeric order of the
/// integer encoding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct BitString {
    bits: Vec<u8>,
}

impl BitString {
    pub fn new(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "bits must be 0 or 1");
        Self { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![0; n] }
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        Self {
            bits: (0..n).map(|_| rng.gen_range(0..2u8)).collect(),
        }
    }

    pub fn from_integer(value: u32, n: usize) -> Self {
        assert!(n <= 32);
        let bits = (0..n)
            .map(|i| ((value >> (n - 1 - i)) & 1) as u8)
            .collect();
        Self { bits }
    }

    pub fn to_integer(&self) -> u32 {
        assert!(self.len() <= 32);
        self.bits
            .iter()
            .fold(0u32, |acc, &b| (acc << 1) | u32::from(b))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn xor(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len());
        Self {
            bits: self
                .bits
                .iter()
                .zip(other.bits.iter())
                .map(|(a, b)| a ^ b)
                .collect(),
        }
    }

    pub fn hamming_distance(&self, other: &Self) -> usize {
        assert_eq!(self.len(), other.len());
        self.bits
            .iter()
            .zip(other.bits.iter())
            .filter(|(a, b)| a != b)
            .count()
    }
}

impl std::fmt::Display for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Split a message into two shares: `b1` uniform given the seed and
/// `b1 ⊕ b2 = message` exactly.
pub fn classical_share(message: &BitString, seed: u64) -> (BitString, BitString) {
    let mut rng = derive_rng(seed, "share", 0);
    let b1 = BitString::random(message.len(), &mut rng);
    let b2 = b1.xor(message);
    (b1, b2)
}

/// Codeword length required for reliable reconciliation:
/// `m = ⌈n (1 + h(q)) / 2⌉`.
pub fn codeword_length_bound(n: usize, q: f64) -> Result<usize, CodingError> {
    if !(0.0..=0.5).contains(&q) {
        return Err(CodingError::InvalidQber(q));
    }
    Ok((n as f64 * (1.0 + binary_entropy(q)) / 2.0).ceil() as usize)
}

/// A seeded random coding function `f: {0,1}ⁿ → {0,1}^m`, evaluated as a
/// pure keyed hash (no stored table).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomCode {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

impl RandomCode {
    pub fn new(n: usize, m: usize, seed: u64) -> Result<Self, CodingError> {
        if m > n {
            return Err(CodingError::CodewordTooLong { m, n });
        }
        Ok(Self { n, m, seed })
    }

    fn evaluate_int(&self, x: u32) -> u32 {
        let mut hasher = Sha256::new();
        hasher.update(b"qss-random-code/1");
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.n as u32).to_le_bytes());
        hasher.update((self.m as u32).to_le_bytes());
        hasher.update(x.to_le_bytes());
        let digest = hasher.finalize();
        // First m bits, MSB-first within each byte.
        let mut out = 0u32;
        for bit in 0..self.m {
            let byte = digest[bit / 8];
            let b = (byte >> (7 - bit % 8)) & 1;
            out = (out << 1) | u32::from(b);
        }
        out
    }

    pub fn evaluate(&self, input: &BitString) -> Result<BitString, CodingError> {
        if input.len() != self.n {
            return Err(CodingError::LengthMismatch {
                got: input.len(),
                expected: self.n,
            });
        }
        Ok(BitString::from_integer(
            self.evaluate_int(input.to_integer()),
            self.m,
        ))
    }
}

/// Enumerate all n-bit masks of Hamming weight `d` (Gosper's hack),
/// ascending.
fn masks_of_weight(n: usize, d: usize) -> Vec<u32> {
    if d == 0 {
        return vec![0];
    }
    if d > n {
        return Vec::new();
    }
    let limit = 1u64 << n;
    let mut out = Vec::new();
    let mut mask = (1u64 << d) - 1;
    while mask < limit {
        out.push(mask as u32);
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    out
}

/// Minimum-distance decoding over codeword preimage pairs.
///
/// Returns the pair `(b1', b2')` with `f(b1') = c1`, `f(b2') = c2`
/// minimizing the Hamming distance between `a` and `b1' ⊕ b2'`;
/// ties break to the lexicographically smallest `(b1', b2')`.
pub fn reconcile(
    a: &BitString,
    c1: &BitString,
    c2: &BitString,
    code: &RandomCode,
) -> Result<(BitString, BitString), CodingError> {
    let n = code.n;
    if n > MAX_SEARCH_BITS {
        return Err(CodingError::DeskScaleExceeded { n });
    }
    if a.len() != n {
        return Err(CodingError::LengthMismatch {
            got: a.len(),
            expected: n,
        });
    }
    for c in [c1, c2] {
        if c.len() != code.m {
            return Err(CodingError::LengthMismatch {
                got: c.len(),
                expected: code.m,
            });
        }
    }
    let target1 = c1.to_integer();
    let target2 = c2.to_integer();
    // Single pass over all inputs fills both preimage lists.
    let mut pre1: Vec<u32> = Vec::new();
    let mut pre2: HashSet<u32> = HashSet::new();
    for x in 0..(1u64 << n) as u32 {
        let fx = code.evaluate_int(x);
        if fx == target1 {
            pre1.push(x);
        }
        if fx == target2 {
            pre2.insert(x);
        }
    }
    if pre1.is_empty() || pre2.is_empty() {
        return Err(CodingError::EmptyPreimage);
    }
    let a_int = a.to_integer();
    for d in 0..=n {
        let masks = masks_of_weight(n, d);
        // pre1 is ascending, so the first hit is the lexicographically
        // smallest b1'; the smallest matching b2' is taken within it.
        for &x1 in &pre1 {
            let want = a_int ^ x1;
            let best_x2 = masks
                .iter()
                .map(|&mask| want ^ mask)
                .filter(|x2| pre2.contains(x2))
                .min();
            if let Some(x2) = best_x2 {
                return Ok((
                    BitString::from_integer(x1, n),
                    BitString::from_integer(x2, n),
                ));
            }
        }
    }
    unreachable!("distance n always admits a pair once preimages are nonempty")
}

/// Monte Carlo estimate of the reconciliation success probability.
#[derive(Debug, Clone, Serialize)]
pub struct EcReport {
    pub n: usize,
    pub m: usize,
    pub qber: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub stderr: f64,
    pub seed: u64,
    /// Trials that needed a fresh code seed after an empty preimage.
    pub retries: usize,
}

/// Run `trials` independent share → corrupt → reconcile experiments and
/// report the fraction recovering the true XOR string. Per-trial seeds
/// derive from `(seed, trial index)`.
pub fn ec_success_probability(
    n: usize,
    m: usize,
    q: f64,
    trials: usize,
    seed: u64,
) -> Result<EcReport, CodingError> {
    if n > MAX_SEARCH_BITS {
        return Err(CodingError::DeskScaleExceeded { n });
    }
    if !(0.0..=0.5).contains(&q) {
        return Err(CodingError::InvalidQber(q));
    }
    if m > n {
        return Err(CodingError::CodewordTooLong { m, n });
    }
    let mut successes = 0usize;
    let mut retries = 0usize;
    for trial in 0..trials {
        let mut rng = derive_rng(seed, "ec-trial", trial as u64);
        let b1 = BitString::random(n, &mut rng);
        let b2 = BitString::random(n, &mut rng);
        let truth = b1.xor(&b2);
        // Alice's noisy view of the XOR string.
        let noisy = BitString::new(
            truth
                .bits()
                .iter()
                .map(|&b| if rng.gen_bool(q) { b ^ 1 } else { b })
                .collect(),
        );
        let mut attempt = 0u64;
        loop {
            let code = RandomCode::new(n, m, rng.gen::<u64>().wrapping_add(attempt))?;
            let c1 = code.evaluate(&b1)?;
            let c2 = code.evaluate(&b2)?;
            match reconcile(&noisy, &c1, &c2, &code) {
                Ok((x1, x2)) => {
                    if x1.xor(&x2) == truth {
                        successes += 1;
                    }
                    break;
                }
                Err(CodingError::EmptyPreimage) if attempt < 4 => {
                    retries += 1;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    let rate = successes as f64 / trials as f64;
    Ok(EcReport {
        n,
        m,
        qber: q,
        trials,
        successes,
        success_rate: rate,
        stderr: (rate * (1.0 - rate) / trials as f64).sqrt(),
        seed,
        retries,
    })
}

/// Seeded Toeplitz two-universal hash, shortening `key` to `out_len` bits.
///
/// The Toeplitz matrix `T[i][j] = t[i - j + n - 1]` is filled from the
/// ChaCha8 stream `derive_rng(hash_seed, "toeplitz", 0)`; identical seeds
/// give identical matrices everywhere, so all parties stay synchronized.
pub fn privacy_amplify(
    key: &BitString,
    out_len: usize,
    hash_seed: u64,
) -> Result<BitString, CodingError> {
    let n = key.len();
    if out_len > n {
        return Err(CodingError::OutputTooLong {
            out_len,
            key_len: n,
        });
    }
    if out_len == 0 {
        return Ok(BitString::zeros(0));
    }
    let mut rng = derive_rng(hash_seed, "toeplitz", 0);
    let diag_bits: Vec<u8> = (0..out_len + n - 1).map(|_| rng.gen_range(0..2u8)).collect();
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let mut acc = 0u8;
        for (j, &kj) in key.bits().iter().enumerate() {
            acc ^= diag_bits[i + n - 1 - j] & kj;
        }
        out.push(acc);
    }
    Ok(BitString::new(out))
}

/// The sampled Toeplitz matrix itself (rows × key bits), for rank checks.
pub fn toeplitz_matrix(key_len: usize, out_len: usize, hash_seed: u64) -> Vec<Vec<u8>> {
    let mut rng = derive_rng(hash_seed, "toeplitz", 0);
    let diag_bits: Vec<u8> = (0..out_len + key_len - 1)
        .map(|_| rng.gen_range(0..2u8))
        .collect();
    (0..out_len)
        .map(|i| (0..key_len).map(|j| diag_bits[i + key_len - 1 - j]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn share_reconstructs_message() {
        let message = BitString::from_integer(0b1011_0010, 8);
        let (b1, b2) = classical_share(&message, 42);
        assert_eq!(b1.xor(&b2), message);
        let zero = BitString::zeros(4);
        let (z1, z2) = classical_share(&zero, 7);
        assert_eq!(z1.xor(&z2), zero);
        // Different seeds give different first shares (with overwhelming
        // probability at this length).
        let (other, _) = classical_share(&message, 43);
        assert_ne!(b1, other);
    }

    #[test]
    fn share_first_component_looks_uniform() {
        let message = BitString::zeros(16);
        let mut ones = 0usize;
        for seed in 0..200u64 {
            let (b1, _) = classical_share(&message, seed);
            ones += b1.bits().iter().filter(|&&b| b == 1).count();
        }
        let total = 200.0 * 16.0;
        let rate = ones as f64 / total;
        assert!((rate - 0.5).abs() < 0.05, "one-rate {rate}");
    }

    #[test]
    fn codeword_length_bound_reference_values() {
        assert_eq!(codeword_length_bound(100, 0.0).unwrap(), 50);
        assert_eq!(codeword_length_bound(100, 0.5).unwrap(), 100);
        assert_eq!(codeword_length_bound(100, 0.11).unwrap(), 75);
        assert!(codeword_length_bound(100, 0.6).is_err());
        // Monotone nondecreasing in q.
        let mut last = 0;
        for step in 0..=50 {
            let q = step as f64 / 100.0;
            let m = codeword_length_bound(64, q).unwrap();
            assert!(m >= last);
            last = m;
        }
    }

    #[test]
    fn random_code_is_deterministic_and_stateless() {
        let code = RandomCode::new(12, 7, 99).unwrap();
        let x = BitString::from_integer(0b1010_1100_1010 & 0xfff, 12);
        let one = code.evaluate(&x).unwrap();
        let two = code.evaluate(&x).unwrap();
        assert_eq!(one, two);
        assert_eq!(one.len(), 7);
        let other_seed = RandomCode::new(12, 7, 100).unwrap();
        // Codewords under an independent seed differ somewhere over a
        // small sample.
        let differs = (0..64u32).any(|v| {
            let input = BitString::from_integer(v, 12);
            code.evaluate(&input).unwrap() != other_seed.evaluate(&input).unwrap()
        });
        assert!(differs);
        assert!(RandomCode::new(8, 9, 0).is_err());
    }

    #[test]
    fn reconcile_recovers_exact_xor_at_zero_noise() {
        for trial in 0..10u64 {
            let mut rng = derive_rng(555, "test", trial);
            let n = 10;
            let code = RandomCode::new(n, 6, rng.gen()).unwrap();
            let b1 = BitString::random(n, &mut rng);
            let b2 = BitString::random(n, &mut rng);
            let a = b1.xor(&b2);
            let c1 = code.evaluate(&b1).unwrap();
            let c2 = code.evaluate(&b2).unwrap();
            let (x1, x2) = reconcile(&a, &c1, &c2, &code).unwrap();
            // Any distance-0 pair has the correct XOR.
            assert_eq!(x1.xor(&x2), a);
        }
    }

    #[test]
    fn reconcile_with_full_length_code_recovers_inputs() {
        // At m = n preimages are usually unique, giving exact recovery of
        // the pair itself, not just its XOR.
        let n = 8;
        let mut rng = derive_rng(7, "test", 0);
        'outer: for _ in 0..20 {
            let code = RandomCode::new(n, n, rng.gen()).unwrap();
            let b1 = BitString::random(n, &mut rng);
            let b2 = BitString::random(n, &mut rng);
            let c1 = code.evaluate(&b1).unwrap();
            let c2 = code.evaluate(&b2).unwrap();
            // Require unique preimages for this instance.
            for target in [&c1, &c2] {
                let hits = (0..(1u32 << n))
                    .filter(|&x| {
                        code.evaluate(&BitString::from_integer(x, n)).unwrap() == *target
                    })
                    .count();
                if hits != 1 {
                    continue 'outer;
                }
            }
            let a = b1.xor(&b2);
            let (x1, x2) = reconcile(&a, &c1, &c2, &code).unwrap();
            assert_eq!(x1, b1);
            assert_eq!(x2, b2);
            return;
        }
        panic!("no unique-preimage instance found in 20 seeds");
    }

    #[test]
    fn longer_codewords_reconcile_better() {
        let n = 12;
        let bound = codeword_length_bound(n, 0.1).unwrap();
        let high = ec_success_probability(n, (bound + 4).min(n), 0.1, 120, 31).unwrap();
        let low = ec_success_probability(n, bound - 4, 0.1, 120, 31).unwrap();
        assert!(
            high.success_rate > low.success_rate,
            "high {} low {}",
            high.success_rate,
            low.success_rate
        );
    }

    #[test]
    fn zero_length_codewords_carry_no_information() {
        // With m = 0 the codewords tell Alice nothing: the minimum-distance
        // pair reproduces her own noisy string, so at q = 1/2 success is
        // pure chance at the 2^-n scale.
        let report = ec_success_probability(8, 0, 0.5, 200, 3).unwrap();
        assert!(report.success_rate < 0.05, "{}", report.success_rate);
    }

    #[test]
    fn ec_is_perfect_at_zero_noise() {
        let m = codeword_length_bound(14, 0.0).unwrap();
        let report = ec_success_probability(14, m, 0.0, 50, 9).unwrap();
        assert_eq!(report.success_rate, 1.0);
        assert_eq!(report.retries, 0);
    }

    #[test]
    fn ec_rejects_oversized_blocks() {
        assert!(matches!(
            ec_success_probability(25, 10, 0.1, 10, 0),
            Err(CodingError::DeskScaleExceeded { n: 25 })
        ));
    }

    #[test]
    fn privacy_amplification_is_deterministic() {
        let key = BitString::from_integer(0b1101_0110, 8);
        let a = privacy_amplify(&key, 5, 77).unwrap();
        let b = privacy_amplify(&key, 5, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(privacy_amplify(&key, 9, 77).is_err());
    }

    #[test]
    fn single_bit_flips_toggle_output_bits_half_the_time() {
        let n = 16;
        let key = BitString::from_integer(0xbeef & 0xffff, n);
        let flipped = BitString::from_integer((0xbeef ^ 0x0400) & 0xffff, n);
        let mut toggles = 0usize;
        let mut total = 0usize;
        for seed in 0..300u64 {
            let h1 = privacy_amplify(&key, 8, seed).unwrap();
            let h2 = privacy_amplify(&flipped, 8, seed).unwrap();
            toggles += h1.hamming_distance(&h2);
            total += 8;
        }
        let rate = toggles as f64 / total as f64;
        assert!((rate - 0.5).abs() < 0.06, "toggle rate {rate}");
    }

    fn gf2_rank(mut rows: Vec<Vec<u8>>) -> usize {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut rank = 0usize;
        for col in 0..cols {
            let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][col] == 1) else {
                continue;
            };
            rows.swap(rank, pivot);
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row[col] == 1 {
                    for (x, p) in row.iter_mut().zip(pivot_row.iter()) {
                        *x ^= p;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn square_toeplitz_instances_can_be_invertible() {
        let n = 10;
        let seed = (0..200u64)
            .find(|&s| gf2_rank(toeplitz_matrix(n, n, s)) == n)
            .expect("some seed gives a full-rank square instance");
        // Full rank over GF(2) plus linearity makes the map bijective:
        // distinct inputs hash to distinct outputs.
        let x = BitString::from_integer(0b11001_01101 & 0x3ff, n);
        let y = BitString::from_integer(0b11001_01100 & 0x3ff, n);
        let hx = privacy_amplify(&x, n, seed).unwrap();
        let hy = privacy_amplify(&y, n, seed).unwrap();
        assert_ne!(hx, hy);
    }

    #[test]
    fn pipeline_keeps_parties_synchronized() {
        // share → corrupt → reconcile → amplify; all parties end with the
        // same final string whenever reconciliation succeeded.
        let n = 12;
        let q = 0.08;
        let m = codeword_length_bound(n, q).unwrap().min(n);
        let mut successes = 0;
        for trial in 0..60u64 {
            let mut rng = derive_rng(2024, "pipeline", trial);
            let message = BitString::random(n, &mut rng);
            let (b1, b2) = classical_share(&message, rng.gen());
            let noisy = BitString::new(
                message
                    .bits()
                    .iter()
                    .map(|&b| if rng.gen_bool(q) { b ^ 1 } else { b })
                    .collect(),
            );
            let code = RandomCode::new(n, m, rng.gen()).unwrap();
            let c1 = code.evaluate(&b1).unwrap();
            let c2 = code.evaluate(&b2).unwrap();
            let (x1, x2) = reconcile(&noisy, &c1, &c2, &code).unwrap();
            if x1.xor(&x2) == message {
                successes += 1;
                let hash_seed = rng.gen();
                let alice = privacy_amplify(&x1.xor(&x2), 6, hash_seed).unwrap();
                let bobs = privacy_amplify(&b1.xor(&b2), 6, hash_seed).unwrap();
                assert_eq!(alice, bobs);
            }
        }
        assert!(successes > 30, "only {successes}/60 reconciled");
    }

    proptest! {
        #[test]
        fn share_roundtrip_property(value in 0u32..u32::MAX, seed in 0u64..1000) {
            let message = BitString::from_integer(value, 32);
            let (b1, b2) = classical_share(&message, seed);
            prop_assert_eq!(b1.xor(&b2), message);
        }

        #[test]
        fn masks_have_requested_weight(n in 1usize..12, d in 0usize..6) {
            for mask in masks_of_weight(n, d.min(n)) {
                prop_assert_eq!(mask.count_ones() as usize, d.min(n));
                prop_assert!(mask < (1u32 << n));
            }
        }
    }
}
