//! Universal hashing with random binary Toeplitz matrices.
//!
//! An `m × n` Toeplitz matrix is fixed by `n + m − 1` diagonal bits `r`:
//! `T[i][j] = r[i − j + n − 1]`. The diagonal is drawn from a ChaCha stream
//! keyed by the public seed.

use crate::rng::{streams, RngStream};

fn pack_words(bits: impl ExactSizeIterator<Item = bool>) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, b) in bits.enumerate() {
        if b {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

/// The `n + m − 1` diagonal bits for a seed.
pub fn toeplitz_diagonal(seed: u64, input_len: usize, output_len: usize) -> Vec<bool> {
    let len = (input_len + output_len).saturating_sub(1);
    let mut rng = RngStream::new(seed, streams::HASH);
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let w = rng.next_u64();
        for k in 0..64 {
            if out.len() == len {
                break;
            }
            out.push((w >> k) & 1 == 1);
        }
    }
    out
}

/// `T · x` over GF(2).
pub fn toeplitz_hash(input: &[bool], output_len: usize, seed: u64) -> Vec<bool> {
    let n = input.len();
    if n == 0 || output_len == 0 {
        return vec![false; output_len];
    }
    let diag = toeplitz_diagonal(seed, n, output_len);
    // With x' the reversed input, output bit i is parity(r[i .. i+n] · x').
    let x_rev = pack_words(input.iter().rev().copied());
    let r = pack_words(diag.iter().copied());
    let words = x_rev.len();
    let tail_bits = n % 64;
    let tail_mask = if tail_bits == 0 {
        u64::MAX
    } else {
        (1u64 << tail_bits) - 1
    };
    (0..output_len)
        .map(|i| {
            let (base, shift) = (i / 64, i % 64);
            let mut acc = 0u64;
            for (w, xw) in x_rev.iter().enumerate() {
                let lo = r[base + w] >> shift;
                let hi = if shift == 0 {
                    0
                } else {
                    r.get(base + w + 1).map_or(0, |v| v << (64 - shift))
                };
                let mut window = lo | hi;
                if w + 1 == words {
                    window &= tail_mask;
                }
                acc ^= window & xw;
            }
            acc.count_ones() & 1 == 1
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Explicit matrix-vector product, independent of the word-packed path.
    fn naive(input: &[bool], m: usize, seed: u64) -> Vec<bool> {
        let n = input.len();
        let r = toeplitz_diagonal(seed, n, m);
        (0..m)
            .map(|i| (0..n).fold(false, |acc, j| acc ^ (r[i + n - 1 - j] & input[j])))
            .collect()
    }

    #[test]
    fn matches_explicit_matrix() {
        let mut rng = RngStream::new(9, 99);
        for &(n, m) in &[(1, 1), (7, 3), (64, 64), (65, 10), (200, 130), (129, 1)] {
            let input: Vec<bool> = (0..n).map(|_| rng.bit()).collect();
            assert_eq!(
                toeplitz_hash(&input, m, 17),
                naive(&input, m, 17),
                "n={n} m={m}"
            );
        }
    }

    #[test]
    fn degenerate_sizes() {
        assert!(toeplitz_hash(&[true, false], 0, 1).is_empty());
        assert_eq!(toeplitz_hash(&[], 3, 1), vec![false; 3]);
    }

    #[test]
    fn is_linear() {
        let mut rng = RngStream::new(10, 99);
        let a: Vec<bool> = (0..300).map(|_| rng.bit()).collect();
        let b: Vec<bool> = (0..300).map(|_| rng.bit()).collect();
        let ab: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let ha = toeplitz_hash(&a, 77, 5);
        let hb = toeplitz_hash(&b, 77, 5);
        let hab = toeplitz_hash(&ab, 77, 5);
        let sum: Vec<bool> = ha.iter().zip(&hb).map(|(x, y)| x ^ y).collect();
        assert_eq!(hab, sum);
    }

    proptest! {
        #[test]
        fn packed_equals_naive(bits in proptest::collection::vec(any::<bool>(), 1..300),
                               m in 1usize..150, seed in any::<u64>()) {
            prop_assert_eq!(toeplitz_hash(&bits, m, seed), naive(&bits, m, seed));
        }
    }
}
