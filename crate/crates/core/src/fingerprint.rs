//! 64-bit state digests.
//!
//! Per-object digests are combined by wrapping addition, which is commutative
//! and associative, so the whole-model digest does not depend on the order in
//! which objects (or threads) contribute.

use std::fmt;

use crate::rng::splitmix64;
use crate::time::EventKey;

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub u64);

impl Fingerprint {
    pub const EMPTY: Fingerprint = Fingerprint(0);

    pub fn combine(self, other: Fingerprint) -> Fingerprint {
        Fingerprint(self.0.wrapping_add(other.0))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl std::iter::Sum for Fingerprint {
    fn sum<I: Iterator<Item = Fingerprint>>(iter: I) -> Self {
        iter.fold(Fingerprint::EMPTY, Fingerprint::combine)
    }
}

const LEN_SALT: u64 = 0x6A09_E667_F3BC_C908;

/// Word-at-a-time mixing hash over a byte string.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h = splitmix64(bytes.len() as u64 ^ LEN_SALT);
    let mut chunks = bytes.chunks_exact(8);
    for c in &mut chunks {
        let w = u64::from_le_bytes(c.try_into().unwrap());
        h = splitmix64(h ^ w);
    }
    let rest = chunks.remainder();
    if !rest.is_empty() {
        let mut buf = [0u8; 8];
        buf[..rest.len()].copy_from_slice(rest);
        h = splitmix64(h ^ u64::from_le_bytes(buf) ^ 0xFF);
    }
    h
}

pub fn fingerprint_object(state_bytes: &[u8]) -> Fingerprint {
    Fingerprint(hash_bytes(state_bytes))
}

pub fn combine(a: Fingerprint, b: Fingerprint) -> Fingerprint {
    a.combine(b)
}

pub fn hash_key(key: &EventKey) -> u64 {
    let mut h = splitmix64(key.ts.to_ordered_bits());
    h = splitmix64(h ^ ((key.dst.0 as u64) << 32 | key.src.0 as u64));
    splitmix64(h ^ key.seq)
}

/// Order-sensitive digest of one object's committed key sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceDigest {
    pub digest: u64,
    pub count: u64,
}

impl TraceDigest {
    #[inline]
    pub fn push(&mut self, key: &EventKey) {
        self.digest = splitmix64(self.digest.rotate_left(17) ^ hash_key(key));
        self.count += 1;
    }
}

/// Digest of one object at a commit point: its state bytes folded with its
/// committed key trace.
pub fn object_digest(state_bytes: &[u8], trace: &TraceDigest) -> Fingerprint {
    let s = hash_bytes(state_bytes);
    Fingerprint(splitmix64(s ^ trace.digest.rotate_left(32) ^ splitmix64(trace.count)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn identical_bytes_identical_digest() {
        let a = b"the same state".to_vec();
        assert_eq!(fingerprint_object(&a), fingerprint_object(&a.clone()));
        assert_ne!(fingerprint_object(b""), fingerprint_object(b"\0"));
    }

    #[test]
    fn combine_commutes_and_associates() {
        let (a, b, c) = (fingerprint_object(b"a"), fingerprint_object(b"b"), fingerprint_object(b"c"));
        assert_eq!(combine(a, b), combine(b, a));
        assert_eq!(combine(combine(a, b), c), combine(a, combine(b, c)));
    }

    #[test]
    fn single_byte_perturbations_are_detected() {
        // Brute-force oracle over 10^5 random perturbations.
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        let mut collisions = 0u32;
        let trials = 100_000;
        for _ in 0..trials {
            let len = rng.random_range(1..200usize);
            let base: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            let mut other = base.clone();
            let at = rng.random_range(0..len);
            other[at] ^= rng.random_range(1..=255u8);
            if fingerprint_object(&base) == fingerprint_object(&other) {
                collisions += 1;
            }
        }
        assert!(collisions as f64 / trials as f64 <= 1e-4, "{collisions} collisions");
    }

    #[test]
    fn trace_digest_is_order_sensitive() {
        use crate::time::{ObjectId, VirtualTime};
        let k = |ts: f64, seq| EventKey { ts: VirtualTime::new(ts).unwrap(), dst: ObjectId(0), src: ObjectId(1), seq };
        let (mut a, mut b) = (TraceDigest::default(), TraceDigest::default());
        a.push(&k(1.0, 0));
        a.push(&k(2.0, 1));
        b.push(&k(2.0, 1));
        b.push(&k(1.0, 0));
        assert_ne!(a, b);
    }
}
