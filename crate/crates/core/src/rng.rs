//! Counter-based random numbers (Philox4x32-10).
//!
//! Every draw is a pure function of `(seed, domain, index, draw)`, so any
//! pixel's noise can be regenerated independently of evaluation order or
//! thread count. The 128-bit counter is `[index_lo, index_hi, draw, domain]`
//! and the 64-bit key is `[seed_lo, seed_hi]`.
//!
//! Derived values:
//! - `uniform`: the first two output words form `u = (w0 << 32) | w1`;
//!   the result is `(u >> 11) · 2⁻⁵³` in `[0, 1)`.
//! - `normal`: Box–Muller on the block, `u1 = ((u >> 11) + 1) · 2⁻⁵³` from
//!   words 0–1, `u2` from words 2–3, `z = √(−2 ln u1) · cos(2π u2)`.
//! - `below(n)`: `⌊u · n / 2⁶⁴⌋` using words 0–1.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;
const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// Raw Philox4x32 with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut key = key;
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(W0);
            key[1] = key[1].wrapping_add(W1);
        }
        let p0 = u64::from(M0) * u64::from(ctr[0]);
        let p1 = u64::from(M1) * u64::from(ctr[2]);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

/// Stream family keyed by a 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn block(&self, domain: u32, index: u64, draw: u32) -> [u32; 4] {
        philox4x32_10([index as u32, (index >> 32) as u32, draw, domain], [self.seed as u32, (self.seed >> 32) as u32])
    }

    #[inline]
    fn word64(words: &[u32]) -> u64 {
        (u64::from(words[0]) << 32) | u64::from(words[1])
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&self, domain: u32, index: u64, draw: u32) -> f64 {
        let b = self.block(domain, index, draw);
        (Self::word64(&b[..2]) >> 11) as f64 * TWO_POW_M53
    }

    /// Standard normal variate.
    pub fn normal(&self, domain: u32, index: u64, draw: u32) -> f64 {
        let b = self.block(domain, index, draw);
        let u1 = ((Self::word64(&b[..2]) >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = (Self::word64(&b[2..]) >> 11) as f64 * TWO_POW_M53;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Integer in `[0, n)`; `n` must be positive.
    pub fn below(&self, domain: u32, index: u64, draw: u32, n: u64) -> u64 {
        debug_assert!(n > 0);
        let b = self.block(domain, index, draw);
        ((u128::from(Self::word64(&b[..2])) * u128::from(n)) >> 64) as u64
    }

    /// Integer in the inclusive range `[lo, hi]`.
    pub fn inclusive(&self, domain: u32, index: u64, draw: u32, lo: u64, hi: u64) -> u64 {
        lo + self.below(domain, index, draw, hi - lo + 1)
    }
}
