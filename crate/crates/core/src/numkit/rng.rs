//! Splittable deterministic random number generator.
//!
//! The stream is a counter-based SplitMix64: the state advances by a fixed
//! odd increment and each output is a finalizer hash of the state. Output
//! is a pure function of (seed, draw index), and `split` derives a child
//! seed by hashing the parent state together with the key, so the whole
//! stream tree is reproducible from the master seed alone.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLIT_SALT: u64 = 0xD1B5_4A32_D192_ED03;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        RngStream {
            state: mix64(seed ^ GOLDEN_GAMMA),
            stream_id: 0,
        }
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives a child stream from the current state and `key` without
    /// advancing the parent. The same (parent state, key) always yields the
    /// same child; splitting after further draws yields a different one.
    pub fn split(&self, key: u64) -> RngStream {
        let child = mix64(self.state ^ mix64(key.wrapping_mul(GOLDEN_GAMMA) ^ SPLIT_SALT));
        RngStream {
            state: child,
            stream_id: key,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform in `[0, n)`. The modulo bias is below `n / 2^64`, far under
    /// anything observable at simulator scale.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_index on empty range");
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller. Each call consumes exactly two
    /// uniforms and returns the cosine branch, keeping the draw sequence a
    /// simple function of the call count.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1], safe for ln
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_index(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Deterministic child stream; same `(parent, key)` always yields the same
/// child sequence.
pub fn split_rng(parent: &RngStream, key: u64) -> RngStream {
    parent.split(key)
}
