//! Counter-addressable Gaussian noise.
//!
//! Every normal variate is a pure function of `(seed, stream, index)`: the
//! ChaCha8 keystream for `(seed, stream)` is split into 128-bit blocks, block
//! `k` feeds one Box-Muller transform and yields variates `2k` and `2k + 1`.
//! Any slice of indices can therefore be generated independently of the
//! others, which keeps parallel and sequential runs bitwise identical.
//! [`fill_block_normals`] trades per-variate addressing for speed.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

const TWO_PI: f64 = std::f64::consts::TAU;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Uniform on `(0, 1]` from the top 53 bits.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * INV_2_53
}

#[inline]
fn box_muller(b1: u64, b2: u64) -> (f64, f64) {
    let r = (-2.0 * open_unit(b1).ln()).sqrt();
    let (s, c) = (TWO_PI * open_unit(b2)).sin_cos();
    (r * c, r * s)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Writes the standard normal variates with indices `start..start + out.len()`
/// of stream `stream` under key `seed`.
pub fn fill_normals(seed: u64, stream: u64, start: u64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let mut rng = stream_rng(seed, stream);
    let first_pair = start / 2;
    // each pair consumes two u64 = four 32-bit words
    rng.set_word_pos(u128::from(first_pair) * 4);
    let mut i = 0;
    if start % 2 == 1 {
        let (_, z1) = box_muller(rng.next_u64(), rng.next_u64());
        out[0] = z1;
        i = 1;
    }
    while i + 1 < out.len() {
        let (z0, z1) = box_muller(rng.next_u64(), rng.next_u64());
        out[i] = z0;
        out[i + 1] = z1;
        i += 2;
    }
    if i < out.len() {
        let (z0, _) = box_muller(rng.next_u64(), rng.next_u64());
        out[i] = z0;
    }
}

/// 32-bit words reserved per block in [`fill_block_normals`].
const BLOCK_WORDS: u128 = 1 << 32;

/// Fills `out` with standard normals (ziggurat method) from block `block` of
/// stream `stream`. Each block owns a disjoint window of the keystream, so
/// the output depends only on `(seed, stream, block, out.len())`. Faster
/// than [`fill_normals`] but addressable per block rather than per variate.
pub fn fill_block_normals(seed: u64, stream: u64, block: u64, out: &mut [f64]) {
    let mut rng = stream_rng(seed, stream);
    rng.set_word_pos(u128::from(block) * BLOCK_WORDS);
    for z in out.iter_mut() {
        *z = StandardNormal.sample(&mut rng);
    }
}

/// Sequential reader over one `(seed, stream)` normal sequence.
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            rng: stream_rng(seed, stream),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (z0, z1) = box_muller(self.rng.next_u64(), self.rng.next_u64());
        self.spare = Some(z1);
        z0
    }

    /// Uniform on `(0, 1]`.
    pub fn next_uniform(&mut self) -> f64 {
        open_unit(self.rng.next_u64())
    }
}
