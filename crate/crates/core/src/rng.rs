//! Seeded random streams with counter-derived substreams.
//!
//! A [`RngStream`] remembers the key it was built from, so substreams are a
//! pure function of `(key, index)` and never depend on how many numbers the
//! parent has already produced. Simulations split their work into fixed
//! blocks and give block `b` the substream `b`; the result is then the same
//! whatever the number of worker threads.

use rand::{Error, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Years simulated per parallel work unit.
pub const BLOCK_SIZE: usize = 2048;

#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    inner: Xoshiro256PlusPlus,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::from_key(splitmix(seed))
    }

    fn from_key(key: u64) -> Self {
        RngStream {
            key,
            inner: Xoshiro256PlusPlus::seed_from_u64(key),
        }
    }

    /// Independent child stream `index`; does not advance `self`.
    pub fn substream(&self, index: u64) -> Self {
        Self::from_key(splitmix(self.key ^ splitmix(index.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Child stream named by a label, e.g. one per bank size in a study.
    pub fn labelled(&self, label: &str) -> Self {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Self::from_key(splitmix(self.key.rotate_left(17) ^ h))
    }

    /// Uniform draw on the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Splits `0..total` into [`BLOCK_SIZE`] chunks, runs `work` on each chunk with
/// its own substream (in parallel), and concatenates the outputs in order.
pub fn par_blocks<T, F>(total: usize, stream: &RngStream, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>, &mut RngStream) -> Vec<T> + Sync,
{
    use rayon::prelude::*;
    let blocks = total.div_ceil(BLOCK_SIZE);
    let parts: Vec<Vec<T>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_SIZE;
            let end = (start + BLOCK_SIZE).min(total);
            let mut s = stream.substream(b as u64);
            work(start..end, &mut s)
        })
        .collect();
    let mut out = Vec::with_capacity(total);
    for p in parts {
        out.extend(p);
    }
    out
}
