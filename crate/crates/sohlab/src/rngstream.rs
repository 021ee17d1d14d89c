//! Counter-based random streams.
//!
//! Each (seed, step, particle) triple maps to an independent generator
//! state through a few rounds of 64-bit mixing, so the random numbers a
//! particle consumes in a given step do not depend on evaluation order.
//! Serial and parallel runs therefore produce bit-identical trajectories.

use rand_core::{impls, RngCore};

/// Finalizer from SplitMix64 / MurmurHash3.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A small generator whose state is derived from a counter triple.
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
    inc: u64,
}

impl CounterRng {
    /// Stream for `particle` at `step` of the run identified by `seed`.
    pub fn for_particle(seed: u64, step: u64, particle: u64) -> Self {
        let a = mix64(seed ^ mix64(step));
        let b = mix64(a ^ mix64(particle).rotate_left(17));
        // Distinct odd increment per stream keeps streams decorrelated.
        Self { state: mix64(b), inc: (mix64(b ^ 0xda942042e4dd58b5) | 1) }
    }

    /// Stream not tied to a particle (e.g. initial-condition sampling).
    pub fn for_purpose(seed: u64, purpose: u64) -> Self {
        Self::for_particle(seed, 0xffff_ffff_ffff_0000 | purpose, 0)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(self.inc);
        mix64(self.state)
    }

    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand_core::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
