use crate::error::{Error, Result};

use super::{Scalar, Shape, Tensor};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64. Chosen over an external generator because the contract here is
/// stronger than "random enough": the same seed must reproduce the same
/// stream bit-for-bit on every platform and stay frozen across dependency
/// upgrades. Ten lines of arithmetic we own is the cheapest way to get that.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// A generator at a reproducible offset from `seed`, independent of any
    /// draws made elsewhere. Used to give each sentence / worker / purpose its
    /// own stream without threading one generator through everything.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Rng {
            state: mix(seed ^ stream.wrapping_mul(GAMMA).rotate_left(17)),
        }
    }

    /// Splits off a child generator, advancing this one by a single draw.
    pub fn fork(&mut self) -> Rng {
        Rng {
            state: mix(self.next_u64()),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in [0, n). `n` must be positive.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_index needs a non-empty range");
        (self.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle, fixed iteration order.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_index(i + 1);
            xs.swap(i, j);
        }
    }
}

/// A drawn dropout mask, kept around so the backward pass can replay exactly
/// the scaling the forward pass applied. Entries are 0 or 1/(1-p).
#[derive(Debug, Clone)]
pub struct DropoutMask<S: Scalar = f64> {
    rate: f64,
    scale: Tensor<S>,
}

impl<S: Scalar> DropoutMask<S> {
    pub fn draw(shape: Shape, p: f64, rng: &mut Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout rate {p} outside [0, 1)")));
        }
        let keep = S::from_f64(1.0 / (1.0 - p));
        let data = (0..shape.numel())
            .map(|_| if rng.next_f64() < p { S::zero() } else { keep })
            .collect();
        Ok(DropoutMask {
            rate: p,
            scale: Tensor::new(shape, data).expect("shape/data built together"),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn apply(&self, t: &Tensor<S>) -> Result<Tensor<S>> {
        super::hadamard(&self.scale, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference outputs of SplitMix64 seeded with 0, as published with the
    // original algorithm. If these ever change, cross-platform determinism
    // is broken and every seeded artifact in the project is invalidated.
    #[test]
    fn splitmix64_reference_stream() {
        let mut rng = Rng::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(77);
        let mut b = Rng::new(77);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derive_is_pure_and_distinct() {
        let a: Vec<u64> = {
            let mut r = Rng::derive(5, 3);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Rng::derive(5, 3);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        let mut other = Rng::derive(5, 4);
        assert_ne!(a[0], other.next_u64());
    }

    #[test]
    fn fork_children_differ_from_parent_stream() {
        let mut parent = Rng::new(11);
        let mut c1 = parent.fork();
        let mut c2 = parent.fork();
        assert_ne!(c1.next_u64(), c2.next_u64());
    }

    #[test]
    fn next_f64_in_unit_interval() {
        let mut rng = Rng::new(42);
        for _ in 0..1000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn shuffle_is_seed_deterministic() {
        let mut xs: Vec<u32> = (0..20).collect();
        let mut ys: Vec<u32> = (0..20).collect();
        Rng::new(3).shuffle(&mut xs);
        Rng::new(3).shuffle(&mut ys);
        assert_eq!(xs, ys);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }
}
