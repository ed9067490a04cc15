//! Counter-based random streams and the mini-batch sampling contract.
//!
//! A stream is addressed by `(seed, stream_id, counter)`. The underlying
//! generator is ChaCha8, whose keystream position is the counter, so two
//! streams with different ids never overlap and any position can be
//! reconstructed without replaying the prefix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Stream ids used by the solver for a single run.
pub mod streams {
    /// Mini-batch draws for the gradient oracle.
    pub const BATCH: u64 = 0;
    /// Selection of the uniformly random output iterate.
    pub const OUTPUT: u64 = 1;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self::at(seed, stream_id, 0)
    }

    /// Reconstructs the stream positioned at `counter` (in 32-bit words).
    pub fn at(seed: u64, stream_id: u64, counter: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        rng.set_word_pos(u128::from(counter));
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.rng.get_word_pos() as u64
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Draws `q` i.i.d. samples from `space`.
    pub fn draw_batch(&mut self, space: &SampleSpace, q: usize) -> Result<MiniBatch> {
        if q == 0 {
            return Err(Error::contract("batch size must be at least 1"));
        }
        let batch = match space {
            SampleSpace::Uniform { n } => MiniBatch::Indices((0..q).map(|_| self.index(*n)).collect()),
            SampleSpace::Categorical { cumulative } => MiniBatch::Indices(
                (0..q)
                    .map(|_| {
                        let u = self.uniform();
                        let i = cumulative.partition_point(|&c| c <= u);
                        i.min(cumulative.len() - 1)
                    })
                    .collect(),
            ),
            SampleSpace::Gaussian { dim } => MiniBatch::Gaussian {
                dim: *dim,
                draws: (0..q * dim).map(|_| self.standard_normal()).collect(),
            },
        };
        Ok(batch)
    }
}

/// Distribution a problem's samples `ξ` are drawn from.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleSpace {
    /// Finite sum: index uniform over `0..n`.
    Uniform { n: usize },
    /// Index drawn with the given cumulative probabilities (last entry 1).
    Categorical { cumulative: Vec<f64> },
    /// Standard-normal noise vector of length `dim` per sample.
    Gaussian { dim: usize },
}

impl SampleSpace {
    pub fn categorical(probabilities: &[f64]) -> Result<Self> {
        if probabilities.is_empty() || probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::contract("categorical weights must be finite and non-negative"));
        }
        let total: f64 = probabilities.iter().sum();
        if total <= 0.0 {
            return Err(Error::contract("categorical weights must not all be zero"));
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = probabilities
            .iter()
            .map(|p| {
                acc += p / total;
                acc
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(SampleSpace::Categorical { cumulative })
    }
}

/// One mini-batch `B = {ξᵢ}`, `i = 1..q`.
#[derive(Clone, Debug, PartialEq)]
pub enum MiniBatch {
    Indices(Vec<usize>),
    /// Row-major `q × dim` standard-normal draws.
    Gaussian { dim: usize, draws: Vec<f64> },
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        match self {
            MiniBatch::Indices(idx) => idx.len(),
            MiniBatch::Gaussian { dim, draws } => draws.len() / dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_from_same_position() {
        let space = SampleSpace::Gaussian { dim: 2 };
        let rng = RngStream::at(42, 3, 17);
        let a = rng.clone().draw_batch(&space, 8).unwrap();
        let b = rng.clone().draw_batch(&space, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn counter_reconstructs_position() {
        let space = SampleSpace::Gaussian { dim: 3 };
        let mut rng = RngStream::new(9, 0);
        rng.draw_batch(&space, 5).unwrap();
        let resumed = RngStream::at(9, 0, rng.counter());
        assert_eq!(
            rng.draw_batch(&space, 4).unwrap(),
            resumed.clone().draw_batch(&space, 4).unwrap()
        );
    }

    #[test]
    fn degenerate_and_empty_batches() {
        let mut rng = RngStream::new(1, 0);
        let b = rng.draw_batch(&SampleSpace::Uniform { n: 5 }, 1).unwrap();
        assert_eq!(b.len(), 1);
        assert!(rng.draw_batch(&SampleSpace::Uniform { n: 5 }, 0).is_err());
    }

    #[test]
    fn streams_are_distinct_and_centred() {
        let space = SampleSpace::Gaussian { dim: 1 };
        let q = 10_000;
        let mut means = Vec::new();
        for id in 0..2 {
            let mut rng = RngStream::new(2024, id);
            let MiniBatch::Gaussian { draws, .. } = rng.draw_batch(&space, q).unwrap() else {
                unreachable!()
            };
            means.push(draws.iter().sum::<f64>() / q as f64);
        }
        for m in &means {
            assert!(m.abs() < 4.0 / (q as f64).sqrt(), "mean {m}");
        }
        assert_ne!(means[0], means[1]);
    }

    #[test]
    fn categorical_frequencies() {
        let space = SampleSpace::categorical(&[0.2, 0.0, 0.8]).unwrap();
        let mut rng = RngStream::new(5, 0);
        let MiniBatch::Indices(idx) = rng.draw_batch(&space, 20_000).unwrap() else {
            unreachable!()
        };
        assert!(idx.iter().all(|&i| i != 1));
        let share = idx.iter().filter(|&&i| i == 0).count() as f64 / idx.len() as f64;
        assert!((share - 0.2).abs() < 0.015, "share {share}");
    }
}
