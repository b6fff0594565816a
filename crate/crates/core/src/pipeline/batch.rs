use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// Distinct frames drawn uniformly, returned in increasing order.
    Uniform,
    /// Consecutive frames from a uniformly drawn start.
    Segment,
}

/// Frame indices for one optimizer step. Requests of at least `frames`
/// return every frame.
pub fn sample_batch<R: Rng + ?Sized>(frames: usize, size: usize, mode: BatchMode, rng: &mut R) -> Vec<usize> {
    if size >= frames {
        return (0..frames).collect();
    }
    match mode {
        BatchMode::Uniform => {
            let mut v = sample(rng, frames, size).into_vec();
            v.sort_unstable();
            v
        }
        BatchMode::Segment => {
            let start = rng.random_range(0..=frames - size);
            (start..start + size).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = sample_batch(100, 16, BatchMode::Segment, &mut rng);
            assert_eq!(s.len(), 16);
            assert!(s.windows(2).all(|w| w[1] == w[0] + 1) && s[15] < 100);
            let u = sample_batch(100, 8, BatchMode::Uniform, &mut rng);
            assert_eq!(u.len(), 8);
            assert!(u.windows(2).all(|w| w[1] > w[0]) && u[7] < 100);
        }
        assert_eq!(sample_batch(5, 8, BatchMode::Uniform, &mut rng), vec![0, 1, 2, 3, 4]);
        assert_eq!(sample_batch(5, 16, BatchMode::Segment, &mut rng), vec![0, 1, 2, 3, 4]);
    }
}
