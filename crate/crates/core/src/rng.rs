//! Seeded random streams.
//!
//! Every parallel unit of work gets its own ChaCha stream derived from the
//! master seed and the unit index, so results never depend on the number of
//! worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Default number of draws per parallel chunk.
pub const CHUNK: usize = 1 << 16;

/// Run `work(rng, len)` over `n` draws split into fixed chunks, each on its own stream.
///
/// Chunk boundaries depend only on `n` and `chunk`, never on the thread pool.
pub fn par_chunks<T, F>(seed: u64, n: usize, chunk: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> T + Sync,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let len = if i + 1 == count { n - i * chunk } else { chunk };
            let mut rng = stream_rng(seed, i as u64);
            work(&mut rng, len)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream_rng(7, 0).random();
        let b: u64 = stream_rng(7, 0).random();
        let c: u64 = stream_rng(7, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn chunking_is_independent_of_threads() {
        let sum = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                par_chunks(3, 100_003, 1000, |rng, len| {
                    (0..len).map(|_| rng.random::<f64>()).sum::<f64>()
                })
                .iter()
                .sum::<f64>()
            })
        };
        assert_eq!(sum(1).to_bits(), sum(4).to_bits());
    }
}
