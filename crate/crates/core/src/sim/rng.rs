use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::time::SimTime;
use super::SimError;

/// A named, seeded random stream.
///
/// Each stochastic source gets its own stream so that changing one source's
/// parameters leaves the draws of every other source untouched. ChaCha is
/// used because its output is specified bit-for-bit across platforms.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: impl Into<String>) -> Self {
        let stream_id = stream_id.into();
        let rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ fnv1a(stream_id.as_bytes())));
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lazily generated Poisson arrival process.
///
/// Arrival instants accumulate in `f64` seconds and are rounded to the
/// nanosecond clock on output, so rounding never compounds.
#[derive(Debug, Clone)]
pub struct PoissonProcess {
    exp: Option<Exp<f64>>,
    stream: RngStream,
    elapsed_s: f64,
}

impl PoissonProcess {
    pub fn new(rate_per_s: f64, stream: RngStream) -> Result<Self, SimError> {
        if !(rate_per_s >= 0.0) || !rate_per_s.is_finite() {
            return Err(SimError::InvalidRate(rate_per_s));
        }
        let exp = if rate_per_s > 0.0 {
            Some(Exp::new(rate_per_s).map_err(|_| SimError::InvalidRate(rate_per_s))?)
        } else {
            None
        };
        Ok(PoissonProcess {
            exp,
            stream,
            elapsed_s: 0.0,
        })
    }
}

impl Iterator for PoissonProcess {
    type Item = SimTime;

    fn next(&mut self) -> Option<SimTime> {
        let exp = self.exp.as_ref()?;
        self.elapsed_s += exp.sample(self.stream.rng());
        Some(SimTime::from_secs_f64(self.elapsed_s))
    }
}

/// All arrivals of a Poisson process with the given rate in `[0, horizon)`.
pub fn poisson_arrivals(
    rate_per_s: f64,
    horizon: SimTime,
    stream: RngStream,
) -> Result<Vec<SimTime>, SimError> {
    if horizon == SimTime::ZERO {
        return Err(SimError::EmptyHorizon);
    }
    Ok(PoissonProcess::new(rate_per_s, stream)?
        .take_while(|t| *t < horizon)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_empty() {
        let v = poisson_arrivals(0.0, SimTime::from_millis(1000), RngStream::new(1, "x")).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn negative_rate_rejected() {
        let err = poisson_arrivals(-1.0, SimTime::from_millis(1), RngStream::new(1, "x"));
        assert!(matches!(err, Err(SimError::InvalidRate(_))));
    }

    #[test]
    fn same_seed_same_stream_is_identical() {
        let h = SimTime::from_millis(100);
        let a = poisson_arrivals(5_000.0, h, RngStream::new(7, "urllc-arrivals")).unwrap();
        let b = poisson_arrivals(5_000.0, h, RngStream::new(7, "urllc-arrivals")).unwrap();
        assert_eq!(a, b);
        let c = poisson_arrivals(5_000.0, h, RngStream::new(7, "normal-arrivals")).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sorted_ascending() {
        let v = poisson_arrivals(1e5, SimTime::from_millis(10), RngStream::new(3, "s")).unwrap();
        assert!(v.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn count_within_three_sigma_over_seeds() {
        // Poisson(10_000): sigma = 100.
        for seed in 0..24 {
            let n = poisson_arrivals(
                1_000.0,
                SimTime::from_millis(10_000),
                RngStream::new(seed, "normal-arrivals"),
            )
            .unwrap()
            .len() as f64;
            assert!((n - 10_000.0).abs() <= 300.0, "seed {seed}: {n}");
        }
    }
}
