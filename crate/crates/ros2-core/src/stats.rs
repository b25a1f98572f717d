//! Benchmark metrics: latency reservoir, percentiles, derived rates, and
//! the per-node ingest-rate calculator.

use alloc::vec::Vec;

use crate::rng::SplitMix64;

/// Fixed-capacity latency reservoir (algorithm R). Keeps a uniform sample
/// of everything offered once the capacity is exceeded, so percentile
/// memory stays bounded no matter how long a job runs.
#[derive(Debug, Clone)]
pub struct Reservoir {
    samples: Vec<u64>,
    capacity: usize,
    offered: u64,
    rng: SplitMix64,
}

pub const DEFAULT_RESERVOIR_CAPACITY: usize = 65_536;

impl Reservoir {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            samples: Vec::with_capacity(capacity.min(4096)),
            capacity,
            offered: 0,
            rng: SplitMix64::new(seed),
        }
    }

    pub fn offer(&mut self, value: u64) {
        self.offered += 1;
        if self.samples.len() < self.capacity {
            self.samples.push(value);
        } else {
            let j = self.rng.next_below(self.offered);
            if (j as usize) < self.capacity {
                self.samples[j as usize] = value;
            }
        }
    }

    pub fn offered(&self) -> u64 {
        self.offered
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.samples
    }

    pub fn merge(&mut self, other: &Reservoir) {
        for &v in other.as_slice() {
            self.offer(v);
        }
    }
}

/// Nearest-rank percentile over `sorted` (ascending). `q` in [0, 100].
pub fn percentile(sorted: &[u64], q: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    // ceil(q/100 * n) without f64::ceil (not available in no_std)
    let exact = (q / 100.0) * sorted.len() as f64;
    let mut rank = exact as usize;
    if (rank as f64) < exact {
        rank += 1;
    }
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Aggregated result of one workload run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub bytes_moved: u64,
    pub ops_completed: u64,
    pub wall_seconds: f64,
    pub throughput_bps: f64,
    pub iops: f64,
    pub p50_us: Option<u64>,
    pub p95_us: Option<u64>,
    pub p99_us: Option<u64>,
}

impl Metrics {
    /// Derive rates and percentiles from raw counters plus latency samples
    /// (microseconds, unsorted).
    pub fn derive(
        bytes_moved: u64,
        ops_completed: u64,
        wall_seconds: f64,
        latencies_us: &mut Vec<u64>,
    ) -> Self {
        latencies_us.sort_unstable();
        let (throughput_bps, iops) = if wall_seconds > 0.0 {
            (
                bytes_moved as f64 / wall_seconds,
                ops_completed as f64 / wall_seconds,
            )
        } else {
            (0.0, 0.0)
        };
        Self {
            bytes_moved,
            ops_completed,
            wall_seconds,
            throughput_bps,
            iops,
            p50_us: percentile(latencies_us, 50.0),
            p95_us: percentile(latencies_us, 95.0),
            p99_us: percentile(latencies_us, 99.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestError {
    NonPositive,
}

/// Required sustained ingest rate per node: `gpus * samples_per_sec *
/// bytes_per_sample`, in bytes/second.
pub fn required_ingest(gpus: u64, rate_per_gpu: u64, bytes_per_sample: u64) -> Result<u64, IngestError> {
    if gpus == 0 || rate_per_gpu == 0 || bytes_per_sample == 0 {
        return Err(IngestError::NonPositive);
    }
    Ok(gpus
        .checked_mul(rate_per_gpu)
        .and_then(|v| v.checked_mul(bytes_per_sample))
        .expect("ingest product overflows u64"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ingest_examples() {
        assert_eq!(required_ingest(8, 100, 4 << 20).unwrap(), 3_355_443_200);
        assert_eq!(required_ingest(1, 1, 1).unwrap(), 1);
        assert_eq!(
            required_ingest(0, 100, 4 << 20).unwrap_err(),
            IngestError::NonPositive
        );
    }

    #[test]
    fn percentile_ordering() {
        let sorted: Vec<u64> = (1..=1000).collect();
        let p50 = percentile(&sorted, 50.0).unwrap();
        let p95 = percentile(&sorted, 95.0).unwrap();
        let p99 = percentile(&sorted, 99.0).unwrap();
        assert_eq!(p50, 500);
        assert_eq!(p95, 950);
        assert_eq!(p99, 990);
        assert!(p50 <= p95 && p95 <= p99);
        assert!(p50 >= sorted[0]);
    }

    #[test]
    fn percentile_of_empty_is_none() {
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn percentile_single_sample() {
        assert_eq!(percentile(&[42], 50.0), Some(42));
        assert_eq!(percentile(&[42], 99.0), Some(42));
    }

    #[test]
    fn reservoir_below_capacity_keeps_everything() {
        let mut r = Reservoir::new(100, 1);
        for i in 0..50 {
            r.offer(i);
        }
        assert_eq!(r.len(), 50);
        assert_eq!(r.offered(), 50);
    }

    #[test]
    fn reservoir_bounds_memory_and_samples_uniformly() {
        let mut r = Reservoir::new(64, 2);
        for i in 0..100_000u64 {
            r.offer(i);
        }
        assert_eq!(r.len(), 64);
        assert_eq!(r.offered(), 100_000);
        // a uniform sample of 0..100k should straddle the midpoint
        let below = r.as_slice().iter().filter(|&&v| v < 50_000).count();
        assert!(below > 8 && below < 56, "suspiciously skewed: {}", below);
    }

    #[test]
    fn metrics_accounting_identity() {
        let mut lats = vec![30, 10, 20];
        let m = Metrics::derive(4096 * 1000, 1000, 2.0, &mut lats);
        assert_eq!(m.throughput_bps, 4096.0 * 1000.0 / 2.0);
        assert_eq!(m.iops, 500.0);
        assert_eq!(m.p50_us, Some(20));
    }

    #[test]
    fn zero_ops_has_no_percentiles() {
        let mut lats = vec![];
        let m = Metrics::derive(0, 0, 1.0, &mut lats);
        assert_eq!(m.p50_us, None);
        assert_eq!(m.iops, 0.0);
    }
}
