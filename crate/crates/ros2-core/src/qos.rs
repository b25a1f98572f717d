//! Per-tenant token-bucket admission for data-plane dispatch.
//!
//! The fill level is kept in token-nanoseconds (bytes scaled by 1e9) so
//! refill needs no rounding at all; the single ceil happens when computing
//! the earliest-admit time. Decisions are exact and reproducible for any
//! nanosecond clock the caller injects.

const SCALE: u128 = 1_000_000_000;

/// Token bucket in bytes. `rate` is bytes/second; `burst` caps the fill.
#[derive(Debug, Clone)]
pub struct QosBucket {
    pub tenant_id: u64,
    pub rate: u64,
    pub burst: u64,
    /// Fill level in byte-nanoseconds: `level / 1e9` whole bytes available.
    level: u128,
    last_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admit,
    /// Earliest nanosecond timestamp at which the request would admit.
    Delay { until_ns: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QosError {
    /// Request exceeds the burst and can never admit.
    Oversized,
    /// Zero rate cannot refill.
    ZeroRate,
}

impl QosBucket {
    /// New bucket, full at `now_ns`.
    pub fn new(tenant_id: u64, rate: u64, burst: u64, now_ns: u64) -> Self {
        Self {
            tenant_id,
            rate,
            burst,
            level: burst as u128 * SCALE,
            last_ns: now_ns,
        }
    }

    /// Whole bytes currently available.
    pub fn tokens(&self) -> u64 {
        (self.level / SCALE) as u64
    }

    fn refill(&mut self, now_ns: u64) {
        if now_ns <= self.last_ns {
            return;
        }
        let elapsed = (now_ns - self.last_ns) as u128;
        self.level = (self.level + elapsed * self.rate as u128).min(self.burst as u128 * SCALE);
        self.last_ns = now_ns;
    }

    /// Admit `bytes` at `now_ns`, or report the earliest time it would fit.
    pub fn admit(&mut self, bytes: u64, now_ns: u64) -> Result<Admission, QosError> {
        if bytes > self.burst {
            return Err(QosError::Oversized);
        }
        if self.rate == 0 {
            return Err(QosError::ZeroRate);
        }
        self.refill(now_ns);
        let need = bytes as u128 * SCALE;
        if self.level >= need {
            self.level -= need;
            return Ok(Admission::Admit);
        }
        let wait_ns = (need - self.level).div_ceil(self.rate as u128);
        Ok(Admission::Delay {
            until_ns: now_ns.saturating_add(wait_ns as u64),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_drain_then_delay() {
        // rate=100 B/s, burst=100
        let mut b = QosBucket::new(1, 100, 100, 0);
        assert_eq!(b.admit(100, 0).unwrap(), Admission::Admit);
        // one more byte needs 1/100 s = 10_000_000 ns
        assert_eq!(
            b.admit(1, 0).unwrap(),
            Admission::Delay {
                until_ns: 10_000_000
            }
        );
    }

    #[test]
    fn oversized_rejected() {
        let mut b = QosBucket::new(1, 100, 100, 0);
        assert_eq!(b.admit(150, 0).unwrap_err(), QosError::Oversized);
    }

    #[test]
    fn two_half_drains_both_admit() {
        let mut b = QosBucket::new(1, 100, 100, 0);
        assert_eq!(b.admit(50, 0).unwrap(), Admission::Admit);
        assert_eq!(b.admit(50, 0).unwrap(), Admission::Admit);
        assert!(matches!(b.admit(1, 0).unwrap(), Admission::Delay { .. }));
    }

    #[test]
    fn refill_caps_at_burst() {
        let mut b = QosBucket::new(1, 1_000, 500, 0);
        assert_eq!(b.admit(500, 0).unwrap(), Admission::Admit);
        // 10 seconds would refill 10_000 tokens but burst caps at 500
        assert_eq!(b.admit(500, 10_000_000_000).unwrap(), Admission::Admit);
        assert!(matches!(
            b.admit(1, 10_000_000_000).unwrap(),
            Admission::Delay { .. }
        ));
    }

    #[test]
    fn fractional_refill_not_lost() {
        // 3 B/s: drain at t=0, then ask for 1 byte at t=0.4s. 1.2 tokens
        // have accrued, one admits; the 0.2 remainder must count toward the
        // next, which completes at exactly 2/3 s (ceil -> 666_666_667 ns).
        let mut b = QosBucket::new(1, 3, 10, 0);
        assert_eq!(b.admit(10, 0).unwrap(), Admission::Admit);
        assert_eq!(b.admit(1, 400_000_000).unwrap(), Admission::Admit);
        match b.admit(1, 400_000_000).unwrap() {
            Admission::Delay { until_ns } => assert_eq!(until_ns, 666_666_667),
            other => panic!("expected delay, got {:?}", other),
        }
    }

    #[test]
    fn delay_prediction_is_tight() {
        let mut b = QosBucket::new(1, 7, 100, 0);
        assert_eq!(b.admit(100, 0).unwrap(), Admission::Admit);
        let until = match b.admit(33, 0).unwrap() {
            Admission::Delay { until_ns } => until_ns,
            _ => panic!(),
        };
        // admits at the predicted instant, not one nanosecond earlier
        let mut early = b.clone();
        assert!(matches!(
            early.admit(33, until - 1).unwrap(),
            Admission::Delay { .. }
        ));
        assert_eq!(b.admit(33, until).unwrap(), Admission::Admit);
    }

    // Conservation: admitted bytes over [t0, t1] never exceed
    // burst + rate * (t1 - t0).
    #[test]
    fn conservation_over_random_schedule() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(99);
        let rate = 1_000_000u64; // 1 MB/s
        let burst = 64 * 1024u64;
        let mut b = QosBucket::new(1, rate, burst, 0);
        let mut now = 0u64;
        let mut admitted: u64 = 0;
        for _ in 0..10_000 {
            now += rng.next_below(2_000_000); // up to 2 ms steps
            let req = 1 + rng.next_below(burst);
            if let Ok(Admission::Admit) = b.admit(req, now) {
                admitted += req;
            }
        }
        let bound = burst as u128 + (rate as u128 * now as u128) / 1_000_000_000;
        assert!(
            (admitted as u128) <= bound,
            "admitted {} exceeds bound {}",
            admitted,
            bound
        );
    }
}
