//! Token-bucket rate limiter for outbound oracle requests.

use tokio::sync::Mutex;
use tokio::time::{sleep, Duration, Instant};

struct BucketState {
    tokens: f64,
    refilled_at: Instant,
}

/// Token bucket: capacity `burst`, refilling continuously at `per_second`.
/// Built on the tokio clock, so tests under a paused runtime drive it with
/// virtual time.
pub struct RateLimiter {
    per_second: f64,
    burst: f64,
    state: Mutex<BucketState>,
}

impl RateLimiter {
    /// Limiter for a requests-per-minute budget. Burst capacity is one
    /// second's worth of budget, never less than one request.
    pub fn per_minute(requests_per_minute: f64) -> Self {
        assert!(
            requests_per_minute > 0.0 && requests_per_minute.is_finite(),
            "requests_per_minute must be positive and finite"
        );
        let per_second = requests_per_minute / 60.0;
        RateLimiter::new(per_second, per_second.max(1.0))
    }

    pub fn new(per_second: f64, burst: f64) -> Self {
        RateLimiter {
            per_second,
            burst,
            state: Mutex::new(BucketState {
                tokens: burst,
                refilled_at: Instant::now(),
            }),
        }
    }

    /// Waits until a token is available and takes it.
    pub async fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().await;
                let now = Instant::now();
                let elapsed = now.duration_since(state.refilled_at).as_secs_f64();
                state.tokens = (state.tokens + elapsed * self.per_second).min(self.burst);
                state.refilled_at = now;
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                // The lock is released while sleeping; stragglers re-check.
                Duration::from_secs_f64((1.0 - state.tokens) / self.per_second)
            };
            sleep(wait).await;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[tokio::test(start_paused = true)]
    async fn burst_then_steady_rate() {
        let limiter = RateLimiter::per_minute(60.0);
        let start = Instant::now();
        // Burst of one goes through instantly.
        limiter.acquire().await;
        assert_eq!(start.elapsed(), Duration::ZERO);
        // The next two wait one virtual second each.
        limiter.acquire().await;
        limiter.acquire().await;
        let elapsed = start.elapsed();
        assert!(
            (1.9..=2.2).contains(&elapsed.as_secs_f64()),
            "elapsed {elapsed:?}"
        );
    }

    #[tokio::test(start_paused = true)]
    async fn burst_capacity_scales_with_rate() {
        let limiter = RateLimiter::per_minute(600.0);
        let start = Instant::now();
        for _ in 0..10 {
            limiter.acquire().await;
        }
        assert_eq!(
            start.elapsed(),
            Duration::ZERO,
            "burst of 10 should be free"
        );
        limiter.acquire().await;
        assert!(start.elapsed() >= Duration::from_millis(99));
    }

    #[tokio::test(start_paused = true)]
    async fn concurrent_acquires_all_complete() {
        let limiter = Arc::new(RateLimiter::per_minute(120.0));
        let start = Instant::now();
        let mut handles = Vec::new();
        for _ in 0..8 {
            let limiter = Arc::clone(&limiter);
            handles.push(tokio::spawn(async move { limiter.acquire().await }));
        }
        for handle in handles {
            handle.await.unwrap();
        }
        // Burst 2 free, then 6 more at 2/s: 3 virtual seconds.
        let elapsed = start.elapsed().as_secs_f64();
        assert!((2.9..=3.3).contains(&elapsed), "elapsed {elapsed}");
    }
}
