//! Concurrent assessment of many prompts with caching, rate limiting and a
//! persistent verdict trail.

use std::collections::BTreeMap;

use futures::stream::{self, StreamExt};

use crate::prompt::PromptInstance;

use super::{
    ConsultationKey, Oracle, OracleError, OracleVerdict, RateLimiter, VerdictLogRecord,
    VerdictLogWriter,
};

/// Verdicts already settled, keyed by consultation identity. A batch never
/// re-asks anything present here.
#[derive(Debug, Default, Clone)]
pub struct VerdictCache {
    entries: BTreeMap<ConsultationKey, OracleVerdict>,
}

impl VerdictCache {
    pub fn insert(&mut self, key: ConsultationKey, verdict: OracleVerdict) {
        self.entries.insert(key, verdict);
    }

    pub fn get(&self, key: &ConsultationKey) -> Option<&OracleVerdict> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    /// Concurrently outstanding oracle calls.
    pub max_in_flight: usize,
    /// Requests-per-minute ceiling; `None` leaves the rate unconstrained
    /// (local and simulated oracles).
    pub requests_per_minute: Option<f64>,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            max_in_flight: 8,
            requests_per_minute: None,
        }
    }
}

/// Assesses `prompts` against `oracle`, returning verdicts in input order.
///
/// Each distinct consultation is asked at most once: repeats within the
/// batch and hits on `cache` are served without a call, and never consume
/// rate-limit budget. Freshly obtained verdicts are appended to `log` (in
/// first-occurrence order) the moment they arrive, so a fatal error loses
/// nothing that already completed; the error is returned after the log is
/// current.
pub async fn batch_assess(
    oracle: &dyn Oracle,
    prompts: &[PromptInstance],
    cache: &mut VerdictCache,
    mut log: Option<&mut VerdictLogWriter>,
    options: &BatchOptions,
) -> Result<Vec<OracleVerdict>, OracleError> {
    assert!(
        options.max_in_flight >= 1,
        "max_in_flight must be at least 1"
    );
    let limiter = options.requests_per_minute.map(RateLimiter::per_minute);
    let limiter = limiter.as_ref();

    // Unique consultations not in cache, in first-occurrence order.
    let mut missing: Vec<(ConsultationKey, &PromptInstance)> = Vec::new();
    for prompt in prompts {
        let key = ConsultationKey::of(prompt, oracle.model_id());
        if cache.get(&key).is_none() && missing.iter().all(|(k, _)| *k != key) {
            missing.push((key, prompt));
        }
    }

    let mut calls = stream::iter(missing.into_iter().map(|(key, prompt)| async move {
        if let Some(limiter) = limiter {
            limiter.acquire().await;
        }
        (key, oracle.assess(prompt).await)
    }))
    .buffered(options.max_in_flight);

    let mut failure: Option<OracleError> = None;
    while let Some((key, outcome)) = calls.next().await {
        match outcome {
            Ok(verdict) => {
                if let Some(log) = log.as_deref_mut() {
                    log.append(&VerdictLogRecord::new(&key, &verdict))?;
                }
                cache.insert(key, verdict);
            }
            Err(error) => {
                failure = Some(error);
                break;
            }
        }
    }
    drop(calls);
    if let Some(error) = failure {
        return Err(error);
    }

    Ok(prompts
        .iter()
        .map(|prompt| {
            let key = ConsultationKey::of(prompt, oracle.model_id());
            cache
                .get(&key)
                .expect("every consultation resolved above")
                .clone()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{Decision, MappingKey, Relation};
    use crate::prompt::{PromptTemplateId, SystemPromptId};
    use async_trait::async_trait;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Mutex;

    fn prompt(i: usize) -> PromptInstance {
        PromptInstance {
            template: PromptTemplateId::PNlf,
            system: SystemPromptId::None,
            user_text: format!("question {i}"),
            system_text: None,
            mapping_key: MappingKey {
                source: format!("http://s#{i}"),
                target: format!("http://t#{i}"),
                relation: Relation::Equivalence,
            },
        }
    }

    /// Accepts even-numbered sources, counting calls and concurrency.
    struct CountingOracle {
        calls: AtomicU32,
        in_flight: AtomicU32,
        peak_in_flight: AtomicU32,
        fail_on: Option<String>,
        order: Mutex<Vec<String>>,
    }

    impl CountingOracle {
        fn new() -> Self {
            CountingOracle {
                calls: AtomicU32::new(0),
                in_flight: AtomicU32::new(0),
                peak_in_flight: AtomicU32::new(0),
                fail_on: None,
                order: Mutex::new(Vec::new()),
            }
        }
    }

    #[async_trait]
    impl Oracle for CountingOracle {
        fn model_id(&self) -> &str {
            "counting"
        }

        async fn assess(&self, prompt: &PromptInstance) -> Result<OracleVerdict, OracleError> {
            if self.fail_on.as_deref() == Some(prompt.mapping_key.source.as_str()) {
                return Err(OracleError::Config("synthetic fatal error".into()));
            }
            self.calls.fetch_add(1, Ordering::SeqCst);
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
            tokio::time::sleep(tokio::time::Duration::from_millis(5)).await;
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            self.order
                .lock()
                .unwrap()
                .push(prompt.mapping_key.source.clone());
            let even = prompt
                .mapping_key
                .source
                .trim_start_matches("http://s#")
                .parse::<usize>()
                .unwrap()
                % 2
                == 0;
            Ok(OracleVerdict::decided(if even {
                Decision::Accept
            } else {
                Decision::Reject
            }))
        }
    }

    #[tokio::test]
    async fn results_come_back_in_input_order() {
        let oracle = CountingOracle::new();
        let prompts: Vec<_> = (0..20).map(prompt).collect();
        let mut cache = VerdictCache::default();
        let verdicts = batch_assess(
            &oracle,
            &prompts,
            &mut cache,
            None,
            &BatchOptions::default(),
        )
        .await
        .unwrap();
        assert_eq!(verdicts.len(), 20);
        for (i, v) in verdicts.iter().enumerate() {
            let expected = if i % 2 == 0 {
                Decision::Accept
            } else {
                Decision::Reject
            };
            assert_eq!(v.decision, expected, "verdict {i}");
        }
        assert!(
            oracle.peak_in_flight.load(Ordering::SeqCst) > 1,
            "no concurrency seen"
        );
        assert!(oracle.peak_in_flight.load(Ordering::SeqCst) <= 8);
    }

    #[tokio::test]
    async fn duplicates_and_cache_hits_cost_one_call_each() {
        let oracle = CountingOracle::new();
        let mut prompts: Vec<_> = (0..4).map(prompt).collect();
        prompts.push(prompt(0));
        prompts.push(prompt(2));
        let mut cache = VerdictCache::default();
        let verdicts = batch_assess(
            &oracle,
            &prompts,
            &mut cache,
            None,
            &BatchOptions::default(),
        )
        .await
        .unwrap();
        assert_eq!(verdicts.len(), 6);
        assert_eq!(oracle.calls.load(Ordering::SeqCst), 4);
        assert_eq!(verdicts[0], verdicts[4]);
        assert_eq!(verdicts[2], verdicts[5]);

        // A second batch over the same cache is free.
        let verdicts_again = batch_assess(
            &oracle,
            &prompts,
            &mut cache,
            None,
            &BatchOptions::default(),
        )
        .await
        .unwrap();
        assert_eq!(oracle.calls.load(Ordering::SeqCst), 4);
        assert_eq!(verdicts, verdicts_again);
    }

    #[tokio::test]
    async fn max_in_flight_is_respected() {
        let oracle = CountingOracle::new();
        let prompts: Vec<_> = (0..30).map(prompt).collect();
        let mut cache = VerdictCache::default();
        let options = BatchOptions {
            max_in_flight: 3,
            requests_per_minute: None,
        };
        batch_assess(&oracle, &prompts, &mut cache, None, &options)
            .await
            .unwrap();
        assert!(oracle.peak_in_flight.load(Ordering::SeqCst) <= 3);
    }

    #[tokio::test]
    async fn fatal_error_flushes_completed_verdicts_to_log() {
        let mut oracle = CountingOracle::new();
        oracle.fail_on = Some("http://s#3".into());
        let prompts: Vec<_> = (0..6).map(prompt).collect();
        let dir = tempfile::tempdir().unwrap();
        let log_path = dir.path().join("verdicts.jsonl");
        let mut log = VerdictLogWriter::create(&log_path).unwrap();
        let mut cache = VerdictCache::default();
        let options = BatchOptions {
            max_in_flight: 1,
            requests_per_minute: None,
        };
        let err = batch_assess(&oracle, &prompts, &mut cache, Some(&mut log), &options)
            .await
            .unwrap_err();
        assert!(err.to_string().contains("synthetic fatal error"));
        drop(log);
        let records = super::super::read_verdict_log(&log_path).unwrap();
        let sources: Vec<_> = records.iter().map(|r| r.source.as_str()).collect();
        assert_eq!(sources, ["http://s#0", "http://s#1", "http://s#2"]);
    }

    #[tokio::test]
    async fn log_records_appear_in_first_occurrence_order() {
        let oracle = CountingOracle::new();
        let prompts: Vec<_> = [3usize, 1, 4, 1, 5, 9, 2, 6, 5, 3]
            .iter()
            .map(|i| prompt(*i))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let log_path = dir.path().join("verdicts.jsonl");
        let mut log = VerdictLogWriter::create(&log_path).unwrap();
        let mut cache = VerdictCache::default();
        batch_assess(
            &oracle,
            &prompts,
            &mut cache,
            Some(&mut log),
            &BatchOptions::default(),
        )
        .await
        .unwrap();
        drop(log);
        let records = super::super::read_verdict_log(&log_path).unwrap();
        let sources: Vec<_> = records.iter().map(|r| r.source.as_str()).collect();
        assert_eq!(
            sources,
            [
                "http://s#3",
                "http://s#1",
                "http://s#4",
                "http://s#5",
                "http://s#9",
                "http://s#2",
                "http://s#6"
            ]
        );
    }

    #[tokio::test(start_paused = true)]
    async fn rate_limit_paces_the_batch() {
        let oracle = CountingOracle::new();
        let prompts: Vec<_> = (0..5).map(prompt).collect();
        let mut cache = VerdictCache::default();
        let options = BatchOptions {
            max_in_flight: 8,
            requests_per_minute: Some(60.0),
        };
        let start = tokio::time::Instant::now();
        batch_assess(&oracle, &prompts, &mut cache, None, &options)
            .await
            .unwrap();
        // Burst of 1 free, then 4 more at 1/s in virtual time.
        let elapsed = start.elapsed().as_secs_f64();
        assert!((3.9..=4.3).contains(&elapsed), "elapsed {elapsed}");
    }
}
