//! Shared test support: independent reference implementations and fixtures.
//!
//! The reference implementations here are deliberately written from the
//! definitions, not by calling the production code, so tests compare two
//! independent routes to the same number.

#![allow(dead_code)]

/// Signed-rank tail probabilities by literal enumeration of all 2^m sign
/// assignments. Zeros must already be dropped. Returns
/// (w_plus, p_greater, p_less) with mid-ranks as f64 averages of positions.
pub fn wilcoxon_by_enumeration(diffs: &[f64]) -> (f64, f64, f64) {
    let m = diffs.len();
    assert!(
        m > 0 && m <= 20,
        "enumeration oracle limited to 1..=20 diffs"
    );
    assert!(diffs.iter().all(|d| *d != 0.0), "drop zeros before calling");

    // Mid-ranks of |d|: average of the 1-based positions a tie block spans.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| diffs[a].abs().partial_cmp(&diffs[b].abs()).unwrap());
    let mut ranks = vec![0.0f64; m];
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let mid = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }

    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    let total = 1u64 << m;
    let mut at_least = 0u64;
    let mut at_most = 0u64;
    for signs in 0..total {
        let w: f64 = (0..m)
            .filter(|bit| signs & (1 << bit) != 0)
            .map(|bit| ranks[bit])
            .sum();
        // Exact tie detection is safe: mid-ranks are multiples of 0.5, so
        // every achievable sum is an exact binary fraction.
        if w >= w_plus {
            at_least += 1;
        }
        if w <= w_plus {
            at_most += 1;
        }
    }
    (
        w_plus,
        at_least as f64 / total as f64,
        at_most as f64 / total as f64,
    )
}

pub mod llm_server {
    //! In-process chat-completions endpoint with scripted replies.

    use std::collections::VecDeque;
    use std::net::SocketAddr;
    use std::sync::{Arc, Mutex};

    use axum::extract::State;
    use axum::http::{HeaderMap, HeaderName, StatusCode};
    use axum::response::IntoResponse;
    use axum::routing::post;
    use axum::{Json, Router};
    use serde_json::{json, Value};
    use tokio::net::TcpListener;
    use tokio::task::JoinHandle;

    /// One canned reply, consumed in order; when the script runs dry the
    /// fallback function answers from the request body.
    pub enum Reply {
        /// HTTP 200 whose assistant message carries this content.
        Content(String),
        /// HTTP 200 with this literal body.
        Raw(Value),
        /// This status, with an optional Retry-After value in seconds.
        Status(u16, Option<u64>),
    }

    impl Reply {
        pub fn answer(value: bool) -> Reply {
            Reply::Content(format!("{{\"answer\": {value}}}"))
        }
    }

    type Fallback = Box<dyn Fn(&Value) -> Reply + Send + Sync>;

    pub struct ServerState {
        script: Mutex<VecDeque<Reply>>,
        fallback: Fallback,
        requests: Mutex<Vec<Value>>,
    }

    pub struct MockLlm {
        pub url: String,
        pub addr: SocketAddr,
        state: Arc<ServerState>,
        handle: JoinHandle<()>,
    }

    impl MockLlm {
        /// Starts the server on an ephemeral local port.
        pub async fn start(fallback: impl Fn(&Value) -> Reply + Send + Sync + 'static) -> MockLlm {
            let state = Arc::new(ServerState {
                script: Mutex::new(VecDeque::new()),
                fallback: Box::new(fallback),
                requests: Mutex::new(Vec::new()),
            });
            let app = Router::new()
                .route("/v1/chat/completions", post(handle))
                .with_state(state.clone());
            let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
            let addr = listener.local_addr().unwrap();
            let handle = tokio::spawn(async move {
                axum::serve(listener, app).await.unwrap();
            });
            MockLlm {
                url: format!("http://{addr}/v1/chat/completions"),
                addr,
                state,
                handle,
            }
        }

        /// Queues the next scripted reply.
        pub fn push(&self, reply: Reply) {
            self.state.script.lock().unwrap().push_back(reply);
        }

        /// Bodies of every request served so far.
        pub fn requests(&self) -> Vec<Value> {
            self.state.requests.lock().unwrap().clone()
        }

        pub fn request_count(&self) -> usize {
            self.state.requests.lock().unwrap().len()
        }

        /// Stops accepting connections; the port then refuses traffic.
        pub fn stop(self) {
            self.handle.abort();
        }
    }

    /// The user message text inside a captured request body.
    pub fn user_text(request: &Value) -> &str {
        request["messages"]
            .as_array()
            .and_then(|m| m.iter().find(|msg| msg["role"] == "user"))
            .and_then(|msg| msg["content"].as_str())
            .unwrap_or_default()
    }

    async fn handle(
        State(state): State<Arc<ServerState>>,
        Json(body): Json<Value>,
    ) -> impl IntoResponse {
        let reply = {
            let mut script = state.script.lock().unwrap();
            match script.pop_front() {
                Some(reply) => reply,
                None => (state.fallback)(&body),
            }
        };
        state.requests.lock().unwrap().push(body);
        let mut headers = HeaderMap::new();
        match reply {
            Reply::Content(content) => (
                StatusCode::OK,
                headers,
                Json(json!({
                    "id": "chatcmpl-scripted",
                    "object": "chat.completion",
                    "choices": [{
                        "index": 0,
                        "message": {"role": "assistant", "content": content},
                        "finish_reason": "stop"
                    }],
                    "usage": {"prompt_tokens": 41, "completion_tokens": 7}
                })),
            ),
            Reply::Raw(value) => (StatusCode::OK, headers, Json(value)),
            Reply::Status(code, retry_after) => {
                if let Some(secs) = retry_after {
                    headers.insert(
                        HeaderName::from_static("retry-after"),
                        secs.to_string().parse().unwrap(),
                    );
                }
                (
                    StatusCode::from_u16(code).unwrap(),
                    headers,
                    Json(json!({"error": {"message": "scripted status"}})),
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_matches_hand_computed_case() {
        // diffs [1, 2, 3]: ranks 1, 2, 3; W+ = 6 only for +++.
        let (w, pg, pl) = wilcoxon_by_enumeration(&[1.0, 2.0, 3.0]);
        assert_eq!(w, 6.0);
        assert_eq!(pg, 1.0 / 8.0);
        assert_eq!(pl, 1.0);
    }
}
