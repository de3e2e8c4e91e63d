use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendReply, ChatRequest, GatewayError, DEFAULT_MODEL};

pub const ENV_API_BASE: &str = "MARG_API_BASE";
pub const ENV_MODEL: &str = "MARG_MODEL";
pub const ENV_API_KEY: &str = "MARG_API_KEY";

/// OpenAI-compatible `POST {base}/chat/completions` client.
pub struct LiveBackend {
    base_url: String,
    api_key: Option<String>,
    default_model: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl LiveBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, default_model: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(180)))
            .build();
        LiveBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            default_model: default_model.into(),
            agent: ureq::Agent::new_with_config(config),
        }
    }

    /// Reads `MARG_API_BASE`, `MARG_API_KEY` and `MARG_MODEL`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let base = std::env::var(ENV_API_BASE).map_err(|_| GatewayError::BackendUnconfigured)?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.to_string());
        Ok(LiveBackend::new(base, key, model))
    }

    pub fn default_model(&self) -> &str {
        &self.default_model
    }
}

fn transport(message: impl ToString, retryable: bool) -> GatewayError {
    GatewayError::Transport {
        message: message.to_string(),
        retryable,
    }
}

impl Backend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<BackendReply, GatewayError> {
        let model = if request.model.is_empty() { &self.default_model } else { &request.model };
        let body = json!({
            "model": model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
        });
        let started = Instant::now();
        let mut call = self.agent.post(format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let payload = serde_json::to_vec(&body).map_err(|e| transport(e, false))?;
        let mut response = call
            .header("Content-Type", "application/json")
            .send(&payload[..])
            .map_err(|e| transport(e, true))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(transport(format!("HTTP {status}"), true));
        }
        if status >= 400 {
            let detail = response.body_mut().read_to_string().unwrap_or_default();
            return Err(transport(format!("HTTP {status}: {detail}"), false));
        }
        let completion: Completion = response
            .body_mut()
            .read_json()
            .map_err(|e| transport(format!("bad response body: {e}"), false))?;
        let text = completion
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| transport("response has no message content", false))?;
        let usage = completion.usage.unwrap_or(Usage {
            prompt_tokens: 0,
            completion_tokens: 0,
        });
        Ok(BackendReply {
            text,
            input_tokens: usage.prompt_tokens,
            output_tokens: usage.completion_tokens,
            elapsed: started.elapsed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::sync::Arc;
    use std::thread;

    use super::super::{Gateway, RetryPolicy};
    use super::*;
    use crate::prompts::StageId;

    /// Serves the given (status, body) replies in order, one per connection,
    /// and forwards each raw request body.
    fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0usize;
                let mut head = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                }
                let mut buf = vec![0u8; length];
                reader.read_exact(&mut buf).unwrap();
                tx.send(format!("{head}\n{}", String::from_utf8(buf).unwrap())).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), rx)
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"Score: 0.7, Reason: ok"}}],"usage":{"prompt_tokens":12,"completion_tokens":5}}"#;

    #[test]
    fn posts_chat_completion_and_reads_usage() {
        let (base, rx) = serve(vec![(200, OK.to_string())]);
        let backend = LiveBackend::new(base, Some("secret".into()), "m");
        let req = ChatRequest::new(StageId::SimTechnical, "p", "compare these").with_model("gpt-x");
        let reply = backend.complete(&req).unwrap();
        assert_eq!(reply.text, "Score: 0.7, Reason: ok");
        assert_eq!((reply.input_tokens, reply.output_tokens), (12, 5));
        let seen = rx.recv().unwrap();
        assert!(seen.starts_with("POST /v1/chat/completions"), "{seen}");
        assert!(seen.to_ascii_lowercase().contains("authorization: bearer secret"));
        assert!(seen.contains("\"model\":\"gpt-x\""));
        assert!(seen.contains("\"temperature\":0.2"));
        assert!(seen.contains("\"top_p\":1.0"));
    }

    #[test]
    fn retries_server_errors_through_gateway() {
        let (base, _rx) = serve(vec![(503, "{}".into()), (429, "{}".into()), (200, OK.to_string())]);
        let gw = Gateway::new(Arc::new(LiveBackend::new(base, None, "m"))).with_retry(RetryPolicy {
            max_retries: 2,
            base_delay: Duration::ZERO,
        });
        let out = gw.complete(&ChatRequest::new(StageId::SimTechnical, "p", "x")).unwrap();
        assert_eq!(out.text, "Score: 0.7, Reason: ok");
        assert_eq!(gw.backend_calls(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (base, _rx) = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
        let backend = LiveBackend::new(base, None, "m");
        match backend.complete(&ChatRequest::new(StageId::SimTechnical, "p", "x")) {
            Err(GatewayError::Transport { retryable: false, message }) => assert!(message.contains("401")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
