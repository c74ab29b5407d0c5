// SPDX-License-Identifier: Apache-2.0

//! Minimal chat-completions client shared by the agent and the benchmark
//! generator.

use std::time::Duration;

use serde_json::{json, Value};

/// Endpoint settings for a chat-completions style language model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelClientConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

impl ModelClientConfig {
    pub const URL_VAR: &'static str = "EDAFLOW_MODEL_URL";
    pub const MODEL_VAR: &'static str = "EDAFLOW_MODEL";
    pub const KEY_VAR: &'static str = "EDAFLOW_MODEL_KEY";

    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), model: model.into(), api_key: None, timeout_secs: 60 }
    }

    /// `None` unless both the URL and the model name are set.
    pub fn from_env() -> Option<Self> {
        Self::from_env_names(Self::URL_VAR, Self::MODEL_VAR, Self::KEY_VAR)
    }

    /// Like [`from_env`](Self::from_env) with caller-chosen variable names.
    pub fn from_env_names(url_var: &str, model_var: &str, key_var: &str) -> Option<Self> {
        let var = |name: &str| std::env::var(name).ok().filter(|s| !s.is_empty());
        Some(Self { api_key: var(key_var), ..Self::new(var(url_var)?, var(model_var)?) })
    }
}

/// Sends one chat request and returns the first choice's message text.
/// `settings` is merged into the request body (sampling parameters,
/// response format).
pub fn chat(config: &ModelClientConfig, system: &str, user: &str, settings: Value) -> Result<String, String> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .build()
        .map_err(|e| e.to_string())?;
    let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
    let mut body = json!({
        "model": config.model,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    });
    if let (Some(b), Value::Object(extra)) = (body.as_object_mut(), settings) {
        b.extend(extra);
    }
    let mut req = client.post(url).json(&body);
    if let Some(key) = &config.api_key {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| e.to_string())?;
    if !resp.status().is_success() {
        return Err(format!("model endpoint returned {}", resp.status()));
    }
    let reply: Value = resp.json().map_err(|e| e.to_string())?;
    reply["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| "reply has no message content".to_string())
}

#[cfg(test)]
pub(crate) mod testing {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves one chat reply with `content` and hands back the request body.
    pub fn one_shot_server(content: &str) -> (String, mpsc::Receiver<serde_json::Value>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let reply = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            tx.send(serde_json::from_slice(&body).unwrap()).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        });
        (url, rx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_are_sent() {
        let (url, rx) = testing::one_shot_server("hello");
        let cfg = ModelClientConfig::new(url, "m");
        let out = chat(&cfg, "sys", "hi", json!({"temperature": 0.7})).unwrap();
        assert_eq!(out, "hello");
        let body = rx.recv().unwrap();
        assert_eq!(body["temperature"], json!(0.7));
        assert_eq!(body["messages"][1]["content"], json!("hi"));
    }

    #[test]
    fn unreachable_endpoint_is_an_error() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        drop(listener);
        let cfg = ModelClientConfig { timeout_secs: 2, ..ModelClientConfig::new(url, "m") };
        assert!(chat(&cfg, "s", "u", json!({})).is_err());
    }
}
