//! Client for OpenAI-compatible chat-completion endpoints.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use rand::Rng;
use serde_json::{json, Value};

use super::noisy::prompt_rng;
use super::parse::parse_decision;
use super::scripted::merge_tables;
use super::{AdapterConfig, Answer, DecisionModel, ModelDecision, ModelError, Prompt, QueryContext, ResolveRule};
use crate::agents::nas::EnvAction;
use crate::dcop::CostTable;

#[derive(Clone, Debug, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
    /// Follow-up attempts after the first request.
    pub retries: u32,
    pub max_in_flight: usize,
    pub multimodal: bool,
    /// First rate-limit backoff; doubles on every further 429.
    pub backoff: Duration,
}

impl RemoteConfig {
    /// Reads the API key from the environment variable named in `cfg`.
    pub fn from_adapter(cfg: &AdapterConfig) -> Result<RemoteConfig, ModelError> {
        let api_key = std::env::var(&cfg.api_key_env).ok();
        if api_key.is_none() {
            return Err(ModelError::Config(format!("environment variable {} is not set", cfg.api_key_env)));
        }
        Ok(RemoteConfig {
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            api_key,
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
            timeout: Duration::from_secs(cfg.timeout_secs),
            retries: cfg.retries,
            max_in_flight: cfg.max_in_flight,
            multimodal: cfg.multimodal,
            backoff: Duration::from_millis(500),
        })
    }
}

/// Counting semaphore capping concurrent requests.
struct Gate {
    used: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().expect("gate lock");
        while *used >= self.cap {
            used = self.freed.wait(used).expect("gate lock");
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Auth(String),
    RateLimited,
    Transient(String),
}

pub struct RemoteModel {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemoteModel {
    pub fn new(cfg: RemoteConfig) -> Result<RemoteModel, ModelError> {
        if cfg.max_in_flight == 0 {
            return Err(ModelError::Config("max_in_flight must be at least 1".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Gate { used: Mutex::new(0), freed: Condvar::new(), cap: cfg.max_in_flight };
        Ok(RemoteModel { cfg, agent, gate })
    }

    fn user_content(&self, prompt: &Prompt) -> Value {
        let text = prompt.user_text();
        match (&prompt.image_svg, self.cfg.multimodal) {
            (Some(svg), true) => {
                let data = base64::engine::general_purpose::STANDARD.encode(svg.as_bytes());
                json!([
                    {"type": "text", "text": text},
                    {"type": "image_url", "image_url": {"url": format!("data:image/svg+xml;base64,{data}")}}
                ])
            }
            _ => Value::String(text),
        }
    }

    fn send(&self, messages: &[Value]) -> Result<String, Failure> {
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = req.send_json(&body).map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            401 | 403 => return Err(Failure::Auth(format!("endpoint answered {status}"))),
            429 => return Err(Failure::RateLimited),
            s if !(200..300).contains(&s) => return Err(Failure::Transient(format!("endpoint answered {s}"))),
            _ => {}
        }
        let value: Value = resp.into_body().read_json().map_err(|e| Failure::Transient(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Failure::Transient("response has no message content".into()))
    }

    fn fallback(&self, prompt: &Prompt, ctx: &QueryContext<'_>, raw: String, attempts: u32) -> ModelDecision {
        let mut rng = prompt_rng(0, "fallback", prompt);
        let answer = match ctx {
            QueryContext::ConstraintMessage(c) => Answer::Constraint(format!(
                "{} could not describe the constraint with {}.",
                c.info.name, c.other_agent
            )),
            QueryContext::MaxAction(c) => {
                Answer::Values(c.vars.iter().map(|(v, _)| (v.var, rng.gen_range(0..v.domain.len()))).collect())
            }
            QueryContext::TableProposal(c) => {
                let (x, y) = (&c.scope.0, &c.scope.1);
                let table = match (c.own_history.last(), &c.counterpart) {
                    (Some(own), Some(other)) => merge_tables(own, other, ResolveRule::Average, c.bounds),
                    (Some(own), None) => own.clone(),
                    (None, Some(other)) => other.clone(),
                    (None, None) => {
                        let mid = (c.bounds.0 + c.bounds.1) / 2;
                        CostTable::from_fn((x.var, y.var), x.domain.len(), y.domain.len(), |_, _| mid)
                    }
                };
                Answer::Table(table)
            }
            QueryContext::Resolve(c) => Answer::Table(merge_tables(&c.own, &c.other, ResolveRule::Average, c.bounds)),
            QueryContext::NextAction(c) => Answer::Action(if c.options.contains(&EnvAction::Noop) {
                EnvAction::Noop
            } else {
                c.options[0].clone()
            }),
        };
        ModelDecision { kind: ctx.kind(), answer, raw, attempts, fallback: true, text_fallback_visual: false }
    }
}

impl DecisionModel for RemoteModel {
    fn query(&self, prompt: &Prompt, ctx: &QueryContext<'_>) -> Result<ModelDecision, ModelError> {
        let _permit = self.gate.acquire();
        let mut messages = vec![
            json!({"role": "system", "content": prompt.system}),
            json!({"role": "user", "content": self.user_content(prompt)}),
        ];
        let mut attempts = 0;
        let mut backoff = self.cfg.backoff;
        let mut last_raw = String::new();
        while attempts <= self.cfg.retries {
            attempts += 1;
            match self.send(&messages) {
                Ok(text) => match parse_decision(ctx.kind(), &text, ctx) {
                    Ok(d) => return Ok(ModelDecision { attempts, ..d }),
                    Err(e) => {
                        log::debug!("unusable answer from {}: {e}", self.cfg.model);
                        messages.push(json!({"role": "assistant", "content": text}));
                        messages.push(json!({
                            "role": "user",
                            "content": format!("Your answer could not be used: {e}. {}", prompt.directive)
                        }));
                        last_raw = text;
                    }
                },
                Err(Failure::Auth(msg)) => return Err(ModelError::Auth(msg)),
                Err(Failure::RateLimited) => {
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
                Err(Failure::Transient(msg)) => log::warn!("request to {} failed: {msg}", self.cfg.endpoint),
            }
        }
        Ok(self.fallback(prompt, ctx, last_raw, attempts))
    }

    fn label(&self) -> String {
        format!("remote({})", self.cfg.model)
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::thread;

    use super::*;
    use crate::dcop::{AgentId, Assignment};
    use crate::model::tests::{coloring, max_action_ctx};
    use crate::model::{build_prompt, PromptOptions};

    enum Reply {
        Content(String),
        Status(u16),
        Stall(Duration),
    }

    /// Minimal HTTP endpoint serving `replies` in order (the last repeats).
    fn serve(replies: Vec<Reply>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                let _ = reader.read_exact(&mut body);
                let i = counter.fetch_add(1, Ordering::SeqCst);
                let (status, payload) = match &replies[i.min(replies.len() - 1)] {
                    Reply::Content(text) => {
                        (200, json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string())
                    }
                    Reply::Status(s) => (*s, "{}".to_string()),
                    Reply::Stall(d) => {
                        thread::sleep(*d);
                        continue;
                    }
                };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                );
            }
        });
        (url, hits)
    }

    fn model(url: String, timeout: Duration) -> RemoteModel {
        RemoteModel::new(RemoteConfig {
            endpoint: url,
            model: "mock".into(),
            api_key: Some("k".into()),
            temperature: 0.0,
            max_tokens: 64,
            timeout,
            retries: 2,
            max_in_flight: 2,
            multimodal: false,
            backoff: Duration::from_millis(10),
        })
        .unwrap()
    }

    fn query(replies: Vec<Reply>, timeout: Duration) -> (Result<ModelDecision, ModelError>, usize) {
        let task = coloring(1);
        let known = Assignment::complete(vec![0; task.instance.num_vars()]);
        let ctx = max_action_ctx(&task, AgentId(0), &known);
        let prompt = build_prompt(&ctx, &PromptOptions { include_machine_block: false, ..PromptOptions::default() }).unwrap();
        let (url, hits) = serve(replies);
        let out = model(url, timeout).query(&prompt, &ctx);
        (out, hits.load(Ordering::SeqCst))
    }

    fn answer_for_first_var() -> String {
        let task = coloring(1);
        let v = task.instance.vars_of(AgentId(0))[0];
        format!("Sure.\n```answer\n{}: {}\n```", task.instance.var_name(v), task.instance.domain(v)[2])
    }

    #[test]
    fn valid_answer_takes_one_attempt() {
        let (d, hits) = query(vec![Reply::Content(answer_for_first_var())], Duration::from_secs(5));
        let d = d.unwrap();
        assert_eq!((d.attempts, d.fallback, hits), (1, false, 1));
        assert_eq!(d.values().unwrap()[0].1, 2);
    }

    #[test]
    fn garbage_is_retried_with_follow_up() {
        let replies = vec![
            Reply::Content("no idea".into()),
            Reply::Content("```answer\nPurple\n```".into()),
            Reply::Content(answer_for_first_var()),
        ];
        let (d, hits) = query(replies, Duration::from_secs(5));
        let d = d.unwrap();
        assert_eq!((d.attempts, d.fallback, hits), (3, false, 3));
    }

    #[test]
    fn persistent_garbage_falls_back() {
        let (d, hits) = query(vec![Reply::Content("still thinking".into())], Duration::from_secs(5));
        let d = d.unwrap();
        assert!(d.fallback);
        assert_eq!((d.attempts, hits), (3, 3));
        assert_eq!(d.raw, "still thinking");
    }

    #[test]
    fn timeouts_fall_back() {
        let (d, _) = query(vec![Reply::Stall(Duration::from_millis(600))], Duration::from_millis(150));
        let d = d.unwrap();
        assert!(d.fallback);
        assert_eq!(d.attempts, 3);
    }

    #[test]
    fn rate_limit_then_success() {
        let (d, hits) = query(vec![Reply::Status(429), Reply::Content(answer_for_first_var())], Duration::from_secs(5));
        let d = d.unwrap();
        assert_eq!((d.attempts, d.fallback, hits), (2, false, 2));
    }

    #[test]
    fn unauthorized_is_fatal() {
        let (d, hits) = query(vec![Reply::Status(401)], Duration::from_secs(5));
        let err = d.unwrap_err();
        assert!(matches!(err, ModelError::Auth(_)) && err.is_fatal());
        assert_eq!(hits, 1);
    }

    #[test]
    fn missing_key_is_a_config_error() {
        let cfg = AdapterConfig { api_key_env: "VLDCOP_TEST_UNSET_KEY".into(), ..AdapterConfig::default() };
        assert!(matches!(RemoteConfig::from_adapter(&cfg), Err(ModelError::Config(_))));
    }
}
