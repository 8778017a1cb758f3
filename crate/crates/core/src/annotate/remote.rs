use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{resolve_overlaps, AnnotateError, EntityAnnotation};

/// Environment variable holding the annotation service token.
pub const TOKEN_ENV_VAR: &str = "ANNOTATOR_API_TOKEN";

/// Settings for a TAGME-compatible annotation endpoint.
///
/// The token is never serialized; it is read from [`TOKEN_ENV_VAR`] or set
/// programmatically.
#[derive(Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct AnnotatorConfig {
    pub endpoint_url: String,
    pub language: String,
    pub epsilon: f64,
    /// Minimum ρ score for an annotation to be kept.
    pub rho_threshold: f64,
    pub long_text: u32,
    #[serde(skip)]
    pub api_token: Option<String>,
    pub max_retries: u32,
    pub timeout_ms: u64,
    /// Base delay before the first retry; doubles on each further retry.
    pub backoff_ms: u64,
    /// Maximum in-flight requests when annotating many documents.
    pub concurrency: usize,
    /// Also send `rho_threshold` as the form field `q`.
    pub send_rho_threshold: bool,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig {
            endpoint_url: "https://tagme.d4science.org/tagme/tag".into(),
            language: "en".into(),
            epsilon: 0.427,
            rho_threshold: 0.16,
            long_text: 10,
            api_token: None,
            max_retries: 3,
            timeout_ms: 30_000,
            backoff_ms: 500,
            concurrency: 4,
            send_rho_threshold: false,
        }
    }
}

impl fmt::Debug for AnnotatorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnnotatorConfig")
            .field("endpoint_url", &self.endpoint_url)
            .field("language", &self.language)
            .field("epsilon", &self.epsilon)
            .field("rho_threshold", &self.rho_threshold)
            .field("long_text", &self.long_text)
            .field("api_token", &self.api_token.as_ref().map(|_| "<redacted>"))
            .field("max_retries", &self.max_retries)
            .field("timeout_ms", &self.timeout_ms)
            .field("backoff_ms", &self.backoff_ms)
            .field("concurrency", &self.concurrency)
            .field("send_rho_threshold", &self.send_rho_threshold)
            .finish()
    }
}

impl AnnotatorConfig {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        let bad = |m: String| Err(AnnotateError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.rho_threshold) {
            return bad(format!("rho_threshold {} outside [0, 1]", self.rho_threshold));
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.endpoint_url.trim().is_empty() {
            return bad("empty endpoint_url".into());
        }
        Ok(())
    }

    /// Fill `api_token` from the environment when it is not already set.
    pub fn with_token_from_env(mut self) -> Self {
        if self.api_token.is_none() {
            self.api_token = std::env::var(TOKEN_ENV_VAR).ok().filter(|t| !t.is_empty());
        }
        self
    }

    fn form(&self, text: &str, token: &str) -> Vec<(String, String)> {
        let mut form = vec![
            ("text".to_string(), text.to_string()),
            ("lang".to_string(), self.language.clone()),
            ("epsilon".to_string(), self.epsilon.to_string()),
            ("long_text".to_string(), self.long_text.to_string()),
            ("token".to_string(), token.to_string()),
        ];
        if self.send_rho_threshold {
            form.push(("q".to_string(), self.rho_threshold.to_string()));
        }
        form
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// A form-posting HTTP client. `Err` means no response was received.
pub trait HttpTransport: Send + Sync {
    fn post_form(
        &self,
        url: &str,
        form: &[(String, String)],
        timeout: Duration,
    ) -> Result<HttpReply, String>;
}

#[derive(Debug, Clone, Default)]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_form(
        &self,
        url: &str,
        form: &[(String, String)],
        timeout: Duration,
    ) -> Result<HttpReply, String> {
        let resp = self
            .client
            .post(url)
            .timeout(timeout)
            .form(form)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteOutcome {
    pub annotations: Vec<EntityAnnotation>,
    /// Number of rate-limited attempts that were retried.
    pub retries: u32,
}

pub struct RemoteAnnotator {
    config: AnnotatorConfig,
    transport: Arc<dyn HttpTransport>,
}

impl RemoteAnnotator {
    pub fn new(config: AnnotatorConfig) -> Result<Self, AnnotateError> {
        Self::with_transport(config, Arc::new(ReqwestTransport::new()))
    }

    pub fn with_transport(
        config: AnnotatorConfig,
        transport: Arc<dyn HttpTransport>,
    ) -> Result<Self, AnnotateError> {
        config.validate()?;
        Ok(RemoteAnnotator { config, transport })
    }

    pub fn config(&self) -> &AnnotatorConfig {
        &self.config
    }

    pub fn annotate(&self, doc_id: &str, text: &str) -> Result<RemoteOutcome, AnnotateError> {
        let token = self
            .config
            .api_token
            .as_deref()
            .ok_or(AnnotateError::MissingToken)?;
        let form = self.config.form(text, token);
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let mut retries = 0;
        loop {
            let reply = self
                .transport
                .post_form(&self.config.endpoint_url, &form, timeout)
                .map_err(AnnotateError::Transport)?;
            match reply.status {
                200..=299 => {
                    let annotations = parse_response(doc_id, text, &reply.body, self.config.rho_threshold)?;
                    return Ok(RemoteOutcome {
                        annotations,
                        retries,
                    });
                }
                401 | 403 => return Err(AnnotateError::AuthError(reply.status)),
                429 if retries < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1u64 << retries.min(16));
                    log::warn!("{doc_id}: rate limited, retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                    retries += 1;
                }
                429 => {
                    return Err(AnnotateError::RateLimited {
                        attempts: retries + 1,
                    })
                }
                other => return Err(AnnotateError::HttpStatus(other)),
            }
        }
    }

    /// Annotate `(doc_id, text)` pairs with up to `config.concurrency`
    /// requests in flight. The result is ordered by document id, then start
    /// offset. The first failure stops further requests and is returned.
    pub fn annotate_documents(
        &self,
        docs: &[(String, String)],
    ) -> Result<Vec<EntityAnnotation>, AnnotateError> {
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let results: Mutex<Vec<(usize, Result<RemoteOutcome, AnnotateError>)>> =
            Mutex::new(Vec::with_capacity(docs.len()));
        let workers = self.config.concurrency.min(docs.len()).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if failed.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some((id, text)) = docs.get(i) else { break };
                    let r = self.annotate(id, text);
                    if r.is_err() {
                        failed.store(true, Ordering::Relaxed);
                    }
                    results.lock().expect("results lock").push((i, r));
                });
            }
        });
        let mut results = results.into_inner().expect("results lock");
        results.sort_by_key(|(i, _)| *i);
        let mut out = Vec::new();
        for (i, r) in results {
            match r {
                Ok(o) => out.extend(o.annotations),
                Err(e) => {
                    return Err(AnnotateError::Document {
                        doc_id: docs[i].0.clone(),
                        source: Box::new(e),
                    })
                }
            }
        }
        super::sort_for_persistence(&mut out);
        Ok(out)
    }
}

/// One-shot annotation over HTTP with the default transport.
pub fn annotate_remote(
    doc_id: &str,
    text: &str,
    config: &AnnotatorConfig,
) -> Result<Vec<EntityAnnotation>, AnnotateError> {
    Ok(RemoteAnnotator::new(config.clone())?.annotate(doc_id, text)?.annotations)
}

fn field<'a>(obj: &'a Value, key: &str) -> Result<&'a Value, AnnotateError> {
    obj.get(key)
        .ok_or_else(|| AnnotateError::MalformedResponse(format!("annotation missing {key:?}")))
}

fn as_offset(v: &Value, key: &str) -> Result<usize, AnnotateError> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| AnnotateError::MalformedResponse(format!("{key} is not a non-negative integer")))
}

pub(crate) fn parse_response(
    doc_id: &str,
    text: &str,
    body: &str,
    rho_threshold: f64,
) -> Result<Vec<EntityAnnotation>, AnnotateError> {
    let json: Value = serde_json::from_str(body)
        .map_err(|e| AnnotateError::MalformedResponse(format!("invalid JSON: {e}")))?;
    let items = json
        .get("annotations")
        .and_then(Value::as_array)
        .ok_or_else(|| AnnotateError::MalformedResponse("missing \"annotations\" array".into()))?;
    let text_len = text.chars().count();
    let mut candidates = Vec::with_capacity(items.len());
    for item in items {
        let start = as_offset(field(item, "start")?, "start")?;
        let end = as_offset(field(item, "end")?, "end")?;
        if start >= end || end > text_len {
            return Err(AnnotateError::MalformedResponse(format!(
                "span [{start}, {end}) outside text of length {text_len}"
            )));
        }
        let rho = field(item, "rho")?
            .as_f64()
            .ok_or_else(|| AnnotateError::MalformedResponse("rho is not a number".into()))?;
        let entity_id = match field(item, "id")? {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(AnnotateError::MalformedResponse("id is not a scalar".into())),
        };
        let title = field(item, "title")?
            .as_str()
            .ok_or_else(|| AnnotateError::MalformedResponse("title is not a string".into()))?;
        let spot = field(item, "spot")?
            .as_str()
            .ok_or_else(|| AnnotateError::MalformedResponse("spot is not a string".into()))?;
        if rho < rho_threshold {
            continue;
        }
        candidates.push(EntityAnnotation {
            doc_id: doc_id.to_string(),
            entity_id,
            entity_title: title.to_string(),
            mention: spot.to_string(),
            start,
            end,
            score: rho.clamp(0.0, 1.0),
        });
    }
    Ok(resolve_overlaps(candidates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    const TEXT: &str = "cloud computing and virtual machines";
    const OK_BODY: &str = r#"{"annotations":[{"spot":"cloud computing","start":0,"end":15,"id":19541494,"title":"Cloud computing","rho":0.5}]}"#;

    /// Replays canned replies and records every request.
    #[derive(Default)]
    struct Scripted {
        replies: Mutex<VecDeque<Result<HttpReply, String>>>,
        requests: Mutex<Vec<Vec<(String, String)>>>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<HttpReply, String>>) -> Arc<Self> {
            Arc::new(Scripted {
                replies: Mutex::new(replies.into()),
                requests: Mutex::default(),
            })
        }
    }

    impl HttpTransport for Scripted {
        fn post_form(&self, _: &str, form: &[(String, String)], _: Duration) -> Result<HttpReply, String> {
            self.requests.lock().unwrap().push(form.to_vec());
            self.replies
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or_else(|| Ok(reply(200, OK_BODY)))
        }
    }

    fn reply(status: u16, body: &str) -> HttpReply {
        HttpReply {
            status,
            body: body.into(),
        }
    }

    fn config() -> AnnotatorConfig {
        AnnotatorConfig {
            endpoint_url: "http://annotator.invalid/tag".into(),
            api_token: Some("secret".into()),
            backoff_ms: 0,
            ..AnnotatorConfig::default()
        }
    }

    #[test]
    fn defaults() {
        let c = AnnotatorConfig::default();
        assert_eq!(c.epsilon, 0.427);
        assert_eq!(c.rho_threshold, 0.16);
        assert_eq!(c.long_text, 10);
        assert_eq!(c.language, "en");
        assert_eq!(c.concurrency, 4);
    }

    #[test]
    fn single_annotation() {
        let out = parse_response("d", TEXT, OK_BODY, 0.16).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].entity_title, "Cloud computing");
        assert_eq!(out[0].entity_id, "19541494");
        assert_eq!(out[0].mention, "cloud computing");
        assert_eq!((out[0].start, out[0].end), (0, 15));
    }

    #[test]
    fn low_rho_is_dropped() {
        let body = OK_BODY.replace("0.5", "0.10");
        assert!(parse_response("d", TEXT, &body, 0.16).unwrap().is_empty());
    }

    #[test]
    fn missing_annotations_array() {
        assert!(matches!(
            parse_response("d", TEXT, r#"{"timestamp":"x"}"#, 0.16),
            Err(AnnotateError::MalformedResponse(_))
        ));
        assert!(matches!(
            parse_response("d", TEXT, "<html>", 0.16),
            Err(AnnotateError::MalformedResponse(_))
        ));
    }

    #[test]
    fn span_past_end_of_text() {
        let body = OK_BODY.replace("\"end\":15", "\"end\":99");
        assert!(matches!(
            parse_response("d", TEXT, &body, 0.16),
            Err(AnnotateError::MalformedResponse(_))
        ));
    }

    #[test]
    fn overlapping_annotations_keep_higher_rho() {
        let body = r#"{"annotations":[
            {"spot":"cloud","start":0,"end":5,"id":1,"title":"Cloud","rho":0.3},
            {"spot":"cloud computing","start":0,"end":15,"id":2,"title":"Cloud computing","rho":0.4},
            {"spot":"virtual machines","start":20,"end":36,"id":3,"title":"Virtual machine","rho":0.2}
        ]}"#;
        let out = parse_response("d", TEXT, body, 0.16).unwrap();
        let titles: Vec<_> = out.iter().map(|a| a.entity_title.as_str()).collect();
        assert_eq!(titles, ["Cloud computing", "Virtual machine"]);
    }

    #[test]
    fn form_fields() {
        let t = Scripted::new(vec![]);
        let a = RemoteAnnotator::with_transport(config(), t.clone()).unwrap();
        a.annotate("d", TEXT).unwrap();
        let reqs = t.requests.lock().unwrap();
        let keys: Vec<_> = reqs[0].iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["text", "lang", "epsilon", "long_text", "token"]);
        assert_eq!(reqs[0][2].1, "0.427");
        assert_eq!(reqs[0][3].1, "10");
        assert_eq!(reqs[0][4].1, "secret");
    }

    #[test]
    fn rho_threshold_passthrough() {
        let t = Scripted::new(vec![]);
        let cfg = AnnotatorConfig {
            send_rho_threshold: true,
            ..config()
        };
        RemoteAnnotator::with_transport(cfg, t.clone())
            .unwrap()
            .annotate("d", TEXT)
            .unwrap();
        let reqs = t.requests.lock().unwrap();
        assert_eq!(reqs[0].last().unwrap(), &("q".to_string(), "0.16".to_string()));
    }

    #[test]
    fn retry_after_rate_limit() {
        let t = Scripted::new(vec![Ok(reply(429, "slow down")), Ok(reply(200, OK_BODY))]);
        let a = RemoteAnnotator::with_transport(config(), t.clone()).unwrap();
        let out = a.annotate("d", TEXT).unwrap();
        assert_eq!(out.retries, 1);
        assert_eq!(out.annotations.len(), 1);
        assert_eq!(t.requests.lock().unwrap().len(), 2);
    }

    #[test]
    fn rate_limit_exhausts_retries() {
        let t = Scripted::new(vec![Ok(reply(429, "")); 10]);
        let cfg = AnnotatorConfig {
            max_retries: 2,
            ..config()
        };
        let a = RemoteAnnotator::with_transport(cfg, t.clone()).unwrap();
        assert!(matches!(
            a.annotate("d", TEXT),
            Err(AnnotateError::RateLimited { attempts: 3 })
        ));
        assert_eq!(t.requests.lock().unwrap().len(), 3);
    }

    #[test]
    fn auth_and_transport_errors() {
        for status in [401, 403] {
            let t = Scripted::new(vec![Ok(reply(status, ""))]);
            let a = RemoteAnnotator::with_transport(config(), t).unwrap();
            assert!(matches!(a.annotate("d", TEXT), Err(AnnotateError::AuthError(s)) if s == status));
        }
        let t = Scripted::new(vec![Err("connection refused".into())]);
        let a = RemoteAnnotator::with_transport(config(), t).unwrap();
        assert!(matches!(a.annotate("d", TEXT), Err(AnnotateError::Transport(_))));
    }

    #[test]
    fn missing_token() {
        let cfg = AnnotatorConfig {
            api_token: None,
            ..config()
        };
        let a = RemoteAnnotator::with_transport(cfg, Scripted::new(vec![])).unwrap();
        assert!(matches!(a.annotate("d", TEXT), Err(AnnotateError::MissingToken)));
    }

    #[test]
    fn token_is_redacted_and_not_serialized() {
        let cfg = config();
        assert!(!format!("{cfg:?}").contains("secret"));
        assert!(!serde_json::to_string(&cfg).unwrap().contains("secret"));
    }

    #[test]
    fn invalid_config() {
        let cfg = AnnotatorConfig {
            epsilon: 1.5,
            ..config()
        };
        assert!(RemoteAnnotator::with_transport(cfg, Scripted::new(vec![])).is_err());
    }

    #[test]
    fn batch_is_ordered_by_doc_id() {
        let t = Scripted::new(vec![]);
        let a = RemoteAnnotator::with_transport(config(), t).unwrap();
        let docs: Vec<_> = ["d3", "d1", "d2", "d0", "d5"]
            .iter()
            .map(|id| (id.to_string(), TEXT.to_string()))
            .collect();
        let out = a.annotate_documents(&docs).unwrap();
        let ids: Vec<_> = out.iter().map(|x| x.doc_id.as_str()).collect();
        assert_eq!(ids, ["d0", "d1", "d2", "d3", "d5"]);
    }

    #[test]
    fn batch_surfaces_first_failure() {
        let t = Scripted::new(vec![Ok(reply(403, ""))]);
        let cfg = AnnotatorConfig {
            concurrency: 1,
            ..config()
        };
        let a = RemoteAnnotator::with_transport(cfg, t).unwrap();
        let docs = vec![("a".to_string(), TEXT.to_string()), ("b".to_string(), TEXT.to_string())];
        match a.annotate_documents(&docs) {
            Err(AnnotateError::Document { doc_id, source }) => {
                assert_eq!(doc_id, "a");
                assert!(matches!(*source, AnnotateError::AuthError(403)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
