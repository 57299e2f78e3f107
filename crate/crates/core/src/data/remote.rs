//! Client for an external cue service.
//!
//! A request names one frame and carries the vocabulary; the service answers
//! with a single cue record in the same JSON shape as a cue file line.
//! Accepted responses are appended to a cue file that doubles as a cache.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::data::{append_line, load_cues, FrameCues, Vocabulary};
use crate::error::{Result, SggError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RemoteError {
    #[error("cue service timed out")]
    Timeout,
    #[error("cue service connection failed: {0}")]
    Connection(String),
    #[error("cue service returned HTTP status {0}")]
    Status(u16),
    #[error("cue service response violates the schema: {0}")]
    Schema(String),
}

impl RemoteError {
    pub fn is_retryable(&self) -> bool {
        match self {
            RemoteError::Timeout | RemoteError::Connection(_) => true,
            RemoteError::Status(code) => *code >= 500,
            RemoteError::Schema(_) => false,
        }
    }
}

/// Sends one request body and returns the raw response body.
pub trait CueTransport {
    fn post(&self, endpoint: &str, body: &str) -> std::result::Result<String, RemoteError>;
}

#[derive(Serialize)]
struct PredicateLabels<'a> {
    attention: &'a [String],
    spatial: &'a [String],
    contacting: &'a [String],
}

#[derive(Serialize)]
struct CueRequest<'a> {
    video: &'a str,
    frame: usize,
    objects: &'a [String],
    predicates: PredicateLabels<'a>,
}

pub fn request_body(video: &str, frame: usize, vocab: &Vocabulary) -> String {
    serde_json::to_string(&CueRequest {
        video,
        frame,
        objects: vocab.objects(),
        predicates: PredicateLabels {
            attention: vocab.group(0),
            spatial: vocab.group(1),
            contacting: vocab.group(2),
        },
    })
    .expect("request serializes")
}

/// Parses and validates a response body for the requested frame.
pub fn parse_response(body: &str, video: &str, frame: usize) -> std::result::Result<FrameCues, RemoteError> {
    let cues: FrameCues = serde_json::from_str(body.trim()).map_err(|e| RemoteError::Schema(e.to_string()))?;
    if cues.video != video || cues.frame != frame {
        return Err(RemoteError::Schema(format!(
            "asked for {video}/{frame}, got {}/{}",
            cues.video, cues.frame
        )));
    }
    cues.validate().map_err(|e| RemoteError::Schema(e.to_string()))?;
    Ok(cues)
}

pub struct CueClient<T> {
    transport: T,
    endpoint: String,
    max_attempts: usize,
}

impl<T: CueTransport> CueClient<T> {
    pub fn new(transport: T, endpoint: impl Into<String>, max_attempts: usize) -> Self {
        CueClient {
            transport,
            endpoint: endpoint.into(),
            max_attempts: max_attempts.max(1),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Fetches cues for one frame, retrying retryable failures.
    pub fn fetch(&self, video: &str, frame: usize, vocab: &Vocabulary) -> std::result::Result<FrameCues, RemoteError> {
        let body = request_body(video, frame, vocab);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = self
                .transport
                .post(&self.endpoint, &body)
                .and_then(|text| parse_response(&text, video, frame));
            match result {
                Err(e) if e.is_retryable() && attempt < self.max_attempts => continue,
                other => return other,
            }
        }
    }
}

/// Cue file used as a read-through cache keyed by `(video, frame)`.
pub struct CueCache {
    path: PathBuf,
    entries: HashMap<(String, usize), FrameCues>,
}

impl CueCache {
    pub fn open(path: &Path) -> Result<Self> {
        let entries = if path.exists() {
            load_cues(path)?
                .into_iter()
                .map(|c| ((c.video.clone(), c.frame), c))
                .collect()
        } else {
            HashMap::new()
        };
        Ok(CueCache {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn get(&self, video: &str, frame: usize) -> Option<&FrameCues> {
        self.entries.get(&(video.to_string(), frame))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn insert(&mut self, cues: FrameCues) -> Result<()> {
        let line = serde_json::to_string(&cues).expect("cues serialize");
        append_line(&self.path, &line)?;
        self.entries.insert((cues.video.clone(), cues.frame), cues);
        Ok(())
    }
}

/// Returns cached cues when present, otherwise fetches, caches and returns them.
pub fn fetch_cues_remote<T: CueTransport>(
    client: &CueClient<T>,
    cache: &mut CueCache,
    video: &str,
    frame: usize,
    vocab: &Vocabulary,
) -> Result<FrameCues> {
    if let Some(hit) = cache.get(video, frame) {
        return Ok(hit.clone());
    }
    let cues = client.fetch(video, frame, vocab).map_err(SggError::from)?;
    cache.insert(cues.clone())?;
    Ok(cues)
}

/// Plain-HTTP transport posting JSON.
#[cfg(feature = "remote")]
pub struct HttpTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "remote")]
impl HttpTransport {
    pub fn new(timeout: std::time::Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent }
    }
}

#[cfg(feature = "remote")]
impl CueTransport for HttpTransport {
    fn post(&self, endpoint: &str, body: &str) -> std::result::Result<String, RemoteError> {
        let mut resp = self
            .agent
            .post(endpoint)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => RemoteError::Timeout,
                ureq::Error::StatusCode(code) => RemoteError::Status(code),
                other => RemoteError::Connection(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(RemoteError::Status(status));
        }
        resp.body_mut()
            .read_to_string()
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => RemoteError::Timeout,
                other => RemoteError::Connection(other.to_string()),
            })
    }
}
