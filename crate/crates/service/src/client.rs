//! Blocking HTTP client for the dock API. Not usable from inside an async runtime.

use std::time::{Duration, Instant};

use lwdock_core::market::SearchResult;
use lwdock_core::storage::IndexRecord;
use lwdock_core::Status;
use reqwest::blocking::{Client as Http, RequestBuilder, Response};
use serde::de::DeserializeOwned;

use crate::api::ADMIN_HEADER;
use crate::wire::{ErrorBody, Health, LearnwareDetail, SearchRequest, Submitted};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The server answered with an error status.
    #[error("{status} {code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
    },
    #[error("request failed: {0}")]
    Transport(String),
    #[error("timed out waiting for {0}")]
    Timeout(String),
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

/// Filters for `GET /api/learnwares`, sent verbatim.
#[derive(Debug, Clone, Default)]
pub struct ListFilter {
    pub status: Option<String>,
    pub task_type: Option<String>,
    pub data_type: Option<String>,
    pub scenario: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: Http,
    admin_token: Option<String>,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        let http = Http::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("http client");
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http,
            admin_token: None,
        }
    }

    pub fn with_admin_token(mut self, token: impl Into<String>) -> Self {
        self.admin_token = Some(token.into());
        self
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn send(&self, req: RequestBuilder) -> ClientResult<Response> {
        let resp = req.send()?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let text = resp.text().unwrap_or_default();
        let body = serde_json::from_str::<ErrorBody>(&text).unwrap_or(ErrorBody {
            code: format!("HTTP{status}"),
            message: text,
        });
        Err(ClientError::Api {
            status,
            code: body.code,
            message: body.message,
        })
    }

    fn json<T: DeserializeOwned>(&self, req: RequestBuilder) -> ClientResult<T> {
        Ok(self.send(req)?.json()?)
    }

    pub fn submit(&self, zip: Vec<u8>) -> ClientResult<Submitted> {
        self.json(
            self.http
                .post(self.url("/api/learnware"))
                .header("content-type", "application/zip")
                .body(zip),
        )
    }

    pub fn get(&self, id: &str) -> ClientResult<LearnwareDetail> {
        self.json(self.http.get(self.url(&format!("/api/learnware/{id}"))))
    }

    pub fn package(&self, id: &str) -> ClientResult<Vec<u8>> {
        Ok(self
            .send(
                self.http
                    .get(self.url(&format!("/api/learnware/{id}/package"))),
            )?
            .bytes()?
            .to_vec())
    }

    pub fn list(&self, filter: &ListFilter) -> ClientResult<Vec<IndexRecord>> {
        let pairs: Vec<(&str, &String)> = [
            ("status", &filter.status),
            ("task_type", &filter.task_type),
            ("data_type", &filter.data_type),
            ("scenario", &filter.scenario),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect();
        self.json(self.http.get(self.url("/api/learnwares")).query(&pairs))
    }

    pub fn search(&self, req: &SearchRequest) -> ClientResult<SearchResult> {
        self.json(self.http.post(self.url("/api/search")).json(req))
    }

    pub fn delete(&self, id: &str) -> ClientResult<()> {
        let mut req = self.http.delete(self.url(&format!("/api/learnware/{id}")));
        if let Some(t) = &self.admin_token {
            req = req.header(ADMIN_HEADER, t);
        }
        self.send(req).map(|_| ())
    }

    pub fn health(&self) -> ClientResult<Health> {
        self.json(self.http.get(self.url("/api/health")))
    }

    /// Polls until `id` leaves `WAITING`.
    pub fn wait_terminal(&self, id: &str, timeout: Duration) -> ClientResult<LearnwareDetail> {
        let start = Instant::now();
        loop {
            let d = self.get(id)?;
            if d.record.status != Status::Waiting {
                return Ok(d);
            }
            if start.elapsed() > timeout {
                return Err(ClientError::Timeout(format!("learnware {id}")));
            }
            std::thread::sleep(Duration::from_millis(50));
        }
    }
}
