//! SPARQL protocol client (POST form encoding, JSON results).

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::wire::decode_results;
use super::{AnswerSet, KbBackend, KbError};
use crate::logical_form::sparql::FREEBASE_NS;
use crate::logical_form::SparqlQuery;
use crate::sync::Semaphore;

const RESULTS_JSON: &str = "application/sparql-results+json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_namespace")]
    pub namespace: String,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_in_flight() -> usize {
    4
}
fn default_namespace() -> String {
    FREEBASE_NS.to_string()
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
            namespace: default_namespace(),
        }
    }
}

pub struct SparqlEndpoint {
    config: EndpointConfig,
    agent: ureq::Agent,
    in_flight: Semaphore,
}

impl SparqlEndpoint {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(
                config.timeout_secs.max(0.001),
            )))
            .http_status_as_error(false)
            .build()
            .new_agent();
        let in_flight = Semaphore::new(config.max_in_flight);
        SparqlEndpoint {
            config,
            agent,
            in_flight,
        }
    }

    /// Full query text sent on the wire, with the prefixes the serializer
    /// relies on.
    pub fn request_text(&self, q: &SparqlQuery) -> String {
        format!(
            "PREFIX ns: <{}>\nPREFIX xsd: <http://www.w3.org/2001/XMLSchema#>\n{}",
            self.config.namespace,
            q.serialize()
        )
    }
}

fn transport(e: ureq::Error) -> KbError {
    match e {
        ureq::Error::Timeout(_) => KbError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => KbError::Timeout,
        other => KbError::Transport(other.to_string()),
    }
}

impl KbBackend for SparqlEndpoint {
    fn execute(&self, q: &SparqlQuery) -> Result<AnswerSet, KbError> {
        let text = self.request_text(q);
        let _permit = self.in_flight.acquire();
        let mut resp = self
            .agent
            .post(&self.config.url)
            .header("Accept", RESULTS_JSON)
            .send_form([("query", text.as_str())])
            .map_err(transport)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(transport)?;
        match status {
            200..=299 => decode_results(&body, q, &self.config.namespace),
            400 => Err(KbError::QueryRejected(body)),
            _ => Err(KbError::Endpoint { status, body }),
        }
    }
}
