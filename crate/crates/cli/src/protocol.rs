//! JSON bodies of the `/v1` session protocol.

use popbo::kernel::Point;
use popbo::session::{DimensionLabel, PopBoConfig, RadiusReport, StepRecord};
use serde::{Deserialize, Serialize};

/// `POST /v1/sessions`. Exactly one of `config` and `instance` is set;
/// `instance` builds the default configuration of a named benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PopBoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
}

/// `GET /v1/sessions/{id}/duel`: `x` is the new query, `x_prime` the
/// previous one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuelResponse {
    pub t: usize,
    pub x: Point,
    pub x_prime: Point,
    pub labels: Vec<DimensionLabel>,
}

/// `POST /v1/sessions/{id}/preference`: `1` when `x` won.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceRequest {
    pub pref: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceResponse {
    pub t: usize,
    pub report: RadiusReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub t_star: usize,
    pub x: Point,
    pub radius: f64,
    pub max_mle_point: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceResponse {
    pub t: usize,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl PreferenceRequest {
    pub fn parse(body: &[u8]) -> Result<bool, String> {
        let req: PreferenceRequest = serde_json::from_slice(body).map_err(|e| e.to_string())?;
        match req.pref {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format!("pref must be 0 or 1, got {other}")),
        }
    }
}

impl CreateRequest {
    pub fn parse(body: &[u8]) -> Result<Self, String> {
        let req: CreateRequest = serde_json::from_slice(body).map_err(|e| e.to_string())?;
        match (&req.config, &req.instance) {
            (Some(_), None) | (None, Some(_)) => Ok(req),
            _ => Err("exactly one of 'config' and 'instance' is required".into()),
        }
    }
}
