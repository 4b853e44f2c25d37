//! Typed async client for the armsim HTTP service.

use armsim_core::api::{
    ApiError, AppliedAck, CollideRequest, CommandEnvelope, FkRequest, Health, IkRequest,
    TorqueRequest, ValidateRequest, ValidateResponse,
};
use armsim_core::sim::{CommandMessage, StateMessage};
use armsim_core::{CollisionReport, FkResult, IkResult, TorqueReport};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service understood the request and refused it.
    #[error("{0}")]
    Api(ApiError),
    #[error("unexpected status {status}: {body}")]
    Status { status: StatusCode, body: String },
}

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8047`.
    pub fn new(base: impl Into<String>) -> Self {
        let base = base.into();
        Self {
            http: reqwest::Client::new(),
            base: base.trim_end_matches('/').to_string(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let body = resp.text().await?;
        match serde_json::from_str::<ApiError>(&body) {
            Ok(e) if status.is_client_error() => Err(ClientError::Api(e)),
            _ => Err(ClientError::Status { status, body }),
        }
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let resp = self.http.get(format!("{}{path}", self.base)).send().await?;
        Self::decode(resp).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/api/health").await
    }

    /// Canonical URDF of the model the service loaded.
    pub async fn model_urdf(&self) -> Result<String, ClientError> {
        let resp = self
            .http
            .get(format!("{}/api/model/urdf", self.base))
            .send()
            .await?;
        let status = resp.status();
        let body = resp.text().await?;
        if status.is_success() {
            Ok(body)
        } else {
            Err(ClientError::Status { status, body })
        }
    }

    pub async fn validate(&self, req: &ValidateRequest) -> Result<ValidateResponse, ClientError> {
        self.post("/api/validate", req).await
    }

    pub async fn fk(&self, req: &FkRequest) -> Result<FkResult, ClientError> {
        self.post("/api/fk", req).await
    }

    pub async fn ik(&self, req: &IkRequest) -> Result<IkResult, ClientError> {
        self.post("/api/ik", req).await
    }

    pub async fn torque(&self, req: &TorqueRequest) -> Result<TorqueReport, ClientError> {
        self.post("/api/torque", req).await
    }

    pub async fn collide(&self, req: &CollideRequest) -> Result<CollisionReport, ClientError> {
        self.post("/api/collide", req).await
    }

    pub async fn state(&self) -> Result<StateMessage, ClientError> {
        self.get("/api/state").await
    }

    pub async fn command(&self, command: CommandMessage) -> Result<AppliedAck, ClientError> {
        self.post("/api/command", &CommandEnvelope { id: None, command })
            .await
    }
}
