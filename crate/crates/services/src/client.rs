//! Typed HTTP clients for the CA, cosigners and mirror.

use std::time::Duration;

use mtc_core::landmark::SignedCheckpoint;
use mtc_core::merkle::{Checkpoint, ConsistencyProof, Hash, SubtreeRange};
use mtc_core::trust::{TrustConfig, TrustedCosigner};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::api::*;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{url}: HTTP {status}: {}: {}", body.error, body.message)]
    Status { url: String, status: u16, body: ErrorBody },
    #[error("{url}: {source}")]
    Transport { url: String, source: reqwest::Error },
    #[error("{url}: bad response: {message}")]
    Decode { url: String, message: String },
}

impl ClientError {
    pub fn error_code(&self) -> Option<&str> {
        match self {
            ClientError::Status { body, .. } => Some(&body.error),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HttpClient {
    inner: reqwest::Client,
    base: String,
}

impl HttpClient {
    pub fn new(base: &str, timeout: Duration) -> Self {
        let inner = reqwest::Client::builder().timeout(timeout).build().expect("client builds");
        HttpClient { inner, base: base.trim_end_matches('/').to_string() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn send(&self, req: reqwest::RequestBuilder, url: String) -> Result<reqwest::Response, ClientError> {
        let resp = req.send().await.map_err(|source| ClientError::Transport { url: url.clone(), source })?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let bytes = resp.bytes().await.unwrap_or_default();
        let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| ErrorBody {
            error: "http".into(),
            message: String::from_utf8_lossy(&bytes).into_owned(),
            details: vec![],
        });
        Err(ClientError::Status { url, status: status.as_u16(), body })
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response, url: String) -> Result<T, ClientError> {
        let bytes = resp.bytes().await.map_err(|source| ClientError::Transport { url: url.clone(), source })?;
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode { url, message: e.to_string() })
    }

    pub async fn get_json<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let url = self.url(path);
        let resp = self.send(self.inner.get(&url), url.clone()).await?;
        Self::decode(resp, url).await
    }

    pub async fn get_text(&self, path: &str) -> Result<String, ClientError> {
        let url = self.url(path);
        let resp = self.send(self.inner.get(&url), url.clone()).await?;
        resp.text().await.map_err(|source| ClientError::Transport { url, source })
    }

    pub async fn get_bytes(&self, path: &str) -> Result<Vec<u8>, ClientError> {
        let url = self.url(path);
        let resp = self.send(self.inner.get(&url), url.clone()).await?;
        Ok(resp.bytes().await.map_err(|source| ClientError::Transport { url, source })?.to_vec())
    }

    /// Like `post_json`, but a refusal status whose body still decodes as
    /// `T` is returned as a value.
    pub async fn post_json_lenient<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let url = self.url(path);
        let resp = self.inner.post(&url).json(body).send().await.map_err(|source| ClientError::Transport { url: url.clone(), source })?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(|source| ClientError::Transport { url: url.clone(), source })?;
        match serde_json::from_slice(&bytes) {
            Ok(v) => Ok(v),
            Err(e) if status.is_success() => Err(ClientError::Decode { url, message: e.to_string() }),
            Err(_) => Err(ClientError::Status {
                url,
                status: status.as_u16(),
                body: serde_json::from_slice(&bytes).unwrap_or_else(|_| ErrorBody {
                    error: "http".into(),
                    message: String::from_utf8_lossy(&bytes).into_owned(),
                    details: vec![],
                }),
            }),
        }
    }

    pub async fn post_json<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let url = self.url(path);
        let resp = self.send(self.inner.post(&url).json(body), url.clone()).await?;
        Self::decode(resp, url).await
    }
}

/// Client for a witness or mirror cosigner.
#[derive(Clone, Debug)]
pub struct CosignerClient(pub HttpClient);

impl CosignerClient {
    pub fn new(base: &str, timeout: Duration) -> Self {
        CosignerClient(HttpClient::new(base, timeout))
    }

    pub async fn info(&self) -> Result<TrustedCosigner, ClientError> {
        self.0.get_json("/cosigner-info").await
    }

    pub async fn state(&self) -> Result<CosignerState, ClientError> {
        self.0.get_json("/state").await
    }

    pub async fn cosign(&self, checkpoint: Checkpoint, consistency_proof: ConsistencyProof) -> Result<CosignResponse, ClientError> {
        self.0.post_json_lenient("/cosign", &CosignRequest { checkpoint, consistency_proof }).await
    }
}

#[derive(Clone, Debug)]
pub struct CaClient(pub HttpClient);

impl CaClient {
    pub fn new(base: &str, timeout: Duration) -> Self {
        CaClient(HttpClient::new(base, timeout))
    }

    pub async fn issue(&self, req: &mtc_core::authority::IssueRequest) -> Result<IssueResponse, ClientError> {
        self.0.post_json("/issue-cert", req).await
    }

    pub async fn landmark_cert(&self, index: u64, number: Option<u64>) -> Result<LandmarkCertResponse, ClientError> {
        let path = match number {
            Some(n) => format!("/landmark-cert?index={index}&number={n}"),
            None => format!("/landmark-cert?index={index}"),
        };
        self.0.get_json(&path).await
    }

    pub async fn trust_config(&self) -> Result<TrustConfig, ClientError> {
        self.0.get_json("/trust-config").await
    }

    pub async fn landmark_sequence(&self) -> Result<String, ClientError> {
        self.0.get_text("/landmark-sequence").await
    }

    pub async fn checkpoint(&self) -> Result<SignedCheckpoint, ClientError> {
        self.0.get_json("/checkpoint").await
    }

    pub async fn entries(&self, start: u64, count: u64) -> Result<EntriesResponse, ClientError> {
        self.0.get_json(&format!("/entries?start={start}&count={count}")).await
    }

    pub async fn revoke(&self, lo: u64, hi: u64, admission_token: &str) -> Result<RevokeResponse, ClientError> {
        self.0.post_json("/revoke", &RevokeRequest { lo, hi, admission_token: admission_token.into() }).await
    }

    pub async fn allocate_landmark(&self, admission_token: &str) -> Result<AllocateResponse, ClientError> {
        self.0.post_json("/allocate-landmark", &AdminRequest { admission_token: admission_token.into() }).await
    }
}

#[derive(Clone, Debug)]
pub struct MirrorClient(pub HttpClient);

impl MirrorClient {
    pub fn new(base: &str, timeout: Duration) -> Self {
        MirrorClient(HttpClient::new(base, timeout))
    }

    pub async fn checkpoint(&self) -> Result<SignedCheckpoint, ClientError> {
        self.0.get_json("/checkpoint").await
    }

    pub async fn subtree(&self, range: SubtreeRange, size: u64) -> Result<SubtreeResponse, ClientError> {
        self.0.get_json(&format!("/subtree?start={}&end={}&size={size}", range.start(), range.end())).await
    }

    pub async fn tile(&self, level: u8, index: u64) -> Result<Vec<Hash>, ClientError> {
        let bytes = self.0.get_bytes(&format!("/tile/{level}/{index}")).await?;
        if bytes.len() % 32 != 0 {
            return Err(ClientError::Decode { url: self.0.url("/tile"), message: format!("{} bytes is not a whole number of hashes", bytes.len()) });
        }
        Ok(bytes.chunks(32).map(|c| Hash::from_slice(c).expect("32 bytes")).collect())
    }

    /// Asks the mirror to sync now from its CA.
    pub async fn sync(&self) -> Result<MirrorStatus, ClientError> {
        self.0.post_json("/sync", &serde_json::json!({})).await
    }

    pub async fn status(&self) -> Result<MirrorStatus, ClientError> {
        self.0.get_json("/state").await
    }
}
