//! Image-editing and image-describing backends.
//!
//! [`EditorBackend`] is implemented by the in-process [`MockEditor`] and by
//! [`RemoteEditor`], an HTTP client for a service exposing `POST /edit`,
//! `POST /describe` and `GET /health`. [`Gateway`] runs batches against a
//! backend with a bounded number of requests in flight.

pub mod image;
pub mod mock;
pub mod remote;
pub mod wire;

use rayon::prelude::*;
use thiserror::Error;

pub use self::image::ImageGray;
pub use self::mock::MockEditor;
pub use self::remote::{RemoteEditor, RetryPolicy};

/// Default number of concurrent in-flight requests.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: usize, message: String },
    #[error("backend rejected the request: {0}")]
    BackendRejected(String),
    #[error("backend returned a {got_w}x{got_h} image for a {want_w}x{want_h} request")]
    DimensionMismatch {
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("image codec error: {0}")]
    Codec(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditRequest {
    request_id: String,
    image: ImageGray,
    prompt: String,
}

impl EditRequest {
    pub fn new(
        request_id: impl Into<String>,
        image: ImageGray,
        prompt: impl Into<String>,
    ) -> Result<Self, GatewayError> {
        let request_id = request_id.into();
        let prompt = prompt.into();
        if request_id.is_empty() {
            return Err(GatewayError::InvalidRequest("empty request id".into()));
        }
        if prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest(format!(
                "empty prompt for request `{request_id}`"
            )));
        }
        Ok(Self {
            request_id,
            image,
            prompt,
        })
    }

    pub fn request_id(&self) -> &str {
        &self.request_id
    }

    pub fn image(&self) -> &ImageGray {
        &self.image
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditResponse {
    pub request_id: String,
    pub edited: ImageGray,
    pub backend_info: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescribeResponse {
    pub request_id: String,
    pub description: String,
}

pub trait EditorBackend: Send + Sync {
    fn edit(&self, req: &EditRequest) -> Result<EditResponse, GatewayError>;

    fn describe(
        &self,
        request_id: &str,
        image: &ImageGray,
    ) -> Result<DescribeResponse, GatewayError>;

    fn health(&self) -> Result<(), GatewayError> {
        Ok(())
    }

    fn name(&self) -> String;
}

impl<B: EditorBackend + ?Sized> EditorBackend for Box<B> {
    fn edit(&self, req: &EditRequest) -> Result<EditResponse, GatewayError> {
        (**self).edit(req)
    }

    fn describe(
        &self,
        request_id: &str,
        image: &ImageGray,
    ) -> Result<DescribeResponse, GatewayError> {
        (**self).describe(request_id, image)
    }

    fn health(&self) -> Result<(), GatewayError> {
        (**self).health()
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

/// Runs an edit and enforces the response contract (same id, same size).
pub fn edit_image(
    req: &EditRequest,
    backend: &dyn EditorBackend,
) -> Result<EditResponse, GatewayError> {
    let resp = backend.edit(req)?;
    let (want_w, want_h) = req.image().dimensions();
    let (got_w, got_h) = resp.edited.dimensions();
    if (want_w, want_h) != (got_w, got_h) {
        return Err(GatewayError::DimensionMismatch {
            want_w,
            want_h,
            got_w,
            got_h,
        });
    }
    if resp.request_id != req.request_id() {
        return Err(GatewayError::BackendRejected(format!(
            "response id `{}` does not echo request id `{}`",
            resp.request_id,
            req.request_id()
        )));
    }
    Ok(resp)
}

pub fn describe_image(
    request_id: &str,
    image: &ImageGray,
    backend: &dyn EditorBackend,
) -> Result<DescribeResponse, GatewayError> {
    let resp = backend.describe(request_id, image)?;
    if resp.request_id != request_id {
        return Err(GatewayError::BackendRejected(format!(
            "response id `{}` does not echo request id `{request_id}`",
            resp.request_id
        )));
    }
    Ok(resp)
}

/// A backend plus a bound on concurrent requests.
///
/// Batch results come back in request order regardless of completion order.
pub struct Gateway<B> {
    backend: B,
    pool: rayon::ThreadPool,
    max_in_flight: usize,
}

impl<B: EditorBackend> Gateway<B> {
    pub fn new(backend: B, max_in_flight: usize) -> Result<Self, GatewayError> {
        if max_in_flight == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_in_flight must be ≥ 1".into(),
            ));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(max_in_flight)
            .build()
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            backend,
            pool,
            max_in_flight,
        })
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    pub fn edit(&self, req: &EditRequest) -> Result<EditResponse, GatewayError> {
        edit_image(req, &self.backend)
    }

    pub fn edit_batch(&self, requests: &[EditRequest]) -> Vec<Result<EditResponse, GatewayError>> {
        self.pool.install(|| {
            requests
                .par_iter()
                .with_max_len(1)
                .map(|r| edit_image(r, &self.backend))
                .collect()
        })
    }

    pub fn describe_batch(
        &self,
        items: &[(String, ImageGray)],
    ) -> Vec<Result<DescribeResponse, GatewayError>> {
        self.pool.install(|| {
            items
                .par_iter()
                .with_max_len(1)
                .map(|(id, img)| describe_image(id, img, &self.backend))
                .collect()
        })
    }
}
