//! JSON bodies of the editor HTTP contract.
//!
//! Images travel as base64-encoded 8-bit grayscale PNG.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{GatewayError, ImageGray};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditBody {
    pub request_id: String,
    pub prompt: String,
    pub image_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditReply {
    pub request_id: String,
    pub image_png_b64: String,
    pub backend_info: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescribeBody {
    pub request_id: String,
    pub image_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescribeReply {
    pub request_id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthReply {
    pub status: String,
}

/// Structured error body returned with a non-2xx status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
    #[serde(default)]
    pub retryable: bool,
}

pub fn encode_image(image: &ImageGray) -> Result<String, GatewayError> {
    Ok(STANDARD.encode(image.to_png_bytes()?))
}

pub fn decode_image(b64: &str) -> Result<ImageGray, GatewayError> {
    let bytes = STANDARD
        .decode(b64.trim())
        .map_err(|e| GatewayError::Codec(format!("invalid base64: {e}")))?;
    ImageGray::from_png_bytes(&bytes)
}
