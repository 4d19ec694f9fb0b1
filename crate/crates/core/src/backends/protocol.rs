//! JSON-over-HTTP wire format.
//!
//! | endpoint            | request              | response                |
//! |---------------------|----------------------|-------------------------|
//! | `POST /v1/embed_text`  | [`EmbedTextRequest`]  | [`EmbedResponse`]      |
//! | `POST /v1/embed_image` | [`EmbedImageRequest`] | [`EmbedResponse`]      |
//! | `POST /v1/generate`    | [`GenerateRequest`]   | [`GenerateResponse`]   |
//! | `POST /v1/score`       | [`ScoreWireRequest`]  | [`ScoreResponse`]      |
//!
//! Errors are returned with a non-2xx status and an [`ErrorResponse`] body.
//! Status 413 or code `context_too_long` means the prompt did not fit the
//! model context; 5xx and transport failures are retried.

use serde::{Deserialize, Serialize};

use super::{FinishReason, Role};

pub const EMBED_TEXT_PATH: &str = "/v1/embed_text";
pub const EMBED_IMAGE_PATH: &str = "/v1/embed_image";
pub const GENERATE_PATH: &str = "/v1/generate";
pub const SCORE_PATH: &str = "/v1/score";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedTextRequest {
    pub texts: Vec<String>,
}

/// An image either inlined as base64 (local files) or referenced by URL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireImage {
    pub content_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_base64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedImageRequest {
    pub images: Vec<WireImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    #[serde(default)]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WirePart {
    Text {
        text: String,
    },
    Image {
        content_ref: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_base64: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: Role,
    pub content: Vec<WirePart>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub messages: Vec<WireMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
    pub finish_reason: FinishReason,
}

/// Asks for the top-K log-probabilities of the first generated token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreWireRequest {
    pub template_id: String,
    pub messages: Vec<WireMessage>,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub top_logprobs: Vec<TokenLogprob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: ErrorBody,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn score_request_shape() {
        let req = ScoreWireRequest {
            template_id: "relevance-v1".into(),
            messages: vec![WireMessage {
                role: Role::User,
                content: vec![
                    WirePart::Image {
                        content_ref: "f.jpg".into(),
                        data_base64: Some("AAAA".into()),
                    },
                    WirePart::Text { text: "q".into() },
                ],
            }],
            top_k: 20,
        };
        assert_eq!(
            serde_json::to_value(&req).unwrap(),
            json!({
                "template_id": "relevance-v1",
                "messages": [{"role": "user", "content": [
                    {"type": "image", "content_ref": "f.jpg", "data_base64": "AAAA"},
                    {"type": "text", "text": "q"}
                ]}],
                "top_k": 20
            })
        );
    }

    #[test]
    fn embed_response_dim_optional() {
        let r: EmbedResponse = serde_json::from_str(r#"{"vectors":[[1.0,0.0]]}"#).unwrap();
        assert_eq!(r.dim, None);
    }
}
