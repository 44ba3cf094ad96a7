//! Chat-completions request bodies.

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{DemoVision, EndpointConfig, InferenceError, PromptBundle};
use crate::visionprep::FrameRef;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

impl ChatRequest {
    /// Text of the final text part of the last user message: the query block.
    pub fn query_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")?
            .content
            .iter()
            .rev()
            .find_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::ImageUrl { .. } => None,
            })
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        _ => "image/png",
    }
}

fn image_part(frame: &FrameRef, root: &Path) -> Result<ContentPart, InferenceError> {
    let path = frame.resolve_file(root)?;
    let bytes = std::fs::read(&path).map_err(|source| InferenceError::Io {
        path: path.clone(),
        source,
    })?;
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(ContentPart::ImageUrl {
        image_url: ImageUrl {
            url: format!("data:{};base64,{encoded}", mime_for(&path)),
        },
    })
}

fn text(s: String) -> ContentPart {
    ContentPart::Text { text: s }
}

/// Render `bundle` as a single-turn request. Each block contributes its
/// images (or description) followed by text, question and, for
/// demonstrations, the answer word. `instruction` is appended to the query.
pub fn render_request(
    bundle: &PromptBundle,
    endpoint: &EndpointConfig,
    instruction: Option<&str>,
) -> Result<ChatRequest, InferenceError> {
    let mut parts = Vec::new();
    for block in bundle.demos.iter().chain(std::iter::once(&bundle.query)) {
        let mut body = String::new();
        match &block.vision {
            DemoVision::Frames(frames) => {
                for frame in frames {
                    parts.push(image_part(frame, &block.root)?);
                }
            }
            DemoVision::Description(desc) => {
                body.push_str("Description: ");
                body.push_str(desc.trim());
                body.push('\n');
            }
        }
        body.push_str("Text: ");
        body.push_str(block.text.trim());
        body.push('\n');
        body.push_str(&block.question);
        if let Some(label) = &block.label_word {
            body.push(' ');
            body.push_str(label);
        } else if let Some(extra) = instruction {
            body.push('\n');
            body.push_str(extra);
        }
        parts.push(text(body));
    }
    let system = format!(
        "Classify content under this definition.\n{}",
        bundle.task.definition_text
    );
    Ok(ChatRequest {
        model: endpoint.model_name.clone(),
        messages: vec![
            ChatMessage {
                role: "system".into(),
                content: vec![text(system)],
            },
            ChatMessage {
                role: "user".into(),
                content: parts,
            },
        ],
        temperature: endpoint.temperature,
        max_tokens: endpoint.max_tokens,
    })
}
