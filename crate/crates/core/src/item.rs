use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Meme,
    Video,
}

impl MediaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaKind::Meme => "meme",
            MediaKind::Video => "video",
        }
    }
}

impl std::str::FromStr for MediaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "meme" => Ok(MediaKind::Meme),
            "video" => Ok(MediaKind::Video),
            other => Err(format!("unknown media kind {other:?} (expected meme|video)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unsplit,
}

/// Where the pixels of an item live. Paths are relative to the owning
/// dataset's root directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisionSource {
    Image(PathBuf),
    /// A directory of extracted frames, ordered lexicographically.
    FrameDir { dir: PathBuf, frame_count: u32 },
    /// An undecoded video container with a declared frame count.
    VideoFile { path: PathBuf, frame_count: u32 },
}

/// One meme or video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaItem {
    pub item_id: String,
    pub kind: MediaKind,
    /// Video title; memes have none.
    pub title: Option<String>,
    /// Overlay text for memes, transcript for videos.
    pub text: String,
    pub vision: VisionSource,
    pub duration_s: Option<f64>,
    /// Canonical (lowercase) label from the source schema.
    pub original_label: String,
    pub split: Split,
}

impl MediaItem {
    /// Title (when present) followed by the body text.
    pub fn full_text(&self) -> String {
        match self.title.as_deref().map(str::trim).filter(|t| !t.is_empty()) {
            Some(title) if !self.text.trim().is_empty() => format!("{title} {}", self.text.trim()),
            Some(title) => title.to_string(),
            None => self.text.trim().to_string(),
        }
    }

    pub fn words(&self) -> Vec<String> {
        self.full_text()
            .split_whitespace()
            .map(str::to_string)
            .collect()
    }

    /// Number of frames `F`; a meme counts as a single frame.
    pub fn frame_count(&self) -> u32 {
        match &self.vision {
            VisionSource::Image(_) => 1,
            VisionSource::FrameDir { frame_count, .. }
            | VisionSource::VideoFile { frame_count, .. } => *frame_count,
        }
    }

    /// Checks the kind-specific shape invariants.
    pub fn check_shape(&self) -> Result<(), String> {
        match (self.kind, &self.vision) {
            (MediaKind::Meme, VisionSource::Image(_)) => {
                if self.duration_s.is_some() {
                    return Err("meme items carry no duration".into());
                }
            }
            (MediaKind::Meme, _) => return Err("meme items need exactly one image".into()),
            (MediaKind::Video, VisionSource::Image(_)) => {
                return Err("video items need frames_dir or video".into())
            }
            (MediaKind::Video, _) => {
                if self.frame_count() == 0 {
                    return Err("video frame_count must be at least 1".into());
                }
                match self.duration_s {
                    None => return Err("video items need duration_s".into()),
                    Some(d) if !(d >= 0.0 && d.is_finite()) => {
                        return Err(format!("duration_s must be a finite value >= 0, got {d}"))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Item ids become file names downstream, so they are restricted to a
/// portable character set.
pub fn valid_item_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}
