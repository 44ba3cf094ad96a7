//! Annotation-time model: videos are fully annotated, memes only where the
//! model disagrees with the dataset label.

use serde::{Deserialize, Serialize};

use super::ExportError;
use crate::item::MediaKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    pub meme_minutes_per_item: f64,
    pub video_minutes_per_source_minute: f64,
    pub video_annotations_per_item: f64,
    /// Used for videos whose duration is unknown.
    pub video_duration_min: f64,
    /// Fraction of memes sent to a human.
    pub disagreement_rate: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            meme_minutes_per_item: 0.5,
            video_minutes_per_source_minute: 2.0,
            video_annotations_per_item: 2.0,
            video_duration_min: 1.0,
            disagreement_rate: 0.42,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), ExportError> {
        let fields = [
            ("meme_minutes_per_item", self.meme_minutes_per_item),
            ("video_minutes_per_source_minute", self.video_minutes_per_source_minute),
            ("video_annotations_per_item", self.video_annotations_per_item),
            ("video_duration_min", self.video_duration_min),
            ("disagreement_rate", self.disagreement_rate),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ExportError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.disagreement_rate > 1.0 {
            return Err(ExportError::Config(format!(
                "disagreement_rate must lie in [0, 1], got {}",
                self.disagreement_rate
            )));
        }
        Ok(())
    }

    fn video_minutes(&self, duration_min: f64) -> f64 {
        duration_min * self.video_minutes_per_source_minute * self.video_annotations_per_item
    }
}

/// Hours to annotate `n` items of `kind`.
pub fn estimate_annotation_hours(kind: MediaKind, n: usize, params: &CostParams) -> f64 {
    let n = n as f64;
    match kind {
        MediaKind::Video => n * params.video_minutes(params.video_duration_min) / 60.0,
        MediaKind::Meme => n * params.disagreement_rate * params.meme_minutes_per_item / 60.0,
    }
}

/// Video hours summed over known per-item durations in seconds; missing
/// durations fall back to `video_duration_min`.
pub fn estimate_video_hours(durations_s: &[Option<f64>], params: &CostParams) -> f64 {
    durations_s
        .iter()
        .map(|d| {
            let minutes = d.filter(|s| s.is_finite() && *s >= 0.0).map_or(params.video_duration_min, |s| s / 60.0);
            params.video_minutes(minutes)
        })
        .sum::<f64>()
        / 60.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_items_cost_nothing() {
        let p = CostParams::default();
        assert_eq!(estimate_annotation_hours(MediaKind::Meme, 0, &p), 0.0);
        assert_eq!(estimate_annotation_hours(MediaKind::Video, 0, &p), 0.0);
    }

    #[test]
    fn per_item_durations() {
        let p = CostParams::default();
        // 3 min and an unknown (1 min): (3 + 1) * 2 * 2 / 60
        let h = estimate_video_hours(&[Some(180.0), None], &p);
        assert!((h - 16.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        let p = CostParams { disagreement_rate: 1.5, ..Default::default() };
        assert!(p.validate().is_err());
        let p = CostParams { meme_minutes_per_item: -1.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
