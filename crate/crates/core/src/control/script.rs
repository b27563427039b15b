use serde::Deserialize;

use super::ModeRequest;
use crate::error::{Error, Result};

/// References handed from the high-level sequence to the low-level
/// controller at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighLevelRefs {
    pub request: ModeRequest,
    /// EM1 current reference used in HS, A.
    pub current: f64,
    /// Output velocity reference used in HF, m/s.
    pub velocity: f64,
}

/// One piece of a piecewise-constant motion sequence.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSegment {
    #[serde(rename = "t_s")]
    pub start: f64,
    #[serde(deserialize_with = "de_request")]
    pub request: ModeRequest,
    /// HS current reference as a fraction of the EM1 current limit.
    #[serde(rename = "current_frac", default)]
    pub current_fraction: f64,
    #[serde(rename = "velocity_mps", default)]
    pub velocity: f64,
    /// Free-form phase name, carried into diagnostics.
    #[serde(default)]
    pub phase: String,
}

fn de_request<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<ModeRequest, D::Error> {
    let s = String::deserialize(d)?;
    ModeRequest::parse(&s)
        .ok_or_else(|| serde::de::Error::custom(format!("unknown request `{s}` (hs, hf, brake)")))
}

/// A hard-coded sequence of references, held piecewise constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    segments: Vec<ScriptSegment>,
}

impl Script {
    pub fn new(segments: Vec<ScriptSegment>) -> Result<Self> {
        let mut errors = Vec::new();
        match segments.first() {
            None => errors.push("script has no segments".to_string()),
            Some(s) if s.start != 0.0 => {
                errors.push("first script segment must start at t_s = 0".into())
            }
            _ => {}
        }
        for pair in segments.windows(2) {
            if !(pair[1].start > pair[0].start) {
                errors.push(format!(
                    "script segment times must increase ({} then {})",
                    pair[0].start, pair[1].start
                ));
            }
        }
        for s in &segments {
            if !(s.current_fraction.abs() <= 1.0) {
                errors.push(format!(
                    "script current_frac {} outside [-1, 1]",
                    s.current_fraction
                ));
            }
            if !s.velocity.is_finite() {
                errors.push("script velocity_mps must be finite".into());
            }
        }
        if errors.is_empty() {
            Ok(Self { segments })
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn segments(&self) -> &[ScriptSegment] {
        &self.segments
    }

    pub fn segment_at(&self, t: f64) -> &ScriptSegment {
        let idx = self.segments.partition_point(|s| s.start <= t);
        &self.segments[idx.saturating_sub(1)]
    }

    pub fn refs(&self, t: f64, i1_max: f64) -> HighLevelRefs {
        let s = self.segment_at(t);
        HighLevelRefs {
            request: s.request,
            current: s.current_fraction * i1_max,
            velocity: s.velocity,
        }
    }

    /// Start time of the first segment with the given phase name.
    pub fn phase_start(&self, phase: &str) -> Option<f64> {
        self.segments
            .iter()
            .find(|s| s.phase == phase)
            .map(|s| s.start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(start: f64, request: ModeRequest, current_fraction: f64) -> ScriptSegment {
        ScriptSegment {
            start,
            request,
            current_fraction,
            velocity: 0.0,
            phase: String::new(),
        }
    }

    #[test]
    fn piecewise_lookup() {
        let s = Script::new(vec![
            seg(0.0, ModeRequest::HighSpeed, 0.5),
            seg(0.1, ModeRequest::HighForce, 0.9),
        ])
        .unwrap();
        assert_eq!(s.refs(0.05, 10.0).current, 5.0);
        assert_eq!(s.refs(0.1, 10.0).request, ModeRequest::HighForce);
        assert_eq!(s.refs(7.0, 10.0).current, 9.0);
    }

    #[test]
    fn rejects_bad_sequences() {
        assert!(Script::new(vec![]).is_err());
        assert!(Script::new(vec![seg(0.1, ModeRequest::HighSpeed, 0.0)]).is_err());
        assert!(Script::new(vec![
            seg(0.0, ModeRequest::HighSpeed, 0.0),
            seg(0.0, ModeRequest::HighSpeed, 2.0)
        ])
        .is_err());
    }
}
