use std::collections::VecDeque;

use super::{ContactThresholds, SensorFrame};

/// Contact test over the newest `consecutive_frames` frames: every frame
/// above the pressure threshold, the knee extending at the start of the
/// window, and the extension speed collapsing across it.
pub fn detect_contact(window: &[SensorFrame], th: &ContactThresholds) -> bool {
    let n = th.consecutive_frames;
    if n == 0 || window.len() < n {
        return false;
    }
    let recent = &window[window.len() - n..];
    let pressurised = recent
        .iter()
        .all(|f| f.slave_pressure > th.pressure_threshold);
    let first = recent[0].knee_velocity;
    let last = recent[n - 1].knee_velocity;
    pressurised && first > th.min_approach_speed && last < first - th.min_velocity_drop
}

/// Streaming, latching wrapper around [`detect_contact`].
#[derive(Debug, Clone)]
pub struct ContactDetector {
    thresholds: ContactThresholds,
    window: VecDeque<SensorFrame>,
    latched_at: Option<f64>,
}

impl ContactDetector {
    pub fn new(thresholds: ContactThresholds) -> Self {
        Self {
            thresholds,
            window: VecDeque::with_capacity(thresholds.consecutive_frames + 1),
            latched_at: None,
        }
    }

    /// Feeds one frame and returns the latched state.
    pub fn push(&mut self, frame: SensorFrame) -> bool {
        if self.window.len() == self.thresholds.consecutive_frames {
            self.window.pop_front();
        }
        self.window.push_back(frame);
        if self.latched_at.is_none() {
            let window = self.window.make_contiguous();
            if detect_contact(window, &self.thresholds) {
                self.latched_at = Some(frame.time);
            }
        }
        self.latched_at.is_some()
    }

    pub fn is_latched(&self) -> bool {
        self.latched_at.is_some()
    }

    pub fn latched_at(&self) -> Option<f64> {
        self.latched_at
    }

    pub fn reset(&mut self) {
        self.latched_at = None;
        self.window.clear();
    }
}
