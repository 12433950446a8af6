use serde::{Deserialize, Serialize};

use super::Volume;

/// Intensity range mapped onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Window {
    /// The volume's own minimum and maximum.
    #[default]
    Auto,
    /// Values are clamped to `[lo, hi]` first.
    Fixed { lo: f64, hi: f64 },
}

/// Clamps to the window and rescales linearly to [0, 1]. A window of zero
/// width (a constant volume under `Auto`) maps everything to 0.
pub fn normalize(v: &Volume, window: Window) -> Volume {
    let (lo, hi) = match window {
        Window::Auto => v
            .intensities
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x))),
        Window::Fixed { lo, hi } => (lo, hi),
    };
    let width = hi - lo;
    let intensities = v
        .intensities
        .iter()
        .map(|&x| if width > 0.0 { (x.clamp(lo, hi) - lo) / width } else { 0.0 })
        .collect();
    Volume::new(v.geometry, intensities)
}
