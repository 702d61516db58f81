//! Detector and descriptor tuning parameters, their per-algorithm defaults,
//! and the key=value config file that carries overrides.

use crate::engine::Algorithm;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid parameter {key}: {msg}")]
    Invalid { key: &'static str, msg: String },
}

/// Corner detector tuning. Thresholds are on the [0, 1] intensity scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub harris_k: f64,
    pub gaussian_window_sigma: f64,
    pub response_threshold: f64,
    /// Keep at most this many corners after non-maximum suppression;
    /// `None` means unlimited.
    pub max_corners: Option<u32>,
    pub fast_threshold: f64,
    pub fast_arc_length: usize,
    pub nms_radius: usize,
}

impl DetectorParams {
    /// Defaults shared by every algorithm except the per-algorithm
    /// threshold/cap adjustments below.
    fn base() -> Self {
        Self {
            harris_k: 0.04,
            gaussian_window_sigma: 1.5,
            response_threshold: 1e-4,
            max_corners: None,
            fast_threshold: 20.0 / 255.0,
            fast_arc_length: 9,
            nms_radius: 1,
        }
    }

    pub fn defaults_for(alg: Algorithm) -> Self {
        let mut p = Self::base();
        match alg {
            Algorithm::Harris => {}
            Algorithm::ShiTomasi => {
                p.response_threshold = 1e-3;
                p.max_corners = Some(400);
            }
            // FAST-style detection keeps every positive-score corner.
            Algorithm::Fast | Algorithm::Brief | Algorithm::Orb => {
                p.response_threshold = 0.0;
            }
            Algorithm::Surf | Algorithm::Sift => {}
        }
        p
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let positive = |key, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ParamsError::Invalid { key, msg: format!("must be finite and > 0, got {v}") })
            }
        };
        positive("harris_k", self.harris_k)?;
        positive("gaussian_window_sigma", self.gaussian_window_sigma)?;
        if !(self.response_threshold >= 0.0) {
            return Err(ParamsError::Invalid {
                key: "response_threshold",
                msg: format!("must be >= 0, got {}", self.response_threshold),
            });
        }
        if self.max_corners == Some(0) {
            return Err(ParamsError::Invalid {
                key: "max_corners",
                msg: "must be >= 1 when finite".into(),
            });
        }
        if !(self.fast_threshold >= 0.0) {
            return Err(ParamsError::Invalid {
                key: "fast_threshold",
                msg: format!("must be >= 0, got {}", self.fast_threshold),
            });
        }
        if !(1..=16).contains(&self.fast_arc_length) {
            return Err(ParamsError::Invalid {
                key: "fast_arc_length",
                msg: format!("must be in 1..=16, got {}", self.fast_arc_length),
            });
        }
        if self.nms_radius == 0 {
            return Err(ParamsError::Invalid { key: "nms_radius", msg: "must be >= 1".into() });
        }
        Ok(())
    }
}

/// Descriptor tuning. `surf_hessian_threshold` follows the 0-255 intensity
/// convention: internal [0, 1] responses are scaled by 255^2 before the
/// comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorParams {
    pub orb_n_features: usize,
    pub orb_n_levels: usize,
    pub orb_scale_factor: f64,
    pub orb_fast_threshold: f64,
    pub surf_hessian_threshold: f64,
    /// Number of fast-Hessian octaves (filter-size ladders).
    pub surf_octaves: usize,
    pub sift_contrast_threshold: f64,
    pub sift_edge_ratio: f64,
    pub brief_blur_sigma: f64,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        Self {
            orb_n_features: 500,
            orb_n_levels: 8,
            orb_scale_factor: 1.2,
            orb_fast_threshold: 20.0 / 255.0,
            surf_hessian_threshold: 400.0,
            surf_octaves: 1,
            sift_contrast_threshold: 0.03,
            sift_edge_ratio: 10.0,
            brief_blur_sigma: 2.0,
        }
    }
}

impl DescriptorParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let positive = |key, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ParamsError::Invalid { key, msg: format!("must be finite and > 0, got {v}") })
            }
        };
        if self.orb_n_features == 0 {
            return Err(ParamsError::Invalid { key: "orb_n_features", msg: "must be >= 1".into() });
        }
        if self.orb_n_levels == 0 {
            return Err(ParamsError::Invalid { key: "orb_n_levels", msg: "must be >= 1".into() });
        }
        if !(self.orb_scale_factor > 1.0) {
            return Err(ParamsError::Invalid {
                key: "orb_scale_factor",
                msg: format!("must be > 1, got {}", self.orb_scale_factor),
            });
        }
        positive("orb_fast_threshold", self.orb_fast_threshold)?;
        positive("surf_hessian_threshold", self.surf_hessian_threshold)?;
        if self.surf_octaves == 0 || self.surf_octaves > 5 {
            return Err(ParamsError::Invalid {
                key: "surf_octaves",
                msg: format!("must be in 1..=5, got {}", self.surf_octaves),
            });
        }
        positive("sift_contrast_threshold", self.sift_contrast_threshold)?;
        positive("sift_edge_ratio", self.sift_edge_ratio)?;
        positive("brief_blur_sigma", self.brief_blur_sigma)?;
        Ok(())
    }
}

/// One parameter slot in the key=value config surface.
struct ParamDoc {
    key: &'static str,
    default: &'static str,
    doc: &'static str,
}

const PARAM_DOCS: &[ParamDoc] = &[
    ParamDoc { key: "harris_k", default: "0.04", doc: "Harris response constant k in det(M) - k*trace(M)^2." },
    ParamDoc { key: "gaussian_window_sigma", default: "1.5", doc: "Sigma of the Gaussian window weighting the structure tensor." },
    ParamDoc { key: "response_threshold", default: "1e-4 (harris), 1e-3 (shi-tomasi), 0 (fast/brief/orb)", doc: "Minimum detector response a corner must exceed, on [0,1] intensities." },
    ParamDoc { key: "max_corners", default: "unlimited (400 for shi-tomasi)", doc: "Cap on corners kept after non-maximum suppression; `unlimited` disables." },
    ParamDoc { key: "fast_threshold", default: "0.0784314 (= 20/255)", doc: "FAST segment-test contrast threshold, on [0,1] intensities." },
    ParamDoc { key: "fast_arc_length", default: "9", doc: "Required contiguous arc length on the 16-pixel Bresenham circle." },
    ParamDoc { key: "nms_radius", default: "1", doc: "Non-maximum suppression neighborhood radius in pixels (1 = 3x3)." },
    ParamDoc { key: "orb_n_features", default: "500", doc: "Maximum ORB keypoints kept across all pyramid levels." },
    ParamDoc { key: "orb_n_levels", default: "8", doc: "Requested pyramid levels for ORB." },
    ParamDoc { key: "orb_scale_factor", default: "1.2", doc: "Pyramid downsampling factor between ORB levels." },
    ParamDoc { key: "orb_fast_threshold", default: "0.0784314 (= 20/255)", doc: "FAST threshold used inside the ORB pipeline." },
    ParamDoc { key: "surf_hessian_threshold", default: "400", doc: "Fast-Hessian determinant threshold on the 0-255 intensity convention." },
    ParamDoc { key: "surf_octaves", default: "1", doc: "Number of fast-Hessian filter-size octaves (1 = sizes 9,15,21,27)." },
    ParamDoc { key: "sift_contrast_threshold", default: "0.03", doc: "Minimum |DoG| value for a scale-space extremum to survive." },
    ParamDoc { key: "sift_edge_ratio", default: "10", doc: "Principal-curvature ratio r; candidates with trace^2/det > (r+1)^2/r are rejected." },
    ParamDoc { key: "brief_blur_sigma", default: "2.0", doc: "Gaussian smoothing applied to the image before BRIEF intensity tests." },
];

/// Apply `key=value` overrides from config text onto a parameter pair.
///
/// Lines are `key=value`; blank lines and `#` comments are ignored; unknown
/// keys are errors.
pub fn apply_config(
    text: &str,
    det: &mut DetectorParams,
    desc: &mut DescriptorParams,
) -> Result<(), ParamsError> {
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ParamsError::Parse {
            line: line_no,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        apply_one(key.trim(), value.trim(), det, desc)
            .map_err(|msg| ParamsError::Parse { line: line_no, msg })?;
    }
    det.validate().map_err(|e| ParamsError::Parse { line: 0, msg: e.to_string() })?;
    desc.validate().map_err(|e| ParamsError::Parse { line: 0, msg: e.to_string() })?;
    Ok(())
}

/// Apply one `key=value` override (also the CLI `--set` form).
pub fn apply_override(
    key: &str,
    value: &str,
    det: &mut DetectorParams,
    desc: &mut DescriptorParams,
) -> Result<(), ParamsError> {
    apply_one(key, value, det, desc).map_err(|msg| ParamsError::Parse { line: 0, msg })?;
    det.validate()?;
    desc.validate()
}

fn apply_one(
    key: &str,
    value: &str,
    det: &mut DetectorParams,
    desc: &mut DescriptorParams,
) -> Result<(), String> {
    fn real(value: &str) -> Result<f64, String> {
        value.parse::<f64>().map_err(|_| format!("expected a number, got {value:?}"))
    }
    fn count(value: &str) -> Result<usize, String> {
        value.parse::<usize>().map_err(|_| format!("expected a count, got {value:?}"))
    }
    match key {
        "harris_k" => det.harris_k = real(value)?,
        "gaussian_window_sigma" => det.gaussian_window_sigma = real(value)?,
        "response_threshold" => det.response_threshold = real(value)?,
        "max_corners" => {
            det.max_corners = if value == "unlimited" || value == "none" {
                None
            } else {
                Some(value.parse::<u32>().map_err(|_| format!("expected a count or `unlimited`, got {value:?}"))?)
            }
        }
        "fast_threshold" => det.fast_threshold = real(value)?,
        "fast_arc_length" => det.fast_arc_length = count(value)?,
        "nms_radius" => det.nms_radius = count(value)?,
        "orb_n_features" => desc.orb_n_features = count(value)?,
        "orb_n_levels" => desc.orb_n_levels = count(value)?,
        "orb_scale_factor" => desc.orb_scale_factor = real(value)?,
        "orb_fast_threshold" => desc.orb_fast_threshold = real(value)?,
        "surf_hessian_threshold" => desc.surf_hessian_threshold = real(value)?,
        "surf_octaves" => desc.surf_octaves = count(value)?,
        "sift_contrast_threshold" => desc.sift_contrast_threshold = real(value)?,
        "sift_edge_ratio" => desc.sift_edge_ratio = real(value)?,
        "brief_blur_sigma" => desc.brief_blur_sigma = real(value)?,
        other => return Err(format!("unknown parameter key {other:?}")),
    }
    Ok(())
}

/// Reference page for every config key, kept in docs/PARAMS.md.
pub fn reference_markdown() -> String {
    let mut out = String::from(
        "# Extraction parameters\n\n\
         Parameters are supplied via a key=value config file (`--params-file`)\n\
         with per-key CLI overrides (`--set key=value`). Blank lines and `#`\n\
         comments are ignored. Unknown keys are rejected.\n\n\
         | key | default | description |\n\
         |-----|---------|-------------|\n",
    );
    for p in PARAM_DOCS {
        out.push_str(&format!("| `{}` | {} | {} |\n", p.key, p.default, p.doc));
    }
    out
}
