//! ORB: multi-scale FAST corners re-scored with the Harris response, oriented
//! by intensity centroid and described with steered BRIEF.

use super::brief::{centroid_angle, steered_brief, CENTROID_RADIUS};
use super::pattern::{rotated_pattern_margin, SamplingPattern};
use super::BinaryDescriptor;
use crate::detect::{fast_detect, harris_response, Keypoint};
use crate::params::{DescriptorParams, DetectorParams};
use crate::raster::{build_pyramid, gaussian_blur, GrayImage, RasterError};

struct Candidate {
    level: usize,
    x: usize,
    y: usize,
    score: f64,
}

/// Extract up to `orb_n_features` oriented keypoints with steered-BRIEF
/// descriptors, coordinates mapped back to level-0 space.
///
/// Candidates too close to a level border for the descriptor support are
/// discarded before top-K selection, so every selected keypoint is described.
pub fn orb_extract(
    img: &GrayImage,
    p: &DescriptorParams,
    dp: &DetectorParams,
) -> Result<Vec<(Keypoint, BinaryDescriptor)>, RasterError> {
    if img.width < 31 || img.height < 31 {
        return Err(RasterError::InvalidInput(format!(
            "orb needs at least 31x31, got {}x{}",
            img.width, img.height
        )));
    }
    let pyramid = build_pyramid(img, p.orb_n_levels, p.orb_scale_factor)?;
    let margin = rotated_pattern_margin().max(CENTROID_RADIUS) as usize;

    let mut fast_params = dp.clone();
    fast_params.fast_threshold = p.orb_fast_threshold;
    fast_params.response_threshold = 0.0;
    fast_params.max_corners = None;

    let mut candidates: Vec<Candidate> = Vec::new();
    for (level, level_img) in pyramid.levels.iter().enumerate() {
        if level_img.width < 2 * margin + 1 || level_img.height < 2 * margin + 1 {
            continue;
        }
        let corners = fast_detect(level_img, &fast_params)?;
        let inside: Vec<(usize, usize)> = corners
            .iter()
            .map(|k| (k.x as usize, k.y as usize))
            .filter(|&(x, y)| {
                x >= margin
                    && y >= margin
                    && x + margin < level_img.width
                    && y + margin < level_img.height
            })
            .collect();
        if inside.is_empty() {
            continue;
        }
        let harris = harris_response(level_img, dp)?;
        for (x, y) in inside {
            candidates.push(Candidate { level, x, y, score: harris.get(x, y) });
        }
    }

    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.level.cmp(&b.level))
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    candidates.truncate(p.orb_n_features);

    // one smoothed copy per level that still holds keypoints
    let mut blurred: Vec<Option<GrayImage>> = vec![None; pyramid.levels.len()];
    for c in &candidates {
        if blurred[c.level].is_none() {
            blurred[c.level] = Some(gaussian_blur(&pyramid.levels[c.level], p.brief_blur_sigma)?);
        }
    }

    let pattern = SamplingPattern::builtin();
    let mut out = Vec::with_capacity(candidates.len());
    for c in &candidates {
        let level_img = &pyramid.levels[c.level];
        let level_kp = Keypoint::at(c.x as f64, c.y as f64, c.score);
        let angle = centroid_angle(level_img, &level_kp, CENTROID_RADIUS)
            .expect("candidate margin covers the centroid patch");
        let desc = steered_brief(blurred[c.level].as_ref().unwrap(), &level_kp, pattern, angle)
            .expect("candidate margin covers every rotated test point");
        let s = pyramid.level_scale(c.level);
        out.push((
            Keypoint {
                x: c.x as f64 * s,
                y: c.y as f64 * s,
                response: c.score,
                scale: s,
                angle: Some(angle),
            },
            desc,
        ));
    }
    Ok(out)
}
