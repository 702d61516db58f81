//! Byte encodings of [`JobSpec`] and [`TaskResult`] for the wire protocol.
//! All integers little-endian; floats are IEEE-754 bit patterns; strings are
//! u16-length-prefixed UTF-8.

use super::{Algorithm, JobSpec, TaskResult};
use crate::describe::{BinaryDescriptor, Descriptors, FloatDescriptor};
use crate::detect::Keypoint;
use crate::params::{DescriptorParams, DetectorParams};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("truncated payload reading {0}")]
    Truncated(&'static str),
    #[error("invalid {field}: {msg}")]
    Invalid { field: &'static str, msg: String },
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.pos + n > self.buf.len() {
            return Err(WireError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &'static str) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, what: &'static str) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f32(&mut self, what: &'static str) -> Result<f32, WireError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn string(&mut self, what: &'static str) -> Result<String, WireError> {
        let len = self.u16(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| WireError::Invalid { field: what, msg: "not UTF-8".into() })
    }
}

pub(crate) fn put_string(out: &mut Vec<u8>, s: &str) {
    let bytes = s.as_bytes();
    debug_assert!(bytes.len() <= u16::MAX as usize);
    out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(bytes);
}

impl JobSpec {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(192);
        out.extend_from_slice(&self.bundle_id);
        out.push(self.algorithm.code());
        let d = &self.detector_params;
        out.extend_from_slice(&d.harris_k.to_le_bytes());
        out.extend_from_slice(&d.gaussian_window_sigma.to_le_bytes());
        out.extend_from_slice(&d.response_threshold.to_le_bytes());
        match d.max_corners {
            Some(n) => {
                out.push(1);
                out.extend_from_slice(&n.to_le_bytes());
            }
            None => {
                out.push(0);
                out.extend_from_slice(&0u32.to_le_bytes());
            }
        }
        out.extend_from_slice(&d.fast_threshold.to_le_bytes());
        out.extend_from_slice(&(d.fast_arc_length as u32).to_le_bytes());
        out.extend_from_slice(&(d.nms_radius as u32).to_le_bytes());
        let p = &self.descriptor_params;
        out.extend_from_slice(&(p.orb_n_features as u32).to_le_bytes());
        out.extend_from_slice(&(p.orb_n_levels as u32).to_le_bytes());
        out.extend_from_slice(&p.orb_scale_factor.to_le_bytes());
        out.extend_from_slice(&p.orb_fast_threshold.to_le_bytes());
        out.extend_from_slice(&p.surf_hessian_threshold.to_le_bytes());
        out.extend_from_slice(&(p.surf_octaves as u32).to_le_bytes());
        out.extend_from_slice(&p.sift_contrast_threshold.to_le_bytes());
        out.extend_from_slice(&p.sift_edge_ratio.to_le_bytes());
        out.extend_from_slice(&p.brief_blur_sigma.to_le_bytes());
        put_string(&mut out, &self.output_dir.to_string_lossy());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut rd = ByteReader::new(bytes);
        let bundle_id: [u8; 32] = rd.take(32, "bundle_id")?.try_into().unwrap();
        let code = rd.u8("algorithm")?;
        let algorithm = Algorithm::from_code(code)
            .ok_or(WireError::Invalid { field: "algorithm", msg: format!("unknown code {code}") })?;
        let harris_k = rd.f64("harris_k")?;
        let gaussian_window_sigma = rd.f64("gaussian_window_sigma")?;
        let response_threshold = rd.f64("response_threshold")?;
        let has_cap = rd.u8("max_corners flag")?;
        let cap = rd.u32("max_corners")?;
        let fast_threshold = rd.f64("fast_threshold")?;
        let fast_arc_length = rd.u32("fast_arc_length")? as usize;
        let nms_radius = rd.u32("nms_radius")? as usize;
        let detector_params = DetectorParams {
            harris_k,
            gaussian_window_sigma,
            response_threshold,
            max_corners: (has_cap == 1).then_some(cap),
            fast_threshold,
            fast_arc_length,
            nms_radius,
        };
        let descriptor_params = DescriptorParams {
            orb_n_features: rd.u32("orb_n_features")? as usize,
            orb_n_levels: rd.u32("orb_n_levels")? as usize,
            orb_scale_factor: rd.f64("orb_scale_factor")?,
            orb_fast_threshold: rd.f64("orb_fast_threshold")?,
            surf_hessian_threshold: rd.f64("surf_hessian_threshold")?,
            surf_octaves: rd.u32("surf_octaves")? as usize,
            sift_contrast_threshold: rd.f64("sift_contrast_threshold")?,
            sift_edge_ratio: rd.f64("sift_edge_ratio")?,
            brief_blur_sigma: rd.f64("brief_blur_sigma")?,
        };
        let output_dir = PathBuf::from(rd.string("output_dir")?);
        if rd.remaining() != 0 {
            return Err(WireError::Invalid {
                field: "job spec",
                msg: format!("{} trailing bytes", rd.remaining()),
            });
        }
        Ok(Self { bundle_id, algorithm, detector_params, descriptor_params, output_dir })
    }
}

const DESC_KIND_NONE: u8 = 0;
const DESC_KIND_BINARY: u8 = 1;
const DESC_KIND_FLOAT: u8 = 2;

impl TaskResult {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.entry_index.to_le_bytes());
        out.extend_from_slice(&self.dropped_count.to_le_bytes());
        out.extend_from_slice(&self.elapsed_micros.to_le_bytes());
        out.extend_from_slice(&(self.keypoints.len() as u32).to_le_bytes());
        for kp in &self.keypoints {
            out.extend_from_slice(&kp.x.to_le_bytes());
            out.extend_from_slice(&kp.y.to_le_bytes());
            out.extend_from_slice(&kp.response.to_le_bytes());
            out.extend_from_slice(&kp.scale.to_le_bytes());
            match kp.angle {
                Some(a) => {
                    out.push(1);
                    out.extend_from_slice(&a.to_le_bytes());
                }
                None => {
                    out.push(0);
                    out.extend_from_slice(&0f64.to_le_bytes());
                }
            }
        }
        match &self.descriptors {
            None => out.push(DESC_KIND_NONE),
            Some(Descriptors::Binary(descs)) => {
                out.push(DESC_KIND_BINARY);
                for d in descs {
                    out.extend_from_slice(&d.0);
                }
            }
            Some(Descriptors::Float(descs)) => {
                out.push(DESC_KIND_FLOAT);
                let dim = descs.first().map_or(0, |d| d.dim());
                out.extend_from_slice(&(dim as u16).to_le_bytes());
                for d in descs {
                    debug_assert_eq!(d.dim(), dim, "float descriptors share one dimension");
                    for &v in &d.values {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut rd = ByteReader::new(bytes);
        let entry_index = rd.u32("entry_index")?;
        let dropped_count = rd.u32("dropped_count")?;
        let elapsed_micros = rd.u64("elapsed_micros")?;
        let count = rd.u32("keypoint count")? as usize;
        if count > 50_000_000 {
            return Err(WireError::Invalid {
                field: "keypoint count",
                msg: format!("{count} is implausibly large"),
            });
        }
        let mut keypoints = Vec::with_capacity(count);
        for _ in 0..count {
            let x = rd.f64("keypoint x")?;
            let y = rd.f64("keypoint y")?;
            let response = rd.f64("keypoint response")?;
            let scale = rd.f64("keypoint scale")?;
            let has_angle = rd.u8("angle flag")?;
            let angle = rd.f64("angle")?;
            keypoints.push(Keypoint {
                x,
                y,
                response,
                scale,
                angle: (has_angle == 1).then_some(angle),
            });
        }
        let kind = rd.u8("descriptor kind")?;
        let descriptors = match kind {
            DESC_KIND_NONE => None,
            DESC_KIND_BINARY => {
                let mut descs = Vec::with_capacity(count);
                for _ in 0..count {
                    let raw: [u8; 32] = rd.take(32, "binary descriptor")?.try_into().unwrap();
                    descs.push(BinaryDescriptor(raw));
                }
                Some(Descriptors::Binary(descs))
            }
            DESC_KIND_FLOAT => {
                let dim = rd.u16("descriptor dim")? as usize;
                let mut descs = Vec::with_capacity(count);
                for _ in 0..count {
                    let mut values = Vec::with_capacity(dim);
                    for _ in 0..dim {
                        values.push(rd.f32("descriptor value")?);
                    }
                    descs.push(FloatDescriptor { values });
                }
                Some(Descriptors::Float(descs))
            }
            other => {
                return Err(WireError::Invalid {
                    field: "descriptor kind",
                    msg: format!("unknown kind {other}"),
                })
            }
        };
        if rd.remaining() != 0 {
            return Err(WireError::Invalid {
                field: "task result",
                msg: format!("{} trailing bytes", rd.remaining()),
            });
        }
        Ok(Self { entry_index, keypoints, descriptors, dropped_count, elapsed_micros })
    }
}
