//! The map-only execution model: one task per bundle entry, executed by a
//! pluggable runner (local threads or remote workers) and merged
//! deterministically by entry index.

pub(crate) mod wire;

pub use wire::WireError;

use crate::bundle::{Bundle, BundleError};
use crate::describe::{
    brief_describe, orb_extract, sift_describe, sift_detect, surf_describe_with_integral,
    surf_detect, Descriptors, SamplingPattern,
};
use crate::detect::{fast_detect, harris_response, nms_select, shi_tomasi_response, Keypoint};
use crate::params::{DescriptorParams, DetectorParams, ParamsError};
use crate::raster::{gaussian_blur, integral, to_grayscale, GrayImage, PixelImage, RasterError};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;
use thiserror::Error;

/// The seven extraction pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Harris,
    ShiTomasi,
    Fast,
    Brief,
    Orb,
    Surf,
    Sift,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Harris,
        Algorithm::ShiTomasi,
        Algorithm::Fast,
        Algorithm::Brief,
        Algorithm::Orb,
        Algorithm::Surf,
        Algorithm::Sift,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Harris => "harris",
            Algorithm::ShiTomasi => "shi-tomasi",
            Algorithm::Fast => "fast",
            Algorithm::Brief => "brief",
            Algorithm::Orb => "orb",
            Algorithm::Surf => "surf",
            Algorithm::Sift => "sift",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Algorithm::Harris => 1,
            Algorithm::ShiTomasi => 2,
            Algorithm::Fast => 3,
            Algorithm::Brief => 4,
            Algorithm::Orb => 5,
            Algorithm::Surf => 6,
            Algorithm::Sift => 7,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code() == code)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything a worker needs to execute tasks of one job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    /// SHA-256 of the bundle file contents.
    pub bundle_id: [u8; 32],
    pub algorithm: Algorithm,
    pub detector_params: DetectorParams,
    pub descriptor_params: DescriptorParams,
    pub output_dir: PathBuf,
}

impl JobSpec {
    /// Validate parameters and fingerprint the bundle file.
    pub fn new(
        bundle: &Bundle,
        algorithm: Algorithm,
        detector_params: DetectorParams,
        descriptor_params: DescriptorParams,
        output_dir: PathBuf,
    ) -> Result<Self, JobError> {
        detector_params.validate()?;
        descriptor_params.validate()?;
        let bundle_id = hash_file(bundle.path())?;
        Ok(Self { bundle_id, algorithm, detector_params, descriptor_params, output_dir })
    }
}

fn hash_file(path: &std::path::Path) -> Result<[u8; 32], JobError> {
    use std::io::Read;
    let mut file = std::fs::File::open(path)
        .map_err(|e| JobError::Io { path: path.to_path_buf(), source: e })?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| JobError::Io { path: path.to_path_buf(), source: e })?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().into())
}

/// One unit of work: extract features from one bundle entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Task {
    /// Stable across retries; equals the entry index.
    pub task_id: u64,
    pub entry_index: u32,
    pub attempt: u32,
}

/// Features extracted from one entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskResult {
    pub entry_index: u32,
    pub keypoints: Vec<Keypoint>,
    /// Aligned 1:1 with `keypoints` when present.
    pub descriptors: Option<Descriptors>,
    /// Keypoints skipped because their descriptor window left the image.
    pub dropped_count: u32,
    /// Excluded from the determinism contract.
    pub elapsed_micros: u64,
}

/// Per-entry outcome: a result or the failure reason.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub entry_index: u32,
    pub outcome: Result<TaskResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryReport {
    pub entry_index: u32,
    /// Feature count, or the failure reason.
    pub outcome: Result<u64, String>,
}

/// Aggregate of one job run.
#[derive(Debug, Clone, PartialEq)]
pub struct JobReport {
    pub algorithm: Algorithm,
    pub per_entry: Vec<EntryReport>,
    pub total_features: u64,
    pub wall_seconds: f64,
    pub worker_count: usize,
}

impl JobReport {
    pub fn failed_entries(&self) -> impl Iterator<Item = &EntryReport> {
        self.per_entry.iter().filter(|e| e.outcome.is_err())
    }
}

#[derive(Debug, Error)]
pub enum JobError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("backend failure: {0}")]
    Backend(String),
}

/// Extraction failure for a single task; the job continues.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct TaskError(pub String);

/// Exactly one task per bundle entry, ordered by entry index, attempt 0.
pub fn plan_job(bundle: &Bundle) -> Vec<Task> {
    (0..bundle.entry_count())
        .map(|i| Task { task_id: i as u64, entry_index: i, attempt: 0 })
        .collect()
}

/// Run the algorithm's pipeline on one decoded image.
///
/// Pure function of (img, spec): identical results regardless of worker,
/// attempt or timing (elapsed_micros excepted).
pub fn execute_task(task: &Task, img: &PixelImage, spec: &JobSpec) -> Result<TaskResult, TaskError> {
    let started = Instant::now();
    let gray = to_grayscale(img);
    let (keypoints, descriptors, dropped_count) =
        run_pipeline(&gray, spec).map_err(|e| TaskError(e.to_string()))?;
    Ok(TaskResult {
        entry_index: task.entry_index,
        keypoints,
        descriptors,
        dropped_count,
        elapsed_micros: started.elapsed().as_micros() as u64,
    })
}

fn run_pipeline(
    gray: &GrayImage,
    spec: &JobSpec,
) -> Result<(Vec<Keypoint>, Option<Descriptors>, u32), RasterError> {
    let det = &spec.detector_params;
    let desc = &spec.descriptor_params;
    match spec.algorithm {
        Algorithm::Harris => {
            let grid = harris_response(gray, det)?;
            Ok((nms_select(&grid, det), None, 0))
        }
        Algorithm::ShiTomasi => {
            let grid = shi_tomasi_response(gray, det)?;
            Ok((nms_select(&grid, det), None, 0))
        }
        Algorithm::Fast => Ok((fast_detect(gray, det)?, None, 0)),
        Algorithm::Brief => {
            let corners = fast_detect(gray, det)?;
            let blurred = gaussian_blur(gray, desc.brief_blur_sigma)?;
            let pattern = SamplingPattern::builtin();
            let mut keypoints = Vec::new();
            let mut descs = Vec::new();
            let mut dropped = 0u32;
            for kp in corners {
                match brief_describe(&blurred, &kp, pattern) {
                    Some(d) => {
                        keypoints.push(kp);
                        descs.push(d);
                    }
                    None => dropped += 1,
                }
            }
            Ok((keypoints, Some(Descriptors::Binary(descs)), dropped))
        }
        Algorithm::Orb => {
            let feats = orb_extract(gray, desc, det)?;
            let (keypoints, descs): (Vec<_>, Vec<_>) = feats.into_iter().unzip();
            Ok((keypoints, Some(Descriptors::Binary(descs)), 0))
        }
        Algorithm::Surf => {
            let detected = surf_detect(gray, desc)?;
            let ii = integral(gray);
            let mut keypoints = Vec::new();
            let mut descs = Vec::new();
            let mut dropped = 0u32;
            for kp in detected {
                match surf_describe_with_integral(&ii, &kp) {
                    Some(d) => {
                        keypoints.push(kp);
                        descs.push(d);
                    }
                    None => dropped += 1,
                }
            }
            Ok((keypoints, Some(Descriptors::Float(descs)), dropped))
        }
        Algorithm::Sift => {
            let detected = sift_detect(gray, desc)?;
            let mut keypoints = Vec::new();
            let mut descs = Vec::new();
            let mut dropped = 0u32;
            for kp in detected {
                match sift_describe(gray, &kp) {
                    Some(d) => {
                        keypoints.push(kp);
                        descs.push(d);
                    }
                    None => dropped += 1,
                }
            }
            Ok((keypoints, Some(Descriptors::Float(descs)), dropped))
        }
    }
}

/// An execution backend for a planned task list.
pub trait Runner {
    fn run(&self, bundle: &Bundle, spec: &JobSpec, tasks: &[Task]) -> Result<Vec<TaskOutcome>, JobError>;

    /// Workers participating, for the report.
    fn worker_count(&self) -> usize;
}

/// Thread-pool backend within this process.
pub struct LocalRunner {
    pub parallelism: usize,
}

impl Runner for LocalRunner {
    fn run(&self, bundle: &Bundle, spec: &JobSpec, tasks: &[Task]) -> Result<Vec<TaskOutcome>, JobError> {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<TaskOutcome>>> = Mutex::new(vec![None; tasks.len()]);
        std::thread::scope(|scope| {
            for _ in 0..self.parallelism.max(1) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= tasks.len() {
                        break;
                    }
                    let task = &tasks[i];
                    let outcome = match bundle.fetch(task.entry_index) {
                        Ok(img) => execute_task(task, &img, spec).map_err(|e| e.to_string()),
                        Err(e) => Err(e.to_string()),
                    };
                    slots.lock().unwrap()[i] =
                        Some(TaskOutcome { entry_index: task.entry_index, outcome });
                });
            }
        });
        Ok(slots
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|o| o.expect("every task slot filled"))
            .collect())
    }

    fn worker_count(&self) -> usize {
        self.parallelism.max(1)
    }
}

/// Plan, execute and merge one job. Results come back in ascending entry
/// order regardless of completion order; failed entries are recorded in the
/// report rather than aborting the job.
pub fn run_job(
    bundle: &Bundle,
    spec: &JobSpec,
    runner: &dyn Runner,
) -> Result<(Vec<TaskOutcome>, JobReport), JobError> {
    let started = Instant::now();
    let tasks = plan_job(bundle);
    let mut outcomes = runner.run(bundle, spec, &tasks)?;
    outcomes.sort_by_key(|o| o.entry_index);
    if outcomes.len() != tasks.len()
        || outcomes.iter().zip(&tasks).any(|(o, t)| o.entry_index != t.entry_index)
    {
        return Err(JobError::Backend("runner did not cover every task exactly once".into()));
    }
    let report = summarize(
        spec.algorithm,
        &outcomes,
        started.elapsed().as_secs_f64(),
        runner.worker_count(),
    );
    Ok((outcomes, report))
}

/// Fold merged outcomes into the per-entry and total feature counts.
pub fn summarize(
    algorithm: Algorithm,
    outcomes: &[TaskOutcome],
    wall_seconds: f64,
    worker_count: usize,
) -> JobReport {
    let per_entry: Vec<EntryReport> = outcomes
        .iter()
        .map(|o| EntryReport {
            entry_index: o.entry_index,
            outcome: match &o.outcome {
                Ok(r) => Ok(r.keypoints.len() as u64),
                Err(e) => Err(e.clone()),
            },
        })
        .collect();
    let total_features = per_entry.iter().filter_map(|e| e.outcome.as_ref().ok()).sum();
    JobReport { algorithm, per_entry, total_features, wall_seconds, worker_count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::bundle_create;
    use crate::codec::encode_ppm;
    use crate::synth;

    fn test_bundle(dir: &std::path::Path, count: u32, size: usize) -> Bundle {
        let path = dir.join("test.fib");
        let sources: Vec<(String, Vec<u8>)> = (0..count)
            .map(|i| {
                let img = synth::generate_image(7, i, size, size);
                (format!("img_{i:03}.ppm"), encode_ppm(&img))
            })
            .collect();
        bundle_create(&path, &sources).unwrap();
        Bundle::open(&path).unwrap()
    }

    fn spec_for(bundle: &Bundle, alg: Algorithm, dir: &std::path::Path) -> JobSpec {
        JobSpec::new(
            bundle,
            alg,
            DetectorParams::defaults_for(alg),
            DescriptorParams::default(),
            dir.join("out"),
        )
        .unwrap()
    }

    #[test]
    fn plan_covers_every_entry_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = test_bundle(dir.path(), 20, 64);
        let tasks = plan_job(&bundle);
        assert_eq!(tasks.len(), 20);
        for (i, t) in tasks.iter().enumerate() {
            assert_eq!((t.task_id, t.entry_index, t.attempt), (i as u64, i as u32, 0));
        }
        let empty_dir = tempfile::tempdir().unwrap();
        bundle_create(empty_dir.path().join("e.fib"), &[]).unwrap();
        let empty = Bundle::open(empty_dir.path().join("e.fib")).unwrap();
        assert!(plan_job(&empty).is_empty());
    }

    #[test]
    fn harris_on_constant_image_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = test_bundle(dir.path(), 1, 64);
        let spec = spec_for(&bundle, Algorithm::Harris, dir.path());
        let img = PixelImage::new(64, 64, 1, vec![128; 64 * 64]).unwrap();
        let task = Task { task_id: 0, entry_index: 0, attempt: 0 };
        let result = execute_task(&task, &img, &spec).unwrap();
        assert!(result.keypoints.is_empty());
        assert!(result.descriptors.is_none());
    }

    #[test]
    fn shi_tomasi_respects_the_cap() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = test_bundle(dir.path(), 1, 256);
        let spec = spec_for(&bundle, Algorithm::ShiTomasi, dir.path());
        let img = bundle.fetch(0).unwrap();
        let task = Task { task_id: 0, entry_index: 0, attempt: 0 };
        let result = execute_task(&task, &img, &spec).unwrap();
        assert!(result.keypoints.len() <= 400);
    }

    #[test]
    fn orb_execution_is_bit_identical_across_repeats() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = test_bundle(dir.path(), 1, 128);
        let spec = spec_for(&bundle, Algorithm::Orb, dir.path());
        let img = bundle.fetch(0).unwrap();
        let task = Task { task_id: 0, entry_index: 0, attempt: 0 };
        let first = execute_task(&task, &img, &spec).unwrap();
        for _ in 0..9 {
            let again = execute_task(&task, &img, &spec).unwrap();
            assert_eq!(again.keypoints, first.keypoints);
            assert_eq!(again.descriptors, first.descriptors);
            assert_eq!(again.dropped_count, first.dropped_count);
        }
    }

    #[test]
    fn local_parallelism_does_not_change_results() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = test_bundle(dir.path(), 6, 96);
        let spec = spec_for(&bundle, Algorithm::Fast, dir.path());
        let (seq, _) = run_job(&bundle, &spec, &LocalRunner { parallelism: 1 }).unwrap();
        let (par, _) = run_job(&bundle, &spec, &LocalRunner { parallelism: 4 }).unwrap();
        let strip = |v: &[TaskOutcome]| -> Vec<TaskOutcome> {
            v.iter()
                .map(|o| TaskOutcome {
                    entry_index: o.entry_index,
                    outcome: o.outcome.clone().map(|mut r| {
                        r.elapsed_micros = 0;
                        r
                    }),
                })
                .collect()
        };
        assert_eq!(strip(&seq), strip(&par));
    }

    #[test]
    fn empty_bundle_runs_to_an_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        bundle_create(dir.path().join("e.fib"), &[]).unwrap();
        let bundle = Bundle::open(dir.path().join("e.fib")).unwrap();
        let spec = spec_for(&bundle, Algorithm::Harris, dir.path());
        let (results, report) = run_job(&bundle, &spec, &LocalRunner { parallelism: 2 }).unwrap();
        assert!(results.is_empty());
        assert_eq!(report.total_features, 0);
    }

    #[test]
    fn garbage_entry_fails_alone() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.fib");
        let good = |i: u32| {
            let img = synth::generate_image(3, i, 64, 64);
            (format!("good_{i}.ppm"), encode_ppm(&img))
        };
        bundle_create(&path, &[good(0), good(1), good(2)]).unwrap();
        // corrupt the middle payload in place
        let reference = Bundle::open(&path).unwrap();
        let e1 = reference.entries()[1].clone();
        let mut bytes = std::fs::read(&path).unwrap();
        let start = e1.payload_offset as usize;
        bytes[start..start + 16].fill(0xFF);
        std::fs::write(&path, bytes).unwrap();

        let bundle = Bundle::open(&path).unwrap();
        let spec = spec_for(&bundle, Algorithm::Harris, dir.path());
        let (results, report) = run_job(&bundle, &spec, &LocalRunner { parallelism: 2 }).unwrap();
        assert_eq!(results.len(), 3);
        assert!(results[0].outcome.is_ok());
        assert!(results[1].outcome.is_err());
        assert!(results[2].outcome.is_ok());
        assert_eq!(report.failed_entries().count(), 1);
        let sum: u64 = report.per_entry.iter().filter_map(|e| e.outcome.as_ref().ok()).sum();
        assert_eq!(sum, report.total_features);
    }

    #[test]
    fn summarize_of_nothing_is_zero() {
        let report = summarize(Algorithm::Orb, &[], 0.0, 1);
        assert_eq!(report.total_features, 0);
        assert!(report.per_entry.is_empty());
    }
}
