//! Completion of unsupported pixels over a whole query horizon.
//!
//! The baseline is deterministic pull-push plus a temporal carry-over pass.
//! External completers run as a subprocess over a request directory:
//!
//! ```text
//! <plugin> <request_dir> <response_dir>
//! request_dir/manifest.json
//! request_dir/frame_0001.png, mask_0001.png, ...
//! response_dir/frame_0001.png, ...
//! ```
//!
//! Frames are 8-bit RGB PNG and masks 1-bit PNG (1 = evidence-backed),
//! numbered from 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::corpus::codec;
use crate::decoder::PartialObservation;
use crate::fill::{pull_push, to_rgb8};
use crate::image::{Mask, RgbImage};

pub const REQUEST_FORMAT: &str = "aw4re-completion-request/1";
pub const DEFAULT_PLUGIN_TIMEOUT: Duration = Duration::from_secs(600);
/// Largest per-channel change, out of 255, allowed on supported pixels in
/// strict mode.
pub const STRICT_TOLERANCE: u8 = 2;

#[derive(Debug, Error)]
pub enum CompletionError {
    #[error("no frames to complete")]
    Empty,
    #[error("frame {index} is {got:?}, expected {expected:?}")]
    FrameSizeMismatch {
        index: usize,
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("plugin {plugin} timed out after {seconds} s")]
    Timeout { plugin: String, seconds: u64 },
    #[error("plugin {plugin} failed with status {status}: {stderr}")]
    PluginFailed {
        plugin: String,
        status: String,
        stderr: String,
    },
    #[error("malformed plugin response: {0}")]
    MalformedResponse(String),
    #[error("frame {frame} pixel ({x}, {y}) deviates from evidence by {delta}/255")]
    EvidenceViolation { frame: usize, x: u32, y: u32, delta: u8 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionSource {
    Baseline,
    External { plugin: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedObservation {
    pub rgb: RgbImage,
    pub support_mask: Mask,
    pub completion_source: CompletionSource,
}

fn check_dims(partials: &[PartialObservation]) -> Result<(u32, u32), CompletionError> {
    let first = partials.first().ok_or(CompletionError::Empty)?;
    let expected = first.dims();
    for (index, p) in partials.iter().enumerate() {
        if p.dims() != expected || p.support_mask.dims() != expected {
            return Err(CompletionError::FrameSizeMismatch {
                index,
                expected,
                got: p.dims(),
            });
        }
    }
    Ok(expected)
}

/// Spatial pull-push fill per frame, then a forward temporal pass: an
/// unsupported pixel that held a supported or carried value in the previous
/// frame is the mean of that value and its spatial fill. Frames without any
/// support carry the previous frame over where it exists.
pub fn complete_baseline(
    partials: &[PartialObservation],
) -> Result<Vec<CompletedObservation>, CompletionError> {
    check_dims(partials)?;
    let spatial: Vec<Option<Vec<[f64; 3]>>> = partials
        .par_iter()
        .map(|p| p.support_mask.any().then(|| pull_push(&p.rgb, &p.support_mask, None).0))
        .collect();

    let mut out = Vec::with_capacity(partials.len());
    let mut carried: Vec<bool> = Vec::new();
    for (p, fill) in partials.iter().zip(&spatial) {
        let n = p.rgb.pixel_count();
        let mut rgb = p.rgb.clone();
        let mut next_carried = vec![false; n];
        let prev = out.last().map(|c: &CompletedObservation| &c.rgb);
        for i in 0..n {
            if p.support_mask.as_slice()[i] {
                next_carried[i] = true;
                continue;
            }
            let from_prev = prev.filter(|_| carried[i]).map(|img| img.at(i));
            let value = match (from_prev, fill) {
                (Some(a), Some(f)) => {
                    let b = f[i];
                    next_carried[i] = true;
                    to_rgb8([
                        0.5 * a[0] as f64 + 0.5 * b[0],
                        0.5 * a[1] as f64 + 0.5 * b[1],
                        0.5 * a[2] as f64 + 0.5 * b[2],
                    ])
                }
                (Some(a), None) => {
                    next_carried[i] = true;
                    a
                }
                (None, Some(f)) => to_rgb8(f[i]),
                (None, None) => [0, 0, 0],
            };
            rgb.set_at(i, value);
        }
        carried = next_carried;
        out.push(CompletedObservation {
            rgb,
            support_mask: p.support_mask.clone(),
            completion_source: CompletionSource::Baseline,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginSpec {
    pub path: PathBuf,
    pub timeout: Duration,
    /// Reject responses that move a supported pixel by more than
    /// [`STRICT_TOLERANCE`].
    pub strict: bool,
}

impl PluginSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            timeout: DEFAULT_PLUGIN_TIMEOUT,
            strict: false,
        }
    }

    pub fn id(&self) -> String {
        self.path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.display().to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RequestManifest {
    pub format: String,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub frame_pattern: String,
    pub mask_pattern: String,
    pub support_density: Vec<f64>,
}

pub fn frame_file(index: usize) -> String {
    format!("frame_{index:04}.png")
}

pub fn mask_file(index: usize) -> String {
    format!("mask_{index:04}.png")
}

/// Writes the request directory consumed by an external completer.
pub fn write_request(dir: &Path, partials: &[PartialObservation]) -> Result<(), CompletionError> {
    let (width, height) = check_dims(partials)?;
    fs::create_dir_all(dir)?;
    let encode = |e: codec::CodecError| CompletionError::MalformedResponse(e.to_string());
    for (t, p) in partials.iter().enumerate() {
        fs::write(dir.join(frame_file(t + 1)), codec::encode_rgb_png(&p.rgb).map_err(encode)?)?;
        fs::write(dir.join(mask_file(t + 1)), codec::encode_mask_png(&p.support_mask).map_err(encode)?)?;
    }
    let manifest = RequestManifest {
        format: REQUEST_FORMAT.to_string(),
        frames: partials.len(),
        width,
        height,
        frame_pattern: "frame_%04d.png".into(),
        mask_pattern: "mask_%04d.png".into(),
        support_density: partials.iter().map(|p| p.support_density).collect(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

fn read_response(dir: &Path, count: usize, dims: (u32, u32)) -> Result<Vec<RgbImage>, CompletionError> {
    let present = fs::read_dir(dir)?
        .filter_map(Result::ok)
        .filter(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.starts_with("frame_") && name.ends_with(".png")
        })
        .count();
    if present != count {
        return Err(CompletionError::MalformedResponse(format!(
            "expected {count} frames, found {present}"
        )));
    }
    (1..=count)
        .map(|t| {
            let path = dir.join(frame_file(t));
            let bytes = fs::read(&path).map_err(|_| {
                CompletionError::MalformedResponse(format!("missing {}", frame_file(t)))
            })?;
            let img = codec::decode_rgb_png(&bytes)
                .map_err(|e| CompletionError::MalformedResponse(format!("{}: {e}", frame_file(t))))?;
            if img.dims() != dims {
                return Err(CompletionError::MalformedResponse(format!(
                    "{} is {:?}, expected {dims:?}",
                    frame_file(t),
                    img.dims()
                )));
            }
            Ok(img)
        })
        .collect()
}

/// First supported pixel that moved by more than the strict tolerance.
pub fn check_evidence(
    partials: &[PartialObservation],
    completed: &[RgbImage],
) -> Result<(), CompletionError> {
    for (frame, (p, c)) in partials.iter().zip(completed).enumerate() {
        let w = p.rgb.width();
        for (i, supported) in p.support_mask.as_slice().iter().enumerate() {
            if !supported {
                continue;
            }
            let (a, b) = (p.rgb.at(i), c.at(i));
            let delta = (0..3).map(|ch| a[ch].abs_diff(b[ch])).max().unwrap_or(0);
            if delta > STRICT_TOLERANCE {
                return Err(CompletionError::EvidenceViolation {
                    frame: frame + 1,
                    x: i as u32 % w,
                    y: i as u32 / w,
                    delta,
                });
            }
        }
    }
    Ok(())
}

/// Runs an external completer on the partial frames.
pub fn complete_external(
    partials: &[PartialObservation],
    plugin: &PluginSpec,
) -> Result<Vec<CompletedObservation>, CompletionError> {
    let dims = check_dims(partials)?;
    let work = tempfile::tempdir()?;
    let request = work.path().join("request");
    let response = work.path().join("response");
    write_request(&request, partials)?;
    fs::create_dir_all(&response)?;
    let stderr_path = work.path().join("stderr.log");
    let mut child = Command::new(&plugin.path)
        .arg(&request)
        .arg(&response)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(fs::File::create(&stderr_path)?)
        .spawn()
        .map_err(|e| CompletionError::PluginFailed {
            plugin: plugin.id(),
            status: "not started".into(),
            stderr: e.to_string(),
        })?;
    let status = match child.wait_timeout(plugin.timeout)? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(CompletionError::Timeout {
                plugin: plugin.id(),
                seconds: plugin.timeout.as_secs(),
            });
        }
    };
    if !status.success() {
        let stderr = fs::read_to_string(&stderr_path).unwrap_or_default();
        return Err(CompletionError::PluginFailed {
            plugin: plugin.id(),
            status: status.to_string(),
            stderr: stderr.trim().to_string(),
        });
    }
    let frames = read_response(&response, partials.len(), dims)?;
    if plugin.strict {
        check_evidence(partials, &frames)?;
    }
    Ok(frames
        .into_iter()
        .zip(partials)
        .map(|(rgb, p)| CompletedObservation {
            rgb,
            support_mask: p.support_mask.clone(),
            completion_source: CompletionSource::External { plugin: plugin.id() },
        })
        .collect())
}
