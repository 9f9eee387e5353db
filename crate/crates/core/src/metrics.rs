//! Fidelity and temporal-consistency metrics, and query reports.
//!
//! - PSNR is over RGB with peak 255, capped at [`PSNR_CAP`]. Over a
//!   sequence the squared error is pooled across all frames (or all masked
//!   pixels) before taking the log.
//! - SSIM is single scale on Rec.601 luma, with an 11x11 Gaussian window
//!   (sigma 1.5), `K1 = 0.01`, `K2 = 0.03`, and only windows that fit inside
//!   the image.
//! - The perceptual distance is a stand-in for LPIPS: the mean over three
//!   dyadic scales of `(1 - SSIM) / 2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::completion::CompletedObservation;
use crate::decoder::PartialObservation;
use crate::image::{Mask, RgbImage};

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const PERCEPTUAL_SCALES: usize = 3;
/// Smallest connected evidence region for which evidence SSIM is reported.
pub const MIN_EVIDENCE_COMPONENT: usize = 32 * 32;

const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("image {0:?} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")]
    TooSmall((u32, u32)),
    #[error("temporal consistency needs at least two frames")]
    SingleFrame,
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

fn same_dims(a: &RgbImage, b: &RgbImage) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimensionMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

fn check_mask(a: &RgbImage, mask: Option<&Mask>) -> Result<(), MetricsError> {
    if let Some(m) = mask {
        if m.dims() != a.dims() {
            return Err(MetricsError::DimensionMismatch(a.dims(), m.dims()));
        }
    }
    Ok(())
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (255.0 * 255.0 / mse).log10()).min(PSNR_CAP)
}

/// Sum of squared channel errors and the number of channel samples.
fn squared_error(a: &RgbImage, b: &RgbImage, mask: Option<&Mask>) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..a.pixel_count() {
        if mask.is_some_and(|m| !m.as_slice()[i]) {
            continue;
        }
        let (p, q) = (a.at(i), b.at(i));
        for ch in 0..3 {
            let d = p[ch] as f64 - q[ch] as f64;
            sum += d * d;
        }
        n += 3;
    }
    (sum, n)
}

pub fn psnr(a: &RgbImage, b: &RgbImage, mask: Option<&Mask>) -> Result<f64, MetricsError> {
    same_dims(a, b)?;
    check_mask(a, mask)?;
    let (sum, n) = squared_error(a, b, mask);
    if n == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(psnr_from_mse(sum / n as f64))
}

/// PSNR of a whole sequence with the squared error pooled over every frame.
pub fn psnr_sequence(
    a: &[RgbImage],
    b: &[RgbImage],
    masks: Option<&[Mask]>,
) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if let Some(m) = masks {
        if m.len() != a.len() {
            return Err(MetricsError::LengthMismatch(a.len(), m.len()));
        }
    }
    let mut sum = 0.0;
    let mut n = 0;
    for (t, (x, y)) in a.iter().zip(b).enumerate() {
        same_dims(x, y)?;
        let mask = masks.map(|m| &m[t]);
        check_mask(x, mask)?;
        let (s, c) = squared_error(x, y, mask);
        sum += s;
        n += c;
    }
    if n == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(psnr_from_mse(sum / n as f64))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// A single-channel image of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn luma(img: &RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.luma(),
        }
    }

    /// 2x2 box average; odd trailing rows and columns are dropped.
    pub fn downsample(&self) -> Self {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let at = |dx, dy| self.data[(2 * y + dy) * self.width + 2 * x + dx];
                data.push(0.25 * (at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1)));
            }
        }
        Self { width: w, height: h, data }
    }
}

/// A 2x2 block stays masked only when all four children are.
fn downsample_mask(mask: &[bool], width: usize, height: usize) -> Vec<bool> {
    let (w, h) = (width / 2, height / 2);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let at = |dx, dy| mask[(2 * y + dy) * width + 2 * x + dx];
            out.push(at(0, 0) && at(1, 0) && at(0, 1) && at(1, 1));
        }
    }
    out
}

/// Gaussian-weighted sum over every window that fits, separably.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * horiz[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Per-window SSIM over all windows that fit, in row-major order of window
/// centers `(r..w-r, r..h-r)`.
pub fn ssim_map(a: &Plane, b: &Plane) -> Option<Vec<f64>> {
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return None;
    }
    let k = gaussian_kernel();
    let aa: Vec<f64> = a.data.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.data.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(&a.data, w, h, &k);
    let mu_b = filter_valid(&b.data, w, h, &k);
    let e_aa = filter_valid(&aa, w, h, &k);
    let e_bb = filter_valid(&bb, w, h, &k);
    let e_ab = filter_valid(&ab, w, h, &k);
    Some(
        (0..mu_a.len())
            .map(|i| {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let va = e_aa[i] - ma * ma;
                let vb = e_bb[i] - mb * mb;
                let cov = e_ab[i] - ma * mb;
                ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                    / ((ma * ma + mb * mb + C1) * (va + vb + C2))
            })
            .collect(),
    )
}

/// Mean SSIM over windows, or over windows centered on masked pixels.
/// `None` when the image is too small or no window center is masked.
pub fn ssim_plane(a: &Plane, b: &Plane, mask: Option<&[bool]>) -> Option<f64> {
    let map = ssim_map(a, b)?;
    let r = SSIM_WINDOW / 2;
    let ow = a.width + 1 - SSIM_WINDOW;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, v) in map.iter().enumerate() {
        let (x, y) = (i % ow + r, i / ow + r);
        if mask.is_none_or(|m| m[y * a.width + x]) {
            sum += v;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn ssim(a: &RgbImage, b: &RgbImage, mask: Option<&Mask>) -> Result<f64, MetricsError> {
    same_dims(a, b)?;
    check_mask(a, mask)?;
    let (pa, pb) = (Plane::luma(a), Plane::luma(b));
    if pa.width < SSIM_WINDOW || pa.height < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(a.dims()));
    }
    ssim_plane(&pa, &pb, mask.map(Mask::as_slice)).ok_or(MetricsError::EmptyMask)
}

/// Multi-scale structural distance in `[0, 1]`; zero for identical images.
/// `None` when no scale has a usable window.
pub fn perceptual_plane(a: &Plane, b: &Plane, mask: Option<Vec<bool>>) -> Option<f64> {
    let (mut pa, mut pb, mut pm) = (a.clone(), b.clone(), mask);
    let mut total = 0.0;
    let mut used = 0usize;
    for scale in 0..PERCEPTUAL_SCALES {
        if scale > 0 {
            pm = pm.map(|m| downsample_mask(&m, pa.width, pa.height));
            pa = pa.downsample();
            pb = pb.downsample();
        }
        if let Some(s) = ssim_plane(&pa, &pb, pm.as_deref()) {
            total += (1.0 - s) / 2.0;
            used += 1;
        }
    }
    (used > 0).then(|| total / used as f64)
}

pub fn perceptual_proxy(a: &RgbImage, b: &RgbImage, mask: Option<&Mask>) -> Result<f64, MetricsError> {
    same_dims(a, b)?;
    check_mask(a, mask)?;
    if (a.width() as usize) < SSIM_WINDOW || (a.height() as usize) < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(a.dims()));
    }
    perceptual_plane(
        &Plane::luma(a),
        &Plane::luma(b),
        mask.map(|m| m.as_slice().to_vec()),
    )
    .ok_or(MetricsError::EmptyMask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalScore {
    /// Mean over the pairs that were scored; absent when none were.
    pub value: Option<f64>,
    pub pairs_scored: usize,
    pub pairs_skipped: usize,
}

/// Mean perceptual distance between consecutive frames. With masks, each
/// pair is restricted to the intersection of its two masks and skipped when
/// that intersection leaves nothing to score.
pub fn temporal_consistency(
    seq: &[RgbImage],
    masks: Option<&[Mask]>,
) -> Result<TemporalScore, MetricsError> {
    if seq.len() < 2 {
        return Err(MetricsError::SingleFrame);
    }
    if let Some(m) = masks {
        if m.len() != seq.len() {
            return Err(MetricsError::LengthMismatch(seq.len(), m.len()));
        }
    }
    for pair in seq.windows(2) {
        same_dims(&pair[0], &pair[1])?;
    }
    let planes: Vec<Plane> = seq.par_iter().map(Plane::luma).collect();
    let scores: Vec<Option<f64>> = (0..seq.len() - 1)
        .into_par_iter()
        .map(|t| {
            let mask = masks.map(|m| m[t].and(&m[t + 1]));
            if mask.as_ref().is_some_and(|m| !m.any()) {
                return None;
            }
            perceptual_plane(&planes[t], &planes[t + 1], mask.map(|m| m.as_slice().to_vec()))
        })
        .collect();
    let scored: Vec<f64> = scores.iter().flatten().copied().collect();
    Ok(TemporalScore {
        value: (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64),
        pairs_scored: scored.len(),
        pairs_skipped: scores.len() - scored.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityBlock {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub perceptual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalBlock {
    pub full_tc: Option<f64>,
    pub evidence_tc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceMetric {
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullTemporal {
    pub full_tc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub t: usize,
    pub support_density: f64,
    pub full_psnr: f64,
    pub full_ssim: f64,
    pub evidence_psnr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub query_id: String,
    pub mode: String,
    pub config_hash: String,
    pub frames: usize,
}

/// Report in one of two shapes: with a reference sequence (full-frame,
/// evidence and temporal blocks) or without one (evidence PSNR against the
/// grounded pixels plus full-frame temporal consistency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsReport {
    Reference {
        full_frame_metrics: FidelityBlock,
        evidence_metrics: FidelityBlock,
        temporal_consistency: TemporalBlock,
        per_frame: Vec<FrameMetrics>,
        metadata: ReportMetadata,
    },
    NoReference {
        evidence_metric: EvidenceMetric,
        temporal_consistency: FullTemporal,
        metadata: ReportMetadata,
    },
}

pub const REFERENCE_CSV_COLUMNS: [&str; 8] = [
    "full_psnr",
    "full_ssim",
    "full_perceptual",
    "evidence_psnr",
    "evidence_ssim",
    "evidence_perceptual",
    "full_tc",
    "evidence_tc",
];

pub const NO_REFERENCE_CSV_COLUMNS: [&str; 2] = ["evidence_psnr", "full_tc"];

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl MetricsReport {
    pub fn metadata(&self) -> &ReportMetadata {
        match self {
            Self::Reference { metadata, .. } | Self::NoReference { metadata, .. } => metadata,
        }
    }

    pub fn metadata_mut(&mut self) -> &mut ReportMetadata {
        match self {
            Self::Reference { metadata, .. } | Self::NoReference { metadata, .. } => metadata,
        }
    }

    pub fn csv_header(&self) -> String {
        match self {
            Self::Reference { .. } => REFERENCE_CSV_COLUMNS.join(","),
            Self::NoReference { .. } => NO_REFERENCE_CSV_COLUMNS.join(","),
        }
    }

    pub fn csv_row(&self) -> String {
        let cells: Vec<String> = match self {
            Self::Reference {
                full_frame_metrics: f,
                evidence_metrics: e,
                temporal_consistency: t,
                ..
            } => [f.psnr, f.ssim, f.perceptual, e.psnr, e.ssim, e.perceptual, t.full_tc, t.evidence_tc]
                .into_iter()
                .map(cell)
                .collect(),
            Self::NoReference {
                evidence_metric,
                temporal_consistency,
                ..
            } => vec![cell(evidence_metric.psnr), cell(temporal_consistency.full_tc)],
        };
        cells.join(",")
    }

    pub fn full_psnr(&self) -> Option<f64> {
        match self {
            Self::Reference { full_frame_metrics, .. } => full_frame_metrics.psnr,
            Self::NoReference { .. } => None,
        }
    }

    pub fn evidence_psnr(&self) -> Option<f64> {
        match self {
            Self::Reference { evidence_metrics, .. } => evidence_metrics.psnr,
            Self::NoReference { evidence_metric, .. } => evidence_metric.psnr,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores a completed query. `partials` supplies the support masks and the
/// evidence values; `reference`, when present, is the ground truth.
pub fn evaluate_query(
    predicted: &[CompletedObservation],
    partials: &[PartialObservation],
    reference: Option<&[RgbImage]>,
) -> Result<MetricsReport, MetricsError> {
    if predicted.len() != partials.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), partials.len()));
    }
    let pred: Vec<RgbImage> = predicted.iter().map(|c| c.rgb.clone()).collect();
    let masks: Vec<Mask> = partials.iter().map(|p| p.support_mask.clone()).collect();
    let evidence: Vec<RgbImage> = partials.iter().map(|p| p.rgb.clone()).collect();
    let has_support = masks.iter().any(Mask::any);
    let full_tc = if pred.len() >= 2 {
        temporal_consistency(&pred, None)?.value
    } else {
        None
    };
    let metadata = ReportMetadata {
        frames: pred.len(),
        ..Default::default()
    };

    let Some(reference) = reference else {
        let psnr = if has_support {
            Some(psnr_sequence(&pred, &evidence, Some(&masks))?)
        } else {
            None
        };
        return Ok(MetricsReport::NoReference {
            evidence_metric: EvidenceMetric { psnr },
            temporal_consistency: FullTemporal { full_tc },
            metadata,
        });
    };

    if reference.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), reference.len()));
    }
    let per_frame: Vec<FrameMetrics> = (0..pred.len())
        .into_par_iter()
        .map(|t| {
            let (p, r, m) = (&pred[t], &reference[t], &masks[t]);
            Ok(FrameMetrics {
                t: t + 1,
                support_density: m.fraction(),
                full_psnr: psnr(p, r, None)?,
                full_ssim: ssim(p, r, None)?,
                evidence_psnr: if m.any() { Some(psnr(p, r, Some(m))?) } else { None },
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    let full_perceptual: Vec<f64> = (0..pred.len())
        .into_par_iter()
        .map(|t| perceptual_proxy(&pred[t], &reference[t], None))
        .collect::<Result<_, _>>()?;
    let evidence_ssim: Vec<Option<f64>> = (0..pred.len())
        .into_par_iter()
        .map(|t| {
            let m = &masks[t];
            (m.largest_component() >= MIN_EVIDENCE_COMPONENT)
                .then(|| ssim(&pred[t], &reference[t], Some(m)).ok())
                .flatten()
        })
        .collect();
    let evidence_perceptual: Vec<Option<f64>> = (0..pred.len())
        .into_par_iter()
        .map(|t| {
            let m = &masks[t];
            m.any().then(|| perceptual_proxy(&pred[t], &reference[t], Some(m)).ok()).flatten()
        })
        .collect();
    let evidence_tc = if pred.len() >= 2 {
        temporal_consistency(&pred, Some(&masks))?.value
    } else {
        None
    };

    Ok(MetricsReport::Reference {
        full_frame_metrics: FidelityBlock {
            psnr: Some(psnr_sequence(&pred, reference, None)?),
            ssim: mean(per_frame.iter().map(|f| f.full_ssim)),
            perceptual: mean(full_perceptual.into_iter()),
        },
        evidence_metrics: FidelityBlock {
            psnr: if has_support {
                Some(psnr_sequence(&pred, reference, Some(&masks))?)
            } else {
                None
            },
            ssim: mean(evidence_ssim.into_iter().flatten()),
            perceptual: mean(evidence_perceptual.into_iter().flatten()),
        },
        temporal_consistency: TemporalBlock { full_tc, evidence_tc },
        per_frame,
        metadata,
    })
}
