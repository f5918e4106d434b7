//! Full-reference (SAM, ERGAS, Q, Q2^n) and no-reference (QNR) quality measures.

pub mod hyper;

pub use hyper::q2n;

use std::fmt::Write as _;

use crate::dsp::{degrade_pan, SensorProfile};
use crate::error::{ensure, Result};
use crate::raster::MultibandImage;

pub const DEFAULT_BLOCK: usize = 32;

fn same_shape(a: &MultibandImage, b: &MultibandImage, what: &str) -> Result<()> {
    ensure!(
        a.dims() == b.dims() && a.bands() == b.bands(),
        ShapeMismatch,
        "{}: {}x{}x{} vs {}x{}x{}",
        what,
        a.width(),
        a.height(),
        a.bands(),
        b.width(),
        b.height(),
        b.bands()
    );
    Ok(())
}

/// Mean spectral angle in degrees; pixels where either spectrum is zero are skipped.
pub fn sam(pred: &MultibandImage, reference: &MultibandImage) -> Result<f64> {
    same_shape(pred, reference, "sam")?;
    let (mut sum, mut count) = (0.0f64, 0usize);
    for i in 0..pred.plane_len() {
        let (mut dot, mut np, mut nr) = (0.0f64, 0.0f64, 0.0f64);
        for b in 0..pred.bands() {
            let p = pred.band(b)[i] as f64;
            let r = reference.band(b)[i] as f64;
            dot += p * r;
            np += p * p;
            nr += r * r;
        }
        if np == 0.0 || nr == 0.0 {
            continue;
        }
        sum += (dot / (np.sqrt() * nr.sqrt())).clamp(-1.0, 1.0).acos();
        count += 1;
    }
    ensure!(count > 0, Degenerate, "sam: every pixel has a zero spectrum");
    Ok((sum / count as f64).to_degrees())
}

/// `100 / R * sqrt(mean_b (RMSE_b / mean(ref_b))^2)`.
pub fn ergas(pred: &MultibandImage, reference: &MultibandImage, ratio: usize) -> Result<f64> {
    same_shape(pred, reference, "ergas")?;
    ensure!(ratio >= 1, InvalidArgument, "ratio must be positive");
    let n = pred.plane_len() as f64;
    let mut acc = 0.0;
    for b in 0..pred.bands() {
        let (p, r) = (pred.band(b), reference.band(b));
        let mse = p.iter().zip(r).map(|(&p, &r)| (p as f64 - r as f64).powi(2)).sum::<f64>() / n;
        let mean = r.iter().map(|&v| v as f64).sum::<f64>() / n;
        ensure!(mean != 0.0, Degenerate, "ergas: reference band {} has zero mean", b);
        acc += mse / (mean * mean);
    }
    Ok(100.0 / ratio as f64 * (acc / pred.bands() as f64).sqrt())
}

/// UIQI of one window from its raw values; `None` when the denominator vanishes.
pub fn q_window(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cab += (x - ma) * (y - mb);
    }
    let (va, vb, cab) = (va / n, vb / n, cab / n);
    let den = (va + vb) * (ma * ma + mb * mb);
    if den == 0.0 {
        return None;
    }
    Some(4.0 * cab * ma * mb / den)
}

/// Block-averaged UIQI of two planes of size `w` x `h`. Only whole blocks are used.
pub fn q_index(a: &[f32], b: &[f32], w: usize, h: usize, block: usize) -> Result<f64> {
    ensure!(a.len() == w * h && b.len() == w * h, ShapeMismatch, "plane sizes differ");
    ensure!(block >= 1, InvalidArgument, "block must be positive");
    ensure!(
        block <= w && block <= h,
        InvalidArgument,
        "block {} larger than image {}x{}",
        block,
        w,
        h
    );
    let mut wa = vec![0.0; block * block];
    let mut wb = vec![0.0; block * block];
    let (mut sum, mut count) = (0.0, 0usize);
    for y0 in (0..=h - block).step_by(block) {
        for x0 in (0..=w - block).step_by(block) {
            for yy in 0..block {
                let row = (y0 + yy) * w + x0;
                for xx in 0..block {
                    wa[yy * block + xx] = a[row + xx] as f64;
                    wb[yy * block + xx] = b[row + xx] as f64;
                }
            }
            if let Some(q) = q_window(&wa, &wb) {
                sum += q;
                count += 1;
            }
        }
    }
    ensure!(count > 0, Degenerate, "every {}x{} window is degenerate", block, block);
    Ok(sum / count as f64)
}

/// Band-averaged UIQI.
pub fn uiqi_q(a: &MultibandImage, b: &MultibandImage, block: usize) -> Result<f64> {
    same_shape(a, b, "uiqi")?;
    let (w, h) = a.dims();
    let mut sum = 0.0;
    for band in 0..a.bands() {
        sum += q_index(a.band(band), b.band(band), w, h, block)?;
    }
    Ok(sum / a.bands() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QnrParams {
    pub block: usize,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for QnrParams {
    fn default() -> Self {
        QnrParams {
            block: DEFAULT_BLOCK,
            p: 1.0,
            q: 1.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

fn scale_ratio(fused: &MultibandImage, ms_lr: &MultibandImage) -> Result<usize> {
    let ratio = fused.width() / ms_lr.width().max(1);
    ensure!(
        ratio >= 1 && fused.width() == ms_lr.width() * ratio && fused.height() == ms_lr.height() * ratio,
        ShapeMismatch,
        "fused {}x{} is not an integer multiple of MS {}x{}",
        fused.width(),
        fused.height(),
        ms_lr.width(),
        ms_lr.height()
    );
    Ok(ratio)
}

/// Spectral distortion: change of inter-band Q between the MS and the fused product.
/// Low-resolution Q uses `block / ratio` windows.
pub fn d_lambda(fused: &MultibandImage, ms_lr: &MultibandImage, params: &QnrParams) -> Result<f64> {
    ensure!(fused.bands() == ms_lr.bands(), ShapeMismatch, "fused and MS band counts differ");
    ensure!(fused.bands() >= 2, InvalidArgument, "D_lambda needs at least 2 bands");
    let ratio = scale_ratio(fused, ms_lr)?;
    let (fw, fh) = fused.dims();
    let (mw, mh) = ms_lr.dims();
    let lr_block = (params.block / ratio).max(1);
    let n = fused.bands();
    let mut acc = 0.0;
    for l in 0..n {
        for r in 0..n {
            if l == r {
                continue;
            }
            let qf = q_index(fused.band(l), fused.band(r), fw, fh, params.block)?;
            let qm = q_index(ms_lr.band(l), ms_lr.band(r), mw, mh, lr_block)?;
            acc += (qf - qm).abs().powf(params.p);
        }
    }
    Ok((acc / (n * (n - 1)) as f64).powf(1.0 / params.p))
}

/// Spatial distortion: change of band-to-PAN Q across scales.
pub fn d_s(
    fused: &MultibandImage,
    pan: &MultibandImage,
    ms_lr: &MultibandImage,
    pan_lr: &MultibandImage,
    params: &QnrParams,
) -> Result<f64> {
    ensure!(pan.bands() == 1 && pan_lr.bands() == 1, InvalidArgument, "PAN must have one band");
    ensure!(fused.dims() == pan.dims(), ShapeMismatch, "fused and PAN sizes differ");
    ensure!(ms_lr.dims() == pan_lr.dims(), ShapeMismatch, "MS and degraded PAN sizes differ");
    ensure!(fused.bands() == ms_lr.bands(), ShapeMismatch, "fused and MS band counts differ");
    let ratio = scale_ratio(fused, ms_lr)?;
    let (fw, fh) = fused.dims();
    let (mw, mh) = ms_lr.dims();
    let lr_block = (params.block / ratio).max(1);
    let mut acc = 0.0;
    for l in 0..fused.bands() {
        let qf = q_index(fused.band(l), pan.band(0), fw, fh, params.block)?;
        let qm = q_index(ms_lr.band(l), pan_lr.band(0), mw, mh, lr_block)?;
        acc += (qf - qm).abs().powf(params.q);
    }
    Ok((acc / fused.bands() as f64).powf(1.0 / params.q))
}

pub fn qnr(d_lambda: f64, d_s: f64, alpha: f64, beta: f64) -> f64 {
    (1.0 - d_lambda).powf(alpha) * (1.0 - d_s).powf(beta)
}

/// One row of a quality table; fields not computed in a regime stay `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QualityReport {
    pub sam_deg: Option<f64>,
    pub ergas: Option<f64>,
    pub q_avg: Option<f64>,
    pub q2n: Option<f64>,
    pub d_lambda: Option<f64>,
    pub d_s: Option<f64>,
    pub qnr: Option<f64>,
}

pub const CSV_HEADER: &str = "SAM,ERGAS,Q,Q2n,Dlambda,Ds,QNR";

impl QualityReport {
    pub fn fields(&self) -> [Option<f64>; 7] {
        [self.sam_deg, self.ergas, self.q_avg, self.q2n, self.d_lambda, self.d_s, self.qnr]
    }

    pub fn csv_row(&self) -> String {
        self.fields()
            .iter()
            .map(|f| f.map(|v| format!("{:.6}", v)).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Combines a reduced-resolution and a full-resolution report.
    pub fn merge(&self, other: &QualityReport) -> QualityReport {
        QualityReport {
            sam_deg: self.sam_deg.or(other.sam_deg),
            ergas: self.ergas.or(other.ergas),
            q_avg: self.q_avg.or(other.q_avg),
            q2n: self.q2n.or(other.q2n),
            d_lambda: self.d_lambda.or(other.d_lambda),
            d_s: self.d_s.or(other.d_s),
            qnr: self.qnr.or(other.qnr),
        }
    }
}

/// CSV table with a leading `method` column.
pub fn report_table(rows: &[(String, QualityReport)]) -> String {
    let mut s = format!("method,{}\n", CSV_HEADER);
    for (name, r) in rows {
        let _ = writeln!(s, "{},{}", name, r.csv_row());
    }
    s
}

/// Full-reference measures of a product computed at reduced scale.
pub fn evaluate_reduced(fused_lr: &MultibandImage, ms_original: &MultibandImage, ratio: usize) -> Result<QualityReport> {
    evaluate_reduced_with(fused_lr, ms_original, ratio, DEFAULT_BLOCK)
}

pub fn evaluate_reduced_with(
    fused_lr: &MultibandImage,
    ms_original: &MultibandImage,
    ratio: usize,
    block: usize,
) -> Result<QualityReport> {
    same_shape(fused_lr, ms_original, "evaluate_reduced")?;
    Ok(QualityReport {
        sam_deg: Some(sam(fused_lr, ms_original)?),
        ergas: Some(ergas(fused_lr, ms_original, ratio)?),
        q_avg: Some(uiqi_q(fused_lr, ms_original, block)?),
        q2n: Some(q2n(fused_lr, ms_original, block)?),
        ..Default::default()
    })
}

/// No-reference measures of a full-resolution product.
pub fn evaluate_full(
    fused: &MultibandImage,
    ms_lr: &MultibandImage,
    pan: &MultibandImage,
    profile: &SensorProfile,
) -> Result<QualityReport> {
    evaluate_full_with(fused, ms_lr, pan, profile, &QnrParams::default())
}

pub fn evaluate_full_with(
    fused: &MultibandImage,
    ms_lr: &MultibandImage,
    pan: &MultibandImage,
    profile: &SensorProfile,
    params: &QnrParams,
) -> Result<QualityReport> {
    let pan_lr = degrade_pan(pan, profile)?;
    let dl = d_lambda(fused, ms_lr, params)?;
    let ds = d_s(fused, pan, ms_lr, &pan_lr, params)?;
    Ok(QualityReport {
        d_lambda: Some(dl),
        d_s: Some(ds),
        qnr: Some(qnr(dl, ds, params.alpha, params.beta)),
        ..Default::default()
    })
}
