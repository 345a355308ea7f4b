//! Chamfer distance and precision/recall/F-score/IoU between point sets.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extract::{voxel_downsample, Normalization, PointCloud, DEFAULT_EVAL_VOXEL};
use crate::geom::Vec3;
use crate::spatial::KdTree;
use crate::synth::write_file;

pub const DEFAULT_MATCH_RADIUS: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub cd: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub iou: f64,
    pub tau: f64,
    /// Prediction was empty: precision is undefined and reported as 0.
    pub empty_prediction: bool,
}

/// Distances from every query point to its nearest point in `tree`.
fn nearest_distances(queries: &[Vec3], tree: &KdTree) -> Vec<f64> {
    queries
        .par_iter()
        .map(|&q| tree.nearest(q).expect("non-empty tree").1.sqrt())
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unsquared symmetric Chamfer distance: mean pred→gt plus mean gt→pred.
pub fn chamfer_eval(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyInput("chamfer evaluation cloud"));
    }
    let a = nearest_distances(pred, &KdTree::build(gt));
    let b = nearest_distances(gt, &KdTree::build(pred));
    Ok(mean(&a) + mean(&b))
}

fn f_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Match-based scores at radius `tau` (strict `<`). `cd` is left at 0;
/// [`evaluate`] fills it in.
pub fn prf_iou(pred: &[Vec3], gt: &[Vec3], tau: f64) -> Result<Metrics> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("match radius must be positive, got {tau}")));
    }
    if gt.is_empty() {
        return Err(Error::EmptyInput("ground-truth cloud"));
    }
    if pred.is_empty() {
        log::warn!("empty prediction: precision undefined, reported as 0");
        return Ok(Metrics {
            cd: 0.0,
            precision: 0.0,
            recall: 0.0,
            f_score: 0.0,
            iou: 0.0,
            tau,
            empty_prediction: true,
        });
    }
    let count = |q: &[Vec3], tree: &KdTree| nearest_distances(q, tree).iter().filter(|&&d| d < tau).count();
    let m_p = count(pred, &KdTree::build(gt));
    let m_g = count(gt, &KdTree::build(pred));
    let precision = m_p as f64 / pred.len() as f64;
    let recall = m_g as f64 / gt.len() as f64;
    let matched = (m_p + m_g) as f64;
    let iou = matched / (2.0 * (pred.len() + gt.len()) as f64 - matched);
    Ok(Metrics {
        cd: 0.0,
        precision,
        recall,
        f_score: f_score(precision, recall),
        iou,
        tau,
        empty_prediction: false,
    })
}

/// Full evaluation: both clouds are mapped with the transform that
/// normalizes `gt` into `[0,1]³`, voxel-downsampled at `voxel`, then
/// compared. An empty prediction gives an infinite `cd` and zero scores.
pub fn evaluate(pred: &[Vec3], gt: &[Vec3], tau: f64, voxel: f64) -> Result<Metrics> {
    let norm = Normalization::fit(gt)?;
    let prep = |pts: &[Vec3]| -> Result<Vec<Vec3>> {
        Ok(voxel_downsample(&PointCloud::new(norm.apply_all(pts)), voxel)?.points)
    };
    let (p, g) = (prep(pred)?, prep(gt)?);
    let mut m = prf_iou(&p, &g, tau)?;
    m.cd = if p.is_empty() { f64::INFINITY } else { chamfer_eval(&p, &g)? };
    Ok(m)
}

/// [`evaluate`] with the default radius and voxel size.
pub fn evaluate_default(pred: &[Vec3], gt: &[Vec3]) -> Result<Metrics> {
    evaluate(pred, gt, DEFAULT_MATCH_RADIUS, DEFAULT_EVAL_VOXEL)
}

pub const REPORT_KEYS: [&str; 5] = ["cd", "precision", "recall", "f_score", "iou"];

impl Metrics {
    fn values(&self) -> [f64; 5] {
        [self.cd, self.precision, self.recall, self.f_score, self.iou]
    }

    /// `metric=value` lines.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for (k, v) in REPORT_KEYS.iter().zip(self.values()) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn csv_header() -> String {
        format!("{},tau,empty_prediction", REPORT_KEYS.join(","))
    }

    pub fn csv_row(&self) -> String {
        let v = self.values().map(|x| x.to_string());
        format!("{},{},{}", v.join(","), self.tau, self.empty_prediction)
    }

    /// Parses a [`Metrics::report`] back; `tau` is not part of the report.
    pub fn parse_report(text: &str, tau: f64) -> std::result::Result<Metrics, String> {
        let mut vals = [None; 5];
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| format!("bad report line '{line}'"))?;
            let i = REPORT_KEYS
                .iter()
                .position(|key| *key == k.trim())
                .ok_or_else(|| format!("unknown metric '{k}'"))?;
            vals[i] = Some(v.trim().parse::<f64>().map_err(|e| format!("{k}: {e}"))?);
        }
        let get = |i: usize| vals[i].ok_or_else(|| format!("missing metric '{}'", REPORT_KEYS[i]));
        Ok(Metrics {
            cd: get(0)?,
            precision: get(1)?,
            recall: get(2)?,
            f_score: get(3)?,
            iou: get(4)?,
            tau,
            empty_prediction: false,
        })
    }
}

/// Writes `<stem>.txt` (report) and `<stem>.csv` (header plus one row).
pub fn write_metrics(dir: &Path, stem: &str, m: &Metrics) -> Result<()> {
    write_file(&dir.join(format!("{stem}.txt")), m.report().as_bytes())?;
    let csv = format!("{}\n{}\n", Metrics::csv_header(), m.csv_row());
    write_file(&dir.join(format!("{stem}.csv")), csv.as_bytes())
}
