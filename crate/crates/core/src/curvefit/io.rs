use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::extract::{write_ply, PointCloud};
use crate::geom::{CubicBezier, Vec3};
use crate::synth::write_file;

/// `curves <n>` followed by one line of 12 reals (p1..p4) per curve.
pub fn curves_string(curves: &[CubicBezier]) -> String {
    let mut s = format!("curves {}\n", curves.len());
    for c in curves {
        let v = c.to_array().map(|x| x.to_string());
        let _ = writeln!(s, "{}", v.join(" "));
    }
    s
}

pub fn parse_curves(text: &str) -> std::result::Result<Vec<CubicBezier>, String> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or("empty curve file")?;
    let n: usize = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["curves", n] => n.parse().map_err(|_| format!("bad curve count '{n}'"))?,
        _ => return Err(format!("expected 'curves <n>', found '{header}'")),
    };
    let mut curves = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("curve {i}: {e}"))?;
        let arr: [f64; 12] = vals
            .try_into()
            .map_err(|v: Vec<f64>| format!("curve {i}: expected 12 values, got {}", v.len()))?;
        let c = CubicBezier::from_array(arr);
        if !c.is_finite() {
            return Err(format!("curve {i} is not finite"));
        }
        curves.push(c);
    }
    if curves.len() != n {
        return Err(format!("header declares {n} curves, found {}", curves.len()));
    }
    Ok(curves)
}

pub fn write_curves(path: &Path, curves: &[CubicBezier]) -> Result<()> {
    write_file(path, curves_string(curves).as_bytes())
}

pub fn read_curves(path: &Path) -> Result<Vec<CubicBezier>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_curves(&text).map_err(|m| Error::parse(path, m))
}

/// Uniform-parameter samples with neighbouring points at most about
/// `spacing` apart along each curve.
pub fn sample_curves(curves: &[CubicBezier], spacing: f64) -> Result<Vec<Vec3>> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid(format!("sample spacing must be positive, got {spacing}")));
    }
    let mut out = Vec::new();
    for c in curves {
        // polyline length underestimates slightly; the 1.25 factor covers it
        let n = ((1.25 * c.approx_length(64) / spacing).ceil() as usize + 1).max(2);
        out.extend(c.sample_uniform(n));
    }
    Ok(out)
}

/// PLY of densely sampled curve points for viewers.
pub fn write_curve_samples(path: &Path, curves: &[CubicBezier], spacing: f64) -> Result<()> {
    write_ply(path, &PointCloud::new(sample_curves(curves, spacing)?))
}

/// Exactly `total` points spread over the curves in proportion to their
/// lengths (largest-remainder rounding), uniform in `t` on each curve.
pub fn sample_curves_total(curves: &[CubicBezier], total: usize) -> Result<Vec<Vec3>> {
    if curves.is_empty() {
        return Err(Error::EmptyInput("curve set"));
    }
    let lengths: Vec<f64> = curves.iter().map(|c| c.approx_length(64)).collect();
    let sum: f64 = lengths.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::invalid("curves have zero total length"));
    }
    let quotas: Vec<f64> = lengths.iter().map(|l| l / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..curves.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    let mut out = Vec::with_capacity(total);
    for (c, &n) in curves.iter().zip(&counts) {
        // half-step offsets keep shared endpoints from being sampled twice
        out.extend((0..n).map(|i| c.eval((i as f64 + 0.5) / n as f64)));
    }
    Ok(out)
}
