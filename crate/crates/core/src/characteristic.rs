//! Grass color characteristic curves (OGCD against grass length) and their
//! analysis: monotone fitting, curve comparison and 8-bit calibration.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::ccm::{apply_ccm, ColorCorrectionMatrix};
use crate::colorimetry::{ciede2000, Color, Space, WhitePoint};
use crate::error::{Error, Result};
use crate::scene::Viewpoint;

/// Resampling step for curve comparison, in millimeters.
pub const GRID_STEP_MM: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveSource {
    Real,
    Virtual,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub viewpoint: Option<Viewpoint>,
    pub environment: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub length_mm: f64,
    pub ogcd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicCurve {
    samples: Vec<CurveSample>,
    labs: Vec<Color>,
    pub source: CurveSource,
    pub meta: CurveMeta,
}

impl CharacteristicCurve {
    pub fn new(samples: Vec<CurveSample>, labs: Vec<Color>, source: CurveSource, meta: CurveMeta) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::EmptyCurve);
        };
        if first.ogcd != 0.0 {
            return Err(Error::InvalidCurve(format!("first ogcd must be 0, got {}", first.ogcd)));
        }
        if labs.len() != samples.len() {
            return Err(Error::InvalidCurve(format!("{} samples but {} Lab values", samples.len(), labs.len())));
        }
        for s in &samples {
            if !(s.length_mm.is_finite() && s.ogcd.is_finite() && s.ogcd >= 0.0) {
                return Err(Error::InvalidCurve(format!("bad sample {s:?}")));
            }
        }
        if samples.windows(2).any(|w| w[1].length_mm <= w[0].length_mm) {
            return Err(Error::InvalidCurve("lengths must be strictly increasing".into()));
        }
        if let Some(l) = labs.iter().find(|l| l.space != Space::Cielab) {
            return Err(Error::WrongSpace {
                expected: Space::Cielab,
                got: l.space,
            });
        }
        Ok(CharacteristicCurve {
            samples,
            labs,
            source,
            meta,
        })
    }

    /// OGCD of every Lab value against the first one.
    pub fn from_labs(lengths: &[f64], labs: Vec<Color>, source: CurveSource, meta: CurveMeta) -> Result<Self> {
        if lengths.len() != labs.len() {
            return Err(Error::InvalidCurve(format!("{} lengths but {} Lab values", lengths.len(), labs.len())));
        }
        let origin = *labs.first().ok_or(Error::EmptyCurve)?;
        let samples = lengths
            .iter()
            .zip(&labs)
            .map(|(&length_mm, lab)| Ok(CurveSample { length_mm, ogcd: ciede2000(&origin, lab)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples, labs, source, meta)
    }

    /// Curve from per-length ProPhoto linear RGB, corrected by `ccm` when given.
    pub fn from_prophoto(
        lengths: &[f64],
        rgb: &[Color],
        ccm: Option<&ColorCorrectionMatrix>,
        source: CurveSource,
        meta: CurveMeta,
    ) -> Result<Self> {
        let labs = rgb
            .iter()
            .map(|c| prophoto_to_lab(c, ccm))
            .collect::<Result<Vec<_>>>()?;
        Self::from_labs(lengths, labs, source, meta)
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    pub fn labs(&self) -> &[Color] {
        &self.labs
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.length_mm).collect()
    }

    pub fn ogcds(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.ogcd).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The first `n` samples as a curve of their own.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Self::new(self.samples[..n].to_vec(), self.labs[..n].to_vec(), self.source, self.meta.clone())
    }

    /// Writes `length_mm,ogcd,L,a,b`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["length_mm", "ogcd", "L", "a", "b"])?;
        for (s, lab) in self.samples.iter().zip(&self.labs) {
            let [l, a, b] = lab.values;
            w.write_record([s.length_mm, s.ogcd, l, a, b].map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads a curve CSV. Lab values are taken as D50.
    pub fn read_csv<R: Read>(reader: R, source: CurveSource, meta: CurveMeta) -> Result<Self> {
        let rows = read_columns(reader, &["length_mm", "ogcd", "L", "a", "b"])?;
        let samples = rows
            .iter()
            .map(|r| CurveSample {
                length_mm: r[0],
                ogcd: r[1],
            })
            .collect();
        let labs = rows
            .iter()
            .map(|r| Color::new([r[2], r[3], r[4]], Space::Cielab, WhitePoint::D50))
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples, labs, source, meta)
    }

    /// Reads `length_mm,R,G,B` rows of ProPhoto linear RGB.
    pub fn read_rgb_csv<R: Read>(
        reader: R,
        ccm: Option<&ColorCorrectionMatrix>,
        source: CurveSource,
        meta: CurveMeta,
    ) -> Result<Self> {
        let rows = read_columns(reader, &["length_mm", "R", "G", "B"])?;
        let lengths: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let rgb = rows
            .iter()
            .map(|r| Color::new([r[1], r[2], r[3]], Space::ProPhotoLinearRgb, WhitePoint::D50))
            .collect::<Result<Vec<_>>>()?;
        Self::from_prophoto(&lengths, &rgb, ccm, source, meta)
    }

    /// Reads either CSV flavor, chosen by its header.
    pub fn read_any_csv<R: Read>(mut reader: R, source: CurveSource, meta: CurveMeta) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text).map_err(|e| Error::io("<csv>", e))?;
        let header = text.lines().next().unwrap_or_default();
        if header.split(',').any(|h| h.trim() == "ogcd") {
            Self::read_csv(text.as_bytes(), source, meta)
        } else {
            Self::read_rgb_csv(text.as_bytes(), None, source, meta)
        }
    }
}

fn read_columns<R: Read>(reader: R, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers()?.clone();
    let idx = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| Error::InvalidCurve(format!("missing column {n}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = idx
            .iter()
            .map(|&i| {
                let f = rec.get(i).unwrap_or_default();
                f.parse::<f64>()
                    .map_err(|_| Error::InvalidCurve(format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// ProPhoto linear RGB → (optionally corrected) → CIELAB against D50.
pub fn prophoto_to_lab(c: &Color, ccm: Option<&ColorCorrectionMatrix>) -> Result<Color> {
    let c = match ccm {
        Some(m) => apply_ccm(m, c)?,
        None => *c,
    };
    c.convert(Space::Cielab, WhitePoint::D50)
}

/// Non-decreasing least-squares fit by pool-adjacent-violators.
pub fn isotonic(ys: &[f64]) -> Vec<f64> {
    // Blocks of (mean, weight).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(ys.len());
    for &y in ys {
        blocks.push((y, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m2, w2) = blocks.pop().unwrap();
            let (m1, w1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w));
        }
    }
    blocks.into_iter().flat_map(|(m, w)| std::iter::repeat_n(m, w)).collect()
}

/// Monotone piecewise-cubic Hermite interpolant through isotonic values.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneFit {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneFit {
    /// Fits arbitrary samples; `xs` must be strictly increasing.
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidCurve("length mismatch".into()));
        }
        if xs.len() < 3 {
            return Err(Error::TooFewSamples { need: 3, got: xs.len() });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || xs.iter().chain(ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve("samples must be finite with increasing lengths".into()));
        }
        let ys = isotonic(ys);
        let slopes = pchip_slopes(xs, &ys);
        Ok(MonotoneFit {
            xs: xs.to_vec(),
            ys,
            slopes,
        })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.ys[0], *self.ys.last().unwrap())
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            i => (i - 1).min(self.xs.len() - 2),
        }
    }

    /// Value at `x`, held constant outside the domain.
    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        if x <= lo {
            return self.ys[0];
        }
        if x >= hi {
            return *self.ys.last().unwrap();
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1]
    }

    /// Smallest `x` with `eval(x) >= y`, for `y` inside the range.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let (ylo, yhi) = self.range();
        if !(y.is_finite() && y >= ylo && y <= yhi) {
            return Err(Error::InvalidParam(format!("ogcd {y} outside fitted range [{ylo}, {yhi}]")));
        }
        if y <= ylo {
            return Ok(self.xs[0]);
        }
        let j = self.ys.partition_point(|&v| v < y).max(1);
        // Near a knot, rounding lets the left segment reach y a few ulps early.
        if self.ys[j] == y {
            return Ok(self.xs[j]);
        }
        let i = j - 1;
        let (mut a, mut b) = (self.xs[i], self.xs[i + 1]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.eval(m) >= y {
                b = m;
            } else {
                a = m;
            }
        }
        Ok(b)
    }
}

/// Fritsch–Butland slopes with shape-preserving end conditions.
fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

pub fn fit_monotone(curve: &CharacteristicCurve) -> Result<MonotoneFit> {
    MonotoneFit::new(&curve.lengths(), &curve.ogcds())
}

/// Discrete Fréchet distance between two polylines.
pub fn discrete_frechet(p: &[[f64; 2]], q: &[[f64; 2]]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let m = q.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0; m];
    for (i, &pi) in p.iter().enumerate() {
        for j in 0..m {
            let d = dist(pi, q[j]);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// `lo`, every multiple of `step` strictly between, and `hi`.
pub fn comparison_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut g = vec![lo];
    let mut k = (lo / step).floor() as i64 + 1;
    while (k as f64) * step < hi {
        g.push(k as f64 * step);
        k += 1;
    }
    if hi > lo {
        g.push(hi);
    }
    g
}

/// The curve as a function of length: the monotone fit when there are
/// enough samples, otherwise straight lines between samples.
fn curve_function(c: &CharacteristicCurve) -> Result<Box<dyn Fn(f64) -> f64 + '_>> {
    if c.len() >= 3 {
        let fit = fit_monotone(c)?;
        return Ok(Box::new(move |x| fit.eval(x)));
    }
    let s = c.samples();
    Ok(Box::new(move |x| match s {
        [a] => a.ogcd,
        [a, b] => {
            let t = ((x - a.length_mm) / (b.length_mm - a.length_mm)).clamp(0.0, 1.0);
            a.ogcd + t * (b.ogcd - a.ogcd)
        }
        _ => unreachable!(),
    }))
}

/// Points of `c` on the 0.5 mm grid over its own length range, with unit
/// weights on the (mm, ΔE) axes.
pub fn resample(c: &CharacteristicCurve) -> Result<Vec<[f64; 2]>> {
    let f = curve_function(c)?;
    let s = c.samples();
    let grid = comparison_grid(s[0].length_mm, s[s.len() - 1].length_mm, GRID_STEP_MM);
    Ok(grid.into_iter().map(|x| [x, f(x)]).collect())
}

pub fn frechet_distance(a: &CharacteristicCurve, b: &CharacteristicCurve) -> Result<f64> {
    discrete_frechet(&resample(a)?, &resample(b)?)
}

/// Largest |a − b| on the common grid and the smallest length attaining it.
pub fn max_error_on_grid(a: &dyn Fn(f64) -> f64, b: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if lo > hi {
        return Err(Error::DisjointRanges);
    }
    let mut best = (-1.0, lo);
    for x in comparison_grid(lo, hi, GRID_STEP_MM) {
        let e = (a(x) - b(x)).abs();
        if e > best.0 {
            best = (e, x);
        }
    }
    Ok(best)
}

pub fn max_ogcd_error(a: &CharacteristicCurve, b: &CharacteristicCurve) -> Result<(f64, f64)> {
    let (fa, fb) = (curve_function(a)?, curve_function(b)?);
    let (sa, sb) = (a.samples(), b.samples());
    let lo = sa[0].length_mm.max(sb[0].length_mm);
    let hi = sa[sa.len() - 1].length_mm.min(sb[sb.len() - 1].length_mm);
    max_error_on_grid(&fa, &fb, lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveComparison {
    pub frechet: f64,
    pub max_error: f64,
    pub max_error_length_mm: f64,
}

pub fn compare(a: &CharacteristicCurve, b: &CharacteristicCurve) -> Result<CurveComparison> {
    let (max_error, max_error_length_mm) = max_ogcd_error(a, b)?;
    Ok(CurveComparison {
        frechet: frechet_distance(a, b)?,
        max_error,
        max_error_length_mm,
    })
}

/// Coefficient of determination of the least-squares line through (x, y).
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy == 0.0 || sxx == 0.0 {
        return if syy == 0.0 { 1.0 } else { 0.0 };
    }
    sxy * sxy / (sxx * syy)
}

pub const LEVELS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    /// Grass length in millimeters for each 8-bit level.
    pub entries: Vec<f64>,
    pub r2_before: f64,
    pub r2_after: f64,
}

impl CalibrationTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["level", "length_mm"])?;
        for (k, l) in self.entries.iter().enumerate() {
            w.write_record([k.to_string(), l.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Level → length table making the fitted OGCD linear in level.
///
/// Before calibration, level k drives the length linearly from the minimum
/// to the maximum of the curve.
pub fn calibrate_fit(fit: &MonotoneFit) -> Result<CalibrationTable> {
    let (ylo, yhi) = fit.range();
    if yhi - ylo <= 0.0 {
        return Err(Error::ZeroRange);
    }
    let (xlo, xhi) = fit.domain();
    let top = (LEVELS - 1) as f64;
    let levels: Vec<f64> = (0..LEVELS).map(|k| k as f64).collect();
    let before: Vec<f64> = levels.iter().map(|k| fit.eval(xlo + k / top * (xhi - xlo))).collect();
    let entries = levels
        .iter()
        .map(|k| fit.inverse(ylo + k / top * (yhi - ylo)))
        .collect::<Result<Vec<_>>>()?;
    let after: Vec<f64> = entries.iter().map(|&x| fit.eval(x)).collect();
    Ok(CalibrationTable {
        entries,
        r2_before: r_squared(&levels, &before),
        r2_after: r_squared(&levels, &after),
    })
}

pub fn calibrate_8bit(curve: &CharacteristicCurve) -> Result<CalibrationTable> {
    calibrate_fit(&fit_monotone(curve)?)
}

/// Mean over lengths of the sample standard deviation of OGCD across trials.
pub fn repeatability(trials: &[CharacteristicCurve]) -> Result<f64> {
    if trials.len() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: trials.len(),
        });
    }
    let lengths = trials[0].lengths();
    if trials.iter().any(|t| t.lengths() != lengths) {
        return Err(Error::InvalidCurve("trials sampled at different lengths".into()));
    }
    let n = trials.len() as f64;
    let mut total = 0.0;
    for i in 0..lengths.len() {
        let v: Vec<f64> = trials.iter().map(|t| t.samples()[i].ogcd).collect();
        let m = v.iter().sum::<f64>() / n;
        total += (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    }
    Ok(total / lengths.len() as f64)
}

/// Grid spacing and dead-band used to count inflections.
pub const INFLECTION_STEP_MM: f64 = 2.0;
pub const INFLECTION_DEADBAND: f64 = 0.02;

/// Curvature sign changes of the fit, sampled every 2 mm. Second
/// differences within 2% of the OGCD range count as straight.
pub fn count_inflections(fit: &MonotoneFit) -> usize {
    let (lo, hi) = fit.domain();
    let (ylo, yhi) = fit.range();
    let band = INFLECTION_DEADBAND * (yhi - ylo);
    let n = ((hi - lo) / INFLECTION_STEP_MM).floor() as usize;
    let ys: Vec<f64> = (0..=n).map(|i| fit.eval(lo + i as f64 * INFLECTION_STEP_MM)).collect();
    let mut last = 0i8;
    let mut changes = 0;
    for w in ys.windows(3) {
        let s = w[2] - 2.0 * w[1] + w[0];
        let sign = if s > band {
            1
        } else if s < -band {
            -1
        } else {
            0
        };
        if sign != 0 {
            if last != 0 && sign != last {
                changes += 1;
            }
            last = sign;
        }
    }
    changes
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lab(l: f64) -> Color {
        Color::lab(l, 0.0, 0.0, WhitePoint::D50)
    }

    fn curve(points: &[(f64, f64)]) -> CharacteristicCurve {
        let samples = points.iter().map(|&(length_mm, ogcd)| CurveSample { length_mm, ogcd }).collect();
        let labs = points.iter().map(|_| lab(50.0)).collect();
        CharacteristicCurve::new(samples, labs, CurveSource::Virtual, CurveMeta::default()).unwrap()
    }

    fn brute_isotonic(ys: &[f64]) -> Vec<f64> {
        // Minimum over all partitions into contiguous blocks whose means
        // are non-decreasing of the squared error.
        let n = ys.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0..(1u32 << (n - 1)) {
            let mut fit = Vec::with_capacity(n);
            let mut start = 0;
            let mut means = Vec::new();
            for i in 0..n {
                if i == n - 1 || mask & (1 << i) != 0 {
                    let block = &ys[start..=i];
                    let m = block.iter().sum::<f64>() / block.len() as f64;
                    means.push(m);
                    fit.extend(std::iter::repeat_n(m, block.len()));
                    start = i + 1;
                }
            }
            if means.windows(2).any(|w| w[1] < w[0]) {
                continue;
            }
            let err: f64 = ys.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(e, _)| err < *e - 1e-12) {
                best = Some((err, fit));
            }
        }
        best.unwrap().1
    }

    fn brute_frechet(p: &[[f64; 2]], q: &[[f64; 2]], i: usize, j: usize) -> f64 {
        let d = (p[i][0] - q[j][0]).hypot(p[i][1] - q[j][1]);
        match (i, j) {
            (0, 0) => d,
            (0, _) => brute_frechet(p, q, 0, j - 1).max(d),
            (_, 0) => brute_frechet(p, q, i - 1, 0).max(d),
            _ => brute_frechet(p, q, i - 1, j)
                .min(brute_frechet(p, q, i - 1, j - 1))
                .min(brute_frechet(p, q, i, j - 1))
                .max(d),
        }
    }

    #[test]
    fn from_labs_starts_at_zero() {
        let c = CharacteristicCurve::from_labs(
            &[0.0, 1.0, 2.0],
            vec![lab(50.0), lab(55.0), lab(60.0)],
            CurveSource::Virtual,
            CurveMeta::default(),
        )
        .unwrap();
        assert_eq!(c.samples()[0].ogcd, 0.0);
        assert!(c.samples()[2].ogcd > c.samples()[1].ogcd);
    }

    #[test]
    fn curve_validation() {
        let s = |l, o| CurveSample { length_mm: l, ogcd: o };
        let mk = |v: Vec<CurveSample>| {
            let labs = v.iter().map(|_| lab(50.0)).collect();
            CharacteristicCurve::new(v, labs, CurveSource::Real, CurveMeta::default())
        };
        assert!(matches!(mk(vec![]), Err(Error::EmptyCurve)));
        assert!(mk(vec![s(0.0, 1.0)]).is_err());
        assert!(mk(vec![s(0.0, 0.0), s(0.0, 1.0)]).is_err());
        assert!(mk(vec![s(0.0, 0.0), s(1.0, -1.0)]).is_err());
        assert!(mk(vec![s(0.0, 0.0), s(1.0, 2.0)]).is_ok());
    }

    #[test]
    fn csv_round_trips() {
        let c = CharacteristicCurve::from_labs(
            &[0.0, 0.5, 1.25],
            vec![lab(40.0), Color::lab(41.0, 3.5, -2.0, WhitePoint::D50), lab(47.123456789)],
            CurveSource::Virtual,
            CurveMeta::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("length_mm,ogcd,L,a,b\n"));
        let back = CharacteristicCurve::read_csv(&buf[..], CurveSource::Virtual, CurveMeta::default()).unwrap();
        assert_eq!(back, c);
        let any = CharacteristicCurve::read_any_csv(&buf[..], CurveSource::Virtual, CurveMeta::default()).unwrap();
        assert_eq!(any, c);
    }

    #[test]
    fn rgb_csv_ingestion() {
        let text = "length_mm,R,G,B\n0,0.2,0.2,0.1\n1,0.2,0.25,0.1\n2,0.15,0.3,0.1\n";
        let c = CharacteristicCurve::read_any_csv(text.as_bytes(), CurveSource::Real, CurveMeta::default()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.samples()[0].ogcd, 0.0);
        let want = ciede2000(
            &Color::prophoto(0.2, 0.2, 0.1).convert(Space::Cielab, WhitePoint::D50).unwrap(),
            &Color::prophoto(0.15, 0.3, 0.1).convert(Space::Cielab, WhitePoint::D50).unwrap(),
        )
        .unwrap();
        assert_eq!(c.samples()[2].ogcd, want);
        assert!(CharacteristicCurve::read_any_csv("length_mm,R\n0,1\n".as_bytes(), CurveSource::Real, CurveMeta::default()).is_err());
    }

    #[test]
    fn identity_matrix_changes_nothing() {
        let rgb = [Color::prophoto(0.2, 0.3, 0.1), Color::prophoto(0.4, 0.1, 0.05), Color::prophoto(1.3, 0.7, 0.2)];
        let m = ColorCorrectionMatrix::identity();
        let a = CharacteristicCurve::from_prophoto(&[0.0, 1.0, 2.0], &rgb, Some(&m), CurveSource::Virtual, CurveMeta::default()).unwrap();
        let b = CharacteristicCurve::from_prophoto(&[0.0, 1.0, 2.0], &rgb, None, CurveSource::Virtual, CurveMeta::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pava_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.random_range(1..=8);
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let a = isotonic(&ys);
            let b = brute_isotonic(&ys);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9, "{ys:?}: {a:?} vs {b:?}");
            }
        }
        assert_eq!(isotonic(&[0.0, 2.0, 1.0, 3.0]), vec![0.0, 1.5, 1.5, 3.0]);
    }

    #[test]
    fn monotone_fit_interpolates_monotone_data() {
        let xs = [0.0, 1.0, 2.5, 3.0, 5.0];
        let ys = [0.0, 0.1, 2.0, 2.1, 7.0];
        let f = MonotoneFit::new(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(f.eval(*x), *y);
        }
        let mut prev = f64::MIN;
        for i in 0..=500 {
            let v = f.eval(5.0 * i as f64 / 500.0);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
        for y in [0.0, 0.05, 1.0, 2.05, 6.9, 7.0] {
            let x = f.inverse(y).unwrap();
            assert!((f.eval(x) - y).abs() < 1e-9, "{y} -> {x}");
        }
        assert!(f.inverse(7.5).is_err());
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(f.inverse(*y).unwrap(), *x);
        }
    }

    #[test]
    fn monotone_fit_flattens_dip_and_handles_constants() {
        let f = MonotoneFit::new(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!(f.eval(1.0), 1.5);
        assert_eq!(f.eval(2.0), 1.5);
        assert_eq!(f.eval(1.5), 1.5);
        let c = MonotoneFit::new(&[0.0, 1.0, 2.0], &[4.0, 4.0, 4.0]).unwrap();
        for x in [-1.0, 0.3, 1.7, 9.0] {
            assert_eq!(c.eval(x), 4.0);
        }
        assert!(matches!(MonotoneFit::new(&[0.0, 1.0], &[0.0, 1.0]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn frechet_matches_recursive_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let pts = |rng: &mut ChaCha8Rng, n: usize| {
                (0..n).map(|_| [rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)]).collect::<Vec<_>>()
            };
            let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=8));
            let p = pts(&mut rng, n);
            let q = pts(&mut rng, m);
            assert_eq!(discrete_frechet(&p, &q).unwrap(), brute_frechet(&p, &q, p.len() - 1, q.len() - 1));
        }
        assert_eq!(discrete_frechet(&[[0.0, 0.0]], &[[3.0, 4.0]]).unwrap(), 5.0);
        assert!(discrete_frechet(&[], &[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn frechet_of_curves() {
        let a = curve(&[(0.0, 0.0), (5.0, 3.0), (10.0, 9.0), (20.0, 12.0)]);
        assert_eq!(frechet_distance(&a, &a).unwrap(), 0.0);
        let p = curve(&[(2.0, 0.0)]);
        let q = curve(&[(5.0, 0.0)]);
        assert_eq!(frechet_distance(&p, &q).unwrap(), 3.0);
        assert_eq!(resample(&a).unwrap().len(), 41);
    }

    #[test]
    fn max_error_oracle() {
        let a = curve(&[(0.0, 0.0), (5.0, 3.0), (10.0, 9.0), (20.0, 12.0)]);
        assert_eq!(max_ogcd_error(&a, &a).unwrap(), (0.0, 0.0));

        let fa = MonotoneFit::new(&[0.0, 5.0, 10.0, 20.0], &[0.0, 3.0, 9.0, 12.0]).unwrap();
        let fb = MonotoneFit::new(&[0.0, 5.0, 10.0, 20.0], &[2.5, 5.5, 11.5, 14.5]).unwrap();
        let (e, at) = max_error_on_grid(&|x| fa.eval(x), &|x| fb.eval(x), 0.0, 20.0).unwrap();
        assert!((e - 2.5).abs() < 1e-12);
        let first = comparison_grid(0.0, 20.0, GRID_STEP_MM)
            .into_iter()
            .find(|&x| ((fb.eval(x) - fa.eval(x)).abs() - e).abs() == 0.0)
            .unwrap();
        assert_eq!(at, first);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let ys = |rng: &mut ChaCha8Rng| {
                let mut acc = 0.0;
                let mut v = vec![(0.0, 0.0)];
                for i in 1..=10 {
                    acc += rng.random_range(0.0..3.0);
                    v.push((2.0 * i as f64, acc));
                }
                v
            };
            let a = curve(&ys(&mut rng));
            let b = curve(&ys(&mut rng));
            let (fa, fb) = (fit_monotone(&a).unwrap(), fit_monotone(&b).unwrap());
            let mut best = (-1.0, 0.0);
            for i in 0..=40 {
                let x = i as f64 * 0.5;
                let e = (fa.eval(x) - fb.eval(x)).abs();
                if e > best.0 {
                    best = (e, x);
                }
            }
            assert_eq!(max_ogcd_error(&a, &b).unwrap(), best);
        }

        let c = curve(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        let d = curve(&[(5.0, 0.0), (6.0, 1.0), (7.0, 2.0)]);
        assert!(matches!(max_ogcd_error(&c, &d), Err(Error::DisjointRanges)));
    }

    #[test]
    fn linear_curve_calibrates_linearly() {
        let pts: Vec<(f64, f64)> = (0..=20).map(|i| (i as f64, i as f64)).collect();
        let t = calibrate_8bit(&curve(&pts)).unwrap();
        assert_eq!(t.entries.len(), 256);
        for (k, e) in t.entries.iter().enumerate() {
            assert!((e - 20.0 * k as f64 / 255.0).abs() < 1e-9);
        }
        assert!((t.r2_after - 1.0).abs() < 1e-12);
        assert!((t.r2_before - 1.0).abs() < 1e-12);
    }

    #[test]
    fn s_curve_calibration_improves_linearity() {
        let pts: Vec<(f64, f64)> = (0..=20)
            .map(|i| {
                let x = i as f64;
                (x, 17.0 / (1.0 + (-(x - 11.0) / 1.8).exp()) - 17.0 / (1.0 + (11.0f64 / 1.8).exp()))
            })
            .collect();
        let c = curve(&pts);
        let t = calibrate_8bit(&c).unwrap();
        assert!(t.r2_after > t.r2_before);
        assert!(t.r2_after >= 0.99);
        assert_eq!(t.entries[0], 0.0);
        assert!(t.entries.windows(2).all(|w| w[1] >= w[0]));
        let fit = fit_monotone(&c).unwrap();
        assert_eq!(fit.eval(t.entries[255]), fit.range().1);
        assert_eq!(t.entries[255], 20.0);
        assert_eq!(count_inflections(&fit), 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 257);
    }

    #[test]
    fn calibration_rejects_flat_curve() {
        let c = curve(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!(matches!(calibrate_8bit(&c), Err(Error::ZeroRange)));
    }

    #[test]
    fn repeatability_of_identical_and_differing_trials() {
        let a = curve(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(repeatability(&[a.clone(), a.clone(), a.clone()]).unwrap(), 0.0);
        let b = curve(&[(0.0, 0.0), (1.0, 3.0), (2.0, 2.0)]);
        // std of {1, 3} is √2 at one length out of three.
        assert!((repeatability(&[a.clone(), b]).unwrap() - 2f64.sqrt() / 3.0).abs() < 1e-12);
        assert!(repeatability(&[a]).is_err());
    }

    #[test]
    fn inflections_of_simple_shapes() {
        let xs: Vec<f64> = (0..=20).map(|i| i as f64).collect();
        let line = MonotoneFit::new(&xs, &xs).unwrap();
        assert_eq!(count_inflections(&line), 0);
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert_eq!(count_inflections(&MonotoneFit::new(&xs, &ys).unwrap()), 0);
        let ys: Vec<f64> = xs.iter().map(|x| (x - 10.0).powi(3) + 1000.0).collect();
        assert_eq!(count_inflections(&MonotoneFit::new(&xs, &ys).unwrap()), 1);
    }
}
