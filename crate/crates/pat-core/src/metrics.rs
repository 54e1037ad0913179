//! Image quality measures and resolution fits.
//!
//! Images are two dimensional [`ScalarField`]s indexed `[row, col]` with the
//! last axis contiguous.

use crate::error::{PatError, Result};
use crate::field::ScalarField;
use nalgebra::{DMatrix, DVector};

/// Pearson correlation over the selected pixels (all pixels when `mask` is
/// `None`).
pub fn correlation_coefficient(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(PatError::Parameter("images differ in size".into()));
    }
    if let Some(m) = mask {
        if m.len() != a.len() {
            return Err(PatError::Parameter("mask differs in size from the images".into()));
        }
    }
    let pick = |i: usize| mask.is_none_or(|m| m[i]);
    let idx: Vec<usize> = (0..a.len()).filter(|&i| pick(i)).collect();
    if idx.len() < 2 {
        return Err(PatError::Precondition("correlation needs at least two pixels".into()));
    }
    let n = idx.len() as f64;
    let ma = idx.iter().map(|&i| a[i]).sum::<f64>() / n;
    let mb = idx.iter().map(|&i| b[i]).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &i in &idx {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(PatError::Numerical("correlation undefined for a constant image".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Half-open pixel rectangle `[start, end)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub start: [usize; 2],
    pub end: [usize; 2],
}

impl Rect {
    pub fn full(dims: [usize; 2]) -> Self {
        Rect { start: [0, 0], end: dims }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.end[0] - self.start[0], self.end[1] - self.start[1]]
    }

    pub fn area(&self) -> usize {
        let s = self.shape();
        s[0] * s[1]
    }
}

fn dims2(img: &ScalarField) -> Result<[usize; 2]> {
    match img.dims.as_slice() {
        &[r, c] => Ok([r, c]),
        _ => Err(PatError::Parameter("expected a two dimensional image".into())),
    }
}

fn check_rect(dims: [usize; 2], rect: &Rect) -> Result<()> {
    if rect.end[0] > dims[0] || rect.end[1] > dims[1] || rect.start[0] >= rect.end[0] || rect.start[1] >= rect.end[1] {
        return Err(PatError::Parameter("rectangle outside the image".into()));
    }
    Ok(())
}

/// Sum of squared Sobel responses over the pixels of `rect` whose 3x3
/// neighbourhood lies inside `rect`.
pub fn tenenbaum_sharpness(img: &ScalarField, rect: &Rect) -> Result<f64> {
    let dims = dims2(img)?;
    check_rect(dims, rect)?;
    let [h, w] = rect.shape();
    if h < 3 || w < 3 {
        return Err(PatError::Parameter("sharpness region must be at least 3x3".into()));
    }
    let at = |r: usize, c: usize| img.data[r * dims[1] + c];
    let mut sum = 0.0;
    for r in rect.start[0] + 1..rect.end[0] - 1 {
        for c in rect.start[1] + 1..rect.end[1] - 1 {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            sum += gx * gx + gy * gy;
        }
    }
    Ok(sum)
}

/// [`tenenbaum_sharpness`] divided by the pixel count of `rect`.
pub fn tenenbaum_normalized(img: &ScalarField, rect: &Rect) -> Result<f64> {
    Ok(tenenbaum_sharpness(img, rect)? / rect.area() as f64)
}

/// Copy of the pixels in `rect`, affinely mapped so their range is `[0, 1]`.
pub fn normalize_min_max(img: &ScalarField, rect: &Rect) -> Result<ScalarField> {
    let dims = dims2(img)?;
    check_rect(dims, rect)?;
    let [h, w] = rect.shape();
    let mut data = Vec::with_capacity(h * w);
    for r in rect.start[0]..rect.end[0] {
        data.extend_from_slice(&img.data[r * dims[1] + rect.start[1]..r * dims[1] + rect.end[1]]);
    }
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        data.iter_mut().for_each(|v| *v = 0.0);
    } else {
        data.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
    let origin = (0..2).map(|a| img.origin[a] + rect.start[a] as f64 * img.spacing[a]).collect();
    Ok(ScalarField { dims: vec![h, w], spacing: img.spacing.clone(), origin, data })
}

/// Maximum along `axis` of a three dimensional volume.
pub fn mip(vol: &ScalarField, axis: usize) -> Result<ScalarField> {
    if vol.ndim() != 3 || axis > 2 {
        return Err(PatError::Parameter("projection needs a 3D volume and axis 0..=2".into()));
    }
    let d = &vol.dims;
    let keep: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let (n0, n1) = (d[keep[0]], d[keep[1]]);
    let strides = [d[1] * d[2], d[2], 1];
    let mut data = vec![f64::NEG_INFINITY; n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            let base = i * strides[keep[0]] + j * strides[keep[1]];
            data[i * n1 + j] = (0..d[axis])
                .map(|k| vol.data[base + k * strides[axis]])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(ScalarField {
        dims: vec![n0, n1],
        spacing: keep.iter().map(|&a| vol.spacing[a]).collect(),
        origin: keep.iter().map(|&a| vol.origin[a]).collect(),
        data,
    })
}

/// Disc in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub center: [f64; 2],
    pub diameter: f64,
}

impl Disc {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        let (dr, dc) = (r as f64 - self.center[0], c as f64 - self.center[1]);
        dr * dr + dc * dc <= 0.25 * self.diameter * self.diameter
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoiRule {
    /// Pixels at or above this fraction of the model maximum.
    Threshold(f64),
    /// The brightest pixels, ties broken by raster order.
    Count(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiMask {
    pub dims: [usize; 2],
    pub selected: Vec<bool>,
}

impl RoiMask {
    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    /// Tight bounding box of the selected pixels.
    pub fn bounding_box(&self) -> Result<Rect> {
        let mut lo = [usize::MAX; 2];
        let mut hi = [0usize; 2];
        for (i, _) in self.selected.iter().enumerate().filter(|(_, s)| **s) {
            let rc = [i / self.dims[1], i % self.dims[1]];
            for a in 0..2 {
                lo[a] = lo[a].min(rc[a]);
                hi[a] = hi[a].max(rc[a] + 1);
            }
        }
        if lo[0] == usize::MAX {
            return Err(PatError::Validation("empty region of interest".into()));
        }
        Ok(Rect { start: lo, end: hi })
    }
}

/// Selects pixels of `model` inside `disc` by intensity.
pub fn roi_by_intensity(model: &ScalarField, disc: Option<Disc>, rule: RoiRule) -> Result<RoiMask> {
    let dims = dims2(model)?;
    if model.data.iter().any(|v| !v.is_finite()) {
        return Err(PatError::Validation("model image has non-finite values".into()));
    }
    let inside = |i: usize| disc.is_none_or(|d| d.contains(i / dims[1], i % dims[1]));
    let mut selected = vec![false; model.data.len()];
    match rule {
        RoiRule::Threshold(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(PatError::Parameter("threshold fraction must lie in [0, 1]".into()));
            }
            let max = model.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (i, s) in selected.iter_mut().enumerate() {
                *s = inside(i) && model.data[i] >= f * max;
            }
        }
        RoiRule::Count(k) => {
            let mut idx: Vec<usize> = (0..model.data.len()).filter(|&i| inside(i)).collect();
            idx.sort_by(|&a, &b| model.data[b].total_cmp(&model.data[a]).then(a.cmp(&b)));
            for &i in idx.iter().take(k) {
                selected[i] = true;
            }
        }
    }
    let mask = RoiMask { dims, selected };
    if mask.count() == 0 {
        return Err(PatError::Validation("empty region of interest".into()));
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Full width at half maximum.
    pub w: f64,
    pub center: f64,
    pub a0: f64,
    /// Baseline of the edge model.
    pub i0: Option<f64>,
    /// Euclidean norm of the residual.
    pub residual: f64,
    pub iterations: usize,
    /// Residual norm after every accepted step, starting with the initial guess.
    pub history: Vec<f64>,
}

const MAX_ITER: usize = 200;

/// Model with parameters `[w, center, linear...]`, linear in the tail.
trait Profile {
    const LINEAR: usize;
    fn basis(&self, x: f64, w: f64, c: f64) -> [f64; 2];
    /// Partial derivatives of the model with respect to `w` and `center`.
    fn nonlinear_grad(&self, x: f64, p: &[f64]) -> [f64; 2];

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let b = self.basis(x, p[0], p[1]);
        (0..Self::LINEAR).map(|k| b[k] * p[2 + k]).sum()
    }
}

struct Lorentzian;

impl Profile for Lorentzian {
    const LINEAR: usize = 1;
    fn basis(&self, z: f64, w: f64, z0: f64) -> [f64; 2] {
        let d = w * w + 4.0 * (z - z0) * (z - z0);
        [2.0 * w / (std::f64::consts::PI * d), 0.0]
    }
    fn nonlinear_grad(&self, z: f64, p: &[f64]) -> [f64; 2] {
        let (w, z0, a) = (p[0], p[1], p[2]);
        let u = z - z0;
        let d = w * w + 4.0 * u * u;
        let k = 2.0 * a / (std::f64::consts::PI * d * d);
        [k * (4.0 * u * u - w * w), k * w * 8.0 * u]
    }
}

struct EdgeArctan;

impl Profile for EdgeArctan {
    const LINEAR: usize = 2;
    fn basis(&self, x: f64, w: f64, x0: f64) -> [f64; 2] {
        [((x - x0) / (0.5 * w)).atan() / std::f64::consts::PI + 0.5, 1.0]
    }
    fn nonlinear_grad(&self, x: f64, p: &[f64]) -> [f64; 2] {
        let (w, x0, a) = (p[0], p[1], p[2]);
        let u = 2.0 * (x - x0) / w;
        let du = a / (std::f64::consts::PI * (1.0 + u * u));
        [du * (-u / w), du * (-2.0 / w)]
    }
}

fn residual_norm<P: Profile>(m: &P, x: &[f64], y: &[f64], p: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&xi, &yi)| (m.eval(xi, p) - yi).powi(2)).sum::<f64>().sqrt()
}

/// Least squares amplitudes for fixed width and centre.
fn linear_solve<P: Profile>(m: &P, x: &[f64], y: &[f64], w: f64, c: f64) -> Option<Vec<f64>> {
    let k = P::LINEAR;
    let a = DMatrix::from_fn(x.len(), k, |i, j| m.basis(x[i], w, c)[j]);
    let b = DVector::from_column_slice(y);
    let sol = a.svd(true, true).solve(&b, 1e-14).ok()?;
    Some(sol.iter().cloned().collect())
}

fn check_samples(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(PatError::Parameter("positions and intensities differ in length".into()));
    }
    if x.len() < 5 {
        return Err(PatError::Precondition("fits need at least five samples".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(PatError::Validation("non-finite samples".into()));
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let step = sorted.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    if !(hi > lo) || !step.is_finite() {
        return Err(PatError::Validation("degenerate sample positions".into()));
    }
    Ok((hi - lo, step))
}

fn fit<P: Profile>(m: &P, x: &[f64], y: &[f64]) -> Result<FitResult> {
    let (span, step) = check_samples(x, y)?;
    let (lo, hi) = (
        x.iter().cloned().fold(f64::INFINITY, f64::min),
        x.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let mut best: Option<(f64, Vec<f64>)> = None;
    let widths: Vec<f64> = (0..48).map(|i| 0.25 * step * (16.0 * span / step).powf(i as f64 / 47.0)).collect();
    let centers: Vec<f64> = (0..=64).map(|i| lo + (hi - lo) * i as f64 / 64.0).collect();
    for &w in &widths {
        for &c in &centers {
            if let Some(lin) = linear_solve(m, x, y, w, c) {
                let mut p = vec![w, c];
                p.extend(lin);
                let r = residual_norm(m, x, y, &p);
                if best.as_ref().is_none_or(|(br, _)| r < *br) {
                    best = Some((r, p));
                }
            }
        }
    }
    let (mut cost, mut p) = best.ok_or_else(|| PatError::Validation("degenerate data".into()))?;
    let scale: Vec<f64> = {
        let amp = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut s = vec![span, span];
        s.extend(p[2..].iter().map(|v| v.abs().max(amp * span)));
        s
    };
    let np = p.len();
    let mut lambda = 1e-3;
    let mut history = vec![cost];
    let floor = 1e-15 * y.iter().map(|v| v * v).sum::<f64>().sqrt();
    for iter in 1..=MAX_ITER {
        let jac = DMatrix::from_fn(x.len(), np, |i, j| {
            if j < 2 {
                m.nonlinear_grad(x[i], &p)[j]
            } else {
                m.basis(x[i], p[0], p[1])[j - 2]
            }
        });
        let r = DVector::from_fn(x.len(), |i, _| y[i] - m.eval(x[i], &p));
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * r;
        loop {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(dp) = a.lu().solve(&g) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    return Err(PatError::Numerical("fit normal equations are singular".into()));
                }
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(dp.iter()).map(|(a, b)| a + b).collect();
            let tc = if trial[0] > 0.0 { residual_norm(m, x, y, &trial) } else { f64::INFINITY };
            if tc <= cost {
                let small = dp.iter().zip(&scale).all(|(d, s)| d.abs() <= 1e-6 * s);
                p = trial;
                cost = tc;
                history.push(cost);
                lambda = (lambda * 0.3).max(1e-12);
                if small || cost <= floor {
                    return Ok(finish::<P>(p, cost, iter, history));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // no descent direction left: at a minimum to working precision
                return Ok(finish::<P>(p, cost, iter, history));
            }
        }
    }
    Err(PatError::Numerical(format!("fit did not converge in {MAX_ITER} iterations")))
}

fn finish<P: Profile>(p: Vec<f64>, residual: f64, iterations: usize, history: Vec<f64>) -> FitResult {
    FitResult {
        w: p[0],
        center: p[1],
        a0: p[2],
        i0: (P::LINEAR == 2).then(|| p[3]),
        residual,
        iterations,
        history,
    }
}

/// Fits `I(z) = 2 a0 w / (pi (w^2 + 4 (z - z0)^2))`.
pub fn fit_lorentzian_lsf(z: &[f64], intensity: &[f64]) -> Result<FitResult> {
    fit(&Lorentzian, z, intensity)
}

/// Fits `I(x) = I0 + a0 (atan((x - x0) / (w / 2)) / pi + 1/2)`.
pub fn fit_esf(x: &[f64], intensity: &[f64]) -> Result<FitResult> {
    fit(&EdgeArctan, x, intensity)
}

/// `n` consecutive samples of `profile` around its maximum, as
/// `(positions, values)` with positions `origin + i * spacing`.
pub fn window_around_max(profile: &[f64], n: usize, origin: f64, spacing: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n > profile.len() || n == 0 {
        return Err(PatError::Parameter("window longer than the profile".into()));
    }
    let imax = (0..profile.len()).max_by(|&a, &b| profile[a].total_cmp(&profile[b])).unwrap_or(0);
    let start = imax.saturating_sub((n - 1) / 2).min(profile.len() - n);
    let z = (start..start + n).map(|i| origin + i as f64 * spacing).collect();
    Ok((z, profile[start..start + n].to_vec()))
}
