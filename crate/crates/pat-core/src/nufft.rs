//! Kaiser-Bessel gridding for non-uniform discrete Fourier transforms.
//!
//! Two directions are provided. `nufft_ner` evaluates
//! `sum_n u_n exp(-2 pi i kappa n / N)` at arbitrary real frequencies, and
//! `nufft_ned` evaluates `sum_m v_m exp(-2 pi i j.x_m / N)` on the centred
//! integer frequency grid for arbitrary sample positions. Both share one
//! window pair: `psi(theta) = I0(beta sqrt(alpha^2 - theta^2))` on
//! `|theta| <= alpha` and its Fourier integral `psi_hat`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{PatError, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Largest accepted magnitude of a frequency or position argument.
pub const MAX_ARGUMENT: f64 = 1e12;

/// Window parameters.
///
/// `c` is the oversampling factor, `alpha` the half-width of the window in
/// angle, `k` the number of oversampled neighbours used on each side and
/// `beta` the Kaiser-Bessel shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub c: f64,
    pub alpha: f64,
    pub k: usize,
    pub beta: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec::kaiser_bessel(2.0, 6)
    }
}

impl WindowSpec {
    /// Default parameterisation for oversampling `c` and half-width `k`.
    ///
    /// The support is taken just inside the admissible bound
    /// `pi (2c - 1)` and the shape is `k / c`, so that the product
    /// `alpha * beta` equals the usual gridding shape `pi k (2 - 1/c)`.
    pub fn kaiser_bessel(c: f64, k: usize) -> Self {
        let alpha = 0.99 * std::f64::consts::PI * (2.0 * c - 1.0);
        WindowSpec { c, alpha, k, beta: k as f64 / c }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pi = std::f64::consts::PI;
        if !(self.c.is_finite() && self.c > 1.0) {
            return Err(PatError::Parameter(format!("oversampling c = {} must exceed 1", self.c)));
        }
        if !(self.alpha > self.c && self.alpha < pi * (2.0 * self.c - 1.0)) {
            return Err(PatError::Parameter(format!(
                "window support {} outside ({}, {})",
                self.alpha,
                self.c,
                pi * (2.0 * self.c - 1.0)
            )));
        }
        if self.k < 1 {
            return Err(PatError::Parameter("half-width k must be at least 1".into()));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(PatError::Parameter(format!("shape beta = {} must be positive", self.beta)));
        }
        Ok(())
    }
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < 1e-17 * sum {
            return sum;
        }
        k += 1.0;
    }
}

/// Window value at angle `theta`.
pub fn window_eval(spec: &WindowSpec, theta: f64) -> f64 {
    let r = spec.alpha * spec.alpha - theta * theta;
    if r < 0.0 {
        0.0
    } else {
        bessel_i0(spec.beta * r.sqrt())
    }
}

/// `integral psi(theta) exp(i x theta) dtheta` in closed form.
pub fn window_ft_eval(spec: &WindowSpec, x: f64) -> f64 {
    let a = spec.alpha;
    let s2 = spec.beta * spec.beta - x * x;
    if s2.abs() < 1e-12 {
        // series around the sinh/sin switch: 2a (1 + (a s)^2 / 6)
        return 2.0 * a * (1.0 + a * a * s2 / 6.0);
    }
    if s2 > 0.0 {
        let s = s2.sqrt();
        2.0 * (a * s).sinh() / s
    } else {
        let s = (-s2).sqrt();
        2.0 * (a * s).sin() / s
    }
}

fn smooth(mut n: usize) -> bool {
    for p in [2, 3, 5] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

/// Smallest even integer `>= c n` whose prime factors are 2, 3 and 5.
pub fn oversampled_len(n: usize, c: f64) -> usize {
    let mut l = (c * n as f64 - 1e-9).ceil().max(2.0) as usize;
    if l % 2 == 1 {
        l += 1;
    }
    while !smooth(l) {
        l += 2;
    }
    l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    }
}

/// One-dimensional transform along `axis` of a C-ordered array.
///
/// With `centered` the index `i` along the axis stands for `i - n/2` on both
/// sides of the transform. The forward direction is unnormalised, the inverse
/// carries `1/n`.
pub fn fft_axis(data: &mut [Complex64], dims: &[usize], axis: usize, dir: Direction, centered: bool) {
    let n = dims[axis];
    if n == 0 || data.is_empty() {
        return;
    }
    let inner: usize = dims[axis + 1..].iter().product();
    let fft = plan(n, dir);
    let scale = if dir == Direction::Inverse { 1.0 / n as f64 } else { 1.0 };
    let run = |lines: &mut [Complex64]| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        if centered {
            for line in lines.chunks_mut(n) {
                line.rotate_left(n / 2);
            }
        }
        fft.process_with_scratch(lines, &mut scratch);
        for line in lines.chunks_mut(n) {
            if centered {
                line.rotate_right(n - n / 2);
            }
            if scale != 1.0 {
                for v in line.iter_mut() {
                    *v *= scale;
                }
            }
        }
    };
    let batch = n * (4096 / n).max(1);
    if inner == 1 {
        data.par_chunks_mut(batch).for_each(run);
        return;
    }
    data.par_chunks_mut(n * inner).for_each(|block| {
        let mut buf = vec![Complex64::new(0.0, 0.0); n * inner];
        for i in 0..n {
            for q in 0..inner {
                buf[q * n + i] = block[i * inner + q];
            }
        }
        buf.par_chunks_mut(batch).for_each(run);
        for i in 0..n {
            for q in 0..inner {
                block[i * inner + q] = buf[q * n + i];
            }
        }
    });
}

/// Centred transform over every axis of a grid with even dimensions.
pub fn fft_centered(data: &mut [Complex64], dims: &[usize], dir: Direction) -> Result<()> {
    if dims.iter().any(|&n| n % 2 == 1) {
        return Err(PatError::Precondition("centred transforms need even dimensions".into()));
    }
    if data.len() != dims.iter().product::<usize>() {
        return Err(PatError::Precondition("data length does not match dims".into()));
    }
    for axis in 0..dims.len() {
        fft_axis(data, dims, axis, dir, true);
    }
    Ok(())
}

/// `exp(-2 pi i t)` with the argument reduced to one period first.
fn unit_phase(t: f64) -> Complex64 {
    let r = t - t.round();
    let (s, c) = (TWO_PI * r).sin_cos();
    Complex64::new(c, -s)
}

fn check_argument(v: f64, what: &str) -> Result<()> {
    if !v.is_finite() || v.abs() > MAX_ARGUMENT {
        return Err(PatError::Range(format!("{what} {v} is not admissible")));
    }
    Ok(())
}

/// Direct evaluation of `sum_n u_n exp(-2 pi i kappa n / N)`.
pub fn nudft_ner_direct(u: &[Complex64], kappas: &[f64]) -> Vec<Complex64> {
    let n = u.len() as f64;
    kappas
        .iter()
        .map(|&kap| {
            u.iter()
                .enumerate()
                .fold(Complex64::new(0.0, 0.0), |acc, (i, &v)| acc + v * unit_phase(kap * i as f64 / n))
        })
        .collect()
}

/// Precomputed neighbour weights for a fixed set of frequencies.
#[derive(Debug, Clone)]
pub struct NerTaps {
    start: Vec<usize>,
    weights: Vec<Complex64>,
    width: usize,
}

impl NerTaps {
    pub fn len(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty()
    }
}

/// Immutable plan for NER transforms of length `n`.
#[derive(Clone)]
pub struct NerPlan {
    n: usize,
    l: usize,
    spec: WindowSpec,
    inv_window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for NerPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NerPlan").field("n", &self.n).field("l", &self.l).field("spec", &self.spec).finish()
    }
}

impl NerPlan {
    pub fn new(n: usize, spec: &WindowSpec) -> Result<Self> {
        spec.validate()?;
        if n == 0 {
            return Err(PatError::Parameter("transform length must be positive".into()));
        }
        let l = oversampled_len(n, spec.c);
        let spec = WindowSpec { c: l as f64 / n as f64, ..*spec };
        let inv_window = (0..n)
            .map(|i| 1.0 / window_eval(&spec, TWO_PI * i as f64 / n as f64 - std::f64::consts::PI))
            .collect();
        Ok(NerPlan { n, l, spec, inv_window, fft: plan(l, Direction::Forward) })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Oversampled length actually used.
    pub fn oversampled_len(&self) -> usize {
        self.l
    }

    /// Window with `c` replaced by the realised oversampling `l / n`.
    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    pub fn taps(&self, kappas: &[f64]) -> Result<NerTaps> {
        let width = 2 * self.spec.k;
        let mut start = vec![0usize; kappas.len()];
        let mut weights = vec![Complex64::new(0.0, 0.0); kappas.len() * width];
        for &kap in kappas {
            check_argument(kap, "frequency")?;
        }
        // odd lists like -P/2..P/2 only need the non-negative half
        let len = kappas.len();
        let odd = len % 2 == 0 && len > 0 && (1..len).all(|m| kappas[m] == -kappas[len - m]);
        let l = self.l as i64;
        for m in 0..len {
            let kap = kappas[m];
            let mirror = odd && m < len / 2 && m > 0 && (self.spec.c * kap).fract() != 0.0;
            if mirror {
                continue;
            }
            let first = self.tap_row(kap, &mut weights[m * width..(m + 1) * width]);
            start[m] = first.rem_euclid(l) as usize;
        }
        if odd {
            for m in 1..len / 2 {
                if (self.spec.c * kappas[m]).fract() == 0.0 {
                    continue;
                }
                let src = len - m;
                let first = (self.spec.c * kappas[src]).floor() as i64 - self.spec.k as i64 + 1;
                start[m] = (-(first + width as i64 - 1)).rem_euclid(l) as usize;
                for t in 0..width {
                    weights[m * width + t] = weights[src * width + width - 1 - t].conj();
                }
            }
        }
        Ok(NerTaps { start, weights, width })
    }

    /// Weights of one frequency; returns the unreduced index of the first tap.
    fn tap_row(&self, kap: f64, out: &mut [Complex64]) -> i64 {
        let k = self.spec.k as i64;
        let (n, l) = (self.n as f64, self.l as f64);
        let norm = 1.0 / (TWO_PI * self.spec.c);
        let first = (self.spec.c * kap).floor() as i64 - k + 1;
        let xi0 = kap - first as f64 * n / l;
        let (s, c) = (std::f64::consts::PI * xi0).sin_cos();
        let mut phase = Complex64::new(c, -s);
        let (s, c) = (std::f64::consts::PI * n / l).sin_cos();
        let step = Complex64::new(c, s);
        for (t, o) in out.iter_mut().enumerate() {
            let xi = kap - (first + t as i64) as f64 * n / l;
            *o = phase * (window_ft_eval(&self.spec, xi) * norm);
            phase *= step;
        }
        first
    }

    /// Deapodised, zero-padded spectrum of `u`, extended circularly so that
    /// every tap window is contiguous.
    pub fn oversampled_spectrum(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        if u.len() != self.n {
            return Err(PatError::Precondition(format!(
                "input length {} does not match plan length {}",
                u.len(),
                self.n
            )));
        }
        let width = 2 * self.spec.k;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.l + width];
        for (b, (v, w)) in buf.iter_mut().zip(u.iter().zip(&self.inv_window)) {
            *b = v * w;
        }
        self.fft.process(&mut buf[..self.l]);
        for t in 0..width {
            buf[self.l + t] = buf[t % self.l];
        }
        Ok(buf)
    }

    pub fn apply(&self, spectrum: &[Complex64], taps: &NerTaps, out: &mut [Complex64]) {
        for (m, o) in out.iter_mut().enumerate() {
            let s = taps.start[m];
            let w = &taps.weights[m * taps.width..(m + 1) * taps.width];
            let mut acc = Complex64::new(0.0, 0.0);
            for (wt, f) in w.iter().zip(&spectrum[s..s + taps.width]) {
                acc += wt * f;
            }
            *o = acc;
        }
    }

    pub fn execute(&self, u: &[Complex64], kappas: &[f64]) -> Result<Vec<Complex64>> {
        let taps = self.taps(kappas)?;
        let spectrum = self.oversampled_spectrum(u)?;
        let mut out = vec![Complex64::new(0.0, 0.0); kappas.len()];
        self.apply(&spectrum, &taps, &mut out);
        Ok(out)
    }
}

/// Fast approximation of [`nudft_ner_direct`].
pub fn nufft_ner(u: &[Complex64], kappas: &[f64], spec: &WindowSpec) -> Result<Vec<Complex64>> {
    NerPlan::new(u.len(), spec)?.execute(u, kappas)
}

fn check_ned_shape(positions: &[Vec<f64>], values: usize, dims: &[usize]) -> Result<()> {
    if !(1..=2).contains(&dims.len()) {
        return Err(PatError::Precondition("NED transforms support 1 or 2 axes".into()));
    }
    if dims.iter().any(|&n| n == 0 || n % 2 == 1) {
        return Err(PatError::Precondition("output dimensions must be even".into()));
    }
    if positions.len() != values {
        return Err(PatError::Precondition("positions and values differ in length".into()));
    }
    for p in positions {
        if p.len() != dims.len() {
            return Err(PatError::Precondition("position dimensionality mismatch".into()));
        }
        for &x in p {
            check_argument(x, "position")?;
        }
    }
    Ok(())
}

/// Direct evaluation of `sum_m v_m exp(-2 pi i sum_a j_a x_{m,a} / N_a)` for
/// every centred `j`; positions in grid units.
pub fn nudft_ned_direct(positions: &[Vec<f64>], values: &[Complex64], dims: &[usize]) -> Result<Vec<Complex64>> {
    check_ned_shape(positions, values.len(), dims)?;
    let total: usize = dims.iter().product();
    let out = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut j = [0.0f64; 2];
            for a in (0..dims.len()).rev() {
                j[a] = (rem % dims[a]) as f64 - (dims[a] / 2) as f64;
                rem /= dims[a];
            }
            positions.iter().zip(values).fold(Complex64::new(0.0, 0.0), |acc, (p, &v)| {
                let t: f64 = p.iter().enumerate().map(|(a, &x)| j[a] * x / dims[a] as f64).sum();
                acc + v * unit_phase(t)
            })
        })
        .collect();
    Ok(out)
}

/// Spreading weights of a set of positions, reusable across value vectors.
#[derive(Debug, Clone)]
pub struct NedTaps {
    /// Per sample and axis, first oversampled index.
    start: Vec<usize>,
    /// Per sample and axis, `2k` real weights.
    weights: Vec<f64>,
    count: usize,
}

impl NedTaps {
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Immutable plan for NED transforms onto a centred grid.
#[derive(Clone)]
pub struct NedPlan {
    dims: Vec<usize>,
    lens: Vec<usize>,
    spec: Vec<WindowSpec>,
    inv_window: Vec<Vec<f64>>,
    k: usize,
}

impl std::fmt::Debug for NedPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NedPlan").field("dims", &self.dims).field("lens", &self.lens).finish()
    }
}

impl NedPlan {
    pub fn new(dims: &[usize], spec: &WindowSpec) -> Result<Self> {
        spec.validate()?;
        check_ned_shape(&[], 0, dims)?;
        let lens: Vec<usize> = dims.iter().map(|&n| oversampled_len(n, spec.c)).collect();
        let specs: Vec<WindowSpec> = dims
            .iter()
            .zip(&lens)
            .map(|(&n, &l)| WindowSpec { c: l as f64 / n as f64, ..*spec })
            .collect();
        let inv_window = dims
            .iter()
            .zip(&specs)
            .map(|(&n, s)| {
                (0..n)
                    .map(|i| {
                        let j = i as f64 - (n / 2) as f64;
                        1.0 / window_eval(s, TWO_PI * j / n as f64)
                    })
                    .collect()
            })
            .collect();
        Ok(NedPlan { dims: dims.to_vec(), lens, spec: specs, inv_window, k: spec.k })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn oversampled_lens(&self) -> &[usize] {
        &self.lens
    }

    pub fn taps(&self, positions: &[Vec<f64>]) -> Result<NedTaps> {
        check_ned_shape(positions, positions.len(), &self.dims)?;
        let width = 2 * self.k;
        let d = self.dims.len();
        let mut start = Vec::with_capacity(positions.len() * d);
        let mut weights = Vec::with_capacity(positions.len() * d * width);
        for p in positions {
            for a in 0..d {
                let s = &self.spec[a];
                let (n, l) = (self.dims[a] as f64, self.lens[a] as i64);
                let norm = 1.0 / (TWO_PI * s.c);
                let first = (s.c * p[a]).floor() as i64 - self.k as i64 + 1;
                start.push(first.rem_euclid(l) as usize);
                for t in 0..width as i64 {
                    let xi = p[a] - (first + t) as f64 * n / l as f64;
                    weights.push(window_ft_eval(s, xi) * norm);
                }
            }
        }
        Ok(NedTaps { start, weights, count: positions.len() })
    }

    pub fn execute_with(&self, taps: &NedTaps, values: &[Complex64]) -> Result<Vec<Complex64>> {
        if values.len() != taps.count {
            return Err(PatError::Precondition("values do not match prepared positions".into()));
        }
        let width = 2 * self.k;
        let d = self.dims.len();
        let mut grid = vec![Complex64::new(0.0, 0.0); self.lens.iter().product()];
        for (m, &v) in values.iter().enumerate() {
            let w0 = &taps.weights[(m * d) * width..(m * d + 1) * width];
            let s0 = taps.start[m * d];
            if d == 1 {
                let l = self.lens[0];
                for (t, w) in w0.iter().enumerate() {
                    grid[(s0 + t) % l] += v * *w;
                }
            } else {
                let w1 = &taps.weights[(m * d + 1) * width..(m * d + 2) * width];
                let s1 = taps.start[m * d + 1];
                let (l0, l1) = (self.lens[0], self.lens[1]);
                for (t0, a) in w0.iter().enumerate() {
                    let row = ((s0 + t0) % l0) * l1;
                    let va = v * *a;
                    for (t1, b) in w1.iter().enumerate() {
                        grid[row + (s1 + t1) % l1] += va * *b;
                    }
                }
            }
        }
        for axis in 0..d {
            fft_axis(&mut grid, &self.lens, axis, Direction::Forward, false);
        }
        let total: usize = self.dims.iter().product();
        let mut out = vec![Complex64::new(0.0, 0.0); total];
        for (flat, o) in out.iter_mut().enumerate() {
            let mut rem = flat;
            let mut src = 0usize;
            let mut scale = 1.0;
            let mut stride = 1usize;
            for a in (0..d).rev() {
                let i = rem % self.dims[a];
                rem /= self.dims[a];
                let j = i as i64 - (self.dims[a] / 2) as i64;
                src += j.rem_euclid(self.lens[a] as i64) as usize * stride;
                stride *= self.lens[a];
                scale *= self.inv_window[a][i];
            }
            *o = grid[src] * scale;
        }
        Ok(out)
    }

    pub fn execute(&self, positions: &[Vec<f64>], values: &[Complex64]) -> Result<Vec<Complex64>> {
        let taps = self.taps(positions)?;
        self.execute_with(&taps, values)
    }
}

/// Fast approximation of [`nudft_ned_direct`].
pub fn nufft_ned(positions: &[Vec<f64>], values: &[Complex64], dims: &[usize], spec: &WindowSpec) -> Result<Vec<Complex64>> {
    NedPlan::new(dims, spec)?.execute(positions, values)
}

/// Relative L2 distance `|a - b| / |b|`.
pub fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}
