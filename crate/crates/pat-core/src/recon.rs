//! Fourier-domain inversion for planar detection.
//!
//! The pipeline is: lateral transform of the traces (plain FFT on a full grid,
//! NED gridding otherwise), evaluation of every time spectrum at the warped
//! frequencies `kappa(j, l)`, multiplication by `2l / kappa`, Hermitian
//! symmetrisation and one inverse transform back to the image.
//!
//! The traces are treated as one-sided in time. The axial period is
//! `pad * depth` with `pad >= 2`, which keeps the image of the one-sided
//! formula away from its periodic alias; time samples beyond `pad * depth`
//! are dropped.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{PatError, Result};
use crate::field::{ScalarField, SensorRecord};
use crate::nufft::{fft_axis, Direction, NedPlan, NerPlan, NerTaps, WindowSpec};

/// Signed radial frequency `sign(l) sqrt(|j|^2 + l^2)`, zero when `l = 0`.
pub fn kappa(j: &[f64], l: f64) -> f64 {
    if l == 0.0 {
        return 0.0;
    }
    let j2: f64 = j.iter().map(|v| v * v).sum();
    l.signum() * (j2 + l * l).sqrt()
}

/// `2 l / kappa(j, l)`, defined as zero where `l = 0` or `kappa = 0`.
pub fn amplitude_factor(j: &[f64], l: f64) -> f64 {
    let k = kappa(j, l);
    if l == 0.0 || k == 0.0 {
        0.0
    } else {
        2.0 * l / k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxialMethod {
    /// Kaiser-Bessel NER gridding.
    Nufft,
    /// Linear interpolation between the bins of the plain time FFT.
    Interp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconOptions {
    pub window: WindowSpec,
    pub upsample: usize,
    /// Number of depth samples `N_y`; defaults to the record length rounded up
    /// to an even number.
    pub depth: Option<usize>,
    /// Axial period in units of the depth; defaults to
    /// `max(2, ceil(nt / depth))`.
    pub axial_pad: Option<usize>,
}

impl Default for ReconOptions {
    fn default() -> Self {
        ReconOptions { window: WindowSpec::default(), upsample: 1, depth: None, axial_pad: None }
    }
}

impl ReconOptions {
    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = Some(depth);
        self
    }

    pub fn with_upsample(mut self, upsample: usize) -> Self {
        self.upsample = upsample;
        self
    }

    pub fn with_axial_pad(mut self, pad: usize) -> Self {
        self.axial_pad = Some(pad);
        self
    }

    fn resolve(&self, nt: usize) -> Result<(usize, usize)> {
        let ny = self.depth.unwrap_or(nt + nt % 2);
        if ny == 0 || ny % 2 == 1 {
            return Err(PatError::Parameter(format!("depth {ny} must be positive and even")));
        }
        let pad = self.axial_pad.unwrap_or_else(|| nt.div_ceil(ny).max(2));
        if pad < 2 {
            return Err(PatError::Parameter("axial pad must be at least 2".into()));
        }
        if self.upsample == 0 {
            return Err(PatError::Parameter("upsample must be at least 1".into()));
        }
        Ok((ny, pad))
    }
}

/// Image together with diagnostics of the final inverse transform.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: ScalarField,
    /// Largest imaginary part over the largest real magnitude before the
    /// imaginary part is discarded.
    pub imag_residue: f64,
    /// Number of axial samples per trace that entered the transform.
    pub samples_used: usize,
}

fn lateral_layout(rec: &SensorRecord) -> Result<Vec<usize>> {
    let d = rec.grid.len();
    let mut order = Vec::with_capacity(rec.positions.len());
    for p in rec.grid_positions() {
        let mut flat = 0usize;
        for a in 0..d {
            let i = p[a].round() as i64 + (rec.grid[a] / 2) as i64;
            flat = flat * rec.grid[a] + i as usize;
        }
        order.push(flat);
    }
    Ok(order)
}

/// Lateral spectrum on a full grid: rows are centred lateral frequencies,
/// columns are time samples.
fn lateral_fft(rec: &SensorRecord) -> Result<Vec<Complex64>> {
    if !rec.is_full_grid() {
        return Err(PatError::Precondition("equispaced reconstruction needs a complete sensor grid".into()));
    }
    let nt = rec.nt;
    let order = lateral_layout(rec)?;
    let mut data = vec![Complex64::new(0.0, 0.0); rec.samples.len()];
    for (m, &flat) in order.iter().enumerate() {
        for (o, &g) in data[flat * nt..(flat + 1) * nt].iter_mut().zip(rec.trace(m)) {
            *o = Complex64::new(g, 0.0);
        }
    }
    let mut dims = rec.grid.clone();
    dims.push(nt);
    for axis in 0..rec.grid.len() {
        fft_axis(&mut data, &dims, axis, Direction::Forward, true);
    }
    Ok(data)
}

/// Lateral spectrum from arbitrary positions by NED gridding of the
/// weighted traces `(h_m / dx^{d-1}) g_m`.
fn lateral_ned(rec: &SensorRecord, window: &WindowSpec) -> Result<Vec<Complex64>> {
    rec.check_weights(1e-6)?;
    let nt = rec.nt;
    let plan = NedPlan::new(&rec.grid, window)?;
    let taps = plan.taps(&rec.grid_positions())?;
    let cell = rec.dx.powi(rec.grid.len() as i32);
    let scale: Vec<f64> = rec.weights.iter().map(|h| h / cell).collect();
    let columns: Vec<Vec<Complex64>> = (0..nt)
        .into_par_iter()
        .map(|n| {
            let v: Vec<Complex64> = (0..rec.num_sensors())
                .map(|m| Complex64::new(scale[m] * rec.samples[m * nt + n], 0.0))
                .collect();
            plan.execute_with(&taps, &v)
        })
        .collect::<Result<_>>()?;
    let rows: usize = rec.grid.iter().product();
    let mut data = vec![Complex64::new(0.0, 0.0); rows * nt];
    for (n, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            data[r * nt + n] = *v;
        }
    }
    Ok(data)
}

struct Axial {
    ny: usize,
    pad: usize,
    period: usize,
    /// Per lateral axis, `ny dy / (n_a dx)`.
    aspect: Vec<f64>,
}

impl Axial {
    fn new(rec: &SensorRecord, ny: usize, pad: usize) -> Self {
        let aspect = rec.grid.iter().map(|&n| ny as f64 * rec.dy() / (n as f64 * rec.dx)).collect();
        Axial { ny, pad, period: pad * ny, aspect }
    }

    fn scaled_j2(&self, grid: &[usize], row: usize) -> f64 {
        let mut rem = row;
        let mut j2 = 0.0;
        for a in (0..grid.len()).rev() {
            let j = (rem % grid[a]) as f64 - (grid[a] / 2) as f64;
            rem /= grid[a];
            let s = j * self.aspect[a] * self.pad as f64;
            j2 += s * s;
        }
        j2
    }

    fn kappas(&self, j2: f64) -> Vec<f64> {
        let half = (self.period / 2) as i64;
        (-half..half).map(|l| kappa(&[j2.sqrt()], l as f64)).collect()
    }

    fn amplitudes(&self, j2: f64) -> Vec<f64> {
        let half = (self.period / 2) as i64;
        (-half..half).map(|l| amplitude_factor(&[j2.sqrt()], l as f64)).collect()
    }
}

/// Warped axial spectrum for every lateral row, centred in `l`.
fn axial_stage(spec: &[Complex64], grid: &[usize], nt: usize, ax: &Axial, method: AxialMethod, window: &WindowSpec) -> Result<Vec<Complex64>> {
    let rows: usize = grid.iter().product();
    let p = ax.period;
    let used = nt.min(p);
    let mut keys: Vec<u64> = (0..rows).map(|r| ax.scaled_j2(grid, r).to_bits()).collect();
    let row_keys = keys.clone();
    keys.sort_unstable();
    keys.dedup();
    let slot: HashMap<u64, usize> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let amps: Vec<Vec<f64>> = keys.par_iter().map(|&k| ax.amplitudes(f64::from_bits(k))).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); rows * p];
    match method {
        AxialMethod::Nufft => {
            let plan = NerPlan::new(p, window)?;
            let taps: Vec<NerTaps> = keys
                .par_iter()
                .map(|&k| plan.taps(&ax.kappas(f64::from_bits(k))))
                .collect::<Result<_>>()?;
            out.par_chunks_mut(p).enumerate().try_for_each(|(r, o)| -> Result<()> {
                let mut u = vec![Complex64::new(0.0, 0.0); p];
                u[..used].copy_from_slice(&spec[r * nt..r * nt + used]);
                let s = slot[&row_keys[r]];
                let f = plan.oversampled_spectrum(&u)?;
                plan.apply(&f, &taps[s], o);
                for (v, a) in o.iter_mut().zip(&amps[s]) {
                    *v *= *a;
                }
                Ok(())
            })?;
        }
        AxialMethod::Interp => {
            let plan = rustfft::FftPlanner::new().plan_fft_forward(p);
            out.par_chunks_mut(p).enumerate().for_each(|(r, o)| {
                let mut u = vec![Complex64::new(0.0, 0.0); p];
                u[..used].copy_from_slice(&spec[r * nt..r * nt + used]);
                plan.process(&mut u);
                let s = slot[&row_keys[r]];
                let j2 = f64::from_bits(row_keys[r]);
                let half = (p / 2) as i64;
                for (i, (v, a)) in o.iter_mut().zip(&amps[s]).enumerate() {
                    let k = kappa(&[j2.sqrt()], (i as i64 - half) as f64);
                    let k0 = k.floor();
                    let t = k - k0;
                    let i0 = (k0 as i64).rem_euclid(p as i64) as usize;
                    let i1 = (i0 + 1) % p;
                    *v = (u[i0] * (1.0 - t) + u[i1] * t) * *a;
                }
            });
        }
    }
    Ok(out)
}

/// Averages every coefficient with the conjugate of its mirror.
pub fn symmetrize(data: &mut [Complex64], dims: &[usize]) {
    let total = data.len();
    let mirror = |flat: usize| {
        let mut rem = flat;
        let mut out = 0usize;
        let mut stride = 1usize;
        for a in (0..dims.len()).rev() {
            let i = rem % dims[a];
            rem /= dims[a];
            out += ((dims[a] - i) % dims[a]) * stride;
            stride *= dims[a];
        }
        out
    };
    let src = data.to_vec();
    for flat in 0..total {
        data[flat] = 0.5 * (src[flat] + src[mirror(flat)].conj());
    }
}

fn to_image(spec: Vec<Complex64>, grid: &[usize], ax: &Axial, rec: &SensorRecord, upsample: usize) -> Result<(ScalarField, f64)> {
    let u = upsample;
    let p = ax.period;
    let mut dims: Vec<usize> = grid.to_vec();
    dims.push(p);
    let mut spec = spec;
    symmetrize(&mut spec, &dims);
    let out_dims: Vec<usize> = dims.iter().map(|n| n * u).collect();
    let total: usize = out_dims.iter().product();
    let mut big = vec![Complex64::new(0.0, 0.0); total];
    let d = dims.len();
    // with padding, a Nyquist coefficient is shared between -n/2 and +n/2
    let mut targets: Vec<(usize, f64)> = Vec::with_capacity(1 << d);
    for (flat, v) in spec.iter().enumerate() {
        targets.clear();
        targets.push((0, 1.0));
        let mut rem = flat;
        let mut stride = 1usize;
        for a in (0..d).rev() {
            let i = rem % dims[a];
            rem /= dims[a];
            let c = i as i64 - (dims[a] / 2) as i64;
            let place = |c: i64| -> usize {
                if a + 1 == d {
                    c.rem_euclid(out_dims[a] as i64) as usize
                } else {
                    (c + (out_dims[a] / 2) as i64) as usize
                }
            };
            let n = targets.len();
            if u > 1 && c == -((dims[a] / 2) as i64) {
                for t in 0..n {
                    let (dst, w) = targets[t];
                    targets[t] = (dst + place(c) * stride, 0.5 * w);
                    targets.push((dst + place(-c) * stride, 0.5 * w));
                }
            } else {
                for t in targets.iter_mut() {
                    t.0 += place(c) * stride;
                }
            }
            stride *= out_dims[a];
        }
        for &(dst, w) in &targets {
            big[dst] += v * w;
        }
    }
    for axis in 0..d - 1 {
        fft_axis(&mut big, &out_dims, axis, Direction::Inverse, true);
    }
    fft_axis(&mut big, &out_dims, d - 1, Direction::Inverse, false);
    let gain = (u as f64).powi(d as i32);
    let keep = u * ax.ny;
    let rows: usize = out_dims[..d - 1].iter().product();
    let mut data = Vec::with_capacity(rows * keep);
    let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
    for r in 0..rows {
        for v in &big[r * u * p..r * u * p + keep] {
            let v = v * gain;
            max_re = max_re.max(v.re.abs());
            max_im = max_im.max(v.im.abs());
            data.push(v.re);
        }
    }
    let mut img_dims: Vec<usize> = grid.iter().map(|n| n * u).collect();
    img_dims.push(keep);
    let mut spacing = vec![rec.dx / u as f64; grid.len()];
    spacing.push(rec.dy() / u as f64);
    let mut image = ScalarField::zeros(&img_dims, &spacing);
    image.data = data;
    let residue = if max_re > 0.0 { max_im / max_re } else { 0.0 };
    Ok((image, residue))
}

/// Shared pipeline; `lateral` selects the first stage.
pub fn reconstruct_detailed(rec: &SensorRecord, opts: &ReconOptions, method: AxialMethod, ned: bool) -> Result<Reconstruction> {
    rec.validate()?;
    opts.window.validate()?;
    let (ny, pad) = opts.resolve(rec.nt)?;
    let spec = if ned { lateral_ned(rec, &opts.window)? } else { lateral_fft(rec)? };
    let ax = Axial::new(rec, ny, pad);
    let warped = axial_stage(&spec, &rec.grid, rec.nt, &ax, method, &opts.window)?;
    let (image, imag_residue) = to_image(warped, &rec.grid, &ax, rec, opts.upsample)?;
    Ok(Reconstruction { image, imag_residue, samples_used: rec.nt.min(ax.period) })
}

/// Reconstruction from a complete sensor grid using NER gridding in time.
pub fn reconstruct_equispaced(rec: &SensorRecord, opts: &ReconOptions) -> Result<ScalarField> {
    Ok(reconstruct_detailed(rec, opts, AxialMethod::Nufft, false)?.image)
}

/// Reconstruction from arbitrary sensor positions with quadrature weights.
pub fn reconstruct_nedner(rec: &SensorRecord, opts: &ReconOptions) -> Result<ScalarField> {
    Ok(reconstruct_detailed(rec, opts, AxialMethod::Nufft, true)?.image)
}

/// Baseline: linear interpolation of the time spectrum instead of gridding.
pub fn reconstruct_interp_fft(rec: &SensorRecord, opts: &ReconOptions) -> Result<ScalarField> {
    Ok(reconstruct_detailed(rec, opts, AxialMethod::Interp, false)?.image)
}

/// Full-grid record from scattered sensors on a line, by linear
/// interpolation between neighbouring sensors and constant extension beyond
/// the outermost ones.
pub fn interpolate_to_grid(rec: &SensorRecord) -> Result<SensorRecord> {
    rec.validate()?;
    if rec.grid.len() != 1 {
        return Err(PatError::Parameter("interpolation to the grid supports one lateral axis".into()));
    }
    let mut order: Vec<usize> = (0..rec.num_sensors()).collect();
    order.sort_by(|&a, &b| rec.positions[a][0].total_cmp(&rec.positions[b][0]));
    let xs: Vec<f64> = order.iter().map(|&m| rec.positions[m][0]).collect();
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PatError::Validation("sensor positions must be distinct".into()));
    }
    let n = rec.grid[0];
    let nt = rec.nt;
    let mut samples = vec![0.0; n * nt];
    for (i, row) in samples.chunks_mut(nt).enumerate() {
        let x = (i as f64 - (n / 2) as f64) * rec.dx;
        let k = xs.partition_point(|&p| p <= x);
        if k == 0 || k == xs.len() {
            let m = order[if k == 0 { 0 } else { xs.len() - 1 }];
            row.copy_from_slice(rec.trace(m));
        } else {
            let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
            let (a, b) = (rec.trace(order[k - 1]), rec.trace(order[k]));
            for (o, (va, vb)) in row.iter_mut().zip(a.iter().zip(b)) {
                *o = va * (1.0 - t) + vb * t;
            }
        }
    }
    Ok(SensorRecord::full_grid(&rec.grid, rec.dx, rec.dt, rec.sound_speed, nt, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(&[0.0], 5.0), 5.0);
        assert_eq!(kappa(&[3.0], 4.0), 5.0);
        assert_eq!(kappa(&[3.0], -4.0), -5.0);
        assert_eq!(kappa(&[2.0, 1.0], 0.0), 0.0);
    }

    #[test]
    fn amplitude_examples() {
        assert_eq!(amplitude_factor(&[0.0], 7.0), 2.0);
        assert_eq!(amplitude_factor(&[0.0], -7.0), 2.0);
        assert_eq!(amplitude_factor(&[5.0], 0.0), 0.0);
        assert!((amplitude_factor(&[3.0], 4.0) - 1.6).abs() < 1e-15);
        assert!((amplitude_factor(&[0.0, 3.0], 4.0) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn options_resolve_defaults() {
        let o = ReconOptions::default();
        assert_eq!(o.resolve(63).unwrap(), (64, 2));
        assert_eq!(o.clone().with_depth(32).resolve(100).unwrap(), (32, 4));
        assert!(o.clone().with_depth(31).resolve(100).is_err());
        assert!(o.clone().with_axial_pad(1).resolve(10).is_err());
        assert!(o.with_upsample(0).resolve(10).is_err());
    }

    #[test]
    fn symmetrize_makes_inverse_real() {
        let dims = [4usize, 6];
        let mut a: Vec<Complex64> = (0..24).map(|i| Complex64::new(i as f64, (i * i % 7) as f64)).collect();
        symmetrize(&mut a, &dims);
        fft_axis(&mut a, &dims, 0, Direction::Inverse, true);
        fft_axis(&mut a, &dims, 1, Direction::Inverse, true);
        assert!(a.iter().all(|v| v.im.abs() < 1e-12));
    }

    #[test]
    fn one_dimensional_pulse_is_recovered() {
        // a single lateral frequency: g(t) = f(t)/2 for a laterally constant source
        let nx = 4;
        let nt = 32;
        let mut samples = vec![0.0; nx * nt];
        for m in 0..nx {
            for n in 0..nt {
                let y = n as f64 - 10.0;
                samples[m * nt + n] = 0.5 * (-y * y / 4.0).exp();
            }
        }
        let rec = SensorRecord::full_grid(&[nx], 1.0, 1.0, 1.0, nt, samples);
        let img = reconstruct_equispaced(&rec, &ReconOptions::default().with_depth(16).with_axial_pad(2)).unwrap();
        // the l = 0 coefficient is dropped, so the image carries the source
        // minus its mean over one axial period (32 samples)
        let mean = (4.0 * std::f64::consts::PI).sqrt() / 32.0;
        for n in 0..16 {
            let y = n as f64 - 10.0;
            let want = (-y * y / 4.0).exp() - mean;
            assert!((img.get(&[1, n]) - want).abs() < 1e-6, "depth {n}");
        }
    }
}
