//! Synthetic data: a Fourier-domain forward operator, the analytic ball
//! solution, a spherical-means quadrature oracle, noise and phantoms.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{PatError, Result};
use crate::field::{ScalarField, SensorRecord};
use crate::nufft::{fft_axis, Direction, NedPlan, WindowSpec};
use std::collections::HashMap;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LateralBoundary {
    /// The lateral grid is one period of a periodic medium.
    Periodic,
    /// Free space, approximated by zero padding each lateral axis to this
    /// multiple of its length.
    ZeroPad(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardGeometry {
    pub nt: usize,
    pub dt: f64,
    pub sound_speed: f64,
    pub lateral: LateralBoundary,
    /// Length in depth samples of the periodic depth axis used internally;
    /// chosen so that no periodic image reaches the plane within the record
    /// when absent.
    pub depth_period: Option<usize>,
    /// Depth of row 0 in units of the depth spacing.
    pub depth_origin: f64,
    pub window: WindowSpec,
}

impl ForwardGeometry {
    /// Time step matched to the depth spacing, `dt = dy / c_s`.
    pub fn matched(f: &ScalarField, nt: usize, sound_speed: f64) -> Self {
        ForwardGeometry {
            nt,
            dt: f.spacing[f.ndim() - 1] / sound_speed,
            sound_speed,
            lateral: LateralBoundary::ZeroPad(2),
            depth_period: None,
            depth_origin: 0.0,
            window: WindowSpec::default(),
        }
    }

    pub fn with_lateral(mut self, lateral: LateralBoundary) -> Self {
        self.lateral = lateral;
        self
    }

    pub fn with_depth_period(mut self, q: usize) -> Self {
        self.depth_period = Some(q);
        self
    }

    pub fn with_depth_origin(mut self, o: f64) -> Self {
        self.depth_origin = o;
        self
    }
}

fn check_off_plane(f: &ScalarField, origin: f64) -> Result<()> {
    let ny = f.depth();
    let tol = 1e-9 * f.max_abs();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, v) in f.data.iter().enumerate() {
        if v.abs() > tol {
            let y = (i % ny) as f64 + origin;
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if lo <= 0.0 && hi >= 0.0 {
        return Err(PatError::Validation("phantom support intersects the detection plane".into()));
    }
    Ok(())
}

fn even_smooth_at_least(n: usize) -> usize {
    crate::nufft::oversampled_len(n, 1.0)
}

/// Traces on the full lateral grid of `f` for a source at rest at `t = 0`.
///
/// The depth axis is embedded in a period `Q` and expanded in its discrete
/// Fourier modes `F(K, k_q)`; each mode oscillates as `cos(c_s |K| t)`, so
/// the trace at lateral frequency `K` is `(1/Q) sum_q F(K, k_q) cos(c_s
/// sqrt(|K|^2 + k_q^2) t)`, evaluated on the time grid by one NED transform.
/// Only propagating combinations `omega >= c_s |K|` occur.
pub fn forward_fourier(f: &ScalarField, geom: &ForwardGeometry) -> Result<SensorRecord> {
    f.validate()?;
    geom.window.validate()?;
    let d = f.ndim();
    if !(2..=3).contains(&d) {
        return Err(PatError::Precondition("forward model needs a 2D or 3D field".into()));
    }
    if !(geom.dt > 0.0 && geom.sound_speed > 0.0 && geom.nt > 0) {
        return Err(PatError::Parameter("nt, dt and sound speed must be positive".into()));
    }
    let lat = &f.dims[..d - 1];
    let dx = f.spacing[0];
    if f.spacing[..d - 1].iter().any(|h| (h - dx).abs() > 1e-12 * dx) {
        return Err(PatError::Precondition("lateral spacings must be equal".into()));
    }
    if lat.iter().any(|n| n % 2 == 1) {
        return Err(PatError::Precondition("lateral dimensions must be even".into()));
    }
    check_off_plane(f, geom.depth_origin)?;
    let ny = f.depth();
    let dy = f.spacing[d - 1];
    let cdt = geom.sound_speed * geom.dt;
    let factor = match geom.lateral {
        LateralBoundary::Periodic => 1,
        LateralBoundary::ZeroPad(k) if k >= 1 => k,
        LateralBoundary::ZeroPad(_) => return Err(PatError::Parameter("zero-pad factor must be at least 1".into())),
    };
    let lens: Vec<usize> = lat.iter().map(|n| n * factor).collect();
    let rows: usize = lens.iter().product();
    let origin = geom.depth_origin;
    let reach = ny + origin.abs().ceil() as usize;
    let q_len = match geom.depth_period {
        Some(q) if q >= reach && q % 2 == 0 => q,
        Some(_) => return Err(PatError::Parameter("depth period must be even and cover the source".into())),
        None => {
            let travel = (geom.nt as f64 * cdt / dy).ceil() as usize;
            even_smooth_at_least(travel + reach + 2 * geom.window.k)
        }
    };

    // lateral and depth spectrum of the embedded source
    let mut spec = vec![Complex64::new(0.0, 0.0); rows * q_len];
    let inner_rows: usize = lat.iter().product();
    let embed = |r: usize| {
        let mut rem = r;
        let mut dst = 0usize;
        let mut stride = 1usize;
        for a in (0..d - 1).rev() {
            let i = rem % lat[a];
            rem /= lat[a];
            dst += (i + (lens[a] - lat[a]) / 2) * stride;
            stride *= lens[a];
        }
        dst
    };
    for r in 0..inner_rows {
        let dst = embed(r);
        for n in 0..ny {
            spec[dst * q_len + n] = Complex64::new(f.data[r * ny + n], 0.0);
        }
    }
    let mut dims = lens.clone();
    dims.push(q_len);
    for axis in 0..d - 1 {
        fft_axis(&mut spec, &dims, axis, Direction::Forward, true);
    }
    fft_axis(&mut spec, &dims, d - 1, Direction::Forward, false);
    let signed = |b: usize| if b < q_len / 2 { b as f64 } else { b as f64 - q_len as f64 };
    let shift: Vec<Complex64> = (0..q_len)
        .map(|b| Complex64::from_polar(1.0 / q_len as f64, -TWO_PI * signed(b) * origin / q_len as f64))
        .collect();

    // rows with equal |K| share their time frequencies
    let lateral_k2 = |r: usize| {
        let mut rem = r;
        let mut k2 = 0.0;
        for a in (0..d - 1).rev() {
            let j = (rem % lens[a]) as f64 - (lens[a] / 2) as f64;
            rem /= lens[a];
            let k = TWO_PI * j / (lens[a] as f64 * dx);
            k2 += k * k;
        }
        k2
    };
    let mut groups: HashMap<u64, Vec<usize>> = HashMap::new();
    for r in 0..rows {
        groups.entry(lateral_k2(r).to_bits()).or_default().push(r);
    }
    let mut groups: Vec<(u64, Vec<usize>)> = groups.into_iter().collect();
    groups.sort_unstable_by_key(|g| g.0);

    let n_out = 2 * geom.nt;
    let plan = NedPlan::new(&[n_out], &geom.window)?;
    let half = geom.nt;
    let computed: Vec<Vec<(usize, Vec<Complex64>)>> = groups
        .par_iter()
        .map(|(key, members)| -> Result<Vec<(usize, Vec<Complex64>)>> {
            let k2 = f64::from_bits(*key);
            // e^{i omega t_n} = e^{-2 pi i n x / n_out} with x = -omega dt n_out / (2 pi)
            let positions: Vec<Vec<f64>> = (0..q_len)
                .map(|b| {
                    let kq = TWO_PI * signed(b) / (q_len as f64 * dy);
                    let om = geom.sound_speed * (k2 + kq * kq).sqrt();
                    vec![-om * geom.dt * n_out as f64 / TWO_PI]
                })
                .collect();
            let taps = plan.taps(&positions)?;
            members
                .iter()
                .map(|&r| {
                    let vals: Vec<Complex64> = spec[r * q_len..(r + 1) * q_len].iter().zip(&shift).map(|(v, s)| v * s).collect();
                    let a = plan.execute_with(&taps, &vals)?;
                    let trace = (0..geom.nt).map(|n| 0.5 * (a[half + n] + a[half - n])).collect();
                    Ok((r, trace))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut traces = vec![Complex64::new(0.0, 0.0); rows * geom.nt];
    for (r, t) in computed.into_iter().flatten() {
        traces[r * geom.nt..(r + 1) * geom.nt].copy_from_slice(&t);
    }

    let mut tdims = lens.clone();
    tdims.push(geom.nt);
    for axis in 0..d - 1 {
        fft_axis(&mut traces, &tdims, axis, Direction::Inverse, true);
    }
    let mut samples = Vec::with_capacity(inner_rows * geom.nt);
    for r in 0..inner_rows {
        let src = embed(r);
        samples.extend(traces[src * geom.nt..(src + 1) * geom.nt].iter().map(|v| v.re));
    }
    Ok(SensorRecord::full_grid(lat, dx, geom.dt, geom.sound_speed, geom.nt, samples))
}

/// Uniform ball of initial pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

/// N-shaped trace of a uniform ball in 3D free space.
pub fn forward_sphere_analytic(ball: &Ball, sensor: &[f64], times: &[f64], sound_speed: f64) -> Result<Vec<f64>> {
    if ball.center.len() != sensor.len() {
        return Err(PatError::Precondition("sensor and ball dimensionality differ".into()));
    }
    if !(sound_speed > 0.0 && ball.radius > 0.0) {
        return Err(PatError::Parameter("radius and sound speed must be positive".into()));
    }
    let dist = ball.center.iter().zip(sensor).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if dist <= ball.radius {
        return Err(PatError::Precondition("sensor lies inside the ball".into()));
    }
    Ok(times
        .iter()
        .map(|&t| {
            let s = dist - sound_speed * t;
            if s.abs() <= ball.radius {
                ball.amplitude * s / (2.0 * dist)
            } else {
                0.0
            }
        })
        .collect())
}

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 1..n {
                    let k = k as f64;
                    let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Trilinear sample of a 3D field; points outside the grid read as zero.
pub fn trilinear(f: &ScalarField, x: &[f64]) -> f64 {
    let mut base = [0i64; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let u = (x[a] - f.origin[a]) / f.spacing[a];
        let b = u.floor();
        base[a] = b as i64;
        frac[a] = u - b;
    }
    let mut acc = 0.0;
    for corner in 0..8 {
        let mut w = 1.0;
        let mut idx = [0usize; 3];
        let mut inside = true;
        for a in 0..3 {
            let bit = (corner >> (2 - a)) & 1;
            let i = base[a] + bit as i64;
            if i < 0 || i >= f.dims[a] as i64 {
                inside = false;
                break;
            }
            idx[a] = i as usize;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if inside && w != 0.0 {
            acc += w * f.data[(idx[0] * f.dims[1] + idx[1]) * f.dims[2] + idx[2]];
        }
    }
    acc
}

/// Average of the trilinear field over the sphere of radius `r` about `x`.
pub fn spherical_mean(f: &ScalarField, x: &[f64], r: f64) -> f64 {
    if r == 0.0 {
        return trilinear(f, x);
    }
    let h = f.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let nth = ((8.0 * r / h).ceil() as usize + 16).min(4096);
    let nph = 2 * nth;
    let nodes = gauss_legendre(nth);
    let mut acc = 0.0;
    for &(ct, w) in &nodes {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        let mut ring = 0.0;
        for k in 0..nph {
            let ph = TWO_PI * (k as f64 + 0.5) / nph as f64;
            let p = [x[0] + r * st * ph.cos(), x[1] + r * st * ph.sin(), x[2] + r * ct];
            ring += trilinear(f, &p);
        }
        acc += w * ring / nph as f64;
    }
    0.5 * acc
}

/// Pressure `d/dt [t M(c t)]` from spherical means of a voxelised 3D field.
///
/// `M` is the spherical mean of the trilinear interpolant, zero outside the
/// grid; the time derivative is a central difference with a step of a
/// quarter voxel.
pub fn spherical_means_quadrature(f: &ScalarField, sensor: &[f64], times: &[f64], sound_speed: f64) -> Result<Vec<f64>> {
    f.validate()?;
    if f.ndim() != 3 || sensor.len() != 3 {
        return Err(PatError::Precondition("spherical means need a 3D field".into()));
    }
    if sound_speed <= 0.0 {
        return Err(PatError::Parameter("sound speed must be positive".into()));
    }
    let h = f.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let dt = 0.5 * h / sound_speed;
    Ok(times
        .par_iter()
        .map(|&t| {
            let m = |s: f64| s * spherical_mean(f, sensor, (sound_speed * s).abs());
            (m(t + dt) - m(t - dt)) / (2.0 * dt)
        })
        .collect())
}

/// Adds white Gaussian noise at the given signal-to-noise ratio in dB,
/// relative to the RMS of all samples. `+inf` leaves the record unchanged.
pub fn add_noise(rec: &SensorRecord, snr_db: f64, seed: u64) -> Result<SensorRecord> {
    if snr_db == f64::INFINITY {
        return Ok(rec.clone());
    }
    if !snr_db.is_finite() {
        return Err(PatError::Parameter(format!("signal-to-noise ratio {snr_db} is not admissible")));
    }
    let n = rec.samples.len().max(1) as f64;
    let rms = (rec.samples.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let sigma = rms / 10f64.powf(snr_db / 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = rec.clone();
    for v in out.samples.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * z;
    }
    Ok(out)
}

/// Building blocks of synthetic phantoms, in physical coordinates ordered
/// like the field axes.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Ball (disk in 2D); paints its value.
    Ball { center: Vec<f64>, radius: f64, value: f64 },
    /// Axis-aligned box; paints its value.
    Cuboid { min: Vec<f64>, max: Vec<f64>, value: f64 },
    /// Capsule around a segment; paints its value.
    Segment { a: Vec<f64>, b: Vec<f64>, radius: f64, value: f64 },
    /// Isotropic Gaussian; adds to the field.
    Gaussian { center: Vec<f64>, sigma: f64, amplitude: f64 },
}

impl Primitive {
    fn apply(&self, x: &[f64], v: &mut f64) {
        let d2 = |c: &[f64]| x.iter().zip(c).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        match self {
            Primitive::Ball { center, radius, value } => {
                if d2(center) <= radius * radius {
                    *v = *value;
                }
            }
            Primitive::Cuboid { min, max, value } => {
                if x.iter().zip(min.iter().zip(max)).all(|(p, (lo, hi))| p >= lo && p <= hi) {
                    *v = *value;
                }
            }
            Primitive::Segment { a, b, radius, value } => {
                let ab: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
                let len2: f64 = ab.iter().map(|t| t * t).sum();
                let t = if len2 > 0.0 {
                    (x.iter().zip(a).zip(&ab).map(|((p, q), r)| (p - q) * r).sum::<f64>() / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let c: Vec<f64> = a.iter().zip(&ab).map(|(p, r)| p + t * r).collect();
                if d2(&c) <= radius * radius {
                    *v = *value;
                }
            }
            Primitive::Gaussian { center, sigma, amplitude } => {
                *v += amplitude * (-d2(center) / (2.0 * sigma * sigma)).exp();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub primitives: Vec<Primitive>,
    /// Gaussian smoothing width in pixels applied after painting; 0 disables.
    pub smooth_px: f64,
}

impl PhantomSpec {
    pub fn rasterize(&self) -> Result<ScalarField> {
        if self.dims.len() != self.spacing.len() || !(2..=3).contains(&self.dims.len()) {
            return Err(PatError::Validation("phantom needs 2 or 3 axes with spacings".into()));
        }
        for p in &self.primitives {
            let ok = match p {
                Primitive::Ball { center, .. } | Primitive::Gaussian { center, .. } => center.len() == self.dims.len(),
                Primitive::Cuboid { min, max, .. } => min.len() == self.dims.len() && max.len() == self.dims.len(),
                Primitive::Segment { a, b, .. } => a.len() == self.dims.len() && b.len() == self.dims.len(),
            };
            if !ok {
                return Err(PatError::Validation("primitive dimensionality mismatch".into()));
            }
        }
        let f = ScalarField::from_fn(&self.dims, &self.spacing, |x| {
            let mut v = 0.0;
            for p in &self.primitives {
                p.apply(x, &mut v);
            }
            v
        });
        Ok(if self.smooth_px > 0.0 { gaussian_smooth(&f, self.smooth_px) } else { f })
    }
}

/// Separable Gaussian filter with reflecting borders, width in pixels.
pub fn gaussian_smooth(f: &ScalarField, sigma_px: f64) -> ScalarField {
    let r = (4.0 * sigma_px).ceil() as i64;
    let kernel: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma_px * sigma_px)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let mut out = f.clone();
    for axis in 0..f.ndim() {
        let n = f.dims[axis] as i64;
        let inner: usize = f.dims[axis + 1..].iter().product();
        let src = out.data.clone();
        out.data.par_iter_mut().enumerate().for_each(|(flat, v)| {
            let i = ((flat / inner) % n as usize) as i64;
            let base = flat - i as usize * inner;
            let mut acc = 0.0;
            for (t, k) in kernel.iter().enumerate() {
                let mut s = i + t as i64 - r;
                if s < 0 {
                    s = -s - 1;
                }
                if s >= n {
                    s = 2 * n - s - 1;
                }
                let s = s.clamp(0, n - 1);
                acc += k * src[base + s as usize * inner];
            }
            *v = acc;
        });
    }
    out
}
