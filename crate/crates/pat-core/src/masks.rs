//! Sensor layouts on the detection plane and their quadrature weights.

use crate::error::{PatError, Result};
use crate::field::SensorRecord;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    /// Image dimensionality, 2 or 3.
    pub d: usize,
    /// Grid nodes per lateral axis.
    pub n_x: usize,
    pub pitch: f64,
    /// Lateral position of the centre of interest.
    pub center: Vec<f64>,
    /// Distance of the centre of interest from the plane.
    pub r0: f64,
    pub n_req: usize,
    pub snap: bool,
}

impl MaskSpec {
    pub fn new(d: usize, n_x: usize, pitch: f64, r0: f64, n_req: usize) -> Self {
        MaskSpec { d, n_x, pitch, center: vec![0.0; d.saturating_sub(1)], r0, n_req, snap: true }
    }

    pub fn with_snap(mut self, snap: bool) -> Self {
        self.snap = snap;
        self
    }

    pub fn aperture(&self) -> f64 {
        self.n_x as f64 * self.pitch
    }

    /// `X^{d-1}`, the total weight of every mask.
    pub fn measure(&self) -> f64 {
        self.aperture().powi(self.d as i32 - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.d) {
            return Err(PatError::Parameter(format!("dimensionality {} must be 2 or 3", self.d)));
        }
        if self.n_x < 2 || self.n_x % 2 == 1 {
            return Err(PatError::Parameter("grid size must be even and at least 2".into()));
        }
        if !(self.pitch.is_finite() && self.pitch > 0.0) {
            return Err(PatError::Parameter("pitch must be positive".into()));
        }
        if !(self.r0.is_finite() && self.r0 > 0.0) {
            return Err(PatError::Parameter("standoff r0 must be positive".into()));
        }
        if self.n_req < 1 {
            return Err(PatError::Parameter("requested sensor count must be at least 1".into()));
        }
        if self.center.len() != self.d - 1 {
            return Err(PatError::Parameter("centre must have one coordinate per lateral axis".into()));
        }
        let half = self.aperture() / 2.0;
        if self.center.iter().any(|c| c.abs() >= half) {
            return Err(PatError::Parameter("centre of interest outside the aperture".into()));
        }
        Ok(())
    }

    fn grid_range(&self) -> (i64, i64) {
        let h = (self.n_x / 2) as i64;
        (-h, h - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Equispaced { interval: usize },
    Equiangular { theta_max: f64 },
    Equisteradian { omega: f64, theta_max: f64, slice_counts: Vec<usize> },
    /// Positions supplied by the caller.
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorMask {
    pub positions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub layout: Layout,
}

impl SensorMask {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Largest over smallest weight.
    pub fn weight_ratio(&self) -> f64 {
        let max = self.weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.weights.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// Traces of `rec` at the mask positions, carrying the mask weights.
    ///
    /// Every position must coincide with a sensor of `rec`.
    pub fn apply(&self, rec: &SensorRecord) -> Result<SensorRecord> {
        let key = |p: &[f64]| -> Option<Vec<i64>> {
            p.iter()
                .map(|x| {
                    let u = x / rec.dx;
                    ((u - u.round()).abs() <= 1e-6).then(|| u.round() as i64)
                })
                .collect()
        };
        let lookup: std::collections::HashMap<Vec<i64>, usize> = rec
            .positions
            .iter()
            .enumerate()
            .filter_map(|(i, p)| key(p).map(|k| (k, i)))
            .collect();
        let idx = self
            .positions
            .iter()
            .map(|p| {
                key(p).and_then(|k| lookup.get(&k).copied()).ok_or_else(|| {
                    PatError::Precondition(format!("no recorded trace at mask position {p:?}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(rec.select(&idx, self.weights.clone()))
    }

    /// Positions as grid node indices, `i = x / pitch + n_x / 2`.
    pub fn grid_indices(&self, spec: &MaskSpec) -> Result<Vec<Vec<usize>>> {
        self.positions
            .iter()
            .map(|p| {
                p.iter()
                    .map(|x| {
                        let u = x / spec.pitch;
                        let r = u.round();
                        if (u - r).abs() > 1e-6 {
                            return Err(PatError::Precondition("mask is not snapped to the grid".into()));
                        }
                        Ok((r as i64 + (spec.n_x / 2) as i64) as usize)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Quadrature weights `r^d`, `r` the distance to the centre of interest,
/// normalised to sum to `measure`.
pub fn density_weights(positions: &[Vec<f64>], center: &[f64], r0: f64, d: usize, measure: f64) -> Vec<f64> {
    let raw: Vec<f64> = positions
        .iter()
        .map(|p| {
            let r2: f64 = p.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum::<f64>() + r0 * r0;
            r2.sqrt().powi(d as i32)
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|w| w * measure / sum).collect()
}

/// Rounds to grid nodes, clamps to the grid and drops repeated nodes,
/// keeping first occurrences.
fn snap(spec: &MaskSpec, positions: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let (lo, hi) = spec.grid_range();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(positions.len());
    for p in positions {
        let idx: Vec<i64> = p.iter().map(|x| ((x / spec.pitch).round() as i64).clamp(lo, hi)).collect();
        if seen.insert(idx.clone()) {
            out.push(idx.iter().map(|&i| i as f64 * spec.pitch).collect());
        }
    }
    out
}

/// Centred lattice with one sensor every `interval` grid nodes per axis.
pub fn equispaced_mask(spec: &MaskSpec, interval: usize) -> Result<SensorMask> {
    spec.validate()?;
    if interval < 1 {
        return Err(PatError::Parameter("interval must be at least 1".into()));
    }
    let dl = spec.d - 1;
    let per_axis = (spec.n_req as f64).powf(1.0 / dl as f64).round() as usize;
    if per_axis.pow(dl as u32) != spec.n_req {
        return Err(PatError::Parameter(format!(
            "{} sensors do not form a square lattice",
            spec.n_req
        )));
    }
    let start = -(((per_axis - 1) * interval) as i64 + 1) / 2;
    let (lo, hi) = spec.grid_range();
    let last = start + ((per_axis - 1) * interval) as i64;
    if start < lo || last > hi {
        return Err(PatError::Range(format!(
            "{per_axis} sensors at interval {interval} exceed the {}-node aperture",
            spec.n_x
        )));
    }
    let coords: Vec<f64> = (0..per_axis).map(|i| (start + (i * interval) as i64) as f64 * spec.pitch).collect();
    let positions: Vec<Vec<f64>> = if dl == 1 {
        coords.iter().map(|&x| vec![x]).collect()
    } else {
        coords.iter().flat_map(|&x| coords.iter().map(move |&z| vec![x, z])).collect()
    };
    let w = spec.measure() / positions.len() as f64;
    Ok(SensorMask { weights: vec![w; positions.len()], positions, layout: Layout::Equispaced { interval } })
}

fn half_aperture(spec: &MaskSpec) -> f64 {
    let half = spec.aperture() / 2.0;
    spec.center.iter().map(|c| half - c.abs()).fold(f64::INFINITY, f64::min)
}

/// `n_req` sensors under equal angular increments as seen from the centre of
/// interest, out to the nearer aperture edge.
pub fn equiangular_mask_2d(spec: &MaskSpec) -> Result<SensorMask> {
    spec.validate()?;
    if spec.d != 2 {
        return Err(PatError::Parameter("equiangular layout is two dimensional".into()));
    }
    let theta_max = (half_aperture(spec) / spec.r0).atan();
    let n = spec.n_req;
    let step = 2.0 * theta_max / n as f64;
    let mut positions: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let g = -theta_max + (i as f64 + 0.5) * step;
            vec![spec.center[0] + spec.r0 * g.tan()]
        })
        .collect();
    if spec.snap {
        positions = snap(spec, positions);
    }
    let weights = density_weights(&positions, &spec.center, spec.r0, 2, spec.measure());
    Ok(SensorMask { positions, weights, layout: Layout::Equiangular { theta_max } })
}

/// One ring of the spherical cap.
#[derive(Debug, Clone, PartialEq)]
pub struct CapSlice {
    pub count: usize,
    /// Polar angle of the points.
    pub polar: f64,
    /// Lower and upper polar bounds of the band.
    pub band: (f64, f64),
    pub offset: f64,
}

impl CapSlice {
    pub fn azimuths(&self) -> Vec<f64> {
        let j = self.count as f64;
        (0..self.count).map(|i| TWO_PI * i as f64 / j + std::f64::consts::PI / j + self.offset).collect()
    }
}

fn unit(pol: f64, az: f64) -> [f64; 3] {
    [pol.sin() * az.cos(), pol.sin() * az.sin(), pol.cos()]
}

/// Slices of the cap `theta <= theta_max` for unit solid angle `omega`.
///
/// Returns `None` when the bands run past the pole before reaching
/// `theta_max`.
pub fn cap_slices(omega: f64, theta_max: f64) -> Option<Vec<CapSlice>> {
    let c1 = 1.0 - omega / TWO_PI;
    if c1 < -1.0 {
        return None;
    }
    let theta1 = c1.acos();
    let mut slices = vec![CapSlice { count: 1, polar: 0.0, band: (0.0, theta1), offset: 0.0 }];
    let mut prev_pts = vec![[0.0, 0.0, 1.0]];
    loop {
        let k = slices.len() + 1;
        let prev = slices.last().unwrap();
        let jp = prev.count as f64;
        // azimuth of index i = j_{k-1} of the previous slice, as printed
        let last_az = TWO_PI * jp / jp + std::f64::consts::PI / jp + prev.offset;
        let offset = last_az + (k - 1) as f64 * TWO_PI / jp;
        let lower = prev.band.1;
        let mut j = prev.count;
        let slice = loop {
            let c = lower.cos() - omega * j as f64 / TWO_PI;
            if c < -1.0 {
                return None;
            }
            let upper = c.acos();
            let polar = 0.5 * (lower + upper);
            let s = CapSlice { count: j, polar, band: (lower, upper), offset };
            let pts: Vec<[f64; 3]> = s.azimuths().iter().map(|&a| unit(polar, a)).collect();
            let chord = if j > 1 {
                2.0 * polar.sin() * (std::f64::consts::PI / j as f64).sin()
            } else {
                2.0 * polar.sin()
            };
            let nearest = pts
                .iter()
                .flat_map(|p| prev_pts.iter().map(move |q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()))
                .fold(f64::INFINITY, f64::min);
            if chord > 1.8 * nearest {
                j *= 2;
            } else {
                break (s, pts);
            }
        };
        let (s, pts) = slice;
        if s.polar > theta_max {
            return Some(slices);
        }
        prev_pts = pts;
        slices.push(s);
    }
}

fn cap_count(omega: f64, theta_max: f64) -> usize {
    cap_slices(omega, theta_max).map_or(usize::MAX, |s| s.iter().map(|c| c.count).sum())
}

/// Largest `omega` in `[lo, hi]` whose cap holds at least `target` points,
/// assuming the count does not increase with `omega`.
fn last_omega_with(target: usize, mut lo: f64, mut hi: f64, theta_max: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cap_count(mid, theta_max) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    lo
}

/// One sensor per unit solid angle seen from the centre of interest,
/// projected through the cap onto the plane.
///
/// The unit solid angle is tuned so the realised count is nearest to
/// `n_req` (ties toward fewer points). Within the range of unit angles that
/// realise that count the largest is used, which places the outermost ring
/// closest to the cap edge.
pub fn equisteradian_mask_3d(spec: &MaskSpec) -> Result<SensorMask> {
    spec.validate()?;
    if spec.d != 3 {
        return Err(PatError::Parameter("equi-steradian layout is three dimensional".into()));
    }
    let half_diag = spec.aperture() / 2.0 * 2f64.sqrt();
    if spec.r0 >= half_diag {
        return Err(PatError::Parameter("standoff exceeds the aperture half-diagonal".into()));
    }
    let theta_max = (half_aperture(spec) / spec.r0).atan();
    let cap = TWO_PI * (1.0 - theta_max.cos());
    let nominal = cap / spec.n_req as f64;
    let (lo, hi) = (nominal / 16.0, nominal * 16.0);
    let edge = last_omega_with(spec.n_req, lo, hi, theta_max);
    let above = cap_count(edge, theta_max);
    let below_omega = edge * (1.0 + 1e-12);
    let below = cap_count(below_omega, theta_max);
    let pick_below = below != usize::MAX && spec.n_req - below.min(spec.n_req) <= above.saturating_sub(spec.n_req);
    let omega = if pick_below { last_omega_with(below, below_omega, hi, theta_max) } else { edge };
    let slices = cap_slices(omega, theta_max)
        .ok_or_else(|| PatError::Numerical("cap construction failed".into()))?;
    let mut positions = Vec::new();
    for s in &slices {
        let rho = spec.r0 * s.polar.tan();
        for a in s.azimuths() {
            positions.push(vec![spec.center[0] + rho * a.cos(), spec.center[1] + rho * a.sin()]);
        }
    }
    if spec.snap {
        positions = snap(spec, positions);
    }
    let weights = density_weights(&positions, &spec.center, spec.r0, 3, spec.measure());
    let slice_counts = slices.iter().map(|s| s.count).collect();
    Ok(SensorMask { positions, weights, layout: Layout::Equisteradian { omega, theta_max, slice_counts } })
}
