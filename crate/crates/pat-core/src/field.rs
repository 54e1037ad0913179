use crate::error::{PatError, Result};

/// Real image or volume on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    /// Physical coordinate of index 0 along each axis.
    pub origin: Vec<f64>,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(dims: &[usize], spacing: &[f64]) -> Self {
        let origin = dims
            .iter()
            .zip(spacing)
            .enumerate()
            .map(|(a, (&n, &h))| if a + 1 == dims.len() { 0.0 } else { -((n / 2) as f64) * h })
            .collect();
        ScalarField {
            dims: dims.to_vec(),
            spacing: spacing.to_vec(),
            origin,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: &[usize], spacing: &[f64], f: impl Fn(&[f64]) -> f64) -> Self {
        let mut out = Self::zeros(dims, spacing);
        let mut idx = vec![0usize; dims.len()];
        let mut x = vec![0.0; dims.len()];
        for v in out.data.iter_mut() {
            for a in 0..dims.len() {
                x[a] = out.origin[a] + idx[a] as f64 * out.spacing[a];
            }
            *v = f(&x);
            for a in (0..dims.len()).rev() {
                idx[a] += 1;
                if idx[a] < dims[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of samples along depth.
    pub fn depth(&self) -> usize {
        *self.dims.last().unwrap_or(&0)
    }

    pub fn lateral_dims(&self) -> &[usize] {
        &self.dims[..self.dims.len().saturating_sub(1)]
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.index(idx)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() != self.spacing.len() || self.dims.len() != self.origin.len() {
            return Err(PatError::Validation("dims, spacing and origin lengths differ".into()));
        }
        if self.data.len() != self.dims.iter().product::<usize>() {
            return Err(PatError::Validation("data length does not match dims".into()));
        }
        if self.spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(PatError::Validation("spacings must be positive".into()));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(PatError::Validation("field contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Pressure traces recorded on the detection plane.
///
/// Positions are lateral coordinates in metres, measured from the centre of
/// the detector grid whose nodes sit at `(i - n/2) * dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord {
    pub positions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Row-major, one row of `nt` samples per sensor.
    pub samples: Vec<f64>,
    pub nt: usize,
    pub dt: f64,
    pub sound_speed: f64,
    pub dx: f64,
    /// Detector grid size per lateral axis.
    pub grid: Vec<usize>,
}

impl SensorRecord {
    pub fn num_sensors(&self) -> usize {
        self.positions.len()
    }

    pub fn trace(&self, m: usize) -> &[f64] {
        &self.samples[m * self.nt..(m + 1) * self.nt]
    }

    /// Axial sample spacing, `c_s * dt`.
    pub fn dy(&self) -> f64 {
        self.sound_speed * self.dt
    }

    pub fn aperture_measure(&self) -> f64 {
        self.grid.iter().map(|&n| n as f64 * self.dx).product()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.positions.len();
        let dl = self.grid.len();
        if !(1..=2).contains(&dl) {
            return Err(PatError::Validation("detector grid must be 1 or 2 dimensional".into()));
        }
        if self.weights.len() != m || self.samples.len() != m * self.nt {
            return Err(PatError::Validation("record arrays have inconsistent lengths".into()));
        }
        if self.positions.iter().any(|p| p.len() != dl) {
            return Err(PatError::Validation("position dimensionality mismatch".into()));
        }
        if !(self.dt > 0.0 && self.sound_speed > 0.0 && self.dx > 0.0) {
            return Err(PatError::Validation("dt, sound speed and dx must be positive".into()));
        }
        if self.grid.iter().any(|&n| n == 0 || n % 2 == 1) {
            return Err(PatError::Validation("detector grid sizes must be even".into()));
        }
        for p in &self.positions {
            for (a, &x) in p.iter().enumerate() {
                let half = self.grid[a] as f64 * self.dx / 2.0;
                if !(x.is_finite() && x >= -half - 1e-9 * half && x < half) {
                    return Err(PatError::Validation(format!(
                        "sensor position {x} outside aperture"
                    )));
                }
            }
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(PatError::Validation("record contains non-finite samples".into()));
        }
        Ok(())
    }

    /// Checks the quadrature constraint `sum h_m = X^{d-1}`.
    pub fn check_weights(&self, rel_tol: f64) -> Result<()> {
        let target = self.aperture_measure();
        let sum: f64 = self.weights.iter().sum();
        if ((sum - target) / target).abs() > rel_tol {
            return Err(PatError::Validation(format!(
                "weights sum to {sum}, expected {target}"
            )));
        }
        Ok(())
    }

    /// Positions in detector grid units.
    pub fn grid_positions(&self) -> Vec<Vec<f64>> {
        self.positions
            .iter()
            .map(|p| p.iter().map(|x| x / self.dx).collect())
            .collect()
    }

    /// True when every grid node carries exactly one sensor.
    pub fn is_full_grid(&self) -> bool {
        let total: usize = self.grid.iter().product();
        if self.positions.len() != total {
            return false;
        }
        let mut seen = vec![false; total];
        for p in self.grid_positions() {
            let mut flat = 0usize;
            for (a, &x) in p.iter().enumerate() {
                let r = x.round();
                if (x - r).abs() > 1e-6 {
                    return false;
                }
                let i = r as i64 + (self.grid[a] / 2) as i64;
                if i < 0 || i >= self.grid[a] as i64 {
                    return false;
                }
                flat = flat * self.grid[a] + i as usize;
            }
            if seen[flat] {
                return false;
            }
            seen[flat] = true;
        }
        true
    }

    /// Builds a full-grid record from traces ordered like the detector grid.
    pub fn full_grid(grid: &[usize], dx: f64, dt: f64, sound_speed: f64, nt: usize, samples: Vec<f64>) -> Self {
        let total: usize = grid.iter().product();
        let mut positions = Vec::with_capacity(total);
        let mut idx = vec![0usize; grid.len()];
        for _ in 0..total {
            positions.push(
                idx.iter()
                    .zip(grid)
                    .map(|(&i, &n)| (i as f64 - (n / 2) as f64) * dx)
                    .collect(),
            );
            for a in (0..grid.len()).rev() {
                idx[a] += 1;
                if idx[a] < grid[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        let h = dx.powi(grid.len() as i32);
        SensorRecord {
            positions,
            weights: vec![h; total],
            samples,
            nt,
            dt,
            sound_speed,
            dx,
            grid: grid.to_vec(),
        }
    }

    /// Keeps the traces at the given sensor indices, with new weights.
    pub fn select(&self, idx: &[usize], weights: Vec<f64>) -> Self {
        let mut samples = Vec::with_capacity(idx.len() * self.nt);
        for &m in idx {
            samples.extend_from_slice(self.trace(m));
        }
        SensorRecord {
            positions: idx.iter().map(|&m| self.positions[m].clone()).collect(),
            weights,
            samples,
            nt: self.nt,
            dt: self.dt,
            sound_speed: self.sound_speed,
            dx: self.dx,
            grid: self.grid.clone(),
        }
    }
}
