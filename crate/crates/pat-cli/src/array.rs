//! Binary array container: magic, length-prefixed JSON header, raw `f64` data.

use crate::error::{CliError, Result};
use pat_core::{ScalarField, SensorRecord};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"PATARR01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub positions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub dt: f64,
    pub sound_speed: f64,
    pub dx: f64,
    pub grid: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub axis_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<RecordMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFile {
    pub header: Header,
    pub data: Vec<f64>,
}

fn axis_names(d: usize) -> Vec<String> {
    let names: &[&str] = if d == 2 { &["x", "depth"] } else { &["x1", "x2", "depth"] };
    names.iter().map(|s| s.to_string()).collect()
}

impl ArrayFile {
    fn new(dims: Vec<usize>, spacing: Vec<f64>, axis_names: Vec<String>, data: Vec<f64>) -> Self {
        ArrayFile {
            header: Header {
                dtype: "f64".into(),
                byte_order: "LE".into(),
                layout: "C".into(),
                dims,
                spacing,
                axis_names,
                origin: None,
                record: None,
            },
            data,
        }
    }

    pub fn from_field(f: &ScalarField) -> Self {
        let mut a = Self::new(f.dims.clone(), f.spacing.clone(), axis_names(f.ndim()), f.data.clone());
        a.header.origin = Some(f.origin.clone());
        a
    }

    pub fn from_record(r: &SensorRecord) -> Self {
        let mut a = Self::new(
            vec![r.num_sensors(), r.nt],
            vec![r.dx, r.dt],
            vec!["sensor".into(), "time".into()],
            r.samples.clone(),
        );
        a.header.record = Some(RecordMeta {
            positions: r.positions.clone(),
            weights: r.weights.clone(),
            dt: r.dt,
            sound_speed: r.sound_speed,
            dx: r.dx,
            grid: r.grid.clone(),
        });
        a
    }

    pub fn to_field(&self) -> Result<ScalarField> {
        if self.header.record.is_some() || !(2..=3).contains(&self.header.dims.len()) {
            return Err(CliError::Validation("array file does not hold an image or volume".into()));
        }
        let mut f = ScalarField::zeros(&self.header.dims, &self.header.spacing);
        if let Some(o) = &self.header.origin {
            f.origin = o.clone();
        }
        f.data = self.data.clone();
        f.validate()?;
        Ok(f)
    }

    pub fn to_record(&self) -> Result<SensorRecord> {
        let meta = self
            .header
            .record
            .as_ref()
            .ok_or_else(|| CliError::Validation("array file does not hold a sensor record".into()))?;
        let rec = SensorRecord {
            positions: meta.positions.clone(),
            weights: meta.weights.clone(),
            samples: self.data.clone(),
            nt: self.header.dims[1],
            dt: meta.dt,
            sound_speed: meta.sound_speed,
            dx: meta.dx,
            grid: meta.grid.clone(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serialises");
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| CliError::Validation(format!("malformed array file: {m}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16usize.checked_add(len).ok_or_else(|| bad("header length"))?).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
        if header.dtype != "f64" || header.byte_order != "LE" || header.layout != "C" {
            return Err(bad("only little-endian C-ordered f64 is supported"));
        }
        if header.spacing.len() != header.dims.len() {
            return Err(bad("spacing and dims differ in length"));
        }
        let payload = &bytes[16 + len..];
        let count: usize = header.dims.iter().product();
        if payload.len() != 8 * count {
            return Err(bad("payload size does not match dims"));
        }
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(ArrayFile { header, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(CliError::io(format!("writing {}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
