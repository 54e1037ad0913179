//! Experiment stages shared by the commands.

use crate::array::ArrayFile;
use crate::config::{Engine, EvaluationConfig, ExperimentConfig, LayoutConfig, Method, ModelStandard};
use crate::error::{CliError, Result};
use crate::image::write_pgm;
use pat_core::forward::{add_noise, forward_fourier, forward_sphere_analytic, Ball, ForwardGeometry, Primitive};
use pat_core::masks::{equiangular_mask_2d, equispaced_mask, equisteradian_mask_3d, Layout, SensorMask};
use pat_core::metrics::{
    correlation_coefficient, mip, normalize_min_max, roi_by_intensity, tenenbaum_normalized, Disc, Rect, RoiRule,
};
use pat_core::recon::{interpolate_to_grid, reconstruct_equispaced, reconstruct_interp_fft, reconstruct_nedner, ReconOptions};
use pat_core::{ScalarField, SensorRecord};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::{Duration, Instant};

/// A named subset of the detector grid; `None` keeps every node.
#[derive(Debug, Clone)]
pub struct MaskEntry {
    pub label: String,
    pub mask: Option<SensorMask>,
}

pub fn build_masks(cfg: &ExperimentConfig) -> Result<Vec<MaskEntry>> {
    let mut out = Vec::new();
    for m in &cfg.masks {
        let spec = cfg.mask_spec(m);
        match &m.layout {
            LayoutConfig::Full => out.push(MaskEntry { label: m.label.clone(), mask: None }),
            LayoutConfig::Equispaced { intervals } => {
                for &i in intervals {
                    out.push(MaskEntry { label: format!("{}-{i}", m.label), mask: Some(equispaced_mask(&spec, i)?) });
                }
            }
            LayoutConfig::Equiangular => {
                out.push(MaskEntry { label: m.label.clone(), mask: Some(equiangular_mask_2d(&spec)?) })
            }
            LayoutConfig::Equisteradian => {
                out.push(MaskEntry { label: m.label.clone(), mask: Some(equisteradian_mask_3d(&spec)?) })
            }
        }
    }
    Ok(out)
}

/// Sum of N-waves from the ball primitives at every grid node of the plane.
fn simulate_analytic(cfg: &ExperimentConfig, f: &ScalarField) -> Result<SensorRecord> {
    let n = f.dims[0];
    let dx = f.spacing[0];
    let dt = cfg.dt();
    let nt = cfg.acquisition.nt;
    let c = cfg.acquisition.sound_speed;
    let balls: Vec<Ball> = cfg
        .phantom
        .spec()
        .primitives
        .into_iter()
        .filter_map(|p| match p {
            Primitive::Ball { center, radius, value } => Some(Ball { center, radius, amplitude: value }),
            _ => None,
        })
        .collect();
    let times: Vec<f64> = (0..nt).map(|i| i as f64 * dt).collect();
    let mut samples = vec![0.0; n * n * nt];
    for (m, trace) in samples.chunks_mut(nt).enumerate() {
        let sensor = [((m / n) as f64 - (n / 2) as f64) * dx, ((m % n) as f64 - (n / 2) as f64) * dx, 0.0];
        for b in &balls {
            let p = forward_sphere_analytic(b, &sensor, &times, c)?;
            trace.iter_mut().zip(p).for_each(|(t, v)| *t += v);
        }
    }
    Ok(SensorRecord::full_grid(&[n, n], dx, dt, c, nt, samples))
}

/// Phantom and full-grid record, with noise when configured.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(ScalarField, SensorRecord)> {
    let f = cfg.phantom.spec().rasterize()?;
    let rec = match cfg.acquisition.engine {
        Engine::Fourier => {
            let mut geom = ForwardGeometry::matched(&f, cfg.acquisition.nt, cfg.acquisition.sound_speed)
                .with_lateral(cfg.acquisition.lateral.to_core());
            geom.dt = cfg.dt();
            forward_fourier(&f, &geom)?
        }
        Engine::Analytic => simulate_analytic(cfg, &f)?,
    };
    let rec = match &cfg.noise {
        Some(n) => add_noise(&rec, n.snr_db, n.seed)?,
        None => rec,
    };
    Ok((f, rec))
}

/// Reconstructs the traces of `rec` kept by `mask`; the duration covers the
/// reconstruction alone.
pub fn reconstruct(
    rec: &SensorRecord,
    mask: Option<&SensorMask>,
    method: Method,
    opts: &ReconOptions,
) -> Result<(ScalarField, Duration)> {
    let sub = match mask {
        Some(m) => m.apply(rec)?,
        None => rec.clone(),
    };
    let full = sub.is_full_grid();
    let start = Instant::now();
    let img = match method {
        Method::Nufft if full => reconstruct_equispaced(&sub, opts)?,
        Method::Nufft => reconstruct_nedner(&sub, opts)?,
        Method::Interp if full => reconstruct_interp_fft(&sub, opts)?,
        Method::Interp => reconstruct_interp_fft(&interpolate_to_grid(&sub)?, opts)?,
        Method::GridNufft if full => reconstruct_equispaced(&sub, opts)?,
        Method::GridNufft => reconstruct_equispaced(&interpolate_to_grid(&sub)?, opts)?,
    };
    Ok((img, start.elapsed()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterRow {
    pub diameter: f64,
    pub pixels: usize,
    pub rho: f64,
    pub tenenbaum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub count: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub pixels: usize,
    pub rho: f64,
    /// Normalised sharpness of the min-max scaled bounding box of the region;
    /// absent when the box is smaller than 3x3.
    pub tenenbaum: Option<f64>,
    pub diameter_sweep: Vec<DiameterRow>,
    pub count_sweep: Vec<CountRow>,
}

fn as_image(f: &ScalarField) -> Result<ScalarField> {
    match f.ndim() {
        2 => Ok(f.clone()),
        3 => Ok(mip(f, 2)?),
        _ => Err(CliError::Validation("expected an image or a volume".into())),
    }
}

fn score(img: &ScalarField, model: &ScalarField, disc: Option<Disc>, rule: RoiRule) -> Result<(usize, f64, Option<f64>)> {
    let roi = roi_by_intensity(model, disc, rule)?;
    let rho = correlation_coefficient(&img.data, &model.data, Some(&roi.selected))?;
    let bb = roi.bounding_box()?;
    let [h, w] = bb.shape();
    let t = if h >= 3 && w >= 3 {
        Some(tenenbaum_normalized(&normalize_min_max(img, &bb)?, &Rect::full(bb.shape()))?)
    } else {
        None
    };
    Ok((roi.count(), rho, t))
}

/// Compares `image` with `model`; volumes are compared through their
/// projections along depth.
pub fn evaluate(image: &ScalarField, model: &ScalarField, cfg: &EvaluationConfig) -> Result<Evaluation> {
    let img = as_image(image)?;
    let model = as_image(model)?;
    if img.dims != model.dims {
        return Err(CliError::Validation(format!("image dims {:?} differ from model dims {:?}", img.dims, model.dims)));
    }
    let disc = cfg.disc.map(|d| Disc { center: d.center, diameter: d.diameter });
    let (pixels, rho, tenenbaum) = score(&img, &model, disc, RoiRule::Threshold(cfg.threshold))?;
    let center = disc.map_or([(img.dims[0] as f64 - 1.0) / 2.0, (img.dims[1] as f64 - 1.0) / 2.0], |d| d.center);
    let diameter_sweep = cfg
        .diameters
        .iter()
        .map(|&diameter| {
            let (pixels, rho, tenenbaum) =
                score(&img, &model, Some(Disc { center, diameter }), RoiRule::Threshold(cfg.sweep_threshold))?;
            Ok(DiameterRow { diameter, pixels, rho, tenenbaum })
        })
        .collect::<Result<_>>()?;
    let count_sweep = cfg
        .counts
        .iter()
        .map(|&count| {
            let (_, rho, _) = score(&img, &model, disc, RoiRule::Count(count))?;
            Ok(CountRow { count, rho })
        })
        .collect::<Result<_>>()?;
    Ok(Evaluation { pixels, rho, tenenbaum, diameter_sweep, count_sweep })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub method: String,
    pub sensors: usize,
    pub weight_ratio: f64,
    #[serde(flatten)]
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub schema_version: u32,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn row(&self, label: &str, method: Method) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label && r.method == method.name())
    }
}

pub fn mask_csv(mask: &SensorMask) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = mask.positions.first().map_or(1, |p| p.len());
    let header: &[&str] = if d == 1 { &["x", "weight"] } else { &["x", "y", "weight"] };
    let err = |e: csv::Error| CliError::Validation(e.to_string());
    w.write_record(header).map_err(err)?;
    for (p, h) in mask.positions.iter().zip(&mask.weights) {
        let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        row.push(h.to_string());
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Validation(e.to_string()))
}

pub fn read_mask_csv(path: &Path) -> Result<SensorMask> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { context: format!("reading {}", path.display()), source },
        k => CliError::Validation(format!("{k:?}")),
    })?;
    let mut positions = Vec::new();
    let mut weights = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let vals = row
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if !(2..=3).contains(&vals.len()) {
            return Err(CliError::Validation(format!("{}: rows need 2 or 3 columns", path.display())));
        }
        weights.push(vals[vals.len() - 1]);
        positions.push(vals[..vals.len() - 1].to_vec());
    }
    Ok(SensorMask { positions, weights, layout: Layout::Custom })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(CliError::io(format!("writing {}", path.display())))
}

fn write_previews(f: &ScalarField, stem: &Path) -> Result<()> {
    let name = |s: &str| stem.with_file_name(format!("{}{s}.pgm", stem.file_name().unwrap().to_string_lossy()));
    if f.ndim() == 2 {
        write_pgm(f, &name(""))
    } else {
        for axis in 0..3 {
            write_pgm(&mip(f, axis)?, &name(&format!("_mip{axis}")))?;
        }
        Ok(())
    }
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(CliError::io(format!("creating {}", path.display())))
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    label: String,
    method: String,
    seconds: f64,
}

/// Runs every stage of `cfg` and writes the experiment directory. Everything
/// except `timings.json` is a deterministic function of the configuration.
pub fn pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    mkdir(&out.join("masks"))?;
    mkdir(&out.join("recon"))?;
    write(&out.join("config.json"), &serde_json::to_vec_pretty(cfg).expect("config serialises"))?;
    let (phantom, rec) = simulate(cfg)?;
    ArrayFile::from_field(&phantom).write(&out.join("phantom.patarr"))?;
    write_previews(&phantom, &out.join("phantom"))?;
    ArrayFile::from_record(&rec).write(&out.join("record.patarr"))?;
    let masks = build_masks(cfg)?;
    let opts = cfg.recon.options();
    let model = match cfg.evaluation.model {
        ModelStandard::Phantom => phantom.clone(),
        ModelStandard::FullGrid => reconstruct(&rec, None, Method::Nufft, &opts)?.0,
    };
    if cfg.evaluation.model == ModelStandard::FullGrid {
        ArrayFile::from_field(&model).write(&out.join("model.patarr"))?;
        write_previews(&model, &out.join("model"))?;
    }
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for entry in &masks {
        if let Some(m) = &entry.mask {
            write(&out.join("masks").join(format!("{}.csv", entry.label)), &mask_csv(m)?)?;
        }
        for &method in &cfg.recon.methods {
            let (img, elapsed) = reconstruct(&rec, entry.mask.as_ref(), method, &opts)?;
            let stem = out.join("recon").join(format!("{}_{}", entry.label, method.name()));
            if cfg.recon.save_arrays {
                ArrayFile::from_field(&img).write(&stem.with_extension("patarr"))?;
            }
            write_previews(&img, &stem)?;
            let evaluation = evaluate(&img, &model, &cfg.evaluation)?;
            let (sensors, weight_ratio) = match &entry.mask {
                Some(m) => (m.len(), m.weight_ratio()),
                None => (rec.num_sensors(), 1.0),
            };
            rows.push(ReportRow { label: entry.label.clone(), method: method.name().into(), sensors, weight_ratio, evaluation });
            timings.push(Timing { label: entry.label.clone(), method: method.name().into(), seconds: elapsed.as_secs_f64() });
        }
    }
    let report = Report { name: cfg.name.clone(), schema_version: crate::config::SCHEMA_VERSION, rows };
    write(&out.join("report.json"), &serde_json::to_vec_pretty(&report).expect("report serialises"))?;
    write(&out.join("report.csv"), &report_csv(&report)?)?;
    write(&out.join("sweeps.csv"), &sweeps_csv(&report)?)?;
    write(&out.join("timings.json"), &serde_json::to_vec_pretty(&timings).expect("timings serialise"))?;
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn report_csv(report: &Report) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Validation(e.to_string());
    w.write_record(["label", "method", "sensors", "weight_ratio", "pixels", "rho", "tenenbaum"]).map_err(err)?;
    for r in &report.rows {
        let e = &r.evaluation;
        w.write_record([
            r.label.clone(),
            r.method.clone(),
            r.sensors.to_string(),
            r.weight_ratio.to_string(),
            e.pixels.to_string(),
            e.rho.to_string(),
            opt(e.tenenbaum),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Validation(e.to_string()))
}

pub fn sweeps_csv(report: &Report) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Validation(e.to_string());
    w.write_record(["label", "method", "sweep", "value", "pixels", "rho", "tenenbaum"]).map_err(err)?;
    for r in &report.rows {
        for d in &r.evaluation.diameter_sweep {
            w.write_record([
                r.label.clone(),
                r.method.clone(),
                "diameter".into(),
                d.diameter.to_string(),
                d.pixels.to_string(),
                d.rho.to_string(),
                opt(d.tenenbaum),
            ])
            .map_err(err)?;
        }
        for c in &r.evaluation.count_sweep {
            w.write_record([
                r.label.clone(),
                r.method.clone(),
                "count".into(),
                c.count.to_string(),
                c.count.to_string(),
                c.rho.to_string(),
                String::new(),
            ])
            .map_err(err)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Validation(e.to_string()))
}
