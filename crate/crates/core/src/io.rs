//! File formats: rig and scenario TOML, IMU/VIMU stream CSV, and the
//! simulation artifacts (truth, landmarks, estimates, error series, JSON).
//!
//! Units are fixed: seconds, metres, rad/s, m/s². Every float is written with
//! 17 significant digits, so write∘read∘write is byte-identical. Files are
//! written to a temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraModel;
use crate::eval::{ErrorSeries, EstimateSample};
use crate::fusion::VimuSample;
use crate::geometry::{Rotation, Vec3};
use crate::imu_model::{ImuExtrinsics, ImuSample, NoiseSpec};
use crate::scenario::Scenario;
use crate::sim::{CameraFrame, GroundTruth};

/// Largest accepted deviation of a rotation from orthonormality.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-6;
/// Below this deviation a rotation is taken as given (not re-projected).
const REPROJECT_ABOVE: f64 = 8.0 * f64::EPSILON;

pub const STREAM_HEADER: [&str; 8] = ["t_s", "imu_id", "gx", "gy", "gz", "ax", "ay", "az"];
pub const VIMU_HEADER: [&str; 7] = ["t_s", "gx", "gy", "gz", "ax", "ay", "az"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: IMU {id}: {message}")]
    Validation { path: PathBuf, id: u32, message: String },
    #[error("{path}: {message}")]
    InvalidFile { path: PathBuf, message: String },
    #[error("{path}:{line}: timestamp of IMU {imu_id} does not increase")]
    NonMonotonicTimestamps { path: PathBuf, line: usize, imu_id: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    // Temp files are created 0600; artifacts should be readable like any other output.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644)).map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// 1-based line and column of byte offset `at`.
fn line_col(text: &str, at: usize) -> (usize, usize) {
    let before = &text[..at.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, IoError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        IoError::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

// ---------------------------------------------------------------- rig files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuEntry {
    pub id: u32,
    /// Row-major `C^j` (IMU frame → rig frame).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 9]>,
    /// Hamilton quaternion, scalar first; alternative to `rotation`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quaternion_wxyz: Option<[f64; 4]>,
    pub position: [f64; 3],
    #[serde(default)]
    pub noise: NoiseSpec,
}

/// On-disk rig description, kept exactly as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigFile {
    /// Requested VIMU origin in the rig frame; the IMU centroid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraModel>,
    #[serde(rename = "imu")]
    pub imus: Vec<ImuEntry>,
}

/// Validated rig, positions relative to the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub ids: Vec<u32>,
    pub extrinsics: Vec<ImuExtrinsics>,
    pub noise: Vec<NoiseSpec>,
    pub camera: CameraModel,
    /// Target in the original rig frame.
    pub target: Vec3,
}

impl Rig {
    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    /// Back to file form, positions in the original rig frame.
    pub fn to_file(&self) -> RigFile {
        RigFile {
            target: Some(self.target.into()),
            camera: Some(self.camera),
            imus: self
                .ids
                .iter()
                .zip(&self.extrinsics)
                .zip(&self.noise)
                .map(|((&id, e), n)| ImuEntry {
                    id,
                    rotation: Some(e.rotation.to_row_major()),
                    quaternion_wxyz: None,
                    position: (e.position + self.target).into(),
                    noise: *n,
                })
                .collect(),
        }
    }
}

pub fn parse_rig_str(text: &str, path: &Path) -> Result<RigFile, IoError> {
    parse_toml(text, path)
}

pub fn rig_to_string(rig: &RigFile) -> String {
    toml::to_string(rig).expect("rig serializes")
}

fn entry_rotation(e: &ImuEntry, path: &Path) -> Result<Rotation, IoError> {
    let invalid = |message: String| IoError::Validation {
        path: path.to_path_buf(),
        id: e.id,
        message,
    };
    let m = match (&e.rotation, &e.quaternion_wxyz) {
        (Some(r), None) => {
            if r.iter().any(|x| !x.is_finite()) {
                return Err(invalid("rotation has non-finite entries".into()));
            }
            Matrix3::from_row_slice(r)
        }
        (None, Some(q)) => {
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !n.is_finite() || (n - 1.0).abs() > ORTHONORMALITY_TOLERANCE {
                return Err(invalid(format!("quaternion norm {n} is not 1")));
            }
            *Rotation::from_quaternion_wxyz(*q).matrix()
        }
        (Some(_), Some(_)) => return Err(invalid("give either rotation or quaternion_wxyz, not both".into())),
        (None, None) => return Err(invalid("missing rotation (or quaternion_wxyz)".into())),
    };
    let err = Rotation::orthonormality_error(&m);
    if err > ORTHONORMALITY_TOLERANCE {
        return Err(invalid(format!(
            "rotation is not orthonormal (deviation {err:.3e} > {ORTHONORMALITY_TOLERANCE:e})"
        )));
    }
    if err <= REPROJECT_ABOVE {
        return Ok(Rotation::from_matrix_unchecked(m));
    }
    let r = Rotation::project(&m);
    log::info!(
        "{}: IMU {}: rotation re-projected, Frobenius correction {:.3e}",
        path.display(),
        e.id,
        (r.matrix() - m).norm()
    );
    Ok(r)
}

/// Validates a parsed rig and re-expresses positions relative to its target.
pub fn validate_rig(file: &RigFile, path: &Path) -> Result<Rig, IoError> {
    if file.imus.is_empty() {
        return Err(IoError::InvalidFile {
            path: path.to_path_buf(),
            message: "rig has no [[imu]] entries".into(),
        });
    }
    let mut seen = BTreeMap::new();
    let mut rotations = Vec::with_capacity(file.imus.len());
    for e in &file.imus {
        let invalid = |message: &str| IoError::Validation {
            path: path.to_path_buf(),
            id: e.id,
            message: message.to_string(),
        };
        if seen.insert(e.id, ()).is_some() {
            return Err(invalid("duplicate id"));
        }
        if e.position.iter().any(|x| !x.is_finite()) {
            return Err(invalid("position has non-finite entries"));
        }
        if !e.noise.is_valid() {
            return Err(invalid("noise sigmas must be finite and ≥ 0 with rate_hz > 0"));
        }
        rotations.push(entry_rotation(e, path)?);
    }
    let positions: Vec<Vec3> = file.imus.iter().map(|e| Vec3::from(e.position)).collect();
    let target = match file.target {
        Some(t) if t.iter().all(|x| x.is_finite()) => Vec3::from(t),
        Some(_) => {
            return Err(IoError::InvalidFile {
                path: path.to_path_buf(),
                message: "target has non-finite entries".into(),
            })
        }
        None => positions.iter().sum::<Vec3>() / positions.len() as f64,
    };
    Ok(Rig {
        ids: file.imus.iter().map(|e| e.id).collect(),
        extrinsics: rotations
            .into_iter()
            .zip(&positions)
            .map(|(r, p)| ImuExtrinsics::new(r, p - target))
            .collect(),
        noise: file.imus.iter().map(|e| e.noise).collect(),
        camera: file.camera.unwrap_or_default(),
        target,
    })
}

pub fn load_rig(path: &Path) -> Result<Rig, IoError> {
    let text = read_text(path)?;
    validate_rig(&parse_rig_str(&text, path)?, path)
}

pub fn save_rig(path: &Path, rig: &RigFile) -> Result<(), IoError> {
    write_atomic(path, rig_to_string(rig).as_bytes())
}

pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    let text = read_text(path)?;
    parse_toml(&text, path)
}

pub fn scenario_to_string(s: &Scenario) -> String {
    toml::to_string(s).expect("scenario serializes")
}

// ------------------------------------------------------------------ streams

/// 17 significant digits: enough to round-trip any f64.
fn num(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("write to string");
}

fn row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for (k, v) in values.into_iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        num(out, v);
    }
    out.push('\n');
}

fn header(out: &mut String, cols: &[&str]) {
    out.push_str(&cols.join(","));
    out.push('\n');
}

/// One row of a multi-IMU stream file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamRecord {
    pub imu_id: u32,
    pub sample: ImuSample,
}

pub fn stream_to_string(records: &[StreamRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 200);
    header(&mut out, &STREAM_HEADER);
    for r in records {
        let s = &r.sample;
        num(&mut out, s.t);
        write!(out, ",{}", r.imu_id).expect("write to string");
        for v in s.gyro.iter().chain(s.accel.iter()) {
            out.push(',');
            num(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

fn csv_rows(text: &str, path: &Path, expected: &[&str]) -> Result<Vec<(usize, Vec<f64>, csv::StringRecord)>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let parse_err = |line: usize, column: usize, message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let found = rdr.headers().map_err(|e| parse_err(1, 1, e.to_string()))?.clone();
    if found.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(parse_err(
            1,
            1,
            format!("expected header '{}', found '{}'", expected.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, 1, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != expected.len() {
            return Err(parse_err(line, 1, format!("expected {} fields, found {}", expected.len(), rec.len())));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, k + 1, format!("'{field}' is not a number ({})", expected[k])))?;
            vals.push(v);
        }
        rows.push((line, vals, rec));
    }
    Ok(rows)
}

pub fn parse_stream_str(text: &str, path: &Path) -> Result<Vec<StreamRecord>, IoError> {
    let mut last: BTreeMap<u32, f64> = BTreeMap::new();
    let mut out = Vec::new();
    for (line, v, rec) in csv_rows(text, path, &STREAM_HEADER)? {
        let imu_id: u32 = rec[1].trim().parse().map_err(|_| IoError::Parse {
            path: path.to_path_buf(),
            line,
            column: 2,
            message: format!("'{}' is not an IMU id", &rec[1]),
        })?;
        let t = v[0];
        if !t.is_finite() || last.get(&imu_id).is_some_and(|&prev| t <= prev) {
            return Err(IoError::NonMonotonicTimestamps {
                path: path.to_path_buf(),
                line,
                imu_id,
            });
        }
        last.insert(imu_id, t);
        out.push(StreamRecord {
            imu_id,
            sample: ImuSample {
                t,
                gyro: Vec3::new(v[2], v[3], v[4]),
                accel: Vec3::new(v[5], v[6], v[7]),
            },
        });
    }
    Ok(out)
}

pub fn read_stream(path: &Path) -> Result<Vec<StreamRecord>, IoError> {
    parse_stream_str(&read_text(path)?, path)
}

pub fn write_stream(path: &Path, records: &[StreamRecord]) -> Result<(), IoError> {
    write_atomic(path, stream_to_string(records).as_bytes())
}

/// Per-IMU streams, ordered by id.
pub fn group_by_imu(records: &[StreamRecord]) -> BTreeMap<u32, Vec<ImuSample>> {
    let mut out: BTreeMap<u32, Vec<ImuSample>> = BTreeMap::new();
    for r in records {
        out.entry(r.imu_id).or_default().push(r.sample);
    }
    out
}

/// Time-ordered interleaving of per-IMU streams (ties broken by id order).
pub fn interleave(streams: &[(u32, &[ImuSample])]) -> Vec<StreamRecord> {
    let mut out: Vec<StreamRecord> = streams
        .iter()
        .flat_map(|(id, s)| s.iter().map(move |&sample| StreamRecord { imu_id: *id, sample }))
        .collect();
    out.sort_by(|a, b| a.sample.t.total_cmp(&b.sample.t));
    out
}

pub fn vimu_to_string(samples: &[VimuSample]) -> String {
    let mut out = String::with_capacity(samples.len() * 180);
    header(&mut out, &VIMU_HEADER);
    for s in samples {
        row(&mut out, std::iter::once(s.t).chain(s.gyro.iter().copied()).chain(s.accel.iter().copied()));
    }
    out
}

pub fn parse_vimu_str(text: &str, path: &Path) -> Result<Vec<VimuSample>, IoError> {
    let mut out: Vec<VimuSample> = Vec::new();
    for (line, v, _) in csv_rows(text, path, &VIMU_HEADER)? {
        if out.last().is_some_and(|p| v[0] <= p.t) {
            return Err(IoError::NonMonotonicTimestamps {
                path: path.to_path_buf(),
                line,
                imu_id: 0,
            });
        }
        out.push(VimuSample {
            t: v[0],
            gyro: Vec3::new(v[1], v[2], v[3]),
            accel: Vec3::new(v[4], v[5], v[6]),
        });
    }
    Ok(out)
}

pub fn write_vimu(path: &Path, samples: &[VimuSample]) -> Result<(), IoError> {
    write_atomic(path, vimu_to_string(samples).as_bytes())
}

pub fn read_vimu(path: &Path) -> Result<Vec<VimuSample>, IoError> {
    parse_vimu_str(&read_text(path)?, path)
}

// -------------------------------------------------------- simulation outputs

const ROT_COLS: [&str; 9] = ["r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22"];

fn cols(groups: &[&[&str]]) -> Vec<String> {
    groups.iter().flat_map(|g| g.iter().map(|s| s.to_string())).collect()
}

fn header_owned(out: &mut String, cols: &[String]) {
    out.push_str(&cols.join(","));
    out.push('\n');
}

pub fn ground_truth_to_string(gt: &GroundTruth) -> String {
    let mut out = String::new();
    header_owned(
        &mut out,
        &cols(&[
            &["t_s"],
            &ROT_COLS,
            &["vx", "vy", "vz", "px", "py", "pz", "wx", "wy", "wz", "fx", "fy", "fz", "alx", "aly", "alz"],
        ]),
    );
    for s in &gt.samples {
        row(
            &mut out,
            std::iter::once(s.t)
                .chain(s.rotation.to_row_major())
                .chain(s.velocity.iter().copied())
                .chain(s.position.iter().copied())
                .chain(s.omega.iter().copied())
                .chain(s.specific_force.iter().copied())
                .chain(s.alpha.iter().copied()),
        );
    }
    out
}

pub fn landmarks_to_string(frames: &[CameraFrame]) -> String {
    let mut out = String::new();
    header(&mut out, &["t_s", "u", "v", "lx", "ly", "lz", "sigma_px"]);
    for o in frames.iter().flat_map(|f| &f.observations) {
        row(
            &mut out,
            [o.t, o.pixel[0], o.pixel[1], o.landmark.x, o.landmark.y, o.landmark.z, o.sigma_px],
        );
    }
    out
}

pub fn estimates_to_string(est: &[EstimateSample]) -> String {
    const SD: [&str; 15] = [
        "sd_rx", "sd_ry", "sd_rz", "sd_vx", "sd_vy", "sd_vz", "sd_px", "sd_py", "sd_pz", "sd_bgx", "sd_bgy", "sd_bgz",
        "sd_bax", "sd_bay", "sd_baz",
    ];
    let mut out = String::new();
    header_owned(
        &mut out,
        &cols(&[
            &["t_s"],
            &ROT_COLS,
            &["vx", "vy", "vz", "px", "py", "pz", "bgx", "bgy", "bgz", "bax", "bay", "baz"],
            &SD,
        ]),
    );
    for e in est {
        let s = &e.state;
        row(
            &mut out,
            std::iter::once(e.t)
                .chain(s.rotation.to_row_major())
                .chain(s.velocity.iter().copied())
                .chain(s.position.iter().copied())
                .chain(s.gyro_bias.iter().copied())
                .chain(s.accel_bias.iter().copied())
                .chain(e.sigmas.iter().copied()),
        );
    }
    out
}

pub fn errors_to_string(errs: &ErrorSeries) -> String {
    let mut out = String::new();
    header(&mut out, &["t_s", "rot_err_rad", "pos_err_m"]);
    for k in 0..errs.len() {
        row(&mut out, [errs.t[k], errs.rotation[k], errs.position[k]]);
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IoError::InvalidFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
