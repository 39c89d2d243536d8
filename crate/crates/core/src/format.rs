//! Binary complex-array files with JSON sidecars.
//!
//! Layout: `b"SARB1"`, dtype code (`u8`), rank (`u8`), `rank` little-endian
//! `u64` dimensions, then interleaved little-endian `(re, im)` pairs.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::backprojection::{ImageGrid, ImageMeta, SarImage};
use crate::echo::BasebandCube;
use crate::error::{SarError, SarResult};
use crate::geometry::ChannelPositions;
use crate::waveform::RadarWaveformParams;

pub const MAGIC: &[u8; 5] = b"SARB1";
pub const EXTENSION: &str = "sarb";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }

    fn component_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> SarError {
    SarError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `data` with shape `dims`. With [`Dtype::F32`] every component is
/// rounded to single precision.
pub fn write_complex_array(path: &Path, dims: &[usize], data: &[Complex64], dtype: Dtype) -> SarResult<()> {
    if dims.iter().product::<usize>() != data.len() || dims.len() > u8::MAX as usize {
        return Err(SarError::DimensionMismatch(format!(
            "{} samples for dims {dims:?}",
            data.len()
        )));
    }
    let file = fs::File::create(path).map_err(|e| SarError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| SarError::io(path, e));
    put(MAGIC)?;
    put(&[dtype.code(), dims.len() as u8])?;
    for &d in dims {
        put(&(d as u64).to_le_bytes())?;
    }
    for z in data {
        match dtype {
            Dtype::F32 => {
                put(&(z.re as f32).to_le_bytes())?;
                put(&(z.im as f32).to_le_bytes())?;
            }
            Dtype::F64 => {
                put(&z.re.to_le_bytes())?;
                put(&z.im.to_le_bytes())?;
            }
        }
    }
    w.flush().map_err(|e| SarError::io(path, e))
}

pub fn read_complex_array(path: &Path) -> SarResult<(Vec<usize>, Dtype, Vec<Complex64>)> {
    let file = fs::File::open(path).map_err(|e| SarError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut head = [0u8; 7];
    r.read_exact(&mut head).map_err(|_| format_err(path, "truncated header"))?;
    if &head[..5] != MAGIC {
        return Err(format_err(path, "bad magic, not a SARB1 file"));
    }
    let dtype = Dtype::from_code(head[5]).ok_or_else(|| format_err(path, format!("unknown dtype code {}", head[5])))?;
    let mut dims = Vec::with_capacity(head[6] as usize);
    for _ in 0..head[6] {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|_| format_err(path, "truncated dimensions"))?;
        dims.push(usize::try_from(u64::from_le_bytes(b)).map_err(|_| format_err(path, "dimension overflow"))?);
    }
    let n = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| format_err(path, "dimension overflow"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| SarError::io(path, e))?;
    let width = 2 * dtype.component_bytes();
    if bytes.len() != n * width {
        return Err(format_err(
            path,
            format!("expected {} payload bytes, found {}", n * width, bytes.len()),
        ));
    }
    let data = bytes
        .chunks_exact(width)
        .map(|c| match dtype {
            Dtype::F32 => Complex64::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
            ),
            Dtype::F64 => Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            ),
        })
        .collect();
    Ok((dims, dtype, data))
}

/// Sibling sidecar path: `x.sarb` → `x.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeSidecar {
    pub kind: String,
    pub dims: [usize; 4],
    pub dtype: Dtype,
    pub params: RadarWaveformParams,
    pub positions: ChannelPositions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSidecar {
    pub kind: String,
    pub scenario_id: String,
    /// `[ny, nx]`.
    pub dims: [usize; 2],
    pub dtype: Dtype,
    pub grid: ImageGrid,
    pub meta: ImageMeta,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> SarResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| SarError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> SarResult<T> {
    let text = fs::read_to_string(path).map_err(|e| SarError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

fn check_kind(path: &Path, found: &str, expected: &str) -> SarResult<()> {
    if found != expected {
        return Err(format_err(path, format!("sidecar kind is {found:?}, expected {expected:?}")));
    }
    Ok(())
}

pub fn write_cube(path: &Path, cube: &BasebandCube, dtype: Dtype) -> SarResult<()> {
    write_complex_array(path, &cube.dims(), cube.data(), dtype)?;
    write_json(
        &sidecar_path(path),
        &CubeSidecar {
            kind: "baseband_cube".into(),
            dims: cube.dims(),
            dtype,
            params: cube.params,
            positions: cube.positions.clone(),
        },
    )
}

pub fn read_cube(path: &Path) -> SarResult<BasebandCube> {
    let side: CubeSidecar = read_json(&sidecar_path(path))?;
    check_kind(path, &side.kind, "baseband_cube")?;
    let (dims, _, data) = read_complex_array(path)?;
    if dims != side.dims {
        return Err(format_err(path, "dims differ between file and sidecar"));
    }
    BasebandCube::from_parts(side.params, side.positions, side.dims, data)
}

pub fn write_image(path: &Path, image: &SarImage, scenario_id: &str, dtype: Dtype) -> SarResult<()> {
    let (nx, ny) = image.dims();
    write_complex_array(path, &[ny, nx], image.data(), dtype)?;
    write_json(
        &sidecar_path(path),
        &ImageSidecar {
            kind: "sar_image".into(),
            scenario_id: scenario_id.into(),
            dims: [ny, nx],
            dtype,
            grid: image.grid,
            meta: image.meta.clone(),
        },
    )
}

/// Returns the image and the scenario id recorded with it.
pub fn read_image(path: &Path) -> SarResult<(SarImage, String)> {
    let side: ImageSidecar = read_json(&sidecar_path(path))?;
    check_kind(path, &side.kind, "sar_image")?;
    let (dims, _, data) = read_complex_array(path)?;
    let (nx, ny) = side.grid.dims();
    if dims != [ny, nx] || side.dims != [ny, nx] {
        return Err(format_err(path, "dims differ between file, sidecar and grid"));
    }
    Ok((SarImage::from_parts(side.grid, side.meta, data)?, side.scenario_id))
}
