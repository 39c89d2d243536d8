use std::path::PathBuf;

use thiserror::Error;

pub type SarResult<T> = Result<T, SarError>;

#[derive(Debug, Error)]
pub enum SarError {
    #[error("invalid waveform parameters: {0}")]
    InvalidWaveform(String),

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("target outside unambiguous range gate: two-way range {range_m:.4} m exceeds {gate_m:.4} m")]
    OutsideRangeGate { range_m: f64, gate_m: f64 },

    #[error("grid maps outside the range axis: {0}")]
    GridOutsideRangeAxis(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("main lobe unresolved at grid extent ({0} side)")]
    MainLobeUnresolved(&'static str),

    #[error("no sidelobe found outside the main lobe")]
    NoSidelobe,

    #[error("degenerate image: {0}")]
    DegenerateImage(String),

    #[error("noise floor is zero; SNR is unbounded")]
    ZeroNoiseFloor,

    #[error("noise region overlaps the peak neighbourhood")]
    NoiseRegionOverlapsPeak,

    #[error("modulation index {0} outside [0, first zero of J0)")]
    ModulationOutOfDomain(f64),

    #[error("sidelobe level {0} dB outside the model (must be < 0 dB)")]
    SidelobeLevelOutOfModel(f64),

    #[error("bad file format in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SarError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        SarError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SarError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            SarError::InvalidWaveform(_) => "invalid_waveform",
            SarError::Config { .. } => "config",
            SarError::DegenerateGeometry(_) => "degenerate_geometry",
            SarError::OutsideRangeGate { .. } => "outside_range_gate",
            SarError::GridOutsideRangeAxis(_) => "grid_outside_range_axis",
            SarError::DimensionMismatch(_) => "dimension_mismatch",
            SarError::InvalidArgument(_) => "invalid_argument",
            SarError::MainLobeUnresolved(_) => "main_lobe_unresolved",
            SarError::NoSidelobe => "no_sidelobe",
            SarError::DegenerateImage(_) => "degenerate_image",
            SarError::ZeroNoiseFloor => "zero_noise_floor",
            SarError::NoiseRegionOverlapsPeak => "noise_region_overlaps_peak",
            SarError::ModulationOutOfDomain(_) => "modulation_out_of_domain",
            SarError::SidelobeLevelOutOfModel(_) => "sidelobe_level_out_of_model",
            SarError::Format { .. } => "format",
            SarError::Io { .. } => "io",
        }
    }
}

impl Clone for SarError {
    fn clone(&self) -> Self {
        use SarError::*;
        match self {
            InvalidWaveform(m) => InvalidWaveform(m.clone()),
            Config { field, message } => Config {
                field: field.clone(),
                message: message.clone(),
            },
            DegenerateGeometry(m) => DegenerateGeometry(m.clone()),
            OutsideRangeGate { range_m, gate_m } => OutsideRangeGate {
                range_m: *range_m,
                gate_m: *gate_m,
            },
            GridOutsideRangeAxis(m) => GridOutsideRangeAxis(m.clone()),
            DimensionMismatch(m) => DimensionMismatch(m.clone()),
            InvalidArgument(m) => InvalidArgument(m.clone()),
            MainLobeUnresolved(side) => MainLobeUnresolved(side),
            NoSidelobe => NoSidelobe,
            DegenerateImage(m) => DegenerateImage(m.clone()),
            ZeroNoiseFloor => ZeroNoiseFloor,
            NoiseRegionOverlapsPeak => NoiseRegionOverlapsPeak,
            ModulationOutOfDomain(a) => ModulationOutOfDomain(*a),
            SidelobeLevelOutOfModel(l) => SidelobeLevelOutOfModel(*l),
            Format { path, message } => Format {
                path: path.clone(),
                message: message.clone(),
            },
            // io::Error is not Clone; keep its kind and text.
            Io { path, source } => Io {
                path: path.clone(),
                source: std::io::Error::new(source.kind(), source.to_string()),
            },
        }
    }
}
