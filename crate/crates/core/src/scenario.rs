//! Declarative experiment description, read from TOML.
//!
//! Unknown keys are rejected everywhere. Distances are meters, angles
//! radians, frequencies hertz.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backprojection::{ApertureAnchor, ImageGrid};
use crate::echo::{EchoOptions, PointTarget};
use crate::error::{SarError, SarResult};
use crate::format::Dtype;
use crate::geometry::{AntennaArray, DriftSpec, Mat3, MountingTransform, Sampling, Trajectory, Vec3, VibrationSpec};
use crate::metrology::{NoiseRegion, ProfileAxis};
use crate::range::{Interpolation, WindowFunction};
use crate::vibration::VibrationDesign;
use crate::waveform::RadarWaveformParams;

fn default_x() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn default_y() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

fn identity() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn one() -> f64 {
    1.0
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn m3(rows: [[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|r, c| rows[r][c])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub storage_precision: Dtype,
    #[serde(default)]
    pub waveform: RadarWaveformParams,
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub mount: MountConfig,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    pub imaging: ImagingConfig,
    #[serde(default)]
    pub metrology: MetrologyConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// Platform velocity. Speed sweeps rescale it, keeping the direction.
    pub velocity: [f64; 3],
    /// Position at t = 0. When omitted the pass is centered on the origin:
    /// `start = −velocity · T/2` with `T` the time of the last chirp.
    #[serde(default)]
    pub start: Option<[f64; 3]>,
    /// Body → navigation rotation, row-major.
    #[serde(default = "identity")]
    pub orientation: [[f64; 3]; 3],
    #[serde(default)]
    pub vibration: Option<VibrationConfig>,
    #[serde(default)]
    pub drift: Option<DriftConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibrationConfig {
    #[serde(default)]
    pub frequency_hz: Option<f64>,
    #[serde(default)]
    pub amplitude_m: Option<f64>,
    /// Derive frequency and amplitude from a desired sidelobe instead.
    #[serde(default)]
    pub design: Option<VibrationDesignConfig>,
    /// Body frame unit vector.
    #[serde(default = "default_y")]
    pub direction: [f64; 3],
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibrationDesignConfig {
    pub x_vib_m: f64,
    pub r_zd_m: f64,
    pub level_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default)]
    pub position_sigma: [f64; 3],
    #[serde(default)]
    pub angular_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    /// Explicit offsets; when both are omitted the uniform linear layout is used.
    #[serde(default)]
    pub tx_offsets: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub rx_offsets: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountConfig {
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "identity")]
    pub rotation: [[f64; 3]; 3],
}

impl Default for MountConfig {
    fn default() -> Self {
        MountConfig {
            translation: [0.0; 3],
            rotation: identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub position: [f64; 3],
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub frames: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub amplitude_taper_ref_m: Option<f64>,
    /// Multiply each frame by an independent uniformly random phase.
    #[serde(default)]
    pub randomize_frame_phase: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Complex white Gaussian noise power per baseband sample.
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub center: [f64; 3],
    #[serde(default = "default_x")]
    pub x_axis: [f64; 3],
    #[serde(default = "default_y")]
    pub y_axis: [f64; 3],
    pub extent: [f64; 2],
    pub spacing: [f64; 2],
}

impl GridConfig {
    pub fn build(&self) -> SarResult<ImageGrid> {
        ImageGrid::centered(
            v3(self.center),
            v3(self.x_axis),
            v3(self.y_axis),
            (self.extent[0], self.extent[1]),
            (self.spacing[0], self.spacing[1]),
        )
    }
}

/// Which slow-time samples form the image. With neither field set the whole
/// recording is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ApertureConfig {
    #[serde(default)]
    pub frames: Option<usize>,
    #[serde(default)]
    pub length_m: Option<f64>,
    #[serde(default)]
    pub anchor: ApertureAnchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub window: WindowFunction,
    #[serde(default)]
    pub interpolation: Interpolation,
    #[serde(default = "default_zero_pad")]
    pub zero_pad: usize,
    #[serde(default)]
    pub aperture: ApertureConfig,
}

fn default_zero_pad() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetrologyConfig {
    /// Cut whose half-power width is reported as `width_m`.
    #[serde(default = "default_axis")]
    pub width_axis: ProfileAxis,
    #[serde(default)]
    pub noise_region: NoiseRegion,
}

fn default_axis() -> ProfileAxis {
    ProfileAxis::CrossRange
}

impl Default for MetrologyConfig {
    fn default() -> Self {
        MetrologyConfig {
            width_axis: default_axis(),
            noise_region: NoiseRegion::Default,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Aperture lengths in meters from one recording.
    ApertureLength,
    /// Frame counts from one recording; a list starting at 1 also yields the
    /// integration gain curve.
    Frames,
    /// Platform speeds in m/s, one recording each.
    Speed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Independent simulations averaged into the gain curve.
    #[serde(default = "one_usize")]
    pub realizations: usize,
    /// Spread vibration starting phases evenly over the realizations.
    #[serde(default)]
    pub vary_vibration_phase: bool,
    #[serde(default)]
    pub integration: crate::metrology::IntegrationMode,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub cube: bool,
    #[serde(default = "yes")]
    pub images: bool,
    #[serde(default)]
    pub image_db_csv: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            cube: false,
            images: true,
            image_db_csv: false,
        }
    }
}

fn finite_vec(field: &str, v: &[f64]) -> SarResult<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(SarError::config(field, "must be finite"))
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> SarResult<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|sp| {
                    let before = &text[..sp.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("{} at line {line}, column {col}", &text[sp.start..sp.end.min(text.len())])
                })
                .unwrap_or_else(|| "toml".into());
            SarError::config(field, e.message().to_string())
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> SarResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SarError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical JSON form; unchanged by TOML re-serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Checks every section and the cross-section consistency.
    pub fn validate(&self) -> SarResult<()> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(SarError::config("id", "must be non-empty and use [A-Za-z0-9_-]"));
        }
        self.waveform.validate().map_err(|e| SarError::config("waveform", e.to_string()))?;
        let t = &self.trajectory;
        finite_vec("trajectory.velocity", &t.velocity)?;
        if let Some(s) = t.start {
            finite_vec("trajectory.start", &s)?;
        }
        self.array()?;
        self.mount()?;
        for (k, tg) in self.targets.iter().enumerate() {
            finite_vec(&format!("targets[{k}].position"), &tg.position)?;
            if !(tg.amplitude.is_finite() && tg.phase_rad.is_finite()) {
                return Err(SarError::config(format!("targets[{k}]"), "amplitude and phase must be finite"));
            }
        }
        if self.simulation.frames == 0 {
            return Err(SarError::config("simulation.frames", "must be >= 1"));
        }
        if let Some(r) = self.simulation.amplitude_taper_ref_m {
            if !(r > 0.0 && r.is_finite()) {
                return Err(SarError::config("simulation.amplitude_taper_ref_m", "must be > 0"));
            }
        }
        if let Some(n) = &self.noise {
            if !(n.power >= 0.0 && n.power.is_finite()) {
                return Err(SarError::config("noise.power", "must be finite and >= 0"));
            }
        }
        let im = &self.imaging;
        im.grid.build().map_err(|e| match e {
            SarError::Config { field, message } => SarError::config(format!("imaging.{field}"), message),
            other => other,
        })?;
        if im.zero_pad == 0 {
            return Err(SarError::config("imaging.zero_pad", "must be >= 1"));
        }
        let ap = &im.aperture;
        if ap.frames.is_some() && ap.length_m.is_some() {
            return Err(SarError::config("imaging.aperture", "set at most one of frames and length_m"));
        }
        if let Some(f) = ap.frames {
            if f == 0 || f > self.simulation.frames {
                return Err(SarError::config(
                    "imaging.aperture.frames",
                    format!("must be in 1..={}", self.simulation.frames),
                ));
            }
        }
        if let Some(l) = ap.length_m {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(SarError::config("imaging.aperture.length_m", "must be finite and >= 0"));
            }
        }
        if let NoiseRegion::RangeOffset { cells } = self.metrology.noise_region {
            if !(cells >= 0.0 && cells.is_finite()) {
                return Err(SarError::config("metrology.noise_region.cells", "must be finite and >= 0"));
            }
        }
        self.vibration_spec(self.speed(), 0)?;
        if let Some(d) = &t.drift {
            let spec = DriftSpec {
                position_sigma: d.position_sigma,
                angular_sigma: d.angular_sigma,
                seed: 0,
            };
            spec.validate().map_err(|e| SarError::config("trajectory.drift", e.to_string()))?;
        }
        if let Some(sw) = &self.sweep {
            self.validate_sweep(sw)?;
        }
        Ok(())
    }

    fn validate_sweep(&self, sw: &SweepConfig) -> SarResult<()> {
        if sw.values.is_empty() {
            return Err(SarError::config("sweep.values", "must not be empty"));
        }
        finite_vec("sweep.values", &sw.values)?;
        if sw.realizations == 0 {
            return Err(SarError::config("sweep.realizations", "must be >= 1"));
        }
        if sw.vary_vibration_phase && self.trajectory.vibration.is_none() {
            return Err(SarError::config(
                "sweep.vary_vibration_phase",
                "requires trajectory.vibration",
            ));
        }
        match sw.axis {
            SweepAxis::ApertureLength => {
                if sw.values.iter().any(|&v| v < 0.0) {
                    return Err(SarError::config("sweep.values", "aperture lengths must be >= 0"));
                }
            }
            SweepAxis::Frames => {
                for &v in &sw.values {
                    if v < 1.0 || v.fract() != 0.0 || v as usize > self.simulation.frames {
                        return Err(SarError::config(
                            "sweep.values",
                            format!("frame counts must be integers in 1..={}", self.simulation.frames),
                        ));
                    }
                }
                if sw.values.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(SarError::config("sweep.values", "frame counts must strictly increase"));
                }
            }
            SweepAxis::Speed => {
                if sw.values.iter().any(|&v| v <= 0.0) {
                    return Err(SarError::config("sweep.values", "speeds must be > 0"));
                }
                if self.speed() == 0.0 {
                    return Err(SarError::config(
                        "trajectory.velocity",
                        "a speed sweep needs a nonzero velocity to take the direction from",
                    ));
                }
            }
        }
        if sw.realizations > 1 && sw.axis != SweepAxis::Frames {
            return Err(SarError::config("sweep.realizations", "only frame sweeps average realizations"));
        }
        Ok(())
    }

    pub fn speed(&self) -> f64 {
        v3(self.trajectory.velocity).norm()
    }

    pub fn array(&self) -> SarResult<AntennaArray> {
        let a = &self.array;
        let arr = match (&a.tx_offsets, &a.rx_offsets) {
            (None, None) => AntennaArray::for_waveform(&self.waveform),
            (Some(tx), Some(rx)) => AntennaArray {
                tx_offsets: tx.iter().copied().map(v3).collect(),
                rx_offsets: rx.iter().copied().map(v3).collect(),
            },
            _ => return Err(SarError::config("array", "give both tx_offsets and rx_offsets or neither")),
        };
        arr.check_against(&self.waveform)
            .map_err(|e| SarError::config("array", e.to_string()))?;
        Ok(arr)
    }

    pub fn mount(&self) -> SarResult<MountingTransform> {
        finite_vec("mount.translation", &self.mount.translation)?;
        MountingTransform::new(v3(self.mount.translation), m3(self.mount.rotation))
            .map_err(|e| SarError::config("mount.rotation", e.to_string()))
    }

    pub fn targets(&self) -> Vec<PointTarget> {
        self.targets
            .iter()
            .map(|t| PointTarget::new(v3(t.position), Complex64::from_polar(t.amplitude, t.phase_rad)))
            .collect()
    }

    pub fn echo_options(&self) -> EchoOptions {
        EchoOptions {
            amplitude_taper_ref_m: self.simulation.amplitude_taper_ref_m,
        }
    }

    /// Vibration for realization `k` at platform speed `speed`.
    pub fn vibration_spec(&self, speed: f64, realization: usize) -> SarResult<Option<VibrationSpec>> {
        let Some(v) = &self.trajectory.vibration else {
            return Ok(None);
        };
        let (frequency_hz, amplitude_m) = match (&v.design, v.frequency_hz, v.amplitude_m) {
            (Some(d), None, None) => {
                let design = VibrationDesign::new(d.x_vib_m, d.r_zd_m, speed, self.waveform.center_wavelength(), d.level_db)
                    .map_err(|e| SarError::config("trajectory.vibration.design", e.to_string()))?;
                (design.frequency_hz, design.amplitude_m)
            }
            (None, Some(f), Some(a)) => (f, a),
            _ => {
                return Err(SarError::config(
                    "trajectory.vibration",
                    "give either frequency_hz and amplitude_m, or design",
                ))
            }
        };
        let mut phase_rad = v.phase_rad;
        if let Some(sw) = &self.sweep {
            if sw.vary_vibration_phase {
                phase_rad += std::f64::consts::TAU * realization as f64 / sw.realizations as f64;
            }
        }
        let spec = VibrationSpec {
            frequency_hz,
            amplitude_m,
            direction: v3(v.direction),
            phase_rad,
        };
        spec.validate().map_err(|e| match e {
            SarError::Config { field, message } => SarError::config(format!("trajectory.{field}"), message),
            other => other,
        })?;
        Ok(Some(spec))
    }

    /// Nominal (noise-, vibration- and drift-free) pass at `speed`, with start
    /// defaulting to a pass centered on the origin.
    pub fn base_trajectory(&self, speed: f64, last_chirp_time: f64) -> SarResult<Trajectory> {
        let v0 = v3(self.trajectory.velocity);
        let velocity = if v0.norm() > 0.0 { v0 * (speed / v0.norm()) } else { v0 };
        let start = match self.trajectory.start {
            Some(s) => v3(s),
            None => -velocity * (0.5 * last_chirp_time),
        };
        Trajectory::straight(start, velocity).with_orientation(m3(self.trajectory.orientation))
    }

    pub fn drift_spec(&self, seed: u64) -> Option<DriftSpec> {
        self.trajectory.drift.as_ref().map(|d| DriftSpec {
            position_sigma: d.position_sigma,
            angular_sigma: d.angular_sigma,
            seed,
        })
    }
}
