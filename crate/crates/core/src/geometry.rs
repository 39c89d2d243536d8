//! Platform motion, antenna layout and per-chirp phase-center positions.
//!
//! Three frames are involved: the sensor frame (antenna offsets, boresight
//! along +y), the body frame of the platform (sensor frame mapped through the
//! [`MountingTransform`]) and the navigation frame `n` in which targets, image
//! grids and trajectories live. Body orientation is constant over a pass.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{SarError, SarResult};
use crate::waveform::{RadarWaveformParams, TdmSchedule};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

fn check_rotation(m: &Mat3, what: &str) -> SarResult<()> {
    let ortho = (m.transpose() * m - Mat3::identity()).abs().max();
    let det = m.determinant();
    if !(ortho <= 1e-9 && (det - 1.0).abs() <= 1e-9) {
        return Err(SarError::config(
            what,
            format!("not a proper rotation (|RᵀR - I| = {ortho:.3e}, det = {det:.12})"),
        ));
    }
    Ok(())
}

/// Transmit and receive phase-center offsets in the sensor frame, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaArray {
    pub tx_offsets: Vec<Vec3>,
    pub rx_offsets: Vec<Vec3>,
}

impl AntennaArray {
    /// Receivers spaced λ/2 and transmitters spaced 2λ along the sensor x axis,
    /// the usual layout for a filled virtual array.
    pub fn uniform_linear(wavelength: f64, tx_count: usize, rx_count: usize) -> Self {
        let line = |n: usize, pitch: f64| {
            (0..n)
                .map(|k| Vec3::new(k as f64 * pitch, 0.0, 0.0))
                .collect::<Vec<_>>()
        };
        AntennaArray {
            tx_offsets: line(tx_count, 2.0 * wavelength),
            rx_offsets: line(rx_count, 0.5 * wavelength),
        }
    }

    pub fn for_waveform(p: &RadarWaveformParams) -> Self {
        Self::uniform_linear(p.center_wavelength(), p.tx_count, p.rx_count)
    }

    /// All phase centers at the sensor origin.
    pub fn collocated(tx_count: usize, rx_count: usize) -> Self {
        AntennaArray {
            tx_offsets: vec![Vec3::zeros(); tx_count],
            rx_offsets: vec![Vec3::zeros(); rx_count],
        }
    }

    pub fn check_against(&self, p: &RadarWaveformParams) -> SarResult<()> {
        if self.tx_offsets.len() != p.tx_count || self.rx_offsets.len() != p.rx_count {
            return Err(SarError::config(
                "array",
                format!(
                    "array has {} tx / {} rx elements but the waveform uses {} / {}",
                    self.tx_offsets.len(),
                    self.rx_offsets.len(),
                    p.tx_count,
                    p.rx_count
                ),
            ));
        }
        let finite = self
            .tx_offsets
            .iter()
            .chain(&self.rx_offsets)
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(SarError::config("array", "non-finite antenna offset"));
        }
        Ok(())
    }
}

/// Rigid sensor → body transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MountingTransform {
    translation: Vec3,
    rotation: Mat3,
}

impl MountingTransform {
    pub fn new(translation: Vec3, rotation: Mat3) -> SarResult<Self> {
        check_rotation(&rotation, "mount.rotation")?;
        Ok(MountingTransform {
            translation,
            rotation,
        })
    }

    pub fn identity() -> Self {
        MountingTransform {
            translation: Vec3::zeros(),
            rotation: Mat3::identity(),
        }
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn rotation(&self) -> Mat3 {
        self.rotation
    }

    #[inline]
    pub fn to_body(&self, sensor_offset: &Vec3) -> Vec3 {
        self.translation + self.rotation * sensor_offset
    }
}

impl Default for MountingTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Single-tone sinusoidal sensor vibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationSpec {
    pub frequency_hz: f64,
    pub amplitude_m: f64,
    /// Unit vector in the body frame; the default is the sensor boresight.
    pub direction: Vec3,
    pub phase_rad: f64,
}

impl VibrationSpec {
    pub fn along_boresight(frequency_hz: f64, amplitude_m: f64, phase_rad: f64) -> Self {
        VibrationSpec {
            frequency_hz,
            amplitude_m,
            direction: Vec3::y(),
            phase_rad,
        }
    }

    pub fn validate(&self) -> SarResult<()> {
        if !(self.amplitude_m >= 0.0 && self.amplitude_m.is_finite()) {
            return Err(SarError::config("vibration.amplitude_m", "must be finite and >= 0"));
        }
        if !self.frequency_hz.is_finite() || !self.phase_rad.is_finite() {
            return Err(SarError::config("vibration", "non-finite frequency or phase"));
        }
        if (self.direction.norm() - 1.0).abs() > 1e-12 {
            return Err(SarError::config("vibration.direction", "must have unit norm"));
        }
        Ok(())
    }

    /// Signed displacement along `direction` at time `t`.
    #[inline]
    pub fn displacement(&self, t: f64) -> f64 {
        self.amplitude_m * (2.0 * std::f64::consts::PI * self.frequency_hz * t + self.phase_rad).sin()
    }
}

/// Random-walk navigation error parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    /// Per-axis position random walk, m/√s.
    pub position_sigma: [f64; 3],
    /// Attitude random walk, rad/√s, applied independently about each axis.
    pub angular_sigma: f64,
    pub seed: u64,
}

impl DriftSpec {
    pub fn validate(&self) -> SarResult<()> {
        let ok = self
            .position_sigma
            .iter()
            .chain(std::iter::once(&self.angular_sigma))
            .all(|s| s.is_finite() && *s >= 0.0);
        if !ok {
            return Err(SarError::config("drift", "deviations must be finite and >= 0"));
        }
        Ok(())
    }
}

/// A sampled drift realization, linearly interpolated between knots and held
/// constant after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPath {
    times: Vec<f64>,
    position: Vec<Vec3>,
    attitude: Vec<Vec3>,
}

impl DriftPath {
    /// Knots at `knot_times` (ascending, first knot at t = 0 carries zero error).
    pub fn generate(spec: &DriftSpec, knot_times: &[f64]) -> SarResult<Self> {
        spec.validate()?;
        let mut times = Vec::with_capacity(knot_times.len() + 1);
        if knot_times.first().is_none_or(|&t| t > 0.0) {
            times.push(0.0);
        }
        times.extend_from_slice(knot_times);
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SarError::InvalidArgument("drift knot times must increase".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut position = vec![Vec3::zeros()];
        let mut attitude = vec![Vec3::zeros()];
        for w in times.windows(2) {
            let sq = (w[1] - w[0]).sqrt();
            let mut dp = Vec3::zeros();
            for (axis, sigma) in spec.position_sigma.iter().enumerate() {
                dp[axis] = sigma * sq * unit.sample(&mut rng);
            }
            let mut da = Vec3::zeros();
            for axis in 0..3 {
                da[axis] = spec.angular_sigma * sq * unit.sample(&mut rng);
            }
            position.push(position.last().unwrap() + dp);
            attitude.push(attitude.last().unwrap() + da);
        }
        Ok(DriftPath {
            times,
            position,
            attitude,
        })
    }

    /// Position error and small-angle attitude error (rotation vector) at `t`.
    pub fn at(&self, t: f64) -> (Vec3, Vec3) {
        let n = self.times.len();
        if t <= self.times[0] {
            return (self.position[0], self.attitude[0]);
        }
        if t >= self.times[n - 1] {
            return (self.position[n - 1], self.attitude[n - 1]);
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        let f = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (
            self.position[k].lerp(&self.position[k + 1], f),
            self.attitude[k].lerp(&self.attitude[k + 1], f),
        )
    }
}

/// Straight-line pass with optional vibration and drift.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: Vec3,
    pub velocity: Vec3,
    /// Body → n rotation.
    orientation: Mat3,
    pub vibration: Option<VibrationSpec>,
    pub drift: Option<DriftPath>,
}

impl Trajectory {
    pub fn straight(start: Vec3, velocity: Vec3) -> Self {
        Trajectory {
            start,
            velocity,
            orientation: Mat3::identity(),
            vibration: None,
            drift: None,
        }
    }

    pub fn with_orientation(mut self, orientation: Mat3) -> SarResult<Self> {
        check_rotation(&orientation, "trajectory.orientation")?;
        self.orientation = orientation;
        Ok(self)
    }

    pub fn with_vibration(mut self, vibration: VibrationSpec) -> SarResult<Self> {
        vibration.validate()?;
        self.vibration = Some(vibration);
        Ok(self)
    }

    pub fn with_drift(mut self, drift: DriftPath) -> Self {
        self.drift = Some(drift);
        self
    }

    pub fn orientation(&self) -> Mat3 {
        self.orientation
    }

    /// The same pass without vibration or drift: the trajectory estimate an
    /// imaging processor works from.
    pub fn nominal(&self) -> Self {
        Trajectory {
            vibration: None,
            drift: None,
            ..self.clone()
        }
    }

    /// Nominal straight-line position, without vibration or drift.
    #[inline]
    pub fn base_position(&self, t: f64) -> Vec3 {
        self.start + self.velocity * t
    }

    pub fn platform_position(&self, t: f64) -> Vec3 {
        let mut p = self.base_position(t);
        if let Some(v) = &self.vibration {
            p += (self.orientation * v.direction) * v.displacement(t);
        }
        if let Some(d) = &self.drift {
            p += d.at(t).0;
        }
        p
    }

    /// Body → n rotation including attitude drift.
    fn attitude(&self, t: f64) -> Mat3 {
        match &self.drift {
            Some(d) => {
                let (_, rv) = d.at(t);
                Rotation3::new(rv).into_inner() * self.orientation
            }
            None => self.orientation,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Stop-and-go: one position per chirp, taken at chirp start.
    #[default]
    ChirpStart,
    /// One position per fast-time sample.
    PerFastTimeSample,
}

/// Phase-center positions for every chirp of a recording.
///
/// For chirp `c` and sample `s` (`s < samples_per_chirp`) the active
/// transmitter sits at `tx[c * S + s]` and receiver `j` at
/// `rx[(c * S + s) * rx_count + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPositions {
    pub sampling: Sampling,
    pub samples_per_chirp: usize,
    pub rx_count: usize,
    pub schedule: TdmSchedule,
    /// Straight-line platform position at each chirp start.
    pub base: Vec<Vec3>,
    pub tx: Vec<Vec3>,
    pub rx: Vec<Vec3>,
}

impl ChannelPositions {
    #[inline]
    pub fn tx_at(&self, chirp: usize, sample: usize) -> &Vec3 {
        &self.tx[chirp * self.samples_per_chirp + sample]
    }

    #[inline]
    pub fn rx_at(&self, chirp: usize, rx: usize, sample: usize) -> &Vec3 {
        &self.rx[(chirp * self.samples_per_chirp + sample) * self.rx_count + rx]
    }

    pub fn chirp_count(&self) -> usize {
        self.schedule.len()
    }

    /// Length of the straight-line path between the first and last chirp
    /// covered by the slow-time window `slow`.
    pub fn aperture_length(&self, slow: std::ops::Range<usize>) -> f64 {
        if slow.is_empty() {
            return 0.0;
        }
        let first = self.schedule.chirp_index(0, slow.start);
        let last = self.schedule.chirp_index(self.schedule.tx_count - 1, slow.end - 1);
        (self.base[last] - self.base[first]).norm()
    }

    /// Mean platform speed over the recording, from the base positions.
    pub fn platform_speed(&self) -> f64 {
        let n = self.base.len();
        if n < 2 {
            return 0.0;
        }
        let dt = self.schedule.chirps[n - 1].start_time_s - self.schedule.chirps[0].start_time_s;
        if dt <= 0.0 {
            return 0.0;
        }
        (self.base[n - 1] - self.base[0]).norm() / dt
    }
}

pub fn channel_positions(
    traj: &Trajectory,
    mount: &MountingTransform,
    array: &AntennaArray,
    schedule: &TdmSchedule,
    params: &RadarWaveformParams,
    sampling: Sampling,
) -> SarResult<ChannelPositions> {
    array.check_against(params)?;
    if schedule.tx_count != params.tx_count || schedule.slow_per_frame != params.slow_time_count() {
        return Err(SarError::config(
            "schedule",
            "schedule was built from a different waveform",
        ));
    }
    let samples = match sampling {
        Sampling::ChirpStart => 1,
        Sampling::PerFastTimeSample => params.fast_time_count(),
    };
    let body_tx: Vec<Vec3> = array.tx_offsets.iter().map(|o| mount.to_body(o)).collect();
    let body_rx: Vec<Vec3> = array.rx_offsets.iter().map(|o| mount.to_body(o)).collect();
    let n = schedule.len();
    let mut base = Vec::with_capacity(n);
    let mut tx = Vec::with_capacity(n * samples);
    let mut rx = Vec::with_capacity(n * samples * params.rx_count);
    for c in &schedule.chirps {
        base.push(traj.base_position(c.start_time_s));
        for s in 0..samples {
            let t = c.start_time_s + s as f64 / params.sample_rate_hz;
            let origin = traj.platform_position(t);
            let att = traj.attitude(t);
            tx.push(origin + att * body_tx[c.tx]);
            rx.extend(body_rx.iter().map(|b| origin + att * b));
        }
    }
    Ok(ChannelPositions {
        sampling,
        samples_per_chirp: samples,
        rx_count: params.rx_count,
        schedule: schedule.clone(),
        base,
        tx,
        rx,
    })
}

/// Straight-line distance covered between the first chirp and the last chirp
/// of the first `frames_used` frames.
pub fn synthetic_aperture_length(traj: &Trajectory, schedule: &TdmSchedule, frames_used: usize) -> f64 {
    let per_frame = schedule.len() / schedule.n_frames;
    let used = (frames_used.min(schedule.n_frames) * per_frame).max(1);
    let t0 = schedule.chirps[0].start_time_s;
    let t1 = schedule.chirps[used - 1].start_time_s;
    (traj.base_position(t1) - traj.base_position(t0)).norm()
}
