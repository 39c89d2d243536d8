//! Point-target baseband echo synthesis.
//!
//! Each sample is `A · exp{ j·2π/c · (f_start + γ·n/f_s) · r }`, where `r` is the
//! bistatic range `|p_tx − p_t| + |p_rx − p_t|` of the channel pair at that
//! chirp (or at that sample, with per-sample positions).

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{SarError, SarResult};
use crate::geometry::{ChannelPositions, Vec3};
use crate::waveform::RadarWaveformParams;

/// Distances below this are treated as a target sitting on a phase center.
const MIN_RANGE_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointTarget {
    pub position: Vec3,
    pub amplitude: Complex64,
}

impl PointTarget {
    pub fn new(position: Vec3, amplitude: Complex64) -> Self {
        PointTarget { position, amplitude }
    }

    pub fn unit(position: Vec3) -> Self {
        Self::new(position, Complex64::new(1.0, 0.0))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EchoOptions {
    /// When set, amplitudes are scaled by `(R₀/R)²` with `R` the mean one-way range.
    pub amplitude_taper_ref_m: Option<f64>,
}

/// Complex baseband samples indexed `(tx, rx, slow, fast)`, row-major.
///
/// The slow index runs over the whole recording: frame `F`, in-frame slow
/// index `m` maps to `F · slow_per_frame + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandCube {
    pub params: RadarWaveformParams,
    pub positions: ChannelPositions,
    n_tx: usize,
    n_rx: usize,
    n_slow: usize,
    n_fast: usize,
    data: Vec<Complex64>,
}

impl BasebandCube {
    pub fn zeros(params: RadarWaveformParams, positions: ChannelPositions) -> Self {
        let (n_tx, n_rx) = (params.tx_count, params.rx_count);
        let n_slow = positions.schedule.total_slow();
        let n_fast = params.fast_time_count();
        BasebandCube {
            params,
            positions,
            n_tx,
            n_rx,
            n_slow,
            n_fast,
            data: vec![Complex64::new(0.0, 0.0); n_tx * n_rx * n_slow * n_fast],
        }
    }

    /// Builds a cube around existing samples (e.g. read from disk).
    pub fn from_parts(
        params: RadarWaveformParams,
        positions: ChannelPositions,
        dims: [usize; 4],
        data: Vec<Complex64>,
    ) -> SarResult<Self> {
        let cube = Self::zeros(params, positions);
        if cube.dims() != dims || data.len() != dims.iter().product::<usize>() {
            return Err(SarError::DimensionMismatch(format!(
                "cube dims {:?} do not match waveform/schedule dims {:?}",
                dims,
                cube.dims()
            )));
        }
        Ok(BasebandCube { data, ..cube })
    }

    /// Replaces the stored positions, e.g. the true positions used for
    /// synthesis by the navigation estimate used for imaging.
    pub fn with_positions(mut self, positions: ChannelPositions) -> SarResult<Self> {
        if positions.schedule != self.positions.schedule || positions.rx_count != self.n_rx {
            return Err(SarError::DimensionMismatch(
                "replacement positions describe a different recording".into(),
            ));
        }
        self.positions = positions;
        Ok(self)
    }

    /// `[tx, rx, slow, fast]`.
    pub fn dims(&self) -> [usize; 4] {
        [self.n_tx, self.n_rx, self.n_slow, self.n_fast]
    }

    #[inline]
    pub fn index(&self, tx: usize, rx: usize, slow: usize, fast: usize) -> usize {
        ((tx * self.n_rx + rx) * self.n_slow + slow) * self.n_fast + fast
    }

    pub fn row(&self, tx: usize, rx: usize, slow: usize) -> &[Complex64] {
        let s = self.index(tx, rx, slow, 0);
        &self.data[s..s + self.n_fast]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn n_frames(&self) -> usize {
        self.positions.schedule.n_frames
    }

    /// Rounds every sample to single precision, as stored in `f32` files.
    pub fn quantize_f32(&mut self) {
        for z in &mut self.data {
            *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
        }
    }

    /// Multiplies every sample of frame `F` by `exp(j·phases[F])`.
    pub fn apply_frame_phases(&mut self, phases: &[f64]) -> SarResult<()> {
        let spf = self.positions.schedule.slow_per_frame;
        if phases.len() != self.n_frames() {
            return Err(SarError::DimensionMismatch(format!(
                "{} frame phases for {} frames",
                phases.len(),
                self.n_frames()
            )));
        }
        let (n_slow, n_fast) = (self.n_slow, self.n_fast);
        for (k, row) in self.data.chunks_mut(n_fast).enumerate() {
            let rot = Complex64::from_polar(1.0, phases[(k % n_slow) / spf]);
            row.iter_mut().for_each(|z| *z *= rot);
        }
        Ok(())
    }

    fn check_compatible(&self, other: &BasebandCube) -> SarResult<()> {
        if self.dims() != other.dims() {
            return Err(SarError::DimensionMismatch("cube dims differ".into()));
        }
        Ok(())
    }

    /// `self + scale · other`, elementwise.
    pub fn add_scaled(&self, other: &BasebandCube, scale: Complex64) -> SarResult<BasebandCube> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(out)
    }
}

fn check_geometry(
    targets: &[PointTarget],
    positions: &ChannelPositions,
    params: &RadarWaveformParams,
) -> SarResult<()> {
    let gate = params.range_gate();
    for t in targets {
        if !t.position.iter().all(|x| x.is_finite()) || !t.amplitude.norm().is_finite() {
            return Err(SarError::InvalidArgument("non-finite target".into()));
        }
        for c in 0..positions.chirp_count() {
            for s in 0..positions.samples_per_chirp {
                let dt = (positions.tx_at(c, s) - t.position).norm();
                for j in 0..positions.rx_count {
                    let dr = (positions.rx_at(c, j, s) - t.position).norm();
                    if dt < MIN_RANGE_M || dr < MIN_RANGE_M {
                        return Err(SarError::DegenerateGeometry(format!(
                            "target at {:?} coincides with a phase center",
                            t.position.as_slice()
                        )));
                    }
                    if dt + dr >= gate {
                        return Err(SarError::OutsideRangeGate {
                            range_m: dt + dr,
                            gate_m: gate,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn simulate_baseband(
    targets: &[PointTarget],
    positions: &ChannelPositions,
    params: &RadarWaveformParams,
    options: &EchoOptions,
) -> SarResult<BasebandCube> {
    params.validate()?;
    let sched = &positions.schedule;
    if sched.tx_count != params.tx_count
        || sched.slow_per_frame != params.slow_time_count()
        || positions.rx_count != params.rx_count
    {
        return Err(SarError::DimensionMismatch(
            "channel positions were built for a different waveform".into(),
        ));
    }
    check_geometry(targets, positions, params)?;

    let mut cube = BasebandCube::zeros(*params, positions.clone());
    let [_, n_rx, n_slow, n_fast] = cube.dims();
    let k_scale = 2.0 * std::f64::consts::PI / params.propagation_speed_mps;
    let f0 = params.start_frequency_hz;
    let df = params.chirp_slope() / params.sample_rate_hz;
    let per_sample = positions.samples_per_chirp > 1;

    cube.data
        .par_chunks_mut(n_fast)
        .enumerate()
        .for_each(|(row_idx, row)| {
            let slow = row_idx % n_slow;
            let j = (row_idx / n_slow) % n_rx;
            let i = row_idx / (n_slow * n_rx);
            let c = sched.chirp_index(i, slow);
            for t in targets {
                let range_at = |s: usize| {
                    (positions.tx_at(c, s) - t.position).norm() + (positions.rx_at(c, j, s) - t.position).norm()
                };
                let r0 = range_at(0);
                let amp = match options.amplitude_taper_ref_m {
                    Some(ref_m) => t.amplitude * (2.0 * ref_m / r0).powi(2),
                    None => t.amplitude,
                };
                for (n, z) in row.iter_mut().enumerate() {
                    let r = if per_sample { range_at(n) } else { r0 };
                    let phase = k_scale * (f0 + df * n as f64) * r;
                    let (s, co) = phase.sin_cos();
                    *z += amp * Complex64::new(co, s);
                }
            }
        });
    Ok(cube)
}

/// Adds circularly-symmetric white Gaussian noise of `noise_power` per complex sample.
pub fn add_noise(cube: &BasebandCube, noise_power: f64, seed: u64) -> SarResult<BasebandCube> {
    if !(noise_power >= 0.0 && noise_power.is_finite()) {
        return Err(SarError::InvalidArgument(format!(
            "noise power must be finite and >= 0, got {noise_power}"
        )));
    }
    let mut out = cube.clone();
    if noise_power == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (0.5 * noise_power).sqrt()).expect("valid sigma");
    for z in &mut out.data {
        let re = normal.sample(&mut rng);
        let im = normal.sample(&mut rng);
        *z += Complex64::new(re, im);
    }
    Ok(out)
}
