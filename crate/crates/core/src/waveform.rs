//! Chirp-sequence FMCW waveform parameters and the TDM-MIMO transmit schedule.
//!
//! A frame is `chirps_per_frame` linear chirps spaced `chirp_interval` apart.
//! The transmitters take turns: chirp `k` of a frame is sent by transmitter
//! `k mod tx_count`, so every transmitter contributes `chirps_per_frame / tx_count`
//! slow-time samples per frame. Time zero is the start of the first chirp of
//! the recording.

use serde::{Deserialize, Serialize};

use crate::error::{SarError, SarResult};

/// Vacuum speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Waveform description shared by every stage of the pipeline.
///
/// `Default` gives the 76-80 GHz automotive sensor configuration used by the
/// bundled scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarWaveformParams {
    pub start_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub chirp_duration_s: f64,
    /// Spacing between consecutive chirps of a frame (any transmitter).
    pub chirp_interval_s: f64,
    pub chirps_per_frame: usize,
    pub frame_interval_s: f64,
    pub sample_rate_hz: f64,
    pub tx_count: usize,
    pub rx_count: usize,
    pub propagation_speed_mps: f64,
}

impl Default for RadarWaveformParams {
    fn default() -> Self {
        RadarWaveformParams {
            start_frequency_hz: 76e9,
            bandwidth_hz: 4e9,
            chirp_duration_s: 180e-6,
            chirp_interval_s: 200e-6,
            chirps_per_frame: 256,
            frame_interval_s: 52e-3,
            sample_rate_hz: 977e3,
            tx_count: 4,
            rx_count: 4,
            propagation_speed_mps: SPEED_OF_LIGHT,
        }
    }
}

/// `floor(x)`, except that products which are integral up to rounding noise
/// (e.g. `1e-3 * 1e6`) snap to the integer.
pub(crate) fn floor_snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

impl RadarWaveformParams {
    pub fn validate(&self) -> SarResult<()> {
        let bad = |m: String| Err(SarError::InvalidWaveform(m));
        let positive = [
            ("start_frequency_hz", self.start_frequency_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("chirp_duration_s", self.chirp_duration_s),
            ("chirp_interval_s", self.chirp_interval_s),
            ("frame_interval_s", self.frame_interval_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("propagation_speed_mps", self.propagation_speed_mps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if self.tx_count == 0 || self.rx_count == 0 {
            return bad("tx_count and rx_count must be >= 1".into());
        }
        if self.chirps_per_frame == 0 || self.chirps_per_frame % self.tx_count != 0 {
            return bad(format!(
                "chirps_per_frame ({}) must be a positive multiple of tx_count ({})",
                self.chirps_per_frame, self.tx_count
            ));
        }
        if self.chirp_duration_s > self.chirp_interval_s {
            return bad("chirp_duration_s exceeds chirp_interval_s".into());
        }
        if self.chirps_per_frame as f64 * self.chirp_interval_s > self.frame_interval_s * (1.0 + 1e-12) {
            return bad("chirps of one frame do not fit in frame_interval_s".into());
        }
        if self.fast_time_count() < 2 {
            return bad("fewer than two fast-time samples per chirp".into());
        }
        Ok(())
    }

    /// Chirp rate, Hz/s.
    pub fn chirp_slope(&self) -> f64 {
        self.bandwidth_hz / self.chirp_duration_s
    }

    pub fn center_frequency(&self) -> f64 {
        self.start_frequency_hz + 0.5 * self.bandwidth_hz
    }

    /// Wavelength at the chirp center frequency.
    pub fn center_wavelength(&self) -> f64 {
        self.propagation_speed_mps / self.center_frequency()
    }

    /// ADC samples per chirp; a fractional product truncates.
    pub fn fast_time_count(&self) -> usize {
        floor_snapped(self.chirp_duration_s * self.sample_rate_hz).max(0.0) as usize
    }

    /// Slow-time samples per transmitter and frame.
    pub fn slow_time_count(&self) -> usize {
        self.chirps_per_frame / self.tx_count
    }

    /// Largest two-way range whose beat frequency stays below the complex
    /// sample rate.
    pub fn range_gate(&self) -> f64 {
        self.propagation_speed_mps * self.sample_rate_hz / self.chirp_slope()
    }

    pub fn build_schedule(&self, n_frames: usize) -> SarResult<TdmSchedule> {
        TdmSchedule::new(self, n_frames)
    }
}

/// One transmitted chirp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpDescriptor {
    pub frame: usize,
    /// Slow-time index within the frame.
    pub slow: usize,
    pub tx: usize,
    pub start_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdmSchedule {
    pub tx_count: usize,
    pub slow_per_frame: usize,
    pub n_frames: usize,
    pub chirps: Vec<ChirpDescriptor>,
}

impl TdmSchedule {
    pub fn new(p: &RadarWaveformParams, n_frames: usize) -> SarResult<Self> {
        p.validate()?;
        if n_frames == 0 {
            return Err(SarError::InvalidArgument("n_frames must be >= 1".into()));
        }
        let mut chirps = Vec::with_capacity(n_frames * p.chirps_per_frame);
        for frame in 0..n_frames {
            for k in 0..p.chirps_per_frame {
                chirps.push(ChirpDescriptor {
                    frame,
                    slow: k / p.tx_count,
                    tx: k % p.tx_count,
                    start_time_s: frame as f64 * p.frame_interval_s + k as f64 * p.chirp_interval_s,
                });
            }
        }
        Ok(TdmSchedule {
            tx_count: p.tx_count,
            slow_per_frame: p.slow_time_count(),
            n_frames,
            chirps,
        })
    }

    pub fn len(&self) -> usize {
        self.chirps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chirps.is_empty()
    }

    /// Slow-time samples per transmitter over the whole recording.
    pub fn total_slow(&self) -> usize {
        self.n_frames * self.slow_per_frame
    }

    /// Index into `chirps` of transmitter `tx` at recording-wide slow index `slow`.
    #[inline]
    pub fn chirp_index(&self, tx: usize, slow: usize) -> usize {
        slow * self.tx_count + tx
    }

    pub fn chirp(&self, tx: usize, slow: usize) -> &ChirpDescriptor {
        &self.chirps[self.chirp_index(tx, slow)]
    }
}
