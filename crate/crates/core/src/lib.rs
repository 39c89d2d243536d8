//! Synthetic aperture imaging with a chirp-sequence FMCW TDM-MIMO radar on a
//! moving platform: echo simulation, range compression, time-domain
//! backprojection and image quality measurement.

pub mod backprojection;
pub mod echo;
pub mod error;
pub mod geometry;
pub mod format;
pub mod metrology;
pub mod pipeline;
pub mod range;
pub mod scenario;
pub mod vibration;
pub mod waveform;

pub use backprojection::{form_image, ApertureAnchor, ImageGrid, ImageMeta, SarImage};
pub use echo::{add_noise, simulate_baseband, BasebandCube, EchoOptions, PointTarget};
pub use error::{SarError, SarResult};
pub use geometry::{
    channel_positions, AntennaArray, ChannelPositions, DriftSpec, MountingTransform, Sampling, Trajectory,
    VibrationSpec,
};
pub use metrology::{
    extract_profile, halfpower_width, measure_snr, peak_sidelobe_level, GainCurve, NoiseRegion, ProfileAxis,
    ProfileCut,
};
pub use range::{range_compress, Interpolation, RangeProfileSet, WindowFunction};
pub use waveform::{RadarWaveformParams, TdmSchedule, SPEED_OF_LIGHT};
pub use scenario::Scenario;
