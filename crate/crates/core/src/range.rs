//! Range compression: windowed, zero-padded fast-time DFT.
//!
//! The forward DFT is unnormalized, so for every row
//! `Σ|w·s|² = (1/N_dft)·Σ|S|²`. Bin `k` sits at two-way range
//! `k · c · f_s / (γ · N_dft)`.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::echo::BasebandCube;
use crate::error::{SarError, SarResult};
use crate::waveform::RadarWaveformParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowFunction {
    Rectangular,
    #[default]
    Hann,
}

impl WindowFunction {
    /// Half-power main-lobe width in units of the inverse bandwidth.
    pub fn broadening_factor(self) -> f64 {
        match self {
            WindowFunction::Rectangular => 0.88448,
            WindowFunction::Hann => 1.4381,
        }
    }

    /// Periodic window coefficients.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowFunction::Rectangular => vec![1.0; n],
            WindowFunction::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
                .collect(),
        }
    }
}

pub fn predicted_range_resolution(p: &RadarWaveformParams, window: WindowFunction) -> f64 {
    window.broadening_factor() * p.propagation_speed_mps / (2.0 * p.bandwidth_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    #[default]
    Linear,
}

/// Range profiles indexed `(tx, rx, slow, bin)` with an affine two-way range axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfileSet {
    dims: [usize; 4],
    zero_pad: usize,
    window: WindowFunction,
    /// Two-way range per bin, meters.
    bin_spacing: f64,
    /// Phase advance between adjacent bins near a target's peak, radians.
    bin_phase_step: f64,
    data: Vec<Complex64>,
}

impl RangeProfileSet {
    /// `[tx, rx, slow, bins]`.
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn zero_pad(&self) -> usize {
        self.zero_pad
    }

    pub fn window(&self) -> WindowFunction {
        self.window
    }

    pub fn bin_spacing(&self) -> f64 {
        self.bin_spacing
    }

    /// The fast-time phase origin is the first sample, so a target's profile
    /// rotates by this much per bin across its main lobe.
    pub fn bin_phase_step(&self) -> f64 {
        self.bin_phase_step
    }

    pub fn n_bins(&self) -> usize {
        self.dims[3]
    }

    /// Two-way range of bin `k`.
    pub fn range_of_bin(&self, k: f64) -> f64 {
        k * self.bin_spacing
    }

    /// Fractional bin of two-way range `r`.
    pub fn bin_of_range(&self, r: f64) -> f64 {
        r / self.bin_spacing
    }

    /// Largest two-way range that can be interpolated.
    pub fn max_range(&self, interp: Interpolation) -> f64 {
        let last = self.n_bins() as f64 - 1.0;
        match interp {
            Interpolation::Linear => self.range_of_bin(last),
            Interpolation::Nearest => self.range_of_bin(last + 0.5),
        }
    }

    pub fn row(&self, tx: usize, rx: usize, slow: usize) -> &[Complex64] {
        let n = self.dims[3];
        let s = ((tx * self.dims[1] + rx) * self.dims[2] + slow) * n;
        &self.data[s..s + n]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Profile value at two-way range `r`; `None` outside the axis.
    pub fn sample(&self, tx: usize, rx: usize, slow: usize, r: f64, interp: Interpolation) -> Option<Complex64> {
        sample_row(self.row(tx, rx, slow), r / self.bin_spacing, interp)
    }

    /// Writes `range_m, magnitude_db, phase_rad` rows for one channel; range is one-way.
    pub fn write_csv<W: std::io::Write>(&self, tx: usize, rx: usize, slow: usize, mut w: W) -> std::io::Result<()> {
        let row = self.row(tx, rx, slow);
        let peak = row.iter().map(|z| z.norm()).fold(0.0, f64::max);
        writeln!(w, "range_m,magnitude_db,phase_rad")?;
        for (k, z) in row.iter().enumerate() {
            let db = if peak > 0.0 {
                20.0 * (z.norm() / peak).log10()
            } else {
                f64::NEG_INFINITY
            };
            writeln!(w, "{},{},{}", 0.5 * self.range_of_bin(k as f64), db, z.arg())?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sample_row(row: &[Complex64], bin: f64, interp: Interpolation) -> Option<Complex64> {
    if !(bin >= 0.0) {
        return None;
    }
    match interp {
        Interpolation::Nearest => row.get((bin + 0.5) as usize).copied(),
        Interpolation::Linear => {
            let k = bin as usize;
            let f = bin - k as f64;
            if k + 1 < row.len() {
                Some(row[k] + (row[k + 1] - row[k]) * f)
            } else if k + 1 == row.len() && f == 0.0 {
                Some(row[k])
            } else {
                None
            }
        }
    }
}

pub fn range_compress(cube: &BasebandCube, window: WindowFunction, zero_pad: usize) -> SarResult<RangeProfileSet> {
    if zero_pad < 1 {
        return Err(SarError::InvalidArgument("zero_pad_factor must be >= 1".into()));
    }
    let [n_tx, n_rx, n_slow, n_fast] = cube.dims();
    let n_dft = n_fast * zero_pad;
    let fft = FftPlanner::new().plan_fft_forward(n_dft);
    let w = window.coefficients(n_fast);
    let mut data = vec![Complex64::new(0.0, 0.0); n_tx * n_rx * n_slow * n_dft];
    data.par_chunks_mut(n_dft)
        .zip(cube.data().par_chunks(n_fast))
        .for_each_init(
            || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, (out, input)| {
                for (o, (s, wk)) in out.iter_mut().zip(input.iter().zip(&w)) {
                    *o = s * wk;
                }
                fft.process_with_scratch(out, scratch);
            },
        );
    let p = &cube.params;
    Ok(RangeProfileSet {
        dims: [n_tx, n_rx, n_slow, n_dft],
        zero_pad,
        window,
        bin_spacing: p.propagation_speed_mps * p.sample_rate_hz / (p.chirp_slope() * n_dft as f64),
        bin_phase_step: -std::f64::consts::PI * (n_fast as f64 - 1.0) / n_dft as f64,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::echo::{simulate_baseband, EchoOptions, PointTarget};
    use crate::geometry::{channel_positions, AntennaArray, MountingTransform, Sampling, Trajectory, Vec3};

    fn single_channel_cube(range_m: f64) -> BasebandCube {
        let p = RadarWaveformParams {
            tx_count: 1,
            rx_count: 1,
            chirps_per_frame: 1,
            ..Default::default()
        };
        let s = p.build_schedule(1).unwrap();
        let traj = Trajectory::straight(Vec3::zeros(), Vec3::zeros());
        let pos = channel_positions(
            &traj,
            &MountingTransform::identity(),
            &AntennaArray::collocated(1, 1),
            &s,
            &p,
            Sampling::ChirpStart,
        )
        .unwrap();
        simulate_baseband(
            &[PointTarget::unit(Vec3::new(0.0, range_m, 0.0))],
            &pos,
            &p,
            &EchoOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn window_factors() {
        assert_eq!(WindowFunction::Rectangular.broadening_factor(), 0.88448);
        assert_eq!(WindowFunction::Hann.broadening_factor(), 1.4381);
        let w = WindowFunction::Hann.coefficients(4);
        assert_eq!(w[0], 0.0);
        assert!((w[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn predicted_resolution_examples() {
        let p = RadarWaveformParams::default();
        let hann = predicted_range_resolution(&p, WindowFunction::Hann);
        let rect = predicted_range_resolution(&p, WindowFunction::Rectangular);
        assert!((hann - 53.9e-3).abs() < 0.05e-3, "{hann}");
        assert!((rect - 33.15e-3).abs() < 0.05e-3, "{rect}");
        let wide = RadarWaveformParams { bandwidth_hz: 8e9, ..p };
        assert!((predicted_range_resolution(&wide, WindowFunction::Hann) * 2.0 - hann).abs() < 1e-15);
    }

    #[test]
    fn zero_pad_zero_rejected() {
        let cube = single_channel_cube(2.0);
        assert!(range_compress(&cube, WindowFunction::Hann, 0).is_err());
    }

    #[test]
    fn zero_cube_zero_profiles() {
        let cube = BasebandCube::zeros(single_channel_cube(2.0).params, single_channel_cube(2.0).positions);
        let rp = range_compress(&cube, WindowFunction::Hann, 4).unwrap();
        assert!(rp.data().iter().all(|z| z.norm() == 0.0));
        assert_eq!(rp.n_bins(), 700);
    }

    #[test]
    fn parseval_holds() {
        let cube = single_channel_cube(1.7);
        for zp in [1, 4, 8] {
            let rp = range_compress(&cube, WindowFunction::Hann, zp).unwrap();
            let w = WindowFunction::Hann.coefficients(175);
            let time: f64 = cube.row(0, 0, 0).iter().zip(&w).map(|(s, wk)| (s * wk).norm_sqr()).sum();
            let freq: f64 = rp.row(0, 0, 0).iter().map(|z| z.norm_sqr()).sum::<f64>() / rp.n_bins() as f64;
            assert!((time - freq).abs() / time < 1e-9);
        }
    }

    #[test]
    fn on_bin_peak_phase_matches_carrier() {
        // Pick a range that lands exactly on a bin of the unpadded axis.
        let p = RadarWaveformParams::default();
        let spacing = p.propagation_speed_mps * p.sample_rate_hz / (p.chirp_slope() * 175.0);
        let two_way = 50.0 * spacing;
        let cube = single_channel_cube(two_way / 2.0);
        let rp = range_compress(&cube, WindowFunction::Rectangular, 1).unwrap();
        let row = rp.row(0, 0, 0);
        let (k, _) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        assert_eq!(k, 50);
        let carrier = 2.0 * std::f64::consts::PI * p.start_frequency_hz / p.propagation_speed_mps * two_way;
        let expected = Complex64::from_polar(1.0, carrier);
        let got = row[50] / row[50].norm();
        assert!((got / expected).arg().abs() < 1e-3);
        assert!((row[50].norm() - 175.0).abs() < 1e-6);
    }

    #[test]
    fn interpolation_edges() {
        let row = vec![Complex64::new(1.0, 0.0), Complex64::new(3.0, 0.0)];
        assert_eq!(sample_row(&row, 0.5, Interpolation::Linear), Some(Complex64::new(2.0, 0.0)));
        assert_eq!(sample_row(&row, 1.0, Interpolation::Linear), Some(Complex64::new(3.0, 0.0)));
        assert_eq!(sample_row(&row, 1.2, Interpolation::Linear), None);
        assert_eq!(sample_row(&row, 1.4, Interpolation::Nearest), Some(Complex64::new(3.0, 0.0)));
        assert_eq!(sample_row(&row, 1.6, Interpolation::Nearest), None);
        assert_eq!(sample_row(&row, -0.1, Interpolation::Linear), None);
    }

    #[test]
    fn csv_export_has_header_and_one_way_range() {
        let cube = single_channel_cube(2.0);
        let rp = range_compress(&cube, WindowFunction::Hann, 2).unwrap();
        let mut buf = Vec::new();
        rp.write_csv(0, 0, 0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("range_m,magnitude_db,phase_rad"));
        assert_eq!(lines.count(), 350);
    }
}
