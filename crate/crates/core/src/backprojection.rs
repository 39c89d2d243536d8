//! Time-domain backprojection onto a planar grid.
//!
//! For every grid point `q` the image value is
//! `Σ_i Σ_j Σ_m S_ij[m, r_ij(q)] · exp(−j·2π·f_start·r_ij(q)/c)`, where `S` is the
//! range profile interpolated at the exact two-way range `r_ij(q)`. Linear
//! interpolation follows the profile's known phase rotation between bins, so
//! the magnitude does not dip between bins. The sums
//! run in that order (tx, rx, slow time ascending) for every grid point, so
//! images are reproducible bit for bit regardless of thread count.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{SarError, SarResult};
use crate::geometry::{ChannelPositions, Vec3};
use crate::range::{predicted_range_resolution, sample_row, Interpolation, RangeProfileSet, WindowFunction};
use crate::waveform::{floor_snapped, RadarWaveformParams};

/// Rectangular grid in the plane spanned by two orthonormal axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    /// Position of grid point (0, 0).
    pub origin: Vec3,
    pub x_axis: Vec3,
    pub y_axis: Vec3,
    pub width: f64,
    pub height: f64,
    pub dx: f64,
    pub dy: f64,
}

impl ImageGrid {
    pub fn new(origin: Vec3, x_axis: Vec3, y_axis: Vec3, extent: (f64, f64), spacing: (f64, f64)) -> SarResult<Self> {
        let g = ImageGrid {
            origin,
            x_axis,
            y_axis,
            width: extent.0,
            height: extent.1,
            dx: spacing.0,
            dy: spacing.1,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid whose middle point sits at `center`.
    pub fn centered(center: Vec3, x_axis: Vec3, y_axis: Vec3, extent: (f64, f64), spacing: (f64, f64)) -> SarResult<Self> {
        let mut g = Self::new(center, x_axis, y_axis, extent, spacing)?;
        let (nx, ny) = g.dims();
        g.origin = center - x_axis * (0.5 * (nx - 1) as f64 * g.dx) - y_axis * (0.5 * (ny - 1) as f64 * g.dy);
        Ok(g)
    }

    pub fn validate(&self) -> SarResult<()> {
        for (name, a) in [("x_axis", self.x_axis), ("y_axis", self.y_axis)] {
            if (a.norm() - 1.0).abs() > 1e-12 {
                return Err(SarError::config(format!("grid.{name}"), "must be a unit vector"));
            }
        }
        if self.x_axis.dot(&self.y_axis).abs() > 1e-12 {
            return Err(SarError::config("grid", "axes are not orthogonal"));
        }
        if !(self.dx > 0.0 && self.dy > 0.0) {
            return Err(SarError::config("grid", "spacing must be > 0"));
        }
        if !(self.width >= 0.0 && self.height >= 0.0) || !self.origin.iter().all(|v| v.is_finite()) {
            return Err(SarError::config("grid", "extent must be >= 0 and origin finite"));
        }
        Ok(())
    }

    /// `(nx, ny)`.
    pub fn dims(&self) -> (usize, usize) {
        (
            floor_snapped(self.width / self.dx) as usize + 1,
            floor_snapped(self.height / self.dy) as usize + 1,
        )
    }

    pub fn len(&self) -> usize {
        let (nx, ny) = self.dims();
        nx * ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn point(&self, ix: usize, iy: usize) -> Vec3 {
        self.origin + self.x_axis * (ix as f64 * self.dx) + self.y_axis * (iy as f64 * self.dy)
    }

    pub fn center(&self) -> Vec3 {
        let (nx, ny) = self.dims();
        self.origin + self.x_axis * (0.5 * (nx - 1) as f64 * self.dx) + self.y_axis * (0.5 * (ny - 1) as f64 * self.dy)
    }

    pub fn corners(&self) -> [Vec3; 4] {
        let (nx, ny) = self.dims();
        [
            self.point(0, 0),
            self.point(nx - 1, 0),
            self.point(0, ny - 1),
            self.point(nx - 1, ny - 1),
        ]
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        ImageGrid {
            origin: self.origin + offset,
            ..*self
        }
    }
}

/// Bookkeeping attached to a formed image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub slow_start: usize,
    pub slow_end: usize,
    pub frames_used: usize,
    pub channels_used: usize,
    pub terms: usize,
    pub aperture_length_m: f64,
    /// Closest approach of the straight-line path to the grid center.
    pub r0_m: f64,
    pub aperture_center: Vec3,
    pub platform_speed_mps: f64,
    pub wavelength_m: f64,
    pub predicted_cross_range_m: f64,
    pub predicted_range_resolution_m: f64,
    pub window: WindowFunction,
    pub interpolation: Interpolation,
}

impl ImageMeta {
    pub fn compute(
        positions: &ChannelPositions,
        params: &RadarWaveformParams,
        grid: &ImageGrid,
        window: WindowFunction,
        interpolation: Interpolation,
        slow: Range<usize>,
    ) -> ImageMeta {
        let sched = &positions.schedule;
        let first = sched.chirp_index(0, slow.start);
        let last = sched.chirp_index(sched.tx_count - 1, slow.end - 1);
        let reference = grid.center();
        let r0 = positions.base[first..=last]
            .iter()
            .map(|b| (b - reference).norm())
            .fold(f64::INFINITY, f64::min);
        let aperture = positions.aperture_length(slow.clone());
        let wavelength = params.center_wavelength();
        let frames_used = (slow.end - 1) / sched.slow_per_frame - slow.start / sched.slow_per_frame + 1;
        ImageMeta {
            slow_start: slow.start,
            slow_end: slow.end,
            frames_used,
            channels_used: sched.tx_count * positions.rx_count,
            terms: sched.tx_count * positions.rx_count * slow.len(),
            aperture_length_m: aperture,
            r0_m: r0,
            aperture_center: (positions.base[first] + positions.base[last]) * 0.5,
            platform_speed_mps: positions.platform_speed(),
            wavelength_m: wavelength,
            predicted_cross_range_m: predicted_cross_range_resolution(wavelength, aperture, r0, true),
            predicted_range_resolution_m: predicted_range_resolution(params, window),
            window,
            interpolation,
        }
    }
}

/// Complex image over an [`ImageGrid`], stored row-major (`iy * nx + ix`).
#[derive(Debug, Clone, PartialEq)]
pub struct SarImage {
    pub grid: ImageGrid,
    pub meta: ImageMeta,
    data: Vec<Complex64>,
}

impl SarImage {
    pub fn from_parts(grid: ImageGrid, meta: ImageMeta, data: Vec<Complex64>) -> SarResult<Self> {
        if data.len() != grid.len() {
            return Err(SarError::DimensionMismatch(format!(
                "{} samples for a {}-point grid",
                data.len(),
                grid.len()
            )));
        }
        Ok(SarImage { grid, meta, data })
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.data[iy * self.grid.dims().0 + ix]
    }

    /// `(ix, iy, |I|)` of the largest magnitude.
    pub fn peak(&self) -> (usize, usize, f64) {
        let nx = self.grid.dims().0;
        let (k, m) = self
            .data
            .iter()
            .map(|z| z.norm())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, m)| if m > acc.1 { (k, m) } else { acc });
        (k % nx, k / nx, m)
    }

    /// Adds another image of the same grid sample by sample.
    pub fn add_data(&mut self, other: &SarImage) -> SarResult<()> {
        if self.grid != other.grid {
            return Err(SarError::DimensionMismatch("images use different grids".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn quantize_f32(&mut self) {
        for z in &mut self.data {
            *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
        }
    }

    /// Magnitude in dB relative to the peak, one CSV line per grid row.
    pub fn write_db_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let (nx, _) = self.dims();
        let (_, _, peak) = self.peak();
        for row in self.data.chunks(nx) {
            let line: Vec<String> = row
                .iter()
                .map(|z| {
                    let db = 20.0 * (z.norm() / peak).log10();
                    if db.is_finite() {
                        format!("{db:.4}")
                    } else {
                        "-inf".to_string()
                    }
                })
                .collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Two-way range from a transmitter/receiver pair to grid point `q`.
#[inline]
pub fn two_way_grid_range(tx: &Vec3, rx: &Vec3, q: &Vec3) -> f64 {
    (tx - q).norm() + (rx - q).norm()
}

/// Stripmap cross-range resolution `λR₀/(2L_a)`, times 0.88448 for the
/// half-power width of the implicit rectangular aperture weighting.
pub fn predicted_cross_range_resolution(wavelength: f64, aperture_length: f64, r0: f64, half_power: bool) -> f64 {
    let peak_to_null = wavelength * r0 / (2.0 * aperture_length);
    if half_power {
        0.88448 * peak_to_null
    } else {
        peak_to_null
    }
}

fn check_inputs(
    profiles: &RangeProfileSet,
    positions: &ChannelPositions,
    grid: &ImageGrid,
    interp: Interpolation,
    slow: &Range<usize>,
) -> SarResult<()> {
    grid.validate()?;
    let [n_tx, n_rx, n_slow, _] = profiles.dims();
    let sched = &positions.schedule;
    if n_tx != sched.tx_count || n_rx != positions.rx_count || n_slow != sched.total_slow() {
        return Err(SarError::DimensionMismatch(format!(
            "profiles {:?} vs positions ({} tx, {} rx, {} slow)",
            profiles.dims(),
            sched.tx_count,
            positions.rx_count,
            sched.total_slow()
        )));
    }
    if slow.is_empty() || slow.end > n_slow {
        return Err(SarError::InvalidArgument(format!(
            "slow-time window {slow:?} outside 0..{n_slow}"
        )));
    }
    // The two-way range is convex in q, so its maximum over the grid is at a corner.
    let max_r = profiles.max_range(interp);
    let corners = grid.corners();
    for m in slow.clone() {
        for i in 0..n_tx {
            let c = sched.chirp_index(i, m);
            let tx = positions.tx_at(c, 0);
            for j in 0..n_rx {
                let rx = positions.rx_at(c, j, 0);
                for q in &corners {
                    let r = two_way_grid_range(tx, rx, q);
                    if r > max_r {
                        return Err(SarError::GridOutsideRangeAxis(format!(
                            "grid corner ({:.3}, {:.3}, {:.3}) m is at two-way range {:.4} m, \
                             beyond the {:.4} m range axis",
                            q.x, q.y, q.z, r, max_r
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Profile value at fractional bin `bin` and the phase it carries beyond the
/// value at the lower neighbouring bin. Out-of-axis samples are zero.
#[inline]
fn aligned_sample(row: &[Complex64], bin: f64, interp: Interpolation, theta: f64, unrotate: Complex64) -> (Complex64, f64) {
    match interp {
        Interpolation::Linear => {
            let k = bin as usize;
            let f = bin - k as f64;
            if k + 1 < row.len() && bin >= 0.0 {
                (row[k] + (row[k + 1] * unrotate - row[k]) * f, theta * f)
            } else {
                (sample_row(row, bin, interp).unwrap_or_default(), 0.0)
            }
        }
        Interpolation::Nearest => (sample_row(row, bin, interp).unwrap_or_default(), 0.0),
    }
}

/// Forms the image from slow-time samples `slow` of every channel pair.
pub fn form_image(
    profiles: &RangeProfileSet,
    positions: &ChannelPositions,
    params: &RadarWaveformParams,
    grid: &ImageGrid,
    interp: Interpolation,
    slow: Range<usize>,
) -> SarResult<SarImage> {
    check_inputs(profiles, positions, grid, interp, &slow)?;
    let [n_tx, n_rx, _, _] = profiles.dims();
    let sched = &positions.schedule;
    let n_m = slow.len();

    // Contiguous per-channel position tables for the selected window.
    let tx_pos: Vec<Vec3> = (0..n_tx)
        .flat_map(|i| slow.clone().map(move |m| (i, m)))
        .map(|(i, m)| *positions.tx_at(sched.chirp_index(i, m), 0))
        .collect();
    let rx_pos: Vec<Vec3> = (0..n_tx)
        .flat_map(|i| (0..n_rx).map(move |j| (i, j)))
        .flat_map(|(i, j)| slow.clone().map(move |m| (i, j, m)))
        .map(|(i, j, m)| *positions.rx_at(sched.chirp_index(i, m), j, 0))
        .collect();
    let rows: Vec<&[Complex64]> = (0..n_tx)
        .flat_map(|i| (0..n_rx).map(move |j| (i, j)))
        .flat_map(|(i, j)| slow.clone().map(move |m| (i, j, m)))
        .map(|(i, j, m)| profiles.row(i, j, m))
        .collect();

    let k0 = 2.0 * std::f64::consts::PI * params.start_frequency_hz / params.propagation_speed_mps;
    let theta = profiles.bin_phase_step();
    let unrotate = Complex64::cis(-theta);
    let inv_spacing = 1.0 / profiles.bin_spacing();
    let (nx, _) = grid.dims();
    let mut data = vec![Complex64::new(0.0, 0.0); grid.len()];

    data.par_chunks_mut(nx).enumerate().for_each_init(
        || vec![0.0f64; n_m],
        |tx_range, (iy, out_row)| {
            for (ix, out) in out_row.iter_mut().enumerate() {
                let q = grid.point(ix, iy);
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n_tx {
                    for (d, p) in tx_range.iter_mut().zip(&tx_pos[i * n_m..(i + 1) * n_m]) {
                        *d = (p - q).norm();
                    }
                    for j in 0..n_rx {
                        let base = (i * n_rx + j) * n_m;
                        for m in 0..n_m {
                            let r = tx_range[m] + (rx_pos[base + m] - q).norm();
                            // Ranges were checked against the axis above.
                            let (s, phase) = aligned_sample(rows[base + m], r * inv_spacing, interp, theta, unrotate);
                            let (sin, cos) = (k0 * r - phase).sin_cos();
                            acc += s * Complex64::new(cos, -sin);
                        }
                    }
                }
                *out = acc;
            }
        },
    );

    let meta = ImageMeta::compute(positions, params, grid, profiles.window(), interp, slow);
    SarImage::from_parts(*grid, meta, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApertureAnchor {
    /// Window starts at the first slow-time sample of the recording.
    Start,
    /// Window centered on the slow-time sample closest to the reference point.
    #[default]
    ClosestApproach,
}

/// Slow-time window of `len` samples placed according to `anchor`.
pub fn slow_window(
    positions: &ChannelPositions,
    reference: &Vec3,
    anchor: ApertureAnchor,
    len: usize,
) -> SarResult<Range<usize>> {
    let sched = &positions.schedule;
    let total = sched.total_slow();
    if len == 0 || len > total {
        return Err(SarError::InvalidArgument(format!(
            "aperture of {len} slow-time samples does not fit the {total} recorded"
        )));
    }
    match anchor {
        ApertureAnchor::Start => Ok(0..len),
        ApertureAnchor::ClosestApproach => {
            let centre = (0..total)
                .min_by(|&a, &b| {
                    let da = (positions.base[sched.chirp_index(0, a)] - reference).norm();
                    let db = (positions.base[sched.chirp_index(0, b)] - reference).norm();
                    da.total_cmp(&db)
                })
                .unwrap_or(0);
            let start = centre as isize - (len / 2) as isize;
            if start < 0 || start as usize + len > total {
                return Err(SarError::InvalidArgument(format!(
                    "aperture of {len} slow-time samples centered on sample {centre} leaves the recording (0..{total})"
                )));
            }
            Ok(start as usize..start as usize + len)
        }
    }
}

/// Window whose straight-line length is closest to `length_m`.
pub fn slow_window_for_length(
    positions: &ChannelPositions,
    reference: &Vec3,
    anchor: ApertureAnchor,
    length_m: f64,
) -> SarResult<Range<usize>> {
    let total = positions.schedule.total_slow();
    let mut best: Option<(f64, Range<usize>)> = None;
    for len in 1..=total {
        let Ok(w) = slow_window(positions, reference, anchor, len) else {
            continue;
        };
        let err = (positions.aperture_length(w.clone()) - length_m).abs();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, w));
        }
    }
    best.map(|(_, w)| w).ok_or_else(|| {
        SarError::InvalidArgument(format!("no aperture of length {length_m} m fits the recording"))
    })
}
