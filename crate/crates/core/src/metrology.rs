//! Image quality measurements: profile cuts, half-power width, peak sidelobe
//! level, SNR and integration gain.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::backprojection::{form_image, ImageGrid, ImageMeta, SarImage};
use crate::error::{SarError, SarResult};
use crate::geometry::ChannelPositions;
use crate::range::{Interpolation, RangeProfileSet};
use crate::waveform::RadarWaveformParams;

/// `10·log10(1/2)`.
pub const HALF_POWER_DB: f64 = -3.010_299_956_639_812;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileAxis {
    /// Along the grid x axis.
    CrossRange,
    /// Along the grid y axis.
    Range,
}

/// One-dimensional magnitude cut, normalized so the peak is 0 dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCut {
    /// Strictly increasing positions, meters.
    pub positions: Vec<f64>,
    pub magnitude_db: Vec<f64>,
}

impl ProfileCut {
    /// Builds a cut from linear magnitudes.
    pub fn from_magnitudes(positions: Vec<f64>, magnitudes: &[f64]) -> SarResult<Self> {
        if positions.len() != magnitudes.len() || positions.is_empty() {
            return Err(SarError::DimensionMismatch("positions and magnitudes differ in length".into()));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SarError::InvalidArgument("profile positions must increase".into()));
        }
        let peak = magnitudes.iter().copied().fold(0.0, f64::max);
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(SarError::DegenerateImage("profile has no finite positive peak".into()));
        }
        Ok(ProfileCut {
            positions,
            magnitude_db: magnitudes.iter().map(|m| 20.0 * (m / peak).log10()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn peak_index(&self) -> usize {
        self.magnitude_db
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (k, &v)| if v > a.1 { (k, v) } else { a })
            .0
    }

    fn is_local_max(&self, k: usize) -> bool {
        let v = &self.magnitude_db;
        k > 0 && k + 1 < v.len() && v[k] > v[k - 1] && v[k] >= v[k + 1]
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "position_m,magnitude_db")?;
        for (p, m) in self.positions.iter().zip(&self.magnitude_db) {
            writeln!(w, "{p},{m}")?;
        }
        Ok(())
    }
}

/// Cut through the global peak of `image`; positions are relative to the grid center.
pub fn extract_profile(image: &SarImage, axis: ProfileAxis) -> SarResult<ProfileCut> {
    let (nx, ny) = image.dims();
    let (px, py, peak) = image.peak();
    let min = image.data().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !(peak.is_finite() && peak > 0.0) || peak == min {
        return Err(SarError::DegenerateImage("image is flat or has no finite peak".into()));
    }
    let g = &image.grid;
    let (n, d, mags): (usize, f64, Vec<f64>) = match axis {
        ProfileAxis::CrossRange => (nx, g.dx, (0..nx).map(|ix| image.at(ix, py).norm()).collect()),
        ProfileAxis::Range => (ny, g.dy, (0..ny).map(|iy| image.at(px, iy).norm()).collect()),
    };
    if n < 2 {
        return Err(SarError::DegenerateImage("grid has a single sample along the cut".into()));
    }
    let centre = 0.5 * (n - 1) as f64;
    let positions = (0..n).map(|k| (k as f64 - centre) * d).collect();
    ProfileCut::from_magnitudes(positions, &mags)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPowerWidth {
    pub width_m: f64,
    pub left_m: f64,
    pub right_m: f64,
    /// Another local maximum reaches above the half-power level, i.e. the
    /// main lobe looks split.
    pub suspect: bool,
}

fn crossing(profile: &ProfileCut, from: usize, to: usize) -> f64 {
    let (x0, x1) = (profile.positions[from], profile.positions[to]);
    let (y0, y1) = (profile.magnitude_db[from], profile.magnitude_db[to]);
    if y1 == y0 {
        return x0;
    }
    x0 + (HALF_POWER_DB - y0) / (y1 - y0) * (x1 - x0)
}

/// Distance between the half-power crossings nearest the peak, each located
/// by linear interpolation in dB.
pub fn halfpower_width(profile: &ProfileCut) -> SarResult<HalfPowerWidth> {
    if profile.len() < 3 {
        return Err(SarError::InvalidArgument("profile needs at least 3 samples".into()));
    }
    let v = &profile.magnitude_db;
    let p = profile.peak_index();
    let left = (0..p)
        .rev()
        .find(|&k| v[k] < HALF_POWER_DB)
        .ok_or(SarError::MainLobeUnresolved("left"))?;
    let right = (p + 1..v.len())
        .find(|&k| v[k] < HALF_POWER_DB)
        .ok_or(SarError::MainLobeUnresolved("right"))?;
    let left_m = crossing(profile, left + 1, left);
    let right_m = crossing(profile, right - 1, right);
    let suspect = (0..v.len()).any(|k| k != p && profile.is_local_max(k) && v[k] > HALF_POWER_DB);
    Ok(HalfPowerWidth {
        width_m: right_m - left_m,
        left_m,
        right_m,
        suspect,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sidelobe {
    pub level_db: f64,
    pub position_m: f64,
}

/// Indices of the first local minima flanking the peak.
fn main_lobe_nulls(profile: &ProfileCut) -> (usize, usize) {
    let v = &profile.magnitude_db;
    let p = profile.peak_index();
    let mut l = p;
    while l > 0 && v[l - 1] < v[l] {
        l -= 1;
    }
    let mut r = p;
    while r + 1 < v.len() && v[r + 1] < v[r] {
        r += 1;
    }
    (l, r)
}

/// Highest sidelobe on each side of the main lobe, `(left, right)`.
pub fn sidelobes(profile: &ProfileCut) -> (Option<Sidelobe>, Option<Sidelobe>) {
    let (l, r) = main_lobe_nulls(profile);
    let best = |ks: &mut dyn Iterator<Item = usize>| {
        ks.filter(|&k| profile.is_local_max(k))
            .map(|k| Sidelobe {
                level_db: profile.magnitude_db[k],
                position_m: profile.positions[k],
            })
            .fold(None, |acc: Option<Sidelobe>, s| match acc {
                Some(a) if a.level_db >= s.level_db => Some(a),
                _ => Some(s),
            })
    };
    (best(&mut (0..l)), best(&mut (r + 1..profile.len())))
}

/// Highest local maximum outside the main lobe's first nulls, dB re peak.
pub fn peak_sidelobe_level(profile: &ProfileCut) -> SarResult<Sidelobe> {
    match sidelobes(profile) {
        (Some(a), Some(b)) => Ok(if a.level_db >= b.level_db { a } else { b }),
        (Some(a), None) | (None, Some(a)) => Ok(a),
        (None, None) => Err(SarError::NoSidelobe),
    }
}

/// Cells used to estimate the noise floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseRegion {
    /// Cells whose range from the aperture center differs from the peak's by
    /// more than 10 predicted range resolution cells.
    #[default]
    Default,
    /// As `Default` with a custom number of resolution cells.
    RangeOffset { cells: f64 },
    /// Explicit index rectangle; must stay clear of the peak neighbourhood
    /// (two resolution cells in each axis).
    Rect { x: Range<usize>, y: Range<usize> },
}

fn noise_mask(grid: &ImageGrid, meta: &ImageMeta, peak: (usize, usize), region: &NoiseRegion) -> SarResult<Vec<bool>> {
    let (nx, ny) = grid.dims();
    let mut mask = vec![false; nx * ny];
    match region {
        NoiseRegion::Default | NoiseRegion::RangeOffset { .. } => {
            let cells = match region {
                NoiseRegion::RangeOffset { cells } => *cells,
                _ => 10.0,
            };
            let c = meta.aperture_center;
            let peak_range = (grid.point(peak.0, peak.1) - c).norm();
            let min_offset = cells * meta.predicted_range_resolution_m;
            for iy in 0..ny {
                for ix in 0..nx {
                    let r = (grid.point(ix, iy) - c).norm();
                    mask[iy * nx + ix] = (r - peak_range).abs() > min_offset;
                }
            }
        }
        NoiseRegion::Rect { x, y } => {
            if x.end > nx || y.end > ny {
                return Err(SarError::InvalidArgument("noise rectangle exceeds the grid".into()));
            }
            let hx = 2.0 * meta.predicted_cross_range_m / grid.dx;
            let hy = 2.0 * meta.predicted_range_resolution_m / grid.dy;
            for iy in y.clone() {
                for ix in x.clone() {
                    let ox = (ix as f64 - peak.0 as f64).abs();
                    let oy = (iy as f64 - peak.1 as f64).abs();
                    if ox <= hx && oy <= hy {
                        return Err(SarError::NoiseRegionOverlapsPeak);
                    }
                    mask[iy * nx + ix] = true;
                }
            }
        }
    }
    if !mask.iter().any(|&m| m) {
        return Err(SarError::InvalidArgument("noise region is empty".into()));
    }
    Ok(mask)
}

fn argmax(values: &[f64], nx: usize) -> (usize, usize, f64) {
    let (k, v) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (k, &v)| if v > a.1 { (k, v) } else { a });
    (k % nx, k / nx, v)
}

/// `10·log10(|peak|² / mean |noise|²)`.
pub fn measure_snr(image: &SarImage, region: &NoiseRegion) -> SarResult<f64> {
    let power: Vec<f64> = image.data().iter().map(|z| z.norm_sqr()).collect();
    snr_of_power(&power, &image.grid, &image.meta, region)
}

fn snr_of_power(power: &[f64], grid: &ImageGrid, meta: &ImageMeta, region: &NoiseRegion) -> SarResult<f64> {
    let (nx, _) = grid.dims();
    let (px, py, peak) = argmax(power, nx);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(SarError::DegenerateImage("image has no finite peak".into()));
    }
    let mask = noise_mask(grid, meta, (px, py), region)?;
    let (sum, count) = power
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (p, _)| (s + p, c + 1));
    let noise = sum / count as f64;
    if noise == 0.0 {
        return Err(SarError::ZeroNoiseFloor);
    }
    Ok(10.0 * (peak / noise).log10())
}

/// Detection SNR of a power-summed image: `(P_peak − mean P_n) / std P_n`, in dB.
fn deflection_snr(power: &[f64], grid: &ImageGrid, meta: &ImageMeta, region: &NoiseRegion) -> SarResult<f64> {
    let (nx, _) = grid.dims();
    let (px, py, peak) = argmax(power, nx);
    let mask = noise_mask(grid, meta, (px, py), region)?;
    let noise: Vec<f64> = power.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect();
    let n = noise.len() as f64;
    let mean = noise.iter().sum::<f64>() / n;
    let var = noise.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(SarError::ZeroNoiseFloor);
    }
    Ok(10.0 * ((peak - mean) / var.sqrt()).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMode {
    /// Complex sum of frames (the normal image).
    #[default]
    Coherent,
    /// Sum of per-frame image powers; SNR measured as detection deflection.
    NonCoherent,
}

/// Integration gain versus number of frames with the fitted exponent of
/// `G = N_f^α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    /// `(N_f, gain dB)`, gain normalized to 0 dB at `N_f = 1`.
    pub points: Vec<(usize, f64)>,
    pub alpha: f64,
}

/// Least-squares slope of `gain_dB = 10·α·log10(N_f)` through the origin.
pub fn fit_integration_exponent(points: &[(usize, f64)]) -> f64 {
    let (num, den) = points.iter().fold((0.0, 0.0), |(n, d), &(nf, g)| {
        let l = 10.0 * (nf as f64).log10();
        (n + g * l, d + l * l)
    });
    if den == 0.0 {
        f64::NAN
    } else {
        num / den
    }
}

impl GainCurve {
    pub fn from_snr(frame_counts: &[usize], snr_db: &[f64]) -> SarResult<Self> {
        check_frame_counts(frame_counts)?;
        if frame_counts.len() != snr_db.len() {
            return Err(SarError::DimensionMismatch("one SNR per frame count expected".into()));
        }
        let points: Vec<(usize, f64)> = frame_counts
            .iter()
            .zip(snr_db)
            .map(|(&n, &s)| (n, s - snr_db[0]))
            .collect();
        Ok(GainCurve {
            alpha: fit_integration_exponent(&points),
            points,
        })
    }

    /// Pointwise mean (in dB) of curves sharing the same frame counts, refitted.
    pub fn average(curves: &[GainCurve]) -> SarResult<Self> {
        let first = curves
            .first()
            .ok_or_else(|| SarError::InvalidArgument("no curves to average".into()))?;
        if curves
            .iter()
            .any(|c| c.points.iter().map(|p| p.0).ne(first.points.iter().map(|p| p.0)))
        {
            return Err(SarError::DimensionMismatch("curves use different frame counts".into()));
        }
        let points: Vec<(usize, f64)> = (0..first.points.len())
            .map(|k| {
                let mean = curves.iter().map(|c| c.points[k].1).sum::<f64>() / curves.len() as f64;
                (first.points[k].0, mean)
            })
            .collect();
        Ok(GainCurve {
            alpha: fit_integration_exponent(&points),
            points,
        })
    }

    /// Gain of ideal coherent integration at `n_frames`, dB.
    pub fn coherent_db(n_frames: usize) -> f64 {
        10.0 * (n_frames as f64).log10()
    }
}

fn check_frame_counts(frame_counts: &[usize]) -> SarResult<()> {
    if frame_counts.first() != Some(&1) || frame_counts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SarError::InvalidArgument(
            "frame counts must start at 1 and strictly increase".into(),
        ));
    }
    Ok(())
}

/// Everything needed to form images from one recording.
pub struct ImagingInputs<'a> {
    pub profiles: &'a RangeProfileSet,
    pub positions: &'a ChannelPositions,
    pub params: &'a RadarWaveformParams,
    pub grid: &'a ImageGrid,
    pub interpolation: Interpolation,
}

/// Forms images from the first `N_f` frames for each requested count (all
/// anchored at the first frame) and records the SNR gain over `N_f = 1`.
pub fn integration_gain_curve(
    inputs: &ImagingInputs<'_>,
    frame_counts: &[usize],
    region: &NoiseRegion,
    mode: IntegrationMode,
) -> SarResult<GainCurve> {
    check_frame_counts(frame_counts)?;
    let sched = &inputs.positions.schedule;
    let spf = sched.slow_per_frame;
    let max_frames = *frame_counts.last().unwrap();
    if max_frames > sched.n_frames {
        return Err(SarError::InvalidArgument(format!(
            "{max_frames} frames requested but only {} recorded",
            sched.n_frames
        )));
    }
    let frame_image = |f: usize| {
        form_image(
            inputs.profiles,
            inputs.positions,
            inputs.params,
            inputs.grid,
            inputs.interpolation,
            f * spf..(f + 1) * spf,
        )
    };
    let mut snr = Vec::with_capacity(frame_counts.len());
    let mut running: Option<SarImage> = None;
    let mut power = vec![0.0; inputs.grid.len()];
    let mut next = frame_counts.iter().peekable();
    for f in 0..max_frames {
        let img = frame_image(f)?;
        match mode {
            IntegrationMode::Coherent => match running.as_mut() {
                Some(r) => r.add_data(&img)?,
                None => running = Some(img),
            },
            IntegrationMode::NonCoherent => {
                for (p, z) in power.iter_mut().zip(img.data()) {
                    *p += z.norm_sqr();
                }
            }
        }
        if next.peek() == Some(&&(f + 1)) {
            next.next();
            let meta = ImageMeta::compute(
                inputs.positions,
                inputs.params,
                inputs.grid,
                inputs.profiles.window(),
                inputs.interpolation,
                0..(f + 1) * spf,
            );
            let s = match mode {
                IntegrationMode::Coherent => {
                    let r = running.as_mut().expect("at least one frame");
                    r.meta = meta;
                    measure_snr(r, region)?
                }
                IntegrationMode::NonCoherent => deflection_snr(&power, inputs.grid, &meta, region)?,
            };
            snr.push(s);
        }
    }
    GainCurve::from_snr(frame_counts, &snr)
}

pub const METRICS_HEADER: [&str; 10] = [
    "scenario_id",
    "L_a_m",
    "R0_m",
    "v_ego_mps",
    "width_m",
    "predicted_width_m",
    "psl_db",
    "snr_db",
    "n_frames",
    "alpha",
];

/// One line of the metrics CSV. Measurements that failed are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario_id: String,
    pub aperture_length_m: f64,
    pub r0_m: f64,
    pub v_ego_mps: f64,
    pub width_m: Option<f64>,
    pub predicted_width_m: f64,
    pub psl_db: Option<f64>,
    pub snr_db: Option<f64>,
    pub n_frames: usize,
    pub alpha: Option<f64>,
}

impl MetricsRow {
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.scenario_id.clone(),
            self.aperture_length_m.to_string(),
            self.r0_m.to_string(),
            self.v_ego_mps.to_string(),
            opt(self.width_m),
            self.predicted_width_m.to_string(),
            opt(self.psl_db),
            opt(self.snr_db),
            self.n_frames.to_string(),
            opt(self.alpha),
        ]
    }
}

pub fn write_metrics_csv<W: std::io::Write>(rows: &[MetricsRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", METRICS_HEADER.join(","))?;
    for r in rows {
        writeln!(w, "{}", r.csv_fields().join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(slope_db_per_m: f64, step: f64, half_n: i32) -> ProfileCut {
        let positions: Vec<f64> = (-half_n..=half_n).map(|k| k as f64 * step).collect();
        let magnitude_db = positions.iter().map(|x| -slope_db_per_m * x.abs()).collect();
        ProfileCut { positions, magnitude_db }
    }

    #[test]
    fn triangle_width_is_exact() {
        let p = triangle(500.0, 1e-3, 50);
        let w = halfpower_width(&p).unwrap();
        assert!((w.width_m - 2.0 * 3.010_299_956_639_812 / 500.0).abs() < 1e-12);
        assert!(!w.suspect);
    }

    #[test]
    fn width_invariant_under_scaling() {
        let pos: Vec<f64> = (0..41).map(|k| k as f64 * 1e-3).collect();
        let mags: Vec<f64> = pos.iter().map(|x| ((x - 0.02f64) * 200.0).cos().max(0.0) + 1e-3).collect();
        let scaled: Vec<f64> = mags.iter().map(|m| m * 37.5).collect();
        let a = halfpower_width(&ProfileCut::from_magnitudes(pos.clone(), &mags).unwrap()).unwrap();
        let b = halfpower_width(&ProfileCut::from_magnitudes(pos, &scaled).unwrap()).unwrap();
        assert!((a.width_m - b.width_m).abs() < 1e-15);
    }

    #[test]
    fn missing_crossing_is_error() {
        let p = ProfileCut {
            positions: vec![0.0, 1.0, 2.0, 3.0],
            magnitude_db: vec![-1.0, 0.0, -1.0, -4.0],
        };
        assert!(matches!(halfpower_width(&p), Err(SarError::MainLobeUnresolved("left"))));
    }

    #[test]
    fn split_peak_is_flagged() {
        // Two equal lobes separated by a shallow dip.
        let positions: Vec<f64> = (0..9).map(|k| k as f64).collect();
        let p = ProfileCut {
            positions,
            magnitude_db: vec![-20.0, -6.0, 0.0, -1.0, -1.5, -1.0, -0.001, -6.0, -20.0],
        };
        let w = halfpower_width(&p).unwrap();
        assert!(w.suspect);
        assert!(w.left_m < 2.0 && w.right_m > 6.0);
    }

    #[test]
    fn psl_of_sampled_sinc() {
        let positions: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.01).collect();
        let mags: Vec<f64> = positions
            .iter()
            .map(|&x: &f64| {
                let u = std::f64::consts::PI * x;
                if u == 0.0 {
                    1.0
                } else {
                    (u.sin() / u).abs()
                }
            })
            .collect();
        let cut = ProfileCut::from_magnitudes(positions, &mags).unwrap();
        let psl = peak_sidelobe_level(&cut).unwrap();
        assert!((psl.level_db + 13.26).abs() < 0.02, "{}", psl.level_db);
        assert!((psl.position_m.abs() - 1.43).abs() < 0.02);
    }

    #[test]
    fn monotone_profile_has_no_sidelobe() {
        let p = triangle(100.0, 1e-3, 20);
        assert!(matches!(peak_sidelobe_level(&p), Err(SarError::NoSidelobe)));
    }

    #[test]
    fn exponent_fit() {
        let pts: Vec<(usize, f64)> = (1..=26).map(|n| (n, 7.5 * (n as f64).log10())).collect();
        assert!((fit_integration_exponent(&pts) - 0.75).abs() < 1e-12);
        let c = GainCurve::from_snr(&[1, 2, 4], &[20.0, 23.0, 26.0]).unwrap();
        assert_eq!(c.points[0].1, 0.0);
        assert!(GainCurve::from_snr(&[2, 3], &[1.0, 2.0]).is_err());
        assert!(GainCurve::from_snr(&[1, 3, 3], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn averaging_curves() {
        let a = GainCurve::from_snr(&[1, 2], &[10.0, 13.0]).unwrap();
        let b = GainCurve::from_snr(&[1, 2], &[10.0, 12.0]).unwrap();
        let m = GainCurve::average(&[a, b]).unwrap();
        assert_eq!(m.points, vec![(1, 0.0), (2, 2.5)]);
    }

    #[test]
    fn metrics_header_matches_schema() {
        let mut buf = Vec::new();
        write_metrics_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "scenario_id,L_a_m,R0_m,v_ego_mps,width_m,predicted_width_m,psl_db,snr_db,n_frames,alpha\n"
        );
    }
}
