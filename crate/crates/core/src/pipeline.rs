//! Scenario orchestration: simulate → range-compress → backproject → measure.
//!
//! Echoes are synthesized from the true sensor motion (including vibration
//! and drift); images are formed from the nominal straight-line pass, which is
//! all a real processor knows. Stored cubes and images are rounded to the
//! scenario's storage precision before anything downstream reads them, so the
//! file-based subcommands reproduce an in-memory sweep bit for bit.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backprojection::{form_image, slow_window, slow_window_for_length, ApertureAnchor, ImageMeta, SarImage};
use crate::echo::{add_noise, simulate_baseband, BasebandCube};
use crate::error::{SarError, SarResult};
use crate::format::{self, Dtype};
use crate::geometry::{channel_positions, DriftPath, Sampling, VibrationSpec};
use crate::metrology::{
    extract_profile, halfpower_width, integration_gain_curve, measure_snr, peak_sidelobe_level, write_metrics_csv,
    GainCurve, ImagingInputs, IntegrationMode, MetricsRow, ProfileAxis, ProfileCut,
};
use crate::range::{range_compress, RangeProfileSet};
use crate::scenario::{ApertureConfig, MetrologyConfig, Scenario, SweepAxis};

/// Independent seed for stream `stream` of a scenario seed.
pub fn substream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const STREAM_NOISE: u64 = 1;
const STREAM_DRIFT: u64 = 2;
const STREAM_FRAME_PHASE: u64 = 3;

fn stream(kind: u64, realization: usize) -> u64 {
    kind + 16 * realization as u64
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub verbose: bool,
}

/// Synthesizes the recording for one speed and realization. The returned
/// cube carries the nominal positions and is rounded to storage precision.
pub fn simulate(s: &Scenario, speed: f64, realization: usize) -> SarResult<BasebandCube> {
    let p = s.waveform;
    let schedule = p.build_schedule(s.simulation.frames)?;
    let last = schedule.chirps.last().map_or(0.0, |c| c.start_time_s);
    let nominal = s.base_trajectory(speed, last)?;
    let mut truth = nominal.clone();
    if let Some(v) = s.vibration_spec(speed, realization)? {
        truth = truth.with_vibration(v)?;
    }
    if let Some(spec) = s.drift_spec(substream_seed(s.seed, stream(STREAM_DRIFT, realization))) {
        let knots: Vec<f64> = schedule.chirps.iter().map(|c| c.start_time_s).collect();
        truth = truth.with_drift(DriftPath::generate(&spec, &knots)?);
    }
    let (array, mount) = (s.array()?, s.mount()?);
    let true_pos = channel_positions(&truth, &mount, &array, &schedule, &p, s.simulation.sampling)?;
    let nav_pos = channel_positions(&nominal, &mount, &array, &schedule, &p, Sampling::ChirpStart)?;
    let mut cube = simulate_baseband(&s.targets(), &true_pos, &p, &s.echo_options())?;
    if s.simulation.randomize_frame_phase {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(s.seed, stream(STREAM_FRAME_PHASE, realization)));
        let phases: Vec<f64> = (0..s.simulation.frames)
            .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
            .collect();
        cube.apply_frame_phases(&phases)?;
    }
    if let Some(n) = &s.noise {
        if n.power > 0.0 {
            cube = add_noise(&cube, n.power, substream_seed(s.seed, stream(STREAM_NOISE, realization)))?;
        }
    }
    let mut cube = cube.with_positions(nav_pos)?;
    if s.storage_precision == Dtype::F32 {
        cube.quantize_f32();
    }
    Ok(cube)
}

pub fn compress(s: &Scenario, cube: &BasebandCube) -> SarResult<RangeProfileSet> {
    range_compress(cube, s.imaging.window, s.imaging.zero_pad)
}

/// Slow-time window selected by an aperture description.
pub fn aperture_window(s: &Scenario, cube: &BasebandCube, aperture: &ApertureConfig) -> SarResult<Range<usize>> {
    let positions = &cube.positions;
    let reference = s.imaging.grid.build()?.center();
    let spf = positions.schedule.slow_per_frame;
    match (aperture.frames, aperture.length_m) {
        (Some(n), _) => match aperture.anchor {
            ApertureAnchor::Start => Ok(0..(n * spf).min(positions.schedule.total_slow())),
            ApertureAnchor::ClosestApproach => slow_window(positions, &reference, aperture.anchor, n * spf),
        },
        (None, Some(l)) => slow_window_for_length(positions, &reference, aperture.anchor, l),
        (None, None) => Ok(0..positions.schedule.total_slow()),
    }
}

fn quantized(s: &Scenario, image: &SarImage) -> SarImage {
    let mut out = image.clone();
    if s.storage_precision == Dtype::F32 {
        out.quantize_f32();
    }
    out
}

/// Image over slow-time window `slow`, rounded to storage precision.
pub fn image(s: &Scenario, profiles: &RangeProfileSet, cube: &BasebandCube, slow: Range<usize>) -> SarResult<SarImage> {
    let grid = s.imaging.grid.build()?;
    let img = form_image(profiles, &cube.positions, &cube.params, &grid, s.imaging.interpolation, slow)?;
    Ok(quantized(s, &img))
}

/// Images for several windows of one recording. When a window contains an
/// earlier (shorter) one, only the difference is backprojected and added.
fn nested_images(
    s: &Scenario,
    profiles: &RangeProfileSet,
    cube: &BasebandCube,
    windows: &[Range<usize>],
) -> Vec<SarResult<SarImage>> {
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by_key(|&k| (windows[k].len(), k));
    let mut out: Vec<Option<SarResult<SarImage>>> = (0..windows.len()).map(|_| None).collect();
    let mut prev: Option<(Range<usize>, SarImage)> = None;
    let grid = match s.imaging.grid.build() {
        Ok(g) => g,
        Err(e) => return windows.iter().map(|_| Err(e.clone())).collect(),
    };
    let interp = s.imaging.interpolation;
    let part = |r: Range<usize>| form_image(profiles, &cube.positions, &cube.params, &grid, interp, r);
    for k in order {
        let w = windows[k].clone();
        let result = (|| -> SarResult<SarImage> {
            let full = match &prev {
                Some((pw, pimg)) if pw.start >= w.start && pw.end <= w.end && !pw.is_empty() => {
                    let mut img = pimg.clone();
                    if w.start < pw.start {
                        img.add_data(&part(w.start..pw.start)?)?;
                    }
                    if pw.end < w.end {
                        img.add_data(&part(pw.end..w.end)?)?;
                    }
                    img.meta = ImageMeta::compute(
                        &cube.positions,
                        &cube.params,
                        &grid,
                        profiles.window(),
                        interp,
                        w.clone(),
                    );
                    img
                }
                _ => part(w.clone())?,
            };
            prev = Some((w.clone(), full.clone()));
            Ok(quantized(s, &full))
        })();
        out[k] = Some(result);
    }
    out.into_iter().map(|r| r.expect("every window visited")).collect()
}

/// Profile cuts and metrics of one image.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub row: MetricsRow,
    pub cross_range: Option<ProfileCut>,
    pub range: Option<ProfileCut>,
    /// `(quantity, error)` for every measurement that failed.
    pub failures: Vec<(String, SarError)>,
}

pub fn measure(scenario_id: &str, image: &SarImage, cfg: &MetrologyConfig) -> Measurement {
    let mut failures = Vec::new();
    let mut keep = |what: &str, r: SarResult<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            failures.push((what.to_string(), e));
            None
        }
    };
    let cross = extract_profile(image, ProfileAxis::CrossRange);
    let range = extract_profile(image, ProfileAxis::Range);
    let (cut, predicted) = match cfg.width_axis {
        ProfileAxis::CrossRange => (&cross, image.meta.predicted_cross_range_m),
        ProfileAxis::Range => (&range, image.meta.predicted_range_resolution_m),
    };
    let width = keep(
        "width",
        cut.as_ref()
            .map_err(|e| e.clone())
            .and_then(|c| halfpower_width(c).map(|w| w.width_m)),
    );
    let psl = keep(
        "psl",
        cut.as_ref()
            .map_err(|e| e.clone())
            .and_then(|c| peak_sidelobe_level(c).map(|s| s.level_db)),
    );
    let snr = keep("snr", measure_snr(image, &cfg.noise_region));
    let m = &image.meta;
    Measurement {
        row: MetricsRow {
            scenario_id: scenario_id.to_string(),
            aperture_length_m: m.aperture_length_m,
            r0_m: m.r0_m,
            v_ego_mps: m.platform_speed_mps,
            width_m: width,
            predicted_width_m: predicted,
            psl_db: psl,
            snr_db: snr,
            n_frames: m.frames_used,
            alpha: None,
        },
        cross_range: cross.ok(),
        range: range.ok(),
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub point: String,
    pub quantity: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_id: String,
    pub scenario_hash: String,
    pub tool_version: String,
    pub command: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    /// Output files relative to the output directory, in write order.
    pub artifacts: Vec<String>,
    pub failures: Vec<PointFailure>,
    /// Vibration actually simulated (realization 0), after design resolution.
    pub vibration: Option<VibrationSpec>,
    pub alpha: Option<f64>,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Collects output files and failures while a command runs.
pub struct RunRecorder {
    dir: PathBuf,
    manifest: RunManifest,
    verbose: bool,
}

impl RunRecorder {
    pub fn new(dir: &Path, s: &Scenario, command: &str, opts: &RunOptions) -> SarResult<Self> {
        fs::create_dir_all(dir).map_err(|e| SarError::io(dir, e))?;
        Ok(RunRecorder {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                scenario_id: s.id.clone(),
                scenario_hash: s.hash(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                started_unix_s: now(),
                finished_unix_s: 0.0,
                artifacts: Vec::new(),
                failures: Vec::new(),
                vibration: s.vibration_spec(s.speed(), 0)?,
                alpha: None,
            },
            verbose: opts.verbose,
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    pub fn write_text(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> SarResult<()> {
        let mut buf = Vec::new();
        let path = self.path(name);
        write(&mut buf).map_err(|e| SarError::io(&path, e))?;
        fs::write(&path, buf).map_err(|e| SarError::io(&path, e))
    }

    pub fn fail(&mut self, point: &str, quantity: &str, e: &SarError) {
        if self.verbose {
            eprintln!("[{point}] {quantity}: {e}");
        }
        self.manifest.failures.push(PointFailure {
            point: point.to_string(),
            quantity: quantity.to_string(),
            kind: e.kind().to_string(),
            message: e.to_string(),
        });
    }

    pub fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn finish(mut self) -> SarResult<RunManifest> {
        self.manifest.artifacts.push("manifest.json".into());
        self.manifest.finished_unix_s = now();
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| SarError::io(&path, e))?;
        Ok(self.manifest)
    }
}

pub const CUBE_FILE: &str = "cube.sarb";

pub fn point_label(k: usize) -> String {
    format!("p{k:03}")
}

/// Writes the image and its optional dB matrix.
pub fn write_image_outputs(rec: &mut RunRecorder, s: &Scenario, label: &str, img: &SarImage) -> SarResult<()> {
    if s.outputs.images {
        let p = rec.path(&format!("image_{label}.{}", format::EXTENSION));
        rec.path(&format!("image_{label}.json"));
        format::write_image(&p, img, &s.id, s.storage_precision)?;
    }
    if s.outputs.image_db_csv {
        rec.write_text(&format!("image_{label}_db.csv"), |w| img.write_db_csv(w))?;
    }
    Ok(())
}

/// Writes the profile cuts of a measurement and records its failures.
pub fn write_measurement(rec: &mut RunRecorder, label: &str, m: &Measurement) -> SarResult<()> {
    for (axis, cut) in [("cross_range", &m.cross_range), ("range", &m.range)] {
        if let Some(c) = cut {
            rec.write_text(&format!("profile_{label}_{axis}.csv"), |w| c.write_csv(w))?;
        }
    }
    for (q, e) in &m.failures {
        rec.fail(label, q, e);
    }
    Ok(())
}

/// `simulate`: writes the recording only.
pub fn run_simulate(s: &Scenario, out_dir: &Path, opts: &RunOptions) -> SarResult<RunManifest> {
    let mut rec = RunRecorder::new(out_dir, s, "simulate", opts)?;
    let cube = simulate(s, s.speed(), 0)?;
    let path = rec.path(CUBE_FILE);
    rec.path("cube.json");
    format::write_cube(&path, &cube, s.storage_precision)?;
    rec.finish()
}

/// `image`: forms the configured aperture from a stored recording.
pub fn run_image(s: &Scenario, cube_path: &Path, out_dir: &Path, opts: &RunOptions) -> SarResult<RunManifest> {
    let mut rec = RunRecorder::new(out_dir, s, "image", opts)?;
    let cube = format::read_cube(cube_path)?;
    let profiles = compress(s, &cube)?;
    let w = aperture_window(s, &cube, &s.imaging.aperture)?;
    let img = image(s, &profiles, &cube, w)?;
    let p = rec.path(&format!("image_{}.{}", point_label(0), format::EXTENSION));
    rec.path(&format!("image_{}.json", point_label(0)));
    format::write_image(&p, &img, &s.id, s.storage_precision)?;
    if s.outputs.image_db_csv {
        rec.write_text(&format!("image_{}_db.csv", point_label(0)), |w| img.write_db_csv(w))?;
    }
    rec.finish()
}

/// `measure`: metrics row and profile cuts of a stored image.
pub fn run_measure(image_path: &Path, cfg: &MetrologyConfig, out_dir: &Path, opts: &RunOptions) -> SarResult<Measurement> {
    let (img, scenario_id) = format::read_image(image_path)?;
    fs::create_dir_all(out_dir).map_err(|e| SarError::io(out_dir, e))?;
    let label = image_path
        .file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.strip_prefix("image_").unwrap_or(s).to_string())
        .unwrap_or_else(|| point_label(0));
    let m = measure(&scenario_id, &img, cfg);
    let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> SarResult<()> {
        let mut buf = Vec::new();
        let path = out_dir.join(name);
        f(&mut buf).map_err(|e| SarError::io(&path, e))?;
        fs::write(&path, buf).map_err(|e| SarError::io(&path, e))
    };
    write("metrics.csv", &|w| write_metrics_csv(std::slice::from_ref(&m.row), w))?;
    for (axis, cut) in [("cross_range", &m.cross_range), ("range", &m.range)] {
        if let Some(c) = cut {
            write(&format!("profile_{label}_{axis}.csv"), &|w| c.write_csv(w))?;
        }
    }
    if opts.verbose {
        for (q, e) in &m.failures {
            eprintln!("[{label}] {q}: {e}");
        }
    }
    Ok(m)
}

/// `sweep`: the full scenario.
pub fn run_scenario(s: &Scenario, out_dir: &Path, opts: &RunOptions) -> SarResult<RunManifest> {
    let mut rec = RunRecorder::new(out_dir, s, "sweep", opts)?;
    let axis = s.sweep.as_ref().map(|sw| sw.axis);
    let mut rows: Vec<MetricsRow> = Vec::new();
    match axis {
        None | Some(SweepAxis::ApertureLength) | Some(SweepAxis::Frames) => {
            run_single_recording(s, &mut rec, &mut rows)?;
        }
        Some(SweepAxis::Speed) => run_speed_sweep(s, &mut rec, &mut rows)?,
    }
    rec.write_text("metrics.csv", |w| write_metrics_csv(&rows, w))?;
    rec.finish()
}

fn write_first_recording(s: &Scenario, rec: &mut RunRecorder, cube: &BasebandCube, profiles: &RangeProfileSet) -> SarResult<()> {
    if s.outputs.cube {
        let path = rec.path(CUBE_FILE);
        rec.path("cube.json");
        format::write_cube(&path, cube, s.storage_precision)?;
    }
    rec.write_text("range_profile.csv", |w| profiles.write_csv(0, 0, 0, w))
}

fn run_single_recording(s: &Scenario, rec: &mut RunRecorder, rows: &mut Vec<MetricsRow>) -> SarResult<()> {
    let sweep = s.sweep.as_ref();
    let realizations = sweep.map_or(1, |sw| sw.realizations);
    let apertures: Vec<ApertureConfig> = match sweep {
        None => vec![s.imaging.aperture.clone()],
        Some(sw) => sw
            .values
            .iter()
            .map(|&v| match sw.axis {
                SweepAxis::Frames => ApertureConfig {
                    frames: Some(v as usize),
                    length_m: None,
                    anchor: s.imaging.aperture.anchor,
                },
                _ => ApertureConfig {
                    frames: None,
                    length_m: Some(v),
                    anchor: s.imaging.aperture.anchor,
                },
            })
            .collect(),
    };
    let gain_sweep = sweep.filter(|sw| {
        sw.axis == SweepAxis::Frames && sw.values.first() == Some(&1.0) && s.imaging.aperture.anchor == ApertureAnchor::Start
    });
    let mut curves = Vec::new();
    for k in 0..realizations {
        rec.log(format!("{}: realization {}/{}", s.id, k + 1, realizations));
        let cube = simulate(s, s.speed(), k)?;
        let profiles = compress(s, &cube)?;
        if k == 0 {
            write_first_recording(s, rec, &cube, &profiles)?;
        }
        let windows: Vec<SarResult<Range<usize>>> = apertures.iter().map(|a| aperture_window(s, &cube, a)).collect();
        let valid: Vec<Range<usize>> = windows.iter().filter_map(|w| w.as_ref().ok().cloned()).collect();
        let mut images = nested_images(s, &profiles, &cube, &valid).into_iter();
        let mut snr = Vec::new();
        for (idx, w) in windows.into_iter().enumerate() {
            let label = point_label(idx);
            let img = w.and_then(|_| images.next().expect("one image per valid window"));
            let img = match img {
                Ok(img) => img,
                Err(e) => {
                    if k == 0 {
                        rec.fail(&label, "point", &e);
                    }
                    snr.push(None);
                    continue;
                }
            };
            let m = measure(&s.id, &img, &s.metrology);
            snr.push(m.row.snr_db);
            if k == 0 {
                write_image_outputs(rec, s, &label, &img)?;
                write_measurement(rec, &label, &m)?;
                rows.push(m.row);
            }
        }
        if let Some(sw) = gain_sweep {
            let counts: Vec<usize> = sw.values.iter().map(|&v| v as usize).collect();
            let curve = match sw.integration {
                IntegrationMode::Coherent => snr
                    .iter()
                    .map(|v| v.ok_or(SarError::ZeroNoiseFloor))
                    .collect::<SarResult<Vec<f64>>>()
                    .and_then(|v| GainCurve::from_snr(&counts, &v)),
                IntegrationMode::NonCoherent => {
                    let grid = s.imaging.grid.build()?;
                    let inputs = ImagingInputs {
                        profiles: &profiles,
                        positions: &cube.positions,
                        params: &cube.params,
                        grid: &grid,
                        interpolation: s.imaging.interpolation,
                    };
                    integration_gain_curve(&inputs, &counts, &s.metrology.noise_region, IntegrationMode::NonCoherent)
                }
            };
            match curve {
                Ok(c) => curves.push(c),
                Err(e) => rec.fail(&format!("realization{k}"), "gain_curve", &e),
            }
        }
    }
    if gain_sweep.is_some() && curves.len() == realizations {
        let avg = GainCurve::average(&curves)?;
        rec.manifest.alpha = Some(avg.alpha);
        for r in rows.iter_mut() {
            r.alpha = Some(avg.alpha);
        }
        rec.write_text("gain_curve.csv", |w| {
            writeln!(w, "n_frames,gain_db,coherent_gain_db")?;
            for (n, g) in &avg.points {
                writeln!(w, "{n},{g},{}", GainCurve::coherent_db(*n))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn run_speed_sweep(s: &Scenario, rec: &mut RunRecorder, rows: &mut Vec<MetricsRow>) -> SarResult<()> {
    let speeds = &s.sweep.as_ref().expect("speed sweep").values;
    let results: Vec<SarResult<(BasebandCube, RangeProfileSet, SarImage)>> = speeds
        .par_iter()
        .map(|&v| {
            let cube = simulate(s, v, 0)?;
            let profiles = compress(s, &cube)?;
            let w = aperture_window(s, &cube, &s.imaging.aperture)?;
            let img = image(s, &profiles, &cube, w)?;
            Ok((cube, profiles, img))
        })
        .collect();
    for (idx, r) in results.into_iter().enumerate() {
        let label = point_label(idx);
        match r {
            Ok((cube, profiles, img)) => {
                if idx == 0 {
                    write_first_recording(s, rec, &cube, &profiles)?;
                }
                let m = measure(&s.id, &img, &s.metrology);
                write_image_outputs(rec, s, &label, &img)?;
                write_measurement(rec, &label, &m)?;
                rows.push(m.row);
            }
            Err(e) => rec.fail(&label, "point", &e),
        }
    }
    Ok(())
}
