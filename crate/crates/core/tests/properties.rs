use std::f64::consts::PI;

use nalgebra::Rotation3;
use num_complex::Complex64;
use proptest::prelude::*;
use sarkit::format::{read_complex_array, write_complex_array, Dtype};
use sarkit::geometry::Vec3;
use sarkit::metrology::IntegrationMode;
use sarkit::pipeline;
use sarkit::vibration::{modulation_for_sidelobe_level, sidelobe_level_for_modulation};
use sarkit::{
    add_noise, channel_positions, form_image, range_compress, simulate_baseband, AntennaArray, BasebandCube,
    ChannelPositions, EchoOptions, ImageGrid, Interpolation, MountingTransform, PointTarget, RadarWaveformParams,
    RangeProfileSet, Sampling, Scenario, Trajectory, WindowFunction,
};

fn small_params() -> RadarWaveformParams {
    RadarWaveformParams {
        chirps_per_frame: 16,
        tx_count: 2,
        rx_count: 2,
        ..Default::default()
    }
}

fn positions(p: &RadarWaveformParams, frames: usize, traj: &Trajectory, mount: &MountingTransform) -> ChannelPositions {
    let schedule = p.build_schedule(frames).unwrap();
    channel_positions(traj, mount, &AntennaArray::for_waveform(p), &schedule, p, Sampling::ChirpStart).unwrap()
}

fn straight(speed: f64) -> Trajectory {
    Trajectory::straight(Vec3::new(-0.02, 0.0, 0.0), Vec3::new(speed, 0.0, 0.0))
}

fn rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

struct Scene {
    params: RadarWaveformParams,
    pos: ChannelPositions,
    profiles: RangeProfileSet,
    grid: ImageGrid,
}

fn scene(target: Vec3) -> Scene {
    let params = small_params();
    let pos = positions(&params, 3, &straight(0.4), &MountingTransform::identity());
    let cube = simulate_baseband(&[PointTarget::unit(target)], &pos, &params, &EchoOptions::default()).unwrap();
    let profiles = range_compress(&cube, WindowFunction::Hann, 4).unwrap();
    let grid = ImageGrid::centered(Vec3::new(0.0, 1.5, 0.0), Vec3::x(), Vec3::y(), (0.03, 0.03), (0.003, 0.003)).unwrap();
    Scene {
        params,
        pos,
        profiles,
        grid,
    }
}

fn noise_cube(p: &RadarWaveformParams, seed: u64) -> BasebandCube {
    let pos = positions(p, 1, &straight(0.4), &MountingTransform::identity());
    add_noise(&BasebandCube::zeros(*p, pos), 1.0, seed).unwrap()
}

fn window_strategy() -> impl Strategy<Value = WindowFunction> {
    prop_oneof![Just(WindowFunction::Hann), Just(WindowFunction::Rectangular)]
}

fn small_scenario(extra: &str) -> Scenario {
    let text = format!(
        r#"
id = "prop"
seed = 11

[trajectory]
velocity = [0.4, 0.0, 0.0]
{extra}

[[targets]]
position = [0.0, 1.5, 0.0]

[waveform]
chirps_per_frame = 16
tx_count = 2
rx_count = 2

[simulation]
frames = 3

[noise]
power = 0.5

[imaging.grid]
center = [0.0, 1.5, 0.0]
extent = [0.06, 0.06]
spacing = [0.003, 0.003]
"#
    );
    Scenario::from_toml_str(&text).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn echo_superposition(
        x1 in -0.5..0.5f64, y1 in 0.5..6.0f64,
        x2 in -0.5..0.5f64, y2 in 0.5..6.0f64,
        re in -2.0..2.0f64, im in -2.0..2.0f64,
    ) {
        let p = small_params();
        let pos = positions(&p, 1, &straight(0.4), &MountingTransform::identity());
        let t1 = PointTarget::unit(Vec3::new(x1, y1, 0.0));
        let t2 = PointTarget::new(Vec3::new(x2, y2, 0.1), Complex64::new(re, im));
        let opts = EchoOptions::default();
        let sim = |ts: &[PointTarget]| simulate_baseband(ts, &pos, &p, &opts).unwrap();
        let sum = sim(&[t1]).add_scaled(&sim(&[t2]), Complex64::new(1.0, 0.0)).unwrap();
        prop_assert!(rel_diff(sim(&[t1, t2]).data(), sum.data()) < 1e-9);
    }

    #[test]
    fn echo_phase_follows_target_phase(y in 0.5..6.0f64, phi in -PI..PI) {
        let p = small_params();
        let pos = positions(&p, 1, &straight(0.4), &MountingTransform::identity());
        let at = Vec3::new(0.05, y, 0.0);
        let rot = Complex64::from_polar(1.0, phi);
        let a = simulate_baseband(&[PointTarget::unit(at)], &pos, &p, &EchoOptions::default()).unwrap();
        let b = simulate_baseband(&[PointTarget::new(at, rot)], &pos, &p, &EchoOptions::default()).unwrap();
        for (x, z) in a.data().iter().zip(b.data()) {
            prop_assert!(((z / x) / rot).arg().abs() < 1e-9);
        }
    }

    #[test]
    fn schedule_is_exact(tx in 1usize..5, per_tx in 1usize..9, frames in 1usize..6, tr_us in 50.0..400.0f64) {
        let p = RadarWaveformParams {
            tx_count: tx,
            chirps_per_frame: tx * per_tx,
            chirp_interval_s: tr_us * 1e-6,
            chirp_duration_s: 0.5 * tr_us * 1e-6,
            frame_interval_s: (tx * per_tx) as f64 * tr_us * 1e-6 * 1.5,
            ..Default::default()
        };
        let s = p.build_schedule(frames).unwrap();
        prop_assert_eq!(s.len(), frames * tx * per_tx);
        for f in 0..frames {
            for m in 0..per_tx {
                for i in 0..tx {
                    let slow = f * per_tx + m;
                    let c = s.chirp(i, slow);
                    let k = m * tx + i;
                    prop_assert_eq!((c.frame, c.slow, c.tx), (f, m, i));
                    prop_assert_eq!(c.start_time_s, f as f64 * p.frame_interval_s + k as f64 * p.chirp_interval_s);
                }
            }
        }
    }

    #[test]
    fn array_geometry_is_rigid(
        roll in -PI..PI, pitch in -1.5..1.5f64, yaw in -PI..PI,
        mroll in -PI..PI, myaw in -PI..PI,
        tx in -0.2..0.2f64, ty in -0.2..0.2f64,
        vx in -2.0..2.0f64, vy in -2.0..2.0f64,
    ) {
        let p = small_params();
        let orientation = Rotation3::from_euler_angles(roll, pitch, yaw).into_inner();
        let traj = Trajectory::straight(Vec3::new(0.3, -0.1, 0.2), Vec3::new(vx, vy, 0.0))
            .with_orientation(orientation)
            .unwrap();
        let mount = MountingTransform::new(
            Vec3::new(tx, ty, 0.05),
            Rotation3::from_euler_angles(mroll, 0.0, myaw).into_inner(),
        )
        .unwrap();
        let array = AntennaArray::for_waveform(&p);
        let pos = positions(&p, 2, &traj, &mount);
        for chirp in [0, 7, pos.chirp_count() - 1] {
            let tx_off = array.tx_offsets[pos.schedule.chirps[chirp].tx];
            for (j, rx_off) in array.rx_offsets.iter().enumerate() {
                let d = (pos.tx_at(chirp, 0) - pos.rx_at(chirp, j, 0)).norm();
                prop_assert!((d - (tx_off - rx_off).norm()).abs() < 1e-12);
            }
            for j in 1..array.rx_offsets.len() {
                let d = (pos.rx_at(chirp, j, 0) - pos.rx_at(chirp, 0, 0)).norm();
                prop_assert!((d - (array.rx_offsets[j] - array.rx_offsets[0]).norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn platform_speed_is_recovered(speed in 0.01..5.0f64, frames in 2usize..6) {
        let p = small_params();
        let pos = positions(&p, frames, &straight(speed), &MountingTransform::identity());
        prop_assert!((pos.platform_speed() - speed).abs() / speed < 1e-9);
    }

    #[test]
    fn range_compression_parseval(seed in any::<u64>(), zp in 1usize..9, window in window_strategy()) {
        let cube = noise_cube(&small_params(), seed);
        let rp = range_compress(&cube, window, zp).unwrap();
        let w = window.coefficients(cube.params.fast_time_count());
        for slow in 0..2 {
            let time: f64 = cube.row(1, 0, slow).iter().zip(&w).map(|(s, k)| (s * k).norm_sqr()).sum();
            let freq: f64 = rp.row(1, 0, slow).iter().map(|z| z.norm_sqr()).sum::<f64>() / rp.n_bins() as f64;
            prop_assert!((time - freq).abs() / time < 1e-9);
        }
    }

    #[test]
    fn range_compression_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), re in -3.0..3.0f64, im in -3.0..3.0f64) {
        let p = small_params();
        let (a, b) = (noise_cube(&p, s1), noise_cube(&p, s2));
        let k = Complex64::new(re, im);
        let combined = range_compress(&a.add_scaled(&b, k).unwrap(), WindowFunction::Hann, 4).unwrap();
        let (ra, rb) = (range_compress(&a, WindowFunction::Hann, 4).unwrap(), range_compress(&b, WindowFunction::Hann, 4).unwrap());
        let expected: Vec<Complex64> = ra.data().iter().zip(rb.data()).map(|(x, y)| x + y * k).collect();
        prop_assert!(rel_diff(&expected, combined.data()) < 1e-9);
    }

    #[test]
    fn modulation_level_is_monotone(a in 1e-4..2.4f64, b in 1e-4..2.4f64) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(sidelobe_level_for_modulation(lo).unwrap() < sidelobe_level_for_modulation(hi).unwrap());
    }

    #[test]
    fn f64_files_round_trip_bit_exact(values in prop::collection::vec((any::<f64>(), any::<f64>()), 1..64)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.sarb");
        let data: Vec<Complex64> = values.iter().map(|&(r, i)| Complex64::new(r, i)).collect();
        write_complex_array(&path, &[data.len()], &data, Dtype::F64).unwrap();
        let (dims, dtype, back) = read_complex_array(&path).unwrap();
        prop_assert_eq!(dims, vec![data.len()]);
        prop_assert_eq!(dtype, Dtype::F64);
        for (x, y) in data.iter().zip(&back) {
            prop_assert_eq!((x.re.to_bits(), x.im.to_bits()), (y.re.to_bits(), y.im.to_bits()));
        }
    }

    #[test]
    fn f32_files_round_to_single(values in prop::collection::vec((-1e30..1e30f64, -1e-30..1e-30f64), 1..64)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.sarb");
        let data: Vec<Complex64> = values.iter().map(|&(r, i)| Complex64::new(r, i)).collect();
        write_complex_array(&path, &[1, data.len()], &data, Dtype::F32).unwrap();
        let (_, _, back) = read_complex_array(&path).unwrap();
        for (x, y) in data.iter().zip(&back) {
            prop_assert_eq!(y.re, x.re as f32 as f64);
            prop_assert_eq!(y.im, x.im as f32 as f64);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sub_apertures_add_up(split in 1usize..23, tx in -0.01..0.01f64, ty in 1.49..1.51f64) {
        let sc = scene(Vec3::new(tx, ty, 0.0));
        let total = sc.pos.schedule.total_slow();
        let form = |r: std::ops::Range<usize>| {
            form_image(&sc.profiles, &sc.pos, &sc.params, &sc.grid, Interpolation::Linear, r).unwrap()
        };
        let full = form(0..total);
        let mut parts = form(0..split);
        parts.add_data(&form(split..total)).unwrap();
        prop_assert!(rel_diff(full.data(), parts.data()) < 1e-12);
    }

    #[test]
    fn grid_shift_shifts_image(kx in 0usize..4, ky in 0usize..4) {
        let sc = scene(Vec3::new(0.0, 1.5, 0.0));
        let total = sc.pos.schedule.total_slow();
        let g = sc.grid;
        let shifted = g.translated(Vec3::x() * (kx as f64 * g.dx) + Vec3::y() * (ky as f64 * g.dy));
        let form = |grid: &ImageGrid| {
            form_image(&sc.profiles, &sc.pos, &sc.params, grid, Interpolation::Linear, 0..total).unwrap()
        };
        let (a, b) = (form(&g), form(&shifted));
        let (nx, ny) = a.dims();
        let scale = a.peak().2;
        for iy in 0..ny - ky {
            for ix in 0..nx - kx {
                prop_assert!((a.at(ix + kx, iy + ky) - b.at(ix, iy)).norm() / scale < 1e-9);
            }
        }
    }

    #[test]
    fn drift_never_raises_the_peak(sigma in 1e-5..2e-3f64, angular in 0.0..2e-3f64, seed in any::<u64>()) {
        let mut clean = small_scenario("");
        clean.noise = None;
        let mut drifted = small_scenario(&format!(
            "[trajectory.drift]\nposition_sigma = [{sigma}, {sigma}, {sigma}]\nangular_sigma = {angular}\n"
        ));
        drifted.noise = None;
        drifted.seed = seed;
        let peak = |s: &Scenario| {
            let cube = pipeline::simulate(s, s.speed(), 0).unwrap();
            let rp = pipeline::compress(s, &cube).unwrap();
            let total = cube.positions.schedule.total_slow();
            pipeline::image(s, &rp, &cube, 0..total).unwrap().peak().2
        };
        prop_assert!(peak(&drifted) <= peak(&clean) * (1.0 + 1e-6));
    }
}

#[test]
fn level_inverse_round_trip() {
    for k in 0..20 {
        let level = -60.0 + 59.5 * k as f64 / 19.0;
        let a = modulation_for_sidelobe_level(level).unwrap();
        let back = sidelobe_level_for_modulation(a).unwrap();
        assert!((back - level).abs() < 1e-6, "{level} -> {a} -> {back}");
    }
}

#[test]
fn runs_are_deterministic() {
    let s = small_scenario("[trajectory.drift]\nposition_sigma = [1e-4, 1e-4, 0.0]\nangular_sigma = 1e-4\n");
    let a = pipeline::simulate(&s, s.speed(), 0).unwrap();
    let b = pipeline::simulate(&s, s.speed(), 0).unwrap();
    assert_eq!(a, b);
    let mut other = s.clone();
    other.seed += 1;
    assert_ne!(a, pipeline::simulate(&other, s.speed(), 0).unwrap());

    let rp = pipeline::compress(&s, &a).unwrap();
    let total = a.positions.schedule.total_slow();
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| pipeline::image(&s, &rp, &a, 0..total).unwrap())
    };
    let one = in_pool(1);
    let three = in_pool(3);
    assert!(one
        .data()
        .iter()
        .zip(three.data())
        .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
}

#[test]
fn noncoherent_integration_is_sublinear() {
    let mut s = small_scenario("");
    s.simulation.frames = 12;
    s.simulation.randomize_frame_phase = true;
    s.noise.as_mut().unwrap().power = 20.0;
    s.imaging.grid = sarkit::scenario::GridConfig {
        extent: [3.0, 2.0],
        spacing: [0.1, 0.05],
        ..s.imaging.grid.clone()
    };
    s.imaging.aperture.anchor = sarkit::ApertureAnchor::Start;
    s.sweep = Some(sarkit::scenario::SweepConfig {
        axis: sarkit::scenario::SweepAxis::Frames,
        values: (1..=12).map(f64::from).collect(),
        realizations: 4,
        vary_vibration_phase: false,
        integration: IntegrationMode::NonCoherent,
    });
    s.outputs.images = false;
    let dir = tempfile::tempdir().unwrap();
    let manifest = pipeline::run_scenario(&s, dir.path(), &pipeline::RunOptions::default()).unwrap();
    let alpha = manifest.alpha.unwrap();
    assert!((0.45..1.0).contains(&alpha), "alpha {alpha}");
}
