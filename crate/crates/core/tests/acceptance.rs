//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! values. A failing criterion is reported, not raised; the process only
//! exits non-zero when the harness itself breaks.

use std::sync::atomic::AtomicBool;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use kitesim_core::atmosphere::{fit_exponent, fit_profile, wind_speed, UniformAir, WindLaw, WindProfile};
use kitesim_core::calibration::{
    cycle_metrics, fit_parking_params, fit_turn_rate, parking_equilibrium, turn_rate_samples, FreeParam, ParkingCase,
    ParkingResult, ParkingSettings, TurnRateSample,
};
use kitesim_core::config::SimConfig;
use kitesim_core::controller::FlightPhase;
use kitesim_core::integrator::model::{KiteModel, TetherModel};
use kitesim_core::integrator::radau::{Radau5, RadauSettings};
use kitesim_core::integrator::{run_realtime, RealtimeOptions, Simulation};
use kitesim_core::log::{write_csv, LogRecord};
use kitesim_core::tether::{
    hanging_equilibrium, particle_forces, segment_drag, segment_rest_length, AnchoredTether, ReelState, TetherParams,
};
use kitesim_core::winch::{torque_at_slip, WinchParams};
use kitesim_core::{Vec3, G_EARTH};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<(bool, String), String>;

// parking comparison
const PARK_WIND: f64 = 8.0;
const PARK_TURBULENCE: f64 = 0.01;
const PARK_L_T: f64 = 392.0;
const PARK_DEPOWER: f64 = 0.26;
const PARK_SETTLE: f64 = 60.0;
const PARK_WINDOW: f64 = 60.0;
const PARK_FORCE_4P_SEG: f64 = 670.2;
const PARK_FORCE_REL_TOL: f64 = 0.10;
const PARK_ELEVATION_4P_SEG: f64 = 68.5;
const PARK_ELEVATION_TOL: f64 = 3.0;
const PARK_RUNTIME: f64 = 300.0;

// turn-rate law
const TURN_DURATION_4P: f64 = 450.0;
const TURN_DURATION_1P: f64 = 300.0;
const TURN_RHO_MIN: f64 = 0.999;
const TURN_C1: f64 = 0.262;
const TURN_C2: f64 = 6.27;
const TURN_REL_TOL: f64 = 0.15;
const TURN_SMOOTHING: f64 = 2.0;
const TURN_RUNTIME: f64 = 300.0;

// pumping cycle
const PUMP_DURATION: f64 = 450.0;
const PUMP_U_D0: f64 = 0.234;
const PUMP_DEPOWER_IN: f64 = 0.401;
const PUMP_WIND: f64 = 9.51;
const PUMP_P_AV: f64 = 3681.5;
const PUMP_P_AV_REL_TOL: f64 = 0.20;
const PUMP_DUTY: f64 = 0.803;
const PUMP_DUTY_TOL: f64 = 0.08;
const PUMP_IDENTITY_TOL: f64 = 1e-9;
const PUMP_V_T_I: f64 = -7.69;
const PUMP_V_T_I_REL_TOL: f64 = 0.20;
const PUMP_RUNTIME: f64 = 600.0;

// winch
const WINCH_PEAK_SLIP: f64 = 0.6376;
const WINCH_PEAK_SLIP_TOL: f64 = 5e-5;
const WINCH_PEAK_REL_TOL: f64 = 1e-9;

// tether
const DRAG_PERP_TOL: f64 = 1e-10;
const ENERGY_DRIFT_MAX: f64 = 0.01;
const ENERGY_DURATION: f64 = 60.0;
const HANGING_FORCE: f64 = 50.0;
const HANGING_FORCE_TOL: f64 = 0.5;

// calibration round trips
const PROFILE_Z0_REL_TOL: f64 = 0.05;
const PROFILE_K_TOL: f64 = 0.01;
const TURN_FIT_REL_TOL: f64 = 0.02;
const TURN_FIT_NOISE: f64 = 0.002;
const PARKING_FIT_U_D0_TOL: f64 = 0.005;

// determinism and real time
const REALTIME_DURATION: f64 = 60.0;
const REALTIME_MISS_MAX: f64 = 0.01;
const EQUIVALENCE_DURATION: f64 = 30.0;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion(name: &str, run: impl FnOnce() -> Outcome) -> Option<bool> {
    // trailing arguments select criteria by substring
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
        return None;
    }
    let start = Instant::now();
    let (pass, detail) = match run() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("{verdict} {name}: {detail} [{:.1} s]", start.elapsed().as_secs_f64());
    Some(pass)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn parking_config(kite: KiteModel, tether: TetherModel) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.model.kite = kite;
    cfg.model.tether = tether;
    cfg.scenario.phase = FlightPhase::Parking;
    cfg.atmosphere.wind.law = WindLaw::Power;
    cfg.atmosphere.wind.alpha = 1.0 / 7.0;
    cfg.atmosphere.wind.turbulence_intensity = PARK_TURBULENCE;
    cfg
}

fn parking_comparison() -> Outcome {
    let start = Instant::now();
    let variants = [
        ("1p straight", KiteModel::OnePoint, TetherModel::Straight),
        ("1p segmented", KiteModel::OnePoint, TetherModel::Segmented),
        ("4p straight", KiteModel::FourPoint, TetherModel::Straight),
        ("4p segmented", KiteModel::FourPoint, TetherModel::Segmented),
    ];
    let results: Vec<Result<ParkingResult, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = variants
            .iter()
            .map(|&(_, kite, tether)| {
                s.spawn(move || {
                    parking_equilibrium(
                        &parking_config(kite, tether),
                        PARK_WIND,
                        PARK_L_T,
                        PARK_DEPOWER,
                        PARK_SETTLE,
                        PARK_WINDOW,
                    )
                    .map_err(err)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let runtime = start.elapsed().as_secs_f64();
    let mut rows = Vec::new();
    let mut parked = Vec::new();
    for ((name, _, _), r) in variants.iter().zip(results) {
        let r = r.map_err(|e| format!("{name}: {e}"))?;
        rows.push(format!("{name} {:.1}±{:.1} N {:.2}°", r.force, r.force_std, r.elevation));
        parked.push(r);
    }
    let four_seg = parked[3];
    let force_ok = rel(four_seg.force, PARK_FORCE_4P_SEG) <= PARK_FORCE_REL_TOL;
    let elevation_ok = (four_seg.elevation - PARK_ELEVATION_4P_SEG).abs() <= PARK_ELEVATION_TOL;
    let stds: Vec<f64> = parked.iter().map(|p| p.force_std).collect();
    let smallest = stds.iter().cloned().fold(f64::INFINITY, f64::min);
    let largest = stds.iter().cloned().fold(0.0, f64::max);
    let ordering_ok = stds[3] == smallest && stds[0] == largest;
    let runtime_ok = runtime < PARK_RUNTIME;
    let detail = format!(
        "{}; force {} elevation {} variance ordering {} runtime {}",
        rows.join(", "),
        ok(force_ok),
        ok(elevation_ok),
        ok(ordering_ok),
        ok(runtime_ok)
    );
    Ok((force_ok && elevation_ok && ordering_ok && runtime_ok, detail))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "off"
    }
}

fn pumping_config(kite: KiteModel) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.model.kite = kite;
    cfg.atmosphere.wind.v_wind_ref = PUMP_WIND;
    cfg.kite.u_d0 = PUMP_U_D0;
    cfg.controller.depower_in = PUMP_DEPOWER_IN;
    cfg
}

fn fly(cfg: SimConfig, duration: f64) -> Result<Vec<LogRecord>, String> {
    let mut sim = Simulation::new(cfg).map_err(err)?;
    sim.run_batch(duration).map_err(err)
}

fn turn_rate_law() -> Outcome {
    let start = Instant::now();
    let four = fly(pumping_config(KiteModel::FourPoint), TURN_DURATION_4P)?;
    let one = fly(pumping_config(KiteModel::OnePoint), TURN_DURATION_1P)?;
    let f4 = fit_turn_rate(&turn_rate_samples(&four, TURN_SMOOTHING)).map_err(err)?;
    let f1 = fit_turn_rate(&turn_rate_samples(&one, TURN_SMOOTHING)).map_err(err)?;
    let runtime_ok = start.elapsed().as_secs_f64() < TURN_RUNTIME;
    let rho4 = f4.rho_pcc >= TURN_RHO_MIN;
    let c1 = rel(f4.c1, TURN_C1) <= TURN_REL_TOL;
    let c2 = rel(f4.c2, TURN_C2) <= TURN_REL_TOL;
    let rho1 = f1.rho_pcc >= TURN_RHO_MIN;
    let detail = format!(
        "4p rho {:.5} ({}) c1 {:.4} rad/m ({}) c2 {:.3} rad·m/s² ({}) c0 {:.4}; 1p rho {:.5} ({}); runtime {}",
        f4.rho_pcc,
        ok(rho4),
        f4.c1,
        ok(c1),
        f4.c2,
        ok(c2),
        f4.c0,
        f1.rho_pcc,
        ok(rho1),
        ok(runtime_ok)
    );
    Ok((rho4 && c1 && c2 && rho1 && runtime_ok, detail))
}

fn pumping_cycle() -> Outcome {
    let start = Instant::now();
    let log = fly(pumping_config(KiteModel::FourPoint), PUMP_DURATION)?;
    let m = cycle_metrics(&log).map_err(err)?;
    let runtime_ok = start.elapsed().as_secs_f64() < PUMP_RUNTIME;
    let p_av = rel(m.p_av, PUMP_P_AV) <= PUMP_P_AV_REL_TOL;
    let duty = (m.duty - PUMP_DUTY).abs() <= PUMP_DUTY_TOL;
    let identity = (m.eta_cyc - m.eta_p * m.duty).abs() <= PUMP_IDENTITY_TOL;
    let v_t_i = rel(m.v_t_i, PUMP_V_T_I) <= PUMP_V_T_I_REL_TOL;
    let detail = format!(
        "cycle of {:.1} s from t = {:.1} s; p_av {:.1} W ({}) duty {:.3} ({}) eta_p {:.3} eta_cyc {:.3} identity ({}) v_t_i {:.2} m/s ({}) F_t_o {:.0} N F_t_i {:.0} N; runtime {}",
        m.t_cycle,
        m.t_start,
        m.p_av,
        ok(p_av),
        m.duty,
        ok(duty),
        m.eta_p,
        m.eta_cyc,
        ok(identity),
        m.v_t_i,
        ok(v_t_i),
        m.f_t_o,
        m.f_t_i,
        ok(runtime_ok)
    );
    Ok((p_av && duty && identity && v_t_i && runtime_ok, detail))
}

fn winch_suite() -> Outcome {
    let p = WinchParams::default();
    let zero = [-8.0, -1.0, 0.0, 2.0, 4.09, 9.0].iter().all(|&v| torque_at_slip(&p, v, 0.0) == 0.0);
    let slip = 1.0 / p.beta().sqrt();
    let peak = p.alpha(0.0) / (2.0 * p.beta().sqrt());
    let at_peak = torque_at_slip(&p, 0.0, slip);
    let peak_ok = rel(at_peak, peak) <= WINCH_PEAK_REL_TOL && (slip - WINCH_PEAK_SLIP).abs() <= WINCH_PEAK_SLIP_TOL;
    let global = (1..2000).map(|k| k as f64 * 0.005).all(|s| torque_at_slip(&p, 0.0, s) <= at_peak);
    let v = p.v_s_nominal;
    let quarter =
        [0.05, 0.3, 0.6376, 2.0].iter().all(|&s| torque_at_slip(&p, 2.0 * v, s) == 0.25 * torque_at_slip(&p, v, s));
    let detail = format!(
        "zero torque at zero slip ({}); peak {:.3} N·m at slip {:.4} m/s ({}, global {}); field weakening quarter torque ({})",
        ok(zero),
        at_peak,
        slip,
        ok(peak_ok),
        ok(global),
        ok(quarter)
    );
    Ok((zero && peak_ok && global && quarter, detail))
}

fn energy_drift() -> Result<f64, String> {
    let params = TetherParams { c0: 0.0, cd: 0.0, ..TetherParams::default() };
    let l = 392.0;
    let n = params.n_segments;
    let pos: Vec<Vec3> = (0..=n).map(|i| Vec3::new(l * i as f64 / n as f64, 0.0, 0.0)).collect();
    let mut y = AnchoredTether::<UniformAir>::pack(&pos, &vec![Vec3::zeros(); n + 1]);
    let air = UniformAir { wind: Vec3::zeros(), rho: 1.225 };
    let mut tether = AnchoredTether { params: params.clone(), reel: ReelState { l_t_i: l, v_t_o: 0.0, t_i: 0.0 }, air };
    let e0 = tether.energy(0.0, &y).map_err(err)?;
    let scale = params.sigma * l * G_EARTH * l / 2.0;
    let mut settings = RadauSettings::new(1e-7, vec![1e-7; y.len()]);
    settings.max_steps = 100_000;
    let mut solver = Radau5::new(y.len(), settings).map_err(err)?;
    let steps = (ENERGY_DURATION / 0.05).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let t1 = (k + 1) as f64 * 0.05;
        solver.integrate(&mut tether, k as f64 * 0.05, t1, &mut y).map_err(err)?;
        worst = worst.max((tether.energy(t1, &y).map_err(err)? - e0).abs() / scale);
    }
    Ok(worst)
}

fn tether_suite() -> Outcome {
    let params = TetherParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut v =
        || Vec3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
    let mut worst_perp: f64 = 0.0;
    for _ in 0..10_000 {
        let (w, a, b, s) = (v(), v(), v(), v());
        if s.norm() < 1e-3 {
            continue;
        }
        let d = segment_drag(&w, &a, &b, &s, 1.225, &params).map_err(err)?;
        if d.norm() > 0.0 {
            worst_perp = worst_perp.max(d.dot(&s).abs() / (d.norm() * s.norm()));
        }
    }
    let perp = worst_perp <= DRAG_PERP_TOL;

    let mut mass_exact = true;
    for (l0, v_t, t) in [(392.0, 4.0, 37.5), (700.0, -7.69, 20.0), (250.0, 0.0, 100.0), (392.0, 2.3, 0.05)] {
        let reel = ReelState { l_t_i: l0, v_t_o: v_t, t_i: 0.0 };
        let l_s = segment_rest_length(&reel, t, params.n_segments).map_err(err)?;
        let l = l_s * params.n_segments as f64;
        let pos = hanging_equilibrium(&params, l);
        let air = UniformAir { wind: Vec3::zeros(), rho: 1.225 };
        let loads = particle_forces(&pos, &vec![Vec3::zeros(); pos.len()], l, &air, &params).map_err(err)?;
        let total: f64 = loads.masses.iter().sum();
        let expected = params.sigma * (l0 + v_t * t);
        mass_exact &= (total - expected).abs() <= 4.0 * f64::EPSILON * expected;
    }

    let drift = energy_drift()?;
    let drift_ok = drift < ENERGY_DRIFT_MAX;

    let pos = hanging_equilibrium(&params, 392.0);
    let air = UniformAir { wind: Vec3::zeros(), rho: 1.225 };
    let loads = particle_forces(&pos, &vec![Vec3::zeros(); pos.len()], 392.0, &air, &params).map_err(err)?;
    let hanging = loads.ground_force.norm();
    let hanging_ok = (hanging - HANGING_FORCE).abs() <= HANGING_FORCE_TOL;

    let detail = format!(
        "drag perpendicularity {worst_perp:.1e} ({}); reeled mass ({}); energy drift {:.3}% over 60 s ({}); hanging ground force {hanging:.2} N ({})",
        ok(perp),
        ok(mass_exact),
        100.0 * drift,
        ok(drift_ok),
        ok(hanging_ok)
    );
    Ok((perp && mass_exact && drift_ok && hanging_ok, detail))
}

fn synthetic_turn_rates(c0: f64, c1: f64, c2: f64, noise: f64) -> Vec<TurnRateSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let normal = Normal::new(0.0, noise).unwrap();
    (0..3000)
        .map(|k| {
            let t = k as f64 * 0.05;
            let v_a = 24.0 + 5.0 * (0.27 * t).sin() + rng.random_range(-1.0..1.0);
            let u_s = 0.15 * (0.71 * t).sin() + 0.05 * rng.random_range(-1.0..1.0);
            let psi = 2.8 * (0.19 * t).sin();
            let beta = 0.5 + 0.15 * (0.11 * t).cos();
            let psi_dot = c1 * v_a * (u_s - c0) + c2 / v_a * psi.sin() * beta.cos() + normal.sample(&mut rng);
            TurnRateSample { psi_dot, v_a, u_s, psi, beta }
        })
        .collect()
}

fn parking_fit_round_trip() -> Result<(f64, f64), String> {
    let mut truth = SimConfig::default();
    truth.model.kite = KiteModel::OnePoint;
    truth.scenario.phase = FlightPhase::Parking;
    let settings = ParkingSettings { settle: 30.0, window: 20.0, max_iterations: 30 };
    let mut cases = Vec::new();
    for (v_w, l_t, u_d) in [(8.0, 300.0, 0.30), (9.51, 500.0, 0.30), (9.51, 392.0, 0.34)] {
        let r = parking_equilibrium(&truth, v_w, l_t, u_d, settings.settle, settings.window).map_err(err)?;
        cases.push(ParkingCase {
            v_w_ref: v_w,
            l_t,
            u_d,
            force: r.force,
            force_std: r.force_std.max(5.0),
            elevation: r.elevation,
            elevation_std: r.elevation_std.max(0.2),
        });
    }
    let mut start = truth.clone();
    start.kite.u_d0 = truth.kite.u_d0 + 0.03;
    let fit = fit_parking_params(&start, &cases, &[FreeParam::UD0], settings).map_err(err)?;
    Ok((truth.kite.u_d0, fit.values[0].1))
}

fn calibration_round_trips() -> Outcome {
    let mut profile_ok = true;
    let mut profile_detail = Vec::new();
    for (z0, k) in [(2e-4, 1.0), (5e-3, 0.6), (0.05, -0.5)] {
        let mut truth = WindProfile { v_wind_ref: 9.51, z0, k_blend: k, ..WindProfile::default() };
        truth.alpha = fit_exponent(&truth, 100.0).map_err(err)?;
        let sample = |z: f64| wind_speed(&truth, z, WindLaw::Blended).map(|v| (z, v)).map_err(err);
        let fit = fit_profile([sample(6.0)?, sample(100.0)?, sample(300.0)?], 6.0, 9.51).map_err(err)?;
        let good = rel(fit.z0, z0) <= PROFILE_Z0_REL_TOL && (fit.k_blend - k).abs() <= PROFILE_K_TOL;
        profile_ok &= good;
        profile_detail.push(format!("({:.2e}, {:.3})", fit.z0, fit.k_blend));
    }

    // c2 is a measured gravity coefficient, not 2π
    #[allow(clippy::approx_constant)]
    let (c0, c1, c2) = (-0.003, 0.261, 6.28);
    let f = fit_turn_rate(&synthetic_turn_rates(c0, c1, c2, TURN_FIT_NOISE)).map_err(err)?;
    let turn_ok =
        rel(f.c0, c0) <= TURN_FIT_REL_TOL && rel(f.c1, c1) <= TURN_FIT_REL_TOL && rel(f.c2, c2) <= TURN_FIT_REL_TOL;

    let (u_true, u_fit) = parking_fit_round_trip()?;
    let parking_ok = (u_fit - u_true).abs() <= PARKING_FIT_U_D0_TOL;

    let detail = format!(
        "wind profile fits {} ({}); turn rate c0 {:.5} c1 {:.4} c2 {:.3} ({}); parking fit u_d0 {:.4} vs {:.4} ({})",
        profile_detail.join(" "),
        ok(profile_ok),
        f.c0,
        f.c1,
        f.c2,
        ok(turn_ok),
        u_fit,
        u_true,
        ok(parking_ok)
    );
    Ok((profile_ok && turn_ok && parking_ok, detail))
}

fn determinism_and_realtime() -> Outcome {
    let mut cfg = SimConfig::default();
    cfg.atmosphere.wind.turbulence_intensity = 0.01;
    let mut batch = Vec::new();
    write_csv(&mut batch, &fly(cfg.clone(), EQUIVALENCE_DURATION)?).map_err(err)?;
    let (_tx, rx) = mpsc::channel::<String>();
    let stop = AtomicBool::new(false);

    let mut sim = Simulation::new(cfg.clone()).map_err(err)?;
    let unpaced = RealtimeOptions { duration: Some(EQUIVALENCE_DURATION), paced: false };
    let report = run_realtime(&mut sim, unpaced, &rx, &mut |_| 0, &stop).map_err(err)?;
    let mut rt = Vec::new();
    write_csv(&mut rt, &report.log).map_err(err)?;
    let identical = batch == rt;

    assert_eq!(cfg.tether.n_segments, 7);
    let mut sim = Simulation::new(cfg).map_err(err)?;
    let paced = RealtimeOptions { duration: Some(REALTIME_DURATION), paced: true };
    let start = Instant::now();
    let report = run_realtime(&mut sim, paced, &rx, &mut |_| 0, &stop).map_err(err)?;
    let wall = start.elapsed();
    let fraction = report.missed as f64 / report.published as f64;
    let cadence_ok = fraction < REALTIME_MISS_MAX
        && report.published == (REALTIME_DURATION / 0.05).round() as u64
        && wall >= Duration::from_secs_f64(REALTIME_DURATION);
    let detail = format!(
        "batch vs clientless real time byte-identical ({}); {} frames in {:.2} s wall, {} deadline misses = {:.2}% ({})",
        ok(identical),
        report.published,
        wall.as_secs_f64(),
        report.missed,
        100.0 * fraction,
        ok(cadence_ok)
    );
    Ok((identical && cadence_ok, detail))
}

fn main() {
    // the cadence check runs first so it has the machine to itself
    let results = [
        criterion("determinism and real time", determinism_and_realtime),
        criterion("winch unit suite", winch_suite),
        criterion("tether property suite", tether_suite),
        criterion("calibration round trips", calibration_round_trips),
        criterion("parking comparison", parking_comparison),
        criterion("turn-rate law reproduction", turn_rate_law),
        criterion("pumping cycle", pumping_cycle),
    ];
    let run: Vec<bool> = results.into_iter().flatten().collect();
    let passed = run.iter().filter(|p| **p).count();
    println!("{passed}/{} criteria passed", run.len());
}
