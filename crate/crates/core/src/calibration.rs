//! Calibration tools: turn-rate regression, parking equilibria, parameter
//! fitting against parking measurements and pumping-cycle metrics.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Matrix3, Vector3};
use std::fmt::Write as _;
use thiserror::Error;

use crate::config::SimConfig;
use crate::controller::FlightPhase;
use crate::integrator::Simulation;
use crate::log::LogRecord;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("series lengths differ or are too short ({0})")]
    Length(String),
    #[error("correlation undefined: constant series")]
    ConstantSeries,
    #[error("parameter {0} is not identifiable from the data")]
    Unidentifiable(&'static str),
    #[error("apparent wind speed {0} m/s too low for the turn-rate fit")]
    LowSpeed(f64),
    #[error("no equilibrium: {0}")]
    NonEquilibrium(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("search failed: {0}")]
    Search(String),
}

/// Product-moment correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, CalibrationError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(CalibrationError::Length(format!("{} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(CalibrationError::ConstantSeries);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Centered moving average over `window` samples; near the ends the window
/// shrinks symmetrically.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            (prefix[i + h + 1] - prefix[i - h]) / (2 * h + 1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnRateSample {
    /// Turn rate, rad/s.
    pub psi_dot: f64,
    /// Apparent wind speed, m/s.
    pub v_a: f64,
    pub u_s: f64,
    /// Heading, rad.
    pub psi: f64,
    /// Elevation, rad.
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnRateFit {
    pub c0: f64,
    /// rad/m
    pub c1: f64,
    /// rad·m/s²
    pub c2: f64,
    pub rho_pcc: f64,
    /// Residual standard deviation, rad/s.
    pub sigma: f64,
}

impl TurnRateFit {
    pub fn predict(&self, s: &TurnRateSample) -> f64 {
        self.c1 * s.v_a * (s.u_s - self.c0) + self.c2 / s.v_a * s.psi.sin() * s.beta.cos()
    }
}

pub const MIN_TURN_RATE_SAMPLES: usize = 100;

/// Least-squares fit of the turn-rate law
/// `ψ̇ = c1·v_a·(u_s − c0) + (c2/v_a)·sin ψ·cos β`.
pub fn fit_turn_rate(samples: &[TurnRateSample]) -> Result<TurnRateFit, CalibrationError> {
    if samples.len() < MIN_TURN_RATE_SAMPLES {
        return Err(CalibrationError::Length(format!("{} samples, need {MIN_TURN_RATE_SAMPLES}", samples.len())));
    }
    if let Some(s) = samples.iter().find(|s| !(s.v_a > 0.5)) {
        return Err(CalibrationError::LowSpeed(s.v_a));
    }
    let rows: Vec<Vector3<f64>> =
        samples.iter().map(|s| Vector3::new(s.v_a * s.u_s, s.v_a, s.psi.sin() * s.beta.cos() / s.v_a)).collect();
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (r, s) in rows.iter().zip(samples) {
        ata += r * r.transpose();
        atb += r * s.psi_dot;
    }
    // a regressor that is (nearly) a combination of the others leaves its
    // coefficient undetermined
    let names = ["c1", "c0", "c2"];
    for j in 0..3 {
        let diag = ata[(j, j)];
        if diag <= 0.0 {
            return Err(CalibrationError::Unidentifiable(names[j]));
        }
        let others: Vec<usize> = (0..3).filter(|k| *k != j).collect();
        let sub = nalgebra::Matrix2::new(
            ata[(others[0], others[0])],
            ata[(others[0], others[1])],
            ata[(others[1], others[0])],
            ata[(others[1], others[1])],
        );
        let rhs = nalgebra::Vector2::new(ata[(others[0], j)], ata[(others[1], j)]);
        let explained = match sub.try_inverse() {
            Some(inv) => rhs.dot(&(inv * rhs)),
            None => 0.0,
        };
        if (diag - explained) / diag < 1e-10 {
            return Err(CalibrationError::Unidentifiable(if j == 0 { "c1" } else { names[j] }));
        }
    }
    let a = ata.cholesky().ok_or(CalibrationError::Unidentifiable("c1"))?.solve(&atb);
    let c1 = a[0];
    if c1.abs() < 1e-6 {
        return Err(CalibrationError::Unidentifiable("c0"));
    }
    let fit = TurnRateFit { c0: -a[1] / c1, c1, c2: a[2], rho_pcc: 0.0, sigma: 0.0 };
    let predicted: Vec<f64> = rows.iter().map(|r| r.dot(&a)).collect();
    let measured: Vec<f64> = samples.iter().map(|s| s.psi_dot).collect();
    let rho_pcc = pearson(&predicted, &measured)?;
    let n = samples.len() as f64;
    let res: Vec<f64> = predicted.iter().zip(&measured).map(|(p, m)| m - p).collect();
    let mean = res.iter().sum::<f64>() / n;
    let sigma = (res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(TurnRateFit { rho_pcc, sigma, ..fit })
}

/// Turn-rate samples from the reel-out parts of a log: the heading is
/// unwrapped and differentiated, then every channel is smoothed with a
/// centered moving average of `smoothing` seconds.
pub fn turn_rate_samples(log: &[LogRecord], smoothing: f64) -> Vec<TurnRateSample> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < log.len() {
        if !log[k].phase.is_reel_out() {
            k += 1;
            continue;
        }
        let start = k;
        while k < log.len() && log[k].phase.is_reel_out() {
            k += 1;
        }
        out.extend(segment_samples(&log[start..k], smoothing));
    }
    out
}

fn segment_samples(seg: &[LogRecord], smoothing: f64) -> Vec<TurnRateSample> {
    if seg.len() < 3 {
        return Vec::new();
    }
    let dt = seg[1].t - seg[0].t;
    let window = ((smoothing / dt).round() as usize).max(1);
    let mut psi = Vec::with_capacity(seg.len());
    let mut offset = 0.0;
    for (i, r) in seg.iter().enumerate() {
        if i > 0 {
            let jump = r.heading - seg[i - 1].heading;
            offset -= (jump / std::f64::consts::TAU).round() * std::f64::consts::TAU;
        }
        psi.push(r.heading + offset);
    }
    let n = seg.len();
    let psi_dot: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (psi[b] - psi[a]) / (seg[b].t - seg[a].t)
        })
        .collect();
    let ch = |f: &dyn Fn(&LogRecord) -> f64| moving_average(&seg.iter().map(f).collect::<Vec<_>>(), window);
    let v_a = ch(&|r| r.v_a);
    let u_s = ch(&|r| r.u_s);
    let sin_psi = ch(&|r| r.heading.sin());
    let cos_psi = ch(&|r| r.heading.cos());
    let beta = ch(&|r| r.elevation.to_radians());
    let psi_dot = moving_average(&psi_dot, window);
    (0..n)
        .map(|i| TurnRateSample {
            psi_dot: psi_dot[i],
            v_a: v_a[i],
            u_s: u_s[i],
            psi: sin_psi[i].atan2(cos_psi[i]),
            beta: beta[i],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParkingCase {
    pub v_w_ref: f64,
    pub l_t: f64,
    pub u_d: f64,
    /// Mean and standard deviation of the tether force, N.
    pub force: f64,
    pub force_std: f64,
    /// Mean and standard deviation of the elevation, degrees.
    pub elevation: f64,
    pub elevation_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParkingResult {
    pub force: f64,
    pub force_std: f64,
    pub elevation: f64,
    pub elevation_std: f64,
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Mean solver steps per control interval beyond which a parking run is
/// abandoned. A parked kite needs a few; a kite falling out of the sky
/// chatters on slack tether segments and needs hundreds.
pub const PARKING_STEP_BUDGET: usize = 100;

/// Parks the kite at zenith with a locked drum and averages force and
/// elevation over `window` seconds after `settle` seconds.
pub fn parking_equilibrium(
    config: &SimConfig,
    v_w_ref: f64,
    l_t: f64,
    u_d: f64,
    settle: f64,
    window: f64,
) -> Result<ParkingResult, CalibrationError> {
    let mut cfg = config.clone();
    cfg.atmosphere.wind.v_wind_ref = v_w_ref;
    cfg.scenario.l_t = l_t;
    cfg.scenario.phase = FlightPhase::Parking;
    cfg.controller.depower_park = u_d;
    let fail = |e: &dyn std::fmt::Display| CalibrationError::NonEquilibrium(e.to_string());
    let mut sim = Simulation::new(cfg).map_err(|e| fail(&e))?;
    let steps_before = sim.solver_stats().accepted;
    let n_settle = (settle / sim.interval()).round() as usize;
    let n_window = (window / sim.interval()).round() as usize;
    let mut log = Vec::with_capacity(n_window);
    for k in 0..n_settle + n_window {
        let record = sim.step_interval().map_err(|e| fail(&e))?;
        let steps = sim.solver_stats().accepted - steps_before;
        if steps > PARKING_STEP_BUDGET * (k + 1) {
            return Err(CalibrationError::NonEquilibrium(format!(
                "solver work exceeded {PARKING_STEP_BUDGET} steps per interval by t = {:.2} s; the kite is not parked",
                record.t
            )));
        }
        if k >= n_settle {
            log.push(record);
        }
    }
    if log.is_empty() {
        return Err(CalibrationError::InsufficientData("empty averaging window".into()));
    }
    let (force, force_std) = mean_std(&log.iter().map(|r| r.force).collect::<Vec<_>>());
    let (elevation, elevation_std) = mean_std(&log.iter().map(|r| r.elevation).collect::<Vec<_>>());
    if !(force.is_finite() && elevation.is_finite()) || force_std > 0.5 * force.abs() || force <= 0.0 {
        return Err(CalibrationError::NonEquilibrium(format!(
            "force {force:.1} ± {force_std:.1} N, elevation {elevation:.1}°"
        )));
    }
    Ok(ParkingResult { force, force_std, elevation, elevation_std })
}

/// Parameters that [`fit_parking_params`] can adjust.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeParam {
    /// Depower offset, fraction.
    UD0,
    /// Maximum depower angle, degrees.
    AlphaDMax,
    /// Roughness length, m.
    Z0,
    /// Log/power-law blend coefficient.
    K,
    /// Tether drag coefficient.
    CdT,
}

impl FreeParam {
    pub fn name(self) -> &'static str {
        match self {
            FreeParam::UD0 => "u_d0",
            FreeParam::AlphaDMax => "alpha_d_max",
            FreeParam::Z0 => "z0",
            FreeParam::K => "K",
            FreeParam::CdT => "c_d_t",
        }
    }

    pub fn get(self, cfg: &SimConfig) -> f64 {
        match self {
            FreeParam::UD0 => cfg.kite.u_d0,
            FreeParam::AlphaDMax => cfg.kite.alpha_d_max_deg,
            FreeParam::Z0 => cfg.atmosphere.wind.z0,
            FreeParam::K => cfg.atmosphere.wind.k_blend,
            FreeParam::CdT => cfg.tether.cd,
        }
    }

    pub fn set(self, cfg: &mut SimConfig, v: f64) {
        match self {
            FreeParam::UD0 => cfg.kite.u_d0 = v,
            FreeParam::AlphaDMax => cfg.kite.alpha_d_max_deg = v,
            FreeParam::Z0 => cfg.atmosphere.wind.z0 = v,
            FreeParam::K => cfg.atmosphere.wind.k_blend = v,
            FreeParam::CdT => cfg.tether.cd = v,
        }
    }

    /// Size of the initial simplex step.
    fn step(self) -> f64 {
        match self {
            FreeParam::UD0 => 0.02,
            FreeParam::AlphaDMax => 2.0,
            FreeParam::Z0 => 1e-4,
            FreeParam::K => 0.1,
            FreeParam::CdT => 0.1,
        }
    }
}

/// Published reference values of the fitted parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceParams {
    pub u_d0: f64,
    pub z0: f64,
    pub k_blend: f64,
    pub alpha_d_max_deg: f64,
    pub c_d_t: f64,
}

pub const REFERENCE_PARAMS: ReferenceParams =
    ReferenceParams { u_d0: 0.213, z0: 2e-4, k_blend: 1.0, alpha_d_max_deg: 31.0, c_d_t: 0.96 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParkingSettings {
    pub settle: f64,
    pub window: f64,
    pub max_iterations: u64,
}

impl Default for ParkingSettings {
    fn default() -> Self {
        Self { settle: 60.0, window: 60.0, max_iterations: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParkingFit {
    pub values: Vec<(FreeParam, f64)>,
    /// Force and elevation errors per case in units of the measured σ.
    pub case_errors: Vec<[f64; 2]>,
    pub success: bool,
    pub iterations: u64,
    pub warnings: Vec<String>,
}

struct ParkingCost<'a> {
    base: &'a SimConfig,
    cases: &'a [ParkingCase],
    free: &'a [FreeParam],
    settings: ParkingSettings,
}

impl ParkingCost<'_> {
    fn errors(&self, p: &[f64]) -> Vec<[f64; 2]> {
        let mut cfg = self.base.clone();
        for (f, v) in self.free.iter().zip(p) {
            f.set(&mut cfg, *v);
        }
        let settings = self.settings;
        std::thread::scope(|scope| {
            let runs: Vec<_> = self
                .cases
                .iter()
                .map(|c| {
                    let cfg = &cfg;
                    scope.spawn(move || {
                        parking_equilibrium(cfg, c.v_w_ref, c.l_t, c.u_d, settings.settle, settings.window)
                    })
                })
                .collect();
            runs.into_iter()
                .zip(self.cases)
                .map(|(run, c)| match run.join().expect("parking run panicked") {
                    Ok(r) => [(r.force - c.force) / c.force_std, (r.elevation - c.elevation) / c.elevation_std],
                    Err(_) => [1e6, 1e6],
                })
                .collect()
        })
    }
}

impl CostFunction for ParkingCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, ArgminError> {
        Ok(self.errors(p).iter().flat_map(|e| e.iter().map(|v| v.abs())).fold(0.0, f64::max))
    }
}

/// Simplex search over `free` minimizing the largest normalized error of
/// the parking cases; succeeds when every error is below one σ.
pub fn fit_parking_params(
    base: &SimConfig,
    cases: &[ParkingCase],
    free: &[FreeParam],
    settings: ParkingSettings,
) -> Result<ParkingFit, CalibrationError> {
    if free.is_empty() {
        return Err(CalibrationError::InsufficientData("no free parameters".into()));
    }
    let mut warnings = Vec::new();
    for (i, a) in cases.iter().enumerate() {
        for b in &cases[i + 1..] {
            if a.l_t == b.l_t && a.u_d == b.u_d && a.v_w_ref == b.v_w_ref {
                warnings
                    .push(format!("duplicate case (l_t = {}, u_d = {}): problem is under-determined", a.l_t, a.u_d));
            }
        }
    }
    if cases.len() < free.len() {
        warnings.push(format!("{} cases for {} free parameters: problem is under-determined", cases.len(), free.len()));
    }
    let x0: Vec<f64> = free.iter().map(|f| f.get(base)).collect();
    let mut simplex = vec![x0.clone()];
    for (j, f) in free.iter().enumerate() {
        let mut v = x0.clone();
        v[j] += f.step();
        simplex.push(v);
    }
    let cost = ParkingCost { base, cases, free, settings };
    let solver =
        NelderMead::new(simplex).with_sd_tolerance(1e-4).map_err(|e| CalibrationError::Search(e.to_string()))?;
    let res = Executor::new(cost, solver)
        .configure(|s| s.max_iters(settings.max_iterations))
        .run()
        .map_err(|e| CalibrationError::Search(e.to_string()))?;
    let best = res.state().get_best_param().cloned().unwrap_or(x0);
    let iterations = res.state().get_iter();
    let cost = ParkingCost { base, cases, free, settings };
    let case_errors = cost.errors(&best);
    let success = case_errors.iter().all(|e| e[0].abs() < 1.0 && e[1].abs() < 1.0);
    if !success {
        warnings.push("not all cases within one σ; best result reported".into());
    }
    Ok(ParkingFit { values: free.iter().copied().zip(best).collect(), case_errors, success, iterations, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMetrics {
    /// Mean tether force during reel-out and reel-in, N.
    pub f_t_o: f64,
    pub f_t_i: f64,
    /// Mean reel-out speed during reel-out and reel-in, m/s.
    pub v_t_o: f64,
    pub v_t_i: f64,
    /// Mean mechanical power of the cycle, W.
    pub p_av: f64,
    pub eta_p: f64,
    pub duty: f64,
    pub eta_cyc: f64,
    pub t_start: f64,
    pub t_cycle: f64,
}

impl CycleMetrics {
    pub fn report(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("f_t_o", self.f_t_o),
            ("f_t_i", self.f_t_i),
            ("v_t_o", self.v_t_o),
            ("v_t_i", self.v_t_i),
            ("p_av", self.p_av),
            ("eta_p", self.eta_p),
            ("duty", self.duty),
            ("eta_cyc", self.eta_cyc),
            ("t_start", self.t_start),
            ("t_cycle", self.t_cycle),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

fn is_reel_out_start(log: &[LogRecord], i: usize) -> bool {
    log[i].phase.is_reel_out() && i > 0 && log[i - 1].phase == FlightPhase::ReelIn
}

/// Metrics of the records in `cycle`, treated as one complete cycle. Every
/// record stands for one interval ending at its time stamp.
pub fn metrics_over(cycle: &[LogRecord]) -> Result<CycleMetrics, CalibrationError> {
    if cycle.len() < 2 {
        return Err(CalibrationError::InsufficientData("cycle shorter than two intervals".into()));
    }
    let dt = cycle[1].t - cycle[0].t;
    let (mut e_out, mut e_in, mut t_out, mut t_in) = (0.0, 0.0, 0.0, 0.0);
    let (mut f_o, mut f_i, mut v_o, mut v_i) = (0.0, 0.0, 0.0, 0.0);
    let (mut n_o, mut n_i) = (0usize, 0usize);
    for r in cycle {
        if r.phase == FlightPhase::ReelIn {
            e_in -= r.power * dt;
            t_in += dt;
            f_i += r.force;
            v_i += r.v_t_o;
            n_i += 1;
        } else {
            e_out += r.power * dt;
            t_out += dt;
            f_o += r.force;
            v_o += r.v_t_o;
            n_o += 1;
        }
    }
    if e_out <= 0.0 {
        return Err(CalibrationError::InsufficientData("no energy produced during reel-out".into()));
    }
    let t_cycle = t_out + t_in;
    let eta_p = (e_out - e_in) / e_out;
    let duty = t_out / t_cycle;
    let avg = |s: f64, n: usize| if n > 0 { s / n as f64 } else { 0.0 };
    Ok(CycleMetrics {
        f_t_o: avg(f_o, n_o),
        f_t_i: avg(f_i, n_i),
        v_t_o: avg(v_o, n_o),
        v_t_i: avg(v_i, n_i),
        p_av: (e_out - e_in) / t_cycle,
        eta_p,
        duty,
        eta_cyc: eta_p * duty,
        t_start: cycle[0].t - dt,
        t_cycle,
    })
}

/// Metrics of the last complete cycle (reel-out start to the next reel-out
/// start) in the log.
pub fn cycle_metrics(log: &[LogRecord]) -> Result<CycleMetrics, CalibrationError> {
    let starts: Vec<usize> = (0..log.len()).filter(|&i| is_reel_out_start(log, i)).collect();
    if starts.len() < 2 {
        return Err(CalibrationError::InsufficientData(format!(
            "{} reel-out starts after a reel-in phase; a complete cycle needs two",
            starts.len()
        )));
    }
    let (a, b) = (starts[starts.len() - 2], starts[starts.len() - 1]);
    metrics_over(&log[a..b])
}

#[cfg(test)]
// 6.28 below is a measured gravity coefficient, not 2π
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_relative_eq!(pearson(&a, &a).unwrap(), 1.0);
        assert_relative_eq!(pearson(&a, &[-1.0, -2.0, -3.0]).unwrap(), -1.0);
        assert_relative_eq!(pearson(&a, &[1.0, 2.0, 4.0]).unwrap(), 0.9820, epsilon = 5e-5);
        assert_eq!(pearson(&a, &[2.0, 2.0, 2.0]), Err(CalibrationError::ConstantSeries));
        assert!(pearson(&a, &[1.0]).is_err());
    }

    #[test]
    fn moving_average_truncates_symmetrically() {
        let x = [0.0, 3.0, 6.0, 9.0, 30.0];
        let m = moving_average(&x, 5);
        assert_eq!(m[0], 0.0);
        assert_eq!(m[1], 3.0);
        assert_eq!(m[2], 9.6);
        assert_eq!(m[3], 15.0);
        assert_eq!(m[4], 30.0);
        let lin: Vec<f64> = (0..50).map(|i| 2.0 * i as f64).collect();
        assert_eq!(moving_average(&lin, 40), lin);
    }

    fn synthetic(c0: f64, c1: f64, c2: f64, noise: f64, seed: u64) -> Vec<TurnRateSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
        (0..2000)
            .map(|k| {
                let t = k as f64 * 0.05;
                let v_a = 22.0 + 6.0 * (0.31 * t).sin() + rng.random_range(-1.0..1.0);
                let u_s = 0.2 * (0.83 * t).sin() + 0.05 * rng.random_range(-1.0..1.0);
                let psi = 3.0 * (0.21 * t).sin();
                let beta = 0.45 + 0.2 * (0.13 * t).cos();
                let psi_dot = c1 * v_a * (u_s - c0) + c2 / v_a * psi.sin() * beta.cos();
                let e = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                TurnRateSample { psi_dot: psi_dot + e, v_a, u_s, psi, beta }
            })
            .collect()
    }

    #[test]
    fn turn_rate_round_trip_with_noise() {
        let fit = fit_turn_rate(&synthetic(-0.003, 0.261, 6.28, 0.002, 7)).unwrap();
        assert_relative_eq!(fit.c1, 0.261, max_relative = 0.02);
        assert_relative_eq!(fit.c2, 6.28, max_relative = 0.02);
        assert_relative_eq!(fit.c0, -0.003, max_relative = 0.02);
        assert!(fit.sigma > 0.0015 && fit.sigma < 0.0025);
    }

    #[test]
    fn noise_free_fit_is_exact() {
        let fit = fit_turn_rate(&synthetic(-0.003, 0.261, 6.28, 0.0, 1)).unwrap();
        assert!((1.0 - fit.rho_pcc).abs() < 1e-9);
        assert_relative_eq!(fit.c0, -0.003, max_relative = 1e-8);
    }

    #[test]
    fn unidentifiable_parameters_are_named() {
        let mut s = synthetic(-0.003, 0.261, 6.28, 0.0, 1);
        for x in &mut s {
            x.psi = 0.0;
        }
        assert_eq!(fit_turn_rate(&s), Err(CalibrationError::Unidentifiable("c2")));
        let mut s = synthetic(-0.003, 0.261, 6.28, 0.0, 1);
        for x in &mut s {
            x.u_s = 0.1;
        }
        assert!(matches!(fit_turn_rate(&s), Err(CalibrationError::Unidentifiable(_))));
        assert!(matches!(fit_turn_rate(&s[..50]), Err(CalibrationError::Length(_))));
    }

    proptest! {
        #[test]
        fn scaling_turn_rate_scales_gains(scale in 0.2..5.0f64) {
            let s = synthetic(-0.003, 0.261, 6.28, 0.0, 3);
            let scaled: Vec<_> = s.iter().map(|x| TurnRateSample { psi_dot: x.psi_dot * scale, ..*x }).collect();
            let a = fit_turn_rate(&s).unwrap();
            let b = fit_turn_rate(&scaled).unwrap();
            prop_assert!((b.c1 / a.c1 - scale).abs() < 1e-8 * scale);
            prop_assert!((b.c2 / a.c2 - scale).abs() < 1e-8 * scale);
            prop_assert!((b.c0 - a.c0).abs() < 1e-10);
        }
    }

    fn record(t: f64, phase: FlightPhase, force: f64, v: f64) -> LogRecord {
        LogRecord {
            t,
            position: [0.0; 3],
            elevation: 30.0,
            azimuth: 0.0,
            heading: 0.0,
            v_a: 20.0,
            force,
            l_t: 500.0,
            v_t_o: v,
            u_s: 0.0,
            u_d: 0.3,
            v_s_set: v,
            phase,
            power: force * v,
        }
    }

    fn cycles(n_out: usize, n_in: usize, f_in: f64) -> Vec<LogRecord> {
        let mut log = Vec::new();
        for c in 0..3 {
            for k in 0..(n_out + n_in) {
                let t = 0.05 * (c * (n_out + n_in) + k + 1) as f64;
                log.push(if k < n_out {
                    record(t, FlightPhase::ReelOutRight, 3000.0, 2.0)
                } else {
                    record(t, FlightPhase::ReelIn, f_in, -8.0)
                });
            }
        }
        log
    }

    #[test]
    fn metrics_of_a_synthetic_cycle() {
        let m = cycle_metrics(&cycles(80, 20, 500.0)).unwrap();
        assert_relative_eq!(m.duty, 0.8, epsilon = 1e-12);
        let e_out = 3000.0 * 2.0 * 80.0 * 0.05;
        let e_in = 500.0 * 8.0 * 20.0 * 0.05;
        assert_relative_eq!(m.eta_p, (e_out - e_in) / e_out, epsilon = 1e-12);
        assert_relative_eq!(m.p_av, (e_out - e_in) / 5.0, epsilon = 1e-9);
        assert_eq!(m.eta_cyc, m.eta_p * m.duty);
        assert_relative_eq!(m.v_t_i, -8.0);
        assert!(m.report().contains("p_av="));
    }

    #[test]
    fn free_reel_in_gives_unit_pumping_efficiency() {
        let m = cycle_metrics(&cycles(80, 20, 0.0)).unwrap();
        assert_eq!(m.eta_p, 1.0);
    }

    #[test]
    fn constant_power_without_reel_in() {
        let log: Vec<_> =
            (0..100).map(|k| record(0.05 * (k + 1) as f64, FlightPhase::ReelOutLeft, 1000.0, 1.5)).collect();
        let m = metrics_over(&log).unwrap();
        assert_relative_eq!(m.p_av, 1500.0, epsilon = 1e-9);
        assert_eq!(m.duty, 1.0);
        assert!(cycle_metrics(&log).is_err());
    }

    #[test]
    fn cycle_efficiency_identity() {
        let (eta_p, duty) = (0.797, 0.803);
        assert_relative_eq!(eta_p * duty, 0.640, epsilon = 5e-4);
    }
}
