//! End-to-end numerical experiments. Each returns an [`ExperimentReport`]
//! whose checks record the tolerance used and where it comes from.
//!
//! Theorems about this process assert that certain constants exist without
//! giving values, so the Monte Carlo experiments fit an empirical constant
//! at one scale and test that the same constant works (or that normalized
//! values stay comparable) at the others. Results are claimed only for
//! radii below the working proxy [`RADIUS_PROXY`].
//!
//! Every experiment is a pure function of its parameters and seed. Random
//! streams are keyed by experiment, scale and batch, so the report bytes do
//! not depend on the thread count.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::capacity::{ball_capacity_scaling_report, capacity_estimate, Ball, CompactSet};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::exponents::char_exponent;
use crate::inversion::{
    gamma_potential_v, invert, levy_density_mu, potential_density_u, ProfileSettings, ProfileTables, TransformSpec,
};
use crate::kernels::{
    f_aux, f_aux_inverse, f_aux_inverse_asymptote, green_constant, levy_small_r_asymptote, Dimension, KernelKind,
    KernelTable, RadialKernels,
};
use crate::montecarlo::{
    harmonic_eval_coupled, poisson_kernel, run_batches, ExitSample, HitOutcome, McContext, Payoff, Simulator,
    SubordinatorModel, JUMPS_PER_STEP,
};
use crate::report::{ExperimentReport, Series, ToleranceOrigin};
use crate::stats::{spread, Estimate, LinearFit, Moments, Z95};

/// Radii below which scale-invariance claims are tested.
pub const RADIUS_PROXY: f64 = 0.05;

/// Names accepted by [`run_experiment`].
pub const EXPERIMENTS: [&str; 8] = [
    "asymptotics",
    "capacity-scaling",
    "exit-bound",
    "krylov-safonov",
    "harnack",
    "hoelder",
    "poisson-comparability",
    "charfn-check",
];

/// Discretization controls shared by the path experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    /// Fixed jump cutoff. When unset it follows the spatial scale of the
    /// experiment (see [`McSettings::steps_per_radius`]).
    pub eps: Option<f64>,
    /// Fixed time step. When unset, `Λ(ε)·dt = 5`.
    pub dt: Option<f64>,
    /// Typical skeleton steps per domain radius.
    pub steps_per_radius: f64,
    pub horizon: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            eps: None,
            dt: None,
            steps_per_radius: 10.0,
            horizon: crate::montecarlo::DEFAULT_HORIZON,
        }
    }
}

/// Tables and kernels shared by all experiments in one dimension.
#[derive(Debug, Clone)]
pub struct Lab {
    pub dim: Dimension,
    pub profiles: Arc<ProfileTables>,
    pub levy: Arc<KernelTable>,
    pub green: Arc<KernelTable>,
    pub exec: Execution,
}

impl Lab {
    pub fn new(
        profiles: Arc<ProfileTables>,
        levy: Arc<KernelTable>,
        green: Arc<KernelTable>,
        exec: Execution,
    ) -> Result<Self> {
        if levy.kind != KernelKind::LevyJ || green.kind != KernelKind::GreenG || levy.dim != green.dim {
            return Err(Error::InvalidParameter("kernel tables do not match".into()));
        }
        Ok(Lab {
            dim: green.dim,
            profiles,
            levy,
            green,
            exec,
        })
    }

    /// Builds every table from scratch.
    pub fn build(dim: Dimension, settings: ProfileSettings, exec: Execution) -> Result<Self> {
        let profiles = Arc::new(ProfileTables::build(settings, exec)?);
        let kernels = RadialKernels::new(profiles.clone(), dim);
        let levy = Arc::new(KernelTable::build_default(&kernels, KernelKind::LevyJ, exec)?);
        let green = Arc::new(KernelTable::build_default(&kernels, KernelKind::GreenG, exec)?);
        Lab::new(profiles, levy, green, exec)
    }

    pub fn kernels(&self) -> RadialKernels {
        RadialKernels::new(self.profiles.clone(), self.dim)
    }

    /// Simulator whose typical step is `step`, unless `mc` pins ε or dt.
    pub fn simulator(&self, mc: &McSettings, step: f64) -> Result<Simulator> {
        let eps = mc.eps.unwrap_or_else(|| Simulator::eps_for_step(step));
        let model = Arc::new(SubordinatorModel::new(&self.profiles, eps)?);
        let dt = mc.dt.unwrap_or(JUMPS_PER_STEP / model.rate);
        Simulator::new(model, self.dim, dt, mc.horizon)
    }

    fn context(&self, mc: &McSettings, step: f64, seed: u64) -> Result<McContext> {
        Ok(McContext {
            sim: self.simulator(mc, step)?,
            seed,
            exec: self.exec,
        })
    }

    fn origin(&self) -> Vec<f64> {
        vec![0.0; self.dim.get() as usize]
    }

    fn unit(&self, axis: usize, scale: f64) -> Vec<f64> {
        let mut v = self.origin();
        v[axis] = scale;
        v
    }
}

fn record_simulator(report: &mut ExperimentReport, key: &str, sim: &Simulator) {
    report.param(
        key,
        serde_json::json!({
            "eps": sim.model.eps,
            "dt": sim.dt,
            "jump_rate": sim.model.rate,
            "drift": sim.model.drift,
            "horizon": sim.horizon,
        }),
    );
}

fn record_mc(report: &mut ExperimentReport, mc: &McSettings) {
    report.param("mc", mc);
}

fn relative_check(
    report: &mut ExperimentReport,
    name: &str,
    observed: f64,
    target: f64,
    tol: f64,
    origin: ToleranceOrigin,
) -> bool {
    let dev = (observed / target - 1.0).abs();
    report.check(
        name,
        observed,
        format!("|x/{target:.6e} - 1| <= {tol}"),
        origin,
        dev <= tol,
    )
}

// ---------------------------------------------------------------------------
// coupled exit tallies

/// Per-functional and per-pair-difference moments over coupled exits.
#[derive(Debug, Clone)]
struct CoupledTally {
    singles: Vec<Moments>,
    pairs: Vec<Moments>,
    censored: u64,
    walkers: u64,
}

impl CoupledTally {
    fn new(k: usize, pairs: usize) -> Self {
        CoupledTally {
            singles: vec![Moments::default(); k],
            pairs: vec![Moments::default(); pairs],
            censored: 0,
            walkers: 0,
        }
    }

    fn merge(&mut self, other: &CoupledTally) {
        self.singles
            .iter_mut()
            .zip(&other.singles)
            .for_each(|(a, b)| a.merge(b));
        self.pairs.iter_mut().zip(&other.pairs).for_each(|(a, b)| a.merge(b));
        self.censored += other.censored;
        self.walkers += other.walkers;
    }

    fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.walkers.max(1) as f64
    }
}

/// Runs `n` coupled exits from `starts`; `f` maps the exits of one sample to
/// `k` values, and `pairs` lists differences whose moments are also kept.
#[allow(clippy::too_many_arguments)]
fn coupled_exit_tally<F>(
    ctx: &McContext,
    tag: &str,
    starts: &[Vec<f64>],
    ball: &Ball,
    n: usize,
    k: usize,
    pairs: &[(usize, usize)],
    f: F,
) -> CoupledTally
where
    F: Fn(&[ExitSample], &mut [f64]) + Sync,
{
    let parts = run_batches(n, ctx.exec, |b, len| {
        let mut rng = ctx.rng(tag, b);
        let mut t = CoupledTally::new(k, pairs.len());
        let mut vals = vec![0.0; k];
        for _ in 0..len {
            let exits = ctx.sim.coupled_exits(starts, ball, &mut rng, |_, _| {});
            t.censored += exits.iter().filter(|e| e.censored).count() as u64;
            t.walkers += exits.len() as u64;
            f(&exits, &mut vals);
            for (m, v) in t.singles.iter_mut().zip(&vals) {
                m.push(*v);
            }
            for (m, &(i, j)) in t.pairs.iter_mut().zip(pairs) {
                m.push(vals[i] - vals[j]);
            }
        }
        t
    });
    let mut total = CoupledTally::new(k, pairs.len());
    for p in &parts {
        total.merge(p);
    }
    total
}

// ---------------------------------------------------------------------------
// asymptotics

/// Ratio-to-asymptote checks on the profiles and radial kernels.
pub fn exp_asymptotics_suite(lab: &Lab) -> Result<ExperimentReport> {
    let d = lab.dim;
    let mut r = ExperimentReport::new("asymptotics", None);
    r.param("dimension", d)
        .param("profile_settings", &lab.profiles.settings);
    let acc = crate::inversion::DEFAULT_ACCURACY;

    // Laplace inversion against exact pairs.
    let one = TransformSpec::user("one_over_s", 0.0, |s| s.inv());
    let ramp = TransformSpec::user("one_over_s2", 0.0, |s| (s * s).inv());
    let mut worst: f64 = 0.0;
    for t in [0.1, 1.0, 10.0] {
        worst = worst.max((invert(&one, t, 1e-9)? - 1.0).abs());
        worst = worst.max((invert(&ramp, t, 1e-9)? / t - 1.0).abs());
    }
    r.check(
        "inversion of 1/s and 1/s^2",
        worst,
        "max relative error <= 1e-8",
        ToleranceOrigin::ExactIdentity,
        worst <= 1e-8,
    );

    // u at both ends.
    let u_large = potential_density_u(1e6, acc)?;
    r.exact("u(1e6)", u_large);
    relative_check(
        &mut r,
        "u(t)/2 at t=1e6",
        u_large / 2.0,
        1.0,
        0.02,
        ToleranceOrigin::StatedResult,
    );
    let u_small = potential_density_u(1e-12, acc)?;
    r.exact("u(1e-12)", u_small);
    relative_check(
        &mut r,
        "u(t)/ln(1/t) at t=1e-12",
        u_small / 1e12f64.ln(),
        1.0,
        0.20,
        ToleranceOrigin::StatedResult,
    );

    // v and μ near zero.
    let t = 1e-8f64;
    let lt = (1.0 / t).ln();
    let v = gamma_potential_v(t, acc)?;
    r.exact("v(1e-8)", v);
    relative_check(
        &mut r,
        "v(t) t ln^2(1/t) at t=1e-8",
        v * t * lt * lt,
        1.0,
        0.25,
        ToleranceOrigin::StatedResult,
    );
    let mu = levy_density_mu(t, acc)?;
    r.exact("mu(1e-8)", mu);
    relative_check(
        &mut r,
        "mu(t) t^2 ln^2 t at t=1e-8",
        mu * t * t * lt * lt,
        1.0,
        0.30,
        ToleranceOrigin::StatedResult,
    );

    // j and g.
    let k = lab.kernels();
    let rj = 1e-6;
    let j = k.levy_j(rj)?;
    r.exact("j(1e-6)", j);
    relative_check(
        &mut r,
        "j(r) over small-r law at r=1e-6",
        j / levy_small_r_asymptote(rj, d),
        1.0,
        0.30,
        ToleranceOrigin::StatedResult,
    );
    let dd = d.as_f64();
    let c = green_constant(d);
    let g_small = k.green_g(1e-6)?;
    r.exact("g(1e-6)", g_small);
    relative_check(
        &mut r,
        "g(r) r^(d-2)/ln(1/r) at r=1e-6",
        g_small * 1e-6f64.powf(dd - 2.0) / 1e6f64.ln(),
        c,
        0.20,
        ToleranceOrigin::StatedResult,
    );
    let g_large = k.green_g(1e3)?;
    r.exact("g(1e3)", g_large);
    relative_check(
        &mut r,
        "g(r) r^(d-2) at r=1e3",
        g_large * 1e3f64.powf(dd - 2.0),
        c,
        0.05,
        ToleranceOrigin::StatedResult,
    );

    // f(t) = t^{d−2}/ln(1/t) and the cumulative Green integral.
    let mut identity: f64 = 0.0;
    for s in [1e-12, 1e-10, 1e-6, 1e-3, 0.1] {
        identity = identity.max((f_aux(f_aux_inverse(s, d)?, d)? / s - 1.0).abs());
    }
    r.check(
        "f(f^-1(s)) = s",
        identity,
        "max relative error <= 1e-10",
        ToleranceOrigin::ExactIdentity,
        identity <= 1e-10,
    );
    let s = 1e-10;
    relative_check(
        &mut r,
        "f^-1(s) over its small-s law at s=1e-10",
        f_aux_inverse(s, d)? / f_aux_inverse_asymptote(s, d),
        1.0,
        0.15,
        ToleranceOrigin::StatedResult,
    );
    let rv = 1e-4f64;
    let vol = k.green_volume_integral(rv)?;
    r.exact("int_0^r s^(d-1) g(s) ds at r=1e-4", vol);
    relative_check(
        &mut r,
        "green volume integral / (r^2 ln(1/r)) at r=1e-4",
        vol / (rv * rv * (1.0 / rv).ln()),
        0.5 * c,
        0.20,
        ToleranceOrigin::StatedResult,
    );
    Ok(r)
}

// ---------------------------------------------------------------------------
// capacity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityParams {
    pub radii: Vec<f64>,
    pub n_points: usize,
    pub spread_factor: f64,
}

impl Default for CapacityParams {
    fn default() -> Self {
        CapacityParams {
            radii: vec![0.2, 0.1, 0.05, 0.025],
            n_points: 1024,
            spread_factor: 2.0,
        }
    }
}

pub fn exp_capacity_scaling(lab: &Lab, p: &CapacityParams) -> Result<ExperimentReport> {
    ball_capacity_scaling_report(&p.radii, &lab.green, p.n_points, p.spread_factor, lab.exec)
}

// ---------------------------------------------------------------------------
// characteristic function and subordinator moments

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharFnParams {
    pub samples: usize,
    /// Jump cutoff when the run does not pin one.
    pub eps: f64,
    pub xi_norm: f64,
    pub time: f64,
}

impl Default for CharFnParams {
    fn default() -> Self {
        CharFnParams {
            samples: 1_000_000,
            eps: 1e-4,
            xi_norm: 1.0,
            time: 1.0,
        }
    }
}

/// Samples `X_t` directly from one subordinator increment and compares
/// `E cos(ξ·X_t)` with `e^{−tΦ(ξ)}`, together with the first two moments
/// of `S_t` and the isotropy of `X_t`.
pub fn exp_charfn(lab: &Lab, p: &CharFnParams, mc: &McSettings, seed: u64) -> Result<ExperimentReport> {
    if p.samples < 2 || !(p.time > 0.0) || !(p.xi_norm >= 0.0) {
        return Err(Error::InvalidParameter(
            "charfn-check needs samples >= 2, time > 0, |xi| >= 0".into(),
        ));
    }
    let eps = mc.eps.unwrap_or(p.eps);
    let model = Arc::new(SubordinatorModel::new(&lab.profiles, eps)?);
    let sim = Simulator::new(model.clone(), lab.dim, p.time, p.time)?;
    let mut r = ExperimentReport::new("charfn-check", Some(seed));
    r.param("samples", p.samples)
        .param("dimension", lab.dim)
        .param("xi_norm", p.xi_norm)
        .param("time", p.time);
    record_simulator(&mut r, "simulator", &sim);
    let d = lab.dim.get() as usize;
    // tallies: S, S², cos along each axis, X_i X_j for i ≤ j, X_i² − X_0²
    let n_cos = d;
    let n_cov = d * (d + 1) / 2;
    let parts = run_batches(p.samples, lab.exec, |b, len| {
        let mut rng = crate::montecarlo::stream_rng(seed, "charfn", b);
        let mut s = Moments::default();
        let mut s2 = Moments::default();
        let mut cos = vec![Moments::default(); n_cos];
        let mut cov = vec![Moments::default(); n_cov];
        let mut diag = vec![Moments::default(); d - 1];
        for _ in 0..len {
            let ds = model.increment(p.time, &mut rng);
            let scale = (2.0 * ds).sqrt();
            let x: Vec<f64> = (0..d)
                .map(|_| {
                    let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                    scale * z
                })
                .collect();
            s.push(ds);
            s2.push(ds * ds);
            for (i, c) in cos.iter_mut().enumerate() {
                c.push((p.xi_norm * x[i]).cos());
            }
            let mut k = 0;
            for i in 0..d {
                for j in i..d {
                    cov[k].push(x[i] * x[j]);
                    k += 1;
                }
            }
            for (i, m) in diag.iter_mut().enumerate() {
                m.push(x[i + 1] * x[i + 1] - x[0] * x[0]);
            }
        }
        (s, s2, cos, cov, diag)
    });
    let mut s = Moments::default();
    let mut s2 = Moments::default();
    let mut cos = vec![Moments::default(); n_cos];
    let mut cov = vec![Moments::default(); n_cov];
    let mut diag = vec![Moments::default(); d - 1];
    for (a, b, c, e, f) in &parts {
        s.merge(a);
        s2.merge(b);
        cos.iter_mut().zip(c).for_each(|(x, y)| x.merge(y));
        cov.iter_mut().zip(e).for_each(|(x, y)| x.merge(y));
        diag.iter_mut().zip(f).for_each(|(x, y)| x.merge(y));
    }
    let mean = s.estimate();
    let var = s.variance();
    // standard error of the sample variance from the fourth moment is not
    // tracked; E S² gives a usable scale for reporting
    r.estimate("mean S_t", mean);
    r.exact("variance S_t", var);
    r.estimate("E S_t^2", s2.estimate());
    let target_mean = 0.5 * p.time;
    let target_var = p.time * model.variance_rate();
    r.exact("target mean S_t", target_mean);
    r.exact("target variance S_t (cutoff corrected)", target_var);
    r.exact("cutoff variance correction", p.time * model.variance_deficit);
    relative_check(
        &mut r,
        "mean of S_t",
        mean.value,
        target_mean,
        0.02,
        ToleranceOrigin::EngineeringChoice,
    );
    relative_check(
        &mut r,
        "variance of S_t",
        var,
        target_var,
        0.05,
        ToleranceOrigin::EngineeringChoice,
    );

    let target = (-p.time * char_exponent(p.xi_norm * p.xi_norm)?).exp();
    r.exact("exp(-t Phi(xi))", target);
    let c0 = cos[0].estimate();
    r.estimate("E cos(xi . X_t)", c0);
    let z = (c0.value - target).abs() / c0.std_error;
    r.check(
        "characteristic function",
        z,
        "|mean - exp(-t Phi)| <= 3 standard errors",
        ToleranceOrigin::EngineeringChoice,
        z <= 3.0,
    );
    let mut iso: f64 = 0.0;
    for (i, c) in cos.iter().enumerate().skip(1) {
        let e = c.estimate();
        r.estimate(&format!("E cos(xi X_t,{i})"), e);
    }
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            let e = cov[k].estimate();
            if i != j {
                iso = iso.max(e.value.abs() / e.std_error);
            } else {
                r.estimate(&format!("E X_{i}^2"), e);
            }
            k += 1;
        }
    }
    for m in &diag {
        let e = m.estimate();
        iso = iso.max(e.value.abs() / e.std_error);
    }
    r.check(
        "isotropy of X_t",
        iso,
        "off-diagonal covariances and diagonal differences within 4 standard errors of 0",
        ToleranceOrigin::EngineeringChoice,
        iso <= 4.0,
    );
    Ok(r)
}

// ---------------------------------------------------------------------------
// far exit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExitBoundParams {
    pub radii: Vec<f64>,
    pub s_multipliers: Vec<f64>,
    pub samples: usize,
    /// Start points `x0 + c·r·e1` for each `c` (all within `B(x0, r/2)`).
    pub start_offsets: Vec<f64>,
    pub slack: f64,
    pub spread_factor: f64,
    pub max_censored: f64,
}

impl Default for ExitBoundParams {
    fn default() -> Self {
        ExitBoundParams {
            radii: vec![0.01, 0.02, 0.04],
            s_multipliers: vec![4.0],
            samples: 100_000,
            start_offsets: vec![0.0, 0.25],
            slack: 1.5,
            spread_factor: 3.0,
            max_censored: 0.01,
        }
    }
}

/// `r² ln(1/r) / (s² ln²(1/s))`.
pub fn exit_bound_shape(r: f64, s: f64) -> f64 {
    let ls = (1.0 / s).ln();
    r * r * (1.0 / r).ln() / (s * s * ls * ls)
}

/// Far-exit probabilities `P_x(X_τ ∉ B(x0, s))` for `τ` the exit time of
/// `B(x0, r)`, normalized by [`exit_bound_shape`]. The constant is fitted at
/// the largest `r` and smallest `s` and checked with slack elsewhere.
pub fn exp_exit_bound(lab: &Lab, p: &ExitBoundParams, mc: &McSettings, seed: u64) -> Result<ExperimentReport> {
    if p.radii.is_empty() || p.s_multipliers.is_empty() || p.start_offsets.is_empty() {
        return Err(Error::InvalidParameter(
            "exit-bound needs radii, s multipliers and starts".into(),
        ));
    }
    for &r in &p.radii {
        for &m in &p.s_multipliers {
            let s = m * r;
            if !(r > 0.0 && r < 0.125 && m >= 4.0 && s < 0.5) {
                return Err(Error::InvalidParameter(format!(
                    "exit-bound needs 0 < r < 1/8 and 4r <= s < 1/2, got r = {r}, s = {s}"
                )));
            }
        }
    }
    if p.start_offsets.iter().any(|c| !(c.abs() < 0.5)) {
        return Err(Error::InvalidParameter(
            "exit-bound starts must lie in B(x0, r/2)".into(),
        ));
    }
    let mut rep = ExperimentReport::new("exit-bound", Some(seed));
    rep.param("radii", &p.radii)
        .param("s_multipliers", &p.s_multipliers)
        .param("samples", p.samples)
        .param("start_offsets", &p.start_offsets)
        .param("slack", p.slack)
        .param("spread_factor", p.spread_factor)
        .param("dimension", lab.dim);
    record_mc(&mut rep, mc);
    let nx = p.start_offsets.len();
    let ns = p.s_multipliers.len();
    // est[ri][xi][si]
    let mut est = Vec::new();
    let mut worst_censored: f64 = 0.0;
    for &r in &p.radii {
        let ctx = lab.context(mc, r / mc.steps_per_radius, seed)?;
        record_simulator(&mut rep, &format!("simulator[r={r}]"), &ctx.sim);
        let ball = Ball::new(lab.origin(), r);
        let starts: Vec<Vec<f64>> = p.start_offsets.iter().map(|&c| lab.unit(0, c * r)).collect();
        let radii: Vec<f64> = p.s_multipliers.iter().map(|m| m * r).collect();
        let tally = coupled_exit_tally(
            &ctx,
            &format!("exit-bound/r={r}"),
            &starts,
            &ball,
            p.samples,
            nx * ns,
            &[],
            |exits, vals| {
                for (xi, e) in exits.iter().enumerate() {
                    let dist = e.exit_distance(&ball.center);
                    for (si, s) in radii.iter().enumerate() {
                        vals[xi * ns + si] = (!e.censored && dist > *s) as u8 as f64;
                    }
                }
            },
        );
        worst_censored = worst_censored.max(tally.censored_fraction());
        let mut per_x = Vec::new();
        for xi in 0..nx {
            let mut per_s = Vec::new();
            for si in 0..ns {
                let e = tally.singles[xi * ns + si].estimate();
                rep.estimate(
                    &format!(
                        "P(far exit)[r={r},s={}r,x={}r]",
                        p.s_multipliers[si], p.start_offsets[xi]
                    ),
                    e,
                );
                per_s.push(e);
            }
            per_x.push(per_s);
        }
        est.push(per_x);
    }
    rep.check(
        "censored fraction",
        worst_censored,
        format!("<= {}", p.max_censored),
        ToleranceOrigin::EngineeringChoice,
        worst_censored <= p.max_censored,
    );
    // normalized values
    let norm = |ri: usize, xi: usize, si: usize| {
        let r = p.radii[ri];
        est[ri][xi][si].scale(1.0 / exit_bound_shape(r, p.s_multipliers[si] * r))
    };
    let coarse = p
        .radii
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("radii not empty");
    let s0 = p
        .s_multipliers
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("multipliers not empty");
    let c6 = (0..nx)
        .map(|xi| norm(coarse, xi, s0))
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .expect("starts not empty");
    rep.fitted("C6_hat", c6);
    let mut worst: f64 = 0.0;
    let mut series = Series::new("normalized_far_exit", "r", "P_over_shape");
    for ri in 0..p.radii.len() {
        for si in 0..ns {
            for xi in 0..nx {
                if ri == coarse && si == s0 {
                    continue;
                }
                worst = worst.max(norm(ri, xi, si).value / c6.value);
            }
        }
        series.push(p.radii[ri], &norm(ri, 0, s0));
    }
    rep.series.push(series);
    rep.check(
        "bound with fitted C6 at other grid points",
        worst,
        format!("P / (C6_hat * shape) <= {}", p.slack),
        ToleranceOrigin::StatedResult,
        worst <= p.slack,
    );
    let base: Vec<f64> = (0..p.radii.len()).map(|ri| norm(ri, 0, s0).value).collect();
    let sp = spread(&base);
    rep.check(
        "normalized far exit spread over r",
        sp,
        format!("max/min <= {}", p.spread_factor),
        ToleranceOrigin::EngineeringChoice,
        sp <= p.spread_factor,
    );
    let mut monotone = true;
    for per_x in &est {
        for per_s in per_x {
            let mut order: Vec<(f64, f64)> = p
                .s_multipliers
                .iter()
                .cloned()
                .zip(per_s.iter().map(|e| e.value))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            monotone &= order.windows(2).all(|w| w[1].1 <= w[0].1);
        }
    }
    rep.check(
        "far exit decreases in s",
        monotone as u8 as f64,
        "P(s) non-increasing",
        ToleranceOrigin::ExactIdentity,
        monotone,
    );
    let mut worst_z: f64 = 0.0;
    for ri in 0..p.radii.len() {
        for si in 0..ns {
            for xi in 1..nx {
                let (a, b) = (norm(ri, 0, si), norm(ri, xi, si));
                worst_z = worst_z.max((a.value - b.value).abs() / a.std_error.hypot(b.std_error));
            }
        }
    }
    rep.check(
        "uniformity in the start point",
        worst_z,
        "normalized estimates agree within 3 combined standard errors",
        ToleranceOrigin::StatedResult,
        worst_z <= 3.0,
    );
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Krylov–Safonov

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrylovSafonovParams {
    pub radii: Vec<f64>,
    pub samples: usize,
    /// Target `A = B(x0 + offset·r·e1, radius·r)`.
    pub target_offset: f64,
    pub target_radius: f64,
    /// Probe points `x0 + r·v` for each `v` (inside the unit ball).
    pub probes: Vec<Vec<f64>>,
    pub capacity_points: usize,
    pub spread_factor: f64,
    /// Typical skeleton steps across the radius of `A`.
    pub steps_per_target_radius: f64,
}

impl Default for KrylovSafonovParams {
    fn default() -> Self {
        KrylovSafonovParams {
            radii: vec![0.0125, 0.025, 0.05],
            samples: 20_000,
            target_offset: 0.5,
            target_radius: 0.25,
            probes: vec![
                vec![0.0, 0.0, 0.0],
                vec![-0.5, 0.0, 0.0],
                vec![0.0, 0.5, 0.0],
                vec![-0.9, 0.0, 0.0],
            ],
            capacity_points: 1024,
            spread_factor: 3.0,
            steps_per_target_radius: 5.0,
        }
    }
}

/// Hitting probabilities `P_y(T_A < τ_{B(x0,4r)})` normalized by the
/// capacity ratio `Cap(A)/Cap(B(x0,4r))` and by the volume ratio
/// `|A|/|B(x0,r)|`.
pub fn exp_krylov_safonov(lab: &Lab, p: &KrylovSafonovParams, mc: &McSettings, seed: u64) -> Result<ExperimentReport> {
    let d = lab.dim.get() as usize;
    if p.radii.len() < 2 || p.probes.is_empty() {
        return Err(Error::InvalidParameter(
            "krylov-safonov needs at least two radii and one probe".into(),
        ));
    }
    if p.probes
        .iter()
        .any(|v| v.len() != d || v.iter().map(|c| c * c).sum::<f64>() >= 1.0)
    {
        return Err(Error::InvalidParameter(
            "probes must be points of the open unit ball in R^d".into(),
        ));
    }
    if !(p.target_radius > 0.0 && p.target_offset.abs() + p.target_radius <= 1.0) {
        return Err(Error::InvalidParameter("target ball must lie inside B(x0, r)".into()));
    }
    if p.radii.iter().any(|&r| !(r > 0.0 && r <= RADIUS_PROXY)) {
        return Err(Error::InvalidParameter(format!(
            "krylov-safonov radii must lie in (0, {RADIUS_PROXY}]"
        )));
    }
    let mut rep = ExperimentReport::new("krylov-safonov", Some(seed));
    rep.param("radii", &p.radii)
        .param("samples", p.samples)
        .param("target_offset", p.target_offset)
        .param("target_radius", p.target_radius)
        .param("probes", &p.probes)
        .param("capacity_points", p.capacity_points)
        .param("dimension", lab.dim);
    record_mc(&mut rep, mc);
    let mut cap_norm = Vec::new();
    let mut leb_norm = Vec::new();
    let mut cap_series = Series::new("capacity_normalized", "r", "min_hit_over_cap_ratio");
    let mut leb_series = Series::new("lebesgue_normalized", "r", "min_hit_over_volume_ratio");
    let volume_ratio = p.target_radius.powi(d as i32);
    rep.exact("|A|/|B(x0,r)|", volume_ratio);
    for &r in &p.radii {
        let target = CompactSet::ball(lab.unit(0, p.target_offset * r), p.target_radius * r);
        let domain = Ball::new(lab.origin(), 4.0 * r);
        let step = (4.0 * r / mc.steps_per_radius).min(p.target_radius * r / p.steps_per_target_radius);
        let ctx = lab.context(mc, step, seed)?;
        record_simulator(&mut rep, &format!("simulator[r={r}]"), &ctx.sim);
        let cap_a = capacity_estimate(&target, &lab.green, p.capacity_points, lab.exec)?;
        let cap_b = capacity_estimate(
            &CompactSet::ball(lab.origin(), 4.0 * r),
            &lab.green,
            p.capacity_points,
            lab.exec,
        )?;
        let cap_ratio = cap_a.capacity / cap_b.capacity;
        rep.exact(&format!("Cap(A)[r={r}]"), cap_a.capacity);
        rep.exact(&format!("Cap(B(x0,4r))[r={r}]"), cap_b.capacity);
        rep.exact(&format!("capacity ratio[r={r}]"), cap_ratio);
        let starts: Vec<Vec<f64>> = p.probes.iter().map(|v| v.iter().map(|c| c * r).collect()).collect();
        let tag = format!("krylov-safonov/r={r}");
        let parts = run_batches(p.samples, lab.exec, |b, len| {
            let mut rng = ctx.rng(&tag, b);
            let mut hits = vec![0u64; starts.len()];
            let mut censored = 0u64;
            for _ in 0..len {
                for (h, o) in hits
                    .iter_mut()
                    .zip(ctx.sim.coupled_hits(&starts, &domain, &target, &mut rng))
                {
                    match o {
                        HitOutcome::Hit => *h += 1,
                        HitOutcome::Censored => censored += 1,
                        HitOutcome::Exited => {}
                    }
                }
            }
            (hits, censored)
        });
        let mut hits = vec![0u64; starts.len()];
        let mut censored = 0;
        for (h, c) in &parts {
            hits.iter_mut().zip(h).for_each(|(a, b)| *a += b);
            censored += c;
        }
        if censored > 0 {
            rep.flag(format!("{censored} censored walkers at r={r}"));
        }
        let probs: Vec<Estimate> = hits
            .iter()
            .map(|&h| Estimate::proportion(h, p.samples as u64))
            .collect();
        for (v, e) in p.probes.iter().zip(&probs) {
            rep.estimate(&format!("P_y(T_A < tau)[r={r},y={v:?}]"), *e);
        }
        let min = *probs
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("probes not empty");
        let c = min.scale(1.0 / cap_ratio);
        let l = min.scale(1.0 / volume_ratio);
        rep.estimate(&format!("capacity-normalized[r={r}]"), c);
        rep.estimate(&format!("lebesgue-normalized[r={r}]"), l);
        cap_series.push(r, &c);
        leb_series.push(r, &l);
        cap_norm.push(c);
        leb_norm.push(l);
    }
    let c5 = *cap_norm
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("radii not empty");
    rep.fitted("C5_hat", c5);
    let sp = spread(&cap_norm.iter().map(|e| e.value).collect::<Vec<_>>());
    rep.check(
        "capacity-normalized spread over r",
        sp,
        format!("max/min <= {}", p.spread_factor),
        ToleranceOrigin::EngineeringChoice,
        c5.value > 0.0 && sp <= p.spread_factor,
    );
    let xs: Vec<f64> = p.radii.iter().map(|r| (1.0 / r).ln()).collect();
    let trend = |vals: &[Estimate]| {
        let ys: Vec<f64> = vals.iter().map(|e| e.value.ln()).collect();
        let sig: Vec<f64> = vals.iter().map(|e| (e.std_error / e.value).max(1e-12)).collect();
        LinearFit::fit(&xs, &ys, Some(&sig))
    };
    if let Some(f) = trend(&leb_norm) {
        rep.estimate("d ln(lebesgue-normalized) / d ln(1/r)", f.slope_estimate());
        let z = f.slope / f.slope_std_error;
        rep.check(
            "lebesgue-normalized decreasing in ln(1/r)",
            z,
            "slope z-score <= -1.645 (one-sided 5%)",
            ToleranceOrigin::StatedResult,
            z <= -1.645,
        );
    }
    if let Some(f) = trend(&cap_norm) {
        rep.estimate("d ln(capacity-normalized) / d ln(1/r)", f.slope_estimate());
        let pv = f.slope_p_value(true);
        rep.exact("capacity-normalized trend p-value", pv);
    }
    rep.series.push(cap_series);
    rep.series.push(leb_series);
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Harnack

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HarnackPayoff {
    /// Indicator of `B(x0 + center·r·e1, radius·r)`.
    FarBall {
        center: f64,
        radius: f64,
    },
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnackParams {
    pub radii: Vec<f64>,
    pub samples: usize,
    pub payoff: HarnackPayoff,
    /// Probe points `x0 + r·v`, `|v| < 1`.
    pub probes: Vec<Vec<f64>>,
    pub ratio_factor: f64,
}

impl Default for HarnackParams {
    fn default() -> Self {
        let mut probes = vec![vec![0.0; 3]];
        for axis in 0..3 {
            for sign in [0.9, -0.9] {
                let mut v = vec![0.0; 3];
                v[axis] = sign;
                probes.push(v);
            }
        }
        HarnackParams {
            radii: vec![0.01, 0.02, 0.04],
            samples: 100_000,
            payoff: HarnackPayoff::FarBall {
                center: 9.0,
                radius: 3.0,
            },
            probes,
            ratio_factor: 2.0,
        }
    }
}

/// `h(x) = E_x[f(X_τ)]` on `B(x0, 6r)` evaluated at probes in `B(x0, r)`;
/// compares `max h / min h` across scales.
pub fn exp_harnack(lab: &Lab, p: &HarnackParams, mc: &McSettings, seed: u64) -> Result<ExperimentReport> {
    let d = lab.dim.get() as usize;
    if p.radii.is_empty() || p.probes.len() < 2 {
        return Err(Error::InvalidParameter(
            "harnack needs radii and at least two probes".into(),
        ));
    }
    if p.probes
        .iter()
        .any(|v| v.len() != d || v.iter().map(|c| c * c).sum::<f64>() >= 1.0)
    {
        return Err(Error::InvalidParameter(
            "probes must be points of the open unit ball in R^d".into(),
        ));
    }
    match p.payoff {
        HarnackPayoff::FarBall { center, radius } if !(radius > 0.0 && center - radius >= 6.0) => {
            return Err(Error::InvalidParameter("payoff ball must lie outside B(x0, 6r)".into()))
        }
        HarnackPayoff::Constant { value } if !(value >= 0.0) => {
            return Err(Error::InvalidParameter("payoff must be nonnegative".into()))
        }
        _ => {}
    }
    let mut rep = ExperimentReport::new("harnack", Some(seed));
    rep.param("radii", &p.radii)
        .param("samples", p.samples)
        .param("payoff", &p.payoff)
        .param("probes", &p.probes)
        .param("ratio_factor", p.ratio_factor)
        .param("dimension", lab.dim);
    record_mc(&mut rep, mc);
    let mut ratios = Vec::new();
    let mut series = Series::new("harnack_ratio", "r", "max_h_over_min_h");
    let mut positive = true;
    for &r in &p.radii {
        let domain = Ball::new(lab.origin(), 6.0 * r);
        let ctx = lab.context(mc, 6.0 * r / mc.steps_per_radius, seed)?;
        record_simulator(&mut rep, &format!("simulator[r={r}]"), &ctx.sim);
        let payoff = match p.payoff {
            HarnackPayoff::FarBall { center, radius } => Payoff::Set {
                set: CompactSet::ball(lab.unit(0, center * r), radius * r),
            },
            HarnackPayoff::Constant { value } => Payoff::Constant { value },
        };
        let starts: Vec<Vec<f64>> = p.probes.iter().map(|v| v.iter().map(|c| c * r).collect()).collect();
        let h = harmonic_eval_coupled(&starts, &domain, &payoff, p.samples, &ctx, &format!("harnack/r={r}"))?;
        for (v, e) in p.probes.iter().zip(&h) {
            rep.estimate(&format!("h[r={r},x={v:?}]"), e.value);
        }
        if h[0].censored_fraction > 0.0 {
            rep.flag(format!("censored fraction {:.3e} at r={r}", h[0].censored_fraction));
        }
        let values: Vec<Estimate> = h.iter().map(|e| e.value).collect();
        let max = *values
            .iter()
            .max_by(|a, b| a.value.total_cmp(&b.value))
            .expect("probes");
        let min = *values
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("probes");
        if !(min.value > 0.0) || (min.std_error > 0.0 && !min.is_distinguishable_from_zero()) {
            positive = false;
            rep.flag(format!("inconclusive: h indistinguishable from 0 at r={r}"));
        }
        let ratio = max.ratio(&min);
        rep.estimate(&format!("max/min[r={r}]"), ratio);
        series.push(r, &ratio);
        ratios.push(ratio);
    }
    rep.series.push(series);
    rep.check(
        "harmonic function positive",
        positive as u8 as f64,
        "every estimate distinguishable from 0",
        ToleranceOrigin::StatedResult,
        positive,
    );
    let l1 = *ratios.iter().max_by(|a, b| a.value.total_cmp(&b.value)).expect("radii");
    rep.fitted("L1_hat", l1);
    let vals: Vec<f64> = ratios.iter().map(|e| e.value).collect();
    let sp = spread(&vals);
    rep.check(
        "per-scale ratios mutually comparable",
        sp,
        format!("max/min over r <= {}", p.ratio_factor),
        ToleranceOrigin::EngineeringChoice,
        sp <= p.ratio_factor,
    );
    // growth bound: the largest upper confidence limit against the smallest
    // lower limit
    let hi = ratios.iter().map(|e| e.ci_hi).fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().map(|e| e.ci_lo).fold(f64::INFINITY, f64::min);
    let growth = hi / lo;
    rep.check(
        "ratio confidence bounds uniform over r",
        growth,
        format!("max ci_hi / min ci_lo <= {}", p.ratio_factor),
        ToleranceOrigin::EngineeringChoice,
        lo > 0.0 && growth <= p.ratio_factor,
    );
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Hölder

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HoelderPayoff {
    /// Indicator of `{x : x_1 > z0_1}`.
    HalfSpace,
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoelderParams {
    /// Radius of the ball where `h` is harmonic.
    pub radius: f64,
    pub n_scales: usize,
    pub samples: usize,
    pub payoff: HoelderPayoff,
}

impl Default for HoelderParams {
    fn default() -> Self {
        HoelderParams {
            radius: 0.04,
            n_scales: 4,
            samples: 100_000,
            payoff: HoelderPayoff::HalfSpace,
        }
    }
}

/// Oscillation of `h` over the shells `|x − z0| = (r/4)·4^{−n}`, probed at
/// `z0 ± r_n e_i` with common random numbers, and the decay exponent fitted
/// to `ln Osc_n` against `n ln 4`.
pub fn exp_hoelder(lab: &Lab, p: &HoelderParams, mc: &McSettings, seed: u64) -> Result<ExperimentReport> {
    if !(p.radius > 0.0 && p.radius <= RADIUS_PROXY) || !(2..=6).contains(&p.n_scales) {
        return Err(Error::InvalidParameter(format!(
            "hoelder needs 0 < radius <= {RADIUS_PROXY} and 2 <= n_scales <= 6"
        )));
    }
    let d = lab.dim.get() as usize;
    let mut rep = ExperimentReport::new("hoelder", Some(seed));
    rep.param("radius", p.radius)
        .param("n_scales", p.n_scales)
        .param("samples", p.samples)
        .param("payoff", &p.payoff)
        .param("dimension", lab.dim);
    record_mc(&mut rep, mc);
    let domain = Ball::new(lab.origin(), p.radius);
    let ctx = lab.context(mc, p.radius / mc.steps_per_radius, seed)?;
    record_simulator(&mut rep, "simulator", &ctx.sim);
    let payoff = match p.payoff {
        HoelderPayoff::HalfSpace => Payoff::HalfSpace {
            normal: lab.unit(0, 1.0),
            offset: 0.0,
        },
        HoelderPayoff::Constant { value } => Payoff::Constant { value },
    };
    let shells: Vec<f64> = (0..p.n_scales)
        .map(|n| 0.25 * p.radius * 0.25f64.powi(n as i32))
        .collect();
    let mut starts = Vec::new();
    for &rho in &shells {
        for axis in 0..d {
            starts.push(lab.unit(axis, rho));
            starts.push(lab.unit(axis, -rho));
        }
    }
    let per = 2 * d;
    let mut pairs = Vec::new();
    for n in 0..p.n_scales {
        for i in 0..per {
            for j in 0..per {
                if i != j {
                    pairs.push((n * per + i, n * per + j));
                }
            }
        }
    }
    let tally = coupled_exit_tally(
        &ctx,
        "hoelder",
        &starts,
        &domain,
        p.samples,
        starts.len(),
        &pairs,
        |exits, vals| {
            for (v, e) in vals.iter_mut().zip(exits) {
                *v = if e.censored { 0.0 } else { payoff.eval(&e.exit_position) };
            }
        },
    );
    if tally.censored > 0 {
        rep.flag(format!("censored fraction {:.3e}", tally.censored_fraction()));
    }
    let pairs_per_shell = per * (per - 1);
    let mut osc = Vec::new();
    let mut series = Series::new("oscillation", "n", "osc_n");
    for (n, rho) in shells.iter().enumerate() {
        let hs: Vec<Estimate> = (0..per).map(|i| tally.singles[n * per + i].estimate()).collect();
        let imax = (0..per)
            .max_by(|&a, &b| hs[a].value.total_cmp(&hs[b].value))
            .expect("probes");
        let imin = (0..per)
            .min_by(|&a, &b| hs[a].value.total_cmp(&hs[b].value))
            .expect("probes");
        let o = if imax == imin {
            Estimate::exact(0.0)
        } else {
            // pair (imax, imin) within this shell
            let local = imax * (per - 1) + if imin < imax { imin } else { imin - 1 };
            tally.pairs[n * pairs_per_shell + local].estimate()
        };
        rep.estimate(&format!("Osc_{n} (shell radius {rho:.4e})"), o);
        series.push(n as f64, &o);
        osc.push(o);
    }
    rep.series.push(series);
    // keep scales until the first one below the noise floor
    let usable = osc
        .iter()
        .take_while(|o| o.value > 2.0 * o.std_error && o.value > 0.0)
        .count();
    if usable < osc.len() {
        rep.flag(format!(
            "oscillation below noise floor from scale {usable}; fit truncated"
        ));
    }
    if usable < 2 {
        rep.flag("degenerate payoff: oscillation indistinguishable from 0");
        rep.check(
            "oscillation resolved at >= 2 scales",
            usable as f64,
            ">= 2",
            ToleranceOrigin::EngineeringChoice,
            false,
        );
        return Ok(rep);
    }
    let xs: Vec<f64> = (0..usable).map(|n| n as f64 * 4f64.ln()).collect();
    let ys: Vec<f64> = osc[..usable].iter().map(|o| o.value.ln()).collect();
    let sig: Vec<f64> = osc[..usable].iter().map(|o| o.std_error / o.value).collect();
    let fit = LinearFit::fit(&xs, &ys, Some(&sig)).ok_or_else(|| Error::Consistency {
        what: "hoelder fit".into(),
        detail: "degenerate regression".into(),
    })?;
    let beta = Estimate::new(-fit.slope, fit.slope_std_error);
    rep.fitted("beta_hat", beta);
    // smallest L with Osc_n <= L·sup|h|·(2ρ_n/r)^β̂ on the fitted scales
    let sup = payoff.sup_norm().max(f64::MIN_POSITIVE);
    let l2 = osc[..usable]
        .iter()
        .zip(&shells)
        .map(|(o, rho)| o.value / (sup * (2.0 * rho / p.radius).powf(beta.value)))
        .fold(0.0, f64::max);
    rep.fitted("L2_hat", Estimate::exact(l2));
    rep.param("scales_used", usable);
    let decreasing = osc[..usable].windows(2).all(|w| w[1].value < w[0].value);
    rep.check(
        "oscillation decreasing in n",
        decreasing as u8 as f64,
        "Osc_(n+1) < Osc_n",
        ToleranceOrigin::StatedResult,
        decreasing,
    );
    rep.check(
        "beta_hat > 0 at 95%",
        beta.value - Z95 * beta.std_error,
        "lower 95% bound > 0",
        ToleranceOrigin::StatedResult,
        beta.value - Z95 * beta.std_error > 0.0,
    );
    rep.check(
        "scales in fit",
        usable as f64,
        ">= 4",
        ToleranceOrigin::EngineeringChoice,
        usable >= 4.min(p.n_scales),
    );
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Poisson kernel comparability

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonParams {
    pub radii: Vec<f64>,
    pub samples: usize,
    /// Start of the small-ball walk, `x0 + x_offset·r·e1`.
    pub x_offset: f64,
    /// Start of the large-ball walk, `x0 + y_offset·r·e1`.
    pub y_offset: f64,
    /// Cell edges in units of `r`, starting at 4 or beyond.
    pub cell_edges: Vec<f64>,
    pub spread_factor: f64,
}

impl Default for PoissonParams {
    fn default() -> Self {
        PoissonParams {
            radii: vec![0.01, 0.02],
            samples: 200_000,
            x_offset: 0.0,
            y_offset: 0.0,
            cell_edges: vec![4.0, 6.0, 8.0, 12.0, 16.0, 32.0, 64.0],
            spread_factor: 3.0,
        }
    }
}

/// Cellwise ratios of exit laws `K_{B(x0,r)}(x, ·) / K_{B(x0,4r)}(y, ·)` on
/// annuli outside `B(x0, 4r)`.
pub fn exp_poisson_comparability(lab: &Lab, p: &PoissonParams, mc: &McSettings, seed: u64) -> Result<ExperimentReport> {
    if p.radii.is_empty() || p.cell_edges.len() < 2 || p.cell_edges[0] < 4.0 {
        return Err(Error::InvalidParameter(
            "poisson-comparability needs radii and cell edges from 4r".into(),
        ));
    }
    if !(p.x_offset.abs() < 0.5 && p.y_offset.abs() < 0.5) {
        return Err(Error::InvalidParameter("start points must lie in B(x0, r/2)".into()));
    }
    let mut rep = ExperimentReport::new("poisson-comparability", Some(seed));
    rep.param("radii", &p.radii)
        .param("samples", p.samples)
        .param("x_offset", p.x_offset)
        .param("y_offset", p.y_offset)
        .param("cell_edges", &p.cell_edges)
        .param("dimension", lab.dim);
    record_mc(&mut rep, mc);
    let mut c2s = Vec::new();
    let mut floor_ok = true;
    let mut mass_ok = true;
    for &r in &p.radii {
        let edges: Vec<f64> = p.cell_edges.iter().map(|e| e * r).collect();
        let small = lab.context(mc, r / mc.steps_per_radius, seed)?;
        let large = lab.context(mc, 4.0 * r / mc.steps_per_radius, seed.wrapping_add(1))?;
        record_simulator(&mut rep, &format!("simulator[r={r}]"), &small.sim);
        record_simulator(&mut rep, &format!("simulator[4r={}]", 4.0 * r), &large.sim);
        let kx = poisson_kernel(
            &lab.unit(0, p.x_offset * r),
            &Ball::new(lab.origin(), r),
            &edges,
            None,
            p.samples,
            &small,
        )?;
        let ky = poisson_kernel(
            &lab.unit(0, p.y_offset * r),
            &Ball::new(lab.origin(), 4.0 * r),
            &edges,
            None,
            p.samples,
            &large,
        )?;
        // merge empty cells outward
        let n = p.samples as f64;
        let mut cells: Vec<(f64, f64, f64, f64)> = Vec::new(); // (lo, hi, mass x, mass y)
        let mut pending: Option<(f64, f64, f64)> = None;
        for k in 0..edges.len() - 1 {
            let (lo, mx, my) = match pending.take() {
                Some((lo, a, b)) => (lo, a + kx.masses[k].value, b + ky.masses[k].value),
                None => (edges[k], kx.masses[k].value, ky.masses[k].value),
            };
            if mx > 0.0 && my > 0.0 {
                cells.push((lo, edges[k + 1], mx, my));
            } else {
                pending = Some((lo, mx, my));
            }
        }
        if let Some((lo, mx, my)) = pending {
            rep.flag(format!("cells beyond {lo:.4e} empty at r={r}; merged or dropped"));
            if let Some(last) = cells.last_mut() {
                last.1 = *edges.last().expect("edges");
                last.2 += mx;
                last.3 += my;
            }
        }
        if cells.len() < edges.len() - 1 {
            rep.flag(format!("merged empty cells at r={r}"));
        }
        let far_x: f64 = kx.masses.iter().map(|m| m.value).sum::<f64>();
        let far_y: f64 = ky.masses.iter().map(|m| m.value).sum::<f64>();
        rep.estimate(
            &format!("far mass K_B(r)(x,.)[r={r}]"),
            Estimate::proportion((far_x * n).round() as u64, p.samples as u64),
        );
        rep.estimate(
            &format!("far mass K_B(4r)(y,.)[r={r}]"),
            Estimate::proportion((far_y * n).round() as u64, p.samples as u64),
        );
        mass_ok &= far_x < 1.0 && far_y < 1.0;
        let mut series = Series::new(&format!("cell_ratio_r{r}"), "cell_inner_radius", "ratio");
        let mut ratios = Vec::new();
        for (lo, hi, mx, my) in &cells {
            let ex = Estimate::proportion((mx * n).round() as u64, p.samples as u64);
            let ey = Estimate::proportion((my * n).round() as u64, p.samples as u64);
            let q = ex.ratio(&ey);
            rep.estimate(&format!("cell ratio[r={r},{lo:.4e}..{hi:.4e}]"), q);
            series.push(*lo, &q);
            ratios.push(q);
        }
        rep.series.push(series);
        if cells.is_empty() {
            floor_ok = false;
            rep.flag(format!("no populated far cells at r={r}"));
            continue;
        }
        let c2 = *ratios.iter().max_by(|a, b| a.value.total_cmp(&b.value)).expect("cells");
        let floor = ratios.iter().map(|q| q.value).fold(f64::INFINITY, f64::min);
        floor_ok &= floor > 0.0;
        rep.estimate(&format!("C2_hat[r={r}]"), c2);
        c2s.push(c2);
    }
    rep.check(
        "far-cell masses sum below 1",
        mass_ok as u8 as f64,
        "sum < 1",
        ToleranceOrigin::ExactIdentity,
        mass_ok,
    );
    rep.check(
        "cell ratios positive",
        floor_ok as u8 as f64,
        "min ratio > 0",
        ToleranceOrigin::StatedResult,
        floor_ok,
    );
    if !c2s.is_empty() {
        let c2 = *c2s.iter().max_by(|a, b| a.value.total_cmp(&b.value)).expect("scales");
        rep.fitted("C2_hat", c2);
        let sp = spread(&c2s.iter().map(|e| e.value).collect::<Vec<_>>());
        rep.check(
            "C2_hat spread over r",
            sp,
            format!("max/min <= {}", p.spread_factor),
            ToleranceOrigin::EngineeringChoice,
            c2.value.is_finite() && sp <= p.spread_factor,
        );
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// dispatch

/// Parameters of every experiment; a run configuration carries one of these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub capacity_scaling: CapacityParams,
    pub charfn_check: CharFnParams,
    pub exit_bound: ExitBoundParams,
    pub krylov_safonov: KrylovSafonovParams,
    pub harnack: HarnackParams,
    pub hoelder: HoelderParams,
    pub poisson_comparability: PoissonParams,
}

impl ExperimentParams {
    /// Overrides the sample count of `name`; returns false for experiments
    /// without sampling.
    pub fn set_samples(&mut self, name: &str, samples: usize) -> bool {
        match name {
            "charfn-check" => self.charfn_check.samples = samples,
            "exit-bound" => self.exit_bound.samples = samples,
            "krylov-safonov" => self.krylov_safonov.samples = samples,
            "harnack" => self.harnack.samples = samples,
            "hoelder" => self.hoelder.samples = samples,
            "poisson-comparability" => self.poisson_comparability.samples = samples,
            _ => return false,
        }
        true
    }

    /// Adapts probe vectors to the dimension (defaults are written for d=3).
    pub fn fit_dimension(&mut self, d: Dimension) {
        let d = d.get() as usize;
        let resize = |v: &mut Vec<Vec<f64>>| {
            for p in v.iter_mut() {
                p.resize(d, 0.0);
            }
            let mut seen = Vec::new();
            v.retain(|p| {
                let keep = !seen.contains(p);
                seen.push(p.clone());
                keep
            });
        };
        resize(&mut self.krylov_safonov.probes);
        resize(&mut self.harnack.probes);
    }
}

/// Runs experiment `name`.
pub fn run_experiment(
    name: &str,
    lab: &Lab,
    params: &ExperimentParams,
    mc: &McSettings,
    seed: u64,
) -> Result<ExperimentReport> {
    match name {
        "asymptotics" => exp_asymptotics_suite(lab),
        "capacity-scaling" => exp_capacity_scaling(lab, &params.capacity_scaling),
        "charfn-check" => exp_charfn(lab, &params.charfn_check, mc, seed),
        "exit-bound" => exp_exit_bound(lab, &params.exit_bound, mc, seed),
        "krylov-safonov" => exp_krylov_safonov(lab, &params.krylov_safonov, mc, seed),
        "harnack" => exp_harnack(lab, &params.harnack, mc, seed),
        "hoelder" => exp_hoelder(lab, &params.hoelder, mc, seed),
        "poisson-comparability" => exp_poisson_comparability(lab, &params.poisson_comparability, mc, seed),
        other => Err(Error::InvalidParameter(format!(
            "unknown experiment '{other}'; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}

/// Whether the experiment draws random numbers (and so records a seed).
pub fn is_stochastic(name: &str) -> bool {
    !matches!(name, "asymptotics" | "capacity-scaling")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_decreases_in_s() {
        assert!(exit_bound_shape(0.01, 0.04) > exit_bound_shape(0.01, 0.08));
        let v = exit_bound_shape(0.04, 0.16);
        let want = 0.04f64.powi(2) * 25f64.ln() / (0.16f64.powi(2) * (1.0 / 0.16f64).ln().powi(2));
        assert!((v - want).abs() < 1e-15);
    }

    #[test]
    fn params_roundtrip_and_reject_unknown_fields() {
        let p = ExperimentParams::default();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentParams>(&json).unwrap(), p);
        let partial: ExperimentParams = serde_json::from_str(r#"{"hoelder":{"n_scales":5}}"#).unwrap();
        assert_eq!(partial.hoelder.n_scales, 5);
        assert_eq!(partial.hoelder.samples, HoelderParams::default().samples);
        assert!(serde_json::from_str::<ExperimentParams>(r#"{"hoelder":{"nscales":5}}"#).is_err());
    }

    #[test]
    fn set_samples_routes_by_name() {
        let mut p = ExperimentParams::default();
        assert!(p.set_samples("harnack", 17));
        assert_eq!(p.harnack.samples, 17);
        assert!(!p.set_samples("asymptotics", 17));
    }

    #[test]
    fn fit_dimension_extends_probes() {
        let mut p = ExperimentParams::default();
        p.fit_dimension(Dimension::new(5).unwrap());
        assert!(p.harnack.probes.iter().all(|v| v.len() == 5));
        assert_eq!(p.harnack.probes.len(), 7);
    }
}
