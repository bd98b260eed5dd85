//! Simulation of the subordinator `S`, of `X_t = B_{S_t}`, and Monte Carlo
//! estimators built on exit from balls.
//!
//! `S` is simulated with jumps below a cutoff `ε` replaced by their mean:
//! on a step of length `dt` the increment is `dt·d_ε` plus a Poisson
//! (`dt·Λ(ε)`) number of jumps drawn from the normalized tail `Λ(s)/Λ(ε)`
//! by inversion. Given `ΔS`, each coordinate of `ΔX` is centered Gaussian
//! with variance `2ΔS`, matching the heat kernel `(4πt)^{−d/2}e^{−|x|²/4t}`.
//!
//! Every estimator splits its samples into fixed-size batches. Batch `b`
//! draws from its own ChaCha8 stream keyed by the master seed and a task
//! tag, and batch results are reduced in index order, so output is
//! bit-identical for any number of threads.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capacity::{dist2, Ball, CompactSet};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::inversion::{integrated_jump_tail, jump_tail_lambda, ProfileTables};
use crate::kernels::{Dimension, KernelTable};
use crate::quad::{integrate, QuadSettings};
use crate::stats::{Estimate, Moments};

/// Samples per batch; fixed so that batching never depends on the pool size.
pub const BATCH_SIZE: usize = 2048;

/// Largest jump size kept in the inverse-tail table; `Λ(60) < 1e−27`.
const JUMP_TABLE_MAX: f64 = 60.0;
const JUMP_TABLE_PPD: usize = 256;

/// Independent generator for `(seed, tag, batch)`.
pub fn stream_rng(seed: u64, tag: &str, batch: u64) -> ChaCha8Rng {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(tag.as_bytes())
        .finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(batch);
    rng
}

/// Subordinator with jumps below `eps` compensated by a drift.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubordinatorModel {
    pub eps: f64,
    /// `Λ(ε)`, the rate of jumps larger than `ε`.
    pub rate: f64,
    /// `d_ε = ∫_0^ε s μ(s) ds = ∫_0^ε Λ − εΛ(ε)`.
    pub drift: f64,
    /// Mean rate `d_ε + ∫_ε^∞ s μ(s) ds`; equals `1/2` up to table error.
    pub mean_rate: f64,
    /// `∫_0^ε s² μ(s) ds`, the variance removed by the cutoff.
    pub variance_deficit: f64,
    ln_s: Vec<f64>,
    /// `ln(Λ(s)/Λ(ε))`, strictly decreasing, starting at 0.
    ln_tail: Vec<f64>,
}

impl SubordinatorModel {
    pub fn new(profiles: &ProfileTables, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain {
                what: "SubordinatorModel eps",
                value: eps,
                expected: "0 < eps < 1",
            });
        }
        let acc = 1e-9;
        let rate = jump_tail_lambda(eps, acc)?;
        let head = integrated_jump_tail(eps, acc)?;
        let drift = head - eps * rate;
        if drift < 0.0 {
            return Err(Error::Consistency {
                what: "compensating drift".into(),
                detail: format!("d_ε = {drift} < 0 at ε = {eps}"),
            });
        }
        let n = ((JUMP_TABLE_MAX / eps).log10() * JUMP_TABLE_PPD as f64).ceil() as usize;
        let step = (JUMP_TABLE_MAX / eps).ln() / n as f64;
        let mut ln_s = Vec::with_capacity(n + 1);
        let mut ln_tail = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let ls = eps.ln() + step * i as f64;
            let tail = if i == 0 { rate } else { profiles.jump_tail(ls.exp()) };
            let lt = (tail / rate).ln();
            if !lt.is_finite() || ln_tail.last().is_some_and(|&prev| lt >= prev) {
                break;
            }
            ln_s.push(ls);
            ln_tail.push(lt);
        }
        if ln_s.len() < 2 {
            return Err(Error::Consistency {
                what: "inverse-tail table".into(),
                detail: format!("jump tail is not decreasing above ε = {eps}"),
            });
        }
        let quad = QuadSettings::default().with_rel_tol(1e-9);
        let (s_hi, _) = profiles.jump_tail.last();
        let above = integrate(
            |y: f64| profiles.jump_tail(y.exp()) * y.exp(),
            eps.ln(),
            s_hi.ln(),
            &quad,
        )?;
        let mean_rate = drift + eps * rate + above.value;
        // ∫_0^ε s²μ = ∫_0^ε 2sΛ(s) ds − ε²Λ(ε); 2sΛ(s) ~ 2/ln²(1/s) is
        // integrable at 0 and the part below ε·1e−30 is negligible.
        let low = integrate(
            |y: f64| {
                let s = y.exp();
                2.0 * s * s * profiles.jump_tail(s)
            },
            (eps * 1e-30).ln(),
            eps.ln(),
            &quad,
        )?;
        let variance_deficit = low.value - eps * eps * rate;
        Ok(SubordinatorModel {
            eps,
            rate,
            drift,
            mean_rate,
            variance_deficit,
            ln_s,
            ln_tail,
        })
    }

    /// Variance rate of the simulated process: `1/6 − ∫_0^ε s²μ`.
    pub fn variance_rate(&self) -> f64 {
        crate::exponents::phi_moments().1 - self.variance_deficit
    }

    /// Jump size `s ≥ ε` with `P(J > s) = Λ(s)/Λ(ε)`.
    #[inline]
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        // 1 − u ∈ (0, 1], so the target is finite and ≤ 0.
        let target = (1.0 - u).ln();
        let lt = &self.ln_tail;
        let last = lt.len() - 1;
        if target <= lt[last] {
            // beyond the table Λ decays like e^{−s}
            return (self.ln_s[last].exp() + (lt[last] - target)).max(self.eps);
        }
        // first index with ln_tail < target
        let k = lt.partition_point(|&v| v >= target);
        let (a, b) = (k - 1, k);
        let w = (target - lt[a]) / (lt[b] - lt[a]);
        (self.ln_s[a] + w * (self.ln_s[b] - self.ln_s[a])).exp().max(self.eps)
    }

    /// `ΔS` over a step of length `dt`.
    pub fn increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        let count = poisson_count(dt * self.rate, rng);
        self.increment_with_count(dt, count, rng)
    }

    #[inline]
    fn increment_with_count<R: Rng + ?Sized>(&self, dt: f64, count: u64, rng: &mut R) -> f64 {
        let mut s = dt * self.drift;
        for _ in 0..count {
            s += self.sample_jump(rng);
        }
        s
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

/// One subordinator increment `S_{t+dt} − S_t`.
pub fn sample_subordinator_increment<R: Rng + ?Sized>(model: &SubordinatorModel, dt: f64, rng: &mut R) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain {
            what: "sample_subordinator_increment dt",
            value: dt,
            expected: "finite and > 0",
        });
    }
    Ok(model.increment(dt, rng))
}

/// Discretization of `X`: the subordinator model, the time step and the
/// censoring horizon.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub model: Arc<SubordinatorModel>,
    pub dim: Dimension,
    pub dt: f64,
    pub horizon: f64,
    poisson: Option<Poisson<f64>>,
}

/// Mean number of jumps above `ε` per time step.
pub const JUMPS_PER_STEP: f64 = 5.0;
pub const DEFAULT_HORIZON: f64 = 1e3;

impl Simulator {
    pub fn new(model: Arc<SubordinatorModel>, dim: Dimension, dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !(horizon >= dt) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < dt <= horizon, got dt = {dt}, horizon = {horizon}"
            )));
        }
        let mean = dt * model.rate;
        let poisson = if mean > 0.0 { Poisson::new(mean).ok() } else { None };
        Ok(Simulator {
            model,
            dim,
            dt,
            horizon,
            poisson,
        })
    }

    /// `dt` with `Λ(ε)·dt` equal to [`JUMPS_PER_STEP`].
    pub fn with_default_step(model: Arc<SubordinatorModel>, dim: Dimension) -> Result<Self> {
        let dt = JUMPS_PER_STEP / model.rate;
        Simulator::new(model, dim, dt, DEFAULT_HORIZON)
    }

    /// Cutoff for a target typical step length `h` of the skeleton. With
    /// five jumps per step the typical `ΔS` is about `90ε`, so `|ΔX|` is
    /// near `23√ε`; the factor is checked in the tests.
    pub fn eps_for_step(h: f64) -> f64 {
        (h / STEP_PER_SQRT_EPS).powi(2)
    }

    pub fn for_step_length(profiles: &ProfileTables, dim: Dimension, h: f64) -> Result<Self> {
        let model = SubordinatorModel::new(profiles, Self::eps_for_step(h))?;
        Self::with_default_step(Arc::new(model), dim)
    }

    pub fn max_steps(&self) -> u64 {
        (self.horizon / self.dt).ceil() as u64
    }

    /// `ΔS` for one step.
    #[inline]
    pub fn subordinator_step<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let count = match &self.poisson {
            Some(p) => p.sample(rng) as u64,
            None => 0,
        };
        self.model.increment_with_count(self.dt, count, rng)
    }

    /// Fills `dx` with one spatial increment.
    #[inline]
    pub fn space_step<R: Rng + ?Sized>(&self, rng: &mut R, dx: &mut [f64]) {
        let scale = (2.0 * self.subordinator_step(rng)).sqrt();
        for v in dx.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = scale * z;
        }
    }

    /// `X_t − X_0` for a single time `t`, drawn with one subordinator step.
    pub fn displacement<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Vec<f64> {
        let ds = self.model.increment(t, rng);
        let scale = (2.0 * ds).sqrt();
        (0..self.dim.get())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
            .collect()
    }

    /// Skeleton `X_0, X_dt, …` up to `horizon`.
    pub fn sample_path<R: Rng + ?Sized>(&self, start: &[f64], horizon: f64, rng: &mut R) -> Vec<Vec<f64>> {
        let steps = (horizon / self.dt).round() as usize;
        let mut path = Vec::with_capacity(steps + 1);
        let mut x = start.to_vec();
        let mut dx = vec![0.0; x.len()];
        path.push(x.clone());
        for _ in 0..steps {
            self.space_step(rng, &mut dx);
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            path.push(x.clone());
        }
        path
    }

    /// Runs coupled walkers (same increments, different starts) until each
    /// leaves `ball` or the horizon passes. `on_interior` sees every
    /// skeleton point strictly before exit, including the start.
    pub fn coupled_exits<R, F>(
        &self,
        starts: &[Vec<f64>],
        ball: &Ball,
        rng: &mut R,
        mut on_interior: F,
    ) -> Vec<ExitSample>
    where
        R: Rng + ?Sized,
        F: FnMut(usize, &[f64]),
    {
        let r2 = ball.radius * ball.radius;
        let mut pos: Vec<Vec<f64>> = starts.to_vec();
        let mut out: Vec<Option<ExitSample>> = vec![None; starts.len()];
        let mut alive = starts.len();
        for (i, p) in pos.iter().enumerate() {
            if dist2(p, &ball.center) > r2 {
                // started outside: exits immediately
                out[i] = Some(ExitSample::new(&starts[i], p, 0.0, 0, false, self.dt));
                alive -= 1;
            } else {
                on_interior(i, p);
            }
        }
        let mut dx = vec![0.0; self.dim.get() as usize];
        let max_steps = self.max_steps();
        let mut step = 0;
        while alive > 0 && step < max_steps {
            step += 1;
            self.space_step(rng, &mut dx);
            for i in 0..pos.len() {
                if out[i].is_some() {
                    continue;
                }
                pos[i].iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                if dist2(&pos[i], &ball.center) > r2 {
                    out[i] = Some(ExitSample::new(
                        &starts[i],
                        &pos[i],
                        step as f64 * self.dt,
                        step,
                        false,
                        self.dt,
                    ));
                    alive -= 1;
                } else {
                    on_interior(i, &pos[i]);
                }
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(i, o)| {
                o.unwrap_or_else(|| ExitSample::new(&starts[i], &pos[i], step as f64 * self.dt, step, true, self.dt))
            })
            .collect()
    }

    /// Coupled walkers stopped at the first skeleton point in `target` or
    /// outside `ball`, whichever comes first.
    pub fn coupled_hits<R: Rng + ?Sized>(
        &self,
        starts: &[Vec<f64>],
        ball: &Ball,
        target: &CompactSet,
        rng: &mut R,
    ) -> Vec<HitOutcome> {
        let r2 = ball.radius * ball.radius;
        let mut pos: Vec<Vec<f64>> = starts.to_vec();
        let mut out: Vec<Option<HitOutcome>> = pos
            .iter()
            .map(|p| {
                if target.contains(p) {
                    Some(HitOutcome::Hit)
                } else if dist2(p, &ball.center) > r2 {
                    Some(HitOutcome::Exited)
                } else {
                    None
                }
            })
            .collect();
        let mut alive = out.iter().filter(|o| o.is_none()).count();
        let mut dx = vec![0.0; self.dim.get() as usize];
        let max_steps = self.max_steps();
        let mut step = 0;
        while alive > 0 && step < max_steps {
            step += 1;
            self.space_step(rng, &mut dx);
            for (p, o) in pos.iter_mut().zip(out.iter_mut()) {
                if o.is_some() {
                    continue;
                }
                p.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                if dist2(p, &ball.center) > r2 {
                    *o = Some(HitOutcome::Exited);
                } else if target.contains(p) {
                    *o = Some(HitOutcome::Hit);
                } else {
                    continue;
                }
                alive -= 1;
            }
        }
        out.into_iter().map(|o| o.unwrap_or(HitOutcome::Censored)).collect()
    }

    /// One exit from `ball`, recording whether the skeleton visited `target`.
    pub fn sample_exit<R: Rng + ?Sized>(
        &self,
        start: &[f64],
        ball: &Ball,
        target: Option<&CompactSet>,
        rng: &mut R,
    ) -> ExitSample {
        let mut hit = false;
        let mut s = self
            .coupled_exits(&[start.to_vec()], ball, rng, |_, x| {
                if let Some(a) = target {
                    hit |= a.contains(x);
                }
            })
            .pop()
            .expect("one walker");
        if target.is_some() {
            s.hit_target = Some(hit);
        }
        s
    }
}

/// Empirical ratio of typical skeleton step to `√ε` at five jumps per step.
pub const STEP_PER_SQRT_EPS: f64 = 23.0;

/// How a walker in [`Simulator::coupled_hits`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitOutcome {
    Hit,
    Exited,
    Censored,
}

/// One Monte Carlo exit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub start: Vec<f64>,
    pub exit_position: Vec<f64>,
    pub exit_time: f64,
    pub steps: u64,
    /// Whether the skeleton entered the target set before exit; `None`
    /// when no target was given.
    pub hit_target: Option<bool>,
    /// The horizon passed before exit; `exit_position` is then the last
    /// skeleton point.
    pub censored: bool,
    pub dt: f64,
}

impl ExitSample {
    fn new(start: &[f64], exit: &[f64], time: f64, steps: u64, censored: bool, dt: f64) -> Self {
        ExitSample {
            start: start.to_vec(),
            exit_position: exit.to_vec(),
            exit_time: time,
            steps,
            hit_target: None,
            censored,
            dt,
        }
    }

    pub fn exit_distance(&self, center: &[f64]) -> f64 {
        dist2(&self.exit_position, center).sqrt()
    }

    pub fn csv_header(dim: usize) -> String {
        let mut h = String::new();
        for i in 0..dim {
            let _ = write!(h, "start_{i},");
        }
        for i in 0..dim {
            let _ = write!(h, "exit_{i},");
        }
        h.push_str("exit_time,steps,hit_target,censored,dt");
        h
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        for v in self.start.iter().chain(&self.exit_position) {
            let _ = write!(s, "{v},");
        }
        let hit = match self.hit_target {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        let _ = write!(
            s,
            "{},{},{},{},{}",
            self.exit_time, self.steps, hit, self.censored as u8, self.dt
        );
        s
    }
}

/// Writes exit samples as CSV with a comment line recording the parameters.
pub fn exit_samples_csv(samples: &[ExitSample], params: &str) -> String {
    let dim = samples.first().map(|s| s.start.len()).unwrap_or(0);
    let mut out = format!("# {params}\n{}\n", ExitSample::csv_header(dim));
    for s in samples {
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}

/// Splits `n` samples into batches and runs `f(batch_index, batch_len)` on
/// each, returning results in batch order.
pub fn run_batches<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, usize) -> T + Sync + Send,
{
    let batches = n.div_ceil(BATCH_SIZE);
    exec.map_range(batches, |b| {
        let len = BATCH_SIZE.min(n - b * BATCH_SIZE);
        f(b as u64, len)
    })
}

/// Shared inputs of every estimator.
#[derive(Debug, Clone)]
pub struct McContext {
    pub sim: Simulator,
    pub seed: u64,
    pub exec: Execution,
}

impl McContext {
    pub fn rng(&self, tag: &str, batch: u64) -> ChaCha8Rng {
        stream_rng(self.seed, tag, batch)
    }
}

/// Reward for [`harmonic_eval`], evaluated at exit positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    Constant {
        value: f64,
    },
    /// Indicator of `{z : z·normal > offset}`.
    HalfSpace {
        normal: Vec<f64>,
        offset: f64,
    },
    /// Indicator of a union of balls.
    Set {
        set: CompactSet,
    },
}

impl Payoff {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Payoff::Constant { value } => *value,
            Payoff::HalfSpace { normal, offset } => {
                let p: f64 = normal.iter().zip(z).map(|(a, b)| a * b).sum();
                if p > *offset {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::Set { set } => set.contains(z) as u8 as f64,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Payoff::Constant { value } => value.abs(),
            _ => 1.0,
        }
    }
}

/// Per-batch sums of an exit functional.
#[derive(Debug, Clone, Default)]
struct ExitTally {
    values: Vec<Moments>,
    censored: u64,
    n: u64,
}

/// Monte Carlo value of a harmonic function with censoring information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicEstimate {
    pub value: Estimate,
    pub censored_fraction: f64,
    pub samples: u64,
}

/// `h(x) = E_x[f(X_τ); τ < ∞]` for the exit time `τ` of `ball`; censored
/// paths contribute 0.
pub fn harmonic_eval(
    x: &[f64],
    ball: &Ball,
    payoff: &Payoff,
    n_samples: usize,
    ctx: &McContext,
) -> Result<HarmonicEstimate> {
    let v = harmonic_eval_coupled(&[x.to_vec()], ball, payoff, n_samples, ctx, "harmonic")?;
    Ok(v[0])
}

/// [`harmonic_eval`] at several points driven by common random numbers.
pub fn harmonic_eval_coupled(
    xs: &[Vec<f64>],
    ball: &Ball,
    payoff: &Payoff,
    n_samples: usize,
    ctx: &McContext,
    tag: &str,
) -> Result<Vec<HarmonicEstimate>> {
    for x in xs {
        if !ball.contains(x) {
            return Err(Error::InvalidParameter(
                "harmonic_eval start point is outside the ball".into(),
            ));
        }
    }
    let tallies = run_batches(n_samples, ctx.exec, |b, len| {
        let mut rng = ctx.rng(tag, b);
        let mut t = ExitTally {
            values: vec![Moments::default(); xs.len()],
            ..Default::default()
        };
        for _ in 0..len {
            let exits = ctx.sim.coupled_exits(xs, ball, &mut rng, |_, _| {});
            for (i, e) in exits.iter().enumerate() {
                let v = if e.censored { 0.0 } else { payoff.eval(&e.exit_position) };
                t.values[i].push(v);
                t.censored += e.censored as u64;
            }
            t.n += 1;
        }
        t
    });
    let mut total = ExitTally {
        values: vec![Moments::default(); xs.len()],
        ..Default::default()
    };
    for t in &tallies {
        for (a, b) in total.values.iter_mut().zip(&t.values) {
            a.merge(b);
        }
        total.censored += t.censored;
        total.n += t.n;
    }
    let cf = total.censored as f64 / (total.n as f64 * xs.len() as f64);
    Ok(total
        .values
        .iter()
        .map(|m| HarmonicEstimate {
            value: m.estimate(),
            censored_fraction: cf,
            samples: total.n,
        })
        .collect())
}

/// Killed Green function estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KilledGreen {
    pub value: Estimate,
    pub free_green: f64,
    pub censored_fraction: f64,
    /// The 95% interval is wider than the requested relative width.
    pub needs_more_samples: bool,
}

/// `G_B(x, y) = g(|x − y|) − E_x[g(|X_τ − y|)]`.
pub fn killed_green(
    x: &[f64],
    y: &[f64],
    ball: &Ball,
    green: &KernelTable,
    n_samples: usize,
    ctx: &McContext,
    max_relative_ci: f64,
) -> Result<KilledGreen> {
    if !ball.contains(x) || !ball.contains(y) {
        return Err(Error::InvalidParameter(
            "killed_green needs x and y inside the ball".into(),
        ));
    }
    let r = dist2(x, y).sqrt();
    if r == 0.0 {
        return Err(Error::InvalidParameter("killed_green needs x != y".into()));
    }
    let free = green.eval(r);
    let tallies = run_batches(n_samples, ctx.exec, |b, len| {
        let mut rng = ctx.rng("killed_green", b);
        let mut m = Moments::default();
        let mut censored = 0u64;
        for _ in 0..len {
            let e = ctx.sim.sample_exit(x, ball, None, &mut rng);
            censored += e.censored as u64;
            // a censored path has not been killed; its remaining occupation
            // is unknown, so it contributes the free value (upper estimate)
            let v = if e.censored {
                0.0
            } else {
                green.eval(dist2(&e.exit_position, y).sqrt())
            };
            m.push(v);
        }
        (m, censored)
    });
    let mut m = Moments::default();
    let mut censored = 0;
    for (t, c) in &tallies {
        m.merge(t);
        censored += c;
    }
    let sub = m.estimate();
    let value = Estimate::new(free - sub.value, sub.std_error);
    let width = value.ci_hi - value.ci_lo;
    Ok(KilledGreen {
        value,
        free_green: free,
        censored_fraction: censored as f64 / m.n as f64,
        needs_more_samples: width > max_relative_ci * value.value.abs(),
    })
}

/// Exit-position histogram over annuli `edges[k] ≤ |z − center| < edges[k+1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonHistogram {
    pub edges: Vec<f64>,
    pub masses: Vec<Estimate>,
    /// Same cell masses from the occupation-time route
    /// `E_x ∫_0^τ J_cell(X_t) dt`; only for cells outside `2·radius`.
    pub occupation_masses: Vec<Option<Estimate>>,
    /// Mass landing outside every cell.
    pub outside: Estimate,
    pub censored_fraction: f64,
    pub samples: u64,
}

/// `J_cell(x) = ∫_{a<|z−c|<b} j(|z − x|) dz` as a function of `ρ = |x − c|`.
pub fn annulus_jump_rate(levy: &KernelTable, rho: f64, a: f64, b: f64) -> Result<f64> {
    let d = levy.dim;
    let dd = d.as_f64();
    // ω_{d−2}: area of the unit sphere in R^{d−1}
    let omega = 2.0 * std::f64::consts::PI.powf(0.5 * (dd - 1.0)) / crate::quad::gamma(0.5 * (dd - 1.0));
    let quad = QuadSettings::default().with_rel_tol(1e-7);
    let mut err = None;
    let outer = integrate(
        |s: f64| {
            let shell = integrate(
                |theta: f64| {
                    let dist = (s * s + rho * rho - 2.0 * s * rho * theta.cos()).max(0.0).sqrt();
                    levy.eval(dist) * theta.sin().powf(dd - 2.0)
                },
                0.0,
                std::f64::consts::PI,
                &quad,
            );
            match shell {
                Ok(q) => omega * s.powf(dd - 1.0) * q.value,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        a,
        b,
        &quad,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(outer?.value)
}

/// Empirical Poisson kernel masses of `ball` seen from `x`.
pub fn poisson_kernel(
    x: &[f64],
    ball: &Ball,
    edges: &[f64],
    levy: Option<&KernelTable>,
    n_samples: usize,
    ctx: &McContext,
) -> Result<PoissonHistogram> {
    if !ball.contains(x) {
        return Err(Error::InvalidParameter(
            "poisson_kernel start is outside the ball".into(),
        ));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) || edges[0] < ball.radius {
        return Err(Error::InvalidParameter(
            "cell edges must increase and start at or beyond the radius".into(),
        ));
    }
    let cells = edges.len() - 1;
    // occupation route: tabulate J_cell(ρ) on [0, r] for far cells
    let occ_cells: Vec<usize> = (0..cells).filter(|&k| edges[k] >= 2.0 * ball.radius).collect();
    let grid_n = 65;
    let rate_tables: Vec<Vec<f64>> = match levy {
        Some(j) => occ_cells
            .iter()
            .map(|&k| {
                (0..grid_n)
                    .map(|i| annulus_jump_rate(j, ball.radius * i as f64 / (grid_n - 1) as f64, edges[k], edges[k + 1]))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let rate_at = |table: &[f64], rho: f64| {
        let u = (rho / ball.radius).clamp(0.0, 1.0) * (grid_n - 1) as f64;
        let i = (u.floor() as usize).min(grid_n - 2);
        let w = u - i as f64;
        table[i] * (1.0 - w) + table[i + 1] * w
    };
    let dt = ctx.sim.dt;
    let tallies = run_batches(n_samples, ctx.exec, |b, len| {
        let mut rng = ctx.rng("poisson_kernel", b);
        let mut hist = vec![Moments::default(); cells + 1];
        let mut occ = vec![Moments::default(); rate_tables.len()];
        let mut censored = 0u64;
        let mut acc = vec![0.0; rate_tables.len()];
        for _ in 0..len {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let e = ctx
                .sim
                .coupled_exits(&[x.to_vec()], ball, &mut rng, |_, p| {
                    let rho = dist2(p, &ball.center).sqrt();
                    for (a, t) in acc.iter_mut().zip(&rate_tables) {
                        *a += dt * rate_at(t, rho);
                    }
                })
                .pop()
                .expect("one walker");
            censored += e.censored as u64;
            let dist = e.exit_distance(&ball.center);
            let cell = if e.censored {
                None
            } else {
                edges.windows(2).position(|w| dist >= w[0] && dist < w[1])
            };
            for (k, h) in hist.iter_mut().enumerate() {
                let hit = match cell {
                    Some(c) => c == k,
                    None => k == cells && !e.censored,
                };
                h.push(hit as u8 as f64);
            }
            for (o, a) in occ.iter_mut().zip(&acc) {
                o.push(*a);
            }
        }
        (hist, occ, censored)
    });
    let mut hist = vec![Moments::default(); cells + 1];
    let mut occ = vec![Moments::default(); rate_tables.len()];
    let mut censored = 0;
    for (h, o, c) in &tallies {
        hist.iter_mut().zip(h).for_each(|(a, b)| a.merge(b));
        occ.iter_mut().zip(o).for_each(|(a, b)| a.merge(b));
        censored += c;
    }
    let samples = hist[0].n;
    let mut occupation_masses = vec![None; cells];
    for (slot, &k) in occ_cells.iter().enumerate().take(occ.len()) {
        occupation_masses[k] = Some(occ[slot].estimate());
    }
    Ok(PoissonHistogram {
        edges: edges.to_vec(),
        masses: hist[..cells].iter().map(|m| m.estimate()).collect(),
        occupation_masses,
        outside: hist[cells].estimate(),
        censored_fraction: censored as f64 / samples as f64,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inversion::ProfileSettings;
    use std::sync::OnceLock;

    fn profiles() -> &'static ProfileTables {
        static P: OnceLock<ProfileTables> = OnceLock::new();
        P.get_or_init(|| ProfileTables::build(ProfileSettings::default(), Execution::Parallel).unwrap())
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(1, "x", 0).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let b: u64 = stream_rng(1, "x", 1).random();
        let c: u64 = stream_rng(1, "y", 0).random();
        let e: u64 = stream_rng(2, "x", 0).random();
        assert!(a[0] != b && a[0] != c && a[0] != e);
    }

    #[test]
    fn model_invariants() {
        let m = SubordinatorModel::new(profiles(), 1e-4).unwrap();
        assert!(m.drift > 0.0);
        assert!((m.mean_rate - 0.5).abs() < 0.01, "{}", m.mean_rate);
        assert!(m.variance_deficit > 0.0 && m.variance_deficit < 1e-4);
        assert!(m.ln_tail.windows(2).all(|w| w[1] < w[0]));
        let mut rng = stream_rng(3, "jumps", 0);
        for _ in 0..10_000 {
            assert!(m.sample_jump(&mut rng) >= m.eps);
        }
    }

    #[test]
    fn larger_cutoff_moves_mass_into_drift() {
        let a = SubordinatorModel::new(profiles(), 1e-6).unwrap();
        let b = SubordinatorModel::new(profiles(), 1e-4).unwrap();
        assert!(b.drift > a.drift);
        assert!(b.rate < a.rate);
        assert!((a.mean_rate - b.mean_rate).abs() < 0.01);
    }

    #[test]
    fn jump_sampler_matches_tail() {
        // P(J > s) = Λ(s)/Λ(ε) at a few quantiles
        let p = profiles();
        let m = SubordinatorModel::new(p, 1e-4).unwrap();
        let mut rng = stream_rng(5, "tail", 0);
        let n = 200_000;
        let jumps: Vec<f64> = (0..n).map(|_| m.sample_jump(&mut rng)).collect();
        for s in [2e-4, 1e-3, 1e-2, 0.1] {
            let emp = jumps.iter().filter(|&&j| j > s).count() as f64 / n as f64;
            let want = p.jump_tail(s) / m.rate;
            let se = (want * (1.0 - want) / n as f64).sqrt();
            assert!((emp - want).abs() < 4.0 * se, "s = {s}: {emp} vs {want}");
        }
    }

    #[test]
    fn step_length_calibration() {
        // median |ΔX| per step is close to the requested h
        let h = 1e-3;
        let sim = Simulator::for_step_length(profiles(), Dimension::THREE, h).unwrap();
        let mut rng = stream_rng(9, "calib", 0);
        let mut dx = [0.0; 3];
        let mut lens: Vec<f64> = (0..20_000)
            .map(|_| {
                sim.space_step(&mut rng, &mut dx);
                dx.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .collect();
        lens.sort_by(f64::total_cmp);
        let median = lens[lens.len() / 2];
        assert!(median > 0.5 * h && median < 2.0 * h, "{median}");
    }

    #[test]
    fn exits_are_strictly_outside() {
        let sim = Simulator::for_step_length(profiles(), Dimension::THREE, 0.02).unwrap();
        let ball = Ball::centered(Dimension::THREE, 0.1);
        let mut rng = stream_rng(1, "exit", 0);
        for _ in 0..500 {
            let e = sim.sample_exit(&[0.0; 3], &ball, None, &mut rng);
            assert!(!e.censored);
            assert!(e.exit_distance(&ball.center) > ball.radius);
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let s = ExitSample::new(&[0.0, 0.0, 0.0], &[1.0, 0.5, 0.0], 0.25, 3, false, 0.1);
        let text = exit_samples_csv(&[s.clone(), s], "seed=1");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[1],
            "start_0,start_1,start_2,exit_0,exit_1,exit_2,exit_time,steps,hit_target,censored,dt"
        );
        assert_eq!(lines[2], "0,0,0,1,0.5,0,0.25,3,,0,0.1");
    }

    #[test]
    fn payoffs() {
        let h = Payoff::HalfSpace {
            normal: vec![1.0, 0.0, 0.0],
            offset: 0.0,
        };
        assert_eq!(h.eval(&[0.1, 5.0, 5.0]), 1.0);
        assert_eq!(h.eval(&[-0.1, 5.0, 5.0]), 0.0);
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(serde_json::from_str::<Payoff>(&json).unwrap(), h);
    }
}
