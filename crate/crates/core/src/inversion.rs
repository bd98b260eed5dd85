//! Numerical Laplace inversion on a Talbot-type contour, and the four
//! completely monotone profiles recovered with it:
//!
//! | target      | transform               | original                          |
//! |-------------|-------------------------|-----------------------------------|
//! | `u`         | `1/phi(λ)`              | potential density of `S`          |
//! | `v`         | `1/ln(1+λ)`             | potential density of the gamma subordinator |
//! | `jump_tail` | `phi(λ)/λ`              | `Λ(t) = ∫_t^∞ μ(s) ds`            |
//! | `mu`        | (differentiated `Λ`)    | Lévy density `μ(t)` of `S`        |
//!
//! The contour is Weideman's optimized cotangent contour
//! `s(θ) = (N/t)(0.5017 θ cot(0.6407 θ) − 0.6122 + 0.2645 i θ)`, discretized by
//! the midpoint rule on `(−π, π)`. It stays to the right of the branch cut
//! `(−∞, −1]` of `ln(1+λ)` and of the pole at 0.
//!
//! Originals that decay like `e^{−t}` (`Λ`, `μ`) are inverted with a unit
//! shift: `e^{t} Λ(t)` is recovered from `F(s − 1)`, whose singularities lie
//! on `(−∞, 0]`. That keeps relative accuracy for large `t`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::exponents::{ln_1p_complex, phi_complex, phi_derivative_complex};
use crate::quad::{integrate, QuadSettings};
use crate::table::LogGridTable;

pub const DEFAULT_ACCURACY: f64 = 1e-6;
pub const MIN_NODES: usize = 24;
pub const MAX_NODES: usize = 192;

/// Originals available out of the box.
#[derive(Clone)]
pub enum Target {
    U,
    V,
    JumpTail,
    /// `t·μ(t)`, the original of `phi'(λ)`; a second route to `μ`.
    ScaledLevyDensity,
    /// `∫_0^t Λ(s) ds`, the original of `phi(λ)/λ²`.
    IntegratedJumpTail,
    User {
        name: String,
        transform: Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>,
    },
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Target {
    pub fn name(&self) -> &str {
        match self {
            Target::U => "u",
            Target::V => "v",
            Target::JumpTail => "jump_tail",
            Target::ScaledLevyDensity => "t_mu",
            Target::IntegratedJumpTail => "integrated_jump_tail",
            Target::User { name, .. } => name,
        }
    }
}

/// A Laplace transform to invert, with the shift used for inversion.
#[derive(Debug, Clone)]
pub struct TransformSpec {
    pub target: Target,
    /// The contour is applied to `F(s − shift)`; the result is multiplied by
    /// `e^{−shift·t}`.
    pub shift: f64,
    pub singularity_note: &'static str,
}

impl TransformSpec {
    pub fn potential_u() -> Self {
        TransformSpec {
            target: Target::U,
            shift: 0.0,
            singularity_note: "pole at 0 (1/phi ~ 2/λ), branch cut (−∞,−1]",
        }
    }

    pub fn potential_v() -> Self {
        TransformSpec {
            target: Target::V,
            shift: 0.0,
            singularity_note: "pole at 0 (1/ln(1+λ) ~ 1/λ), branch cut (−∞,−1]",
        }
    }

    pub fn jump_tail() -> Self {
        TransformSpec {
            target: Target::JumpTail,
            shift: 1.0,
            singularity_note: "removable at 0, branch cut (−∞,−1]",
        }
    }

    pub fn scaled_levy_density() -> Self {
        TransformSpec {
            target: Target::ScaledLevyDensity,
            shift: 1.0,
            singularity_note: "analytic at 0, branch cut (−∞,−1]",
        }
    }

    pub fn integrated_jump_tail() -> Self {
        TransformSpec {
            target: Target::IntegratedJumpTail,
            shift: 0.0,
            singularity_note: "pole at 0 (phi/λ² ~ 1/(2λ)), branch cut (−∞,−1]",
        }
    }

    pub fn user(name: &str, shift: f64, transform: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static) -> Self {
        TransformSpec {
            target: Target::User {
                name: name.to_string(),
                transform: Arc::new(transform),
            },
            shift,
            singularity_note: "user supplied",
        }
    }

    #[inline]
    pub fn transform(&self, s: Complex64) -> Complex64 {
        match &self.target {
            Target::U => phi_complex(s).inv(),
            Target::V => ln_1p_complex(s).inv(),
            Target::JumpTail => phi_complex(s) / s,
            Target::ScaledLevyDensity => phi_derivative_complex(s),
            Target::IntegratedJumpTail => phi_complex(s) / (s * s),
            Target::User { transform, .. } => transform(s),
        }
    }
}

/// Talbot-contour approximation with a fixed node count.
pub fn talbot(spec: &TransformSpec, t: f64, nodes: usize) -> f64 {
    const SIGMA: f64 = -0.6122;
    const MU: f64 = 0.5017;
    const ALPHA: f64 = 0.6407;
    const NU: f64 = 0.2645;
    let scale = nodes as f64 / t;
    let h = 2.0 * PI / nodes as f64;
    let mut acc = 0.0;
    // Conjugate symmetry: only θ > 0 is evaluated.
    for k in nodes / 2..nodes {
        let theta = -PI + (k as f64 + 0.5) * h;
        let (sa, ca) = (ALPHA * theta).sin_cos();
        let cot = ca / sa;
        let s = Complex64::new(scale * (SIGMA + MU * theta * cot), scale * NU * theta);
        let ds = Complex64::new(scale * (MU * cot - MU * ALPHA * theta / (sa * sa)), scale * NU);
        let term = (s * t).exp() * spec.transform(s - spec.shift) * ds;
        acc += term.im;
    }
    acc * h / PI * (-spec.shift * t).exp()
}

/// Inverts `spec` at `t`, doubling the node count from [`MIN_NODES`] until
/// two successive approximations agree to `accuracy` (relative).
pub fn invert(spec: &TransformSpec, t: f64, accuracy: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain {
            what: "invert",
            value: t,
            expected: "finite and > 0",
        });
    }
    let mut nodes = MIN_NODES;
    let mut coarse = talbot(spec, t, nodes);
    loop {
        let fine_nodes = nodes * 2;
        let fine = talbot(spec, t, fine_nodes);
        if (fine - coarse).abs() <= accuracy * fine.abs() {
            return Ok(fine);
        }
        if fine_nodes >= MAX_NODES {
            return Err(Error::InversionFailure {
                t,
                coarse,
                fine,
                coarse_nodes: nodes,
                fine_nodes,
                accuracy,
            });
        }
        nodes = fine_nodes;
        coarse = fine;
    }
}

/// `u(t)`: density of the potential measure of `S`.
pub fn potential_density_u(t: f64, accuracy: f64) -> Result<f64> {
    invert(&TransformSpec::potential_u(), t, accuracy)
}

/// `v(t)`: potential density of the gamma subordinator.
pub fn gamma_potential_v(t: f64, accuracy: f64) -> Result<f64> {
    invert(&TransformSpec::potential_v(), t, accuracy)
}

/// `Λ(t) = ∫_t^∞ μ(s) ds = v(t) − 1`, inverted directly from `phi(λ)/λ`.
pub fn jump_tail_lambda(t: f64, accuracy: f64) -> Result<f64> {
    let value = invert(&TransformSpec::jump_tail(), t, accuracy)?;
    if value <= 0.0 {
        return Err(Error::Consistency {
            what: "jump_tail_lambda".into(),
            detail: format!("Λ({t}) = {value} is not positive"),
        });
    }
    Ok(value)
}

/// `∫_0^t Λ(s) ds`.
pub fn integrated_jump_tail(t: f64, accuracy: f64) -> Result<f64> {
    invert(&TransformSpec::integrated_jump_tail(), t, accuracy)
}

/// `μ(t) = −Λ'(t)` from central differences of `Λ` in `ln t`, refined by two
/// Richardson steps.
pub fn levy_density_mu(t: f64, accuracy: f64) -> Result<f64> {
    // Beyond t = 1 the tail varies on the scale of e^{-t}, so the step in
    // ln t shrinks to keep the step in t near 0.04.
    let h0 = 0.04 / t.max(1.0);
    // Differencing amplifies the inversion error by ~1/h.
    let acc = (accuracy * 1e-3).max(1e-13);
    let tail = |x: f64| invert(&TransformSpec::jump_tail(), t * x.exp(), acc);
    let diff = |h: f64| -> Result<f64> { Ok((tail(h)? - tail(-h)?) / (2.0 * h)) };
    let (d1, d2, d4) = (diff(h0)?, diff(h0 / 2.0)?, diff(h0 / 4.0)?);
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d4 - d2) / 3.0;
    let dlog = (16.0 * r2 - r1) / 15.0;
    let mu = -dlog / t;
    if !(mu > 0.0) {
        return Err(Error::Consistency {
            what: "levy_density_mu".into(),
            detail: format!("μ({t}) estimate {mu} is not positive"),
        });
    }
    Ok(mu)
}

/// `μ(t)` from the transform `phi'(λ)` of `t·μ(t)`; independent of the
/// differencing route.
pub fn levy_density_mu_from_derivative(t: f64, accuracy: f64) -> Result<f64> {
    Ok(invert(&TransformSpec::scaled_levy_density(), t, accuracy)? / t)
}

/// Grid parameters and inversion accuracy for [`ProfileTables`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProfileSettings {
    pub accuracy: f64,
    pub points_per_decade: usize,
    pub t_min: f64,
    /// Upper end for `u` and `v`, which tend to constants.
    pub t_max: f64,
    /// Upper end for `Λ` and `μ`, which decay like `e^{−t}`.
    pub t_max_decaying: f64,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        ProfileSettings {
            accuracy: DEFAULT_ACCURACY,
            points_per_decade: 512,
            t_min: 1e-14,
            t_max: 1e6,
            t_max_decaying: 500.0,
        }
    }
}

impl ProfileSettings {
    fn provenance(&self, spec: &TransformSpec) -> BTreeMap<String, String> {
        let mut p = BTreeMap::new();
        p.insert("accuracy".into(), format!("{:e}", self.accuracy));
        p.insert("method".into(), "talbot-weideman".into());
        p.insert("shift".into(), format!("{}", spec.shift));
        p
    }
}

/// Tabulated `u`, `v`, `Λ`, `μ` with asymptote-matched extrapolation outside
/// the grids.
#[derive(Debug, Clone)]
pub struct ProfileTables {
    pub settings: ProfileSettings,
    pub u: LogGridTable,
    pub v: LogGridTable,
    pub jump_tail: LogGridTable,
    pub mu: LogGridTable,
}

impl ProfileTables {
    pub fn build(settings: ProfileSettings, exec: Execution) -> Result<Self> {
        let s = settings;
        let acc = s.accuracy;
        let ppd = s.points_per_decade;
        let u_spec = TransformSpec::potential_u();
        let v_spec = TransformSpec::potential_v();
        let l_spec = TransformSpec::jump_tail();
        let u = LogGridTable::build("u", s.t_min, s.t_max, ppd, s.provenance(&u_spec), exec, |t| {
            invert(&u_spec, t, acc)
        })?;
        let v = LogGridTable::build("v", s.t_min, s.t_max, ppd, s.provenance(&v_spec), exec, |t| {
            invert(&v_spec, t, acc)
        })?;
        let jump_tail = LogGridTable::build(
            "jump_tail",
            s.t_min,
            s.t_max_decaying,
            ppd,
            s.provenance(&l_spec),
            exec,
            |t| jump_tail_lambda(t, acc),
        )?;
        let mut mu_prov = s.provenance(&l_spec);
        mu_prov.insert("method".into(), "richardson-differenced-jump-tail".into());
        let mu = LogGridTable::build("mu", s.t_min, s.t_max_decaying, ppd, mu_prov, exec, |t| {
            levy_density_mu(t, acc)
        })?;
        Ok(ProfileTables {
            settings,
            u,
            v,
            jump_tail,
            mu,
        })
    }

    /// Assembles tables loaded from disk, checking that they fit together.
    pub fn from_tables(
        settings: ProfileSettings,
        u: LogGridTable,
        v: LogGridTable,
        jump_tail: LogGridTable,
        mu: LogGridTable,
    ) -> Result<Self> {
        for (table, name) in [(&u, "u"), (&v, "v"), (&jump_tail, "jump_tail"), (&mu, "mu")] {
            if table.target != name {
                return Err(Error::InvalidParameter(format!(
                    "expected table for {name}, found {}",
                    table.target
                )));
            }
        }
        Ok(ProfileTables {
            settings,
            u,
            v,
            jump_tail,
            mu,
        })
    }

    /// `u(t)`; `u(t) ≈ u(t_min) + ln(t_min/t)` below the grid, 2 above.
    #[inline]
    pub fn u(&self, t: f64) -> f64 {
        if let Some(v) = self.u.eval(t) {
            return v;
        }
        let (t0, u0) = self.u.first();
        if t < t0 {
            u0 + (t0 / t).ln()
        } else {
            2.0
        }
    }

    /// `v(t)`; `v(t) ~ 1/(t ln²t)` below the grid, 1 above.
    #[inline]
    pub fn v(&self, t: f64) -> f64 {
        if let Some(v) = self.v.eval(t) {
            return v;
        }
        let (t0, v0) = self.v.first();
        if t < t0 {
            v0 * tail_ratio(t0, t, 1.0)
        } else {
            1.0
        }
    }

    /// `Λ(t)`; `~ 1/(t ln²t)` below the grid, 0 above.
    #[inline]
    pub fn jump_tail(&self, t: f64) -> f64 {
        if let Some(v) = self.jump_tail.eval(t) {
            return v;
        }
        let (t0, v0) = self.jump_tail.first();
        if t < t0 {
            v0 * tail_ratio(t0, t, 1.0)
        } else {
            0.0
        }
    }

    /// `μ(t)`; `~ 1/(t² ln²t)` below the grid, 0 above.
    #[inline]
    pub fn mu(&self, t: f64) -> f64 {
        if let Some(v) = self.mu.eval(t) {
            return v;
        }
        let (t0, v0) = self.mu.first();
        if t < t0 {
            v0 * tail_ratio(t0, t, 2.0)
        } else {
            0.0
        }
    }

    /// Whether `t` lies outside the tabulated range of the given profile.
    pub fn is_extrapolated(&self, table: &LogGridTable, t: f64) -> bool {
        !table.contains(t)
    }
}

/// `(t0/t)^power (ln t0 / ln t)²`: ratio of `t^{−power} ln^{−2} t` at `t` and `t0`.
#[inline]
fn tail_ratio(t0: f64, t: f64, power: f64) -> f64 {
    let l = t0.ln() / t.ln();
    (t0 / t).powf(power) * l * l
}

/// `∫_0^∞ Λ(t) dt` by quadrature of the tabulated tail in `ln t`. The piece
/// below the grid comes from inverting `phi(λ)/λ²` at the first grid point.
pub fn integral_of_jump_tail(tables: &ProfileTables, settings: &QuadSettings) -> Result<f64> {
    let (t0, _) = tables.jump_tail.first();
    let (t1, _) = tables.jump_tail.last();
    let body = integrate(
        |y: f64| {
            let t = y.exp();
            tables.jump_tail(t) * t
        },
        t0.ln(),
        t1.ln(),
        &settings.with_rel_tol(settings.rel_tol.min(1e-8)),
    )?;
    Ok(body.value + integrated_jump_tail(t0, tables.settings.accuracy)?)
}
