//! Radial kernels of `X`: the Lévy density `j(r)` and the Green function
//! `g(r)`, both subordination integrals of the Gaussian heat kernel
//! `(4πt)^{−d/2} e^{−r²/4t}` against `μ(t) dt` and `u(t) dt`.
//!
//! With `t = r²/(4s)` and `s = e^y` both become
//!
//! ```text
//! (1/4) π^{−d/2} r^{2−d} ∫ e^{y(d/2−1)} e^{−e^y} h(r²/(4e^y)) dy,
//! ```
//!
//! with `h = μ` for `j` and `h = u` for `g`. The Gamma-type weight keeps
//! the integrand concentrated, so a global adaptive rule over a fixed window
//! in `y` works uniformly in `r`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::inversion::ProfileTables;
use crate::quad::{gamma, integrate, lower_incomplete_gamma, QuadSettings};
use crate::table::LogGridTable;

/// Ambient dimension; only `d >= 3` is admitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Dimension(u32);

impl Dimension {
    pub const THREE: Dimension = Dimension(3);

    pub fn new(d: u32) -> Result<Self> {
        if d >= 3 {
            Ok(Dimension(d))
        } else {
            Err(Error::Dimension(d))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// `ω_{d−1} = 2π^{d/2}/Γ(d/2)`, the surface area of the unit sphere.
    pub fn sphere_area(self) -> f64 {
        let h = 0.5 * self.as_f64();
        2.0 * PI.powf(h) / gamma(h)
    }

    /// Volume of the unit ball, `ω_{d−1}/d`.
    pub fn ball_volume(self) -> f64 {
        self.sphere_area() / self.as_f64()
    }
}

impl TryFrom<u32> for Dimension {
    type Error = Error;
    fn try_from(d: u32) -> Result<Self> {
        Dimension::new(d)
    }
}

impl From<Dimension> for u32 {
    fn from(d: Dimension) -> u32 {
        d.0
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

fn check_radius(what: &'static str, r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: r,
            expected: "finite and > 0",
        })
    }
}

/// Closed-form comparison kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Green function of the isotropic α-stable process.
    StableGreen,
    /// Green function of Brownian motion with generator Δ.
    BrownianGreen,
    /// Lévy density of the isotropic α-stable process.
    StableLevy,
}

/// Evaluates a reference kernel; `alpha` is ignored for [`ReferenceKind::BrownianGreen`].
pub fn reference_kernel(kind: ReferenceKind, alpha: f64, r: f64, d: Dimension) -> Result<f64> {
    check_radius("reference_kernel", r)?;
    let dd = d.as_f64();
    let half_d = 0.5 * dd;
    if kind != ReferenceKind::BrownianGreen && !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain {
            what: "reference_kernel alpha",
            value: alpha,
            expected: "0 < alpha < 2",
        });
    }
    Ok(match kind {
        ReferenceKind::StableGreen => {
            gamma(half_d - 0.5 * alpha) / (2f64.powf(alpha) * PI.powf(half_d) * gamma(0.5 * alpha)) * r.powf(alpha - dd)
        }
        ReferenceKind::BrownianGreen => gamma(half_d - 1.0) / (4.0 * PI.powf(half_d)) * r.powf(2.0 - dd),
        ReferenceKind::StableLevy => {
            alpha * 2f64.powf(alpha - 1.0) * gamma(half_d + 0.5 * alpha) / (PI.powf(half_d) * gamma(1.0 - 0.5 * alpha))
                * r.powf(-dd - alpha)
        }
    })
}

/// `Γ(d/2−1)/(2π^{d/2})`, the constant shared by both ends of `g`.
pub fn green_constant(d: Dimension) -> f64 {
    let h = 0.5 * d.as_f64();
    gamma(h - 1.0) / (2.0 * PI.powf(h))
}

/// Canonical small-`r` comparator for `g`: `Γ(d/2−1)/(2π^{d/2}) r^{2−d} ln(1/r)`.
pub fn green_small_r_asymptote(r: f64, d: Dimension) -> f64 {
    green_constant(d) * r.powf(2.0 - d.as_f64()) * (1.0 / r).ln()
}

/// The same law written as `Γ(d/2−1)/(4π^{d/2}) r^{2−d} ln(1/r²)`. Kept only
/// to check that both normalizations agree.
pub fn green_small_r_asymptote_squared_log(r: f64, d: Dimension) -> f64 {
    let h = 0.5 * d.as_f64();
    gamma(h - 1.0) / (4.0 * PI.powf(h)) * r.powf(2.0 - d.as_f64()) * (1.0 / (r * r)).ln()
}

/// Large-`r` comparator for `g`: `Γ(d/2−1)/(2π^{d/2}) r^{2−d}`.
pub fn green_large_r_asymptote(r: f64, d: Dimension) -> f64 {
    green_constant(d) * r.powf(2.0 - d.as_f64())
}

/// Small-`r` comparator for `j`: `4Γ(d/2+1)/π^{d/2} · r^{−d−2} / ln²(1/r²)`.
pub fn levy_small_r_asymptote(r: f64, d: Dimension) -> f64 {
    let h = 0.5 * d.as_f64();
    let l = (1.0 / (r * r)).ln();
    4.0 * gamma(h + 1.0) / PI.powf(h) * r.powf(-d.as_f64() - 2.0) / (l * l)
}

/// `∫_0^r s^{d−1} g(s) ds ∼ Γ(d/2−1)/(4π^{d/2}) r² ln(1/r)`.
pub fn green_volume_asymptote(r: f64, d: Dimension) -> f64 {
    0.5 * green_constant(d) * r * r * (1.0 / r).ln()
}

/// `f(t) = t^{d−2}/ln(1/t)` on `(0, 1)`.
pub fn f_aux(t: f64, d: Dimension) -> Result<f64> {
    check_unit_interval("f_aux", t)?;
    Ok(t.powf(d.as_f64() - 2.0) / (1.0 / t).ln())
}

fn check_unit_interval(what: &'static str, t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: t,
            expected: "0 < t < 1",
        })
    }
}

/// Inverse of [`f_aux`] by bisection in `ln t`, to 1e−13 relative.
pub fn f_aux_inverse(s: f64, d: Dimension) -> Result<f64> {
    check_unit_interval("f_aux_inverse", s)?;
    let p = d.as_f64() - 2.0;
    // ln f(e^x) = p x − ln(−x) is increasing on x < 0.
    let target = s.ln();
    let lnf = |x: f64| p * x - (-x).ln();
    let (mut lo, mut hi) = (-1.0, -1e-300);
    while lnf(lo) > target {
        lo *= 2.0;
    }
    // f tends to +∞ at t = 1 so `hi` always brackets from above.
    while hi - lo > 1e-13 * lo.abs() {
        let mid = 0.5 * (lo + hi);
        if lnf(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// `(d−2)^{−1/(d−2)} s^{1/(d−2)} (ln 1/s)^{1/(d−2)}`, the small-`s` law of `f⁻¹`.
pub fn f_aux_inverse_asymptote(s: f64, d: Dimension) -> f64 {
    let p = d.as_f64() - 2.0;
    p.powf(-1.0 / p) * s.powf(1.0 / p) * (1.0 / s).ln().powf(1.0 / p)
}

/// Which radial kernel a table or quadrature refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    LevyJ,
    GreenG,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::LevyJ => "levy_j",
            KernelKind::GreenG => "green_g",
        }
    }
}

/// Quadrature evaluation of `j` and `g` from the profile tables.
#[derive(Debug, Clone)]
pub struct RadialKernels {
    pub profiles: Arc<ProfileTables>,
    pub dim: Dimension,
    pub quad: QuadSettings,
}

impl RadialKernels {
    pub fn new(profiles: Arc<ProfileTables>, dim: Dimension) -> Self {
        RadialKernels {
            profiles,
            dim,
            quad: QuadSettings::default().with_rel_tol(1e-6),
        }
    }

    pub fn with_quad(mut self, quad: QuadSettings) -> Self {
        self.quad = quad;
        self
    }

    fn window(&self, r: f64, table_max: f64) -> (f64, f64) {
        let y_hi = (60.0 + self.dim.as_f64() + r).ln();
        let y_lo = (r * r / (4.0 * table_max)).ln();
        (y_lo, y_hi)
    }

    /// `j(r) = (4π)^{−d/2} ∫ t^{−d/2} e^{−r²/4t} μ(t) dt`.
    pub fn levy_j(&self, r: f64) -> Result<f64> {
        check_radius("levy_j", r)?;
        let d = self.dim.as_f64();
        let (t_max, _) = self.profiles.mu.last();
        let (y_lo, y_hi) = self.window(r, t_max);
        if y_lo >= y_hi {
            return Err(Error::Range {
                what: "levy_j (μ table exhausted)",
                value: r,
                min: 0.0,
                max: 2.0 * (t_max * (60.0 + d)).sqrt(),
            });
        }
        let r2 = r * r;
        let q = integrate(
            |y: f64| {
                let s = y.exp();
                (y * (0.5 * d - 1.0) - s).exp() * self.profiles.mu(r2 / (4.0 * s))
            },
            y_lo,
            y_hi,
            &self.quad,
        )?;
        Ok(0.25 * PI.powf(-0.5 * d) * r.powf(2.0 - d) * q.value)
    }

    /// `g(r) = (4π)^{−d/2} ∫ t^{−d/2} e^{−r²/4t} u(t) dt`. Above the `u`
    /// table `u ≡ 2`, contributing `2γ(d/2−1, e^{y_lo})` in closed form.
    pub fn green_g(&self, r: f64) -> Result<f64> {
        check_radius("green_g", r)?;
        let d = self.dim.as_f64();
        let a = 0.5 * d - 1.0;
        let (t_max, _) = self.profiles.u.last();
        let (y_lo, y_hi) = self.window(r, t_max);
        let prefactor = 0.25 * PI.powf(-0.5 * d) * r.powf(2.0 - d);
        if y_lo >= y_hi {
            return Ok(prefactor * 2.0 * gamma(a));
        }
        let r2 = r * r;
        let q = integrate(
            |y: f64| {
                let s = y.exp();
                (y * a - s).exp() * self.profiles.u(r2 / (4.0 * s))
            },
            y_lo,
            y_hi,
            &self.quad,
        )?;
        let tail = 2.0 * lower_incomplete_gamma(a, y_lo.exp());
        Ok(prefactor * (q.value + tail))
    }

    /// `∫_0^r s^{d−1} g(s) ds` with direct quadrature of `g`.
    pub fn green_volume_integral(&self, r: f64) -> Result<f64> {
        check_radius("green_volume_integral", r)?;
        let mut failure = None;
        let value = volume_integral(
            |s| match self.green_g(s) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            r,
            self.dim,
            &self.quad,
        );
        match failure {
            Some(e) => Err(e),
            None => value,
        }
    }

    /// `ω_{d−1} ∫_0^r s^{d+1} j(s) ds`, the small-jump second moment
    /// `∫_{|y|<r} |y|² J(y) dy`.
    pub fn small_jump_second_moment(&self, r: f64, quad: &QuadSettings) -> Result<f64> {
        check_radius("small_jump_second_moment", r)?;
        let d = self.dim.as_f64();
        let mut failure = None;
        // Integrate in ln s down to where the integrand is negligible: it
        // behaves like s/ln²(1/s), so the mass below s0 is ≈ s0²/ln²(1/s0).
        let s0 = r * 1e-12;
        let q = integrate(
            |y: f64| {
                let s = y.exp();
                match self.levy_j(s) {
                    Ok(v) => s.powf(d + 2.0) * v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            s0.ln(),
            r.ln(),
            quad,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(self.dim.sphere_area() * q?.value)
    }
}

/// `∫_0^r s^{d−1} g(s) ds` for any radial `g`. Below `r·1e−6` the canonical
/// small-`r` law replaces `g`, which makes the endpoint singularity
/// integrable in closed form.
pub fn volume_integral(g: impl FnMut(f64) -> f64, r: f64, d: Dimension, quad: &QuadSettings) -> Result<f64> {
    let mut g = g;
    let dd = d.as_f64();
    let c = r * 1e-6;
    let body = integrate(
        |y: f64| {
            let s = y.exp();
            s.powf(dd) * g(s)
        },
        c.ln(),
        r.ln(),
        quad,
    )?;
    // Match the comparator to g at the crossover, so the head inherits the
    // local correction factor.
    let ratio = g(c) / green_small_r_asymptote(c, d);
    let head = ratio * green_constant(d) * c * c * (0.5 * (1.0 / c).ln() + 0.25);
    Ok(body.value + head)
}

/// A tabulated radial kernel with asymptote-matched extrapolation.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub kind: KernelKind,
    pub dim: Dimension,
    pub table: LogGridTable,
}

impl KernelTable {
    pub const DEFAULT_POINTS_PER_DECADE: usize = 256;
    pub const GREEN_RANGE: (f64, f64) = (1e-8, 1e4);
    /// `j` decays like `e^{−r}`; beyond r ≈ 100 it is far below any
    /// Monte Carlo resolution.
    pub const LEVY_RANGE: (f64, f64) = (1e-8, 1e2);

    pub fn target_name(kind: KernelKind, dim: Dimension) -> String {
        format!("{}_d{}", kind.name(), dim.get())
    }

    pub fn build(
        kernels: &RadialKernels,
        kind: KernelKind,
        r_min: f64,
        r_max: f64,
        points_per_decade: usize,
        exec: Execution,
    ) -> Result<Self> {
        let mut prov = BTreeMap::new();
        prov.insert("kind".to_string(), kind.name().to_string());
        prov.insert("dimension".to_string(), kernels.dim.to_string());
        prov.insert("quad_rel_tol".to_string(), format!("{:e}", kernels.quad.rel_tol));
        prov.insert(
            "profile_accuracy".to_string(),
            format!("{:e}", kernels.profiles.settings.accuracy),
        );
        let name = Self::target_name(kind, kernels.dim);
        let table = LogGridTable::build(&name, r_min, r_max, points_per_decade, prov, exec, |r| match kind {
            KernelKind::LevyJ => kernels.levy_j(r),
            KernelKind::GreenG => kernels.green_g(r),
        })?;
        Ok(KernelTable {
            kind,
            dim: kernels.dim,
            table,
        })
    }

    pub fn build_default(kernels: &RadialKernels, kind: KernelKind, exec: Execution) -> Result<Self> {
        let (lo, hi) = match kind {
            KernelKind::GreenG => Self::GREEN_RANGE,
            KernelKind::LevyJ => Self::LEVY_RANGE,
        };
        Self::build(kernels, kind, lo, hi, Self::DEFAULT_POINTS_PER_DECADE, exec)
    }

    /// Wraps a table read from disk, checking that its header matches.
    pub fn from_table(kind: KernelKind, dim: Dimension, table: LogGridTable) -> Result<Self> {
        let want = Self::target_name(kind, dim);
        if table.target != want {
            return Err(Error::InvalidParameter(format!(
                "expected kernel table {want}, found {}",
                table.target
            )));
        }
        Ok(KernelTable { kind, dim, table })
    }

    /// Evaluates the kernel; outside the grid the value follows the
    /// asymptotic law matched to the nearest table end.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        if let Some(v) = self.table.eval(r) {
            return v;
        }
        let (r0, v0) = self.table.first();
        let (r1, v1) = self.table.last();
        match (self.kind, r < r0) {
            (KernelKind::GreenG, true) => {
                v0 * green_small_r_asymptote(r, self.dim) / green_small_r_asymptote(r0, self.dim)
            }
            (KernelKind::GreenG, false) => v1 * (r / r1).powf(2.0 - self.dim.as_f64()),
            (KernelKind::LevyJ, true) => {
                v0 * levy_small_r_asymptote(r, self.dim) / levy_small_r_asymptote(r0, self.dim)
            }
            (KernelKind::LevyJ, false) => 0.0,
        }
    }

    pub fn is_extrapolated(&self, r: f64) -> bool {
        !self.table.contains(r)
    }

    /// `∫_0^r s^{d−1} k(s) ds` using the table.
    pub fn volume_integral(&self, r: f64) -> Result<f64> {
        check_radius("volume_integral", r)?;
        volume_integral(
            |s| self.eval(s),
            r,
            self.dim,
            &QuadSettings::default().with_rel_tol(1e-8),
        )
    }

    /// Average of the kernel over the ball of radius `a` about its center:
    /// `(d/a^d) ∫_0^a s^{d−1} k(s) ds`.
    pub fn ball_average(&self, a: f64) -> Result<f64> {
        Ok(self.dim.as_f64() * self.volume_integral(a)? / a.powf(self.dim.as_f64()))
    }
}
