//! Equilibrium measures and 0-order capacities of finite unions of balls.
//!
//! The set is replaced by a quasi-uniform point cloud; each point stands for
//! a small ball ("cell") of equal volume. With the energy matrix
//! `G_ij = g(|x_i − x_j|)` and diagonal entries equal to the average of `g`
//! over a cell, the equilibrium weights solve
//!
//! ```text
//! minimize ½ wᵀGw − Σ w_i   subject to w ≥ 0,
//! ```
//!
//! whose optimality conditions are `Gw = 1` where `w > 0` and `Gw ≥ 1`
//! elsewhere. Then `Cap = Σ w_i`, and the normalized measure `w/Cap` has
//! energy `1/Cap`. The nonnegative problem is solved by block principal
//! pivoting (Kim & Park), each step a dense Cholesky solve.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernels::{Dimension, KernelTable};
use crate::report::{ExperimentReport, Series, ToleranceOrigin};
use crate::stats::{spread, Estimate};

/// A closed ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn centered(d: Dimension, radius: f64) -> Self {
        Ball::new(vec![0.0; d.get() as usize], radius)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist2(&self.center, x) <= self.radius * self.radius
    }

    pub fn volume(&self, d: Dimension) -> f64 {
        d.ball_volume() * self.radius.powi(d.get() as i32)
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A finite union of closed balls, read from and written to JSON as
/// `{"balls": [{"center": [..], "radius": ..}, ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    pub balls: Vec<Ball>,
}

impl CompactSet {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        CompactSet {
            balls: vec![Ball::new(center, radius)],
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sets serialize")
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.balls.iter().any(|b| b.contains(x))
    }

    /// Checks non-emptiness, positive radii and a common dimension `d`.
    pub fn validate(&self, d: Dimension) -> Result<()> {
        if self.balls.is_empty() {
            return Err(Error::InvalidParameter("compact set has no balls".into()));
        }
        for (i, b) in self.balls.iter().enumerate() {
            if !(b.radius.is_finite() && b.radius > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "ball {i} has radius {}, expected > 0",
                    b.radius
                )));
            }
            if b.center.len() != d.get() as usize {
                return Err(Error::InvalidParameter(format!(
                    "ball {i} has a {}-dimensional center, expected {d}",
                    b.center.len()
                )));
            }
            if b.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter(format!("ball {i} has a non-finite center")));
            }
        }
        Ok(())
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        CompactSet {
            balls: self
                .balls
                .iter()
                .map(|b| Ball::new(b.center.iter().zip(shift).map(|(c, s)| c + s).collect(), b.radius))
                .collect(),
        }
    }

    pub fn union(&self, other: &CompactSet) -> Self {
        let mut balls = self.balls.clone();
        balls.extend(other.balls.iter().cloned());
        CompactSet { balls }
    }
}

/// Additive recurrence with the generalized golden ratio: the `d` irrational
/// increments are powers of `1/φ_d`, where `φ_d^{d+1} = φ_d + 1`.
#[derive(Debug, Clone)]
pub struct KroneckerSequence {
    alpha: Vec<f64>,
    k: u64,
}

impl KroneckerSequence {
    pub fn new(d: usize) -> Self {
        let mut x = 2.0f64;
        for _ in 0..64 {
            x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
        }
        let alpha = (1..=d).map(|i| x.powi(-(i as i32)).fract()).collect();
        KroneckerSequence { alpha, k: 0 }
    }

    /// Next point in `[0, 1)^d`.
    pub fn next_point(&mut self) -> Vec<f64> {
        self.k += 1;
        let k = self.k as f64;
        self.alpha.iter().map(|a| (0.5 + k * a).fract()).collect()
    }
}

/// Point cloud for a [`CompactSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub points: Vec<Vec<f64>>,
    /// Radius of the ball with the same volume as the point's cell.
    pub cell_radius: Vec<f64>,
}

/// Deterministic quasi-uniform cloud of about `n_points` points. Points are
/// shared out between balls in proportion to volume; points of a ball that
/// already lie in an earlier ball are dropped.
pub fn discretize(set: &CompactSet, d: Dimension, n_points: usize) -> Result<Discretization> {
    set.validate(d)?;
    if n_points == 0 {
        return Err(Error::InvalidParameter("n_points must be positive".into()));
    }
    let dim = d.get() as usize;
    let vols: Vec<f64> = set.balls.iter().map(|b| b.volume(d)).collect();
    let total: f64 = vols.iter().sum();
    let mut points = Vec::with_capacity(n_points);
    let mut cell_radius = Vec::with_capacity(n_points);
    for (k, ball) in set.balls.iter().enumerate() {
        let n_k = ((n_points as f64 * vols[k] / total).round() as usize).max(1);
        let a = (vols[k] / n_k as f64 / d.ball_volume()).powf(1.0 / d.as_f64());
        let mut seq = KroneckerSequence::new(dim);
        let mut accepted = 0;
        while accepted < n_k {
            let u = seq.next_point();
            let x: Vec<f64> = u
                .iter()
                .zip(&ball.center)
                .map(|(u, c)| c + ball.radius * (2.0 * u - 1.0))
                .collect();
            if !ball.contains(&x) {
                continue;
            }
            accepted += 1;
            if set.balls[..k].iter().any(|b| b.contains(&x)) {
                continue;
            }
            points.push(x);
            cell_radius.push(a);
        }
    }
    Ok(Discretization { points, cell_radius })
}

/// Output of [`capacity_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub dimension: Dimension,
    pub capacity: f64,
    /// Energy `∫∫ g dρ dρ` of the normalized equilibrium measure.
    pub energy: f64,
    pub n_points: usize,
    pub active_points: usize,
    /// Multiple of the mean diagonal added to make the matrix factorizable.
    pub regularization: f64,
    pub pivot_iterations: usize,
    /// `max_i |(Gw)_i − 1|` over points carrying mass.
    pub max_support_deviation: f64,
    /// `max_i (Gw)_i` over all points, which should not exceed 1 by much.
    pub max_potential: f64,
    pub points: Vec<Vec<f64>>,
    pub cell_radius: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CapacityResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    /// Equilibrium potential `Σ w_j k(|x − x_j|)` at an arbitrary point;
    /// a node closer than its cell radius contributes the cell average.
    pub fn potential_at(&self, kernel: &KernelTable, x: &[f64], cell_average: &BTreeMap<u64, f64>) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .zip(&self.cell_radius)
            .map(|((p, w), a)| {
                let r = dist2(p, x).sqrt();
                if r <= *a {
                    w * cell_average
                        .get(&a.to_bits())
                        .copied()
                        .unwrap_or_else(|| kernel.eval(*a))
                } else {
                    w * kernel.eval(r)
                }
            })
            .sum()
    }

    /// Cell averages needed by [`CapacityResult::potential_at`].
    pub fn cell_averages(&self, kernel: &KernelTable) -> Result<BTreeMap<u64, f64>> {
        let mut m = BTreeMap::new();
        for a in &self.cell_radius {
            if let std::collections::btree_map::Entry::Vacant(e) = m.entry(a.to_bits()) {
                e.insert(kernel.ball_average(*a)?);
            }
        }
        Ok(m)
    }
}

/// Energy matrix with cell-averaged diagonal.
pub fn energy_matrix(disc: &Discretization, kernel: &KernelTable, exec: Execution) -> Result<DMatrix<f64>> {
    let n = disc.points.len();
    let mut diag = BTreeMap::new();
    for a in &disc.cell_radius {
        if let std::collections::btree_map::Entry::Vacant(e) = diag.entry(a.to_bits()) {
            e.insert(kernel.ball_average(*a)?);
        }
    }
    let rows = exec.map_range(n, |i| {
        let xi = &disc.points[i];
        (0..n)
            .map(|j| {
                if i == j {
                    diag[&disc.cell_radius[i].to_bits()]
                } else {
                    kernel.eval(dist2(xi, &disc.points[j]).sqrt())
                }
            })
            .collect::<Vec<f64>>()
    });
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Solves `min ½wᵀGw − 1ᵀw, w ≥ 0` by block principal pivoting.
/// Returns `(w, iterations, regularization)`.
pub fn solve_nonnegative(g: &DMatrix<f64>) -> Result<(DVector<f64>, usize, f64)> {
    let n = g.nrows();
    let mean_diag = g.diagonal().mean();
    let mut passive = vec![true; n];
    let mut best_infeasible = n + 1;
    let mut backup_budget = 3;
    let mut regularization = 0.0;
    const TOL: f64 = 1e-12;
    for iter in 1..=10 * n.max(10) {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let (w_f, reg) = solve_subsystem(g, &idx, mean_diag)?;
        regularization = f64::max(regularization, reg);
        let mut w = DVector::zeros(n);
        for (k, &i) in idx.iter().enumerate() {
            w[i] = w_f[k];
        }
        let y = g * &w - DVector::from_element(n, 1.0);
        let infeasible: Vec<usize> = (0..n)
            .filter(|&i| {
                if passive[i] {
                    w[i] < -TOL * w.amax()
                } else {
                    y[i] < -TOL
                }
            })
            .collect();
        if infeasible.is_empty() {
            return Ok((w, iter, regularization));
        }
        if infeasible.len() < best_infeasible {
            best_infeasible = infeasible.len();
            backup_budget = 3;
            infeasible.iter().for_each(|&i| passive[i] = !passive[i]);
        } else if backup_budget > 0 {
            backup_budget -= 1;
            infeasible.iter().for_each(|&i| passive[i] = !passive[i]);
        } else {
            let &i = infeasible.last().expect("non-empty");
            passive[i] = !passive[i];
        }
    }
    Err(Error::Capacity(format!(
        "block principal pivoting did not terminate for n = {n}"
    )))
}

fn solve_subsystem(g: &DMatrix<f64>, idx: &[usize], mean_diag: f64) -> Result<(DVector<f64>, f64)> {
    let m = idx.len();
    if m == 0 {
        return Ok((DVector::zeros(0), 0.0));
    }
    let sub = DMatrix::from_fn(m, m, |a, b| g[(idx[a], idx[b])]);
    let rhs = DVector::from_element(m, 1.0);
    let mut reg = 0.0;
    for attempt in 0..8 {
        let mut a = sub.clone();
        if attempt > 0 {
            reg = 1e-14 * 10f64.powi(attempt);
            for i in 0..m {
                a[(i, i)] += reg * mean_diag;
            }
        }
        if let Some(ch) = a.cholesky() {
            return Ok((ch.solve(&rhs), reg));
        }
    }
    let diag = sub.diagonal();
    Err(Error::Capacity(format!(
        "energy matrix of size {m} is not positive definite even with diagonal shift {reg:e}·mean(diag); diagonal range [{:e}, {:e}]",
        diag.min(),
        diag.max()
    )))
}

/// Capacity and equilibrium measure of `set` from about `n_points` nodes.
pub fn capacity_estimate(
    set: &CompactSet,
    kernel: &KernelTable,
    n_points: usize,
    exec: Execution,
) -> Result<CapacityResult> {
    let d = kernel.dim;
    if kernel.kind != crate::kernels::KernelKind::GreenG {
        return Err(Error::InvalidParameter(
            "capacity needs the Green function table".into(),
        ));
    }
    let disc = discretize(set, d, n_points)?;
    let g = energy_matrix(&disc, kernel, exec)?;
    let (w, iterations, regularization) = solve_nonnegative(&g)?;
    let potential = &g * &w;
    let capacity: f64 = w.sum();
    if !(capacity > 0.0 && capacity.is_finite()) {
        return Err(Error::Capacity(format!("non-positive total mass {capacity}")));
    }
    let active_points = w.iter().filter(|&&x| x > 0.0).count();
    let max_support_deviation = (0..w.len())
        .filter(|&i| w[i] > 0.0)
        .map(|i| (potential[i] - 1.0).abs())
        .fold(0.0, f64::max);
    let max_potential = potential.max();
    let energy = w.dot(&potential) / (capacity * capacity);
    Ok(CapacityResult {
        dimension: d,
        capacity,
        energy,
        n_points: disc.points.len(),
        active_points,
        regularization,
        pivot_iterations: iterations,
        max_support_deviation,
        max_potential,
        points: disc.points,
        cell_radius: disc.cell_radius,
        weights: w.iter().copied().collect(),
    })
}

/// `Cap(B(0, r)) · ln(1/r) / r^{d−2}`.
pub fn normalized_ball_capacity(capacity: f64, r: f64, d: Dimension) -> f64 {
    capacity * (1.0 / r).ln() / r.powf(d.as_f64() - 2.0)
}

/// Capacities of centered balls over `r_list` and the spread of the
/// normalized sequence `Cap·ln(1/r)/r^{d−2}`.
pub fn ball_capacity_scaling_report(
    r_list: &[f64],
    kernel: &KernelTable,
    n_points: usize,
    spread_factor: f64,
    exec: Execution,
) -> Result<ExperimentReport> {
    let d = kernel.dim;
    for &r in r_list {
        if !(r > 0.0 && r <= 0.5) {
            return Err(Error::Domain {
                what: "ball_capacity_scaling_report radius",
                value: r,
                expected: "0 < r <= 1/2",
            });
        }
    }
    let mut report = ExperimentReport::new("capacity-scaling", None);
    report
        .param("radii", r_list)
        .param("dimension", d)
        .param("n_points", n_points)
        .param("spread_factor", spread_factor);
    let mut normalized = Vec::new();
    let mut worst_deviation = 0f64;
    let mut series = Series::new("normalized_capacity", "r", "cap_ln_inv_r_over_r_pow_d_minus_2");
    for &r in r_list {
        let res = capacity_estimate(
            &CompactSet::ball(vec![0.0; d.get() as usize], r),
            kernel,
            n_points,
            exec,
        )?;
        let nc = normalized_ball_capacity(res.capacity, r, d);
        report.exact(&format!("capacity[r={r}]"), res.capacity);
        report.exact(&format!("normalized[r={r}]"), nc);
        report.exact(&format!("energy_times_capacity[r={r}]"), res.energy * res.capacity);
        series.push(r, &Estimate::exact(nc));
        normalized.push(nc);
        worst_deviation = worst_deviation.max(res.max_support_deviation);
        if res.regularization > 0.0 {
            report.flag(format!(
                "regularized energy matrix at r={r} (shift {:e})",
                res.regularization
            ));
        }
    }
    let s = spread(&normalized);
    report.fitted(
        "C3_hat (min normalized)",
        Estimate::exact(normalized.iter().cloned().fold(f64::INFINITY, f64::min)),
    );
    report.fitted(
        "C4_hat (max normalized)",
        Estimate::exact(normalized.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
    );
    report.check(
        "normalized capacity spread",
        s,
        format!("max/min <= {spread_factor}"),
        ToleranceOrigin::EngineeringChoice,
        s <= spread_factor,
    );
    report.check(
        "equilibrium potential on support",
        worst_deviation,
        "max |G rho - 1| <= 0.05",
        ToleranceOrigin::EngineeringChoice,
        worst_deviation <= 0.05,
    );
    report.series.push(series);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronecker_points_are_well_spread() {
        let mut seq = KroneckerSequence::new(3);
        let pts: Vec<Vec<f64>> = (0..4096).map(|_| seq.next_point()).collect();
        // every octant receives close to 1/8 of the points
        let mut counts = [0usize; 8];
        for p in &pts {
            let o = (p[0] > 0.5) as usize + 2 * (p[1] > 0.5) as usize + 4 * (p[2] > 0.5) as usize;
            counts[o] += 1;
        }
        assert!(counts.iter().all(|&c| (c as f64 - 512.0).abs() < 32.0), "{counts:?}");
    }

    #[test]
    fn discretization_lies_in_the_set() {
        let d = Dimension::THREE;
        let set = CompactSet::ball(vec![0.0; 3], 0.1).union(&CompactSet::ball(vec![0.15, 0.0, 0.0], 0.1));
        let disc = discretize(&set, d, 500).unwrap();
        assert!(disc.points.iter().all(|p| set.contains(p)));
        // overlapping region is not double counted
        assert!(disc.points.len() < 500);
        assert!(disc.points.len() > 400);
    }

    #[test]
    fn set_validation_and_json() {
        let d = Dimension::THREE;
        let json = r#"{"balls":[{"center":[0,0,0],"radius":0.5},{"center":[1,0,0],"radius":0.25}]}"#;
        let set = CompactSet::from_json(json).unwrap();
        set.validate(d).unwrap();
        assert_eq!(CompactSet::from_json(&set.to_json()).unwrap(), set);
        assert!(CompactSet { balls: vec![] }.validate(d).is_err());
        assert!(CompactSet::ball(vec![0.0; 3], -1.0).validate(d).is_err());
        assert!(CompactSet::ball(vec![0.0; 2], 1.0).validate(d).is_err());
    }

    #[test]
    fn nonnegative_solver_on_small_system() {
        // Diagonal system: w = 1/diag, all positive.
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let (w, _, _) = solve_nonnegative(&g).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
        // Strong coupling forces the middle weight to zero: the unconstrained
        // solution of [[1, .8, .3], [.8, 1, .8], [.3, .8, 1]] w = 1 is (10, −15, 10).
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.8, 0.3, 0.8, 1.0, 0.8, 0.3, 0.8, 1.0]);
        let unconstrained = g.clone().cholesky().unwrap().solve(&DVector::from_element(3, 1.0));
        assert!(unconstrained[1] < 0.0);
        let (w, _, _) = solve_nonnegative(&g).unwrap();
        assert_eq!(w[1], 0.0);
        // w_0 = w_2 = 1/1.3 from the reduced system, and (Gw)_1 = 1.6/1.3 ≥ 1
        assert!((w[0] - 1.0 / 1.3).abs() < 1e-14 && (w[2] - 1.0 / 1.3).abs() < 1e-14);
        let y = &g * &w;
        assert!(y[1] >= 1.0);
    }
}
