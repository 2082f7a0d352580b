//! ε-solutions of `min { R̂(U) : U ∈ Φ }` and its ℓ1-constrained variant.
//!
//! `Φ` is the polyhedron of log parameters with per-facet bounds
//! `η_k ≤ u ≤ ν_k`, `|u|, |η_k|, |ν_k| ≤ 2 log M`, `Σ η_k ≥ −log M` and
//! `Σ ν_k ≤ log M`. The exponential terms of the risk are moved into
//! epigraph variables `exp(s) ≤ t`, which turns the problem into a linear
//! objective over a set with an explicit self-concordant barrier `F`.
//! [`solve_convex`] follows the central path `min τ f + F` with Newton
//! steps and backtracking, eliminating the epigraph variables by a Schur complement
//! so each step solves a system in `(U, η, ν)` only.
//!
//! Observations sharing an index are merged before solving; the risk only
//! depends on their count and value sum.
//!
//! Optimality is certified independently of the path by
//! [`check_epsilon_solution`]: for linear constraints `Az ≤ b` with slack
//! `s = b − Az` and any multipliers `λ ≥ 0`, convexity gives
//! `R̂(z) − R̂(z*) ≤ λ·s + Σ_j max_{z*_j} r_j (z_j − z*_j)` with
//! `r = ∇R̂ + Aᵀλ` and `z*_j` ranging over the box constraints. The multipliers start at the
//! log-barrier values `μ / s_i` and are then improved coordinatewise.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::complex::PartitionComplex;
use crate::error::{Error, Result};
use crate::factors::{FactorSet, Layout, LogFactorSet};
use crate::linalg::{self, Cholesky};
use crate::math::{self, neg_log};
use crate::risk::{self, ObservationSet};

/// Options shared by [`solve_convex`] and [`solve_sparse`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Target accuracy for the objective gap and constraint violation.
    pub epsilon: f64,
    /// Budget of Newton steps over all path-following stages.
    pub max_iterations: usize,
    /// Factor applied to the path parameter `τ` after each centering.
    pub barrier_mu_growth: f64,
    /// Bound `M`; `None` uses `max(2, 1.5 · max_i y_i)`.
    pub bound: Option<f64>,
    /// ℓ1 budget for [`solve_sparse`].
    pub lambda: Option<f64>,
    /// Seed carried for reproducibility records. The starting point is
    /// deterministic and always strictly feasible, so no draw is made.
    pub seed: u64,
    /// Largest Newton system solved by dense Cholesky; larger systems use
    /// preconditioned conjugate gradients.
    pub dense_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iterations: 1000,
            barrier_mu_growth: 10.0,
            bound: None,
            lambda: None,
            seed: 0,
            dense_limit: 2000,
        }
    }
}

impl SolveOptions {
    /// `M` to use for `obs`: the explicit bound or the data heuristic.
    pub fn resolve_bound(&self, obs: &ObservationSet) -> f64 {
        self.bound.unwrap_or_else(|| default_bound(obs))
    }

    /// Rejects nonsensical option values.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.barrier_mu_growth > 1.0 && self.barrier_mu_growth.is_finite()) {
            return Err(Error::Config(format!(
                "barrier growth must exceed 1, got {}",
                self.barrier_mu_growth
            )));
        }
        if let Some(m) = self.bound {
            if !(m > 1.0 && m.is_finite()) {
                return Err(Error::Config(format!("bound M must exceed 1, got {}", m)));
            }
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("lambda must be nonnegative, got {}", l)));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// `max(2, 1.5 · max_i y_i)`.
pub fn default_bound(obs: &ObservationSet) -> f64 {
    (1.5 * obs.max_y()).max(2.0)
}

/// One centering stage of the path-following method.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterIteration {
    /// Path parameter `τ`.
    pub tau: f64,
    /// Newton steps taken at this `τ`.
    pub newton_steps: usize,
    /// `R̂(U)` after centering.
    pub objective: f64,
    /// `τ f + F` before centering.
    pub merit_start: f64,
    /// `τ f + F` after centering.
    pub merit_end: f64,
    /// Last Newton decrement computed.
    pub decrement: f64,
    /// Certified optimality gap bound after centering.
    pub kkt_residual: f64,
}

/// Result of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Solution `U` with its auxiliaries `η`, `ν`.
    pub logparams: LogFactorSet,
    /// Cell-indexed magnitude bounds `|u_c| ≤ a_c` of the ℓ1 lift.
    pub magnitudes: Option<Vec<f64>>,
    /// `M` used.
    pub bound: f64,
    /// ℓ1 budget, if any.
    pub lambda: Option<f64>,
    /// `R̂(U)`.
    pub objective: f64,
    /// Certified bound on `R̂(U) − min R̂`.
    pub kkt_residual: f64,
    /// Largest constraint violation.
    pub feasibility_residual: f64,
    /// Newton steps taken.
    pub iterations: usize,
    /// Both residuals are at most `ε`.
    pub converged: bool,
    /// Fewer observations than facets.
    pub under_determined: bool,
    /// Cells no observation touches; they are held at `u = 0`.
    pub pinned_cells: Vec<usize>,
    /// Per-stage progress.
    pub trace: Vec<OuterIteration>,
}

impl SolveReport {
    /// `Θ = exp(U)`.
    pub fn factors(&self) -> Result<FactorSet> {
        self.logparams.exp_reparam(self.bound)
    }
}

/// Fits `U ∈ Φ` minimizing `R̂`. `opts.lambda` is ignored.
pub fn solve_convex(obs: &ObservationSet, complex: &PartitionComplex, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    solve(obs, complex, opts, None)
}

/// Fits `U ∈ Φ` with `Σ |u| ≤ λ` minimizing `R̂`; `opts.lambda` is required.
pub fn solve_sparse(obs: &ObservationSet, complex: &PartitionComplex, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let lambda = opts
        .lambda
        .ok_or_else(|| Error::Config("sparse solve needs lambda".into()))?;
    solve(obs, complex, opts, Some(lambda))
}

/// Recomputes the residuals of `report` and checks both are at most `ε`,
/// along with the residuals the report itself claims.
pub fn check_epsilon_solution(
    report: &SolveReport,
    obs: &ObservationSet,
    complex: &PartitionComplex,
    opts: &SolveOptions,
) -> bool {
    if report.logparams.layout().complex() != complex {
        return false;
    }
    let bound = opts.resolve_bound(obs);
    let lambda = report.lambda.or(opts.lambda);
    let Ok(res) = evaluate_solution(&report.logparams, report.magnitudes.as_deref(), obs, bound, lambda) else {
        return false;
    };
    let eps = opts.epsilon;
    res.kkt_residual <= eps
        && res.feasibility_residual <= eps
        && report.kkt_residual <= eps
        && report.feasibility_residual <= eps
}

/// Residuals of a candidate solution computed from scratch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionResiduals {
    /// `R̂(U)`.
    pub objective: f64,
    /// Bound on `R̂(U) − min R̂` over the feasible set.
    pub kkt_residual: f64,
    /// Largest constraint violation.
    pub feasibility_residual: f64,
}

/// Objective, certified gap bound and constraint violation of `U` (with its
/// auxiliaries) for the problem with bound `M` and optional ℓ1 budget.
/// Without `magnitudes`, the tight choice `a = |u|` is used. Cells that no
/// observation touches are held at their current values, matching the
/// pinning done by the solver.
pub fn evaluate_solution(
    logparams: &LogFactorSet,
    magnitudes: Option<&[f64]>,
    obs: &ObservationSet,
    bound: f64,
    lambda: Option<f64>,
) -> Result<SolutionResiduals> {
    let layout = logparams.layout();
    let rho = layout.rho();
    let m = layout.num_facets();
    let lm = math::ln(bound);
    let u = logparams.flat();
    let (eta, nu) = (logparams.lower(), logparams.upper());
    let a: Option<Vec<f64>> = lambda.map(|_| match magnitudes {
        Some(a) => a.to_vec(),
        None => u.iter().map(|&v| math::abs(v)).collect(),
    });
    if let Some(a) = &a {
        if a.len() != rho {
            return Err(Error::ShapeMismatch {
                expected: format!("{} magnitudes", rho),
                got: format!("{}", a.len()),
            });
        }
    }

    let objective = risk::empirical_risk(logparams, obs)?;
    let grad = layout.flatten(&risk::risk_gradient(logparams, obs)?);

    let mut feas = logparams.phi_violation(bound);
    if let (Some(lambda), Some(a)) = (lambda, &a) {
        for c in 0..rho {
            feas = feas.max(math::abs(u[c]) - a[c]);
        }
        feas = feas.max(a.iter().sum::<f64>() - lambda);
    }

    let mut touched = vec![false; rho];
    let mut cells = Vec::with_capacity(m);
    for r in obs.records() {
        cells.clear();
        layout.cells_into(&r.x, &mut cells);
        for &c in &cells {
            touched[c] = true;
        }
    }

    // Every linear constraint as a sparse row `A_i z ≤ b_i` with its slack.
    let nvars = rho + 2 * m + if a.is_some() { rho } else { 0 };
    let (ie, iv, ia) = (rho, rho + m, rho + 2 * m);
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(6 * rho + 4 * m + 3);
    // (z − lo, hi − z) for the box that contains every feasible point.
    let mut w = vec![(0.0, 0.0); nvars];
    let ubox = match lambda {
        Some(l) => l.min(2.0 * lm),
        None => 2.0 * lm,
    };
    // Row pairs whose sum cancels the shared variable.
    let mut pairs = Vec::with_capacity(3 * rho + 2 * m);
    for c in 0..rho {
        let k = layout.facet_of_cell(c);
        let base = rows.len();
        pairs.push((base, base + 1));
        pairs.push((base + 2, base + 3));
        if a.is_some() && touched[c] {
            pairs.push((base + 4, base + 5));
        }
        rows.push((vec![(c, -1.0), (ie + k, 1.0)], u[c] - eta[k]));
        rows.push((vec![(c, 1.0), (iv + k, -1.0)], nu[k] - u[c]));
        rows.push((vec![(c, 1.0)], 2.0 * lm - u[c]));
        rows.push((vec![(c, -1.0)], 2.0 * lm + u[c]));
        if !touched[c] {
            // Fixed coordinate: a zero-width box, and its ℓ1 rows are constants.
            continue;
        }
        w[c] = (u[c] + ubox, ubox - u[c]);
        if let Some(a) = &a {
            rows.push((vec![(c, 1.0), (ia + c, -1.0)], a[c] - u[c]));
            rows.push((vec![(c, -1.0), (ia + c, -1.0)], a[c] + u[c]));
        }
    }
    for k in 0..m {
        for (idx, val) in [(ie + k, eta[k]), (iv + k, nu[k])] {
            pairs.push((rows.len(), rows.len() + 1));
            rows.push((vec![(idx, 1.0)], 2.0 * lm - val));
            rows.push((vec![(idx, -1.0)], 2.0 * lm + val));
            w[idx] = (val + 2.0 * lm, 2.0 * lm - val);
        }
    }
    rows.push(((0..m).map(|k| (ie + k, -1.0)).collect(), lm + eta.iter().sum::<f64>()));
    rows.push(((0..m).map(|k| (iv + k, 1.0)).collect(), lm - nu.iter().sum::<f64>()));
    if let (Some(lambda), Some(a)) = (lambda, &a) {
        rows.push((
            (0..rho).filter(|&c| touched[c]).map(|c| (ia + c, 1.0)).collect(),
            lambda - a.iter().sum::<f64>(),
        ));
        for c in (0..rho).filter(|&c| touched[c]) {
            w[ia + c] = (a[c], lambda - a[c]);
        }
    }

    let mut g = vec![0.0; nvars];
    g[..rho].copy_from_slice(&grad);
    let kkt = if rows.iter().all(|r| r.1 > 0.0) {
        // Under the ℓ1 budget, ‖u − u*‖₁ ≤ ‖u‖₁ + λ and likewise for a.
        let radii = match (lambda, &a) {
            (Some(l), Some(a)) => vec![
                (0..rho, u.iter().map(|v| math::abs(*v)).sum::<f64>() + l),
                (ia..ia + rho, a.iter().map(|v| math::abs(*v)).sum::<f64>() + l),
            ],
            _ => Vec::new(),
        };
        dual_gap_bound(&g, &rows, &pairs, &w, &radii)
    } else {
        g.iter().zip(&w).map(|(gj, wj)| box_term(*gj, *wj)).sum()
    };
    Ok(SolutionResiduals {
        objective,
        kkt_residual: kkt,
        feasibility_residual: feas.max(0.0),
    })
}

/// `max { r (z − z*) : lo ≤ z* ≤ hi }` with `w = (z − lo, hi − z)`.
fn box_term(r: f64, w: (f64, f64)) -> f64 {
    if r > 0.0 {
        r * w.0
    } else {
        -r * w.1
    }
}

/// Right derivative in `δ` of `box_term(x + δ a, w)` at `δ = 0`.
fn box_slope(x: f64, a: f64, w: (f64, f64)) -> f64 {
    if x > 0.0 || (x == 0.0 && a > 0.0) {
        a * w.0
    } else {
        -a * w.1
    }
}

/// Bound `Σ_i λ_i s_i + Σ_j box_term(g_j + (Aᵀλ)_j)` for multipliers `λ ≥ 0`.
///
/// Starts from the barrier multipliers `λ_i = μ / s_i` with `μ` minimizing
/// the bound exactly, then lowers it by exact minimization along each `λ_i`
/// in turn and along `λ_i + λ_j` for each listed pair. Any `λ ≥ 0` gives a
/// valid bound, so the passes only tighten it;
/// they remove roundoff that the slacks of nearly active constraints put into
/// the barrier multipliers. A variable block with a known ℓ1 radius `ρ_B`
/// contributes at most `ρ_B max_B |r_j|`.
fn dual_gap_bound(
    g: &[f64],
    rows: &[(Vec<(usize, f64)>, f64)],
    pairs: &[(usize, usize)],
    w: &[(f64, f64)],
    radii: &[(Range<usize>, f64)],
) -> f64 {
    let mut h = vec![0.0; g.len()];
    for (entries, s) in rows {
        for &(j, v) in entries {
            h[j] += v / s;
        }
    }
    let mu = min_gap_bound(g, &h, w, rows.len() as f64);
    let mut lam: Vec<f64> = rows.iter().map(|(_, s)| mu / s).collect();
    let mut r = g.to_vec();
    for ((entries, _), l) in rows.iter().zip(&lam) {
        for &(j, v) in entries {
            r[j] += l * v;
        }
    }
    let merged: Vec<(Vec<(usize, f64)>, f64)> = pairs
        .iter()
        .map(|&(i, k)| {
            let mut e: Vec<(usize, f64)> = Vec::with_capacity(4);
            for &(j, v) in rows[i].0.iter().chain(&rows[k].0) {
                match e.iter_mut().find(|x| x.0 == j) {
                    Some(x) => x.1 += v,
                    None => e.push((j, v)),
                }
            }
            e.retain(|x| x.1 != 0.0);
            (e, rows[i].1 + rows[k].1)
        })
        .collect();
    let mut breaks = Vec::new();
    for _ in 0..3 {
        for (i, (entries, s)) in rows.iter().enumerate() {
            let delta = line_minimum(*s, entries, &r, w, -lam[i], &mut breaks);
            if delta != 0.0 {
                lam[i] += delta;
                for &(j, v) in entries {
                    r[j] += delta * v;
                }
            }
        }
        for (&(i, k), (entries, s)) in pairs.iter().zip(&merged) {
            let delta = line_minimum(*s, entries, &r, w, -lam[i].min(lam[k]), &mut breaks);
            if delta != 0.0 {
                lam[i] += delta;
                lam[k] += delta;
                for &(j, v) in entries {
                    r[j] += delta * v;
                }
            }
        }
    }
    let dual: f64 = rows.iter().zip(&lam).map(|((_, s), l)| l * s).sum();
    let weighted = |range: Range<usize>| -> f64 { range.map(|j| box_term(r[j], w[j])).sum() };
    let mut total = dual + weighted(0..r.len());
    for (range, radius) in radii {
        let box_part = weighted(range.clone());
        let linf = range.clone().map(|j| math::abs(r[j])).fold(0.0, f64::max);
        total -= box_part - box_part.min(radius * linf);
    }
    total
}

/// Minimizer over `δ ≥ lo` of `δ s + Σ_e box_term(r_j + δ a_e, w_j)`.
fn line_minimum(
    s: f64,
    entries: &[(usize, f64)],
    r: &[f64],
    w: &[(f64, f64)],
    lo: f64,
    breaks: &mut Vec<(f64, f64)>,
) -> f64 {
    breaks.clear();
    let mut slope = s;
    for &(j, a) in entries {
        if a == 0.0 {
            continue;
        }
        slope += box_slope(r[j] + lo * a, a, w[j]);
        let b = -r[j] / a;
        if b > lo {
            breaks.push((b, math::abs(a) * (w[j].0 + w[j].1)));
        }
    }
    if slope >= 0.0 {
        return lo;
    }
    breaks.sort_by(|x, y| x.0.total_cmp(&y.0));
    for &(b, jump) in breaks.iter() {
        slope += jump;
        if slope >= 0.0 {
            return b;
        }
    }
    lo
}

/// `μ ≥ 0` minimizing `μN + Σ_j box_term(g_j + μ h_j, w_j)`, a convex
/// piecewise-linear function.
fn min_gap_bound(g: &[f64], h: &[f64], w: &[(f64, f64)], ncons: f64) -> f64 {
    let mut slope = ncons;
    let mut breaks: Vec<(f64, f64)> = Vec::new();
    for ((&gj, &hj), &wj) in g.iter().zip(h).zip(w) {
        if hj == 0.0 {
            continue;
        }
        slope += box_slope(gj, hj, wj);
        let b = -gj / hj;
        if b > 0.0 {
            breaks.push((b, math::abs(hj) * (wj.0 + wj.1)));
        }
    }
    if slope >= 0.0 {
        return 0.0;
    }
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (b, jump) in breaks {
        slope += jump;
        if slope >= 0.0 {
            return b;
        }
    }
    0.0
}

struct Group {
    cells: Vec<usize>,
    /// `Y_g / n`
    ycoef: f64,
    /// `N_g / n`
    tcoef: f64,
}

struct Problem {
    layout: Layout,
    m: usize,
    rho: usize,
    facet_of: Vec<usize>,
    groups: Vec<Group>,
    bound: f64,
    lm: f64,
    lambda: Option<f64>,
    var_of: Vec<Option<usize>>,
    nfree: usize,
    dim: usize,
    nu_barrier: f64,
    dense_limit: usize,
}

#[derive(Clone)]
struct Point {
    u: Vec<f64>,
    eta: Vec<f64>,
    nu: Vec<f64>,
    a: Vec<f64>,
    t: Vec<f64>,
}

struct Direction {
    u: Vec<f64>,
    eta: Vec<f64>,
    nu: Vec<f64>,
    a: Vec<f64>,
    t: Vec<f64>,
    decrement: f64,
}

/// Sparse description of the reduced Newton matrix.
struct System {
    diag: Vec<f64>,
    pairs: Vec<(usize, usize, f64)>,
    blocks: Vec<(usize, usize, f64)>,
    data: Vec<(Vec<usize>, f64)>,
    rank1: Option<(Vec<f64>, f64)>,
}

impl System {
    fn dense(&self, dim: usize) -> Vec<f64> {
        let mut h = vec![0.0; dim * dim];
        for (i, &v) in self.diag.iter().enumerate() {
            h[i * dim + i] += v;
        }
        for &(i, j, v) in &self.pairs {
            h[i * dim + j] += v;
            h[j * dim + i] += v;
        }
        for &(lo, hi, v) in &self.blocks {
            for i in lo..hi {
                for j in lo..hi {
                    h[i * dim + j] += v;
                }
            }
        }
        for (vars, c) in &self.data {
            for &i in vars {
                for &j in vars {
                    h[i * dim + j] += c;
                }
            }
        }
        if let Some((w, c)) = &self.rank1 {
            for i in 0..dim {
                for j in 0..dim {
                    h[i * dim + j] += c * w[i] * w[j];
                }
            }
        }
        h
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (d, v)) in out.iter_mut().zip(self.diag.iter().zip(x)) {
            *o = d * v;
        }
        for &(i, j, v) in &self.pairs {
            out[i] += v * x[j];
            out[j] += v * x[i];
        }
        for &(lo, hi, v) in &self.blocks {
            let s: f64 = x[lo..hi].iter().sum();
            for o in &mut out[lo..hi] {
                *o += v * s;
            }
        }
        for (vars, c) in &self.data {
            let s: f64 = vars.iter().map(|&i| x[i]).sum();
            for &i in vars {
                out[i] += c * s;
            }
        }
        if let Some((w, c)) = &self.rank1 {
            let s = c * linalg::dot(w, x);
            for (o, wi) in out.iter_mut().zip(w) {
                *o += s * wi;
            }
        }
    }

    fn full_diag(&self) -> Vec<f64> {
        let mut d = self.diag.clone();
        for &(lo, hi, v) in &self.blocks {
            for x in &mut d[lo..hi] {
                *x += v;
            }
        }
        for (vars, c) in &self.data {
            for &i in vars {
                d[i] += c;
            }
        }
        if let Some((w, c)) = &self.rank1 {
            for (x, wi) in d.iter_mut().zip(w) {
                *x += c * wi * wi;
            }
        }
        d
    }
}

impl Problem {
    fn new(
        obs: &ObservationSet,
        complex: &PartitionComplex,
        bound: f64,
        lambda: Option<f64>,
        dense_limit: usize,
    ) -> Result<Self> {
        let layout = Layout::new(obs.shape().clone(), complex.clone())?;
        let m = layout.num_facets();
        let rho = layout.rho();
        let n = obs.len() as f64;
        let mut merged: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
        for r in obs.records() {
            let e = merged.entry(obs.shape().offset_unchecked(&r.x)).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += r.y;
        }
        let mut touched = vec![false; rho];
        let groups: Vec<Group> = merged
            .into_iter()
            .map(|(off, (count, ysum))| {
                let x = obs.shape().index_at(off);
                let mut cells = Vec::with_capacity(m);
                layout.cells_into(&x, &mut cells);
                for &c in &cells {
                    touched[c] = true;
                }
                Group {
                    cells,
                    ycoef: ysum / n,
                    tcoef: count as f64 / n,
                }
            })
            .collect();
        let mut var_of = vec![None; rho];
        let mut nfree = 0;
        for c in 0..rho {
            if touched[c] {
                var_of[c] = Some(nfree);
                nfree += 1;
            }
        }
        let sparse = lambda.is_some();
        let dim = nfree + 2 * m;
        let nu_barrier = (4 * groups.len() + 4 * rho + 4 * m + 2 + if sparse { 2 * nfree + 1 } else { 0 }) as f64;
        Ok(Self {
            facet_of: (0..rho).map(|c| layout.facet_of_cell(c)).collect(),
            layout,
            m,
            rho,
            groups,
            bound,
            lm: math::ln(bound),
            lambda,
            var_of,
            nfree,
            dim,
            nu_barrier,
            dense_limit,
        })
    }

    fn eta_var(&self, k: usize) -> usize {
        self.nfree + k
    }

    fn nu_var(&self, k: usize) -> usize {
        self.nfree + self.m + k
    }

    fn start(&self) -> Point {
        let m = self.m as f64;
        Point {
            u: vec![0.0; self.rho],
            eta: vec![-self.lm / (2.0 * m); self.m],
            nu: vec![self.lm / (2.0 * m); self.m],
            a: match self.lambda {
                Some(l) => vec![l / (2.0 * self.nfree.max(1) as f64); self.nfree],
                None => Vec::new(),
            },
            t: vec![(1.0 + self.bound) / 2.0; self.groups.len()],
        }
    }

    fn s(&self, pt: &Point, g: &Group) -> f64 {
        g.cells.iter().map(|&c| pt.u[c]).sum()
    }

    fn merit(&self, pt: &Point, tau: f64) -> f64 {
        let (mb, lm2) = (self.bound, 2.0 * self.lm);
        let mut f = 0.0;
        let mut bar = 0.0;
        for (g, grp) in self.groups.iter().enumerate() {
            let s = self.s(pt, grp);
            let t = pt.t[g];
            if !(t > 0.0) {
                return f64::INFINITY;
            }
            f += -grp.ycoef * s + grp.tcoef * t;
            bar += neg_log(math::ln(t) - s) + neg_log(t) + neg_log(mb - t) + neg_log(mb + t);
        }
        for c in 0..self.rho {
            let k = self.facet_of[c];
            let u = pt.u[c];
            bar += neg_log(u - pt.eta[k]) + neg_log(pt.nu[k] - u) + neg_log(lm2 - u) + neg_log(lm2 + u);
            if let (Some(_), Some(v)) = (self.lambda, self.var_of[c]) {
                bar += neg_log(pt.a[v] - u) + neg_log(pt.a[v] + u);
            }
        }
        for k in 0..self.m {
            for v in [pt.eta[k], pt.nu[k]] {
                bar += neg_log(lm2 - v) + neg_log(lm2 + v);
            }
        }
        bar += neg_log(self.lm + pt.eta.iter().sum::<f64>()) + neg_log(self.lm - pt.nu.iter().sum::<f64>());
        if let Some(l) = self.lambda {
            bar += neg_log(l - pt.a.iter().sum::<f64>());
        }
        if bar == f64::INFINITY || bar.is_nan() {
            return f64::INFINITY;
        }
        tau * f + bar
    }

    fn direction(&self, pt: &Point, tau: f64) -> Result<Direction> {
        let (mb, lm2) = (self.bound, 2.0 * self.lm);
        let dim = self.dim;
        let mut grad = vec![0.0; dim];
        let mut rhs_adj = vec![0.0; dim];
        let mut sys = System {
            diag: vec![0.0; dim],
            pairs: Vec::new(),
            blocks: Vec::new(),
            data: Vec::with_capacity(self.groups.len()),
            rank1: None,
        };
        // Magnitude block: gradient, diagonal, and coupling to its cell.
        let nf = if self.lambda.is_some() { self.nfree } else { 0 };
        let (mut ga, mut ha, mut hb) = (vec![0.0; nf], vec![0.0; nf], vec![0.0; nf]);

        let ng = self.groups.len();
        let (mut gt, mut hst, mut htt) = (vec![0.0; ng], vec![0.0; ng], vec![0.0; ng]);
        for (g, grp) in self.groups.iter().enumerate() {
            let s = self.s(pt, grp);
            let t = pt.t[g];
            let w = math::ln(t) - s;
            let a = 1.0 / (t * t * w * w);
            let h = a + 1.0 / (t * t * w) + 1.0 / (t * t) + 1.0 / ((mb - t) * (mb - t)) + 1.0 / ((mb + t) * (mb + t));
            hst[g] = -1.0 / (t * w * w);
            htt[g] = h;
            gt[g] = tau * grp.tcoef - 1.0 / (t * w) - 1.0 / t + 1.0 / (mb - t) - 1.0 / (mb + t);
            let e = -tau * grp.ycoef + 1.0 / w;
            let adj = -hst[g] * gt[g] / h;
            let c = (1.0 / (w * w)) * ((h - a) / h);
            let vars: Vec<usize> = grp.cells.iter().filter_map(|&cell| self.var_of[cell]).collect();
            for &v in &vars {
                grad[v] += e;
                rhs_adj[v] += adj;
            }
            sys.data.push((vars, c));
        }

        for c in 0..self.rho {
            let k = self.facet_of[c];
            let u = pt.u[c];
            let (ia, ib) = (1.0 / (u - pt.eta[k]), 1.0 / (pt.nu[k] - u));
            let (ie, iv) = (self.eta_var(k), self.nu_var(k));
            grad[ie] += ia;
            sys.diag[ie] += ia * ia;
            grad[iv] -= ib;
            sys.diag[iv] += ib * ib;
            let free = self.var_of[c];
            if let Some(v) = free {
                let (p, q) = (1.0 / (lm2 - u), 1.0 / (lm2 + u));
                grad[v] += -ia + ib + p - q;
                sys.diag[v] += ia * ia + ib * ib + p * p + q * q;
                sys.pairs.push((v, ie, -ia * ia));
                sys.pairs.push((v, iv, -ib * ib));
            }
            if let (Some(_), Some(v)) = (self.lambda, free) {
                let (sa, sb) = (1.0 / (pt.a[v] - u), 1.0 / (pt.a[v] + u));
                ga[v] = -sa - sb;
                ha[v] = sa * sa + sb * sb;
                hb[v] = -sa * sa + sb * sb;
                grad[v] += sa - sb;
                sys.diag[v] += sa * sa + sb * sb;
            }
        }
        for k in 0..self.m {
            for (idx, v) in [(self.eta_var(k), pt.eta[k]), (self.nu_var(k), pt.nu[k])] {
                let (p, q) = (1.0 / (lm2 - v), 1.0 / (lm2 + v));
                grad[idx] += p - q;
                sys.diag[idx] += p * p + q * q;
            }
        }
        let se = 1.0 / (self.lm + pt.eta.iter().sum::<f64>());
        let sn = 1.0 / (self.lm - pt.nu.iter().sum::<f64>());
        for k in 0..self.m {
            grad[self.eta_var(k)] -= se;
            grad[self.nu_var(k)] += sn;
        }
        sys.blocks.push((self.eta_var(0), self.eta_var(0) + self.m, se * se));
        sys.blocks.push((self.nu_var(0), self.nu_var(0) + self.m, sn * sn));
        // The magnitude block `diag(ha) + σ 11ᵀ` is eliminated by a Schur
        // complement, inverted with Sherman-Morrison.
        let mut sigma_coef = 0.0;
        if let Some(l) = self.lambda {
            let sl = 1.0 / (l - pt.a.iter().sum::<f64>());
            ga.iter_mut().for_each(|g| *g += sl);
            let sigma = sl * sl;
            let inv_sum: f64 = ha.iter().map(|h| 1.0 / h).sum();
            sigma_coef = sigma / (1.0 + sigma * inv_sum);
        }
        let a_solve = |r: &[f64]| -> Vec<f64> {
            let y: Vec<f64> = r.iter().zip(&ha).map(|(r, h)| r / h).collect();
            let s: f64 = y.iter().sum();
            y.iter().zip(&ha).map(|(y, h)| y - sigma_coef * s / h).collect()
        };

        let mut rhs: Vec<f64> = grad.iter().zip(&rhs_adj).map(|(g, a)| -(g + a)).collect();
        let ra: Vec<f64> = ga.iter().map(|g| -g).collect();
        if nf > 0 {
            let y = a_solve(&ra);
            let mut w = vec![0.0; dim];
            for v in 0..nf {
                rhs[v] -= hb[v] * y[v];
                sys.diag[v] -= hb[v] * hb[v] / ha[v];
                w[v] = hb[v] / ha[v];
            }
            sys.rank1 = Some((w, sigma_coef));
        }
        let dz = if dim <= self.dense_limit {
            Cholesky::new_shifted(&sys.dense(dim), dim)?.solve(&rhs)
        } else {
            let cg = linalg::conjugate_gradient(|x, out| sys.apply(x, out), &sys.full_diag(), &rhs, 1e-12, 20 * dim);
            if !cg.x.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical("conjugate gradient diverged".into()));
            }
            cg.x
        };
        if !dz.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("Newton system produced a non-finite step".into()));
        }

        let mut du = vec![0.0; self.rho];
        for c in 0..self.rho {
            if let Some(v) = self.var_of[c] {
                du[c] = dz[v];
            }
        }
        let mut dt = vec![0.0; ng];
        let mut lam2 = -linalg::dot(&grad, &dz);
        let da = if nf > 0 {
            let r: Vec<f64> = (0..nf).map(|v| ra[v] - hb[v] * dz[v]).collect();
            let da = a_solve(&r);
            lam2 -= linalg::dot(&ga, &da);
            da
        } else {
            Vec::new()
        };
        for (g, grp) in self.groups.iter().enumerate() {
            let ds: f64 = grp.cells.iter().map(|&c| du[c]).sum();
            dt[g] = (-gt[g] - hst[g] * ds) / htt[g];
            lam2 -= gt[g] * dt[g];
        }
        Ok(Direction {
            u: du,
            eta: dz[self.nfree..self.nfree + self.m].to_vec(),
            nu: dz[self.nfree + self.m..self.nfree + 2 * self.m].to_vec(),
            a: da,
            t: dt,
            decrement: math::sqrt(lam2.max(0.0)),
        })
    }

    /// Newton iterations at fixed `τ` until the decrement drops below `tol`,
    /// no acceptable step exists, or `budget` steps were taken.
    ///
    /// Outside the quadratic region steps are damped by backtracking on the
    /// merit. Inside it (decrement below 1/4) the full step is taken whenever
    /// it stays strictly feasible: the merit can no longer resolve the
    /// decrease there, while the decrement still contracts quadratically.
    fn center(&self, pt: &mut Point, tau: f64, tol: f64, budget: usize) -> Result<(usize, f64, f64, f64)> {
        let start = self.merit(pt, tau);
        let mut merit = start;
        let mut steps = 0;
        let mut dec = f64::INFINITY;
        let mut last_dec = f64::INFINITY;
        while steps < budget {
            let d = self.direction(pt, tau)?;
            dec = d.decrement;
            if dec <= tol || (dec < 0.25 && dec >= last_dec) {
                break;
            }
            last_dec = dec;
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = step(pt, &d, alpha);
                let mc = self.merit(&cand, tau);
                let armijo = mc <= merit - 1e-4 * alpha * dec * dec;
                let quadratic = dec < 0.25 && alpha == 1.0;
                if mc.is_finite() && (armijo || quadratic) {
                    accepted = Some((cand, mc));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((mut cand, mut mc)) = accepted else { break };
            let mut tuned = cand.clone();
            self.minimize_t(&mut tuned, tau);
            let mt = self.merit(&tuned, tau);
            if mt < mc {
                (cand, mc) = (tuned, mt);
            }
            steps += 1;
            let stalled = dec >= 0.25 && mc >= merit;
            *pt = cand;
            merit = mc;
            if stalled {
                break;
            }
        }
        Ok((steps, start, merit, dec))
    }

    /// Replaces each epigraph variable by the exact minimizer of the merit
    /// over it, found by bisection on the monotone derivative.
    fn minimize_t(&self, pt: &mut Point, tau: f64) {
        let mb = self.bound;
        for (g, grp) in self.groups.iter().enumerate() {
            let s = self.s(pt, grp);
            let slope =
                |t: f64| tau * grp.tcoef - 1.0 / (t * (math::ln(t) - s)) - 1.0 / t + 1.0 / (mb - t) - 1.0 / (mb + t);
            let (mut lo, mut hi) = (s, math::ln(mb));
            if !(lo < hi) {
                continue;
            }
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if slope(math::exp(mid)) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = math::exp(0.5 * (lo + hi));
            if math::ln(t) > s && t < mb {
                pt.t[g] = t;
            }
        }
    }

    /// Cell-indexed magnitudes; pinned cells carry none.
    fn cell_magnitudes(&self, pt: &Point) -> Vec<f64> {
        (0..self.rho).map(|c| self.var_of[c].map_or(0.0, |v| pt.a[v])).collect()
    }

    fn logparams(&self, pt: &Point) -> Result<LogFactorSet> {
        LogFactorSet::from_flat(self.layout.clone(), &pt.u, pt.eta.clone(), pt.nu.clone())
    }
}

fn step(pt: &Point, d: &Direction, alpha: f64) -> Point {
    let add = |x: &[f64], dx: &[f64]| x.iter().zip(dx).map(|(a, b)| a + alpha * b).collect();
    Point {
        u: add(&pt.u, &d.u),
        eta: add(&pt.eta, &d.eta),
        nu: add(&pt.nu, &d.nu),
        a: add(&pt.a, &d.a),
        t: add(&pt.t, &d.t),
    }
}

fn solve(
    obs: &ObservationSet,
    complex: &PartitionComplex,
    opts: &SolveOptions,
    lambda: Option<f64>,
) -> Result<SolveReport> {
    let bound = opts.resolve_bound(obs);
    if !(bound > 1.0 && bound.is_finite()) {
        return Err(Error::Config(format!("bound M must exceed 1, got {}", bound)));
    }
    let problem = Problem::new(obs, complex, bound, lambda, opts.dense_limit)?;
    let under_determined = obs.len() < problem.m;
    let pinned_cells: Vec<usize> = (0..problem.rho).filter(|&c| problem.var_of[c].is_none()).collect();

    if lambda == Some(0.0) {
        // The ℓ1 ball is the single point U = 0.
        let logparams = LogFactorSet::zeros(problem.layout.clone());
        let magnitudes = vec![0.0; problem.rho];
        let res = evaluate_solution(&logparams, Some(&magnitudes), obs, bound, lambda)?;
        return Ok(SolveReport {
            logparams,
            magnitudes: Some(magnitudes),
            bound,
            lambda,
            objective: res.objective,
            kkt_residual: res.kkt_residual,
            feasibility_residual: res.feasibility_residual,
            iterations: 0,
            converged: res.kkt_residual <= opts.epsilon && res.feasibility_residual <= opts.epsilon,
            under_determined,
            pinned_cells,
            trace: Vec::new(),
        });
    }

    let eps = opts.epsilon;
    let mut pt = problem.start();
    let mut tau = 1.0;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut best: Option<(SolutionResiduals, Point)> = None;
    let mut since_best = 0;
    loop {
        let tol = if problem.nu_barrier / tau <= eps { 1e-6 } else { 0.25 };
        let (steps, m0, m1, dec) = problem.center(&mut pt, tau, tol, opts.max_iterations - iterations)?;
        iterations += steps;
        let logparams = problem.logparams(&pt)?;
        let magnitudes = lambda.map(|_| problem.cell_magnitudes(&pt));
        let res = evaluate_solution(&logparams, magnitudes.as_deref(), obs, bound, lambda)?;
        trace.push(OuterIteration {
            tau,
            newton_steps: steps,
            objective: res.objective,
            merit_start: m0,
            merit_end: m1,
            decrement: dec,
            kkt_residual: res.kkt_residual,
        });
        let score = |r: &SolutionResiduals| r.kkt_residual.max(r.feasibility_residual);
        if best.as_ref().is_none_or(|(b, _)| score(&res) <= score(b)) {
            best = Some((res, pt.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let done = res.kkt_residual <= eps && res.feasibility_residual <= eps;
        // Once the path gap is below ε, a certificate that keeps failing to
        // improve is limited by roundoff in the slacks.
        let floor = problem.nu_barrier / tau <= eps && since_best >= 3;
        if done || floor || iterations >= opts.max_iterations || tau > 1e16 {
            break;
        }
        tau *= opts.barrier_mu_growth;
    }
    let (res, pt) = best.expect("at least one stage runs");
    let logparams = problem.logparams(&pt)?;
    Ok(SolveReport {
        logparams,
        magnitudes: lambda.map(|_| problem.cell_magnitudes(&pt)),
        bound,
        lambda,
        objective: res.objective,
        kkt_residual: res.kkt_residual,
        feasibility_residual: res.feasibility_residual,
        iterations,
        converged: res.kkt_residual <= eps && res.feasibility_residual <= eps,
        under_determined,
        pinned_cells,
        trace,
    })
}
