//! Random instances and independent oracles shared by the integration tests
//! and the acceptance harness.
#![allow(dead_code)]

use postensor_core::decompose::construct_exact_decomposition;
use postensor_core::risk::{
    empirical_risk, empirical_risk_theta, prediction_error, risk_gradient, squared_loss, MajorizationConstants,
};
use postensor_core::solver::{check_epsilon_solution, solve_convex, SolveOptions};
use postensor_core::{
    DenseTensor, FactorSet, Layout, LogFactorSet, MultiIndex, Observation, ObservationSet, PartitionComplex,
    TensorShape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random shape with `p` positions of size `min_dim..=4` and a random
/// partition of them into blocks of at most `max_block` positions.
pub fn random_layout(rng: &mut ChaCha8Rng, p: usize, max_block: usize, min_dim: usize) -> Layout {
    let dims: Vec<usize> = (0..p).map(|_| rng.random_range(min_dim..=4)).collect();
    let mut facets: Vec<Vec<usize>> = Vec::new();
    for pos in 1..=p {
        let open: Vec<usize> = (0..facets.len()).filter(|&k| facets[k].len() < max_block).collect();
        let pick = rng.random_range(0..=open.len());
        if pick == open.len() {
            facets.push(vec![pos]);
        } else {
            facets[open[pick]].push(pos);
        }
    }
    let complex = PartitionComplex::partition(facets, p).unwrap();
    Layout::new(TensorShape::new(dims).unwrap(), complex).unwrap()
}

/// Factors with entries in `[M^{-1/m}, M^{1/m}]`, so products stay in `[1/M, M]`.
pub fn random_omega(rng: &mut ChaCha8Rng, layout: Layout, bound: f64) -> FactorSet {
    let m = layout.num_facets() as f64;
    let factors = (0..layout.num_facets())
        .map(|k| {
            (0..layout.facet_size(k))
                .map(|_| bound.powf(rng.random_range(-1.0..=1.0) / m))
                .collect()
        })
        .collect();
    FactorSet::from_layout(layout, factors, bound).unwrap()
}

pub fn random_logs(rng: &mut ChaCha8Rng, layout: &Layout, half_width: f64) -> Vec<Vec<f64>> {
    (0..layout.num_facets())
        .map(|k| {
            (0..layout.facet_size(k))
                .map(|_| rng.random_range(-half_width..=half_width))
                .collect()
        })
        .collect()
}

pub fn random_index(rng: &mut ChaCha8Rng, shape: &TensorShape) -> MultiIndex {
    MultiIndex::new(shape.dims().iter().map(|&r| rng.random_range(1..=r)).collect()).unwrap()
}

pub fn random_observations(rng: &mut ChaCha8Rng, shape: &TensorShape, n: usize) -> ObservationSet {
    let records = (0..n)
        .map(|_| Observation {
            x: random_index(rng, shape),
            y: rng.random_range(0.2..4.0),
        })
        .collect();
    ObservationSet::new(shape.clone(), records).unwrap()
}

/// Outcome of one exact-construction instance.
pub struct ExactCase {
    pub max_relative_error: f64,
    pub factors_in_range: bool,
}

/// Builds a tensor from random factors over a random partition and
/// reconstructs it.
pub fn exact_construction_case(seed: u64) -> ExactCase {
    let mut rng = rng(seed);
    let p = rng.random_range(1..=5);
    let bound = rng.random_range(1.5..20.0);
    let layout = random_layout(&mut rng, p, p, 1);
    let complex = layout.complex().clone();
    let tensor = random_omega(&mut rng, layout, bound).to_dense();
    let fit = construct_exact_decomposition(&tensor, &complex, bound).unwrap();
    let max_relative_error = tensor
        .shape()
        .indices()
        .map(|x| {
            let want = tensor.get(&x).unwrap();
            (fit.eval(&x).unwrap() - want).abs() / want
        })
        .fold(0.0, f64::max);
    let (lo, hi) = (bound.powi(-2), bound.powi(2));
    let factors_in_range = fit
        .factors()
        .iter()
        .flatten()
        .all(|&v| v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
    ExactCase {
        max_relative_error,
        factors_in_range,
    }
}

/// Brute-force minimizer of the singleton-facet risk over Φ, written from
/// scratch: `z` concatenates one log vector per position and `y` is the
/// full tensor in row-major order.
pub struct GridOracle {
    pub dims: Vec<usize>,
    pub y: Vec<f64>,
    pub lm: f64,
}

impl GridOracle {
    fn split(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut at = 0;
        for &r in &self.dims {
            out.push(z[at..at + r].to_vec());
            at += r;
        }
        out
    }

    fn feasible(&self, z: &[f64]) -> bool {
        let u = self.split(z);
        let lo: f64 = u.iter().map(|v| v.iter().cloned().fold(f64::INFINITY, f64::min)).sum();
        let hi: f64 = u
            .iter()
            .map(|v| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .sum();
        z.iter().all(|v| v.abs() <= 2.0 * self.lm) && lo >= -self.lm && hi <= self.lm
    }

    fn risk(&self, z: &[f64]) -> f64 {
        let u = self.split(z);
        let p = self.dims.len();
        let mut sum = 0.0;
        for (o, &y) in self.y.iter().enumerate() {
            let mut rest = o;
            let mut s = 0.0;
            for i in (0..p).rev() {
                s += u[i][rest % self.dims[i]];
                rest /= self.dims[i];
            }
            sum += -y * s + s.exp();
        }
        sum / self.y.len() as f64
    }

    /// Best grid point with `points` values per coordinate, refined by
    /// pattern search over coordinate and pairwise-diagonal directions.
    pub fn minimize(&self, points: usize) -> f64 {
        let d: usize = self.dims.iter().sum();
        let grid: Vec<f64> = (0..points)
            .map(|i| -2.0 * self.lm + 4.0 * self.lm * i as f64 / (points - 1) as f64)
            .collect();
        let mut best = (f64::INFINITY, vec![0.0; d]);
        let mut idx = vec![0usize; d];
        loop {
            let z: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
            if self.feasible(&z) {
                let r = self.risk(&z);
                if r < best.0 {
                    best = (r, z);
                }
            }
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < points {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }

        let mut dirs = Vec::new();
        for i in 0..d {
            for s in [-1.0, 1.0] {
                let mut e = vec![0.0; d];
                e[i] = s;
                dirs.push(e);
            }
            for j in i + 1..d {
                for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut e = vec![0.0; d];
                    e[i] = si;
                    e[j] = sj;
                    dirs.push(e);
                }
            }
        }
        let (mut fx, mut x) = best;
        let mut step = grid[1] - grid[0];
        while step > 1e-10 {
            let mut moved = false;
            for e in &dirs {
                let cand: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + step * b).collect();
                if self.feasible(&cand) {
                    let fc = self.risk(&cand);
                    if fc < fx {
                        fx = fc;
                        x = cand;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        fx
    }
}

/// Outcome of one solver-versus-oracle instance.
pub struct OracleCase {
    pub solver: f64,
    pub oracle: f64,
    pub certificate: f64,
    pub epsilon_solution: bool,
}

/// Noiseless exhaustive instance on `2×2` (even seeds) or `2×2×2` (odd
/// seeds) with singleton facets and `M = 3`.
pub fn oracle_case(seed: u64) -> OracleCase {
    let bound = 3.0;
    let opts = SolveOptions {
        bound: Some(bound),
        ..SolveOptions::default()
    };
    let mut rng = rng(seed);
    let dims: Vec<usize> = if seed.is_multiple_of(2) {
        vec![2, 2]
    } else {
        vec![2, 2, 2]
    };
    let shape = TensorShape::new(dims.clone()).unwrap();
    let tensor = DenseTensor::from_fn(shape, |_| rng.random_range(0.5..2.0));
    let obs = ObservationSet::exhaustive(&tensor).unwrap();
    let complex = PartitionComplex::singletons(dims.len());
    let report = solve_convex(&obs, &complex, &opts).unwrap();
    let oracle = GridOracle {
        dims: dims.clone(),
        y: tensor.entries().to_vec(),
        lm: bound.ln(),
    };
    OracleCase {
        solver: report.objective,
        oracle: oracle.minimize(if dims.len() == 2 { 21 } else { 9 }),
        certificate: report.kkt_residual,
        epsilon_solution: report.converged && check_epsilon_solution(&report, &obs, &complex, &opts),
    }
}

/// Largest relative deviation of the analytic gradient from central
/// differences at one random point.
pub fn gradient_case(rng: &mut ChaCha8Rng, case: usize) -> f64 {
    let cases: [(Vec<usize>, Vec<Vec<usize>>); 3] = [
        (vec![2, 3, 2], vec![vec![1, 2], vec![3]]),
        (vec![3, 3], vec![vec![1], vec![2]]),
        (vec![2, 2, 3, 2], vec![vec![1, 3], vec![2], vec![4]]),
    ];
    let (dims, facets) = &cases[case % cases.len()];
    let shape = TensorShape::new(dims.clone()).unwrap();
    let complex = PartitionComplex::partition(facets.clone(), dims.len()).unwrap();
    let layout = Layout::new(shape.clone(), complex).unwrap();
    let obs = random_observations(rng, &shape, 30);
    let values = random_logs(rng, &layout, 0.7);
    let g = risk_gradient(&LogFactorSet::with_tight_bounds(layout.clone(), values.clone()), &obs).unwrap();
    let h = 1e-6;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for k in 0..values.len() {
        for c in 0..values[k].len() {
            let eval = |delta: f64| {
                let mut v = values.clone();
                v[k][c] += delta;
                empirical_risk(&LogFactorSet::with_tight_bounds(layout.clone(), v), &obs).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            num = num.max((fd - g[k][c]).abs());
            den = den.max(g[k][c].abs());
        }
    }
    num / den
}

/// Prediction error of a singleton fit to a noiseless, fully observed
/// random rank-1 tensor with `p ≤ 4`, `r ≤ 4`, with `M` just large enough
/// that every entry lies in `[1/M, M]`.
pub fn rank_one_case(rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let p = rng.random_range(2..=4);
    let dims: Vec<usize> = (0..p).map(|_| rng.random_range(2..=4)).collect();
    let vectors: Vec<Vec<f64>> = dims
        .iter()
        .map(|&r| (0..r).map(|_| rng.random_range(0.6..1.6)).collect())
        .collect();
    let shape = TensorShape::new(dims.clone()).unwrap();
    let tensor = DenseTensor::from_fn(shape, |x| (0..p).map(|i| vectors[i][x.coord(i + 1) - 1]).product());
    let obs = ObservationSet::exhaustive(&tensor).unwrap();
    let opts = SolveOptions {
        bound: Some(tensor.max().max(1.0 / tensor.min()).max(2.0)),
        ..SolveOptions::default()
    };
    let report = solve_convex(&obs, &PartitionComplex::singletons(p), &opts).unwrap();
    (dims, prediction_error(&tensor, &report.factors().unwrap()).unwrap())
}

/// Checks `a_l L̂ + b_l ≤ R̂ ≤ a_u L̂ + b_u` on one random instance whose
/// measurements and products lie in `[1/(μM), μM]`.
pub fn majorization_case(rng: &mut ChaCha8Rng) -> bool {
    let p = rng.random_range(2..=4);
    let dims: Vec<usize> = (0..p).map(|_| rng.random_range(2..=3)).collect();
    let shape = TensorShape::new(dims.clone()).unwrap();
    let bound: f64 = rng.random_range(1.5..4.0);
    let delta: f64 = rng.random_range(0.05..0.5);
    let mu = 1.0 / (1.0 - delta);
    let psi = DenseTensor::from_fn(shape.clone(), |_| bound.powf(rng.random_range(-1.0..1.0)));
    let records = (0..40)
        .map(|_| {
            let x = random_index(rng, &shape);
            let y = psi.get(&x).unwrap() * rng.random_range(1.0 - delta..1.0 + delta);
            Observation { x, y }
        })
        .collect();
    let obs = ObservationSet::new(shape.clone(), records).unwrap();
    let layout = random_layout(rng, p, 2, 1);
    let layout = Layout::new(shape, layout.complex().clone()).unwrap();
    let theta = random_omega(rng, layout, bound);
    let c = MajorizationConstants::new(mu * bound);
    let r = empirical_risk_theta(&theta, &obs).unwrap();
    let l = squared_loss(&theta, &obs).unwrap();
    c.a_l * l + c.b_l <= r && r <= c.a_u * l + c.b_u
}
