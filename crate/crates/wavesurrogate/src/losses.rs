//! Loss terms and weighting schemes.
//!
//! Data loss (slice-wise MSE), its error-sensitive variant (each time slice
//! penalized only for the part of its L2 distance to the inexact data that
//! exceeds the certified bound ε(t)), PDE-residual interior loss, tagged
//! boundary/initial loss, and the EQUAL/LRA/OPT weighting schemes.

use crate::analytic::{trapezoid_weights, GridFunction, WaveProblem};
use crate::network::engine::{self, BlockWorkspace, CH, LANES};
use crate::network::NetworkParams;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("negative error bound ε(t_{index}) = {value}")]
    NegativeEpsilon { index: usize, value: f64 },
    #[error("characteristic magnitude M_{name} = {value} is not positive after flooring")]
    NonPositiveMagnitude { name: &'static str, value: f64 },
    #[error("error-sensitive mode needs ε on the data grid")]
    MissingEpsilon,
}

/// Condition tag for a boundary/initial collocation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// `Φ(0, ξ) = u₀(ξ)`
    InitialDisplacement,
    /// `∂_t Φ(0, ξ) = 0`
    InitialVelocity,
    /// `Φ(t, ±1) = 0`
    Lateral,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub t: f64,
    pub xi: f64,
    pub kind: BoundaryKind,
    pub target: f64,
}

/// Equidistant space–time data grid with targets and per-time error bounds.
/// `epsilon ≡ 0` means fully trusted data.
#[derive(Debug, Clone)]
pub struct DataGrid {
    pub t_nodes: Vec<f64>,
    pub xi_nodes: Vec<f64>,
    /// Row-major `n_t × n_ξ` targets yᵢⱼ.
    pub targets: Vec<f64>,
    /// ε(tᵢ), one entry per time slice.
    pub epsilon: Vec<f64>,
    /// |Ω_ξ|, needed to convert ε to the slice scale ε/|Ω_ξ|^{1/2}.
    pub xi_domain_len: f64,
}

impl DataGrid {
    pub fn n_t(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn n_xi(&self) -> usize {
        self.xi_nodes.len()
    }

    pub fn n_points(&self) -> usize {
        self.targets.len()
    }
}

/// All collocation sets one training run samples its losses on.
#[derive(Debug, Clone)]
pub struct CollocationSets {
    pub interior: Vec<(f64, f64)>,
    pub boundary: Vec<BoundaryPoint>,
    pub data: Option<DataGrid>,
}

/// Uniform random interior points in Ω, seeded by the caller's RNG.
pub fn sample_interior<R: Rng>(problem: &WaveProblem, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| {
            (
                rng.gen_range(problem.t_domain.0..problem.t_domain.1),
                rng.gen_range(problem.xi_domain.0..problem.xi_domain.1),
            )
        })
        .collect()
}

/// Equidistant boundary/initial points, split as evenly as possible across
/// initial-displacement, initial-velocity and lateral (half per wall).
pub fn boundary_points(problem: &WaveProblem, n_b: usize) -> Vec<BoundaryPoint> {
    let base = n_b / 3;
    let rem = n_b % 3;
    let n_disp = base + usize::from(rem >= 1);
    let n_vel = base + usize::from(rem >= 2);
    let n_lat = n_b - n_disp - n_vel;
    let mut pts = Vec::with_capacity(n_b);
    let (xi0, xi1) = problem.xi_domain;
    let (t0, t1) = problem.t_domain;
    for i in 0..n_disp {
        let xi = xi0 + (xi1 - xi0) * i as f64 / (n_disp - 1).max(1) as f64;
        pts.push(BoundaryPoint {
            t: t0,
            xi,
            kind: BoundaryKind::InitialDisplacement,
            target: problem.initial_bump(xi),
        });
    }
    for i in 0..n_vel {
        let xi = xi0 + (xi1 - xi0) * i as f64 / (n_vel - 1).max(1) as f64;
        pts.push(BoundaryPoint {
            t: t0,
            xi,
            kind: BoundaryKind::InitialVelocity,
            target: 0.0,
        });
    }
    let n_left = n_lat / 2 + n_lat % 2;
    let n_right = n_lat / 2;
    for (count, wall) in [(n_left, xi0), (n_right, xi1)] {
        for i in 0..count {
            let t = t0 + (t1 - t0) * i as f64 / (count - 1).max(1) as f64;
            pts.push(BoundaryPoint {
                t,
                xi: wall,
                kind: BoundaryKind::Lateral,
                target: 0.0,
            });
        }
    }
    pts
}

/// Cell-center nodes of an `n_t × n_ξ` equidistant interior grid; excludes
/// t = 0 and ξ = ±1 so the boundary conditions are not double-counted.
pub fn data_grid_nodes(problem: &WaveProblem, n_t: usize, n_xi: usize) -> (Vec<f64>, Vec<f64>) {
    let (t0, t1) = problem.t_domain;
    let (x0, x1) = problem.xi_domain;
    let dt = (t1 - t0) / n_t as f64;
    let dx = (x1 - x0) / n_xi as f64;
    let t_nodes = (0..n_t).map(|i| t0 + (i as f64 + 0.5) * dt).collect();
    let xi_nodes = (0..n_xi).map(|j| x0 + (j as f64 + 0.5) * dx).collect();
    (t_nodes, xi_nodes)
}

/// Data grid with targets from the analytic solution (exact-data enrichment),
/// ε ≡ 0.
pub fn exact_data_grid(problem: &WaveProblem, n_t: usize, n_xi: usize) -> DataGrid {
    let (t_nodes, xi_nodes) = data_grid_nodes(problem, n_t, n_xi);
    let mut targets = Vec::with_capacity(n_t * n_xi);
    for &t in &t_nodes {
        for &xi in &xi_nodes {
            targets.push(problem.exact_solution(t, xi));
        }
    }
    DataGrid {
        t_nodes,
        xi_nodes,
        targets,
        epsilon: vec![0.0; n_t],
        xi_domain_len: problem.xi_len(),
    }
}

/// Data grid with targets interpolated from a surrogate field and ε mapped
/// from the certificate times by linear interpolation.
pub fn surrogate_data_grid(
    problem: &WaveProblem,
    surrogate: &crate::rom::CertifiedSurrogate,
    n_t: usize,
    n_xi: usize,
    error_sensitive: bool,
) -> DataGrid {
    let (t_nodes, xi_nodes) = data_grid_nodes(problem, n_t, n_xi);
    let mut targets = Vec::with_capacity(n_t * n_xi);
    for &t in &t_nodes {
        for &xi in &xi_nodes {
            targets.push(surrogate.rom_solution.interpolate(t, xi));
        }
    }
    let epsilon = if error_sensitive {
        t_nodes.iter().map(|&t| surrogate.epsilon_at(t)).collect()
    } else {
        vec![0.0; n_t]
    };
    DataGrid {
        t_nodes,
        xi_nodes,
        targets,
        epsilon,
        xi_domain_len: problem.xi_len(),
    }
}

/// Loss weights λ_D, λ_I, λ_B and the scheme that produced them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub data: f64,
    pub interior: f64,
    pub boundary: f64,
    pub scheme: WeightScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    Equal,
    Lra,
    Opt,
}

impl LossWeights {
    pub fn equal() -> Self {
        LossWeights {
            data: 1.0,
            interior: 1.0,
            boundary: 1.0,
            scheme: WeightScheme::Equal,
        }
    }

    /// LRA starts from equal weights with λ_I pinned to 1.
    pub fn lra_initial() -> Self {
        LossWeights {
            scheme: WeightScheme::Lra,
            ..Self::equal()
        }
    }
}

/// Characteristic magnitudes M_j of the three loss terms.
#[derive(Debug, Clone, Copy)]
pub struct Magnitudes {
    pub data: f64,
    pub interior: f64,
    pub boundary: f64,
}

/// `λ_j = (Σ_k M_j / M_k)⁻¹`: weights sum to one and λ_j·M_j is constant.
pub fn opt_weights(m: Magnitudes) -> Result<LossWeights, LossError> {
    for (name, value) in [
        ("D", m.data),
        ("I", m.interior),
        ("B", m.boundary),
    ] {
        if !(value > 0.0) {
            return Err(LossError::NonPositiveMagnitude { name, value });
        }
    }
    let lambda = |mj: f64| 1.0 / (mj / m.data + mj / m.interior + mj / m.boundary);
    Ok(LossWeights {
        data: lambda(m.data),
        interior: lambda(m.interior),
        boundary: lambda(m.boundary),
        scheme: WeightScheme::Opt,
    })
}

/// Characteristic magnitudes from a reference field:
/// `M_D = ‖u‖²/|Ω|`, `M_I = (‖∂²_t u‖² + ‖∂²_ξ u‖²)/|Ω|` with 4th-order
/// finite differences on the reference grid (one-sided at the edges), and
/// `M_B` the mean squared boundary/initial target. Each is floored at
/// `1e-12 · max(M_D, M_I, M_B)`.
pub fn characteristic_magnitudes(reference: &GridFunction, boundary: &[BoundaryPoint]) -> Magnitudes {
    let wt = trapezoid_weights(&reference.t_nodes);
    let wx = trapezoid_weights(&reference.xi_nodes);
    let n_t = reference.n_t();
    let n_xi = reference.n_xi();
    let area: f64 = (reference.t_nodes[n_t - 1] - reference.t_nodes[0])
        * (reference.xi_nodes[n_xi - 1] - reference.xi_nodes[0]);

    let mut m_d = 0.0;
    for i in 0..n_t {
        for j in 0..n_xi {
            let v = reference.value(i, j);
            m_d += wt[i] * wx[j] * v * v;
        }
    }
    m_d /= area;

    let ht = reference.t_nodes[1] - reference.t_nodes[0];
    let hx = reference.xi_nodes[1] - reference.xi_nodes[0];
    let mut m_i = 0.0;
    for i in 0..n_t {
        for j in 0..n_xi {
            let dtt = fd_second(|k| reference.value(k, j), i, n_t, ht);
            let dxx = fd_second(|k| reference.value(i, k), j, n_xi, hx);
            m_i += wt[i] * wx[j] * (dtt * dtt + dxx * dxx);
        }
    }
    m_i /= area;

    let m_b = if boundary.is_empty() {
        0.0
    } else {
        boundary.iter().map(|p| p.target * p.target).sum::<f64>() / boundary.len() as f64
    };

    let floor = 1e-12 * m_d.max(m_i).max(m_b);
    Magnitudes {
        data: m_d.max(floor),
        interior: m_i.max(floor),
        boundary: m_b.max(floor),
    }
}

/// 4th-order second derivative along one axis, one-sided stencils at the
/// edges so the full domain contributes.
fn fd_second(f: impl Fn(usize) -> f64, i: usize, n: usize, h: f64) -> f64 {
    assert!(n >= 6, "4th-order stencils need at least 6 nodes");
    let num = if i >= 2 && i + 2 < n {
        -f(i - 2) + 16.0 * f(i - 1) - 30.0 * f(i) + 16.0 * f(i + 1) - f(i + 2)
    } else if i < 2 {
        let o = i; // 0 or 1
        let c: [f64; 6] = if o == 0 {
            [15.0 / 4.0, -77.0 / 6.0, 107.0 / 6.0, -13.0, 61.0 / 12.0, -5.0 / 6.0]
        } else {
            [5.0 / 6.0, -5.0 / 4.0, -1.0 / 3.0, 7.0 / 6.0, -1.0 / 2.0, 1.0 / 12.0]
        };
        let mut acc = 0.0;
        for (k, &ck) in c.iter().enumerate() {
            acc += ck * f(k);
        }
        acc * 12.0
    } else {
        // mirror of the low edge
        let o = n - 1 - i;
        let c: [f64; 6] = if o == 0 {
            [15.0 / 4.0, -77.0 / 6.0, 107.0 / 6.0, -13.0, 61.0 / 12.0, -5.0 / 6.0]
        } else {
            [5.0 / 6.0, -5.0 / 4.0, -1.0 / 3.0, 7.0 / 6.0, -1.0 / 2.0, 1.0 / 12.0]
        };
        let mut acc = 0.0;
        for (k, &ck) in c.iter().enumerate() {
            acc += ck * f(n - 1 - k);
        }
        acc * 12.0
    };
    num / (12.0 * h * h)
}

/// LRA statistics of one epoch's unweighted per-term gradients.
#[derive(Debug, Clone)]
pub struct TermGradients<'a> {
    pub data: Option<&'a [f64]>,
    pub interior: &'a [f64],
    pub boundary: &'a [f64],
}

/// Learning-rate-annealing weight update: with λ_I pinned to 1,
/// `λ̂_j = max|∇l_I| / mean|∇(λ_j l_j)|` and
/// `λ_j ← (1 − rate)·λ_j + rate·λ̂_j`. Terms whose scaled gradient mean is
/// zero are skipped.
pub fn lra_update(current: &mut LossWeights, grads: &TermGradients, rate: f64) {
    current.interior = 1.0;
    let max_i = grads
        .interior
        .iter()
        .fold(0.0_f64, |acc, g| acc.max(g.abs()));
    let mean_abs = |g: &[f64], lambda: f64| {
        if g.is_empty() {
            0.0
        } else {
            lambda.abs() * g.iter().map(|x| x.abs()).sum::<f64>() / g.len() as f64
        }
    };
    if let Some(gd) = grads.data {
        let m = mean_abs(gd, current.data);
        if m > 0.0 {
            current.data = (1.0 - rate) * current.data + rate * (max_i / m);
        }
    }
    let mb = mean_abs(grads.boundary, current.boundary);
    if mb > 0.0 {
        current.boundary = (1.0 - rate) * current.boundary + rate * (max_i / mb);
    }
}

/// Whether the data term is the plain MSE or the error-sensitive form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataLossMode {
    Plain,
    ErrorSensitive,
}

const PAR_CHUNK: usize = 1024;

/// Mean squared PDE residual `(∂²_t Φ − ∂²_ξ Φ)²` over the interior points.
pub fn interior_loss(params: &NetworkParams, interior: &[(f64, f64)]) -> f64 {
    interior_term(params, interior, None)
}

/// As [`interior_loss`], also accumulating the θ-gradient.
pub fn interior_loss_with_grad(params: &NetworkParams, interior: &[(f64, f64)]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.n_params()];
    let loss = interior_term(params, interior, Some(&mut grad));
    (loss, grad)
}

fn interior_term(
    params: &NetworkParams,
    interior: &[(f64, f64)],
    grad: Option<&mut Vec<f64>>,
) -> f64 {
    if interior.is_empty() {
        return 0.0;
    }
    let layout = params.layout();
    let n = interior.len();
    let need_grad = grad.is_some();
    // fixed chunks with an ordered combine keep the reduction deterministic
    // for any worker count
    let partials: Vec<(f64, Option<Vec<f64>>)> = interior
        .par_chunks(PAR_CHUNK)
        .map(|chunk| {
            let mut ws = BlockWorkspace::new(&layout);
            let mut local = need_grad.then(|| vec![0.0; layout.n_params]);
            let mut sum = 0.0;
            for block in chunk.chunks(LANES) {
                let mut tb = [block[0].0; LANES];
                let mut xb = [block[0].1; LANES];
                for (l, &(t, xi)) in block.iter().enumerate() {
                    tb[l] = t;
                    xb[l] = xi;
                }
                let jets = engine::forward_block(&params.theta, &layout, &mut ws, &tb, &xb, CH);
                let mut seeds = [[0.0; LANES]; CH];
                for l in 0..block.len() {
                    let r = jets[3][l] - jets[4][l];
                    sum += r * r;
                    seeds[3][l] = 2.0 * r;
                    seeds[4][l] = -2.0 * r;
                }
                if let Some(g) = local.as_mut() {
                    engine::backward_block(&params.theta, &layout, &mut ws, &seeds, CH, g);
                }
            }
            (sum, local)
        })
        .collect();
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    if let Some(g) = grad {
        for (s, local) in partials {
            total += s;
            let local = local.expect("gradient requested");
            for (gi, li) in g.iter_mut().zip(&local) {
                *gi += li;
            }
        }
        g.iter_mut().for_each(|x| *x *= inv_n);
    } else {
        for (s, _) in partials {
            total += s;
        }
    }
    total * inv_n
}

/// Mean over the tagged boundary/initial points of the squared condition
/// residual: `(Φ − u₀)²`, `(∂_t Φ)²`, or `Φ²` by tag.
pub fn boundary_loss(params: &NetworkParams, boundary: &[BoundaryPoint]) -> f64 {
    boundary_term(params, boundary, None)
}

pub fn boundary_loss_with_grad(
    params: &NetworkParams,
    boundary: &[BoundaryPoint],
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.n_params()];
    let loss = boundary_term(params, boundary, Some(&mut grad));
    (loss, grad)
}

fn boundary_term(
    params: &NetworkParams,
    boundary: &[BoundaryPoint],
    grad: Option<&mut Vec<f64>>,
) -> f64 {
    if boundary.is_empty() {
        return 0.0;
    }
    let layout = params.layout();
    let need_grad = grad.is_some();
    // group by tag so each lane block shares its channel count; summation is
    // tag-major, order within a tag preserved
    let mut groups: [Vec<(f64, f64, f64)>; 3] = Default::default();
    for p in boundary {
        let slot = match p.kind {
            BoundaryKind::InitialDisplacement => 0,
            BoundaryKind::InitialVelocity => 1,
            BoundaryKind::Lateral => 2,
        };
        groups[slot].push((p.t, p.xi, p.target));
    }
    let inv_n = 1.0 / boundary.len() as f64;
    let mut total = 0.0;
    let mut total_grad = need_grad.then(|| vec![0.0; layout.n_params]);
    for (slot, pts) in groups.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let (n_ch, channel) = if slot == 1 { (2, 1) } else { (1, 0) };
        let partials: Vec<(f64, Option<Vec<f64>>)> = pts
            .par_chunks(PAR_CHUNK)
            .map(|chunk| {
                let mut ws = BlockWorkspace::new(&layout);
                let mut local = need_grad.then(|| vec![0.0; layout.n_params]);
                let mut sum = 0.0;
                for block in chunk.chunks(LANES) {
                    let mut tb = [block[0].0; LANES];
                    let mut xb = [block[0].1; LANES];
                    for (l, &(t, xi, _)) in block.iter().enumerate() {
                        tb[l] = t;
                        xb[l] = xi;
                    }
                    let jets =
                        engine::forward_block(&params.theta, &layout, &mut ws, &tb, &xb, n_ch);
                    let mut seeds = [[0.0; LANES]; CH];
                    for (l, &(_, _, target)) in block.iter().enumerate() {
                        let r = jets[channel][l] - target;
                        sum += r * r;
                        seeds[channel][l] = 2.0 * r;
                    }
                    if let Some(g) = local.as_mut() {
                        engine::backward_block(&params.theta, &layout, &mut ws, &seeds, n_ch, g);
                    }
                }
                (sum, local)
            })
            .collect();
        for (s, local) in partials {
            total += s;
            if let Some(g) = total_grad.as_mut() {
                for (gi, li) in g.iter_mut().zip(&local.expect("gradient requested")) {
                    *gi += li;
                }
            }
        }
    }
    if let Some(g) = grad {
        let acc = total_grad.expect("gradient requested");
        for (gi, ai) in g.iter_mut().zip(&acc) {
            *gi += ai * inv_n;
        }
    }
    total * inv_n
}

/// Plain equidistant data loss
/// `l_D = (1/n_t) Σ_i (1/n_ξ) Σ_j |Φ(t_i, ξ_j) − y_ij|²` — the slice-wise
/// form, equal to the plain MSE over all grid points.
pub fn data_loss(params: &NetworkParams, grid: &DataGrid) -> f64 {
    data_term(params, grid, DataLossMode::Plain, None).expect("plain mode has no failure path")
}

pub fn data_loss_with_grad(params: &NetworkParams, grid: &DataGrid) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.n_params()];
    let loss = data_term(params, grid, DataLossMode::Plain, Some(&mut grad)).unwrap();
    (loss, grad)
}

/// Error-sensitive data loss
/// `l_{D,ES} = (1/n_t) Σ_i ReLu(i_ξ(t_i) − ε(t_i)/|Ω_ξ|^{1/2})²`; a slice
/// inside its ε-tube contributes neither loss nor gradient (subgradient 0 at
/// the kink). With ε ≡ 0 this equals [`data_loss`] exactly.
pub fn error_sensitive_data_loss(params: &NetworkParams, grid: &DataGrid) -> Result<f64, LossError> {
    data_term(params, grid, DataLossMode::ErrorSensitive, None)
}

pub fn error_sensitive_data_loss_with_grad(
    params: &NetworkParams,
    grid: &DataGrid,
) -> Result<(f64, Vec<f64>), LossError> {
    let mut grad = vec![0.0; params.n_params()];
    let loss = data_term(params, grid, DataLossMode::ErrorSensitive, Some(&mut grad))?;
    Ok((loss, grad))
}

fn data_term(
    params: &NetworkParams,
    grid: &DataGrid,
    mode: DataLossMode,
    grad: Option<&mut Vec<f64>>,
) -> Result<f64, LossError> {
    let n_t = grid.n_t();
    let n_xi = grid.n_xi();
    if n_t == 0 || n_xi == 0 {
        return Ok(0.0);
    }
    if mode == DataLossMode::ErrorSensitive {
        if grid.epsilon.len() != n_t {
            return Err(LossError::MissingEpsilon);
        }
        if let Some(index) = grid.epsilon.iter().position(|&e| e < 0.0) {
            return Err(LossError::NegativeEpsilon {
                index,
                value: grid.epsilon[index],
            });
        }
    }
    let layout = params.layout();

    // pass 1: residuals per grid point, value channel only
    let residuals: Vec<f64> = grid
        .targets
        .par_chunks(n_xi)
        .enumerate()
        .map(|(i, row)| {
            let mut ws = BlockWorkspace::new(&layout);
            let t = grid.t_nodes[i];
            let tb = [t; LANES];
            let mut out = Vec::with_capacity(n_xi);
            for (bi, block) in row.chunks(LANES).enumerate() {
                let start = bi * LANES;
                let mut xb = [grid.xi_nodes[start]; LANES];
                for l in 0..block.len() {
                    xb[l] = grid.xi_nodes[start + l];
                }
                let jets = engine::forward_block(&params.theta, &layout, &mut ws, &tb, &xb, 1);
                for (l, &y) in block.iter().enumerate() {
                    out.push(jets[0][l] - y);
                }
            }
            out
        })
        .flatten()
        .collect();

    // slice statistics
    let inv_nxi = 1.0 / n_xi as f64;
    let inv_nt = 1.0 / n_t as f64;
    let eps_scale = 1.0 / grid.xi_domain_len.sqrt();
    let mut loss = 0.0;
    // per-slice gradient coefficient on the value channel of each residual
    let mut slice_coef = vec![0.0; n_t];
    for i in 0..n_t {
        let s: f64 = residuals[i * n_xi..(i + 1) * n_xi]
            .iter()
            .map(|e| e * e)
            .sum::<f64>()
            * inv_nxi;
        let eps_i = if mode == DataLossMode::ErrorSensitive {
            grid.epsilon[i] * eps_scale
        } else {
            0.0
        };
        if eps_i == 0.0 {
            // fully trusted slice: plain MSE term, bit-for-bit
            loss += s;
            slice_coef[i] = 2.0 * inv_nt * inv_nxi;
        } else {
            let i_xi = s.sqrt();
            let d = i_xi - eps_i;
            if d > 0.0 {
                loss += d * d;
                slice_coef[i] = 2.0 * d / i_xi * inv_nt * inv_nxi;
            }
            // inside the tube (or exactly on its boundary): no loss, no grad
        }
    }
    loss *= inv_nt;

    if let Some(g) = grad {
        let partials: Vec<Vec<f64>> = (0..n_t)
            .into_par_iter()
            .filter(|i| slice_coef[*i] != 0.0)
            .map(|i| {
                let mut ws = BlockWorkspace::new(&layout);
                let mut local = vec![0.0; layout.n_params];
                let t = grid.t_nodes[i];
                let tb = [t; LANES];
                let coef = slice_coef[i];
                for (bi, block) in residuals[i * n_xi..(i + 1) * n_xi].chunks(LANES).enumerate() {
                    let start = bi * LANES;
                    let mut xb = [grid.xi_nodes[start]; LANES];
                    for l in 0..block.len() {
                        xb[l] = grid.xi_nodes[start + l];
                    }
                    engine::forward_block(&params.theta, &layout, &mut ws, &tb, &xb, 1);
                    let mut seeds = [[0.0; LANES]; CH];
                    for (l, &e) in block.iter().enumerate() {
                        seeds[0][l] = coef * e;
                    }
                    engine::backward_block(&params.theta, &layout, &mut ws, &seeds, 1, &mut local);
                }
                local
            })
            .collect();
        for local in partials {
            for (gi, li) in g.iter_mut().zip(&local) {
                *gi += li;
            }
        }
    }
    Ok(loss)
}

/// All three term values, their weighted total, and the total θ-gradient.
#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub data: f64,
    pub interior: f64,
    pub boundary: f64,
    pub total: f64,
    pub grad: Vec<f64>,
    /// Unweighted per-term gradients, for the LRA statistics.
    pub grad_data: Option<Vec<f64>>,
    pub grad_interior: Vec<f64>,
    pub grad_boundary: Vec<f64>,
}

/// Weighted sum `l = Σ_j λ_j l_j` with its gradient. Terms with `λ_j = 0` or
/// empty point sets contribute zero (their gradient pass is skipped, except
/// when LRA needs the statistics).
pub fn total_loss(
    params: &NetworkParams,
    sets: &CollocationSets,
    weights: &LossWeights,
    mode: DataLossMode,
) -> Result<TotalLoss, LossError> {
    let n = params.n_params();
    let need_all_grads = weights.scheme == WeightScheme::Lra;

    let (l_d, g_d) = match sets.data.as_ref() {
        Some(grid) if grid.n_points() > 0 => {
            if weights.data == 0.0 && !need_all_grads {
                let l = match mode {
                    DataLossMode::Plain => data_loss(params, grid),
                    DataLossMode::ErrorSensitive => error_sensitive_data_loss(params, grid)?,
                };
                (l, None)
            } else {
                let (l, g) = match mode {
                    DataLossMode::Plain => data_loss_with_grad(params, grid),
                    DataLossMode::ErrorSensitive => {
                        error_sensitive_data_loss_with_grad(params, grid)?
                    }
                };
                (l, Some(g))
            }
        }
        _ => (0.0, None),
    };
    let (l_i, g_i) = interior_loss_with_grad(params, &sets.interior);
    let (l_b, g_b) = boundary_loss_with_grad(params, &sets.boundary);

    let total = weights.data * l_d + weights.interior * l_i + weights.boundary * l_b;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let mut acc = weights.interior * g_i[i] + weights.boundary * g_b[i];
        if let Some(gd) = &g_d {
            acc += weights.data * gd[i];
        }
        grad[i] = acc;
    }
    Ok(TotalLoss {
        data: l_d,
        interior: l_i,
        boundary: l_b,
        total,
        grad,
        grad_data: g_d,
        grad_interior: g_i,
        grad_boundary: g_b,
    })
}
