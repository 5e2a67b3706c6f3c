//! Full-Order Model: P1 finite elements on an equidistant mesh with an
//! implicit-midpoint time stepper.
//!
//! The midpoint scheme on the first-order system `(u, v)` is unconditionally
//! stable, second order, and conserves the discrete energy
//! `½(vᵀMv + uᵀKu)` exactly for this linear problem, which keeps long-horizon
//! snapshots clean for the reduced models built on top.

use crate::analytic::{linspace, GridFunction, WaveProblem};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("P1 assembly needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("time stepping needs at least 2 time levels, got {0}")]
    TooFewSteps(usize),
    #[error("tridiagonal solve failed: zero pivot at row {0}")]
    SingularSystem(usize),
}

/// Symmetric tridiagonal matrix (`diag.len() == n`, `off.len() == n − 1`).
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn constant(n: usize, diag: f64, off: f64) -> Self {
        Self {
            diag: vec![diag; n],
            off: vec![off; n.saturating_sub(1)],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.mul_into(x, &mut out);
        out
    }

    /// xᵀ A y
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.diag.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = self.diag[i] * y[i];
            if i > 0 {
                row += self.off[i - 1] * y[i - 1];
            }
            if i + 1 < n {
                row += self.off[i] * y[i + 1];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// LDLᵀ-style Thomas factorization; reusable across many solves.
    pub fn factor(&self) -> Result<TridiagFactor, FemError> {
        let n = self.diag.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        if d[0] == 0.0 {
            return Err(FemError::SingularSystem(0));
        }
        for i in 1..n {
            l[i - 1] = self.off[i - 1] / d[i - 1];
            d[i] = self.diag[i] - l[i - 1] * self.off[i - 1];
            if d[i] == 0.0 {
                return Err(FemError::SingularSystem(i));
            }
        }
        Ok(TridiagFactor {
            d,
            l,
            off: self.off.clone(),
        })
    }
}

/// Factored symmetric tridiagonal system.
#[derive(Debug, Clone)]
pub struct TridiagFactor {
    d: Vec<f64>,
    l: Vec<f64>,
    off: Vec<f64>,
}

impl TridiagFactor {
    pub fn solve_into(&self, rhs: &[f64], x: &mut Vec<f64>) {
        let n = self.d.len();
        x.clear();
        x.extend_from_slice(rhs);
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        x[n - 1] /= self.d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - self.off[i] * x[i + 1]) / self.d[i];
        }
    }
}

/// P1 semi-discretization of the wave problem, Dirichlet rows eliminated.
#[derive(Debug, Clone)]
pub struct FemDiscretization {
    pub n_nodes: usize,
    pub n_steps: usize,
    /// Mesh width `|Ω_ξ| / (n_nodes − 1)`.
    pub h: f64,
    /// Time step `|Ω_t| / (n_steps − 1)`.
    pub dt: f64,
    /// Consistent mass matrix on the `n_nodes − 2` interior unknowns.
    pub mass: SymTridiag,
    /// Stiffness matrix on the interior unknowns.
    pub stiffness: SymTridiag,
}

/// Standard P1 matrices on the equidistant mesh: mass diag `2h/3`, off `h/6`;
/// stiffness diag `2/h`, off `−1/h`.
pub fn assemble(n_nodes: usize, n_steps: usize, problem: &WaveProblem) -> Result<FemDiscretization, FemError> {
    if n_nodes < 3 {
        return Err(FemError::TooFewNodes(n_nodes));
    }
    if n_steps < 2 {
        return Err(FemError::TooFewSteps(n_steps));
    }
    let h = problem.xi_len() / (n_nodes - 1) as f64;
    let dt = problem.t_len() / (n_steps - 1) as f64;
    let m = n_nodes - 2;
    Ok(FemDiscretization {
        n_nodes,
        n_steps,
        h,
        dt,
        mass: SymTridiag::constant(m, 2.0 * h / 3.0, h / 6.0),
        stiffness: SymTridiag::constant(m, 2.0 / h, -1.0 / h),
    })
}

impl FemDiscretization {
    pub fn n_interior(&self) -> usize {
        self.n_nodes - 2
    }

    pub fn xi_nodes(&self, problem: &WaveProblem) -> Vec<f64> {
        linspace(problem.xi_domain.0, problem.xi_domain.1, self.n_nodes)
    }

    pub fn t_nodes(&self, problem: &WaveProblem) -> Vec<f64> {
        linspace(problem.t_domain.0, problem.t_domain.1, self.n_steps)
    }

    /// Discrete energy `½(vᵀMv + uᵀKu)` of an interior state.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        0.5 * (self.mass.quadratic_form(v, v) + self.stiffness.quadratic_form(u, u))
    }
}

/// Full FOM solve plus the data the diagnostics need.
pub struct FomSolution {
    pub grid: GridFunction,
    pub energy_initial: f64,
    pub energy_final: f64,
}

/// Integrates `M ü + K u = 0` from the nodal interpolation of the initial
/// bump and zero velocity. Snapshots at every time level (or every
/// `stride`-th level), boundary columns pinned to zero.
pub fn solve_fom_detailed(
    disc: &FemDiscretization,
    problem: &WaveProblem,
    stride: usize,
) -> Result<FomSolution, FemError> {
    assert!(stride >= 1);
    let m = disc.n_interior();
    let xi = disc.xi_nodes(problem);
    let dt = disc.dt;
    let c = dt * dt / 4.0;

    // Midpoint system matrix A = M + (dt²/4) K, factored once.
    let mut a = SymTridiag::constant(m, 0.0, 0.0);
    for i in 0..m {
        a.diag[i] = disc.mass.diag[i] + c * disc.stiffness.diag[i];
    }
    for i in 0..m - 1 {
        a.off[i] = disc.mass.off[i] + c * disc.stiffness.off[i];
    }
    let factor = a.factor()?;

    let mut u: Vec<f64> = xi[1..disc.n_nodes - 1]
        .iter()
        .map(|&x| problem.initial_bump(x))
        .collect();
    let mut v = vec![0.0; m];
    let energy_initial = disc.energy(&u, &v);

    let stored = (disc.n_steps - 1) / stride + 1;
    let mut values = vec![0.0; stored * disc.n_nodes];
    let mut t_nodes = Vec::with_capacity(stored);
    let full_t = disc.t_nodes(problem);
    values[1..disc.n_nodes - 1].copy_from_slice(&u);
    t_nodes.push(full_t[0]);

    let mut ku = vec![0.0; m];
    let mut kv = vec![0.0; m];
    let mut mv = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut v_next = Vec::with_capacity(m);
    let mut row = 1;
    for k in 1..disc.n_steps {
        disc.stiffness.mul_into(&u, &mut ku);
        disc.stiffness.mul_into(&v, &mut kv);
        disc.mass.mul_into(&v, &mut mv);
        for i in 0..m {
            rhs[i] = mv[i] - c * kv[i] - dt * ku[i];
        }
        factor.solve_into(&rhs, &mut v_next);
        for i in 0..m {
            u[i] += 0.5 * dt * (v[i] + v_next[i]);
        }
        v.copy_from_slice(&v_next);
        if k % stride == 0 {
            values[row * disc.n_nodes + 1..row * disc.n_nodes + disc.n_nodes - 1]
                .copy_from_slice(&u);
            t_nodes.push(full_t[k]);
            row += 1;
        }
    }
    debug_assert_eq!(row, stored);
    let energy_final = disc.energy(&u, &v);

    let grid = GridFunction {
        t_nodes,
        xi_nodes: xi,
        values,
    };
    Ok(FomSolution {
        grid,
        energy_initial,
        energy_final,
    })
}

/// FOM displacement snapshots at every time level.
pub fn solve_fom(disc: &FemDiscretization, problem: &WaveProblem) -> Result<GridFunction, FemError> {
    solve_fom_detailed(disc, problem, 1).map(|s| s.grid)
}

/// Trapezoidal `‖u − u_FOM‖²_{L2(Ω)} / |Ω|` against the analytic solution.
pub fn fom_mse(fom: &GridFunction, problem: &WaveProblem) -> f64 {
    fom.mse_vs_exact(problem)
}
