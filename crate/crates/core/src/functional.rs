//! The discrete selfdual path functional for the forced Navier–Stokes problem
//!
//! ```text
//! u̇ + Λu + νAu + f = 0,    A = −Δ (the multiplier |k|²)
//! ```
//!
//! with `Φ(t, u) = (ν/2)‖u‖²_X + ⟨f(t), u⟩` and `Φ*(t, q) = (1/2ν)‖q − f(t)‖²_X*`.
//! On a uniform time grid with midpoints `ū_i = (u_i + u_{i+1})/2` and
//! differences `Du_i = (u_{i+1} − u_i)/dt`,
//!
//! ```text
//! I(u) = Σ_i dt·[Φ(ū_i) + Φ*(−Du_i − Λū_i)] + ℓ(u_0 − u_N, (u_0 + u_N)/2).
//! ```
//!
//! Telescoping `Σ dt⟨ū_i, Du_i⟩ = (‖u_N‖² − ‖u_0‖²)/2` gives the exact
//! discrete identity
//!
//! ```text
//! I(u) = Σ_i dt·gap_i + gap_ℓ − Σ_i dt·⟨Λū_i, ū_i⟩
//! ```
//!
//! where `gap_i = (1/2ν)‖Du_i + Λū_i + νAū_i + f‖²_X*` is the Fenchel gap of
//! the interval and `gap_ℓ = ℓ(a, b) + ⟨a, b⟩`. The last sum vanishes to
//! round-off because the dealiased advection is skew, so `I ≥ 0` and `I = 0`
//! exactly on solutions of the midpoint (Crank–Nicolson) scheme that satisfy
//! the boundary condition. The gap form is free of cancellation and is the
//! value handed to the optimizer.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{boundary_residual, BoundaryKind, BoundaryLagrangian};
use crate::convex::{ConvexPotential, QuadraticForm};
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::field::{advection, advection_adjoint, Forcing, SpectralField, TorusGrid};

/// A time-discrete trajectory `u_0, …, u_N` on a uniform grid over `[0, T]`.
#[derive(Clone, Debug)]
pub struct Path {
    nodes: Vec<SpectralField>,
    horizon: f64,
}

impl Path {
    pub fn new(nodes: Vec<SpectralField>, horizon: f64) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "a path needs at least 2 intervals, got {}",
                nodes.len().saturating_sub(1)
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        for n in &nodes[1..] {
            nodes[0].check_grid(n)?;
        }
        Ok(Self { nodes, horizon })
    }

    /// `N + 1` copies of `u`.
    pub fn constant(u: &SpectralField, intervals: usize, horizon: f64) -> Result<Self> {
        Self::new(vec![u.clone(); intervals + 1], horizon)
    }

    pub fn zeros(grid: &Arc<TorusGrid>, intervals: usize, horizon: f64) -> Result<Self> {
        Self::constant(&SpectralField::zeros(grid), intervals, horizon)
    }

    pub fn nodes(&self) -> &[SpectralField] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [SpectralField] {
        &mut self.nodes
    }

    pub fn node(&self, i: usize) -> &SpectralField {
        &self.nodes[i]
    }

    pub fn first(&self) -> &SpectralField {
        &self.nodes[0]
    }

    pub fn last(&self) -> &SpectralField {
        &self.nodes[self.nodes.len() - 1]
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        self.nodes[0].grid()
    }

    /// Node `i` sits at time `i·dt`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    /// Euclidean pairing of two path-shaped arrays.
    pub fn pair(&self, other: &Path) -> f64 {
        self.nodes.iter().zip(&other.nodes).map(|(a, b)| a.pair(b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.pair(self).sqrt()
    }
}

/// Per-interval and aggregate diagnostics of one functional evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionalReport {
    /// `Σ dt·integrand_i + boundary_term`
    pub total: ExtendedReal,
    /// `Σ dt·gap_i + boundary_gap`, equal to `total + skew_term`
    pub gap_total: ExtendedReal,
    /// `Φ(ū_i) + Φ*(−Du_i − Λū_i)` per interval
    pub integrand: Vec<f64>,
    /// Fenchel gap per interval
    pub gaps: Vec<f64>,
    /// quadrature weights (`dt` each)
    pub weights: Vec<f64>,
    pub boundary_term: ExtendedReal,
    pub boundary_gap: ExtendedReal,
    /// `Σ dt·⟨Λū_i, ū_i⟩`
    pub skew_term: f64,
    pub energy_residual: f64,
    /// `max_i ‖Du_i + Λū_i + ∂Φ(ū_i)‖_X*`
    pub pde_residual: f64,
    pub boundary_residual: f64,
}

/// The functional of a given forcing, viscosity, horizon and boundary
/// condition on a fixed grid.
#[derive(Clone, Debug)]
pub struct DiscreteFunctional {
    grid: Arc<TorusGrid>,
    horizon: f64,
    intervals: usize,
    forcing: Forcing,
    boundary: BoundaryLagrangian,
    epsilon: f64,
    advection: bool,
    potentials: Vec<ConvexPotential>,
}

fn node_potential(
    grid: &TorusGrid,
    weights: &Arc<[f64]>,
    forcing: Option<&SpectralField>,
    epsilon: f64,
) -> Result<ConvexPotential> {
    let linear = forcing.map(|f| Arc::<[f64]>::from(f.as_real()));
    let base = QuadraticForm::new(weights.clone(), linear, grid.viscosity())?;
    if epsilon > 0.0 {
        ConvexPotential::quartic(epsilon, base)
    } else {
        Ok(ConvexPotential::QuadraticForm(base))
    }
}

impl DiscreteFunctional {
    /// Builds the functional; `epsilon > 0` adds `(ε/4)‖u‖⁴_X` to `Φ`.
    pub fn new(
        grid: &Arc<TorusGrid>,
        horizon: f64,
        intervals: usize,
        forcing: Forcing,
        boundary: BoundaryLagrangian,
        epsilon: f64,
    ) -> Result<Self> {
        if intervals < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 intervals, got {intervals}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("ε must be ≥ 0, got {epsilon}")));
        }
        if boundary.dim() != 2 * grid.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * grid.len(),
                got: boundary.dim(),
            });
        }
        if let Forcing::PerInterval(fs) = &forcing {
            if fs.len() != intervals {
                return Err(Error::DimensionMismatch {
                    expected: intervals,
                    got: fs.len(),
                });
            }
        }
        let mut out = Self {
            grid: grid.clone(),
            horizon,
            intervals,
            forcing,
            boundary,
            epsilon,
            advection: true,
            potentials: Vec::new(),
        };
        out.rebuild()?;
        Ok(out)
    }

    fn rebuild(&mut self) -> Result<()> {
        let weights = self.grid.stokes_weights();
        self.potentials = match &self.forcing {
            Forcing::PerInterval(fs) => fs
                .iter()
                .map(|f| {
                    f.check_grid(&SpectralField::zeros(&self.grid))?;
                    node_potential(&self.grid, &weights, Some(f), self.epsilon)
                })
                .collect::<Result<_>>()?,
            other => {
                let p = node_potential(&self.grid, &weights, other.at(0), self.epsilon)?;
                vec![p; self.intervals]
            }
        };
        Ok(())
    }

    /// The same functional with the advection term switched off (Stokes).
    pub fn without_advection(mut self) -> Self {
        self.advection = false;
        self
    }

    /// The same functional with a different quartic coefficient.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut out = self.clone();
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("ε must be ≥ 0, got {epsilon}")));
        }
        out.epsilon = epsilon;
        out.rebuild()?;
        Ok(out)
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    /// Quadrature weights, one `dt` per interval.
    pub fn weights(&self) -> Vec<f64> {
        vec![self.dt(); self.intervals]
    }

    pub fn forcing(&self) -> &Forcing {
        &self.forcing
    }

    pub fn boundary(&self) -> &BoundaryLagrangian {
        &self.boundary
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn has_advection(&self) -> bool {
        self.advection
    }

    pub fn potential(&self, interval: usize) -> &ConvexPotential {
        &self.potentials[interval]
    }

    /// `±1` when the boundary condition is imposed by aliasing `u_N = ±u_0`.
    pub fn structural_sign(&self) -> Option<f64> {
        match self.boundary.kind() {
            BoundaryKind::Periodic => Some(1.0),
            BoundaryKind::AntiPeriodic => Some(-1.0),
            _ => None,
        }
    }

    fn check_path(&self, path: &Path) -> Result<()> {
        if !path.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch(format!(
                "path on {:?}, functional on {:?}",
                path.grid(),
                self.grid
            )));
        }
        if path.intervals() != self.intervals {
            return Err(Error::DimensionMismatch {
                expected: self.intervals,
                got: path.intervals(),
            });
        }
        if (path.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::InvalidArgument(format!(
                "path horizon {} differs from functional horizon {}",
                path.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }

    fn lambda(&self, u: &SpectralField) -> SpectralField {
        if self.advection {
            advection(u)
        } else {
            SpectralField::zeros(&self.grid)
        }
    }
}

struct IntervalEval {
    integrand: f64,
    gap: f64,
    skew: f64,
    pde_sq: f64,
    grad: Option<(SpectralField, SpectralField)>,
}

fn field_from(grid: &Arc<TorusGrid>, v: Vec<f64>) -> Result<SpectralField> {
    SpectralField::from_real(grid, &v)
}

fn eval_interval(
    f: &DiscreteFunctional,
    path: &Path,
    i: usize,
    want_grad: bool,
) -> Result<IntervalEval> {
    let g = &f.grid;
    let dt = f.dt();
    let (a, b) = (path.node(i), path.node(i + 1));
    let mut ubar = a.add(b);
    ubar.scale_mut(0.5);
    let mut du = b.sub(a);
    du.scale_mut(1.0 / dt);
    let lam = f.lambda(&ubar);
    let mut q = du.add(&lam);
    q.scale_mut(-1.0);
    let pot = &f.potentials[i];
    let x = ubar.as_real();
    let integrand = (pot.value(x)? + pot.conjugate(q.as_real())?).to_f64();
    let gap = pot.fenchel_gap(x, q.as_real())?.to_f64();
    let skew = lam.pair(&ubar);
    let dphi = field_from(g, pot.subgradient(x)?)?;
    let mut res = du.add(&lam);
    res.axpy(1.0, &dphi);
    let pde_sq = res.dual_norm_sq();
    let grad = if want_grad {
        let w = field_from(g, pot.conjugate_gradient(q.as_real())?)?;
        let mut common = dphi.scaled(0.5 * dt);
        if f.advection {
            common.axpy(-0.5 * dt, &advection_adjoint(&ubar, &w));
        }
        let mut left = common.clone();
        left.axpy(1.0, &w);
        let mut right = common;
        right.axpy(-1.0, &w);
        Some((left, right))
    } else {
        None
    };
    Ok(IntervalEval {
        integrand,
        gap,
        skew,
        pde_sq,
        grad,
    })
}

/// Value report together with the optional gradient.
pub(crate) fn evaluate(
    f: &DiscreteFunctional,
    path: &Path,
    want_grad: bool,
) -> Result<(FunctionalReport, Option<Path>)> {
    f.check_path(path)?;
    let n = f.intervals;
    let dt = f.dt();
    let evals: Vec<IntervalEval> = (0..n)
        .into_par_iter()
        .map(|i| eval_interval(f, path, i, want_grad))
        .collect::<Result<_>>()?;

    let u0 = path.first();
    let un = path.last();
    let a = u0.sub(un);
    let mut b = u0.add(un);
    b.scale_mut(0.5);
    let bl = &f.boundary;
    let boundary_term = bl.value(a.as_real(), b.as_real())?;
    let boundary_gap = match boundary_term {
        ExtendedReal::Finite(_) if bl.is_smooth() => bl.gap(a.as_real(), b.as_real())?,
        ExtendedReal::Finite(v) => ExtendedReal::Finite(v + a.pair(&b)),
        other => other,
    };

    let integrand: Vec<f64> = evals.iter().map(|e| e.integrand).collect();
    let gaps: Vec<f64> = evals.iter().map(|e| e.gap).collect();
    let skew_term = dt * evals.iter().map(|e| e.skew).sum::<f64>();
    let total = boundary_term + dt * integrand.iter().sum::<f64>();
    let gap_total = boundary_gap + dt * gaps.iter().sum::<f64>();
    let pde_residual = evals.iter().map(|e| e.pde_sq).fold(0.0, f64::max).sqrt();

    // running energy balance ‖u_m‖² + 2Σ_{i<m} dt·integrand_i − ‖u_0‖²
    let e0 = u0.h_norm_sq();
    let mut acc = 0.0;
    let mut energy_residual: f64 = 0.0;
    for (m, node) in path.nodes().iter().enumerate().skip(1) {
        acc += 2.0 * dt * integrand[m - 1];
        energy_residual = energy_residual.max((node.h_norm_sq() + acc - e0).abs());
    }

    let bres = boundary_residual(bl, u0.as_real(), un.as_real())?;

    let report = FunctionalReport {
        total,
        gap_total,
        integrand,
        gaps,
        weights: f.weights(),
        boundary_term,
        boundary_gap,
        skew_term,
        energy_residual,
        pde_residual,
        boundary_residual: bres,
    };

    if !want_grad {
        return Ok((report, None));
    }

    let mut grad: Vec<SpectralField> = vec![SpectralField::zeros(&f.grid); n + 1];
    for (i, e) in evals.into_iter().enumerate() {
        let (l, r) = e.grad.expect("gradient requested");
        grad[i].axpy(1.0, &l);
        grad[i + 1].axpy(1.0, &r);
    }
    match f.structural_sign() {
        None => {
            let (ga, gb) = bl.gradient(a.as_real(), b.as_real())?;
            let ga = field_from(&f.grid, ga)?;
            let gb = field_from(&f.grid, gb)?;
            grad[0].axpy(1.0, &ga);
            grad[0].axpy(0.5, &gb);
            grad[n].axpy(-1.0, &ga);
            grad[n].axpy(0.5, &gb);
        }
        Some(sign) => {
            let mut expect = u0.clone();
            expect.scale_mut(sign);
            if expect.sub(un).h_norm_sq() != 0.0 {
                return Err(Error::Unsupported(format!(
                    "{:?} boundary needs u_N = {sign}·u_0 on the path; \
                     the gradient is only defined on that constraint set",
                    bl.kind()
                )));
            }
            let last = std::mem::replace(&mut grad[n], SpectralField::zeros(&f.grid));
            grad[0].axpy(sign, &last);
        }
    }
    for g in &mut grad {
        g.project();
    }
    Ok((report, Some(Path::new(grad, path.horizon())?)))
}

/// Evaluates the functional and its diagnostics along `path`.
pub fn functional_value(f: &DiscreteFunctional, path: &Path) -> Result<FunctionalReport> {
    Ok(evaluate(f, path, false)?.0)
}

/// Gradient of the total with respect to every node.
///
/// For the (anti)periodic kinds the path must satisfy `u_N = ±u_0`; the
/// gradient of the last node is then folded into the first and the returned
/// last node is zero.
pub fn functional_gradient(f: &DiscreteFunctional, path: &Path) -> Result<Path> {
    Ok(evaluate(f, path, true)?.1.expect("gradient requested"))
}

/// `max_m |‖u_m‖² + 2 Σ_{i<m} dt·[Φ + Φ*]_i − ‖u_0‖²|`
pub fn energy_identity_residual(f: &DiscreteFunctional, path: &Path) -> Result<f64> {
    Ok(functional_value(f, path)?.energy_residual)
}

/// `‖u_N‖²/2 + Σ dt·[Φ + Φ*]_i − ‖u_0‖²/2`
pub fn energy_inequality_check(f: &DiscreteFunctional, path: &Path) -> Result<f64> {
    let r = functional_value(f, path)?;
    let s: f64 = r.integrand.iter().zip(&r.weights).map(|(v, w)| v * w).sum();
    Ok(0.5 * path.last().h_norm_sq() + s - 0.5 * path.first().h_norm_sq())
}

fn stationary_potential(grid: &Arc<TorusGrid>, f: Option<&SpectralField>) -> Result<ConvexPotential> {
    node_potential(grid, &grid.stokes_weights(), f, 0.0)
}

/// `Φ(u) + Φ*(−Λu) + ⟨Λu, u⟩`, the steady-state functional.
///
/// The value reported as `gap_total` is the Fenchel gap `Φ(u) + Φ*(q) − ⟨u, q⟩`
/// at `q = −Λu`, which is algebraically the same quantity written as a sum of
/// squares `(1/2ν)‖νAu + f + Λu‖²_X*`.
pub fn stationary_functional(
    grid: &Arc<TorusGrid>,
    forcing: Option<&SpectralField>,
    u: &SpectralField,
) -> Result<FunctionalReport> {
    if let Some(f) = forcing {
        u.check_grid(f)?;
    }
    let pot = stationary_potential(grid, forcing)?;
    let lam = advection(u);
    let q = lam.scaled(-1.0);
    let x = u.as_real();
    let skew = lam.pair(u);
    let value = (pot.value(x)? + pot.conjugate(q.as_real())?).to_f64();
    let gap = pot.fenchel_gap(x, q.as_real())?.to_f64();
    let mut res = lam.clone();
    res.axpy(1.0, &field_from(grid, pot.subgradient(x)?)?);
    Ok(FunctionalReport {
        total: ExtendedReal::Finite(value + skew),
        gap_total: ExtendedReal::Finite(gap),
        integrand: vec![value],
        gaps: vec![gap],
        weights: vec![1.0],
        boundary_term: ExtendedReal::ZERO,
        boundary_gap: ExtendedReal::ZERO,
        skew_term: skew,
        energy_residual: 0.0,
        pde_residual: res.dual_norm_sq().sqrt(),
        boundary_residual: 0.0,
    })
}

/// Gradient of the steady-state functional.
pub fn stationary_gradient(
    grid: &Arc<TorusGrid>,
    forcing: Option<&SpectralField>,
    u: &SpectralField,
) -> Result<SpectralField> {
    let pot = stationary_potential(grid, forcing)?;
    let lam = advection(u);
    let q = lam.scaled(-1.0);
    let x = u.as_real();
    let w = field_from(grid, pot.conjugate_gradient(q.as_real())?)?;
    let mut g = field_from(grid, pot.subgradient(x)?)?;
    // d/du Φ*(−Λu) = −Λ'(u)ᵀw and d/du ⟨Λu, u⟩ = Λ'(u)ᵀu + Λu
    g.axpy(-1.0, &advection_adjoint(u, &w));
    g.axpy(1.0, &advection_adjoint(u, u));
    g.axpy(1.0, &lam);
    g.project();
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::make_boundary;

    fn grid(dim: usize, n: usize) -> Arc<TorusGrid> {
        TorusGrid::new(dim, n, 0.1).unwrap()
    }

    fn random_path(g: &Arc<TorusGrid>, n: usize, seed: u64) -> Path {
        let nodes = (0..=n)
            .map(|i| SpectralField::random(g, seed + i as u64, 0.8))
            .collect();
        Path::new(nodes, 0.5).unwrap()
    }

    fn functional(g: &Arc<TorusGrid>, n: usize, kind: BoundaryKind, forcing: Forcing, eps: f64) -> DiscreteFunctional {
        let b = make_boundary(kind, 2 * g.len()).unwrap();
        DiscreteFunctional::new(g, 0.5, n, forcing, b, eps).unwrap()
    }

    #[test]
    fn zero_path_is_optimal_for_antiperiodic() {
        let g = grid(2, 8);
        let f = functional(&g, 4, BoundaryKind::AntiPeriodic, Forcing::Zero, 0.0);
        let p = Path::zeros(&g, 4, 0.5).unwrap();
        let r = functional_value(&f, &p).unwrap();
        assert_eq!(r.total, ExtendedReal::ZERO);
        let gr = functional_gradient(&f, &p).unwrap();
        assert_eq!(gr.norm(), 0.0);
        assert_eq!(energy_identity_residual(&f, &p).unwrap(), 0.0);
        assert_eq!(energy_inequality_check(&f, &p).unwrap(), 0.0);
    }

    #[test]
    fn decomposition_matches_direct_total() {
        let g = grid(2, 8);
        let forcing = Forcing::Steady(SpectralField::random(&g, 99, 0.3));
        let x0 = SpectralField::random(&g, 7, 1.0);
        let kinds = [
            BoundaryKind::InitialValue(x0.as_real().to_vec()),
            BoundaryKind::AlphaPeriodic { lambda: 3.0 },
        ];
        for kind in kinds {
            let f = functional(&g, 4, kind, forcing.clone(), 0.0);
            let p = random_path(&g, 4, 10);
            let r = functional_value(&f, &p).unwrap();
            let direct = r.total.to_f64();
            let via_gaps = r.gap_total.to_f64() - r.skew_term;
            assert!((direct - via_gaps).abs() <= 1e-12 * direct.abs().max(1.0));
            let sum: f64 = r.integrand.iter().zip(&r.weights).map(|(a, b)| a * b).sum();
            assert!((sum + r.boundary_term.to_f64() - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            assert!(r.skew_term.abs() < 1e-12);
            assert!(direct >= -1e-10);
            assert!(r.gaps.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn periodic_total_is_infinite_off_the_constraint() {
        let g = grid(2, 8);
        let f = functional(&g, 4, BoundaryKind::Periodic, Forcing::Zero, 0.0);
        let p = random_path(&g, 4, 3);
        assert!(functional_value(&f, &p).unwrap().total.is_pos_infinite());
        assert!(functional_gradient(&f, &p).is_err());
    }

    fn fd_check(f: &DiscreteFunctional, p: &Path, seed: u64, structural: Option<f64>) -> f64 {
        let g = f.grid().clone();
        let grad = functional_gradient(f, p).unwrap();
        let mut dir = random_path(&g, f.intervals(), seed);
        if let Some(s) = structural {
            let first = dir.first().scaled(s);
            let n = f.intervals();
            dir.nodes_mut()[n] = first;
        }
        let h = 1e-6;
        let shift = |s: f64| {
            let nodes = p
                .nodes()
                .iter()
                .zip(dir.nodes())
                .map(|(a, d)| {
                    let mut v = a.clone();
                    v.axpy(s, d);
                    v
                })
                .collect();
            Path::new(nodes, p.horizon()).unwrap()
        };
        let vp = functional_value(f, &shift(h)).unwrap().total.to_f64();
        let vm = functional_value(f, &shift(-h)).unwrap().total.to_f64();
        let fd = (vp - vm) / (2.0 * h);
        let an = grad.pair(&dir);
        (fd - an).abs() / an.abs().max(1e-3)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = grid(2, 8);
        let forcing = Forcing::Steady(SpectralField::random(&g, 42, 0.5));
        let x0 = SpectralField::random(&g, 1, 1.0).as_real().to_vec();
        for kind in [
            BoundaryKind::InitialValue(x0),
            BoundaryKind::AlphaPeriodic { lambda: 0.5 },
        ] {
            let f = functional(&g, 4, kind, forcing.clone(), 0.0);
            let p = random_path(&g, 4, 50);
            assert!(fd_check(&f, &p, 60, None) < 1e-6);
        }
    }

    #[test]
    fn structural_gradient_matches_finite_differences() {
        let g = grid(2, 8);
        for (kind, sign) in [(BoundaryKind::Periodic, 1.0), (BoundaryKind::AntiPeriodic, -1.0)] {
            let f = functional(&g, 4, kind, Forcing::Steady(SpectralField::random(&g, 4, 0.5)), 0.0);
            let mut p = random_path(&g, 4, 70);
            let first = p.first().scaled(sign);
            p.nodes_mut()[4] = first;
            assert!(fd_check(&f, &p, 80, Some(sign)) < 1e-6);
        }
    }

    #[test]
    fn quartic_gradient_in_three_dimensions() {
        let g = grid(3, 8);
        let x0 = SpectralField::taylor_green(&g, 1.0).as_real().to_vec();
        let f = functional(&g, 4, BoundaryKind::InitialValue(x0), Forcing::Zero, 1e-2);
        let p = random_path(&g, 4, 90);
        assert!(fd_check(&f, &p, 91, None) < 1e-6);
    }

    #[test]
    fn stationary_value_and_gradient() {
        let g = grid(2, 8);
        let z = SpectralField::zeros(&g);
        let r = stationary_functional(&g, None, &z).unwrap();
        assert_eq!(r.total, ExtendedReal::ZERO);

        let f = SpectralField::random(&g, 5, 0.4);
        let u = SpectralField::random(&g, 6, 1.0);
        let r = stationary_functional(&g, Some(&f), &u).unwrap();
        assert!(r.total.to_f64() >= -1e-10);
        assert!((r.total.to_f64() - r.gap_total.to_f64()).abs() < 1e-12);

        let grad = stationary_gradient(&g, Some(&f), &u).unwrap();
        let d = SpectralField::random(&g, 7, 1.0);
        let h = 1e-6;
        let vp = stationary_functional(&g, Some(&f), &u.add(&d.scaled(h))).unwrap().gap_total.to_f64();
        let vm = stationary_functional(&g, Some(&f), &u.sub(&d.scaled(h))).unwrap().gap_total.to_f64();
        let fd = (vp - vm) / (2.0 * h);
        assert!((fd - grad.pair(&d)).abs() < 1e-6 * fd.abs().max(1.0));
    }

    #[test]
    fn manufactured_steady_state_has_zero_value() {
        let g = grid(2, 16);
        let ustar = SpectralField::random(&g, 12, 1.0);
        // νAu* + f + Λu* = 0
        let mut f = ustar.map_modes(|k2| -g.viscosity() * k2);
        f.axpy(-1.0, &advection(&ustar));
        let r = stationary_functional(&g, Some(&f), &ustar).unwrap();
        assert!(r.gap_total.to_f64() < 1e-26);
        assert!(r.pde_residual < 1e-13);
    }
}
