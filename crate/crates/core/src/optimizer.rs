//! Limited-memory quasi-Newton minimization of the path functional.
//!
//! The optimal value of the functional is known (zero on solutions), so the
//! value itself is a certificate: termination with `total ≤ value_tol·scale`
//! bounds every weighted Fenchel gap and hence the equation residual.
//!
//! The initial inverse-Hessian of the two-loop recursion is the exact inverse
//! Hessian of the Stokes part of the functional. Both the diffusion and the
//! time-difference terms are diagonal in the wavenumber, so that Hessian
//! splits into one small `(N+1)×(N+1)` block per value of `|k|²`.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::BoundaryKind;
use crate::error::{Error, Result};
use crate::field::{SpectralField, TorusGrid};
use crate::functional::{evaluate, stationary_functional, stationary_gradient, DiscreteFunctional, Path};
use crate::linalg::{axpy, dot, norm};

/// Armijo backtracking parameters.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSearch {
    pub c1: f64,
    pub shrink: f64,
    pub max_shrinks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            shrink: 0.5,
            max_shrinks: 40,
        }
    }
}

#[derive(Clone, Debug, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// stop once the objective is at most `value_tol·scale`
    pub value_tol: f64,
    /// stop once the gradient norm is at most this
    pub grad_tol: f64,
    pub max_iters: usize,
    /// quasi-Newton history length
    pub memory: usize,
    pub line_search: LineSearch,
    /// quartic coefficients for successive warm-started stages
    pub continuation: Option<Vec<f64>>,
    /// certificate scale; defaults to `max(1, ‖u_0‖²_H)`
    pub scale: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            value_tol: 1e-8,
            grad_tol: 1e-12,
            max_iters: 500,
            memory: 10,
            line_search: LineSearch::default(),
            continuation: None,
            scale: None,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        if !(self.value_tol > 0.0) {
            return Err(Error::InvalidArgument("value_tol must be > 0".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidArgument("grad_tol must be ≥ 0".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidArgument("max_iters must be ≥ 1".into()));
        }
        if self.memory < 1 {
            return Err(Error::InvalidArgument("memory must be ≥ 1".into()));
        }
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) {
            return Err(Error::InvalidArgument("line search shrink must lie in (0, 1)".into()));
        }
        if !(ls.c1 > 0.0 && ls.c1 < 1.0) {
            return Err(Error::InvalidArgument("Armijo c1 must lie in (0, 1)".into()));
        }
        if let Some(s) = &self.continuation {
            if s.is_empty() || s.iter().any(|e| !(*e >= 0.0)) {
                return Err(Error::InvalidArgument(
                    "continuation schedule must be non-empty and non-negative".into(),
                ));
            }
        }
        if let Some(s) = self.scale {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument("scale must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ValueCertified,
    GradientSmall,
    MaxIters,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub total: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageSummary {
    pub epsilon: f64,
    pub iterations: usize,
    pub value: f64,
    pub termination: Termination,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveTrace {
    pub rows: Vec<TraceRow>,
    pub termination: Termination,
    /// set when a line search exhausted its backtracking budget
    pub line_search_failed: bool,
    pub scale: f64,
    pub stages: Vec<StageSummary>,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.iter)
    }

    pub fn final_value(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.total)
    }

    /// CSV with header `iter,total,grad_norm,step`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "iter,total,grad_norm,step")?;
        for r in &self.rows {
            writeln!(w, "{},{:e},{:e},{:e}", r.iter, r.total, r.grad_norm, r.step)?;
        }
        Ok(())
    }
}

/// A smooth objective on `R^n` with an optional inverse-Hessian guess.
pub trait Objective: Sync {
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Initial inverse-Hessian guess; `None` selects the usual scaled identity.
    fn precondition(&self, _g: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

fn initial_inverse(obj: &dyn Objective, q: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    obj.precondition(q).unwrap_or_else(|| {
        let gamma = hist.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        q.iter().map(|v| gamma * v).collect()
    })
}

/// Preconditioned L-BFGS with Armijo backtracking.
pub fn lbfgs(obj: &dyn Objective, x0: Vec<f64>, opts: &SolveOptions, scale: f64) -> Result<(Vec<f64>, SolveTrace)> {
    opts.validate()?;
    let ls = &opts.line_search;
    let mut x = x0;
    let (mut fx, mut g) = obj.eval(&x)?;
    let mut gnorm = norm(&g);
    let mut rows = vec![TraceRow {
        iter: 0,
        total: fx,
        grad_norm: gnorm,
        step: 0.0,
    }];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut failed = false;
    let mut termination = Termination::MaxIters;
    for iter in 1..=opts.max_iters + 1 {
        if fx <= opts.value_tol * scale {
            termination = Termination::ValueCertified;
            break;
        }
        if gnorm <= opts.grad_tol {
            termination = Termination::GradientSmall;
            break;
        }
        if iter > opts.max_iters {
            break;
        }
        let mut accepted = None;
        for attempt in 0..2 {
            let mut d = two_loop(obj, &g, &hist);
            let mut gd = dot(&g, &d);
            if !(gd < 0.0) || attempt == 1 {
                hist.clear();
                d = initial_inverse(obj, &g, &hist);
                d.iter_mut().for_each(|v| *v = -*v);
                gd = dot(&g, &d);
                if !(gd < 0.0) {
                    break;
                }
            }
            let mut step = 1.0;
            for _ in 0..ls.max_shrinks {
                let mut xn = x.clone();
                axpy(&mut xn, step, &d);
                let (fnew, gnew) = obj.eval(&xn)?;
                if fnew.is_finite() && fnew <= fx + ls.c1 * step * gd {
                    accepted = Some((xn, fnew, gnew, step));
                    break;
                }
                step *= ls.shrink;
            }
            if accepted.is_some() || hist.is_empty() {
                break;
            }
        }
        let Some((xn, fnew, gnew, step)) = accepted else {
            failed = true;
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fnew;
        g = gnew;
        gnorm = norm(&g);
        rows.push(TraceRow {
            iter,
            total: fx,
            grad_norm: gnorm,
            step,
        });
    }
    Ok((
        x,
        SolveTrace {
            rows,
            termination,
            line_search_failed: failed,
            scale,
            stages: Vec::new(),
        },
    ))
}

fn two_loop(obj: &dyn Objective, g: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * dot(s, &q);
        axpy(&mut q, -a, y);
        alphas.push(a);
    }
    let mut r = initial_inverse(obj, &q, hist);
    for ((s, y, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &r);
        axpy(&mut r, a - b, s);
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

/// Inverse Stokes Hessian, one block per distinct `|k|²`.
struct StokesPreconditioner {
    coord_len: usize,
    groups: Vec<(Vec<usize>, DMatrix<f64>)>,
}

impl StokesPreconditioner {
    fn new(f: &DiscreteFunctional) -> Result<Self> {
        let grid = f.grid();
        let weights = grid.stokes_weights();
        let nu = grid.viscosity();
        let n = f.intervals();
        let dt = f.dt();
        let sign = f.structural_sign();
        let lambda = match f.boundary().kind() {
            BoundaryKind::AlphaPeriodic { lambda } => *lambda,
            _ => 1.0,
        };
        let mut by_kappa: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (j, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                by_kappa.entry(w.to_bits()).or_default().push(j);
            }
        }
        let groups = by_kappa
            .into_iter()
            .map(|(bits, idx)| {
                let kappa = f64::from_bits(bits);
                let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
                let a = dt * nu * kappa / 4.0;
                let c = 1.0 / (nu * kappa * dt);
                for i in 0..n {
                    m[(i, i)] += a + c;
                    m[(i + 1, i + 1)] += a + c;
                    m[(i, i + 1)] += a - c;
                    m[(i + 1, i)] += a - c;
                }
                let m = match sign {
                    None => {
                        let (p, q) = (lambda / 2.0, 1.0 / (2.0 * lambda));
                        m[(0, 0)] += p + q;
                        m[(n, n)] += p + q;
                        m[(0, n)] += q - p;
                        m[(n, 0)] += q - p;
                        m
                    }
                    Some(s) => {
                        let mut e = DMatrix::<f64>::zeros(n + 1, n);
                        for i in 0..n {
                            e[(i, i)] = 1.0;
                        }
                        e[(n, 0)] = s;
                        e.transpose() * m * e
                    }
                };
                let inv = m
                    .cholesky()
                    .ok_or_else(|| Error::InvalidArgument("singular Stokes block".into()))?
                    .inverse();
                Ok((idx, inv))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            coord_len: weights.len(),
            groups,
        })
    }

    fn apply(&self, g: &[f64]) -> Vec<f64> {
        let len = self.coord_len;
        let blocks: Vec<(usize, DMatrix<f64>)> = self
            .groups
            .par_iter()
            .enumerate()
            .map(|(gi, (idx, inv))| {
                let m = inv.nrows();
                let gm = DMatrix::from_fn(m, idx.len(), |node, c| g[node * len + idx[c]]);
                (gi, inv * gm)
            })
            .collect();
        let mut out = vec![0.0; g.len()];
        for (gi, y) in blocks {
            let idx = &self.groups[gi].0;
            for node in 0..y.nrows() {
                for (c, &j) in idx.iter().enumerate() {
                    out[node * len + j] = y[(node, c)];
                }
            }
        }
        out
    }
}

/// The path functional as a function of its free node coefficients.
struct PathObjective<'a> {
    f: &'a DiscreteFunctional,
    grid: Arc<TorusGrid>,
    horizon: f64,
    pre: StokesPreconditioner,
}

impl<'a> PathObjective<'a> {
    fn new(f: &'a DiscreteFunctional) -> Result<Self> {
        Ok(Self {
            f,
            grid: f.grid().clone(),
            horizon: f.horizon(),
            pre: StokesPreconditioner::new(f)?,
        })
    }

    fn free_nodes(&self) -> usize {
        self.f.intervals() + usize::from(self.f.structural_sign().is_none())
    }

    fn pack(&self, p: &Path) -> Vec<f64> {
        p.nodes()[..self.free_nodes()]
            .iter()
            .flat_map(|n| n.as_real().iter().copied())
            .collect()
    }

    fn unpack(&self, x: &[f64]) -> Result<Path> {
        let len = 2 * self.grid.len();
        let mut nodes: Vec<SpectralField> = x
            .chunks(len)
            .map(|c| SpectralField::from_real(&self.grid, c))
            .collect::<Result<_>>()?;
        if let Some(s) = self.f.structural_sign() {
            nodes.push(nodes[0].scaled(s));
        }
        Path::new(nodes, self.horizon)
    }
}

impl Objective for PathObjective<'_> {
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let path = self.unpack(x)?;
        let (report, grad) = evaluate(self.f, &path, true)?;
        let grad = grad.expect("gradient requested");
        Ok((report.gap_total.to_f64(), self.pack(&grad)))
    }

    fn precondition(&self, g: &[f64]) -> Option<Vec<f64>> {
        Some(self.pre.apply(g))
    }
}

/// `max(1, ‖u_0‖²_H)` with `u_0` the prescribed initial value when there is one.
pub fn certificate_scale(f: &DiscreteFunctional, initial: &Path) -> f64 {
    let e0 = match f.boundary().kind() {
        BoundaryKind::InitialValue(x0) => dot(x0, x0),
        _ => initial.first().h_norm_sq(),
    };
    e0.max(1.0)
}

fn minimize_stage(f: &DiscreteFunctional, initial: &Path, opts: &SolveOptions, scale: f64) -> Result<(Path, SolveTrace)> {
    let obj = PathObjective::new(f)?;
    let mut start = initial.clone();
    if let Some(s) = f.structural_sign() {
        let n = start.intervals();
        let first = start.first().scaled(s);
        start.nodes_mut()[n] = first;
    }
    let (x, trace) = lbfgs(&obj, obj.pack(&start), opts, scale)?;
    Ok((obj.unpack(&x)?, trace))
}

/// Minimizes the path functional from `initial`.
///
/// With a continuation schedule the quartic coefficient of `f` is replaced
/// by each scheduled value in turn, warm-starting every stage from the
/// previous minimizer.
pub fn minimize(f: &DiscreteFunctional, initial: &Path, opts: &SolveOptions) -> Result<(Path, SolveTrace)> {
    opts.validate()?;
    let scale = opts.scale.unwrap_or_else(|| certificate_scale(f, initial));
    let Some(schedule) = &opts.continuation else {
        return minimize_stage(f, initial, opts, scale);
    };
    let mut path = initial.clone();
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut stages = Vec::new();
    let mut last = None;
    for &eps in schedule {
        let fe = f.with_epsilon(eps)?;
        let (p, t) = minimize_stage(&fe, &path, opts, scale)?;
        let offset = rows.last().map_or(0, |r| r.iter);
        stages.push(StageSummary {
            epsilon: eps,
            iterations: t.iterations(),
            value: t.final_value(),
            termination: t.termination,
        });
        let skip = usize::from(!rows.is_empty());
        rows.extend(t.rows.iter().skip(skip).map(|r| TraceRow {
            iter: r.iter + offset,
            ..r.clone()
        }));
        path = p;
        last = Some(t);
    }
    let last = last.expect("non-empty schedule");
    Ok((
        path,
        SolveTrace {
            rows,
            termination: last.termination,
            line_search_failed: last.line_search_failed,
            scale,
            stages,
        },
    ))
}

struct StationaryObjective<'a> {
    grid: &'a Arc<TorusGrid>,
    forcing: Option<&'a SpectralField>,
    inv_diag: Vec<f64>,
}

impl Objective for StationaryObjective<'_> {
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let u = SpectralField::from_real(self.grid, x)?;
        let r = stationary_functional(self.grid, self.forcing, &u)?;
        let g = stationary_gradient(self.grid, self.forcing, &u)?;
        Ok((r.gap_total.to_f64(), g.as_real().to_vec()))
    }

    fn precondition(&self, g: &[f64]) -> Option<Vec<f64>> {
        Some(g.iter().zip(&self.inv_diag).map(|(a, b)| a * b).collect())
    }
}

/// Minimizes the steady-state functional, preconditioned by the inverse
/// Stokes operator `(νA)⁻¹`.
pub fn minimize_stationary(
    grid: &Arc<TorusGrid>,
    forcing: Option<&SpectralField>,
    initial: &SpectralField,
    opts: &SolveOptions,
) -> Result<(SpectralField, SolveTrace)> {
    opts.validate()?;
    let nu = grid.viscosity();
    let inv_diag = grid
        .stokes_weights()
        .iter()
        .map(|w| if *w > 0.0 { 1.0 / (nu * w) } else { 0.0 })
        .collect();
    let obj = StationaryObjective {
        grid,
        forcing,
        inv_diag,
    };
    let scale = opts.scale.unwrap_or_else(|| initial.h_norm_sq().max(1.0));
    let (x, trace) = lbfgs(&obj, initial.as_real().to_vec(), opts, scale)?;
    Ok((SpectralField::from_real(grid, &x)?, trace))
}

/// Largest relative mismatch between the analytic directional derivative
/// and a central difference, over `samples` random admissible directions.
pub fn fd_gradient_audit(f: &DiscreteFunctional, path: &Path, samples: usize, seed: u64) -> Result<f64> {
    let obj = PathObjective::new(f)?;
    let mut start = path.clone();
    if let Some(s) = f.structural_sign() {
        let n = start.intervals();
        let first = start.first().scaled(s);
        start.nodes_mut()[n] = first;
    }
    let x = obj.pack(&start);
    let value = |x: &[f64]| -> Result<f64> {
        let r = evaluate(f, &obj.unpack(x)?, false)?.0;
        Ok(r.gap_total.to_f64() - r.skew_term)
    };
    let (_, g) = obj.eval(&x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let grid = f.grid();
    for _ in 0..samples {
        let dir: Vec<f64> = (0..obj.free_nodes())
            .flat_map(|_| {
                let s = rand::Rng::gen::<u64>(&mut rng);
                SpectralField::random(grid, s, 1.0).as_real().to_vec()
            })
            .collect();
        let h = 1e-6 * norm(&x).max(1.0) / norm(&dir);
        let mut xp = x.clone();
        axpy(&mut xp, h, &dir);
        let mut xm = x.clone();
        axpy(&mut xm, -h, &dir);
        let fd = (value(&xp)? - value(&xm)?) / (2.0 * h);
        let an = dot(&g, &dir);
        let denom = an.abs().max(fd.abs()).max(1e-10);
        worst = worst.max((fd - an).abs() / denom);
    }
    Ok(worst)
}
