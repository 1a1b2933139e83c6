//! Classical time stepping for `u̇ + Λu + νAu + f = 0`, used as an
//! independent reference for the variational solver.
//!
//! This module only relies on the field primitives; it never evaluates the
//! path functional.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{advection, Forcing, SpectralField};
use crate::functional::Path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scheme {
    /// implicit diffusion, explicit advection and forcing
    ImexEuler,
    /// implicit midpoint rule solved by fixed-point iteration
    CrankNicolsonPicard { max_inner: usize, inner_tol: f64 },
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::CrankNicolsonPicard {
            max_inner: 50,
            inner_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub steps: usize,
    /// drop the advection term (Stokes)
    pub advection: bool,
}

impl StepperConfig {
    pub fn new(scheme: Scheme, horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need steps ≥ 1 and horizon > 0, got {steps} and {horizon}"
            )));
        }
        Ok(Self {
            scheme,
            dt: horizon / steps as f64,
            steps,
            advection: true,
        })
    }
}

fn lambda(cfg: &StepperConfig, u: &SpectralField) -> SpectralField {
    if cfg.advection {
        advection(u)
    } else {
        SpectralField::zeros(u.grid())
    }
}

/// Advances `u` from `t` to `t + dt`; the forcing of step `t/dt` applies.
pub fn step(cfg: &StepperConfig, u: &SpectralField, t: f64, forcing: &Forcing) -> Result<SpectralField> {
    if !(cfg.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", cfg.dt)));
    }
    let dt = cfg.dt;
    let nu = u.grid().viscosity();
    let idx = (t / dt).round().max(0.0) as usize;
    let f = forcing.at(idx);
    let explicit = |adv: SpectralField| {
        let mut r = adv;
        if let Some(f) = f {
            r.axpy(1.0, f);
        }
        r.scale_mut(-dt);
        r
    };
    let mut out = match cfg.scheme {
        Scheme::ImexEuler => {
            let mut rhs = explicit(lambda(cfg, u));
            rhs.axpy(1.0, u);
            rhs.map_modes(|k2| 1.0 / (1.0 + dt * nu * k2))
        }
        Scheme::CrankNicolsonPicard {
            max_inner,
            inner_tol,
        } => {
            let base = u.map_modes(|k2| (1.0 - 0.5 * dt * nu * k2) / (1.0 + 0.5 * dt * nu * k2));
            let solve = |rhs: SpectralField| {
                let mut v = base.clone();
                v.axpy(1.0, &rhs.map_modes(|k2| 1.0 / (1.0 + 0.5 * dt * nu * k2)));
                v
            };
            let tol = inner_tol * u.h_norm_sq().sqrt().max(1.0);
            let mut next = solve(explicit(lambda(cfg, u)));
            let mut converged = false;
            let mut residual = f64::INFINITY;
            for _ in 0..max_inner {
                let mut mid = u.add(&next);
                mid.scale_mut(0.5);
                let cand = solve(explicit(lambda(cfg, &mid)));
                residual = cand.sub(&next).h_norm_sq().sqrt();
                next = cand;
                if residual <= tol {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NonConvergence {
                    iterations: max_inner,
                    residual,
                });
            }
            next
        }
    };
    out.project();
    Ok(out)
}

/// Integrates from `u0` over `cfg.steps` steps of size `cfg.dt`.
pub fn solve_ivp(cfg: &StepperConfig, u0: &SpectralField, horizon: f64, forcing: &Forcing) -> Result<Path> {
    let t_end = cfg.dt * cfg.steps as f64;
    if (t_end - horizon).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "steps·dt = {t_end} does not match the horizon {horizon}"
        )));
    }
    let mut nodes = Vec::with_capacity(cfg.steps + 1);
    nodes.push(u0.clone());
    for i in 0..cfg.steps {
        let next = step(cfg, &nodes[i], i as f64 * cfg.dt, forcing)?;
        nodes.push(next);
    }
    Path::new(nodes, horizon)
}

/// The exact unforced Stokes solution `û(k, t) = e^{−ν|k|²t} û₀(k)` at the
/// nodes of a uniform grid.
pub fn exact_stokes_decay(u0: &SpectralField, horizon: f64, intervals: usize) -> Result<Path> {
    let nu = u0.grid().viscosity();
    let dt = horizon / intervals as f64;
    let nodes = (0..=intervals)
        .map(|i| {
            let t = i as f64 * dt;
            u0.map_modes(|k2| (-nu * k2 * t).exp())
        })
        .collect();
    Path::new(nodes, horizon)
}

/// `max_i ‖a_i − b_i‖_H / max(1, ‖b_i‖_H)`
pub fn compare_paths(a: &Path, b: &Path) -> Result<f64> {
    if a.intervals() != b.intervals() {
        return Err(Error::DimensionMismatch {
            expected: b.intervals(),
            got: a.intervals(),
        });
    }
    if !Arc::ptr_eq(a.grid(), b.grid()) && !a.grid().same_as(b.grid()) {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid(), b.grid())));
    }
    Ok(a.nodes()
        .iter()
        .zip(b.nodes())
        .map(|(x, y)| x.sub(y).h_norm_sq().sqrt() / y.h_norm_sq().sqrt().max(1.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::TorusGrid;

    fn cn() -> Scheme {
        Scheme::default()
    }

    #[test]
    fn taylor_green_step_matches_decay() {
        let g = TorusGrid::new(2, 16, 0.1).unwrap();
        let u = SpectralField::taylor_green(&g, 1.0);
        for &dt in &[0.1, 0.05] {
            let cfg = StepperConfig::new(cn(), dt, 1).unwrap();
            let next = step(&cfg, &u, 0.0, &Forcing::Zero).unwrap();
            let exact = u.scaled((-2.0 * 0.1 * dt).exp());
            // local error of the midpoint rule is (2νdt)³/12
            let err = next.sub(&exact).h_norm_sq().sqrt();
            assert!(err <= (0.2 * dt).powi(3) / 12.0 * u.h_norm_sq().sqrt() * 1.01 + 1e-15);
        }
    }

    #[test]
    fn zero_stays_zero() {
        let g = TorusGrid::new(2, 8, 0.1).unwrap();
        for scheme in [cn(), Scheme::ImexEuler] {
            let cfg = StepperConfig::new(scheme, 1.0, 4).unwrap();
            let p = solve_ivp(&cfg, &SpectralField::zeros(&g), 1.0, &Forcing::Zero).unwrap();
            assert!(p.nodes().iter().all(|n| n.h_norm_sq() == 0.0));
        }
    }

    #[test]
    fn stokes_decay_reference() {
        let g = TorusGrid::new(2, 16, 0.1).unwrap();
        let u = SpectralField::taylor_green(&g, 1.0);
        let cfg = StepperConfig::new(cn(), 1.0, 256).unwrap();
        let p = solve_ivp(&cfg, &u, 1.0, &Forcing::Zero).unwrap();
        let exact = exact_stokes_decay(&u, 1.0, 256).unwrap();
        assert!(p.last().sub(exact.last()).h_norm_sq().sqrt() < 1e-6);
        assert!(compare_paths(&p, &exact).unwrap() < 1e-6);
    }

    /// Error at `T = 1` for the manufactured solution `u*(t) = cos(t)·U`.
    fn manufactured_error(scheme: Scheme, steps: usize) -> f64 {
        let g = TorusGrid::new(2, 16, 0.1).unwrap();
        let big_u = SpectralField::random(&g, 77, 1.0);
        let lam_u = advection(&big_u);
        let au = big_u.map_modes(|k2| 0.1 * k2);
        let dt = 1.0 / steps as f64;
        // f = −(u̇* + Λu* + νAu*) sampled at interval midpoints
        let forcing = (0..steps)
            .map(|i| {
                let t = (i as f64 + 0.5) * dt;
                let mut f = big_u.scaled(t.sin());
                f.axpy(-t.cos() * t.cos(), &lam_u);
                f.axpy(-t.cos(), &au);
                f
            })
            .collect();
        let cfg = StepperConfig::new(scheme, 1.0, steps).unwrap();
        let p = solve_ivp(&cfg, &big_u, 1.0, &Forcing::PerInterval(forcing)).unwrap();
        p.last().sub(&big_u.scaled(1f64.cos())).h_norm_sq().sqrt()
    }

    #[test]
    fn crank_nicolson_is_second_order() {
        let e1 = manufactured_error(cn(), 32);
        let e2 = manufactured_error(cn(), 64);
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "observed order {order}");
        let i1 = manufactured_error(Scheme::ImexEuler, 32);
        let i2 = manufactured_error(Scheme::ImexEuler, 64);
        assert!((i1 / i2).log2() > 0.9);
    }

    #[test]
    fn compare_paths_examples() {
        let g = TorusGrid::new(2, 8, 0.1).unwrap();
        let u = SpectralField::random(&g, 1, 2.0);
        let a = Path::constant(&u, 3, 1.0).unwrap();
        assert_eq!(compare_paths(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        let d = SpectralField::random(&g, 2, 0.01);
        b.nodes_mut()[2].axpy(1.0, &d);
        let expect = 0.01 / b.node(2).h_norm_sq().sqrt().max(1.0);
        assert!((compare_paths(&a, &b).unwrap() - expect).abs() < 1e-15);
        let c = Path::constant(&u, 4, 1.0).unwrap();
        assert!(compare_paths(&a, &c).is_err());
    }

    #[test]
    fn picard_failure_is_reported() {
        let g = TorusGrid::new(2, 16, 0.1).unwrap();
        let u = SpectralField::random(&g, 3, 50.0);
        let cfg = StepperConfig::new(
            Scheme::CrankNicolsonPicard {
                max_inner: 3,
                inner_tol: 1e-14,
            },
            1.0,
            1,
        )
        .unwrap();
        assert!(matches!(
            step(&cfg, &u, 0.0, &Forcing::Zero),
            Err(Error::NonConvergence { .. })
        ));
    }
}
