//! Property batteries behind `selfdual verify <suite>`.
//!
//! Each battery returns named [`Check`] rows; a suite passes when every row
//! does.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boundary::{alpha_from_lambda, boundary_residual, make_boundary, BoundaryKind, BoundaryLagrangian};
use crate::convex::{ConvexPotential, QuadraticForm};
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::field::{
    advection, advection_adjoint, duality_map, regularity_ratio, stokes_inverse, Forcing, SpectralField, TorusGrid,
};
use crate::functional::{functional_value, DiscreteFunctional, Path};
use crate::lagrangian::{AsdLagrangian, RegularizationVariant, TabulatedLagrangian};
use crate::linalg::{dot, norm};
use crate::optimizer::{fd_gradient_audit, minimize, SolveOptions};
use crate::oracle::{compare_paths, exact_stokes_decay, solve_ivp, Scheme, StepperConfig};
use crate::scenario::Check;

pub const SUITES: [&str; 5] = ["duality", "boundary", "fields", "gradients", "refinement"];

/// Runs the named suite.
pub fn run_suite(name: &str) -> Result<Vec<Check>> {
    match name {
        "duality" => {
            let mut rows = duality_battery(1000, 1)?;
            rows.extend(regularization_battery()?);
            rows.push(negative_control()?);
            Ok(rows)
        }
        "boundary" => boundary_battery(100, 2),
        "fields" => fields_battery(100, 3),
        "gradients" => gradient_battery(5, 4),
        "refinement" => refinement_battery(),
        other => Err(Error::InvalidArgument(format!(
            "unknown suite {other:?}; expected one of {}",
            SUITES.join(", ")
        ))),
    }
}

fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

fn fin(v: ExtendedReal) -> f64 {
    v.to_f64()
}

fn rotation(s: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -s, s, 0.0])
}

/// The two-dimensional closed-form catalog.
pub fn closed_form_catalog() -> Result<Vec<(String, AsdLagrangian)>> {
    let phi = ConvexPotential::QuadraticForm(QuadraticForm::new(
        vec![1.0, 2.5].into(),
        Some(vec![0.3, -0.4].into()),
        0.8,
    )?);
    let pot = AsdLagrangian::Potential(phi.clone());
    let skew = AsdLagrangian::skew_potential(phi, rotation(0.7))?;
    let mut out = vec![
        ("potential".to_string(), pot.clone()),
        ("skew_potential".to_string(), skew.clone()),
        (
            "scaled_square".to_string(),
            AsdLagrangian::Potential(ConvexPotential::scaled_square(3.0)?),
        ),
        (
            "power_norm".to_string(),
            AsdLagrangian::Potential(ConvexPotential::power_norm(3.0, 1.5)?),
        ),
        ("oplus".to_string(), AsdLagrangian::oplus(pot.clone(), skew.clone())),
    ];
    for (tag, variant) in [
        ("first", RegularizationVariant::First),
        ("second", RegularizationVariant::Second),
        ("both", RegularizationVariant::Both),
    ] {
        out.push((format!("potential_reg_{tag}"), pot.clone().regularize(0.4, variant, 2.0)?));
        out.push((format!("skew_reg_{tag}"), skew.clone().regularize(1.3, variant, 2.0)?));
    }
    Ok(out)
}

fn half_square_1d() -> Result<ConvexPotential> {
    Ok(ConvexPotential::QuadraticForm(QuadraticForm::isotropic(1, 1.0, None)?))
}

#[derive(Default)]
struct Worst {
    fenchel: f64,
    selfdual: f64,
    diagonal: f64,
    antisym: f64,
}

fn probe(l: &AsdLagrangian, x: &[f64], p: &[f64], y: &[f64], w: &mut Worst) -> Result<()> {
    w.fenchel = w.fenchel.max(-(fin(l.value(x, p)?) + dot(x, p)));
    w.selfdual = w.selfdual.max(l.selfduality_residual(&[(x.to_vec(), p.to_vec())])?);
    w.diagonal = w.diagonal.max(fin(l.hamiltonian(x, &neg(x))?.value));
    let h = l.hamiltonian(&neg(y), &neg(x))?.value + l.hamiltonian(x, y)?.value;
    w.antisym = w.antisym.max(fin(h));
    Ok(())
}

fn push_worst(rows: &mut Vec<Check>, name: &str, w: &Worst, selfdual_tol: f64) {
    rows.push(Check::at_most(format!("{name}: fenchel_young"), w.fenchel, 1e-10));
    rows.push(Check::at_most(format!("{name}: selfduality"), w.selfdual, selfdual_tol));
    rows.push(Check::at_most(format!("{name}: H(x,-x)"), w.diagonal, 1e-10));
    rows.push(Check::at_most(format!("{name}: H(-y,-x)+H(x,y)"), w.antisym, 1e-10));
}

/// Fenchel–Young, selfduality and Hamiltonian properties on `samples`
/// random points per Lagrangian.
pub fn duality_battery(samples: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for (name, l) in closed_form_catalog()? {
        let mut w = Worst::default();
        for _ in 0..samples {
            let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            probe(&l, &v[0..2], &v[2..4], &v[4..6], &mut w)?;
        }
        push_worst(&mut rows, &name, &w, 1e-8);
    }
    let t = TabulatedLagrangian::from_potential(&half_square_1d()?, uniform(-2.0, 2.0, 81), uniform(-4.0, 4.0, 161))?;
    let tol = t.grid_tol();
    let l = AsdLagrangian::Tabulated(t);
    let mut w = Worst::default();
    for _ in 0..samples {
        let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        probe(&l, &v[0..1], &v[1..2], &v[2..3], &mut w)?;
    }
    push_worst(&mut rows, "tabulated_1d", &w, tol);
    Ok(rows)
}

/// Derived-field identities of the λ-regularizations and exactness of `⊕`
/// on grids.
pub fn regularization_battery() -> Result<Vec<Check>> {
    let mut rows = Vec::new();
    let half = half_square_1d()?;
    let xs = uniform(-2.0, 2.0, 81);
    let base = TabulatedLagrangian::from_potential(&half, xs.clone(), uniform(-5.0, 5.0, 201))?;
    let quad = AsdLagrangian::Potential(ConvexPotential::QuadraticForm(QuadraticForm::new(
        vec![1.0, 2.5].into(),
        Some(vec![0.3, -0.4].into()),
        0.8,
    )?));

    // ∂̄L²_λ(x) = ∂̄L(x) + λ^{p−1}‖x‖^{p−2}x
    let mut worst: f64 = 0.0;
    for &pe in &[2.0, 3.0] {
        for &lambda in &[0.5, 1.0] {
            let tab = AsdLagrangian::Tabulated(base.clone());
            let l = tab.clone().regularize(lambda, RegularizationVariant::Second, pe)?;
            for &i in &[20usize, 30, 46, 64] {
                let x = xs[i];
                let expect = tab.derived_field(&[x])?[0] + lambda.powf(pe - 1.0) * x.abs().powf(pe - 2.0) * x;
                worst = worst.max((l.derived_field(&[x])?[0] - expect).abs());
            }
        }
    }
    for &lambda in &[0.3, 1.7] {
        let l = quad.clone().regularize(lambda, RegularizationVariant::Second, 2.0)?;
        for x in [[0.4, -0.9], [1.5, 0.2], [-0.7, -1.1]] {
            let d0 = quad.derived_field(&x)?;
            let d = l.derived_field(&x)?;
            for k in 0..2 {
                worst = worst.max((d[k] - (d0[k] + lambda * x[k])).abs());
            }
        }
    }
    rows.push(Check::at_most("second regularization field shift", worst, 1e-6));

    // ‖∂̄L¹_λ(x)‖ ≤ ‖x‖/λ for bases with 0 ∈ ∂̄L(0)
    let mut excess = f64::NEG_INFINITY;
    let centered = [
        AsdLagrangian::Tabulated(base.clone()),
        AsdLagrangian::Potential(ConvexPotential::QuadraticForm(QuadraticForm::isotropic(2, 1.0, None)?)),
    ];
    for l in centered {
        for &lambda in &[0.1, 0.5, 2.0] {
            let r = l.clone().regularize(lambda, RegularizationVariant::First, 2.0)?;
            let pts: Vec<Vec<f64>> = if matches!(l, AsdLagrangian::Tabulated(_)) {
                vec![vec![-1.2], vec![0.35], vec![1.0]]
            } else {
                vec![vec![0.4, -0.9], vec![1.5, 0.2], vec![-2.0, 1.1]]
            };
            for x in pts {
                excess = excess.max(norm(&r.derived_field(&x)?) - norm(&x) / lambda);
            }
        }
    }
    rows.push(Check::at_most("first regularization field bound excess", excess, 1e-8));

    // L ⊕ M equals the brute-force grid infimum exactly
    let ps = uniform(-4.0, 4.0, 81);
    let xs41 = uniform(-2.0, 2.0, 41);
    let lt = TabulatedLagrangian::from_potential(&half, xs41.clone(), ps.clone())?;
    let mt = TabulatedLagrangian::from_potential(&ConvexPotential::power_norm(4.0, 1.0)?, xs41.clone(), ps.clone())?;
    let sum = AsdLagrangian::oplus(AsdLagrangian::Tabulated(lt.clone()), AsdLagrangian::Tabulated(mt.clone()));
    let mut mismatches = 0.0;
    for &x in xs41.iter().step_by(5) {
        for &p in ps.iter().step_by(7) {
            let got = sum.value(&[x], &[p])?;
            let mut brute = ExtendedReal::PosInfinity;
            for &r in &ps {
                brute = brute.min(lt.value(x, r) + mt.value(x, p - r));
            }
            if got != brute {
                mismatches += 1.0;
            }
        }
    }
    rows.push(Check::at_most("oplus grid mismatches", mismatches, 0.0));
    Ok(rows)
}

/// `selfduality_residual` of a potential with non-skew `Γ`; must exceed 0.1.
pub fn negative_control() -> Result<Check> {
    let gamma = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 1.0, 0.3]);
    let phi = ConvexPotential::QuadraticForm(QuadraticForm::isotropic(2, 1.0, None)?);
    let l = AsdLagrangian::skew_potential(phi, gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..20)
        .map(|_| {
            let mut v = || (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
            (v(), v())
        })
        .collect();
    Ok(Check::at_least(
        "negative control: non-skew selfduality residual",
        l.selfduality_residual(&samples)?,
        0.1,
    ))
}

fn boundary_kinds(dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<BoundaryLagrangian>> {
    let x0 = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut out = vec![
        make_boundary(BoundaryKind::InitialValue(x0), dim)?,
        make_boundary(BoundaryKind::Periodic, dim)?,
        make_boundary(BoundaryKind::AntiPeriodic, dim)?,
    ];
    for lambda in [1.0 / 3.0, 1.0, 3.0] {
        out.push(make_boundary(BoundaryKind::AlphaPeriodic { lambda }, dim)?);
    }
    Ok(out)
}

fn kind_name(k: &BoundaryKind) -> String {
    match k {
        BoundaryKind::InitialValue(_) => "initial_value".into(),
        BoundaryKind::Periodic => "periodic".into(),
        BoundaryKind::AntiPeriodic => "anti_periodic".into(),
        BoundaryKind::AlphaPeriodic { lambda } => format!("alpha_periodic(λ={lambda:.4})"),
    }
}

/// Boundary residuals vanish exactly on condition-satisfying endpoint pairs
/// and detect violations; the α-map is exact at the reference points.
pub fn boundary_battery(pairs: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 6;
    let mut rows = Vec::new();
    for l in boundary_kinds(dim, &mut rng)? {
        let mut on: f64 = 0.0;
        let mut detect = f64::INFINITY;
        for _ in 0..pairs {
            let ut: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let u0: Vec<f64> = match l.kind() {
                BoundaryKind::InitialValue(x0) => x0.clone(),
                _ => ut.iter().map(|v| l.alpha().expect("periodic kinds carry α") * v).collect(),
            };
            on = on.max(boundary_residual(&l, &u0, &ut)?);
            let delta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bad: Vec<f64> = u0.iter().zip(&delta).map(|(a, b)| a + b).collect();
            detect = detect.min(boundary_residual(&l, &bad, &ut)? / norm(&delta));
        }
        let name = kind_name(l.kind());
        rows.push(Check::at_most(format!("{name}: residual on condition"), on, 1e-10));
        rows.push(Check::at_least(format!("{name}: residual / violation"), detect, 0.5));
    }
    let alpha_err = [(1.0 / 3.0, -0.5), (1.0, 0.0), (3.0, 0.5)]
        .iter()
        .map(|&(l, a)| (alpha_from_lambda(l) - a).abs())
        .fold(0.0, f64::max);
    rows.push(Check::at_most("alpha map exactness", alpha_err, 0.0));
    Ok(rows)
}

fn smooth_field(grid: &Arc<TorusGrid>) -> SpectralField {
    SpectralField::from_fn(grid, |x| {
        [
            x[1].sin() + 0.5 * (2.0 * x[0] + x[1]).cos(),
            0.3 * (x[0] - 2.0 * x[1]).sin() + 0.2 * (3.0 * x[0]).cos(),
            0.0,
        ]
    })
}

/// Invariants of the spectral field primitives.
pub fn fields_battery(count: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rows = Vec::new();
    let g = TorusGrid::new(2, 32, 0.1)?;
    let (mut roundtrip, mut idem, mut energy, mut adjoint, mut duality): (f64, f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut max_ratio: f64 = 0.0;
    for i in 0..count as u64 {
        let u = SpectralField::random(&g, seed * 1000 + i, 1.0);
        let w = SpectralField::random(&g, seed * 1000 + i + 500, 1.0);
        let back = g.to_spectral(&g.to_physical(u.coeffs()));
        let diff = back.iter().zip(u.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        roundtrip = roundtrip.max(diff);
        let mut p = u.clone();
        p.project();
        idem = idem.max(p.sub(&u).h_norm_sq().sqrt());
        let lam = advection(&u);
        energy = energy.max(lam.pair(&u).abs());
        adjoint = adjoint.max((advection_adjoint(&w, &u).pair(&u) + lam.pair(&w)).abs());
        let j = duality_map(&u);
        let xn = u.x_norm_sq();
        duality = duality
            .max((j.pair(&u) - xn).abs() / xn)
            .max((j.dual_norm_sq() - xn).abs() / xn)
            .max((stokes_inverse(&j)?.sub(&u)).h_norm_sq().sqrt());
        max_ratio = max_ratio.max(regularity_ratio(&u)?);
    }
    rows.push(Check::at_most("fft round trip", roundtrip, 1e-12));
    rows.push(Check::at_most("projection idempotent", idem, 1e-12));
    rows.push(Check::at_most("|<Λu,u>|", energy, 1e-12));
    rows.push(Check::at_most("adjoint identity", adjoint, 1e-12));
    rows.push(Check::at_most("duality map identities", duality, 1e-12));
    rows.push(Check::at_most("max regularity ratio (finite)", max_ratio, f64::MAX));

    let tg = SpectralField::taylor_green(&g, 1.0);
    rows.push(Check::at_most("Taylor-Green advection", advection(&tg).h_norm_sq().sqrt(), 1e-12));
    let fine = TorusGrid::new(2, 64, 0.1)?;
    let (a, b) = (regularity_ratio(&smooth_field(&g))?, regularity_ratio(&smooth_field(&fine))?);
    rows.push(Check::at_most("regularity ratio n=32 vs n=64", (a - b).abs() / b, 0.05));
    let g3 = TorusGrid::new(3, 16, 0.1)?;
    let u3 = SpectralField::random(&g3, seed, 1.0);
    rows.push(Check::at_most("|<Λu,u>| 3D", advection(&u3).pair(&u3).abs(), 1e-12));
    rows.push(Check::at_most(
        "3D div-free and real",
        if u3.check_invariants().is_ok() { 0.0 } else { 1.0 },
        0.0,
    ));
    Ok(rows)
}

fn random_path(grid: &Arc<TorusGrid>, intervals: usize, horizon: f64, seed: u64) -> Result<Path> {
    let nodes = (0..=intervals as u64).map(|i| SpectralField::random(grid, seed + i, 1.0)).collect();
    Path::new(nodes, horizon)
}

/// Central-difference audits of the analytic gradient.
pub fn gradient_battery(samples: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rows = Vec::new();
    for dim in [2, 3] {
        let g = TorusGrid::new(dim, 8, 0.1)?;
        let u0 = SpectralField::random(&g, seed, 1.0);
        let force = SpectralField::random(&g, seed + 1, 0.2);
        let b = make_boundary(BoundaryKind::InitialValue(u0.as_real().to_vec()), 2 * g.len())?;
        let eps = if dim == 3 { 0.1 } else { 0.0 };
        let f = DiscreteFunctional::new(&g, 0.5, 4, Forcing::Steady(force), b, eps)?;
        let p = random_path(&g, 4, 0.5, seed + 10)?;
        if dim == 2 {
            let stokes = fd_gradient_audit(&f.clone().without_advection(), &p, samples, seed)?;
            rows.push(Check::at_most("quadratic-only audit (2D)", stokes, 1e-8));
        }
        let name = if dim == 2 { "full audit (2D)" } else { "ε-regularized audit (3D)" };
        rows.push(Check::at_most(name, fd_gradient_audit(&f, &p, samples, seed + 1)?, 1e-5));
    }
    let g = TorusGrid::new(2, 8, 0.1)?;
    for (name, kind) in [
        ("alpha_periodic", BoundaryKind::AlphaPeriodic { lambda: 3.0 }),
        ("anti_periodic", BoundaryKind::AntiPeriodic),
        ("periodic", BoundaryKind::Periodic),
    ] {
        let b = make_boundary(kind, 2 * g.len())?;
        let f = DiscreteFunctional::new(&g, 0.5, 4, Forcing::Zero, b, 0.0)?;
        let p = random_path(&g, 4, 0.5, seed + 20)?;
        rows.push(Check::at_most(
            format!("{name} audit (2D)"),
            fd_gradient_audit(&f, &p, samples, seed + 2)?,
            1e-5,
        ));
    }
    Ok(rows)
}

/// Observed order `log₂(e(N)/e(2N))` averaged over successive pairs.
fn observed_order(errors: &[f64]) -> f64 {
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    orders.iter().copied().fold(f64::INFINITY, f64::min)
}

/// The Stokes decay refinement study at `n`: the total of the exact path,
/// the minimized total and the minimizer against the exact path, plus the
/// Crank–Nicolson oracle order.
pub fn stokes_refinement(n: usize) -> Result<Vec<Check>> {
    let mut rows = Vec::new();
    let g = TorusGrid::new(2, n, 0.1)?;
    let u0 = SpectralField::taylor_green(&g, 1.0);
    let build = |intervals: usize| -> Result<DiscreteFunctional> {
        let b = make_boundary(BoundaryKind::InitialValue(u0.as_real().to_vec()), 2 * g.len())?;
        Ok(DiscreteFunctional::new(&g, 1.0, intervals, Forcing::Zero, b, 0.0)?.without_advection())
    };
    let mut totals = Vec::new();
    for intervals in [8, 16, 32] {
        let exact = exact_stokes_decay(&u0, 1.0, intervals)?;
        totals.push(functional_value(&build(intervals)?, &exact)?.total.to_f64());
    }
    rows.push(Check::at_least("total(N) refinement order", observed_order(&totals), 1.9));

    let f = build(64)?;
    let opts = SolveOptions {
        value_tol: 1e-12,
        ..Default::default()
    };
    let (path, trace) = minimize(&f, &Path::constant(&u0, 64, 1.0)?, &opts)?;
    let total = functional_value(&f, &path)?.total.to_f64();
    rows.push(Check::at_most("minimized total", total, 1e-6 * trace.scale));
    let exact = exact_stokes_decay(&u0, 1.0, 64)?;
    rows.push(Check::at_most("minimizer vs analytic", compare_paths(&path, &exact)?, 1e-5));

    // many modes at once so the ratio is not a single-mode coincidence
    let v0 = u0.add(&SpectralField::random(&g, 9, 0.1));
    let exact_end = exact_stokes_decay(&v0, 1.0, 2)?.last().clone();
    let mut errs = Vec::new();
    for steps in [16, 32, 64] {
        let mut cfg = StepperConfig::new(Scheme::default(), 1.0, steps)?;
        cfg.advection = false;
        let p = solve_ivp(&cfg, &v0, 1.0, &Forcing::Zero)?;
        errs.push(p.last().sub(&exact_end).h_norm_sq().sqrt());
    }
    rows.push(Check::at_least("Crank-Nicolson order (Stokes)", observed_order(&errs), 1.9));
    Ok(rows)
}

/// Refinement orders at the acceptance resolution.
pub fn refinement_battery() -> Result<Vec<Check>> {
    stokes_refinement(32)
}
