//! Boundary Lagrangians `ℓ(a, b) = ψ(a) + ψ*(−b)` on `H × H` encoding the
//! temporal boundary condition `−(u(0) + u(T))/2 ∈ ∂ψ(u(0) − u(T))`.

use crate::convex::{ConvexPotential, QuadraticForm};
use crate::error::{check_dim, Error, Result};
use crate::extended::ExtendedReal;
use crate::linalg::{add, norm, sub};

/// Which temporal boundary condition a boundary Lagrangian realizes.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryKind {
    /// `u(0) = x₀`
    InitialValue(Vec<f64>),
    /// `u(0) = u(T)`
    Periodic,
    /// `u(0) = −u(T)`
    AntiPeriodic,
    /// `u(0) = α u(T)` with `α = (λ − 1)/(λ + 1)`
    AlphaPeriodic { lambda: f64 },
}

/// `α = (λ − 1)/(λ + 1)`, evaluated as `1 − 2/(λ + 1)` which rounds more
/// favourably for reciprocal λ such as `1/3`.
pub fn alpha_from_lambda(lambda: f64) -> f64 {
    1.0 - 2.0 / (lambda + 1.0)
}

/// `λ = (1 + α)/(1 − α)`, defined for `|α| < 1`.
pub fn lambda_from_alpha(alpha: f64) -> Result<f64> {
    if !(alpha.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("|α| must be < 1, got {alpha}")));
    }
    Ok((1.0 + alpha) / (1.0 - alpha))
}

#[derive(Clone, Debug)]
pub struct BoundaryLagrangian {
    kind: BoundaryKind,
    psi: ConvexPotential,
    dim: usize,
}

/// Builds `ℓ` on `H = R^dim`.
pub fn make_boundary(kind: BoundaryKind, dim: usize) -> Result<BoundaryLagrangian> {
    let psi = match &kind {
        BoundaryKind::InitialValue(x0) => {
            check_dim(dim, x0.len())?;
            // ¼‖x‖² − ⟨x, x₀⟩
            ConvexPotential::QuadraticForm(QuadraticForm::isotropic(
                dim,
                0.5,
                Some(x0.iter().map(|v| -v).collect()),
            )?)
        }
        BoundaryKind::Periodic => ConvexPotential::Indicator {
            point: vec![0.0; dim],
        },
        BoundaryKind::AntiPeriodic => ConvexPotential::scaled_square(0.0)?,
        BoundaryKind::AlphaPeriodic { lambda } => {
            if !(*lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "α-periodic boundary needs λ > 0, got {lambda}"
                )));
            }
            ConvexPotential::scaled_square(*lambda)?
        }
    };
    Ok(BoundaryLagrangian { kind, psi, dim })
}

impl BoundaryLagrangian {
    pub fn kind(&self) -> &BoundaryKind {
        &self.kind
    }

    pub fn psi(&self) -> &ConvexPotential {
        &self.psi
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when `ℓ` is differentiable and can enter the objective directly.
    pub fn is_smooth(&self) -> bool {
        matches!(
            self.kind,
            BoundaryKind::InitialValue(_) | BoundaryKind::AlphaPeriodic { .. }
        )
    }

    /// `α` of the condition `u(0) = α u(T)` (`±1` for the (anti)periodic kinds).
    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            BoundaryKind::InitialValue(_) => None,
            BoundaryKind::Periodic => Some(1.0),
            BoundaryKind::AntiPeriodic => Some(-1.0),
            BoundaryKind::AlphaPeriodic { lambda } => Some(alpha_from_lambda(lambda)),
        }
    }

    /// `ℓ(a, b) = ψ(a) + ψ*(−b)`
    pub fn value(&self, a: &[f64], b: &[f64]) -> Result<ExtendedReal> {
        check_dim(self.dim, a.len())?;
        check_dim(self.dim, b.len())?;
        let nb: Vec<f64> = b.iter().map(|v| -v).collect();
        Ok(self.psi.value(a)? + self.psi.conjugate(&nb)?)
    }

    /// `ℓ(a, b) + ⟨a, b⟩ ≥ 0`, computed without cancellation for smooth kinds.
    pub fn gap(&self, a: &[f64], b: &[f64]) -> Result<ExtendedReal> {
        check_dim(self.dim, a.len())?;
        check_dim(self.dim, b.len())?;
        let nb: Vec<f64> = b.iter().map(|v| -v).collect();
        self.psi.fenchel_gap(a, &nb)
    }

    /// Gradients `(∂_a ℓ, ∂_b ℓ) = (∂ψ(a), −∂ψ*(−b))` for smooth kinds.
    pub fn gradient(&self, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.is_smooth() {
            return Err(Error::Unsupported(format!(
                "{:?} boundary is not differentiable; enforce it on the parameterization",
                self.kind
            )));
        }
        let nb: Vec<f64> = b.iter().map(|v| -v).collect();
        let ga = self.psi.subgradient(a)?;
        let gb = self.psi.conjugate_gradient(&nb)?.into_iter().map(|v| -v).collect();
        Ok((ga, gb))
    }
}

/// `ℓ(u0 − uT, (u0 + uT)/2)`, the boundary term of the path functional.
pub fn boundary_value(l: &BoundaryLagrangian, a: &[f64], b: &[f64]) -> Result<ExtendedReal> {
    l.value(a, b)
}

/// Distance from satisfying the boundary condition; zero iff it holds.
pub fn boundary_residual(l: &BoundaryLagrangian, u0: &[f64], ut: &[f64]) -> Result<f64> {
    check_dim(l.dim, u0.len())?;
    check_dim(l.dim, ut.len())?;
    Ok(match &l.kind {
        BoundaryKind::Periodic => norm(&sub(u0, ut)),
        BoundaryKind::AntiPeriodic => norm(&add(u0, ut)),
        _ => {
            let g = l.psi.subgradient(&sub(u0, ut))?;
            let r: Vec<f64> = u0
                .iter()
                .zip(ut)
                .zip(&g)
                .map(|((a, b), c)| 0.5 * (a + b) + c)
                .collect();
            norm(&r)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn alpha_map() {
        assert_eq!(alpha_from_lambda(1.0 / 3.0), -0.5);
        assert_eq!(alpha_from_lambda(1.0), 0.0);
        assert_eq!(alpha_from_lambda(3.0), 0.5);
        assert_eq!(lambda_from_alpha(0.5).unwrap(), 3.0);
        assert!(lambda_from_alpha(1.0).is_err());
        assert!(make_boundary(BoundaryKind::AlphaPeriodic { lambda: 0.0 }, 2).is_err());
        assert!(make_boundary(BoundaryKind::AlphaPeriodic { lambda: -1.0 }, 2).is_err());
    }

    #[test]
    fn values_of_each_kind() {
        let per = make_boundary(BoundaryKind::Periodic, 2).unwrap();
        assert_eq!(per.value(&[0.0, 0.0], &[3.0, -1.0]).unwrap(), ExtendedReal::ZERO);
        assert!(per.value(&[0.1, 0.0], &[0.0, 0.0]).unwrap().is_pos_infinite());

        let anti = make_boundary(BoundaryKind::AntiPeriodic, 2).unwrap();
        assert_eq!(anti.value(&[5.0, 1.0], &[0.0, 0.0]).unwrap(), ExtendedReal::ZERO);
        assert!(anti.value(&[5.0, 1.0], &[0.0, 1e-3]).unwrap().is_pos_infinite());

        let lam = 3.0;
        let ap = make_boundary(BoundaryKind::AlphaPeriodic { lambda: lam }, 2).unwrap();
        let (a, b) = ([1.0, -2.0], [0.5, 0.25]);
        let expect = lam / 4.0 * 5.0 + (0.25 + 0.0625) / lam;
        assert!((ap.value(&a, &b).unwrap().to_f64() - expect).abs() < 1e-14);
    }

    #[test]
    fn alpha_conjugate_matches_grid_sup() {
        let lam = 3.0;
        let ap = make_boundary(BoundaryKind::AlphaPeriodic { lambda: lam }, 1).unwrap();
        for &p in &[-1.0, -0.3, 0.0, 0.7, 1.5] {
            let sup = (0..=40_000)
                .map(|i| -4.0 + 8.0 * i as f64 / 40_000.0)
                .map(|x| p * x - lam / 4.0 * x * x)
                .fold(f64::NEG_INFINITY, f64::max);
            let closed = ap.psi().conjugate(&[p]).unwrap().to_f64();
            assert!((sup - closed).abs() < 1e-7, "p={p}: {sup} vs {closed}");
        }
    }

    #[test]
    fn residual_examples() {
        let x0 = vec![1.0, -0.5, 2.0];
        let iv = make_boundary(BoundaryKind::InitialValue(x0.clone()), 3).unwrap();
        assert!(boundary_residual(&iv, &x0, &[9.0, 4.0, -3.0]).unwrap() < 1e-15);

        let ap = make_boundary(BoundaryKind::AlphaPeriodic { lambda: 3.0 }, 2).unwrap();
        assert!(boundary_residual(&ap, &[1.0, 0.0], &[2.0, 0.0]).unwrap() < 1e-15);

        let per = make_boundary(BoundaryKind::Periodic, 2).unwrap();
        assert_eq!(boundary_residual(&per, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(boundary_residual(&per, &[1.0, 2.0], &[1.0, 2.5]).unwrap() > 0.0);
    }

    fn kinds(dim: usize, rng: &mut ChaCha8Rng) -> Vec<BoundaryLagrangian> {
        let mut out = vec![
            make_boundary(BoundaryKind::InitialValue(rand_vec(rng, dim)), dim).unwrap(),
            make_boundary(BoundaryKind::Periodic, dim).unwrap(),
            make_boundary(BoundaryKind::AntiPeriodic, dim).unwrap(),
        ];
        for lam in [1.0 / 3.0, 1.0, 3.0] {
            out.push(make_boundary(BoundaryKind::AlphaPeriodic { lambda: lam }, dim).unwrap());
        }
        out
    }

    /// An endpoint pair satisfying the condition of `l`, plus the condition
    /// violation `‖u0 − target(uT)‖` of a perturbed copy.
    fn satisfying(l: &BoundaryLagrangian, rng: &mut ChaCha8Rng, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let ut = rand_vec(rng, dim);
        let u0 = match l.kind() {
            BoundaryKind::InitialValue(x0) => x0.clone(),
            _ => ut.iter().map(|v| l.alpha().unwrap() * v).collect(),
        };
        (u0, ut)
    }

    #[test]
    fn residual_vanishes_exactly_on_the_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dim = 6;
        for l in kinds(dim, &mut rng) {
            for _ in 0..100 {
                let (u0, ut) = satisfying(&l, &mut rng, dim);
                assert!(boundary_residual(&l, &u0, &ut).unwrap() <= 1e-10);
                let delta = rand_vec(&mut rng, dim);
                let bad: Vec<f64> = add(&u0, &delta);
                let r = boundary_residual(&l, &bad, &ut).unwrap();
                assert!(r >= 0.5 * norm(&delta) - 1e-12, "{:?}", l.kind());
            }
        }
    }

    #[test]
    fn selfdual_and_bounded_below() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 4;
        for l in kinds(dim, &mut rng) {
            for _ in 0..100 {
                let (q, r) = (rand_vec(&mut rng, dim), rand_vec(&mut rng, dim));
                let v = l.value(&q, &r).unwrap();
                let floor = match l.kind() {
                    BoundaryKind::InitialValue(x0) => -dot(x0, x0),
                    _ => 0.0,
                };
                assert!(v.to_f64() >= floor - 1e-12);
                if l.is_smooth() {
                    assert!(l.gap(&q, &r).unwrap().to_f64() >= 0.0);
                }
            }
        }
    }

    #[test]
    fn conjugate_of_ell_is_its_reflection() {
        // ℓ*(q, r) by grid sup over (a, b) against ℓ(−r, −q), in one dimension
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid: Vec<f64> = (0..=20_000).map(|i| -6.0 + 12.0 * i as f64 / 20_000.0).collect();
        for l in kinds(1, &mut rng).into_iter().filter(|l| l.is_smooth()) {
            for _ in 0..5 {
                let (q, r) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                let sup_a = grid
                    .iter()
                    .map(|&a| q * a - l.psi().value(&[a]).unwrap().to_f64())
                    .fold(f64::NEG_INFINITY, f64::max);
                let sup_b = grid
                    .iter()
                    .map(|&b| r * b - l.psi().conjugate(&[-b]).unwrap().to_f64())
                    .fold(f64::NEG_INFINITY, f64::max);
                let refl = l.value(&[-r], &[-q]).unwrap().to_f64();
                assert!((sup_a + sup_b - refl).abs() < 1e-5, "{:?}", l.kind());
            }
        }
    }

    #[test]
    fn smooth_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dim = 3;
        for l in kinds(dim, &mut rng).into_iter().filter(|l| l.is_smooth()) {
            let (a, b) = (rand_vec(&mut rng, dim), rand_vec(&mut rng, dim));
            let (ga, gb) = l.gradient(&a, &b).unwrap();
            let h = 1e-6;
            for i in 0..dim {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[i] += h;
                am[i] -= h;
                let fd = (l.value(&ap, &b).unwrap().to_f64() - l.value(&am, &b).unwrap().to_f64())
                    / (2.0 * h);
                assert!((fd - ga[i]).abs() < 1e-7);
                let mut bp = b.clone();
                let mut bm = b.clone();
                bp[i] += h;
                bm[i] -= h;
                let fd = (l.value(&a, &bp).unwrap().to_f64() - l.value(&a, &bm).unwrap().to_f64())
                    / (2.0 * h);
                assert!((fd - gb[i]).abs() < 1e-7);
            }
        }
        let per = make_boundary(BoundaryKind::Periodic, 2).unwrap();
        assert!(per.gradient(&[0.0, 0.0], &[0.0, 0.0]).is_err());
    }
}
