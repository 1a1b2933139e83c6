//! Anti-selfdual Lagrangians as values: evaluation, conjugation, Hamiltonians,
//! derived vector fields, `⊕`-composition and λ-regularizations.
//!
//! Three evaluation routes exist, chosen per kind:
//!
//! * potential forms (`φ(x) + φ*(−p)` and the skew variant) evaluate through
//!   [`ConvexPotential`] directly, for any potential and dimension;
//! * compositions and regularizations of quadratic potentials reduce to a
//!   [`QuadraticLagrangian`] in `(x, p)` and are evaluated in closed form by
//!   partial minimization (Schur complements);
//! * anything built on a [`TabulatedLagrangian`] is evaluated by brute force
//!   over its grid, ties broken by the smallest index.

use nalgebra::{DMatrix, DVector};

use crate::convex::ConvexPotential;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::extended::ExtendedReal;
use crate::linalg::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularizationVariant {
    /// `L¹_λ`: inf-convolution in the state variable.
    First,
    /// `L²_λ`: inf-convolution in the momentum variable.
    Second,
    /// `L^{1,2}_λ`: both at once (Hilbertian exponent only).
    Both,
}

/// A Lagrangian tabulated on a scalar grid `xs × ps`.
#[derive(Clone, Debug)]
pub struct TabulatedLagrangian {
    xs: Vec<f64>,
    ps: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedLagrangian {
    pub fn new(xs: Vec<f64>, ps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_dim(xs.len() * ps.len(), values.len())?;
        let sorted = |g: &[f64]| g.len() >= 2 && g.windows(2).all(|w| w[0] < w[1]);
        if !sorted(&xs) || !sorted(&ps) {
            return Err(Error::InvalidArgument(
                "tabulated Lagrangian grids must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("tabulated Lagrangian values".into()));
        }
        Ok(Self { xs, ps, values })
    }

    pub fn from_fn(xs: Vec<f64>, ps: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = xs
            .iter()
            .flat_map(|&x| ps.iter().map(move |&p| (x, p)))
            .map(|(x, p)| f(x, p))
            .collect();
        Self::new(xs, ps, values)
    }

    /// Tabulates `φ(x) + φ*(−p)` for a scalar potential.
    pub fn from_potential(phi: &ConvexPotential, xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(xs.len() * ps.len());
        for &x in &xs {
            let v = phi.value(&[x])?;
            for &p in &ps {
                values.push((v + phi.conjugate(&[-p])?).to_f64());
            }
        }
        Self::new(xs, ps, values)
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.xs
    }

    pub fn p_grid(&self) -> &[f64] {
        &self.ps
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ps.len() + j]
    }

    /// Bilinear interpolation; `+∞` outside the grid.
    pub fn value(&self, x: f64, p: f64) -> ExtendedReal {
        let loc = |g: &[f64], v: f64| -> Option<(usize, f64)> {
            let n = g.len();
            if !(v >= g[0] && v <= g[n - 1]) {
                return None;
            }
            let i = g.partition_point(|&t| t <= v).clamp(1, n - 1) - 1;
            Some((i, (v - g[i]) / (g[i + 1] - g[i])))
        };
        match (loc(&self.xs, x), loc(&self.ps, p)) {
            (Some((i, s)), Some((j, t))) => {
                let corners = [
                    ((1.0 - s) * (1.0 - t), self.at(i, j)),
                    (s * (1.0 - t), self.at(i + 1, j)),
                    ((1.0 - s) * t, self.at(i, j + 1)),
                    (s * t, self.at(i + 1, j + 1)),
                ];
                let mut acc = 0.0;
                for (w, v) in corners {
                    if w > 0.0 {
                        if v == f64::INFINITY {
                            return ExtendedReal::PosInfinity;
                        }
                        acc += w * v;
                    }
                }
                ExtendedReal::Finite(acc)
            }
            _ => ExtendedReal::PosInfinity,
        }
    }

    /// Discretization tolerance `(max Δ²ₓ + max Δ²ₚ)/4`: a discrete supremum
    /// of a smooth concave profile loses at most half of this, and bilinear
    /// interpolation of a smooth convex table overshoots by at most the
    /// other half.
    pub fn grid_tol(&self) -> f64 {
        let (nx, np) = (self.xs.len(), self.ps.len());
        let mut dx: f64 = 0.0;
        let mut dp: f64 = 0.0;
        for i in 0..nx {
            for j in 0..np {
                if i > 0 && i + 1 < nx {
                    let d = self.at(i - 1, j) - 2.0 * self.at(i, j) + self.at(i + 1, j);
                    if d.is_finite() {
                        dx = dx.max(d.abs());
                    }
                }
                if j > 0 && j + 1 < np {
                    let d = self.at(i, j - 1) - 2.0 * self.at(i, j) + self.at(i, j + 1);
                    if d.is_finite() {
                        dp = dp.max(d.abs());
                    }
                }
            }
        }
        (dx + dp) / 4.0
    }
}

/// `L(z) = ½zᵀQz + cᵀz + c₀` for `z = (x, p) ∈ R^{2n}`.
#[derive(Clone, Debug)]
pub struct QuadraticLagrangian {
    n: usize,
    q: DMatrix<f64>,
    c: DVector<f64>,
    c0: f64,
}

/// Minimizes the trailing `m` variables out of a convex quadratic.
fn eliminate_trailing(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    c0: f64,
    m: usize,
) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let k = q.nrows() - m;
    let qzz = q.view((0, 0), (k, k));
    let qzy = q.view((0, k), (k, m));
    let qyy = q.view((k, k), (m, m)).into_owned();
    let cz = c.rows(0, k);
    let cy = c.rows(k, m);
    let chol = qyy.cholesky().ok_or_else(|| {
        Error::Unsupported("partial minimization of a non-coercive quadratic".into())
    })?;
    let qyy_inv_qyz = chol.solve(&qzy.transpose());
    let qyy_inv_cy = chol.solve(&cy.into_owned());
    let q_new = qzz - qzy * &qyy_inv_qyz;
    let c_new = cz - qzy * &qyy_inv_cy;
    let c0_new = c0 - 0.5 * cy.dot(&qyy_inv_cy);
    // symmetrize against round-off
    let q_sym = (&q_new + q_new.transpose()) * 0.5;
    Ok((q_sym, c_new, c0_new))
}

impl QuadraticLagrangian {
    fn from_parts(n: usize, q: DMatrix<f64>, c: DVector<f64>, c0: f64) -> Self {
        Self { n, q, c, c0 }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn z(x: &[f64], p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len() + p.len(), x.iter().chain(p).copied())
    }

    pub fn value(&self, x: &[f64], p: &[f64]) -> f64 {
        let z = Self::z(x, p);
        0.5 * z.dot(&(&self.q * &z)) + self.c.dot(&z) + self.c0
    }

    /// `L*(q, y)`; requires `Q` positive definite.
    pub fn conjugate(&self, q: &[f64], y: &[f64]) -> Result<f64> {
        let w = Self::z(q, y) - &self.c;
        let chol = self.q.clone().cholesky().ok_or_else(|| {
            Error::Unsupported("conjugate of a degenerate quadratic Lagrangian".into())
        })?;
        Ok(0.5 * w.dot(&chol.solve(&w)) - self.c0)
    }

    /// `H(x, y) = sup_p ⟨y, p⟩ − L(x, p)`.
    pub fn hamiltonian(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let n = self.n;
        let xv = DVector::from_column_slice(x);
        let yv = DVector::from_column_slice(y);
        let qxx = self.q.view((0, 0), (n, n));
        let qpx = self.q.view((n, 0), (n, n));
        let qpp = self.q.view((n, n), (n, n)).into_owned();
        let chol = qpp.cholesky().ok_or_else(|| {
            Error::Unsupported("Hamiltonian of a quadratic degenerate in p".into())
        })?;
        let b = qpx * &xv + self.c.rows(n, n) - &yv;
        let base = 0.5 * xv.dot(&(qxx * &xv)) + self.c.rows(0, n).dot(&xv) + self.c0;
        Ok(-(base - 0.5 * b.dot(&chol.solve(&b))))
    }

    /// Minimizer of `p ↦ L(x, −p) − ⟨x, p⟩`.
    pub fn derived_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let xv = DVector::from_column_slice(x);
        let qpx = self.q.view((n, 0), (n, n));
        let qpp = self.q.view((n, n), (n, n)).into_owned();
        let chol = qpp
            .cholesky()
            .ok_or_else(|| Error::Unsupported("derived field of a degenerate quadratic".into()))?;
        let rhs = qpx * &xv + self.c.rows(n, n) + &xv;
        Ok(chol.solve(&rhs).iter().copied().collect())
    }

    /// Pulls the quadratic back along `z = S w`.
    fn pullback(&self, s: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
        (s.transpose() * &self.q * s, s.transpose() * &self.c)
    }

    fn oplus(&self, other: &QuadraticLagrangian) -> Result<QuadraticLagrangian> {
        let n = self.n;
        check_dim(n, other.n)?;
        // w = (x, p, r); L(x, r) + M(x, p − r), then inf over r
        let eye = DMatrix::<f64>::identity(n, n);
        let mut s_l = DMatrix::zeros(2 * n, 3 * n);
        s_l.view_mut((0, 0), (n, n)).copy_from(&eye);
        s_l.view_mut((n, 2 * n), (n, n)).copy_from(&eye);
        let mut s_m = DMatrix::zeros(2 * n, 3 * n);
        s_m.view_mut((0, 0), (n, n)).copy_from(&eye);
        s_m.view_mut((n, n), (n, n)).copy_from(&eye);
        s_m.view_mut((n, 2 * n), (n, n)).copy_from(&(-&eye));
        let (ql, cl) = self.pullback(&s_l);
        let (qm, cm) = other.pullback(&s_m);
        let (q, c, c0) = eliminate_trailing(&(ql + qm), &(cl + cm), self.c0 + other.c0, n)?;
        Ok(Self::from_parts(n, q, c, c0))
    }

    fn regularize(&self, lambda: f64, variant: RegularizationVariant) -> Result<QuadraticLagrangian> {
        let n = self.n;
        let eye = DMatrix::<f64>::identity(n, n);
        // block helpers over w split into `blocks` n-sized slots
        let add_block = |q: &mut DMatrix<f64>, i: usize, j: usize, a: f64| {
            let mut v = q.view_mut((i * n, j * n), (n, n));
            v += &eye * a;
        };
        let inv = 1.0 / lambda;
        let (q, c, c0, eliminated) = match variant {
            RegularizationVariant::First => {
                // w = (x, r, y): L(y, r) + |x−y|²/2λ + λ|r|²/2
                let mut s = DMatrix::zeros(2 * n, 3 * n);
                s.view_mut((0, 2 * n), (n, n)).copy_from(&eye);
                s.view_mut((n, n), (n, n)).copy_from(&eye);
                let (mut q, c) = self.pullback(&s);
                add_block(&mut q, 0, 0, inv);
                add_block(&mut q, 2, 2, inv);
                add_block(&mut q, 0, 2, -inv);
                add_block(&mut q, 2, 0, -inv);
                add_block(&mut q, 1, 1, lambda);
                (q, c, self.c0, n)
            }
            RegularizationVariant::Second => {
                // w = (x, r, s): L(x, s) + |r−s|²/2λ + λ|x|²/2
                let mut s = DMatrix::zeros(2 * n, 3 * n);
                s.view_mut((0, 0), (n, n)).copy_from(&eye);
                s.view_mut((n, 2 * n), (n, n)).copy_from(&eye);
                let (mut q, c) = self.pullback(&s);
                add_block(&mut q, 1, 1, inv);
                add_block(&mut q, 2, 2, inv);
                add_block(&mut q, 1, 2, -inv);
                add_block(&mut q, 2, 1, -inv);
                add_block(&mut q, 0, 0, lambda);
                (q, c, self.c0, n)
            }
            RegularizationVariant::Both => {
                // w = (x, r, y, s):
                // L(y, s) + |x−y|²/2λ + λ|r|²/2 + |s−r|²/2λ + λ|y|²/2
                let mut s = DMatrix::zeros(2 * n, 4 * n);
                s.view_mut((0, 2 * n), (n, n)).copy_from(&eye);
                s.view_mut((n, 3 * n), (n, n)).copy_from(&eye);
                let (mut q, c) = self.pullback(&s);
                add_block(&mut q, 0, 0, inv);
                add_block(&mut q, 2, 2, inv);
                add_block(&mut q, 0, 2, -inv);
                add_block(&mut q, 2, 0, -inv);
                add_block(&mut q, 1, 1, lambda);
                add_block(&mut q, 3, 3, inv);
                add_block(&mut q, 1, 1, inv);
                add_block(&mut q, 1, 3, -inv);
                add_block(&mut q, 3, 1, -inv);
                add_block(&mut q, 2, 2, lambda);
                (q, c, self.c0, 2 * n)
            }
        };
        let (q, c, c0) = eliminate_trailing(&q, &c, c0, eliminated)?;
        Ok(Self::from_parts(n, q, c, c0))
    }
}

/// Quadratic data `(A, f)` of `½xᵀAx + fᵀx` with diagonal `A > 0`.
fn quadratic_data(phi: &ConvexPotential, n: usize) -> Option<(DVector<f64>, DVector<f64>)> {
    match phi {
        ConvexPotential::QuadraticForm(q) if q.dim() == n => {
            if q.weights().iter().any(|w| *w <= 0.0) {
                return None;
            }
            let a = DVector::from_iterator(n, q.weights().iter().map(|w| w * q.scale()));
            let f = match q.linear() {
                Some(f) => DVector::from_column_slice(f),
                None => DVector::zeros(n),
            };
            Some((a, f))
        }
        ConvexPotential::ScaledSquare { lambda } if *lambda > 0.0 => {
            Some((DVector::from_element(n, 0.5 * lambda), DVector::zeros(n)))
        }
        _ => None,
    }
}

/// An anti-selfdual Lagrangian.
#[derive(Clone, Debug)]
pub enum AsdLagrangian {
    /// `φ(x) + φ*(−p)`
    Potential(ConvexPotential),
    /// `φ(x) + φ*(−Γx − p)`; anti-selfdual exactly when `Γ` is skew.
    SkewPotential {
        potential: ConvexPotential,
        skew: DMatrix<f64>,
    },
    /// `(L ⊕ M)(x, p) = inf_r L(x, r) + M(x, p − r)`
    Oplus(Box<AsdLagrangian>, Box<AsdLagrangian>),
    Regularized {
        base: Box<AsdLagrangian>,
        lambda: f64,
        variant: RegularizationVariant,
        exponent: f64,
    },
    Tabulated(TabulatedLagrangian),
}

/// A Hamiltonian value, flagged when `x` lies outside `Dom₁(L)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianValue {
    pub value: ExtendedReal,
    pub out_of_domain: bool,
}

impl AsdLagrangian {
    pub fn skew_potential(potential: ConvexPotential, skew: DMatrix<f64>) -> Result<Self> {
        if !skew.is_square() {
            return Err(Error::InvalidArgument("Γ must be square".into()));
        }
        if let Some(d) = potential.dim() {
            check_dim(d, skew.nrows())?;
        }
        Ok(AsdLagrangian::SkewPotential { potential, skew })
    }

    pub fn oplus(l: AsdLagrangian, m: AsdLagrangian) -> Self {
        AsdLagrangian::Oplus(Box::new(l), Box::new(m))
    }

    /// λ-regularization; `exponent` is the state-space exponent `p > 1`.
    pub fn regularize(
        self,
        lambda: f64,
        variant: RegularizationVariant,
        exponent: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("λ must be positive, got {lambda}")));
        }
        if !(exponent > 1.0) {
            return Err(Error::InvalidArgument(format!("exponent must exceed 1, got {exponent}")));
        }
        if variant == RegularizationVariant::Both && exponent != 2.0 {
            return Err(Error::InvalidArgument(
                "the two-sided regularization is Hilbertian (exponent 2)".into(),
            ));
        }
        Ok(AsdLagrangian::Regularized {
            base: Box::new(self),
            lambda,
            variant,
            exponent,
        })
    }

    /// Closed-form quadratic representation in dimension `n`, when one exists.
    pub fn to_quadratic(&self, n: usize) -> Option<QuadraticLagrangian> {
        match self {
            AsdLagrangian::Potential(phi) => {
                let (a, f) = quadratic_data(phi, n)?;
                let a_inv = a.map(|v| 1.0 / v);
                let mut q = DMatrix::zeros(2 * n, 2 * n);
                let mut c = DVector::zeros(2 * n);
                for i in 0..n {
                    q[(i, i)] = a[i];
                    q[(n + i, n + i)] = a_inv[i];
                    c[i] = f[i];
                    c[n + i] = a_inv[i] * f[i];
                }
                let c0 = 0.5 * f.component_mul(&a_inv).dot(&f);
                Some(QuadraticLagrangian::from_parts(n, q, c, c0))
            }
            AsdLagrangian::SkewPotential { potential, skew } => {
                if skew.nrows() != n {
                    return None;
                }
                let (a, f) = quadratic_data(potential, n)?;
                let a_inv = DMatrix::from_diagonal(&a.map(|v| 1.0 / v));
                // φ(x) + ½(Bz + f)ᵀA⁻¹(Bz + f) with B = [Γ, I]
                let mut b = DMatrix::zeros(n, 2 * n);
                b.view_mut((0, 0), (n, n)).copy_from(skew);
                b.view_mut((0, n), (n, n)).fill_with_identity();
                let mut q = b.transpose() * &a_inv * &b;
                let mut c = b.transpose() * (&a_inv * &f);
                for i in 0..n {
                    q[(i, i)] += a[i];
                    c[i] += f[i];
                }
                let c0 = 0.5 * f.dot(&(&a_inv * &f));
                Some(QuadraticLagrangian::from_parts(n, q, c, c0))
            }
            AsdLagrangian::Oplus(l, m) => l.to_quadratic(n)?.oplus(&m.to_quadratic(n)?).ok(),
            AsdLagrangian::Regularized {
                base,
                lambda,
                variant,
                exponent,
            } => {
                if *exponent != 2.0 {
                    return None;
                }
                base.to_quadratic(n)?.regularize(*lambda, *variant).ok()
            }
            AsdLagrangian::Tabulated(_) => None,
        }
    }

    /// The tabulated Lagrangian this value is built on, if any.
    fn grid(&self) -> Option<&TabulatedLagrangian> {
        match self {
            AsdLagrangian::Tabulated(t) => Some(t),
            AsdLagrangian::Oplus(l, m) => l.grid().or_else(|| m.grid()),
            AsdLagrangian::Regularized { base, .. } => base.grid(),
            _ => None,
        }
    }

    fn check_args(x: &[f64], p: &[f64]) -> Result<()> {
        check_dim(x.len(), p.len())?;
        check_finite("state", x)?;
        check_finite("momentum", p)
    }

    /// `L(x, p)`
    pub fn value(&self, x: &[f64], p: &[f64]) -> Result<ExtendedReal> {
        Self::check_args(x, p)?;
        match self {
            AsdLagrangian::Potential(phi) => {
                let neg_p: Vec<f64> = p.iter().map(|v| -v).collect();
                Ok(phi.value(x)? + phi.conjugate(&neg_p)?)
            }
            AsdLagrangian::SkewPotential { potential, skew } => {
                check_dim(skew.nrows(), x.len())?;
                let gx = skew * DVector::from_column_slice(x);
                let arg: Vec<f64> = gx.iter().zip(p).map(|(g, v)| -g - v).collect();
                Ok(potential.value(x)? + potential.conjugate(&arg)?)
            }
            _ => {
                if let Some(q) = self.to_quadratic(x.len()) {
                    return Ok(ExtendedReal::Finite(q.value(x, p)));
                }
                self.grid_value(x, p)
            }
        }
    }

    fn grid_value(&self, x: &[f64], p: &[f64]) -> Result<ExtendedReal> {
        let unsupported =
            || Error::Unsupported("no closed form and no grid for this composition".into());
        match self {
            AsdLagrangian::Tabulated(t) => {
                check_dim(1, x.len())?;
                Ok(t.value(x[0], p[0]))
            }
            AsdLagrangian::Oplus(l, m) => {
                check_dim(1, x.len())?;
                let grid = self.grid().ok_or_else(unsupported)?;
                let mut best = ExtendedReal::PosInfinity;
                for &r in grid.p_grid() {
                    let v = l.value(x, &[r])? + m.value(x, &[p[0] - r])?;
                    if v < best {
                        best = v;
                    }
                }
                Ok(best)
            }
            AsdLagrangian::Regularized {
                base,
                lambda,
                variant,
                exponent,
            } => {
                check_dim(1, x.len())?;
                let grid = self.grid().ok_or_else(unsupported)?;
                let (lam, pe) = (*lambda, *exponent);
                let qe = pe / (pe - 1.0);
                let (x, r) = (x[0], p[0]);
                let mut best = ExtendedReal::PosInfinity;
                match variant {
                    RegularizationVariant::First => {
                        let extra = lam.powf(qe - 1.0) * r.abs().powf(qe) / qe;
                        for &y in grid.x_grid() {
                            let v = base.value(&[y], &[r])?
                                + ((x - y).abs().powf(pe) / (lam * pe) + extra);
                            if v < best {
                                best = v;
                            }
                        }
                    }
                    RegularizationVariant::Second => {
                        let extra = lam.powf(pe - 1.0) * x.abs().powf(pe) / pe;
                        for &s in grid.p_grid() {
                            let v = base.value(&[x], &[s])?
                                + ((r - s).abs().powf(qe) / (lam * qe) + extra);
                            if v < best {
                                best = v;
                            }
                        }
                    }
                    RegularizationVariant::Both => {
                        for &y in grid.x_grid() {
                            for &s in grid.p_grid() {
                                let pen = (x - y).powi(2) / (2.0 * lam)
                                    + 0.5 * lam * r * r
                                    + (s - r).powi(2) / (2.0 * lam)
                                    + 0.5 * lam * y * y;
                                let v = base.value(&[y], &[s])? + pen;
                                if v < best {
                                    best = v;
                                }
                            }
                        }
                    }
                }
                Ok(best)
            }
            _ => Err(unsupported()),
        }
    }

    /// `L*(q, y) = sup_{x,p} ⟨q, x⟩ + ⟨y, p⟩ − L(x, p)`.
    pub fn conjugate(&self, q: &[f64], y: &[f64]) -> Result<ExtendedReal> {
        Self::check_args(q, y)?;
        match self {
            AsdLagrangian::Potential(phi) => {
                let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
                Ok(phi.conjugate(q)? + phi.value(&neg_y)?)
            }
            AsdLagrangian::SkewPotential { potential, skew } => {
                // φ*(q − Γᵀy) + φ(−y)
                let gty = skew.transpose() * DVector::from_column_slice(y);
                let arg: Vec<f64> = q.iter().zip(gty.iter()).map(|(a, b)| a - b).collect();
                let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
                Ok(potential.conjugate(&arg)? + potential.value(&neg_y)?)
            }
            _ => {
                if let Some(quad) = self.to_quadratic(q.len()) {
                    return Ok(ExtendedReal::Finite(quad.conjugate(q, y)?));
                }
                let grid = self.grid().ok_or_else(|| {
                    Error::Unsupported("conjugate needs a closed form or a grid".into())
                })?;
                check_dim(1, q.len())?;
                let mut best = ExtendedReal::NegInfinity;
                for &gx in grid.x_grid() {
                    for &gp in grid.p_grid() {
                        let v = -self.value(&[gx], &[gp])? + (q[0] * gx + y[0] * gp);
                        if v > best {
                            best = v;
                        }
                    }
                }
                Ok(best)
            }
        }
    }

    /// `H_L(x, y) = sup_p ⟨y, p⟩ − L(x, p)`.
    ///
    /// Outside `Dom₁(L)` the value is `−∞` and flagged.
    pub fn hamiltonian(&self, x: &[f64], y: &[f64]) -> Result<HamiltonianValue> {
        Self::check_args(x, y)?;
        let value = match self {
            AsdLagrangian::Potential(phi) => {
                let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
                let fx = phi.value(x)?;
                if fx.is_pos_infinite() {
                    ExtendedReal::NegInfinity
                } else {
                    phi.value(&neg_y)? + -fx
                }
            }
            AsdLagrangian::SkewPotential { potential, skew } => {
                let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
                let fx = potential.value(x)?;
                if fx.is_pos_infinite() {
                    ExtendedReal::NegInfinity
                } else {
                    let gx = skew * DVector::from_column_slice(x);
                    potential.value(&neg_y)? + -fx - dot(y, gx.as_slice())
                }
            }
            _ => {
                if let Some(q) = self.to_quadratic(x.len()) {
                    ExtendedReal::Finite(q.hamiltonian(x, y)?)
                } else {
                    let grid = self.grid().ok_or_else(|| {
                        Error::Unsupported("Hamiltonian needs a closed form or a grid".into())
                    })?;
                    check_dim(1, x.len())?;
                    let mut best = ExtendedReal::NegInfinity;
                    for &gp in grid.p_grid() {
                        let v = -self.value(x, &[gp])? + y[0] * gp;
                        if v > best {
                            best = v;
                        }
                    }
                    best
                }
            }
        };
        Ok(HamiltonianValue {
            value,
            out_of_domain: value == ExtendedReal::NegInfinity,
        })
    }

    /// The unique `p` with `L(x, −p) − ⟨x, p⟩ = 0`, for smooth kinds.
    ///
    /// On tabulated Lagrangians the grid minimizer of the gap is refined by a
    /// golden-section search over its neighbouring cells.
    pub fn derived_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_finite("state", x)?;
        match self {
            AsdLagrangian::Potential(phi) => phi.subgradient(x),
            AsdLagrangian::SkewPotential { potential, skew } => {
                let gx = skew * DVector::from_column_slice(x);
                let mut g = potential.subgradient(x)?;
                for (gi, v) in g.iter_mut().zip(gx.iter()) {
                    *gi += v;
                }
                Ok(g)
            }
            _ => {
                if let Some(q) = self.to_quadratic(x.len()) {
                    return q.derived_field(x);
                }
                let grid = self.grid().ok_or_else(|| {
                    Error::Unsupported("derived field needs a closed form or a grid".into())
                })?;
                check_dim(1, x.len())?;
                let ps = grid.p_grid();
                let gap = |p: f64| -> Result<f64> {
                    Ok((self.value(x, &[-p])? - x[0] * p).to_f64())
                };
                let mut best = (f64::INFINITY, 0);
                for (j, &gp) in ps.iter().enumerate() {
                    let g = gap(gp)?;
                    if g < best.0 {
                        best = (g, j);
                    }
                }
                if best.0 == f64::INFINITY {
                    return Err(Error::Unsupported("empty derived field on the grid".into()));
                }
                // golden-section refinement inside the neighbouring grid cells
                let j = best.1;
                let (mut lo, mut hi) = (ps[j.saturating_sub(1)], ps[(j + 1).min(ps.len() - 1)]);
                let ratio = 0.5 * (5f64.sqrt() - 1.0);
                let mut a = hi - ratio * (hi - lo);
                let mut b = lo + ratio * (hi - lo);
                let (mut ga, mut gb) = (gap(a)?, gap(b)?);
                while hi - lo > 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
                    if ga <= gb {
                        hi = b;
                        b = a;
                        gb = ga;
                        a = hi - ratio * (hi - lo);
                        ga = gap(a)?;
                    } else {
                        lo = a;
                        a = b;
                        ga = gb;
                        b = lo + ratio * (hi - lo);
                        gb = gap(b)?;
                    }
                }
                let refined = 0.5 * (lo + hi);
                Ok(vec![if gap(refined)? <= best.0 { refined } else { ps[j] }])
            }
        }
    }

    /// `max |L*(p, x) − L(−x, −p)|` over the samples; `+∞` when exactly one
    /// side is infinite.
    pub fn selfduality_residual(&self, samples: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (x, p) in samples {
            let lhs = self.conjugate(p, x)?;
            let nx: Vec<f64> = x.iter().map(|v| -v).collect();
            let np: Vec<f64> = p.iter().map(|v| -v).collect();
            let rhs = self.value(&nx, &np)?;
            let r = match (lhs, rhs) {
                (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => (a - b).abs(),
                (a, b) if a == b => 0.0,
                _ => f64::INFINITY,
            };
            worst = worst.max(r);
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::QuadraticForm;
    use proptest::prelude::*;

    fn fin(v: ExtendedReal) -> f64 {
        v.value().expect("finite")
    }

    fn half_square(n: usize) -> ConvexPotential {
        ConvexPotential::QuadraticForm(QuadraticForm::isotropic(n, 1.0, None).unwrap())
    }

    fn rotation() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
    }

    fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn potential_equality_case() {
        let l = AsdLagrangian::Potential(half_square(2));
        assert_eq!(fin(l.value(&[1.0, 0.0], &[-1.0, 0.0]).unwrap()), 1.0);
        // derived field {e1}: L(e1, −e1) − ⟨e1, e1⟩ = 0
        let gap = fin(l.value(&[1.0, 0.0], &[-1.0, 0.0]).unwrap()) - 1.0;
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn skew_potential_value() {
        let l = AsdLagrangian::skew_potential(half_square(2), rotation()).unwrap();
        assert!((fin(l.value(&[1.0, 0.0], &[0.0, 0.0]).unwrap()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn indicator_potential_at_origin() {
        let l = AsdLagrangian::Potential(ConvexPotential::Indicator {
            point: vec![0.0, 0.0],
        });
        assert_eq!(l.value(&[0.0, 0.0], &[3.0, -2.0]).unwrap(), ExtendedReal::ZERO);
        let h = l.hamiltonian(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(h.out_of_domain);
        assert_eq!(h.value, ExtendedReal::NegInfinity);
    }

    #[test]
    fn potential_hamiltonian_closed_form() {
        let l = AsdLagrangian::Potential(half_square(2));
        let h = l.hamiltonian(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(fin(h.value), 0.0);
        // matches the quadratic Schur route
        let q = l.to_quadratic(2).unwrap();
        let x = [0.3, -1.2];
        let y = [0.8, 0.1];
        let a = fin(l.hamiltonian(&x, &y).unwrap().value);
        assert!((a - q.hamiltonian(&x, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn derived_fields() {
        let phi = ConvexPotential::QuadraticForm(
            QuadraticForm::new(vec![1.0, 3.0].into(), Some(vec![0.2, -0.1].into()), 0.5).unwrap(),
        );
        let x = [0.4, -0.9];
        let pot = AsdLagrangian::Potential(phi.clone());
        assert_eq!(pot.derived_field(&x).unwrap(), phi.subgradient(&x).unwrap());

        let skew = AsdLagrangian::skew_potential(phi.clone(), rotation()).unwrap();
        let g = skew.derived_field(&x).unwrap();
        let sub = phi.subgradient(&x).unwrap();
        assert!((g[0] - (sub[0] - x[1])).abs() < 1e-15);
        assert!((g[1] - (sub[1] + x[0])).abs() < 1e-15);
        // the quadratic route agrees
        let q = skew.to_quadratic(2).unwrap().derived_field(&x).unwrap();
        assert!((q[0] - g[0]).abs() < 1e-12 && (q[1] - g[1]).abs() < 1e-12);
    }

    #[test]
    fn second_regularization_shifts_derived_field() {
        let lambda = 0.3;
        let l = AsdLagrangian::Potential(half_square(2))
            .regularize(lambda, RegularizationVariant::Second, 2.0)
            .unwrap();
        let x = [0.7, -0.2];
        let g = l.derived_field(&x).unwrap();
        for i in 0..2 {
            assert!((g[i] - (x[i] + lambda * x[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_oplus_matches_grid_brute_force() {
        let phi = ConvexPotential::QuadraticForm(
            QuadraticForm::isotropic(1, 2.0, Some(vec![0.3])).unwrap(),
        );
        let gamma = ConvexPotential::QuadraticForm(
            QuadraticForm::isotropic(1, 0.5, Some(vec![-0.2])).unwrap(),
        );
        let l = AsdLagrangian::Potential(phi.clone());
        let m = AsdLagrangian::Potential(gamma.clone());
        let sum = AsdLagrangian::oplus(l.clone(), m.clone());
        let rs = uniform(-6.0, 6.0, 1_200_001);
        for &(x, p) in &[(0.0, 0.0), (0.5, -1.0), (-1.2, 0.8), (2.0, 1.5)] {
            let closed = fin(sum.value(&[x], &[p]).unwrap());
            let brute = rs
                .iter()
                .map(|&r| fin(l.value(&[x], &[r]).unwrap()) + fin(m.value(&[x], &[p - r]).unwrap()))
                .fold(f64::INFINITY, f64::min);
            assert!((closed - brute).abs() < 1e-8, "({x},{p}): {closed} vs {brute}");
        }
    }

    #[test]
    fn tabulated_oplus_is_exact_grid_minimum() {
        let xs = uniform(-2.0, 2.0, 41);
        let ps = uniform(-4.0, 4.0, 81);
        let lt = TabulatedLagrangian::from_potential(&half_square(1), xs.clone(), ps.clone()).unwrap();
        let phi2 = ConvexPotential::power_norm(4.0, 1.0).unwrap();
        let mt = TabulatedLagrangian::from_potential(&phi2, xs.clone(), ps.clone()).unwrap();
        let sum = AsdLagrangian::oplus(
            AsdLagrangian::Tabulated(lt.clone()),
            AsdLagrangian::Tabulated(mt.clone()),
        );
        for &i in &[0usize, 10, 20, 33, 40] {
            for &j in &[0usize, 25, 40, 61, 80] {
                let (x, p) = (xs[i], ps[j]);
                let got = sum.value(&[x], &[p]).unwrap();
                let mut brute = ExtendedReal::PosInfinity;
                for &r in &ps {
                    brute = brute.min(lt.value(x, r) + mt.value(x, p - r));
                }
                assert_eq!(got, brute);
            }
        }
    }

    #[test]
    fn non_skew_gamma_breaks_selfduality() {
        let gamma = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 1.0, 0.3]);
        let l = AsdLagrangian::skew_potential(half_square(2), gamma).unwrap();
        let samples = vec![
            (vec![1.0, 0.5], vec![-0.3, 0.7]),
            (vec![-0.4, 1.2], vec![0.9, 0.1]),
        ];
        assert!(l.selfduality_residual(&samples).unwrap() > 0.1);
    }

    #[test]
    fn tabulated_second_regularization_field() {
        let xs = uniform(-2.0, 2.0, 81);
        let ps = uniform(-5.0, 5.0, 201);
        let base = TabulatedLagrangian::from_potential(&half_square(1), xs.clone(), ps).unwrap();
        for &pe in &[2.0, 3.0] {
            for &lambda in &[0.5, 1.0] {
                let l = AsdLagrangian::Tabulated(base.clone())
                    .regularize(lambda, RegularizationVariant::Second, pe)
                    .unwrap();
                for &i in &[20usize, 30, 46, 64] {
                    let x = xs[i];
                    let got = l.derived_field(&[x]).unwrap()[0];
                    let expect = x + lambda.powf(pe - 1.0) * x.abs().powf(pe - 2.0) * x;
                    assert!((got - expect).abs() < 1e-6, "p={pe} λ={lambda} x={x}: {got} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn tabulated_selfduality_within_grid_tolerance() {
        let xs = uniform(-2.0, 2.0, 81);
        let ps = uniform(-4.0, 4.0, 161);
        let t = TabulatedLagrangian::from_potential(&half_square(1), xs.clone(), ps.clone()).unwrap();
        let tol = t.grid_tol();
        let l = AsdLagrangian::Tabulated(t);
        let samples: Vec<(Vec<f64>, Vec<f64>)> = [(0usize, 80usize), (20, 60), (40, 40), (55, 100), (70, 10)]
            .iter()
            .map(|&(i, j)| (vec![xs[i] / 2.0_f64.max(1.0)], vec![ps[j] / 2.0]))
            .collect();
        assert!(l.selfduality_residual(&samples).unwrap() <= tol);
    }

    #[test]
    fn tabulated_regularization_converges_as_lambda_shrinks() {
        // the grid must resolve the O(λ) shift of the inner minimizer, so each
        // λ gets a window of half-width 10λ with spacing λ^{3/2}/2
        let (x, p) = (0.5, -0.25);
        let exact = 0.5 * x * x + 0.5 * p * p;
        let mut prev = f64::INFINITY;
        for &lambda in &[1e-1, 1e-2, 1e-3] {
            let w: f64 = 10.0 * lambda;
            let h = 0.5 * lambda.powf(1.5);
            let m = (2.0 * w / h).ceil() as usize + 1;
            let l = AsdLagrangian::Tabulated(
                TabulatedLagrangian::from_potential(
                    &half_square(1),
                    uniform(x - w, x + w, m),
                    uniform(p - w, p + w, m),
                )
                .unwrap(),
            )
            .regularize(lambda, RegularizationVariant::Both, 2.0)
            .unwrap();
            let err = (fin(l.value(&[x], &[p]).unwrap()) - exact).abs();
            assert!(err < prev, "λ={lambda}: {err} ≥ {prev}");
            prev = err;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn oplus_sup_form_on_a_grid() {
        // L⊕M(x, p) = sup_y ⟨y, −p⟩ + H_L(y, −x) + H_M(y, −x)
        let phi = ConvexPotential::QuadraticForm(QuadraticForm::isotropic(1, 2.0, Some(vec![0.3])).unwrap());
        let gamma = ConvexPotential::QuadraticForm(QuadraticForm::isotropic(1, 0.5, Some(vec![-0.2])).unwrap());
        let l = AsdLagrangian::Potential(phi);
        let m = AsdLagrangian::Potential(gamma);
        let sum = AsdLagrangian::oplus(l.clone(), m.clone());
        let ys = uniform(-8.0, 8.0, 160_001);
        for &(x, p) in &[(0.0, 0.0), (0.5, -1.0), (-1.2, 0.8), (2.0, 1.5)] {
            let sup = ys
                .iter()
                .map(|&y| {
                    -y * p
                        + fin(l.hamiltonian(&[y], &[-x]).unwrap().value)
                        + fin(m.hamiltonian(&[y], &[-x]).unwrap().value)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let closed = fin(sum.value(&[x], &[p]).unwrap());
            assert!((sup - closed).abs() < 1e-8, "({x},{p}): {sup} vs {closed}");
        }
    }

    #[test]
    fn gap_grows_quadratically_off_the_derived_field() {
        // the gap is smooth and vanishes to second order, so it separates p
        // from ∂̄L(x) at the scale √gap
        for l in closed_form_catalog() {
            let x = [0.6, -0.8];
            let d = l.derived_field(&x).unwrap();
            for &delta in &[1e-2, 1e-1] {
                let p = [d[0] + delta, d[1]];
                let gap = fin(l.value(&x, &[-p[0], -p[1]]).unwrap()) - dot(&x, &p);
                assert!(gap > 0.0 && gap >= 1e-3 * delta * delta, "{l:?}: {gap}");
            }
        }
    }

    fn closed_form_catalog() -> Vec<AsdLagrangian> {
        let phi = ConvexPotential::QuadraticForm(
            QuadraticForm::new(vec![1.0, 2.5].into(), Some(vec![0.3, -0.4].into()), 0.8).unwrap(),
        );
        let pot = AsdLagrangian::Potential(phi.clone());
        let skew = AsdLagrangian::skew_potential(phi, rotation() * 0.7).unwrap();
        let mut out = vec![
            pot.clone(),
            skew.clone(),
            AsdLagrangian::Potential(ConvexPotential::scaled_square(3.0).unwrap()),
            AsdLagrangian::Potential(ConvexPotential::power_norm(3.0, 1.5).unwrap()),
            AsdLagrangian::oplus(pot.clone(), skew.clone()),
        ];
        for variant in [
            RegularizationVariant::First,
            RegularizationVariant::Second,
            RegularizationVariant::Both,
        ] {
            out.push(pot.clone().regularize(0.4, variant, 2.0).unwrap());
            out.push(skew.clone().regularize(1.3, variant, 2.0).unwrap());
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn closed_forms_are_anti_selfdual(x in proptest::collection::vec(-2.0f64..2.0, 2),
                                          p in proptest::collection::vec(-2.0f64..2.0, 2),
                                          y in proptest::collection::vec(-2.0f64..2.0, 2)) {
            for l in closed_form_catalog() {
                let samples = vec![(x.clone(), p.clone())];
                prop_assert!(l.selfduality_residual(&samples).unwrap() <= 1e-8, "{l:?}");
                let lv = fin(l.value(&x, &p).unwrap());
                prop_assert!(lv + dot(&x, &p) >= -1e-10);
                let nx: Vec<f64> = x.iter().map(|v| -v).collect();
                let h_diag = fin(l.hamiltonian(&x, &nx).unwrap().value);
                prop_assert!(h_diag <= 1e-10);
                let ny: Vec<f64> = y.iter().map(|v| -v).collect();
                let h1 = fin(l.hamiltonian(&ny, &nx).unwrap().value);
                let h2 = fin(l.hamiltonian(&x, &y).unwrap().value);
                prop_assert!(h1 + h2 <= 1e-10);
            }
        }

        #[test]
        fn gap_vanishes_on_derived_field(x in proptest::collection::vec(-2.0f64..2.0, 2)) {
            for l in closed_form_catalog() {
                let d = l.derived_field(&x).unwrap();
                let nd: Vec<f64> = d.iter().map(|v| -v).collect();
                let gap = fin(l.value(&x, &nd).unwrap()) - dot(&x, &d);
                prop_assert!(gap.abs() <= 1e-8, "{l:?}: {gap}");
            }
        }

        #[test]
        fn first_regularization_field_bound(x in proptest::collection::vec(-3.0f64..3.0, 2),
                                            lambda in 0.05f64..5.0) {
            // bases with 0 in their derived field at the origin
            let bases = vec![
                AsdLagrangian::Potential(half_square(2)),
                AsdLagrangian::skew_potential(half_square(2), rotation()).unwrap(),
            ];
            for base in bases {
                let l = base.regularize(lambda, RegularizationVariant::First, 2.0).unwrap();
                let d = l.derived_field(&x).unwrap();
                prop_assert!(crate::linalg::norm(&d) <= crate::linalg::norm(&x) / lambda + 1e-8);
            }
        }
    }
}
