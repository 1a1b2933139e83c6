//! Convex potentials with value, subgradient and Legendre–Fenchel conjugate.
//!
//! Vectors are plain `f64` slices paired by the Euclidean inner product. A
//! spectral field flattened to interleaved `(re, im)` coefficients fits this
//! model directly, since its `H` inner product is the Euclidean one on those
//! coefficients.

use std::sync::Arc;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::extended::ExtendedReal;
use crate::linalg::{dot, norm, norm_sq};

/// `x ↦ (scale/2)·Σ wᵢxᵢ² + ⟨f, x⟩` for a diagonal multiplier `w ≥ 0`.
///
/// Coordinates with `wᵢ = 0` lie outside the space the form is defined on
/// (the kernel of the multiplier is quotiented out). They are skipped by the
/// value, the conjugate and the gap, and get a zero gradient.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    weights: Arc<[f64]>,
    linear: Option<Arc<[f64]>>,
    scale: f64,
}

impl QuadraticForm {
    pub fn new(weights: Arc<[f64]>, linear: Option<Arc<[f64]>>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "quadratic form scale must be positive, got {scale}"
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(
                "quadratic form weights must be finite and non-negative".into(),
            ));
        }
        if let Some(f) = &linear {
            check_dim(weights.len(), f.len())?;
            check_finite("linear term", f)?;
        }
        Ok(Self {
            weights,
            linear,
            scale,
        })
    }

    /// `(scale/2)‖x‖² + ⟨f, x⟩` with unit weights.
    pub fn isotropic(dim: usize, scale: f64, linear: Option<Vec<f64>>) -> Result<Self> {
        Self::new(
            vec![1.0; dim].into(),
            linear.map(Into::into),
            scale,
        )
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn linear(&self) -> Option<&[f64]> {
        self.linear.as_deref()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn lin(&self, i: usize) -> f64 {
        self.linear.as_ref().map_or(0.0, |f| f[i])
    }

    /// `Σ wᵢxᵢ²`
    pub fn weighted_norm_sq(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v * v).sum()
    }

    /// `Σ_{wᵢ>0} pᵢ²/wᵢ`, the dual norm of the multiplier.
    pub fn dual_norm_sq(&self, p: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(p)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, v)| v * v / w)
            .sum()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for (i, (&w, &v)) in self.weights.iter().zip(x).enumerate() {
            if w > 0.0 {
                quad += w * v * v;
                lin += self.lin(i) * v;
            }
        }
        0.5 * self.scale * quad + lin
    }

    fn conjugate(&self, p: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, (&w, &v)) in self.weights.iter().zip(p).enumerate() {
            if w > 0.0 {
                let s = v - self.lin(i);
                acc += s * s / w;
            }
        }
        acc / (2.0 * self.scale)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(x)
            .enumerate()
            .map(|(i, (&w, &v))| {
                if w > 0.0 {
                    self.scale * w * v + self.lin(i)
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn conjugate_gradient(&self, p: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(p)
            .enumerate()
            .map(|(i, (&w, &v))| {
                if w > 0.0 {
                    (v - self.lin(i)) / (self.scale * w)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Fenchel gap as a sum of squares: `(1/2s)·Σ (s·wᵢxᵢ + fᵢ − pᵢ)²/wᵢ`.
    fn gap(&self, x: &[f64], p: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, (&w, (&xv, &pv))) in self.weights.iter().zip(x.iter().zip(p)).enumerate() {
            if w > 0.0 {
                let r = self.scale * w * xv + self.lin(i) - pv;
                acc += r * r / w;
            }
        }
        acc / (2.0 * self.scale)
    }
}

/// Why a tabulated conjugate was not an exact transform of the input data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConjugateWarning {
    /// The samples were not convex; the conjugate is that of their convex hull.
    ConvexHullUsed,
}

/// A conjugate value together with any warning raised while computing it.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugateEval {
    pub value: ExtendedReal,
    pub warning: Option<ConjugateWarning>,
}

/// Lower convex hull of sorted 1D samples, with edge slopes for the discrete
/// Legendre transform.
#[derive(Clone, Debug)]
struct LowerHull {
    vertices: Vec<usize>,
    slopes: Vec<f64>,
}

impl LowerHull {
    fn build(xs: &[f64], values: &[f64]) -> Self {
        let mut vertices: Vec<usize> = Vec::with_capacity(xs.len());
        for i in 0..xs.len() {
            while vertices.len() >= 2 {
                let a = vertices[vertices.len() - 2];
                let b = vertices[vertices.len() - 1];
                // drop b if it lies on or above the chord a -> i
                let cross = (xs[b] - xs[a]) * (values[i] - values[a])
                    - (values[b] - values[a]) * (xs[i] - xs[a]);
                if cross <= 0.0 {
                    vertices.pop();
                } else {
                    break;
                }
            }
            vertices.push(i);
        }
        let slopes = vertices
            .windows(2)
            .map(|w| (values[w[1]] - values[w[0]]) / (xs[w[1]] - xs[w[0]]))
            .collect();
        Self { vertices, slopes }
    }

    /// Index of the sample maximizing `p·x − v`; smallest index on ties.
    fn argmax(&self, p: f64) -> usize {
        let j = self.slopes.partition_point(|&s| s < p);
        self.vertices[j]
    }
}

fn is_sorted_strict(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

fn hull_is_exact(xs: &[f64], values: &[f64], hull: &LowerHull) -> bool {
    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for w in hull.vertices.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let t = (xs[i] - xs[a]) / (xs[b] - xs[a]);
            let chord = values[a] + t * (values[b] - values[a]);
            if values[i] > chord + 1e-12 * scale {
                return false;
            }
        }
    }
    true
}

fn locate(xs: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = xs.len();
    if x < xs[0] || x > xs[n - 1] || x.is_nan() {
        return None;
    }
    let i = xs.partition_point(|&g| g <= x).clamp(1, n - 1) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    Some((i, t))
}

/// A convex function sampled on a sorted 1D grid.
#[derive(Clone, Debug)]
pub struct Tabulated1D {
    xs: Vec<f64>,
    values: Vec<f64>,
    hull: LowerHull,
    convex: bool,
}

impl Tabulated1D {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_dim(xs.len(), values.len())?;
        if xs.len() < 2 || !is_sorted_strict(&xs) {
            return Err(Error::InvalidArgument(
                "tabulated grid needs at least two strictly increasing nodes".into(),
            ));
        }
        check_finite("tabulated samples", &values)?;
        let hull = LowerHull::build(&xs, &values);
        let convex = hull_is_exact(&xs, &values, &hull);
        Ok(Self {
            xs,
            values,
            hull,
            convex,
        })
    }

    pub fn from_fn(xs: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn samples(&self) -> &[f64] {
        &self.values
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    fn value(&self, x: f64) -> ExtendedReal {
        match locate(&self.xs, x) {
            Some((i, t)) => {
                ExtendedReal::Finite((1.0 - t) * self.values[i] + t * self.values[i + 1])
            }
            None => ExtendedReal::PosInfinity,
        }
    }

    fn conjugate(&self, p: f64) -> f64 {
        let i = self.hull.argmax(p);
        p * self.xs[i] - self.values[i]
    }

    fn slope(&self, x: f64) -> Result<f64> {
        let (i, t) = locate(&self.xs, x)
            .ok_or_else(|| Error::InvalidArgument(format!("{x} outside tabulated range")))?;
        let seg = |j: usize| (self.values[j + 1] - self.values[j]) / (self.xs[j + 1] - self.xs[j]);
        let n = self.xs.len();
        if t == 0.0 && i > 0 {
            Ok(0.5 * (seg(i - 1) + seg(i)))
        } else if t == 1.0 && i + 2 < n {
            Ok(0.5 * (seg(i) + seg(i + 1)))
        } else {
            Ok(seg(i))
        }
    }
}

/// A convex function sampled on a tensor grid `xs × ys` (row-major in `x`).
#[derive(Clone, Debug)]
pub struct Tabulated2D {
    xs: Vec<f64>,
    ys: Vec<f64>,
    values: Vec<f64>,
    // one lower hull in x per fixed y column
    hulls: Vec<LowerHull>,
    convex: bool,
}

impl Tabulated2D {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_dim(xs.len() * ys.len(), values.len())?;
        if xs.len() < 2 || ys.len() < 2 || !is_sorted_strict(&xs) || !is_sorted_strict(&ys) {
            return Err(Error::InvalidArgument(
                "tabulated grid needs at least two strictly increasing nodes per axis".into(),
            ));
        }
        check_finite("tabulated samples", &values)?;
        let ny = ys.len();
        let mut hulls = Vec::with_capacity(ny);
        let mut convex = true;
        for iy in 0..ny {
            let col: Vec<f64> = (0..xs.len()).map(|ix| values[ix * ny + iy]).collect();
            let hull = LowerHull::build(&xs, &col);
            convex &= hull_is_exact(&xs, &col, &hull);
            hulls.push(hull);
        }
        for ix in 0..xs.len() {
            let row = &values[ix * ny..(ix + 1) * ny];
            convex &= hull_is_exact(&ys, row, &LowerHull::build(&ys, row));
        }
        Ok(Self {
            xs,
            ys,
            values,
            hulls,
            convex,
        })
    }

    pub fn from_fn(xs: Vec<f64>, ys: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = xs
            .iter()
            .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(xs, ys, values)
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.ys.len() + iy]
    }

    fn value(&self, x: f64, y: f64) -> ExtendedReal {
        match (locate(&self.xs, x), locate(&self.ys, y)) {
            (Some((i, s)), Some((j, t))) => ExtendedReal::Finite(
                (1.0 - s) * (1.0 - t) * self.at(i, j)
                    + s * (1.0 - t) * self.at(i + 1, j)
                    + (1.0 - s) * t * self.at(i, j + 1)
                    + s * t * self.at(i + 1, j + 1),
            ),
            _ => ExtendedReal::PosInfinity,
        }
    }

    /// `max_j [q·y_j + max_i (p·x_i − v_ij)]`, each inner max by hull search.
    fn conjugate(&self, p: f64, q: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for (iy, hull) in self.hulls.iter().enumerate() {
            let ix = hull.argmax(p);
            let v = q * self.ys[iy] + p * self.xs[ix] - self.at(ix, iy);
            if v > best {
                best = v;
            }
        }
        best
    }

    fn gradient(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        let out = || Error::InvalidArgument(format!("({x}, {y}) outside tabulated range"));
        let (i, s) = locate(&self.xs, x).ok_or_else(out)?;
        let (j, t) = locate(&self.ys, y).ok_or_else(out)?;
        let hx = self.xs[i + 1] - self.xs[i];
        let hy = self.ys[j + 1] - self.ys[j];
        let dx = ((1.0 - t) * (self.at(i + 1, j) - self.at(i, j))
            + t * (self.at(i + 1, j + 1) - self.at(i, j + 1)))
            / hx;
        let dy = ((1.0 - s) * (self.at(i, j + 1) - self.at(i, j))
            + s * (self.at(i + 1, j + 1) - self.at(i + 1, j)))
            / hy;
        Ok([dx, dy])
    }
}

#[derive(Clone, Debug)]
pub enum TabulatedConvex {
    OneD(Tabulated1D),
    TwoD(Tabulated2D),
}

impl TabulatedConvex {
    fn dim(&self) -> usize {
        match self {
            TabulatedConvex::OneD(_) => 1,
            TabulatedConvex::TwoD(_) => 2,
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            TabulatedConvex::OneD(t) => t.is_convex(),
            TabulatedConvex::TwoD(t) => t.is_convex(),
        }
    }
}

/// The catalog of convex potentials.
#[derive(Clone, Debug)]
pub enum ConvexPotential {
    QuadraticForm(QuadraticForm),
    /// `(λ/4)‖x‖²`; `λ = 0` is the zero potential.
    ScaledSquare { lambda: f64 },
    /// `(c/p)‖x‖ᵖ`
    PowerNorm { exponent: f64, coefficient: f64 },
    /// `0` at `point`, `+∞` elsewhere.
    Indicator { point: Vec<f64> },
    /// `base(x) + (ε/4)·(Σ wᵢxᵢ²)²` with the weights of `base`.
    QuarticNorm { epsilon: f64, base: QuadraticForm },
    Tabulated(TabulatedConvex),
}

impl ConvexPotential {
    pub fn scaled_square(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scaled square needs λ ≥ 0, got {lambda}"
            )));
        }
        Ok(ConvexPotential::ScaledSquare { lambda })
    }

    pub fn power_norm(exponent: f64, coefficient: f64) -> Result<Self> {
        if !(exponent > 1.0 && coefficient > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "power norm needs p > 1 and c > 0, got p={exponent}, c={coefficient}"
            )));
        }
        Ok(ConvexPotential::PowerNorm {
            exponent,
            coefficient,
        })
    }

    pub fn quartic(epsilon: f64, base: QuadraticForm) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "quartic coefficient must be ≥ 0, got {epsilon}"
            )));
        }
        Ok(ConvexPotential::QuarticNorm { epsilon, base })
    }

    /// Fixed dimension, if the kind carries one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ConvexPotential::QuadraticForm(q) => Some(q.dim()),
            ConvexPotential::QuarticNorm { base, .. } => Some(base.dim()),
            ConvexPotential::Indicator { point } => Some(point.len()),
            ConvexPotential::Tabulated(t) => Some(t.dim()),
            ConvexPotential::ScaledSquare { .. } | ConvexPotential::PowerNorm { .. } => None,
        }
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if let Some(d) = self.dim() {
            check_dim(d, v.len())?;
        }
        check_finite("potential argument", v)
    }

    /// `φ(x)`
    pub fn value(&self, x: &[f64]) -> Result<ExtendedReal> {
        self.check(x)?;
        Ok(match self {
            ConvexPotential::QuadraticForm(q) => ExtendedReal::Finite(q.value(x)),
            ConvexPotential::ScaledSquare { lambda } => {
                ExtendedReal::Finite(0.25 * lambda * norm_sq(x))
            }
            ConvexPotential::PowerNorm {
                exponent,
                coefficient,
            } => ExtendedReal::Finite(coefficient / exponent * norm(x).powf(*exponent)),
            ConvexPotential::Indicator { point } => {
                if x == point.as_slice() {
                    ExtendedReal::ZERO
                } else {
                    ExtendedReal::PosInfinity
                }
            }
            ConvexPotential::QuarticNorm { epsilon, base } => {
                let r2 = base.weighted_norm_sq(x);
                ExtendedReal::Finite(base.value(x) + 0.25 * epsilon * r2 * r2)
            }
            ConvexPotential::Tabulated(TabulatedConvex::OneD(t)) => t.value(x[0]),
            ConvexPotential::Tabulated(TabulatedConvex::TwoD(t)) => t.value(x[0], x[1]),
        })
    }

    /// `φ*(p) = sup_x ⟨p, x⟩ − φ(x)`
    pub fn conjugate(&self, p: &[f64]) -> Result<ExtendedReal> {
        Ok(self.conjugate_detailed(p)?.value)
    }

    /// Conjugate value plus a warning when tabulated data had to be convexified.
    pub fn conjugate_detailed(&self, p: &[f64]) -> Result<ConjugateEval> {
        self.check(p)?;
        let value = match self {
            ConvexPotential::QuadraticForm(q) => ExtendedReal::Finite(q.conjugate(p)),
            ConvexPotential::ScaledSquare { lambda } => {
                if *lambda > 0.0 {
                    ExtendedReal::Finite(norm_sq(p) / lambda)
                } else if p.iter().all(|v| *v == 0.0) {
                    ExtendedReal::ZERO
                } else {
                    ExtendedReal::PosInfinity
                }
            }
            ConvexPotential::PowerNorm {
                exponent,
                coefficient,
            } => {
                let q = exponent / (exponent - 1.0);
                ExtendedReal::Finite(coefficient.powf(1.0 - q) / q * norm(p).powf(q))
            }
            // affine: p ↦ ⟨p, point⟩
            ConvexPotential::Indicator { point } => ExtendedReal::Finite(dot(p, point)),
            ConvexPotential::QuarticNorm { epsilon, base } => {
                let s = shifted(base, p);
                let sigma = base.dual_norm_sq(&s).sqrt();
                let r = quartic_radius(base.scale(), *epsilon, sigma);
                ExtendedReal::Finite(
                    0.5 * base.scale() * r * r + 0.75 * epsilon * r * r * r * r,
                )
            }
            ConvexPotential::Tabulated(TabulatedConvex::OneD(t)) => {
                ExtendedReal::Finite(t.conjugate(p[0]))
            }
            ConvexPotential::Tabulated(TabulatedConvex::TwoD(t)) => {
                ExtendedReal::Finite(t.conjugate(p[0], p[1]))
            }
        };
        let warning = match self {
            ConvexPotential::Tabulated(t) if !t.is_convex() => {
                Some(ConjugateWarning::ConvexHullUsed)
            }
            _ => None,
        };
        Ok(ConjugateEval { value, warning })
    }

    /// `∂φ(x)` for the single-valued kinds.
    pub fn subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        match self {
            ConvexPotential::QuadraticForm(q) => Ok(q.gradient(x)),
            ConvexPotential::ScaledSquare { lambda } => Ok(x.iter().map(|v| 0.5 * lambda * v).collect()),
            ConvexPotential::PowerNorm {
                exponent,
                coefficient,
            } => {
                let r = norm(x);
                if r == 0.0 {
                    return Ok(vec![0.0; x.len()]);
                }
                let s = coefficient * r.powf(exponent - 2.0);
                Ok(x.iter().map(|v| s * v).collect())
            }
            ConvexPotential::Indicator { .. } => Err(Error::Unsupported(
                "the indicator subdifferential is set-valued; use the conjugate form".into(),
            )),
            ConvexPotential::QuarticNorm { epsilon, base } => {
                let r2 = base.weighted_norm_sq(x);
                let mut g = base.gradient(x);
                for ((gi, w), xi) in g.iter_mut().zip(base.weights()).zip(x) {
                    *gi += epsilon * r2 * w * xi;
                }
                Ok(g)
            }
            ConvexPotential::Tabulated(TabulatedConvex::OneD(t)) => Ok(vec![t.slope(x[0])?]),
            ConvexPotential::Tabulated(TabulatedConvex::TwoD(t)) => {
                Ok(t.gradient(x[0], x[1])?.to_vec())
            }
        }
    }

    /// `∂φ*(p)`, the maximizer of `⟨p, x⟩ − φ(x)`, for the smooth kinds.
    pub fn conjugate_gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check(p)?;
        match self {
            ConvexPotential::QuadraticForm(q) => Ok(q.conjugate_gradient(p)),
            ConvexPotential::ScaledSquare { lambda } if *lambda > 0.0 => {
                Ok(p.iter().map(|v| 2.0 * v / lambda).collect())
            }
            ConvexPotential::PowerNorm {
                exponent,
                coefficient,
            } => {
                let r = norm(p);
                if r == 0.0 {
                    return Ok(vec![0.0; p.len()]);
                }
                let q = exponent / (exponent - 1.0);
                let s = coefficient.powf(1.0 - q) * r.powf(q - 2.0);
                Ok(p.iter().map(|v| s * v).collect())
            }
            ConvexPotential::Indicator { point } => Ok(point.clone()),
            ConvexPotential::QuarticNorm { epsilon, base } => {
                let s = shifted(base, p);
                let sigma = base.dual_norm_sq(&s).sqrt();
                if sigma == 0.0 {
                    return Ok(vec![0.0; p.len()]);
                }
                let r = quartic_radius(base.scale(), *epsilon, sigma);
                let c = r / sigma;
                Ok(s
                    .iter()
                    .zip(base.weights())
                    .map(|(v, w)| if *w > 0.0 { c * v / w } else { 0.0 })
                    .collect())
            }
            _ => Err(Error::Unsupported(
                "conjugate is not differentiable for this potential".into(),
            )),
        }
    }

    /// `φ(x) + φ*(p) − ⟨x, p⟩`, non-negative by Fenchel–Young.
    ///
    /// Quadratic kinds use the closed sum-of-squares form so that values near
    /// zero carry no cancellation error.
    pub fn fenchel_gap(&self, x: &[f64], p: &[f64]) -> Result<ExtendedReal> {
        self.check(x)?;
        self.check(p)?;
        check_dim(x.len(), p.len())?;
        match self {
            ConvexPotential::QuadraticForm(q) => Ok(ExtendedReal::Finite(q.gap(x, p))),
            ConvexPotential::ScaledSquare { lambda } if *lambda > 0.0 => {
                let s: f64 = x
                    .iter()
                    .zip(p)
                    .map(|(a, b)| {
                        let r = 0.5 * lambda * a - b;
                        r * r
                    })
                    .sum();
                Ok(ExtendedReal::Finite(s / lambda))
            }
            _ => {
                Ok(self.value(x)? + self.conjugate(p)? - dot(x, p))
            }
        }
    }
}

fn shifted(base: &QuadraticForm, p: &[f64]) -> Vec<f64> {
    match base.linear() {
        Some(f) => p.iter().zip(f).map(|(a, b)| a - b).collect(),
        None => p.to_vec(),
    }
}

/// Positive root `r` of `ν·r + ε·r³ = σ`.
fn quartic_radius(nu: f64, eps: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    if eps == 0.0 {
        return sigma / nu;
    }
    // Newton from above the root decreases monotonically (convex residual).
    let mut r = (sigma / nu).min((sigma / eps).cbrt());
    for _ in 0..200 {
        let g = nu * r + eps * r * r * r - sigma;
        let step = g / (nu + 3.0 * eps * r * r);
        r -= step;
        if step.abs() <= 1e-16 * r {
            break;
        }
    }
    r
}
