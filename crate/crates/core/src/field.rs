//! Divergence-free vector fields on the periodic torus `[0, 2π)^d`.
//!
//! A field is stored as full complex Fourier coefficients, `d` component
//! blocks of `n^d` entries each, in FFT order (index `j` is wavenumber `j` for
//! `j < n/2` and `j − n` otherwise). With `u(x) = Σ û(k) e^{ik·x}` the norms of
//! the evolution triple `X ⊂ H ⊂ X*` are
//!
//! ```text
//! ‖u‖²_H  = Σ |û(k)|²
//! ‖u‖²_X  = Σ |k|² |û(k)|²
//! ‖p‖²_X* = Σ |k|⁻² |p̂(k)|²
//! ```
//!
//! Only modes with every `|k_a| ≤ k_max`, `3·k_max < n`, are ever populated,
//! so a product of two fields has no aliased content on retained modes. The
//! advection operator is therefore the exact Galerkin projection of `(u·∇)u`
//! and `⟨Λu, u⟩ = 0` up to round-off.
//!
//! Dual elements (forcing, advection output, gradients) use the same
//! representation; the pairing `⟨p, u⟩ = Σ Re(p̂ conj(û))` is the Euclidean
//! product of the interleaved `(re, im)` coefficients.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Multi-dimensional complex FFT built from 1D plans along each axis.
struct FftPlan {
    n: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPlan {
    fn new(n: usize, dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            dim,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let total = data.len();
        let mut lanes = vec![Complex64::default(); total];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                fft.process(data);
                continue;
            }
            let block = n * stride;
            // gather lanes contiguously, transform in one batch, scatter back
            let mut li = 0;
            for start in (0..total).step_by(block) {
                for off in 0..stride {
                    for k in 0..n {
                        lanes[li] = data[start + off + k * stride];
                        li += 1;
                    }
                }
            }
            fft.process(&mut lanes);
            li = 0;
            for start in (0..total).step_by(block) {
                for off in 0..stride {
                    for k in 0..n {
                        data[start + off + k * stride] = lanes[li];
                        li += 1;
                    }
                }
            }
        }
    }
}

/// Discretization of the torus: dimension, modes per axis and viscosity.
pub struct TorusGrid {
    dim: usize,
    n: usize,
    viscosity: f64,
    kmax: i64,
    wavevectors: Vec<[f64; 3]>,
    k2: Vec<f64>,
    retained: Vec<bool>,
    // index of the mode −k for every k
    mirror: Vec<usize>,
    fft: FftPlan,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("viscosity", &self.viscosity)
            .field("kmax", &self.kmax)
            .finish()
    }
}

fn freq(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize, viscosity: f64) -> Result<Arc<Self>> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "modes per axis must be a power of two ≥ 8, got {n}"
            )));
        }
        if !(viscosity > 0.0 && viscosity.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "viscosity must be positive, got {viscosity}"
            )));
        }
        let kmax = ((n - 1) / 3) as i64;
        let points = n.pow(dim as u32);
        let mut wavevectors = Vec::with_capacity(points);
        let mut k2 = Vec::with_capacity(points);
        let mut retained = Vec::with_capacity(points);
        let mut mirror = Vec::with_capacity(points);
        for idx in 0..points {
            let mut k = [0.0; 3];
            let mut kint = [0i64; 3];
            let mut rem = idx;
            let mut mir = 0usize;
            for a in (0..dim).rev() {
                let i = rem % n;
                rem /= n;
                kint[a] = freq(i, n);
                k[a] = kint[a] as f64;
            }
            for &ka in &kint[..dim] {
                let i = ka.rem_euclid(n as i64) as usize;
                let mi = (n - i) % n;
                mir = mir * n + mi;
            }
            let sq: f64 = k.iter().map(|v| v * v).sum();
            let keep = sq > 0.0 && kint[..dim].iter().all(|v| v.abs() <= kmax);
            wavevectors.push(k);
            k2.push(sq);
            retained.push(keep);
            mirror.push(mir);
        }
        Ok(Arc::new(Self {
            dim,
            n,
            viscosity,
            kmax,
            wavevectors,
            k2,
            retained,
            mirror,
            fft: FftPlan::new(n, dim),
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }

    /// Largest retained wavenumber per axis.
    pub fn kmax(&self) -> i64 {
        self.kmax
    }

    /// Grid points, `n^d`.
    pub fn points(&self) -> usize {
        self.wavevectors.len()
    }

    /// Complex coefficients per field, `d·n^d`.
    pub fn len(&self) -> usize {
        self.dim * self.points()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        self.wavevectors[idx]
    }

    /// `|k|²` per grid index.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    pub fn is_retained(&self, idx: usize) -> bool {
        self.retained[idx]
    }

    /// Linear index of an integer wavevector (any representative mod `n`).
    pub fn index_of(&self, k: &[i64]) -> usize {
        k.iter()
            .take(self.dim)
            .fold(0, |acc, &v| acc * self.n + v.rem_euclid(self.n as i64) as usize)
    }

    /// Multiplier weights for interleaved `(re, im)` coefficients:
    /// `|k|²` on retained modes and zero elsewhere.
    pub fn stokes_weights(&self) -> Arc<[f64]> {
        let mut w = Vec::with_capacity(2 * self.len());
        for _ in 0..self.dim {
            for idx in 0..self.points() {
                let v = if self.retained[idx] { self.k2[idx] } else { 0.0 };
                w.push(v);
                w.push(v);
            }
        }
        w.into()
    }

    pub fn same_as(&self, other: &TorusGrid) -> bool {
        self.dim == other.dim && self.n == other.n && self.viscosity == other.viscosity
    }

    /// Physical samples of one scalar from its coefficients.
    pub fn to_physical(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut buf = spec.to_vec();
        self.fft.run(&mut buf, &self.fft.inverse);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Coefficients of one scalar from physical samples.
    pub fn to_spectral(&self, phys: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = phys.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.run(&mut buf, &self.fft.forward);
        let s = 1.0 / self.points() as f64;
        for c in &mut buf {
            *c *= s;
        }
        buf
    }

    /// Coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        let mut rem = idx;
        for a in (0..self.dim).rev() {
            x[a] = 2.0 * PI * (rem % self.n) as f64 / self.n as f64;
            rem /= self.n;
        }
        x
    }

    /// Orthogonal projection onto real, zero-mean, divergence-free fields
    /// supported on retained modes.
    pub fn project(&self, coeffs: &mut [Complex64]) {
        let p = self.points();
        let d = self.dim;
        let mut v = [Complex64::default(); 3];
        let mut done = vec![false; p];
        for idx in 0..p {
            if done[idx] {
                continue;
            }
            let mir = self.mirror[idx];
            done[idx] = true;
            done[mir] = true;
            if !self.retained[idx] {
                for c in 0..d {
                    coeffs[c * p + idx] = Complex64::default();
                    coeffs[c * p + mir] = Complex64::default();
                }
                continue;
            }
            let k = self.wavevectors[idx];
            // reality: û(k) ← (û(k) + conj û(−k))/2
            for c in 0..d {
                v[c] = 0.5 * (coeffs[c * p + idx] + coeffs[c * p + mir].conj());
            }
            let kv: Complex64 = (0..d).map(|c| v[c] * k[c]).sum();
            let s = kv / self.k2[idx];
            for c in 0..d {
                let val = v[c] - s * k[c];
                coeffs[c * p + idx] = val;
                coeffs[c * p + mir] = val.conj();
            }
        }
    }

    /// Physical velocity components and their gradients `∂_j u_c`
    /// (stored at `c·d + j`).
    fn physical_with_gradient(&self, coeffs: &[Complex64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let p = self.points();
        let d = self.dim;
        let mut vel = Vec::with_capacity(d);
        let mut grad = Vec::with_capacity(d * d);
        for c in 0..d {
            let comp = &coeffs[c * p..(c + 1) * p];
            vel.push(self.to_physical(comp));
            for j in 0..d {
                let deriv: Vec<Complex64> = comp
                    .iter()
                    .zip(&self.wavevectors)
                    .map(|(u, k)| u * Complex64::new(0.0, k[j]))
                    .collect();
                grad.push(self.to_physical(&deriv));
            }
        }
        (vel, grad)
    }

    fn assemble(&self, comps: Vec<Vec<f64>>) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len());
        for phys in comps {
            out.extend(self.to_spectral(&phys));
        }
        self.project(&mut out);
        out
    }
}

/// A real, divergence-free, zero-mean field (or a dual element in the same
/// representation).
#[derive(Clone)]
pub struct SpectralField {
    grid: Arc<TorusGrid>,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("grid", &self.grid)
            .field("h_norm", &self.h_norm_sq().sqrt())
            .finish()
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<TorusGrid>) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    /// Wraps coefficients without projecting them.
    pub fn from_coeffs(grid: &Arc<TorusGrid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    /// Builds from interleaved `(re, im)` values without projecting.
    pub fn from_real(grid: &Arc<TorusGrid>, values: &[f64]) -> Result<Self> {
        if values.len() != 2 * grid.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * grid.len(),
                got: values.len(),
            });
        }
        let coeffs = bytemuck::cast_slice::<f64, Complex64>(values).to_vec();
        Self::from_coeffs(grid, coeffs)
    }

    /// Samples a physical vector field and projects it.
    pub fn from_fn(grid: &Arc<TorusGrid>, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let p = grid.points();
        let d = grid.dim();
        let mut comps = vec![vec![0.0; p]; d];
        for idx in 0..p {
            let v = f(grid.point(idx));
            for (comp, &vc) in comps.iter_mut().zip(&v) {
                comp[idx] = vc;
            }
        }
        let mut coeffs = Vec::with_capacity(grid.len());
        for phys in comps {
            coeffs.extend(grid.to_spectral(&phys));
        }
        grid.project(&mut coeffs);
        Self {
            grid: grid.clone(),
            coeffs,
        }
    }

    /// `(sin x cos y, −cos x sin y)` in 2D, `(sin x cos y cos z, −cos x sin y cos z, 0)` in 3D.
    pub fn taylor_green(grid: &Arc<TorusGrid>, amplitude: f64) -> Self {
        let three = grid.dim() == 3;
        Self::from_fn(grid, |x| {
            let cz = if three { x[2].cos() } else { 1.0 };
            [
                amplitude * x[0].sin() * x[1].cos() * cz,
                -amplitude * x[0].cos() * x[1].sin() * cz,
                0.0,
            ]
        })
    }

    /// The unidirectional shear `(A sin y, 0)`, a single `|k| = 1` mode.
    pub fn shear(grid: &Arc<TorusGrid>, amplitude: f64) -> Self {
        Self::from_fn(grid, |x| [amplitude * x[1].sin(), 0.0, 0.0])
    }

    /// Seeded random field with a `|k|⁻²`-decaying spectrum, normalized to
    /// `‖u‖_H = amplitude`.
    pub fn random(grid: &Arc<TorusGrid>, seed: u64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = vec![Complex64::default(); grid.len()];
        let p = grid.points();
        for c in 0..grid.dim() {
            for idx in 0..p {
                let decay = 1.0 / (1.0 + grid.k2[idx]);
                let re: f64 = rng.gen_range(-1.0..1.0);
                let im: f64 = rng.gen_range(-1.0..1.0);
                coeffs[c * p + idx] = Complex64::new(re, im) * decay;
            }
        }
        grid.project(&mut coeffs);
        let mut f = Self {
            grid: grid.clone(),
            coeffs,
        };
        let norm = f.h_norm_sq().sqrt();
        if norm > 0.0 {
            f.scale_mut(amplitude / norm);
        }
        f
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Interleaved `(re, im)` view, paired by the Euclidean product.
    pub fn as_real(&self) -> &[f64] {
        bytemuck::cast_slice(&self.coeffs)
    }

    pub fn as_real_mut(&mut self) -> &mut [f64] {
        bytemuck::cast_slice_mut(&mut self.coeffs)
    }

    pub fn check_grid(&self, other: &SpectralField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)))
        }
    }

    /// `⟨self, other⟩ = Σ Re(a conj b)`
    pub fn pair(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn h_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn x_norm_sq(&self) -> f64 {
        let p = self.grid.points();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| self.grid.k2[i % p] * c.norm_sqr())
            .sum()
    }

    pub fn dual_norm_sq(&self) -> f64 {
        let p = self.grid.points();
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.k2[i % p] > 0.0)
            .map(|(i, c)| c.norm_sqr() / self.grid.k2[i % p])
            .sum()
    }

    pub fn scale_mut(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale_mut(s);
        out
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &SpectralField) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * alpha;
        }
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Multiplies every mode by `m(|k|²)`.
    pub fn map_modes(&self, m: impl Fn(f64) -> f64) -> Self {
        let p = self.grid.points();
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            *c *= m(self.grid.k2[i % p]);
        }
        out
    }

    pub fn project(&mut self) {
        self.grid.project(&mut self.coeffs);
    }

    /// Physical samples of component `c`.
    pub fn physical_component(&self, c: usize) -> Vec<f64> {
        let p = self.grid.points();
        self.grid.to_physical(&self.coeffs[c * p..(c + 1) * p])
    }

    /// Checks incompressibility, reality, zero mean and retained support.
    pub fn check_invariants(&self) -> Result<()> {
        let g = &self.grid;
        let p = g.points();
        let d = g.dim();
        let scale = self.h_norm_sq().sqrt().max(f64::MIN_POSITIVE);
        for idx in 0..p {
            let k = g.wavevector(idx);
            let div: Complex64 = (0..d).map(|c| self.coeffs[c * p + idx] * k[c]).sum();
            if div.norm() > 1e-12 * scale * g.k2[idx].sqrt().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "divergence {:e} at mode {:?}",
                    div.norm(),
                    k
                )));
            }
            for c in 0..d {
                let a = self.coeffs[c * p + idx];
                let b = self.coeffs[c * p + g.mirror[idx]];
                if (a - b.conj()).norm() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!("non-real mode {k:?}")));
                }
                if !g.retained[idx] && a.norm() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "energy {:e} outside retained modes at {k:?}",
                        a.norm()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Leray projection of raw coefficients: `û(k) ↦ (I − kkᵀ/|k|²) û(k)` plus
/// reality, zero mean and the dealiasing mask.
pub fn leray_project(grid: &Arc<TorusGrid>, raw: Vec<Complex64>) -> Result<SpectralField> {
    let mut f = SpectralField::from_coeffs(grid, raw)?;
    f.project();
    Ok(f)
}

/// `Λu = P[(u·∇)u]`, dealiased.
pub fn advection(u: &SpectralField) -> SpectralField {
    let g = u.grid();
    let d = g.dim();
    let p = g.points();
    let (vel, grad) = g.physical_with_gradient(&u.coeffs);
    let comps = (0..d)
        .map(|c| {
            (0..p)
                .map(|i| (0..d).map(|j| vel[j][i] * grad[c * d + j][i]).sum())
                .collect()
        })
        .collect();
    SpectralField {
        grid: g.clone(),
        coeffs: g.assemble(comps),
    }
}

/// Gradient of `u ↦ ⟨Λu, w⟩`: `P[(∇u)ᵀw − (u·∇)w]`.
pub fn advection_adjoint(u: &SpectralField, w: &SpectralField) -> SpectralField {
    let g = u.grid();
    let d = g.dim();
    let p = g.points();
    let (uv, ug) = g.physical_with_gradient(&u.coeffs);
    let (wv, wg) = g.physical_with_gradient(&w.coeffs);
    let comps = (0..d)
        .map(|c| {
            (0..p)
                .map(|i| {
                    let mut s = 0.0;
                    for j in 0..d {
                        s += wv[j][i] * ug[j * d + c][i] - uv[j][i] * wg[c * d + j][i];
                    }
                    s
                })
                .collect()
        })
        .collect();
    SpectralField {
        grid: g.clone(),
        coeffs: g.assemble(comps),
    }
}

/// `Ĵu(k) = |k|² û(k)`
pub fn duality_map(u: &SpectralField) -> SpectralField {
    u.map_modes(|k2| k2)
}

/// Inverse of the Stokes multiplier, `p̂(k) ↦ p̂(k)/|k|²`.
pub fn stokes_inverse(p: &SpectralField) -> Result<SpectralField> {
    let g = p.grid();
    let pts = g.points();
    let scale = p.h_norm_sq().sqrt();
    for c in 0..g.dim() {
        if p.coeffs[c * pts].norm() > 1e-14 * scale.max(1.0) {
            return Err(Error::InvalidArgument(
                "Stokes inverse needs a zero-mean dual element".into(),
            ));
        }
    }
    Ok(p.map_modes(|k2| if k2 > 0.0 { 1.0 / k2 } else { 0.0 }))
}

/// `‖Λu‖_X* / (‖u‖_H ‖u‖_X)` in 2D, `‖Λu‖_X* / (‖u‖_H^{1/2} ‖u‖_X^{3/2})` in 3D.
pub fn regularity_ratio(u: &SpectralField) -> Result<f64> {
    let h = u.h_norm_sq().sqrt();
    let x = u.x_norm_sq().sqrt();
    if h == 0.0 {
        return Err(Error::InvalidArgument("regularity ratio of the zero field".into()));
    }
    let lam = advection(u).dual_norm_sq().sqrt();
    Ok(if u.grid().dim() == 2 {
        lam / (h * x)
    } else {
        lam / (h.sqrt() * x.powf(1.5))
    })
}

/// Forcing, piecewise constant on the time intervals.
#[derive(Clone, Debug)]
pub enum Forcing {
    Zero,
    Steady(SpectralField),
    PerInterval(Vec<SpectralField>),
}

impl Forcing {
    /// Forcing on interval `i` (`None` for zero forcing).
    pub fn at(&self, i: usize) -> Option<&SpectralField> {
        match self {
            Forcing::Zero => None,
            Forcing::Steady(f) => Some(f),
            Forcing::PerInterval(fs) => fs.get(i).or_else(|| fs.last()),
        }
    }

    pub fn scaled(&self, s: f64) -> Forcing {
        match self {
            Forcing::Zero => Forcing::Zero,
            Forcing::Steady(f) => Forcing::Steady(f.scaled(s)),
            Forcing::PerInterval(fs) => Forcing::PerInterval(fs.iter().map(|f| f.scaled(s)).collect()),
        }
    }
}
