//! Mechanical Hamiltonians `H(x,p) = |p|^2/2 + V(x) - shift` on the torus,
//! their Lagrangians, critical momenta and an optional diffusion coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{TorusGrid, VelocityGrid};
use crate::scalar::Real;

/// Points per axis of the audit grid in 1D.
pub const AUDIT_POINTS_1D: usize = 4096;
/// Points per axis of the audit grid in 2D.
pub const AUDIT_POINTS_2D: usize = 512;

const ROOT_TOL: f64 = 1e-12;

/// One Fourier mode `cos * cos(2 pi k.x) + sin * sin(2 pi k.x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierTerm<T> {
    pub k: [i64; 2],
    pub cos: T,
    pub sin: T,
}

/// Real trigonometric polynomial on the unit torus.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPolynomial<T> {
    dim: usize,
    terms: Vec<FourierTerm<T>>,
}

impl<T: Real> TrigPolynomial<T> {
    pub fn new(dim: usize, terms: Vec<FourierTerm<T>>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidModel(format!("dimension {dim} not in {{1, 2}}")));
        }
        for t in &terms {
            if dim == 1 && t.k[1] != 0 {
                return Err(Error::InvalidModel("second frequency component in a 1D model".into()));
            }
            if !t.cos.is_finite() || !t.sin.is_finite() {
                return Err(Error::InvalidModel("non-finite Fourier amplitude".into()));
            }
        }
        Ok(Self { dim, terms })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    /// `amp * cos(2 pi k x)` in 1D.
    pub fn cosine(k: i64, amp: T) -> Self {
        Self {
            dim: 1,
            terms: vec![FourierTerm { k: [k, 0], cos: amp, sin: T::zero() }],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[FourierTerm<T>] {
        &self.terms
    }

    #[inline]
    fn phase(&self, t: &FourierTerm<T>, x: &[T]) -> T {
        let mut s = T::zero();
        for (a, &xa) in x.iter().enumerate().take(self.dim) {
            s += T::lit(t.k[a] as f64) * xa;
        }
        T::two_pi() * s
    }

    pub fn eval(&self, x: &[T]) -> T {
        let mut s = T::zero();
        for t in &self.terms {
            let th = self.phase(t, x);
            s += t.cos * th.cos() + t.sin * th.sin();
        }
        s
    }

    pub fn gradient(&self, x: &[T]) -> [T; 2] {
        let mut g = [T::zero(); 2];
        for t in &self.terms {
            let th = self.phase(t, x);
            let dth = t.sin * th.cos() - t.cos * th.sin();
            for (a, ga) in g.iter_mut().enumerate().take(self.dim) {
                *ga += T::two_pi() * T::lit(t.k[a] as f64) * dth;
            }
        }
        g
    }

    /// `sum |cos| + |sin|`, a bound on `sup |p|`.
    pub fn amplitude_bound(&self) -> T {
        self.terms
            .iter()
            .fold(T::zero(), |s, t| s + t.cos.abs() + t.sin.abs())
    }

    /// Values at every node of `grid`.
    pub fn sample(&self, grid: &TorusGrid) -> Vec<T> {
        (0..grid.len())
            .map(|i| {
                let x = grid.point::<T>(i);
                self.eval(&x[..grid.dim()])
            })
            .collect()
    }
}

fn audit_grid(dim: usize) -> TorusGrid {
    let n = if dim == 1 { AUDIT_POINTS_1D } else { AUDIT_POINTS_2D };
    TorusGrid::new(dim, n).expect("audit grid sizes are valid")
}

/// Scalar diffusion `A(x) = a(x) I` with `a >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionCoefficient<T>(TrigPolynomial<T>);

impl<T: Real> DiffusionCoefficient<T> {
    /// Rejects coefficients that go negative on the audit grid.
    pub fn new(a: TrigPolynomial<T>) -> Result<Self> {
        let grid = audit_grid(a.dim());
        let min = a
            .sample(&grid)
            .into_iter()
            .fold(T::infinity(), T::min);
        if min < T::lit(-1e-12) {
            return Err(Error::InvalidModel(format!(
                "diffusion coefficient negative on the audit grid (min {min})"
            )));
        }
        Ok(Self(a))
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        self.0.eval(x).max(T::zero())
    }

    pub fn polynomial(&self) -> &TrigPolynomial<T> {
        &self.0
    }
}

/// Mechanical Hamiltonian with potential `V`, shift and optional diffusion.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianModel<T> {
    potential: TrigPolynomial<T>,
    shift: T,
    diffusion: Option<DiffusionCoefficient<T>>,
}

/// Sampled growth and normalization report of a model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelAudit {
    pub family: &'static str,
    pub dim: usize,
    /// Exponent of the polynomial growth of `H` in `p`.
    pub gamma_growth: f64,
    /// Lower bound on the Hessian in `p`.
    pub gamma_convexity: f64,
    /// Smallest `C` with `|p|^2/C - C <= H <= C (|p|^2 + 1)` on the samples.
    pub growth_constant: f64,
    pub growth_samples: usize,
    pub lipschitz_bound: Option<f64>,
    pub max_potential: f64,
    pub min_potential: f64,
    /// `max_x H(x, 0)`; zero for a first-order model normalized to `c = 0`.
    pub normalization_residual: f64,
    pub min_diffusion: Option<f64>,
    pub max_diffusion: Option<f64>,
    pub passes: bool,
}

impl<T: Real> HamiltonianModel<T> {
    pub fn new(potential: TrigPolynomial<T>, shift: T) -> Result<Self> {
        if !shift.is_finite() {
            return Err(Error::InvalidModel("non-finite shift".into()));
        }
        Ok(Self { potential, shift, diffusion: None })
    }

    /// `V = amp cos(2 pi k x)` in 1D.
    pub fn cosine(k: i64, amp: T, shift: T) -> Self {
        Self::new(TrigPolynomial::cosine(k, amp), shift).expect("finite shift")
    }

    /// `V = 0`, `shift = 0` in `dim` dimensions.
    pub fn flat(dim: usize) -> Self {
        Self::new(TrigPolynomial::zero(dim), T::zero()).expect("finite shift")
    }

    pub fn with_diffusion(mut self, a: DiffusionCoefficient<T>) -> Result<Self> {
        if a.polynomial().dim() != self.dim() {
            return Err(Error::InvalidModel("diffusion dimension differs from potential".into()));
        }
        self.diffusion = Some(a);
        Ok(self)
    }

    /// Same model with a different shift.
    pub fn with_shift(&self, shift: T) -> Self {
        Self { shift, ..self.clone() }
    }

    /// The model extended constantly along a second axis.
    pub fn extend_to_2d(&self) -> Result<Self> {
        if self.dim() != 1 {
            return Err(Error::Unsupported("extend_to_2d on a 2D model".into()));
        }
        let lift = |p: &TrigPolynomial<T>| TrigPolynomial { dim: 2, terms: p.terms.clone() };
        Ok(Self {
            potential: lift(&self.potential),
            shift: self.shift,
            diffusion: self.diffusion.as_ref().map(|a| DiffusionCoefficient(lift(&a.0))),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    #[inline]
    pub fn shift(&self) -> T {
        self.shift
    }

    pub fn potential(&self) -> &TrigPolynomial<T> {
        &self.potential
    }

    pub fn diffusion(&self) -> Option<&DiffusionCoefficient<T>> {
        self.diffusion.as_ref()
    }

    #[inline]
    fn norm2(&self, p: &[T]) -> T {
        p.iter().take(self.dim()).fold(T::zero(), |s, &q| s + q * q)
    }

    #[inline]
    pub fn eval_v(&self, x: &[T]) -> T {
        self.potential.eval(x)
    }

    #[inline]
    pub fn eval_h(&self, x: &[T], p: &[T]) -> T {
        T::half() * self.norm2(p) + self.potential.eval(x) - self.shift
    }

    /// `H` with a precomputed potential value.
    #[inline]
    pub fn eval_h_with(&self, v_at_x: T, p: &[T]) -> T {
        T::half() * self.norm2(p) + v_at_x - self.shift
    }

    #[inline]
    pub fn eval_dp_h(&self, _x: &[T], p: &[T]) -> [T; 2] {
        let mut g = [T::zero(); 2];
        g[..self.dim()].copy_from_slice(&p[..self.dim()]);
        g
    }

    #[inline]
    pub fn eval_dx_h(&self, x: &[T], _p: &[T]) -> [T; 2] {
        self.potential.gradient(x)
    }

    #[inline]
    pub fn eval_l(&self, x: &[T], v: &[T]) -> T {
        T::half() * self.norm2(v) - self.potential.eval(x) + self.shift
    }

    /// Brute-force `max_p (p.v - H(x,p))` over a square momentum grid.
    pub fn legendre_numeric(&self, x: &[T], v: &[T], p_radius: T, p_step: T) -> Result<T> {
        let k = (p_radius / p_step).round().to_usize().unwrap_or(0);
        if k == 0 {
            return Err(Error::LegendreBoundary { radius: p_radius.as_f64() });
        }
        let node = |i: usize| T::from_isize(i as isize - k as isize).expect("small integer") * p_step;
        let mut best = T::neg_infinity();
        let mut arg = [0usize; 2];
        let span = 2 * k + 1;
        let count = if self.dim() == 1 { span } else { span * span };
        for idx in 0..count {
            let (i0, i1) = if self.dim() == 1 { (idx, k) } else { (idx / span, idx % span) };
            let p = [node(i0), node(i1)];
            let val = p[0] * v[0] + if self.dim() == 2 { p[1] * v[1] } else { T::zero() }
                - self.eval_h(x, &p);
            if val > best {
                best = val;
                arg = [i0, i1];
            }
        }
        let on_edge = |i: usize| i == 0 || i == span - 1;
        if on_edge(arg[0]) || (self.dim() == 2 && on_edge(arg[1])) {
            return Err(Error::LegendreBoundary { radius: p_radius.as_f64() });
        }
        Ok(best)
    }

    /// Bisection for the root of `r -> H(x, s r e_1) = 0` on `r in [0, bracket]`.
    fn bisect_root(&self, x: &[T], sign: T, tol: T) -> T {
        let v = self.potential.eval(x);
        let h_at = |r: T| {
            let p = [sign * r, T::zero()];
            self.eval_h_with(v, &p)
        };
        let b = T::one()
            + (T::lit(2.0) * (self.shift + self.potential.amplitude_bound()).max(T::zero())).sqrt();
        let (mut lo, mut hi) = (T::zero(), b);
        for _ in 0..200 {
            if hi - lo <= tol {
                break;
            }
            let mid = T::half() * (lo + hi);
            if h_at(mid) <= T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        T::half() * (lo + hi)
    }

    /// Roots `p_- <= 0 <= p_+` of `H(x, p) = 0` in 1D, by bisection.
    pub fn critical_p_interval(&self, x: T, tol: T) -> Result<(T, T)> {
        if self.dim() != 1 {
            return Err(Error::Unsupported("critical_p_interval in 2D".into()));
        }
        let h0 = self.eval_h(&[x], &[T::zero()]);
        if h0 > tol {
            return Err(Error::NoRealRoot { x: x.as_f64(), h0: h0.as_f64() });
        }
        if h0 >= T::zero() {
            return Ok((T::zero(), T::zero()));
        }
        let plus = self.bisect_root(&[x], T::one(), tol);
        let minus = -self.bisect_root(&[x], -T::one(), tol);
        Ok((minus, plus))
    }

    /// Critical speed `|p|` solving `H(x, p) = 0` (any dimension).
    fn critical_speed(&self, x: &[T], tol: T) -> Result<T> {
        let h0 = self.eval_h(x, &[T::zero(), T::zero()]);
        if h0 > tol {
            return Err(Error::NoRealRoot { x: x[0].as_f64(), h0: h0.as_f64() });
        }
        if h0 >= T::zero() {
            return Ok(T::zero());
        }
        Ok(self.bisect_root(x, T::one(), tol))
    }

    /// `1.1 * sup_x |p_+-(x)|` over the audit grid, floored at 1.
    pub fn lipschitz_bound(&self) -> Result<T> {
        let grid = audit_grid(self.dim());
        let tol = T::lit(ROOT_TOL).max(T::epsilon() * T::lit(16.0));
        let mut m = T::zero();
        for i in 0..grid.len() {
            let x = grid.point::<T>(i);
            m = m.max(self.critical_speed(&x[..self.dim()], tol)?);
        }
        Ok((T::lit(1.1) * m).max(T::one()))
    }

    /// Velocity grid with the default truncation `1.25 * lipschitz_bound`.
    pub fn velocity_grid(&self, m: usize) -> Result<VelocityGrid<T>> {
        VelocityGrid::new(self.dim(), T::lit(1.25) * self.lipschitz_bound()?, m)
    }

    pub fn audit(&self) -> ModelAudit {
        let grid = audit_grid(self.dim());
        let vs = self.potential.sample(&grid);
        let max_v = vs.iter().copied().fold(T::neg_infinity(), T::max).as_f64();
        let min_v = vs.iter().copied().fold(T::infinity(), T::min).as_f64();
        let (min_a, max_a) = match &self.diffusion {
            Some(a) => {
                let s = a.polynomial().sample(&grid);
                (
                    Some(s.iter().copied().fold(T::infinity(), T::min).as_f64()),
                    Some(s.iter().copied().fold(T::neg_infinity(), T::max).as_f64()),
                )
            }
            None => (None, None),
        };
        let shift = self.shift.as_f64();
        // H(x,p) - |p|^2/2 ranges over [min_v - shift, max_v - shift].
        let lo = min_v - shift;
        let hi = max_v - shift;
        let mut c = 1.0f64;
        let mut samples = 0;
        for j in 0..=200 {
            let r2 = (j as f64 * 0.05).powi(2);
            for h in [0.5 * r2 + lo, 0.5 * r2 + hi] {
                // upper: h <= c (r2 + 1); lower: r2 / c - c <= h
                c = c.max(h / (r2 + 1.0));
                while r2 / c - c > h {
                    c *= 1.01;
                }
                samples += 1;
            }
        }
        let lipschitz = self.lipschitz_bound().ok().map(|l| l.as_f64());
        ModelAudit {
            family: "mechanical",
            dim: self.dim(),
            gamma_growth: 2.0,
            gamma_convexity: 1.0,
            growth_constant: c,
            growth_samples: samples,
            lipschitz_bound: lipschitz,
            max_potential: max_v,
            min_potential: min_v,
            normalization_residual: hi,
            min_diffusion: min_a,
            max_diffusion: max_a,
            passes: c.is_finite() && min_a.is_none_or(|a| a >= -1e-12),
        }
    }

    pub fn to_spec(&self) -> ModelSpec {
        let term = |t: &FourierTerm<T>| TermSpec {
            k: t.k[..self.dim()].to_vec(),
            cos: t.cos.as_f64(),
            sin: t.sin.as_f64(),
        };
        ModelSpec {
            family: "mechanical".into(),
            dim: Some(self.dim()),
            potential: self.potential.terms.iter().map(term).collect(),
            shift: self.shift.as_f64(),
            diffusion: self
                .diffusion
                .as_ref()
                .map(|a| DiffusionSpec { a: a.0.terms.iter().map(term).collect() }),
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        if spec.family != "mechanical" {
            return Err(Error::InvalidModel(format!("unknown family '{}'", spec.family)));
        }
        let all_terms = spec
            .potential
            .iter()
            .chain(spec.diffusion.iter().flat_map(|d| d.a.iter()));
        let mut dim = spec.dim;
        for t in all_terms {
            match dim {
                None => dim = Some(t.k.len()),
                Some(d) if d != t.k.len() => {
                    return Err(Error::InvalidModel(format!(
                        "frequency {:?} has length {}, expected {d}",
                        t.k,
                        t.k.len()
                    )))
                }
                _ => {}
            }
        }
        let dim = dim.unwrap_or(1);
        let convert = |terms: &[TermSpec]| -> Result<TrigPolynomial<T>> {
            let terms = terms
                .iter()
                .map(|t| {
                    let mut k = [0i64; 2];
                    k[..t.k.len().min(2)].copy_from_slice(&t.k[..t.k.len().min(2)]);
                    FourierTerm { k, cos: T::lit(t.cos), sin: T::lit(t.sin) }
                })
                .collect();
            TrigPolynomial::new(dim, terms)
        };
        let model = Self::new(convert(&spec.potential)?, T::lit(spec.shift))?;
        match &spec.diffusion {
            Some(d) => model.with_diffusion(DiffusionCoefficient::new(convert(&d.a)?)?),
            None => Ok(model),
        }
    }
}

/// Serialized form of a Fourier mode; `k` has one entry per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub a: Vec<TermSpec>,
}

/// Model description file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: String,
    /// Needed only when no Fourier term fixes the dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(rename = "V", default)]
    pub potential: Vec<TermSpec>,
    #[serde(default)]
    pub shift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<DiffusionSpec>,
}
