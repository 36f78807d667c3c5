//! Closed-form 1D model: superposed Gaussian packets under free evolution,
//! displacement (Weyl) expectations, momentum moments, modular reduction, and
//! the conservation-ellipse law.
//!
//! States are exact Gaussian sums, never sampled arrays, so expectation
//! values here carry no discretization error and serve as ground truth for
//! the 2D lattice layer. Every integral reduces to quadratic completion; the
//! companion quadrature routines integrate the same objects numerically and
//! exist solely to cross-check the algebra.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One Gaussian packet: coeff * (2 pi sigma^2)^{-1/4}
///   * exp(-(x-center)^2 / (4 sigma^2)) * exp(i k (x-center)).
///
/// sigma is the standard deviation of |psi|^2; the carrier phase is
/// referenced to the packet center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTerm {
    pub coeff: Complex64,
    pub center: f64,
    pub sigma: f64,
    pub k: f64,
}

/// Normalized superposition of Gaussian terms at a common elapsed time.
///
/// Free evolution is exact and closed under this representation, so `terms`
/// always stores the t = 0 data; `elapsed` carries the evolution. All
/// evaluation routines fold the complex width s = sigma^2 + i t / (2 m) in on
/// the fly.
#[derive(Debug, Clone, PartialEq)]
pub struct State1D {
    terms: Vec<GaussianTerm>,
    mass: f64,
    elapsed: f64,
}

/// A momentum reduced into [0, p0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModularValue {
    value: f64,
    p0: f64,
}

impl ModularValue {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn modulus(&self) -> f64 {
        self.p0
    }
}

/// p mod p0, wrapped into [0, p0).
pub fn modular_reduce(p: f64, p0: f64) -> Result<ModularValue> {
    if !(p0 > 0.0) {
        return Err(Error::BadModulus { p0 });
    }
    let mut value = p.rem_euclid(p0);
    if value >= p0 {
        // rem_euclid can round up to p0 when p is a huge negative multiple
        value = 0.0;
    }
    Ok(ModularValue { value, p0 })
}

/// Residual of the modular-momentum ellipse law for a two-body collision.
///
/// With C = cos(2 pi (p1 + p2) / p0) built from the conserved pre-collision
/// total and pi' = cos(2 pi pi' / p0), returns
/// |1 - C^2 - (pi1'^2 + pi2'^2 - 2 C pi1' pi2')|, which vanishes identically
/// whenever p1 + p2 = p1' + p2'.
pub fn ellipse_residual(p1: f64, p2: f64, p1_post: f64, p2_post: f64, p0: f64) -> Result<f64> {
    if !(p0 > 0.0) {
        return Err(Error::BadModulus { p0 });
    }
    let w = 2.0 * std::f64::consts::PI / p0;
    let c = (w * (p1 + p2)).cos();
    let f1 = (w * p1_post).cos();
    let f2 = (w * p2_post).cos();
    Ok((1.0 - c * c - (f1 * f1 + f2 * f2 - 2.0 * c * f1 * f2)).abs())
}

/// Build a normalized superposition from (coeff, center, sigma, k) rows.
///
/// Normalization uses the exact Gaussian pair overlaps, cross terms included.
pub fn make_superposition_1d(specs: &[(Complex64, f64, f64, f64)], mass: f64) -> Result<State1D> {
    if specs.is_empty() {
        return Err(Error::InvalidState("need at least one packet spec".into()));
    }
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::InvalidState(format!("mass must be positive, got {}", mass)));
    }
    let mut terms = Vec::with_capacity(specs.len());
    for (idx, &(coeff, center, sigma, k)) in specs.iter().enumerate() {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidState(format!(
                "packet {}: sigma must be positive, got {}",
                idx, sigma
            )));
        }
        if !coeff.is_finite() || !center.is_finite() || !k.is_finite() {
            return Err(Error::InvalidState(format!("packet {}: non-finite parameter", idx)));
        }
        terms.push(GaussianTerm { coeff, center, sigma, k });
    }
    let mut state = State1D { terms, mass, elapsed: 0.0 };
    let n = state.norm();
    if n < 1e-12 {
        return Err(Error::InvalidState("superposition cancels to zero norm".into()));
    }
    for t in &mut state.terms {
        t.coeff /= n;
    }
    Ok(state)
}

/// The two-packet interference preparation
/// Psi = G(x) e^{i k0 x} + e^{i alpha} G(x - l) e^{-i k0 x}, normalized.
pub fn make_interference_state(l: f64, sigma: f64, k0: f64, alpha: f64, mass: f64) -> Result<State1D> {
    let c2 = Complex64::from_polar(1.0, alpha - k0 * l);
    make_superposition_1d(
        &[
            (Complex64::new(1.0, 0.0), 0.0, sigma, k0),
            (c2, l, sigma, -k0),
        ],
        mass,
    )
}

/// Free evolution by duration t: exact, just advances the elapsed time.
pub fn evolve_free_1d(state: &State1D, t: f64) -> Result<State1D> {
    if t < 0.0 {
        return Err(Error::InvalidState(format!("negative duration {}", t)));
    }
    let mut out = state.clone();
    out.elapsed += t;
    Ok(out)
}

/// <exp(i (a p + b x))> by exact Gaussian pair integrals.
///
/// The operator ordering is fixed by the defining quadrature
/// integral psi*(x) e^{i b (x + a/2)} psi(x + a) dx; see
/// [`weyl_expectation_quadrature`], which evaluates exactly that.
pub fn weyl_expectation_1d(state: &State1D, a: f64, b: f64) -> Complex64 {
    let evolved: Vec<Evolved> = state.terms.iter().map(|t| state.evolve_term(t)).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for ei in &evolved {
        for ej in &evolved {
            acc += weyl_pair(ei, ej, a, b);
        }
    }
    acc
}

/// Interference observable <O(t)> = Re <exp(i ((L - 2 k0 t / m) p + 2 k0 x))>
/// on the state evolved by duration t from its current time.
pub fn interference_observable(state: &State1D, t: f64, l: f64, k0: f64) -> Result<f64> {
    let st = evolve_free_1d(state, t)?;
    let a = l - 2.0 * k0 * t / state.mass;
    Ok(weyl_expectation_1d(&st, a, 2.0 * k0).re)
}

/// <p^n> for n in 1..=8, by exact momentum-space Gaussian moments.
///
/// Free evolution multiplies the momentum amplitude by a pure phase that
/// cancels inside |psi~|^2-type pairings, so moments are computed from the
/// t = 0 data; their time invariance is checked against quadrature in tests.
pub fn moment_1d(state: &State1D, n: u32) -> Result<f64> {
    if n < 1 || n > 8 {
        return Err(Error::MomentOrder { n });
    }
    Ok(state.momentum_pair_sum(n).re)
}

impl State1D {
    pub fn terms(&self) -> &[GaussianTerm] {
        &self.terms
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    /// Exact norm from pair overlaps (time-independent under free evolution).
    pub fn norm(&self) -> f64 {
        self.momentum_pair_sum(0).re.sqrt()
    }

    /// Pointwise amplitude at the state's elapsed time. Used by the
    /// quadrature oracles; everything else goes through closed forms.
    pub fn eval(&self, x: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|t| self.evolve_term(t).eval(x))
            .sum()
    }

    /// Integration window covering every term's support at the current time.
    pub fn support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in &self.terms {
            let e = self.evolve_term(t);
            let c = e.center_now;
            let w = 12.0 * e.sigma_now;
            lo = lo.min(c - w);
            hi = hi.max(c + w);
        }
        (lo, hi)
    }

    fn evolve_term(&self, t: &GaussianTerm) -> Evolved {
        let s2 = t.sigma * t.sigma;
        let s = Complex64::new(s2, self.elapsed / (2.0 * self.mass));
        // (2 sigma^2 / pi)^{1/4} / sqrt(2 s)
        let pref = (2.0 * s2 / std::f64::consts::PI).powf(0.25) / (2.0 * s).sqrt();
        Evolved {
            c: t.coeff * pref,
            a: t.center,
            s,
            s2,
            k: t.k,
            center_now: t.center + t.k * self.elapsed / self.mass,
            sigma_now: s.norm() / t.sigma,
        }
    }

    fn momentum_pair_sum(&self, n: u32) -> Complex64 {
        // psi~_j(p) = coeff (2 sigma^2/pi)^{1/4} exp(-sigma^2 (p-k)^2) e^{-i p a}
        let mut acc = Complex64::new(0.0, 0.0);
        for ti in &self.terms {
            for tj in &self.terms {
                let si2 = ti.sigma * ti.sigma;
                let sj2 = tj.sigma * tj.sigma;
                let pref = ti.coeff.conj()
                    * tj.coeff
                    * (2.0 * ti.sigma * tj.sigma / std::f64::consts::PI).sqrt();
                let p = Complex64::new(si2 + sj2, 0.0);
                let q = Complex64::new(2.0 * (si2 * ti.k + sj2 * tj.k), ti.center - tj.center);
                let r = Complex64::new(-(si2 * ti.k * ti.k + sj2 * tj.k * tj.k), 0.0);
                acc += pref * gaussian_moment(p, q, r, n);
            }
        }
        acc
    }
}

/// Evolved-term parameters: psi(x) = c exp((-(x-a)^2 + 4 i s2 k (x-a)
/// + 4 s2^2 k^2) / (4 s) - s2 k^2), s = sigma^2 + i t / (2 m).
struct Evolved {
    c: Complex64,
    a: f64,
    s: Complex64,
    s2: f64,
    k: f64,
    center_now: f64,
    sigma_now: f64,
}

impl Evolved {
    fn eval(&self, x: f64) -> Complex64 {
        let u = x - self.a;
        let num = Complex64::new(-u * u + 4.0 * self.s2 * self.s2 * self.k * self.k, 4.0 * self.s2 * self.k * u);
        let expo = num / (4.0 * self.s) - self.s2 * self.k * self.k;
        self.c * expo.exp()
    }

    /// Exponent as -P x^2 + Q x + R.
    fn quadratic(&self) -> (Complex64, Complex64, Complex64) {
        let p = 1.0 / (4.0 * self.s);
        let kk = Complex64::new(0.0, self.s2 * self.k) / self.s;
        let q = 2.0 * p * self.a + kk;
        let r = -p * self.a * self.a - kk * self.a
            + Complex64::new(self.s2 * self.s2 * self.k * self.k, 0.0) / self.s
            - self.s2 * self.k * self.k;
        (p, q, r)
    }
}

/// integral conj(psi_i(x)) e^{i b (x + a/2)} psi_j(x + a) dx by quadratic
/// completion.
fn weyl_pair(ei: &Evolved, ej: &Evolved, a: f64, b: f64) -> Complex64 {
    let (pi, qi, ri) = ei.quadratic();
    let (pj, qj, rj) = ej.quadratic();
    let p = pi.conj() + pj;
    let q = qi.conj() + qj - 2.0 * pj * a + Complex64::new(0.0, b);
    let r = ri.conj() + rj + qj * a - pj * a * a + Complex64::new(0.0, b * a / 2.0);
    let pref = ei.c.conj() * ej.c;
    pref * (std::f64::consts::PI / p).sqrt() * (q * q / (4.0 * p) + r).exp()
}

/// integral exp(-P p^2 + Q p + R) p^n dp with Re P > 0, by the usual
/// two-term recursion on the polynomial degree.
fn gaussian_moment(p: Complex64, q: Complex64, r: Complex64, n: u32) -> Complex64 {
    let i0 = (std::f64::consts::PI / p).sqrt() * (q * q / (4.0 * p) + r).exp();
    if n == 0 {
        return i0;
    }
    let mut prev = i0;
    let mut cur = q / (2.0 * p) * i0;
    for m in 2..=n {
        let next = ((m - 1) as f64 * prev + q * cur) / (2.0 * p);
        prev = cur;
        cur = next;
    }
    cur
}

/// Composite-Simpson evaluation of the defining Weyl quadrature
/// integral psi*(x) e^{i b (x + a/2)} psi(x + a) dx. Oracle for
/// [`weyl_expectation_1d`]; intentionally shares no algebra with it.
pub fn weyl_expectation_quadrature(state: &State1D, a: f64, b: f64) -> Complex64 {
    let (mut lo, mut hi) = state.support();
    lo = lo.min(lo - a);
    hi = hi.max(hi - a);
    let kmax = state
        .terms
        .iter()
        .map(|t| t.k.abs())
        .fold(0.0f64, f64::max);
    // resolve the fastest oscillation: carrier + b + chirp across the window
    let chirp = state
        .terms
        .iter()
        .map(|t| {
            let s2 = t.sigma * t.sigma;
            let s_norm2 = s2 * s2 + (state.elapsed / (2.0 * state.mass)).powi(2);
            (hi - lo) / (2.0 * s_norm2.sqrt())
        })
        .fold(0.0f64, f64::max);
    let freq = 2.0 * kmax + b.abs() + chirp;
    let n_from_freq = ((hi - lo) * freq * 8.0) as usize;
    let n = (n_from_freq.max(20_000) | 1).min(400_001);
    simpson(lo, hi, n, |x| {
        state.eval(x).conj() * state.eval(x + a) * Complex64::from_polar(1.0, b * (x + a / 2.0))
    })
}

/// <cos(b x)> by direct quadrature of |psi|^2; the independent local route
/// for the interference observable at the packet-meeting time.
pub fn cos_expectation_quadrature(state: &State1D, b: f64) -> f64 {
    weyl_expectation_quadrature(state, 0.0, b).re
}

fn simpson(lo: f64, hi: f64, n_points: usize, f: impl Fn(f64) -> Complex64) -> Complex64 {
    debug_assert!(n_points % 2 == 1 && n_points >= 3);
    let h = (hi - lo) / (n_points - 1) as f64;
    let mut acc = f(lo) + f(hi);
    for idx in 1..n_points - 1 {
        let w = if idx % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + idx as f64 * h);
    }
    acc * (h / 3.0)
}
