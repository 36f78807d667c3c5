//! Gauge-invariant measurements on lattice states.
//!
//! The central object is the displaced-pair expectation
//!
//!   chi(D) = sum_r psi*(r) e^{-i W(r -> r+D)} psi(r+D) dx^2
//!
//! with W the Wilson phase of the straight staircase path. The link phases
//! make chi invariant under per-site gauge rotations, and chi(n D-hat) as a
//! function of n is the characteristic function of the (kinetic) velocity
//! distribution along D-hat; its discrete Fourier dual recovers the
//! distribution itself. The rotation analogue pairs each site with its
//! point reflection through a same-radius arc. Phase conventions follow the
//! hopping term: transporting an amplitude from a to b multiplies it by
//! e^{+i th(a->b)}, so the partner amplitude psi(r+D) is carried back to r
//! by e^{-i W(r -> r+D)}; for the rotation pair this means the arc runs
//! clockwise from -s to s and enters with the opposite exponent sign.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gauge::{build_path, GaugeField, PathKind};
use crate::wavefunction::WaveFunction;

/// Relative amplitude floor: site pairs whose |psi psi| product falls this
/// far below the peak cannot move any reported digit and are skipped.
const REL_AMP_FLOOR: f64 = 1e-9;
/// Rotation pairs below this relative amplitude are skipped. The arc walk is
/// the expensive part of that observable, and pairs this weak shift the
/// result by less than 1e-10 while low-level scattering debris would
/// otherwise cover most of the grid.
const ANG_AMP_FLOOR: f64 = 1e-6;
/// Fringe extraction refuses signals below this fraction of total weight.
const FRINGE_FLOOR: f64 = 1e-6;
/// Arc paths need a few cells of radius to be representable.
const MIN_ARC_RADIUS_CELLS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Probe samples over time, tagged with the probe's identity and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<Complex64>,
    meta: String,
}

impl TimeSeries {
    pub fn new(meta: impl Into<String>) -> Self {
        TimeSeries { times: Vec::new(), values: Vec::new(), meta: meta.into() }
    }

    pub fn from_parts(times: Vec<f64>, values: Vec<Complex64>, meta: impl Into<String>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidState(format!(
                "series length mismatch: {} times, {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidState("series times must be strictly increasing".into()));
        }
        Ok(TimeSeries { times, values, meta: meta.into() })
    }

    pub fn push(&mut self, t: f64, value: Complex64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::InvalidState(format!(
                    "series times must be strictly increasing: {} after {}",
                    t, last
                )));
            }
        }
        self.times.push(t);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    /// Sub-series with times in [t0, t1], same meta.
    pub fn slice_time(&self, t0: f64, t1: f64) -> Self {
        let mut out = TimeSeries::new(self.meta.clone());
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if t >= t0 && t <= t1 {
                out.times.push(t);
                out.values.push(v);
            }
        }
        out
    }
}

/// Where and how a time series jumps between two plateaus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub t_cross: f64,
    pub before: Complex64,
    pub after: Complex64,
    /// Full width at half maximum of the |derivative| peak.
    pub width: f64,
    /// Set when either plateau wanders by more than ten in-plateau sigmas.
    pub drifting: bool,
}

fn unit_steps(direction: (i64, i64), n: usize) -> Result<(i64, i64)> {
    if direction == (0, 0) || n == 0 {
        if direction == (0, 0) && n > 0 {
            return Err(Error::InvalidState("displacement direction must be nonzero".into()));
        }
        return Ok((0, 0));
    }
    let di = direction.0.checked_mul(n as i64);
    let dj = direction.1.checked_mul(n as i64);
    match (di, dj) {
        (Some(di), Some(dj)) => Ok((di, dj)),
        _ => Err(Error::DisplacementTooLarge { di: direction.0, dj: direction.1 }),
    }
}

/// Wilson-line displacement expectation <e^{i(p-A).D}>; `direction` is an
/// integer lattice vector and the displacement is n of those steps.
pub fn displacement_expectation(
    psi: &WaveFunction,
    field: &GaugeField,
    direction: (i64, i64),
    n: usize,
) -> Result<Complex64> {
    if psi.grid() != field.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = psi.grid();
    let (di, dj) = unit_steps(direction, n)?;
    if di.unsigned_abs() as usize >= grid.nx() || dj.unsigned_abs() as usize >= grid.ny() {
        return Err(Error::DisplacementTooLarge { di, dj });
    }
    if (di, dj) == (0, 0) {
        return Ok(Complex64::new(psi.norm_sq(), 0.0));
    }
    // the staircase shape is translation invariant: build it once at a
    // site where the whole path fits, then slide it
    let anchor = (
        if di >= 0 { 0usize } else { (-di) as usize },
        if dj >= 0 { 0usize } else { (-dj) as usize },
    );
    let path = build_path(grid, PathKind::Straight { from: anchor, displacement: (di, dj) })?;
    let sites = path.sites();
    let steps: Vec<(i64, i64)> = sites
        .windows(2)
        .map(|w| (w[1].0 as i64 - w[0].0 as i64, w[1].1 as i64 - w[0].1 as i64))
        .collect();

    let peak = psi.amps().iter().map(|a| a.norm()).fold(0.0f64, f64::max);
    let floor = REL_AMP_FLOOR * peak;
    let dv = grid.dx() * grid.dx();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let ti = i as i64 + di;
            let tj = j as i64 + dj;
            if !grid.contains(ti, tj) {
                continue;
            }
            let a = psi.amp(i, j);
            let b = psi.amp(ti as usize, tj as usize);
            if a.norm() * b.norm() <= floor * floor {
                continue;
            }
            let mut w = 0.0;
            let mut cur = (i, j);
            for &(si, sj) in &steps {
                let nxt = ((cur.0 as i64 + si) as usize, (cur.1 as i64 + sj) as usize);
                w += field.link_phase(cur, nxt)?;
                cur = nxt;
            }
            acc += a.conj() * Complex64::from_polar(1.0, -w) * b;
        }
    }
    Ok(acc * dv)
}

/// Axis-aligned variant used for characteristic-function sweeps: O(1) Wilson
/// phases from link prefix sums. Identical to the general path (the
/// staircase for an axis displacement is the straight row/column).
fn chi_axis(psi: &WaveFunction, axis: Axis, prefix: &Array2<f64>, n: usize) -> Complex64 {
    let grid = psi.grid();
    let dv = grid.dx() * grid.dx();
    if n == 0 {
        return Complex64::new(psi.norm_sq(), 0.0);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    match axis {
        Axis::Y => {
            for j in 0..grid.ny() - n {
                for i in 0..grid.nx() {
                    let a = psi.amp(i, j);
                    let b = psi.amp(i, j + n);
                    let w = prefix[[j + n, i]] - prefix[[j, i]];
                    acc += a.conj() * Complex64::from_polar(1.0, -w) * b;
                }
            }
        }
        Axis::X => {
            for j in 0..grid.ny() {
                for i in 0..grid.nx() - n {
                    let a = psi.amp(i, j);
                    let b = psi.amp(i + n, j);
                    let w = prefix[[j, i + n]] - prefix[[j, i]];
                    acc += a.conj() * Complex64::from_polar(1.0, -w) * b;
                }
            }
        }
    }
    acc * dv
}

fn link_prefix(field: &GaugeField, axis: Axis) -> Array2<f64> {
    let grid = field.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    match axis {
        Axis::Y => {
            let mut p = Array2::zeros((ny, nx));
            for j in 1..ny {
                for i in 0..nx {
                    p[[j, i]] = p[[j - 1, i]] + field.thy()[[j - 1, i]];
                }
            }
            p
        }
        Axis::X => {
            let mut p = Array2::zeros((ny, nx));
            for j in 0..ny {
                for i in 1..nx {
                    p[[j, i]] = p[[j, i - 1]] + field.thx()[[j, i - 1]];
                }
            }
            p
        }
    }
}

/// Probability table over m*v in [-pi/dx, pi/dx), reconstructed from the
/// characteristic-function profile chi(n).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityDistribution {
    dx: f64,
    momenta: Vec<f64>,
    probs: Vec<f64>,
}

impl VelocityDistribution {
    pub fn momenta(&self) -> &[f64] {
        &self.momenta
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Mean lattice velocity, weight sin(p dx)/(m dx). The weight must be
    /// periodic over the zone: raw p is a sawtooth whose moments alias the
    /// high displacement harmonics (the modular content itself) into the
    /// answer at the 1e-2 scale.
    pub fn mean_velocity(&self, mass: f64) -> f64 {
        self.momenta
            .iter()
            .zip(&self.probs)
            .map(|(p, w)| (p * self.dx).sin() / (mass * self.dx) * w)
            .sum()
    }

    /// Mean squared lattice velocity, weight (1 - cos 2p dx)/(2 m^2 dx^2).
    pub fn velocity_second_moment(&self, mass: f64) -> f64 {
        let d = self.dx;
        self.momenta
            .iter()
            .zip(&self.probs)
            .map(|(p, w)| (1.0 - (2.0 * p * d).cos()) / (2.0 * mass * mass * d * d) * w)
            .sum()
    }
}

/// Invert the displacement characteristic function along one axis into the
/// velocity distribution. chi(-n) = conj(chi(n)) holds identically (swap the
/// summation variable), so only forward displacements are evaluated.
pub fn velocity_distribution(
    psi: &WaveFunction,
    field: &GaugeField,
    axis: Axis,
) -> Result<VelocityDistribution> {
    if psi.grid() != field.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = psi.grid();
    let n_len = match axis {
        Axis::X => grid.nx(),
        Axis::Y => grid.ny(),
    };
    let half = n_len / 2;
    let prefix = link_prefix(field, axis);
    let mut chi = vec![Complex64::new(0.0, 0.0); half + 1];
    for (n, c) in chi.iter_mut().enumerate() {
        *c = chi_axis(psi, axis, &prefix, n);
    }
    let dx = grid.dx();
    let nn = n_len as f64;
    let mut momenta = Vec::with_capacity(n_len);
    let mut probs = Vec::with_capacity(n_len);
    for m in -(half as i64)..half as i64 {
        let p = 2.0 * std::f64::consts::PI * m as f64 / (nn * dx);
        // (1/N) sum_n chi(n) e^{-2 pi i m n / N}, negative n folded in by
        // conjugate symmetry; n = N/2 appears once (its own alias)
        let mut s = chi[0].re;
        for (n, c) in chi.iter().enumerate().skip(1) {
            let ph = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (m * n as i64) as f64 / nn);
            if n == half {
                s += (c * ph).re;
            } else {
                s += 2.0 * (c * ph).re;
            }
        }
        momenta.push(p);
        probs.push(s / nn);
    }
    Ok(VelocityDistribution { dx, momenta, probs })
}

/// Expectation of the gauge-invariant rotation by pi: every site is paired
/// with its point reflection, the partner amplitude transported along the
/// clockwise arc of the site's own radius. Support is the annulus where
/// arcs are representable: pairs closer to the origin than a few cells or
/// outside the inscribed circle are dropped; every scenario keeps its
/// weight well inside that annulus.
pub fn angular_displacement_expectation(psi: &WaveFunction, field: &GaugeField) -> Result<Complex64> {
    if psi.grid() != field.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = psi.grid();
    let dv = grid.dx() * grid.dx();
    let min_r = MIN_ARC_RADIUS_CELLS * grid.dx();
    // a full semicircle of radius r sweeps the whole disk, so it is only
    // representable inside the inscribed circle (minus rounding slack)
    let max_r = grid.x_walls().1.min(grid.y_walls().1) - 0.5 * grid.dx();
    let peak = psi.amps().iter().map(|a| a.norm()).fold(0.0f64, f64::max);
    let floor = ANG_AMP_FLOOR * peak;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let s = psi.amp(i, j);
            let (ri, rj) = grid.reflect(i, j);
            let partner = psi.amp(ri, rj);
            if s.norm() * partner.norm() <= floor * floor {
                continue;
            }
            let (x, y) = grid.pos(i, j);
            let r = (x * x + y * y).sqrt();
            if r < min_r || r > max_r {
                continue;
            }
            // clockwise from -s to s: azimuth decreases by pi
            let phi_from = (-y).atan2(-x);
            let path = build_path(
                grid,
                PathKind::Arc { center: (0.0, 0.0), r, phi_from, phi_to: phi_from - std::f64::consts::PI },
            )?;
            let sites = path.sites();
            debug_assert_eq!(*sites.first().unwrap(), (ri, rj));
            debug_assert_eq!(*sites.last().unwrap(), (i, j));
            let mut w = 0.0;
            for pair in sites.windows(2) {
                w += field.link_phase(pair[0], pair[1])?;
            }
            // the arc carries psi(-s) to s, so the transport exponent is
            // +W(-s -> s); pairing with psi*(s) cancels gauge rotations
            acc += s.conj() * Complex64::from_polar(1.0, w) * partner;
        }
    }
    Ok(acc * dv)
}

/// Phase of the spatial Fourier component of |psi|^2 at wavenumber 2 k0
/// along the axis. Meaningful once the packets overlap; below the relative
/// amplitude floor the fringe is reported missing.
pub fn fringe_shift(psi: &WaveFunction, k0: f64, axis: Axis) -> Result<f64> {
    let grid = psi.grid();
    let mut total = 0.0;
    let mut comp = Complex64::new(0.0, 0.0);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let w = psi.amp(i, j).norm_sqr();
            let coord = match axis {
                Axis::X => grid.x(i),
                Axis::Y => grid.y(j),
            };
            total += w;
            comp += w * Complex64::from_polar(1.0, 2.0 * k0 * coord);
        }
    }
    let amplitude = comp.norm() / total;
    if !(amplitude > FRINGE_FLOOR) {
        return Err(Error::NoFringe { amplitude, floor: FRINGE_FLOOR });
    }
    Ok(comp.arg())
}

/// Locate the jump in a series: t_cross at the largest |discrete
/// derivative| (earliest wins ties), plateaus averaged over the leading and
/// trailing `settle` windows, width as the FWHM of the derivative peak.
pub fn detect_step(series: &TimeSeries, settle: f64) -> Result<StepReport> {
    let n = series.len();
    if n < 4 {
        return Err(Error::NoPlateau(format!("series has only {} samples", n)));
    }
    let times = series.times();
    let values = series.values();
    let t0 = times[0];
    let t1 = times[n - 1];
    if !(settle > 0.0) || t1 - t0 < 2.0 * settle {
        return Err(Error::NoPlateau(format!(
            "series spans {:.6}, cannot hold two plateaus of {:.6}",
            t1 - t0,
            settle
        )));
    }
    let mut deriv = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let dt = times[k + 1] - times[k];
        deriv.push((values[k + 1] - values[k]).norm() / dt);
    }
    let (mut k_max, mut d_max) = (0usize, deriv[0]);
    for (k, &d) in deriv.iter().enumerate().skip(1) {
        if d > d_max {
            k_max = k;
            d_max = d;
        }
    }
    let t_cross = 0.5 * (times[k_max] + times[k_max + 1]);

    let width = if d_max > 0.0 {
        let half = 0.5 * d_max;
        let mut lo = k_max;
        while lo > 0 && deriv[lo - 1] >= half {
            lo -= 1;
        }
        let mut hi = k_max;
        while hi + 1 < deriv.len() && deriv[hi + 1] >= half {
            hi += 1;
        }
        times[hi + 1] - times[lo]
    } else {
        0.0
    };

    let lead: Vec<Complex64> = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t <= t0 + settle)
        .map(|(_, &v)| v)
        .collect();
    let trail: Vec<Complex64> = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= t1 - settle)
        .map(|(_, &v)| v)
        .collect();
    if t_cross <= t0 + settle || t_cross >= t1 - settle {
        return Err(Error::NoPlateau(format!(
            "transition at t = {:.6} overlaps a plateau window",
            t_cross
        )));
    }
    let before = plateau_mean(&lead);
    let after = plateau_mean(&trail);
    let drifting = plateau_drifts(&lead) || plateau_drifts(&trail);
    Ok(StepReport { t_cross, before, after, width, drifting })
}

fn plateau_mean(vals: &[Complex64]) -> Complex64 {
    vals.iter().sum::<Complex64>() / vals.len() as f64
}

/// Drift check: the window's two halves should agree to within ten
/// in-plateau standard deviations.
fn plateau_drifts(vals: &[Complex64]) -> bool {
    if vals.len() < 4 {
        return false;
    }
    let (a, b) = vals.split_at(vals.len() / 2);
    let ma = plateau_mean(a);
    let mb = plateau_mean(b);
    let var = |xs: &[Complex64], m: Complex64| {
        xs.iter().map(|x| (x - m).norm_sqr()).sum::<f64>() / xs.len() as f64
    };
    let sigma = (0.5 * (var(a, ma) + var(b, mb))).sqrt();
    (mb - ma).norm() > 10.0 * sigma && sigma > 0.0
}
