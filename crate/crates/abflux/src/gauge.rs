//! Link-phase gauge fields for a single flux line.
//!
//! The vector potential lives on lattice links (Peierls convention): the
//! phase on a link is the line integral of A along it. A delta-function
//! string potential is then exact rather than regularized, and the total
//! flux through a plaquette is always the counterclockwise circulation of
//! link phases. The flux position must sit strictly inside a plaquette;
//! configurations that place it on a gridline are rejected, never nudged.
//!
//! Sign convention, fixed once and deferred to everywhere else: the
//! counterclockwise circulation around the plaquette containing the flux
//! equals +alpha. All three constructors and the Wilson-loop arithmetic
//! below reproduce it.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::wavefunction::WaveFunction;

/// Relative tolerance (in units of dx) for deciding a coordinate lies on a
/// gridline. Rejection, not perturbation: a flux this close to a link is a
/// config error.
const GRIDLINE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxLineSpec {
    /// Continuous flux-line position (x_s, y_s); must be strictly inside a
    /// plaquette of whatever grid the field is built on.
    pub pos: (f64, f64),
    /// Dimensionless flux phase alpha; a Wilson loop winding once
    /// counterclockwise around `pos` picks up e^{i alpha}.
    pub alpha: f64,
    /// Drift velocity of the line; zero for a static flux.
    pub velocity: (f64, f64),
}

impl FluxLineSpec {
    pub fn new(pos: (f64, f64), alpha: f64) -> Self {
        FluxLineSpec { pos, alpha, velocity: (0.0, 0.0) }
    }

    pub fn with_velocity(pos: (f64, f64), alpha: f64, velocity: (f64, f64)) -> Self {
        FluxLineSpec { pos, alpha, velocity }
    }

    /// Position at time t along the straight drift trajectory.
    pub fn pos_at(&self, t: f64) -> (f64, f64) {
        (self.pos.0 + self.velocity.0 * t, self.pos.1 + self.velocity.1 * t)
    }

    /// Same line moved to where it sits at time t.
    pub fn at_time(&self, t: f64) -> FluxLineSpec {
        FluxLineSpec { pos: self.pos_at(t), ..*self }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.alpha.is_finite()
            && self.pos.0.is_finite()
            && self.pos.1.is_finite()
            && self.velocity.0.is_finite()
            && self.velocity.1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidState("non-finite flux line parameter".into()))
        }
    }
}

/// Gauge field as per-link phases.
///
/// `thx[[j, i]]` sits on the link (i, j) -> (i+1, j), shape (ny, nx-1);
/// `thy[[j, i]]` on (i, j) -> (i, j+1), shape (ny-1, nx). Immutable after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeField {
    grid: Grid2D,
    thx: Array2<f64>,
    thy: Array2<f64>,
    flux: FluxLineSpec,
}

/// Ordered list of pairwise-adjacent sites.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePath {
    sites: Vec<(usize, usize)>,
}

/// Path shapes understood by [`build_path`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathKind {
    /// Staircase approximation of the segment from site `from` displaced by
    /// `displacement` sites; the segment passes through every visited site's
    /// dx-cell, so sites stay within dx/2 of it along each axis.
    Straight { from: (usize, usize), displacement: (i64, i64) },
    /// Polyline within dx of the circle of radius `r` around `center`,
    /// swept from azimuth `phi_from` to `phi_to` (counterclockwise when
    /// `phi_to > phi_from`, clockwise otherwise; no angle wrapping).
    Arc { center: (f64, f64), r: f64, phi_from: f64, phi_to: f64 },
}

/// Wrap a phase into (-pi, pi].
pub fn wrap_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = phi - two_pi * (phi / two_pi).round();
    if w <= -std::f64::consts::PI {
        w += two_pi;
    }
    w
}

/// Column index of the plaquette interval (x_i, x_{i+1}) containing v, or an
/// error when v lies on a gridline or outside the site hull.
fn plaquette_index(v: f64, n: usize, dx: f64, coord: impl Fn(usize) -> f64) -> Result<usize> {
    let lo = coord(0);
    let hi = coord(n - 1);
    if !(v > lo && v < hi) {
        return Err(Error::FluxOutsideBox { x: v, y: f64::NAN });
    }
    let idx = ((v - lo) / dx).floor() as usize;
    let idx = idx.min(n - 2);
    let near = |s: f64| (v - s).abs() < GRIDLINE_TOL * dx;
    if near(coord(idx)) || near(coord(idx + 1)) {
        return Err(Error::FluxOnGridLine { x: v, y: f64::NAN });
    }
    Ok(idx)
}

impl GaugeField {
    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn flux(&self) -> FluxLineSpec {
        self.flux
    }

    pub fn thx(&self) -> &Array2<f64> {
        &self.thx
    }

    pub fn thy(&self) -> &Array2<f64> {
        &self.thy
    }

    /// Phase on the link a -> b for nearest-neighbor sites, signed against
    /// the stored orientation when traversed backwards.
    pub fn link_phase(&self, a: (usize, usize), b: (usize, usize)) -> Result<f64> {
        let (ai, aj) = a;
        let (bi, bj) = b;
        let di = bi as i64 - ai as i64;
        let dj = bj as i64 - aj as i64;
        match (di, dj) {
            (1, 0) => Ok(self.thx[[aj, ai]]),
            (-1, 0) => Ok(-self.thx[[aj, bi]]),
            (0, 1) => Ok(self.thy[[aj, ai]]),
            (0, -1) => Ok(-self.thy[[bj, ai]]),
            _ => Err(Error::NonAdjacentPath { a, b }),
        }
    }

    /// Indices of the plaquette containing the flux position.
    pub fn flux_plaquette(&self) -> Result<(usize, usize)> {
        flux_plaquette_on(self.grid, self.flux.pos)
    }
}

pub fn flux_plaquette_on(grid: Grid2D, pos: (f64, f64)) -> Result<(usize, usize)> {
    let gi = plaquette_index(pos.0, grid.nx(), grid.dx(), |i| grid.x(i))
        .map_err(|e| relabel(e, pos))?;
    let gj = plaquette_index(pos.1, grid.ny(), grid.dx(), |j| grid.y(j))
        .map_err(|e| relabel(e, pos))?;
    Ok((gi, gj))
}

fn relabel(e: Error, pos: (f64, f64)) -> Error {
    match e {
        Error::FluxOnGridLine { .. } => Error::FluxOnGridLine { x: pos.0, y: pos.1 },
        Error::FluxOutsideBox { .. } => Error::FluxOutsideBox { x: pos.0, y: pos.1 },
        other => other,
    }
}

/// String gauge: the potential is a delta line along the upward vertical ray
/// from the flux position, so th = -alpha on exactly those x-links crossing
/// {x = x_s, y > y_s} and every other phase vanishes.
pub fn string_gauge(grid: Grid2D, flux: FluxLineSpec) -> Result<GaugeField> {
    flux.validate()?;
    let (gi, gj) = flux_plaquette_on(grid, flux.pos)?;
    let mut thx = Array2::zeros((grid.ny(), grid.nx() - 1));
    let thy = Array2::zeros((grid.ny() - 1, grid.nx()));
    for j in (gj + 1)..grid.ny() {
        thx[[j, gi]] = -flux.alpha;
    }
    Ok(GaugeField { grid, thx, thy, flux })
}

/// Alternate string gauge with the delta line along the rightward horizontal
/// ray: th = +alpha on y-links crossing {y = y_s, x > x_s}. Only used to
/// widen gauge-invariance coverage.
pub fn horizontal_string_gauge(grid: Grid2D, flux: FluxLineSpec) -> Result<GaugeField> {
    flux.validate()?;
    let (gi, gj) = flux_plaquette_on(grid, flux.pos)?;
    let thx = Array2::zeros((grid.ny(), grid.nx() - 1));
    let mut thy = Array2::zeros((grid.ny() - 1, grid.nx()));
    for i in (gi + 1)..grid.nx() {
        thy[[gj, i]] = flux.alpha;
    }
    Ok(GaugeField { grid, thx, thy, flux })
}

/// Coulomb gauge: A is the planar vortex profile, whose exact line integral
/// along a straight link is (alpha/2pi) times the azimuth change of the
/// endpoints as seen from the flux. A link never subtends pi or more from a
/// point off the gridlines, so the wrapped branch is the continuous one.
pub fn coulomb_gauge(grid: Grid2D, flux: FluxLineSpec) -> Result<GaugeField> {
    flux.validate()?;
    flux_plaquette_on(grid, flux.pos)?;
    let (xs, ys) = flux.pos;
    let scale = flux.alpha / (2.0 * std::f64::consts::PI);
    let az = |i: usize, j: usize| (grid.y(j) - ys).atan2(grid.x(i) - xs);
    let mut thx = Array2::zeros((grid.ny(), grid.nx() - 1));
    for j in 0..grid.ny() {
        for i in 0..grid.nx() - 1 {
            thx[[j, i]] = scale * wrap_phase(az(i + 1, j) - az(i, j));
        }
    }
    let mut thy = Array2::zeros((grid.ny() - 1, grid.nx()));
    for j in 0..grid.ny() - 1 {
        for i in 0..grid.nx() {
            thy[[j, i]] = scale * wrap_phase(az(i, j + 1) - az(i, j));
        }
    }
    Ok(GaugeField { grid, thx, thy, flux })
}

/// Counterclockwise circulation around plaquette (i, j), wrapped to
/// (-pi, pi].
pub fn plaquette_flux(field: &GaugeField, i: usize, j: usize) -> Result<f64> {
    let g = field.grid;
    if i + 1 >= g.nx() || j + 1 >= g.ny() {
        return Err(Error::InvalidGrid(format!(
            "plaquette ({}, {}) out of range for {}x{} sites",
            i,
            j,
            g.nx(),
            g.ny()
        )));
    }
    let circ = field.thx[[j, i]] + field.thy[[j, i + 1]]
        - field.thx[[j + 1, i]]
        - field.thy[[j, i]];
    Ok(wrap_phase(circ))
}

/// Apply the gauge transformation chi: link phases pick up chi(b) - chi(a)
/// and amplitudes the factor e^{i chi}. Plaquette fluxes are untouched.
pub fn gauge_transform(
    field: &GaugeField,
    psi: &WaveFunction,
    chi: &Array2<f64>,
) -> Result<(GaugeField, WaveFunction)> {
    let g = field.grid;
    if psi.grid() != g {
        return Err(Error::GridMismatch);
    }
    if chi.dim() != (g.ny(), g.nx()) {
        return Err(Error::InvalidState(format!(
            "chi shape {:?} does not match grid ({}, {})",
            chi.dim(),
            g.ny(),
            g.nx()
        )));
    }
    let mut out = field.clone();
    for j in 0..g.ny() {
        for i in 0..g.nx() - 1 {
            out.thx[[j, i]] += chi[[j, i + 1]] - chi[[j, i]];
        }
    }
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() {
            out.thy[[j, i]] += chi[[j + 1, i]] - chi[[j, i]];
        }
    }
    let mut phased = psi.clone();
    let amps = phased.amps_mut();
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let rot = num_complex::Complex64::from_polar(1.0, chi[[j, i]]);
            amps[[j, i]] *= rot;
        }
    }
    Ok((out, phased))
}

/// Sum of signed link phases along a path; the lattice Wilson-line phase.
/// For a closed counterclockwise loop this equals the sum of the enclosed
/// plaquette fluxes (mod 2pi).
pub fn wilson_phase(field: &GaugeField, path: &LatticePath) -> Result<f64> {
    let g = field.grid;
    let mut acc = 0.0;
    for w in path.sites.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.0 >= g.nx() || a.1 >= g.ny() || b.0 >= g.nx() || b.1 >= g.ny() {
            return Err(Error::PathOutsideGrid {
                step: 0,
                i: a.0.max(b.0) as i64,
                j: a.1.max(b.1) as i64,
            });
        }
        acc += field.link_phase(a, b)?;
    }
    Ok(acc)
}

impl LatticePath {
    /// Validate adjacency of consecutive sites. Empty and single-site paths
    /// are legal and carry zero phase.
    pub fn from_sites(sites: Vec<(usize, usize)>) -> Result<Self> {
        for w in sites.windows(2) {
            let (a, b) = (w[0], w[1]);
            let di = (b.0 as i64 - a.0 as i64).abs();
            let dj = (b.1 as i64 - a.1 as i64).abs();
            if di + dj != 1 {
                return Err(Error::NonAdjacentPath { a, b });
            }
        }
        Ok(LatticePath { sites })
    }

    pub fn sites(&self) -> &[(usize, usize)] {
        &self.sites
    }

    pub fn reversed(&self) -> LatticePath {
        let mut sites = self.sites.clone();
        sites.reverse();
        LatticePath { sites }
    }

    pub fn first(&self) -> Option<(usize, usize)> {
        self.sites.first().copied()
    }

    pub fn last(&self) -> Option<(usize, usize)> {
        self.sites.last().copied()
    }
}

pub fn build_path(grid: Grid2D, kind: PathKind) -> Result<LatticePath> {
    match kind {
        PathKind::Straight { from, displacement } => straight_path(grid, from, displacement),
        PathKind::Arc { center, r, phi_from, phi_to } => arc_path(grid, center, r, phi_from, phi_to),
    }
}

/// Staircase from `from` to `from + d` visiting exactly the cells the ideal
/// segment passes through, so every site sits within dx/2 of the segment
/// along each axis. Built in a canonical direction and reversed on demand so
/// that the shape of -d is exactly the reverse of the shape of d.
fn straight_path(grid: Grid2D, from: (usize, usize), d: (i64, i64)) -> Result<LatticePath> {
    let (di, dj) = d;
    if di < 0 || (di == 0 && dj < 0) {
        let tip = checked_site(grid, from.0 as i64 + di, from.1 as i64 + dj, 0)?;
        return Ok(straight_path(grid, tip, (-di, -dj))?.reversed());
    }
    let (i0, j0) = (from.0 as i64, from.1 as i64);
    checked_site(grid, i0, j0, 0)?;
    checked_site(grid, i0 + di, j0 + dj, (di.abs() + dj.abs()) as usize)?;
    let sj = if dj >= 0 { 1i64 } else { -1i64 };
    let (adi, adj) = (di, dj.abs());
    let mut sites = Vec::with_capacity((adi + adj + 1) as usize);
    sites.push((i0 as usize, j0 as usize));
    let (mut ci, mut cj) = (0i64, 0i64);
    while ci < adi || cj < adj {
        // grid traversal: step across whichever cell boundary the segment
        // crosses first; boundaries sit at half-integers, so compare the
        // crossing parameters (ci + 1/2)/adi and (cj + 1/2)/adj exactly
        let take_x = if ci == adi {
            false
        } else if cj == adj {
            true
        } else {
            (2 * ci + 1) * adj <= (2 * cj + 1) * adi
        };
        if take_x {
            ci += 1;
        } else {
            cj += 1;
        }
        sites.push(((i0 + ci) as usize, (j0 + cj * sj) as usize));
    }
    LatticePath::from_sites(sites)
}

fn checked_site(grid: Grid2D, i: i64, j: i64, step: usize) -> Result<(usize, usize)> {
    if grid.contains(i, j) {
        Ok((i as usize, j as usize))
    } else {
        Err(Error::PathOutsideGrid { step, i, j })
    }
}

/// Polyline along the circle of radius r about `center`, swept from phi_from
/// to phi_to. Dense angular samples are rounded to sites; diagonal gaps are
/// filled with the corner whose radius error is smaller, which keeps every
/// site within one cell diagonal of the circle.
fn arc_path(grid: Grid2D, center: (f64, f64), r: f64, phi_from: f64, phi_to: f64) -> Result<LatticePath> {
    let dx = grid.dx();
    if r < 4.0 * dx {
        return Err(Error::InvalidState(format!(
            "arc radius {} below the resolvable minimum {}",
            r,
            4.0 * dx
        )));
    }
    let sweep = phi_to - phi_from;
    let site_of = |phi: f64| -> Result<(usize, usize)> {
        let x = center.0 + r * phi.cos();
        let y = center.1 + r * phi.sin();
        let i = ((x - grid.x(0)) / dx).round() as i64;
        let j = ((y - grid.y(0)) / dx).round() as i64;
        checked_site(grid, i, j, 0)
    };
    if sweep == 0.0 {
        return LatticePath::from_sites(vec![site_of(phi_from)?]);
    }
    // sample tightly enough that consecutive rounded sites are 8-neighbors
    let n = ((r * sweep.abs()) / (0.25 * dx)).ceil().max(8.0) as usize;
    let mut sites: Vec<(usize, usize)> = Vec::new();
    let radius_err = |s: (usize, usize)| -> f64 {
        let (px, py) = grid.pos(s.0, s.1);
        (((px - center.0).powi(2) + (py - center.1).powi(2)).sqrt() - r).abs()
    };
    for step in 0..=n {
        let phi = phi_from + sweep * step as f64 / n as f64;
        let s = site_of(phi)?;
        match sites.last().copied() {
            None => sites.push(s),
            Some(prev) if prev == s => {}
            Some(prev) => {
                let di = s.0 as i64 - prev.0 as i64;
                let dj = s.1 as i64 - prev.1 as i64;
                if di.abs() > 1 || dj.abs() > 1 {
                    return Err(Error::InvalidState(format!(
                        "arc sampling jumped from {:?} to {:?}",
                        prev, s
                    )));
                }
                if di.abs() == 1 && dj.abs() == 1 {
                    let c1 = (s.0, prev.1);
                    let c2 = (prev.0, s.1);
                    sites.push(if radius_err(c1) <= radius_err(c2) { c1 } else { c2 });
                }
                sites.push(s);
            }
        }
    }
    LatticePath::from_sites(sites)
}

/// Per-site phase chi turning `from` into `to` by row-column integration,
/// verified link-by-link. Errors when the two fields are not gauge
/// equivalent.
pub fn connecting_chi(from: &GaugeField, to: &GaugeField) -> Result<Array2<f64>> {
    let g = from.grid;
    if to.grid != g {
        return Err(Error::GridMismatch);
    }
    let mut chi = Array2::zeros((g.ny(), g.nx()));
    for i in 1..g.nx() {
        chi[[0, i]] = chi[[0, i - 1]] + (to.thx[[0, i - 1]] - from.thx[[0, i - 1]]);
    }
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            chi[[j, i]] = chi[[j - 1, i]] + (to.thy[[j - 1, i]] - from.thy[[j - 1, i]]);
        }
    }
    let mut worst = 0.0f64;
    for j in 0..g.ny() {
        for i in 0..g.nx() - 1 {
            let want = to.thx[[j, i]] - from.thx[[j, i]];
            let got = chi[[j, i + 1]] - chi[[j, i]];
            worst = worst.max(wrap_phase(want - got).abs());
        }
    }
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() {
            let want = to.thy[[j, i]] - from.thy[[j, i]];
            let got = chi[[j + 1, i]] - chi[[j, i]];
            worst = worst.max(wrap_phase(want - got).abs());
        }
    }
    if worst > 1e-10 {
        return Err(Error::InvalidState(format!(
            "fields are not gauge equivalent: worst link mismatch {:.3e}",
            worst
        )));
    }
    Ok(chi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefunction::{gaussian_packet, PacketSpec};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const PI: f64 = std::f64::consts::PI;

    fn grid() -> Grid2D {
        Grid2D::new(32, 32, 0.25).unwrap()
    }

    /// min over the segment ab of the per-axis (Chebyshev) distance to p;
    /// convex piecewise-linear in the parameter, so the kinks and endpoints
    /// carry the minimum.
    fn chebyshev_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
        let (ux, uy) = (b.0 - a.0, b.1 - a.1);
        let (cx, cy) = (p.0 - a.0, p.1 - a.1);
        let eval = |t: f64| {
            let t = t.clamp(0.0, 1.0);
            (cx - t * ux).abs().max((cy - t * uy).abs())
        };
        let mut best = eval(0.0).min(eval(1.0));
        for t in [
            if ux != 0.0 { Some(cx / ux) } else { None },
            if uy != 0.0 { Some(cy / uy) } else { None },
            if ux != uy { Some((cx - cy) / (ux - uy)) } else { None },
            if ux + uy != 0.0 { Some((cx + cy) / (ux + uy)) } else { None },
        ]
        .into_iter()
        .flatten()
        {
            best = best.min(eval(t));
        }
        best
    }

    fn flux(alpha: f64) -> FluxLineSpec {
        // (0, 0) is a plaquette center on any even grid
        FluxLineSpec::new((0.0, 0.0), alpha)
    }

    fn audit(field: &GaugeField, alpha: f64) {
        let g = field.grid();
        let (fi, fj) = field.flux_plaquette().unwrap();
        for j in 0..g.ny() - 1 {
            for i in 0..g.nx() - 1 {
                let f = plaquette_flux(field, i, j).unwrap();
                let want = if (i, j) == (fi, fj) { wrap_phase(alpha) } else { 0.0 };
                assert!(
                    (f - want).abs() < 1e-10,
                    "plaquette ({}, {}): {} want {}",
                    i,
                    j,
                    f,
                    want
                );
            }
        }
    }

    #[test]
    fn zero_flux_fields_vanish() {
        for f in [
            string_gauge(grid(), flux(0.0)).unwrap(),
            coulomb_gauge(grid(), flux(0.0)).unwrap(),
            horizontal_string_gauge(grid(), flux(0.0)).unwrap(),
        ] {
            assert!(f.thx().iter().all(|&v| v == 0.0));
            assert!(f.thy().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn string_gauge_support_is_one_column() {
        let f = string_gauge(grid(), flux(PI / 2.0)).unwrap();
        let (fi, fj) = f.flux_plaquette().unwrap();
        assert_eq!((fi, fj), (15, 15));
        let mut nonzero = 0;
        for j in 0..f.grid().ny() {
            for i in 0..f.grid().nx() - 1 {
                let v = f.thx()[[j, i]];
                if v != 0.0 {
                    nonzero += 1;
                    assert_eq!(i, fi);
                    assert!(j > fj);
                    assert_abs_diff_eq!(v, -PI / 2.0);
                }
            }
        }
        assert_eq!(nonzero, f.grid().ny() - fj - 1);
        assert!(f.thy().iter().all(|&v| v == 0.0));
        audit(&f, PI / 2.0);
    }

    #[test]
    fn flux_on_gridline_or_outside_is_rejected() {
        let g = grid();
        // x = dx/2 lies on the column of sites next to the center
        assert!(matches!(
            string_gauge(g, FluxLineSpec::new((0.125, 0.0), 1.0)),
            Err(Error::FluxOnGridLine { .. })
        ));
        assert!(matches!(
            coulomb_gauge(g, FluxLineSpec::new((0.0, -0.125), 1.0)),
            Err(Error::FluxOnGridLine { .. })
        ));
        assert!(matches!(
            string_gauge(g, FluxLineSpec::new((9.0, 0.0), 1.0)),
            Err(Error::FluxOutsideBox { .. })
        ));
    }

    #[test]
    fn ccw_wilson_loop_reads_plus_alpha() {
        // the sign oracle: one counterclockwise plaquette loop around the
        // flux must read +alpha for every constructor
        let alpha = 0.83;
        for f in [
            string_gauge(grid(), flux(alpha)).unwrap(),
            coulomb_gauge(grid(), flux(alpha)).unwrap(),
            horizontal_string_gauge(grid(), flux(alpha)).unwrap(),
        ] {
            let (fi, fj) = f.flux_plaquette().unwrap();
            let loop_path = LatticePath::from_sites(vec![
                (fi, fj),
                (fi + 1, fj),
                (fi + 1, fj + 1),
                (fi, fj + 1),
                (fi, fj),
            ])
            .unwrap();
            let w = wilson_phase(&f, &loop_path).unwrap();
            assert_abs_diff_eq!(wrap_phase(w), alpha, epsilon = 1e-10);
            let rev = wilson_phase(&f, &loop_path.reversed()).unwrap();
            assert_abs_diff_eq!(wrap_phase(rev), -alpha, epsilon = 1e-10);
        }
    }

    #[test]
    fn coulomb_audit_and_symmetric_link_value() {
        let alpha = 1.3;
        let f = coulomb_gauge(grid(), flux(alpha)).unwrap();
        audit(&f, alpha);
        // flux at the plaquette center: each of the four surrounding links
        // subtends pi/2, so each carries alpha/4 counterclockwise
        let (fi, fj) = f.flux_plaquette().unwrap();
        assert_abs_diff_eq!(f.thx()[[fj, fi]], alpha / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.thy()[[fj, fi + 1]], alpha / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.thx()[[fj + 1, fi]], -alpha / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.thy()[[fj, fi]], -alpha / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn plaquette_additivity_telescopes() {
        let f = coulomb_gauge(grid(), FluxLineSpec::new((1.0, -0.75), 0.9)).unwrap();
        // counterclockwise rectangle (i0..i1) x (j0..j1)
        let (i0, j0, i1, j1) = (3usize, 5usize, 22usize, 19usize);
        let mut sites = Vec::new();
        for i in i0..=i1 {
            sites.push((i, j0));
        }
        for j in j0 + 1..=j1 {
            sites.push((i1, j));
        }
        for i in (i0..i1).rev() {
            sites.push((i, j1));
        }
        for j in (j0..j1).rev() {
            sites.push((i0, j));
        }
        let loop_w = wilson_phase(&f, &LatticePath::from_sites(sites).unwrap()).unwrap();
        let mut total = 0.0;
        for j in j0..j1 {
            for i in i0..i1 {
                total += plaquette_flux(&f, i, j).unwrap();
            }
        }
        assert_abs_diff_eq!(wrap_phase(loop_w - total), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn horizontal_path_crossing_string_reads_phase_kick() {
        let alpha = 2.1;
        let f = string_gauge(grid(), flux(alpha)).unwrap();
        let (fi, fj) = f.flux_plaquette().unwrap();
        // rightward path above the flux crosses the string once
        let above = build_path(f.grid(), PathKind::Straight { from: (fi - 3, fj + 4), displacement: (6, 0) }).unwrap();
        assert_abs_diff_eq!(wilson_phase(&f, &above).unwrap(), -alpha, epsilon = 1e-12);
        assert_abs_diff_eq!(
            wilson_phase(&f, &above.reversed()).unwrap(),
            alpha,
            epsilon = 1e-12
        );
        // below the flux there is no string
        let below = build_path(f.grid(), PathKind::Straight { from: (fi - 3, fj - 4), displacement: (6, 0) }).unwrap();
        assert_abs_diff_eq!(wilson_phase(&f, &below).unwrap(), 0.0);
        // and the same kick shows up for an upward path in the rotated gauge
        let fh = horizontal_string_gauge(grid(), flux(alpha)).unwrap();
        let up = build_path(fh.grid(), PathKind::Straight { from: (fi + 4, fj - 3), displacement: (0, 6) }).unwrap();
        assert_abs_diff_eq!(wilson_phase(&fh, &up).unwrap(), alpha, epsilon = 1e-12);
    }

    #[test]
    fn wilson_phase_trivial_and_additive() {
        let f = coulomb_gauge(grid(), flux(1.2)).unwrap();
        assert_eq!(wilson_phase(&f, &LatticePath::from_sites(vec![]).unwrap()).unwrap(), 0.0);
        assert_eq!(
            wilson_phase(&f, &LatticePath::from_sites(vec![(4, 4)]).unwrap()).unwrap(),
            0.0
        );
        let full = build_path(f.grid(), PathKind::Straight { from: (3, 20), displacement: (11, -13) }).unwrap();
        let mid = full.sites()[7];
        let head = LatticePath::from_sites(full.sites()[..=7].to_vec()).unwrap();
        let tail = LatticePath::from_sites(full.sites()[7..].to_vec()).unwrap();
        assert_eq!(head.last().unwrap(), mid);
        let (wf, wh, wt) = (
            wilson_phase(&f, &full).unwrap(),
            wilson_phase(&f, &head).unwrap(),
            wilson_phase(&f, &tail).unwrap(),
        );
        assert_abs_diff_eq!(wf, wh + wt, epsilon = 1e-12);
    }

    #[test]
    fn paths_on_opposite_sides_differ_by_alpha() {
        let alpha = 0.77;
        let f = coulomb_gauge(grid(), flux(alpha)).unwrap();
        let (fi, fj) = f.flux_plaquette().unwrap();
        let start = (fi - 5, fj);
        // same endpoints, one path passing above the flux, one below
        let over = LatticePath::from_sites(
            (0..=4)
                .map(|s| (start.0, start.1 + s))
                .chain((1..=10).map(|s| (start.0 + s, start.1 + 4)))
                .chain((0..4).map(|s| (start.0 + 10, start.1 + 3 - s)))
                .collect(),
        )
        .unwrap();
        let under = LatticePath::from_sites(
            (0..=3)
                .map(|s| (start.0, start.1 - s))
                .chain((1..=10).map(|s| (start.0 + s, start.1 - 3)))
                .chain((0..3).map(|s| (start.0 + 10, start.1 - 2 + s)))
                .collect(),
        )
        .unwrap();
        assert_eq!(over.last(), under.last());
        // under followed by reversed over winds once counterclockwise
        let diff = wilson_phase(&f, &under).unwrap() - wilson_phase(&f, &over).unwrap();
        assert_abs_diff_eq!(wrap_phase(diff - alpha), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn straight_paths_stay_near_segment_and_mirror() {
        let g = grid();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let from = (rng.gen_range(6..26), rng.gen_range(6..26));
            let d = (rng.gen_range(-6i64..=6), rng.gen_range(-6i64..=6));
            if from.0 as i64 + d.0 < 0 || from.1 as i64 + d.1 < 0 {
                continue;
            }
            let p = match build_path(g, PathKind::Straight { from, displacement: d }) {
                Ok(p) => p,
                Err(_) => continue,
            };
            assert_eq!(p.first().unwrap(), from);
            let tip = p.last().unwrap();
            assert_eq!(tip.0 as i64 - from.0 as i64, d.0);
            assert_eq!(tip.1 as i64 - from.1 as i64, d.1);
            // segment passes through every site's cell: per-axis distance
            // (max of |dx|, |dy| to the nearest segment point) <= dx/2
            let a = g.pos(from.0, from.1);
            let b = g.pos(tip.0, tip.1);
            for &(si, sj) in p.sites() {
                let dist = chebyshev_to_segment(g.pos(si, sj), a, b);
                assert!(dist <= 0.5 * g.dx() + 1e-12, "site ({}, {}) strays {}", si, sj, dist);
            }
            // exact mirror: shape(-d) is reverse(shape(d))
            let back = build_path(g, PathKind::Straight { from: tip, displacement: (-d.0, -d.1) }).unwrap();
            assert_eq!(back.sites(), p.reversed().sites());
        }
    }

    #[test]
    fn straight_path_exits_grid_is_error() {
        let g = grid();
        assert!(matches!(
            build_path(g, PathKind::Straight { from: (30, 30), displacement: (5, 0) }),
            Err(Error::PathOutsideGrid { .. })
        ));
    }

    #[test]
    fn arc_paths_track_circle_and_split_homotopy() {
        let g = Grid2D::new(64, 64, 0.25).unwrap();
        let alpha = 1.9;
        let center = (0.0, 0.0);
        let f = coulomb_gauge(g, FluxLineSpec::new(center, alpha)).unwrap();
        for &r in &[1.5, 3.0, 5.5] {
            // generic azimuths: endpoints exactly on a cell boundary would
            // round unstably
            let phi0 = 0.1;
            let upper = build_path(g, PathKind::Arc { center, r, phi_from: phi0, phi_to: phi0 + PI }).unwrap();
            let lower = build_path(g, PathKind::Arc { center, r, phi_from: phi0, phi_to: phi0 - PI }).unwrap();
            for p in [&upper, &lower] {
                for &(si, sj) in p.sites() {
                    let (px, py) = g.pos(si, sj);
                    let err = ((px * px + py * py).sqrt() - r).abs();
                    assert!(err <= g.dx(), "r {}: site ({}, {}) radius error {}", r, si, sj, err);
                }
            }
            assert_eq!(upper.first(), lower.first());
            assert_eq!(upper.last(), lower.last());
            // the two half-arcs bound a loop around the flux
            let diff = wilson_phase(&f, &upper).unwrap() - wilson_phase(&f, &lower).unwrap();
            assert_abs_diff_eq!(wrap_phase(diff - alpha), 0.0, epsilon = 1e-9);
        }
        assert!(build_path(g, PathKind::Arc { center, r: 0.5, phi_from: 0.0, phi_to: PI }).is_err());
    }

    #[test]
    fn gauge_transform_keeps_fluxes_and_shifts_links() {
        let g = grid();
        let alpha = 1.1;
        let f = string_gauge(g, flux(alpha)).unwrap();
        let psi = gaussian_packet(g, &PacketSpec::new((-0.5, -0.5), 0.5, (1.0, 0.0))).unwrap();
        // constant chi changes nothing but a global phase
        let chi_const = Array2::from_elem((g.ny(), g.nx()), 0.37);
        let (f2, psi2) = gauge_transform(&f, &psi, &chi_const).unwrap();
        assert_eq!(f2.thx(), f.thx());
        assert_eq!(f2.thy(), f.thy());
        let ip = psi.inner_product(&psi2).unwrap();
        assert_abs_diff_eq!((ip.arg() - 0.37).abs(), 0.0, epsilon = 1e-12);
        // random chi preserves every plaquette flux
        let mut rng = StdRng::seed_from_u64(11);
        let chi = Array2::from_shape_fn((g.ny(), g.nx()), |_| rng.gen_range(-PI..PI));
        let (f3, _) = gauge_transform(&f, &psi, &chi).unwrap();
        let (fi, fj) = f.flux_plaquette().unwrap();
        for j in 0..g.ny() - 1 {
            for i in 0..g.nx() - 1 {
                let want = if (i, j) == (fi, fj) { wrap_phase(alpha) } else { 0.0 };
                assert_abs_diff_eq!(plaquette_flux(&f3, i, j).unwrap(), want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn connecting_chi_maps_string_to_coulomb() {
        let g = grid();
        for &alpha in &[0.6, PI / 2.0, 2.0 * PI] {
            let fs = string_gauge(g, flux(alpha)).unwrap();
            let fc = coulomb_gauge(g, flux(alpha)).unwrap();
            let chi = connecting_chi(&fs, &fc).unwrap();
            let psi = gaussian_packet(g, &PacketSpec::new((-0.5, 0.5), 0.5, (0.0, 0.0))).unwrap();
            let (mapped, _) = gauge_transform(&fs, &psi, &chi).unwrap();
            let dx_err = mapped
                .thx()
                .iter()
                .zip(fc.thx().iter())
                .map(|(a, b)| wrap_phase(a - b).abs())
                .fold(0.0f64, f64::max);
            let dy_err = mapped
                .thy()
                .iter()
                .zip(fc.thy().iter())
                .map(|(a, b)| wrap_phase(a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(dx_err < 1e-10 && dy_err < 1e-10, "alpha {}: {} {}", alpha, dx_err, dy_err);
        }
        // fields with different flux are not gauge equivalent
        let fs = string_gauge(g, flux(1.0)).unwrap();
        let fc = coulomb_gauge(g, flux(1.5)).unwrap();
        assert!(connecting_chi(&fs, &fc).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn wrapped_phase_is_principal_and_equivalent(phi in -1.0e6f64..1.0e6) {
            let w = wrap_phase(phi);
            prop_assert!(w > -PI && w <= PI);
            let gap = (Complex64::from_polar(1.0, phi) - Complex64::from_polar(1.0, w)).norm();
            prop_assert!(gap < 1e-9, "phi {} wraps to {}, unit-circle gap {}", phi, w, gap);
        }

        #[test]
        fn every_construction_quantizes_on_one_plaquette(
            alpha in -10.0f64..10.0,
            ci in 0usize..31,
            cj in 0usize..31,
            fx in 0.05f64..0.95,
            fy in 0.05f64..0.95,
        ) {
            let g = grid();
            let pos = (g.x(ci) + fx * g.dx(), g.y(cj) + fy * g.dx());
            let spec = FluxLineSpec::new(pos, alpha);
            for field in [
                string_gauge(g, spec).unwrap(),
                horizontal_string_gauge(g, spec).unwrap(),
                coulomb_gauge(g, spec).unwrap(),
            ] {
                prop_assert_eq!(field.flux_plaquette().unwrap(), (ci, cj));
                audit(&field, alpha);
            }
        }
    }
}
