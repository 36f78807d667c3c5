use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// Complex amplitudes on a [`Grid2D`], stored row-major with i fastest
/// (shape `(ny, nx)`, indexed `[[j, i]]`).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid2D,
    amps: Array2<Complex64>,
}

/// Isotropic Gaussian packet: coeff * exp(-(r-c)^2 / (4 sigma^2)) * exp(i k.(r-c)).
///
/// sigma is the standard deviation of the position density |psi|^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketSpec {
    pub center: (f64, f64),
    pub sigma: f64,
    pub k: (f64, f64),
    pub coeff: Complex64,
}

impl PacketSpec {
    pub fn new(center: (f64, f64), sigma: f64, k: (f64, f64)) -> Self {
        Self {
            center,
            sigma,
            k,
            coeff: Complex64::new(1.0, 0.0),
        }
    }

    fn validate(&self, grid: &Grid2D) -> Result<()> {
        let dx = grid.dx();
        if !(self.sigma >= 2.0 * dx) {
            return Err(Error::InvalidPacket(format!(
                "sigma = {} under-resolved; need sigma >= 2 dx = {}",
                self.sigma,
                2.0 * dx
            )));
        }
        let kmag = (self.k.0 * self.k.0 + self.k.1 * self.k.1).sqrt();
        let kmax = std::f64::consts::PI / (4.0 * dx);
        if kmag > kmax {
            return Err(Error::InvalidPacket(format!(
                "|k| = {:.6} too close to the zone edge; need |k| <= pi/(4 dx) = {:.6}",
                kmag, kmax
            )));
        }
        // 4 sigma support, at least 4 sites clear of every wall
        let margin = 4.0 * self.sigma + 4.0 * dx;
        let (xlo, xhi) = grid.x_walls();
        let (ylo, yhi) = grid.y_walls();
        if self.center.0 - margin < xlo
            || self.center.0 + margin > xhi
            || self.center.1 - margin < ylo
            || self.center.1 + margin > yhi
        {
            return Err(Error::InvalidPacket(format!(
                "packet at ({}, {}) with sigma {} does not fit: support must stay 4 sites off every wall",
                self.center.0, self.center.1, self.sigma
            )));
        }
        Ok(())
    }
}

/// Normalized discrete Gaussian with carrier phase e^{i k.(r - center)}.
pub fn gaussian_packet(grid: Grid2D, spec: &PacketSpec) -> Result<WaveFunction> {
    spec.validate(&grid)?;
    let (cx, cy) = spec.center;
    let (kx, ky) = spec.k;
    let inv4s2 = 1.0 / (4.0 * spec.sigma * spec.sigma);
    let mut amps = Array2::zeros((grid.ny(), grid.nx()));
    for j in 0..grid.ny() {
        let y = grid.y(j) - cy;
        for i in 0..grid.nx() {
            let x = grid.x(i) - cx;
            let env = (-(x * x + y * y) * inv4s2).exp();
            let phase = kx * x + ky * y;
            amps[[j, i]] = spec.coeff * Complex64::from_polar(env, phase);
        }
    }
    let mut psi = WaveFunction { grid, amps };
    psi.normalize();
    Ok(psi)
}

/// Normalized linear combination of states on one grid.
pub fn superpose(parts: &[(&WaveFunction, Complex64)]) -> Result<WaveFunction> {
    let (first, _) = parts
        .first()
        .ok_or_else(|| Error::InvalidState("superpose needs at least one part".into()))?;
    let grid = first.grid;
    let mut amps = Array2::zeros((grid.ny(), grid.nx()));
    for (part, coeff) in parts {
        if part.grid != grid {
            return Err(Error::GridMismatch);
        }
        ndarray::Zip::from(&mut amps).and(&part.amps).for_each(|a, &p| *a += coeff * p);
    }
    let mut psi = WaveFunction { grid, amps };
    let n = psi.norm();
    if n < 1e-12 {
        return Err(Error::InvalidState(
            "superposition cancels to zero norm".into(),
        ));
    }
    psi.normalize();
    Ok(psi)
}

impl WaveFunction {
    /// Wrap raw amplitudes; used by the dump reader and by tests.
    pub fn from_amps(grid: Grid2D, amps: Array2<Complex64>) -> Result<Self> {
        if amps.dim() != (grid.ny(), grid.nx()) {
            return Err(Error::InvalidState(format!(
                "amplitude array {:?} does not match grid {}x{}",
                amps.dim(),
                grid.nx(),
                grid.ny()
            )));
        }
        Ok(Self { grid, amps })
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn amps(&self) -> &Array2<Complex64> {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.amps
    }

    pub fn amp(&self, i: usize, j: usize) -> Complex64 {
        self.amps[[j, i]]
    }

    /// sum |psi|^2 dx^2
    pub fn norm_sq(&self) -> f64 {
        let dv = self.grid.dx() * self.grid.dx();
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * dv
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let s = Complex64::new(1.0 / n, 0.0);
            self.amps.mapv_inplace(|a| a * s);
        }
    }

    /// sum psi* phi dx^2
    pub fn inner_product(&self, other: &WaveFunction) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let dv = self.grid.dx() * self.grid.dx();
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.amps.iter().zip(other.amps.iter()) {
            acc += a.conj() * b;
        }
        Ok(acc * dv)
    }

    /// Probability within `band` sites of any wall.
    pub fn boundary_band_probability(&self, band: usize) -> f64 {
        let (ny, nx) = self.amps.dim();
        let dv = self.grid.dx() * self.grid.dx();
        let mut acc = 0.0;
        for j in 0..ny {
            let edge_row = j < band || j >= ny - band;
            for i in 0..nx {
                if edge_row || i < band || i >= nx - band {
                    acc += self.amps[[j, i]].norm_sqr();
                }
            }
        }
        acc * dv
    }

    /// Multiply by exp(i phase(x, y)) site by site; exactly unitary.
    pub fn apply_phase(&mut self, phase: impl Fn(f64, f64) -> f64) {
        let grid = self.grid;
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                let p = phase(grid.x(i), y);
                self.amps[[j, i]] *= Complex64::from_polar(1.0, p);
            }
        }
    }

    /// Position expectation values (diagnostic).
    pub fn center_of_mass(&self) -> (f64, f64) {
        let dv = self.grid.dx() * self.grid.dx();
        let (mut mx, mut my, mut m) = (0.0, 0.0, 0.0);
        for j in 0..self.grid.ny() {
            let y = self.grid.y(j);
            for i in 0..self.grid.nx() {
                let w = self.amps[[j, i]].norm_sqr() * dv;
                mx += w * self.grid.x(i);
                my += w * y;
                m += w;
            }
        }
        (mx / m, my / m)
    }
}
