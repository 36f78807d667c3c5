use crate::error::{Error, Result};

/// Rectangular lattice of `nx * ny` sites with spacing `dx`.
///
/// Site (i, j) sits at ((i - nx/2 + 1/2) dx, (j - ny/2 + 1/2) dx). The
/// half-site offset keeps the origin at a plaquette centre, so point
/// reflection (x, y) -> (-x, -y) is an exact site permutation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    dx: f64,
}

impl Grid2D {
    pub const MIN_SIDE: usize = 32;

    pub fn new(nx: usize, ny: usize, dx: f64) -> Result<Self> {
        if nx < Self::MIN_SIDE || ny < Self::MIN_SIDE {
            return Err(Error::InvalidGrid(format!(
                "need at least {} sites per side, got {}x{}",
                Self::MIN_SIDE,
                nx,
                ny
            )));
        }
        if nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "site counts must be even, got {}x{}",
                nx, ny
            )));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::InvalidGrid(format!("dx must be positive, got {}", dx)));
        }
        Ok(Self { nx, ny, dx })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn n_sites(&self) -> usize {
        self.nx * self.ny
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.nx as f64 / 2.0 + 0.5) * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - self.ny as f64 / 2.0 + 0.5) * self.dx
    }

    pub fn pos(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x(i), self.y(j))
    }

    /// Half-open box walls; sites live strictly inside.
    pub fn x_walls(&self) -> (f64, f64) {
        let half = self.nx as f64 / 2.0 * self.dx;
        (-half, half)
    }

    pub fn y_walls(&self) -> (f64, f64) {
        let half = self.ny as f64 / 2.0 * self.dx;
        (-half, half)
    }

    /// Exact involution: the site at (-x, -y).
    pub fn reflect(&self, i: usize, j: usize) -> (usize, usize) {
        (self.nx - 1 - i, self.ny - 1 - j)
    }

    pub fn contains(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny
    }
}
