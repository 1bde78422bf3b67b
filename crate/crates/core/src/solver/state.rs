use super::grid::Grid;

/// Discrete unknowns on the staggered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub grid: Grid,
    /// Interior face velocities, `u` components first, then `v`.
    pub vel: Vec<f64>,
    pub theta: Vec<f64>,
    /// Director components at cell centres.
    pub d: [Vec<f64>; 2],
    pub pi: Vec<f64>,
    pub t: f64,
}

impl StateField {
    /// Constant state `(0, theta, d)`.
    pub fn constant(grid: Grid, theta: f64, d: [f64; 2]) -> Self {
        let nc = grid.ncells();
        Self {
            grid,
            vel: vec![0.0; grid.nfaces()],
            theta: vec![theta; nc],
            d: [vec![d[0]; nc], vec![d[1]; nc]],
            pi: vec![0.0; nc],
            t: 0.0,
        }
    }

    pub fn director(&self, c: usize) -> [f64; 2] {
        [self.d[0][c], self.d[1][c]]
    }

    /// `max | |d| - 1 |` over cells.
    pub fn director_drift(&self) -> f64 {
        (0..self.grid.ncells())
            .map(|c| (self.d[0][c].hypot(self.d[1][c]) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Rescales every cell director to unit length.
    pub fn normalize_director(&mut self) {
        for c in 0..self.grid.ncells() {
            let n = self.d[0][c].hypot(self.d[1][c]);
            self.d[0][c] /= n;
            self.d[1][c] /= n;
        }
    }

    pub fn theta_min(&self) -> f64 {
        self.theta.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn theta_max(&self) -> f64 {
        self.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
