//! Staggered rectangle and the sparse operators built on it.
//!
//! Unknown layout:
//! - cells `(i, j)`, `0 <= i < nx`, `0 <= j < ny`, index `j * nx + i`;
//! - interior x-faces between cells `(i, j)` and `(i + 1, j)`, index
//!   `j * (nx - 1) + i`; they carry `u`;
//! - interior y-faces between cells `(i, j)` and `(i, j + 1)`, index
//!   `nu + j * nx + i`; they carry `v`;
//! - nodes `(i, j)`, `0 <= i <= nx`, `0 <= j <= ny`, index `j * (nx + 1) + i`.
//!
//! Wall faces are not stored: the normal velocity vanishes there and the
//! Neumann fluxes of cell quantities are zero.

use crate::linalg::Csr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
}

/// A face with its two cells and its spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub lo: usize,
    pub hi: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        assert!(nx >= 2 && ny >= 2, "grid needs at least 2x2 cells");
        assert!(lx > 0.0 && ly > 0.0, "domain lengths must be positive");
        Self {
            nx,
            ny,
            lx,
            ly,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
        }
    }

    pub fn ncells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn nu(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    pub fn nv(&self) -> usize {
        self.nx * (self.ny - 1)
    }

    pub fn nfaces(&self) -> usize {
        self.nu() + self.nv()
    }

    pub fn nnodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    pub fn cell_center(&self, c: usize) -> (f64, f64) {
        let (i, j) = self.cell_ij(c);
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    /// x-face right of cell `(i, j)`, `i < nx - 1`.
    pub fn uface(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i
    }

    /// y-face above cell `(i, j)`, `j < ny - 1`.
    pub fn vface(&self, i: usize, j: usize) -> usize {
        self.nu() + j * self.nx + i
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node_ij(&self, n: usize) -> (usize, usize) {
        (n % (self.nx + 1), n / (self.nx + 1))
    }

    /// Interior faces in storage order.
    pub fn faces(&self) -> Vec<Face> {
        let mut f = Vec::with_capacity(self.nfaces());
        for j in 0..self.ny {
            for i in 0..self.nx - 1 {
                f.push(Face {
                    lo: self.cell(i, j),
                    hi: self.cell(i + 1, j),
                    h: self.dx,
                });
            }
        }
        for j in 0..self.ny - 1 {
            for i in 0..self.nx {
                f.push(Face {
                    lo: self.cell(i, j),
                    hi: self.cell(i, j + 1),
                    h: self.dy,
                });
            }
        }
        f
    }

    /// Cells sharing node `n`.
    pub fn node_cells(&self, n: usize) -> Vec<usize> {
        let (i, j) = self.node_ij(n);
        let mut out = Vec::with_capacity(4);
        for jj in [j.wrapping_sub(1), j] {
            for ii in [i.wrapping_sub(1), i] {
                if ii < self.nx && jj < self.ny {
                    out.push(self.cell(ii, jj));
                }
            }
        }
        out
    }

    /// Dual-area fraction of node `n`: 1 inside, 1/2 on walls, 1/4 at corners.
    pub fn node_fraction(&self, n: usize) -> f64 {
        let (i, j) = self.node_ij(n);
        let fx = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let fy = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        fx * fy
    }

    /// Velocity `(u, v)` components at the centre of cell `c`.
    pub fn cell_velocity(&self, vel: &[f64], c: usize) -> (f64, f64) {
        let (i, j) = self.cell_ij(c);
        let ul = if i > 0 { vel[self.uface(i - 1, j)] } else { 0.0 };
        let ur = if i + 1 < self.nx { vel[self.uface(i, j)] } else { 0.0 };
        let vb = if j > 0 { vel[self.vface(i, j - 1)] } else { 0.0 };
        let vt = if j + 1 < self.ny { vel[self.vface(i, j)] } else { 0.0 };
        (0.5 * (ul + ur), 0.5 * (vb + vt))
    }
}

/// Sparse operators of one grid; built once per run.
#[derive(Debug, Clone)]
pub struct Operators {
    pub grid: Grid,
    /// Cell divergence of face velocities.
    pub div: Csr,
    /// `Dv Dv^T`, the Neumann pressure Laplacian.
    pub pressure_laplacian: Csr,
    /// Strain rows: `D_xx` (cells), `D_yy` (cells), `D_xy` (nodes).
    pub strain: Csr,
    /// `G^T`.
    pub strain_t: Csr,
    /// Quadrature weights of the strain rows: 1, 1 and `2 * node_fraction`.
    pub strain_weights: Vec<f64>,
    pub faces: Vec<Face>,
}

impl Operators {
    pub fn new(grid: Grid) -> Self {
        let div = divergence(&grid);
        let pressure_laplacian = div.matmul(&div.transpose());
        let strain = strain(&grid);
        let strain_t = strain.transpose();
        let nc = grid.ncells();
        let mut w = vec![1.0; 2 * nc + grid.nnodes()];
        for n in 0..grid.nnodes() {
            w[2 * nc + n] = 2.0 * grid.node_fraction(n);
        }
        Self {
            faces: grid.faces(),
            grid,
            div,
            pressure_laplacian,
            strain,
            strain_t,
            strain_weights: w,
        }
    }

    /// Viscous operator `G^T W diag(2 mu) G` with cell viscosities; node
    /// viscosities are averages of the adjacent cells.
    pub fn viscous(&self, mu_cells: &[f64]) -> Csr {
        let row_mu = self.row_values(mu_cells);
        let w: Vec<f64> = self
            .strain_weights
            .iter()
            .zip(&row_mu)
            .map(|(w, m)| 2.0 * w * m)
            .collect();
        self.strain_t.matmul(&self.strain.scale_rows(&w))
    }

    /// Spreads cell values onto the strain rows (cells, cells, node averages).
    pub fn row_values(&self, cells: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let nc = g.ncells();
        let mut out = Vec::with_capacity(2 * nc + g.nnodes());
        out.extend_from_slice(cells);
        out.extend_from_slice(cells);
        for n in 0..g.nnodes() {
            let cs = g.node_cells(n);
            out.push(cs.iter().map(|&c| cells[c]).sum::<f64>() / cs.len() as f64);
        }
        out
    }

    /// Sums per-row contributions into cells; node rows are split evenly
    /// between the cells sharing the node.
    pub fn rows_to_cells(&self, rows: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let nc = g.ncells();
        let mut out = vec![0.0; nc];
        for c in 0..nc {
            out[c] = rows[c] + rows[nc + c];
        }
        for n in 0..g.nnodes() {
            let v = rows[2 * nc + n];
            if v != 0.0 {
                let cs = g.node_cells(n);
                let share = v / cs.len() as f64;
                for c in cs {
                    out[c] += share;
                }
            }
        }
        out
    }

    /// `-div(k grad)` on cells with face coefficients `k_face` and Neumann walls.
    pub fn neg_laplacian(&self, k_face: &[f64]) -> Csr {
        let mut t = Vec::with_capacity(4 * self.faces.len());
        for (f, face) in self.faces.iter().enumerate() {
            let a = k_face[f] / (face.h * face.h);
            t.push((face.lo, face.lo, a));
            t.push((face.hi, face.hi, a));
            t.push((face.lo, face.hi, -a));
            t.push((face.hi, face.lo, -a));
        }
        let nc = self.grid.ncells();
        // keep explicit zero diagonals for cells without faces
        for c in 0..nc {
            t.push((c, c, 0.0));
        }
        Csr::from_triplets(nc, nc, t)
    }

    /// Arithmetic face average of a cell field.
    pub fn face_average(&self, cells: &[f64]) -> Vec<f64> {
        self.faces
            .iter()
            .map(|f| 0.5 * (cells[f.lo] + cells[f.hi]))
            .collect()
    }
}

fn divergence(g: &Grid) -> Csr {
    let mut t = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            if i + 1 < g.nx {
                t.push((c, g.uface(i, j), 1.0 / g.dx));
            }
            if i > 0 {
                t.push((c, g.uface(i - 1, j), -1.0 / g.dx));
            }
            if j + 1 < g.ny {
                t.push((c, g.vface(i, j), 1.0 / g.dy));
            }
            if j > 0 {
                t.push((c, g.vface(i, j - 1), -1.0 / g.dy));
            }
        }
    }
    Csr::from_triplets(g.ncells(), g.nfaces(), t)
}

fn strain(g: &Grid) -> Csr {
    let nc = g.ncells();
    let mut t = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            if i + 1 < g.nx {
                t.push((c, g.uface(i, j), 1.0 / g.dx));
            }
            if i > 0 {
                t.push((c, g.uface(i - 1, j), -1.0 / g.dx));
            }
            if j + 1 < g.ny {
                t.push((nc + c, g.vface(i, j), 1.0 / g.dy));
            }
            if j > 0 {
                t.push((nc + c, g.vface(i, j - 1), -1.0 / g.dy));
            }
        }
    }
    // D_xy = (du/dy + dv/dx) / 2 at nodes; u lives on x-faces with x = (i+1) dx,
    // so node column i carries face i - 1. Reflected ghosts give 2u/dy at walls.
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let row = 2 * nc + g.node(i, j);
            if i > 0 && i < g.nx {
                let iu = i - 1;
                if j == 0 {
                    t.push((row, g.uface(iu, 0), 0.5 * 2.0 / g.dy));
                } else if j == g.ny {
                    t.push((row, g.uface(iu, g.ny - 1), -0.5 * 2.0 / g.dy));
                } else {
                    t.push((row, g.uface(iu, j), 0.5 / g.dy));
                    t.push((row, g.uface(iu, j - 1), -0.5 / g.dy));
                }
            }
            if j > 0 && j < g.ny {
                let jv = j - 1;
                if i == 0 {
                    t.push((row, g.vface(0, jv), 0.5 * 2.0 / g.dx));
                } else if i == g.nx {
                    t.push((row, g.vface(g.nx - 1, jv), -0.5 * 2.0 / g.dx));
                } else {
                    t.push((row, g.vface(i, jv), 0.5 / g.dx));
                    t.push((row, g.vface(i - 1, jv), -0.5 / g.dx));
                }
            }
        }
    }
    Csr::from_triplets(2 * nc + g.nnodes(), g.nfaces(), t)
}

/// Face velocities of a node streamfunction that vanishes on the boundary:
/// `u = d psi / dy`, `v = -d psi / dx`. The result is discretely
/// divergence-free.
pub fn velocity_from_streamfunction(g: &Grid, psi_nodes: &[f64]) -> Vec<f64> {
    let mut vel = vec![0.0; g.nfaces()];
    let psi = |i: usize, j: usize| {
        if i == 0 || j == 0 || i == g.nx || j == g.ny {
            0.0
        } else {
            psi_nodes[g.node(i, j)]
        }
    };
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            vel[g.uface(i, j)] = (psi(i + 1, j + 1) - psi(i + 1, j)) / g.dy;
        }
    }
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            vel[g.vface(i, j)] = -(psi(i + 1, j + 1) - psi(i, j + 1)) / g.dx;
        }
    }
    vel
}

/// Matrix mapping interior-node streamfunction values to face velocities.
pub fn streamfunction_basis(g: &Grid) -> Csr {
    let ni = (g.nx - 1) * (g.ny - 1);
    let interior = |i: usize, j: usize| -> Option<usize> {
        (i > 0 && j > 0 && i < g.nx && j < g.ny).then(|| (j - 1) * (g.nx - 1) + (i - 1))
    };
    let mut t = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            let f = g.uface(i, j);
            if let Some(k) = interior(i + 1, j + 1) {
                t.push((f, k, 1.0 / g.dy));
            }
            if let Some(k) = interior(i + 1, j) {
                t.push((f, k, -1.0 / g.dy));
            }
        }
    }
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            let f = g.vface(i, j);
            if let Some(k) = interior(i + 1, j + 1) {
                t.push((f, k, -1.0 / g.dx));
            }
            if let Some(k) = interior(i, j + 1) {
                t.push((f, k, 1.0 / g.dx));
            }
        }
    }
    Csr::from_triplets(g.nfaces(), ni, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let g = Grid::new(4, 3, 2.0, 1.5);
        assert_eq!(g.ncells(), 12);
        assert_eq!(g.nu(), 9);
        assert_eq!(g.nv(), 8);
        assert_eq!(g.faces().len(), g.nfaces());
        assert_eq!(g.node_cells(g.node(0, 0)).len(), 1);
        assert_eq!(g.node_cells(g.node(2, 0)).len(), 2);
        assert_eq!(g.node_cells(g.node(2, 1)).len(), 4);
    }

    #[test]
    fn streamfunction_velocity_is_divergence_free() {
        let g = Grid::new(8, 6, 1.0, 2.0);
        let ops = Operators::new(g);
        let psi: Vec<f64> = (0..g.nnodes()).map(|n| ((n * 7919) % 101) as f64 / 13.0).collect();
        let vel = velocity_from_streamfunction(&g, &psi);
        let div = ops.div.mul_vec(&vel);
        assert!(div.iter().all(|d| d.abs() < 1e-12));
        let basis = streamfunction_basis(&g);
        let interior: Vec<f64> = (0..(g.nx - 1) * (g.ny - 1))
            .map(|k| {
                let (i, j) = (k % (g.nx - 1) + 1, k / (g.nx - 1) + 1);
                psi[g.node(i, j)]
            })
            .collect();
        let vel2 = basis.mul_vec(&interior);
        for (a, b) in vel.iter().zip(&vel2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn strain_of_rigid_rotation_is_zero_inside() {
        // u = -y, v = x has zero strain away from the walls
        let g = Grid::new(6, 6, 1.0, 1.0);
        let ops = Operators::new(g);
        let mut vel = vec![0.0; g.nfaces()];
        for j in 0..g.ny {
            for i in 0..g.nx - 1 {
                vel[g.uface(i, j)] = -((j as f64 + 0.5) * g.dy - 0.5);
            }
        }
        for j in 0..g.ny - 1 {
            for i in 0..g.nx {
                vel[g.vface(i, j)] = (i as f64 + 0.5) * g.dx - 0.5;
            }
        }
        let s = ops.strain.mul_vec(&vel);
        let nc = g.ncells();
        for j in 1..g.ny {
            for i in 1..g.nx {
                assert!(s[2 * nc + g.node(i, j)].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn pressure_laplacian_kernel_is_constants() {
        let g = Grid::new(5, 4, 1.0, 1.0);
        let ops = Operators::new(g);
        let ones = vec![1.0; g.ncells()];
        assert!(ops.pressure_laplacian.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
        let lap = ops.neg_laplacian(&vec![1.0; g.nfaces()]);
        let diff = lap.to_dense() - ops.pressure_laplacian.to_dense();
        assert!(diff.abs().max() < 1e-10);
    }

    #[test]
    fn viscous_operator_is_symmetric_positive() {
        let g = Grid::new(5, 4, 1.0, 1.0);
        let ops = Operators::new(g);
        let a = ops.viscous(&vec![0.7; g.ncells()]).to_dense();
        assert!((&a - a.transpose()).abs().max() < 1e-12);
        let eig = a.symmetric_eigen().eigenvalues;
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn rows_to_cells_preserves_sums() {
        let g = Grid::new(4, 5, 1.0, 1.0);
        let ops = Operators::new(g);
        let rows: Vec<f64> = (0..ops.strain_weights.len()).map(|k| (k as f64).sin()).collect();
        let cells = ops.rows_to_cells(&rows);
        let a: f64 = rows.iter().sum();
        let b: f64 = cells.iter().sum();
        assert!((a - b).abs() < 1e-12);
    }
}
