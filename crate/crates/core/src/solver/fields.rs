//! Discrete differential operators on cell and face fields.
//!
//! Director gradients use face jumps: `|grad d|^2` in a cell is half the sum
//! of `|jump|^2 / h^2` over its interior faces, which makes the discrete
//! tension `div(lambda grad) d + lambda |grad d|^2 d` exactly orthogonal to a
//! unit-length `d`.

use super::grid::{Grid, Operators};

/// `|d_hi - d_lo|^2` on every interior face.
pub fn jump_sq(ops: &Operators, d: &[Vec<f64>]) -> Vec<f64> {
    ops.faces
        .iter()
        .map(|f| d.iter().map(|comp| (comp[f.hi] - comp[f.lo]).powi(2)).sum())
        .collect()
}

/// `sum_f k_f |jump_f|^2 / (2 h_f^2)` per cell.
pub fn face_energy_cells(ops: &Operators, k_face: Option<&[f64]>, jump_sq: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; ops.grid.ncells()];
    for (fi, f) in ops.faces.iter().enumerate() {
        let k = k_face.map_or(1.0, |k| k[fi]);
        let e = 0.5 * k * jump_sq[fi] / (f.h * f.h);
        out[f.lo] += e;
        out[f.hi] += e;
    }
    out
}

/// `|grad d|^2` per cell.
pub fn grad_sq_cells(ops: &Operators, d: &[Vec<f64>]) -> Vec<f64> {
    face_energy_cells(ops, None, &jump_sq(ops, d))
}

/// `tau = |grad d|^2 / 2` per cell.
pub fn tau_cells(ops: &Operators, d: &[Vec<f64>]) -> Vec<f64> {
    grad_sq_cells(ops, d).into_iter().map(|g| 0.5 * g).collect()
}

/// `div(k grad) phi` per cell with Neumann walls.
pub fn weighted_laplacian(ops: &Operators, k_face: &[f64], phi: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; ops.grid.ncells()];
    for (fi, f) in ops.faces.iter().enumerate() {
        let flux = k_face[fi] * (phi[f.hi] - phi[f.lo]) / (f.h * f.h);
        out[f.lo] += flux;
        out[f.hi] -= flux;
    }
    out
}

/// Residual `div(a grad) d + a |grad d|^2 d` of the director equilibrium
/// problem, with face coefficients averaged from cell values of `a`.
pub fn nlevp_residual(ops: &Operators, d: &[Vec<f64>; 2], a_cells: &[f64]) -> [Vec<f64>; 2] {
    let a_face = ops.face_average(a_cells);
    let reaction = face_energy_cells(ops, Some(&a_face), &jump_sq(ops, d));
    let mut res = [
        weighted_laplacian(ops, &a_face, &d[0]),
        weighted_laplacian(ops, &a_face, &d[1]),
    ];
    for (k, r) in res.iter_mut().enumerate() {
        for c in 0..r.len() {
            r[c] += reaction[c] * d[k][c];
        }
    }
    res
}

/// Centred cell gradient with mirrored Neumann ghosts.
pub fn cell_gradient(g: &Grid, phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; g.ncells()];
    let mut gy = vec![0.0; g.ncells()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            let l = phi[g.cell(i.saturating_sub(1), j)];
            let r = phi[g.cell((i + 1).min(g.nx - 1), j)];
            let b = phi[g.cell(i, j.saturating_sub(1))];
            let t = phi[g.cell(i, (j + 1).min(g.ny - 1))];
            gx[c] = (r - l) / (2.0 * g.dx);
            gy[c] = (t - b) / (2.0 * g.dy);
        }
    }
    (gx, gy)
}

/// `u . grad phi` at cell centres, centred differences.
pub fn advect(g: &Grid, vel: &[f64], phi: &[f64]) -> Vec<f64> {
    let (gx, gy) = cell_gradient(g, phi);
    (0..g.ncells())
        .map(|c| {
            let (u, v) = g.cell_velocity(vel, c);
            u * gx[c] + v * gy[c]
        })
        .collect()
}

/// Conservative `div(u phi)` with centred face values.
pub fn div_flux(ops: &Operators, vel: &[f64], phi: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; ops.grid.ncells()];
    for (fi, f) in ops.faces.iter().enumerate() {
        let flux = vel[fi] * 0.5 * (phi[f.lo] + phi[f.hi]) / f.h;
        out[f.lo] += flux;
        out[f.hi] -= flux;
    }
    out
}

/// Director derivatives at nodes; zero normal derivative on walls.
fn node_gradient(g: &Grid, phi: &[f64], n: usize) -> (f64, f64) {
    let (i, j) = g.node_ij(n);
    let rows: Vec<usize> = [j.wrapping_sub(1), j].into_iter().filter(|&r| r < g.ny).collect();
    let cols: Vec<usize> = [i.wrapping_sub(1), i].into_iter().filter(|&c| c < g.nx).collect();
    let px = if i > 0 && i < g.nx {
        rows.iter()
            .map(|&r| (phi[g.cell(i, r)] - phi[g.cell(i - 1, r)]) / g.dx)
            .sum::<f64>()
            / rows.len() as f64
    } else {
        0.0
    };
    let py = if j > 0 && j < g.ny {
        cols.iter()
            .map(|&c| (phi[g.cell(c, j)] - phi[g.cell(c, j - 1)]) / g.dy)
            .sum::<f64>()
            / cols.len() as f64
    } else {
        0.0
    };
    (px, py)
}

/// `M = grad d grad d^T` on the strain rows: `M_xx`, `M_yy` at cells and
/// `M_xy` at nodes.
pub fn director_stress_rows(g: &Grid, d: &[Vec<f64>; 2]) -> Vec<f64> {
    let nc = g.ncells();
    let mut out = vec![0.0; 2 * nc + g.nnodes()];
    let grads = [cell_gradient(g, &d[0]), cell_gradient(g, &d[1])];
    for c in 0..nc {
        out[c] = grads[0].0[c].powi(2) + grads[1].0[c].powi(2);
        out[nc + c] = grads[0].1[c].powi(2) + grads[1].1[c].powi(2);
    }
    for n in 0..g.nnodes() {
        let (ax, ay) = node_gradient(g, &d[0], n);
        let (bx, by) = node_gradient(g, &d[1], n);
        out[2 * nc + n] = ax * ay + bx * by;
    }
    out
}

/// Centred advection `div(u (x) u)` at every interior face.
pub fn momentum_advection(g: &Grid, vel: &[f64]) -> Vec<f64> {
    let nn = g.nnodes();
    let mut uv = vec![0.0; nn];
    for j in 1..g.ny {
        for i in 1..g.nx {
            let un = 0.5 * (vel[g.uface(i - 1, j - 1)] + vel[g.uface(i - 1, j)]);
            let vn = 0.5 * (vel[g.vface(i - 1, j - 1)] + vel[g.vface(i, j - 1)]);
            uv[g.node(i, j)] = un * vn;
        }
    }
    let centre: Vec<(f64, f64)> = (0..g.ncells()).map(|c| g.cell_velocity(vel, c)).collect();
    let mut out = vec![0.0; g.nfaces()];
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            let uu = (centre[g.cell(i + 1, j)].0.powi(2) - centre[g.cell(i, j)].0.powi(2)) / g.dx;
            let uvy = (uv[g.node(i + 1, j + 1)] - uv[g.node(i + 1, j)]) / g.dy;
            out[g.uface(i, j)] = uu + uvy;
        }
    }
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            let vv = (centre[g.cell(i, j + 1)].1.powi(2) - centre[g.cell(i, j)].1.powi(2)) / g.dy;
            let uvx = (uv[g.node(i + 1, j + 1)] - uv[g.node(i, j + 1)]) / g.dx;
            out[g.vface(i, j)] = vv + uvx;
        }
    }
    out
}

/// Discrete `L2` norm of a cell field, `sqrt(sum phi^2 dx dy)`.
pub fn l2_cells(g: &Grid, phi: &[f64]) -> f64 {
    (crate::linalg::dot(phi, phi) * g.cell_area()).sqrt()
}
