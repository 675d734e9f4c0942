//! Embedding grid for the volume extension step.
//!
//! The surface sits inside a cube `(-L, L)^3` carrying a uniform lattice.
//! Nodes whose 7-point Laplacian stencil crosses the surface are flagged
//! irregular; the potential is evaluated with corrections at those nodes
//! and their stencil neighbors, and then extended to the whole lattice by
//! inverting the discrete Laplacian with the computed values as local
//! forcing (Mayo's technique). The inversion uses a sine-transform fast
//! Poisson solver with a zero Dirichlet boundary condition, which is exact
//! for the discrete operator.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

use crate::surface::LevelSurface;
use crate::vec3::{vec3, Vec3};

/// Uniform lattice on the cube `(-L, L)^3` with `n` cells per side.
///
/// Lattice nodes are `x_i = -L + i h` for `i = 0..=n` in each coordinate,
/// `h = 2L/n`; the faces `i = 0` and `i = n` lie on the cube boundary.
#[derive(Debug, Clone)]
pub struct BoxGrid {
    pub half_width: f64,
    pub n: usize,
    pub h: f64,
}

impl BoxGrid {
    pub fn new(half_width: f64, n: usize) -> Self {
        assert!(half_width > 0.0, "box half-width must be positive");
        assert!(n >= 2, "need at least one interior node per side");
        BoxGrid {
            half_width,
            n,
            h: 2.0 * half_width / n as f64,
        }
    }

    /// Total lattice nodes, boundary included.
    pub fn lattice_len(&self) -> usize {
        (self.n + 1).pow(3)
    }

    /// Linear index of lattice node `(i, j, k)`.
    pub fn idx(&self, node: [usize; 3]) -> usize {
        let m = self.n + 1;
        (node[0] * m + node[1]) * m + node[2]
    }

    /// Position of lattice node `(i, j, k)`.
    pub fn node_pos(&self, node: [usize; 3]) -> Vec3 {
        let l = self.half_width;
        vec3(
            -l + node[0] as f64 * self.h,
            -l + node[1] as f64 * self.h,
            -l + node[2] as f64 * self.h,
        )
    }

    /// Interior nodes per side.
    pub fn interior_len(&self) -> usize {
        self.n - 1
    }
}

/// Node labels and evaluation targets for one surface on one grid.
#[derive(Debug, Clone)]
pub struct Classification {
    /// Per lattice node: is the level function negative there (inside).
    pub inside: Vec<bool>,
    /// Per lattice node: does some stencil edge at this node cross the
    /// surface.
    pub irregular: Vec<bool>,
    /// Irregular nodes in lexicographic order.
    pub irregular_nodes: Vec<[usize; 3]>,
    /// Irregular nodes together with all their stencil neighbors, sorted
    /// and deduplicated. The potential must be computed at exactly these
    /// nodes before the extension step.
    pub targets: Vec<[usize; 3]>,
}

impl Classification {
    /// Slot of a node in the `targets` ordering.
    pub fn target_slot(&self, node: [usize; 3]) -> Option<usize> {
        self.targets.binary_search(&node).ok()
    }
}

const STENCIL_OFFSETS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

fn neighbor(node: [usize; 3], off: [i64; 3], n: usize) -> Option<[usize; 3]> {
    let mut out = [0usize; 3];
    for d in 0..3 {
        let c = node[d] as i64 + off[d];
        if c < 0 || c > n as i64 {
            return None;
        }
        out[d] = c as usize;
    }
    Some(out)
}

/// Label every lattice node regular or irregular against the surface.
///
/// A node is irregular when the sign of the level function differs across
/// any of the six edges of its second-order Laplacian stencil. Both edge
/// endpoints see the same edge, so the labeling is symmetric by
/// construction.
pub fn classify_nodes(grid: &BoxGrid, surface: &dyn LevelSurface) -> Classification {
    let m = grid.n + 1;
    let mut inside = vec![false; grid.lattice_len()];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let p = grid.node_pos([i, j, k]);
                inside[grid.idx([i, j, k])] = surface.phi(p) < 0.0;
            }
        }
    }

    let mut irregular = vec![false; grid.lattice_len()];
    let mut irregular_nodes = Vec::new();
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let node = [i, j, k];
                let here = inside[grid.idx(node)];
                let crossed = STENCIL_OFFSETS.iter().any(|&off| {
                    neighbor(node, off, grid.n)
                        .map(|nb| inside[grid.idx(nb)] != here)
                        .unwrap_or(false)
                });
                if crossed {
                    irregular[grid.idx(node)] = true;
                    irregular_nodes.push(node);
                }
            }
        }
    }

    let mut targets = Vec::with_capacity(irregular_nodes.len() * 7);
    for &node in &irregular_nodes {
        targets.push(node);
        for &off in &STENCIL_OFFSETS {
            if let Some(nb) = neighbor(node, off, grid.n) {
                targets.push(nb);
            }
        }
    }
    targets.sort_unstable();
    targets.dedup();

    Classification {
        inside,
        irregular,
        irregular_nodes,
        targets,
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("got {got} target values, classification has {expected} targets")]
    ValueCount { expected: usize, got: usize },
    #[error("missing or non-finite potential values at lattice nodes {0:?}")]
    MissingValues(Vec<[usize; 3]>),
}

/// Extend near-surface potential values to the whole lattice.
///
/// `values` holds the computed potential at `class.targets`, in that
/// order. The returned field `u_h` satisfies the 7-point discrete Poisson
/// equation whose right side is the discrete Laplacian of the input at
/// irregular nodes and zero at regular nodes, with zero boundary data on
/// the cube. Away from the surface this reproduces the potential to
/// second order; at irregular nodes it keeps the computed values' jump
/// structure intact.
///
/// The result is indexed by `grid.idx` over the full lattice, boundary
/// nodes included (they are zero).
pub fn extend_potential(
    grid: &BoxGrid,
    class: &Classification,
    values: &[f64],
) -> Result<Vec<f64>, GridError> {
    if values.len() != class.targets.len() {
        return Err(GridError::ValueCount {
            expected: class.targets.len(),
            got: values.len(),
        });
    }
    let bad: Vec<[usize; 3]> = class
        .targets
        .iter()
        .zip(values)
        .filter(|(_, v)| !v.is_finite())
        .map(|(&node, _)| node)
        .take(8)
        .collect();
    if !bad.is_empty() {
        return Err(GridError::MissingValues(bad));
    }

    let m = grid.interior_len();
    let at = |node: [usize; 3]| -> f64 {
        // Targets cover every irregular node and its stencil, so the
        // lookup cannot miss while assembling the forcing.
        values[class.target_slot(node).expect("stencil node in targets")]
    };

    let mut forcing = vec![0.0; m * m * m];
    let inv_h2 = 1.0 / (grid.h * grid.h);
    for &node in &class.irregular_nodes {
        if node.iter().any(|&c| c == 0 || c == grid.n) {
            // An irregular node on the cube face has no interior unknown;
            // the zero boundary condition pins it. The surfaces of
            // interest keep a clear margin from the cube, so this arm is
            // never taken there.
            continue;
        }
        let mut lap = -6.0 * at(node);
        for &off in &STENCIL_OFFSETS {
            lap += at(neighbor(node, off, grid.n).expect("interior neighbor"));
        }
        let interior = [node[0] - 1, node[1] - 1, node[2] - 1];
        forcing[(interior[0] * m + interior[1]) * m + interior[2]] = lap * inv_h2;
    }

    let interior = solve_poisson_zero_bc(grid, forcing);

    let mut full = vec![0.0; grid.lattice_len()];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                full[grid.idx([a + 1, b + 1, c + 1])] = interior[(a * m + b) * m + c];
            }
        }
    }
    Ok(full)
}

/// Solve the 7-point discrete Poisson equation on the grid interior with
/// zero Dirichlet data, given the forcing on the interior lattice
/// (index `(a*m + b)*m + c` with `m = n - 1`). Exact for the discrete
/// operator up to roundoff.
pub fn solve_poisson_zero_bc(grid: &BoxGrid, mut forcing: Vec<f64>) -> Vec<f64> {
    let m = grid.interior_len();
    assert_eq!(forcing.len(), m * m * m, "forcing must cover the interior");
    let n = grid.n;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(2 * n);
    let mut buf = vec![Complex::new(0.0, 0.0); 2 * n];

    dst_all_axes(&mut forcing, m, &fft, &mut buf);

    // Sine modes diagonalize the discrete Laplacian; fold the inverse
    // transform normalization (2/n per axis) into the eigenvalue divide.
    let eig: Vec<f64> = (1..=m)
        .map(|p| {
            let s = (PI * p as f64 / (2.0 * n as f64)).sin();
            4.0 * s * s / (grid.h * grid.h)
        })
        .collect();
    let scale = (2.0 / n as f64).powi(3);
    for a in 0..m {
        for b in 0..m {
            let base = (a * m + b) * m;
            for c in 0..m {
                let lambda = -(eig[a] + eig[b] + eig[c]);
                forcing[base + c] *= scale / lambda;
            }
        }
    }

    dst_all_axes(&mut forcing, m, &fft, &mut buf);
    forcing
}

/// Unnormalized type-I discrete sine transform along all three axes.
fn dst_all_axes(data: &mut [f64], m: usize, fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex<f64>]) {
    // Axis 2 (stride 1), then axis 1 (stride m), then axis 0 (stride m^2).
    for a in 0..m {
        for b in 0..m {
            dst_line(data, (a * m + b) * m, 1, m, fft, buf);
        }
    }
    for a in 0..m {
        for c in 0..m {
            dst_line(data, a * m * m + c, m, m, fft, buf);
        }
    }
    for b in 0..m {
        for c in 0..m {
            dst_line(data, b * m + c, m * m, m, fft, buf);
        }
    }
}

/// In-place unnormalized DST-I of one strided line:
/// `x_j <- sum_{t=1..m} x_t sin(pi j t / (m+1))`, realized as the
/// imaginary part of a length `2(m+1)` FFT of the odd extension.
fn dst_line(
    data: &mut [f64],
    start: usize,
    stride: usize,
    m: usize,
    fft: &Arc<dyn Fft<f64>>,
    buf: &mut [Complex<f64>],
) {
    let period = 2 * (m + 1);
    buf[0] = Complex::new(0.0, 0.0);
    buf[m + 1] = Complex::new(0.0, 0.0);
    for t in 1..=m {
        let x = data[start + (t - 1) * stride];
        buf[t] = Complex::new(x, 0.0);
        buf[period - t] = Complex::new(-x, 0.0);
    }
    fft.process(buf);
    for t in 1..=m {
        data[start + (t - 1) * stride] = -0.5 * buf[t].im;
    }
}
