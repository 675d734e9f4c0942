//! Convergence-study driver.
//!
//! Ties the whole pipeline together for a family of closed test surfaces:
//! build the quadrature node set, take boundary densities from a known
//! harmonic field, evaluate the corrected layer potentials at near-surface
//! grid nodes or at the quadrature nodes themselves, extend to the volume
//! grid, and report error norms against the exact field. One call of
//! [`run_case`] produces one row of a convergence table.

use std::fmt;
use std::time::Instant;

use thiserror::Error;

use crate::grid::{classify_nodes, extend_potential, BoxGrid, GridError};
use crate::pou::{PouError, PouParams};
use crate::quad::{NodeSet, QuadError};
use crate::summation::{Backend, EvalError, Evaluator, TreeParams};
use crate::surface::{euler_rotation, Cassini, Ellipsoid, LevelSurface, Molecule, Torus};
use crate::vec3::{vec3, Vec3};

/// Half-width of the embedding cube; the grid spacing is `2 * 1.1 / N`.
pub const HALF_WIDTH: f64 = 1.1;

/// The reference harmonic field `(sin x + sin y) e^z`.
///
/// It is exactly harmonic, so the field extended by zero across a closed
/// surface is reproduced by its own layer potentials: the double layer of
/// the boundary trace minus the single layer of the normal derivative.
pub fn reference_field(p: Vec3) -> f64 {
    (p.x.sin() + p.y.sin()) * p.z.exp()
}

/// Gradient of [`reference_field`].
pub fn reference_gradient(p: Vec3) -> Vec3 {
    let e = p.z.exp();
    vec3(p.x.cos() * e, p.y.cos() * e, (p.x.sin() + p.y.sin()) * e)
}

/// Boundary densities induced by the reference field: `phi` is its trace
/// and `psi` its outward normal derivative at each quadrature node.
pub fn densities(nodes: &NodeSet) -> (Vec<f64>, Vec<f64>) {
    let mut psi = Vec::with_capacity(nodes.nodes.len());
    let mut phi = Vec::with_capacity(nodes.nodes.len());
    for node in &nodes.nodes {
        phi.push(reference_field(node.pos));
        psi.push(reference_gradient(node.pos).dot(node.normal));
    }
    (psi, phi)
}

/// The five study surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    /// Ellipsoid with semi-axes 1, 0.8, 0.6 in a fixed generic rotation.
    RotEllipsoid,
    /// Prolate ellipsoid with semi-axes 1, 0.4, 0.4, axis aligned.
    ThinEllipsoid,
    /// Torus with center-circle radius 0.7 and tube radius 0.3.
    Torus,
    /// Four-atom molecular blob surface.
    Molecule,
    /// Surface of revolution of a Cassini oval, a = 0.65, b = 0.7.
    Cassini,
}

impl SurfaceKind {
    pub const ALL: [SurfaceKind; 5] = [
        SurfaceKind::RotEllipsoid,
        SurfaceKind::ThinEllipsoid,
        SurfaceKind::Torus,
        SurfaceKind::Molecule,
        SurfaceKind::Cassini,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::RotEllipsoid => "rot-ellipsoid",
            SurfaceKind::ThinEllipsoid => "thin-ellipsoid",
            SurfaceKind::Torus => "torus",
            SurfaceKind::Molecule => "molecule",
            SurfaceKind::Cassini => "cassini",
        }
    }

    pub fn parse(name: &str) -> Option<SurfaceKind> {
        SurfaceKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    pub fn build(self) -> Box<dyn LevelSurface> {
        match self {
            SurfaceKind::RotEllipsoid => {
                // The orientation is arbitrary but fixed: a generic
                // rotation keeps every coordinate chart in play.
                let rot = euler_rotation(40.0, 25.0, 65.0);
                Box::new(Ellipsoid::new([1.0, 0.8, 0.6], Some(rot)))
            }
            SurfaceKind::ThinEllipsoid => Box::new(Ellipsoid::new([1.0, 0.4, 0.4], None)),
            SurfaceKind::Torus => Box::new(Torus { c: 0.7, a: 0.3 }),
            SurfaceKind::Molecule => Box::new(Molecule::tetrahedral()),
            SurfaceKind::Cassini => Box::new(Cassini { a: 0.65, b: 0.7 }),
        }
    }
}

impl fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which evaluations a case performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Corrected evaluation at near-surface grid nodes plus the volume
    /// extension.
    Near,
    /// Corrected evaluation at the quadrature nodes on the surface.
    On,
    /// Both of the above.
    Both,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Near => "near",
            Mode::On => "on",
            Mode::Both => "both",
        }
    }

    pub fn parse(name: &str) -> Option<Mode> {
        [Mode::Near, Mode::On, Mode::Both]
            .into_iter()
            .find(|m| m.name() == name)
    }

    fn wants_near(self) -> bool {
        matches!(self, Mode::Near | Mode::Both)
    }

    fn wants_on(self) -> bool {
        matches!(self, Mode::On | Mode::Both)
    }
}

/// Summation backend selection for the near-surface evaluation. The
/// on-surface evaluation always sums directly.
#[derive(Debug, Clone, Copy)]
pub enum SumKind {
    Direct,
    Treecode(TreeParams),
}

impl SumKind {
    pub fn name(self) -> &'static str {
        match self {
            SumKind::Direct => "direct",
            SumKind::Treecode(_) => "treecode",
        }
    }
}

/// One convergence-study case.
#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub surface: SurfaceKind,
    /// Grid cells per side; the canonical study values are 64, 128, 256.
    pub n: usize,
    /// Smoothing length over grid spacing, canonically 1, 2, or 3.
    pub delta_ratio: f64,
    /// Partition-of-unity cap angle in degrees.
    pub theta_deg: f64,
    pub mode: Mode,
    pub backend: SumKind,
}

impl CaseConfig {
    pub fn new(surface: SurfaceKind, n: usize, delta_ratio: f64) -> CaseConfig {
        CaseConfig {
            surface,
            n,
            delta_ratio,
            theta_deg: 70.0,
            mode: Mode::Both,
            backend: SumKind::Direct,
        }
    }
}

/// Error norms and bookkeeping from one case.
#[derive(Debug, Clone)]
pub struct CaseResult {
    /// RMS and max error over irregular grid nodes (near mode).
    pub e2_irreg: Option<f64>,
    pub einf_irreg: Option<f64>,
    /// RMS and max error over regular interior grid nodes (near mode).
    pub e2_reg: Option<f64>,
    pub einf_reg: Option<f64>,
    /// RMS and max error over quadrature nodes (on mode).
    pub e2_quad: Option<f64>,
    pub einf_quad: Option<f64>,
    /// Quadrature node count.
    pub nodes: usize,
    /// Near-surface evaluation point count (irregular nodes plus stencil
    /// neighbors), zero in on mode.
    pub targets: usize,
    pub seconds: f64,
    pub h: f64,
    pub delta: f64,
    /// Node-spacing resolution diagnostic from the node generator.
    pub resolved: bool,
    /// The generator's spacing limit; `resolved` means `h < h0`.
    pub h0: f64,
    /// Per near target: distance to the surface over grid spacing,
    /// aligned with `target_errors`. Empty unless near mode ran.
    pub target_b_over_h: Vec<f64>,
    /// Per near target: absolute error of the evaluated potential.
    pub target_errors: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("partition of unity: {0}")]
    Pou(#[from] PouError),
    #[error("node generation: {0}")]
    Quad(#[from] QuadError),
    #[error("extension: {0}")]
    Grid(#[from] GridError),
    #[error("evaluation at grid node {node:?} ({pos:?}): {source}")]
    Near {
        node: [usize; 3],
        pos: Vec3,
        source: EvalError,
    },
    #[error("evaluation at quadrature node {idx}: {source}")]
    On { idx: usize, source: EvalError },
}

/// RMS (equal point weights) and max of the absolute values.
pub fn rms_max(errors: &[f64]) -> (f64, f64) {
    if errors.is_empty() {
        return (0.0, 0.0);
    }
    let mut sum2 = 0.0;
    let mut max = 0.0f64;
    for &e in errors {
        sum2 += e * e;
        max = max.max(e.abs());
    }
    ((sum2 / errors.len() as f64).sqrt(), max)
}

/// Run one case on the surface named in the config.
pub fn run_case(cfg: &CaseConfig) -> Result<CaseResult, HarnessError> {
    run_case_on(cfg.surface.build().as_ref(), cfg)
}

/// Run one case on an explicit surface (the config's surface name is
/// ignored except for reporting).
pub fn run_case_on(
    surface: &dyn LevelSurface,
    cfg: &CaseConfig,
) -> Result<CaseResult, HarnessError> {
    let start = Instant::now();
    let grid = BoxGrid::new(HALF_WIDTH, cfg.n);
    let pou = PouParams::new_degrees(cfg.theta_deg)?;
    let nodes = NodeSet::generate(surface, grid.h, pou)?;
    let (psi, phi) = densities(&nodes);
    let delta = cfg.delta_ratio * grid.h;
    let ev = Evaluator::new(surface, &nodes, &psi, &phi, delta);

    let mut out = CaseResult {
        e2_irreg: None,
        einf_irreg: None,
        e2_reg: None,
        einf_reg: None,
        e2_quad: None,
        einf_quad: None,
        nodes: nodes.nodes.len(),
        targets: 0,
        seconds: 0.0,
        h: grid.h,
        delta,
        resolved: nodes.is_resolved(),
        h0: nodes.h0,
        target_b_over_h: Vec::new(),
        target_errors: Vec::new(),
    };

    if cfg.mode.wants_near() {
        let tree = match cfg.backend {
            SumKind::Treecode(params) => Some(ev.treecode(params)),
            SumKind::Direct => None,
        };
        let backend = match &tree {
            Some(t) => Backend::Tree(t),
            None => Backend::Direct,
        };

        let class = classify_nodes(&grid, surface);
        out.targets = class.targets.len();
        let mut values = Vec::with_capacity(class.targets.len());
        let mut target_err = Vec::with_capacity(class.targets.len());
        for &node in &class.targets {
            let pos = grid.node_pos(node);
            let eval = ev
                .eval_near(pos, backend)
                .map_err(|source| HarnessError::Near { node, pos, source })?;
            let u = eval.double - eval.single;
            values.push(u);
            let id = grid.idx(node);
            let exact = if class.inside[id] {
                reference_field(pos)
            } else {
                0.0
            };
            target_err.push(u - exact);
            out.target_b_over_h.push(eval.frame.b.abs() / grid.h);
            out.target_errors.push((u - exact).abs());
        }

        // Irregular-node errors come from the evaluated potentials: the
        // grid extension below fills in the regular nodes at second
        // order, which would mask the third-order accuracy the direct
        // evaluation reaches near the surface.
        let mut irr = Vec::new();
        for (slot, &node) in class.targets.iter().enumerate() {
            let interior = node.iter().all(|&c| c >= 1 && c <= cfg.n - 1);
            if interior && class.irregular[grid.idx(node)] {
                irr.push(target_err[slot]);
            }
        }

        let u_h = extend_potential(&grid, &class, &values)?;
        let mut reg = Vec::new();
        for i in 1..cfg.n {
            for j in 1..cfg.n {
                for k in 1..cfg.n {
                    let node = [i, j, k];
                    let id = grid.idx(node);
                    if class.irregular[id] {
                        continue;
                    }
                    let exact = if class.inside[id] {
                        reference_field(grid.node_pos(node))
                    } else {
                        0.0
                    };
                    reg.push(u_h[id] - exact);
                }
            }
        }
        let (e2i, einfi) = rms_max(&irr);
        let (e2r, einfr) = rms_max(&reg);
        out.e2_irreg = Some(e2i);
        out.einf_irreg = Some(einfi);
        out.e2_reg = Some(e2r);
        out.einf_reg = Some(einfr);
    }

    if cfg.mode.wants_on() {
        let mut errs = Vec::with_capacity(nodes.nodes.len());
        for idx in 0..nodes.nodes.len() {
            let eval = ev
                .eval_on(idx)
                .map_err(|source| HarnessError::On { idx, source })?;
            let exact = 0.5 * reference_field(nodes.nodes[idx].pos);
            errs.push(eval.double - eval.single - exact);
        }
        let (e2q, einfq) = rms_max(&errs);
        out.e2_quad = Some(e2q);
        out.einf_quad = Some(einfq);
    }

    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

pub const CSV_HEADER: &str = "surface,N,delta_ratio,theta,mode,backend,e2_irreg,einf_irreg,\
                              e2_reg,einf_reg,e2_quad,einf_quad,nodes,targets,seconds";

fn csv_num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.5e}")).unwrap_or_default()
}

/// One CSV row matching [`CSV_HEADER`], six significant digits.
pub fn csv_row(cfg: &CaseConfig, res: &CaseResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.5e}",
        cfg.surface.name(),
        cfg.n,
        cfg.delta_ratio,
        cfg.theta_deg,
        cfg.mode.name(),
        cfg.backend.name(),
        csv_num(res.e2_irreg),
        csv_num(res.einf_irreg),
        csv_num(res.e2_reg),
        csv_num(res.einf_reg),
        csv_num(res.e2_quad),
        csv_num(res.einf_quad),
        res.nodes,
        res.targets,
        res.seconds,
    )
}
