//! PDE forward models on the unit square: eikonal travel times by fast
//! marching and Darcy pressure by a vertex-centered finite-volume scheme.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{synthesize, GridField, SpectralField};
use crate::linalg::dot;
use crate::problem::{ForwardModel, ObsVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x1: f64,
    pub x2: f64,
}

impl Point {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Point { x1, x2 }
    }
}

/// The `m × m` interior lattice `{(i/(m+1), j/(m+1))}`, `x1` varying fastest.
pub fn lattice_points(m: usize) -> Vec<Point> {
    let step = 1.0 / (m + 1) as f64;
    let mut pts = Vec::with_capacity(m * m);
    for j in 1..=m {
        for i in 1..=m {
            pts.push(Point::new(i as f64 * step, j as f64 * step));
        }
    }
    pts
}

/// `count` sources on the left edge with uniformly drawn heights.
pub fn random_left_sources<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<Point> {
    (0..count).map(|_| Point::new(0.0, rng.random::<f64>())).collect()
}

fn nearest_node(n: usize, x: f64) -> usize {
    let i = libm::round(x.clamp(0.0, 1.0) * n as f64) as usize;
    i.min(n)
}

/// Mollified point evaluation: average over the `(2w+1)²` block of nodes
/// around the nearest node (clipped to the grid). `w = 0` reads the node.
pub fn observe(g: &GridField, p: Point, width: usize) -> f64 {
    let n = g.n();
    let (ci, cj) = (nearest_node(n, p.x1), nearest_node(n, p.x2));
    if width == 0 {
        return g.at(ci, cj);
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for j in cj.saturating_sub(width)..=(cj + width).min(n) {
        for i in ci.saturating_sub(width)..=(ci + width).min(n) {
            sum += g.at(i, j);
            count += 1;
        }
    }
    sum / count as f64
}

#[derive(Clone, Copy)]
struct Candidate {
    t: f64,
    node: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // reversed so the max-heap pops the smallest time
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.node.cmp(&self.node))
    }
}

/// Radius of the ball around the source initialized with straight-ray times.
pub const SOURCE_RADIUS: f64 = 0.05;

/// First-order fast marching for `|∇T| = s`, `T(source) = 0`.
pub fn fmm_solve(s: &GridField, source: Point) -> Result<GridField> {
    fmm_solve_traced(s, source, SOURCE_RADIUS).map(|(t, _)| t)
}

/// Fast marching with an explicit source-ball radius (0 seeds only the
/// source node), also returning the accepted values in acceptance order.
pub fn fmm_solve_traced(s: &GridField, source: Point, source_radius: f64) -> Result<(GridField, Vec<f64>)> {
    if let Some((idx, v)) = s.values().iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositiveSlowness(*v, idx));
    }
    let n = s.n();
    let side = n + 1;
    let h = s.spacing();
    let mut t = vec![f64::INFINITY; side * side];
    let mut known = vec![false; side * side];
    let mut heap = BinaryHeap::new();
    let mut order = Vec::with_capacity(side * side);
    let src = nearest_node(n, source.x2) * side + nearest_node(n, source.x1);
    t[src] = 0.0;
    heap.push(Candidate { t: 0.0, node: src });
    // straight-ray times in a fixed physical ball remove the point-source
    // singularity from the first-order error
    let (si, sj) = (src % side, src / side);
    let reach = (source_radius / h) as usize;
    for j in sj.saturating_sub(reach)..=(sj + reach).min(n) {
        for i in si.saturating_sub(reach)..=(si + reach).min(n) {
            let (di, dj) = (i as f64 - si as f64, j as f64 - sj as f64);
            let d = h * libm::sqrt(di * di + dj * dj);
            let idx = j * side + i;
            if d > 0.0 && d <= source_radius {
                let v = 0.5 * (s.values()[src] + s.values()[idx]) * d;
                t[idx] = v;
                heap.push(Candidate { t: v, node: idx });
            }
        }
    }
    while let Some(Candidate { t: tc, node }) = heap.pop() {
        if known[node] || tc > t[node] {
            continue;
        }
        known[node] = true;
        order.push(tc);
        let (i, j) = (node % side, node / side);
        let mut visit = |ni: usize, nj: usize| {
            let idx = nj * side + ni;
            if known[idx] {
                return;
            }
            let along = |a: Option<usize>, b: Option<usize>| -> f64 {
                let pick = |k: Option<usize>| k.filter(|&k| known[k]).map_or(f64::INFINITY, |k| t[k]);
                pick(a).min(pick(b))
            };
            let a = along(
                (ni > 0).then(|| idx - 1),
                (ni < n).then(|| idx + 1),
            );
            let b = along(
                (nj > 0).then(|| idx - side),
                (nj < n).then(|| idx + side),
            );
            let sh = s.values()[idx] * h;
            let cand = if a.is_finite() && b.is_finite() && (a - b).abs() < sh {
                0.5 * (a + b + libm::sqrt(2.0 * sh * sh - (a - b) * (a - b)))
            } else {
                a.min(b) + sh
            };
            if cand < t[idx] {
                t[idx] = cand;
                heap.push(Candidate { t: cand, node: idx });
            }
        };
        if i > 0 {
            visit(i - 1, j);
        }
        if i < n {
            visit(i + 1, j);
        }
        if j > 0 {
            visit(i, j - 1);
        }
        if j < n {
            visit(i, j + 1);
        }
    }
    Ok((GridField::new(n, t)?, order))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EikonalConfig {
    pub n: usize,
    pub sources: Vec<Point>,
    pub obs_points: Vec<Point>,
    pub gamma: f64,
    /// Half-width in nodes of the observation mollifier.
    pub mollifier: usize,
}

impl EikonalConfig {
    pub fn new(n: usize, sources: Vec<Point>, obs_points: Vec<Point>, gamma: f64) -> Result<Self> {
        let inside = |p: &Point| (0.0..=1.0).contains(&p.x1) && (0.0..=1.0).contains(&p.x2);
        if n < 1 || sources.is_empty() || obs_points.is_empty() {
            return Err(Error::InvalidSpec("eikonal grid, sources and observations must be nonempty"));
        }
        if sources.iter().any(|p| p.x1 != 0.0 || !inside(p)) {
            return Err(Error::InvalidSpec("eikonal sources must lie on the left edge"));
        }
        if !obs_points.iter().all(inside) {
            return Err(Error::InvalidSpec("observation points must lie in the unit square"));
        }
        Ok(EikonalConfig { n, sources, obs_points, gamma, mollifier: 0 })
    }

    pub fn obs_dim(&self) -> usize {
        self.sources.len() * self.obs_points.len()
    }
}

/// Travel times from every source at every observation point, with
/// slowness `exp(u)`; source-major ordering.
pub fn eikonal_forward(u: &SpectralField, cfg: &EikonalConfig) -> Result<ObsVector> {
    eikonal_forward_grid(&synthesize(u, cfg.n), cfg)
}

/// [`eikonal_forward`] for a log-slowness already given on a grid; the grid
/// size of `log_s` takes precedence over `cfg.n`.
pub fn eikonal_forward_grid(log_s: &GridField, cfg: &EikonalConfig) -> Result<ObsVector> {
    let s = log_s.map(libm::exp);
    let mut out = Vec::with_capacity(cfg.obs_dim());
    for &src in &cfg.sources {
        let t = fmm_solve(&s, src)?;
        out.extend(cfg.obs_points.iter().map(|&p| observe(&t, p, cfg.mollifier)));
    }
    ObsVector::new(out)
}

#[derive(Debug, Clone)]
pub struct EikonalModel(pub EikonalConfig);

impl ForwardModel for EikonalModel {
    fn obs_dim(&self) -> usize {
        self.0.obs_dim()
    }

    fn apply(&self, u: &SpectralField) -> Result<ObsVector> {
        eikonal_forward(u, &self.0)
    }
}

/// Boundary data for the Darcy problem. Bottom edge: `p = dirichlet_bottom`;
/// left edge: `−κ ∂p/∂x1 = flux_left`; right and top edges carry the given
/// outward normal fluxes `κ ∂p/∂n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarcyBc {
    pub dirichlet_bottom: f64,
    pub flux_left: f64,
    pub neumann_right: f64,
    pub neumann_top: f64,
}

impl Default for DarcyBc {
    fn default() -> Self {
        DarcyBc { dirichlet_bottom: 100.0, flux_left: 500.0, neumann_right: 0.0, neumann_top: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarcyConfig {
    pub n: usize,
    pub f: GridField,
    pub bc: DarcyBc,
    pub obs_points: Vec<Point>,
    pub mollifier: usize,
}

impl DarcyConfig {
    /// Source `f ≡ 1` and default boundary data.
    pub fn new(n: usize, obs_points: Vec<Point>) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidSpec("Darcy grid needs n >= 4"));
        }
        Ok(DarcyConfig { n, f: GridField::constant(n, 1.0), bc: DarcyBc::default(), obs_points, mollifier: 0 })
    }
}

/// Symmetric five-point operator on the unknown rows `j = 1..=n`.
struct DarcyOperator {
    side: usize,
    rows: usize,
    diag: Vec<f64>,
    east: Vec<f64>,
    north: Vec<f64>,
}

impl DarcyOperator {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let side = self.side;
        for (k, yk) in y.iter_mut().enumerate() {
            let mut v = self.diag[k] * x[k];
            let (i, r) = (k % side, k / side);
            if i + 1 < side {
                v -= self.east[k] * x[k + 1];
            }
            if i > 0 {
                v -= self.east[k - 1] * x[k - 1];
            }
            if r + 1 < self.rows {
                v -= self.north[k] * x[k + side];
            }
            if r > 0 {
                v -= self.north[k - side] * x[k - side];
            }
            *yk = v;
        }
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Solves `−∇·(κ∇p) = f` with the boundary data of `cfg`.
pub fn darcy_solve(kappa: &GridField, cfg: &DarcyConfig) -> Result<GridField> {
    if let Some((idx, v)) = kappa.values().iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositivePermeability(*v, idx));
    }
    let n = cfg.n;
    if kappa.n() != n || cfg.f.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: kappa.n() });
    }
    let side = n + 1;
    let h = 1.0 / n as f64;
    let bc = cfg.bc;
    // half-length of the dual cell edge through node index i
    let extent = |i: usize| if i == 0 || i == n { 0.5 * h } else { h };
    let rows = n;
    let unknowns = side * rows;
    let mut diag = vec![0.0; unknowns];
    let mut east = vec![0.0; unknowns];
    let mut north = vec![0.0; unknowns];
    let mut rhs = vec![0.0; unknowns];
    let kap = |i: usize, j: usize| kappa.at(i, j);
    for j in 1..=n {
        for i in 0..=n {
            let k = (j - 1) * side + i;
            rhs[k] += cfg.f.at(i, j) * extent(i) * extent(j);
            if i < n {
                // face between (i,j) and (i+1,j) has length extent(j)
                let tr = harmonic(kap(i, j), kap(i + 1, j)) * extent(j) / h;
                east[k] = tr;
                diag[k] += tr;
                diag[k + 1] += tr;
            }
            if j < n {
                let tr = harmonic(kap(i, j), kap(i, j + 1)) * extent(i) / h;
                north[k] = tr;
                diag[k] += tr;
                diag[k + side] += tr;
            } else {
                rhs[k] += bc.neumann_top * extent(i);
            }
            if j == 1 {
                let tr = harmonic(kap(i, 1), kap(i, 0)) * extent(i) / h;
                diag[k] += tr;
                rhs[k] += tr * bc.dirichlet_bottom;
            }
            if i == 0 {
                rhs[k] += bc.flux_left * extent(j);
            }
            if i == n {
                rhs[k] += bc.neumann_right * extent(j);
            }
        }
    }
    let op = DarcyOperator { side, rows, diag, east, north };
    let x = pcg(&op, &rhs, 1e-10, 20 * unknowns + 100)?;
    let mut values = vec![bc.dirichlet_bottom; side * side];
    values[side..].copy_from_slice(&x);
    GridField::new(n, values)
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
fn pcg(op: &DarcyOperator, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let len = b.len();
    let mut x = vec![0.0; len];
    let b_norm = libm::sqrt(dot(b, b));
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&op.diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; len];
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        op.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..len {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if libm::sqrt(dot(&r, &r)) <= rel_tol * b_norm {
            return Ok(x);
        }
        for k in 0..len {
            z[k] = r[k] / op.diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..len {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::CgNotConverged { iterations: max_iter, residual: libm::sqrt(dot(&r, &r)) / b_norm })
}

/// Pressure at the observation points for `κ = exp(u)`.
pub fn darcy_forward(u: &SpectralField, cfg: &DarcyConfig) -> Result<ObsVector> {
    darcy_forward_grid(&synthesize(u, cfg.n), cfg)
}

/// [`darcy_forward`] for a log-permeability already given on the grid of `cfg`.
pub fn darcy_forward_grid(log_kappa: &GridField, cfg: &DarcyConfig) -> Result<ObsVector> {
    let p = darcy_solve(&log_kappa.map(libm::exp), cfg)?;
    ObsVector::new(cfg.obs_points.iter().map(|&x| observe(&p, x, cfg.mollifier)).collect())
}

#[derive(Debug, Clone)]
pub struct DarcyModel(pub DarcyConfig);

impl ForwardModel for DarcyModel {
    fn obs_dim(&self) -> usize {
        self.0.obs_points.len()
    }

    fn apply(&self, u: &SpectralField) -> Result<ObsVector> {
        darcy_forward(u, &self.0)
    }
}
