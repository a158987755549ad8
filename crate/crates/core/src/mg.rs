//! Cell-centered finite-volume Poisson operator and a geometric multigrid solver.
//!
//! Every block coarsens independently by a factor of two per multigrid level, so each
//! level is itself a blockforest with the same refinement topology. Ghost layers are
//! refreshed with the refined exchange before every stencil application on every
//! level, and Dirichlet boundaries use the second-order reflection rule.

use std::sync::Arc;

use rayon::prelude::*;

use crate::blockforest::{Blockforest, Direction, RankMap};
use crate::comm::{allocate_fields, Exchanger, VolumeReport};
use crate::error::{Error, Result};
use crate::fields::{BlockField, Geometry};
use crate::interp::SchemeOrder;

/// Dirichlet boundary values as a function of physical coordinates.
#[derive(Clone)]
pub struct BoundarySpec {
    g: Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>,
}

impl BoundarySpec {
    pub fn new(g: impl Fn([f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        BoundarySpec { g: Arc::new(g) }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0)
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        (self.g)(x)
    }
}

impl std::fmt::Debug for BoundarySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BoundarySpec")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub omega: f64,
    pub nu1: usize,
    pub nu2: usize,
    pub coarse_iters: usize,
    pub max_cycles: usize,
    pub residual_tol: f64,
    pub scheme: SchemeOrder,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            omega: 0.8,
            nu1: 3,
            nu2: 3,
            coarse_iters: 256,
            max_cycles: 35,
            residual_tol: 1e-16,
            scheme: SchemeOrder::Quadratic,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::config("omega", format!("must lie in (0, 1], got {}", self.omega)));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::config("tol", "must be non-negative"));
        }
        Ok(())
    }
}

/// Iterates the start index of every interior x-row of a field.
fn for_each_row(field: &BlockField, mut f: impl FnMut(usize)) {
    let n = field.cells();
    let s = field.strides();
    let zs = if field.dim() == 3 { 1..=n } else { 0..=0 };
    for z in zs {
        for y in 1..=n {
            f(z * s[2] + y * s[1] + s[0]);
        }
    }
}

fn inv_h2(geom: &Geometry) -> [f64; 3] {
    let mut w = [0.0; 3];
    for d in 0..geom.dim {
        w[d] = 1.0 / (geom.h[d] * geom.h[d]);
    }
    w
}

/// `-Δu` at a flat index; the center weight is returned separately as the diagonal.
#[inline(always)]
fn neg_laplacian(u: &[f64], i: usize, s: [usize; 3], w: [f64; 3], dim: usize) -> f64 {
    let c = u[i];
    let mut acc = w[0] * (2.0 * c - u[i - s[0]] - u[i + s[0]])
        + w[1] * (2.0 * c - u[i - s[1]] - u[i + s[1]]);
    if dim == 3 {
        acc += w[2] * (2.0 * c - u[i - s[2]] - u[i + s[2]]);
    }
    acc
}

fn diagonal(w: [f64; 3], dim: usize) -> f64 {
    2.0 * w[..dim].iter().sum::<f64>()
}

/// Applies the discrete operator `-Δ` (5-point in 2D, 7-point in 3D) to the interior
/// of `u`. Ghosts of `u` must be current; ghosts of the result are zero.
pub fn apply_laplacian(u: &BlockField, geom: &Geometry) -> BlockField {
    let mut out = BlockField::new(u.block(), u.dim(), u.cells(), u.mg_level());
    let (s, w, dim, n) = (u.strides(), inv_h2(geom), u.dim(), u.cells());
    let src = u.data();
    let dst = out.data_mut();
    for_each_row(u, |row| {
        for i in row..row + n {
            dst[i] = neg_laplacian(src, i, s, w, dim);
        }
    });
    out
}

/// Writes `f - A u` into the interior of `r`.
pub fn residual(u: &BlockField, f: &BlockField, geom: &Geometry, r: &mut BlockField) {
    let (s, w, dim, n) = (u.strides(), inv_h2(geom), u.dim(), u.cells());
    let (src, rhs) = (u.data(), f.data());
    let dst = r.data_mut();
    for_each_row(u, |row| {
        for i in row..row + n {
            dst[i] = rhs[i] - neg_laplacian(src, i, s, w, dim);
        }
    });
}

fn jacobi_into(u: &BlockField, f: &BlockField, geom: &Geometry, omega: f64, out: &mut [f64]) {
    let (s, w, dim, n) = (u.strides(), inv_h2(geom), u.dim(), u.cells());
    let scale = omega / diagonal(w, dim);
    let (src, rhs) = (u.data(), f.data());
    for_each_row(u, |row| {
        for i in row..row + n {
            out[i] = src[i] + scale * (rhs[i] - neg_laplacian(src, i, s, w, dim));
        }
    });
}

/// One damped Jacobi sweep `u + ω D⁻¹ (f - A u)`. Ghosts of `u` must be current; the
/// ghosts of the result are copied from `u` and are stale afterwards.
pub fn jacobi_sweep(u: &BlockField, f: &BlockField, geom: &Geometry, omega: f64) -> BlockField {
    let mut out = u.clone();
    jacobi_into(u, f, geom, omega, out.data_mut());
    out
}

/// Sets the ghosts of every boundary face of `u` by reflection: `2 g(x_face) - u_inner`.
/// `None` means homogeneous conditions.
pub fn set_boundary_ghosts(
    forest: &Blockforest,
    u: &mut BlockField,
    geom: &Geometry,
    spec: Option<&BoundarySpec>,
) {
    let block = u.block();
    for &dir in Direction::cardinal(u.dim()) {
        if !forest.is_boundary_face(&block, dir) {
            continue;
        }
        let inward = dir.opposite().offset();
        let a = dir.axis();
        for g in u.ghost_range(dir).iter() {
            let inner = [g[0] + inward[0], g[1] + inward[1], g[2] + inward[2]];
            let value = match spec {
                Some(spec) => {
                    let mut x = geom.center(inner);
                    x[a] += 0.5 * dir.sign() as f64 * geom.h[a];
                    2.0 * spec.eval(x) - u.get(inner)
                }
                None => -u.get(inner),
            };
            u.set(g, value);
        }
    }
}

fn children(dim: usize) -> impl Iterator<Item = [i64; 3]> {
    let count = 1usize << dim;
    (0..count).map(|m| [(m & 1) as i64, ((m >> 1) & 1) as i64, ((m >> 2) & 1) as i64])
}

fn child_cell(coarse: [i64; 3], offset: [i64; 3], dim: usize) -> [i64; 3] {
    let mut c = [0; 3];
    for d in 0..dim {
        c[d] = 2 * coarse[d] - 1 + offset[d];
    }
    c
}

/// Restriction: every coarse interior cell receives the average of its `2^D` children.
pub fn restrict_block(fine: &BlockField, coarse: &mut BlockField) {
    let dim = fine.dim();
    let weight = 1.0 / (1usize << dim) as f64;
    for c in coarse.interior_range().iter() {
        let sum: f64 = children(dim).map(|o| fine.get(child_cell(c, o, dim))).sum();
        coarse.set(c, sum * weight);
    }
}

/// Prolongation by piecewise-constant injection, added to `fine`.
pub fn prolong_block(coarse: &BlockField, fine: &mut BlockField) {
    let dim = fine.dim();
    for c in coarse.interior_range().iter() {
        let v = coarse.get(c);
        for o in children(dim) {
            let fc = child_cell(c, o, dim);
            fine.set(fc, fine.get(fc) + v);
        }
    }
}

/// Error norms of a solution against an exact function.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    /// `sqrt(Σ V_cell e²)`.
    pub volume_weighted: f64,
    /// `sqrt(Σ e² / N)` over all `N` cells.
    pub plain: f64,
}

/// L2 error of `fields` against `exact` sampled at cell centers.
pub fn l2_error(
    fields: &[BlockField],
    geoms: &[Geometry],
    exact: impl Fn([f64; 3]) -> f64 + Sync,
) -> ErrorNorms {
    let partial: Vec<(f64, f64, usize)> = fields
        .par_iter()
        .zip(geoms.par_iter())
        .map(|(u, g)| {
            let v = g.cell_volume();
            let mut sum = 0.0;
            let mut count = 0;
            for c in u.interior_range().iter() {
                let e = u.get(c) - exact(g.center(c));
                sum += e * e;
                count += 1;
            }
            (sum * v, sum, count)
        })
        .collect();
    let (weighted, plain, count) = partial
        .iter()
        .fold((0.0, 0.0, 0), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
    ErrorNorms {
        volume_weighted: weighted.sqrt(),
        plain: if count > 0 {
            (plain / count as f64).sqrt()
        } else {
            0.0
        },
    }
}

/// Grid convergence `κ = e_{h/2} / e_h`.
pub fn grid_convergence(e_h: f64, e_h2: f64) -> Result<f64> {
    if e_h == 0.0 {
        return Err(Error::ZeroReferenceError);
    }
    Ok(e_h2 / e_h)
}

struct Level {
    exchanger: Exchanger,
    geoms: Vec<Geometry>,
    u: Vec<BlockField>,
    f: Vec<BlockField>,
    r: Vec<BlockField>,
    scratch: Vec<Vec<f64>>,
}

/// Summary of a solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub cycles: usize,
    pub initial_residual: f64,
    /// Residual norm after each cycle.
    pub history: Vec<f64>,
    pub converged: bool,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.history.last().copied().unwrap_or(self.initial_residual)
    }
}

/// Solution, right-hand side and residual fields for every block and multigrid level.
pub struct MgHierarchy {
    forest: Blockforest,
    ranks: RankMap,
    levels: Vec<Level>,
    volume: VolumeReport,
    exchanges: usize,
}

impl MgHierarchy {
    /// Allocates levels down to 4 interior cells per dimension.
    pub fn new(forest: &Blockforest, ranks: RankMap, scheme: SchemeOrder) -> Result<Self> {
        let n = forest.cells_per_block();
        if n < 4 {
            return Err(Error::TooFewCells(n));
        }
        for b in forest.leaves() {
            if ranks.owner(b).is_none() {
                return Err(Error::Protocol(format!("block {b} has no owner")));
            }
        }
        let mut levels = Vec::new();
        let mut cells = n;
        let mut mg = 0;
        loop {
            let geoms = forest
                .leaves()
                .iter()
                .map(|b| Geometry::new(forest, b, mg))
                .collect();
            let u = allocate_fields(forest, mg);
            let scratch = u.iter().map(|f| vec![0.0; f.data().len()]).collect();
            levels.push(Level {
                exchanger: Exchanger::new(forest, mg, scheme)?,
                geoms,
                f: u.clone(),
                r: u.clone(),
                u,
                scratch,
            });
            if !cells.is_multiple_of(2) || cells / 2 < 4 {
                break;
            }
            cells /= 2;
            mg += 1;
        }
        Ok(MgHierarchy {
            forest: forest.clone(),
            ranks,
            levels,
            volume: VolumeReport::default(),
            exchanges: 0,
        })
    }

    pub fn forest(&self) -> &Blockforest {
        &self.forest
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Interior cells per dimension on the coarsest level.
    pub fn coarsest_cells(&self) -> usize {
        self.levels.last().map(|l| l.u[0].cells()).unwrap_or(0)
    }

    pub fn scheme(&self) -> SchemeOrder {
        self.levels[0].exchanger.scheme()
    }

    /// Rebuilds the exchangers for a different C2F order.
    pub fn set_scheme(&mut self, scheme: SchemeOrder) -> Result<()> {
        for (mg, level) in self.levels.iter_mut().enumerate() {
            level.exchanger = Exchanger::new(&self.forest, mg, scheme)?;
        }
        Ok(())
    }

    pub fn solution(&self) -> &[BlockField] {
        &self.levels[0].u
    }

    pub fn solution_mut(&mut self) -> &mut [BlockField] {
        &mut self.levels[0].u
    }

    pub fn rhs(&self) -> &[BlockField] {
        &self.levels[0].f
    }

    pub fn geometries(&self, mg_level: usize) -> Result<&[Geometry]> {
        self.levels
            .get(mg_level)
            .map(|l| l.geoms.as_slice())
            .ok_or(Error::LevelNotAllocated(mg_level))
    }

    /// Volume of every exchange performed so far.
    pub fn volume(&self) -> &VolumeReport {
        &self.volume
    }

    pub fn exchange_count(&self) -> usize {
        self.exchanges
    }

    /// Closed-form volume of one exchange on each level.
    pub fn volume_per_exchange(&self) -> VolumeReport {
        let mut v = VolumeReport::default();
        for l in &self.levels {
            v.merge(l.exchanger.expected_volume());
        }
        v
    }

    fn sample(&mut self, pick: impl Fn(&mut Level) -> &mut Vec<BlockField>, func: impl Fn([f64; 3]) -> f64 + Sync) {
        let level = &mut self.levels[0];
        let geoms = level.geoms.clone();
        pick(level)
            .par_iter_mut()
            .zip(geoms.par_iter())
            .for_each(|(field, g)| {
                for c in field.interior_range().iter() {
                    field.set(c, func(g.center(c)));
                }
            });
    }

    /// Samples the right-hand side at finest-level cell centers.
    pub fn set_rhs(&mut self, f: impl Fn([f64; 3]) -> f64 + Sync) {
        self.sample(|l| &mut l.f, f);
    }

    /// Samples the solution at finest-level cell centers.
    pub fn set_solution(&mut self, u: impl Fn([f64; 3]) -> f64 + Sync) {
        self.sample(|l| &mut l.u, u);
    }

    fn exchange(&mut self, mg: usize) -> Result<()> {
        let level = &mut self.levels[mg];
        let stats = level.exchanger.exchange(&self.forest, &mut level.u, &self.ranks)?;
        self.volume.merge(&stats.volume);
        self.exchanges += 1;
        Ok(())
    }

    /// Refreshes every ghost face of `u` on one level.
    pub fn update_ghosts(&mut self, mg: usize, bc: Option<&BoundarySpec>) -> Result<()> {
        if mg >= self.levels.len() {
            return Err(Error::LevelNotAllocated(mg));
        }
        self.exchange(mg)?;
        let forest = &self.forest;
        let level = &mut self.levels[mg];
        level
            .u
            .par_iter_mut()
            .zip(level.geoms.par_iter())
            .for_each(|(u, g)| set_boundary_ghosts(forest, u, g, bc));
        Ok(())
    }

    fn smooth(&mut self, mg: usize, omega: f64, bc: Option<&BoundarySpec>) -> Result<()> {
        self.update_ghosts(mg, bc)?;
        let level = &mut self.levels[mg];
        level
            .u
            .par_iter_mut()
            .zip(level.f.par_iter())
            .zip(level.geoms.par_iter())
            .zip(level.scratch.par_iter_mut())
            .for_each(|(((u, f), g), tmp)| {
                jacobi_into(u, f, g, omega, tmp);
                let n = u.cells();
                let mut rows = Vec::with_capacity(n * n);
                for_each_row(u, |row| rows.push(row));
                let data = u.data_mut();
                for row in rows {
                    data[row..row + n].copy_from_slice(&tmp[row..row + n]);
                }
            });
        Ok(())
    }

    fn compute_residual(&mut self, mg: usize, bc: Option<&BoundarySpec>) -> Result<()> {
        self.update_ghosts(mg, bc)?;
        let level = &mut self.levels[mg];
        level
            .r
            .par_iter_mut()
            .zip(level.u.par_iter())
            .zip(level.f.par_iter())
            .zip(level.geoms.par_iter())
            .for_each(|(((r, u), f), g)| residual(u, f, g, r));
        Ok(())
    }

    /// Unweighted discrete L2 norm of `f - A u` over all finest-level interior cells.
    pub fn residual_norm(&mut self, bc: &BoundarySpec) -> Result<f64> {
        self.compute_residual(0, Some(bc))?;
        let partial: Vec<f64> = self.levels[0]
            .r
            .par_iter()
            .map(|r| r.interior_range().iter().map(|c| r.get(c).powi(2)).sum())
            .collect();
        Ok(partial.iter().sum::<f64>().sqrt())
    }

    /// Finest-level residual fields from the last residual computation.
    pub fn residual_fields(&self) -> &[BlockField] {
        &self.levels[0].r
    }

    fn cycle(&mut self, mg: usize, cfg: &SolverConfig, bc: Option<&BoundarySpec>) -> Result<()> {
        if mg + 1 == self.levels.len() {
            for _ in 0..cfg.coarse_iters {
                self.smooth(mg, cfg.omega, bc)?;
            }
            return Ok(());
        }
        for _ in 0..cfg.nu1 {
            self.smooth(mg, cfg.omega, bc)?;
        }
        self.compute_residual(mg, bc)?;
        {
            let (fine, coarse) = self.levels.split_at_mut(mg + 1);
            let (fine, coarse) = (&fine[mg], &mut coarse[0]);
            coarse
                .f
                .par_iter_mut()
                .zip(coarse.u.par_iter_mut())
                .zip(fine.r.par_iter())
                .for_each(|((cf, cu), fr)| {
                    restrict_block(fr, cf);
                    cu.fill(0.0);
                });
        }
        self.cycle(mg + 1, cfg, None)?;
        {
            let (fine, coarse) = self.levels.split_at_mut(mg + 1);
            let (fine, coarse) = (&mut fine[mg], &coarse[0]);
            fine.u
                .par_iter_mut()
                .zip(coarse.u.par_iter())
                .for_each(|(fu, cu)| prolong_block(cu, fu));
        }
        for _ in 0..cfg.nu2 {
            self.smooth(mg, cfg.omega, bc)?;
        }
        Ok(())
    }

    /// One V(ν1, ν2) cycle in correction form; coarse levels use homogeneous
    /// boundary conditions.
    pub fn v_cycle(&mut self, cfg: &SolverConfig, bc: &BoundarySpec) -> Result<()> {
        cfg.validate()?;
        if cfg.scheme != self.scheme() {
            self.set_scheme(cfg.scheme)?;
        }
        self.cycle(0, cfg, Some(bc))
    }

    /// Repeats V-cycles until the residual norm drops below `residual_tol` or
    /// `max_cycles` is reached.
    pub fn solve(&mut self, cfg: &SolverConfig, bc: &BoundarySpec) -> Result<SolveReport> {
        cfg.validate()?;
        let initial = self.residual_norm(bc)?;
        let mut report = SolveReport {
            cycles: 0,
            initial_residual: initial,
            history: Vec::new(),
            converged: initial < cfg.residual_tol,
        };
        while !report.converged && report.cycles < cfg.max_cycles {
            self.v_cycle(cfg, bc)?;
            let res = self.residual_norm(bc)?;
            report.cycles += 1;
            report.history.push(res);
            if !res.is_finite() || res > 10.0 * initial {
                return Err(Error::Divergence {
                    cycle: report.cycles,
                    residual: res,
                    initial,
                });
            }
            report.converged = res < cfg.residual_tol;
        }
        Ok(report)
    }

    /// L2 error of the finest-level solution.
    pub fn l2_error(&self, exact: impl Fn([f64; 3]) -> f64 + Sync) -> ErrorNorms {
        l2_error(&self.levels[0].u, &self.levels[0].geoms, exact)
    }
}
