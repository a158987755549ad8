//! Run configuration, presets and reports for the Poisson benchmark.
//!
//! A run is described by a single JSON document:
//!
//! ```json
//! {
//!   "dim": 3,
//!   "root_dims": [1, 1, 1],
//!   "domain": { "lo": [0, 0, 0], "hi": [1, 1, 1] },
//!   "refinement": [
//!     { "type": "refine_all" },
//!     { "type": "refine_region", "lo": [0.25, 0.25, 0.25], "hi": [0.75, 0.75, 0.75] }
//!   ],
//!   "block_size": 16,
//!   "scheme": "quadratic",
//!   "solver": { "omega": 0.8, "nu1": 3, "nu2": 3, "coarse_iters": 256,
//!               "max_cycles": 35, "tol": 1e-16 },
//!   "ranks": 1,
//!   "problem": "poisson-sinh"
//! }
//! ```
//!
//! Everything except `dim`, `root_dims` and `block_size` has a default.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blockforest::{Aabb, Blockforest, RefineStep};
use crate::comm::{build_plan, volume_report, VolumeReport};
use crate::error::{Error, Result};
use crate::interp::SchemeOrder;
use crate::mg::{grid_convergence, BoundarySpec, ErrorNorms, MgHierarchy, SolveReport, SolverConfig};

pub const PRESETS: [&str; 3] = ["poisson-fig6", "fig2", "fig1"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    /// `-Δu = 0` with `u = sin(πx) sin(πy) sinh(√2 π z)` on the boundary (in 2D
    /// `u = sin(πx) sinh(πy)`).
    #[default]
    PoissonSinh,
    /// Zero right-hand side and zero boundary values.
    Zero,
}

impl Problem {
    pub fn exact(self, dim: usize) -> fn([f64; 3]) -> f64 {
        match (self, dim) {
            (Problem::Zero, _) => |_| 0.0,
            (Problem::PoissonSinh, 2) => |x| (PI * x[0]).sin() * (PI * x[1]).sinh(),
            (Problem::PoissonSinh, _) => {
                |x| (PI * x[0]).sin() * (PI * x[1]).sin() * (SQRT_2 * PI * x[2]).sinh()
            }
        }
    }

    pub fn boundary(self, dim: usize) -> BoundarySpec {
        BoundarySpec::new(self.exact(dim))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RefineSpec {
    RefineAll,
    RefineRegion { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub omega: f64,
    pub nu1: usize,
    pub nu2: usize,
    pub coarse_iters: usize,
    pub max_cycles: usize,
    pub tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSettings {
            omega: d.omega,
            nu1: d.nu1,
            nu2: d.nu2,
            coarse_iters: d.coarse_iters,
            max_cycles: d.max_cycles,
            tol: d.residual_tol,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub root_dims: Vec<u64>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub refinement: Vec<RefineSpec>,
    pub block_size: usize,
    #[serde(default)]
    pub scheme: SchemeOrder,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "one")]
    pub ranks: usize,
    #[serde(default)]
    pub problem: Problem,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn pad3(v: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(v);
    out
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Named configurations: `poisson-fig6` (3D, 56 + 64 blocks), `fig2` (2D, two
    /// roots with the west one refined) and `fig1` (2D, lower-left corner refined
    /// three times).
    pub fn preset(name: &str) -> Result<Self> {
        let region = |lo: &[f64], hi: &[f64]| RefineSpec::RefineRegion {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        };
        let base = |dim, root_dims: Vec<u64>, domain: DomainSpec, refinement, block_size| RunConfig {
            dim,
            root_dims,
            domain: Some(domain),
            refinement,
            block_size,
            scheme: SchemeOrder::Quadratic,
            solver: SolverSettings::default(),
            ranks: 1,
            problem: Problem::PoissonSinh,
            out: None,
        };
        match name {
            "poisson-fig6" => Ok(base(
                3,
                vec![1, 1, 1],
                DomainSpec { lo: vec![0.0; 3], hi: vec![1.0; 3] },
                vec![
                    RefineSpec::RefineAll,
                    RefineSpec::RefineAll,
                    region(&[0.25; 3], &[0.75; 3]),
                ],
                16,
            )),
            "fig2" => Ok(base(
                2,
                vec![2, 1],
                DomainSpec { lo: vec![0.0; 2], hi: vec![2.0, 1.0] },
                vec![region(&[0.0, 0.0], &[1.0, 1.0])],
                4,
            )),
            "fig1" => Ok(base(
                2,
                vec![2, 2],
                DomainSpec { lo: vec![0.0; 2], hi: vec![1.0; 2] },
                vec![
                    RefineSpec::RefineAll,
                    region(&[0.0, 0.0], &[0.5, 0.5]),
                    region(&[0.0, 0.0], &[0.25, 0.25]),
                ],
                4,
            )),
            other => Err(Error::config(
                "preset",
                format!("unknown preset '{other}' (known: {})", PRESETS.join(", ")),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::config("dim", format!("must be 2 or 3, got {}", self.dim)));
        }
        if self.root_dims.len() != self.dim || self.root_dims.contains(&0) {
            return Err(Error::config(
                "root_dims",
                format!("expected {} positive entries", self.dim),
            ));
        }
        if let Some(d) = &self.domain {
            if d.lo.len() != self.dim || d.hi.len() != self.dim {
                return Err(Error::config("domain", format!("expected {} coordinates", self.dim)));
            }
        }
        for (i, step) in self.refinement.iter().enumerate() {
            if let RefineSpec::RefineRegion { lo, hi } = step {
                if lo.len() != self.dim || hi.len() != self.dim {
                    return Err(Error::config(
                        format!("refinement[{i}]"),
                        format!("expected {} coordinates", self.dim),
                    ));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(Error::config(format!("refinement[{i}]"), "lo must be below hi"));
                }
            }
        }
        if self.block_size < 4 {
            return Err(Error::config("block_size", "must be at least 4"));
        }
        if !self.block_size.is_multiple_of(2) {
            return Err(Error::config("block_size", "must be even"));
        }
        if self.ranks < 1 {
            return Err(Error::config("ranks", "must be at least 1"));
        }
        self.solver_config().validate()
    }

    pub fn domain_box(&self) -> Aabb {
        match &self.domain {
            Some(d) => Aabb::new(pad3(&d.lo), pad3(&d.hi)),
            None => {
                let mut hi = [0.0; 3];
                hi[..self.dim].fill(1.0);
                Aabb::new([0.0; 3], hi)
            }
        }
    }

    pub fn refine_steps(&self) -> Vec<RefineStep> {
        self.refinement
            .iter()
            .map(|s| match s {
                RefineSpec::RefineAll => RefineStep::RefineAll,
                RefineSpec::RefineRegion { lo, hi } => RefineStep::region(pad3(lo), pad3(hi)),
            })
            .collect()
    }

    pub fn forest(&self) -> Result<Blockforest> {
        Blockforest::build(
            self.dim,
            &self.root_dims,
            self.domain_box(),
            self.block_size,
            &self.refine_steps(),
        )
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            omega: self.solver.omega,
            nu1: self.solver.nu1,
            nu2: self.solver.nu2,
            coarse_iters: self.solver.coarse_iters,
            max_cycles: self.solver.max_cycles,
            residual_tol: self.solver.tol,
            scheme: self.scheme,
        }
    }
}

/// Outcome of one solve.
#[derive(Clone, Debug)]
pub struct SolveRun {
    pub block_size: usize,
    pub scheme: SchemeOrder,
    pub ranks: usize,
    pub leaves_per_level: BTreeMap<u32, usize>,
    pub total_cells: usize,
    pub mg_levels: usize,
    pub errors: ErrorNorms,
    pub report: SolveReport,
    /// Closed-form volume of one exchange on every multigrid level.
    pub volume_per_exchange: VolumeReport,
    /// Volume accumulated over all exchanges of the solve.
    pub volume_total: VolumeReport,
    pub exchanges: usize,
}

/// Builds the forest, assembles the problem, solves it and measures the error.
pub fn run_solve(cfg: &RunConfig) -> Result<SolveRun> {
    cfg.validate()?;
    let forest = cfg.forest()?;
    let ranks = forest.assign_ranks(cfg.ranks)?;
    let mut hier = MgHierarchy::new(&forest, ranks, cfg.scheme)?;
    let exact = cfg.problem.exact(cfg.dim);
    hier.set_rhs(|_| 0.0);
    let report = hier.solve(&cfg.solver_config(), &cfg.problem.boundary(cfg.dim))?;
    Ok(SolveRun {
        block_size: cfg.block_size,
        scheme: cfg.scheme,
        ranks: cfg.ranks,
        leaves_per_level: forest.leaves_per_level(),
        total_cells: forest.len() * cfg.block_size.pow(cfg.dim as u32),
        mg_levels: hier.num_levels(),
        errors: hier.l2_error(exact),
        report,
        volume_per_exchange: hier.volume_per_exchange(),
        volume_total: hier.volume().clone(),
        exchanges: hier.exchange_count(),
    })
}

impl SolveRun {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "block size        {}", self.block_size);
        let _ = writeln!(s, "scheme            {}", self.scheme);
        let _ = writeln!(s, "ranks             {}", self.ranks);
        for (level, count) in &self.leaves_per_level {
            let _ = writeln!(s, "level {level}: {count}");
        }
        let _ = writeln!(s, "cells             {}", self.total_cells);
        let _ = writeln!(s, "mg levels         {}", self.mg_levels);
        let _ = writeln!(s, "cycles            {}", self.report.cycles);
        let _ = writeln!(s, "initial residual  {:.6e}", self.report.initial_residual);
        let _ = writeln!(s, "final residual    {:.6e}", self.report.final_residual());
        let _ = writeln!(s, "l2 error (volume) {:.6e}", self.errors.volume_weighted);
        let _ = writeln!(s, "l2 error (plain)  {:.6e}", self.errors.plain);
        let _ = writeln!(s, "exchanges         {}", self.exchanges);
        let t = self.volume_total.total();
        let _ = writeln!(s, "messages          {}", t.messages);
        let _ = writeln!(s, "scalars           {}", t.scalars);
        s
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("cycle,residual\n");
        let _ = writeln!(s, "0,{:e}", self.report.initial_residual);
        for (i, r) in self.report.history.iter().enumerate() {
            let _ = writeln!(s, "{},{:e}", i + 1, r);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceEntry {
    pub scheme: SchemeOrder,
    pub errors: ErrorNorms,
    /// Grid convergence relative to the previous block size.
    pub kappa: Option<f64>,
    pub cycles: usize,
    pub residual_final: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub block_size: usize,
    pub entries: Vec<ConvergenceEntry>,
}

impl ConvergenceRow {
    pub fn entry(&self, scheme: SchemeOrder) -> Option<&ConvergenceEntry> {
        self.entries.iter().find(|e| e.scheme == scheme)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

/// Runs every (block size, scheme) pair and computes κ from the volume-weighted norm.
pub fn run_convergence(
    cfg: &RunConfig,
    sizes: &[usize],
    schemes: &[SchemeOrder],
) -> Result<ConvergenceTable> {
    if sizes.is_empty() {
        return Err(Error::config("sizes", "at least one block size is required"));
    }
    for w in sizes.windows(2) {
        if w[1] != 2 * w[0] {
            return Err(Error::config(
                "sizes",
                format!("block sizes must double, got {} then {}", w[0], w[1]),
            ));
        }
    }
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &n in sizes {
        let mut entries = Vec::new();
        for &scheme in schemes {
            let mut run_cfg = cfg.clone();
            run_cfg.block_size = n;
            run_cfg.scheme = scheme;
            let run = run_solve(&run_cfg)?;
            let kappa = match rows.last().and_then(|r| r.entry(scheme)) {
                Some(prev) => Some(grid_convergence(
                    prev.errors.volume_weighted,
                    run.errors.volume_weighted,
                )?),
                None => None,
            };
            entries.push(ConvergenceEntry {
                scheme,
                errors: run.errors,
                kappa,
                cycles: run.report.cycles,
                residual_final: run.report.final_residual(),
            });
        }
        rows.push(ConvergenceRow {
            block_size: n,
            entries,
        });
    }
    Ok(ConvergenceTable { rows })
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "block_size,scheme,l2_error_volume_weighted,l2_error_plain,kappa,cycles,residual_final\n",
        );
        for row in &self.rows {
            for e in &row.entries {
                let kappa = e.kappa.map(|k| format!("{k:.6}")).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},{},{:.6e},{:.6e},{},{},{:.6e}",
                    row.block_size,
                    e.scheme,
                    e.errors.volume_weighted,
                    e.errors.plain,
                    kappa,
                    e.cycles,
                    e.residual_final
                );
            }
        }
        s
    }

    /// Aligned text table: per scheme, the volume-weighted error and κ, then the
    /// plain error and its κ.
    pub fn render(&self) -> String {
        let schemes: Vec<SchemeOrder> = self
            .rows
            .first()
            .map(|r| r.entries.iter().map(|e| e.scheme).collect())
            .unwrap_or_default();
        let mut s = String::new();
        let _ = write!(s, "{:>10}", "block size");
        for sc in &schemes {
            let _ = write!(s, " | {:>12} {:>6} {:>10} {:>6}", format!("{sc} L2"), "kappa", "plain", "kappa");
        }
        s.push('\n');
        let mut prev: Option<&ConvergenceRow> = None;
        for row in &self.rows {
            let _ = write!(s, "{:>10}", format!("{}^D", row.block_size));
            for sc in &schemes {
                let Some(e) = row.entry(*sc) else {
                    let _ = write!(s, " | {:>12} {:>6} {:>10} {:>6}", "", "", "", "");
                    continue;
                };
                let k = e.kappa.map(|k| format!("{k:.3}")).unwrap_or_else(|| "-".into());
                let kp = prev
                    .and_then(|p| p.entry(*sc))
                    .and_then(|p| grid_convergence(p.errors.plain, e.errors.plain).ok())
                    .map(|k| format!("{k:.3}"))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(
                    s,
                    " | {:>12.3e} {:>6} {:>10.3e} {:>6}",
                    e.errors.volume_weighted, k, e.errors.plain, kp
                );
            }
            s.push('\n');
            prev = Some(row);
        }
        s
    }
}

/// Multigrid levels a forest with block size `n` allocates: halve while the result
/// keeps at least four cells.
pub fn mg_levels_for(n: usize) -> usize {
    let mut levels = 1;
    let mut cells = n;
    while cells.is_multiple_of(2) && cells / 2 >= 4 {
        cells /= 2;
        levels += 1;
    }
    levels
}

/// Closed-form volume of one exchange on every multigrid level, without solving.
pub fn comm_volume(cfg: &RunConfig) -> Result<VolumeReport> {
    cfg.validate()?;
    let forest = cfg.forest()?;
    let mut report = VolumeReport::default();
    for mg in 0..mg_levels_for(cfg.block_size) {
        report.merge(&volume_report(&build_plan(&forest, mg)?, cfg.scheme));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestReport {
    pub leaves: usize,
    pub leaves_per_level: BTreeMap<u32, usize>,
    pub violations: Vec<(crate::BlockId, crate::BlockId)>,
    pub rank_counts: Vec<usize>,
    pub volume_ok: bool,
}

pub fn check_forest(cfg: &RunConfig) -> Result<ForestReport> {
    cfg.validate()?;
    let forest = cfg.forest()?;
    Ok(ForestReport {
        leaves: forest.len(),
        leaves_per_level: forest.leaves_per_level(),
        violations: forest.check_balance(),
        rank_counts: forest.assign_ranks(cfg.ranks)?.counts(),
        volume_ok: forest.lattice_volume() == forest.domain_lattice_volume(),
    })
}

impl ForestReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "leaves: {}", self.leaves);
        for (level, count) in &self.leaves_per_level {
            let _ = writeln!(s, "level {level}: {count}");
        }
        let _ = writeln!(s, "balance violations: {}", self.violations.len());
        for (a, b) in &self.violations {
            let _ = writeln!(s, "  {a} - {b}");
        }
        let _ = writeln!(s, "volume covered: {}", if self.volume_ok { "yes" } else { "no" });
        for (rank, count) in self.rank_counts.iter().enumerate() {
            let _ = writeln!(s, "rank {rank}: {count} blocks");
        }
        s
    }
}

/// Writes `(file name, contents)` pairs into `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in files {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}
