#![allow(dead_code)]

pub mod oracle;

use blockmg::comm::allocate_fields;
use blockmg::harness::RunConfig;
use blockmg::{Aabb, BlockField, Blockforest, Direction, Geometry, NeighborCase, RefineStep};

pub fn preset_forest(name: &str, n: usize) -> Blockforest {
    let mut cfg = RunConfig::preset(name).unwrap();
    cfg.block_size = n;
    cfg.forest().unwrap()
}

pub fn forest(
    dim: usize,
    roots: &[u64],
    hi: [f64; 3],
    n: usize,
    steps: &[RefineStep],
) -> Blockforest {
    Blockforest::build(dim, roots, Aabb::new([0.0; 3], hi), n, steps).unwrap()
}

/// Named forests covering 2D and 3D, several block sizes and every refinement case.
pub fn corpus() -> Vec<(&'static str, Blockforest)> {
    vec![
        ("fig2", preset_forest("fig2", 4)),
        ("fig2-n6", preset_forest("fig2", 6)),
        ("fig1", preset_forest("fig1", 4)),
        ("fig1-n8", preset_forest("fig1", 8)),
        ("fig6-n4", preset_forest("poisson-fig6", 4)),
        (
            "cube-corner",
            forest(
                3,
                &[1, 1, 1],
                [1.0; 3],
                4,
                &[RefineStep::RefineAll, RefineStep::region([0.0; 3], [0.3; 3])],
            ),
        ),
        (
            "bar-3d-n6",
            forest(
                3,
                &[2, 1, 1],
                [2.0, 1.0, 1.0],
                6,
                &[RefineStep::region([0.0; 3], [1.0; 3])],
            ),
        ),
        (
            "strip-2d",
            forest(
                2,
                &[3, 1],
                [3.0, 1.0, 0.0],
                4,
                &[
                    RefineStep::region([1.2, 0.0, 0.0], [1.8, 1.0, 0.0]),
                    RefineStep::region([1.4, 0.4, 0.0], [1.6, 0.6, 0.0]),
                ],
            ),
        ),
    ]
}

/// Fields on `mg_level` with interiors sampled from `u` and every ghost set to NaN.
pub fn sampled_fields(
    forest: &Blockforest,
    mg_level: usize,
    u: &dyn Fn([f64; 3]) -> f64,
) -> Vec<BlockField> {
    let mut fields = allocate_fields(forest, mg_level);
    for f in &mut fields {
        let geom = Geometry::new(forest, &f.block(), mg_level);
        f.fill(f64::NAN);
        for c in f.interior_range().iter().collect::<Vec<_>>() {
            f.set(c, u(geom.center(c)));
        }
    }
    fields
}

pub const SAME_LEVEL: usize = 0;
pub const FROM_COARSER: usize = 1;
pub const FROM_FINER: usize = 2;

/// Largest relative ghost error per receiving case (the case as seen by the receiver).
pub fn ghost_errors(
    forest: &Blockforest,
    fields: &[BlockField],
    u: &dyn Fn([f64; 3]) -> f64,
) -> [f64; 3] {
    let mut worst = [0.0f64; 3];
    for f in fields {
        let b = f.block();
        let geom = Geometry::new(forest, &b, f.mg_level());
        for &dir in Direction::cardinal(forest.dim()) {
            let nbs = forest.neighbors(&b, dir).unwrap();
            let Some(first) = nbs.first() else { continue };
            let slot = match first.case {
                NeighborCase::SameLevel => SAME_LEVEL,
                // The neighbor is finer, so these ghosts hold averaged values.
                NeighborCase::C2F => FROM_FINER,
                // The neighbor is coarser, so these ghosts hold extrapolated values.
                NeighborCase::F2C => FROM_COARSER,
            };
            for c in f.ghost_range(dir).iter() {
                let exact = u(geom.center(c));
                let got = f.get(c);
                let err = (got - exact).abs() / exact.abs().max(1.0);
                worst[slot] = worst[slot].max(if got.is_nan() { f64::INFINITY } else { err });
            }
        }
    }
    worst
}

/// All monomials `x^a y^b z^c` with `a + b + c <= degree` in `dim` dimensions.
pub fn monomials(dim: usize, degree: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in 0..=degree {
        for b in 0..=degree {
            for c in 0..=degree {
                if a + b + c <= degree && (dim == 3 || c == 0) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

pub fn monomial(p: [u32; 3]) -> impl Fn([f64; 3]) -> f64 {
    move |x| x[0].powi(p[0] as i32) * x[1].powi(p[1] as i32) * x[2].powi(p[2] as i32)
}
