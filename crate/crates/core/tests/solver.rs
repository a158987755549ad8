mod common;

use std::f64::consts::{PI, SQRT_2};

use blockmg::harness::{run_convergence, run_solve, Problem, RunConfig};
use blockmg::mg::{apply_laplacian, jacobi_sweep, set_boundary_ghosts};
use blockmg::{BlockField, BoundarySpec, Geometry, MgHierarchy, SchemeOrder, SolverConfig};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact3(x: [f64; 3]) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin() * (SQRT_2 * PI * x[2]).sinh()
}

fn single_block(n: usize) -> blockmg::Blockforest {
    forest(3, &[1, 1, 1], [1.0; 3], n, &[])
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut k) = (0.0, 0);
    for v in values {
        s += v * v;
        k += 1;
    }
    (s / k as f64).sqrt()
}

#[test]
fn truncation_error_is_second_order() {
    let mut norms = Vec::new();
    for n in [8usize, 16, 32] {
        let forest = single_block(n);
        let b = forest.leaves()[0];
        let geom = Geometry::new(&forest, &b, 0);
        let mut u = sampled_fields(&forest, 0, &exact3).remove(0);
        set_boundary_ghosts(&forest, &mut u, &geom, Some(&BoundarySpec::new(exact3)));
        let au = apply_laplacian(&u, &geom);
        let n = n as i64;
        // Cells touching the boundary see the reflected ghost and are excluded.
        let interior = u.interior_range();
        let inner = interior
            .iter()
            .filter(|c| c.iter().all(|&i| i > 1 && i < n))
            .map(|c| au.get(c));
        norms.push(rms(inner));
    }
    for w in norms.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.2..=0.3).contains(&ratio), "{norms:?}");
    }
}

#[test]
fn laplacian_of_a_parabola() {
    let forest = forest(3, &[1, 1, 1], [8.0; 3], 8, &[]);
    let b = forest.leaves()[0];
    let geom = Geometry::new(&forest, &b, 0);
    let mut u = sampled_fields(&forest, 0, &|x| x[0] * x[0]).remove(0);
    set_boundary_ghosts(&forest, &mut u, &geom, Some(&BoundarySpec::new(|x| x[0] * x[0])));
    let au = apply_laplacian(&u, &geom);
    for c in u.interior_range().iter().filter(|c| c[0] > 1 && c[0] < 8) {
        assert!((au.get(c) + 2.0).abs() < 1e-12);
    }
}

#[test]
fn jacobi_keeps_a_discrete_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let forest = single_block(8);
    let b = forest.leaves()[0];
    let geom = Geometry::new(&forest, &b, 0);
    let mut u = BlockField::new(b, 3, 8, 0);
    for c in u.full_range().iter().collect::<Vec<_>>() {
        u.set(c, rng.gen_range(-1.0..1.0));
    }
    let f = apply_laplacian(&u, &geom);
    let next = jacobi_sweep(&u, &f, &geom, 0.8);
    let scale = u.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(next.max_interior_diff(&u) <= 1e-14 * scale * 16.0 * 16.0);
}

#[test]
fn one_sweep_reduces_a_rough_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let forest = single_block(16);
    let b = forest.leaves()[0];
    let geom = Geometry::new(&forest, &b, 0);
    let mut u = BlockField::new(b, 3, 16, 0);
    for c in u.interior_range().iter().collect::<Vec<_>>() {
        u.set(c, rng.gen_range(-1.0..1.0));
    }
    let f = BlockField::new(b, 3, 16, 0);
    let norm = |u: &mut BlockField| {
        set_boundary_ghosts(&forest, u, &geom, None);
        let au = apply_laplacian(u, &geom);
        rms(u.interior_range().iter().map(|c| au.get(c)))
    };
    let before = norm(&mut u);
    let mut next = jacobi_sweep(&u, &f, &geom, 0.8);
    let after = norm(&mut next);
    assert!(after < 0.7 * before, "{before} -> {after}");
}

#[test]
fn uniform_cube_cycles_contract_fast() {
    let forest = single_block(32);
    let mut h = MgHierarchy::new(&forest, forest.assign_ranks(1).unwrap(), SchemeOrder::Quadratic)
        .unwrap();
    assert_eq!(h.num_levels(), 4);
    assert_eq!(h.coarsest_cells(), 4);
    let cfg = SolverConfig {
        max_cycles: 6,
        ..SolverConfig::default()
    };
    let report = h.solve(&cfg, &BoundarySpec::new(exact3)).unwrap();
    let mut prev = report.initial_residual;
    for r in &report.history {
        assert!(r / prev < 0.3, "{:?}", report.history);
        prev = *r;
    }
}

#[test]
fn zero_problem_needs_no_cycles() {
    let mut cfg = RunConfig::preset("fig2").unwrap();
    cfg.problem = Problem::Zero;
    let run = run_solve(&cfg).unwrap();
    assert_eq!(run.report.cycles, 0);
    assert_eq!(run.errors.volume_weighted, 0.0);
    assert_eq!(run.errors.plain, 0.0);
}

#[test]
fn converged_solution_is_a_fixed_point() {
    let forest = preset_forest("fig1", 8);
    let mut h = MgHierarchy::new(&forest, forest.assign_ranks(2).unwrap(), SchemeOrder::Quadratic)
        .unwrap();
    let bc = Problem::PoissonSinh.boundary(2);
    let cfg = SolverConfig::default();
    h.solve(&cfg, &bc).unwrap();
    let before: Vec<BlockField> = h.solution().to_vec();
    h.v_cycle(&cfg, &bc).unwrap();
    let scale = before.iter().flat_map(|f| f.data()).fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in before.iter().zip(h.solution()) {
        assert!(a.max_interior_diff(b) <= 1e-12 * scale);
    }
}

#[test]
fn residual_histories_do_not_depend_on_ranks() {
    let mut base = RunConfig::preset("poisson-fig6").unwrap();
    base.block_size = 8;
    base.solver.max_cycles = 4;
    let mut reference = None;
    for ranks in [1, 2, 4, 8] {
        let mut cfg = base.clone();
        cfg.ranks = ranks;
        let run = run_solve(&cfg).unwrap();
        let bits: Vec<u64> = run.report.history.iter().map(|r| r.to_bits()).collect();
        match &reference {
            None => reference = Some(bits),
            Some(r) => assert_eq!(r, &bits, "ranks {ranks}"),
        }
    }
}

#[test]
fn residual_decreases_every_cycle_on_the_refined_cube() {
    let mut cfg = RunConfig::preset("poisson-fig6").unwrap();
    cfg.block_size = 8;
    cfg.solver.max_cycles = 12;
    let run = run_solve(&cfg).unwrap();
    let mut prev = run.report.initial_residual;
    for r in &run.report.history {
        assert!(*r < prev, "{:?}", run.report.history);
        prev = *r;
    }
}

#[test]
fn scheme_order_sets_the_convergence_rate_in_2d() {
    let cfg = RunConfig::preset("fig1").unwrap();
    let table = run_convergence(&cfg, &[8, 16, 32], &SchemeOrder::ALL).unwrap();
    let last = table.rows.last().unwrap();
    let k = |s| last.entry(s).unwrap().kappa.unwrap();
    assert!(k(SchemeOrder::Quadratic) < 0.3, "{}", table.render());
    assert!((0.4..0.6).contains(&k(SchemeOrder::Linear)), "{}", table.render());
    assert!(k(SchemeOrder::Constant) > 0.8, "{}", table.render());
    // The κ column is the ratio of the emitted volume-weighted errors.
    for w in table.rows.windows(2) {
        for e in &w[1].entries {
            let prev = w[0].entry(e.scheme).unwrap();
            assert_eq!(e.kappa.unwrap(), e.errors.volume_weighted / prev.errors.volume_weighted);
        }
    }
}
