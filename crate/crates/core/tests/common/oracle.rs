//! Direct construction of every coarse-to-fine base from the Lagrange product formula.

use blockmg::fields::split_interface;
use blockmg::interp::{c2f_compute_fine_values, c2f_pack, C2fStencil};
use blockmg::{BlockField, BlockId, Cell, Direction, OrthogonalFrame, SchemeOrder};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `w_i(x) = prod_{j != i} (x - x_j) / (x_i - x_j)`.
pub fn lagrange(xs: &[f64], x: f64) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            (0..xs.len())
                .filter(|&j| j != i)
                .map(|j| (x - xs[j]) / (xs[i] - xs[j]))
                .product()
        })
        .collect()
}

fn is_interior(c: Cell, n: i64, dim: usize) -> bool {
    (0..dim).all(|d| (1..=n).contains(&c[d]))
}

fn shifted(c: Cell, axis: usize, k: i64) -> Cell {
    let mut out = c;
    out[axis] += k;
    out
}

/// Base offsets along a transverse axis for the fine value on side `side` (-1 or +1).
fn transverse_bases(order: SchemeOrder, c: Cell, axis: usize, side: i64, n: i64, dim: usize) -> Vec<i64> {
    let ok = |k: i64| is_interior(shifted(c, axis, k), n, dim);
    match order {
        SchemeOrder::Constant => vec![0],
        SchemeOrder::Linear => {
            if ok(side) {
                vec![0, side]
            } else {
                vec![0, -2 * side]
            }
        }
        SchemeOrder::Quadratic => [-1, 0, 1]
            .into_iter()
            .map(|k| if k != 0 && !ok(k) { -2 * k } else { k })
            .collect(),
    }
}

/// Fine ghost values of one coarse interface cell, ordered with the lowest transverse
/// axis fastest and the negative side first.
pub fn oracle(field: &BlockField, cell: Cell, d_comm: Direction, order: SchemeOrder) -> Vec<f64> {
    let dim = field.dim();
    let n = field.cells() as i64;
    let comm_axis = d_comm.axis();
    let inward = -d_comm.sign();
    let first = |c: Cell| -> f64 {
        let ks: Vec<i64> = (0..order.base_count() as i64).collect();
        let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
        let w = lagrange(&xs, -0.25);
        ks.iter()
            .zip(&w)
            .map(|(&k, &w)| {
                let b = shifted(c, comm_axis, inward * k);
                assert!(is_interior(b, n, dim), "base {b:?} outside the interior");
                w * field.get(b)
            })
            .sum()
    };
    let axes: Vec<usize> = (0..dim).filter(|&a| a != comm_axis).collect();
    let sides: Vec<Vec<i64>> = if dim == 2 {
        vec![vec![-1], vec![1]]
    } else {
        vec![vec![-1, -1], vec![1, -1], vec![-1, 1], vec![1, 1]]
    };
    sides
        .iter()
        .map(|side| {
            let per_axis: Vec<(Vec<i64>, Vec<f64>)> = axes
                .iter()
                .zip(side)
                .map(|(&a, &s)| {
                    let ks = transverse_bases(order, cell, a, s, n, dim);
                    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
                    let w = lagrange(&xs, 0.25 * s as f64);
                    (ks, w)
                })
                .collect();
            let mut total = 0.0;
            let (k2, w2) = &per_axis[0];
            for (i, &a) in k2.iter().enumerate() {
                let c2 = shifted(cell, axes[0], a);
                if dim == 2 {
                    total += w2[i] * first(c2);
                } else {
                    let (k3, w3) = &per_axis[1];
                    for (j, &b) in k3.iter().enumerate() {
                        total += w2[i] * w3[j] * first(shifted(c2, axes[1], b));
                    }
                }
            }
            total
        })
        .collect()
}

/// Compares the library against [`oracle`] on `count` random (field, direction,
/// segment, order) instances; returns the largest deviation and the cells checked.
pub fn random_comparison(count: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = 0;
    let mut cells_checked = 0;
    let mut worst = 0.0f64;
    while instances < count {
        let dim = *[2usize, 3].choose(&mut rng).unwrap();
        let n = *[3usize, 4, 5, 6, 8].choose(&mut rng).unwrap();
        let order = *[SchemeOrder::Quadratic, SchemeOrder::Quadratic, SchemeOrder::Linear, SchemeOrder::Constant]
            .choose(&mut rng)
            .unwrap();
        let dir = *Direction::cardinal(dim).choose(&mut rng).unwrap();
        let mut field = BlockField::new(BlockId::new(0, [0; 3]), dim, n, 0);
        field.fill(f64::NAN);
        for c in field.interior_range().iter().collect::<Vec<_>>() {
            field.set(c, rng.gen_range(-1.0..1.0));
        }
        let face = field.interface_range(dir);
        let segment = if n % 2 == 0 {
            let segs = split_interface(&face, dir, 2, dim).unwrap();
            segs[rng.gen_range(0..segs.len())]
        } else {
            face
        };
        let frame = OrthogonalFrame::new(dir, dim);
        let mut expected = Vec::new();
        for c in segment.iter() {
            let want = oracle(&field, c, dir, order);
            let got = c2f_compute_fine_values(&field, c, &frame, order);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs());
            }
            expected.extend(want);
            cells_checked += 1;
        }
        let packed = c2f_pack(&field, dir, &segment, &C2fStencil::new(order)).unwrap();
        assert_eq!(packed.len(), expected.len());
        for (g, w) in packed.iter().zip(&expected) {
            worst = worst.max((g - w).abs());
        }
        instances += 1;
    }
    (worst, cells_checked)
}
