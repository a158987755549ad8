//! Cell-centered block fields with a single ghost layer.
//!
//! Cells are addressed by raw indices: interior cells run from `1` to `n` on every
//! active axis, ghosts sit at `0` and `n + 1`. In 2D the z index is always `0`.

use crate::blockforest::{transverse_axes, BlockId, Blockforest, Direction, NeighborCase};
use crate::error::{Error, Result};

/// Raw cell index. The z component is `0` in 2D.
pub type Cell = [i64; 3];

pub(crate) fn add(a: Cell, b: Cell) -> Cell {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale(a: Cell, s: i64) -> Cell {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Half-open box of raw indices, iterated with x fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellRange {
    pub lo: Cell,
    pub hi: Cell,
    pub step: Cell,
}

impl CellRange {
    pub fn new(lo: Cell, hi: Cell) -> Self {
        CellRange {
            lo,
            hi,
            step: [1; 3],
        }
    }

    pub fn with_step(mut self, step: Cell) -> Self {
        self.step = step;
        self
    }

    /// Number of visited indices along `axis`.
    pub fn count(&self, axis: usize) -> usize {
        let span = (self.hi[axis] - self.lo[axis]).max(0);
        ((span + self.step[axis] - 1) / self.step[axis]) as usize
    }

    /// Extent of the range along `axis`, ignoring the stride.
    pub fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis]).max(0) as usize
    }

    pub fn len(&self) -> usize {
        (0..3).map(|a| self.count(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether `c` lies inside the bounds (the stride is ignored).
    pub fn contains(&self, c: &Cell) -> bool {
        (0..3).all(|a| self.lo[a] <= c[a] && c[a] < self.hi[a])
    }

    pub fn intersects(&self, other: &CellRange) -> bool {
        (0..3).all(|a| self.lo[a].max(other.lo[a]) < self.hi[a].min(other.hi[a]))
    }

    pub fn iter(&self) -> impl Iterator<Item = Cell> + '_ {
        let r = *self;
        (0..r.count(2)).flat_map(move |k| {
            (0..r.count(1)).flat_map(move |j| {
                (0..r.count(0)).map(move |i| {
                    [
                        r.lo[0] + i as i64 * r.step[0],
                        r.lo[1] + j as i64 * r.step[1],
                        r.lo[2] + k as i64 * r.step[2],
                    ]
                })
            })
        })
    }
}

/// Splits a face range into `r^(D-1)` segments, numbered lexicographically over the
/// transverse axes with the lowest axis fastest.
pub fn split_interface(
    range: &CellRange,
    dir: Direction,
    r: usize,
    dim: usize,
) -> Result<Vec<CellRange>> {
    let axes: Vec<usize> = transverse_axes(dir.axis(), dim).collect();
    for &a in &axes {
        if !range.extent(a).is_multiple_of(r) {
            return Err(Error::NotDivisible {
                extent: range.extent(a),
                ratio: r,
            });
        }
    }
    let count = r.pow(axes.len() as u32);
    Ok((0..count)
        .map(|s| {
            let mut seg = *range;
            let mut rest = s;
            for &a in &axes {
                let piece = (range.extent(a) / r) as i64;
                let k = (rest % r) as i64;
                rest /= r;
                seg.lo[a] = range.lo[a] + k * piece;
                seg.hi[a] = seg.lo[a] + piece;
            }
            seg
        })
        .collect())
}

/// Scalar field on one block and one multigrid level.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockField {
    block: BlockId,
    dim: usize,
    cells: usize,
    mg_level: usize,
    strides: [usize; 3],
    data: Vec<f64>,
}

impl BlockField {
    /// A zero field with `cells` interior cells per dimension.
    pub fn new(block: BlockId, dim: usize, cells: usize, mg_level: usize) -> Self {
        let ext = cells + 2;
        let strides = [1, ext, if dim == 3 { ext * ext } else { 0 }];
        let len = ext.pow(dim as u32);
        BlockField {
            block,
            dim,
            cells,
            mg_level,
            strides,
            data: vec![0.0; len],
        }
    }

    pub fn block(&self) -> BlockId {
        self.block
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior cells per dimension on this multigrid level.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn mg_level(&self) -> usize {
        self.mg_level
    }

    pub fn strides(&self) -> [usize; 3] {
        self.strides
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, c: Cell) -> usize {
        debug_assert!(self.full_range().contains(&c), "{c:?} outside field");
        c[0] as usize * self.strides[0]
            + c[1] as usize * self.strides[1]
            + c[2] as usize * self.strides[2]
    }

    #[inline]
    pub fn get(&self, c: Cell) -> f64 {
        self.data[self.idx(c)]
    }

    #[inline]
    pub fn set(&mut self, c: Cell, v: f64) {
        let i = self.idx(c);
        self.data[i] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    fn upper(&self) -> i64 {
        self.cells as i64
    }

    /// All cells including ghosts.
    pub fn full_range(&self) -> CellRange {
        let hi = self.upper() + 2;
        CellRange::new([0; 3], [hi, hi, if self.dim == 3 { hi } else { 1 }])
    }

    /// The interior cells, excluding ghosts.
    pub fn interior_range(&self) -> CellRange {
        let hi = self.upper() + 1;
        let z = if self.dim == 3 { (1, hi) } else { (0, 1) };
        CellRange::new([1, 1, z.0], [hi, hi, z.1])
    }

    /// The layer of interior cells abutting the face in direction `dir`.
    pub fn interface_range(&self, dir: Direction) -> CellRange {
        let mut r = self.interior_range();
        let a = dir.axis();
        let layer = if dir.is_positive() { self.upper() } else { 1 };
        r.lo[a] = layer;
        r.hi[a] = layer + 1;
        r
    }

    /// The full ghost face in direction `dir`, without edge and corner ghosts.
    pub fn ghost_range(&self, dir: Direction) -> CellRange {
        let mut r = self.interior_range();
        let a = dir.axis();
        let layer = if dir.is_positive() { self.upper() + 1 } else { 0 };
        r.lo[a] = layer;
        r.hi[a] = layer + 1;
        r
    }

    /// Ghost cells written by a message of the given refinement case.
    ///
    /// A coarse block receiving fine-to-coarse data stores it into one segment of its
    /// ghost face; every other case fills the whole face.
    pub fn ghost_segment_range(
        &self,
        dir: Direction,
        case: NeighborCase,
        segment_index: usize,
    ) -> Result<CellRange> {
        let face = self.ghost_range(dir);
        match case {
            NeighborCase::F2C => {
                let segs = split_interface(&face, dir, crate::RATIO, self.dim)?;
                segs.get(segment_index)
                    .copied()
                    .ok_or(Error::InvalidSegment {
                        index: segment_index,
                        count: segs.len(),
                    })
            }
            _ if segment_index == 0 => Ok(face),
            _ => Err(Error::InvalidSegment {
                index: segment_index,
                count: 1,
            }),
        }
    }

    /// Maximum absolute interior difference to another field of the same shape.
    pub fn max_interior_diff(&self, other: &BlockField) -> f64 {
        self.interior_range()
            .iter()
            .map(|c| (self.get(c) - other.get(c)).abs())
            .fold(0.0, f64::max)
    }
}

/// Physical placement of one block on one multigrid level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub dim: usize,
    /// Cell width per dimension.
    pub h: [f64; 3],
    /// Lower corner of the block.
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(forest: &Blockforest, block: &BlockId, mg_level: usize) -> Self {
        Geometry {
            dim: forest.dim(),
            h: cell_width(forest, block, mg_level),
            origin: forest.block_box(block).lo,
        }
    }

    /// Physical center of a raw cell index; ghost indices extrapolate outward.
    pub fn center(&self, c: Cell) -> [f64; 3] {
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = self.origin[d] + (c[d] as f64 - 0.5) * self.h[d];
        }
        x
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }
}

/// Cell width of a block on a multigrid level.
pub fn cell_width(forest: &Blockforest, block: &BlockId, mg_level: usize) -> [f64; 3] {
    let ext = forest.level_extent(block.level);
    let cells = (forest.cells_per_block() >> mg_level) as f64;
    let mut h = [0.0; 3];
    for d in 0..forest.dim() {
        h[d] = forest.domain().extent(d) / (ext[d] as f64 * cells);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockforest::{Aabb, RefineStep};

    fn field(dim: usize, n: usize, mg: usize) -> BlockField {
        BlockField::new(BlockId::new(0, [0; 3]), dim, n >> mg, mg)
    }

    #[test]
    fn interior_ranges() {
        let f = field(2, 4, 0);
        assert_eq!(f.interior_range(), CellRange::new([1, 1, 0], [5, 5, 1]));
        assert_eq!(field(3, 8, 1).interior_range().len(), 64);
        assert_eq!(field(3, 4, 0).interior_range().len(), 64);
    }

    #[test]
    fn interface_ranges() {
        let f = field(2, 4, 0);
        let w = f.interface_range(Direction::W);
        assert_eq!(w, CellRange::new([1, 1, 0], [2, 5, 1]));
        assert_eq!(w.len(), 4);
        let n = f.interface_range(Direction::N);
        assert_eq!(n, CellRange::new([1, 4, 0], [5, 5, 1]));
        let f3 = field(3, 4, 0);
        let w3 = f3.interface_range(Direction::W);
        assert_eq!((w3.count(0), w3.count(1), w3.count(2)), (1, 4, 4));
    }

    #[test]
    fn split_examples() {
        let f = field(2, 4, 0);
        let segs = split_interface(&f.interface_range(Direction::W), Direction::W, 2, 2).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0], CellRange::new([1, 1, 0], [2, 3, 1]));
        assert_eq!(segs[1], CellRange::new([1, 3, 0], [2, 5, 1]));

        let f3 = field(3, 4, 0);
        let segs = split_interface(&f3.interface_range(Direction::W), Direction::W, 2, 3).unwrap();
        assert_eq!(segs.len(), 4);
        assert!(segs.iter().all(|s| s.len() == 4));
        // y fastest, then z
        assert_eq!(segs[1].lo, [1, 3, 1]);
        assert_eq!(segs[2].lo, [1, 1, 3]);

        let f2 = field(2, 2, 0);
        let segs = split_interface(&f2.interface_range(Direction::S), Direction::S, 2, 2).unwrap();
        assert_eq!(segs.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![1, 1]);

        let odd = field(2, 3, 0);
        assert!(matches!(
            split_interface(&odd.interface_range(Direction::W), Direction::W, 2, 2),
            Err(Error::NotDivisible { extent: 3, ratio: 2 })
        ));
    }

    #[test]
    fn split_is_a_disjoint_cover() {
        for dim in [2, 3] {
            for n in [4, 8, 16] {
                let f = field(dim, n, 0);
                for &dir in Direction::cardinal(dim) {
                    let face = f.interface_range(dir);
                    let segs = split_interface(&face, dir, 2, dim).unwrap();
                    let mut seen = std::collections::HashSet::new();
                    for s in &segs {
                        for c in s.iter() {
                            assert!(face.contains(&c));
                            assert!(seen.insert(c), "overlap at {c:?}");
                        }
                    }
                    assert_eq!(seen.len(), face.len());
                }
            }
        }
    }

    #[test]
    fn ghost_segments() {
        let f = field(2, 4, 0);
        let lower = f.ghost_segment_range(Direction::W, NeighborCase::F2C, 0).unwrap();
        assert_eq!(lower, CellRange::new([0, 1, 0], [1, 3, 1]));
        let full = f.ghost_segment_range(Direction::E, NeighborCase::C2F, 0).unwrap();
        assert_eq!(full, CellRange::new([5, 1, 0], [6, 5, 1]));
        let f3 = field(3, 4, 0);
        let top = f3.ghost_segment_range(Direction::W, NeighborCase::F2C, 3).unwrap();
        assert_eq!(top, CellRange::new([0, 3, 3], [1, 5, 5]));
        assert!(f3.ghost_segment_range(Direction::W, NeighborCase::F2C, 4).is_err());
        assert!(f3.ghost_segment_range(Direction::W, NeighborCase::SameLevel, 1).is_err());

        for dim in [2, 3] {
            let f = field(dim, 8, 0);
            for &dir in Direction::cardinal(dim) {
                for case in [NeighborCase::SameLevel, NeighborCase::C2F] {
                    let g = f.ghost_segment_range(dir, case, 0).unwrap();
                    assert!(!g.intersects(&f.interior_range()));
                }
                for s in 0..1 << (dim - 1) {
                    let g = f.ghost_segment_range(dir, NeighborCase::F2C, s).unwrap();
                    assert!(!g.intersects(&f.interior_range()));
                }
            }
        }
    }

    #[test]
    fn widths() {
        let forest = Blockforest::build(
            3,
            &[1, 1, 1],
            Aabb::unit(),
            16,
            &[
                RefineStep::RefineAll,
                RefineStep::RefineAll,
                RefineStep::region([0.25; 3], [0.75; 3]),
            ],
        )
        .unwrap();
        let l2 = *forest.leaves().iter().find(|b| b.level == 2).unwrap();
        let l3 = *forest.leaves().iter().find(|b| b.level == 3).unwrap();
        assert_eq!(cell_width(&forest, &l2, 0), [1.0 / 64.0; 3]);
        assert_eq!(cell_width(&forest, &l2, 1), [1.0 / 32.0; 3]);
        assert_eq!(cell_width(&forest, &l3, 0), [1.0 / 128.0; 3]);
        let g = Geometry::new(&forest, &l3, 0);
        let c = g.center([1, 1, 1]);
        let o = forest.block_box(&l3).lo;
        for d in 0..3 {
            assert!((c[d] - o[d] - 0.5 / 128.0).abs() < 1e-15);
        }
    }

    #[test]
    fn strided_iteration() {
        let r = CellRange::new([0, 1, 1], [1, 5, 5]).with_step([1, 2, 2]);
        let cells: Vec<_> = r.iter().collect();
        assert_eq!(cells, vec![[0, 1, 1], [0, 3, 1], [0, 1, 3], [0, 3, 3]]);
    }
}
