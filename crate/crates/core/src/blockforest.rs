//! Forest of octree leaf blocks over a cuboid domain.
//!
//! The domain is split into `root_dims` equally sized root blocks, each of which is
//! the root of an octree (a quadtree in 2D). Leaves are addressed by their level and
//! their integer position in the lattice of all blocks on that level, so that the
//! whole forest can be reasoned about with exact integer arithmetic.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Refinement ratio between adjacent octree levels.
pub const RATIO: usize = 2;

/// Deepest octree level the forest will create.
pub const MAX_LEVEL: u32 = 20;

/// Cardinal directions. `W/E` are -x/+x, `S/N` are -y/+y and `B/T` are -z/+z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    W,
    E,
    S,
    N,
    B,
    T,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::W,
        Direction::E,
        Direction::S,
        Direction::N,
        Direction::B,
        Direction::T,
    ];

    /// The `2 * dim` cardinal directions of a `dim`-dimensional grid.
    pub fn cardinal(dim: usize) -> &'static [Direction] {
        &Self::ALL[..2 * dim]
    }

    pub fn from_axis(axis: usize, positive: bool) -> Direction {
        Self::ALL[2 * axis + usize::from(positive)]
    }

    pub fn axis(self) -> usize {
        self as usize / 2
    }

    pub fn is_positive(self) -> bool {
        self as usize % 2 == 1
    }

    pub fn sign(self) -> i64 {
        if self.is_positive() {
            1
        } else {
            -1
        }
    }

    pub fn opposite(self) -> Direction {
        Self::from_axis(self.axis(), !self.is_positive())
    }

    /// Unit offset of this direction as a 3-component index vector.
    pub fn offset(self) -> [i64; 3] {
        let mut o = [0; 3];
        o[self.axis()] = self.sign();
        o
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Address of a block: octree level plus lattice position on that level.
///
/// Unused trailing coordinates (the z coordinate in 2D) are zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId {
    pub level: u32,
    pub coords: [u64; 3],
}

impl BlockId {
    pub fn new(level: u32, coords: [u64; 3]) -> Self {
        BlockId { level, coords }
    }

    pub fn parent(&self) -> Option<BlockId> {
        (self.level > 0).then(|| BlockId {
            level: self.level - 1,
            coords: self.coords.map(|c| c / 2),
        })
    }

    /// The ancestor on `level` (which must not exceed `self.level`).
    pub fn ancestor(&self, level: u32) -> BlockId {
        let shift = self.level - level;
        BlockId {
            level,
            coords: self.coords.map(|c| c >> shift),
        }
    }

    /// The `2^dim` children, ordered with the x bit fastest.
    pub fn children(&self, dim: usize) -> impl Iterator<Item = BlockId> + '_ {
        (0..1u64 << dim).map(move |mask| {
            let mut coords = [0; 3];
            for (d, c) in coords.iter_mut().enumerate() {
                *c = if d < dim {
                    2 * self.coords[d] + ((mask >> d) & 1)
                } else {
                    0
                };
            }
            BlockId {
                level: self.level + 1,
                coords,
            }
        })
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L{}({},{},{})",
            self.level, self.coords[0], self.coords[1], self.coords[2]
        )
    }
}

/// Axis-aligned box in physical coordinates. Unused axes are ignored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Aabb {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Aabb { lo, hi }
    }

    pub fn unit() -> Self {
        Aabb::new([0.0; 3], [1.0; 3])
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    /// Closed-box intersection test on the first `dim` axes.
    pub fn intersects(&self, other: &Aabb, dim: usize) -> bool {
        (0..dim).all(|d| self.lo[d] <= other.hi[d] && other.lo[d] <= self.hi[d])
    }

    fn validate(&self, dim: usize) -> std::result::Result<(), String> {
        for d in 0..dim {
            let (lo, hi) = (self.lo[d], self.hi[d]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(format!("axis {d} has non-finite bounds [{lo}, {hi}]"));
            }
            if lo >= hi {
                return Err(format!("axis {d} has empty extent [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}

/// One step of a refinement specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RefineStep {
    /// Refine every current leaf once.
    RefineAll,
    /// Refine every leaf whose cell-center bounding box intersects the region.
    RefineRegion { lo: [f64; 3], hi: [f64; 3] },
}

impl RefineStep {
    pub fn region(lo: [f64; 3], hi: [f64; 3]) -> Self {
        RefineStep::RefineRegion { lo, hi }
    }
}

/// Refinement relation of a face neighbor relative to the block being queried.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NeighborCase {
    SameLevel,
    /// The neighbor is one level finer: data flows coarse-to-fine towards it.
    C2F,
    /// The neighbor is one level coarser: data flows fine-to-coarse towards it.
    F2C,
}

impl NeighborCase {
    pub fn as_str(self) -> &'static str {
        match self {
            NeighborCase::SameLevel => "same-level",
            NeighborCase::C2F => "c2f",
            NeighborCase::F2C => "f2c",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeighborInfo {
    pub neighbor: BlockId,
    pub case: NeighborCase,
    pub segment_index: usize,
}

/// Number of potential neighbors in one cardinal direction.
///
/// A block has `r^(d-1)` neighbors towards a finer level and one otherwise.
pub fn n_neigh(l_curr: u32, l_neigh: u32, r: usize, d: usize) -> Result<usize> {
    if l_curr.abs_diff(l_neigh) > 1 {
        return Err(Error::InvalidForest(format!(
            "levels {l_curr} and {l_neigh} differ by more than one"
        )));
    }
    Ok(if l_curr < l_neigh {
        r.pow(d as u32 - 1)
    } else {
        1
    })
}

/// Transverse axes of a face normal to `axis`, in ascending order.
pub fn transverse_axes(axis: usize, dim: usize) -> impl Iterator<Item = usize> {
    (0..dim).filter(move |&a| a != axis)
}

/// Segment of the coarse block's face covered by the fine block `fine`.
///
/// Segments are numbered lexicographically over the transverse axes with the
/// lowest axis fastest.
pub fn segment_of(fine: &BlockId, coarse: &BlockId, axis: usize, dim: usize) -> usize {
    transverse_axes(axis, dim)
        .enumerate()
        .map(|(k, t)| ((fine.coords[t] - 2 * coarse.coords[t]) as usize) << k)
        .sum()
}

/// Owner rank of each leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankMap {
    n_ranks: usize,
    owner: BTreeMap<BlockId, usize>,
}

impl RankMap {
    /// A hand-made assignment; every owner must be below `n_ranks`.
    pub fn from_owners(n_ranks: usize, owner: BTreeMap<BlockId, usize>) -> Result<Self> {
        if n_ranks == 0 || owner.values().any(|&r| r >= n_ranks) {
            return Err(Error::InvalidRankCount);
        }
        Ok(RankMap { n_ranks, owner })
    }

    pub fn n_ranks(&self) -> usize {
        self.n_ranks
    }

    pub fn owner(&self, block: &BlockId) -> Option<usize> {
        self.owner.get(block).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BlockId, &usize)> {
        self.owner.iter()
    }

    /// Number of blocks owned by each rank.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_ranks];
        for &r in self.owner.values() {
            counts[r] += 1;
        }
        counts
    }
}

/// The forest of leaf blocks. Immutable once built.
#[derive(Clone, Debug)]
pub struct Blockforest {
    dim: usize,
    root_dims: [u64; 3],
    domain: Aabb,
    cells_per_block: usize,
    leaves: Vec<BlockId>,
    index: HashMap<BlockId, usize>,
    max_level: u32,
}

impl Blockforest {
    /// Builds a forest by applying `steps` in order to the root blocks. The forest is
    /// re-balanced after every step by ripple refinement.
    pub fn build(
        dim: usize,
        root_dims: &[u64],
        domain: Aabb,
        cells_per_block: usize,
        steps: &[RefineStep],
    ) -> Result<Self> {
        let root = Self::validate_header(dim, root_dims, &domain, cells_per_block)?;
        let mut leaves: BTreeSet<BlockId> = BTreeSet::new();
        for z in 0..root[2] {
            for y in 0..root[1] {
                for x in 0..root[0] {
                    leaves.insert(BlockId::new(0, [x, y, z]));
                }
            }
        }
        let mut forest = Self::from_set(dim, root, domain, cells_per_block, leaves);

        for step in steps {
            let selected: Vec<BlockId> = match step {
                RefineStep::RefineAll => forest.leaves.clone(),
                RefineStep::RefineRegion { lo, hi } => {
                    let region = Aabb::new(*lo, *hi);
                    region.validate(dim).map_err(Error::MalformedRegion)?;
                    forest
                        .leaves
                        .iter()
                        .copied()
                        .filter(|b| forest.cell_center_box(b).intersects(&region, dim))
                        .collect()
                }
            };
            forest = forest.refined(&selected)?;
            forest = forest.balanced()?;
        }
        Ok(forest)
    }

    /// Builds a forest from an explicit leaf set. The set must tile the domain; it is
    /// not required to be balanced.
    pub fn from_leaves(
        dim: usize,
        root_dims: &[u64],
        domain: Aabb,
        cells_per_block: usize,
        leaves: impl IntoIterator<Item = BlockId>,
    ) -> Result<Self> {
        let root = Self::validate_header(dim, root_dims, &domain, cells_per_block)?;
        let set: BTreeSet<BlockId> = leaves.into_iter().collect();
        if set.is_empty() {
            return Err(Error::InvalidForest("no leaves".into()));
        }
        let max_level = set.iter().map(|b| b.level).max().unwrap_or(0);
        let mut volume: u128 = 0;
        for b in &set {
            if b.level > MAX_LEVEL {
                return Err(Error::InvalidForest(format!("{b} exceeds the maximum level")));
            }
            for d in 0..3 {
                let ext = if d < dim { root[d] << b.level } else { 1 };
                if b.coords[d] >= ext {
                    return Err(Error::InvalidForest(format!("{b} lies outside the domain")));
                }
            }
            if (0..b.level).any(|l| set.contains(&b.ancestor(l))) {
                return Err(Error::InvalidForest(format!("{b} overlaps an ancestor leaf")));
            }
            volume += 1u128 << (dim as u32 * (max_level - b.level));
        }
        let expected: u128 = (0..dim).map(|d| root[d] as u128).product::<u128>()
            << (dim as u32 * max_level);
        if volume != expected {
            return Err(Error::InvalidForest(format!(
                "leaves cover {volume} of {expected} lattice cells"
            )));
        }
        Ok(Self::from_set(dim, root, domain, cells_per_block, set))
    }

    fn validate_header(
        dim: usize,
        root_dims: &[u64],
        domain: &Aabb,
        cells_per_block: usize,
    ) -> Result<[u64; 3]> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidForest(format!("dimension must be 2 or 3, got {dim}")));
        }
        if cells_per_block < 3 {
            return Err(Error::TooFewCells(cells_per_block));
        }
        if root_dims.len() != dim {
            return Err(Error::InvalidForest(format!(
                "expected {dim} root dimensions, got {}",
                root_dims.len()
            )));
        }
        if root_dims.contains(&0) {
            return Err(Error::EmptyDomain("a root dimension is zero".into()));
        }
        domain.validate(dim).map_err(Error::EmptyDomain)?;
        let mut root = [1; 3];
        root[..dim].copy_from_slice(root_dims);
        Ok(root)
    }

    fn from_set(
        dim: usize,
        root_dims: [u64; 3],
        domain: Aabb,
        cells_per_block: usize,
        set: BTreeSet<BlockId>,
    ) -> Self {
        let leaves: Vec<BlockId> = set.into_iter().collect();
        let index = leaves.iter().enumerate().map(|(i, b)| (*b, i)).collect();
        let max_level = leaves.iter().map(|b| b.level).max().unwrap_or(0);
        Blockforest {
            dim,
            root_dims,
            domain,
            cells_per_block,
            leaves,
            index,
            max_level,
        }
    }

    fn refined(&self, selected: &[BlockId]) -> Result<Self> {
        if selected.is_empty() {
            return Ok(self.clone());
        }
        let mut set: BTreeSet<BlockId> = self.leaves.iter().copied().collect();
        for b in selected {
            if b.level >= MAX_LEVEL {
                return Err(Error::InvalidForest(format!(
                    "refinement beyond level {MAX_LEVEL}"
                )));
            }
            set.remove(b);
            set.extend(b.children(self.dim));
        }
        Ok(Self::from_set(
            self.dim,
            self.root_dims,
            self.domain,
            self.cells_per_block,
            set,
        ))
    }

    /// Ripple refinement: refine any leaf with a face neighbor two or more levels finer
    /// until no such leaf remains.
    fn balanced(self) -> Result<Self> {
        let mut forest = self;
        loop {
            let coarse: BTreeSet<BlockId> = forest
                .check_balance()
                .into_iter()
                .map(|(a, b)| if a.level < b.level { a } else { b })
                .collect();
            if coarse.is_empty() {
                return Ok(forest);
            }
            let coarse: Vec<BlockId> = coarse.into_iter().collect();
            forest = forest.refined(&coarse)?;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root_dims(&self) -> [u64; 3] {
        self.root_dims
    }

    pub fn domain(&self) -> &Aabb {
        &self.domain
    }

    pub fn cells_per_block(&self) -> usize {
        self.cells_per_block
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Leaves in ascending `BlockId` order. Per-block data elsewhere in the crate is
    /// stored in this order.
    pub fn leaves(&self) -> &[BlockId] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn contains(&self, block: &BlockId) -> bool {
        self.index.contains_key(block)
    }

    pub fn index_of(&self, block: &BlockId) -> Option<usize> {
        self.index.get(block).copied()
    }

    /// Number of blocks per dimension on `level`.
    pub fn level_extent(&self, level: u32) -> [u64; 3] {
        let mut ext = [1; 3];
        for d in 0..self.dim {
            ext[d] = self.root_dims[d] << level;
        }
        ext
    }

    pub fn leaves_per_level(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for b in &self.leaves {
            *counts.entry(b.level).or_insert(0) += 1;
        }
        counts
    }

    /// Physical box of a block.
    pub fn block_box(&self, block: &BlockId) -> Aabb {
        let ext = self.level_extent(block.level);
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for d in 0..self.dim {
            let w = self.domain.extent(d) / ext[d] as f64;
            lo[d] = self.domain.lo[d] + block.coords[d] as f64 * w;
            hi[d] = self.domain.lo[d] + (block.coords[d] + 1) as f64 * w;
        }
        Aabb::new(lo, hi)
    }

    /// Bounding box of the cell centers of a block.
    pub fn cell_center_box(&self, block: &BlockId) -> Aabb {
        let mut b = self.block_box(block);
        for d in 0..self.dim {
            let h = b.extent(d) / self.cells_per_block as f64;
            b.lo[d] += 0.5 * h;
            b.hi[d] -= 0.5 * h;
        }
        b
    }

    /// Whether the block's face in direction `dir` lies on the domain boundary.
    pub fn is_boundary_face(&self, block: &BlockId, dir: Direction) -> bool {
        let a = dir.axis();
        if dir.is_positive() {
            block.coords[a] + 1 == self.level_extent(block.level)[a]
        } else {
            block.coords[a] == 0
        }
    }

    /// All leaves sharing a face (of positive measure) with `block` in direction `dir`,
    /// regardless of their level.
    pub fn adjacent_leaves(&self, block: &BlockId, dir: Direction) -> Result<Vec<BlockId>> {
        if !self.contains(block) {
            return Err(Error::UnknownBlock(*block));
        }
        if dir.axis() >= self.dim {
            return Err(Error::InvalidForest(format!(
                "direction {dir} does not exist in {}D",
                self.dim
            )));
        }
        if self.is_boundary_face(block, dir) {
            return Ok(Vec::new());
        }
        let a = dir.axis();
        let mut same = *block;
        same.coords[a] = (same.coords[a] as i64 + dir.sign()) as u64;
        if self.contains(&same) {
            return Ok(vec![same]);
        }
        for l in (0..block.level).rev() {
            let anc = same.ancestor(l);
            if self.contains(&anc) {
                return Ok(vec![anc]);
            }
        }
        // The neighbor region is subdivided: collect descendants touching the face.
        let mut out = Vec::new();
        let mut stack = vec![same];
        while let Some(b) = stack.pop() {
            if b.level >= self.max_level {
                continue;
            }
            for child in b.children(self.dim) {
                // Facing side of the neighbor region is its low side when we look in a
                // positive direction.
                let low_side = child.coords[a] % 2 == 0;
                if low_side != dir.is_positive() {
                    continue;
                }
                if self.contains(&child) {
                    out.push(child);
                } else {
                    stack.push(child);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Face neighbors of a leaf in one direction, assuming a 2:1-balanced forest.
    ///
    /// Finer neighbors are returned ordered by segment index.
    pub fn neighbors(&self, block: &BlockId, dir: Direction) -> Result<Vec<NeighborInfo>> {
        let adjacent = self.adjacent_leaves(block, dir)?;
        let mut out = Vec::with_capacity(adjacent.len());
        for nb in adjacent {
            let case = match nb.level as i64 - block.level as i64 {
                0 => NeighborCase::SameLevel,
                1 => NeighborCase::C2F,
                -1 => NeighborCase::F2C,
                _ => return Err(Error::BalanceViolation(*block, nb)),
            };
            let segment_index = match case {
                NeighborCase::C2F => segment_of(&nb, block, dir.axis(), self.dim),
                _ => 0,
            };
            out.push(NeighborInfo {
                neighbor: nb,
                case,
                segment_index,
            });
        }
        out.sort_by_key(|n| n.segment_index);
        Ok(out)
    }

    /// Face-adjacent leaf pairs whose levels differ by more than one. Each pair is
    /// reported once, smaller id first.
    pub fn check_balance(&self) -> Vec<(BlockId, BlockId)> {
        let mut pairs = BTreeSet::new();
        for b in &self.leaves {
            for &dir in Direction::cardinal(self.dim) {
                // Leaves are known to exist and directions are valid here.
                for nb in self.adjacent_leaves(b, dir).unwrap_or_default() {
                    if b.level.abs_diff(nb.level) > 1 {
                        pairs.insert(if *b < nb { (*b, nb) } else { (nb, *b) });
                    }
                }
            }
        }
        pairs.into_iter().collect()
    }

    /// Sum of leaf volumes in units of the finest-level lattice cell.
    pub fn lattice_volume(&self) -> u128 {
        self.leaves
            .iter()
            .map(|b| 1u128 << (self.dim as u32 * (self.max_level - b.level)))
            .sum()
    }

    /// Lattice cells of the whole domain at the finest level.
    pub fn domain_lattice_volume(&self) -> u128 {
        (0..self.dim)
            .map(|d| self.root_dims[d] as u128)
            .product::<u128>()
            << (self.dim as u32 * self.max_level)
    }

    /// Morton key of a leaf's lower corner on the finest-level lattice.
    pub fn morton_key(&self, block: &BlockId) -> u128 {
        let shift = self.max_level - block.level;
        let mut key = 0u128;
        for bit in 0..42 {
            for d in 0..self.dim {
                let c = block.coords[d] << shift;
                key |= (((c >> bit) & 1) as u128) << (bit * self.dim as u32 + d as u32);
            }
        }
        key
    }

    /// Assigns leaves to `n_ranks` ranks: contiguous chunks along the Morton curve,
    /// chunk sizes differing by at most one.
    pub fn assign_ranks(&self, n_ranks: usize) -> Result<RankMap> {
        if n_ranks < 1 {
            return Err(Error::InvalidRankCount);
        }
        let mut order = self.leaves.clone();
        order.sort_by_key(|b| self.morton_key(b));
        let base = order.len() / n_ranks;
        let extra = order.len() % n_ranks;
        let mut owner = BTreeMap::new();
        let mut it = order.into_iter();
        for rank in 0..n_ranks {
            let take = base + usize::from(rank < extra);
            for b in it.by_ref().take(take) {
                owner.insert(b, rank);
            }
        }
        Ok(RankMap { n_ranks, owner })
    }
}

/// Set of distinct neighbors of a leaf across all directions.
pub fn neighbor_set(forest: &Blockforest, block: &BlockId) -> Result<HashSet<BlockId>> {
    let mut set = HashSet::new();
    for &dir in Direction::cardinal(forest.dim()) {
        set.extend(forest.adjacent_leaves(block, dir)?);
    }
    Ok(set)
}
