//! Inter- and extrapolation at refinement interfaces.
//!
//! Fine-to-coarse (F2C) data is the plain average of the `r^D` fine cells that cover
//! one coarse ghost cell. Coarse-to-fine (C2F) data is extrapolated from the coarse
//! block's interior with tensor-product Lagrange stages:
//!
//! 1. along `-d_comm` (into the sending block) to the depth of the fine ghost cells,
//! 2. along the 2D orthogonal axis to the two fine positions at `∓h/4`,
//! 3. in 3D, along the 3D orthogonal axis to `∓h/4` again.
//!
//! Bases that would fall into the sender's ghost layer are replaced by the interior
//! cell at `-2·o`, which changes the base positions on that axis. All kernels read
//! the sender's interior only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blockforest::{transverse_axes, Direction, RATIO};
use crate::error::{Error, Result};
use crate::fields::{add, scale, BlockField, Cell, CellRange};

/// Order of the coarse-to-fine scheme. Fine-to-coarse is always linear.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum SchemeOrder {
    Constant,
    Linear,
    #[default]
    Quadratic,
}

impl SchemeOrder {
    pub const ALL: [SchemeOrder; 3] = [
        SchemeOrder::Constant,
        SchemeOrder::Linear,
        SchemeOrder::Quadratic,
    ];

    /// Number of Lagrange bases per axis.
    pub fn base_count(self) -> usize {
        match self {
            SchemeOrder::Constant => 1,
            SchemeOrder::Linear => 2,
            SchemeOrder::Quadratic => 3,
        }
    }

    /// Cells per dimension a sending block needs so that every base, including
    /// remapped ones at `-2o`, stays interior.
    pub fn min_cells(self) -> usize {
        match self {
            SchemeOrder::Constant => 1,
            SchemeOrder::Linear | SchemeOrder::Quadratic => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeOrder::Constant => "constant",
            SchemeOrder::Linear => "linear",
            SchemeOrder::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for SchemeOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" | "0" => Ok(SchemeOrder::Constant),
            "linear" | "1" => Ok(SchemeOrder::Linear),
            "quadratic" | "2" => Ok(SchemeOrder::Quadratic),
            other => Err(Error::config(
                "scheme",
                format!("unknown scheme '{other}' (expected constant, linear or quadratic)"),
            )),
        }
    }
}

/// Lagrange basis weights of `positions` evaluated at `x`.
pub fn lagrange_weights(positions: &[f64], x: f64) -> Result<Vec<f64>> {
    if positions.is_empty() {
        return Err(Error::DegeneratePositions);
    }
    for (i, a) in positions.iter().enumerate() {
        if positions[i + 1..].contains(a) {
            return Err(Error::DegeneratePositions);
        }
    }
    Ok(positions
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &xj)| (x - xj) / (xi - xj))
                .product()
        })
        .collect())
}

/// Averages the `2^dim` fine values covering one coarse cell.
pub fn f2c_reduce(values: &[f64], dim: usize) -> Result<f64> {
    let expected = RATIO.pow(dim as u32);
    if values.len() != expected {
        return Err(Error::WrongValueCount {
            expected,
            got: values.len(),
        });
    }
    Ok(values.iter().sum::<f64>() / expected as f64)
}

/// Communication direction plus the orthogonal directions used by the C2F stages.
///
/// `o2d` is the lowest-numbered axis other than the communication axis and `o3d` the
/// remaining one. The `plus` directions always point along the positive axis, so the
/// sender and the receiver of a message agree on the frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrthogonalFrame {
    pub d_comm: Direction,
    pub o2d_plus: Direction,
    pub o2d_minus: Direction,
    pub o3d_plus: Option<Direction>,
    pub o3d_minus: Option<Direction>,
}

impl OrthogonalFrame {
    pub fn new(d_comm: Direction, dim: usize) -> Self {
        let mut axes = transverse_axes(d_comm.axis(), dim);
        let a2 = axes.next().expect("at least two dimensions");
        let a3 = axes.next();
        OrthogonalFrame {
            d_comm,
            o2d_plus: Direction::from_axis(a2, true),
            o2d_minus: Direction::from_axis(a2, false),
            o3d_plus: a3.map(|a| Direction::from_axis(a, true)),
            o3d_minus: a3.map(|a| Direction::from_axis(a, false)),
        }
    }

    /// The orthogonal set `C \ {d_comm, -d_comm}`.
    pub fn orthogonal(&self) -> Vec<Direction> {
        let mut o = vec![self.o2d_minus, self.o2d_plus];
        o.extend(self.o3d_minus);
        o.extend(self.o3d_plus);
        o
    }
}

/// Offset to an orthogonal base: `o` itself if that cell is interior, `-2·o` otherwise.
pub fn remap_orthogonal(cell: Cell, o: Direction, interior: &CellRange) -> Cell {
    let off = o.offset();
    if interior.contains(&add(cell, off)) {
        off
    } else {
        scale(off, -2)
    }
}

/// Which orthogonal base, if any, is remapped on one transverse axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AxisCase {
    Regular,
    DownwindRemapped,
    UpwindRemapped,
}

impl AxisCase {
    fn index(self) -> usize {
        self as usize
    }
}

/// Remapping case of `cell` along the axis of `plus`.
pub fn axis_case(cell: Cell, plus: Direction, interior: &CellRange) -> AxisCase {
    let minus = plus.opposite();
    if remap_orthogonal(cell, minus, interior) != minus.offset() {
        AxisCase::DownwindRemapped
    } else if remap_orthogonal(cell, plus, interior) != plus.offset() {
        AxisCase::UpwindRemapped
    } else {
        AxisCase::Regular
    }
}

/// Depth of the fine ghost cells relative to a coarse interface cell center, in
/// coarse cell widths along `-d_comm`.
const FINE_GHOST_DEPTH: f64 = -0.25;
/// Transverse positions of the downwind and upwind fine cells, in coarse widths.
const FINE_TARGETS: [f64; 2] = [-0.25, 0.25];

/// Base offsets (in cells along one axis) and their weights for each target.
#[derive(Clone, Debug)]
struct AxisStencil {
    offsets: Vec<i64>,
    weights: [Vec<f64>; 2],
}

impl AxisStencil {
    fn new(offsets: Vec<i64>) -> Self {
        Self::per_target(offsets.clone(), [offsets.clone(), offsets])
    }

    /// Each target uses its own subset of `offsets`; unused offsets get weight 0.
    fn per_target(offsets: Vec<i64>, bases: [Vec<i64>; 2]) -> Self {
        let weights = [0, 1].map(|t| {
            let pos: Vec<f64> = bases[t].iter().map(|&o| o as f64).collect();
            let w = lagrange_weights(&pos, FINE_TARGETS[t]).expect("distinct offsets");
            offsets
                .iter()
                .map(|o| bases[t].iter().position(|b| b == o).map_or(0.0, |i| w[i]))
                .collect()
        });
        AxisStencil { offsets, weights }
    }
}

/// Precomputed weights of one C2F scheme order.
#[derive(Clone, Debug)]
pub struct C2fStencil {
    order: SchemeOrder,
    /// Offsets along `-d_comm` and weights for the fine ghost depth.
    first_offsets: Vec<i64>,
    first_weights: Vec<f64>,
    /// Transverse stencils indexed by [`AxisCase`].
    transverse: [AxisStencil; 3],
}

impl C2fStencil {
    pub fn new(order: SchemeOrder) -> Self {
        let first_offsets: Vec<i64> = (0..order.base_count() as i64).collect();
        let pos: Vec<f64> = first_offsets.iter().map(|&o| o as f64).collect();
        let first_weights = lagrange_weights(&pos, FINE_GHOST_DEPTH).expect("distinct offsets");
        let transverse = match order {
            SchemeOrder::Constant => [vec![0], vec![0], vec![0]].map(AxisStencil::new),
            // Each fine value pairs the cell with the neighbor on its own side, or
            // with the opposite neighbor when that side is a ghost.
            SchemeOrder::Linear => [
                AxisStencil::per_target(vec![-1, 0, 1], [vec![-1, 0], vec![0, 1]]),
                AxisStencil::per_target(vec![0, 1, 2], [vec![0, 2], vec![0, 1]]),
                AxisStencil::per_target(vec![-2, -1, 0], [vec![-1, 0], vec![-2, 0]]),
            ],
            SchemeOrder::Quadratic => {
                [vec![-1, 0, 1], vec![0, 1, 2], vec![-2, -1, 0]].map(AxisStencil::new)
            }
        };
        C2fStencil {
            order,
            first_offsets,
            first_weights,
            transverse,
        }
    }

    pub fn order(&self) -> SchemeOrder {
        self.order
    }

    fn first_dim(&self, field: &BlockField, cell: Cell, d_comm: Direction) -> f64 {
        let inward = d_comm.opposite().offset();
        self.first_offsets
            .iter()
            .zip(&self.first_weights)
            .map(|(&k, &w)| w * field.get(add(cell, scale(inward, k))))
            .sum()
    }

    /// Downwind and upwind 2D bases in the slice containing `cell`.
    fn slice_values(
        &self,
        field: &BlockField,
        cell: Cell,
        frame: &OrthogonalFrame,
        case2: AxisCase,
    ) -> [f64; 2] {
        let st = &self.transverse[case2.index()];
        let axis = frame.o2d_plus.offset();
        let mut out = [0.0; 2];
        for (i, &k) in st.offsets.iter().enumerate() {
            let b = self.first_dim(field, add(cell, scale(axis, k)), frame.d_comm);
            out[0] += st.weights[0][i] * b;
            out[1] += st.weights[1][i] * b;
        }
        out
    }

    /// Appends the `2^(D-1)` fine values of one coarse interface cell in packing order.
    fn push_values(
        &self,
        field: &BlockField,
        cell: Cell,
        frame: &OrthogonalFrame,
        case2: AxisCase,
        case3: Option<AxisCase>,
        out: &mut Vec<f64>,
    ) {
        match (frame.o3d_plus, case3) {
            (Some(o3), Some(case3)) => {
                let st = &self.transverse[case3.index()];
                let axis = o3.offset();
                let mut acc = [[0.0; 2]; 2];
                for (m, &k) in st.offsets.iter().enumerate() {
                    let slice = self.slice_values(field, add(cell, scale(axis, k)), frame, case2);
                    for t3 in 0..2 {
                        for t2 in 0..2 {
                            acc[t3][t2] += st.weights[t3][m] * slice[t2];
                        }
                    }
                }
                // Downwind values of both o2d axes first, then the upwind ones.
                out.extend_from_slice(&[acc[0][0], acc[0][1], acc[1][0], acc[1][1]]);
            }
            _ => out.extend_from_slice(&self.slice_values(field, cell, frame, case2)),
        }
    }
}

fn check_sender_cells(field: &BlockField, order: SchemeOrder) -> Result<()> {
    if field.cells() < order.min_cells() {
        return Err(Error::TooFewCells(field.cells()));
    }
    Ok(())
}

/// Value extrapolated along `-d_comm` to the depth of the fine ghost cells.
pub fn c2f_first_dim_base(
    field: &BlockField,
    cell: Cell,
    d_comm: Direction,
    order: SchemeOrder,
) -> f64 {
    C2fStencil::new(order).first_dim(field, cell, d_comm)
}

/// Fine ghost values produced by one coarse interface cell, in packing order.
pub fn c2f_compute_fine_values(
    field: &BlockField,
    cell: Cell,
    frame: &OrthogonalFrame,
    order: SchemeOrder,
) -> Vec<f64> {
    let interior = field.interior_range();
    let case2 = axis_case(cell, frame.o2d_plus, &interior);
    let case3 = frame.o3d_plus.map(|o| axis_case(cell, o, &interior));
    let mut out = Vec::with_capacity(4);
    C2fStencil::new(order).push_values(field, cell, frame, case2, case3, &mut out);
    out
}

/// Remapping cases of every coordinate of `range` along the axis of `plus`.
fn cases_along(range: &CellRange, plus: Direction, interior: &CellRange) -> Vec<AxisCase> {
    let a = plus.axis();
    let mut cell = range.lo;
    (range.lo[a]..range.hi[a])
        .map(|x| {
            cell[a] = x;
            axis_case(cell, plus, interior)
        })
        .collect()
}

/// Packs the C2F payload of one coarse segment for the fine neighbor in `d_comm`.
///
/// The remapping case is resolved once per transverse coordinate of the segment.
pub fn c2f_pack(
    field: &BlockField,
    d_comm: Direction,
    segment: &CellRange,
    stencil: &C2fStencil,
) -> Result<Vec<f64>> {
    check_sender_cells(field, stencil.order)?;
    let dim = field.dim();
    let frame = OrthogonalFrame::new(d_comm, dim);
    let interior = field.interior_range();
    let cases2 = cases_along(segment, frame.o2d_plus, &interior);
    let cases3 = frame.o3d_plus.map(|o| cases_along(segment, o, &interior));
    let a2 = frame.o2d_plus.axis();
    let a3 = frame.o3d_plus.map(|o| o.axis());
    let mut out = Vec::with_capacity(segment.len() << (dim - 1));
    for cell in segment.iter() {
        let case2 = cases2[(cell[a2] - segment.lo[a2]) as usize];
        let case3 = match (a3, &cases3) {
            (Some(a3), Some(c3)) => Some(c3[(cell[a3] - segment.lo[a3]) as usize]),
            _ => None,
        };
        stencil.push_values(field, cell, &frame, case2, case3, &mut out);
    }
    Ok(out)
}

/// Receiver-side placement of the packed fine values relative to the stepped cell.
pub fn c2f_unpack_offsets(frame: &OrthogonalFrame, dim: usize, r: usize) -> Result<Vec<Cell>> {
    if r != RATIO {
        return Err(Error::UnsupportedRatio(r));
    }
    let zero = [0; 3];
    let p2 = frame.o2d_plus.offset();
    Ok(match (dim, frame.o3d_plus) {
        (3, Some(o3)) => {
            let p3 = o3.offset();
            vec![zero, p2, p3, add(p2, p3)]
        }
        _ => vec![zero, p2],
    })
}

/// Writes a C2F payload into the fine block's ghost face in direction `ghost_dir`.
pub fn c2f_unpack(field: &mut BlockField, ghost_dir: Direction, payload: &[f64]) -> Result<()> {
    let dim = field.dim();
    let frame = OrthogonalFrame::new(ghost_dir.opposite(), dim);
    let offsets = c2f_unpack_offsets(&frame, dim, RATIO)?;
    let mut face = field.ghost_range(ghost_dir);
    if !field.cells().is_multiple_of(RATIO) {
        return Err(Error::NotDivisible {
            extent: field.cells(),
            ratio: RATIO,
        });
    }
    for a in transverse_axes(ghost_dir.axis(), dim) {
        face.step[a] = RATIO as i64;
    }
    let expected = face.len() * offsets.len();
    if payload.len() != expected {
        return Err(Error::WrongValueCount {
            expected,
            got: payload.len(),
        });
    }
    let mut values = payload.iter();
    for base in face.iter() {
        for off in &offsets {
            field.set(add(base, *off), *values.next().expect("length checked"));
        }
    }
    Ok(())
}

/// Packs the F2C payload of a fine block towards its coarse neighbor in `d_comm`.
///
/// One value per coarse ghost cell, iterated with the lowest transverse axis fastest.
pub fn f2c_pack(field: &BlockField, d_comm: Direction) -> Result<Vec<f64>> {
    let dim = field.dim();
    if !field.cells().is_multiple_of(RATIO) {
        return Err(Error::NotDivisible {
            extent: field.cells(),
            ratio: RATIO,
        });
    }
    let a = d_comm.axis();
    let mut face = field.interface_range(d_comm);
    let transverse: Vec<usize> = transverse_axes(a, dim).collect();
    for &t in &transverse {
        face.step[t] = RATIO as i64;
    }
    // The r fine layers nearest the face.
    let deeper = -d_comm.sign();
    let first = face.lo[a].min(face.lo[a] + deeper);
    let group = 1usize << dim;
    let mut values = Vec::with_capacity(group);
    let mut out = Vec::with_capacity(face.len());
    for base in face.iter() {
        values.clear();
        for mask in 0..group {
            let mut c = base;
            c[a] = first + (mask & 1) as i64;
            for (k, &t) in transverse.iter().enumerate() {
                c[t] += ((mask >> (k + 1)) & 1) as i64;
            }
            values.push(field.get(c));
        }
        out.push(f2c_reduce(&values, dim)?);
    }
    Ok(out)
}

/// Copies the values of `range` in iteration order.
pub fn read_range(field: &BlockField, range: &CellRange) -> Vec<f64> {
    range.iter().map(|c| field.get(c)).collect()
}

/// Writes `payload` into `range` in iteration order.
pub fn write_range(field: &mut BlockField, range: &CellRange, payload: &[f64]) -> Result<()> {
    if payload.len() != range.len() {
        return Err(Error::WrongValueCount {
            expected: range.len(),
            got: payload.len(),
        });
    }
    for (c, &v) in range.iter().zip(payload) {
        field.set(c, v);
    }
    Ok(())
}
