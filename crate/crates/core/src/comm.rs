//! Ghost-layer exchange across the forest.
//!
//! An exchange runs in three bulk-synchronous phases: every block packs one
//! [`Envelope`] per send descriptor, the envelopes are routed between simulated
//! ranks, and every block unpacks the envelopes addressed to it into its ghost faces.
//!
//! Envelopes carry `(dst, direction, case, segment_index)` explicitly. With MPI the
//! same information would be folded into the message tag: the receiving direction
//! and the segment index are what distinguish the up to `r^(D-1)` messages a coarse
//! block receives from one side.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::blockforest::{
    segment_of, BlockId, Blockforest, Direction, NeighborCase, RankMap, RATIO,
};
use crate::error::{Error, Result};
use crate::fields::{split_interface, BlockField, CellRange};
use crate::interp::{self, C2fStencil, SchemeOrder};

/// A routed message.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub src: BlockId,
    pub dst: BlockId,
    /// Direction of the ghost face on the receiver.
    pub direction: Direction,
    pub case: NeighborCase,
    /// Segment of the receiver's ghost face; zero unless a coarse block receives F2C data.
    pub segment_index: usize,
    pub payload: Vec<f64>,
}

impl Envelope {
    /// Wire encoding used on the remote path: a fixed header followed by a
    /// length-prefixed native-endian `f64` payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(80 + 8 * self.payload.len());
        for b in [&self.src, &self.dst] {
            buf.extend_from_slice(&b.level.to_ne_bytes());
            for c in b.coords {
                buf.extend_from_slice(&c.to_ne_bytes());
            }
        }
        buf.push(self.direction as u8);
        buf.push(self.case as u8);
        buf.extend_from_slice(&(self.segment_index as u64).to_ne_bytes());
        buf.extend_from_slice(&(self.payload.len() as u64).to_ne_bytes());
        for v in &self.payload {
            buf.extend_from_slice(&v.to_ne_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        let block = |rd: &mut Reader| -> Result<BlockId> {
            let level = u32::from_ne_bytes(rd.take()?);
            let mut coords = [0; 3];
            for c in &mut coords {
                *c = u64::from_ne_bytes(rd.take()?);
            }
            Ok(BlockId { level, coords })
        };
        let src = block(&mut rd)?;
        let dst = block(&mut rd)?;
        let [dir, case] = rd.take::<2>()?;
        let direction = *Direction::ALL
            .get(dir as usize)
            .ok_or_else(|| Error::Protocol(format!("bad direction byte {dir}")))?;
        let case = match case {
            0 => NeighborCase::SameLevel,
            1 => NeighborCase::C2F,
            2 => NeighborCase::F2C,
            c => return Err(Error::Protocol(format!("bad case byte {c}"))),
        };
        let segment_index = u64::from_ne_bytes(rd.take()?) as usize;
        let len = u64::from_ne_bytes(rd.take()?) as usize;
        let payload = (0..len)
            .map(|_| rd.take().map(f64::from_ne_bytes))
            .collect::<Result<Vec<_>>>()?;
        if rd.pos != bytes.len() {
            return Err(Error::Protocol("trailing bytes in message".into()));
        }
        Ok(Envelope {
            src,
            dst,
            direction,
            case,
            segment_index,
            payload,
        })
    }

    fn key(&self) -> (BlockId, Direction, NeighborCase, usize) {
        (self.src, self.direction, self.case, self.segment_index)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Protocol("truncated message".into()))?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice length is N"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SendDescriptor {
    pub neighbor: BlockId,
    /// Sender-relative direction.
    pub direction: Direction,
    pub case: NeighborCase,
    /// Tag segment: the receiver's ghost segment for F2C, the sender's interface
    /// segment for C2F, zero for same-level.
    pub segment_index: usize,
    pub source: CellRange,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecvDescriptor {
    pub neighbor: BlockId,
    /// Receiver-relative direction.
    pub direction: Direction,
    pub case: NeighborCase,
    pub segment_index: usize,
    pub ghost: CellRange,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPlan {
    pub block: BlockId,
    pub sends: Vec<SendDescriptor>,
    pub recvs: Vec<RecvDescriptor>,
}

/// Send and receive descriptors of every leaf for one multigrid level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExchangePlan {
    pub mg_level: usize,
    pub dim: usize,
    /// Interior cells per dimension on this level.
    pub cells: usize,
    /// One entry per leaf, in forest order.
    pub blocks: Vec<BlockPlan>,
}

/// Scalars carried by one message of the given case.
pub fn payload_len(case: NeighborCase, dim: usize, cells: usize) -> usize {
    match case {
        NeighborCase::SameLevel | NeighborCase::C2F => cells.pow(dim as u32 - 1),
        NeighborCase::F2C => (cells / RATIO).pow(dim as u32 - 1),
    }
}

/// Builds the exchange plan of a balanced forest on one multigrid level.
pub fn build_plan(forest: &Blockforest, mg_level: usize) -> Result<ExchangePlan> {
    let dim = forest.dim();
    let cells = forest.cells_per_block() >> mg_level;
    if cells == 0 || cells << mg_level != forest.cells_per_block() {
        return Err(Error::LevelNotAllocated(mg_level));
    }
    let blocks = forest
        .leaves()
        .iter()
        .map(|&block| {
            let template = BlockField::new(block, dim, cells, mg_level);
            let mut sends = Vec::new();
            let mut recvs = Vec::new();
            for &dir in Direction::cardinal(dim) {
                let neighbors = forest.neighbors(&block, dir)?;
                for nb in neighbors {
                    let (send_seg, source, recv_case, recv_seg) = match nb.case {
                        NeighborCase::SameLevel => {
                            (0, template.interface_range(dir), NeighborCase::SameLevel, 0)
                        }
                        NeighborCase::C2F => {
                            let segs = split_interface(
                                &template.interface_range(dir),
                                dir,
                                RATIO,
                                dim,
                            )?;
                            let s = nb.segment_index;
                            (s, segs[s], NeighborCase::F2C, s)
                        }
                        NeighborCase::F2C => {
                            if !cells.is_multiple_of(RATIO) {
                                return Err(Error::NotDivisible {
                                    extent: cells,
                                    ratio: RATIO,
                                });
                            }
                            let s = segment_of(&block, &nb.neighbor, dir.axis(), dim);
                            (s, template.interface_range(dir), NeighborCase::C2F, 0)
                        }
                    };
                    sends.push(SendDescriptor {
                        neighbor: nb.neighbor,
                        direction: dir,
                        case: nb.case,
                        segment_index: send_seg,
                        source,
                    });
                    recvs.push(RecvDescriptor {
                        neighbor: nb.neighbor,
                        direction: dir,
                        case: recv_case,
                        segment_index: recv_seg,
                        ghost: template.ghost_segment_range(dir, recv_case, recv_seg)?,
                    });
                }
            }
            Ok(BlockPlan {
                block,
                sends,
                recvs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = ExchangePlan {
        mg_level,
        dim,
        cells,
        blocks,
    };
    plan.check_matching()?;
    Ok(plan)
}

impl ExchangePlan {
    /// Envelope key a send descriptor of `src` produces on the receiving side.
    fn routed_key(
        src: BlockId,
        send: &SendDescriptor,
    ) -> (BlockId, (BlockId, Direction, NeighborCase, usize)) {
        let seg = match send.case {
            NeighborCase::F2C => send.segment_index,
            _ => 0,
        };
        (
            send.neighbor,
            (src, send.direction.opposite(), send.case, seg),
        )
    }

    /// Verifies that sends and receives pair up one-to-one with equal payload lengths.
    pub fn check_matching(&self) -> Result<()> {
        let mut pending: BTreeMap<(BlockId, (BlockId, Direction, NeighborCase, usize)), usize> =
            BTreeMap::new();
        for bp in &self.blocks {
            for s in &bp.sends {
                let key = Self::routed_key(bp.block, s);
                let len = self.send_len(s);
                if pending.insert(key, len).is_some() {
                    return Err(Error::Protocol(format!("duplicate send {key:?}")));
                }
            }
        }
        for bp in &self.blocks {
            for r in &bp.recvs {
                let key = (
                    bp.block,
                    (r.neighbor, r.direction, r.case, r.segment_index),
                );
                let len = pending
                    .remove(&key)
                    .ok_or_else(|| Error::Protocol(format!("receive without send {key:?}")))?;
                let expected = self.recv_len(r);
                if len != expected {
                    return Err(Error::Protocol(format!(
                        "payload length mismatch for {key:?}: {len} vs {expected}"
                    )));
                }
            }
        }
        if let Some((key, _)) = pending.into_iter().next() {
            return Err(Error::Protocol(format!("send without receive {key:?}")));
        }
        Ok(())
    }

    fn send_len(&self, s: &SendDescriptor) -> usize {
        payload_len(s.case, self.dim, self.cells)
    }

    fn recv_len(&self, r: &RecvDescriptor) -> usize {
        r.ghost.len()
    }

    pub fn block_plan(&self, block: &BlockId) -> Option<&BlockPlan> {
        self.blocks.iter().find(|b| b.block == *block)
    }

    pub fn message_count(&self) -> usize {
        self.blocks.iter().map(|b| b.sends.len()).sum()
    }
}

/// Message, scalar and byte counts of one refinement case.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CaseVolume {
    pub messages: usize,
    pub scalars: usize,
    pub bytes: usize,
}

impl CaseVolume {
    fn add(&mut self, scalars: usize) {
        self.messages += 1;
        self.scalars += scalars;
        self.bytes += scalars * std::mem::size_of::<f64>();
    }
}

/// Communication volume per multigrid level and refinement case.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VolumeReport {
    pub entries: BTreeMap<(usize, NeighborCase), CaseVolume>,
}

impl VolumeReport {
    pub fn record(&mut self, mg_level: usize, case: NeighborCase, scalars: usize) {
        self.entries.entry((mg_level, case)).or_default().add(scalars);
    }

    pub fn merge(&mut self, other: &VolumeReport) {
        for (k, v) in &other.entries {
            let e = self.entries.entry(*k).or_default();
            e.messages += v.messages;
            e.scalars += v.scalars;
            e.bytes += v.bytes;
        }
    }

    pub fn get(&self, mg_level: usize, case: NeighborCase) -> CaseVolume {
        self.entries.get(&(mg_level, case)).copied().unwrap_or_default()
    }

    pub fn total(&self) -> CaseVolume {
        self.entries.values().fold(CaseVolume::default(), |mut acc, v| {
            acc.messages += v.messages;
            acc.scalars += v.scalars;
            acc.bytes += v.bytes;
            acc
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mg_level,case,messages,scalars,bytes\n");
        for ((level, case), v) in &self.entries {
            let _ = writeln!(
                s,
                "{level},{},{},{},{}",
                case.as_str(),
                v.messages,
                v.scalars,
                v.bytes
            );
        }
        s
    }
}

/// Closed-form volume of one exchange over `plan`.
///
/// Interpolation happens before sending, so C2F messages carry `r^(D-1)` fine values
/// per coarse segment cell for every scheme order.
pub fn volume_report(plan: &ExchangePlan, _scheme: SchemeOrder) -> VolumeReport {
    let mut report = VolumeReport::default();
    for bp in &plan.blocks {
        for s in &bp.sends {
            report.record(plan.mg_level, s.case, payload_len(s.case, plan.dim, plan.cells));
        }
    }
    report
}

/// Result of routing one batch of envelopes.
#[derive(Clone, Debug, Default)]
pub struct Delivery {
    /// Delivered envelopes grouped per destination, in forest leaf order.
    pub inboxes: Vec<Vec<Envelope>>,
    pub local: usize,
    pub remote: usize,
    pub remote_bytes: usize,
}

/// Delivers envelopes to their destination blocks.
///
/// Envelopes between blocks on different ranks go through the byte encoding and are
/// decoded on the receiving side; envelopes within a rank are moved directly.
pub fn route(
    forest: &Blockforest,
    envelopes: Vec<Envelope>,
    ranks: &RankMap,
) -> Result<Delivery> {
    let rank_of = |b: &BlockId| {
        ranks
            .owner(b)
            .ok_or_else(|| Error::Protocol(format!("block {b} has no owner")))
    };
    let mut delivery = Delivery {
        inboxes: vec![Vec::new(); forest.len()],
        ..Default::default()
    };
    // Per (source rank, destination rank) channel of encoded messages.
    let mut channels: BTreeMap<(usize, usize), Vec<Vec<u8>>> = BTreeMap::new();
    for env in envelopes {
        let (from, to) = (rank_of(&env.src)?, rank_of(&env.dst)?);
        let slot = forest
            .index_of(&env.dst)
            .ok_or_else(|| Error::Protocol(format!("envelope to unknown block {}", env.dst)))?;
        if from == to {
            delivery.local += 1;
            delivery.inboxes[slot].push(env);
        } else {
            let bytes = env.to_bytes();
            delivery.remote += 1;
            delivery.remote_bytes += bytes.len();
            channels.entry((from, to)).or_default().push(bytes);
        }
    }
    for (_, messages) in channels {
        for bytes in messages {
            let env = Envelope::from_bytes(&bytes)?;
            let slot = forest.index_of(&env.dst).expect("checked on send");
            delivery.inboxes[slot].push(env);
        }
    }
    Ok(delivery)
}

/// Counters of one exchange.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExchangeStats {
    pub volume: VolumeReport,
    pub local: usize,
    pub remote: usize,
    pub remote_bytes: usize,
}

/// Exchange engine bound to one plan.
#[derive(Clone, Debug)]
pub struct Exchanger {
    plan: ExchangePlan,
    stencil: C2fStencil,
    expected_volume: VolumeReport,
}

impl Exchanger {
    pub fn new(forest: &Blockforest, mg_level: usize, scheme: SchemeOrder) -> Result<Self> {
        let plan = build_plan(forest, mg_level)?;
        Ok(Self::from_plan(plan, scheme))
    }

    pub fn from_plan(plan: ExchangePlan, scheme: SchemeOrder) -> Self {
        let expected_volume = volume_report(&plan, scheme);
        Exchanger {
            plan,
            stencil: C2fStencil::new(scheme),
            expected_volume,
        }
    }

    pub fn plan(&self) -> &ExchangePlan {
        &self.plan
    }

    pub fn scheme(&self) -> SchemeOrder {
        self.stencil.order()
    }

    pub fn expected_volume(&self) -> &VolumeReport {
        &self.expected_volume
    }

    fn check_fields(&self, fields: &[BlockField]) -> Result<()> {
        if fields.len() != self.plan.blocks.len() {
            let missing = self
                .plan
                .blocks
                .get(fields.len())
                .map(|b| b.block)
                .unwrap_or(self.plan.blocks[0].block);
            return Err(Error::MissingField(missing));
        }
        for (bp, f) in self.plan.blocks.iter().zip(fields) {
            if f.block() != bp.block {
                return Err(Error::MissingField(bp.block));
            }
            if f.mg_level() != self.plan.mg_level || f.cells() != self.plan.cells {
                return Err(Error::LevelNotAllocated(self.plan.mg_level));
            }
        }
        Ok(())
    }

    /// Packs every send descriptor of every block.
    pub fn pack(&self, fields: &[BlockField]) -> Result<Vec<Envelope>> {
        self.check_fields(fields)?;
        let per_block: Vec<Vec<Envelope>> = self
            .plan
            .blocks
            .par_iter()
            .zip(fields.par_iter())
            .map(|(bp, field)| {
                bp.sends
                    .iter()
                    .map(|s| {
                        let payload = match s.case {
                            NeighborCase::SameLevel => interp::read_range(field, &s.source),
                            NeighborCase::C2F => {
                                interp::c2f_pack(field, s.direction, &s.source, &self.stencil)?
                            }
                            NeighborCase::F2C => interp::f2c_pack(field, s.direction)?,
                        };
                        let (_, (src, direction, case, segment_index)) =
                            ExchangePlan::routed_key(bp.block, s);
                        Ok(Envelope {
                            src,
                            dst: s.neighbor,
                            direction,
                            case,
                            segment_index,
                            payload,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(per_block.into_iter().flatten().collect())
    }

    /// Writes delivered envelopes into the ghost faces named by the receive descriptors.
    pub fn unpack(&self, fields: &mut [BlockField], inboxes: Vec<Vec<Envelope>>) -> Result<()> {
        self.check_fields(fields)?;
        self.plan
            .blocks
            .par_iter()
            .zip(fields.par_iter_mut())
            .zip(inboxes.into_par_iter())
            .try_for_each(|((bp, field), inbox)| {
                let mut by_key: BTreeMap<_, Envelope> = BTreeMap::new();
                for env in inbox {
                    let key = env.key();
                    if by_key.insert(key, env).is_some() {
                        return Err(Error::Protocol(format!(
                            "duplicate envelope {key:?} for {}",
                            bp.block
                        )));
                    }
                }
                for r in &bp.recvs {
                    let key = (r.neighbor, r.direction, r.case, r.segment_index);
                    let env = by_key.remove(&key).ok_or_else(|| {
                        Error::Protocol(format!("no envelope {key:?} for {}", bp.block))
                    })?;
                    match r.case {
                        NeighborCase::C2F => interp::c2f_unpack(field, r.direction, &env.payload)?,
                        _ => interp::write_range(field, &r.ghost, &env.payload)?,
                    }
                }
                if let Some((key, _)) = by_key.into_iter().next() {
                    return Err(Error::Protocol(format!(
                        "unmatched envelope {key:?} for {}",
                        bp.block
                    )));
                }
                Ok(())
            })
    }

    /// Full ghost exchange: pack, route, unpack.
    pub fn exchange(
        &self,
        forest: &Blockforest,
        fields: &mut [BlockField],
        ranks: &RankMap,
    ) -> Result<ExchangeStats> {
        let envelopes = self.pack(fields)?;
        let mut volume = VolumeReport::default();
        for e in &envelopes {
            volume.record(self.plan.mg_level, e.case, e.payload.len());
        }
        if volume != self.expected_volume {
            return Err(Error::Protocol(format!(
                "routed volume {volume:?} differs from the closed form {:?}",
                self.expected_volume
            )));
        }
        let delivery = route(forest, envelopes, ranks)?;
        self.unpack(fields, delivery.inboxes)?;
        Ok(ExchangeStats {
            volume,
            local: delivery.local,
            remote: delivery.remote,
            remote_bytes: delivery.remote_bytes,
        })
    }
}

/// One-shot exchange on `mg_level` (builds the plan on every call).
pub fn exchange(
    forest: &Blockforest,
    fields: &mut [BlockField],
    mg_level: usize,
    scheme: SchemeOrder,
    ranks: &RankMap,
) -> Result<ExchangeStats> {
    Exchanger::new(forest, mg_level, scheme)?.exchange(forest, fields, ranks)
}

/// Zero fields for every leaf of `forest` on `mg_level`.
pub fn allocate_fields(forest: &Blockforest, mg_level: usize) -> Vec<BlockField> {
    let cells = forest.cells_per_block() >> mg_level;
    forest
        .leaves()
        .iter()
        .map(|&b| BlockField::new(b, forest.dim(), cells, mg_level))
        .collect()
}
