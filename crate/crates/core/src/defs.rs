//! `DEFS` binary container for [`FieldStack`]s.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    4 bytes  "DEFS"
//! version  u16      1
//! records  until end of input, each:
//!   joint  u16
//!   kind   u8       0 conf, 1 tag, 2 dispx, 3 dispy,
//!                   4 basicx, 5 basicy, 6 revx, 7 revy
//!   width  u32
//!   height u32
//!   data   f32 * width * height, row-major
//! ```
//!
//! Writers emit records sorted by `(joint, kind)`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::encoder::{DispField, DispKind, FieldStack};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::skeleton::JointId;

pub const MAGIC: &[u8; 4] = b"DEFS";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum GridKind {
    Conf = 0,
    Tag = 1,
    DispX = 2,
    DispY = 3,
    BasicX = 4,
    BasicY = 5,
    RevX = 6,
    RevY = 7,
}

impl GridKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        use GridKind::*;
        Some(match v {
            0 => Conf,
            1 => Tag,
            2 => DispX,
            3 => DispY,
            4 => BasicX,
            5 => BasicY,
            6 => RevX,
            7 => RevY,
            _ => return None,
        })
    }

    fn disp_kind(self) -> Option<(DispKind, bool)> {
        use GridKind::*;
        match self {
            DispX => Some((DispKind::Hierarchical, false)),
            DispY => Some((DispKind::Hierarchical, true)),
            BasicX => Some((DispKind::Basic, false)),
            BasicY => Some((DispKind::Basic, true)),
            RevX => Some((DispKind::Reverse, false)),
            RevY => Some((DispKind::Reverse, true)),
            Conf | Tag => None,
        }
    }
}

fn records(stack: &FieldStack) -> Vec<(JointId, GridKind, &Grid)> {
    let mut out = Vec::new();
    for (id, g) in &stack.conf {
        out.push((*id, GridKind::Conf, g));
    }
    for (id, g) in &stack.tags {
        out.push((*id, GridKind::Tag, g));
    }
    let sets = [
        (&stack.disp, GridKind::DispX, GridKind::DispY),
        (&stack.basic, GridKind::BasicX, GridKind::BasicY),
        (&stack.reverse, GridKind::RevX, GridKind::RevY),
    ];
    for (map, kx, ky) in sets {
        for (id, f) in map {
            out.push((*id, kx, &f.dx));
            out.push((*id, ky, &f.dy));
        }
    }
    out.sort_by_key(|(id, k, _)| (*id, *k));
    out
}

pub fn write<W: Write>(stack: &FieldStack, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let mut buf = Vec::new();
    for (id, kind, grid) in records(stack) {
        buf.clear();
        buf.extend_from_slice(&id.0.to_le_bytes());
        buf.push(kind as u8);
        buf.extend_from_slice(&(grid.width() as u32).to_le_bytes());
        buf.extend_from_slice(&(grid.height() as u32).to_le_bytes());
        buf.reserve(grid.as_slice().len() * 4);
        for v in grid.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn to_bytes(stack: &FieldStack) -> Vec<u8> {
    let mut out = Vec::new();
    write(stack, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn read<R: Read>(mut r: R) -> Result<FieldStack> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<FieldStack> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4).map_err(|_| Error::Format("missing magic".into()))? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }

    let mut dims: Option<(usize, usize)> = None;
    let mut stack = FieldStack::default();
    let mut halves: BTreeMap<(JointId, DispKind), (Option<Grid>, Option<Grid>)> = BTreeMap::new();

    while !c.at_end() {
        let joint = JointId(c.u16()?);
        let raw_kind = c.take(1)?[0];
        let kind = GridKind::from_u8(raw_kind)
            .ok_or_else(|| Error::Format(format!("unknown grid kind {raw_kind}")))?;
        let width = c.u32()? as usize;
        let height = c.u32()? as usize;
        match dims {
            None => dims = Some((width, height)),
            Some(d) if d != (width, height) => {
                return Err(Error::Format(format!(
                    "record ({joint}, {kind:?}) is {width}x{height}, stack is {}x{}",
                    d.0, d.1
                )))
            }
            _ => {}
        }
        let n = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("grid size overflows".into()))?;
        let data = c
            .take(n)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let grid = Grid::from_vec(width, height, data).expect("length checked");

        let dup = || Error::Format(format!("duplicate record ({joint}, {kind:?})"));
        match kind.disp_kind() {
            None => {
                let map = if kind == GridKind::Conf {
                    &mut stack.conf
                } else {
                    &mut stack.tags
                };
                if map.insert(joint, grid).is_some() {
                    return Err(dup());
                }
            }
            Some((dk, is_y)) => {
                let slot = halves.entry((joint, dk)).or_default();
                let half = if is_y { &mut slot.1 } else { &mut slot.0 };
                if half.replace(grid).is_some() {
                    return Err(dup());
                }
            }
        }
    }

    for ((joint, dk), pair) in halves {
        match pair {
            (Some(dx), Some(dy)) => {
                stack.displacement_mut(dk).insert(joint, DispField { dx, dy });
            }
            _ => {
                return Err(Error::Format(format!(
                    "joint {joint} has only one {dk:?} displacement channel"
                )))
            }
        }
    }

    let (w, h) = dims.unwrap_or((0, 0));
    let mut out = FieldStack::new(w, h);
    out.conf = stack.conf;
    out.tags = stack.tags;
    out.disp = stack.disp;
    out.basic = stack.basic;
    out.reverse = stack.reverse;
    Ok(out)
}
