//! Raw row index to tier-local address translation.
//!
//! Each entry is a 32-bit word: the top two bits select the tier and the low
//! 30 bits are the dense index of the row inside that tier's region. Rows are
//! handed out in hotness order, so the hottest `dram_rows` rows go to DRAM,
//! the next `tt_rows` to the TT region and the rest to SSD.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{PlannerSolution, TablePlan};

pub const IDX_BITS: u32 = 30;
pub const IDX_MASK: u32 = (1 << IDX_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Dram = 0,
    Tt = 1,
    Ssd = 2,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Dram, Tier::Tt, Tier::Ssd];

    pub fn from_bits(bits: u32) -> Result<Tier> {
        match bits {
            0 => Ok(Tier::Dram),
            1 => Ok(Tier::Tt),
            2 => Ok(Tier::Ssd),
            other => Err(Error::Index {
                index: u64::from(other),
                limit: 3,
            }),
        }
    }
}

pub fn pack(tier: Tier, idx: u32) -> Result<u32> {
    if idx > IDX_MASK {
        return Err(Error::Index {
            index: u64::from(idx),
            limit: 1 << IDX_BITS,
        });
    }
    Ok(((tier as u32) << IDX_BITS) | idx)
}

pub fn unpack(word: u32) -> Result<(Tier, u32)> {
    Ok((Tier::from_bits(word >> IDX_BITS)?, word & IDX_MASK))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemapTable {
    pub table_id: u32,
    /// One packed word per raw row index.
    pub entries: Vec<u32>,
}

impl RemapTable {
    pub fn row_len(&self) -> usize {
        self.entries.len()
    }

    pub fn resolve(&self, raw: u64) -> Result<(Tier, u32)> {
        let word = usize::try_from(raw)
            .ok()
            .and_then(|i| self.entries.get(i))
            .ok_or(Error::Index {
                index: raw,
                limit: self.entries.len() as u64,
            })?;
        unpack(*word)
    }

    /// Rows per tier.
    pub fn populations(&self) -> Result<[u64; 3]> {
        let mut out = [0u64; 3];
        for &w in &self.entries {
            out[unpack(w)?.0 as usize] += 1;
        }
        Ok(out)
    }
}

/// Remap of one table from its split and its rows in hotness order.
pub fn build_table_remap(split: &TablePlan, hotness: &[u32]) -> Result<RemapTable> {
    let row_len = hotness.len() as u64;
    if split.dram_rows + split.tt_rows + split.ssd_rows != row_len {
        return Err(Error::Shape(format!(
            "table {}: row splits {}+{}+{} do not add up to {row_len} rows",
            split.table_id, split.dram_rows, split.tt_rows, split.ssd_rows
        )));
    }
    if row_len > u64::from(u32::MAX) + 1 {
        return Err(Error::Shape(format!(
            "table {} has {row_len} rows, more than a remap file can address",
            split.table_id
        )));
    }
    for (tier, n) in [
        (Tier::Dram, split.dram_rows),
        (Tier::Tt, split.tt_rows),
        (Tier::Ssd, split.ssd_rows),
    ] {
        if n > u64::from(IDX_MASK) + 1 {
            return Err(Error::Shape(format!(
                "table {}: {n} rows in tier {tier:?} exceed the 30-bit index space",
                split.table_id
            )));
        }
    }

    let mut entries = vec![u32::MAX; hotness.len()];
    let tt_start = split.dram_rows;
    let ssd_start = split.dram_rows + split.tt_rows;
    for (rank, &row) in hotness.iter().enumerate() {
        let rank = rank as u64;
        let (tier, local) = if rank < tt_start {
            (Tier::Dram, rank)
        } else if rank < ssd_start {
            (Tier::Tt, rank - tt_start)
        } else {
            (Tier::Ssd, rank - ssd_start)
        };
        let slot = entries.get_mut(row as usize).ok_or(Error::Index {
            index: u64::from(row),
            limit: row_len,
        })?;
        if *slot != u32::MAX {
            return Err(Error::Shape(format!(
                "table {}: hotness order lists row {row} twice",
                split.table_id
            )));
        }
        *slot = pack(tier, local as u32)?;
    }
    Ok(RemapTable {
        table_id: split.table_id,
        entries,
    })
}

/// Remap tables for every table of `plan`; `hotness[j]` lists the rows of
/// plan table `j` hottest first.
pub fn build_remap(plan: &PlannerSolution, hotness: &[Vec<u32>]) -> Result<Vec<RemapTable>> {
    if hotness.len() != plan.tables.len() {
        return Err(Error::Shape(format!(
            "{} hotness orders for {} planned tables",
            hotness.len(),
            plan.tables.len()
        )));
    }
    plan.tables
        .iter()
        .zip(hotness)
        .map(|(t, h)| build_table_remap(t, h))
        .collect()
}

pub fn write_remap<W: Write>(tables: &[RemapTable], out: &mut W) -> Result<()> {
    for t in tables {
        let row_len = u32::try_from(t.entries.len())
            .map_err(|_| Error::Shape(format!("table {} too long for a remap file", t.table_id)))?;
        out.write_all(&t.table_id.to_le_bytes())?;
        out.write_all(&row_len.to_le_bytes())?;
        let mut buf = Vec::with_capacity(t.entries.len() * 4);
        for w in &t.entries {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_remap<R: Read>(mut input: R) -> Result<Vec<RemapTable>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut tables = Vec::new();
    let mut rest = bytes.as_slice();
    while !rest.is_empty() {
        let record = tables.len();
        if rest.len() < 8 {
            return Err(Error::parse(record, "remap header truncated"));
        }
        let table_id = u32::from_le_bytes(rest[0..4].try_into().unwrap());
        let row_len = u32::from_le_bytes(rest[4..8].try_into().unwrap()) as usize;
        rest = &rest[8..];
        if rest.len() < row_len * 4 {
            return Err(Error::parse(
                record,
                format!("remap table {table_id} truncated"),
            ));
        }
        let (body, tail) = rest.split_at(row_len * 4);
        let entries: Vec<u32> = body
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if let Some(w) = entries.iter().find(|&&w| unpack(w).is_err()) {
            return Err(Error::parse(
                record,
                format!("table {table_id}: bad tier bits in {w:#010x}"),
            ));
        }
        tables.push(RemapTable { table_id, entries });
        rest = tail;
    }
    Ok(tables)
}

pub fn save_remap(tables: &[RemapTable], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_remap(tables, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_remap(path: &Path) -> Result<Vec<RemapTable>> {
    read_remap(BufReader::new(File::open(path)?))
}
