//! Block streams as JSON lines; snapshot tables as `height\tz_hex\th_hex`.

use std::io::{BufRead, Write};

use super::{Block, LedgerError, Snapshot};
use crate::encoding::{from_hex, to_hex};

pub fn write_blocks<W: Write>(mut out: W, blocks: &[Block]) -> Result<(), LedgerError> {
    for b in blocks {
        let line = serde_json::to_string(b).map_err(|e| LedgerError::Malformed(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_blocks<R: BufRead>(input: R) -> Result<Vec<Block>, LedgerError> {
    let mut blocks = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let block = serde_json::from_str(&line).map_err(|e| LedgerError::Parse { line: i + 1, msg: e.to_string() })?;
        blocks.push(block);
    }
    Ok(blocks)
}

pub fn write_snapshots<W: Write>(mut out: W, snapshots: &[Snapshot]) -> Result<(), LedgerError> {
    for s in snapshots {
        writeln!(out, "{}\t{}\t{}", s.height, to_hex(&s.digest), hex::encode(s.rolling_hash))?;
    }
    Ok(())
}

pub fn read_snapshots<R: BufRead>(input: R) -> Result<Vec<Snapshot>, LedgerError> {
    let mut snapshots = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| LedgerError::Parse { line: i + 1, msg: msg.to_string() };
        let fields: Vec<&str> = line.split('\t').collect();
        let [height, z, h] = fields[..] else {
            return Err(err("expected three tab-separated fields"));
        };
        let height = height.parse().map_err(|_| err("bad height"))?;
        let digest = from_hex(z).ok_or_else(|| err("bad digest hex"))?;
        let rolling_hash = hex::decode(h)
            .ok()
            .and_then(|b| <[u8; 32]>::try_from(b).ok())
            .ok_or_else(|| err("bad rolling hash hex"))?;
        snapshots.push(Snapshot { height, digest, rolling_hash });
    }
    Ok(snapshots)
}
