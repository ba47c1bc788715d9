//! Injective byte encoding of a KV write; this is the accumulated element.
//!
//! Layout (all integers big-endian):
//! `u32 key_len | key | u32 value_len | value | u64 block_height | u32 tx_index | u8 is_delete`

use super::{KVWrite, LedgerError, Version};

pub fn canonical_encode(w: &KVWrite) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + w.key.len() + 4 + w.value.len() + 8 + 4 + 1);
    out.extend_from_slice(&(w.key.len() as u32).to_be_bytes());
    out.extend_from_slice(&w.key);
    out.extend_from_slice(&(w.value.len() as u32).to_be_bytes());
    out.extend_from_slice(&w.value);
    out.extend_from_slice(&w.version.block_height.to_be_bytes());
    out.extend_from_slice(&w.version.tx_index.to_be_bytes());
    out.push(u8::from(w.is_delete));
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LedgerError> {
        if self.buf.len() < n {
            return Err(LedgerError::Malformed("truncated write encoding".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, LedgerError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, LedgerError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn canonical_decode(bytes: &[u8]) -> Result<KVWrite, LedgerError> {
    let mut r = Reader { buf: bytes };
    let key_len = r.u32()? as usize;
    let key = r.take(key_len)?.to_vec();
    let value_len = r.u32()? as usize;
    let value = r.take(value_len)?.to_vec();
    let block_height = r.u64()?;
    let tx_index = r.u32()?;
    let is_delete = match r.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(LedgerError::Malformed(format!("bad delete flag {other}"))),
    };
    if !r.buf.is_empty() {
        return Err(LedgerError::Malformed("trailing bytes after write encoding".into()));
    }
    Ok(KVWrite { key, value, is_delete, version: Version { block_height, tx_index } })
}
