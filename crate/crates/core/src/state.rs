//! Binary state file for a [`SupplyChain`].
//!
//! ```text
//! magic      4 bytes  "PHBF"
//! version    1 byte   1
//! header     8 x u64 little-endian: T, g, L, N, block_bits, m, k, th
//! locations  L x (u64 little-endian byte length, UTF-8 name)
//! payload    bit arrays of ceil(m / 8) bytes each, MSB-first, in order:
//!            for each location, for each node in level order, for each
//!            block: the block filter; then the marking set; then the N
//!            binding block filters; then the N sold block filters
//! ```
//!
//! Insertion counts are not stored; loaded filters recover a lower bound
//! from their set bits.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::bloom::{byte_len, BloomFilter};
use crate::error::{Error, Result};
use crate::hbf::{HbfParams, HierarchicalFilter};
use crate::persistent::PersistentFilter;
use crate::supply_chain::SupplyChain;
use crate::temporal::TimeTree;

pub const MAGIC: &[u8; 4] = b"PHBF";
pub const VERSION: u8 = 1;

pub fn encode(chain: &SupplyChain) -> Vec<u8> {
    let tree = chain.tree();
    let p = chain.params();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for field in [
        tree.days(),
        tree.granularity(),
        chain.locations().len() as u64,
        p.blocks as u64,
        p.block_bits as u64,
        p.m,
        u64::from(p.k),
        p.threshold as u64,
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for name in chain.locations() {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    let put_hbf = |out: &mut Vec<u8>, hbf: &HierarchicalFilter| {
        for f in hbf.filters() {
            out.extend_from_slice(f.as_bytes());
        }
    };
    for filter in chain.location_filters() {
        for node in filter.nodes() {
            put_hbf(&mut out, node);
        }
    }
    out.extend_from_slice(chain.marking_set().as_bytes());
    put_hbf(&mut out, chain.binding_filter());
    put_hbf(&mut out, chain.sold_filter());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Format(format!("truncated while reading {what}"))),
        }
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let bytes = self.take(8, what)?;
        Ok(u64::from_le_bytes(bytes.try_into().expect("8 bytes")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| Error::Format(format!("{what} too large")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<SupplyChain> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("missing PHBF magic".into()));
    }
    let version = r.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, expected {VERSION}"
        )));
    }
    let days = r.u64("T")?;
    let granularity = r.u64("g")?;
    let location_count = r.usize("L")?;
    let blocks = r.usize("N")?;
    let block_bits = r.usize("block_bits")?;
    let m = r.u64("m")?;
    let k = u32::try_from(r.u64("k")?).map_err(|_| Error::Format("k too large".into()))?;
    let threshold = r.usize("th")?;

    let params = HbfParams::new(blocks, block_bits, m, k, threshold)
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let tree =
        TimeTree::new(days, granularity).map_err(|e| Error::Format(format!("bad header: {e}")))?;

    let expected = (location_count as u128 * tree.node_count() as u128 * blocks as u128
        + 1
        + 2 * blocks as u128)
        * byte_len(m) as u128;
    if expected > bytes.len() as u128 {
        return Err(Error::Format(format!(
            "header describes {expected} payload bytes but the file has {}",
            bytes.len()
        )));
    }

    let mut locations = Vec::with_capacity(location_count);
    for _ in 0..location_count {
        let len = r.usize("location name length")?;
        let name = r.take(len, "location name")?;
        let name = std::str::from_utf8(name)
            .map_err(|_| Error::Format("location name is not UTF-8".into()))?;
        locations.push(name.to_string());
    }

    let chunk = byte_len(m);
    let read_filter = |r: &mut Reader| -> Result<BloomFilter> {
        BloomFilter::from_bytes(m, k, r.take(chunk, "bit array")?)
    };
    let read_hbf = |r: &mut Reader| -> Result<HierarchicalFilter> {
        let filters = (0..blocks).map(|_| read_filter(r)).collect::<Result<_>>()?;
        HierarchicalFilter::from_filters(params, filters)
    };
    let mut location_filters = Vec::with_capacity(location_count);
    for _ in 0..location_count {
        let nodes = (0..tree.node_count())
            .map(|_| read_hbf(&mut r))
            .collect::<Result<_>>()?;
        location_filters.push(PersistentFilter::from_nodes(tree, params, nodes)?);
    }
    let marking_set = BloomFilter::from_bytes(m, k, r.take(chunk, "marking set")?)?;
    let binding_filter = read_hbf(&mut r)?;
    let sold_filter = read_hbf(&mut r)?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    SupplyChain::from_parts(
        locations,
        location_filters,
        marking_set,
        binding_filter,
        sold_filter,
    )
    .map_err(|e| Error::Format(e.to_string()))
}

pub fn load(path: &Path) -> Result<SupplyChain> {
    decode(&fs::read(path)?)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn save(path: &Path, chain: &SupplyChain) -> Result<()> {
    let tmp = sibling(path, "tmp");
    let mut file = File::create(&tmp)?;
    file.write_all(&encode(chain))?;
    file.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

/// Exclusive advisory lock on a state file, held as `<state>.lock`.
#[derive(Debug)]
pub struct StateLock {
    path: PathBuf,
}

impl StateLock {
    pub fn acquire(state: &Path) -> io::Result<Self> {
        let path = sibling(state, "lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(io::Error::new(
                e.kind(),
                format!(
                    "{} is locked by another invocation ({})",
                    state.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(e),
        }
    }
}

impl Drop for StateLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
