//! Content-addressed on-disk caches for window graphs and embeddings.
//!
//! Graph entries are two text files per series key (edge list and raw CI,
//! one decimal per line), written to a temporary name and renamed into
//! place. Embeddings live in one append-only binary file with a text index;
//! appends are serialized by an exclusive lock on the index. Any entry that
//! fails to parse or checksum is reported as missing so callers recompute.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::graph::Graph;
use crate::influence::{ci, NodeWeights};
use crate::struc2vec::EmbeddingMatrix;
use crate::visibility::vg_fast;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Built,
    Reused,
    /// An entry existed but was unreadable and has been replaced.
    Rebuilt,
}

fn write_atomic(path: &Path, bytes: &[u8], durable: bool) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}-{:?}", std::process::id(), std::thread::current().id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        if durable {
            f.sync_all()?;
        }
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub struct GraphCache {
    dir: PathBuf,
}

impl GraphCache {
    pub fn open(root: &Path) -> Result<Self> {
        let dir = root.join("graphs");
        fs::create_dir_all(&dir)?;
        Ok(GraphCache { dir })
    }

    fn paths(&self, key: &str, radius: usize) -> (PathBuf, PathBuf) {
        let shard = self.dir.join(&key[..2]);
        (shard.join(format!("{key}.edges")), shard.join(format!("{key}.l{radius}.ci")))
    }

    fn read(&self, key: &str, radius: usize) -> Result<Option<(Graph, Vec<u64>)>> {
        let (ep, cp) = self.paths(key, radius);
        if !ep.exists() || !cp.exists() {
            return Ok(None);
        }
        let g = Graph::from_edge_list(&fs::read_to_string(&ep)?)?;
        let w = NodeWeights::from_raw_text(&fs::read_to_string(&cp)?, radius)?;
        if w.raw.len() != g.n() {
            return Err(Error::CorruptCache(format!("{}: CI length {} for {} nodes", cp.display(), w.raw.len(), g.n())));
        }
        if w.raw.iter().any(|v| v.fract() != 0.0) {
            return Err(Error::CorruptCache(format!("{}: non-integer CI", cp.display())));
        }
        Ok(Some((g, w.raw.iter().map(|&v| v as u64).collect())))
    }

    /// Graph and raw CI of `values`, built and stored on a miss.
    pub fn get_or_build(&self, values: &[f64], radius: usize) -> Result<(Graph, Vec<u64>, Lookup)> {
        let key = crate::embed::series_key(values);
        let mut outcome = Lookup::Built;
        match self.read(&key, radius) {
            Ok(Some((g, raw))) if g.n() == values.len() => return Ok((g, raw, Lookup::Reused)),
            Ok(None) => {}
            Ok(Some(_)) | Err(_) => {
                log::warn!("graph cache entry {key} is corrupt; rebuilding");
                outcome = Lookup::Rebuilt;
            }
        }
        let g = vg_fast(values)?;
        let raw = ci(&g, radius);
        let (ep, cp) = self.paths(&key, radius);
        fs::create_dir_all(ep.parent().unwrap())?;
        write_atomic(&ep, g.to_edge_list().as_bytes(), false)?;
        let w = NodeWeights::compute(&g, radius);
        write_atomic(&cp, w.raw_to_text().as_bytes(), false)?;
        Ok((g, raw, outcome))
    }
}

const EMB_MAGIC: &[u8; 12] = b"PGEMBSTORE\0\0";
const EMB_VERSION: u32 = 1;
const KEY_LEN: usize = 64;

/// Append-only embedding records:
/// `key (64 hex bytes) | n u32 | dim u32 | n*dim f64 LE | checksum (8 bytes)`.
pub struct EmbeddingStore {
    data_path: PathBuf,
    index_path: PathBuf,
    lock_path: PathBuf,
    index: HashMap<String, u64>,
}

fn checksum(key: &str, n: u32, dim: u32, payload: &[u8]) -> [u8; 8] {
    let mut h = Sha256::new();
    h.update(key.as_bytes());
    h.update(n.to_le_bytes());
    h.update(dim.to_le_bytes());
    h.update(payload);
    h.finalize()[..8].try_into().unwrap()
}

impl EmbeddingStore {
    pub fn open(root: &Path) -> Result<Self> {
        let dir = root.join("embeddings");
        fs::create_dir_all(&dir)?;
        let mut store = EmbeddingStore {
            data_path: dir.join("records.bin"),
            index_path: dir.join("index.txt"),
            lock_path: dir.join("write.lock"),
            index: HashMap::new(),
        };
        store.ensure_header()?;
        store.reload_index()?;
        Ok(store)
    }

    fn ensure_header(&self) -> Result<()> {
        let lock = self.lock()?;
        let fresh = fs::metadata(&self.data_path).map(|m| m.len() == 0).unwrap_or(true);
        if fresh {
            let mut header = Vec::with_capacity(16);
            header.extend_from_slice(EMB_MAGIC);
            header.extend_from_slice(&EMB_VERSION.to_le_bytes());
            write_atomic(&self.data_path, &header, true)?;
            write_atomic(&self.index_path, b"", true)?;
        } else {
            let mut h = [0u8; 16];
            File::open(&self.data_path)?.read_exact(&mut h)?;
            if &h[..12] != EMB_MAGIC || u32::from_le_bytes(h[12..16].try_into().unwrap()) != EMB_VERSION {
                return Err(Error::CorruptCache(format!("{}: bad header", self.data_path.display())));
            }
        }
        drop(lock);
        Ok(())
    }

    fn lock(&self) -> Result<File> {
        let f = OpenOptions::new().create(true).truncate(false).write(true).open(&self.lock_path)?;
        f.lock()?;
        Ok(f)
    }

    /// Re-reads the index; later lines for the same key win.
    pub fn reload_index(&mut self) -> Result<()> {
        self.index.clear();
        let text = fs::read_to_string(&self.index_path).unwrap_or_default();
        for line in text.lines() {
            let mut parts = line.split_whitespace();
            if let (Some(k), Some(off)) = (parts.next(), parts.next()) {
                if let Ok(off) = off.parse() {
                    self.index.insert(k.to_string(), off);
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// `Ok(None)` on a miss; `Err(CorruptCache)` when the record is damaged.
    pub fn get(&self, key: &str) -> Result<Option<EmbeddingMatrix>> {
        let mut f = File::open(&self.data_path)?;
        let len = f.metadata()?.len();
        self.read_record(&mut f, len, key)
    }

    /// Looks up many keys through one file handle.
    pub fn get_many(&self, keys: &[String]) -> Result<Vec<Result<Option<EmbeddingMatrix>>>> {
        let mut f = File::open(&self.data_path)?;
        let len = f.metadata()?.len();
        Ok(keys.iter().map(|k| self.read_record(&mut f, len, k)).collect())
    }

    fn read_record(&self, f: &mut File, len: u64, key: &str) -> Result<Option<EmbeddingMatrix>> {
        let Some(&off) = self.index.get(key) else { return Ok(None) };
        let corrupt = |m: &str| Error::CorruptCache(format!("embedding {key}: {m}"));
        if off + (KEY_LEN as u64) + 8 > len {
            return Err(corrupt("offset past end of file"));
        }
        f.seek(SeekFrom::Start(off))?;
        let mut head = [0u8; KEY_LEN + 8];
        f.read_exact(&mut head)?;
        if &head[..KEY_LEN] != key.as_bytes() {
            return Err(corrupt("key mismatch"));
        }
        let n = u32::from_le_bytes(head[KEY_LEN..KEY_LEN + 4].try_into().unwrap());
        let dim = u32::from_le_bytes(head[KEY_LEN + 4..].try_into().unwrap());
        let bytes = (n as u64) * (dim as u64) * 8;
        if off + (KEY_LEN as u64) + 8 + bytes + 8 > len {
            return Err(corrupt("truncated record"));
        }
        let mut payload = vec![0u8; bytes as usize];
        f.read_exact(&mut payload)?;
        let mut sum = [0u8; 8];
        f.read_exact(&mut sum)?;
        if sum != checksum(key, n, dim, &payload) {
            return Err(corrupt("checksum mismatch"));
        }
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Some(EmbeddingMatrix { n: n as usize, dim: dim as usize, data }))
    }

    /// Appends records under the store's exclusive lock.
    pub fn put_many(&mut self, entries: &[(String, EmbeddingMatrix)]) -> Result<()> {
        if entries.is_empty() {
            return Ok(());
        }
        let lock = self.lock()?;
        let mut data = OpenOptions::new().append(true).open(&self.data_path)?;
        let mut offset = data.metadata()?.len();
        let mut index_lines = String::new();
        let mut buf = Vec::new();
        for (key, m) in entries {
            if key.len() != KEY_LEN {
                return Err(Error::invalid(format!("embedding key must be {KEY_LEN} hex chars")));
            }
            buf.clear();
            let (n, dim) = (m.n as u32, m.dim as u32);
            let payload: Vec<u8> = m.data.iter().flat_map(|x| x.to_le_bytes()).collect();
            buf.extend_from_slice(key.as_bytes());
            buf.extend_from_slice(&n.to_le_bytes());
            buf.extend_from_slice(&dim.to_le_bytes());
            buf.extend_from_slice(&payload);
            buf.extend_from_slice(&checksum(key, n, dim, &payload));
            data.write_all(&buf)?;
            index_lines.push_str(&format!("{key} {offset}\n"));
            self.index.insert(key.clone(), offset);
            offset += buf.len() as u64;
        }
        data.sync_all()?;
        let mut idx = OpenOptions::new().append(true).create(true).open(&self.index_path)?;
        idx.write_all(index_lines.as_bytes())?;
        idx.sync_all()?;
        drop(lock);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(c: char) -> String {
        std::iter::repeat_n(c, KEY_LEN).collect()
    }

    #[test]
    fn embedding_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let m = EmbeddingMatrix { n: 2, dim: 3, data: vec![1.0, -2.0, 3.5, 0.0, 1e-300, 7.0] };
        {
            let mut s = EmbeddingStore::open(dir.path()).unwrap();
            assert!(s.get(&key('a')).unwrap().is_none());
            s.put_many(&[(key('a'), m.clone()), (key('b'), m.clone())]).unwrap();
            assert_eq!(s.get(&key('b')).unwrap().unwrap(), m);
        }
        let s = EmbeddingStore::open(dir.path()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(&key('a')).unwrap().unwrap(), m);
        let path = dir.path().join("embeddings/records.bin");
        let mut bytes = fs::read(&path).unwrap();
        let at = 16 + KEY_LEN + 8 + 3;
        bytes[at] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(s.get(&key('a')), Err(Error::CorruptCache(_))));
        assert_eq!(s.get(&key('b')).unwrap().unwrap(), m);
    }

    #[test]
    fn graph_cache_reuses_and_repairs() {
        let dir = tempfile::tempdir().unwrap();
        let c = GraphCache::open(dir.path()).unwrap();
        let x = [3.0, 1.0, 2.0, 5.0, 4.0];
        let (g1, ci1, o1) = c.get_or_build(&x, 2).unwrap();
        assert_eq!(o1, Lookup::Built);
        let (g2, ci2, o2) = c.get_or_build(&x, 2).unwrap();
        assert_eq!((o2, &g2, &ci2), (Lookup::Reused, &g1, &ci1));
        let key = crate::embed::series_key(&x);
        fs::write(dir.path().join(format!("graphs/{}/{key}.edges", &key[..2])), "5\n0 9\n").unwrap();
        let (g3, ci3, o3) = c.get_or_build(&x, 2).unwrap();
        assert_eq!((o3, g3, ci3), (Lookup::Rebuilt, g1, ci1));
    }
}
