//! Single-file binary index format.
//!
//! Little-endian throughout:
//!
//! ```text
//! header    magic "PRAGIDX1", version u32, scalar width u8, dimension u32,
//!           bm25 k1 f64, bm25 b f64, M u32, ef_construction u32,
//!           ef_search u32, seed u64, embedder id str,
//!           slot count u32, live doc count u32, term count u32
//! documents per slot: live u8, then id str, title str, category u8,
//!           content str, truncated u8, vector [scalar; D]
//! postings  per term: term str, n u32, n x (doc id str, tf u32)
//! graph     entry i64 (-1 = none), max level u32, then per node:
//!           deleted u8, level u32, unit vector [scalar; D],
//!           per layer: n u32, n x u32
//! trailer   CRC32 of everything above
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8.

use std::collections::BTreeMap;
use std::path::Path;

use crate::embedding::EmbeddingVector;
use crate::scalar::Scalar;
use crate::text::tokenize;

use super::hnsw::{HnswGraph, Node};
use super::{Category, DocumentRecord, IndexConfig, IndexError, SearchIndex};

pub const MAGIC: &[u8; 8] = b"PRAGIDX1";
pub const FORMAT_VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn scalars<F: Scalar>(&mut self, values: &[F]) {
        for v in values {
            v.write_le(&mut self.buf);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> IndexError {
    IndexError::CorruptFile(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| corrupt("unexpected end of data"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn i64(&mut self) -> Result<i64, IndexError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, IndexError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String, IndexError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| corrupt("invalid UTF-8 string"))
    }
    fn scalars<F: Scalar>(&mut self, n: usize) -> Result<Vec<F>, IndexError> {
        let bytes = self.take(n * F::BYTES)?;
        Ok(bytes.chunks_exact(F::BYTES).map(F::read_le).collect())
    }
    fn flag(&mut self) -> Result<bool, IndexError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(corrupt(format!("bad flag byte {other}"))),
        }
    }
}

/// Serializes the index, tombstones included, so a reloaded index answers
/// every query exactly as the original does.
pub fn encode_index<F: Scalar>(index: &SearchIndex<F>) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    let cfg = &index.config;
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(F::BYTES as u8);
    w.u32(cfg.dimension as u32);
    w.f64(cfg.bm25_k1);
    w.f64(cfg.bm25_b);
    w.u32(cfg.hnsw_m as u32);
    w.u32(cfg.hnsw_ef_construction as u32);
    w.u32(cfg.hnsw_ef_search as u32);
    w.u64(cfg.seed);
    w.str(&index.embedder_id);
    w.u32(index.slots.len() as u32);
    w.u32(index.len() as u32);
    w.u32(index.postings.len() as u32);

    for slot in &index.slots {
        match slot {
            None => w.u8(0),
            Some(doc) => {
                w.u8(1);
                w.str(&doc.id);
                w.str(&doc.title);
                w.u8(doc.category.code());
                w.str(&doc.content);
                w.u8(u8::from(doc.embedding_truncated));
                w.scalars(doc.content_vector.as_slice());
            }
        }
    }

    for (term, list) in &index.postings {
        w.str(term);
        w.u32(list.len() as u32);
        for (id, tf) in list {
            w.str(id);
            w.u32(*tf);
        }
    }

    let g = &index.graph;
    w.i64(g.entry.map_or(-1, i64::from));
    w.u32(g.max_level as u32);
    for node in &g.nodes {
        w.u8(u8::from(node.deleted));
        w.u32(node.level() as u32);
        w.scalars(&node.vector);
        for layer in &node.links {
            w.u32(layer.len() as u32);
            for n in layer {
                w.u32(*n);
            }
        }
    }

    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

pub fn decode_index<F: Scalar>(bytes: &[u8]) -> Result<SearchIndex<F>, IndexError> {
    if bytes.len() < MAGIC.len() + 4 + 4 {
        return Err(corrupt("file too short"));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }

    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(IndexError::FormatVersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let width = r.u8()? as usize;
    if width != F::BYTES {
        return Err(IndexError::ScalarMismatch {
            expected: F::NAME.to_string(),
            found: format!("{}-byte", width),
        });
    }
    let config = IndexConfig {
        dimension: r.u32()? as usize,
        bm25_k1: r.f64()?,
        bm25_b: r.f64()?,
        hnsw_m: r.u32()? as usize,
        hnsw_ef_construction: r.u32()? as usize,
        hnsw_ef_search: r.u32()? as usize,
        seed: r.u64()?,
    };
    config
        .validate()
        .map_err(|e| corrupt(format!("stored config invalid: {e}")))?;
    let dim = config.dimension;
    let embedder_id = r.str()?;
    let slot_count = r.u32()? as usize;
    let live_count = r.u32()? as usize;
    let term_count = r.u32()? as usize;

    let mut slots = Vec::with_capacity(slot_count.min(body.len()));
    let mut id_to_slot = BTreeMap::new();
    let mut doc_lengths = BTreeMap::new();
    let mut total_length = 0u64;
    for i in 0..slot_count {
        if !r.flag()? {
            slots.push(None);
            continue;
        }
        let id = r.str()?;
        let title = r.str()?;
        let category = Category::from_code(r.u8()?).ok_or_else(|| corrupt("bad category"))?;
        let content = r.str()?;
        let truncated = r.flag()?;
        let vector = EmbeddingVector::new(r.scalars::<F>(dim)?)
            .map_err(|_| corrupt("non-finite vector"))?;
        let len = tokenize(&content).len() as u32;
        total_length += u64::from(len);
        doc_lengths.insert(id.clone(), len);
        if id_to_slot.insert(id.clone(), i as u32).is_some() {
            return Err(corrupt(format!("duplicate document id `{id}`")));
        }
        slots.push(Some(DocumentRecord {
            id,
            title,
            category,
            content,
            content_vector: vector,
            embedding_truncated: truncated,
        }));
    }
    if id_to_slot.len() != live_count {
        return Err(corrupt("live document count mismatch"));
    }

    let mut postings = BTreeMap::new();
    for _ in 0..term_count {
        let term = r.str()?;
        let n = r.u32()? as usize;
        let mut list = BTreeMap::new();
        for _ in 0..n {
            let id = r.str()?;
            let tf = r.u32()?;
            list.insert(id, tf);
        }
        postings.insert(term, list);
    }

    let entry = match r.i64()? {
        -1 => None,
        e if e >= 0 && (e as usize) < slot_count => Some(e as u32),
        _ => return Err(corrupt("bad entry point")),
    };
    let max_level = r.u32()? as usize;
    let mut nodes = Vec::with_capacity(slot_count.min(body.len()));
    for (i, slot) in slots.iter().enumerate() {
        let deleted = r.flag()?;
        if deleted == slot.is_some() {
            return Err(corrupt(format!("node {i} liveness differs from its slot")));
        }
        let level = r.u32()? as usize;
        if level > max_level {
            return Err(corrupt("node level above max level"));
        }
        let vector = r.scalars::<F>(dim)?;
        let mut links = Vec::with_capacity(level + 1);
        for _ in 0..=level {
            let n = r.u32()? as usize;
            let mut layer = Vec::with_capacity(n.min(body.len()));
            for _ in 0..n {
                let id = r.u32()?;
                if id as usize >= slot_count {
                    return Err(corrupt("neighbor id out of range"));
                }
                layer.push(id);
            }
            links.push(layer);
        }
        nodes.push(Node {
            vector,
            links,
            deleted,
        });
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }

    let params = config.hnsw_params();
    let index = SearchIndex {
        config,
        embedder_id,
        slots,
        id_to_slot,
        postings,
        doc_lengths,
        total_length,
        graph: HnswGraph::from_parts(params, nodes, entry, max_level),
    };
    index.check_invariants().map_err(corrupt)?;
    Ok(index)
}

pub fn save_index<F: Scalar>(index: &SearchIndex<F>, path: &Path) -> Result<(), IndexError> {
    let bytes = encode_index(index);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_index<F: Scalar>(path: &Path) -> Result<SearchIndex<F>, IndexError> {
    let bytes = std::fs::read(path)?;
    decode_index(&bytes)
}
