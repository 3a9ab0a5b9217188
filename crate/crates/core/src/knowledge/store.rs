//! On-disk index layout: `chunks.jsonl`, `vectors.bin` (row-major
//! little-endian f32) and `meta.json`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Chunk, Embedder, KnowledgeBase, KnowledgeError};

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    dimension: usize,
    embedder: String,
    chunks: usize,
}

fn io_err(path: &Path, e: impl ToString) -> KnowledgeError {
    KnowledgeError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn save_index(kb: &KnowledgeBase, dir: &Path) -> Result<(), KnowledgeError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let chunks_path = dir.join("chunks.jsonl");
    let mut f = fs::File::create(&chunks_path).map_err(|e| io_err(&chunks_path, e))?;
    let mut vectors = Vec::with_capacity(kb.len() * kb.embedder().dimension() * 4);
    for c in kb.chunks() {
        let line = serde_json::to_string(c).map_err(|e| io_err(&chunks_path, e))?;
        writeln!(f, "{line}").map_err(|e| io_err(&chunks_path, e))?;
        for x in &c.vector {
            vectors.extend_from_slice(&x.to_le_bytes());
        }
    }
    let vec_path = dir.join("vectors.bin");
    fs::write(&vec_path, vectors).map_err(|e| io_err(&vec_path, e))?;
    let meta = Meta {
        dimension: kb.embedder().dimension(),
        embedder: kb.embedder().id().to_string(),
        chunks: kb.len(),
    };
    let meta_path = dir.join("meta.json");
    fs::write(&meta_path, serde_json::to_vec_pretty(&meta).expect("meta serializes"))
        .map_err(|e| io_err(&meta_path, e))
}

/// Loads an index written by [`save_index`]; `embedder` must match the one
/// recorded in `meta.json`.
pub fn load_index(dir: &Path, embedder: Box<dyn Embedder>) -> Result<KnowledgeBase, KnowledgeError> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_slice(&fs::read(&meta_path).map_err(|e| io_err(&meta_path, e))?)
        .map_err(|e| io_err(&meta_path, e))?;
    if meta.embedder != embedder.id() || meta.dimension != embedder.dimension() {
        return Err(KnowledgeError::EmbedderMismatch {
            expected: meta.embedder,
            got: embedder.id().to_string(),
        });
    }
    let vec_path = dir.join("vectors.bin");
    let raw = fs::read(&vec_path).map_err(|e| io_err(&vec_path, e))?;
    if raw.len() != meta.chunks * meta.dimension * 4 {
        return Err(io_err(&vec_path, format!(
            "expected {} bytes for {} chunks of dimension {}, found {}",
            meta.chunks * meta.dimension * 4,
            meta.chunks,
            meta.dimension,
            raw.len()
        )));
    }
    let chunks_path = dir.join("chunks.jsonl");
    let f = fs::File::open(&chunks_path).map_err(|e| io_err(&chunks_path, e))?;
    let mut kb = KnowledgeBase::new(embedder);
    let row = meta.dimension * 4;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(&chunks_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut chunk: Chunk = serde_json::from_str(&line)
            .map_err(|e| io_err(&chunks_path, format!("line {}: {e}", i + 1)))?;
        let bytes = raw
            .get(i * row..(i + 1) * row)
            .ok_or_else(|| io_err(&chunks_path, "more chunks than vectors"))?;
        chunk.vector = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        kb.push_chunk(chunk);
    }
    if kb.len() != meta.chunks {
        return Err(io_err(&chunks_path, format!("expected {} chunks, found {}", meta.chunks, kb.len())));
    }
    Ok(kb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{bundled_index, HashedTfEmbedder};

    #[test]
    fn save_and_load() {
        let kb = bundled_index();
        let dir = tempfile::tempdir().unwrap();
        save_index(&kb, dir.path()).unwrap();
        let back = load_index(dir.path(), Box::new(HashedTfEmbedder::default())).unwrap();
        assert_eq!(back.chunks(), kb.chunks());
        let q = "exploit unrealircd backdoor";
        let a: Vec<_> = kb.retrieve(q, 3).unwrap().into_iter().map(|e| (e.chunk.doc_id, e.chunk.seq)).collect();
        let b: Vec<_> = back.retrieve(q, 3).unwrap().into_iter().map(|e| (e.chunk.doc_id, e.chunk.seq)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn short_vector_file_rejected() {
        let kb = bundled_index();
        let dir = tempfile::tempdir().unwrap();
        save_index(&kb, dir.path()).unwrap();
        std::fs::write(dir.path().join("vectors.bin"), [0u8; 8]).unwrap();
        assert!(load_index(dir.path(), Box::new(HashedTfEmbedder::default())).is_err());
    }
}
