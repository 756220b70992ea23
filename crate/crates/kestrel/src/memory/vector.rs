//! Exact cosine-similarity vector store with a versioned binary format and
//! a JSON id sidecar.

use std::io::{Read, Write};
use std::path::Path;

use super::MemoryError;

const MAGIC: &[u8; 4] = b"KVEC";
const VERSION: u32 = 1;

/// Cosine similarity; zero when either vector has zero norm or lengths
/// differ.
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    if a.len() != b.len() {
        return 0.0;
    }
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Linear-scan vector store. Entries keep insertion order, which also
/// breaks score ties during search.
#[derive(Debug, Clone)]
pub struct VectorMemory {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
}

impl VectorMemory {
    pub fn new(dim: usize) -> Self {
        Self { dim, ids: Vec::new(), vectors: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: String, vector: Vec<f32>) -> Result<(), MemoryError> {
        if vector.len() != self.dim {
            return Err(MemoryError::DimensionMismatch { expected: self.dim, got: vector.len() });
        }
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    /// Up to `k` entries with cosine similarity at or above `threshold`,
    /// best first; equal scores keep insertion order.
    pub fn search(
        &self,
        query: &[f32],
        k: usize,
        threshold: f32,
    ) -> Result<Vec<(String, f32)>, MemoryError> {
        if query.len() != self.dim {
            return Err(MemoryError::DimensionMismatch { expected: self.dim, got: query.len() });
        }
        let mut scored: Vec<(usize, f32)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, cosine(query, v)))
            .filter(|(_, s)| *s >= threshold)
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, s)| (self.ids[i].clone(), s))
            .collect())
    }

    /// Write the matrix as little-endian f32 rows behind a magic/version
    /// header; ids go to `<path>.ids.json`.
    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(MAGIC)?;
        file.write_all(&VERSION.to_le_bytes())?;
        file.write_all(&(self.dim as u32).to_le_bytes())?;
        file.write_all(&(self.vectors.len() as u32).to_le_bytes())?;
        for vector in &self.vectors {
            for value in vector {
                file.write_all(&value.to_le_bytes())?;
            }
        }
        let ids_json = serde_json::to_string(&self.ids).map_err(|e| MemoryError::Corrupt(e.to_string()))?;
        std::fs::write(sidecar_path(path), ids_json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let mut file = std::fs::File::open(path)?;
        let mut header = [0u8; 16];
        file.read_exact(&mut header)?;
        if &header[0..4] != MAGIC {
            return Err(MemoryError::Corrupt("bad magic".to_string()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(MemoryError::Corrupt(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let mut data = vec![0u8; dim * count * 4];
        file.read_exact(&mut data)?;
        let mut vectors = Vec::with_capacity(count);
        for row in 0..count {
            let mut vector = Vec::with_capacity(dim);
            for col in 0..dim {
                let offset = (row * dim + col) * 4;
                vector.push(f32::from_le_bytes(data[offset..offset + 4].try_into().unwrap()));
            }
            vectors.push(vector);
        }
        let ids_raw = std::fs::read_to_string(sidecar_path(path))?;
        let ids: Vec<String> =
            serde_json::from_str(&ids_raw).map_err(|e| MemoryError::Corrupt(e.to_string()))?;
        if ids.len() != vectors.len() {
            return Err(MemoryError::Corrupt("id sidecar does not match matrix".to_string()));
        }
        Ok(Self { dim, ids, vectors })
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".ids.json");
    std::path::PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_similarity_is_one() {
        let mut store = VectorMemory::new(3);
        store.insert("a".into(), vec![1.0, 0.0, 0.0]).unwrap();
        store.insert("b".into(), vec![0.0, 1.0, 0.0]).unwrap();
        let hits = store.search(&[1.0, 0.0, 0.0], 2, 0.0).unwrap();
        assert_eq!(hits[0].0, "a");
        assert!((hits[0].1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn threshold_filters_orthogonal() {
        let mut store = VectorMemory::new(2);
        store.insert("x".into(), vec![0.0, 1.0]).unwrap();
        let hits = store.search(&[1.0, 0.0], 5, 1.0).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut store = VectorMemory::new(2);
        assert!(matches!(
            store.insert("x".into(), vec![1.0]),
            Err(MemoryError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(store.search(&[1.0], 1, 0.0).is_err());
    }

    #[test]
    fn ties_keep_insertion_order() {
        let mut store = VectorMemory::new(2);
        store.insert("first".into(), vec![1.0, 0.0]).unwrap();
        store.insert("second".into(), vec![2.0, 0.0]).unwrap(); // same direction
        let hits = store.search(&[1.0, 0.0], 2, 0.0).unwrap();
        assert_eq!(hits[0].0, "first");
        assert_eq!(hits[1].0, "second");
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.bin");
        let mut store = VectorMemory::new(4);
        store.insert("a".into(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        store.insert("b".into(), vec![-1.0, 0.5, 0.0, 2.0]).unwrap();
        store.save(&path).unwrap();
        let loaded = VectorMemory::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        let hits = loaded.search(&[0.1, 0.2, 0.3, 0.4], 1, 0.9).unwrap();
        assert_eq!(hits[0].0, "a");
    }
}
