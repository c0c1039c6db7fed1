use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DataError;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"MMEB";
pub const EMBEDDING_VERSION: u32 = 1;

/// Dense `n x d` matrix of f32 embeddings for one modality, with row ids.
///
/// File layout: `MMEB`, then little-endian u32 `version, n, d`, then `n*d`
/// little-endian f32 values row-major, then `n` newline-terminated UTF-8 ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::Format("embedding width must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(DataError::Format(format!(
                "expected {} values for {} rows of width {dim}, got {}",
                ids.len() * dim,
                ids.len(),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::Format(format!(
                "non-finite value in row {} (`{}`)",
                pos / dim,
                ids[pos / dim]
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.contains('\n') {
                return Err(DataError::Format(format!("id `{id:?}` contains a newline")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(DataError::IdMismatch {
                    id: id.clone(),
                    detail: "appears twice in embedding store".into(),
                });
            }
        }
        Ok(EmbeddingStore {
            ids,
            dim,
            data,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Row widened to f64 for the numeric code.
    pub fn get_f64(&self, id: &str) -> Option<Vec<f64>> {
        self.get(id).map(|r| r.iter().map(|&v| v as f64).collect())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DataError> {
        w.write_all(EMBEDDING_MAGIC)?;
        for v in [EMBEDDING_VERSION, self.ids.len() as u32, self.dim as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        for id in &self.ids {
            w.write_all(id.as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, DataError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| DataError::Format("truncated header".into()))?;
        if &magic != EMBEDDING_MAGIC {
            return Err(DataError::Format(format!("bad magic {magic:?}")));
        }
        let mut header = [0u32; 3];
        for slot in header.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|_| DataError::Format("truncated header".into()))?;
            *slot = u32::from_le_bytes(b);
        }
        let [version, n, d] = header;
        if version != EMBEDDING_VERSION {
            return Err(DataError::Format(format!("unsupported version {version}")));
        }
        let (n, d) = (n as usize, d as usize);
        let mut raw = vec![0u8; n * d * 4];
        r.read_exact(&mut raw).map_err(|_| {
            DataError::Format(format!("truncated body: expected {n}x{d} floats"))
        })?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut tail = Vec::new();
        r.read_to_end(&mut tail)?;
        let tail = String::from_utf8(tail)
            .map_err(|_| DataError::Format("ids are not valid UTF-8".into()))?;
        if n > 0 && !tail.ends_with('\n') {
            return Err(DataError::Format("last id is not newline-terminated".into()));
        }
        let ids: Vec<String> = tail.lines().map(str::to_string).collect();
        if ids.len() != n {
            return Err(DataError::Format(format!(
                "header declares {n} rows but {} ids follow",
                ids.len()
            )));
        }
        EmbeddingStore::new(ids, d, data)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let file = File::open(path).map_err(|_| DataError::MissingFile(path.to_path_buf()))?;
        Self::read_from(BufReader::new(file))
    }
}
