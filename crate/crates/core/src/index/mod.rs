//! Exact cosine search over stored code vectors, with a binary file format
//! and a JSON Lines metadata sidecar.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 8] = b"CEDGIDX1";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("dimension mismatch: index has {expected}, vector has {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("zero or non-finite vector")]
    ZeroVector,
    #[error("index is empty")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("bad magic: not an index file")]
    BadMagic,
    #[error("unsupported index version {0}")]
    Version(u32),
    #[error("index file truncated at byte offset {0}")]
    Truncated(u64),
    #[error("malformed index file: {0}")]
    Malformed(String),
    #[error("metadata sidecar: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

/// One search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Snippet metadata stored next to the vectors.
pub type Metadata = serde_json::Value;

#[derive(Serialize, Deserialize)]
struct SidecarLine {
    id: String,
    meta: Metadata,
}

/// Append-only collection of equally sized vectors with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchIndex {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    norms: Vec<f64>,
    positions: HashMap<String, usize>,
    metadata: BTreeMap<String, Metadata>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn usable(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.iter().any(|&x| x != 0.0)
}

impl SearchIndex {
    pub fn new(dim: usize) -> Self {
        SearchIndex { dim, records: Vec::new(), norms: Vec::new(), positions: HashMap::new(), metadata: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn add(&mut self, id: &str, vector: Vec<f64>, metadata: Option<Metadata>) -> Result<(), IndexError> {
        if vector.len() != self.dim {
            return Err(IndexError::Dimension { expected: self.dim, actual: vector.len() });
        }
        if self.positions.contains_key(id) {
            return Err(IndexError::DuplicateId(id.to_string()));
        }
        if !usable(&vector) {
            return Err(IndexError::ZeroVector);
        }
        self.positions.insert(id.to_string(), self.records.len());
        self.norms.push(norm(&vector));
        self.records.push(EmbeddingRecord { id: id.to_string(), vector });
        if let Some(m) = metadata {
            self.metadata.insert(id.to_string(), m);
        }
        Ok(())
    }

    pub fn vector(&self, id: &str) -> Option<&[f64]> {
        self.positions.get(id).map(|&i| self.records[i].vector.as_slice())
    }

    pub fn metadata(&self, id: &str) -> Option<&Metadata> {
        self.metadata.get(id)
    }

    /// Top `k` records by cosine similarity to `query`, scores descending and
    /// ties broken by ascending id.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<Hit>, IndexError> {
        if self.is_empty() {
            return Err(IndexError::Empty);
        }
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.len() != self.dim {
            return Err(IndexError::Dimension { expected: self.dim, actual: query.len() });
        }
        if !usable(query) {
            return Err(IndexError::ZeroVector);
        }
        let qn = norm(query);
        let mut hits: Vec<(f64, usize)> = self
            .records
            .iter()
            .zip(&self.norms)
            .enumerate()
            .map(|(i, (r, n))| {
                let dot: f64 = r.vector.iter().zip(query).map(|(a, b)| a * b).sum();
                ((dot / (n * qn)).clamp(-1.0, 1.0), i)
            })
            .collect();
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.total_cmp(&a.0).then_with(|| self.records[a.1].id.cmp(&self.records[b.1].id))
        };
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, by_rank);
            hits.truncate(k);
        }
        hits.sort_unstable_by(by_rank);
        Ok(hits.into_iter().map(|(score, i)| Hit { id: self.records[i].id.clone(), score }).collect())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), IndexError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&u32::try_from(self.dim).map_err(|_| IndexError::Malformed("dimension too large".into()))?.to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            let id = r.id.as_bytes();
            w.write_all(&u32::try_from(id.len()).map_err(|_| IndexError::Malformed("id too long".into()))?.to_le_bytes())?;
            w.write_all(id)?;
            for x in &r.vector {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads the vector file; metadata is left empty.
    pub fn read_from(r: &mut impl Read) -> Result<Self, IndexError> {
        let mut rd = Reader { inner: r, offset: 0 };
        let mut magic = [0u8; 8];
        rd.fill(&mut magic)?;
        if &magic != MAGIC {
            return Err(IndexError::BadMagic);
        }
        let version = rd.u32()?;
        if version != VERSION {
            return Err(IndexError::Version(version));
        }
        let dim = rd.u32()? as usize;
        let count = rd.u64()?;
        let mut index = SearchIndex::new(dim);
        for _ in 0..count {
            let len = rd.u32()? as usize;
            let mut id = vec![0u8; len];
            rd.fill(&mut id)?;
            let id = String::from_utf8(id).map_err(|_| IndexError::Malformed("id is not UTF-8".into()))?;
            let mut vector = Vec::with_capacity(dim);
            for _ in 0..dim {
                vector.push(f64::from_le_bytes(rd.array()?));
            }
            index.add(&id, vector, None)?;
        }
        let mut extra = [0u8; 1];
        if rd.inner.read(&mut extra)? != 0 {
            return Err(IndexError::Malformed(format!("trailing bytes after offset {}", rd.offset)));
        }
        Ok(index)
    }

    /// Path of the metadata sidecar for an index file.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".meta.jsonl");
        PathBuf::from(name)
    }

    /// Writes the index file and its metadata sidecar.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        let mut side = BufWriter::new(File::create(Self::sidecar_path(path))?);
        for (id, meta) in &self.metadata {
            serde_json::to_writer(&mut side, &SidecarLine { id: id.clone(), meta: meta.clone() })?;
            side.write_all(b"\n")?;
        }
        side.flush()?;
        Ok(())
    }

    /// Loads an index file and, when present, its sidecar.
    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let mut index = Self::read_from(&mut BufReader::new(File::open(path)?))?;
        let side = Self::sidecar_path(path);
        if side.exists() {
            for line in BufReader::new(File::open(side)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let SidecarLine { id, meta } = serde_json::from_str(&line)?;
                if !index.positions.contains_key(&id) {
                    return Err(IndexError::Malformed(format!("metadata for unknown id {id}")));
                }
                index.metadata.insert(id, meta);
            }
        }
        Ok(index)
    }
}

struct Reader<'a, R: Read> {
    inner: &'a mut R,
    offset: u64,
}

impl<R: Read> Reader<'_, R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<(), IndexError> {
        let mut done = 0;
        while done < buf.len() {
            match self.inner.read(&mut buf[done..]) {
                Ok(0) => return Err(IndexError::Truncated(self.offset + done as u64)),
                Ok(n) => done += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], IndexError> {
        let mut b = [0u8; N];
        self.fill(&mut b)?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
}

/// Strategy for answering top-k queries over an index. Only the exact scan
/// ships; approximate backends can implement this trait.
pub trait SearchBackend {
    fn search(&self, index: &SearchIndex, query: &[f64], k: usize) -> Result<Vec<Hit>, IndexError>;
}

/// Full cosine scan over every record.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactScan;

impl SearchBackend for ExactScan {
    fn search(&self, index: &SearchIndex, query: &[f64], k: usize) -> Result<Vec<Hit>, IndexError> {
        index.search(query, k)
    }
}
