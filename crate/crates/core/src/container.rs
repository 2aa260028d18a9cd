//! Self-describing binary container shared by preprocessing caches and model
//! checkpoints.
//!
//! Layout (all integers little-endian):
//! magic `LGWNNCF\0`, `u32` version, fingerprint string, `u32` section count,
//! then per section: name string, `u8` kind, `u32` rank, `u64` dims, payload.
//! Strings are a `u32` byte length followed by UTF-8.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, Storage, SymmetricMatrix};

pub const MAGIC: &[u8; 8] = b"LGWNNCF\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SectionData {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    U64 { shape: Vec<usize>, data: Vec<u64> },
    Bytes(Vec<u8>),
}

impl SectionData {
    fn kind(&self) -> u8 {
        match self {
            SectionData::F64 { .. } => 0,
            SectionData::U64 { .. } => 1,
            SectionData::Bytes(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub version: u32,
    pub fingerprint: String,
    pub sections: Vec<(String, SectionData)>,
}

impl Container {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        Self {
            version: FORMAT_VERSION,
            fingerprint: fingerprint.into(),
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, data: SectionData) {
        self.sections.push((name.into(), data));
    }

    pub fn push_array2(&mut self, name: &str, a: &Array2<f64>) {
        self.push(
            name,
            SectionData::F64 {
                shape: vec![a.nrows(), a.ncols()],
                data: a.iter().copied().collect(),
            },
        );
    }

    pub fn push_f64s(&mut self, name: &str, v: &[f64]) {
        self.push(
            name,
            SectionData::F64 {
                shape: vec![v.len()],
                data: v.to_vec(),
            },
        );
    }

    pub fn push_indices(&mut self, name: &str, v: &[usize]) {
        self.push(
            name,
            SectionData::U64 {
                shape: vec![v.len()],
                data: v.iter().map(|&x| x as u64).collect(),
            },
        );
    }

    pub fn push_text(&mut self, name: &str, text: &str) {
        self.push(name, SectionData::Bytes(text.as_bytes().to_vec()));
    }

    pub fn push_csr(&mut self, prefix: &str, m: &CsrMatrix) {
        self.push_indices(&format!("{prefix}.shape"), &[m.nrows(), m.ncols()]);
        self.push_indices(&format!("{prefix}.indptr"), m.indptr());
        self.push_indices(&format!("{prefix}.indices"), m.indices());
        self.push_f64s(&format!("{prefix}.data"), m.data());
    }

    pub fn push_symmetric(&mut self, prefix: &str, m: &SymmetricMatrix) {
        match m.storage() {
            Storage::Dense(d) => {
                self.push_text(&format!("{prefix}.storage"), "dense");
                self.push_array2(&format!("{prefix}.values"), d);
            }
            Storage::Sparse(s) => {
                self.push_text(&format!("{prefix}.storage"), "csr");
                self.push_csr(prefix, s);
            }
        }
    }

    pub fn section(&self, name: &str) -> Result<&SectionData> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d)
            .ok_or_else(|| Error::Cache(format!("missing section {name:?}")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.sections.iter().any(|(n, _)| n == name)
    }

    pub fn f64s(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.section(name)? {
            SectionData::F64 { shape, data } => Ok((shape, data)),
            _ => Err(Error::Cache(format!("section {name:?} is not f64"))),
        }
    }

    pub fn array1(&self, name: &str) -> Result<Array1<f64>> {
        Ok(Array1::from(self.f64s(name)?.1.to_vec()))
    }

    pub fn array2(&self, name: &str) -> Result<Array2<f64>> {
        let (shape, data) = self.f64s(name)?;
        if shape.len() != 2 {
            return Err(Error::Cache(format!("section {name:?} has rank {}", shape.len())));
        }
        Array2::from_shape_vec((shape[0], shape[1]), data.to_vec()).map_err(|e| Error::Cache(e.to_string()))
    }

    pub fn indices(&self, name: &str) -> Result<Vec<usize>> {
        match self.section(name)? {
            SectionData::U64 { data, .. } => Ok(data.iter().map(|&x| x as usize).collect()),
            _ => Err(Error::Cache(format!("section {name:?} is not u64"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<String> {
        match self.section(name)? {
            SectionData::Bytes(b) => String::from_utf8(b.clone()).map_err(|e| Error::Cache(e.to_string())),
            _ => Err(Error::Cache(format!("section {name:?} is not text"))),
        }
    }

    pub fn csr(&self, prefix: &str) -> Result<CsrMatrix> {
        let shape = self.indices(&format!("{prefix}.shape"))?;
        if shape.len() != 2 {
            return Err(Error::Cache(format!("bad shape for {prefix:?}")));
        }
        CsrMatrix::from_parts(
            shape[0],
            shape[1],
            self.indices(&format!("{prefix}.indptr"))?,
            self.indices(&format!("{prefix}.indices"))?,
            self.f64s(&format!("{prefix}.data"))?.1.to_vec(),
        )
        .map_err(|e| Error::Cache(format!("{prefix}: {e}")))
    }

    pub fn symmetric(&self, prefix: &str) -> Result<SymmetricMatrix> {
        match self.text(&format!("{prefix}.storage"))?.as_str() {
            "dense" => SymmetricMatrix::from_dense(self.array2(&format!("{prefix}.values"))?),
            "csr" => SymmetricMatrix::from_sparse(self.csr(prefix)?),
            other => Err(Error::Cache(format!("unknown storage {other:?} for {prefix:?}"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        put_str(&mut out, &self.fingerprint);
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, data) in &self.sections {
            put_str(&mut out, name);
            out.push(data.kind());
            let (shape, payload): (Vec<usize>, Vec<u8>) = match data {
                SectionData::F64 { shape, data } => (shape.clone(), data.iter().flat_map(|v| v.to_le_bytes()).collect()),
                SectionData::U64 { shape, data } => (shape.clone(), data.iter().flat_map(|v| v.to_le_bytes()).collect()),
                SectionData::Bytes(b) => (vec![b.len()], b.clone()),
            };
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Cache("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Cache(format!("format version {version}, expected {FORMAT_VERSION}")));
        }
        let fingerprint = r.string()?;
        let count = r.u32()? as usize;
        let mut sections = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.string()?;
            let kind = r.take(1)?[0];
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let data = match kind {
                0 => SectionData::F64 {
                    data: r.take(len.checked_mul(8).ok_or_else(overflow)?)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                    shape,
                },
                1 => SectionData::U64 {
                    data: r.take(len.checked_mul(8).ok_or_else(overflow)?)?
                        .chunks_exact(8)
                        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                    shape,
                },
                2 => SectionData::Bytes(r.take(len)?.to_vec()),
                k => return Err(Error::Cache(format!("unknown section kind {k}"))),
            };
            sections.push((name, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::Cache("trailing bytes after last section".into()));
        }
        Ok(Self {
            version,
            fingerprint,
            sections,
        })
    }

    /// Writes to a temporary sibling then renames, so readers never see a
    /// partial file.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Reads a file and checks its fingerprint.
    pub fn read_expecting(path: &Path, fingerprint: &str) -> Result<Self> {
        let c = Self::read(path)?;
        if c.fingerprint != fingerprint {
            return Err(Error::Fingerprint {
                expected: fingerprint.into(),
                found: c.fingerprint,
            });
        }
        Ok(c)
    }
}

fn overflow() -> Error {
    Error::Cache("section size overflows".into())
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Cache("truncated container".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Cache(e.to_string()))
    }
}

/// Atomic file write: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// 64-bit FNV-1a, used for content fingerprints.
pub fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_all_kinds() {
        let mut c = Container::new("fp");
        c.push_array2("a", &array![[1.0, -0.0], [f64::MIN_POSITIVE, 3.5]]);
        c.push_indices("i", &[3, 1, 4]);
        c.push_text("t", "dense");
        c.push_csr("m", &CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.5), (1, 0, -2.0)]));
        let back = Container::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.array2("a").unwrap()[[0, 1]].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back.csr("m").unwrap().get(0, 2), 1.5);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = Container::new("x").to_bytes();
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Container::from_bytes(&bad).is_err());
        let mut wrong_version = bytes;
        wrong_version[8] = 99;
        assert!(Container::from_bytes(&wrong_version).is_err());
    }
}
