//! The CRBM artifact container: named, typed sections behind a 4-byte
//! magic.  Everything is little-endian; reads reproduce writes bit-exactly.
//!
//! Layout: `"CRBM"`, `u32` format version, `u32` section count, then per
//! section a `u32` name length, the UTF-8 name, a `u8` type tag, and the
//! payload.  Array payloads are a `u64` element count followed by the
//! elements; matrices are `u64` row and column counts followed by `f64`
//! entries in column-major order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

const MAGIC: &[u8; 4] = b"CRBM";
const VERSION: u32 = 1;

const TAG_F64: u8 = 0;
const TAG_U64: u8 = 1;
const TAG_U32: u8 = 2;
const TAG_BYTES: u8 = 3;
const TAG_MATRIX: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    F64(Vec<f64>),
    U64(Vec<u64>),
    U32(Vec<u32>),
    Bytes(Vec<u8>),
    Matrix(DMatrix<f64>),
}

/// Sections are kept sorted by name so the byte stream is a pure function
/// of the content.
#[derive(Debug, Default, Clone)]
pub struct Store {
    pub sections: BTreeMap<String, Section>,
}

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn put_f64(&mut self, name: &str, v: Vec<f64>) {
        self.sections.insert(name.into(), Section::F64(v));
    }

    pub fn put_u64(&mut self, name: &str, v: Vec<u64>) {
        self.sections.insert(name.into(), Section::U64(v));
    }

    pub fn put_u32(&mut self, name: &str, v: Vec<u32>) {
        self.sections.insert(name.into(), Section::U32(v));
    }

    pub fn put_bytes(&mut self, name: &str, v: Vec<u8>) {
        self.sections.insert(name.into(), Section::Bytes(v));
    }

    pub fn put_matrix(&mut self, name: &str, m: DMatrix<f64>) {
        self.sections.insert(name.into(), Section::Matrix(m));
    }

    pub fn has(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    fn get(&self, name: &str) -> Result<&Section, String> {
        self.sections
            .get(name)
            .ok_or(format!("store is missing section `{name}`"))
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64], String> {
        match self.get(name)? {
            Section::F64(v) => Ok(v),
            _ => Err(format!("section `{name}` is not an f64 array")),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64], String> {
        match self.get(name)? {
            Section::U64(v) => Ok(v),
            _ => Err(format!("section `{name}` is not a u64 array")),
        }
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8], String> {
        match self.get(name)? {
            Section::Bytes(v) => Ok(v),
            _ => Err(format!("section `{name}` is not a byte section")),
        }
    }

    pub fn matrix(&self, name: &str) -> Result<&DMatrix<f64>, String> {
        match self.get(name)? {
            Section::Matrix(m) => Ok(m),
            _ => Err(format!("section `{name}` is not a matrix")),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, section) in &self.sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match section {
                Section::F64(v) => {
                    out.push(TAG_F64);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Section::U64(v) => {
                    out.push(TAG_U64);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Section::U32(v) => {
                    out.push(TAG_U32);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Section::Bytes(v) => {
                    out.push(TAG_BYTES);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    out.extend_from_slice(v);
                }
                Section::Matrix(m) => {
                    out.push(TAG_MATRIX);
                    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
                    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
                    for x in m.iter() {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn decode(data: &[u8]) -> Result<Store, String> {
        let mut r = Reader { data, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("bad magic, not a CRBM container".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported container version {version}"));
        }
        let count = r.u32()? as usize;
        let mut sections = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| "section name is not UTF-8".to_string())?;
            let tag = r.take(1)?[0];
            let section = match tag {
                TAG_F64 => {
                    let len = r.u64()? as usize;
                    Section::F64((0..len).map(|_| r.f64()).collect::<Result<_, _>>()?)
                }
                TAG_U64 => {
                    let len = r.u64()? as usize;
                    Section::U64((0..len).map(|_| r.u64()).collect::<Result<_, _>>()?)
                }
                TAG_U32 => {
                    let len = r.u64()? as usize;
                    Section::U32((0..len).map(|_| r.u32()).collect::<Result<_, _>>()?)
                }
                TAG_BYTES => {
                    let len = r.u64()? as usize;
                    Section::Bytes(r.take(len)?.to_vec())
                }
                TAG_MATRIX => {
                    let rows = r.u64()? as usize;
                    let cols = r.u64()? as usize;
                    let data: Vec<f64> =
                        (0..rows * cols).map(|_| r.f64()).collect::<Result<_, _>>()?;
                    Section::Matrix(DMatrix::from_vec(rows, cols, data))
                }
                other => return Err(format!("unknown section tag {other}")),
            };
            sections.insert(name, section);
        }
        if r.pos != data.len() {
            return Err("trailing bytes after the last section".into());
        }
        Ok(Store { sections })
    }

    pub fn write(&self, path: &Path) -> Result<(), String> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| format!("creating {dir:?}: {e}"))?;
            }
        }
        fs::write(path, self.encode()).map_err(|e| format!("writing {path:?}: {e}"))
    }

    pub fn read(path: &Path) -> Result<Store, String> {
        let data = fs::read(path).map_err(|e| format!("reading {path:?}: {e}"))?;
        Store::decode(&data)
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.pos + n > self.data.len() {
            return Err("truncated container".into());
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
