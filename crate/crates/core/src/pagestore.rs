//! Simulated paged disk.
//!
//! A [`PageStore`] owns a set of append-only record files. Every read goes
//! through an [`AccessLedger`] that remembers which pages a query touched, so
//! the I/O cost of a query is the number of distinct index and data pages it
//! loaded.
//!
//! # File layout
//!
//! A persisted record file is a 16-byte header followed by whole pages:
//!
//! | bytes  | field                                   |
//! |--------|-----------------------------------------|
//! | 0..4   | magic `SVXR`                            |
//! | 4..6   | format version, little-endian `u16` (1) |
//! | 6      | role: 0 = index, 1 = data               |
//! | 7      | placement: 0 = packed, 1 = page-aligned |
//! | 8..12  | page size in bytes, little-endian `u32` |
//! | 12..16 | record count, little-endian `u32`       |
//!
//! The final page is zero-filled. Page `k` starts at byte `16 + k * page_size`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_PAGE_SIZE: usize = 4096;
pub const MIN_PAGE_SIZE: usize = 256;
/// Offsets are stored as `u16` inside index entries.
pub const MAX_PAGE_SIZE: usize = 65536;

const MAGIC: &[u8; 4] = b"SVXR";
const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PageStoreConfig {
    pub page_size: usize,
    /// Simulated seconds per page access.
    pub t_disk: f64,
}

impl Default for PageStoreConfig {
    fn default() -> Self {
        Self {
            page_size: DEFAULT_PAGE_SIZE,
            t_disk: 0.01,
        }
    }
}

impl PageStoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.page_size < MIN_PAGE_SIZE || self.page_size > MAX_PAGE_SIZE {
            return Err(Error::invalid(format!(
                "page size must be within [{MIN_PAGE_SIZE}, {MAX_PAGE_SIZE}], got {}",
                self.page_size
            )));
        }
        if self.t_disk.is_nan() || self.t_disk < 0.0 {
            return Err(Error::invalid("t_disk must be >= 0"));
        }
        Ok(())
    }

    /// Pages needed for `bytes` bytes, rounding up.
    pub fn pages_for(&self, bytes: usize) -> usize {
        bytes.div_ceil(self.page_size)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct FileId(pub u16);

/// Which ledger counter reads from a file are charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum FileRole {
    Index,
    Data,
}

/// How records are laid out in a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Placement {
    /// Records are packed back to back. A record that would cross a page
    /// boundary starts on the next page instead, unless it is longer than a
    /// page, in which case it starts on a fresh page.
    Packed,
    /// Every record starts on a fresh page and owns its pages exclusively.
    PageAligned,
}

/// Location of one stored record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct RecordPointer {
    pub file: FileId,
    pub page: u32,
    pub offset: u32,
    pub length: u32,
}

impl RecordPointer {
    /// Zero-based ids of every page overlapped by the record.
    pub fn pages(&self, page_size: usize) -> std::ops::RangeInclusive<u32> {
        let last = self.offset as usize + self.length as usize - 1;
        self.page..=self.page + (last / page_size) as u32
    }

    pub fn page_span(&self, page_size: usize) -> usize {
        let r = self.pages(page_size);
        (r.end() - r.start() + 1) as usize
    }

    pub(crate) fn start(&self, page_size: usize) -> usize {
        self.page as usize * page_size + self.offset as usize
    }

    /// 10-byte in-entry encoding; the file is implied by the owning structure.
    pub(crate) const ENCODED_LEN: usize = 10;

    pub(crate) fn encode_into(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.page.to_le_bytes());
        buf.extend_from_slice(&(self.offset as u16).to_le_bytes());
        buf.extend_from_slice(&self.length.to_le_bytes());
    }

    pub(crate) fn decode(file: FileId, b: &[u8]) -> RecordPointer {
        RecordPointer {
            file,
            page: u32::from_le_bytes(b[0..4].try_into().unwrap()),
            offset: u16::from_le_bytes(b[4..6].try_into().unwrap()) as u32,
            length: u32::from_le_bytes(b[6..10].try_into().unwrap()),
        }
    }
}

/// Distinct pages touched during one query, split by file role.
#[derive(Debug, Clone, Default)]
pub struct AccessLedger {
    index: HashSet<(FileId, u32)>,
    data: HashSet<(FileId, u32)>,
}

impl AccessLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn touch(&mut self, role: FileRole, file: FileId, page: u32) {
        match role {
            FileRole::Index => self.index.insert((file, page)),
            FileRole::Data => self.data.insert((file, page)),
        };
    }

    pub fn pages_index(&self) -> usize {
        self.index.len()
    }

    pub fn pages_data(&self) -> usize {
        self.data.len()
    }

    pub fn total_pages(&self) -> usize {
        self.index.len() + self.data.len()
    }

    pub fn index_pages(&self) -> &HashSet<(FileId, u32)> {
        &self.index
    }

    pub fn data_pages(&self) -> &HashSet<(FileId, u32)> {
        &self.data
    }
}

/// Simulated seconds spent loading every page in the ledger.
pub fn query_cost(ledger: &AccessLedger, cfg: &PageStoreConfig) -> f64 {
    cfg.t_disk * ledger.total_pages() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile {
    name: String,
    role: FileRole,
    placement: Placement,
    page_size: usize,
    bytes: Vec<u8>,
    records: u32,
}

impl RecordFile {
    fn new(name: &str, role: FileRole, placement: Placement, page_size: usize) -> Self {
        Self {
            name: name.to_string(),
            role,
            placement,
            page_size,
            bytes: Vec::new(),
            records: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> FileRole {
        self.role
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn record_count(&self) -> u32 {
        self.records
    }

    /// Bytes in use, including padding.
    pub fn used_bytes(&self) -> usize {
        self.bytes.len()
    }

    pub fn page_count(&self) -> usize {
        self.bytes.len().div_ceil(self.page_size)
    }

    fn append(&mut self, id: FileId, payload: &[u8]) -> Result<RecordPointer> {
        if payload.is_empty() {
            return Err(Error::Write("empty payload".into()));
        }
        if payload.len() > u32::MAX as usize {
            return Err(Error::Write("payload too large".into()));
        }
        let p = self.page_size;
        let used = self.bytes.len();
        let in_page = used % p;
        let pad = in_page != 0
            && match self.placement {
                Placement::PageAligned => true,
                Placement::Packed => payload.len() > p || in_page + payload.len() > p,
            };
        if pad {
            self.bytes.resize(used + (p - in_page), 0);
        }
        let start = self.bytes.len();
        self.bytes.extend_from_slice(payload);
        self.records += 1;
        Ok(RecordPointer {
            file: id,
            page: (start / p) as u32,
            offset: (start % p) as u32,
            length: payload.len() as u32,
        })
    }

    fn slice(&self, ptr: &RecordPointer) -> Result<&[u8]> {
        let start = ptr.start(self.page_size);
        let end = start + ptr.length as usize;
        if ptr.length == 0 || ptr.offset as usize >= self.page_size || end > self.bytes.len() {
            return Err(Error::Read(format!(
                "dangling pointer {ptr:?} into {} ({} bytes)",
                self.name,
                self.bytes.len()
            )));
        }
        Ok(&self.bytes[start..end])
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut header = [0u8; HEADER_LEN];
        header[0..4].copy_from_slice(MAGIC);
        header[4..6].copy_from_slice(&VERSION.to_le_bytes());
        header[6] = match self.role {
            FileRole::Index => 0,
            FileRole::Data => 1,
        };
        header[7] = match self.placement {
            Placement::Packed => 0,
            Placement::PageAligned => 1,
        };
        header[8..12].copy_from_slice(&(self.page_size as u32).to_le_bytes());
        header[12..16].copy_from_slice(&self.records.to_le_bytes());
        w.write_all(&header)?;
        w.write_all(&self.bytes)?;
        let tail = self.page_count() * self.page_size - self.bytes.len();
        w.write_all(&vec![0u8; tail])?;
        Ok(())
    }

    pub fn read_from<R: Read>(name: &str, r: &mut R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::Read(format!("{name}: header: {e}")))?;
        if &header[0..4] != MAGIC {
            return Err(Error::Read(format!("{name}: bad magic")));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != VERSION {
            return Err(Error::Read(format!(
                "{name}: unsupported version {version}"
            )));
        }
        let role = match header[6] {
            0 => FileRole::Index,
            1 => FileRole::Data,
            b => return Err(Error::Read(format!("{name}: bad role byte {b}"))),
        };
        let placement = match header[7] {
            0 => Placement::Packed,
            1 => Placement::PageAligned,
            b => return Err(Error::Read(format!("{name}: bad placement byte {b}"))),
        };
        let page_size = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let records = u32::from_le_bytes(header[12..16].try_into().unwrap());
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if page_size == 0 || bytes.len() % page_size != 0 {
            return Err(Error::Read(format!("{name}: truncated page")));
        }
        Ok(Self {
            name: name.to_string(),
            role,
            placement,
            page_size,
            bytes,
            records,
        })
    }
}

/// A set of record files sharing one page size.
#[derive(Debug, Clone, PartialEq)]
pub struct PageStore {
    cfg: PageStoreConfig,
    files: Vec<RecordFile>,
}

impl PageStore {
    pub fn new(cfg: PageStoreConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            files: Vec::new(),
        })
    }

    pub fn config(&self) -> &PageStoreConfig {
        &self.cfg
    }

    pub fn page_size(&self) -> usize {
        self.cfg.page_size
    }

    pub fn create_file(&mut self, name: &str, role: FileRole, placement: Placement) -> FileId {
        let id = FileId(self.files.len() as u16);
        self.files
            .push(RecordFile::new(name, role, placement, self.cfg.page_size));
        id
    }

    pub fn file(&self, id: FileId) -> &RecordFile {
        &self.files[id.0 as usize]
    }

    pub fn files(&self) -> impl Iterator<Item = (FileId, &RecordFile)> {
        self.files
            .iter()
            .enumerate()
            .map(|(i, f)| (FileId(i as u16), f))
    }

    pub fn file_by_name(&self, name: &str) -> Option<FileId> {
        self.files
            .iter()
            .position(|f| f.name == name)
            .map(|i| FileId(i as u16))
    }

    pub fn append_record(&mut self, file: FileId, payload: &[u8]) -> Result<RecordPointer> {
        let f = self
            .files
            .get_mut(file.0 as usize)
            .ok_or_else(|| Error::Write(format!("unknown file {file:?}")))?;
        f.append(file, payload)
    }

    /// Reads a record and charges every overlapped page to `ledger`.
    pub fn read_record(&self, ptr: &RecordPointer, ledger: &mut AccessLedger) -> Result<&[u8]> {
        let f = self.lookup(ptr)?;
        let bytes = f.slice(ptr)?;
        for page in ptr.pages(self.cfg.page_size) {
            ledger.touch(f.role, ptr.file, page);
        }
        Ok(bytes)
    }

    /// Reads a record without accounting; for builds and audits.
    pub fn peek_record(&self, ptr: &RecordPointer) -> Result<&[u8]> {
        self.lookup(ptr)?.slice(ptr)
    }

    fn lookup(&self, ptr: &RecordPointer) -> Result<&RecordFile> {
        self.files
            .get(ptr.file.0 as usize)
            .ok_or_else(|| Error::Read(format!("unknown file {:?}", ptr.file)))
    }

    /// Writes every file as `<dir>/<name>.rec`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for f in &self.files {
            let mut w = BufWriter::new(File::create(dir.join(format!("{}.rec", f.name)))?);
            f.write_to(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }

    /// Reopens files written by [`PageStore::save`], in the given order.
    pub fn load(cfg: PageStoreConfig, dir: &Path, names: &[String]) -> Result<Self> {
        let mut store = Self::new(cfg)?;
        for name in names {
            let mut r = BufReader::new(File::open(dir.join(format!("{name}.rec")))?);
            let f = RecordFile::read_from(name, &mut r)?;
            if f.page_size != cfg.page_size {
                return Err(Error::Read(format!(
                    "{name}: page size {} does not match {}",
                    f.page_size, cfg.page_size
                )));
            }
            store.files.push(f);
        }
        Ok(store)
    }
}
