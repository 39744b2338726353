use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dense::RowMatrix;
use crate::kernel::{normalize_in_place, Embedding};
use crate::{Error, ItemId, Result};

/// Embedding file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemFormat {
    /// One item per line, comma-separated decimals, optional leading id column.
    Csv,
    /// `u32 N`, `u32 d` (little-endian) followed by `N·d` little-endian `f64`.
    PackedBinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreBacking {
    InMemory,
    FileBatched,
}

const MEMORY_BATCH: usize = 4096;
const PACKED_HEADER: u64 = 8;

/// Borrowed block of consecutive rows.
#[derive(Debug, Clone, Copy)]
pub struct BatchView<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> BatchView<'a> {
    pub fn nrows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug)]
struct FileSource {
    path: PathBuf,
    format: ItemFormat,
    batch_rows: usize,
    /// Byte offset of every data line (csv only).
    offsets: Vec<u64>,
    id_column: bool,
    reader: Mutex<BufReader<File>>,
}

#[derive(Debug)]
enum Backing {
    Memory(RowMatrix),
    File(FileSource),
}

/// The item universe. Every row it serves is unit-norm.
#[derive(Debug)]
pub struct ItemStore {
    n: usize,
    dim: usize,
    backing: Backing,
    round_decimals: Option<u32>,
}

impl ItemStore {
    pub fn in_memory(rows: Vec<Embedding>) -> Result<Self> {
        let dim = rows.first().map(Embedding::dim).unwrap_or(0);
        if rows.is_empty() || dim == 0 {
            return Err(Error::invalid("item store needs at least one non-empty row"));
        }
        if let Some(i) = rows.iter().position(|r| r.dim() != dim) {
            return Err(Error::invalid(format!("row {i} has dimension {} != {dim}", rows[i].dim())));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            data.extend_from_slice(r.as_slice());
        }
        Ok(Self {
            n: rows.len(),
            dim,
            backing: Backing::Memory(RowMatrix::from_vec(rows.len(), dim, data)),
            round_decimals: None,
        })
    }

    /// Normalises every row of `m`.
    pub fn from_matrix(mut m: RowMatrix) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::invalid("item store needs at least one non-empty row"));
        }
        for i in 0..m.nrows() {
            normalize_in_place(m.row_mut(i)).map_err(|_| Error::invalid(format!("row {i} has zero norm")))?;
        }
        Ok(Self {
            n: m.nrows(),
            dim: m.ncols(),
            backing: Backing::Memory(m),
            round_decimals: None,
        })
    }

    /// Rounds served values to `decimals` places (then renormalises).
    pub fn with_rounding(mut self, decimals: u32) -> Self {
        self.round_decimals = Some(decimals);
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backing(&self) -> StoreBacking {
        match self.backing {
            Backing::Memory(_) => StoreBacking::InMemory,
            Backing::File(_) => StoreBacking::FileBatched,
        }
    }

    /// Rows per read in file-batched mode.
    pub fn batch_rows(&self) -> Option<usize> {
        match &self.backing {
            Backing::Memory(_) => None,
            Backing::File(f) => Some(f.batch_rows),
        }
    }

    fn finish_row(&self, row: &mut [f64]) {
        if let Some(q) = self.round_decimals {
            let scale = 10f64.powi(q as i32);
            row.iter_mut().for_each(|v| *v = (*v * scale).round() / scale);
            // A row rounded to all zeros keeps its rounded (zero) value.
            let _ = normalize_in_place(row);
        }
    }

    pub fn row(&self, id: ItemId) -> Result<Embedding> {
        if id >= self.n {
            return Err(Error::invalid(format!("unknown item id {id} (store has {} items)", self.n)));
        }
        let mut v = match &self.backing {
            Backing::Memory(m) => m.row(id).to_vec(),
            Backing::File(f) => f.read_row(id, self.dim)?,
        };
        self.finish_row(&mut v);
        Ok(Embedding::raw(v))
    }

    pub fn rows(&self, ids: &[ItemId]) -> Result<Vec<Embedding>> {
        ids.iter().map(|&i| self.row(i)).collect()
    }

    /// Visits the store in consecutive blocks; file-backed stores never hold
    /// more than `batch_rows` rows at once.
    pub fn for_each_batch<F>(&self, mut f: F) -> Result<()>
    where
        F: FnMut(usize, BatchView<'_>) -> Result<()>,
    {
        match &self.backing {
            Backing::Memory(m) if self.round_decimals.is_none() => {
                let mut start = 0;
                while start < self.n {
                    let end = (start + MEMORY_BATCH).min(self.n);
                    let data = &m.as_slice()[start * self.dim..end * self.dim];
                    f(start, BatchView { data, dim: self.dim })?;
                    start = end;
                }
                Ok(())
            }
            _ => {
                let step = self.batch_rows().unwrap_or(MEMORY_BATCH);
                let mut start = 0;
                let mut buf = Vec::with_capacity(step * self.dim);
                while start < self.n {
                    let end = (start + step).min(self.n);
                    buf.clear();
                    match &self.backing {
                        Backing::Memory(m) => {
                            buf.extend_from_slice(&m.as_slice()[start * self.dim..end * self.dim])
                        }
                        Backing::File(src) => src.read_block(start, end, self.dim, &mut buf)?,
                    }
                    for row in buf.chunks_mut(self.dim) {
                        self.finish_row(row);
                    }
                    f(start, BatchView { data: &buf, dim: self.dim })?;
                    start = end;
                }
                Ok(())
            }
        }
    }

    /// Copies every row into memory.
    pub fn to_matrix(&self) -> Result<RowMatrix> {
        let mut data = Vec::with_capacity(self.n * self.dim);
        self.for_each_batch(|_, b| {
            data.extend_from_slice(b.data);
            Ok(())
        })?;
        Ok(RowMatrix::from_vec(self.n, self.dim, data))
    }
}

impl FileSource {
    fn read_row(&self, id: ItemId, dim: usize) -> Result<Vec<f64>> {
        let mut buf = Vec::with_capacity(dim);
        self.read_block(id, id + 1, dim, &mut buf)?;
        Ok(buf)
    }

    fn read_block(&self, start: usize, end: usize, dim: usize, out: &mut Vec<f64>) -> Result<()> {
        let mut reader = self.reader.lock().expect("item file lock poisoned");
        match self.format {
            ItemFormat::PackedBinary => {
                reader.seek(SeekFrom::Start(PACKED_HEADER + (start * dim * 8) as u64))?;
                let mut bytes = vec![0u8; (end - start) * dim * 8];
                reader.read_exact(&mut bytes)?;
                for (r, chunk) in bytes.chunks_exact(dim * 8).enumerate() {
                    let mut row: Vec<f64> = chunk
                        .chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                        .collect();
                    normalize_in_place(&mut row)
                        .map_err(|_| Error::format(start + r + 1, "zero-norm row"))?;
                    out.extend_from_slice(&row);
                }
            }
            ItemFormat::Csv => {
                reader.seek(SeekFrom::Start(self.offsets[start]))?;
                let mut line = String::new();
                let mut row = Vec::with_capacity(dim);
                let mut idx = start;
                while idx < end {
                    line.clear();
                    if reader.read_line(&mut line)? == 0 {
                        return Err(Error::format(idx + 1, format!("{} truncated", self.path.display())));
                    }
                    if line.trim().is_empty() {
                        continue;
                    }
                    row.clear();
                    parse_csv_fields(&line, idx + 1, self.id_column, &mut row)?;
                    normalize_in_place(&mut row).map_err(|_| Error::format(idx + 1, "zero-norm row"))?;
                    out.extend_from_slice(&row);
                    idx += 1;
                }
            }
        }
        Ok(())
    }
}

fn is_integer_literal(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn parse_csv_fields(line: &str, lineno: usize, id_column: bool, out: &mut Vec<f64>) -> Result<()> {
    let fields = line.trim().split(',').map(str::trim);
    for (k, field) in fields.enumerate() {
        if id_column && k == 0 {
            continue;
        }
        let v: f64 = field
            .parse()
            .map_err(|_| Error::format(lineno, format!("cannot parse {field:?} as a number")))?;
        if !v.is_finite() {
            return Err(Error::format(lineno, "non-finite value"));
        }
        out.push(v);
    }
    Ok(())
}

/// Result of scanning a csv embedding file.
struct CsvLayout {
    dim: usize,
    id_column: bool,
    /// (physical line number, byte offset) of each data row.
    rows: Vec<(usize, u64)>,
    /// Parsed values when requested; includes the id column if present.
    values: Option<Vec<f64>>,
    width: usize,
}

/// Scans a csv embedding stream. A header line is accepted when its first
/// field is not numeric; a header starting with `id`/`item_id` or a leading
/// column equal to the row index `0..N` (with some non-integer value in the
/// other columns) marks an id column.
fn scan_csv<R: BufRead>(mut reader: R, keep_values: bool) -> Result<CsvLayout> {
    let mut line = String::new();
    let mut offset = 0u64;
    let mut lineno = 0usize;
    let mut width = 0usize;
    let mut header_id: Option<bool> = None;
    let mut rows = Vec::new();
    let mut values = keep_values.then(Vec::new);
    let mut first_is_index = true;
    let mut rest_has_fraction = false;
    let mut scratch = Vec::new();
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        lineno += 1;
        let this_offset = offset;
        offset += read as u64;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if rows.is_empty() && header_id.is_none() && fields[0].parse::<f64>().is_err() {
            let first = fields[0].to_ascii_lowercase();
            header_id = Some(matches!(first.as_str(), "id" | "item_id" | "item"));
            width = fields.len();
            continue;
        }
        if width == 0 {
            width = fields.len();
        } else if fields.len() != width {
            return Err(Error::format(
                lineno,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        scratch.clear();
        parse_csv_fields(trimmed, lineno, false, &mut scratch)?;
        let row_index = rows.len();
        if first_is_index && !(is_integer_literal(fields[0]) && fields[0].parse::<usize>().ok() == Some(row_index)) {
            first_is_index = false;
        }
        if !rest_has_fraction && fields[1..].iter().any(|f| !is_integer_literal(f.trim_start_matches('-'))) {
            rest_has_fraction = true;
        }
        if let Some(v) = values.as_mut() {
            v.extend_from_slice(&scratch);
        }
        rows.push((lineno, this_offset));
    }
    if rows.is_empty() {
        return Err(Error::format(lineno.max(1), "no data rows"));
    }
    let id_column = match header_id {
        Some(h) => h,
        None => width > 1 && first_is_index && rest_has_fraction,
    };
    let dim = width - usize::from(id_column);
    if dim == 0 {
        return Err(Error::format(rows[0].0, "rows have no embedding values"));
    }
    Ok(CsvLayout {
        dim,
        id_column,
        rows,
        values,
        width,
    })
}

fn store_from_csv_layout(layout: CsvLayout) -> Result<ItemStore> {
    let values = layout.values.expect("values retained");
    let n = layout.rows.len();
    let mut data = Vec::with_capacity(n * layout.dim);
    for (r, chunk) in values.chunks_exact(layout.width).enumerate() {
        let start = data.len();
        data.extend_from_slice(&chunk[usize::from(layout.id_column)..]);
        normalize_in_place(&mut data[start..]).map_err(|_| Error::format(layout.rows[r].0, "zero-norm row"))?;
    }
    Ok(ItemStore {
        n,
        dim: layout.dim,
        backing: Backing::Memory(RowMatrix::from_vec(n, layout.dim, data)),
        round_decimals: None,
    })
}

/// Parses a csv embedding file held in memory.
pub fn parse_items_csv(bytes: &[u8]) -> Result<ItemStore> {
    store_from_csv_layout(scan_csv(bytes, true)?)
}

fn packed_header(bytes: &[u8], total_len: u64) -> Result<(usize, usize)> {
    if bytes.len() < 8 {
        return Err(Error::format(0, "packed file shorter than its 8-byte header"));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if n == 0 || d == 0 {
        return Err(Error::format(0, format!("header declares {n} rows of dimension {d}")));
    }
    let expected = (n as u64)
        .checked_mul(d as u64)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(PACKED_HEADER));
    if expected != Some(total_len) {
        return Err(Error::format(
            0,
            format!("header declares {n}x{d} values but file holds {total_len} bytes"),
        ));
    }
    Ok((n, d))
}

/// Parses a packed binary embedding file held in memory.
pub fn parse_items_packed(bytes: &[u8]) -> Result<ItemStore> {
    let (n, d) = packed_header(bytes, bytes.len() as u64)?;
    let mut data = Vec::with_capacity(n * d);
    for (r, row) in bytes[8..].chunks_exact(d * 8).enumerate() {
        let start = data.len();
        for b in row.chunks_exact(8) {
            let v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(Error::format(r + 1, "non-finite value"));
            }
            data.push(v);
        }
        normalize_in_place(&mut data[start..]).map_err(|_| Error::format(r + 1, "zero-norm row"))?;
    }
    Ok(ItemStore {
        n,
        dim: d,
        backing: Backing::Memory(RowMatrix::from_vec(n, d, data)),
        round_decimals: None,
    })
}

/// Loads an embedding file. With `batch_rows = Some(b)` the store stays on
/// disk and is read `b` rows at a time; the file is still validated up front.
pub fn load_items(path: &Path, format: ItemFormat, batch_rows: Option<usize>) -> Result<ItemStore> {
    if batch_rows == Some(0) {
        return Err(Error::invalid("batch_rows must be positive"));
    }
    match (format, batch_rows) {
        (ItemFormat::Csv, None) => store_from_csv_layout(scan_csv(BufReader::new(File::open(path)?), true)?),
        (ItemFormat::PackedBinary, None) => parse_items_packed(&std::fs::read(path)?),
        (ItemFormat::Csv, Some(b)) => {
            let layout = scan_csv(BufReader::new(File::open(path)?), false)?;
            let store = ItemStore {
                n: layout.rows.len(),
                dim: layout.dim,
                backing: Backing::File(FileSource {
                    path: path.to_path_buf(),
                    format,
                    batch_rows: b,
                    offsets: layout.rows.iter().map(|&(_, o)| o).collect(),
                    id_column: layout.id_column,
                    reader: Mutex::new(BufReader::new(File::open(path)?)),
                }),
                round_decimals: None,
            };
            // Validates finiteness and norms without holding the file in memory.
            store.for_each_batch(|_, _| Ok(()))?;
            Ok(store)
        }
        (ItemFormat::PackedBinary, Some(b)) => {
            let mut file = File::open(path)?;
            let total = file.metadata()?.len();
            let mut header = [0u8; 8];
            file.read_exact(&mut header).map_err(|_| Error::format(0, "missing header"))?;
            let (n, d) = packed_header(&header, total)?;
            let store = ItemStore {
                n,
                dim: d,
                backing: Backing::File(FileSource {
                    path: path.to_path_buf(),
                    format,
                    batch_rows: b,
                    offsets: Vec::new(),
                    id_column: false,
                    reader: Mutex::new(BufReader::new(file)),
                }),
                round_decimals: None,
            };
            store.for_each_batch(|start, batch| {
                for r in 0..batch.nrows() {
                    if batch.row(r).iter().any(|v| !v.is_finite()) {
                        return Err(Error::format(start + r + 1, "non-finite value"));
                    }
                }
                Ok(())
            })?;
            Ok(store)
        }
    }
}

/// Writes the store; csv values use the shortest round-trip decimal form.
pub fn write_items(store: &ItemStore, path: &Path, format: ItemFormat) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    match format {
        ItemFormat::PackedBinary => {
            let n = u32::try_from(store.len()).map_err(|_| Error::invalid("too many rows for packed format"))?;
            let d = u32::try_from(store.dim()).map_err(|_| Error::invalid("dimension too large"))?;
            out.write_all(&n.to_le_bytes())?;
            out.write_all(&d.to_le_bytes())?;
            store.for_each_batch(|_, b| {
                for v in b.data {
                    out.write_all(&v.to_le_bytes())?;
                }
                Ok(())
            })?;
        }
        ItemFormat::Csv => {
            store.for_each_batch(|_, b| {
                for r in 0..b.nrows() {
                    let line: Vec<String> = b.row(r).iter().map(|v| format!("{v:?}")).collect();
                    writeln!(out, "{}", line.join(","))?;
                }
                Ok(())
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_basic() {
        let s = parse_items_csv(b"1,0\n0,1").unwrap();
        assert_eq!((s.len(), s.dim()), (2, 2));
        assert_eq!(s.row(0).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn csv_normalises() {
        let s = parse_items_csv(b"3,4\n").unwrap();
        assert_eq!(s.row(0).unwrap().as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn csv_identity_like_rows_are_data() {
        // First column equals the row index but every value is an integer.
        let s = parse_items_csv(b"0,1\n1,0\n").unwrap();
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn csv_id_column_detected() {
        let s = parse_items_csv(b"0,0.5,0.5\n1,0.1,0.9\n2,3.0,4.0\n").unwrap();
        assert_eq!((s.len(), s.dim()), (3, 2));
        assert_eq!(s.row(2).unwrap().as_slice(), &[0.6, 0.8]);
        let s = parse_items_csv(b"item_id,x,y\n7,3,4\n").unwrap();
        assert_eq!(s.dim(), 2);
        let s = parse_items_csv(b"x,y\n3,4\n").unwrap();
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        match parse_items_csv(b"1,0\n0,1,2\n") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_items_csv(b"1,0\n\n0,NaN\n") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_items_csv(b"1,0\n0,inf\n") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_items_csv(b"0,0\n").is_err());
        assert!(parse_items_csv(b"").is_err());
    }

    #[test]
    fn packed_rejects_bad_lengths() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(parse_items_packed(&bytes).is_err());
        assert!(parse_items_packed(&bytes[..5]).is_err());
        let mut huge = Vec::new();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(parse_items_packed(&huge).is_err());
    }

    #[test]
    fn rounding_transform() {
        let s = parse_items_csv(b"0.123456,0.9\n").unwrap().with_rounding(1);
        let r = s.row(0).unwrap();
        // Stored row ≈ (0.136, 0.991) rounds to (0.1, 1.0).
        let n = (0.1f64 * 0.1 + 1.0).sqrt();
        assert!((r.as_slice()[0] - 0.1 / n).abs() < 1e-15);
    }

    #[test]
    fn file_backends_serve_identical_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mem = parse_items_csv(b"0.1,0.2,0.3\n-1,2,0.5\n3,4,0\n0,0,1\n1,1,1\n").unwrap();
        for format in [ItemFormat::Csv, ItemFormat::PackedBinary] {
            let path = dir.path().join(format!("items-{format:?}"));
            write_items(&mem, &path, format).unwrap();
            let eager = load_items(&path, format, None).unwrap();
            let lazy = load_items(&path, format, Some(2)).unwrap();
            assert_eq!(lazy.backing(), StoreBacking::FileBatched);
            assert_eq!(eager.to_matrix().unwrap(), mem.to_matrix().unwrap());
            assert_eq!(lazy.to_matrix().unwrap(), mem.to_matrix().unwrap());
            for i in 0..mem.len() {
                assert_eq!(lazy.row(i).unwrap(), mem.row(i).unwrap());
            }
            let mut max_rows = 0;
            lazy.for_each_batch(|_, b| {
                max_rows = max_rows.max(b.nrows());
                Ok(())
            })
            .unwrap();
            assert_eq!(max_rows, 2);
        }
    }
}
