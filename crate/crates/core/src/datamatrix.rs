//! Dataset ingestion and preprocessing.
//!
//! A [`DataMatrix`] stores `d` features by `M` samples, column-major, so
//! each sample is a contiguous slice. Three on-disk formats are supported:
//!
//! - IDX (the MNIST container): big-endian, unsigned bytes, scaled to `[0, 1]`.
//! - GRM1: `b"GRM1"`, `u32` version = 1, `u64` d, `u64` M, `u8` flags
//!   (bit 0 centered, bit 1 standardized), then `d * M` little-endian `f64`
//!   in column-major order. All header integers are little-endian.
//! - CSV: numeric cells with `.` decimals, optional header row.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const GRM1_MAGIC: &[u8; 4] = b"GRM1";
pub const GRM1_VERSION: u32 = 1;
const GRM1_HEADER_LEN: usize = 4 + 4 + 8 + 8 + 1;

const IDX_UBYTE_RANK3: u32 = 0x0000_0803;
const IDX_UBYTE_RANK1: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub centered: bool,
    pub standardized: bool,
}

impl Preprocessing {
    fn to_flags(self) -> u8 {
        u8::from(self.centered) | (u8::from(self.standardized) << 1)
    }

    fn from_flags(flags: u8) -> Result<Self> {
        if flags & !0b11 != 0 {
            return Err(Error::Format(format!("unknown GRM1 flag bits {flags:#04x}")));
        }
        Ok(Self { centered: flags & 1 != 0, standardized: flags & 2 != 0 })
    }
}

/// Orientation of a CSV table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CsvLayout {
    /// Each CSV row is one sample (becomes a column of the data matrix).
    SamplesAsRows,
    /// Each CSV row is one feature.
    SamplesAsColumns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Vec<f64>,
    d: usize,
    m: usize,
    preprocessing: Preprocessing,
    source: String,
}

impl DataMatrix {
    /// Builds a matrix from column-major values (`values[j * d + i]` is feature
    /// `i` of sample `j`).
    pub fn from_column_major(values: Vec<f64>, d: usize, m: usize, source: impl Into<String>) -> Result<Self> {
        Self::with_preprocessing(values, d, m, Preprocessing::default(), source)
    }

    pub fn with_preprocessing(
        values: Vec<f64>,
        d: usize,
        m: usize,
        preprocessing: Preprocessing,
        source: impl Into<String>,
    ) -> Result<Self> {
        // M = 1 is accepted so a single sample can still form a (rank-1) Gram matrix.
        if d < 2 || m < 1 {
            return Err(Error::Dimension(format!("data matrix needs d >= 2 and M >= 1, got d={d}, M={m}")));
        }
        let expected = d.checked_mul(m).ok_or_else(|| Error::Dimension("d * M overflows".into()))?;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} values for a {d}x{m} matrix, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite entry at feature {}, sample {}",
                pos % d,
                pos / d
            )));
        }
        Ok(Self { values, d, m, preprocessing, source: source.into() })
    }

    /// Builds a matrix entry by entry, `f(feature, sample)`.
    pub fn from_fn(d: usize, m: usize, source: impl Into<String>, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(d * m);
        for j in 0..m {
            for i in 0..d {
                values.push(f(i, j));
            }
        }
        Self::from_column_major(values, d, m, source)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.preprocessing
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, feature: usize, sample: usize) -> f64 {
        self.values[sample * self.d + feature]
    }

    pub fn column(&self, sample: usize) -> &[f64] {
        &self.values[sample * self.d..(sample + 1) * self.d]
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.values, self.d, self.m)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// New matrix holding the given sample columns, in the given order.
    pub fn select_columns(&self, samples: &[usize]) -> Result<DataMatrix> {
        let mut values = Vec::with_capacity(samples.len() * self.d);
        for &j in samples {
            if j >= self.m {
                return Err(Error::InvalidArgument(format!("sample index {j} out of range (M={})", self.m)));
            }
            values.extend_from_slice(self.column(j));
        }
        DataMatrix::with_preprocessing(
            values,
            self.d,
            samples.len(),
            self.preprocessing,
            format!("{} [subset of {}]", self.source, samples.len()),
        )
    }

    /// Per-feature means.
    pub fn row_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.d];
        for col in self.values.chunks_exact(self.d) {
            for (s, v) in sums.iter_mut().zip(col) {
                *s += v;
            }
        }
        let m = self.m as f64;
        sums.iter_mut().for_each(|s| *s /= m);
        sums
    }

    /// Per-feature sample standard deviations (denominator `M - 1`).
    pub fn row_std(&self) -> Vec<f64> {
        let means = self.row_means();
        let mut ss = vec![0.0; self.d];
        for col in self.values.chunks_exact(self.d) {
            for ((s, v), mu) in ss.iter_mut().zip(col).zip(&means) {
                *s += (v - mu) * (v - mu);
            }
        }
        let denom = (self.m.max(2) - 1) as f64;
        ss.into_iter().map(|s| (s / denom).sqrt()).collect()
    }

    /// Same matrix with a new provenance label.
    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }
}

/// Reads an IDX file of unsigned bytes.
///
/// Rank-3 files (`n x rows x cols`) become `d = rows * cols` features by
/// `M = n` samples. A rank-1 file is read as a single sample of `n` features.
pub fn load_idx(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_idx(&bytes, &path.display().to_string())
}

pub fn parse_idx(bytes: &[u8], source: &str) -> Result<DataMatrix> {
    let read_u32 = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::Format("IDX header truncated".into()))
    };
    let magic = read_u32(0)?;
    let (dims, header_len) = match magic {
        IDX_UBYTE_RANK3 => (vec![read_u32(4)?, read_u32(8)?, read_u32(12)?], 16),
        IDX_UBYTE_RANK1 => (vec![read_u32(4)?], 8),
        other => {
            return Err(Error::Format(format!(
                "unsupported IDX magic {other:#010x}; expected 0x00000803 or 0x00000801"
            )))
        }
    };
    let (d, m) = match dims.as_slice() {
        [n, rows, cols] => (*rows as usize * *cols as usize, *n as usize),
        [n] => (*n as usize, 1),
        _ => unreachable!(),
    };
    let expected = (d as u64) * (m as u64);
    let found = (bytes.len() - header_len) as u64;
    if found < expected {
        return Err(Error::Length { expected, found });
    }
    let values: Vec<f64> = bytes[header_len..header_len + expected as usize]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    DataMatrix::from_column_major(values, d, m, format!("idx:{source}"))
}

pub fn write_grm1(x: &DataMatrix, mut w: impl Write) -> Result<()> {
    let mut header = Vec::with_capacity(GRM1_HEADER_LEN);
    header.extend_from_slice(GRM1_MAGIC);
    header.extend_from_slice(&GRM1_VERSION.to_le_bytes());
    header.extend_from_slice(&(x.d as u64).to_le_bytes());
    header.extend_from_slice(&(x.m as u64).to_le_bytes());
    header.push(x.preprocessing.to_flags());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(8 * 4096);
    for chunk in x.values.chunks(4096) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_raw(x: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_grm1(x, BufWriter::new(File::create(path)?))
}

pub fn read_grm1(mut r: impl Read, source: &str) -> Result<DataMatrix> {
    let mut header = [0u8; GRM1_HEADER_LEN];
    r.read_exact(&mut header).map_err(|_| Error::Format("GRM1 header truncated".into()))?;
    if &header[..4] != GRM1_MAGIC {
        return Err(Error::Format("missing GRM1 magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != GRM1_VERSION {
        return Err(Error::Format(format!("unsupported GRM1 version {version}")));
    }
    let d = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let m = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let preprocessing = Preprocessing::from_flags(header[24])?;
    if d < 2 || m < 1 {
        return Err(Error::Dimension(format!("GRM1 header declares d={d}, M={m}")));
    }
    let expected = d
        .checked_mul(m)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Dimension("GRM1 dimensions overflow".into()))?;
    let mut payload = Vec::new();
    r.take(expected).read_to_end(&mut payload)?;
    if (payload.len() as u64) < expected {
        return Err(Error::Length { expected, found: payload.len() as u64 });
    }
    let values = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    DataMatrix::with_preprocessing(values, d as usize, m as usize, preprocessing, format!("grm1:{source}"))
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    read_grm1(BufReader::new(File::open(path)?), &path.display().to_string())
}

pub fn load_csv(path: impl AsRef<Path>, layout: CsvLayout, has_header: bool) -> Result<DataMatrix> {
    let path = path.as_ref();
    parse_csv(BufReader::new(File::open(path)?), layout, has_header, &path.display().to_string())
}

pub fn parse_csv(r: impl Read, layout: CsvLayout, has_header: bool, source: &str) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { record: idx + 1, message: e.to_string() })?;
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    record: idx + 1,
                    message: format!("non-numeric cell {cell:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::Dimension("empty CSV table".into()));
    }
    let source = format!("csv:{source}");
    match layout {
        CsvLayout::SamplesAsColumns => DataMatrix::from_fn(n_rows, n_cols, source, |i, j| rows[i][j]),
        CsvLayout::SamplesAsRows => DataMatrix::from_fn(n_cols, n_rows, source, |i, j| rows[j][i]),
    }
}

/// Centers every feature and, if `standardize`, scales features with nonzero
/// variance to unit sample standard deviation (denominator `M - 1`).
/// Constant features become exactly zero.
pub fn preprocess(x: &DataMatrix, standardize: bool) -> DataMatrix {
    let d = x.d;
    let mut values = x.values.clone();
    let means = x.row_means();
    let mut max_abs = vec![0.0f64; d];
    for col in x.values.chunks_exact(d) {
        for (mx, v) in max_abs.iter_mut().zip(col) {
            *mx = mx.max(v.abs());
        }
    }
    for col in values.chunks_exact_mut(d) {
        for (v, mu) in col.iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    // Second pass removes the rounding residue of the first mean.
    let mut residual = vec![0.0; d];
    for col in values.chunks_exact(d) {
        for (r, v) in residual.iter_mut().zip(col) {
            *r += v;
        }
    }
    let mf = x.m as f64;
    residual.iter_mut().for_each(|r| *r /= mf);

    let mut ss = vec![0.0; d];
    for col in values.chunks_exact_mut(d) {
        for ((v, r), s) in col.iter_mut().zip(&residual).zip(ss.iter_mut()) {
            *v -= r;
            *s += *v * *v;
        }
    }
    let denom = (x.m.max(2) - 1) as f64;
    let scale: Vec<Option<f64>> = ss
        .iter()
        .zip(&max_abs)
        .map(|(s, mx)| {
            let sd = (s / denom).sqrt();
            if sd <= 1e-12 * mx.max(f64::MIN_POSITIVE) || sd == 0.0 {
                None
            } else {
                Some(sd)
            }
        })
        .collect();
    let divide = standardize && x.m >= 2;
    for col in values.chunks_exact_mut(d) {
        for (v, sc) in col.iter_mut().zip(&scale) {
            match sc {
                None => *v = 0.0,
                Some(sd) if divide => *v /= sd,
                Some(_) => {}
            }
        }
    }
    DataMatrix {
        values,
        d,
        m: x.m,
        preprocessing: Preprocessing {
            centered: true,
            standardized: divide || x.preprocessing.standardized,
        },
        source: x.source.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut b = magic.to_be_bytes().to_vec();
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn idx_four_two_by_two_images() {
        let payload: Vec<u8> = (0..16).map(|k| if k % 3 == 0 { 255 } else { 0 }).collect();
        let x = parse_idx(&idx_bytes(0x803, &[4, 2, 2], &payload), "mem").unwrap();
        assert_eq!((x.d(), x.m()), (4, 4));
        assert!(x.values().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(x.get(0, 0), 1.0);
        assert_eq!(x.get(3, 0), 1.0);
        assert_eq!(x.get(1, 0), 0.0);
        assert!(!x.preprocessing().centered);
    }

    #[test]
    fn idx_rank1_is_single_sample() {
        let x = parse_idx(&idx_bytes(0x801, &[3], &[0, 51, 255]), "mem").unwrap();
        assert_eq!((x.d(), x.m()), (3, 1));
        assert_abs_diff_eq!(x.get(1, 0), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn idx_bad_magic_and_truncation() {
        let err = parse_idx(&idx_bytes(0x802, &[1, 2], &[0, 0]), "mem").unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        let err = parse_idx(&idx_bytes(0x803, &[2, 2, 2], &[0; 7]), "mem").unwrap_err();
        assert!(matches!(err, Error::Length { expected: 8, found: 7 }), "{err}");
    }

    #[test]
    fn grm1_header_layout_is_bit_exact() {
        let x = DataMatrix::from_column_major(vec![1.0, 2.0, 3.0, 4.0], 2, 2, "t").unwrap();
        let x = preprocess(&x, false);
        let mut buf = Vec::new();
        write_grm1(&x, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"GRM1");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &2u64.to_le_bytes());
        assert_eq!(buf[24], 0b01);
        assert_eq!(&buf[25..33], &(-1.0f64).to_le_bytes());
        assert_eq!(buf.len(), 25 + 4 * 8);
    }

    #[test]
    fn grm1_errors() {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"GRM1");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&0u64.to_le_bytes());
        buf.extend_from_slice(&5u64.to_le_bytes());
        buf.push(0);
        assert!(matches!(read_grm1(&buf[..], "m"), Err(Error::Dimension(_))));

        let mut buf = Vec::new();
        buf.extend_from_slice(b"GRM1");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&5u64.to_le_bytes());
        buf.extend_from_slice(&5u64.to_le_bytes());
        buf.push(0);
        buf.extend_from_slice(&[0u8; 100]);
        assert!(matches!(read_grm1(&buf[..], "m"), Err(Error::Length { expected: 200, found: 100 })));

        assert!(matches!(read_grm1(&b"GRM2\x01\0\0\0"[..], "m"), Err(Error::Format(_))));
    }

    #[test]
    fn csv_layouts() {
        let x = parse_csv("1,2\n3,4".as_bytes(), CsvLayout::SamplesAsColumns, false, "m").unwrap();
        assert_eq!((x.d(), x.m()), (2, 2));
        assert_eq!(x.column(0), &[1.0, 3.0]);
        let x = parse_csv("1,2\n3,4".as_bytes(), CsvLayout::SamplesAsRows, false, "m").unwrap();
        assert_eq!(x.column(0), &[1.0, 2.0]);
        let x = parse_csv("a,b\n1,2\n3,4".as_bytes(), CsvLayout::SamplesAsColumns, true, "m").unwrap();
        assert_eq!(x.m(), 2);
    }

    #[test]
    fn csv_identity() {
        let x = parse_csv("1,0,0\n0,1,0\n0,0,1\n".as_bytes(), CsvLayout::SamplesAsColumns, false, "m").unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(x.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            parse_csv("1,2\n3".as_bytes(), CsvLayout::SamplesAsColumns, false, "m"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_csv("1,x\n3,4".as_bytes(), CsvLayout::SamplesAsColumns, false, "m"),
            Err(Error::Parse { record: 1, .. })
        ));
    }

    #[test]
    fn preprocess_rows() {
        let x = DataMatrix::from_fn(2, 3, "t", |i, j| if i == 0 { (j + 1) as f64 } else { 5.0 }).unwrap();
        let c = preprocess(&x, false);
        let s = preprocess(&x, true);
        for j in 0..3 {
            assert_abs_diff_eq!(c.get(0, j), j as f64 - 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(s.get(0, j), j as f64 - 1.0, epsilon = 1e-15);
            assert_eq!(c.get(1, j), 0.0);
            assert_eq!(s.get(1, j), 0.0);
        }
        assert!(s.preprocessing().centered && s.preprocessing().standardized);
        assert!(c.preprocessing().centered && !c.preprocessing().standardized);
    }

    #[test]
    fn constant_row_with_inexact_mean_is_zeroed() {
        let x = DataMatrix::from_fn(2, 3, "t", |i, j| if i == 0 { 0.1 } else { j as f64 }).unwrap();
        let s = preprocess(&x, true);
        assert!((0..3).all(|j| s.get(0, j) == 0.0));
    }

    #[test]
    fn centered_input_unchanged() {
        let x = DataMatrix::from_fn(3, 4, "t", |i, j| [1.0, -1.0, 2.0, -2.0][j] * (i as f64 + 1.0)).unwrap();
        let c = preprocess(&x, false);
        for (a, b) in x.values().iter().zip(c.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn preprocess_is_idempotent(
            d in 2usize..6, m in 2usize..12, standardize: bool,
            seed in proptest::collection::vec(-50.0f64..50.0, 72)
        ) {
            let x = DataMatrix::from_fn(d, m, "p", |i, j| seed[(i * 12 + j) % seed.len()] * (1.0 + i as f64)).unwrap();
            let once = preprocess(&x, standardize);
            let twice = preprocess(&once, standardize);
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
            let means = once.row_means();
            let sds = once.row_std();
            for (mu, sd) in means.iter().zip(&sds) {
                prop_assert!(mu.abs() <= 1e-10 * sd.max(1e-2));
                if standardize && *sd > 0.0 {
                    prop_assert!((sd - 1.0).abs() <= 1e-10);
                }
            }
        }

        #[test]
        fn grm1_round_trip_is_bit_exact(
            d in 2usize..12, m in 1usize..20, centered: bool, standardized: bool, salt in any::<u64>()
        ) {
            let values: Vec<f64> = (0..d * m)
                .map(|k| f64::from_bits((salt ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)) >> 2) - 1.0)
                .map(|v| if v.is_finite() { v } else { 0.5 })
                .collect();
            let x = DataMatrix::with_preprocessing(values, d, m, Preprocessing { centered, standardized }, "p").unwrap();
            let mut buf = Vec::new();
            write_grm1(&x, &mut buf).unwrap();
            let y = read_grm1(&buf[..], "p").unwrap();
            prop_assert_eq!(y.preprocessing(), x.preprocessing());
            prop_assert!(x.values().iter().zip(y.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
