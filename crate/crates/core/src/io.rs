//! Binary kernel, eigenwave and array files, plus atomic writes.
//!
//! All formats are little-endian and start with a 4-byte magic and a `u16`
//! version. Any file may end with a provenance block: `"PROV"`, a `u32`
//! length and that many bytes of JSON.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hogmt::EigenwaveSet;
use crate::kernel::{Domain, FrameGrid, KernelMatrix};

pub const VERSION: u16 = 1;
const KERNEL_MAGIC: &[u8; 4] = b"EIGK";
const EIGEN_MAGIC: &[u8; 4] = b"EIGW";
const ARRAY_MAGIC: &[u8; 4] = b"EIGA";
const PROV_MAGIC: &[u8; 4] = b"PROV";

type C = Complex<f64>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: Option<u64>,
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let with_path = |e: std::io::Error| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(with_path)?;
    tmp.write_all(bytes).map_err(with_path)?;
    tmp.as_file().sync_all().map_err(with_path)?;
    tmp.persist(path).map_err(|e| with_path(e.error))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u16(VERSION);
        w
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn c64(&mut self, z: C) {
        self.f64(z.re);
        self.f64(z.im);
    }
    fn finish(mut self, prov: Option<&Provenance>) -> Vec<u8> {
        if let Some(p) = prov {
            let json = serde_json::to_vec(p).expect("provenance serializes");
            self.0.extend_from_slice(PROV_MAGIC);
            self.0.extend_from_slice(&(json.len() as u32).to_le_bytes());
            self.0.extend_from_slice(&json);
        }
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let got = r.take(4)?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        let v = r.u16()?;
        if v != VERSION {
            return Err(Error::Format(format!("unsupported version {v}")));
        }
        Ok(r)
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated file: need {n} bytes at offset {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn c64(&mut self) -> Result<C> {
        Ok(C::new(self.f64()?, self.f64()?))
    }
    fn complex_count(&self, n: usize) -> Result<()> {
        let need = n
            .checked_mul(16)
            .ok_or_else(|| Error::Format("element count overflows".into()))?;
        if self.buf.len() - self.pos < need {
            return Err(Error::Format(format!(
                "truncated file: {n} complex values need {need} bytes, {} remain",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
    fn finish(mut self) -> Result<Option<Provenance>> {
        if self.pos == self.buf.len() {
            return Ok(None);
        }
        if self.take(4)? != PROV_MAGIC {
            return Err(Error::Format(format!("trailing bytes at offset {}", self.pos - 4)));
        }
        let n = self.u32()?;
        let json = self.take(n)?;
        if self.pos != self.buf.len() {
            return Err(Error::Format("trailing bytes after provenance block".into()));
        }
        serde_json::from_slice(json)
            .map(Some)
            .map_err(|e| Error::Format(format!("provenance: {e}")))
    }
}

/// `EIGK`: domain tag `u8`; users rx, users tx, symbols, subcarriers as `u32`;
/// subcarrier spacing `f64`; then the matrix row-major as `(re, im)` pairs.
pub fn encode_kernel(k: &KernelMatrix<f64>, prov: Option<&Provenance>) -> Result<Vec<u8>> {
    let g = k.grid();
    let mut w = Writer::new(KERNEL_MAGIC);
    w.u8(k.domain().tag());
    w.u32(g.n_users_rx)?;
    w.u32(g.n_users_tx)?;
    w.u32(g.n_symbols)?;
    w.u32(g.n_subcarriers)?;
    w.f64(g.subcarrier_spacing_hz);
    let m = k.data();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            w.c64(m[(r, c)]);
        }
    }
    Ok(w.finish(prov))
}

pub fn decode_kernel(bytes: &[u8]) -> Result<(KernelMatrix<f64>, Option<Provenance>)> {
    let mut r = Reader::open(bytes, KERNEL_MAGIC)?;
    let domain = Domain::from_tag(r.u8()?)?;
    let grid = FrameGrid {
        n_users_rx: r.u32()?,
        n_users_tx: r.u32()?,
        n_symbols: r.u32()?,
        n_subcarriers: r.u32()?,
        subcarrier_spacing_hz: r.f64()?,
    };
    grid.validate()?;
    let (rows, cols) = (grid.dim_out(), grid.dim_in());
    r.complex_count(rows * cols)?;
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = r.c64()?;
        }
    }
    let prov = r.finish()?;
    Ok((KernelMatrix::new(m, grid, domain)?, prov))
}

/// `EIGW`: `D_out`, `D_in`, `N` as `u32`; `σ` as `f64`; then `Ψ` and `Φ`
/// column-major as `(re, im)` pairs.
pub fn encode_eigenwaves(e: &EigenwaveSet<f64>, prov: Option<&Provenance>) -> Result<Vec<u8>> {
    let mut w = Writer::new(EIGEN_MAGIC);
    w.u32(e.psis().nrows())?;
    w.u32(e.phis().nrows())?;
    w.u32(e.len())?;
    for s in e.sigmas() {
        w.f64(*s);
    }
    for z in e.psis().iter().chain(e.phis().iter()) {
        w.c64(*z);
    }
    Ok(w.finish(prov))
}

/// Loads an eigenwave file; the grid defaults to [`FrameGrid::flat`].
pub fn decode_eigenwaves(
    bytes: &[u8],
    grid: Option<(FrameGrid, Domain)>,
) -> Result<(EigenwaveSet<f64>, Option<Provenance>)> {
    let mut r = Reader::open(bytes, EIGEN_MAGIC)?;
    let (d_out, d_in, n) = (r.u32()?, r.u32()?, r.u32()?);
    let sigmas = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.complex_count((d_out + d_in) * n)?;
    let mut read = |rows: usize| -> Result<DMatrix<C>> {
        let data = (0..rows * n).map(|_| r.c64()).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_vec(rows, n, data))
    };
    let psis = read(d_out)?;
    let phis = read(d_in)?;
    let prov = r.finish()?;
    let (grid, domain) = grid.unwrap_or((FrameGrid::flat(d_out, d_in), Domain::TimeDomain));
    Ok((EigenwaveSet::from_parts(sigmas, psis, phis, grid, domain)?, prov))
}

/// `EIGA`: rank `u8`, each dimension as `u32`, then the elements row-major in
/// the kernel element format (imaginary parts zero).
pub fn encode_array(shape: &[usize], data: &[f64], prov: Option<&Provenance>) -> Result<Vec<u8>> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(Error::Dimension {
            what: "array elements",
            expected,
            got: data.len(),
        });
    }
    let rank = u8::try_from(shape.len()).map_err(|_| Error::Format("array rank exceeds 255".into()))?;
    let mut w = Writer::new(ARRAY_MAGIC);
    w.u8(rank);
    for d in shape {
        w.u32(*d)?;
    }
    for x in data {
        w.c64(C::new(*x, 0.0));
    }
    Ok(w.finish(prov))
}

pub fn decode_array(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>, Option<Provenance>)> {
    let mut r = Reader::open(bytes, ARRAY_MAGIC)?;
    let rank = r.u8()? as usize;
    let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let n = shape
        .iter()
        .try_fold(1usize, |a, d| a.checked_mul(*d))
        .ok_or_else(|| Error::Format("array too large".into()))?;
    r.complex_count(n)?;
    let data = (0..n).map(|_| r.c64().map(|z| z.re)).collect::<Result<Vec<_>>>()?;
    let prov = r.finish()?;
    Ok((shape, data, prov))
}

pub fn write_kernel(path: &Path, k: &KernelMatrix<f64>, prov: Option<&Provenance>) -> Result<()> {
    atomic_write(path, &encode_kernel(k, prov)?)
}

pub fn read_kernel(path: &Path) -> Result<KernelMatrix<f64>> {
    Ok(decode_kernel(&read_file(path)?)?.0)
}

pub fn write_eigenwaves(path: &Path, e: &EigenwaveSet<f64>, prov: Option<&Provenance>) -> Result<()> {
    atomic_write(path, &encode_eigenwaves(e, prov)?)
}

pub fn read_eigenwaves(path: &Path) -> Result<EigenwaveSet<f64>> {
    Ok(decode_eigenwaves(&read_file(path)?, None)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hogmt::decompose;
    use crate::random::{gaussian_matrix, stream};

    fn sample_kernel() -> KernelMatrix<f64> {
        let g = FrameGrid::single_user(2, 3, 15e3).unwrap();
        KernelMatrix::new(gaussian_matrix(&mut stream(1), 6, 6), g, Domain::TimeFrequency).unwrap()
    }

    #[test]
    fn kernel_layout_is_bit_exact() {
        let m = DMatrix::from_row_slice(1, 2, &[C::new(1.0, 2.0), C::new(3.0, 4.0)]);
        let k = KernelMatrix::new(m, FrameGrid::flat(1, 2), Domain::TimeDomain).unwrap();
        let b = encode_kernel(&k, None).unwrap();
        assert_eq!(&b[..4], b"EIGK");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(b[6], 1);
        assert_eq!(&b[7..11], &1u32.to_le_bytes());
        assert_eq!(&b[11..15], &2u32.to_le_bytes());
        assert_eq!(b.len(), 7 + 16 + 8 + 32);
        assert_eq!(&b[31..39], &1.0f64.to_le_bytes());
        assert_eq!(&b[55..63], &4.0f64.to_le_bytes());
    }

    #[test]
    fn kernel_round_trip_with_provenance() {
        let k = sample_kernel();
        let p = Provenance {
            config_hash: "ab".into(),
            master_seed: Some(5),
        };
        let (back, prov) = decode_kernel(&encode_kernel(&k, Some(&p)).unwrap()).unwrap();
        assert_eq!(back, k);
        assert_eq!(prov, Some(p));
    }

    #[test]
    fn eigenwave_round_trip() {
        let k = sample_kernel();
        let e = decompose(&k, None).unwrap();
        let bytes = encode_eigenwaves(&e, None).unwrap();
        assert_eq!(bytes.len(), 6 + 12 + 6 * 8 + 2 * 36 * 16);
        let (back, _) = decode_eigenwaves(&bytes, Some((*k.grid(), k.domain()))).unwrap();
        assert_eq!(back, e);
        let (flat, _) = decode_eigenwaves(&bytes, None).unwrap();
        assert_eq!(flat.grid(), &FrameGrid::flat(6, 6));
    }

    #[test]
    fn array_round_trip() {
        let data: Vec<f64> = (0..24).map(|i| i as f64 * 0.5).collect();
        let b = encode_array(&[2, 3, 4], &data, None).unwrap();
        assert_eq!(b[6], 3);
        let (shape, back, _) = decode_array(&b).unwrap();
        assert_eq!(shape, vec![2, 3, 4]);
        assert_eq!(back, data);
        assert!(encode_array(&[2, 2], &data, None).is_err());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let b = encode_kernel(&sample_kernel(), None).unwrap();
        assert!(matches!(decode_kernel(&b[..b.len() - 1]), Err(Error::Format(_))));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_kernel(&bad), Err(Error::Format(_))));
        let mut v2 = b.clone();
        v2[4] = 2;
        assert!(matches!(decode_kernel(&v2), Err(Error::Format(_))));
        let mut extra = b.clone();
        extra.extend_from_slice(b"junk");
        assert!(decode_kernel(&extra).is_err());
        assert!(decode_eigenwaves(&b, None).is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.eigk");
        write_kernel(&p, &sample_kernel(), None).unwrap();
        let first = read_kernel(&p).unwrap();
        assert_eq!(first, sample_kernel());
        atomic_write(&p, b"x").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"x");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let err = read_kernel(&dir.path().join("missing")).unwrap_err().to_string();
        assert!(err.contains("missing"));
    }
}
