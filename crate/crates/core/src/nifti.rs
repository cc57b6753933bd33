//! NIfTI-1 single-file (`.nii`, `.nii.gz`) and pair (`.hdr`/`.img`) I/O.
//!
//! Only axis-aligned orientations (axis permutations and flips) are
//! accepted. Data is brought into the canonical x-fastest layout with
//! positive spacing; the world frame of the file is kept.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DisplacementField;
use crate::grid::Grid;
use crate::volume::{InstanceMask, Volume};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_UINT16: i16 = 512;

#[derive(Debug, Clone)]
struct Header {
    big_endian: bool,
    dim: [i16; 8],
    datatype: i16,
    pixdim: [f32; 8],
    vox_offset: f32,
    scl_slope: f32,
    scl_inter: f32,
    qform_code: i16,
    sform_code: i16,
    quatern: [f32; 3],
    qoffset: [f32; 3],
    srow: [[f32; 4]; 3],
    magic: [u8; 4],
}

struct Cursor<'a> {
    buf: &'a [u8],
    be: bool,
}

impl Cursor<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.buf[off], self.buf[off + 1]];
        if self.be {
            i16::from_be_bytes(b)
        } else {
            i16::from_le_bytes(b)
        }
    }
    fn f32(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.buf[off..off + 4].try_into().unwrap();
        if self.be {
            f32::from_be_bytes(b)
        } else {
            f32::from_le_bytes(b)
        }
    }
}

fn parse_header(buf: &[u8]) -> Result<Header> {
    if buf.len() < HEADER_SIZE {
        return Err(Error::Header(format!("file too short ({} bytes)", buf.len())));
    }
    let le = i32::from_le_bytes(buf[0..4].try_into().unwrap());
    let be = i32::from_be_bytes(buf[0..4].try_into().unwrap());
    let big_endian = match (le, be) {
        (348, _) => false,
        (_, 348) => true,
        _ => return Err(Error::Header(format!("sizeof_hdr is {le}, expected 348"))),
    };
    let c = Cursor { buf, be: big_endian };
    let magic: [u8; 4] = buf[344..348].try_into().unwrap();
    if &magic[..3] != b"n+1" && &magic[..3] != b"ni1" {
        return Err(Error::Header(format!("bad magic {:?}", &magic[..3])));
    }
    Ok(Header {
        big_endian,
        dim: std::array::from_fn(|i| c.i16(40 + 2 * i)),
        datatype: c.i16(70),
        pixdim: std::array::from_fn(|i| c.f32(76 + 4 * i)),
        vox_offset: c.f32(108),
        scl_slope: c.f32(112),
        scl_inter: c.f32(116),
        qform_code: c.i16(252),
        sform_code: c.i16(254),
        quatern: [c.f32(256), c.f32(260), c.f32(264)],
        qoffset: [c.f32(268), c.f32(272), c.f32(276)],
        srow: std::array::from_fn(|r| std::array::from_fn(|k| c.f32(280 + 16 * r + 4 * k))),
        magic,
    })
}

impl Header {
    fn shape(&self) -> Result<[usize; 3]> {
        let nd = self.dim[0];
        if !(1..=7).contains(&nd) {
            return Err(Error::Header(format!("dim[0] = {nd} out of range")));
        }
        let mut shape = [1usize; 3];
        for k in 0..3 {
            if (k as i16) < nd {
                let d = self.dim[k + 1];
                if d < 1 {
                    return Err(Error::Header(format!("dim[{}] = {d}", k + 1)));
                }
                shape[k] = d as usize;
            }
        }
        for k in 4..=(nd as usize) {
            if self.dim[k] > 1 {
                return Err(Error::Header(format!(
                    "only 3D volumes are supported (dim[{k}] = {})",
                    self.dim[k]
                )));
            }
        }
        Ok(shape)
    }

    /// Voxel-to-world affine: 3x3 direction/scale part and offset.
    fn affine(&self) -> ([[f64; 3]; 3], [f64; 3]) {
        if self.sform_code > 0 {
            let m = std::array::from_fn(|r| std::array::from_fn(|k| self.srow[r][k] as f64));
            let o = std::array::from_fn(|r| self.srow[r][3] as f64);
            return (m, o);
        }
        let d: [f64; 3] = std::array::from_fn(|k| self.pixdim[k + 1].abs() as f64);
        if self.qform_code > 0 {
            let [b, c, dq] = self.quatern.map(|v| v as f64);
            let a = (1.0 - (b * b + c * c + dq * dq)).max(0.0).sqrt();
            let r = [
                [a * a + b * b - c * c - dq * dq, 2.0 * (b * c - a * dq), 2.0 * (b * dq + a * c)],
                [2.0 * (b * c + a * dq), a * a + c * c - b * b - dq * dq, 2.0 * (c * dq - a * b)],
                [2.0 * (b * dq - a * c), 2.0 * (c * dq + a * b), a * a + dq * dq - c * c - b * b],
            ];
            let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
            let scale = [d[0], d[1], qfac * d[2]];
            let m = std::array::from_fn(|row| std::array::from_fn(|col| r[row][col] * scale[col]));
            return (m, self.qoffset.map(|v| v as f64));
        }
        let m = std::array::from_fn(|r| std::array::from_fn(|k| if r == k { d[k] } else { 0.0 }));
        (m, [0.0; 3])
    }
}

/// How file voxel axes map onto canonical axes.
struct Orientation {
    /// canonical axis for each file axis
    perm: [usize; 3],
    flip: [bool; 3],
    grid: Grid,
}

fn orientation(h: &Header, shape: [usize; 3]) -> Result<Orientation> {
    let (m, off) = h.affine();
    let mut perm = [0usize; 3];
    let mut flip = [false; 3];
    let mut spacing = [0.0; 3];
    let mut used = [false; 3];
    for j in 0..3 {
        let col = [m[0][j], m[1][j], m[2][j]];
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (r, &big) = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        let off_axis = col
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != r)
            .any(|(_, v)| v.abs() > 1e-6 * norm.max(1e-12));
        if norm == 0.0 || off_axis || used[r] {
            return Err(Error::NonAxisAligned(m));
        }
        used[r] = true;
        perm[j] = r;
        flip[j] = big < 0.0;
        spacing[r] = big.abs();
    }
    let mut cshape = [0usize; 3];
    let mut origin = off;
    for j in 0..3 {
        let r = perm[j];
        cshape[r] = shape[j];
        if flip[j] {
            origin[r] += m[r][j] * (shape[j] - 1) as f64;
        }
    }
    Ok(Orientation {
        perm,
        flip,
        grid: Grid::new(cshape, spacing, origin)?,
    })
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn pair_image_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    if let Some(stem) = s.strip_suffix(".hdr.gz") {
        PathBuf::from(format!("{stem}.img.gz"))
    } else if let Some(stem) = s.strip_suffix(".hdr") {
        PathBuf::from(format!("{stem}.img"))
    } else {
        path.with_extension("img")
    }
}

enum Samples {
    Int(Vec<i64>),
    Float(Vec<f64>),
}

struct Raw {
    header: Header,
    orient: Orientation,
    samples: Samples,
}

fn read_raw(path: &Path) -> Result<Raw> {
    let bytes = read_maybe_gz(path)?;
    let header = parse_header(&bytes)?;
    let shape = header.shape()?;
    let orient = orientation(&header, shape)?;
    let n = shape[0] * shape[1] * shape[2];

    let (payload, start): (Vec<u8>, usize) = if &header.magic[..3] == b"ni1" {
        (read_maybe_gz(&pair_image_path(path))?, header.vox_offset.max(0.0) as usize)
    } else {
        let off = header.vox_offset as usize;
        if off < HEADER_SIZE {
            return Err(Error::Header(format!("vox_offset {off} inside header")));
        }
        (bytes, off)
    };
    let width = match header.datatype {
        DT_UINT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(Error::UnsupportedDatatype(other)),
    };
    let need = start + n * width;
    if payload.len() < need {
        return Err(Error::Header(format!(
            "data truncated: need {need} bytes, have {}",
            payload.len()
        )));
    }
    let be = header.big_endian;
    let d = &payload[start..need];
    macro_rules! decode {
        ($t:ty, $w:expr) => {
            d.chunks_exact($w).map(|c| {
                let a: [u8; $w] = c.try_into().unwrap();
                if be {
                    <$t>::from_be_bytes(a)
                } else {
                    <$t>::from_le_bytes(a)
                }
            })
        };
    }
    let samples = match header.datatype {
        DT_UINT8 => Samples::Int(d.iter().map(|&b| b as i64).collect()),
        DT_INT16 => Samples::Int(decode!(i16, 2).map(|v| v as i64).collect()),
        DT_UINT16 => Samples::Int(decode!(u16, 2).map(|v| v as i64).collect()),
        DT_INT32 => Samples::Int(decode!(i32, 4).map(|v| v as i64).collect()),
        DT_FLOAT32 => Samples::Float(decode!(f32, 4).map(|v| v as f64).collect()),
        DT_FLOAT64 => Samples::Float(decode!(f64, 8).collect()),
        _ => unreachable!(),
    };
    Ok(Raw {
        header,
        orient,
        samples,
    })
}

/// Reorder file-order samples into canonical layout.
fn canonicalize<T: Copy + Default>(o: &Orientation, file_shape: [usize; 3], src: &[T]) -> Vec<T> {
    let g = &o.grid;
    let mut out = vec![T::default(); src.len()];
    let mut i = 0;
    for k in 0..file_shape[2] {
        for j in 0..file_shape[1] {
            for x in 0..file_shape[0] {
                let f = [x, j, k];
                let mut c = [0usize; 3];
                for a in 0..3 {
                    let v = if o.flip[a] { file_shape[a] - 1 - f[a] } else { f[a] };
                    c[o.perm[a]] = v;
                }
                out[g.index(c[0], c[1], c[2])] = src[i];
                i += 1;
            }
        }
    }
    out
}

fn file_shape(o: &Orientation) -> [usize; 3] {
    std::array::from_fn(|j| o.grid.shape[o.perm[j]])
}

fn scaling(h: &Header) -> Option<(f64, f64)> {
    let (s, i) = (h.scl_slope as f64, h.scl_inter as f64);
    if s == 0.0 || !s.is_finite() || (s == 1.0 && i == 0.0) {
        None
    } else {
        Some((s, i))
    }
}

/// Read any supported NIfTI file as a float volume.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let raw = read_raw(path.as_ref())?;
    let fs = file_shape(&raw.orient);
    let mut vals: Vec<f64> = match raw.samples {
        Samples::Int(v) => v.into_iter().map(|x| x as f64).collect(),
        Samples::Float(v) => v,
    };
    if let Some((s, i)) = scaling(&raw.header) {
        vals.iter_mut().for_each(|v| *v = *v * s + i);
    }
    if vals.iter().any(|v| v.is_nan()) {
        return Err(Error::NanVoxel);
    }
    let data: Vec<f32> = vals.into_iter().map(|v| v as f32).collect();
    Volume::new(raw.orient.grid, canonicalize(&raw.orient, fs, &data))
}

/// Read an integer-typed NIfTI file as a label mask.
pub fn load_mask(path: impl AsRef<Path>) -> Result<InstanceMask> {
    let raw = read_raw(path.as_ref())?;
    let fs = file_shape(&raw.orient);
    if scaling(&raw.header).is_some() {
        return Err(Error::InvalidInput("label files must not use intensity scaling".into()));
    }
    let ints = match raw.samples {
        Samples::Int(v) => v,
        Samples::Float(v) => {
            // float-typed label maps are common; accept exact integers only
            if v.iter().any(|x| x.fract() != 0.0 || x.is_nan()) {
                return Err(Error::InvalidInput("label file holds non-integer values".into()));
            }
            v.into_iter().map(|x| x as i64).collect()
        }
    };
    if let Some(bad) = ints.iter().find(|&&v| !(0..=u16::MAX as i64).contains(&v)) {
        return Err(Error::InvalidInput(format!("label value {bad} out of range")));
    }
    let labels: Vec<u16> = ints.into_iter().map(|v| v as u16).collect();
    InstanceMask::from_labels(raw.orient.grid, canonicalize(&raw.orient, fs, &labels))
}

fn build_header(grid: &Grid, datatype: i16, bitpix: i16, descrip: &str) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET];
    let put_i16 = |h: &mut Vec<u8>, off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut Vec<u8>, off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    h[38] = b'r';
    let dim = [3i16, grid.shape[0] as i16, grid.shape[1] as i16, grid.shape[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put_i16(&mut h, 40 + 2 * i, *d);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bitpix);
    let pixdim = [1.0f32, grid.spacing[0] as f32, grid.spacing[1] as f32, grid.spacing[2] as f32, 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        put_f32(&mut h, 76 + 4 * i, *p);
    }
    put_f32(&mut h, 108, VOX_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    h[123] = 2; // mm
    let d = descrip.as_bytes();
    let n = d.len().min(79);
    h[148..148 + n].copy_from_slice(&d[..n]);
    put_i16(&mut h, 252, 1);
    put_i16(&mut h, 254, 1);
    for k in 0..3 {
        put_f32(&mut h, 268 + 4 * k, grid.origin[k] as f32);
    }
    for r in 0..3 {
        for k in 0..3 {
            let v = if r == k { grid.spacing[k] as f32 } else { 0.0 };
            put_f32(&mut h, 280 + 16 * r + 4 * k, v);
        }
        put_f32(&mut h, 280 + 16 * r + 12, grid.origin[r] as f32);
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path.to_string_lossy().ends_with(".gz");
    let out = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write a volume as float32 NIfTI-1 (gzip when the path ends in `.gz`).
pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = build_header(v.grid(), DT_FLOAT32, 32, "lesiontrack volume");
    bytes.reserve(v.data().len() * 4);
    for x in v.data() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    write_file(path.as_ref(), &bytes)
}

/// Write a label mask as uint16 NIfTI-1.
pub fn save_mask(m: &InstanceMask, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = build_header(m.grid(), DT_UINT16, 16, "lesiontrack labels");
    bytes.reserve(m.data().len() * 2);
    for x in m.data() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    write_file(path.as_ref(), &bytes)
}

/// JSON sidecar binding the three component files of a displacement field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub kind: String,
    pub units: String,
    pub dx: String,
    pub dy: String,
    pub dz: String,
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

/// Write `<stem>_dx.nii.gz`, `_dy`, `_dz` next to `<stem>.json`.
pub fn save_field(u: &DisplacementField, sidecar: impl AsRef<Path>) -> Result<FieldSidecar> {
    let sidecar = sidecar.as_ref();
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let stem = sidecar
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "field".into());
    let names = ["dx", "dy", "dz"].map(|c| format!("{stem}_{c}.nii.gz"));
    let comps = u.components();
    for (name, comp) in names.iter().zip(comps.iter()) {
        save_volume(&Volume::from_f64(*u.grid(), comp)?, dir.join(name))?;
    }
    let g = u.grid();
    let meta = FieldSidecar {
        kind: "displacement_field".into(),
        units: "mm".into(),
        dx: names[0].clone(),
        dy: names[1].clone(),
        dz: names[2].clone(),
        shape: g.shape,
        spacing: g.spacing,
        origin: g.origin,
    };
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(sidecar, json).map_err(|e| Error::io(sidecar, e))?;
    Ok(meta)
}

/// Load a field written by [`save_field`].
pub fn load_field(sidecar: impl AsRef<Path>) -> Result<DisplacementField> {
    let sidecar = sidecar.as_ref();
    let text = fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let meta: FieldSidecar = serde_json::from_str(&text)?;
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let vols = [&meta.dx, &meta.dy, &meta.dz]
        .map(|n| load_volume(dir.join(n)));
    let [a, b, c] = vols;
    let (a, b, c) = (a?, b?, c?);
    a.grid().ensure_matches(b.grid(), "field components")?;
    a.grid().ensure_matches(c.grid(), "field components")?;
    let comps = [a.to_f64(), b.to_f64(), c.to_f64()];
    DisplacementField::from_components(*a.grid(), [&comps[0], &comps[1], &comps[2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_with_sform(shape: [usize; 3], m: [[f32; 4]; 3], datatype: i16, bitpix: i16) -> Vec<u8> {
        let g = Grid::unit(shape);
        let mut h = build_header(&g, datatype, bitpix, "test");
        h[252..254].copy_from_slice(&0i16.to_le_bytes());
        for r in 0..3 {
            for k in 0..4 {
                h[280 + 16 * r + 4 * k..284 + 16 * r + 4 * k].copy_from_slice(&m[r][k].to_le_bytes());
            }
        }
        h
    }

    #[test]
    fn ramp_roundtrip_plain_and_gz() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new([4, 4, 4], [0.8, 0.8, 1.0], [-3.5, 2.0, 10.0]).unwrap();
        let v = Volume::from_fn(g, |[x, y, z]| (x + 4 * y + 16 * z) as f32 * 0.5).unwrap();
        for name in ["a.nii", "a.nii.gz"] {
            let p = dir.path().join(name);
            save_volume(&v, &p).unwrap();
            let back = load_volume(&p).unwrap();
            assert_eq!(back.data(), v.data());
            assert!(back.grid().matches(v.grid()));
            assert_eq!(back.grid().spacing[0], 0.8f32 as f64);
        }
    }

    #[test]
    fn mask_roundtrip_keeps_k() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::unit([5, 5, 5]);
        let m = InstanceMask::from_labels(g, (0..125).map(|i| (i % 4) as u16).collect()).unwrap();
        let p = dir.path().join("m.nii.gz");
        save_mask(&m, &p).unwrap();
        let back = load_mask(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.num_instances(), 3);
    }

    #[test]
    fn flipped_and_permuted_affine_is_canonicalized() {
        let dir = tempfile::tempdir().unwrap();
        // file axis 0 -> world y (flipped, 2mm), axis 1 -> world x (1mm), axis 2 -> z (3mm)
        let m = [
            [0.0, 1.0, 0.0, 5.0],
            [-2.0, 0.0, 0.0, 20.0],
            [0.0, 0.0, 3.0, -1.0],
        ];
        let shape = [3, 2, 2];
        let mut bytes = header_with_sform(shape, m, DT_INT16, 16);
        let mut vals = Vec::new();
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..3 {
                    vals.push((100 * i + 10 * j + k) as i16);
                }
            }
        }
        for v in &vals {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let p = dir.path().join("o.nii");
        fs::write(&p, &bytes).unwrap();
        let v = load_volume(&p).unwrap();
        assert_eq!(v.grid().shape, [2, 3, 2]);
        assert_eq!(v.grid().spacing, [1.0, 2.0, 3.0]);
        assert_eq!(v.grid().origin, [5.0, 16.0, -1.0]);
        // canonical (x=j, y=2-i, z=k) holds file value (i, j, k)
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..2 {
                    assert_eq!(v.get(j, 2 - i, k), (100 * i + 10 * j + k) as f32);
                }
            }
        }
    }

    #[test]
    fn rotated_sform_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = std::f32::consts::FRAC_1_SQRT_2;
        let m = [[c, -c, 0.0, 0.0], [c, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
        let mut bytes = header_with_sform([2, 2, 2], m, DT_FLOAT32, 32);
        bytes.extend(std::iter::repeat(0u8).take(32));
        let p = dir.path().join("r.nii");
        fs::write(&p, &bytes).unwrap();
        let err = load_volume(&p).unwrap_err();
        assert!(matches!(err, Error::NonAxisAligned(_)));
        assert!(err.to_string().contains("non-axis-aligned orientation"));
    }

    #[test]
    fn nan_and_bad_headers_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::unit([2, 1, 1]);
        let mut bytes = build_header(&g, DT_FLOAT32, 32, "");
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        let p = dir.path().join("n.nii");
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_volume(&p), Err(Error::NanVoxel)));

        let mut bad = bytes.clone();
        bad[344..347].copy_from_slice(b"xyz");
        fs::write(&p, &bad).unwrap();
        assert!(matches!(load_volume(&p), Err(Error::Header(_))));

        let mut dt = bytes.clone();
        dt[70..72].copy_from_slice(&32i16.to_le_bytes());
        fs::write(&p, &dt).unwrap();
        assert!(matches!(load_volume(&p), Err(Error::UnsupportedDatatype(32))));
    }

    #[test]
    fn missing_directory_is_io_error() {
        let v = Volume::filled(Grid::unit([2, 2, 2]), 1.0);
        let err = save_volume(&v, "/nonexistent-dir/x/y.nii.gz").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn field_sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new([3, 4, 5], [1.0, 2.0, 0.5], [1.0, 1.0, 1.0]).unwrap();
        let u = DisplacementField::from_fn(g, |p| [p[0] * 0.5, -1.0, p[2]]).unwrap();
        let side = dir.path().join("u_fwd.json");
        save_field(&u, &side).unwrap();
        assert!(dir.path().join("u_fwd_dx.nii.gz").exists());
        let back = load_field(&side).unwrap();
        for (a, b) in back.data().iter().zip(u.data()) {
            for k in 0..3 {
                assert_eq!(a[k], b[k] as f32 as f64);
            }
        }
    }
}
