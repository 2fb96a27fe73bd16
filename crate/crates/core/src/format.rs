//! Binary index container.
//!
//! Single little-endian file holding any index kind:
//!
//! ```text
//! magic  "LMQI"                      4 bytes
//! version u32                        currently 1
//! kind    u8                         0 lod_msq, 1 pq, 2 opq, 3 l2_opq,
//!                                    4 msq, 5 lod_opq
//! flags   u8                         bit 0: augmented max norm present
//! dim u32, m u32, n_B u32, n_W u32, l_UQ u8, l_SQ u8
//! kmeans_iters u32, opq_iters u32, clip_lo f64, clip_hi f64
//! [max_norm f32]                     if flag bit 0
//! rotation dim×dim f32, row-major
//! pq codebooks                       n_B × n_W × subspace_dim f32
//! per partition:
//!   center dim f32
//!   has_direction u8 [dim f32]
//!   has_uq u8 [step f32, offset f32]
//!   has_sq u8 [n_levels u16, n_levels f32]
//!   n_entries u64
//!   row_ids n u32
//!   pq codes, bit-packed LSB-first, ⌈log₂ n_W⌉ bits each
//!   [sq codes, l_SQ bits each]
//!   [uq codes, l_UQ bits each, two's complement]
//! ```
//!
//! Every bit-packed section is padded to a byte boundary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::baselines::{AnyIndex, BaselineIndex, BaselineKind, BaselinePartition};
use crate::index::{Direction, IndexConfig, IndexError, LodMsqIndex, Partition};
use crate::quant::{PqCodebook, Rotation, SqCodebook, UqParams, VqCodebook};

const MAGIC: [u8; 4] = *b"LMQI";
const VERSION: u32 = 1;

fn kind_tag(kind: BaselineKind) -> u8 {
    match kind {
        BaselineKind::MipsLodMsq => 0,
        BaselineKind::MipsPq => 1,
        BaselineKind::MipsOpq => 2,
        BaselineKind::L2Opq => 3,
        BaselineKind::MipsMsq => 4,
        BaselineKind::MipsLodOpq => 5,
    }
}

fn tag_kind(tag: u8) -> Result<BaselineKind, IndexError> {
    Ok(match tag {
        0 => BaselineKind::MipsLodMsq,
        1 => BaselineKind::MipsPq,
        2 => BaselineKind::MipsOpq,
        3 => BaselineKind::L2Opq,
        4 => BaselineKind::MipsMsq,
        5 => BaselineKind::MipsLodOpq,
        other => return Err(IndexError::Format(format!("unknown kind tag {other}"))),
    })
}

struct BitWriter {
    bytes: Vec<u8>,
    bit: u32,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            bit: 0,
        }
    }

    fn push(&mut self, value: u32, bits: u32) {
        debug_assert!(bits <= 32);
        for i in 0..bits {
            if self.bit == 0 {
                self.bytes.push(0);
            }
            let b = (value >> i) & 1;
            *self.bytes.last_mut().unwrap() |= (b as u8) << self.bit;
            self.bit = (self.bit + 1) % 8;
        }
    }

    fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    fn pull(&mut self, bits: u32) -> Result<u32, IndexError> {
        let mut out = 0u32;
        for i in 0..bits {
            let byte = self.pos / 8;
            if byte >= self.bytes.len() {
                return Err(IndexError::Format("truncated code section".into()));
            }
            let b = (self.bytes[byte] >> (self.pos % 8)) & 1;
            out |= (b as u32) << i;
            self.pos += 1;
        }
        Ok(out)
    }
}

fn packed_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

struct Writer<W: Write> {
    w: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.w.write_all(&[v])
    }
    fn u16(&mut self, v: u16) -> std::io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn f32(&mut self, v: f32) -> std::io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }
    fn f32s(&mut self, vs: &[f32]) -> std::io::Result<()> {
        for v in vs {
            self.f32(*v)?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    r: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, IndexError> {
        let mut buf = vec![0u8; n];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| IndexError::Format("unexpected end of file".into()))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.bytes(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, IndexError> {
        let b = self.bytes(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32, IndexError> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn u64(&mut self) -> Result<u64, IndexError> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, IndexError> {
        let b = self.bytes(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn f64(&mut self) -> Result<f64, IndexError> {
        let b = self.bytes(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, IndexError> {
        let b = self.bytes(n * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

/// Normalized view of one partition, shared by both index shapes.
struct PartView<'a> {
    center: &'a [f32],
    direction: Option<&'a [f32]>,
    uq: Option<UqParams>,
    sq: Option<&'a SqCodebook>,
    row_ids: &'a [u32],
    pq_codes: &'a [u16],
    sq_codes: &'a [u8],
    uq_codes: &'a [i32],
}

fn views(index: &AnyIndex) -> (BaselineKind, &IndexConfig, usize, &Rotation, &PqCodebook, Option<f32>, Vec<PartView<'_>>) {
    match index {
        AnyIndex::LodMsq(i) => {
            let parts = i
                .partitions
                .iter()
                .map(|p| PartView {
                    center: &p.center,
                    direction: Some(p.direction.as_slice()),
                    uq: Some(p.uq),
                    sq: Some(&p.sq),
                    row_ids: &p.row_ids,
                    pq_codes: &p.pq_codes,
                    sq_codes: &p.sq_codes,
                    uq_codes: &p.uq_codes,
                })
                .collect();
            (
                BaselineKind::MipsLodMsq,
                &i.config,
                i.dim,
                &i.rotation,
                &i.pq,
                None,
                parts,
            )
        }
        AnyIndex::Baseline(b) => {
            let parts = b
                .partitions
                .iter()
                .map(|p| PartView {
                    center: &p.center,
                    direction: p.direction.as_ref().map(|d| d.as_slice()),
                    uq: p.uq,
                    sq: p.sq.as_ref(),
                    row_ids: &p.row_ids,
                    pq_codes: &p.pq_codes,
                    sq_codes: &p.sq_codes,
                    uq_codes: &p.uq_codes,
                })
                .collect();
            (
                b.kind,
                &b.config,
                b.dim,
                &b.rotation,
                &b.pq,
                b.l2_max_norm,
                parts,
            )
        }
    }
}

pub fn write_index<P: AsRef<Path>>(index: &AnyIndex, path: P) -> Result<(), IndexError> {
    let bytes = index_to_bytes(index);
    let mut w = BufWriter::new(
        File::create(path).map_err(|e| IndexError::Format(format!("create: {e}")))?,
    );
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| IndexError::Format(format!("write: {e}")))
}

pub fn index_to_bytes(index: &AnyIndex) -> Vec<u8> {
    let (kind, config, dim, rotation, pq, max_norm, parts) = views(index);
    let mut out = Writer { w: Vec::new() };
    out.w.extend_from_slice(&MAGIC);
    out.u32(VERSION).unwrap();
    out.u8(kind_tag(kind)).unwrap();
    out.u8(max_norm.is_some() as u8).unwrap();
    out.u32(dim as u32).unwrap();
    out.u32(config.partitions as u32).unwrap();
    out.u32(config.subspaces as u32).unwrap();
    out.u32(config.codewords as u32).unwrap();
    out.u8(config.uq_bits).unwrap();
    out.u8(config.sq_bits).unwrap();
    out.u32(config.kmeans_iters as u32).unwrap();
    out.u32(config.opq_iters as u32).unwrap();
    out.f64(config.clip_quantiles.0).unwrap();
    out.f64(config.clip_quantiles.1).unwrap();
    if let Some(u) = max_norm {
        out.f32(u).unwrap();
    }
    out.f32s(rotation.mat()).unwrap();
    for b in 0..config.subspaces {
        out.f32s(pq.base(b).centers_flat()).unwrap();
    }

    let code_bits = config.code_bits();
    for p in &parts {
        out.f32s(p.center).unwrap();
        match p.direction {
            Some(v) => {
                out.u8(1).unwrap();
                out.f32s(v).unwrap();
            }
            None => out.u8(0).unwrap(),
        }
        match p.uq {
            Some(uq) => {
                out.u8(1).unwrap();
                out.f32(uq.step).unwrap();
                out.f32(uq.offset).unwrap();
            }
            None => out.u8(0).unwrap(),
        }
        match p.sq {
            Some(sq) => {
                out.u8(1).unwrap();
                out.u16(sq.len() as u16).unwrap();
                out.f32s(sq.levels()).unwrap();
            }
            None => out.u8(0).unwrap(),
        }
        out.u64(p.row_ids.len() as u64).unwrap();
        for id in p.row_ids {
            out.u32(*id).unwrap();
        }
        let mut bw = BitWriter::new();
        for c in p.pq_codes {
            bw.push(*c as u32, code_bits);
        }
        out.w.extend_from_slice(&bw.finish());
        if p.sq.is_some() {
            let mut bw = BitWriter::new();
            for c in p.sq_codes {
                bw.push(*c as u32, config.sq_bits as u32);
            }
            out.w.extend_from_slice(&bw.finish());
        }
        if p.uq.is_some() {
            let mask = if config.uq_bits == 32 {
                u32::MAX
            } else {
                (1u32 << config.uq_bits) - 1
            };
            let mut bw = BitWriter::new();
            for c in p.uq_codes {
                bw.push(*c as u32 & mask, config.uq_bits as u32);
            }
            out.w.extend_from_slice(&bw.finish());
        }
    }
    out.w
}

pub fn read_index<P: AsRef<Path>>(path: P) -> Result<AnyIndex, IndexError> {
    let f = File::open(path).map_err(|e| IndexError::Format(format!("open: {e}")))?;
    index_from_reader(BufReader::new(f))
}

pub fn index_from_bytes(bytes: &[u8]) -> Result<AnyIndex, IndexError> {
    index_from_reader(bytes)
}

fn index_from_reader<R: Read>(r: R) -> Result<AnyIndex, IndexError> {
    let mut r = Reader { r };
    let magic = r.bytes(4)?;
    if magic != MAGIC {
        return Err(IndexError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(IndexError::Format(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let kind = tag_kind(r.u8()?)?;
    let flags = r.u8()?;
    let dim = r.u32()? as usize;
    let mut config = IndexConfig::new(
        r.u32()? as usize,
        r.u32()? as usize,
        r.u32()? as usize,
        0,
        0,
    );
    config.uq_bits = r.u8()?;
    config.sq_bits = r.u8()?;
    config.kmeans_iters = r.u32()? as usize;
    config.opq_iters = r.u32()? as usize;
    config.clip_quantiles = (r.f64()?, r.f64()?);
    let max_norm = if flags & 1 == 1 { Some(r.f32()?) } else { None };
    if dim == 0 || config.partitions == 0 || config.subspaces == 0 || config.subspaces > dim {
        return Err(IndexError::Format("inconsistent header".into()));
    }

    let rotation = Rotation::from_mat(dim, r.f32s(dim * dim)?);
    let ranges = crate::quant::subspace_ranges(dim, config.subspaces);
    let mut bases = Vec::with_capacity(config.subspaces);
    for range in &ranges {
        let flat = r.f32s(config.codewords * range.len())?;
        bases.push(VqCodebook::from_centers(range.len(), flat));
    }
    let pq = PqCodebook::from_bases(dim, bases);

    let code_bits = config.code_bits();
    let mut partitions = Vec::with_capacity(config.partitions);
    for _ in 0..config.partitions {
        let center = r.f32s(dim)?;
        let direction = if r.u8()? == 1 {
            Some(
                Direction::new(r.f32s(dim)?)
                    .map_err(|_| IndexError::Format("stored direction is not unit norm".into()))?,
            )
        } else {
            None
        };
        let uq = if r.u8()? == 1 {
            Some(UqParams {
                step: r.f32()?,
                offset: r.f32()?,
                bits: config.uq_bits,
            })
        } else {
            None
        };
        let sq = if r.u8()? == 1 {
            let n_levels = r.u16()? as usize;
            let levels = r.f32s(n_levels)?;
            if !levels.windows(2).all(|w| w[0] < w[1]) {
                return Err(IndexError::Format("stored levels not ascending".into()));
            }
            Some(SqCodebook::from_levels(levels))
        } else {
            None
        };
        let n = r.u64()? as usize;
        let id_bytes = r.bytes(n * 4)?;
        let row_ids: Vec<u32> = id_bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let pq_bytes = r.bytes(packed_len(n * config.subspaces, code_bits))?;
        let mut br = BitReader::new(&pq_bytes);
        let mut pq_codes = Vec::with_capacity(n * config.subspaces);
        for _ in 0..n * config.subspaces {
            let c = br.pull(code_bits)?;
            if c as usize >= config.codewords {
                return Err(IndexError::Format("pq code out of range".into()));
            }
            pq_codes.push(c as u16);
        }

        let sq_codes = if let Some(sq) = &sq {
            let bytes = r.bytes(packed_len(n, config.sq_bits as u32))?;
            let mut br = BitReader::new(&bytes);
            let mut codes = Vec::with_capacity(n);
            for _ in 0..n {
                let c = br.pull(config.sq_bits as u32)?;
                if c as usize >= sq.len() {
                    return Err(IndexError::Format("sq code out of range".into()));
                }
                codes.push(c as u8);
            }
            codes
        } else {
            Vec::new()
        };

        let uq_codes = if uq.is_some() {
            let bits = config.uq_bits as u32;
            let bytes = r.bytes(packed_len(n, bits))?;
            let mut br = BitReader::new(&bytes);
            let mut codes = Vec::with_capacity(n);
            for _ in 0..n {
                let raw = br.pull(bits)?;
                // sign-extend from the stored width
                let shifted = raw << (32 - bits);
                codes.push((shifted as i32) >> (32 - bits));
            }
            codes
        } else {
            Vec::new()
        };

        partitions.push(BaselinePartition {
            center,
            direction,
            uq,
            sq,
            row_ids,
            pq_codes,
            sq_codes,
            uq_codes,
        });
    }

    if kind == BaselineKind::MipsLodMsq {
        let parts = partitions
            .into_iter()
            .map(|p| {
                Ok(Partition {
                    center: p.center,
                    direction: p
                        .direction
                        .ok_or_else(|| IndexError::Format("missing direction".into()))?,
                    uq: p.uq.ok_or_else(|| IndexError::Format("missing uq".into()))?,
                    sq: p.sq.ok_or_else(|| IndexError::Format("missing sq".into()))?,
                    row_ids: p.row_ids,
                    pq_codes: p.pq_codes,
                    sq_codes: p.sq_codes,
                    uq_codes: p.uq_codes,
                })
            })
            .collect::<Result<Vec<_>, IndexError>>()?;
        Ok(AnyIndex::LodMsq(LodMsqIndex {
            config,
            dim,
            rotation,
            pq,
            partitions: parts,
        }))
    } else {
        Ok(AnyIndex::Baseline(BaselineIndex {
            kind,
            config,
            dim,
            rotation,
            pq,
            partitions,
            l2_max_norm: max_norm,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::build_baseline;
    use crate::index::ProjDirMode;
    use crate::synth;

    fn tmp_path(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("lodmsq-format-{}-{}", std::process::id(), name));
        p
    }

    #[test]
    fn roundtrip_every_kind() {
        let data = synth::clustered(300, 12, 10, 3);
        let mut config = crate::index::IndexConfig::new(5, 4, 8, 6, 4);
        config.opq_iters = 2;
        for kind in BaselineKind::ALL {
            let index = build_baseline(kind, &data, config, ProjDirMode::Center, 7).unwrap();
            let bytes = index_to_bytes(&index);
            let back = index_from_bytes(&bytes).unwrap();
            assert_eq!(back, index, "{kind}");
            // serialize(deserialize(bytes)) must be byte-identical
            assert_eq!(index_to_bytes(&back), bytes, "{kind}");
        }
    }

    #[test]
    fn file_roundtrip() {
        let set = synth::lossless_lod_msq(288, 3);
        let index = build_baseline(
            BaselineKind::MipsLodMsq,
            &set.data,
            set.config,
            ProjDirMode::Center,
            1,
        )
        .unwrap();
        let p = tmp_path("roundtrip.idx");
        write_index(&index, &p).unwrap();
        let back = read_index(&p).unwrap();
        assert_eq!(back, index);
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn truncated_file_errors() {
        let set = synth::lossless_lod_msq(288, 4);
        let index = build_baseline(
            BaselineKind::MipsLodMsq,
            &set.data,
            set.config,
            ProjDirMode::Center,
            1,
        )
        .unwrap();
        let bytes = index_to_bytes(&index);
        for cut in [3, 16, 64, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                index_from_bytes(&bytes[..cut]).is_err(),
                "cut at {cut} must fail"
            );
        }
    }

    #[test]
    fn bad_magic_and_version_error() {
        let set = synth::lossless_lod_msq(288, 5);
        let index = build_baseline(
            BaselineKind::MipsLodMsq,
            &set.data,
            set.config,
            ProjDirMode::Center,
            1,
        )
        .unwrap();
        let mut bytes = index_to_bytes(&index);
        let orig = bytes.clone();
        bytes[0] ^= 0xff;
        match index_from_bytes(&bytes) {
            Err(IndexError::Format(msg)) => assert!(msg.contains("magic"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        bytes = orig;
        bytes[4] = 99; // version field
        match index_from_bytes(&bytes) {
            Err(IndexError::Format(msg)) => assert!(msg.contains("version"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bit_packing_roundtrips_signed_codes() {
        for bits in [4u32, 5, 8, 12] {
            let lo = -(1i32 << (bits - 1));
            let hi = (1i32 << (bits - 1)) - 1;
            let mut bw = BitWriter::new();
            let mask = (1u32 << bits) - 1;
            let codes: Vec<i32> = (lo..=hi).collect();
            for c in &codes {
                bw.push(*c as u32 & mask, bits);
            }
            let bytes = bw.finish();
            assert_eq!(bytes.len(), packed_len(codes.len(), bits));
            let mut br = BitReader::new(&bytes);
            for want in &codes {
                let raw = br.pull(bits).unwrap();
                let got = ((raw << (32 - bits)) as i32) >> (32 - bits);
                assert_eq!(got, *want);
            }
        }
    }
}
