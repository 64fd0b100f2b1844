use super::codec::{Reader, Writer};
use crate::aggregate::{BowHistogram, Normalization, VladVector};
use crate::error::Result;
use crate::hashing::{BinaryCode, HashingModel, Layout};
use crate::reconstruct::ContextTag;
use crate::retrieval::{DatabaseIndex, GeoPoint, ImageId, IndexedImage, PqCodebooks};
use crate::vocab::{DescriptorSet, VocabularyTree};

pub const TREE_MAGIC: &[u8; 8] = b"DHTREE01";
pub const DESC_MAGIC: &[u8; 8] = b"DHDESC01";
pub const HASH_MAGIC: &[u8; 8] = b"DHHASH01";
pub const CODE_MAGIC: &[u8; 8] = b"DHCODE01";
pub const WIRE_MAGIC: &[u8; 8] = b"DHWIRE01";
pub const INDEX_MAGIC: &[u8; 8] = b"DHINDX01";

const WIRE_GPS: u8 = 1;
const WIRE_CATEGORY: u8 = 2;

pub fn encode_tree(tree: &VocabularyTree) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.magic(TREE_MAGIC);
    for x in [tree.dim(), tree.num_vlad(), tree.num_leaves(), tree.branch(), tree.levels(), tree.vlad_level()] {
        w.u32(x)?;
    }
    w.f32s(tree.vlad_centers());
    w.f32s(tree.leaf_centers());
    w.u32s(tree.parent_of_leaf());
    Ok(w.buf)
}

pub fn decode_tree(bytes: &[u8]) -> Result<VocabularyTree> {
    let mut r = Reader::new(bytes, "tree file");
    r.magic(TREE_MAGIC)?;
    let dim = r.u32()? as usize;
    let n = r.u32()? as usize;
    let m = r.u32()? as usize;
    let header_at = r.offset();
    let branch = r.u32()? as usize;
    let levels = r.u32()? as usize;
    let vlad_level = r.u32()? as usize;
    let expected_n = branch.checked_pow(vlad_level as u32);
    let expected_m = branch.checked_pow(levels as u32);
    if expected_n != Some(n) || expected_m != Some(m) {
        return r.fail(header_at, format!("N = {n}, M = {m} inconsistent with branch {branch}, levels {levels}, vlad_level {vlad_level}"));
    }
    let vlad = r.f32s(n.saturating_mul(dim))?;
    let leaves = r.f32s(m.saturating_mul(dim))?;
    let parents_at = r.offset();
    let parents = r.u32s(m)?;
    r.finish()?;
    let tree = r.check(8, VocabularyTree::from_parts(dim, branch, levels, vlad_level, vlad, leaves))?;
    if let Some(t) = (0..m).find(|&t| parents[t] != tree.parent_of_leaf()[t]) {
        return r.fail(parents_at + 4 * t, format!("parent of leaf {t} is not its level-order ancestor"));
    }
    Ok(tree)
}

pub fn encode_descriptors(set: &DescriptorSet) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.magic(DESC_MAGIC);
    w.u32(set.dim())?;
    w.u32(set.len())?;
    w.f32s(set.as_flat());
    Ok(w.buf)
}

pub fn decode_descriptors(bytes: &[u8]) -> Result<DescriptorSet> {
    let mut r = Reader::new(bytes, "descriptor file");
    r.magic(DESC_MAGIC)?;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return r.fail(8, "dimension 0");
    }
    let count = r.count(dim.saturating_mul(4))?;
    let at = r.offset();
    let data = r.f32s(count * dim)?;
    r.finish()?;
    r.check(at, DescriptorSet::new(dim, data))
}

pub fn encode_hashing_model(model: &HashingModel) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.magic(HASH_MAGIC);
    w.u8(model.layout().as_u8());
    w.u32(model.dim())?;
    w.u32(model.num_centers())?;
    w.u32(model.bits())?;
    w.f32s(model.mean());
    w.f32s(model.projection());
    match model.rotation() {
        Some(rot) => {
            w.u8(1);
            w.f32s(rot);
        }
        None => w.u8(0),
    }
    w.f32s(model.reversal_scales());
    Ok(w.buf)
}

pub fn decode_hashing_model(bytes: &[u8]) -> Result<HashingModel> {
    let mut r = Reader::new(bytes, "hashing model");
    r.magic(HASH_MAGIC)?;
    let tag = r.u8()?;
    let layout = match Layout::from_u8(tag) {
        Some(l) => l,
        None => return r.fail(8, format!("unknown layout tag {tag}")),
    };
    let dim = r.u32()? as usize;
    let n = r.u32()? as usize;
    let bits = r.u32()? as usize;
    let mean_len = layout.mean_len(dim, n);
    let mean = r.f32s(mean_len)?;
    let proj = r.f32s(layout.projection_len(dim, n, bits))?;
    let flag_at = r.offset();
    let rotation = match r.u8()? {
        0 => None,
        1 => Some(r.f32s(bits.saturating_mul(bits))?),
        f => return r.fail(flag_at, format!("bad rotation flag {f}")),
    };
    let scales = r.f32s(bits)?;
    r.finish()?;
    r.check(8, HashingModel::from_parts(layout, dim, n, bits, mean, proj, rotation, scales))
}

pub fn encode_code(code: &BinaryCode) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.magic(CODE_MAGIC);
    w.u32(code.len())?;
    w.bytes(&code.to_bytes());
    Ok(w.buf)
}

pub fn decode_code(bytes: &[u8]) -> Result<BinaryCode> {
    let mut r = Reader::new(bytes, "code file");
    r.magic(CODE_MAGIC)?;
    let (code, _) = read_bits(&mut r)?;
    r.finish()?;
    Ok(code)
}

fn read_bits(r: &mut Reader<'_>) -> Result<(BinaryCode, usize)> {
    let k = r.u32()? as usize;
    let at = r.offset();
    let packed = r.take(k.div_ceil(8))?;
    let code = r.check(at, BinaryCode::from_bytes(k, packed))?;
    Ok((code, at))
}

/// Query payload: magic, u32 K, packed bits, u8 flags, then the cues the flags announce.
pub fn wire_encode(code: &BinaryCode, context: &ContextTag) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.magic(WIRE_MAGIC);
    w.u32(code.len())?;
    w.bytes(&code.to_bytes());
    let flags = context.gps.map_or(0, |_| WIRE_GPS) | context.category.map_or(0, |_| WIRE_CATEGORY);
    w.u8(flags);
    if let Some(g) = context.gps {
        w.f64(g.lat);
        w.f64(g.lon);
    }
    if let Some(c) = context.category {
        w.u32(c as usize)?;
    }
    Ok(w.buf)
}

/// Inverse of [`wire_encode`]; the binary ranking is never transmitted.
pub fn wire_decode(bytes: &[u8]) -> Result<(BinaryCode, ContextTag)> {
    let mut r = Reader::new(bytes, "wire payload");
    r.magic(WIRE_MAGIC)?;
    let (code, _) = read_bits(&mut r)?;
    let flags_at = r.offset();
    let flags = r.u8()?;
    if flags & !(WIRE_GPS | WIRE_CATEGORY) != 0 {
        return r.fail(flags_at, format!("unknown context flags {flags:#04x}"));
    }
    let mut ctx = ContextTag::default();
    if flags & WIRE_GPS != 0 {
        let at = r.offset();
        let lat = r.f64()?;
        let lon = r.f64()?;
        ctx.gps = Some(r.check(at, GeoPoint::new(lat, lon))?);
    }
    if flags & WIRE_CATEGORY != 0 {
        ctx.category = Some(r.u32()?);
    }
    r.finish()?;
    Ok((code, ctx))
}

const HAS_BOW: u8 = 1;
const HAS_VLAD: u8 = 2;
const HAS_CODE: u8 = 4;
const HAS_PQ: u8 = 8;
const HAS_GPS: u8 = 16;
const HAS_CATEGORY: u8 = 32;

fn write_pq(w: &mut Writer, pq: &PqCodebooks) -> Result<()> {
    w.u32(pq.num_subspaces())?;
    w.u8(pq.bits());
    w.u32(pq.sub_dim())?;
    w.f64s(pq.centers());
    Ok(())
}

fn read_pq(r: &mut Reader<'_>) -> Result<PqCodebooks> {
    let at = r.offset();
    let m = r.u32()? as usize;
    let b = r.u8()?;
    let sub_dim = r.u32()? as usize;
    if !(1..=8).contains(&b) {
        return r.fail(at + 4, format!("PQ bits {b} outside 1..=8"));
    }
    let centers = r.f64s(m.saturating_mul(1 << b).saturating_mul(sub_dim))?;
    r.check(at, PqCodebooks::from_parts(m, b, sub_dim, centers))
}

/// Database index: normalization, images (id-ordered) and optional PQ codebooks.
pub fn encode_index(index: &DatabaseIndex) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.magic(INDEX_MAGIC);
    w.u8(index.normalization().as_u8());
    w.u32(index.len())?;
    for im in index.images() {
        w.u32(im.id.0 as usize)?;
        let flags = [
            (im.bow.is_some(), HAS_BOW),
            (im.vlad.is_some(), HAS_VLAD),
            (im.code.is_some(), HAS_CODE),
            (im.pq_code.is_some(), HAS_PQ),
            (im.gps.is_some(), HAS_GPS),
            (im.category.is_some(), HAS_CATEGORY),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .fold(0, |acc, (_, f)| acc | f);
        w.u8(flags);
        if let Some(h) = &im.bow {
            w.u32(h.vocab_size())?;
            w.u32(h.len())?;
            for (t, x) in h.iter() {
                w.u32(t as usize)?;
                w.f64(x);
            }
        }
        if let Some(v) = &im.vlad {
            w.u32(v.dim())?;
            w.u32(v.num_centers())?;
            w.u8(v.normalization().as_u8());
            w.f64s(v.values());
        }
        if let Some(c) = &im.code {
            w.u32(c.len())?;
            w.bytes(&c.to_bytes());
        }
        if let Some(p) = &im.pq_code {
            w.u32(p.len())?;
            w.bytes(p);
        }
        if let Some(g) = im.gps {
            w.f64(g.lat);
            w.f64(g.lon);
        }
        if let Some(c) = im.category {
            w.u32(c as usize)?;
        }
    }
    match index.pq() {
        Some(pq) => {
            w.u8(1);
            write_pq(&mut w, pq)?;
        }
        None => w.u8(0),
    }
    Ok(w.buf)
}

pub fn decode_index(bytes: &[u8]) -> Result<DatabaseIndex> {
    let mut r = Reader::new(bytes, "index file");
    r.magic(INDEX_MAGIC)?;
    let norm_tag = r.u8()?;
    let normalization = match Normalization::from_u8(norm_tag) {
        Some(n) => n,
        None => return r.fail(8, format!("unknown normalization tag {norm_tag}")),
    };
    let count = r.count(5)?;
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let id = ImageId(r.u32()?);
        let flags_at = r.offset();
        let flags = r.u8()?;
        if flags & !(HAS_BOW | HAS_VLAD | HAS_CODE | HAS_PQ | HAS_GPS | HAS_CATEGORY) != 0 {
            return r.fail(flags_at, format!("unknown image flags {flags:#04x}"));
        }
        let mut im = IndexedImage {
            id,
            ..Default::default()
        };
        if flags & HAS_BOW != 0 {
            let at = r.offset();
            let vocab = r.u32()? as usize;
            let nnz = r.count(12)?;
            let mut entries = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                entries.push((r.u32()?, r.f64()?));
            }
            im.bow = Some(r.check(at, BowHistogram::from_entries(vocab, entries))?);
        }
        if flags & HAS_VLAD != 0 {
            let at = r.offset();
            let dim = r.u32()? as usize;
            let n = r.u32()? as usize;
            let tag = r.u8()?;
            let norm = match Normalization::from_u8(tag) {
                Some(x) => x,
                None => return r.fail(at + 8, format!("unknown normalization tag {tag}")),
            };
            let values = r.f64s(dim.saturating_mul(n))?;
            im.vlad = Some(r.check(at, VladVector::from_values(dim, n, values, norm))?);
        }
        if flags & HAS_CODE != 0 {
            im.code = Some(read_bits(&mut r)?.0);
        }
        if flags & HAS_PQ != 0 {
            let m = r.count(1)?;
            im.pq_code = Some(r.take(m)?.to_vec());
        }
        if flags & HAS_GPS != 0 {
            let at = r.offset();
            let lat = r.f64()?;
            let lon = r.f64()?;
            im.gps = Some(r.check(at, GeoPoint::new(lat, lon))?);
        }
        if flags & HAS_CATEGORY != 0 {
            im.category = Some(r.u32()?);
        }
        images.push(im);
    }
    let pq_at = r.offset();
    let pq = match r.u8()? {
        0 => None,
        1 => Some(read_pq(&mut r)?),
        f => return r.fail(pq_at, format!("bad PQ flag {f}")),
    };
    r.finish()?;
    let index = r.check(8, DatabaseIndex::new(images, normalization))?;
    match pq {
        Some(pq) => r.check(pq_at, index.with_pq_codes(pq)),
        None => Ok(index),
    }
}
