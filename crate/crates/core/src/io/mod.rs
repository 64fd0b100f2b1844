//! Binary artifact formats (all little-endian), the dataset manifest and ranking dumps.

mod codec;
mod formats;
mod manifest;

use std::path::Path;

pub use formats::{
    decode_code, decode_descriptors, decode_hashing_model, decode_index, decode_tree, encode_code, encode_descriptors,
    encode_hashing_model, encode_index, encode_tree, wire_decode, wire_encode, CODE_MAGIC, DESC_MAGIC, HASH_MAGIC,
    INDEX_MAGIC, TREE_MAGIC, WIRE_MAGIC,
};
pub use manifest::{
    format_manifest, format_ranking_dump, ingest_dataset, parse_manifest, parse_ranking_dump, resolve, Dataset,
    ManifestEntry,
};

use crate::error::{Error, Result};
use crate::hashing::{BinaryCode, HashingModel};
use crate::retrieval::DatabaseIndex;
use crate::vocab::{DescriptorSet, VocabularyTree};

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::from(e).in_file(path))
}

fn read_with<T>(path: &Path, decode: impl FnOnce(&[u8]) -> Result<T>) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode(&bytes).map_err(|e| e.in_file(path))
}

pub fn read_tree(path: &Path) -> Result<VocabularyTree> {
    read_with(path, decode_tree)
}
pub fn write_tree(path: &Path, tree: &VocabularyTree) -> Result<()> {
    write_file(path, &encode_tree(tree)?)
}

pub fn read_descriptors(path: &Path) -> Result<DescriptorSet> {
    read_with(path, decode_descriptors)
}
pub fn write_descriptors(path: &Path, set: &DescriptorSet) -> Result<()> {
    write_file(path, &encode_descriptors(set)?)
}

pub fn read_hashing_model(path: &Path) -> Result<HashingModel> {
    read_with(path, decode_hashing_model)
}
pub fn write_hashing_model(path: &Path, model: &HashingModel) -> Result<()> {
    write_file(path, &encode_hashing_model(model)?)
}

pub fn read_code(path: &Path) -> Result<BinaryCode> {
    read_with(path, decode_code)
}
pub fn write_code(path: &Path, code: &BinaryCode) -> Result<()> {
    write_file(path, &encode_code(code)?)
}

pub fn read_index(path: &Path) -> Result<DatabaseIndex> {
    read_with(path, decode_index)
}
pub fn write_index(path: &Path, index: &DatabaseIndex) -> Result<()> {
    write_file(path, &encode_index(index)?)
}
