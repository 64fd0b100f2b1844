use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::retrieval::{GeoPoint, ImageId, Ranking};
use crate::vocab::DescriptorSet;

/// One manifest row: `id \t path \t lat \t lon \t category \t relevant_ids`, `-` for absent fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: ImageId,
    /// As written in the manifest; relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub gps: Option<GeoPoint>,
    pub category: Option<u32>,
    /// Present on query rows only.
    pub relevant: Option<Vec<ImageId>>,
}

impl ManifestEntry {
    pub fn is_query(&self) -> bool {
        self.relevant.is_some()
    }
}

fn absent(field: &str) -> bool {
    field == "-"
}

fn bad(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        what: "manifest",
        offset,
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, offset: usize, name: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| bad(offset, format!("cannot parse {name} from '{field}'")))
}

/// Parses manifest text. Blank lines and lines starting with `#` are ignored.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    let mut line_start = 0usize;
    for raw in text.split_inclusive('\n') {
        let start = line_start;
        line_start += raw.len();
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut offsets = Vec::with_capacity(6);
        let mut fields = Vec::with_capacity(6);
        let mut at = start;
        for f in line.split('\t') {
            offsets.push(at);
            fields.push(f);
            at += f.len() + 1;
        }
        if fields.len() != 6 {
            return Err(bad(start, format!("expected 6 tab-separated fields, found {}", fields.len())));
        }
        let id = ImageId(parse_num(fields[0], offsets[0], "image id")?);
        if !seen.insert(id) {
            return Err(bad(offsets[0], format!("duplicate image id {id}")));
        }
        if absent(fields[1]) || fields[1].is_empty() {
            return Err(bad(offsets[1], "missing descriptor path"));
        }
        let gps = match (absent(fields[2]), absent(fields[3])) {
            (true, true) => None,
            (false, false) => {
                let lat: f64 = parse_num(fields[2], offsets[2], "latitude")?;
                let lon: f64 = parse_num(fields[3], offsets[3], "longitude")?;
                Some(GeoPoint::new(lat, lon).map_err(|e| bad(offsets[2], e.to_string()))?)
            }
            _ => return Err(bad(offsets[2], "latitude and longitude must both be present or both be '-'")),
        };
        let category = if absent(fields[4]) {
            None
        } else {
            Some(parse_num(fields[4], offsets[4], "category")?)
        };
        let relevant = if absent(fields[5]) {
            None
        } else {
            let ids = fields[5]
                .split(',')
                .map(|s| parse_num(s.trim(), offsets[5], "relevant id").map(ImageId))
                .collect::<Result<Vec<_>>>()?;
            Some(ids)
        };
        entries.push(ManifestEntry {
            id,
            path: PathBuf::from(fields[1]),
            gps,
            category,
            relevant,
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput("manifest"));
    }
    Ok(entries)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let (lat, lon) = e.gps.map_or(("-".into(), "-".into()), |g| (g.lat.to_string(), g.lon.to_string()));
        let category = e.category.map_or("-".into(), |c| c.to_string());
        let relevant = e.relevant.as_ref().map_or("-".into(), |r| {
            r.iter().map(ImageId::to_string).collect::<Vec<_>>().join(",")
        });
        let _ = writeln!(out, "{}\t{}\t{lat}\t{lon}\t{category}\t{relevant}", e.id, e.path.display());
    }
    out
}

/// Manifest rows with their descriptor sets loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub entries: Vec<ManifestEntry>,
    pub descriptors: Vec<DescriptorSet>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.descriptors[0].dim()
    }

    pub fn database(&self) -> impl Iterator<Item = (&ManifestEntry, &DescriptorSet)> {
        self.entries.iter().zip(&self.descriptors).filter(|(e, _)| !e.is_query())
    }

    pub fn queries(&self) -> impl Iterator<Item = (&ManifestEntry, &DescriptorSet)> {
        self.entries.iter().zip(&self.descriptors).filter(|(e, _)| e.is_query())
    }
}

pub fn resolve(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
    if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(&entry.path)
    }
}

/// Loads the manifest and every descriptor file it names.
pub fn ingest_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::from(e).in_file(manifest_path))?;
    let entries = parse_manifest(&text).map_err(|e| e.in_file(manifest_path))?;
    let mut descriptors = Vec::with_capacity(entries.len());
    for e in &entries {
        let path = resolve(manifest_path, e);
        let set = super::read_descriptors(&path)?;
        if let Some(first) = descriptors.first().map(DescriptorSet::dim) {
            if set.dim() != first {
                return Err(Error::DimensionMismatch {
                    expected: first,
                    found: set.dim(),
                }
                .in_file(path));
            }
        }
        descriptors.push(set);
    }
    Ok(Dataset { entries, descriptors })
}

/// One line per result: `query_id image_id rank score`, ranks 1-based.
pub fn format_ranking_dump(query: ImageId, ranking: &Ranking) -> String {
    let mut out = String::new();
    for (i, e) in ranking.entries().iter().enumerate() {
        let _ = writeln!(out, "{query} {} {} {}", e.id, i + 1, e.score);
    }
    out
}

/// Parses dump lines back to `(query, image, rank, score)`.
pub fn parse_ranking_dump(text: &str) -> Result<Vec<(ImageId, ImageId, usize, f64)>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        let err = || Error::Format {
            what: "ranking dump",
            offset: at,
            reason: format!("bad line '{}'", line.trim_end()),
        };
        if f.len() != 4 {
            return Err(err());
        }
        out.push((
            ImageId(f[0].parse().map_err(|_| err())?),
            ImageId(f[1].parse().map_err(|_| err())?),
            f[2].parse().map_err(|_| err())?,
            f[3].parse().map_err(|_| err())?,
        ));
    }
    Ok(out)
}
