//! Dataset manifests: `image_path,mask_path[,edge_path]` rows relative to the
//! manifest's directory.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRecord {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub edge: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    /// Directory the relative paths resolve against.
    pub dir: PathBuf,
    pub records: Vec<SampleRecord>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found")));
        }
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
        let mut records = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            if line == 0 && row.get(0) == Some("image_path") {
                continue;
            }
            let field = |i: usize| row.get(i).map(str::trim).filter(|s| !s.is_empty());
            let (Some(image), Some(mask)) = (field(0), field(1)) else {
                return Err(Error::Parse(format!("{}: row {} needs image_path,mask_path", path.display(), line + 1)));
            };
            records.push(SampleRecord { image: image.into(), mask: mask.into(), edge: field(2).map(PathBuf::from) });
        }
        Ok(Manifest { dir, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let with_edges = self.records.iter().any(|r| r.edge.is_some());
        let mut w = csv::Writer::from_path(path)?;
        if with_edges {
            w.write_record(["image_path", "mask_path", "edge_path"])?;
        } else {
            w.write_record(["image_path", "mask_path"])?;
        }
        for r in &self.records {
            let mut row = vec![r.image.to_string_lossy().into_owned(), r.mask.to_string_lossy().into_owned()];
            if with_edges {
                row.push(r.edge.as_ref().map(|e| e.to_string_lossy().into_owned()).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.dir.join(p)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
