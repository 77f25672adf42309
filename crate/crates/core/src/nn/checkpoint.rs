//! Single-file checkpoints.
//!
//! ```text
//! nedb-checkpoint 1
//! base_width=8
//! ...
//! end-config
//! param <name> <n> <c> <h> <w>
//! <n·c·h·w little-endian f32>
//! ...
//! sha256 <hex digest of every byte above this line>
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

use super::config::NedbConfig;
use super::model::NedbModel;

const MAGIC: &str = "nedb-checkpoint 1";

pub fn encode(model: &NedbModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    for (k, v) in model.config.to_pairs() {
        out.extend_from_slice(format!("{k}={v}\n").as_bytes());
    }
    out.extend_from_slice(b"end-config\n");
    for (_, p) in model.store.iter() {
        let s = p.value.shape();
        out.extend_from_slice(format!("param {} {} {} {} {}\n", p.name, s.n, s.c, s.h, s.w).as_bytes());
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.push(b'\n');
    }
    let digest = hex::encode(Sha256::digest(&out));
    out.extend_from_slice(format!("sha256 {digest}\n").as_bytes());
    out
}

pub fn save(model: &NedbModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format { path: self.path.to_path_buf(), pos: self.pos, msg: msg.into() }
    }

    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| self.fail("unexpected end of file"))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| self.fail("header line is not UTF-8"))?;
        self.pos += end + 1;
        Ok(line)
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<NedbModel> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.line()? != MAGIC {
        r.pos = 0;
        return Err(r.fail("not a checkpoint (bad magic line)"));
    }
    let mut config = NedbConfig::desk();
    loop {
        let start = r.pos;
        let line = r.line()?;
        if line == "end-config" {
            break;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            pos: start,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        if !config.set(k, v)? {
            return Err(Error::Format { path: path.to_path_buf(), pos: start, msg: format!("unknown config key {k:?}") });
        }
    }
    let mut model = NedbModel::new(config)?;
    let mut seen = vec![false; model.store.len()];
    loop {
        let start = r.pos;
        let line = r.line()?;
        if let Some(digest) = line.strip_prefix("sha256 ") {
            let want = hex::encode(Sha256::digest(&bytes[..start]));
            if digest != want {
                r.pos = start;
                return Err(r.fail("checksum mismatch"));
            }
            if r.pos != bytes.len() {
                return Err(r.fail("trailing bytes after checksum"));
            }
            break;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 6 || fields[0] != "param" {
            r.pos = start;
            return Err(r.fail(format!("expected a param header, got {line:?}")));
        }
        let dims: Vec<usize> = fields[2..]
            .iter()
            .map(|d| d.parse().map_err(|_| Error::Format { path: path.to_path_buf(), pos: start, msg: format!("bad extent {d:?}") }))
            .collect::<Result<_>>()?;
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let id = model.store.id(fields[1]).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            pos: start,
            msg: format!("checkpoint parameter {:?} does not exist in the configured model", fields[1]),
        })?;
        let n = shape.numel() * 4;
        if r.pos + n + 1 > bytes.len() || bytes[r.pos + n] != b'\n' {
            return Err(r.fail(format!("truncated data for {}", fields[1])));
        }
        let data: Vec<f64> = bytes[r.pos..r.pos + n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        r.pos += n + 1;
        model.store.set(id, Tensor::new(shape, data)?)?;
        seen[id.index()] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        let name = &model.store.iter().nth(i).expect("index in range").1.name;
        return Err(Error::Format { path: path.to_path_buf(), pos: bytes.len(), msg: format!("parameter {name} missing") });
    }
    model.sync_bank()?;
    Ok(model)
}

pub fn load(path: &Path) -> Result<NedbModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NedbModel {
        NedbModel::new(NedbConfig { input_size: 32, seed: 3, ..NedbConfig::desk() }).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = small();
        let bytes = encode(&m);
        let back = decode(&bytes, Path::new("m")).unwrap();
        assert_eq!(encode(&back), bytes);
        assert_eq!(back.config, m.config);
        for ((_, a), (_, b)) in m.store.iter().zip(back.store.iter()) {
            for (x, y) in a.value.data().iter().zip(b.value.data()) {
                assert_eq!((*x as f32).to_bits(), (*y as f32).to_bits());
            }
        }
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = encode(&small());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(decode(&bytes, Path::new("m")).is_err());
        assert!(decode(b"hello\n", Path::new("m")).is_err());
    }
}
