//! Checkpoint files: a text manifest plus a binary blob.
//!
//! `<prefix>.manifest`:
//!
//! ```text
//! autoprune-checkpoint 1
//! meta <key> <value...>
//! tensor <name> <d0,d1,...>
//! ```
//!
//! `<prefix>.bin` holds the tensors' values as little-endian `f64`, in
//! manifest order, with no padding or header.

use std::path::{Path, PathBuf};

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "autoprune-checkpoint 1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    meta: Vec<(String, String)>,
    tensors: Vec<(String, Tensor)>,
}

pub fn manifest_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, "manifest")
}

pub fn blob_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, "bin")
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(
            !key.contains(char::is_whitespace) && !value.contains('\n'),
            "meta entries must be single-line"
        );
        self.meta.retain(|(k, _)| k != key);
        self.meta.push((key.to_string(), value));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require_meta<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config(format!("checkpoint lacks a valid `{key}` entry")))
    }

    pub fn put_tensor(&mut self, name: &str, tensor: Tensor) {
        assert!(
            !name.contains(char::is_whitespace),
            "tensor names cannot contain spaces"
        );
        self.tensors.retain(|(n, _)| n != name);
        self.tensors.push((name.to_string(), tensor));
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks tensor `{name}`")))
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn save(&self, prefix: &Path) -> Result<()> {
        let mut manifest = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            manifest.push_str(&format!("meta {k} {v}\n"));
        }
        let mut blob = Vec::new();
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!("tensor {name} {}\n", dims.join(",")));
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mpath = manifest_path(prefix);
        let bpath = blob_path(prefix);
        std::fs::write(&bpath, blob).map_err(|e| Error::io(&bpath, e))?;
        std::fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
        Ok(())
    }

    pub fn load(prefix: &Path) -> Result<Self> {
        let mpath = manifest_path(prefix);
        let bpath = blob_path(prefix);
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let blob = std::fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
        let fail = |line: usize, msg: String| Error::Parse {
            path: mpath.clone(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(fail(1, "not an autoprune checkpoint".into())),
        }
        let mut ckpt = Checkpoint::new();
        let mut offset = 0usize;
        for (i, line) in lines {
            let mut parts = line.splitn(3, ' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some("meta"), Some(k), v) => ckpt.put_meta(k, v.unwrap_or("")),
                (Some("tensor"), Some(name), Some(dims)) => {
                    let shape = dims
                        .split(',')
                        .filter(|d| !d.is_empty())
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| fail(i + 1, format!("bad shape `{dims}`")))?;
                    let count: usize = shape.iter().product();
                    let end = offset + count * 8;
                    if end > blob.len() {
                        return Err(fail(i + 1, format!("blob too short for `{name}`")));
                    }
                    let data = blob[offset..end]
                        .chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                        .collect();
                    offset = end;
                    ckpt.put_tensor(name, Tensor::from_vec(&shape, data)?);
                }
                _ if line.trim().is_empty() => {}
                _ => return Err(fail(i + 1, format!("unrecognized line `{line}`"))),
            }
        }
        if offset != blob.len() {
            return Err(fail(0, format!("{} trailing bytes in blob", blob.len() - offset)));
        }
        Ok(ckpt)
    }
}
