//! Plain-text network spec files.
//!
//! One record per line, whitespace separated:
//!
//! ```text
//! # kind  t  n    c    h    w    k  stride  pad  pred
//! conv    1  64   3    224  224  3  1       1    -
//! conv    2  64   64   224  224  3  1       1    1
//! dense   3  10   64   1    1    1  1       0    -
//! ```
//!
//! `pred` is the id of the layer feeding this layer's input channels, or `-`
//! when the input is not a pruned layer's output (network input, flattened
//! features). Blank lines and text after `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{LayerKind, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};

pub fn read_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text, path)
}

pub fn parse_network(text: &str, origin: &Path) -> Result<NetworkSpec> {
    let mut layers = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fail = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 10 {
            return Err(fail(format!("expected 10 fields, found {}", fields.len())));
        }
        let kind = match fields[0] {
            "conv" => LayerKind::Conv,
            "dense" => LayerKind::Dense,
            other => return Err(fail(format!("unknown layer kind `{other}`"))),
        };
        let mut nums = [0usize; 8];
        for (slot, field) in nums.iter_mut().zip(&fields[1..9]) {
            *slot = field
                .parse()
                .map_err(|_| fail(format!("`{field}` is not a non-negative integer")))?;
        }
        let pred = match fields[9] {
            "-" => None,
            p => Some(p.parse().map_err(|_| fail(format!("bad predecessor `{p}`")))?),
        };
        let [id, n, c, h, w, k, stride, pad] = nums;
        layers.push(LayerSpec {
            id,
            kind,
            n,
            c,
            h,
            w,
            k,
            stride,
            pad,
            pred,
        });
    }
    NetworkSpec::new(layers)
}

pub fn write_network(network: &NetworkSpec) -> String {
    let mut out = String::from("# kind t n c h w k stride pad pred\n");
    for l in network.layers() {
        let pred = l.pred.map_or_else(|| "-".to_string(), |p| p.to_string());
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {}",
            l.kind.as_str(),
            l.id,
            l.n,
            l.c,
            l.h,
            l.w,
            l.k,
            l.stride,
            l.pad,
            pred
        );
    }
    out
}
