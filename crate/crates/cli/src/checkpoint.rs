//! Plain-text network checkpoints.
//!
//! ```text
//! vatlab-checkpoint 1
//! meta task moons
//! meta data_seed 7
//! layer 100 100 relu
//! w <in*out values, row-major>
//! b <out values>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a reload is
//! bit-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use vatlab::{Activation, Error, Layer, Mlp, Tensor};

const MAGIC: &str = "vatlab-checkpoint 1";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub net: Mlp,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k} {v}");
        }
        for layer in self.net.layers() {
            let _ = writeln!(s, "layer {} {} {}", layer.in_dim(), layer.out_dim(), layer.activation().name());
            push_values(&mut s, 'w', layer.weights().data());
            push_values(&mut s, 'b', layer.biases().data());
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, Error> {
        let mut offset = 0;
        let mut lines = text.split_inclusive('\n').map(|l| {
            let start = offset;
            offset += l.len();
            (start, l.trim_end())
        });
        let fail = |at: usize, reason: &str| Error::Format {
            path: PathBuf::from(path),
            offset: at,
            reason: reason.to_string(),
        };
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(fail(0, "not a vatlab checkpoint")),
        }
        let mut meta = BTreeMap::new();
        let mut layers = Vec::new();
        let mut pending = lines.peekable();
        while let Some((at, line)) = pending.next() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ' ');
            match parts.next() {
                Some("meta") => {
                    let (Some(k), Some(v)) = (parts.next(), parts.next()) else {
                        return Err(fail(at, "meta line needs a key and a value"));
                    };
                    meta.insert(k.to_string(), v.to_string());
                }
                Some("layer") => {
                    let fields: Vec<&str> = line.split(' ').skip(1).collect();
                    let [n_in, n_out, act] = fields[..] else {
                        return Err(fail(at, "layer line needs in, out and activation"));
                    };
                    let n_in: usize = n_in.parse().map_err(|_| fail(at, "bad input size"))?;
                    let n_out: usize = n_out.parse().map_err(|_| fail(at, "bad output size"))?;
                    let act = Activation::parse(act).ok_or_else(|| fail(at, "unknown activation"))?;
                    let mut read = |tag: &str, len: usize| -> Result<Vec<f64>, Error> {
                        let (at, line) = pending.next().ok_or_else(|| fail(text.len(), "truncated layer"))?;
                        let body = line
                            .strip_prefix(tag)
                            .ok_or_else(|| fail(at, &format!("expected `{tag}` line")))?;
                        let vals = body
                            .split_whitespace()
                            .map(|v| v.parse::<f64>())
                            .collect::<Result<Vec<f64>, _>>()
                            .map_err(|_| fail(at, "unparsable value"))?;
                        if vals.len() != len {
                            return Err(fail(at, &format!("expected {len} values, found {}", vals.len())));
                        }
                        Ok(vals)
                    };
                    let w = read("w", n_in * n_out)?;
                    let b = read("b", n_out)?;
                    layers.push(Layer::new(Tensor::matrix(n_in, n_out, w)?, Tensor::vector(b)?, act)?);
                }
                _ => return Err(fail(at, "unrecognized line")),
            }
        }
        let net = Mlp::from_layers(layers).map_err(|e| fail(text.len(), &e.to_string()))?;
        Ok(Checkpoint { net, meta })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

fn push_values(s: &mut String, tag: char, values: &[f64]) {
    s.push(tag);
    for v in values {
        let _ = write!(s, " {v}");
    }
    s.push('\n');
}
