use std::path::Path;

use ndarray::Array2;

use super::Mat;
use crate::error::{Error, Result};

const MAGIC: &str = "wmlab-checkpoint v1";

/// Text manifest followed by little-endian `f32` tensor data.
///
/// ```text
/// wmlab-checkpoint v1
/// meta <key> <value...>
/// tensor <name> <rows> <cols> <byte offset>
/// end
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Mat)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn push_tensor(&mut self, name: &str, value: &Mat) {
        self.tensors.push((name.to_string(), value.clone()));
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| bad(format!("missing meta key {key}")))
    }

    pub fn meta_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.meta.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta(key)?
            .parse()
            .map_err(|_| bad(format!("unparseable meta value for {key}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Mat> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| bad(format!("missing tensor {name}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = format!("{MAGIC}\n");
        for (k, v) in &self.meta {
            if k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(bad(format!("meta entry {k} is not single-line")));
            }
            manifest.push_str(&format!("meta {k} {v}\n"));
        }
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            if name.contains(char::is_whitespace) {
                return Err(bad(format!("tensor name {name:?} contains whitespace")));
            }
            manifest.push_str(&format!("tensor {name} {} {} {offset}\n", t.nrows(), t.ncols()));
            offset += t.len() * 4;
        }
        manifest.push_str("end\n");
        let mut out = manifest.into_bytes();
        for (name, t) in &self.tensors {
            for &v in t.iter() {
                let f = v as f32;
                if f as f64 != v {
                    return Err(bad(format!("tensor {name} holds a value not representable as f32")));
                }
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let end_marker = b"\nend\n";
        let split = bytes
            .windows(end_marker.len())
            .position(|w| w == end_marker)
            .ok_or_else(|| bad("manifest terminator not found"))?;
        let header = std::str::from_utf8(&bytes[..split + 1]).map_err(|_| bad("manifest is not utf-8"))?;
        let data = &bytes[split + end_marker.len()..];
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("unrecognized checkpoint header"));
        }
        let mut ck = Checkpoint::default();
        for line in lines {
            let mut parts = line.splitn(2, ' ');
            match parts.next() {
                Some("meta") => {
                    let rest = parts.next().unwrap_or("");
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    ck.meta.push((k.to_string(), v.to_string()));
                }
                Some("tensor") => {
                    let f: Vec<&str> = parts.next().unwrap_or("").split(' ').collect();
                    if f.len() != 4 {
                        return Err(bad(format!("malformed tensor line: {line}")));
                    }
                    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad number in: {line}")));
                    let (rows, cols, off) = (num(f[1])?, num(f[2])?, num(f[3])?);
                    let len = rows * cols * 4;
                    let raw = data
                        .get(off..off + len)
                        .ok_or_else(|| bad(format!("tensor {} exceeds data section", f[0])))?;
                    let vals = raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                        .collect();
                    let t = Array2::from_shape_vec((rows, cols), vals).expect("length computed from shape");
                    ck.tensors.push((f[0].to_string(), t));
                }
                _ => return Err(bad(format!("unexpected manifest line: {line}"))),
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_preserves_everything() {
        let mut ck = Checkpoint::default();
        ck.push_meta("seed", 42);
        ck.push_meta("note", "two words");
        ck.push_tensor("w", &array![[0.5, -1.25, 3.0], [0.0, 1e-3f32 as f64, 7.0]]);
        ck.push_tensor("b", &array![[1.0]]);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta("note").unwrap(), "two words");
        assert_eq!(back.meta_parse::<u64>("seed").unwrap(), 42);
    }

    #[test]
    fn rejects_values_needing_double_precision() {
        let mut ck = Checkpoint::default();
        ck.push_tensor("w", &array![[0.1]]);
        assert!(ck.to_bytes().is_err());
    }

    #[test]
    fn truncated_data_is_an_error() {
        let mut ck = Checkpoint::default();
        ck.push_tensor("w", &array![[1.0, 2.0]]);
        let bytes = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        assert!(Checkpoint::from_bytes(b"garbage").is_err());
    }
}
