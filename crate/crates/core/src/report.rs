//! JSON and CSV output: floats with 17 significant digits, a result
//! envelope carrying the model hash and seed, and temp-file-then-rename
//! writes.

use std::io::{self, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};
use serde_json::Value;

use crate::model::LevyModel;

/// Writes every `f64` as `{:.16e}`.
struct Precise<F>(F);

impl<F: Formatter> Formatter for Precise<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn end_object_key<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_key(w)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty-printed JSON with 17-significant-digit floats. Non-finite floats
/// become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, Precise(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Result envelope written by every command.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<T: Serialize> {
    /// Seconds since the Unix epoch; the only field allowed to differ
    /// between identical runs.
    pub timestamp: u64,
    pub model_hash: String,
    pub seed: u64,
    pub result: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(model: &LevyModel, seed: u64, result: T) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            timestamp,
            model_hash: model.model_hash(),
            seed,
            result,
        }
    }
}

/// The document with any top-level `timestamp` removed, for comparing runs.
pub fn without_timestamp(json: &str) -> serde_json::Result<Value> {
    let mut v: Value = serde_json::from_str(json)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("timestamp");
    }
    Ok(v)
}

/// Writes `contents` to a temporary sibling of `path` and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_json(&serde_json::json!({"x": 0.1, "y": [1.0, f64::NAN], "k": 3})).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("1.0000000000000000e0"), "{s}");
        assert!(s.contains("null"));
        assert!(s.contains("\"k\": 3"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
    }

    #[test]
    fn roundtrip_is_exact() {
        for x in [std::f64::consts::PI, 1e-300, -2.5e17, 5e-324, 0.11247394791637663] {
            let s = to_json(&x).unwrap();
            assert_eq!(s.trim().parse::<f64>().unwrap(), x);
            assert_eq!(serde_json::from_str::<f64>(&s).unwrap(), x);
        }
    }

    #[test]
    fn timestamp_is_ignored() {
        let m = LevyModel::canonical();
        let mut a = Envelope::new(&m, 7, 1.5);
        let mut b = a.clone();
        a.timestamp = 1;
        b.timestamp = 2;
        let (ja, jb) = (to_json(&a).unwrap(), to_json(&b).unwrap());
        assert_ne!(ja, jb);
        assert_eq!(without_timestamp(&ja).unwrap(), without_timestamp(&jb).unwrap());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("levy-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("out.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        let leftovers = std::fs::read_dir(&dir).unwrap().count();
        assert_eq!(leftovers, 1);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
