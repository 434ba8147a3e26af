//! Line-delimited JSON persistence and the dataset manifest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VideoRef;

/// Frame-indexed maps whose keys may arrive as numbers or numeric strings.
///
/// JSON object keys are always strings, and serde hands them to internally
/// tagged enums still quoted, so a plain `u64` key fails there.
pub mod frame_keys {
    use std::collections::BTreeMap;
    use std::fmt;

    use serde::de::{self, Deserializer, Visitor};
    use serde::Deserialize;

    struct FrameKey(u64);

    impl<'de> Deserialize<'de> for FrameKey {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            struct V;
            impl Visitor<'_> for V {
                type Value = FrameKey;

                fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                    f.write_str("a frame index")
                }

                fn visit_u64<E: de::Error>(self, v: u64) -> Result<FrameKey, E> {
                    Ok(FrameKey(v))
                }

                fn visit_str<E: de::Error>(self, v: &str) -> Result<FrameKey, E> {
                    v.parse().map(FrameKey).map_err(|_| E::custom(format!("bad frame index `{v}`")))
                }
            }
            d.deserialize_any(V)
        }
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<BTreeMap<u64, T>, D::Error>
    where
        D: Deserializer<'de>,
        T: Deserialize<'de>,
    {
        let raw = BTreeMap::<FrameKey, T>::deserialize(d)?;
        Ok(raw.into_iter().map(|(k, v)| (k.0, v)).collect())
    }

    impl PartialEq for FrameKey {
        fn eq(&self, o: &Self) -> bool {
            self.0 == o.0
        }
    }
    impl Eq for FrameKey {}
    impl PartialOrd for FrameKey {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for FrameKey {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.cmp(&o.0)
        }
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `manifest.json`: the sequences of a dataset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sequences: Vec<VideoRef>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        for s in &m.sequences {
            s.validate()?;
        }
        Ok(m)
    }

    pub fn sequence(&self, sequence_id: &str) -> Option<&VideoRef> {
        self.sequences.iter().find(|s| s.sequence_id == sequence_id)
    }
}
