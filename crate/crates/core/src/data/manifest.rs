//! Dataset manifests: one mixture per line, `# key = value` headers.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::SNR_BUCKETS_DB;

/// Version of the synthesis code; a corpus is a pure function of this and
/// the manifest.
pub const GENERATOR_VERSION: u32 = 1;

/// Seeds of split `s` live in `[s << SPLIT_SHIFT, (s + 1) << SPLIT_SHIFT)`.
const SPLIT_SHIFT: u32 = 40;

pub const MANIFEST_COLUMNS: &str = "id,duration_s,target_seed,noise_seed,snr_db";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Dev => 1,
            Split::Eval => 2,
        }
    }

    /// Half-open seed range reserved for this split.
    pub fn seed_range(self) -> std::ops::Range<u64> {
        let lo = self.index() << SPLIT_SHIFT;
        lo..lo + (1 << SPLIT_SHIFT)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "eval" => Ok(Split::Eval),
            _ => Err(Error::InvalidInput(format!("unknown split {s:?}"))),
        }
    }
}

/// One mixture of the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub id: String,
    pub duration_s: f64,
    pub target_seed: u64,
    pub noise_seed: u64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub split: Split,
    pub generator_version: u32,
    pub seed: u64,
    pub entries: Vec<MixtureSpec>,
}

impl DatasetManifest {
    /// `count` mixtures cycling through the six SNR buckets. Seeds are
    /// disjoint across splits and across entries.
    pub fn generate(split: Split, count: usize, duration_s: f64, seed: u64) -> Result<Self> {
        if count >= 1 << 19 {
            return Err(Error::InvalidParameter(format!("at most {} entries per manifest", (1 << 19) - 1)));
        }
        let base = split.seed_range().start | ((seed & 0xF_FFFF) << 20);
        let entries = (0..count)
            .map(|i| MixtureSpec {
                id: format!("{split}_{i:04}"),
                duration_s,
                target_seed: base | (2 * i as u64),
                noise_seed: base | (2 * i as u64 + 1),
                snr_db: SNR_BUCKETS_DB[i % SNR_BUCKETS_DB.len()],
            })
            .collect();
        let m = Self {
            split,
            generator_version: GENERATOR_VERSION,
            seed,
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.generator_version != GENERATOR_VERSION {
            return Err(Error::InvalidInput(format!(
                "manifest needs generator version {}, this build has {GENERATOR_VERSION}",
                self.generator_version
            )));
        }
        let range = self.split.seed_range();
        let mut ids = HashSet::new();
        for e in &self.entries {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate utterance id {}", e.id)));
            }
            if !(e.duration_s > 0.0 && e.duration_s.is_finite()) {
                return Err(Error::InvalidInput(format!("{}: duration must be positive", e.id)));
            }
            if !SNR_BUCKETS_DB.contains(&e.snr_db) {
                return Err(Error::InvalidInput(format!("{}: SNR {} dB is not one of the six buckets", e.id, e.snr_db)));
            }
            if !range.contains(&e.target_seed) || !range.contains(&e.noise_seed) {
                return Err(Error::InvalidInput(format!("{}: seeds outside the {} range", e.id, self.split)));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# split = {}\n# generator_version = {}\n# seed = {}\n{MANIFEST_COLUMNS}\n",
            self.split, self.generator_version, self.seed
        );
        for e in &self.entries {
            s.push_str(&format!("{},{},{},{},{}\n", e.id, e.duration_s, e.target_seed, e.noise_seed, e.snr_db));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (mut split, mut version, mut seed) = (None, None, 0);
        for line in text.lines().map(str::trim) {
            let Some(rest) = line.strip_prefix('#') else { continue };
            let Some((k, v)) = rest.split_once('=') else { continue };
            let bad = |what: &str| Error::InvalidInput(format!("manifest header {what}: {v:?}"));
            match k.trim() {
                "split" => split = Some(v.trim().parse()?),
                "generator_version" => version = Some(v.trim().parse().map_err(|_| bad("generator_version"))?),
                "seed" => seed = v.trim().parse().map_err(|_| bad("seed"))?,
                _ => {}
            }
        }
        let split = split.ok_or_else(|| Error::InvalidInput("manifest lacks a `# split = ...` header".into()))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (n, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidInput(format!("manifest record {}: {e}", n + 1)))?;
            if rec.iter().collect::<Vec<_>>().join(",") == MANIFEST_COLUMNS {
                continue;
            }
            if rec.len() != 5 {
                return Err(Error::InvalidInput(format!(
                    "manifest record {}: expected 5 fields ({MANIFEST_COLUMNS}), got {}",
                    n + 1,
                    rec.len()
                )));
            }
            let field = |i: usize, name: &str| -> Result<&str> {
                let v = &rec[i];
                if v.is_empty() {
                    return Err(Error::InvalidInput(format!("manifest record {}: empty {name}", n + 1)));
                }
                Ok(v)
            };
            let num_err = |name: &str| Error::InvalidInput(format!("manifest record {}: bad {name}", n + 1));
            entries.push(MixtureSpec {
                id: field(0, "id")?.to_string(),
                duration_s: field(1, "duration_s")?.parse().map_err(|_| num_err("duration_s"))?,
                target_seed: field(2, "target_seed")?.parse().map_err(|_| num_err("target_seed"))?,
                noise_seed: field(3, "noise_seed")?.parse().map_err(|_| num_err("noise_seed"))?,
                snr_db: field(4, "snr_db")?.parse().map_err(|_| num_err("snr_db"))?,
            });
        }
        let m = Self {
            split,
            generator_version: version.unwrap_or(GENERATOR_VERSION),
            seed,
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
