use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

/// Partition sizes `(train, val, test)` for `n` images: validation gets a
/// fifth, test two fifteenths, training the rest. Each part gets at least one.
pub fn split_sizes(n: usize) -> Result<(usize, usize, usize)> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 images to split, got {n}"
        )));
    }
    let val = ((n as f64 / 5.0).round() as usize).max(1);
    let test = ((2.0 * n as f64 / 15.0).round() as usize).max(1);
    Ok((n - val - test, val, test))
}

/// Seeded shuffle followed by a proportional three-way split.
pub fn split_dataset(ids: &[String], seed: u64) -> Result<DatasetManifest> {
    let (n_train, n_val, _) = split_sizes(ids.len())?;
    let mut seen = HashSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "duplicate image id {dup:?}"
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(n_train + n_val);
    let val = shuffled.split_off(n_train);
    Ok(DatasetManifest {
        train: shuffled,
        val,
        test,
        seed,
    })
}

impl DatasetManifest {
    pub fn get(&self, split: SplitName) -> &[String] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# seed: {}\n", self.seed);
        for (name, ids) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            let _ = writeln!(s, "[{name}]");
            for id in ids {
                let _ = writeln!(s, "{id}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = DatasetManifest {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            seed: 0,
        };
        let mut current: Option<SplitName> = None;
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("seed:") {
                    m.seed = v
                        .trim()
                        .parse()
                        .map_err(|_| err(format!("invalid seed {:?}", v.trim())))?;
                }
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(
                    name.parse()
                        .map_err(|_| err(format!("unknown section [{name}]")))?,
                );
                continue;
            }
            let split = current.ok_or_else(|| err(format!("id {line:?} before any section")))?;
            if !seen.insert(line.to_string()) {
                return Err(err(format!("id {line:?} listed twice")));
            }
            match split {
                SplitName::Train => m.train.push(line.to_string()),
                SplitName::Val => m.val.push(line.to_string()),
                SplitName::Test => m.test.push(line.to_string()),
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
