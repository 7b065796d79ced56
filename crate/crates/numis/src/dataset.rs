//! Balanced, stratified, reproducible train/validation/test manifests and
//! mini-batches. One manifest holds one concept's binary dataset.

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Positive => "pos",
            Label::Negative => "neg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pos" => Ok(Label::Positive),
            "neg" => Ok(Label::Negative),
            other => Err(Error::Data(format!("unknown label {other:?} (expected pos/neg)"))),
        }
    }

    /// Class index used by the network output: negative = 0, positive = 1.
    pub fn class_index(&self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::Data(format!("unknown split {other:?}"))),
        }
    }
}

/// One coin record. `extra` carries any unknown manifest columns through
/// read/write untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image_path: String,
    pub text_path: String,
    pub concept: String,
    pub label: Label,
    pub split: Split,
    pub extra: Vec<String>,
}

/// The manifest columns every tool agrees on, in order.
pub const MANIFEST_COLUMNS: [&str; 6] = ["id", "image_path", "text_path", "concept", "label", "split"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub samples: Vec<Sample>,
    /// Names of preserved unknown columns, aligned with `Sample::extra`.
    pub extra_columns: Vec<String>,
}

impl Manifest {
    pub fn new(samples: Vec<Sample>) -> Self {
        Manifest {
            samples,
            extra_columns: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("opening manifest {}", path.display()), e))?;
        let mut lines = BufReader::new(file).lines().enumerate();

        let header = match lines.next() {
            Some((_, Ok(line))) => line,
            Some((_, Err(e))) => return Err(Error::io("reading manifest header".into(), e)),
            None => return Err(Error::Data(format!("{}: empty manifest", path.display()))),
        };
        let cols: Vec<&str> = header.split('\t').collect();
        let mut positions = [usize::MAX; 6];
        let mut extra_columns = Vec::new();
        let mut extra_positions = Vec::new();
        for (i, col) in cols.iter().enumerate() {
            match MANIFEST_COLUMNS.iter().position(|c| c == col) {
                Some(k) => positions[k] = i,
                None => {
                    extra_columns.push(col.to_string());
                    extra_positions.push(i);
                }
            }
        }
        if let Some(missing) = MANIFEST_COLUMNS
            .iter()
            .zip(positions.iter())
            .find(|(_, &p)| p == usize::MAX)
        {
            return Err(Error::Data(format!(
                "{}:1: manifest header is missing column {:?}",
                path.display(),
                missing.0
            )));
        }

        let mut samples = Vec::new();
        for (lineno, line) in lines {
            let line = line.map_err(|e| Error::io("reading manifest".into(), e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != cols.len() {
                return Err(Error::Data(format!(
                    "{}:{}: expected {} fields, got {}",
                    path.display(),
                    lineno + 1,
                    cols.len(),
                    fields.len()
                )));
            }
            let at = |k: usize| fields[positions[k]];
            let row_err = |e: Error| Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1));
            samples.push(Sample {
                id: at(0).to_string(),
                image_path: at(1).to_string(),
                text_path: at(2).to_string(),
                concept: at(3).to_string(),
                label: Label::parse(at(4)).map_err(row_err)?,
                split: Split::parse(at(5)).map_err(row_err)?,
                extra: extra_positions.iter().map(|&i| fields[i].to_string()).collect(),
            });
        }
        let manifest = Manifest {
            samples,
            extra_columns,
        };
        manifest.check_unique_ids()?;
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.check_unique_ids()?;
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(format!("creating manifest {}", path.display()), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(format!("writing manifest {}", path.display()), e);
        let mut header: Vec<&str> = MANIFEST_COLUMNS.to_vec();
        header.extend(self.extra_columns.iter().map(|s| s.as_str()));
        writeln!(w, "{}", header.join("\t")).map_err(io_err)?;
        for s in &self.samples {
            let mut row = vec![
                s.id.clone(),
                s.image_path.clone(),
                s.text_path.clone(),
                s.concept.clone(),
                s.label.as_str().to_string(),
                s.split.as_str().to_string(),
            ];
            row.extend(s.extra.iter().cloned());
            writeln!(w, "{}", row.join("\t")).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.samples.len());
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id {:?}", s.id)));
            }
        }
        Ok(())
    }

    pub fn of_split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SplitConfig {
    /// (train, val, test) fractions; must be positive and sum to 1.
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub balance: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: (0.70, 0.15, 0.15),
            seed: 0,
            balance: true,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let (t, v, e) = self.ratios;
        if t <= 0.0 || v <= 0.0 || e <= 0.0 {
            return Err(Error::Config(format!("split ratios must be positive, got {:?}", self.ratios)));
        }
        if ((t + v + e) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must sum to 1, got {}",
                t + v + e
            )));
        }
        Ok(())
    }
}

fn sorted_by_id(mut samples: Vec<Sample>) -> Vec<Sample> {
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    samples
}

/// Undersample the majority class uniformly at random (seeded) so both
/// classes have exactly the minority count. Selection is keyed on sorted ids,
/// so the result does not depend on input order.
pub fn stratify_balance(samples: Vec<Sample>, seed: u64) -> Result<Vec<Sample>> {
    let concept = samples.first().map(|s| s.concept.clone()).unwrap_or_default();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for s in samples {
        match s.label {
            Label::Positive => pos.push(s),
            Label::Negative => neg.push(s),
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Data(format!(
            "concept {concept:?}: cannot balance with {} positive and {} negative samples",
            pos.len(),
            neg.len()
        )));
    }
    let target = pos.len().min(neg.len());
    let mut keep = |class: Vec<Sample>, salt: u64| -> Vec<Sample> {
        if class.len() == target {
            return sorted_by_id(class);
        }
        let mut class = sorted_by_id(class);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[salt]));
        class.shuffle(&mut rng);
        class.truncate(target);
        sorted_by_id(class)
    };
    let mut out = keep(pos, 1);
    out.extend(keep(neg, 2));
    Ok(sorted_by_id(out))
}

/// Assign splits: seeded shuffle keyed on ids, then per-class counts of
/// floor(ratio * n_class) with remainders going to train. Splits are disjoint
/// and exhaustive; errors if any split ends up empty for any class.
pub fn split(samples: Vec<Sample>, config: &SplitConfig) -> Result<Vec<Sample>> {
    config.validate()?;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for s in samples {
        match s.label {
            Label::Positive => pos.push(s),
            Label::Negative => neg.push(s),
        }
    }

    let mut out = Vec::with_capacity(pos.len() + neg.len());
    for (class, salt) in [(pos, 1u64), (neg, 2u64)] {
        if class.is_empty() {
            return Err(Error::Data("a class has no samples to split".into()));
        }
        let n = class.len();
        let n_train = (config.ratios.0 * n as f64).floor() as usize;
        let n_val = (config.ratios.1 * n as f64).floor() as usize;
        let n_test = (config.ratios.2 * n as f64).floor() as usize;
        let n_train = n_train + (n - n_train - n_val - n_test); // remainder to train
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(Error::Data(format!(
                "class of {n} samples yields an empty split (train {n_train} / val {n_val} / test {n_test})"
            )));
        }
        let mut class = sorted_by_id(class);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[salt, 0x5011]));
        class.shuffle(&mut rng);
        for (i, mut s) in class.into_iter().enumerate() {
            s.split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            out.push(s);
        }
    }
    Ok(sorted_by_id(out))
}

/// Mini-batch index order for one epoch: a seeded reshuffle of 0..n keyed by
/// (seed, epoch), chunked into batches with the final short batch kept.
pub fn batches(n_samples: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if n_samples == 0 {
        return Err(Error::Data("cannot build batches from an empty split".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xba7c, epoch as u64]));
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}
