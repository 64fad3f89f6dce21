//! Layout of the data root.
//!
//! ```text
//! <home>/datasets/<name>.tsv      interactions, canonical order
//! <home>/propensity/<name>.tsv
//! <home>/strata/<name>.tsv
//! <home>/models/<set>/<label>.json + index.json
//! <home>/reports/<name>.jsonl     evaluation records
//! <home>/compare/<name>.*         correlation records and plot data
//! <home>/manifests/<verb>-<name>.json
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use strateval::corpus::{parse_tsv, Dataset, LoopKind};
use strateval::models::TrainedModel;
use strateval::propensity::PropensityTable;

use crate::failure::{Failure, Outcome, WithContext};

pub const HOME_VAR: &str = "STRATEVAL_HOME";
pub const DEFAULT_HOME: &str = ".strateval";

const DATASET_HEADER: &str = "# strateval dataset loop=";

#[derive(Clone, Debug)]
pub struct Home {
    root: PathBuf,
}

impl Home {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Home { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset_path(&self, name: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{name}.tsv"))
    }

    pub fn propensity_path(&self, name: &str) -> PathBuf {
        self.root.join("propensity").join(format!("{name}.tsv"))
    }

    pub fn strata_path(&self, name: &str) -> PathBuf {
        self.root.join("strata").join(format!("{name}.tsv"))
    }

    pub fn model_dir(&self, set: &str) -> PathBuf {
        self.root.join("models").join(set)
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(format!("{name}.jsonl"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn compare_dir(&self) -> PathBuf {
        self.root.join("compare")
    }

    pub fn sim_dir(&self) -> PathBuf {
        self.root.join("simulations")
    }

    pub fn manifest_path(&self, verb: &str, name: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{verb}-{name}.json"))
    }

    pub fn save_dataset(&self, name: &str, data: &Dataset) -> Outcome<PathBuf> {
        let path = self.dataset_path(name);
        let mut buf = format!("{DATASET_HEADER}{}\n", data.loop_kind()).into_bytes();
        data.write_tsv(&mut buf)?;
        write_file(&path, &buf)?;
        Ok(path)
    }

    pub fn load_dataset(&self, name: &str) -> Outcome<Dataset> {
        let path = self.dataset_path(name);
        let file = fs::File::open(&path)
            .map_err(|e| Failure::data(format!("dataset {name:?} not found at {}: {e}", path.display())))?;
        let mut reader = BufReader::new(file);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let loop_kind: LoopKind = match first.trim_end().strip_prefix(DATASET_HEADER) {
            Some(kind) => kind.parse().ctx(format!("{}", path.display()))?,
            None => {
                return Err(Failure::data(format!(
                    "{}: missing dataset header line",
                    path.display()
                )))
            }
        };
        parse_tsv(reader, loop_kind)
            .map_err(|e| Failure::from(shift_line(e)))
            .ctx(format!("{}", path.display()))
    }

    pub fn load_propensity(&self, name: &str) -> Outcome<PropensityTable> {
        let path = self.propensity_path(name);
        let file = fs::File::open(&path).map_err(|e| {
            Failure::data(format!(
                "propensity table {name:?} not found ({e}); run `strateval propensity` first"
            ))
        })?;
        PropensityTable::read_tsv(BufReader::new(file)).ctx(format!("{}", path.display()))
    }

    pub fn load_model(&self, path: &Path) -> Outcome<TrainedModel> {
        let text = fs::read_to_string(path).ctx(format!("{}", path.display()))?;
        TrainedModel::from_json(&text).ctx(format!("{}", path.display()))
    }
}

/// The dataset header occupies line 1, so parser line numbers are off by one.
fn shift_line(e: strateval::Error) -> strateval::Error {
    match e {
        strateval::Error::Parse { line, message } => strateval::Error::Parse { line: line + 1, message },
        other => other,
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Outcome<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).ctx(format!("creating {}", dir.display()))?;
    }
    let mut f = fs::File::create(path).ctx(format!("creating {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Outcome<String> {
    let bytes = fs::read(path).ctx(format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
