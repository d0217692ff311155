use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use stcnn_core::baselines::LstmGaussian;
use stcnn_core::checkpoint::Checkpoint;
use stcnn_core::data::{Dataset, Folds};
use stcnn_core::{GridModel, GridSpec, Stcnn};

use crate::error::{require_file, CliError, CliResult};

pub enum Loaded {
    Stcnn(Stcnn),
    Lstm(LstmGaussian),
}

impl Loaded {
    pub fn load(path: &Path) -> CliResult<Self> {
        require_file(path)?;
        let c = Checkpoint::load(path)?;
        match c.get("model") {
            Some("stcnn") => Ok(Self::Stcnn(Stcnn::from_checkpoint(&c)?)),
            Some("lstm") => Ok(Self::Lstm(LstmGaussian::from_checkpoint(&c)?)),
            Some(other) => Err(CliError::runtime(format!("{}: unknown model {other:?}", path.display()))),
            None => Err(CliError::runtime(format!("{}: checkpoint names no model", path.display()))),
        }
    }

    pub fn model(&self) -> &dyn GridModel {
        match self {
            Self::Stcnn(m) => m,
            Self::Lstm(m) => m,
        }
    }
}

/// Replaces `{fold}` in a path template.
pub fn fold_path(template: &str, fold: Option<usize>) -> PathBuf {
    match fold {
        Some(f) => PathBuf::from(template.replace("{fold}", &f.to_string())),
        None => PathBuf::from(template.replace("{fold}", "all")),
    }
}

pub fn check_grid(model: &dyn GridModel, grid: GridSpec, what: &str) -> CliResult<()> {
    if model.grid() == grid {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} was trained on a {} grid but the data grid is {grid}",
            model.grid()
        )))
    }
}

pub fn load_folds(path: &Path, data: &Dataset) -> CliResult<Folds> {
    require_file(path)?;
    Ok(Folds::read(BufReader::new(File::open(path)?), &data.trajectories)?)
}

/// The folds to run: the one requested, or all of them.
pub fn fold_list(folds: &Folds, fold: Option<usize>) -> CliResult<Vec<usize>> {
    match fold {
        Some(f) if f >= folds.k => Err(CliError::Usage(format!("fold {f} out of range (0..{})", folds.k))),
        Some(f) => Ok(vec![f]),
        None => Ok((0..folds.k).collect()),
    }
}
