//! Trajectory datasets: file formats, synthesis, rasterisation, windows and
//! cross-validation folds.

mod folds;
mod mnistseq;
mod pnm;
mod raster;
mod synth;
mod trajectory;
mod window;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

pub use folds::{split_folds, Folds};
pub use mnistseq::{accumulate, convert_mnistseq, ConvertStats};
pub use pnm::{write_pixmap, ReferenceImage};
pub use raster::rasterize_segment;
pub use synth::{fork_branch, linear_path, synthesize, SynthConfig, SynthKind, SynthOutput};
pub use trajectory::{
    format_trajectory, parse_trajectories, parse_trajectory_line, write_trajectories, Trajectory,
};
pub use window::{collect_windows, windows, SegmentWindow, WindowSet};

use crate::grid::GridSpec;
use crate::{Error, Result};

/// Trajectories plus the reference images they link to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub grid: GridSpec,
    pub trajectories: Vec<Trajectory>,
    pub references: HashMap<String, ReferenceImage>,
}

/// Directory holding `<image_id>.ppm` files next to a trajectory file.
pub fn images_dir(trajectory_file: &Path) -> PathBuf {
    trajectory_file
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("images")
}

impl Dataset {
    pub fn new(grid: GridSpec, trajectories: Vec<Trajectory>) -> Self {
        Self {
            grid,
            trajectories,
            references: HashMap::new(),
        }
    }

    pub fn with_references(mut self, refs: impl IntoIterator<Item = ReferenceImage>) -> Self {
        self.references.extend(refs.into_iter().map(|r| (r.id.clone(), r)));
        self
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn reference(&self, t: &Trajectory) -> Result<Option<&ReferenceImage>> {
        match &t.ref_image_id {
            None => Ok(None),
            Some(id) => self
                .references
                .get(id)
                .map(Some)
                .ok_or_else(|| Error::Reference(format!("trajectory {:?} links missing image {id:?}", t.id))),
        }
    }

    /// Same grid and images, restricted to the given trajectory indices.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            grid: self.grid,
            trajectories: indices.iter().map(|&i| self.trajectories[i].clone()).collect(),
            references: self.references.clone(),
        }
    }

    /// Loads a trajectory file and every image it references from the
    /// sibling `images/` directory.
    pub fn load(path: &Path, grid: GridSpec) -> Result<Self> {
        let trajectories = parse_trajectories(BufReader::new(File::open(path)?), &grid)?;
        let dir = images_dir(path);
        let mut references = HashMap::new();
        for t in &trajectories {
            if let Some(id) = &t.ref_image_id {
                if references.contains_key(id) {
                    continue;
                }
                let file = dir.join(format!("{id}.ppm"));
                let img = ReferenceImage::read(id.clone(), &mut File::open(&file).map_err(|e| {
                    Error::Reference(format!("{}: {e}", file.display()))
                })?)?;
                img.check_grid(&grid)?;
                references.insert(id.clone(), img);
            }
        }
        Ok(Self {
            grid,
            trajectories,
            references,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_trajectories(&mut w, &self.trajectories)?;
        if !self.references.is_empty() {
            let dir = images_dir(path);
            std::fs::create_dir_all(&dir)?;
            let mut ids: Vec<_> = self.references.keys().collect();
            ids.sort();
            for id in ids {
                let mut f = BufWriter::new(File::create(dir.join(format!("{id}.ppm")))?);
                self.references[id].write(&mut f)?;
            }
        }
        Ok(())
    }
}
