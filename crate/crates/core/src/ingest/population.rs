use std::path::{Path, PathBuf};

use super::predictions::{harmonize_n_classes, read_prediction_file, PredictionLogFile};
use super::IngestError;
use crate::population::ModelPopulation;

/// Member files of a population directory: every `*.csv`, sorted by name.
fn member_paths(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IngestError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| IngestError::io(dir, e))?;
        let path = entry.path();
        let is_csv = path.extension().is_some_and(|ext| ext == "csv");
        if is_csv && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}

/// Loads and aligns the member logs of a population directory.
pub fn read_population_files(dir: &Path) -> Result<Vec<PredictionLogFile>, IngestError> {
    let paths = member_paths(dir)?;
    if paths.is_empty() {
        return Err(IngestError::EmptyPopulation { dir: dir.to_path_buf() });
    }
    let mut files = paths.iter().map(|p| read_prediction_file(p)).collect::<Result<Vec<_>, _>>()?;
    harmonize_n_classes(&mut files)
        .map_err(|(i, reason)| IngestError::MisalignedPopulation { file: paths[i].clone(), reason })?;
    let (first, rest) = files.split_first().expect("non-empty");
    for (file, path) in rest.iter().zip(&paths[1..]) {
        if !first.log.same_examples(&file.log) {
            return Err(IngestError::MisalignedPopulation {
                file: path.clone(),
                reason: format!("example ids differ from {}", paths[0].display()),
            });
        }
    }
    Ok(files)
}

/// Reads every `*.csv` in `dir` (file-name order) as one population and
/// computes its modal labels. The population id is the directory name.
pub fn read_population(dir: &Path) -> Result<ModelPopulation, IngestError> {
    let files = read_population_files(dir)?;
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    ModelPopulation::new(id, files.into_iter().map(|f| f.log).collect())
        .map_err(|e| IngestError::MisalignedPopulation { file: dir.to_path_buf(), reason: e.to_string() })
}
