use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, TrainConfig};
use crate::dataset::Splits;
use crate::network::{rmse, shape_label, Activation};

/// Named hidden-layer shapes used throughout the experiments.
pub const PRESET_SHAPES: [(&str, &[usize]); 3] = [
    ("4-5-6", &[4, 5, 6]),
    ("9-7-13", &[9, 7, 13]),
    ("30-30-30", &[30, 30, 30]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthMode {
    /// Every hidden layer of a cell gets the same width.
    #[default]
    Tied,
    /// Widths vary independently per layer.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpace {
    pub activations: Vec<Activation>,
    pub layer_counts: Vec<usize>,
    pub widths: Vec<usize>,
    pub width_mode: WidthMode,
}

impl Default for GridSpace {
    fn default() -> Self {
        Self {
            activations: Activation::ALL.to_vec(),
            layer_counts: vec![1, 2, 3],
            widths: default_widths(),
            width_mode: WidthMode::Tied,
        }
    }
}

/// 1..=10 and 20..=90 in steps of 10.
pub fn default_widths() -> Vec<usize> {
    (1..=10).chain((20..=90).step_by(10)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub activation: Activation,
    pub shape: Vec<usize>,
}

impl GridSpace {
    pub fn validate(&self) -> Result<(), String> {
        if self.activations.is_empty() || self.layer_counts.is_empty() || self.widths.is_empty() {
            return Err("grid space must have at least one activation, layer count and width".into());
        }
        if self.layer_counts.iter().any(|&l| l == 0 || l > 3) {
            return Err("layer counts must lie in 1..=3".into());
        }
        if self.widths.contains(&0) {
            return Err("widths must be positive".into());
        }
        Ok(())
    }

    /// Enumerates cells in a fixed order: activation, layer count, widths.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut shapes = Vec::new();
        for &layers in &self.layer_counts {
            match self.width_mode {
                WidthMode::Tied => shapes.extend(self.widths.iter().map(|&w| vec![w; layers])),
                WidthMode::Free => {
                    let mut acc: Vec<Vec<usize>> = vec![Vec::new()];
                    for _ in 0..layers {
                        acc = acc
                            .into_iter()
                            .flat_map(|prefix| {
                                self.widths.iter().map(move |&w| {
                                    let mut s = prefix.clone();
                                    s.push(w);
                                    s
                                })
                            })
                            .collect();
                    }
                    shapes.extend(acc);
                }
            }
        }
        let mut cells = Vec::with_capacity(self.activations.len() * shapes.len());
        for &activation in &self.activations {
            for shape in &shapes {
                cells.push(GridCell {
                    index: cells.len(),
                    activation,
                    shape: shape.clone(),
                });
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub index: usize,
    pub shape: String,
    pub activation: Activation,
    pub validation_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

fn run_cell(cell: &GridCell, splits: &Splits, cfg: &TrainConfig, base_seed: u64) -> GridResult {
    let seed = base_seed ^ cell.index as u64;
    let outcome = (|| -> Result<(f64, f64, usize), String> {
        let cfg = TrainConfig { seed, ..*cfg };
        let (trained, fitted) =
            fit(&cell.shape, cell.activation, &splits.train, &splits.validation, &cfg).map_err(|e| e.to_string())?;
        let v = rmse(&trained, &splits.validation).map_err(|e| e.to_string())?;
        let t = rmse(&trained, &splits.test).map_err(|e| e.to_string())?;
        Ok((v, t, fitted.report.iterations))
    })();
    let shape = shape_label(&cell.shape);
    match outcome {
        Ok((v, t, it)) => GridResult {
            index: cell.index,
            shape,
            activation: cell.activation,
            validation_rmse: Some(v),
            test_rmse: Some(t),
            iterations: Some(it),
            error: None,
        },
        Err(e) => GridResult {
            index: cell.index,
            shape,
            activation: cell.activation,
            validation_rmse: None,
            test_rmse: None,
            iterations: None,
            error: Some(e),
        },
    }
}

/// Trains one network per cell (in parallel) and ranks them by validation
/// RMSE, failed cells last. Cell `i` is seeded with `base_seed ^ i`.
pub fn grid_search(
    space: &GridSpace,
    splits: &Splits,
    cfg: &TrainConfig,
    base_seed: u64,
) -> Result<Vec<GridResult>, String> {
    space.validate()?;
    let cells = space.cells();
    let mut results: Vec<GridResult> = cells.par_iter().map(|c| run_cell(c, splits, cfg, base_seed)).collect();
    results.sort_by(|a, b| match (a.validation_rmse, b.validation_rmse) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.index.cmp(&b.index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    Ok(results)
}
