use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    json_out, text_out, Evaluation, ExperimentError, ImpactMedians, MinMaxSummary, RobustnessArtifact, ShapeMetrics,
    TrainSummary,
};

/// CSV table copied verbatim from a sweep artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundnessFailure {
    pub artifact: String,
    pub violations: usize,
}

/// Everything found under a run directory. `None` sections were absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub training: Option<Vec<TrainSummary>>,
    pub evaluation: Option<Vec<Evaluation>>,
    pub robustness: Option<Vec<RobustnessArtifact>>,
    pub minmax: Option<Vec<MinMaxSummary>>,
    pub impact: Option<Vec<ImpactMedians>>,
    pub sweep_inputs: Option<CsvTable>,
    pub sweep_shapes: Option<CsvTable>,
    pub absent: Vec<String>,
    pub soundness_failures: Vec<SoundnessFailure>,
}

fn corrupt(path: &Path, message: impl ToString) -> ExperimentError {
    ExperimentError::Corrupt {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| corrupt(path, e))?;
    serde_json::from_str(&text).map_err(|e| corrupt(path, e))
}

fn read_csv(path: &Path) -> Result<CsvTable, ExperimentError> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| corrupt(path, e))?;
    let header = r
        .headers()
        .map_err(|e| corrupt(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| corrupt(path, e))?;
    Ok(CsvTable { header, rows })
}

/// Sorted subdirectory names of `dir` (empty if it does not exist).
fn subdirs(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    names
}

/// Reads `<out>/<section>/<stream>/<file>` for every stream present.
fn per_stream<T: DeserializeOwned>(out: &Path, section: &str, file: &str) -> Result<Option<Vec<T>>, ExperimentError> {
    let paths: Vec<PathBuf> = subdirs(&out.join(section))
        .into_iter()
        .map(|s| out.join(section).join(s).join(file))
        .filter(|p| p.is_file())
        .collect();
    if paths.is_empty() {
        return Ok(None);
    }
    paths
        .iter()
        .map(|p| read_json(p))
        .collect::<Result<Vec<T>, _>>()
        .map(Some)
}

fn relative(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

/// Consolidates a run directory into `summary.json` and `summary.md`.
pub fn report(out: &Path) -> Result<(ReportSummary, Vec<PathBuf>), ExperimentError> {
    let training: Option<Vec<TrainSummary>> = per_stream(out, "models", "train_report.json")?;
    let evaluation: Option<Vec<Evaluation>> = per_stream(out, "metrics", "evaluation.json")?;
    let robustness: Option<Vec<RobustnessArtifact>> = per_stream(out, "robustness", "summary.json")?;
    let minmax: Option<Vec<MinMaxSummary>> = per_stream(out, "minmax", "summary.json")?;
    let impact: Option<Vec<ImpactMedians>> = per_stream(out, "impact", "medians.json")?;
    let t1 = out.join("sweep").join("table1.csv");
    let t2 = out.join("sweep").join("table2.csv");
    let sweep_inputs = if t1.is_file() { Some(read_csv(&t1)?) } else { None };
    let sweep_shapes = if t2.is_file() { Some(read_csv(&t2)?) } else { None };

    let mut soundness_failures = Vec::new();
    for r in robustness.iter().flatten() {
        if r.soundness_violations > 0 {
            soundness_failures.push(SoundnessFailure {
                artifact: format!("robustness/{}/summary.json", r.stream),
                violations: r.soundness_violations,
            });
        }
    }
    for stream in subdirs(&out.join("sweep")) {
        let shapes = out.join("sweep").join(&stream).join("shapes");
        for shape in subdirs(&shapes) {
            let p = shapes.join(shape).join("metrics.json");
            if p.is_file() {
                let m: ShapeMetrics = read_json(&p)?;
                if m.soundness_violations > 0 {
                    soundness_failures.push(SoundnessFailure {
                        artifact: relative(out, &p),
                        violations: m.soundness_violations,
                    });
                }
            }
        }
    }

    let mut absent = Vec::new();
    let present = [
        ("training", training.is_some()),
        ("evaluation", evaluation.is_some()),
        ("robustness", robustness.is_some()),
        ("minmax", minmax.is_some()),
        ("impact", impact.is_some()),
        ("sweep_inputs", sweep_inputs.is_some()),
        ("sweep_shapes", sweep_shapes.is_some()),
    ];
    for (name, ok) in present {
        if !ok {
            absent.push(name.to_string());
        }
    }
    let summary = ReportSummary {
        training,
        evaluation,
        robustness,
        minmax,
        impact,
        sweep_inputs,
        sweep_shapes,
        absent,
        soundness_failures,
    };
    let mut written = Vec::new();
    json_out(out.join("summary.json"), &summary, &mut written)?;
    text_out(out.join("summary.md"), &markdown(&summary), &mut written)?;
    Ok((summary, written))
}

fn table(md: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(md, "| {} |", header.join(" | "));
    let _ = writeln!(md, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(md, "| {} |", r.join(" | "));
    }
    md.push('\n');
}

fn h(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn absent(md: &mut String) {
    md.push_str("_absent_\n\n");
}

pub fn markdown(s: &ReportSummary) -> String {
    let mut md = String::from("# Run summary\n\n");
    md.push_str("## Soundness\n\n");
    if s.soundness_failures.is_empty() {
        md.push_str("No sampled point escaped its certified interval.\n\n");
    } else {
        for f in &s.soundness_failures {
            let _ = writeln!(md, "- **FAILED** `{}`: {} violations", f.artifact, f.violations);
        }
        md.push('\n');
    }

    md.push_str("## Training RMSE (°C)\n\n");
    match &s.training {
        Some(rows) => table(
            &mut md,
            &h(&[
                "stream",
                "shape",
                "inputs",
                "train",
                "validation",
                "test",
                "iterations",
                "stop",
            ]),
            &rows
                .iter()
                .map(|t| {
                    vec![
                        t.stream.clone(),
                        t.shape.clone(),
                        t.variant.label().to_string(),
                        format!("{:.4}", t.rmse_c.train),
                        format!("{:.4}", t.rmse_c.validation),
                        format!("{:.4}", t.rmse_c.test),
                        t.iterations.to_string(),
                        format!("{:?}", t.stop_reason).to_lowercase(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        None => absent(&mut md),
    }

    md.push_str("## Evaluation RMSE (°C)\n\n");
    match &s.evaluation {
        Some(rows) => table(
            &mut md,
            &h(&["stream", "shape", "train", "validation", "test"]),
            &rows
                .iter()
                .map(|e| {
                    vec![
                        e.stream.clone(),
                        e.shape.clone(),
                        format!("{:.4}", e.rmse_c.train),
                        format!("{:.4}", e.rmse_c.validation),
                        format!("{:.4}", e.rmse_c.test),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        None => absent(&mut md),
    }

    md.push_str("## Robustness\n\n");
    match &s.robustness {
        Some(rows) => table(
            &mut md,
            &h(&[
                "stream",
                "epsilon",
                "MeanPerturb (°C)",
                "mean center deviation (°C)",
                "max width (°C)",
                "violations",
            ]),
            &rows
                .iter()
                .map(|r| {
                    vec![
                        r.stream.clone(),
                        r.summary.epsilon.to_string(),
                        format!("{:.4}", r.summary.mean_perturb),
                        format!("{:.4}", r.summary.mean_center_deviation),
                        format!("{:.4}", r.summary.max_width),
                        r.soundness_violations.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        None => absent(&mut md),
    }

    md.push_str("## Min/Max (°C)\n\n");
    match &s.minmax {
        Some(rows) => table(
            &mut md,
            &h(&["stream", "min", "max", "restarts"]),
            &rows
                .iter()
                .map(|m| {
                    vec![
                        m.stream.clone(),
                        format!("{:.4}", m.min_c),
                        format!("{:.4}", m.max_c),
                        m.restarts.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
        None => absent(&mut md),
    }

    md.push_str("## Impact medians (|∂L/∂x|)\n\n");
    match &s.impact {
        Some(rows) => {
            for m in rows {
                let _ = writeln!(md, "### {}\n", m.stream);
                table(
                    &mut md,
                    &h(&["feature", "median abs impact", "median impact"]),
                    &m.features
                        .iter()
                        .map(|f| {
                            vec![
                                f.feature.clone(),
                                format!("{:.3e}", f.median_abs),
                                format!("{:.3e}", f.median_signed),
                            ]
                        })
                        .collect::<Vec<_>>(),
                );
            }
        }
        None => absent(&mut md),
    }

    md.push_str("## Input sweep: test RMSE (°C)\n\n");
    match &s.sweep_inputs {
        Some(t) => table(&mut md, &t.header, &t.rows),
        None => absent(&mut md),
    }
    md.push_str("## Architecture sweep\n\n");
    match &s.sweep_shapes {
        Some(t) => table(&mut md, &t.header, &t.rows),
        None => absent(&mut md),
    }
    md
}
