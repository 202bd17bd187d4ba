use super::{EvalError, Family, SweepResult};
use crate::dataset::MORTALITY_TASK;
use crate::transfer::{sparsity_fraction, LrProbe};
use std::io::Write;
use std::path::Path;

/// Sparsity of one task/family probe plus its absolute weights for heatmap
/// emission.
#[derive(Clone, Debug)]
pub struct SparsityRow {
    pub task: String,
    pub family: Family,
    pub fraction_zero: f64,
    pub abs_weights: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct SparsityReport {
    pub rows: Vec<SparsityRow>,
}

/// Builds the sparsity table from fitted probes, one row per
/// `(task, family)`.
pub fn sparsity_report(
    probes: &[(String, Family, LrProbe)],
    threshold: f64,
) -> SparsityReport {
    SparsityReport {
        rows: probes
            .iter()
            .map(|(task, family, probe)| SparsityRow {
                task: task.clone(),
                family: *family,
                fraction_zero: sparsity_fraction(probe, threshold),
                abs_weights: probe.weights.iter().map(|w| w.abs()).collect(),
            })
            .collect(),
    }
}

/// `family,fraction,seed,test_auroc,status` — one line per sweep cell;
/// skipped cells leave the AUROC column empty.
pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "family,fraction,seed,test_auroc,status")?;
    for cell in &result.cells {
        let auroc = cell
            .test_auroc
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            cell.family, cell.fraction, cell.seed, auroc, cell.status
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Plot data for the label-fraction figure: per family and fraction the
/// mean and standard deviation of test AUROC across every ok cell of the
/// given sweeps.
pub fn write_fraction_plot_csv(path: &Path, results: &[SweepResult]) -> Result<(), EvalError> {
    let mut groups: std::collections::BTreeMap<(String, String), Vec<f64>> =
        std::collections::BTreeMap::new();
    for result in results {
        for cell in &result.cells {
            if let Some(v) = cell.test_auroc {
                groups
                    .entry((cell.family.to_string(), format!("{}", cell.fraction)))
                    .or_default()
                    .push(v);
            }
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "family,fraction,mean_auroc,std_auroc,cells")?;
    for ((family, fraction), values) in groups {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        writeln!(out, "{family},{fraction},{mean},{std},{}", values.len())?;
    }
    out.flush()?;
    Ok(())
}

/// `task,family,sparsity_fraction` rows.
pub fn write_sparsity_summary_csv(path: &Path, report: &SparsityReport) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "task,family,sparsity_fraction")?;
    for row in &report.rows {
        writeln!(out, "{},{},{}", row.task, row.family, row.fraction_zero)?;
    }
    out.flush()?;
    Ok(())
}

/// Heatmap data for one family: `task,feature_index,abs_weight` rows in
/// task order.
pub fn write_heatmap_csv(
    path: &Path,
    report: &SparsityReport,
    family: Family,
) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "task,feature_index,abs_weight")?;
    for row in report.rows.iter().filter(|r| r.family == family) {
        for (j, w) in row.abs_weights.iter().enumerate() {
            writeln!(out, "{},{j},{w}", row.task)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Summary table with tasks as rows and the three probe families as
/// columns. Phenotype tasks are additionally aggregated into a
/// `mean ± std` row; the cohort-outcome task keeps its own row, mirroring
/// how sparsity results are usually presented.
pub fn write_table_csv(path: &Path, report: &SparsityReport) -> Result<(), EvalError> {
    let families = [Family::StatLr, Family::FrozenTopLr, Family::FrozenAllLr];
    let mut tasks: Vec<String> = report.rows.iter().map(|r| r.task.clone()).collect();
    tasks.sort();
    tasks.dedup();

    let lookup = |task: &str, family: Family| -> Option<f64> {
        report
            .rows
            .iter()
            .find(|r| r.task == task && r.family == family)
            .map(|r| r.fraction_zero)
    };

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "task,LR,MN-LR-1,MN-LR-2")?;
    for task in &tasks {
        let cells: Vec<String> = families
            .iter()
            .map(|&f| lookup(task, f).map(|v| format!("{v:.3}")).unwrap_or_default())
            .collect();
        writeln!(out, "{task},{}", cells.join(","))?;
    }

    let phenotype_tasks: Vec<&String> = tasks.iter().filter(|t| *t != MORTALITY_TASK).collect();
    if phenotype_tasks.len() > 1 {
        let cells: Vec<String> = families
            .iter()
            .map(|&f| {
                let values: Vec<f64> = phenotype_tasks
                    .iter()
                    .filter_map(|t| lookup(t, f))
                    .collect();
                if values.is_empty() {
                    String::new()
                } else {
                    let n = values.len() as f64;
                    let mean = values.iter().sum::<f64>() / n;
                    let std =
                        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                    format!("{mean:.3}±{std:.3}")
                }
            })
            .collect();
        writeln!(out, "phenotypes (mean±std),{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::SweepCell;
    use crate::transfer::LayerSelection;
    use ndarray::Array1;

    fn probe(weights: Vec<f64>) -> LrProbe {
        let m = weights.len();
        LrProbe {
            weights: Array1::from_vec(weights),
            intercept: 0.0,
            lambda: 1.0,
            feature_means: Array1::zeros(m),
            feature_stds: Array1::from_vec(vec![1.0; m]),
            layers_used: LayerSelection::Top,
        }
    }

    #[test]
    fn report_rows_carry_fractions_and_weights() {
        let probes = vec![
            ("phenotype_01".to_string(), Family::FrozenTopLr, probe(vec![0.0, 0.5])),
            (MORTALITY_TASK.to_string(), Family::FrozenTopLr, probe(vec![0.0, 0.0])),
        ];
        let report = sparsity_report(&probes, 0.001);
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].fraction_zero, 0.5);
        assert_eq!(report.rows[1].fraction_zero, 1.0);
        assert_eq!(report.rows[0].abs_weights, vec![0.0, 0.5]);
    }

    #[test]
    fn table_layout_has_family_columns_and_aggregate_row() {
        let probes = vec![
            ("phenotype_01".to_string(), Family::StatLr, probe(vec![0.0, 0.5])),
            ("phenotype_01".to_string(), Family::FrozenTopLr, probe(vec![0.0, 0.0])),
            ("phenotype_02".to_string(), Family::StatLr, probe(vec![0.5, 0.5])),
            ("phenotype_02".to_string(), Family::FrozenTopLr, probe(vec![0.0, 0.5])),
            (MORTALITY_TASK.to_string(), Family::StatLr, probe(vec![0.0, 0.0])),
        ];
        let report = sparsity_report(&probes, 0.001);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        write_table_csv(&path, &report).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], "task,LR,MN-LR-1,MN-LR-2");
        assert!(lines.iter().any(|l| l.starts_with("mortality,1.000,,")));
        let agg = lines.last().unwrap();
        assert!(agg.starts_with("phenotypes (mean±std),0.250±0.250,0.750±0.250,"));
    }

    #[test]
    fn heatmap_rows_enumerate_features() {
        let probes = vec![(
            "phenotype_01".to_string(),
            Family::FrozenTopLr,
            probe(vec![0.1, -0.3]),
        )];
        let report = sparsity_report(&probes, 0.001);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heatmap.csv");
        write_heatmap_csv(&path, &report, Family::FrozenTopLr).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            body,
            "task,feature_index,abs_weight\nphenotype_01,0,0.1\nphenotype_01,1,0.3\n"
        );
    }

    #[test]
    fn sweep_csv_has_the_pinned_columns() {
        let result = SweepResult {
            target_task: "t".into(),
            test_set_hash: "h".into(),
            cells: vec![
                SweepCell {
                    family: Family::FrozenTopLr,
                    fraction: 0.05,
                    seed: 3,
                    test_auroc: Some(0.875),
                    status: "ok".into(),
                },
                SweepCell {
                    family: Family::TargetRnn,
                    fraction: 0.05,
                    seed: 3,
                    test_auroc: None,
                    status: "skipped: single-class or empty training subsample".into(),
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &result).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], "family,fraction,seed,test_auroc,status");
        assert_eq!(lines[1], "MN-LR-1,0.05,3,0.875,ok");
        assert!(lines[2].starts_with("RNN-C,0.05,3,,skipped"));
    }
}
