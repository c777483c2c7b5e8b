use std::fmt::Write as _;

use super::config::ModeKind;
use crate::training::EvalReport;

/// Which accuracy column a table reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mae,
    Mse,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mae => "mae",
            Self::Mse => "mse",
        }
    }

    pub fn of(self, e: &EvalReport) -> f64 {
        match self {
            Self::Mae => e.mae,
            Self::Mse => e.mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub mode: ModeKind,
    pub n_train: usize,
    /// `(seed, test report)` for every seed that finished.
    pub runs: Vec<(u64, EvalReport)>,
    pub missing_seeds: Vec<u64>,
}

impl Cell {
    fn mean(&self, f: impl Fn(&EvalReport) -> f64) -> Option<f64> {
        (!self.runs.is_empty())
            .then(|| self.runs.iter().map(|(_, e)| f(e)).sum::<f64>() / self.runs.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub metric: Metric,
    pub unit: String,
    pub modes: Vec<ModeKind>,
    pub n_train: Vec<usize>,
    /// Row-major over `modes × n_train`.
    pub cells: Vec<Cell>,
}

impl Table {
    pub fn cell(&self, mode: ModeKind, n_train: usize) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.mode == mode && c.n_train == n_train)
    }

    pub fn metric_mean(&self, mode: ModeKind, n_train: usize) -> Option<f64> {
        self.cell(mode, n_train)?.mean(|e| self.metric.of(e))
    }

    /// Mean over seeds of the per-run maximum violation.
    pub fn cv_max_mean(&self, mode: ModeKind, n_train: usize) -> Option<f64> {
        self.cell(mode, n_train)?.mean(|e| e.cv_max)
    }

    pub fn cv_mean_mean(&self, mode: ModeKind, n_train: usize) -> Option<f64> {
        self.cell(mode, n_train)?.mean(|e| e.cv_mean)
    }

    /// Mode with the lowest mean accuracy metric in a column.
    pub fn best(&self, n_train: usize) -> Option<ModeKind> {
        self.modes
            .iter()
            .filter_map(|&m| self.metric_mean(m, n_train).map(|v| (m, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(m, _)| m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "mode,n_train,{m}_mean,cv_max_mean,cv_mean_mean,seeds,{m}_per_seed,cv_max_per_seed,best\n",
            m = self.metric.name()
        );
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for &mode in &self.modes {
            for &n in &self.n_train {
                let Some(cell) = self.cell(mode, n) else {
                    continue;
                };
                let seeds: Vec<String> = cell.runs.iter().map(|(s, _)| s.to_string()).collect();
                let metric: Vec<String> = cell
                    .runs
                    .iter()
                    .map(|(_, e)| self.metric.of(e).to_string())
                    .collect();
                let cv: Vec<String> = cell
                    .runs
                    .iter()
                    .map(|(_, e)| e.cv_max.to_string())
                    .collect();
                writeln!(
                    out,
                    "{},{n},{},{},{},{},{},{},{}",
                    mode.name(),
                    fmt(self.metric_mean(mode, n)),
                    fmt(self.cv_max_mean(mode, n)),
                    fmt(self.cv_mean_mean(mode, n)),
                    seeds.join(";"),
                    metric.join(";"),
                    cv.join(";"),
                    u8::from(self.best(n) == Some(mode)),
                )
                .unwrap();
            }
        }
        out
    }

    /// Aligned text; `*` marks the best accuracy per column, `-` a gap.
    pub fn to_text(&self) -> String {
        let metric = self.metric.name().to_uppercase();
        let mut header = vec!["mode".to_string()];
        for n in &self.n_train {
            header.push(format!("{metric} n={n} [{}]", self.unit));
            header.push(format!("CV n={n} [{}]", self.unit));
        }
        let mut rows = vec![header];
        for &mode in &self.modes {
            let mut row = vec![mode.name().to_string()];
            for &n in &self.n_train {
                let star = if self.best(n) == Some(mode) { "*" } else { "" };
                row.push(match self.metric_mean(mode, n) {
                    Some(v) => format!("{v:.4}{star}"),
                    None => "-".into(),
                });
                row.push(match self.cv_max_mean(mode, n) {
                    Some(v) => format!("{v:.3e}"),
                    None => "-".into(),
                });
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, w))| {
                    if j == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        let mut seeds = String::new();
        for cell in &self.cells {
            let per: Vec<String> = cell
                .runs
                .iter()
                .map(|(s, e)| format!("seed {s}: {:.4} / {:.3e}", self.metric.of(e), e.cv_max))
                .collect();
            if !per.is_empty() {
                writeln!(
                    seeds,
                    "{} n={}: {}",
                    cell.mode.name(),
                    cell.n_train,
                    per.join(", ")
                )
                .unwrap();
            }
        }
        if !seeds.is_empty() {
            out.push('\n');
            out.push_str(&seeds);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Split;

    fn report(mae: f64, cv: f64) -> EvalReport {
        EvalReport {
            split: Split::Test,
            samples: 10,
            mae,
            mse: mae * mae,
            cv_mean: cv / 2.0,
            cv_max: cv,
            raw_cv_mean: cv,
            raw_cv_max: cv,
            loss: 0.0,
            converged: 10,
            mean_projection_iters: 0.0,
        }
    }

    fn table() -> Table {
        Table {
            metric: Metric::Mae,
            unit: "cm".into(),
            modes: vec![ModeKind::None, ModeKind::Smooth],
            n_train: vec![100],
            cells: vec![
                Cell {
                    mode: ModeKind::None,
                    n_train: 100,
                    runs: vec![(0, report(10.0, 5.0)), (1, report(20.0, 7.0))],
                    missing_seeds: vec![],
                },
                Cell {
                    mode: ModeKind::Smooth,
                    n_train: 100,
                    runs: vec![(0, report(8.0, 0.0))],
                    missing_seeds: vec![1],
                },
            ],
        }
    }

    #[test]
    fn means_and_best() {
        let t = table();
        assert_eq!(t.metric_mean(ModeKind::None, 100), Some(15.0));
        assert_eq!(t.cv_max_mean(ModeKind::None, 100), Some(6.0));
        assert_eq!(t.best(100), Some(ModeKind::Smooth));
        let csv = t.to_csv();
        assert!(csv.contains("none,100,15,6,3,0;1,10;20,5;7,0"));
        assert!(csv.contains("smooth,100,8,0,0,0,8,0,1"));
    }

    #[test]
    fn text_flags_best_and_lists_seeds() {
        let text = table().to_text();
        assert!(text.contains("8.0000*"));
        assert!(text.contains("seed 1: 20.0000"));
    }

    #[test]
    fn empty_cells_are_gaps() {
        let mut t = table();
        t.cells[1].runs.clear();
        assert!(t.to_text().lines().nth(2).unwrap().contains('-'));
        assert_eq!(t.best(100), Some(ModeKind::None));
    }
}
