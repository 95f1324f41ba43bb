use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Add;

use super::DatasetEntry;
use crate::failure::FailureMode;
use crate::tasks::TaskId;

/// Entry counts per task and failure type, plus ground-truth counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub failures: BTreeMap<TaskId, BTreeMap<FailureMode, u64>>,
    pub ground_truth: BTreeMap<TaskId, u64>,
}

impl DatasetStats {
    pub fn from_entries(entries: &[DatasetEntry]) -> Self {
        let mut s = Self::default();
        for e in entries {
            s.record(e);
        }
        s
    }

    pub fn record(&mut self, e: &DatasetEntry) {
        match e.failure_type {
            Some(mode) if e.is_failure => self.add_failures(e.task, mode, 1),
            _ => self.add_ground_truth(e.task, 1),
        }
    }

    pub fn add_failures(&mut self, task: TaskId, mode: FailureMode, n: u64) {
        *self.failures.entry(task).or_default().entry(mode).or_default() += n;
    }

    pub fn add_ground_truth(&mut self, task: TaskId, n: u64) {
        *self.ground_truth.entry(task).or_default() += n;
    }

    /// Parses `task,type,count` rows where `type` is a column label such as
    /// `Trans_x` or `GT`. Blank lines, `#` comments and a header are skipped.
    pub fn from_counts_csv(text: &str) -> Result<Self, String> {
        let mut s = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("task")) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let [task, kind, count] = cols[..] else {
                return Err(format!("line {}: expected task,type,count", i + 1));
            };
            let task: TaskId = task.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            let n: u64 = count.parse().map_err(|_| format!("line {}: bad count '{count}'", i + 1))?;
            if kind == "GT" {
                s.add_ground_truth(task, n);
            } else {
                let mode = FailureMode::from_label(kind)
                    .ok_or_else(|| format!("line {}: unknown failure type '{kind}'", i + 1))?;
                s.add_failures(task, mode, n);
            }
        }
        Ok(s)
    }

    pub fn count(&self, task: TaskId, mode: FailureMode) -> u64 {
        self.failures.get(&task).and_then(|m| m.get(&mode)).copied().unwrap_or(0)
    }

    pub fn type_total(&self, mode: FailureMode) -> u64 {
        self.failures.values().filter_map(|m| m.get(&mode)).sum()
    }

    pub fn task_failures(&self, task: TaskId) -> u64 {
        self.failures.get(&task).map_or(0, |m| m.values().sum())
    }

    pub fn total_failures(&self) -> u64 {
        self.failures.values().flat_map(|m| m.values()).sum()
    }

    pub fn total_ground_truth(&self) -> u64 {
        self.ground_truth.values().sum()
    }

    /// Failure entries per ground-truth entry; 0 without failures.
    pub fn ratio(&self) -> f64 {
        let (f, g) = (self.total_failures(), self.total_ground_truth());
        match (f, g) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            _ => f as f64 / g as f64,
        }
    }

    /// The ratio rounded to one decimal, e.g. `2.3:1`.
    pub fn ratio_label(&self) -> String {
        format!("{:.1}:1", self.ratio())
    }

    fn tasks(&self) -> Vec<TaskId> {
        let mut t: Vec<TaskId> = self.failures.keys().chain(self.ground_truth.keys()).copied().collect();
        t.sort();
        t.dedup();
        t
    }

    /// Plain-text distribution table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<14}", "Task");
        for m in FailureMode::ALL {
            let _ = write!(out, "{:>9}", m.label());
        }
        let _ = writeln!(out, "{:>9}{:>9}", "Total", "GT");
        for t in self.tasks() {
            let _ = write!(out, "{:<14}", t.as_str());
            for m in FailureMode::ALL {
                let _ = write!(out, "{:>9}", self.count(t, m));
            }
            let gt = self.ground_truth.get(&t).copied().unwrap_or(0);
            let _ = writeln!(out, "{:>9}{:>9}", self.task_failures(t), gt);
        }
        let _ = write!(out, "{:<14}", "Total");
        for m in FailureMode::ALL {
            let _ = write!(out, "{:>9}", self.type_total(m));
        }
        let _ = writeln!(out, "{:>9}{:>9}", self.total_failures(), self.total_ground_truth());
        let _ = writeln!(out, "ratio {:.2} ({})", self.ratio(), self.ratio_label());
        out
    }
}

impl Add for DatasetStats {
    type Output = DatasetStats;

    fn add(mut self, rhs: Self) -> Self {
        for (task, modes) in rhs.failures {
            for (mode, n) in modes {
                self.add_failures(task, mode, n);
            }
        }
        for (task, n) in rhs.ground_truth {
            self.add_ground_truth(task, n);
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stats() {
        let s = DatasetStats::default();
        assert_eq!(s.ratio(), 0.0);
        assert_eq!(s.ratio_label(), "0.0:1");
        assert!(s.render().contains("ratio 0.00"));
    }

    #[test]
    fn csv_counts() {
        let s =
            DatasetStats::from_counts_csv("task,type,count\npick_cube,Trans_x,3\npick_cube,GT,2\n").unwrap();
        assert_eq!(s.total_failures(), 3);
        assert_eq!(s.ratio(), 1.5);
        assert!(DatasetStats::from_counts_csv("pick_cube,Wobble,1").is_err());
        assert!(DatasetStats::from_counts_csv("pick_cube,GT").is_err());
    }
}
