use std::fmt::Write as _;
use std::path::Path;

use msm::Result;

/// Rows of `task, split, metric, value`.
#[derive(Clone, Debug, Default)]
pub struct Report {
    rows: Vec<(String, String, String, f64)>,
}

impl Report {
    pub fn push(&mut self, task: &str, split: &str, metric: &str, value: f64) {
        self.rows.push((task.into(), split.into(), metric.into(), value));
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("task\tsplit\tmetric\tvalue\n");
        for (t, sp, m, v) in &self.rows {
            let _ = writeln!(s, "{t}\t{sp}\t{m}\t{v:.6}");
        }
        s
    }

    /// Prints the table and writes it to `out` when given.
    pub fn emit(&self, out: Option<&Path>) -> Result<()> {
        let text = self.to_tsv();
        print!("{text}");
        if let Some(p) = out {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        Ok(())
    }
}
