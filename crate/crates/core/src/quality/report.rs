use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of every summary table.
pub const COLUMNS: [&str; 5] = ["PESQ", "STOI", "CSIG", "CBAK", "COVL"];

/// Source of the PESQ column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// External PESQ implementation.
    Plugin,
    /// Built-in frequency-weighted segSNR mapped to the PESQ range.
    Surrogate,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Plugin => "plugin",
            Provenance::Surrogate => "surrogate",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScores {
    /// PESQ, or the surrogate on the PESQ scale; see [`Provenance`].
    pub pesq: f64,
    pub stoi: f64,
    pub csig: f64,
    pub cbak: f64,
    pub covl: f64,
    pub segsnr: f64,
}

impl UtteranceScores {
    pub fn columns(&self) -> [f64; 5] {
        [self.pesq, self.stoi, self.csig, self.cbak, self.covl]
    }

    fn mean<'a>(all: impl ExactSizeIterator<Item = &'a UtteranceScores>) -> Self {
        let n = all.len() as f64;
        let mut m = UtteranceScores::default();
        for s in all {
            m.pesq += s.pesq / n;
            m.stoi += s.stoi / n;
            m.csig += s.csig / n;
            m.cbak += s.cbak / n;
            m.covl += s.covl / n;
            m.segsnr += s.segsnr / n;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub system: String,
    pub provenance: Provenance,
    pub per_utterance: BTreeMap<String, UtteranceScores>,
    pub aggregate: UtteranceScores,
    /// Utterances that could not be scored, with the reason.
    pub exclusions: Vec<String>,
}

impl MetricReport {
    pub fn new(
        system: impl Into<String>,
        provenance: Provenance,
        per_utterance: BTreeMap<String, UtteranceScores>,
        exclusions: Vec<String>,
    ) -> Result<Self> {
        if per_utterance.is_empty() {
            return Err(Error::Empty("metric report (no scored utterances)"));
        }
        let aggregate = UtteranceScores::mean(per_utterance.values());
        Ok(Self {
            system: system.into(),
            provenance,
            per_utterance,
            aggregate,
            exclusions,
        })
    }

    pub fn pesq_label(&self) -> String {
        format!("PESQ[{}]", self.provenance)
    }

    /// Per-utterance rows plus a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = format!("id,{},STOI,CSIG,CBAK,COVL,segSNR\n", self.pesq_label());
        let row = |s: &mut String, id: &str, u: &UtteranceScores| {
            let _ = writeln!(
                s,
                "{id},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                u.pesq, u.stoi, u.csig, u.cbak, u.covl, u.segsnr
            );
        };
        for (id, u) in &self.per_utterance {
            row(&mut s, id, u);
        }
        row(&mut s, "mean", &self.aggregate);
        s
    }

    /// Aligned per-utterance table with the aggregate and any exclusions.
    pub fn to_table(&self) -> String {
        let width = self
            .per_utterance
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(8);
        let mut s = format!("system: {}\n", self.system);
        let _ = writeln!(
            s,
            "{:<width$}  {:>15}  {:>6}  {:>6}  {:>6}  {:>6}  {:>7}",
            "id",
            self.pesq_label(),
            "STOI",
            "CSIG",
            "CBAK",
            "COVL",
            "segSNR"
        );
        let row = |s: &mut String, id: &str, u: &UtteranceScores| {
            let _ = writeln!(
                s,
                "{id:<width$}  {:>15.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>7.2}",
                u.pesq, u.stoi, u.csig, u.cbak, u.covl, u.segsnr
            );
        };
        for (id, u) in &self.per_utterance {
            row(&mut s, id, u);
        }
        row(&mut s, "mean", &self.aggregate);
        if !self.exclusions.is_empty() {
            s.push_str("\nexcluded:\n");
            for e in &self.exclusions {
                let _ = writeln!(s, "  {e}");
            }
        }
        s
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        write_text(path, &text)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            reason: e.to_string(),
        })
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Multi-system table of aggregate scores in [`COLUMNS`] order. The best
/// value of each column is marked with `*`; ties are all marked.
pub fn comparison_table(reports: &[MetricReport]) -> String {
    let pesq_head = match reports.first().map(|r| r.provenance) {
        Some(p) if reports.iter().all(|r| r.provenance == p) => format!("PESQ[{p}]"),
        _ => "PESQ[mixed]".to_string(),
    };
    let best: Vec<f64> = (0..5)
        .map(|c| {
            reports
                .iter()
                .map(|r| r.aggregate.columns()[c])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let name_w = reports.iter().map(|r| r.system.len()).max().unwrap_or(0).max(6);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<name_w$}  {:>16}  {:>8}  {:>8}  {:>8}  {:>8}",
        "system", pesq_head, COLUMNS[1], COLUMNS[2], COLUMNS[3], COLUMNS[4]
    );
    for r in reports {
        let _ = write!(s, "{:<name_w$}", r.system);
        for (c, v) in r.aggregate.columns().into_iter().enumerate() {
            let digits = if c == 1 { 3 } else { 2 };
            let mark = if v == best[c] { "*" } else { " " };
            let cell = format!("{v:.digits$}{mark}");
            let w = if c == 0 { 16 } else { 8 };
            let _ = write!(s, "  {cell:>w$}");
        }
        s.push('\n');
    }
    s.push_str("* best in column\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(name: &str, pesq: f64, stoi: f64) -> MetricReport {
        let mut m = BTreeMap::new();
        m.insert(
            "a".to_string(),
            UtteranceScores {
                pesq,
                stoi,
                csig: 3.0,
                cbak: 2.0,
                covl: 2.5,
                segsnr: 4.0,
            },
        );
        m.insert(
            "b".to_string(),
            UtteranceScores {
                pesq: pesq + 1.0,
                stoi,
                csig: 3.0,
                cbak: 2.0,
                covl: 2.5,
                segsnr: 6.0,
            },
        );
        MetricReport::new(name, Provenance::Surrogate, m, vec![]).unwrap()
    }

    #[test]
    fn aggregate_is_mean() {
        let r = report("x", 1.0, 0.9);
        assert_eq!(r.aggregate.pesq, 1.5);
        assert_eq!(r.aggregate.segsnr, 5.0);
        assert!(r.to_csv().lines().last().unwrap().starts_with("mean,1.5"));
    }

    #[test]
    fn ties_are_all_flagged() {
        let t = comparison_table(&[report("one", 1.0, 0.9), report("two", 2.0, 0.9)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].contains("PESQ[surrogate]"));
        assert!(lines[2].contains("2.50*"));
        assert!(lines[1].contains("1.50 "));
        assert!(lines[1].contains("0.900*") && lines[2].contains("0.900*"));
    }
}
