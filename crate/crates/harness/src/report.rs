//! Group summaries and paired significance tests over a results table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use qipp_core::stats::{
    five_number, significance_band, wilcoxon_signed_rank, Alternative, FiveNumber, PairedSample,
};
use qipp_core::Error as CoreError;

use crate::error::{HarnessError, Result};
use crate::svg;
use crate::sweep::{ResultRow, ResultsTable, GROUP_PARAMS};

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub summary: FiveNumber,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairResult {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub band: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub group_by: String,
    pub alternative: Alternative,
    pub groups: Vec<GroupSummary>,
    pub pairs: Vec<PairResult>,
}

/// Parse `"a:b,c:d"` into label pairs.
pub fn parse_pairs(spec: &str) -> Result<Vec<(String, String)>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| match p.split_once(':') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.trim().to_string(), b.trim().to_string())),
            _ => Err(HarnessError::Validation(format!("pair '{p}' is not of the form a:b"))),
        })
        .collect()
}

fn same_label(given: &str, label: &str) -> bool {
    given == label
        || matches!((given.parse::<f64>(), label.parse::<f64>()), (Ok(x), Ok(y)) if x == y)
}

/// Key identifying a row within its group: every other parameter plus seed.
fn pair_key(row: &ResultRow, group_by: &str) -> String {
    let mut key: Vec<String> = GROUP_PARAMS
        .iter()
        .filter(|&&p| p != group_by)
        .map(|p| format!("{p}={}", row.param(p).expect("known column")))
        .collect();
    key.push(format!("seed={}", row.seed));
    key.join(" ")
}

/// Summarize RMSE per value of `group_by` and test each requested pair.
///
/// For a pair `a:b` the test is run on `rmse(a) - rmse(b)`, so the default
/// `Greater` alternative asks whether `b` has lower error than `a`.
pub fn report(
    table: &ResultsTable,
    group_by: &str,
    pairs: &[(String, String)],
    alternative: Alternative,
) -> Result<Report> {
    if !GROUP_PARAMS.contains(&group_by) {
        return Err(HarnessError::Validation(format!(
            "cannot group by '{group_by}', expected one of {}",
            GROUP_PARAMS.join(", ")
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for row in &table.rows {
        let label = row.param(group_by).expect("known column");
        if !groups.contains_key(&label) {
            order.push(label.clone());
        }
        groups.entry(label).or_default().push(row);
    }
    if groups.is_empty() {
        return Err(HarnessError::Validation("results table is empty".into()));
    }
    if order.iter().all(|l| l.parse::<f64>().is_ok()) {
        order.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }

    let summaries = order
        .iter()
        .map(|label| {
            let rmse: Vec<f64> = groups[label].iter().map(|r| r.rmse).collect();
            Ok(GroupSummary {
                label: label.clone(),
                n: rmse.len(),
                summary: five_number(&rmse)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let find = |given: &str| {
        order
            .iter()
            .find(|l| same_label(given, l))
            .cloned()
            .ok_or_else(|| {
                HarnessError::Validation(format!(
                    "no group '{given}' under {group_by}; groups are {}",
                    order.join(", ")
                ))
            })
    };
    let mut results = Vec::new();
    for (a, b) in pairs {
        let (a, b) = (find(a)?, find(b)?);
        let keyed = |label: &str| -> Result<BTreeMap<String, f64>> {
            let mut m = BTreeMap::new();
            for r in &groups[label] {
                if m.insert(pair_key(r, group_by), r.rmse).is_some() {
                    return Err(HarnessError::Pairing(format!(
                        "group '{label}' has repeated key {}",
                        pair_key(r, group_by)
                    )));
                }
            }
            Ok(m)
        };
        let (ka, kb) = (keyed(&a)?, keyed(&b)?);
        let orphans: Vec<&String> = ka
            .keys()
            .filter(|k| !kb.contains_key(*k))
            .chain(kb.keys().filter(|k| !ka.contains_key(*k)))
            .collect();
        if !orphans.is_empty() {
            let shown: Vec<&str> = orphans.iter().take(10).map(|s| s.as_str()).collect();
            return Err(HarnessError::Pairing(format!(
                "{a}:{b} has {} orphan keys: {}",
                orphans.len(),
                shown.join("; ")
            )));
        }
        let xs: Vec<f64> = ka.values().copied().collect();
        let ys: Vec<f64> = kb.values().copied().collect();
        let n = xs.len();
        let sample = PairedSample::new(xs, ys)?;
        let (statistic, p_value) = match wilcoxon_signed_rank(&sample, alternative) {
            Ok(w) => (w.statistic, w.p_value),
            Err(CoreError::DegenerateSample(_)) => (0.0, 1.0),
            Err(e) => return Err(e.into()),
        };
        results.push(PairResult {
            a,
            b,
            n,
            statistic,
            p_value,
            band: significance_band(p_value),
        });
    }
    Ok(Report {
        group_by: group_by.to_string(),
        alternative,
        groups: summaries,
        pairs: results,
    })
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,label,n,min,q1,median,q3,max,statistic,p_value,band\n");
        for g in &self.groups {
            let f = &g.summary;
            let _ = writeln!(
                s,
                "group,{},{},{},{},{},{},{},,,",
                g.label, g.n, f.min, f.q1, f.median, f.q3, f.max
            );
        }
        for p in &self.pairs {
            let _ = writeln!(
                s,
                "pair,{}:{},{},,,,,,{},{},{}",
                p.a, p.b, p.n, p.statistic, p.p_value, p.band
            );
        }
        s
    }

    pub fn to_svg(&self) -> String {
        let boxes: Vec<svg::BoxStats> = self
            .groups
            .iter()
            .map(|g| svg::BoxStats {
                label: g.label.clone(),
                summary: g.summary,
            })
            .collect();
        let bars: Vec<svg::Bar> = self
            .pairs
            .iter()
            .map(|p| svg::Bar {
                from: self.groups.iter().position(|g| g.label == p.a).expect("paired group exists"),
                to: self.groups.iter().position(|g| g.label == p.b).expect("paired group exists"),
                text: p.band.to_string(),
            })
            .collect();
        svg::boxplot(&boxes, &bars, &self.group_by, "RMSE")
    }

    /// Write `report.csv` and `boxplot.svg` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let csv = dir.join("report.csv");
        fs::write(&csv, self.to_csv()).map_err(|e| HarnessError::io(&csv, e))?;
        let svg = dir.join("boxplot.svg");
        fs::write(&svg, self.to_svg()).map_err(|e| HarnessError::io(&svg, e))
    }
}
