//! CSV exports. Column order is fixed by the `*_HEADER` constants; floats are
//! written with 6 significant digits and missing values as empty fields.

use std::fs::File;
use std::path::Path;

use super::{PerExampleRecord, SliceReport, Summary};
use crate::error::{Error, Result};
use crate::labels::AgreementHistogram;
use crate::metrics::AbsDeltaSummary;
use crate::report::CausalStats;

pub const RECORDS_HEADER: [&str; 11] = [
    "scenario_id",
    "original_min_ade",
    "perturbed_min_ade",
    "original_min_fde",
    "perturbed_min_fde",
    "iou",
    "ts_min_ade",
    "av_speed",
    "removed_fraction_of_context",
    "min_removed_distance",
    "num_removed",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "metric",
    "n",
    "mean_original",
    "mean_perturbed",
    "abs_delta_mean",
    "abs_delta_std",
    "relative_pct",
    "fraction_improved",
    "mean",
];

pub const SLICES_HEADER: [&str; 10] = [
    "dimension",
    "bin_lo",
    "bin_hi",
    "count",
    "mean_original",
    "mean_perturbed",
    "abs_delta_mean",
    "abs_delta_std",
    "relative_pct",
    "fraction_improved",
];

/// Formats like C's `%.6g`: 6 significant digits, trailing zeros trimmed,
/// scientific notation outside [1e-4, 1e6).
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        format!("{}e{exp}", trim(mantissa))
    } else {
        trim(&format!("{v:.*}", (5 - exp) as usize))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_sig6).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_records_csv(path: impl AsRef<Path>, records: &[PerExampleRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(RECORDS_HEADER)?;
    for r in records {
        w.write_record([
            r.scenario_id.clone(),
            format_sig6(r.original_min_ade),
            format_sig6(r.perturbed_min_ade),
            format_sig6(r.original_min_fde),
            format_sig6(r.perturbed_min_fde),
            format_sig6(r.iou),
            format_sig6(r.ts_min_ade),
            format_sig6(r.av_speed),
            format_sig6(r.removed_fraction_of_context),
            opt(r.min_removed_distance),
            r.num_removed.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<PerExampleRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RECORDS_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected records header: {}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let num = |col: usize| -> Result<f64> {
            row[col].parse().map_err(|_| Error::Parse {
                line,
                message: format!("{}: not a number: `{}`", RECORDS_HEADER[col], &row[col]),
            })
        };
        out.push(PerExampleRecord {
            scenario_id: row[0].to_string(),
            original_min_ade: num(1)?,
            perturbed_min_ade: num(2)?,
            original_min_fde: num(3)?,
            perturbed_min_fde: num(4)?,
            iou: num(5)?,
            ts_min_ade: num(6)?,
            av_speed: num(7)?,
            removed_fraction_of_context: num(8)?,
            min_removed_distance: if row[9].is_empty() { None } else { Some(num(9)?) },
            num_removed: row[10].parse().map_err(|_| Error::Parse {
                line,
                message: format!("num_removed: not an integer: `{}`", &row[10]),
            })?,
        });
    }
    Ok(out)
}

fn delta_fields(s: &AbsDeltaSummary) -> [String; 6] {
    [
        format_sig6(s.mean_original),
        format_sig6(s.mean_perturbed),
        format_sig6(s.abs_delta_mean),
        format_sig6(s.abs_delta_std),
        opt(s.relative_pct),
        format_sig6(s.fraction_improved),
    ]
}

pub fn write_summary_csv(path: impl AsRef<Path>, summary: &Summary) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for (name, s) in [("min_ade", &summary.min_ade), ("min_fde", &summary.min_fde)] {
        let mut row = vec![name.to_string(), s.n.to_string()];
        row.extend(delta_fields(s));
        row.push(String::new());
        w.write_record(&row)?;
    }
    let n = summary.min_ade.n.to_string();
    for (name, mean) in [("iou", summary.mean_iou), ("ts_min_ade", summary.mean_ts_min_ade)] {
        let mut row = vec![name.to_string(), n.clone()];
        row.extend(std::iter::repeat_n(String::new(), 6));
        row.push(format_sig6(mean));
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn write_slices_csv(path: impl AsRef<Path>, report: &SliceReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(SLICES_HEADER)?;
    let dim = report.dimension.as_str().to_string();
    let rows = report
        .bins
        .iter()
        .map(|b| (format_sig6(b.lo), format_sig6(b.hi), b.count, b.summary.as_ref()))
        .chain(std::iter::once((
            "n/a".to_string(),
            "n/a".to_string(),
            report.na_count,
            report.na_summary.as_ref(),
        )));
    for (lo, hi, count, summary) in rows {
        let mut row = vec![dim.clone(), lo, hi, count.to_string()];
        match summary {
            Some(s) => row.extend(delta_fields(&s.min_ade)),
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn write_stats_csv(path: impl AsRef<Path>, stats: &CausalStats) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["statistic", "value"])?;
    w.write_record(["n_scenes".to_string(), stats.n_scenes.to_string()])?;
    w.write_record(["mean_causal_fraction".to_string(), format_sig6(stats.mean_causal_fraction)])?;
    w.write_record(["frac_scenes_below_30pct".to_string(), format_sig6(stats.frac_scenes_below_30pct)])?;
    w.write_record(["mean_causal_distance".to_string(), opt(stats.mean_causal_distance)])?;
    w.write_record(["mean_all_distance".to_string(), opt(stats.mean_all_distance)])?;
    for (t, v) in &stats.causal_likelihood {
        w.write_record([format!("causal_likelihood_{}", t.as_str()), format_sig6(*v)])?;
    }
    finish(w, path)
}

pub fn write_agreement_csv(path: impl AsRef<Path>, hist: &AgreementHistogram) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["labeler_count", "num_agents", "fraction"])?;
    let total = hist.total() as f64;
    for (count, n) in &hist.counts {
        w.write_record([count.to_string(), n.to_string(), format_sig6(*n as f64 / total)])?;
    }
    finish(w, path)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(0.376), "0.376");
        assert_eq!(format_sig6(37.5), "37.5");
        assert_eq!(format_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e6");
        assert_eq!(format_sig6(0.000012345678), "1.23457e-5");
        assert_eq!(format_sig6(0.00012345678), "0.000123457");
        assert_eq!(format_sig6(9.9999996), "10");
        assert_eq!(format_sig6(-2.5), "-2.5");
    }
}
