//! CSV and gnuplot output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::experiment::ResultRow;
use crate::accel::OptSet;
use crate::Error;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

/// Writes `# `-prefixed metadata lines, then the header and rows.
pub fn write_csv<W: Write>(rows: &[ResultRow], meta: &[String], mut w: W) -> Result<(), Error> {
    for m in meta {
        writeln!(w, "# {m}").map_err(|source| Error::Io { path: "<csv>".into(), source })?;
    }
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(csv_header())?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|source| Error::Io { path: "<csv>".into(), source })?;
    Ok(())
}

/// Column names in field order.
pub fn csv_header() -> [&'static str; 17] {
    [
        "experiment",
        "memory_model",
        "opts",
        "n_accel",
        "load_factor",
        "scan_len",
        "distribution",
        "hit_ratio",
        "batch_size",
        "n_batches",
        "t_lookup_ns",
        "t_full_lookup_ns",
        "mlookups_per_s",
        "full_mlookups_per_s",
        "bank_conflicts",
        "key_bank_conflicts",
        "seed",
    ]
}

pub fn csv_string(rows: &[ResultRow], meta: &[String]) -> Result<String, Error> {
    let mut buf = Vec::new();
    write_csv(rows, meta, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), Error> {
    emit_csv_with_meta(rows, &[], path)
}

pub fn emit_csv_with_meta(rows: &[ResultRow], meta: &[String], path: &Path) -> Result<(), Error> {
    std::fs::write(path, csv_string(rows, meta)?).map_err(io_err(path))
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ResultRow>, Error> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn load_csv(path: &Path) -> Result<Vec<ResultRow>, Error> {
    read_csv(std::fs::File::open(path).map_err(io_err(path))?)
}

fn series_label(r: &ResultRow) -> (String, String) {
    match r.experiment.as_str() {
        "optimize" => {
            let rank = OptSet::parse(&r.opts).map_or(9, |o| o as u8);
            (format!("{rank}"), OptSet::parse(&r.opts).map_or(r.opts.clone(), |o| o.label().to_string()))
        }
        "scale" => (format!("{:04}", r.n_accel), format!("{} accelerator{}", r.n_accel, if r.n_accel == 1 { "" } else { "s" })),
        "sweep" => (format!("{}/{}/{:04}", r.memory_model, r.opts, r.n_accel), format!("{} {} x{}", r.memory_model, r.opts, r.n_accel)),
        _ => (r.memory_model.clone(), format!("{} memory", r.memory_model)),
    }
}

/// Self-contained gnuplot program: lookups/s against load factor, one
/// series per optimization set, accelerator count or memory model.
pub fn plot_script(rows: &[ResultRow]) -> Result<String, Error> {
    let first = rows.first().ok_or_else(|| Error::Validation("no rows to plot".into()))?;
    let full = first.experiment == "scale";
    let mut series: BTreeMap<String, (String, Vec<&ResultRow>)> = BTreeMap::new();
    for r in rows {
        let (key, label) = series_label(r);
        series.entry(key).or_insert_with(|| (label, Vec::new())).1.push(r);
    }
    let mut s = String::new();
    let metric = if full { "Full lookup" } else { "Lookup" };
    writeln!(s, "set terminal pngcairo size 900,600").unwrap();
    writeln!(s, "set output '{}.png'", first.experiment).unwrap();
    writeln!(s, "set title '{}: {metric} throughput'", first.experiment).unwrap();
    writeln!(s, "set xlabel 'Load factor'").unwrap();
    writeln!(s, "set ylabel 'M lookups/s'").unwrap();
    writeln!(s, "set key outside right").unwrap();
    writeln!(s, "set grid").unwrap();
    let mut plots = Vec::new();
    for (i, (label, pts)) in series.values().enumerate() {
        writeln!(s, "$s{i} << EOD").unwrap();
        for r in pts {
            let y = if full { r.full_mlookups_per_s } else { r.mlookups_per_s };
            writeln!(s, "{} {}", r.load_factor, y).unwrap();
        }
        writeln!(s, "EOD").unwrap();
        plots.push(format!("$s{i} using 1:2 with linespoints title '{label}'"));
    }
    writeln!(s, "plot {}", plots.join(", \\\n     ")).unwrap();
    Ok(s)
}

pub fn emit_plot_script(rows: &[ResultRow], path: &Path) -> Result<(), Error> {
    std::fs::write(path, plot_script(rows)?).map_err(io_err(path))
}

/// Number of series in a plot script.
pub fn plot_series(script: &str) -> usize {
    script.lines().filter(|l| l.ends_with(" << EOD")).count()
}
