//! CSV and text artifacts. Floats are written with 17 significant digits.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use stabprobe_core::experiment::{Cell, Experiment, GridResult};
use stabprobe_core::{format_f64, ConstraintSet, Mat, SignalBlock};

fn opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// Grid label of a cell; shape and count are joined by `;` for 2-D grids.
pub fn param_label(cell: &Cell) -> String {
    match *cell {
        Cell::P(p) => format_f64(p),
        Cell::L(l) => l.to_string(),
        Cell::PL(p, l) | Cell::PK(p, l) => format!("{};{l}", format_f64(p)),
    }
}

/// `param,probe_mean,probe_std,api_mean,api_std,trials,T`
pub fn sweep_csv(r: &GridResult) -> String {
    to_csv(
        &[
            "param",
            "probe_mean",
            "probe_std",
            "api_mean",
            "api_std",
            "trials",
            "T",
        ],
        r.cells.iter().zip(&r.summaries).map(|(c, s)| {
            vec![
                param_label(c),
                format_f64(s.probe_mean),
                format_f64(s.probe_std),
                opt(s.api_mean),
                opt(s.api_std),
                s.trials.to_string(),
                r.t.to_string(),
            ]
        }),
    )
}

fn inner_name(exp: Experiment) -> &'static str {
    if exp == Experiment::TradeoffHos {
        "K"
    } else {
        "L"
    }
}

/// `p,L,probe_mean,probe_std` or `p,K,probe_mean,probe_std`
pub fn tradeoff_csv(r: &GridResult) -> String {
    to_csv(
        &["p", inner_name(r.experiment), "probe_mean", "probe_std"],
        r.cells.iter().zip(&r.summaries).map(|(c, s)| {
            vec![
                opt(c.p()),
                c.count().map(|k| k.to_string()).unwrap_or_default(),
                format_f64(s.probe_mean),
                format_f64(s.probe_std),
            ]
        }),
    )
}

/// `p,frontier`, empty where the target is never reached.
pub fn frontier_csv(r: &GridResult) -> String {
    to_csv(
        &["p", "frontier"],
        r.frontier
            .iter()
            .map(|(p, f)| vec![format_f64(*p), f.map(|k| k.to_string()).unwrap_or_default()]),
    )
}

/// `p,K,in_band` with 0/1 flags.
pub fn iso_band_csv(r: &GridResult) -> Option<String> {
    let band = r.in_band.as_ref()?;
    Some(to_csv(
        &["p", "K", "in_band"],
        r.cells.iter().zip(band).map(|(c, b)| {
            vec![
                opt(c.p()),
                c.count().map(|k| k.to_string()).unwrap_or_default(),
                u8::from(*b).to_string(),
            ]
        }),
    ))
}

/// `param,trial,probe,api,ms`
pub fn records_csv(r: &GridResult) -> String {
    to_csv(
        &["param", "trial", "probe", "api", "ms"],
        r.cells.iter().zip(&r.records).flat_map(|(c, recs)| {
            let label = param_label(c);
            recs.iter().map(move |x| {
                vec![
                    label.clone(),
                    x.trial.to_string(),
                    format_f64(x.probe),
                    opt(x.api),
                    format!("{:.3}", x.ms),
                ]
            })
        }),
    )
}

/// `t,ch1,...,chn`
pub fn signal_csv(x: &SignalBlock) -> String {
    let mut header = vec!["t".to_string()];
    header.extend((1..=x.channels()).map(|i| format!("ch{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    to_csv(
        &header,
        x.samples().enumerate().map(|(t, row)| {
            let mut out = vec![t.to_string()];
            out.extend(row.iter().map(|v| format_f64(*v)));
            out
        }),
    )
}

/// Reads a `t,ch1,...` signal file; the first column is ignored.
pub fn read_signal_csv(path: &Path) -> Result<SignalBlock, ReadError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let channels = rdr.headers()?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut len = 0;
    for rec in rdr.records() {
        let rec = rec?;
        for field in rec.iter().skip(1) {
            data.push(field.trim().parse::<f64>().map_err(|_| ReadError::Number {
                line: len + 2,
                field: field.to_string(),
            })?);
        }
        len += 1;
    }
    Ok(SignalBlock::from_samples(len, channels, data)?)
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: `{field}` is not a number")]
    Number { line: usize, field: String },
    #[error(transparent)]
    Shape(#[from] stabprobe_core::Error),
}

/// Plain matrix rows, no header.
pub fn matrix_csv(m: &Mat) -> String {
    let mut s = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format_f64(*v)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// One `{family}_{tag}.csv` file per constraint matrix.
pub fn constraint_files(set: &ConstraintSet) -> Vec<(String, String)> {
    (0..set.len())
        .map(|i| {
            (
                format!("{}.csv", set.file_stem(i)),
                matrix_csv(&set.matrices()[i]),
            )
        })
        .collect()
}

/// Writes `(name, contents)` pairs into `dir`, creating it if needed.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body)?;
            Ok(path)
        })
        .collect()
}

/// File set for an experiment result, named after the experiment.
pub fn experiment_files(r: &GridResult, records: bool) -> Vec<(String, String)> {
    let name = r.experiment.name();
    let mut files = Vec::new();
    if r.experiment.is_tradeoff() {
        files.push((format!("{name}.csv"), tradeoff_csv(r)));
        files.push((format!("{name}_frontier.csv"), frontier_csv(r)));
        if let Some(band) = iso_band_csv(r) {
            files.push((format!("{name}_iso_band.csv"), band));
        }
    } else {
        files.push((format!("{name}.csv"), sweep_csv(r)));
    }
    if records {
        files.push((format!("{name}_records.csv"), records_csv(r)));
    }
    files
}

#[cfg(test)]
mod tests {
    use super::*;
    use stabprobe_core::experiment::{run_sequential, ExperimentConfig, Mode};
    use stabprobe_core::stats::{ConstraintTag, Family};

    fn population(exp: Experiment) -> GridResult {
        let cfg = ExperimentConfig {
            trials: 2,
            mode: Mode::Population,
            ..ExperimentConfig::default()
        };
        run_sequential(exp, &cfg).unwrap()
    }

    #[test]
    fn sweep_layout() {
        let csv = sweep_csv(&population(Experiment::Sos));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "param,probe_mean,probe_std,api_mean,api_std,trials,T"
        );
        assert_eq!(lines.len(), 8);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[0], "1");
        assert!((first[1].parse::<f64>().unwrap() - 2f64.sqrt() * 0.3).abs() < 1e-12);
        assert_eq!(&first[3..], &["", "", "2", "100000"]);
    }

    #[test]
    fn tradeoff_layout() {
        let r = population(Experiment::TradeoffHos);
        let csv = tradeoff_csv(&r);
        assert!(csv.starts_with("p,K,probe_mean,probe_std\n"));
        assert_eq!(csv.lines().count(), 31);
        let band = iso_band_csv(&r).unwrap();
        assert!(band.starts_with("p,K,in_band\n"));
        assert!(band
            .lines()
            .skip(1)
            .all(|l| l.ends_with(",0") || l.ends_with(",1")));
        let frontier = frontier_csv(&r);
        // Gaussian shapes never reach the target
        assert!(
            frontier
                .lines()
                .any(|l| l == format!("{},", format_f64(2.0))),
            "{frontier}"
        );

        let names: Vec<String> = experiment_files(&r, true)
            .into_iter()
            .map(|f| f.0)
            .collect();
        assert_eq!(
            names,
            [
                "tradeoff-hos.csv",
                "tradeoff-hos_frontier.csv",
                "tradeoff-hos_iso_band.csv",
                "tradeoff-hos_records.csv"
            ]
        );
        assert!(tradeoff_csv(&population(Experiment::TradeoffSos)).starts_with("p,L,"));
    }

    #[test]
    fn records_layout() {
        let r = population(Experiment::TradeoffSos);
        let csv = records_csv(&r);
        assert!(csv.starts_with("param,trial,probe,api,ms\n"));
        assert_eq!(csv.lines().count(), 1 + 35 * 2);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with(&format!("{};1,0,", format_f64(0.8))));
    }

    #[test]
    fn signal_round_trip() {
        let x =
            SignalBlock::from_channels(&[vec![0.1, -2.5, 1e-300], vec![3.0, 0.0, -7.25]]).unwrap();
        let text = signal_csv(&x);
        assert!(text.starts_with("t,ch1,ch2\n0,"));
        let dir = tempfile::tempdir().unwrap();
        let path = write_all(dir.path(), &[("s.csv".into(), text)])
            .unwrap()
            .remove(0);
        assert_eq!(read_signal_csv(&path).unwrap(), x);
    }

    #[test]
    fn constraint_dump_names() {
        let set = ConstraintSet::new(
            Family::Sos,
            vec![
                (ConstraintTag::Lag(1), Mat::identity(2)),
                (ConstraintTag::Lag(2), Mat::identity(2)),
            ],
        )
        .unwrap();
        let files = constraint_files(&set);
        assert_eq!(files[0].0, "sos_tau1.csv");
        assert_eq!(files[1].1.lines().count(), 2);
    }
}
