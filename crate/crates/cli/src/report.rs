//! Report files: decay and residual CSVs, certificate text, run metadata.

use std::fs;
use std::path::Path;

use apw_core::invert::{DecayRow, ResidualReport};

use crate::error::CliError;

pub const DECAY_FILE: &str = "decay.csv";
pub const RESIDUAL_FILE: &str = "residuals.csv";
pub const CERTIFICATE_FILE: &str = "certificate.txt";
pub const METADATA_FILE: &str = "metadata.json";
pub const INVERSE_FILE: &str = "inverse.json";

/// Columns `label,l1_norm,cumulative`; labels are semicolon-joined and
/// numbers use shortest round-trip scientific notation.
pub fn decay_csv(rows: &[DecayRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "l1_norm", "cumulative"]).expect("in-memory write");
    for r in rows {
        w.write_record([r.label.to_string(), format!("{:e}", r.l1_norm), format!("{:e}", r.cumulative)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Columns `kind,p,value`; `p` is empty for algebraic residuals.
pub fn residual_csv(report: &ResidualReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "p", "value"]).expect("in-memory write");
    for (kind, p, v) in report.rows() {
        w.write_record([kind.to_string(), p.to_string(), format!("{v:e}")]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use apw_core::{FreqLabel, Lp};

    #[test]
    fn decay_columns() {
        let rows = vec![
            DecayRow { label: FreqLabel::new(vec![0, 1]), l1_norm: 0.25, cumulative: 0.25 },
            DecayRow { label: FreqLabel::new(vec![-1, 2]), l1_norm: 0.5, cumulative: 0.75 },
        ];
        assert_eq!(decay_csv(&rows), "label,l1_norm,cumulative\n0;1,2.5e-1,2.5e-1\n-1;2,5e-1,7.5e-1\n");
    }

    #[test]
    fn residual_columns() {
        let rep = ResidualReport {
            left: 1e-9,
            right: 2e-9,
            left_slack: 0.0,
            right_slack: 0.0,
            application: vec![(Lp::One, 0.5), (Lp::Two, 0.25), (Lp::Inf, 0.125)],
            algebraic_tol: 1e-6,
            application_tol: 1e-4,
        };
        assert_eq!(
            residual_csv(&rep),
            "kind,p,value\nalgebraic_left,,1e-9\nalgebraic_right,,2e-9\n\
             application,1,5e-1\napplication,2,2.5e-1\napplication,inf,1.25e-1\n"
        );
    }
}
