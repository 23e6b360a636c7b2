//! Comma-separated outputs with a header row.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::commands::{Report, TraceLine};
use crate::CliError;

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn values_csv(values: &[f64]) -> String {
    let mut s = String::from("state,value\n");
    for (x, v) in values.iter().enumerate() {
        writeln!(s, "{x},{v}").unwrap();
    }
    s
}

pub fn trace_csv(algo: &str, rows: &[TraceLine], timing: bool) -> String {
    let mut s = String::from("step,algorithm,kind,subset,residual1,residual2");
    s.push_str(if timing { ",wall_clock\n" } else { "\n" });
    for r in rows {
        let subset = r.subset.map(|k| k.to_string()).unwrap_or_default();
        write!(s, "{},{algo},{},{subset},{},{}", r.step, r.kind, opt(r.residual1), opt(r.residual2)).unwrap();
        if timing {
            write!(s, ",{}", opt(r.wall_clock)).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn compare_csv(reports: &[Report]) -> String {
    let mut s = String::from("algorithm,status,iterations,residual\n");
    for r in reports {
        writeln!(s, "{},{},{},{:e}", r.algo, r.status, r.iterations, r.residual).unwrap();
    }
    s
}

/// Writes to `path`, or to standard output when there is none.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

/// `values.csv` -> `values.<tag>.csv`.
pub fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/values.csv"), "j2"), PathBuf::from("out/values.j2.csv"));
        assert_eq!(sibling(Path::new("game.json"), "cycle"), PathBuf::from("game.cycle.json"));
        assert_eq!(sibling(Path::new("values"), "j2"), PathBuf::from("values.j2"));
    }

    #[test]
    fn trace_columns() {
        let rows = [TraceLine {
            step: 1,
            kind: "min_improve".into(),
            subset: Some(0),
            residual1: Some(0.5),
            residual2: None,
            wall_clock: None,
        }];
        assert_eq!(
            trace_csv("async", &rows, false),
            "step,algorithm,kind,subset,residual1,residual2\n1,async,min_improve,0,5e-1,\n"
        );
        assert!(trace_csv("async", &rows, true).ends_with("5e-1,,\n"));
    }
}
