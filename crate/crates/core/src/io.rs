//! CSV output and operator read-back.
//!
//! Floats are written in shortest round-trip form, so a read-back value is
//! bit-identical to the one written. Deterministic processes are written
//! once per node with path `*`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::market::BrownianGrid;
use crate::operator::{EquilibriumOperator, Provenance};
use crate::process::Process;

/// Marker for rows shared by every path.
pub const ALL_PATHS: &str = "*";

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Shortest round-trip text, with `-0` written as `0`.
fn number(v: f64) -> String {
    (v + 0.0).to_string()
}

fn rows<F>(process: &Process, grid: &BrownianGrid, max_paths: Option<usize>, mut emit: F) -> Result<()>
where
    F: FnMut(&str, usize, f64, f64) -> Result<()>,
{
    match process {
        Process::Deterministic(values) => {
            for (k, v) in values.iter().enumerate() {
                emit(ALL_PATHS, k, grid.time(k), *v)?;
            }
        }
        Process::Stochastic { n_paths, .. } => {
            let n = max_paths.map_or(*n_paths, |m| m.min(*n_paths));
            for p in 0..n {
                let label = p.to_string();
                for k in 0..process.n_nodes() {
                    emit(&label, k, grid.time(k), process.value(p, k))?;
                }
            }
        }
    }
    Ok(())
}

/// `path,step,time,value` for one process.
pub fn write_paths_csv(path: &Path, process: &Process, grid: &BrownianGrid, max_paths: Option<usize>) -> Result<()> {
    grid.check_process(process, "dump")?;
    let mut w = writer(path)?;
    w.write_record(["path", "step", "time", "value"])?;
    rows(process, grid, max_paths, |p, k, t, v| {
        w.write_record([p, &k.to_string(), &number(t), &number(v)])?;
        Ok(())
    })?;
    w.flush()?;
    Ok(())
}

/// `component,path,step,time,value` for several named processes.
pub fn write_components_csv(
    path: &Path,
    components: &[(&str, &Process)],
    grid: &BrownianGrid,
    max_paths: Option<usize>,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["component", "path", "step", "time", "value"])?;
    for (name, process) in components {
        grid.check_process(process, name)?;
        rows(process, grid, max_paths, |p, k, t, v| {
            w.write_record([name, p, &k.to_string(), &number(t), &number(v)])?;
            Ok(())
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Operator dump: components `theta` and `phi`.
pub fn write_operator_csv(
    path: &Path,
    operator: &EquilibriumOperator,
    grid: &BrownianGrid,
    max_paths: Option<usize>,
) -> Result<()> {
    write_components_csv(path, &[("theta", &operator.theta), ("phi", &operator.phi)], grid, max_paths)
}

/// Plain table with a header row.
pub fn write_table(path: &Path, header: &[&str], records: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

#[derive(Default)]
struct Collected {
    shared: BTreeMap<usize, f64>,
    paths: BTreeMap<usize, BTreeMap<usize, f64>>,
}

impl Collected {
    fn into_process(self, name: &str, grid: &BrownianGrid) -> Result<Process> {
        let nodes = grid.n_nodes();
        let bad = |msg: String| Error::GridMismatch(format!("component `{name}`: {msg}"));
        if !self.shared.is_empty() {
            if !self.paths.is_empty() {
                return Err(bad("mixes shared and per-path rows".into()));
            }
            if self.shared.len() != nodes || self.shared.keys().next_back() != Some(&(nodes - 1)) {
                return Err(bad(format!("{} nodes, grid has {nodes}", self.shared.len())));
            }
            return Ok(Process::Deterministic(self.shared.into_values().collect()));
        }
        let n = grid.n_paths();
        if self.paths.len() != n || self.paths.keys().next_back() != Some(&(n - 1)) {
            return Err(bad(format!("{} paths, grid has {n}", self.paths.len())));
        }
        let mut values = vec![0.0; n * nodes];
        for (p, row) in self.paths {
            if row.len() != nodes || row.keys().next_back() != Some(&(nodes - 1)) {
                return Err(bad(format!("path {p} has {} nodes, grid has {nodes}", row.len())));
            }
            for (k, v) in row {
                values[k * n + p] = v;
            }
        }
        Process::from_step_major(n, values)
    }
}

fn parse<T: std::str::FromStr>(field: &str, what: &str, line: u64) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse {what} `{field}`")))
}

/// Reads an operator dump written by [`write_operator_csv`]. Per-path
/// components must cover every path of `grid`.
pub fn read_operator_csv(path: &Path, grid: &BrownianGrid) -> Result<EquilibriumOperator> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["component", "path", "step", "time", "value"] {
        return Err(Error::Config(format!("{}: unexpected header", path.display())));
    }
    let mut theta = Collected::default();
    let mut phi = Collected::default();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let target = match &rec[0] {
            "theta" => &mut theta,
            "phi" => &mut phi,
            other => return Err(Error::Config(format!("line {line}: unknown component `{other}`"))),
        };
        let step: usize = parse(&rec[2], "step", line)?;
        let value: f64 = parse(&rec[4], "value", line)?;
        if step >= grid.n_nodes() {
            return Err(Error::GridMismatch(format!("line {line}: step {step} beyond grid")));
        }
        if &rec[1] == ALL_PATHS {
            target.shared.insert(step, value);
        } else {
            let p: usize = parse(&rec[1], "path", line)?;
            target.paths.entry(p).or_default().insert(step, value);
        }
    }
    Ok(EquilibriumOperator::new(
        theta.into_process("theta", grid)?,
        phi.into_process("phi", grid)?,
        Provenance::External,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::simulate_brownian;

    #[test]
    fn operator_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = simulate_brownian(3, 4, 1.0, 5).unwrap();
        let op = EquilibriumOperator::new(
            Process::Deterministic(vec![0.1, 1.0 / 3.0, -2.5e-17, 0.0, 7.0]),
            g.w_process().map(|w| w.exp() / 3.0),
            Provenance::MeanVariance,
        );
        let f = dir.path().join("op.csv");
        write_operator_csv(&f, &op, &g, None).unwrap();
        let back = read_operator_csv(&f, &g).unwrap();
        assert_eq!(back.theta, op.theta);
        assert_eq!(back.phi, op.phi);
        assert_eq!(back.provenance, Provenance::External);
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = simulate_brownian(3, 4, 1.0, 5).unwrap();
        let op = EquilibriumOperator::new(Process::zeros(5), g.w_process(), Provenance::External);
        let f = dir.path().join("op.csv");
        write_operator_csv(&f, &op, &g, Some(2)).unwrap();
        assert!(matches!(read_operator_csv(&f, &g), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn deterministic_rows_use_the_shared_marker() {
        let dir = tempfile::tempdir().unwrap();
        let g = simulate_brownian(3, 2, 1.0, 5).unwrap();
        let f = dir.path().join("p.csv");
        write_paths_csv(&f, &Process::constant(0.5, 3), &g, None).unwrap();
        let text = std::fs::read_to_string(&f).unwrap();
        assert_eq!(text, "path,step,time,value\n*,0,0,0.5\n*,1,0.5,0.5\n*,2,1,0.5\n");
    }
}
