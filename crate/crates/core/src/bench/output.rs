//! CSV writers and the voltage snapshot reader. Floats use scientific notation
//! with 9 significant digits; every file is written to a temporary sibling and
//! renamed into place.

use std::io::Write;
use std::path::Path;

use crate::continuation::CpfTrace;
use crate::error::{Error, Result};
use crate::grid::{parse_phase_label, phase_label, PhaseIndex};
use crate::power_flow::{BranchCurrent, Mismatch, OperatingPoint};
use crate::vsi::VsiResult;

pub const TRACE_HEADER: [&str; 11] =
    ["step", "xi", "node", "phase", "V_mag_V", "V_ang_rad", "L_local", "L_global", "sv_min", "sv_mean", "sv_max"];
pub const SNAPSHOT_HEADER: [&str; 4] = ["node", "phase", "V_mag_V", "V_ang_rad"];
pub const POWER_FLOW_HEADER: [&str; 6] = ["node", "phase", "V_mag_V", "V_ang_rad", "dP_W", "dQ_var"];
pub const CURRENT_HEADER: [&str; 6] = ["from", "to", "phase", "I_mag_A", "I_ang_rad", "I_rated_A"];
pub const VSI_HEADER: [&str; 5] = ["node", "phase", "L_local", "L_global", "critical"];

pub fn fmt_sci(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sci).unwrap_or_default()
}

/// Writes through `fill` into a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_csv<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header)?;
        for row in rows {
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    })
}

pub fn write_trace(path: &Path, trace: &CpfTrace) -> Result<()> {
    let rows = trace.samples.iter().flat_map(|s| {
        s.point.entries().map(move |(idx, e, theta)| {
            let local = s.vsi.as_ref().and_then(|v| v.local.get(&idx).copied());
            let sv = s.singular_values;
            [
                s.step.to_string(),
                fmt_sci(s.xi()),
                idx.node.to_string(),
                phase_label(idx.phase),
                fmt_sci(e),
                fmt_sci(theta),
                opt(local),
                opt(s.vsi.as_ref().map(|v| v.global)),
                opt(sv.map(|v| v.min)),
                opt(sv.map(|v| v.mean)),
                opt(sv.map(|v| v.max)),
            ]
        })
    });
    write_csv(path, TRACE_HEADER, rows)
}

pub fn write_snapshot(path: &Path, op: &OperatingPoint) -> Result<()> {
    let rows = op
        .entries()
        .map(|(idx, e, theta)| [idx.node.to_string(), phase_label(idx.phase), fmt_sci(e), fmt_sci(theta)]);
    write_csv(path, SNAPSHOT_HEADER, rows)
}

pub fn write_power_flow(path: &Path, op: &OperatingPoint, mismatch: &Mismatch) -> Result<()> {
    let rows = op.entries().map(|(idx, e, theta)| {
        [
            idx.node.to_string(),
            phase_label(idx.phase),
            fmt_sci(e),
            fmt_sci(theta),
            opt(mismatch.dp.get(&idx).copied()),
            opt(mismatch.dq.get(&idx).copied()),
        ]
    });
    write_csv(path, POWER_FLOW_HEADER, rows)
}

/// One row per branch and phase: the current delivered into the `to` node
/// by the series element.
pub fn write_currents(path: &Path, currents: &[BranchCurrent], rated: &[Option<f64>]) -> Result<()> {
    let rows = currents.iter().enumerate().flat_map(|(k, c)| {
        let rated = rated.get(k).copied().flatten();
        (0..c.at_to.len()).map(move |p| {
            let i = -c.at_to[p];
            [
                c.from.to_string(),
                c.to.to_string(),
                phase_label(p),
                fmt_sci(i.norm()),
                fmt_sci(i.arg()),
                opt(rated),
            ]
        })
    });
    write_csv(path, CURRENT_HEADER, rows)
}

pub fn write_vsi_report(path: &Path, result: &VsiResult) -> Result<()> {
    let rows = result.local.iter().map(|(idx, l)| {
        [
            idx.node.to_string(),
            phase_label(idx.phase),
            fmt_sci(*l),
            fmt_sci(result.global),
            u8::from(*idx == result.critical).to_string(),
        ]
    });
    write_csv(path, VSI_HEADER, rows)
}

/// Reads a `node, phase, V_mag_V, V_ang_rad` file into an operating point at `xi`.
pub fn read_snapshot(path: &Path, xi: f64) -> Result<OperatingPoint> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { line: 1, column: 1, message: format!("missing column '{name}'") })
    };
    let cols = [column("node")?, column("phase")?, column("V_mag_V")?, column("V_ang_rad")?];
    let mut entries = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let field = |c: usize| record.get(cols[c]).unwrap_or("");
        let bad = |c: usize, what: &str| Error::Parse {
            line,
            column: cols[c] + 1,
            message: format!("invalid {what} '{}'", field(c)),
        };
        let node = field(0).parse().map_err(|_| bad(0, "node id"))?;
        let phase = parse_phase_label(field(1)).ok_or_else(|| bad(1, "phase"))?;
        let e: f64 = field(2).parse().map_err(|_| bad(2, "magnitude"))?;
        let theta: f64 = field(3).parse().map_err(|_| bad(3, "angle"))?;
        entries.push((PhaseIndex::new(node, phase), e, theta));
    }
    Ok(OperatingPoint::from_polar(entries, xi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sci(1.0), "1.00000000e0");
        assert_eq!(fmt_sci(-12345.6789012), "-1.23456789e4");
        assert_eq!(fmt_sci(0.000123456789), "1.23456789e-4");
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        let op = OperatingPoint::from_polar(
            [(PhaseIndex::new(3, 0), 14_000.123456, -0.1), (PhaseIndex::new(3, 2), 13_500.0, 2.0)],
            1.0,
        );
        write_snapshot(&path, &op).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("node,phase,V_mag_V,V_ang_rad\n3,A,"));
        let back = read_snapshot(&path, 1.0).unwrap();
        for (idx, e, theta) in op.entries() {
            assert!((back.magnitude[&idx] - e).abs() <= 1e-8 * e);
            assert!((back.angle[&idx] - theta).abs() <= 1e-8);
        }
    }
}
