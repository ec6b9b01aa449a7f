//! CSV emission of the accessor x owner heat maps and band-mass summaries.

use std::io::{self, Write};
use std::path::Path;

use skipgraph::MetricsLedger;

/// Fraction of all matrix mass within `band` of the diagonal
/// (|accessor - owner| <= band). Returns 1.0 for an empty matrix.
pub fn band_mass(matrix: &[u64], threads: usize, band: usize) -> f64 {
    assert_eq!(matrix.len(), threads * threads);
    let total: u64 = matrix.iter().sum();
    if total == 0 {
        return 1.0;
    }
    let mut near = 0u64;
    for a in 0..threads {
        for o in 0..threads {
            if a.abs_diff(o) <= band {
                near += matrix[a * threads + o];
            }
        }
    }
    near as f64 / total as f64
}

fn write_matrix<W: Write>(
    w: &mut W,
    name: &str,
    matrix: &[u64],
    threads: usize,
    total_ops: u64,
) -> io::Result<()> {
    writeln!(
        w,
        "# {name}: rows = accessor thread, columns = owner thread"
    )?;
    writeln!(w, "# values normalized per completed operation")?;
    let denom = total_ops.max(1) as f64;
    for a in 0..threads {
        let cells: Vec<String> = (0..threads)
            .map(|o| format!("{:.6}", matrix[a * threads + o] as f64 / denom))
            .collect();
        writeln!(w, "{name},{a},{}", cells.join(","))?;
    }
    Ok(())
}

/// Both heat maps in one deterministic CSV: reads first, then maintenance
/// CAS operations, each row prefixed with the matrix name and accessor id.
pub fn write_heatmap<W: Write>(w: &mut W, ledger: &MetricsLedger) -> io::Result<()> {
    write_matrix(
        w,
        "reads",
        &ledger.reads_matrix,
        ledger.threads,
        ledger.ops_completed,
    )?;
    write_matrix(
        w,
        "cas",
        &ledger.cas_matrix,
        ledger.threads,
        ledger.ops_completed,
    )?;
    Ok(())
}

pub fn emit_heatmap(ledger: &MetricsLedger, path: &Path) -> io::Result<()> {
    let mut buf = Vec::new();
    write_heatmap(&mut buf, ledger)?;
    std::fs::write(path, buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use skipgraph::ThreadMetrics;

    fn ledger() -> MetricsLedger {
        let mut a = ThreadMetrics::new(0, 2);
        let mut b = ThreadMetrics::new(1, 2);
        for _ in 0..6 {
            a.record_read(0);
        }
        a.record_read(1);
        b.record_read(1);
        b.record_maint_cas(0, 0, 0, true);
        a.ops_completed = 4;
        b.ops_completed = 4;
        MetricsLedger::merge(2, vec![a, b])
    }

    #[test]
    fn band_mass_diagonal_and_full() {
        let l = ledger();
        // reads: [[6,1],[0,1]] -> band 0 keeps 7/8
        assert!((band_mass(&l.reads_matrix, 2, 0) - 7.0 / 8.0).abs() < 1e-12);
        assert_eq!(band_mass(&l.reads_matrix, 2, 1), 1.0);
        assert_eq!(band_mass(&[0, 0, 0, 0], 2, 0), 1.0, "empty matrix");
    }

    #[test]
    fn csv_shape_and_normalization() {
        let mut out = Vec::new();
        write_heatmap(&mut out, &ledger()).unwrap();
        let text = String::from_utf8(out).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0], "reads,0,0.750000,0.125000");
        assert_eq!(rows[3], "cas,1,0.125000,0.000000");
    }

    #[test]
    fn emission_is_deterministic() {
        let l = ledger();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_heatmap(&mut a, &l).unwrap();
        write_heatmap(&mut b, &l).unwrap();
        assert_eq!(a, b);
    }
}
