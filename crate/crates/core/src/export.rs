//! Plain-text dumps for debugging and downstream plotting.

use std::io::{self, Write};

use nalgebra::DMatrix;

/// Full-precision float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{:.16e}", v)
    }
}

/// Writes a real matrix row-major, preceded by a `rows,cols` header line.
pub fn write_matrix_csv<W: Write>(out: &mut W, m: &DMatrix<f64>) -> io::Result<()> {
    writeln!(out, "{},{}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
