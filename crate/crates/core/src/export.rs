//! Plain CSV rendering shared by every exporter.

use std::fmt::Write;

/// Renders a header and rows of numbers; floats use the shortest
/// representation that round-trips, so identical inputs give identical bytes.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}
