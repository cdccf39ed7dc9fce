//! Gnuplot script for a sweep CSV.

use std::path::Path;

use udmdi::sweep::SweepTable;

fn column(table: &SweepTable, name: &str) -> Option<usize> {
    table
        .columns
        .iter()
        .position(|c| c.split(' ').next() == Some(name))
        .map(|i| i + 1)
}

/// Picks the swept column: whichever of block length, distance or V_m varies within a curve.
fn x_column(table: &SweepTable) -> &'static str {
    if table.has_block_length {
        return "block_length";
    }
    let first = match table.rows.first() {
        Some(r) => &r.curve,
        None => return "distance",
    };
    let mut rows = table.rows.iter().filter(|r| &r.curve == first);
    let d0 = rows.next().map(|r| r.distance);
    if rows.any(|r| Some(r.distance) != d0) {
        "distance"
    } else {
        "modulation_variance"
    }
}

fn quote(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn gnuplot_script(table: &SweepTable, csv: &Path) -> String {
    let x = x_column(table);
    let xi = column(table, x).unwrap_or(2);
    let mut labels: Vec<&str> = Vec::new();
    for r in &table.rows {
        if !labels.contains(&r.curve.as_str()) {
            labels.push(&r.curve);
        }
    }
    let mut series: Vec<(usize, &str)> = Vec::new();
    if let Some(i) = column(table, "key_rate_ud") {
        series.push((i, "UD"));
    }
    if let Some(i) = column(table, "key_rate_gm") {
        series.push((i, "GM"));
    }
    for (i, c) in table.columns.iter().enumerate() {
        if let Some(rest) = c.strip_prefix("key_rate_finite_") {
            series.push((i + 1, rest.split(' ').next().unwrap_or(rest)));
        } else if c.starts_with("key_rate_finite ") {
            series.push((i + 1, "finite"));
        }
    }

    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key outside right\n");
    s.push_str(&format!("set xlabel \"{x}\"\n"));
    s.push_str("set ylabel \"key rate (bits/use)\"\n");
    if x == "distance" {
        s.push_str("set logscale y\nset format y \"10^{%L}\"\n");
    }
    if x == "block_length" {
        s.push_str("set logscale x\n");
    }
    let file = quote(&csv.display().to_string());
    let mut plots = Vec::new();
    for label in &labels {
        let l = quote(label);
        for (yi, name) in &series {
            plots.push(format!(
                "\"{file}\" every ::1 using {xi}:(strcol(1) eq \"{l}\" && ${yi} > 0 ? ${yi} : 1/0) with lines title \"{l} {name}\""
            ));
        }
    }
    if x == "distance" {
        if let Some(pi) = column(table, "plob") {
            let l = quote(labels.first().copied().unwrap_or(""));
            plots.push(format!(
                "\"{file}\" every ::1 using {xi}:(strcol(1) eq \"{l}\" ? ${pi} : 1/0) with lines dt 2 title \"PLOB\""
            ));
        }
    }
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}
