//! The comparison table: one row per topology, CSV and aligned-text forms.

use std::fmt::Write as _;

use serde::Serialize;

/// A table cell: a value or an explicit n/a.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Value(f64),
    Int(u64),
    Na,
}

impl Cell {
    pub fn opt_int(v: Option<u64>) -> Self {
        v.map_or(Cell::Na, Cell::Int)
    }

    fn render(&self) -> String {
        match self {
            Cell::Value(v) => format!("{v:.6e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Na => "n/a".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub topology: String,
    pub p: Cell,
    pub d_in_max: Cell,
    pub d_out_max: Cell,
    pub g_value: Cell,
    pub h_hat: Cell,
    pub zeta_bar_sq_hat: Cell,
    pub iterations_to_epsilon: Cell,
    pub final_gap: Cell,
}

pub const COLUMNS: [&str; 9] = [
    "topology",
    "p",
    "d_in_max",
    "d_out_max",
    "g_value",
    "h_hat",
    "zeta_bar_sq_hat",
    "iterations_to_epsilon",
    "final_gap",
];

#[derive(Debug, Clone, Default, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

impl ComparisonTable {
    fn cells(row: &TableRow) -> [String; 9] {
        [
            row.topology.clone(),
            row.p.render(),
            row.d_in_max.render(),
            row.d_out_max.render(),
            row.g_value.render(),
            row.h_hat.render(),
            row.zeta_bar_sq_hat.render(),
            row.iterations_to_epsilon.render(),
            row.final_gap.render(),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&Self::cells(row).join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
        let rendered: Vec<[String; 9]> = self.rows.iter().map(Self::cells).collect();
        for cells in &rendered {
            for (w, cell) in widths.iter_mut().zip(cells.iter()) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        for (w, name) in widths.iter().zip(COLUMNS.iter()) {
            let _ = write!(out, "{name:<w$}  ");
        }
        out.push('\n');
        for w in &widths {
            let _ = write!(out, "{}  ", "-".repeat(*w));
        }
        out.push('\n');
        for cells in &rendered {
            for (w, cell) in widths.iter().zip(cells.iter()) {
                let _ = write!(out, "{cell:<w$}  ");
            }
            out.push('\n');
        }
        out
    }
}
