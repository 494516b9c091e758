use std::fmt::Write;

use vpsim_core::analytics::Table;

/// What a command printed and whether it hit errors along the way.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Output {
    pub stdout: String,
    pub failed: bool,
}

impl Output {
    pub fn section(&mut self, title: &str, table: &Table, machine: bool) {
        if !self.stdout.is_empty() {
            self.stdout.push('\n');
        }
        if machine {
            let _ = writeln!(self.stdout, "# {title}");
            let _ = writeln!(self.stdout, "{}", table.headers.join("\t"));
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|c| c.replace(['\t', '\n'], " ")).collect();
                let _ = writeln!(self.stdout, "{}", cells.join("\t"));
            }
        } else {
            let _ = writeln!(self.stdout, "{title}");
            self.stdout.push_str(&table.render());
        }
    }

    pub fn line(&mut self, text: &str) {
        self.stdout.push_str(text);
        self.stdout.push('\n');
    }
}

/// Decimal places for human tables; machine output keeps full precision.
pub fn num(x: f64, machine: bool) -> String {
    if machine {
        format!("{x}")
    } else {
        format!("{x:.3}")
    }
}
