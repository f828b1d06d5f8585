use serde::{Deserialize, Serialize};

use super::{HopCategory, QaItem};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainRow {
    pub graph_type: String,
    pub one_two: usize,
    pub three_plus: usize,
    pub total: usize,
}

impl DomainRow {
    fn new(graph_type: impl Into<String>) -> Self {
        Self {
            graph_type: graph_type.into(),
            one_two: 0,
            three_plus: 0,
            total: 0,
        }
    }

    fn add(&mut self, category: HopCategory) {
        match category {
            HopCategory::OneTwo => self.one_two += 1,
            HopCategory::ThreePlus => self.three_plus += 1,
        }
        self.total += 1;
    }
}

/// Question counts per domain, rows in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainStats {
    pub rows: Vec<DomainRow>,
    pub total: DomainRow,
}

pub fn domain_stats<'a, T: QaItem + 'a>(items: impl IntoIterator<Item = &'a T>) -> DomainStats {
    let mut rows: Vec<DomainRow> = Vec::new();
    let mut total = DomainRow::new("Total");
    for it in items {
        let idx = match rows.iter().position(|r| r.graph_type == it.graph_type()) {
            Some(i) => i,
            None => {
                rows.push(DomainRow::new(it.graph_type()));
                rows.len() - 1
            }
        };
        rows[idx].add(it.hop_category());
        total.add(it.hop_category());
    }
    DomainStats { rows, total }
}

impl DomainStats {
    pub fn from_rows(rows: Vec<DomainRow>) -> Self {
        let mut total = DomainRow::new("Total");
        for r in &rows {
            total.one_two += r.one_two;
            total.three_plus += r.three_plus;
            total.total += r.total;
        }
        Self { rows, total }
    }

    /// LaTeX `tabular` block with the columns Graph Type, 1/2 hop, 3+ hop,
    /// Total and a closing Total row.
    pub fn render_latex(&self) -> String {
        fn line(r: &DomainRow) -> String {
            format!(
                "{:<12} & {:<4} & {:<4} & {} \\\\\n",
                r.graph_type, r.one_two, r.three_plus, r.total
            )
        }
        let mut out = String::from("\\begin{tabular}{lrrr}\n\\hline\n");
        out.push_str("\\textbf{Graph Type} & \\textbf{1/2 hop} & \\textbf{3+ hop} & \\textbf{Total} \\\\\n\\hline\n");
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out.push_str("\\hline\n");
        out.push_str(&line(&self.total));
        out.push_str("\\hline\n\\end{tabular}\n");
        out
    }

    /// Plain fixed-width text table.
    pub fn render_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.graph_type.chars().count())
            .chain([10])
            .max()
            .unwrap_or(10);
        let line = |name: &str, a: &str, b: &str, t: &str| format!("{name:<width$}  {a:>8}  {b:>8}  {t:>8}\n");
        let rule = format!("{}\n", "-".repeat(width + 30));
        let mut out = line("Graph Type", "1/2 hop", "3+ hop", "Total");
        out.push_str(&rule);
        for r in self.rows.iter() {
            out.push_str(&line(
                &r.graph_type,
                &r.one_two.to_string(),
                &r.three_plus.to_string(),
                &r.total.to_string(),
            ));
        }
        out.push_str(&rule);
        let t = &self.total;
        out.push_str(&line(
            "Total",
            &t.one_two.to_string(),
            &t.three_plus.to_string(),
            &t.total.to_string(),
        ));
        out
    }
}
