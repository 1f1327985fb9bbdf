//! Result tables and their CSV / SVG renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::CliError;

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Num(a), Cell::Num(b)) => a.to_bits() == b.to_bits(),
            (Cell::Text(a), Cell::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Num(v as f64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            // Debug gives the shortest string that parses back to the same bits
            Cell::Num(v) => format!("{v:?}"),
            Cell::Text(s) if s.contains([',', '"', '\n', '\r']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
        }
    }

    fn parse(field: &str, quoted: bool) -> Cell {
        if !quoted {
            if let Ok(v) = field.parse::<f64>() {
                return Cell::Num(v);
            }
        }
        Cell::Text(field.to_string())
    }
}

/// How a table is drawn; the SVG only ever shows columns of the table.
#[derive(Debug, Clone, PartialEq)]
pub enum PlotSpec {
    /// One polyline per `y` column against `x`.
    Lines { x: String, ys: Vec<String> },
    /// One polyline per distinct value of `group`.
    Grouped { x: String, y: String, group: String },
    /// One horizontal segment per row from `lower` to `upper`, with end
    /// markers, stacked by the distinct values of `lane`.
    Intervals { lower: String, upper: String, lane: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub provenance: Vec<(String, String)>,
    pub plot: Option<PlotSpec>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            provenance: Vec::new(),
            plot: None,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "ragged row in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Vec<&Cell> {
        let j = self.column_index(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| &r[j]).collect()
    }

    pub fn provenance_value(&self, key: &str) -> Option<&str> {
        self.provenance.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.provenance {
            writeln!(out, "# {k}: {v}").unwrap();
        }
        writeln!(out, "{}", self.columns.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }

    /// Inverse of [`to_csv`](Self::to_csv) up to the table name and plot.
    pub fn parse_csv(name: &str, text: &str) -> Result<Self, CliError> {
        let mut provenance = Vec::new();
        let mut lines = text.lines();
        let header = loop {
            let line = lines.next().ok_or_else(|| CliError::Io("csv has no header row".into()))?;
            match line.strip_prefix("# ") {
                Some(p) => {
                    let (k, v) = p
                        .split_once(": ")
                        .ok_or_else(|| CliError::Io(format!("bad provenance line {line:?}")))?;
                    provenance.push((k.to_string(), v.to_string()));
                }
                None => break line,
            }
        };
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for line in lines {
            let row = split_fields(line)?;
            if row.len() != columns.len() {
                return Err(CliError::Io(format!("row has {} fields, header has {}", row.len(), columns.len())));
            }
            rows.push(row);
        }
        Ok(Self {
            name: name.to_string(),
            columns,
            rows,
            provenance,
            plot: None,
        })
    }

    pub fn to_svg(&self) -> String {
        let series = match &self.plot {
            Some(spec) => self.series(spec),
            None => Vec::new(),
        };
        render_svg(self, &series)
    }

    fn num(&self, row: &[Cell], col: &str) -> f64 {
        let j = self.column_index(col).unwrap_or_else(|| panic!("no column {col}"));
        row[j].as_f64().unwrap_or(f64::NAN)
    }

    fn text(&self, row: &[Cell], col: &str) -> String {
        let j = self.column_index(col).unwrap_or_else(|| panic!("no column {col}"));
        match &row[j] {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => format!("{v:?}"),
        }
    }

    fn series(&self, spec: &PlotSpec) -> Vec<Series> {
        match spec {
            PlotSpec::Lines { x, ys } => ys
                .iter()
                .map(|y| Series {
                    label: y.clone(),
                    points: self.rows.iter().map(|r| (self.num(r, x), self.num(r, y))).collect(),
                    markers: false,
                })
                .collect(),
            PlotSpec::Grouped { x, y, group } => {
                let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
                for r in &self.rows {
                    groups.entry(self.text(r, group)).or_default().push((self.num(r, x), self.num(r, y)));
                }
                groups
                    .into_iter()
                    .map(|(label, points)| Series {
                        label,
                        points,
                        markers: true,
                    })
                    .collect()
            }
            PlotSpec::Intervals { lower, upper, lane } => {
                let mut lanes: Vec<String> = Vec::new();
                for r in &self.rows {
                    let l = self.text(r, lane);
                    if !lanes.contains(&l) {
                        lanes.push(l);
                    }
                }
                self.rows
                    .iter()
                    .map(|r| {
                        let l = self.text(r, lane);
                        let y = lanes.iter().position(|x| *x == l).unwrap() as f64;
                        Series {
                            label: l,
                            points: vec![(self.num(r, lower), y), (self.num(r, upper), y)],
                            markers: true,
                        }
                    })
                    .collect()
            }
        }
    }
}

fn split_fields(line: &str) -> Result<Vec<Cell>, CliError> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        let mut field = String::new();
        let quoted = chars.peek() == Some(&'"');
        if quoted {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') if chars.peek() == Some(&'"') => {
                        chars.next();
                        field.push('"');
                    }
                    Some('"') => break,
                    Some(c) => field.push(c),
                    None => return Err(CliError::Io(format!("unterminated quote in {line:?}"))),
                }
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c == ',' {
                    break;
                }
                field.push(c);
                chars.next();
            }
        }
        out.push(Cell::parse(&field, quoted));
        match chars.next() {
            Some(',') => continue,
            None => return Ok(out),
            Some(c) => return Err(CliError::Io(format!("unexpected {c:?} after quoted field"))),
        }
    }
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    markers: bool,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.5 * (1.0 + lo.abs()) * 0.1;
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn render_svg(table: &ResultTable, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = range(pts().map(|p| p.0));
    let (y0, y1) = range(pts().map(|p| p.1));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    for (k, v) in &table.provenance {
        writeln!(out, "<!-- {}: {} -->", escape(k), escape(&v.replace("--", "- -"))).unwrap();
    }
    writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(&table.name)
    )
    .unwrap();
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    writeln!(out, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#).unwrap();
    writeln!(out, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#).unwrap();
    for (v, x) in [(x0, left), (x1, right)] {
        writeln!(
            out,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{v:.4}</text>"#,
            bottom + 16.0
        )
        .unwrap();
    }
    for (v, y) in [(y0, bottom), (y1, top)] {
        writeln!(
            out,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.4}</text>"#,
            left - 6.0
        )
        .unwrap();
    }
    if let Some(PlotSpec::Lines { x, .. } | PlotSpec::Grouped { x, .. }) = &table.plot {
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 20.0,
            escape(x)
        )
        .unwrap();
    }

    let mut legend: Vec<(&str, &str)> = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = match legend.iter().find(|(l, _)| *l == s.label) {
            Some((_, c)) => *c,
            None => {
                let c = PALETTE[legend.len() % PALETTE.len()];
                legend.push((&s.label, c));
                c
            }
        };
        let coords: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        writeln!(
            out,
            r#"<polyline id="series-{i}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        )
        .unwrap();
        if s.markers {
            for c in &coords {
                let (cx, cy) = c.split_once(',').unwrap();
                writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#).unwrap();
            }
        }
    }
    for (k, (label, color)) in legend.iter().enumerate() {
        let y = top + 14.0 * k as f64;
        writeln!(
            out,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            right - 120.0,
            escape(label)
        )
        .unwrap();
    }
    writeln!(out, "</svg>").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultTable {
        let mut t = ResultTable::new("demo", &["x", "label", "y"]);
        t.provenance.push(("config_sha256".into(), "ab".repeat(32)));
        t.push(vec![0.1.into(), "a, b".into(), (1.0 / 3.0).into()]);
        t.push(vec![(-0.0).into(), "trivial".into(), 1e-300.into()]);
        t.push(vec![f64::INFINITY.into(), "say \"hi\"".into(), 12.059_830_369_402_254.into()]);
        t
    }

    #[test]
    fn csv_round_trips_exactly() {
        let t = sample();
        let back = ResultTable::parse_csv("demo", &t.to_csv()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut t = ResultTable::new("empty", &["a", "b"]);
        t.provenance.push(("seed".into(), "3".into()));
        assert_eq!(t.to_csv(), "# seed: 3\na,b\n");
        assert_eq!(ResultTable::parse_csv("empty", &t.to_csv()).unwrap(), t);
    }

    #[test]
    fn grouped_plot_has_one_polyline_per_group() {
        let mut t = ResultTable::new("bif", &["alpha", "classification", "ms_norm"]);
        for (a, c, m) in [(-1.5, "trivial", 0.0), (-1.25, "trivial", 0.0), (-0.75, "positive-branch", 0.5)] {
            t.push(vec![a.into(), c.into(), m.into()]);
        }
        t.plot = Some(PlotSpec::Grouped {
            x: "alpha".into(),
            y: "ms_norm".into(),
            group: "classification".into(),
        });
        let svg = t.to_svg();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("href"));
    }
}
