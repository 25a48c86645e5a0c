//! Structured run reports: a line-oriented text document with a versioned
//! schema, key/value pairs, verdicts, and tables.
//!
//! Everything between `begin payload` and `end payload` is a pure function
//! of the run configuration and seed; timestamps and wall-clock lines live
//! before the payload so byte-level determinism can be checked on the
//! payload alone. Each table carries a provenance line echoing the config
//! that produced its rows; columns that vary per row (epsilon, seed, ...)
//! appear as row cells.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub const REPORT_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "forgenet-report";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Warn,
    Failed,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Warn => "WARN",
            Verdict::Failed => "FAILED",
        }
    }

    fn parse(s: &str) -> Option<Verdict> {
        match s {
            "PASS" => Some(Verdict::Pass),
            "WARN" => Some(Verdict::Warn),
            "FAILED" => Some(Verdict::Failed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    /// Config echo shared by every row of this table.
    pub provenance: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn push_row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len(), "row arity mismatch");
        self.rows.push(cells);
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Section {
    pub name: String,
    pub kvs: Vec<(String, String)>,
    pub notes: Vec<String>,
    pub verdict: Option<(Verdict, String)>,
    pub tables: Vec<Table>,
}

impl Section {
    pub fn kv(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.kvs.push((key.to_string(), value.to_string()));
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    pub fn set_verdict(&mut self, verdict: Verdict, reason: impl Into<String>) -> &mut Self {
        self.verdict = Some((verdict, reason.into()));
        self
    }

    pub fn table(&mut self, name: &str, provenance: &str, columns: &[&str]) -> &mut Table {
        self.tables.push(Table {
            name: name.to_string(),
            provenance: provenance.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        });
        self.tables.last_mut().unwrap()
    }

    pub fn find_table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tool: String,
    pub command: String,
    pub kvs: Vec<(String, String)>,
    pub sections: Vec<Section>,
}

impl Report {
    pub fn new(command: &str) -> Report {
        Report {
            tool: format!("forgenet {}", crate::VERSION),
            command: command.to_string(),
            kvs: Vec::new(),
            sections: Vec::new(),
        }
    }

    pub fn kv(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.kvs.push((key.to_string(), value.to_string()));
        self
    }

    pub fn section(&mut self, name: &str) -> &mut Section {
        self.sections.push(Section {
            name: name.to_string(),
            ..Section::default()
        });
        self.sections.last_mut().unwrap()
    }

    pub fn find_section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// The deterministic region: everything between `begin payload` and
    /// `end payload`, inclusive.
    pub fn payload_string(&self) -> String {
        let mut out = String::new();
        out.push_str("begin payload\n");
        let _ = writeln!(out, "tool {}", self.tool);
        let _ = writeln!(out, "command {}", self.command);
        for (k, v) in &self.kvs {
            let _ = writeln!(out, "kv {k} {v}");
        }
        for s in &self.sections {
            let _ = writeln!(out, "begin section {}", s.name);
            for (k, v) in &s.kvs {
                let _ = writeln!(out, "kv {k} {v}");
            }
            for n in &s.notes {
                let _ = writeln!(out, "note {n}");
            }
            if let Some((verdict, reason)) = &s.verdict {
                let _ = writeln!(out, "verdict {} {reason}", verdict.label());
            }
            for t in &s.tables {
                let _ = writeln!(out, "begin table {}", t.name);
                let _ = writeln!(out, "provenance {}", t.provenance);
                let _ = writeln!(out, "columns {}", t.columns.join(" "));
                for row in &t.rows {
                    let _ = writeln!(out, "row {}", row.join(" "));
                }
                out.push_str("end table\n");
            }
            out.push_str("end section\n");
        }
        out.push_str("end payload\n");
        out
    }

    /// Full document: versioned header, timestamp lines, then the payload.
    pub fn render(&self, generated_unix: u64, elapsed_ms: u128) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {REPORT_FORMAT_VERSION}");
        let _ = writeln!(out, "generated-unix {generated_unix}");
        let _ = writeln!(out, "elapsed-ms {elapsed_ms}");
        out.push_str(&self.payload_string());
        out
    }

    pub fn write_file(&self, path: &Path, elapsed_ms: u128) -> Result<()> {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        std::fs::write(path, self.render(now, elapsed_ms))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Report> {
        let text = std::fs::read_to_string(path)?;
        Report::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Report> {
        let mut pos = 0usize;
        let lines: Vec<(usize, &str)> = text
            .lines()
            .map(|line| {
                let off = pos;
                pos += line.len() + 1;
                (off, line)
            })
            .collect();
        let mut i = 0usize;
        let err = |off: usize, msg: String| Error::Parse {
            offset: off,
            message: msg,
        };

        let (off, header) = *lines
            .first()
            .ok_or_else(|| err(0, "empty report".into()))?;
        let mut it = header.split_whitespace();
        if it.next() != Some(MAGIC) {
            return Err(err(off, format!("expected `{MAGIC} <version>` header")));
        }
        let version: u32 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(off, "missing report version".into()))?;
        if version != REPORT_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: REPORT_FORMAT_VERSION,
            });
        }
        i += 1;

        // Skip header lines until the payload begins.
        while i < lines.len() && lines[i].1.trim() != "begin payload" {
            i += 1;
        }
        if i == lines.len() {
            return Err(err(text.len(), "missing `begin payload`".into()));
        }
        i += 1;

        let mut report = Report {
            tool: String::new(),
            command: String::new(),
            kvs: Vec::new(),
            sections: Vec::new(),
        };
        let mut section: Option<Section> = None;
        let mut table: Option<Table> = None;
        let mut closed = false;

        while i < lines.len() {
            let (off, line) = lines[i];
            i += 1;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let (tag, rest) = match line.find(' ') {
                Some(p) => (&line[..p], &line[p + 1..]),
                None => (line, ""),
            };
            match (tag, rest) {
                ("end", "payload") => {
                    closed = true;
                    break;
                }
                ("tool", _) => report.tool = rest.to_string(),
                ("command", _) => report.command = rest.to_string(),
                ("kv", _) => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    let pair = (k.to_string(), v.to_string());
                    match (&mut section, &table) {
                        (Some(s), None) => s.kvs.push(pair),
                        (None, None) => report.kvs.push(pair),
                        _ => return Err(err(off, "kv inside a table".into())),
                    }
                }
                ("note", _) => {
                    let s = section
                        .as_mut()
                        .ok_or_else(|| err(off, "note outside a section".into()))?;
                    s.notes.push(rest.to_string());
                }
                ("verdict", _) => {
                    let (v, reason) = rest.split_once(' ').unwrap_or((rest, ""));
                    let verdict = Verdict::parse(v)
                        .ok_or_else(|| err(off, format!("unknown verdict `{v}`")))?;
                    let s = section
                        .as_mut()
                        .ok_or_else(|| err(off, "verdict outside a section".into()))?;
                    s.verdict = Some((verdict, reason.to_string()));
                }
                ("begin", _) => match rest.split_once(' ') {
                    Some(("section", name)) => {
                        if section.is_some() {
                            return Err(err(off, "nested section".into()));
                        }
                        section = Some(Section {
                            name: name.to_string(),
                            ..Section::default()
                        });
                    }
                    Some(("table", name)) => {
                        if section.is_none() || table.is_some() {
                            return Err(err(off, "table outside a section".into()));
                        }
                        table = Some(Table {
                            name: name.to_string(),
                            provenance: String::new(),
                            columns: Vec::new(),
                            rows: Vec::new(),
                        });
                    }
                    _ => return Err(err(off, format!("unknown begin `{rest}`"))),
                },
                ("provenance", _) => {
                    let t = table
                        .as_mut()
                        .ok_or_else(|| err(off, "provenance outside a table".into()))?;
                    t.provenance = rest.to_string();
                }
                ("columns", _) => {
                    let t = table
                        .as_mut()
                        .ok_or_else(|| err(off, "columns outside a table".into()))?;
                    t.columns = rest.split_whitespace().map(|c| c.to_string()).collect();
                }
                ("row", _) => {
                    let t = table
                        .as_mut()
                        .ok_or_else(|| err(off, "row outside a table".into()))?;
                    let cells: Vec<String> =
                        rest.split_whitespace().map(|c| c.to_string()).collect();
                    if cells.len() != t.columns.len() {
                        return Err(err(
                            off,
                            format!(
                                "row has {} cells for {} columns",
                                cells.len(),
                                t.columns.len()
                            ),
                        ));
                    }
                    t.rows.push(cells);
                }
                ("end", "table") => {
                    let t = table
                        .take()
                        .ok_or_else(|| err(off, "end table without a table".into()))?;
                    section
                        .as_mut()
                        .expect("table implies section")
                        .tables
                        .push(t);
                }
                ("end", "section") => {
                    if table.is_some() {
                        return Err(err(off, "section ended inside a table".into()));
                    }
                    let s = section
                        .take()
                        .ok_or_else(|| err(off, "end section without a section".into()))?;
                    report.sections.push(s);
                }
                _ => return Err(err(off, format!("unknown report line `{line}`"))),
            }
        }
        if !closed {
            return Err(err(text.len(), "report truncated: missing `end payload`".into()));
        }
        Ok(report)
    }
}

/// Shortest round-trip float formatting used in report tables.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
