//! Dataset ingestion, line preprocessing, and task construction.
//!
//! Input datasets use the line-level benchmark CSV layout:
//!
//! ```text
//! filename,file-label,code_line,line_number,line-label
//! src/Foo.java,True,"int x = 5;",12,False
//! ```
//!
//! One CSV holds one release. Booleans are `True`/`False` (any case).

mod preprocess;
mod tasks;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use log::{info, warn};

use crate::error::{Error, Result};

pub use preprocess::{is_numeric_literal, preprocess_line, NUM_TOKEN, REMOVED_CHARS, STR_TOKEN};
pub use tasks::{build_tasks, parse_catalog, Catalog, Mode, ProjectReleases, ReleaseId, TaskSplit};

/// Default per-line token cap.
pub const DEFAULT_MAX_LINE_TOKENS: usize = 75;

/// Column names of the dataset CSV, in canonical order.
pub const DATASET_COLUMNS: [&str; 5] =
    ["filename", "file-label", "code_line", "line_number", "line-label"];

/// One row of a line-level dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLineRecord {
    pub file_id: String,
    pub line_number: u32,
    pub content: String,
    pub line_label: bool,
    pub file_label: bool,
}

/// All rows of one file, ordered by line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFile {
    pub file_id: String,
    pub file_label: bool,
    pub records: Vec<RawLineRecord>,
}

/// A loaded release.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub files: Vec<RawFile>,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn line_count(&self) -> usize {
        self.files.iter().map(|f| f.records.len()).sum()
    }

    pub fn defective_files(&self) -> usize {
        self.files.iter().filter(|f| f.file_label).count()
    }

    pub fn defective_lines(&self) -> usize {
        self.files
            .iter()
            .flat_map(|f| &f.records)
            .filter(|r| r.line_label)
            .count()
    }
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

/// Loads a dataset CSV from disk.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_dataset(file)
}

/// Loads a dataset CSV from any reader.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 5];
    for (slot, name) in index.iter_mut().zip(DATASET_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
    }
    let [c_file, c_flabel, c_code, c_line, c_llabel] = index;

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<RawLineRecord>> = HashMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row_index = i + 1;
        let row = row?;
        let field = |c: usize| row.get(c).unwrap_or("");
        let bool_field = |c: usize, name: &str| {
            parse_bool(field(c)).ok_or_else(|| Error::Parse {
                row: row_index,
                message: format!("`{name}` is not a boolean: {:?}", field(c)),
            })
        };
        let line_number: u32 = field(c_line).trim().parse().map_err(|_| Error::Parse {
            row: row_index,
            message: format!("`line_number` is not an integer: {:?}", field(c_line)),
        })?;
        if line_number == 0 {
            return Err(Error::Parse {
                row: row_index,
                message: "`line_number` must be 1-based".into(),
            });
        }
        let record = RawLineRecord {
            file_id: field(c_file).to_string(),
            line_number,
            content: field(c_code).to_string(),
            line_label: bool_field(c_llabel, "line-label")?,
            file_label: bool_field(c_flabel, "file-label")?,
        };
        if !groups.contains_key(&record.file_id) {
            order.push(record.file_id.clone());
        }
        groups.entry(record.file_id.clone()).or_default().push(record);
    }

    let mut dataset = Dataset::default();
    for file_id in order {
        let mut records = groups.remove(&file_id).unwrap_or_default();
        records.sort_by_key(|r| r.line_number);
        if let Some(w) = records.windows(2).find(|w| w[0].line_number == w[1].line_number) {
            return Err(Error::Data(format!(
                "file `{file_id}` has duplicate line number {}",
                w[0].line_number
            )));
        }
        let file_label = records[0].file_label;
        if records.iter().any(|r| r.file_label != file_label) {
            dataset.warnings.push(format!(
                "file `{file_id}`: rows disagree on file-label; using the first row's value"
            ));
        }
        if !file_label && records.iter().any(|r| r.line_label) {
            dataset.warnings.push(format!(
                "file `{file_id}`: file-label is False but a line is labeled defective; keeping False"
            ));
        }
        dataset.files.push(RawFile {
            file_id,
            file_label,
            records,
        });
    }
    for w in &dataset.warnings {
        warn!("{w}");
    }
    info!(
        "loaded {} files, {} lines ({} defective files, {} defective lines)",
        dataset.files.len(),
        dataset.line_count(),
        dataset.defective_files(),
        dataset.defective_lines()
    );
    Ok(dataset)
}

fn bool_text(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

/// Writes a dataset back out in the canonical CSV layout.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(DATASET_COLUMNS)?;
    for file in &dataset.files {
        for r in &file.records {
            wtr.write_record([
                r.file_id.as_str(),
                bool_text(file.file_label),
                r.content.as_str(),
                &r.line_number.to_string(),
                bool_text(r.line_label),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One surviving (non-blank) line of a prepared file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedLine {
    pub line_number: u32,
    pub tokens: Vec<String>,
    pub label: bool,
}

/// A file ready for encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedFile {
    pub file_id: String,
    pub file_label: bool,
    pub lines: Vec<PreparedLine>,
}

impl PreparedFile {
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn line_labels(&self) -> Vec<bool> {
        self.lines.iter().map(|l| l.label).collect()
    }

    pub fn line_numbers(&self) -> Vec<u32> {
        self.lines.iter().map(|l| l.line_number).collect()
    }
}

/// Counts of what preparation dropped or altered.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntegrityReport {
    pub blank_lines_dropped: usize,
    pub defective_blank_lines: Vec<(String, u32)>,
    pub truncated_lines: usize,
    pub empty_files: Vec<String>,
}

impl IntegrityReport {
    pub fn merge(&mut self, other: IntegrityReport) {
        self.blank_lines_dropped += other.blank_lines_dropped;
        self.defective_blank_lines.extend(other.defective_blank_lines);
        self.truncated_lines += other.truncated_lines;
        self.empty_files.extend(other.empty_files);
    }
}

/// Tokenizes every line of one file, dropping blank lines and capping the
/// token count per line.
pub fn prepare_file(file: &RawFile, max_line_tokens: usize) -> (PreparedFile, IntegrityReport) {
    let mut report = IntegrityReport::default();
    let mut lines = Vec::with_capacity(file.records.len());
    for r in &file.records {
        let mut tokens = preprocess_line(&r.content);
        if tokens.is_empty() {
            report.blank_lines_dropped += 1;
            if r.line_label {
                warn!(
                    "file `{}` line {}: defective line is blank after preprocessing; dropped",
                    file.file_id, r.line_number
                );
                report
                    .defective_blank_lines
                    .push((file.file_id.clone(), r.line_number));
            }
            continue;
        }
        if tokens.len() > max_line_tokens {
            tokens.truncate(max_line_tokens);
            report.truncated_lines += 1;
        }
        lines.push(PreparedLine {
            line_number: r.line_number,
            tokens,
            label: r.line_label,
        });
    }
    if lines.is_empty() {
        report.empty_files.push(file.file_id.clone());
    }
    (
        PreparedFile {
            file_id: file.file_id.clone(),
            file_label: file.file_label,
            lines,
        },
        report,
    )
}

/// A prepared release together with the token cap used to build it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedCorpus {
    pub max_line_tokens: usize,
    pub files: Vec<PreparedFile>,
}

/// Prepares every file of a dataset.
pub fn prepare_dataset(dataset: &Dataset, max_line_tokens: usize) -> (PreparedCorpus, IntegrityReport) {
    let mut report = IntegrityReport::default();
    let files = dataset
        .files
        .iter()
        .map(|f| {
            let (p, r) = prepare_file(f, max_line_tokens);
            report.merge(r);
            p
        })
        .collect();
    (
        PreparedCorpus {
            max_line_tokens,
            files,
        },
        report,
    )
}

const PREPARED_MAGIC: &str = "#bafline-prepared v1";

impl PreparedCorpus {
    /// Canonical text form:
    ///
    /// ```text
    /// #bafline-prepared v1
    /// #max_line_tokens=75
    /// #file<TAB>file_id<TAB>file_label
    /// file_id<TAB>line_number<TAB>line_label<TAB>tok1<TAB>tok2...
    /// ```
    ///
    /// Labels are `0`/`1`. `extra_header` lines are emitted as `#` comments.
    pub fn to_text(&self, extra_header: &[String]) -> String {
        let mut out = String::new();
        out.push_str(PREPARED_MAGIC);
        out.push('\n');
        let _ = writeln!(out, "#max_line_tokens={}", self.max_line_tokens);
        for h in extra_header {
            let _ = writeln!(out, "## {h}");
        }
        for f in &self.files {
            let _ = writeln!(out, "#file\t{}\t{}", f.file_id, u8::from(f.file_label));
            for l in &f.lines {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    f.file_id,
                    l.line_number,
                    u8::from(l.label),
                    l.tokens.join("\t")
                );
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, PREPARED_MAGIC)) => {}
            _ => return Err(Error::Schema("prepared corpus: missing magic header".into())),
        }
        let parse_flag = |s: &str, row: usize| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::Parse {
                row,
                message: format!("label must be 0 or 1, got {s:?}"),
            }),
        };
        let mut corpus = PreparedCorpus {
            max_line_tokens: DEFAULT_MAX_LINE_TOKENS,
            files: Vec::new(),
        };
        for (i, line) in lines {
            let row = i + 1;
            if let Some(v) = line.strip_prefix("#max_line_tokens=") {
                corpus.max_line_tokens = v.parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("bad max_line_tokens {v:?}"),
                })?;
            } else if line.starts_with("## ") {
                continue;
            } else if let Some(rest) = line.strip_prefix("#file\t") {
                let (id, label) = rest.rsplit_once('\t').ok_or_else(|| Error::Parse {
                    row,
                    message: "file record needs id and label".into(),
                })?;
                corpus.files.push(PreparedFile {
                    file_id: id.to_string(),
                    file_label: parse_flag(label, row)?,
                    lines: Vec::new(),
                });
            } else {
                let mut parts = line.split('\t');
                let (Some(id), Some(num), Some(label)) = (parts.next(), parts.next(), parts.next())
                else {
                    return Err(Error::Parse {
                        row,
                        message: "line record needs id, line number, label".into(),
                    });
                };
                let file = corpus
                    .files
                    .last_mut()
                    .filter(|f| f.file_id == id)
                    .ok_or_else(|| Error::Parse {
                        row,
                        message: format!("line record for `{id}` outside its file block"),
                    })?;
                let line_number = num.parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("bad line number {num:?}"),
                })?;
                let tokens: Vec<String> = parts.map(str::to_string).collect();
                if tokens.is_empty() || tokens.iter().any(String::is_empty) {
                    return Err(Error::Parse {
                        row,
                        message: "line record has no tokens".into(),
                    });
                }
                file.lines.push(PreparedLine {
                    line_number,
                    tokens,
                    label: parse_flag(label, row)?,
                });
            }
        }
        Ok(corpus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "filename,file-label,code_line,line_number,line-label\n";

    fn load(body: &str) -> Result<Dataset> {
        read_dataset(format!("{HEADER}{body}").as_bytes())
    }

    #[test]
    fn four_rows_one_defective() {
        let ds = load(
            "A.java,True,int a;,1,False\n\
             A.java,True,a = 1;,2,True\n\
             A.java,True,\"foo(a, b);\",3,False\n\
             A.java,True,},4,false\n",
        )
        .unwrap();
        assert_eq!(ds.files.len(), 1);
        let labels: Vec<bool> = ds.files[0].records.iter().map(|r| r.line_label).collect();
        assert_eq!(labels, [false, true, false, false]);
        assert_eq!(ds.files[0].records[2].content, "foo(a, b);");
    }

    #[test]
    fn header_only_is_empty() {
        let ds = load("").unwrap();
        assert!(ds.files.is_empty());
        assert_eq!((ds.line_count(), ds.defective_lines()), (0, 0));
    }

    #[test]
    fn inconsistent_file_label_warns_and_keeps_dataset_value() {
        let ds = load(
            "B.java,False,x();,1,False\n\
             B.java,False,y();,2,True\n\
             B.java,False,z();,3,False\n",
        )
        .unwrap();
        assert!(!ds.files[0].file_label);
        assert_eq!(ds.warnings.len(), 1);
        assert!(ds.warnings[0].contains("B.java"));
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_dataset("filename,file-label,code_line,line-label\n".as_bytes()).unwrap_err();
        assert!(matches!(&err, Error::Schema(m) if m.contains("line_number")), "{err}");
    }

    #[test]
    fn bad_line_number_reports_row() {
        let err = load("A,True,x,1,False\nA,True,y,two,False\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");
    }

    #[test]
    fn rows_are_sorted_per_file() {
        let ds = load("A,False,b,2,False\nB,False,q,1,False\nA,False,a,1,False\n").unwrap();
        assert_eq!(ds.files[0].file_id, "A");
        assert_eq!(ds.files[0].records[0].content, "a");
        assert_eq!(ds.files[1].file_id, "B");
    }

    fn raw(lines: &[(&str, bool)]) -> RawFile {
        RawFile {
            file_id: "F".into(),
            file_label: lines.iter().any(|l| l.1),
            records: lines
                .iter()
                .enumerate()
                .map(|(i, (c, l))| RawLineRecord {
                    file_id: "F".into(),
                    line_number: i as u32 + 1,
                    content: c.to_string(),
                    line_label: *l,
                    file_label: lines.iter().any(|l| l.1),
                })
                .collect(),
        }
    }

    #[test]
    fn blank_lines_dropped_numbers_kept() {
        let f = raw(&[("a();", false), ("", false), ("b();", false), ("  ", false), ("c();", false)]);
        let (p, rep) = prepare_file(&f, 75);
        assert_eq!(p.line_numbers(), [1, 3, 5]);
        assert_eq!(rep.blank_lines_dropped, 2);
    }

    #[test]
    fn long_line_truncated() {
        let content = (0..80).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
        let f = raw(&[(&content, false)]);
        let (p, rep) = prepare_file(&f, 75);
        assert_eq!(p.lines[0].tokens.len(), 75);
        assert_eq!(p.lines[0].tokens[74], "t74");
        assert_eq!(rep.truncated_lines, 1);
    }

    #[test]
    fn defective_blank_line_is_lost_with_report() {
        let f = raw(&[("a();", false), ("{", true), ("b();", false)]);
        let (p, rep) = prepare_file(&f, 75);
        assert!(p.file_label);
        assert_eq!(p.line_labels(), [false, false]);
        assert_eq!(rep.defective_blank_lines, [("F".to_string(), 2)]);
    }

    #[test]
    fn all_blank_file_is_flagged() {
        let (p, rep) = prepare_file(&raw(&[("", false), (";", false)]), 75);
        assert!(p.is_empty());
        assert_eq!(rep.empty_files, ["F"]);
    }

    #[test]
    fn prepared_text_round_trip() {
        let ds = load("A,True,int x = 5;,1,True\nA,True,,2,False\nB,False,;,1,False\n").unwrap();
        let (corpus, _) = prepare_dataset(&ds, 75);
        let text = corpus.to_text(&["seed=1".into()]);
        let back = PreparedCorpus::from_text(&text).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(back.to_text(&["seed=1".into()]), text);
        assert_eq!(back.files[1].lines.len(), 0);
    }

    #[test]
    fn dataset_write_round_trip() {
        let ds = load("A,True,\"s = \"\"x, y\"\";\",1,True\nA,True,b,2,False\nB,False,c,7,False\n").unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back.files, ds.files);
    }
}
