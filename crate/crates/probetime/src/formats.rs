//! Flat-file formats: series and record CSVs, probe JSONL, vocabulary,
//! corpus and static embedding tables. Readers report the offending line and
//! field; writers are deterministic so reruns produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use probetime_core::probes::{Arc, ArcSentence, ClozeItem, MinimalPairItem, MultiChoiceItem, TokenLabelSentence};
use probetime_core::series::{EvalRecord, RunRecord, ScoreSeries, Step};
use probetime_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SERIES_HEADER: [&str; 4] = ["task_id", "run_tag", "step", "value"];
pub const RECORDS_HEADER: [&str; 6] = ["run_tag", "task_id", "step", "value", "n_items", "n_skipped"];

fn parse_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.into(),
        message: message.into(),
    }
}

/// 17 significant digits: enough to round-trip any f64.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn split(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

fn join(tokens: &[String]) -> String {
    tokens.join(" ")
}

fn csv_rows(text: &str, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| parse_err(line, "row", e.to_string()))?;
        if i == 0 {
            if rec.iter().ne(header.iter().copied()) {
                return Err(parse_err(1, "header", format!("expected `{}`", header.join(","))));
            }
            continue;
        }
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                "row",
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push((line, rec));
    }
    if rows.is_empty() && text.trim().is_empty() {
        return Err(parse_err(1, "header", "empty input"));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, line: usize, header: &[&str], i: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    rec[i]
        .parse()
        .map_err(|e: T::Err| parse_err(line, header[i], format!("`{}`: {e}", &rec[i])))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is UTF-8")
}

/// Series CSV with header `task_id,run_tag,step,value`; one row per point.
pub fn write_series(series: &[ScoreSeries]) -> String {
    let mut w = csv_writer();
    w.write_record(SERIES_HEADER).expect("in-memory write");
    for s in series {
        for &(step, value) in s.points() {
            w.write_record([s.task_id(), s.run_tag(), &step.to_string(), &format_value(value)])
                .expect("in-memory write");
        }
    }
    finish(w)
}

/// Rows of one (task, run) pair must be contiguous and sorted by step; the
/// series invariants are enforced on construction.
pub fn read_series(text: &str) -> Result<Vec<ScoreSeries>> {
    let h = &SERIES_HEADER;
    // (task, run), points, first line.
    type Group = ((String, String), Vec<(Step, f64)>, usize);
    let mut groups: Vec<Group> = Vec::new();
    for (line, rec) in csv_rows(text, h)? {
        let key = (rec[0].to_string(), rec[1].to_string());
        let point = (field(&rec, line, h, 2)?, field(&rec, line, h, 3)?);
        match groups.last_mut() {
            Some((k, points, _)) if *k == key => points.push(point),
            _ => {
                if groups.iter().any(|(k, _, _)| *k == key) {
                    return Err(parse_err(
                        line,
                        "task_id",
                        format!("rows of series `{}`/`{}` are not contiguous", key.0, key.1),
                    ));
                }
                groups.push((key, vec![point], line));
            }
        }
    }
    if groups.is_empty() {
        return Err(parse_err(2, "step", "series file has no points"));
    }
    groups
        .into_iter()
        .map(|((task, run), points, line)| {
            ScoreSeries::new(&task, &run, points).map_err(|e| parse_err(line, "step", e.to_string()))
        })
        .collect()
}

/// Evaluation records of every run, header `run_tag,task_id,step,value,n_items,n_skipped`.
pub fn write_records(records: &[RunRecord]) -> String {
    let mut w = csv_writer();
    w.write_record(RECORDS_HEADER).expect("in-memory write");
    for r in records {
        let e = &r.record;
        w.write_record([
            r.run_tag.as_str(),
            &e.task_id,
            &e.checkpoint_step.to_string(),
            &format_value(e.metric_value),
            &e.n_items.to_string(),
            &e.n_skipped.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn read_records(text: &str) -> Result<Vec<RunRecord>> {
    let h = &RECORDS_HEADER;
    csv_rows(text, h)?
        .into_iter()
        .map(|(line, rec)| {
            let record = EvalRecord::new(
                &rec[1],
                field(&rec, line, h, 2)?,
                field(&rec, line, h, 3)?,
                field(&rec, line, h, 4)?,
                field(&rec, line, h, 5)?,
            )
            .map_err(|e| parse_err(line, "value", e.to_string()))?;
            Ok(RunRecord {
                run_tag: rec[0].to_string(),
                record,
            })
        })
        .collect()
}

fn read_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<(usize, T)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| parse_err(i + 1, "json", e.to_string()))
        })
        .collect()
}

fn write_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("probe items serialize"));
        out.push('\n');
    }
    out
}

fn checked<T>(line: usize, field: &str, item: T, validate: impl Fn(&T) -> Result<()>) -> Result<T> {
    validate(&item).map_err(|e| parse_err(line, field, e.to_string()))?;
    Ok(item)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MinimalPairLine {
    id: String,
    good: String,
    bads: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClozeLine {
    id: String,
    text: String,
    answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    candidates: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiChoiceLine {
    id: String,
    text: String,
    choices: Vec<String>,
    answer_idx: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenLabelLine {
    tokens: Vec<String>,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArcLine {
    tokens: Vec<String>,
    arcs: Vec<(usize, usize, String)>,
}

pub fn read_minimal_pairs(text: &str) -> Result<Vec<MinimalPairItem>> {
    read_jsonl::<MinimalPairLine>(text)?
        .into_iter()
        .map(|(line, l)| {
            let item = MinimalPairItem {
                id: l.id,
                good: split(&l.good),
                bads: l.bads.iter().map(|b| split(b)).collect(),
            };
            checked(line, "bads", item, MinimalPairItem::validate)
        })
        .collect()
}

pub fn write_minimal_pairs(items: &[MinimalPairItem]) -> String {
    write_jsonl(items.iter().map(|i| MinimalPairLine {
        id: i.id.clone(),
        good: join(&i.good),
        bads: i.bads.iter().map(|b| join(b)).collect(),
    }))
}

pub fn read_cloze(text: &str) -> Result<Vec<ClozeItem>> {
    read_jsonl::<ClozeLine>(text)?
        .into_iter()
        .map(|(line, l)| {
            let item = ClozeItem {
                id: l.id,
                tokens: split(&l.text),
                answer: l.answer,
                candidates: l.candidates,
            };
            checked(line, "text", item, ClozeItem::validate)
        })
        .collect()
}

pub fn write_cloze(items: &[ClozeItem]) -> String {
    write_jsonl(items.iter().map(|i| ClozeLine {
        id: i.id.clone(),
        text: join(&i.tokens),
        answer: i.answer.clone(),
        candidates: i.candidates.clone(),
    }))
}

pub fn read_multichoice(text: &str) -> Result<Vec<MultiChoiceItem>> {
    read_jsonl::<MultiChoiceLine>(text)?
        .into_iter()
        .map(|(line, l)| {
            let item = MultiChoiceItem {
                id: l.id,
                tokens: split(&l.text),
                choices: l.choices,
                answer_index: l.answer_idx,
            };
            checked(line, "answer_idx", item, MultiChoiceItem::validate)
        })
        .collect()
}

pub fn write_multichoice(items: &[MultiChoiceItem]) -> String {
    write_jsonl(items.iter().map(|i| MultiChoiceLine {
        id: i.id.clone(),
        text: join(&i.tokens),
        choices: i.choices.clone(),
        answer_idx: i.answer_index,
    }))
}

pub fn read_token_labels(text: &str) -> Result<Vec<TokenLabelSentence>> {
    read_jsonl::<TokenLabelLine>(text)?
        .into_iter()
        .map(|(line, l)| {
            let item = TokenLabelSentence {
                tokens: l.tokens,
                labels: l.labels,
            };
            checked(line, "labels", item, TokenLabelSentence::validate)
        })
        .collect()
}

pub fn write_token_labels(items: &[TokenLabelSentence]) -> String {
    write_jsonl(items.iter().map(|i| TokenLabelLine {
        tokens: i.tokens.clone(),
        labels: i.labels.clone(),
    }))
}

pub fn read_arcs(text: &str) -> Result<Vec<ArcSentence>> {
    read_jsonl::<ArcLine>(text)?
        .into_iter()
        .map(|(line, l)| {
            let arcs = l
                .arcs
                .into_iter()
                .map(|(head, dep, label)| Arc { head, dep, label })
                .collect();
            checked(
                line,
                "arcs",
                ArcSentence { tokens: l.tokens, arcs },
                ArcSentence::validate,
            )
        })
        .collect()
}

pub fn write_arcs(items: &[ArcSentence]) -> String {
    write_jsonl(items.iter().map(|i| ArcLine {
        tokens: i.tokens.clone(),
        arcs: i.arcs.iter().map(|a| (a.head, a.dep, a.label.clone())).collect(),
    }))
}

/// One token per line; the line number (from 0) is the id.
pub fn write_vocab(tokens: &[String]) -> String {
    tokens.iter().fold(String::new(), |mut s, t| {
        s.push_str(t);
        s.push('\n');
        s
    })
}

pub fn read_vocab(text: &str) -> Result<Vec<String>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            if l.is_empty() || l.chars().any(char::is_whitespace) {
                Err(parse_err(
                    i + 1,
                    "token",
                    "tokens must be non-empty and contain no whitespace",
                ))
            } else {
                Ok(l.to_string())
            }
        })
        .collect()
}

/// One whitespace-tokenized sentence per line.
pub fn write_corpus(sentences: &[Vec<String>]) -> String {
    sentences.iter().fold(String::new(), |mut s, t| {
        s.push_str(&join(t));
        s.push('\n');
        s
    })
}

/// Blank lines are ignored.
pub fn read_corpus(text: &str) -> Vec<Vec<String>> {
    text.lines().map(split).filter(|s| !s.is_empty()).collect()
}

/// `word v1 v2 ... vd`, one word per line, every row the same width.
pub fn read_static_table(text: &str) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut table = BTreeMap::new();
    let mut width = None;
    for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line = i + 1;
        let mut parts = l.split_whitespace();
        let word = parts.next().expect("line is not blank");
        let vector = parts
            .enumerate()
            .map(|(j, v)| {
                v.parse::<f64>()
                    .map_err(|e| parse_err(line, &format!("v{}", j + 1), format!("`{v}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(parse_err(line, "v1", "word has no vector"));
        }
        if *width.get_or_insert(vector.len()) != vector.len() {
            return Err(parse_err(
                line,
                "vector",
                format!("width {} differs from {}", vector.len(), width.unwrap()),
            ));
        }
        if table.insert(word.to_string(), vector).is_some() {
            return Err(parse_err(line, "word", format!("`{word}` appears twice")));
        }
    }
    Ok(table)
}

pub fn write_static_table(table: &BTreeMap<String, Vec<f64>>) -> String {
    let mut out = String::new();
    for (word, v) in table {
        out.push_str(word);
        for x in v {
            write!(out, " {}", format_value(*x)).expect("string write");
        }
        out.push('\n');
    }
    out
}
