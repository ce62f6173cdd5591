//! Rating and label file formats.
//!
//! Two rating layouts are supported: `user::item::rating` lines and CSV with
//! a `user_id,item_id,rating` header. Labels live in a companion CSV
//! (`user_id,label`) whose label column holds -1/1 or strings mapped through
//! a caller-supplied table. Malformed or duplicate rows fail the parse with
//! their 1-based line numbers.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use crate::dataset::{Label, RatingsDataset, UserId};
use crate::error::{Error, Result};

/// Rating file layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatingsFormat {
    /// Lines of `user::item::rating`.
    DoubleColon,
    /// CSV with header `user_id,item_id,rating`.
    Csv,
}

impl std::str::FromStr for RatingsFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double-colon" | "dc" => Ok(RatingsFormat::DoubleColon),
            "csv" => Ok(RatingsFormat::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown ratings format {other:?} (expected \"csv\" or \"double-colon\")"
            ))),
        }
    }
}

/// Accumulates bad-row reports so one pass surfaces every offender.
struct RowErrors {
    lines: Vec<usize>,
    first_message: Option<String>,
}

impl RowErrors {
    fn new() -> Self {
        RowErrors { lines: Vec::new(), first_message: None }
    }

    fn push(&mut self, line: usize, message: String) {
        self.lines.push(line);
        self.first_message.get_or_insert(message);
    }

    fn finish(self) -> Result<()> {
        match self.first_message {
            None => Ok(()),
            Some(msg) => {
                let detail = if self.lines.len() == 1 {
                    msg
                } else {
                    format!("{msg} (first of {} bad rows)", self.lines.len())
                };
                Err(Error::Parse { lines: self.lines, message: detail })
            }
        }
    }
}

/// Parses a rating stream into a dataset.
///
/// `range` bounds accepted rating values (inclusive); `None` accepts any
/// finite real. All well-formed rows are ingested before the parse fails, so
/// the error lists every offending line, not just the first.
pub fn parse_ratings<R: Read>(
    source: R,
    format: RatingsFormat,
    range: Option<(f64, f64)>,
) -> Result<RatingsDataset> {
    let mut dataset = RatingsDataset::new(None, range);
    let mut errors = RowErrors::new();
    let reader = BufReader::new(source);
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.is_empty() {
            continue;
        }
        if format == RatingsFormat::Csv && idx == 0 {
            if trimmed != "user_id,item_id,rating" {
                return Err(Error::parse_line(
                    1,
                    format!("expected header \"user_id,item_id,rating\", got {trimmed:?}"),
                ));
            }
            continue;
        }
        match parse_row(trimmed, format) {
            Err(msg) => errors.push(lineno, msg),
            Ok((user, item, rating)) => {
                if let Err(e) = dataset.add_rating(user, item, rating) {
                    errors.push(lineno, e.to_string());
                }
            }
        }
    }
    errors.finish()?;
    Ok(dataset)
}

fn parse_row(line: &str, format: RatingsFormat) -> std::result::Result<(u64, u64, f64), String> {
    let fields: Vec<&str> = match format {
        RatingsFormat::DoubleColon => line.split("::").collect(),
        RatingsFormat::Csv => line.split(',').collect(),
    };
    if fields.len() != 3 {
        return Err(format!("expected 3 fields, got {}", fields.len()));
    }
    let user = fields[0].trim().parse::<u64>().map_err(|e| format!("bad user id: {e}"))?;
    let item = fields[1].trim().parse::<u64>().map_err(|e| format!("bad item id: {e}"))?;
    let rating = fields[2].trim().parse::<f64>().map_err(|e| format!("bad rating: {e}"))?;
    Ok((user, item, rating))
}

/// Attaches labels from a `user_id,label` CSV to an existing dataset.
///
/// Labels are -1/1, or strings resolved through `label_map`. Users appearing
/// only in the label file are created with empty rating maps; unmatched
/// label strings fail the parse.
pub fn parse_labels<R: Read>(
    dataset: &mut RatingsDataset,
    source: R,
    label_name: Option<String>,
    label_map: Option<&BTreeMap<String, Label>>,
) -> Result<()> {
    let mut errors = RowErrors::new();
    let reader = BufReader::new(source);
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 {
            if trimmed != "user_id,label" {
                return Err(Error::parse_line(
                    1,
                    format!("expected header \"user_id,label\", got {trimmed:?}"),
                ));
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 2 {
            errors.push(lineno, format!("expected 2 fields, got {}", fields.len()));
            continue;
        }
        let user: UserId = match fields[0].trim().parse() {
            Ok(u) => u,
            Err(e) => {
                errors.push(lineno, format!("bad user id: {e}"));
                continue;
            }
        };
        let raw = fields[1].trim();
        let label = match label_map.and_then(|m| m.get(raw)) {
            Some(&l) => Some(l),
            None => match raw.parse::<f64>().ok().and_then(|v| Label::from_value(v).ok()) {
                Some(l) => Some(l),
                None => {
                    errors.push(lineno, format!("unknown label {raw:?}"));
                    continue;
                }
            },
        };
        dataset.set_label(user, label);
    }
    errors.finish()?;
    if label_name.is_some() {
        dataset.set_label_name(label_name);
    }
    Ok(())
}

/// Writes the ratings back out; inverse of [`parse_ratings`].
///
/// Rows are emitted in (user, item) order, so output is canonical: parsing
/// then writing any file yields the same bytes as writing after a round-trip.
pub fn write_ratings<W: Write>(
    dataset: &RatingsDataset,
    mut sink: W,
    format: RatingsFormat,
) -> Result<()> {
    if format == RatingsFormat::Csv {
        writeln!(sink, "user_id,item_id,rating")?;
    }
    for user in dataset.users() {
        for (&item, &rating) in &user.ratings {
            match format {
                RatingsFormat::DoubleColon => {
                    writeln!(sink, "{}::{}::{}", user.user_id, item, rating)?
                }
                RatingsFormat::Csv => writeln!(sink, "{},{},{}", user.user_id, item, rating)?,
            }
        }
    }
    Ok(())
}

/// Writes the `user_id,label` companion file for the labeled users.
pub fn write_labels<W: Write>(dataset: &RatingsDataset, mut sink: W) -> Result<()> {
    writeln!(sink, "user_id,label")?;
    for user in dataset.users() {
        if let Some(label) = user.label {
            writeln!(sink, "{},{}", user.user_id, label.value() as i64)?;
        }
    }
    Ok(())
}
