//! Offset-tracking parser for model completions.
//!
//! `serde_json` would happily parse the object but throws away byte offsets,
//! which the weight-mask builder needs to label every token of the raw text.
//! So reports are parsed by hand with a small recursive-descent parser that
//! records the byte span of each comment string and score literal.
//!
//! Repair policy, in full: everything before the first `{` and after the last
//! `}` is ignored (and labeled `Structure`), which absorbs code fences and
//! lead-in prose. Inside those bounds the JSON must be exact; no deeper
//! repairs are attempted, the caller is expected to re-prompt instead.

use super::{
    Aspect, AspectEntry, AspectReport, ParseError, ParseWarning, ScoreBounds, Span, SpanLabel,
    SpanMap,
};
use std::collections::BTreeMap;
use std::ops::Range;

/// A successfully parsed completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub report: AspectReport,
    /// Exhaustive labeling of `report.raw_text()`.
    pub spans: SpanMap,
    pub warnings: Vec<ParseWarning>,
}

/// Parses a raw model completion into a report plus span labels.
///
/// On success the span map covers every byte of `raw` exactly once and
/// contains one comment span and one score span per aspect. Errors carry the
/// byte offset of the first offending location.
pub fn parse_report(raw: &str, bounds: &ScoreBounds) -> Result<Parsed, ParseError> {
    let open = raw.find('{').ok_or_else(|| ParseError::MalformedStructure {
        offset: 0,
        message: "no '{' found in completion".into(),
    })?;
    let close = raw
        .rfind('}')
        .filter(|&i| i > open)
        .ok_or_else(|| ParseError::MalformedStructure {
            offset: open,
            message: "no closing '}' after the first '{'".into(),
        })?;

    let mut parser = Parser {
        text: raw,
        pos: open,
        limit: close + 1,
    };
    let (entries_with_spans, warnings) = parser.parse_top(bounds)?;

    for aspect in Aspect::ALL {
        if !entries_with_spans.contains_key(&aspect) {
            return Err(ParseError::MissingAspect(aspect.key().to_string()));
        }
    }

    let mut labeled = Vec::with_capacity(entries_with_spans.len() * 2);
    let mut entries = BTreeMap::new();
    for (aspect, (entry, comment_span, score_span)) in entries_with_spans {
        labeled.push(Span {
            start: comment_span.start,
            end: comment_span.end,
            label: SpanLabel::Comment(aspect),
        });
        labeled.push(Span {
            start: score_span.start,
            end: score_span.end,
            label: SpanLabel::Score(aspect),
        });
        entries.insert(aspect, entry);
    }
    let spans = SpanMap::from_labeled(labeled, raw.len());
    let report = AspectReport::from_parsed(entries, raw.to_string());
    Ok(Parsed {
        report,
        spans,
        warnings,
    })
}

type EntrySpans = (AspectEntry, Range<usize>, Range<usize>);

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    /// One past the last `}`; nothing beyond this is parsed.
    limit: usize,
}

impl<'a> Parser<'a> {
    fn malformed(&self, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError::MalformedStructure {
            offset,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..self.limit].chars().next()
    }

    fn bump(&mut self) -> Result<char, ParseError> {
        let c = self
            .peek()
            .ok_or_else(|| self.malformed(self.limit, "unexpected end of report"))?;
        self.pos += c.len_utf8();
        Ok(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c == ' ' || c == '\t' || c == '\n' || c == '\r' {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, expected: char) -> Result<(), ParseError> {
        let at = self.pos;
        let c = self.bump()?;
        if c != expected {
            return Err(self.malformed(at, format!("expected '{expected}', found '{c}'")));
        }
        Ok(())
    }

    /// Top-level object: `{ "<aspect>": { "comment": ..., "score": ... }, ... }`.
    /// Consumes exactly up to `limit` (the last `}` of the text).
    fn parse_top(
        &mut self,
        bounds: &ScoreBounds,
    ) -> Result<(BTreeMap<Aspect, EntrySpans>, Vec<ParseWarning>), ParseError> {
        let mut entries: BTreeMap<Aspect, EntrySpans> = BTreeMap::new();
        let mut warnings = Vec::new();

        self.expect('{')?;
        self.skip_ws();
        if self.peek() == Some('}') {
            self.bump()?;
        } else {
            loop {
                self.skip_ws();
                let key_start = self.pos;
                let (key, _) = self.parse_string()?;
                let aspect = Aspect::from_key(&key).ok_or_else(|| {
                    self.malformed(key_start, format!("unknown aspect key '{key}'"))
                })?;
                self.skip_ws();
                self.expect(':')?;
                self.skip_ws();
                let entry = self.parse_entry(aspect, bounds)?;
                if entries.insert(aspect, entry).is_some() {
                    warnings.push(ParseWarning::DuplicateAspect {
                        aspect,
                        offset: key_start,
                    });
                }
                self.skip_ws();
                let at = self.pos;
                match self.bump()? {
                    ',' => continue,
                    '}' => break,
                    c => return Err(self.malformed(at, format!("expected ',' or '}}', found '{c}'"))),
                }
            }
        }
        self.skip_ws();
        if self.pos != self.limit {
            return Err(self.malformed(
                self.pos,
                "unexpected content between the report object and the final '}'",
            ));
        }
        Ok((entries, warnings))
    }

    /// One aspect object: `{ "comment": <string>, "score": <number> }`,
    /// members in either order.
    fn parse_entry(
        &mut self,
        aspect: Aspect,
        bounds: &ScoreBounds,
    ) -> Result<EntrySpans, ParseError> {
        self.expect('{')?;
        let mut comment: Option<(String, Range<usize>)> = None;
        let mut score: Option<(f64, Range<usize>)> = None;
        loop {
            self.skip_ws();
            let key_start = self.pos;
            let (key, _) = self.parse_string()?;
            self.skip_ws();
            self.expect(':')?;
            self.skip_ws();
            match key.as_str() {
                "comment" => {
                    if comment.is_some() {
                        return Err(self.malformed(
                            key_start,
                            format!("duplicate 'comment' for aspect '{aspect}'"),
                        ));
                    }
                    comment = Some(self.parse_string()?);
                }
                "score" => {
                    if score.is_some() {
                        return Err(self.malformed(
                            key_start,
                            format!("duplicate 'score' for aspect '{aspect}'"),
                        ));
                    }
                    score = Some(self.parse_number()?);
                }
                other => {
                    return Err(self.malformed(
                        key_start,
                        format!("unexpected key '{other}' in aspect '{aspect}'"),
                    ));
                }
            }
            self.skip_ws();
            let at = self.pos;
            match self.bump()? {
                ',' => continue,
                '}' => break,
                c => return Err(self.malformed(at, format!("expected ',' or '}}', found '{c}'"))),
            }
        }
        let close = self.pos;
        let (comment_text, comment_span) = comment.ok_or_else(|| {
            self.malformed(close, format!("missing 'comment' for aspect '{aspect}'"))
        })?;
        if comment_text.trim().is_empty() {
            return Err(self.malformed(
                comment_span.start,
                format!("empty comment for aspect '{aspect}'"),
            ));
        }
        let (value, score_span) = score.ok_or_else(|| {
            self.malformed(close, format!("missing 'score' for aspect '{aspect}'"))
        })?;
        if !bounds.contains(value) {
            return Err(ParseError::ScoreOutOfRange {
                aspect,
                value,
                min: bounds.min,
                max: bounds.max,
                offset: score_span.start,
            });
        }
        Ok((
            AspectEntry {
                comment: comment_text,
                score: value,
            },
            comment_span,
            score_span,
        ))
    }

    /// JSON string. Returns the unescaped value and the byte span of the
    /// *content* (between the quotes, escapes still encoded).
    fn parse_string(&mut self) -> Result<(String, Range<usize>), ParseError> {
        let at = self.pos;
        let c = self.bump()?;
        if c != '"' {
            return Err(self.malformed(at, format!("expected string, found '{c}'")));
        }
        let content_start = self.pos;
        let mut out = String::new();
        loop {
            let at = self.pos;
            let c = self.bump()?;
            match c {
                '"' => return Ok((out, content_start..at)),
                '\\' => out.push(self.parse_escape(at)?),
                c if (c as u32) < 0x20 => {
                    return Err(self.malformed(at, "unescaped control character in string"));
                }
                c => out.push(c),
            }
        }
    }

    /// The character following a backslash (already consumed).
    fn parse_escape(&mut self, escape_start: usize) -> Result<char, ParseError> {
        let c = self.bump()?;
        Ok(match c {
            '"' => '"',
            '\\' => '\\',
            '/' => '/',
            'b' => '\u{0008}',
            'f' => '\u{000C}',
            'n' => '\n',
            'r' => '\r',
            't' => '\t',
            'u' => {
                let high = self.parse_hex4(escape_start)?;
                match high {
                    0xD800..=0xDBFF => {
                        // Surrogate pair: a second \uXXXX escape must follow.
                        let at = self.pos;
                        if self.bump()? != '\\' || self.bump()? != 'u' {
                            return Err(
                                self.malformed(at, "unpaired surrogate in \\u escape")
                            );
                        }
                        let low = self.parse_hex4(at)?;
                        if !(0xDC00..=0xDFFF).contains(&low) {
                            return Err(
                                self.malformed(at, "invalid low surrogate in \\u escape")
                            );
                        }
                        let code = 0x10000 + ((high - 0xD800) << 10) + (low - 0xDC00);
                        char::from_u32(code).ok_or_else(|| {
                            self.malformed(escape_start, "invalid surrogate pair")
                        })?
                    }
                    0xDC00..=0xDFFF => {
                        return Err(
                            self.malformed(escape_start, "unpaired low surrogate in \\u escape")
                        );
                    }
                    code => char::from_u32(code).ok_or_else(|| {
                        self.malformed(escape_start, "invalid \\u escape")
                    })?,
                }
            }
            c => return Err(self.malformed(escape_start, format!("invalid escape '\\{c}'"))),
        })
    }

    fn parse_hex4(&mut self, escape_start: usize) -> Result<u32, ParseError> {
        let mut value = 0u32;
        for _ in 0..4 {
            let c = self.bump()?;
            let digit = c
                .to_digit(16)
                .ok_or_else(|| self.malformed(escape_start, "invalid hex digit in \\u escape"))?;
            value = value * 16 + digit;
        }
        Ok(value)
    }

    /// JSON number. Returns the value and the byte span of the literal.
    fn parse_number(&mut self) -> Result<(f64, Range<usize>), ParseError> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while matches!(self.peek(), Some('0'..='9')) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(self.malformed(start, "expected a number"));
        }
        if self.peek() == Some('.') {
            self.pos += 1;
            let frac_start = self.pos;
            while matches!(self.peek(), Some('0'..='9')) {
                self.pos += 1;
            }
            if self.pos == frac_start {
                return Err(self.malformed(start, "digits required after decimal point"));
            }
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            while matches!(self.peek(), Some('0'..='9')) {
                self.pos += 1;
            }
            if self.pos == exp_start {
                return Err(self.malformed(start, "digits required in exponent"));
            }
        }
        let literal = &self.text[start..self.pos];
        let value: f64 = literal
            .parse()
            .map_err(|_| self.malformed(start, format!("invalid number '{literal}'")))?;
        Ok((value, start..self.pos))
    }
}
