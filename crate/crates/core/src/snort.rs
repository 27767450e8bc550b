//! Snort 2.x rule parsing, serialization, and canonical feature text.
//!
//! Covers the community-rule syntax: a fixed 7-token header followed by a
//! parenthesized list of `keyword[:value];` options. Address and port
//! expressions (`$HOME_NET`, `[80,443]`, `!$EXTERNAL_NET`, ...) are kept as
//! opaque strings. Unknown option keywords are accepted verbatim.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("missing parenthesized option body")]
    MissingBody,
    #[error("content after closing parenthesis: `{0}`")]
    TrailingContent(String),
    #[error("header has {0} tokens, expected 7")]
    HeaderArity(usize),
    #[error("unknown rule action `{0}`")]
    UnknownAction(String),
    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),
    #[error("bad direction token `{0}`, expected -> or <>")]
    BadDirection(String),
    #[error("unterminated quoted string in options")]
    UnterminatedQuote,
    #[error("empty option keyword")]
    EmptyKeyword,
    #[error("option keyword `{0}` contains whitespace or quotes")]
    BadKeyword(String),
    #[error("sid value `{0}` is not a non-negative integer")]
    BadSid(String),
    #[error("cannot serialize a rule with no options")]
    NoOptions,
}

/// What the rule does when it matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleAction {
    Alert,
    Log,
    Pass,
    Drop,
    Reject,
    Sdrop,
}

impl RuleAction {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleAction::Alert => "alert",
            RuleAction::Log => "log",
            RuleAction::Pass => "pass",
            RuleAction::Drop => "drop",
            RuleAction::Reject => "reject",
            RuleAction::Sdrop => "sdrop",
        }
    }
}

impl FromStr for RuleAction {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alert" => Ok(RuleAction::Alert),
            "log" => Ok(RuleAction::Log),
            "pass" => Ok(RuleAction::Pass),
            "drop" => Ok(RuleAction::Drop),
            "reject" => Ok(RuleAction::Reject),
            "sdrop" => Ok(RuleAction::Sdrop),
            _ => Err(RuleError::UnknownAction(s.to_string())),
        }
    }
}

impl fmt::Display for RuleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Tcp,
    Udp,
    Icmp,
    Ip,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
            Protocol::Icmp => "icmp",
            Protocol::Ip => "ip",
        }
    }
}

impl FromStr for Protocol {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tcp" => Ok(Protocol::Tcp),
            "udp" => Ok(Protocol::Udp),
            "icmp" => Ok(Protocol::Icmp),
            "ip" => Ok(Protocol::Ip),
            _ => Err(RuleError::UnknownProtocol(s.to_string())),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `->`
    Unidirectional,
    /// `<>`
    Bidirectional,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Unidirectional => "->",
            Direction::Bidirectional => "<>",
        }
    }
}

impl FromStr for Direction {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "->" => Ok(Direction::Unidirectional),
            "<>" => Ok(Direction::Bidirectional),
            _ => Err(RuleError::BadDirection(s.to_string())),
        }
    }
}

/// The fixed seven-field rule header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleHeader {
    pub action: RuleAction,
    pub protocol: Protocol,
    pub src_addr: String,
    pub src_port: String,
    pub direction: Direction,
    pub dst_addr: String,
    pub dst_port: String,
}

/// One `keyword[:value]` option. The value is kept raw, quotes and escapes
/// included, so serialization can reproduce it exactly. Flag options
/// (`nocase;`) have no value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleOption {
    pub keyword: String,
    pub value: Option<String>,
}

/// A parsed Snort rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnortRule {
    pub header: RuleHeader,
    /// Options in source order.
    pub options: Vec<RuleOption>,
    /// Integer value of the `sid` option, when present.
    pub sid: Option<u64>,
    /// Unescaped value of the `msg` option, when present.
    pub msg: Option<String>,
    /// The rule text as given.
    pub raw: String,
}

impl SnortRule {
    /// Equality on header, option sequence, sid, and msg — everything except
    /// the raw source text. This is the round-trip contract.
    pub fn semantically_equal(&self, other: &SnortRule) -> bool {
        self.header == other.header
            && self.options == other.options
            && self.sid == other.sid
            && self.msg == other.msg
    }
}

/// Parse one logical rule line.
pub fn parse_rule(text: &str) -> Result<SnortRule, RuleError> {
    let trimmed = text.trim();
    let open = trimmed.find('(').ok_or(RuleError::MissingBody)?;
    let close = trimmed.rfind(')').ok_or(RuleError::MissingBody)?;
    if close < open {
        return Err(RuleError::MissingBody);
    }
    let tail = trimmed[close + 1..].trim();
    if !tail.is_empty() {
        return Err(RuleError::TrailingContent(tail.to_string()));
    }

    let header = parse_header(&trimmed[..open])?;
    let options = split_options(&trimmed[open + 1..close])?;

    let mut sid = None;
    let mut msg = None;
    for opt in &options {
        match (opt.keyword.as_str(), &opt.value) {
            ("sid", Some(v)) if sid.is_none() => {
                sid = Some(
                    v.trim()
                        .parse::<u64>()
                        .map_err(|_| RuleError::BadSid(v.clone()))?,
                );
            }
            ("sid", None) => return Err(RuleError::BadSid(String::new())),
            ("msg", Some(v)) if msg.is_none() => msg = Some(unescape_value(v)),
            _ => {}
        }
    }

    Ok(SnortRule {
        header,
        options,
        sid,
        msg,
        raw: text.to_string(),
    })
}

fn parse_header(text: &str) -> Result<RuleHeader, RuleError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != 7 {
        return Err(RuleError::HeaderArity(tokens.len()));
    }
    Ok(RuleHeader {
        action: tokens[0].parse()?,
        protocol: tokens[1].parse()?,
        src_addr: tokens[2].to_string(),
        src_port: tokens[3].to_string(),
        direction: tokens[4].parse()?,
        dst_addr: tokens[5].to_string(),
        dst_port: tokens[6].to_string(),
    })
}

/// Split an option body on top-level `;`, respecting quoted strings and
/// backslash escapes inside them.
fn split_options(body: &str) -> Result<Vec<RuleOption>, RuleError> {
    let mut segments = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                in_quotes = !in_quotes;
                current.push(c);
            }
            '\\' if in_quotes => {
                current.push(c);
                match chars.next() {
                    Some(esc) => current.push(esc),
                    None => return Err(RuleError::UnterminatedQuote),
                }
            }
            ';' if !in_quotes => {
                segments.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    if in_quotes {
        return Err(RuleError::UnterminatedQuote);
    }
    segments.push(current);

    let mut options = Vec::new();
    for segment in segments {
        let segment = segment.trim();
        if segment.is_empty() {
            continue;
        }
        let (keyword, value) = match segment.split_once(':') {
            Some((k, v)) => (k.trim(), Some(v.trim().to_string())),
            None => (segment, None),
        };
        if keyword.is_empty() {
            return Err(RuleError::EmptyKeyword);
        }
        if keyword.chars().any(|c| c.is_whitespace() || c == '"') {
            return Err(RuleError::BadKeyword(keyword.to_string()));
        }
        options.push(RuleOption {
            keyword: keyword.to_string(),
            value,
        });
    }
    Ok(options)
}

/// Undo Snort string escaping: `\"`, `\;`, `\:`, and `\\` become the bare
/// character; other backslash sequences are kept as-is. Surrounding quotes
/// are stripped first.
fn unescape_value(raw: &str) -> String {
    let inner = strip_quotes(raw);
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some(next @ ('"' | ';' | ':' | '\\')) => out.push(next),
                Some(next) => {
                    out.push('\\');
                    out.push(next);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn strip_quotes(raw: &str) -> &str {
    let t = raw.trim();
    if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') {
        &t[1..t.len() - 1]
    } else {
        t
    }
}

/// A non-fatal problem found while parsing a rules file.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ParseDiagnostic {
    /// 1-based number of the first physical line of the logical line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parse a whole `.rules` file: skip blank lines and `#` comments, join
/// backslash-continued lines, and collect a diagnostic per malformed logical
/// line instead of aborting.
pub fn parse_ruleset(text: &str) -> (Vec<SnortRule>, Vec<ParseDiagnostic>) {
    let mut rules = Vec::new();
    let mut diagnostics = Vec::new();
    for (line_no, logical) in logical_lines(text) {
        let trimmed = logical.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_rule(trimmed) {
            Ok(rule) => rules.push(rule),
            Err(err) => diagnostics.push(ParseDiagnostic {
                line: line_no,
                message: err.to_string(),
            }),
        }
    }
    (rules, diagnostics)
}

/// Join backslash-continued physical lines into logical lines, tagging each
/// with the 1-based number of its first physical line.
fn logical_lines(text: &str) -> Vec<(usize, String)> {
    let mut out: Vec<(usize, String)> = Vec::new();
    let mut pending: Option<(usize, String)> = None;
    for (idx, line) in text.lines().enumerate() {
        let continued = line.trim_end().ends_with('\\');
        let content = if continued {
            let t = line.trim_end();
            &t[..t.len() - 1]
        } else {
            line
        };
        match pending.take() {
            Some((start, mut acc)) => {
                acc.push_str(content);
                if continued {
                    pending = Some((start, acc));
                } else {
                    out.push((start, acc));
                }
            }
            None => {
                if continued {
                    pending = Some((idx + 1, content.to_string()));
                } else {
                    out.push((idx + 1, line.to_string()));
                }
            }
        }
    }
    if let Some(last) = pending {
        out.push(last);
    }
    out
}

/// The canonical text representation vectorized downstream: action,
/// protocol, direction token, then each option's keyword followed by its
/// value with surrounding quotes stripped, single-space separated.
pub fn feature_text(rule: &SnortRule) -> String {
    let mut parts: Vec<&str> = vec![
        rule.header.action.as_str(),
        rule.header.protocol.as_str(),
        rule.header.direction.as_str(),
    ];
    for opt in &rule.options {
        parts.push(&opt.keyword);
        if let Some(value) = &opt.value {
            parts.push(strip_quotes(value));
        }
    }
    parts.join(" ")
}

/// Render a rule back to source text. The output re-parses to a rule
/// `semantically_equal` to the input; whitespace is normalized.
pub fn serialize_rule(rule: &SnortRule) -> Result<String, RuleError> {
    if rule.options.is_empty() {
        return Err(RuleError::NoOptions);
    }
    let h = &rule.header;
    let mut out = format!(
        "{} {} {} {} {} {} {} (",
        h.action,
        h.protocol,
        h.src_addr,
        h.src_port,
        h.direction.as_str(),
        h.dst_addr,
        h.dst_port
    );
    for opt in &rule.options {
        match &opt.value {
            Some(v) => {
                out.push_str(&opt.keyword);
                out.push(':');
                out.push_str(v);
            }
            None => out.push_str(&opt.keyword),
        }
        out.push_str("; ");
    }
    out.pop();
    out.push(')');
    Ok(out)
}
