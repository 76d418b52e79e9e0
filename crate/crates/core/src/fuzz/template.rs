//! Input templates: literal text interleaved with typed holes.
//!
//! Grammar:
//!
//! ```text
//! template := (literal | "{{{{" | "}}}}" | hole)*
//! hole     := "{{" kind ":" min ".." max ("=" seed)? "}}"     kind in ascii|bytes|int
//!           | "{{dict:" word ("|" word)* "}}"
//! ```
//!
//! `{{{{` and `}}}}` stand for literal `{{` and `}}`; an unmatched `}}` is an
//! error. For `ascii` and `bytes` holes the bounds are lengths, for `int`
//! holes they bound the decimal value. A `bytes` seed is written in hex.
//! Without an explicit seed, a hole's seed value is `a`/`A` repeated
//! `max(min, 1)` times (capped at max), the in-range value closest to 0, or
//! the first dictionary word.

use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("template syntax error at byte {offset}: {message}")]
pub struct TemplateSyntaxError {
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("hole {hole}: {message}")]
pub struct BoundsError {
    pub hole: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HoleKind {
    /// Printable ASCII (0x20..=0x7e), length in `min..=max`.
    Ascii,
    /// Arbitrary bytes, length in `min..=max`.
    Bytes,
    /// Decimal integer with value in `min..=max`.
    Int,
    Dict(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hole {
    pub kind: HoleKind,
    pub min: i64,
    pub max: i64,
    pub seed: Vec<u8>,
    /// Text between the braces, kept for rendering the template back.
    source: String,
}

impl Hole {
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Checks a concrete value against this hole's kind and bounds.
    pub fn check(&self, value: &[u8]) -> Result<(), String> {
        let len_ok = |len: usize| (self.min..=self.max).contains(&(len as i64));
        match &self.kind {
            HoleKind::Ascii => {
                if !len_ok(value.len()) {
                    return Err(format!("length {} outside {}..{}", value.len(), self.min, self.max));
                }
                if let Some(b) = value.iter().find(|b| !is_printable(**b)) {
                    return Err(format!("non-printable byte {b:#04x} in ascii hole"));
                }
                Ok(())
            }
            HoleKind::Bytes => {
                if len_ok(value.len()) {
                    Ok(())
                } else {
                    Err(format!("length {} outside {}..{}", value.len(), self.min, self.max))
                }
            }
            HoleKind::Int => {
                let v = parse_int(value).ok_or_else(|| format!("{:?} is not an integer", String::from_utf8_lossy(value)))?;
                if (self.min..=self.max).contains(&v) {
                    Ok(())
                } else {
                    Err(format!("value {v} outside {}..{}", self.min, self.max))
                }
            }
            HoleKind::Dict(words) => {
                if words.iter().any(|w| w.as_bytes() == value) {
                    Ok(())
                } else {
                    Err(format!("{:?} is not a dictionary word", String::from_utf8_lossy(value)))
                }
            }
        }
    }
}

pub(crate) fn is_printable(b: u8) -> bool {
    (0x20..=0x7e).contains(&b)
}

pub(crate) fn parse_int(value: &[u8]) -> Option<i64> {
    let s = std::str::from_utf8(value).ok()?;
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Token {
    Literal(Vec<u8>),
    Hole(Hole),
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Template {
    pub tokens: Vec<Token>,
}

/// One concrete value per hole, in template order.
pub type Instance = Vec<Vec<u8>>;

impl Template {
    pub fn holes(&self) -> impl Iterator<Item = &Hole> {
        self.tokens.iter().filter_map(|t| match t {
            Token::Hole(h) => Some(h),
            Token::Literal(_) => None,
        })
    }

    pub fn hole_count(&self) -> usize {
        self.holes().count()
    }

    /// Literal bytes with every hole removed.
    pub fn skeleton(&self) -> Vec<u8> {
        self.tokens
            .iter()
            .filter_map(|t| match t {
                Token::Literal(b) => Some(b.as_slice()),
                Token::Hole(_) => None,
            })
            .flatten()
            .copied()
            .collect()
    }

    pub fn seed_instance(&self) -> Instance {
        self.holes().map(|h| h.seed.clone()).collect()
    }

    pub fn check_instance(&self, instance: &[Vec<u8>]) -> Result<(), BoundsError> {
        let n = self.hole_count();
        if instance.len() != n {
            return Err(BoundsError {
                hole: instance.len().min(n),
                message: format!("expected {n} hole values, got {}", instance.len()),
            });
        }
        for (i, (hole, value)) in self.holes().zip(instance).enumerate() {
            hole.check(value).map_err(|message| BoundsError { hole: i, message })?;
        }
        Ok(())
    }

    /// Concatenates literals and hole values.
    pub fn render(&self, instance: &[Vec<u8>]) -> Vec<u8> {
        let mut values = instance.iter();
        let mut out = Vec::new();
        for t in &self.tokens {
            match t {
                Token::Literal(b) => out.extend_from_slice(b),
                Token::Hole(_) => out.extend_from_slice(values.next().map(Vec::as_slice).unwrap_or_default()),
            }
        }
        out
    }

    /// Template source text; parses back to an equal template.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            match t {
                Token::Literal(b) => {
                    let text = String::from_utf8_lossy(b);
                    let mut rest = text.as_ref();
                    while !rest.is_empty() {
                        if let Some(r) = rest.strip_prefix("{{") {
                            out.push_str("{{{{");
                            rest = r;
                        } else if let Some(r) = rest.strip_prefix("}}") {
                            out.push_str("}}}}");
                            rest = r;
                        } else {
                            let c = rest.chars().next().unwrap();
                            out.push(c);
                            rest = &rest[c.len_utf8()..];
                        }
                    }
                }
                Token::Hole(h) => {
                    out.push_str("{{");
                    out.push_str(&h.source);
                    out.push_str("}}");
                }
            }
        }
        out
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_source())
    }
}

fn push_literal(tokens: &mut Vec<Token>, bytes: &[u8]) {
    if let Some(Token::Literal(prev)) = tokens.last_mut() {
        prev.extend_from_slice(bytes);
    } else {
        tokens.push(Token::Literal(bytes.to_vec()));
    }
}

pub fn parse_template(s: &str) -> Result<Template, TemplateSyntaxError> {
    let bytes = s.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let rest = &s[i..];
        if rest.starts_with("{{{{") {
            push_literal(&mut tokens, b"{{");
            i += 4;
        } else if rest.starts_with("}}}}") {
            push_literal(&mut tokens, b"}}");
            i += 4;
        } else if rest.starts_with("{{") {
            let body_start = i + 2;
            let close = s[body_start..].find("}}").ok_or_else(|| TemplateSyntaxError {
                offset: i,
                message: "unterminated hole".into(),
            })?;
            let body = &s[body_start..body_start + close];
            tokens.push(Token::Hole(parse_hole(body, body_start)?));
            i = body_start + close + 2;
        } else if rest.starts_with("}}") {
            return Err(TemplateSyntaxError { offset: i, message: "unmatched '}}' (write '}}}}' for a literal)".into() });
        } else {
            let c = rest.chars().next().unwrap();
            push_literal(&mut tokens, &bytes[i..i + c.len_utf8()]);
            i += c.len_utf8();
        }
    }
    Ok(Template { tokens })
}

fn parse_hole(body: &str, offset: usize) -> Result<Hole, TemplateSyntaxError> {
    let err = |at: usize, message: String| TemplateSyntaxError { offset: offset + at, message };
    let colon = body.find(':').ok_or_else(|| err(0, format!("hole {body:?} has no kind")))?;
    let (kind_name, spec) = (&body[..colon], &body[colon + 1..]);
    let spec_at = colon + 1;
    if kind_name == "dict" {
        let words: Vec<String> = spec.split('|').map(str::to_string).collect();
        if spec.is_empty() {
            return Err(err(spec_at, "dictionary hole needs at least one word".into()));
        }
        let min = words.iter().map(|w| w.len()).min().unwrap_or(0) as i64;
        let max = words.iter().map(|w| w.len()).max().unwrap_or(0) as i64;
        return Ok(Hole {
            seed: words[0].clone().into_bytes(),
            kind: HoleKind::Dict(words),
            min,
            max,
            source: body.to_string(),
        });
    }
    let kind = match kind_name {
        "ascii" => HoleKind::Ascii,
        "bytes" => HoleKind::Bytes,
        "int" => HoleKind::Int,
        other => return Err(err(0, format!("unknown hole kind {other:?}"))),
    };
    let (range, seed_text) = match spec.find('=') {
        Some(eq) => (&spec[..eq], Some((&spec[eq + 1..], spec_at + eq + 1))),
        None => (spec, None),
    };
    let dots = range
        .find("..")
        .ok_or_else(|| err(spec_at, format!("expected min..max, found {range:?}")))?;
    let parse_bound = |text: &str, at: usize, what: &str| -> Result<i64, TemplateSyntaxError> {
        if text.is_empty() {
            return Err(err(at, format!("missing {what}")));
        }
        text.parse::<i64>().map_err(|_| err(at, format!("invalid {what} {text:?}")))
    };
    let min = parse_bound(&range[..dots], spec_at, "min")?;
    let max = parse_bound(&range[dots + 2..], spec_at + dots + 2, "max")?;
    if min > max {
        return Err(err(spec_at, format!("min {min} exceeds max {max}")));
    }
    if kind != HoleKind::Int && min < 0 {
        return Err(err(spec_at, "length bounds must be non-negative".into()));
    }
    let mut hole = Hole { kind, min, max, seed: Vec::new(), source: body.to_string() };
    hole.seed = match seed_text {
        Some((text, at)) => {
            let seed = if hole.kind == HoleKind::Bytes {
                hex::decode(text).map_err(|e| err(at, format!("bytes seed must be hex: {e}")))?
            } else {
                text.as_bytes().to_vec()
            };
            hole.check(&seed).map_err(|m| err(at, format!("seed out of bounds: {m}")))?;
            seed
        }
        None => default_seed(&hole),
    };
    Ok(hole)
}

fn default_seed(hole: &Hole) -> Vec<u8> {
    let len = (hole.min.max(1)).min(hole.max) as usize;
    match hole.kind {
        HoleKind::Ascii => vec![b'a'; len],
        HoleKind::Bytes => vec![b'A'; len],
        HoleKind::Int => 0i64.clamp(hole.min, hole.max).to_string().into_bytes(),
        HoleKind::Dict(ref words) => words[0].clone().into_bytes(),
    }
}
