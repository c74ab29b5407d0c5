// SPDX-License-Identifier: Apache-2.0

//! TCL parsing for the similarity metric.
//!
//! Scripts are parsed into commands and words following TCL's quoting rules.
//! Brace groups in the script and expression positions of control commands
//! (`proc`, `if`, `while`, `for`, `foreach`, `catch`, `expr`) are parsed
//! recursively; other brace groups stay opaque. The flat token stream is
//! derived from the tree.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum TokenizeError {
    #[error("unterminated string starting on line {line}")]
    UnterminatedString { line: usize },
    #[error("unterminated brace starting on line {line}")]
    UnterminatedBrace { line: usize },
    #[error("unterminated command substitution starting on line {line}")]
    UnterminatedBracket { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    CommandWord,
    VariableRef,
    Number,
    StringLiteral,
    BraceGroup,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    /// 1-based source line.
    pub line: usize,
    /// Byte range in the source.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(Span),
    /// Variable substitution; `name` excludes any array index.
    Var { name: String, span: Span },
    /// Command substitution; spans cover the brackets.
    Cmd { script: Script, open: Span, close: Span },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expansion {
    Script(Script),
    Expr(Script),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Word {
    Bare { parts: Vec<Part>, span: Span },
    Quoted { parts: Vec<Part>, span: Span },
    Braced { span: Span, inner: Option<Expansion> },
}

impl Word {
    pub fn span(&self) -> Span {
        match self {
            Word::Bare { span, .. } | Word::Quoted { span, .. } | Word::Braced { span, .. } => *span,
        }
    }

    pub fn parts(&self) -> &[Part] {
        match self {
            Word::Bare { parts, .. } | Word::Quoted { parts, .. } => parts,
            Word::Braced { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub words: Vec<Word>,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    pub commands: Vec<Command>,
}

/// Token stream plus the parse tree it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct TclTokenStream {
    pub source: String,
    pub tokens: Vec<Token>,
    pub script: Script,
    /// Problems tolerated by lenient parsing.
    pub diagnostics: Vec<TokenizeError>,
}

impl TclTokenStream {
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn kinds(&self) -> Vec<TokenKind> {
        self.tokens.iter().map(|t| t.kind).collect()
    }

    /// Literal text of a word when it has no substitutions.
    pub fn literal(&self, word: &Word) -> Option<&str> {
        match word {
            Word::Bare { parts, span } if parts.iter().all(|p| matches!(p, Part::Text(_))) => {
                Some(&self.source[span.start..span.end])
            }
            Word::Braced { span, .. } => Some(&self.source[span.start + 1..span.end - 1]),
            Word::Quoted { parts, span } if parts.iter().all(|p| matches!(p, Part::Text(_))) => {
                Some(&self.source[span.start + 1..span.end - 1])
            }
            _ => None,
        }
    }

    pub fn text(&self, span: Span) -> &str {
        &self.source[span.start..span.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Top,
    Bracket,
}

struct Parser<'a> {
    src: &'a [u8],
    line_starts: Vec<usize>,
    lenient: bool,
    diagnostics: Vec<TokenizeError>,
}

fn is_name_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, lenient: bool) -> Self {
        let mut line_starts = vec![0];
        line_starts.extend(src.bytes().enumerate().filter(|(_, b)| *b == b'\n').map(|(i, _)| i + 1));
        Self { src: src.as_bytes(), line_starts, lenient, diagnostics: Vec::new() }
    }

    fn line(&self, pos: usize) -> usize {
        self.line_starts.partition_point(|&s| s <= pos)
    }

    fn fail(&mut self, err: TokenizeError) -> Result<(), TokenizeError> {
        if self.lenient {
            self.diagnostics.push(err);
            Ok(())
        } else {
            Err(err)
        }
    }

    fn at(&self, i: usize, end: usize) -> Option<u8> {
        (i < end).then(|| self.src[i])
    }

    /// Skips blanks and backslash-newlines within a command.
    fn skip_blanks(&self, mut i: usize, end: usize) -> usize {
        loop {
            match self.at(i, end) {
                Some(b' ' | b'\t' | b'\r') => i += 1,
                Some(b'\\') if self.at(i + 1, end) == Some(b'\n') => i += 2,
                _ => return i,
            }
        }
    }

    fn skip_comment(&self, mut i: usize, end: usize) -> usize {
        while let Some(b) = self.at(i, end) {
            match b {
                b'\\' => i += 2,
                b'\n' => return i,
                _ => i += 1,
            }
        }
        end
    }

    /// Parses commands in `[i, end)`. In bracket mode stops at the closing
    /// `]` and returns its position.
    fn script(&mut self, mut i: usize, end: usize, mode: Mode) -> Result<(Script, usize), TokenizeError> {
        let mut script = Script::default();
        loop {
            // between commands
            loop {
                match self.at(i, end) {
                    Some(b' ' | b'\t' | b'\r' | b'\n' | b';') => i += 1,
                    Some(b'\\') if self.at(i + 1, end) == Some(b'\n') => i += 2,
                    Some(b'#') => i = self.skip_comment(i, end),
                    _ => break,
                }
            }
            match self.at(i, end) {
                None => return Ok((script, end)),
                Some(b']') if mode == Mode::Bracket => return Ok((script, i)),
                _ => {}
            }
            let line = self.line(i);
            let mut words = Vec::new();
            loop {
                i = self.skip_blanks(i, end);
                match self.at(i, end) {
                    None | Some(b'\n' | b';') => break,
                    Some(b']') if mode == Mode::Bracket => break,
                    _ => {}
                }
                let (word, next) = self.word(i, end, mode)?;
                words.push(word);
                i = next;
            }
            if !words.is_empty() {
                script.commands.push(Command { words, line });
            }
        }
    }

    fn is_separator(&self, i: usize, end: usize, mode: Mode) -> bool {
        match self.at(i, end) {
            None | Some(b' ' | b'\t' | b'\r' | b'\n' | b';') => true,
            Some(b'\\') => self.at(i + 1, end) == Some(b'\n'),
            Some(b']') => mode == Mode::Bracket,
            _ => false,
        }
    }

    fn word(&mut self, i: usize, end: usize, mode: Mode) -> Result<(Word, usize), TokenizeError> {
        match self.src[i] {
            b'{' => {
                let close = self.matching_brace(i, end)?;
                let span = Span { start: i, end: close };
                if self.is_separator(close, end, mode) {
                    return Ok((Word::Braced { span, inner: None }, close));
                }
                self.bare(i, end, mode)
            }
            b'"' => self.quoted(i, end),
            _ => self.bare(i, end, mode),
        }
    }

    /// Position just past the brace matching the one at `open`.
    fn matching_brace(&mut self, open: usize, end: usize) -> Result<usize, TokenizeError> {
        let mut depth = 0usize;
        let mut i = open;
        while let Some(b) = self.at(i, end) {
            match b {
                b'\\' => i += 1,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(i + 1);
                    }
                }
                _ => {}
            }
            i += 1;
        }
        self.fail(TokenizeError::UnterminatedBrace { line: self.line(open) })?;
        Ok(end)
    }

    fn variable(&mut self, i: usize, end: usize) -> Result<Option<(Part, usize)>, TokenizeError> {
        let start = i;
        let mut j = i + 1;
        if self.at(j, end) == Some(b'{') {
            while let Some(b) = self.at(j, end) {
                if b == b'}' {
                    let name = String::from_utf8_lossy(&self.src[i + 2..j]).into_owned();
                    return Ok(Some((Part::Var { name, span: Span { start, end: j + 1 } }, j + 1)));
                }
                j += 1;
            }
            self.fail(TokenizeError::UnterminatedBrace { line: self.line(i) })?;
            let name = String::from_utf8_lossy(&self.src[i + 2..end]).into_owned();
            return Ok(Some((Part::Var { name, span: Span { start, end } }, end)));
        }
        loop {
            match self.at(j, end) {
                Some(b) if is_name_byte(b) => j += 1,
                Some(b':') if self.at(j + 1, end) == Some(b':') => j += 2,
                _ => break,
            }
        }
        if j == i + 1 {
            return Ok(None);
        }
        let name = String::from_utf8_lossy(&self.src[i + 1..j]).into_owned();
        if self.at(j, end) == Some(b'(') {
            let mut depth = 0usize;
            let mut k = j;
            while let Some(b) = self.at(k, end) {
                match b {
                    b'(' => depth += 1,
                    b')' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    b'\n' => break,
                    _ => {}
                }
                k += 1;
            }
            if self.at(k, end) == Some(b')') {
                j = k + 1;
            }
        }
        Ok(Some((Part::Var { name, span: Span { start, end: j } }, j)))
    }

    fn bracket(&mut self, i: usize, end: usize) -> Result<(Part, usize), TokenizeError> {
        let (script, close) = self.script(i + 1, end, Mode::Bracket)?;
        if self.at(close, end) != Some(b']') {
            self.fail(TokenizeError::UnterminatedBracket { line: self.line(i) })?;
            return Ok((Part::Cmd { script, open: Span { start: i, end: i + 1 }, close: Span { start: end, end } }, end));
        }
        Ok((
            Part::Cmd { script, open: Span { start: i, end: i + 1 }, close: Span { start: close, end: close + 1 } },
            close + 1,
        ))
    }

    fn push_text(parts: &mut Vec<Part>, from: usize, to: usize) {
        if to <= from {
            return;
        }
        if let Some(Part::Text(span)) = parts.last_mut() {
            if span.end == from {
                span.end = to;
                return;
            }
        }
        parts.push(Part::Text(Span { start: from, end: to }));
    }

    fn bare(&mut self, start: usize, end: usize, mode: Mode) -> Result<(Word, usize), TokenizeError> {
        let mut parts = Vec::new();
        let mut i = start;
        while !self.is_separator(i, end, mode) {
            match self.src[i] {
                b'\\' => {
                    let to = (i + 2).min(end);
                    Self::push_text(&mut parts, i, to);
                    i = to;
                }
                b'$' => match self.variable(i, end)? {
                    Some((part, next)) => {
                        parts.push(part);
                        i = next;
                    }
                    None => {
                        Self::push_text(&mut parts, i, i + 1);
                        i += 1;
                    }
                },
                b'[' => {
                    let (part, next) = self.bracket(i, end)?;
                    parts.push(part);
                    i = next;
                }
                _ => {
                    Self::push_text(&mut parts, i, i + 1);
                    i += 1;
                }
            }
        }
        Ok((Word::Bare { parts, span: Span { start, end: i } }, i))
    }

    fn quoted(&mut self, start: usize, end: usize) -> Result<(Word, usize), TokenizeError> {
        let mut parts = Vec::new();
        let mut i = start + 1;
        loop {
            match self.at(i, end) {
                None => {
                    self.fail(TokenizeError::UnterminatedString { line: self.line(start) })?;
                    return Ok((Word::Quoted { parts, span: Span { start, end } }, end));
                }
                Some(b'"') => return Ok((Word::Quoted { parts, span: Span { start, end: i + 1 } }, i + 1)),
                Some(b'\\') => {
                    let to = (i + 2).min(end);
                    Self::push_text(&mut parts, i, to);
                    i = to;
                }
                Some(b'$') => match self.variable(i, end)? {
                    Some((part, next)) => {
                        parts.push(part);
                        i = next;
                    }
                    None => {
                        Self::push_text(&mut parts, i, i + 1);
                        i += 1;
                    }
                },
                Some(b'[') => {
                    let (part, next) = self.bracket(i, end)?;
                    parts.push(part);
                    i = next;
                }
                Some(_) => {
                    Self::push_text(&mut parts, i, i + 1);
                    i += 1;
                }
            }
        }
    }

    /// Expands the brace bodies of control commands, recursively.
    fn expand(&mut self, script: &mut Script) -> Result<(), TokenizeError> {
        for cmd in &mut script.commands {
            let name = match cmd.words.first() {
                Some(Word::Bare { parts, span }) if parts.iter().all(|p| matches!(p, Part::Text(_))) => {
                    String::from_utf8_lossy(&self.src[span.start..span.end]).into_owned()
                }
                _ => String::new(),
            };
            let plan = body_plan(&name, &cmd.words, self.src);
            for (idx, word) in cmd.words.iter_mut().enumerate() {
                match word {
                    Word::Braced { span, inner } => {
                        let Some(as_expr) = plan.get(idx).copied().flatten() else { continue };
                        let close = if span.end > span.start + 1 && self.src[span.end - 1] == b'}' {
                            span.end - 1
                        } else {
                            span.end
                        };
                        let (mut body, _) = self.script(span.start + 1, close, Mode::Top)?;
                        self.expand(&mut body)?;
                        *inner = Some(if as_expr { Expansion::Expr(body) } else { Expansion::Script(body) });
                    }
                    Word::Bare { parts, .. } | Word::Quoted { parts, .. } => self.expand_parts(parts)?,
                }
            }
        }
        Ok(())
    }

    fn expand_parts(&mut self, parts: &mut [Part]) -> Result<(), TokenizeError> {
        for part in parts {
            if let Part::Cmd { script, .. } = part {
                self.expand(script)?;
            }
        }
        Ok(())
    }
}

/// Per word position: `Some(false)` for a script body, `Some(true)` for an
/// expression, `None` for an opaque word.
fn body_plan(name: &str, words: &[Word], src: &[u8]) -> Vec<Option<bool>> {
    let n = words.len();
    let mut plan = vec![None; n];
    let lit = |w: &Word| -> Option<&[u8]> {
        match w {
            Word::Bare { parts, span } if parts.iter().all(|p| matches!(p, Part::Text(_))) => {
                Some(&src[span.start..span.end])
            }
            _ => None,
        }
    };
    let mut set = |i: usize, expr: bool| {
        if i < n {
            plan[i] = Some(expr);
        }
    };
    match name {
        "proc" if n == 4 => set(3, false),
        "while" => {
            set(1, true);
            set(2, false);
        }
        "for" => {
            set(1, false);
            set(2, true);
            set(3, false);
            set(4, false);
        }
        "foreach" | "lmap" if n >= 4 => set(n - 1, false),
        "catch" => set(1, false),
        "expr" => (1..n).for_each(|i| set(i, true)),
        "if" => {
            let mut i = 1;
            let mut expect_cond = true;
            while i < n {
                let w = lit(&words[i]);
                if expect_cond {
                    set(i, true);
                    i += 1;
                    if i < n && lit(&words[i]) == Some(b"then") {
                        i += 1;
                    }
                    set(i, false);
                    i += 1;
                    expect_cond = false;
                } else if w == Some(b"elseif") {
                    expect_cond = true;
                    i += 1;
                } else if w == Some(b"else") {
                    set(i + 1, false);
                    break;
                } else {
                    set(i, false);
                    break;
                }
            }
        }
        _ => {}
    }
    plan
}

fn is_number(s: &str) -> bool {
    let t = s.strip_prefix(['+', '-']).unwrap_or(s);
    if let Some(hex) = t.strip_prefix("0x") {
        return !hex.is_empty() && hex.bytes().all(|b| b.is_ascii_hexdigit());
    }
    !t.is_empty() && t.bytes().next().is_some_and(|b| b.is_ascii_digit() || b == b'.') && t.parse::<f64>().is_ok()
}

fn is_operator(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() >= 2 && b[0] == b'-' && (b[1].is_ascii_alphabetic() || b[1] == b'_') {
        return true;
    }
    !s.is_empty() && s.bytes().all(|c| b"+-*/%<>=!&|^~?:".contains(&c))
}

fn classify(text: &str, command_position: bool) -> TokenKind {
    if text.starts_with('$') {
        TokenKind::VariableRef
    } else if command_position {
        TokenKind::CommandWord
    } else if is_number(text) {
        TokenKind::Number
    } else if is_operator(text) {
        TokenKind::Operator
    } else {
        TokenKind::StringLiteral
    }
}

struct Flattener<'a> {
    src: &'a str,
    parser_lines: &'a [usize],
    out: Vec<Token>,
}

impl Flattener<'_> {
    fn push(&mut self, span: Span, kind: TokenKind) {
        if span.end <= span.start {
            return;
        }
        let line = self.parser_lines.partition_point(|&s| s <= span.start);
        self.out.push(Token { text: self.src[span.start..span.end].to_string(), kind, line, start: span.start, end: span.end });
    }

    fn script(&mut self, script: &Script, expr: bool) {
        for cmd in &script.commands {
            for (i, word) in cmd.words.iter().enumerate() {
                self.word(word, i == 0 && !expr);
            }
        }
    }

    fn word(&mut self, word: &Word, command_position: bool) {
        match word {
            Word::Quoted { span, .. } => self.push(*span, TokenKind::StringLiteral),
            Word::Braced { span, inner: None } => self.push(*span, TokenKind::BraceGroup),
            Word::Braced { span, inner: Some(exp) } => {
                self.push(Span { start: span.start, end: span.start + 1 }, TokenKind::Operator);
                match exp {
                    Expansion::Script(s) => self.script(s, false),
                    Expansion::Expr(s) => self.script(s, true),
                }
                if span.end > span.start + 1 && self.src.as_bytes()[span.end - 1] == b'}' {
                    self.push(Span { start: span.end - 1, end: span.end }, TokenKind::Operator);
                }
            }
            Word::Bare { parts, .. } => {
                let mut run: Option<Span> = None;
                let mut first = command_position;
                let flush = |this: &mut Self, run: &mut Option<Span>, first: &mut bool| {
                    if let Some(span) = run.take() {
                        let text = &this.src[span.start..span.end];
                        this.push(span, classify(text, *first));
                        *first = false;
                    }
                };
                for part in parts {
                    match part {
                        Part::Text(span) | Part::Var { span, .. } => {
                            run = Some(match run {
                                Some(r) => Span { start: r.start, end: span.end },
                                None => *span,
                            });
                        }
                        Part::Cmd { script, open, close } => {
                            flush(self, &mut run, &mut first);
                            first = false;
                            self.push(*open, TokenKind::Operator);
                            self.script(script, false);
                            self.push(*close, TokenKind::Operator);
                        }
                    }
                }
                flush(self, &mut run, &mut first);
            }
        }
    }
}

fn parse(script: &str, lenient: bool) -> Result<TclTokenStream, TokenizeError> {
    let mut p = Parser::new(script, lenient);
    let (mut tree, _) = p.script(0, script.len(), Mode::Top)?;
    p.expand(&mut tree)?;
    let mut f = Flattener { src: script, parser_lines: &p.line_starts, out: Vec::new() };
    f.script(&tree, false);
    let tokens = f.out;
    Ok(TclTokenStream { source: script.to_string(), tokens, script: tree, diagnostics: p.diagnostics })
}

/// Strict tokenization: malformed quoting is an error.
pub fn tokenize(script: &str) -> Result<TclTokenStream, TokenizeError> {
    parse(script, false)
}

/// Tokenization that closes unterminated constructs at end of input and
/// records them in `diagnostics`.
pub fn tokenize_lenient(script: &str) -> TclTokenStream {
    parse(script, true).expect("lenient parsing does not fail")
}
