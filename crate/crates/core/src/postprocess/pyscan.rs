//! Lexical scan of Python test files.
//!
//! This is deliberately not a parser. It tokenizes well enough to skip
//! strings and comments, splits the file into logical statements, and
//! collects which names a statement binds, which names it uses at a
//! statement head, call site, decorator or attribute root, and which
//! modules it imports.

use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TokKind {
    Name,
    Op,
    Str,
    Num,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Tok {
    pub kind: TokKind,
    pub text: String,
    /// Byte span in the source.
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub depth: usize,
}

impl Tok {
    fn is_op(&self, op: &str) -> bool {
        self.kind == TokKind::Op && self.text == op
    }

    fn is_name(&self) -> bool {
        self.kind == TokKind::Name
    }

    fn is_kw(&self, kw: &str) -> bool {
        self.kind == TokKind::Name && self.text == kw
    }
}

/// One simple statement: a logical line, split at top-level `;`.
#[derive(Debug, Clone)]
pub(crate) struct Statement {
    pub tokens: Vec<Tok>,
}

const OPERATORS: [&str; 47] = [
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=",
    "%=", "&=", "|=", "^=", "@=", "**", "//", "<<", ">>", "+", "-", "*", "/", "%", "@", "&", "|",
    "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
];

pub(crate) const KEYWORDS: [&str; 35] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if",
    "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield",
];

pub(crate) const BUILTINS: &[&str] = &[
    "__builtins__", "__debug__", "__doc__", "__file__", "__import__", "__name__", "__package__",
    "__spec__", "abs", "aiter", "all", "anext", "any", "ascii", "bin", "bool", "breakpoint",
    "bytearray", "bytes", "callable", "chr", "classmethod", "compile", "complex", "copyright",
    "delattr", "dict", "dir", "divmod", "enumerate", "eval", "exec", "exit", "filter", "float",
    "format", "frozenset", "getattr", "globals", "hasattr", "hash", "help", "hex", "id", "input",
    "int", "isinstance", "issubclass", "iter", "len", "list", "locals", "map", "max",
    "memoryview", "min", "next", "object", "oct", "open", "ord", "pow", "print", "property",
    "quit", "range", "repr", "reversed", "round", "set", "setattr", "slice", "sorted",
    "staticmethod", "str", "sum", "super", "tuple", "type", "vars", "zip", "self", "cls",
    "ArithmeticError", "AssertionError", "AttributeError", "BaseException", "BlockingIOError",
    "BrokenPipeError", "BufferError", "BytesWarning", "ChildProcessError",
    "ConnectionAbortedError", "ConnectionError", "ConnectionRefusedError",
    "ConnectionResetError", "DeprecationWarning", "EOFError", "Ellipsis", "EnvironmentError",
    "Exception", "FileExistsError", "FileNotFoundError", "FloatingPointError", "FutureWarning",
    "GeneratorExit", "IOError", "ImportError", "ImportWarning", "IndentationError",
    "IndexError", "InterruptedError", "IsADirectoryError", "KeyError", "KeyboardInterrupt",
    "LookupError", "MemoryError", "ModuleNotFoundError", "NameError", "NotADirectoryError",
    "NotImplemented", "NotImplementedError", "OSError", "OverflowError",
    "PendingDeprecationWarning", "PermissionError", "ProcessLookupError", "RecursionError",
    "ReferenceError", "ResourceWarning", "RuntimeError", "RuntimeWarning",
    "StopAsyncIteration", "StopIteration", "SyntaxError", "SyntaxWarning", "SystemError",
    "SystemExit", "TabError", "TimeoutError", "TypeError", "UnboundLocalError",
    "UnicodeDecodeError", "UnicodeEncodeError", "UnicodeError", "UnicodeTranslateError",
    "UnicodeWarning", "UserWarning", "ValueError", "Warning", "ZeroDivisionError",
];

fn is_name_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_name_char(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

/// Length of a string prefix (`r`, `b`, `f`, `rb`, ...) if a quote follows.
fn string_prefix_len(rest: &str) -> Option<usize> {
    let bytes = rest.as_bytes();
    for len in 0..=2 {
        if bytes.len() <= len {
            return None;
        }
        let c = bytes[len];
        if c == b'\'' || c == b'"' {
            return Some(len);
        }
        if !matches!(c.to_ascii_lowercase(), b'r' | b'b' | b'u' | b'f') {
            return None;
        }
    }
    None
}

/// End offset of a string literal whose opening quote is at `quote_at`.
fn string_end(src: &str, quote_at: usize) -> usize {
    let bytes = src.as_bytes();
    let q = bytes[quote_at];
    let triple = bytes.len() >= quote_at + 3 && bytes[quote_at + 1] == q && bytes[quote_at + 2] == q;
    let mut i = quote_at + if triple { 3 } else { 1 };
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' if !triple => return i,
            c if c == q => {
                if !triple {
                    return i + 1;
                }
                if bytes.len() >= i + 3 && bytes[i + 1] == q && bytes[i + 2] == q {
                    return i + 3;
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    bytes.len()
}

pub(crate) fn tokenize(src: &str) -> Vec<Statement> {
    let mut statements = Vec::new();
    let mut current: Vec<Tok> = Vec::new();
    let mut depth = 0usize;
    let mut line = 1usize;
    let mut i = 0usize;
    let bytes = src.as_bytes();

    let mut flush = |current: &mut Vec<Tok>| {
        if current.is_empty() {
            return;
        }
        let tokens = std::mem::take(current);
        // split at top-level semicolons
        let mut part = Vec::new();
        for tok in tokens {
            if tok.depth == 0 && tok.is_op(";") {
                if !part.is_empty() {
                    statements.push(Statement {
                        tokens: std::mem::take(&mut part),
                    });
                }
            } else {
                part.push(tok);
            }
        }
        if !part.is_empty() {
            statements.push(Statement { tokens: part });
        }
    };

    while i < bytes.len() {
        let c = src[i..].chars().next().expect("in bounds");
        match c {
            '\n' => {
                if depth == 0 {
                    flush(&mut current);
                }
                line += 1;
                i += 1;
            }
            '\\' if src[i + 1..].starts_with('\n') => {
                line += 1;
                i += 2;
            }
            '#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            c if c.is_whitespace() => i += c.len_utf8(),
            _ => {
                let start = i;
                let start_line = line;
                let kind;
                if let Some(prefix) = string_prefix_len(&src[i..]) {
                    i = string_end(src, i + prefix);
                    line += src[start..i].matches('\n').count();
                    kind = TokKind::Str;
                } else if is_name_start(c) {
                    i += src[i..]
                        .char_indices()
                        .find(|(_, ch)| !is_name_char(*ch))
                        .map_or(src.len() - i, |(off, _)| off);
                    kind = TokKind::Name;
                } else if c.is_ascii_digit()
                    || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit))
                {
                    i += src[i..]
                        .char_indices()
                        .find(|(_, ch)| !(ch.is_alphanumeric() || *ch == '.' || *ch == '_'))
                        .map_or(src.len() - i, |(off, _)| off);
                    kind = TokKind::Num;
                } else {
                    let op = OPERATORS
                        .iter()
                        .find(|op| src[i..].starts_with(*op))
                        .copied();
                    i += op.map_or(c.len_utf8(), str::len);
                    kind = TokKind::Op;
                }
                let text = &src[start..i];
                let tok_depth = depth;
                if kind == TokKind::Op {
                    match text {
                        "(" | "[" | "{" => depth += 1,
                        ")" | "]" | "}" => depth = depth.saturating_sub(1),
                        _ => {}
                    }
                }
                current.push(Tok {
                    kind,
                    text: text.to_string(),
                    start,
                    end: i,
                    line: start_line,
                    depth: tok_depth,
                });
            }
        }
    }
    flush(&mut current);
    statements
}

/// One imported module reference, with the byte span of its dotted path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ImportRef {
    pub module: String,
    pub start: usize,
    pub end: usize,
    /// `from module import ...` rather than `import module`.
    pub from_form: bool,
    /// `import a.b as c`: the alias, when present.
    pub alias: Option<String>,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Scan {
    pub bound: BTreeSet<String>,
    /// Referenced names with the first line they appear on, in order.
    pub referenced: Vec<(String, usize)>,
    /// For attribute roots: the longest dotted chain starting at the name.
    pub chains: Vec<(String, Vec<String>)>,
    pub imports: Vec<ImportRef>,
    pub has_future_import: bool,
    /// Byte offset just after the last leading `from __future__` statement.
    pub future_end: usize,
}

fn dotted(tokens: &[Tok], mut i: usize) -> (String, usize, usize, usize) {
    let start = tokens[i].start;
    let mut end = tokens[i].end;
    let mut path = tokens[i].text.clone();
    i += 1;
    while i + 1 < tokens.len() && tokens[i].is_op(".") && tokens[i + 1].is_name() {
        path.push('.');
        path.push_str(&tokens[i + 1].text);
        end = tokens[i + 1].end;
        i += 2;
    }
    (path, start, end, i)
}

fn scan_import(st: &Statement, scan: &mut Scan) {
    let t = &st.tokens;
    if t[0].is_kw("import") {
        let mut i = 1;
        while i < t.len() {
            if !t[i].is_name() {
                i += 1;
                continue;
            }
            let (module, start, end, next) = dotted(t, i);
            i = next;
            let alias = if i + 1 < t.len() && t[i].is_kw("as") && t[i + 1].is_name() {
                i += 2;
                Some(t[i - 1].text.clone())
            } else {
                None
            };
            let binding = alias
                .clone()
                .unwrap_or_else(|| module.split('.').next().unwrap_or_default().to_string());
            scan.bound.insert(binding);
            scan.imports.push(ImportRef {
                module,
                start,
                end,
                from_form: false,
                alias,
                line: t[0].line,
            });
            while i < t.len() && !t[i].is_op(",") {
                i += 1;
            }
        }
    } else if t[0].is_kw("from") && t.len() > 1 {
        // relative imports (`from . import x`) carry no module name we can check
        let mut i = 1;
        let mut relative = false;
        while i < t.len() && (t[i].is_op(".") || t[i].is_op("...")) {
            relative = true;
            i += 1;
        }
        if i < t.len() && t[i].is_name() && !t[i].is_kw("import") {
            let (module, start, end, next) = dotted(t, i);
            i = next;
            if module == "__future__" {
                scan.has_future_import = true;
            }
            if !relative {
                scan.imports.push(ImportRef {
                    module,
                    start,
                    end,
                    from_form: true,
                    alias: None,
                    line: t[0].line,
                });
            }
        }
        // names after `import`
        while i < t.len() && !t[i].is_kw("import") {
            i += 1;
        }
        i += 1;
        while i < t.len() {
            if t[i].is_name() {
                let bind = if i + 2 < t.len() && t[i + 1].is_kw("as") && t[i + 2].is_name() {
                    i += 2;
                    &t[i].text
                } else {
                    &t[i].text
                };
                scan.bound.insert(bind.clone());
            }
            i += 1;
        }
    }
}

fn bind_targets(tokens: &[Tok], scan: &mut Scan) {
    for (i, tok) in tokens.iter().enumerate() {
        if !tok.is_name() || KEYWORDS.contains(&tok.text.as_str()) {
            continue;
        }
        let after_dot = i > 0 && tokens[i - 1].is_op(".");
        let before_access = tokens
            .get(i + 1)
            .is_some_and(|n| n.is_op(".") || n.is_op("[") || n.is_op("("));
        if !after_dot && !before_access {
            scan.bound.insert(tok.text.clone());
        }
    }
}

fn scan_bindings(st: &Statement, scan: &mut Scan) {
    let t = &st.tokens;
    let head = &t[0];
    let body_start = usize::from(head.is_kw("async"));
    let head = &t[body_start.min(t.len() - 1)];

    if (head.is_kw("def") || head.is_kw("class")) && t.len() > body_start + 1 {
        scan.bound.insert(t[body_start + 1].text.clone());
        if head.is_kw("def") {
            // parameters: names at depth 1 right after `(`, `,`, `*` or `**`
            for i in body_start + 2..t.len() {
                let tok = &t[i];
                if tok.is_name() && tok.depth == 1 {
                    let prev = &t[i - 1];
                    if prev.is_op("(") || prev.is_op(",") || prev.is_op("*") || prev.is_op("**")
                    {
                        scan.bound.insert(tok.text.clone());
                    }
                }
            }
        }
    }
    if head.is_kw("global") || head.is_kw("nonlocal") {
        for tok in &t[1..] {
            if tok.is_name() {
                scan.bound.insert(tok.text.clone());
            }
        }
    }

    for (i, tok) in t.iter().enumerate() {
        // `as` in with/except/import
        if tok.is_kw("as") {
            if let Some(next) = t.get(i + 1).filter(|n| n.is_name()) {
                scan.bound.insert(next.text.clone());
            }
        }
        // loop and comprehension targets
        if tok.is_kw("for") {
            let end = t[i + 1..]
                .iter()
                .position(|n| n.is_kw("in") && n.depth == tok.depth)
                .map_or(t.len(), |p| i + 1 + p);
            bind_targets(&t[i + 1..end], scan);
        }
        if tok.is_kw("lambda") {
            for param in t[i + 1..].iter().take_while(|n| !n.is_op(":")) {
                if param.is_name() {
                    scan.bound.insert(param.text.clone());
                }
            }
        }
        if tok.is_op(":=") && i > 0 && t[i - 1].is_name() {
            scan.bound.insert(t[i - 1].text.clone());
        }
    }

    // plain, augmented and annotated assignment
    let top: Vec<usize> = t
        .iter()
        .enumerate()
        .filter(|(_, tok)| tok.depth == 0 && tok.kind == TokKind::Op)
        .filter(|(_, tok)| {
            tok.text == "="
                || (tok.text.len() >= 2
                    && tok.text.ends_with('=')
                    && !matches!(tok.text.as_str(), "==" | "!=" | "<=" | ">="))
        })
        .map(|(i, _)| i)
        .collect();
    if let Some(&last) = top.last() {
        bind_targets(&t[..last], scan);
    } else if t.len() > 1 && head.is_name() && t[1].is_op(":") && !KEYWORDS.contains(&head.text.as_str()) {
        scan.bound.insert(head.text.clone());
    }
}

fn scan_references(st: &Statement, scan: &mut Scan) {
    let t = &st.tokens;
    for (i, tok) in t.iter().enumerate() {
        if !tok.is_name() || KEYWORDS.contains(&tok.text.as_str()) {
            continue;
        }
        if i > 0 && (t[i - 1].is_op(".") || t[i - 1].is_kw("def") || t[i - 1].is_kw("class")) {
            continue;
        }
        let next = t.get(i + 1);
        let is_head = i == 0;
        let is_call = next.is_some_and(|n| n.is_op("("));
        let is_attr_root = next.is_some_and(|n| n.is_op("."));
        let is_decorator = i > 0 && t[i - 1].is_op("@") && i == 1;
        if is_head || is_call || is_attr_root || is_decorator {
            if !scan.referenced.iter().any(|(n, _)| n == &tok.text) {
                scan.referenced.push((tok.text.clone(), tok.line));
            }
            if is_attr_root {
                let (path, ..) = dotted(t, i);
                let chain: Vec<String> = path.split('.').map(str::to_string).collect();
                scan.chains.push((tok.text.clone(), chain));
            }
        }
    }
}

pub(crate) fn scan(src: &str) -> Scan {
    let statements = tokenize(src);
    let mut scan = Scan::default();
    let mut leading = true;
    for st in &statements {
        let t = &st.tokens;
        let is_import = t[0].is_kw("import") || t[0].is_kw("from");
        if is_import {
            scan_import(st, &mut scan);
        } else {
            scan_bindings(st, &mut scan);
            scan_references(st, &mut scan);
        }
        let is_future = is_import
            && t.get(1).is_some_and(|n| n.text == "__future__");
        let is_docstring = t.len() == 1 && t[0].kind == TokKind::Str;
        if leading && (is_future || is_docstring) {
            if is_future {
                scan.future_end = t.last().map_or(0, |l| l.end);
            }
        } else {
            leading = false;
        }
    }
    scan
}
