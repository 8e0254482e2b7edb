// SPDX-License-Identifier: Apache-2.0

//! Verilog preprocessor: comments, `define/`undef, conditional compilation,
//! `include and the directives that carry no dataflow (`timescale etc.).
//!
//! Output lines that are blank after processing are dropped, so each output
//! file keeps a line map back to the line it came from.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{FrontendError, SourceUnit, Span};

const MAX_MACRO_DEPTH: usize = 16;
const MAX_INCLUDE_DEPTH: usize = 16;

/// Supplies the text of `include targets.
pub trait IncludeResolver {
    /// `including` is the name of the file holding the directive, `target`
    /// the quoted path. Returns the resolved name and its text.
    fn resolve(&self, including: &str, target: &str) -> Option<(String, String)>;
}

/// Resolves includes against the files of a [`SourceUnit`]: first relative
/// to the including file's directory, then relative to the unit root.
pub struct UnitResolver<'a> {
    files: &'a [(String, String)],
}

impl<'a> UnitResolver<'a> {
    pub fn new(unit: &'a SourceUnit) -> Self {
        Self { files: &unit.files }
    }

    fn lookup(&self, path: &str) -> Option<(String, String)> {
        self.files.iter().find(|(p, _)| normalize_path(p) == path).map(|(p, t)| (p.clone(), t.clone()))
    }
}

impl IncludeResolver for UnitResolver<'_> {
    fn resolve(&self, including: &str, target: &str) -> Option<(String, String)> {
        include_candidates(including, target).iter().find_map(|c| self.lookup(c))
    }
}

/// Candidate paths for an include, in lookup order.
pub fn include_candidates(including: &str, target: &str) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(dir) = parent_dir(including) {
        out.push(normalize_path(&format!("{dir}/{target}")));
    }
    let root = normalize_path(target);
    if !out.contains(&root) {
        out.push(root);
    }
    out
}

fn parent_dir(path: &str) -> Option<&str> {
    path.rfind('/').map(|i| &path[..i])
}

/// Collapses `.` and `..` components of a `/`-separated path.
pub fn normalize_path(path: &str) -> String {
    let absolute = path.starts_with('/');
    let mut parts: Vec<&str> = Vec::new();
    for comp in path.split('/') {
        match comp {
            "" | "." => {}
            ".." => {
                if matches!(parts.last(), Some(p) if *p != "..") {
                    parts.pop();
                } else if !absolute {
                    parts.push("..");
                }
            }
            c => parts.push(c),
        }
    }
    let joined = parts.join("/");
    if absolute {
        format!("/{joined}")
    } else {
        joined
    }
}

/// One preprocessed compilation file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessedFile {
    pub path: String,
    pub text: String,
    /// Names of every file that contributed lines (the file itself first).
    pub sources: Vec<String>,
    /// For each output line: (index into `sources`, 1-based original line).
    pub line_map: Vec<(usize, u32)>,
}

impl PreprocessedFile {
    /// Original location of a 1-based output line.
    pub fn origin(&self, line: u32) -> Option<(&str, u32)> {
        let (src, l) = *self.line_map.get(line.checked_sub(1)? as usize)?;
        Some((self.sources[src].as_str(), l))
    }
}

#[derive(Debug, Clone)]
struct Macro {
    params: Option<Vec<String>>,
    body: String,
}

/// Preprocesses every file of `unit` in order; macro definitions carry over
/// from one file to the next.
pub fn preprocess(unit: &SourceUnit) -> Result<Vec<PreprocessedFile>, FrontendError> {
    preprocess_with(unit, &UnitResolver::new(unit))
}

pub fn preprocess_with(
    unit: &SourceUnit,
    resolver: &dyn IncludeResolver,
) -> Result<Vec<PreprocessedFile>, FrontendError> {
    if unit.files.is_empty() {
        return Err(FrontendError::EmptyUnit);
    }
    let mut macros: BTreeMap<String, Macro> =
        unit.defines.iter().map(|(k, v)| (k.clone(), Macro { params: None, body: v.clone() })).collect();
    let mut out = Vec::with_capacity(unit.files.len());
    for (path, text) in &unit.files {
        let mut pp = Preprocessor { macros: &mut macros, resolver, output: Output::default() };
        pp.run_file(path, text, 0)?;
        let Output { lines, sources, .. } = pp.output;
        let mut text = String::new();
        let mut line_map = Vec::with_capacity(lines.len());
        for (i, (line, src, l)) in lines.into_iter().enumerate() {
            if i > 0 {
                text.push('\n');
            }
            text.push_str(&line);
            line_map.push((src, l));
        }
        out.push(PreprocessedFile { path: path.clone(), text, sources, line_map });
    }
    Ok(out)
}

/// Preprocesses a lone text with no includes and no predefined macros.
pub fn preprocess_text(path: &str, text: &str) -> Result<String, FrontendError> {
    let unit = SourceUnit::single(path, text, "");
    let mut files = preprocess(&unit)?;
    Ok(files.remove(0).text)
}

#[derive(Default)]
struct Output {
    lines: Vec<(String, usize, u32)>,
    sources: Vec<String>,
    current: String,
    current_origin: Option<(usize, u32)>,
}

impl Output {
    fn source_id(&mut self, name: &str) -> usize {
        match self.sources.iter().position(|s| s == name) {
            Some(i) => i,
            None => {
                self.sources.push(name.to_owned());
                self.sources.len() - 1
            }
        }
    }

    fn push_str(&mut self, s: &str, origin: (usize, u32)) {
        if self.current_origin.is_none() && !s.trim().is_empty() {
            self.current_origin = Some(origin);
        }
        self.current.push_str(s);
    }

    fn push_char(&mut self, c: char, origin: (usize, u32)) {
        if self.current_origin.is_none() && !c.is_whitespace() {
            self.current_origin = Some(origin);
        }
        self.current.push(c);
    }

    fn flush(&mut self) {
        let line = core::mem::take(&mut self.current);
        let trimmed = line.trim_end();
        if let Some((src, l)) = self.current_origin.take() {
            if !trimmed.is_empty() {
                self.lines.push((trimmed.to_owned(), src, l));
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Cond {
    parent_active: bool,
    taking: bool,
    seen_true: bool,
    line: u32,
}

struct Preprocessor<'a> {
    macros: &'a mut BTreeMap<String, Macro>,
    resolver: &'a dyn IncludeResolver,
    output: Output,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// Replaces comments with a single space, keeping newlines (and strings).
fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                out.push(c);
                while let Some(d) = chars.next() {
                    out.push(d);
                    if d == '\\' {
                        if let Some(e) = chars.next() {
                            out.push(e);
                        }
                    } else if d == '"' || d == '\n' {
                        break;
                    }
                }
            }
            '/' if chars.peek() == Some(&'/') => {
                while let Some(&d) = chars.peek() {
                    if d == '\n' {
                        break;
                    }
                    chars.next();
                }
                out.push(' ');
            }
            '/' if chars.peek() == Some(&'*') => {
                chars.next();
                let mut prev = '\0';
                for d in chars.by_ref() {
                    if d == '\n' {
                        out.push('\n');
                    }
                    if prev == '*' && d == '/' {
                        break;
                    }
                    prev = d;
                }
                out.push(' ');
            }
            _ => out.push(c),
        }
    }
    out
}

fn read_ident(s: &str) -> (&str, &str) {
    let end = s
        .char_indices()
        .find(|&(i, c)| if i == 0 { !is_ident_start(c) } else { !is_ident_char(c) })
        .map_or(s.len(), |(i, _)| i);
    (&s[..end], &s[end..])
}

impl Preprocessor<'_> {
    fn active(stack: &[Cond]) -> bool {
        stack.last().is_none_or(|c| c.parent_active && c.taking)
    }

    fn run_file(&mut self, path: &str, text: &str, depth: usize) -> Result<(), FrontendError> {
        if depth > MAX_INCLUDE_DEPTH {
            return Err(FrontendError::IncludeDepth { path: path.to_owned() });
        }
        let src = self.output.source_id(path);
        let stripped = strip_comments(text);
        let lines: Vec<&str> = stripped.split('\n').collect();
        let mut stack: Vec<Cond> = Vec::new();
        let mut i = 0;
        while i < lines.len() {
            let lineno = (i + 1) as u32;
            let mut line: String = lines[i].to_owned();
            i += 1;
            // `define bodies may continue over backslash-terminated lines.
            if line.trim_start().starts_with("`define") {
                while line.trim_end().ends_with('\\') && i < lines.len() {
                    let t = line.trim_end();
                    line = format!("{} {}", &t[..t.len() - 1], lines[i]);
                    i += 1;
                }
            }
            self.process_line(path, src, lineno, &line, &mut stack, depth)?;
            self.output.flush();
        }
        if let Some(c) = stack.last() {
            return Err(FrontendError::UnterminatedIfdef { span: Span::new(path, c.line, 1) });
        }
        Ok(())
    }

    fn process_line(
        &mut self,
        path: &str,
        src: usize,
        lineno: u32,
        line: &str,
        stack: &mut Vec<Cond>,
        depth: usize,
    ) -> Result<(), FrontendError> {
        let origin = (src, lineno);
        let mut rest = line;
        while !rest.is_empty() {
            let col = (line.len() - rest.len() + 1) as u32;
            let span = || Span::new(path, lineno, col);
            let c = rest.chars().next().unwrap();
            if c == '"' {
                let end = rest[1..].find('"').map_or(rest.len(), |p| p + 2);
                if Self::active(stack) {
                    self.output.push_str(&rest[..end], origin);
                }
                rest = &rest[end..];
                continue;
            }
            if c != '`' {
                if Self::active(stack) {
                    self.output.push_char(c, origin);
                }
                rest = &rest[c.len_utf8()..];
                continue;
            }
            let (name, after) = read_ident(&rest[1..]);
            rest = after;
            match name {
                "ifdef" | "ifndef" | "elsif" => {
                    let (arg, after) = read_ident(rest.trim_start());
                    if arg.is_empty() {
                        return Err(FrontendError::BadDirective { span: span(), directive: name.to_owned() });
                    }
                    rest = after;
                    let defined = self.macros.contains_key(arg);
                    if name == "elsif" {
                        let top = stack.last_mut().ok_or_else(|| FrontendError::UnmatchedDirective {
                            span: span(),
                            directive: name.to_owned(),
                        })?;
                        top.taking = !top.seen_true && defined;
                        top.seen_true |= defined;
                    } else {
                        let taking = if name == "ifdef" { defined } else { !defined };
                        let parent_active = Self::active(stack);
                        stack.push(Cond { parent_active, taking, seen_true: taking, line: lineno });
                    }
                }
                "else" => {
                    let top = stack.last_mut().ok_or_else(|| FrontendError::UnmatchedDirective {
                        span: span(),
                        directive: name.to_owned(),
                    })?;
                    top.taking = !top.seen_true;
                    top.seen_true = true;
                }
                "endif" => {
                    stack.pop().ok_or_else(|| FrontendError::UnmatchedDirective {
                        span: span(),
                        directive: name.to_owned(),
                    })?;
                }
                _ if !Self::active(stack) => {}
                "define" => {
                    self.define(rest.trim_start(), span())?;
                    rest = "";
                }
                "undef" => {
                    let (arg, after) = read_ident(rest.trim_start());
                    self.macros.remove(arg);
                    rest = after;
                }
                "include" => {
                    let t = rest.trim_start();
                    let target = t
                        .strip_prefix('"')
                        .and_then(|s| s.find('"').map(|e| (&s[..e], &s[e + 1..])))
                        .ok_or_else(|| FrontendError::BadDirective { span: span(), directive: name.to_owned() })?;
                    rest = target.1;
                    let (resolved, text) = self
                        .resolver
                        .resolve(path, target.0)
                        .ok_or_else(|| FrontendError::IncludeNotFound { span: span(), path: target.0.to_owned() })?;
                    self.output.flush();
                    self.run_file(&resolved, &text, depth + 1)?;
                }
                "timescale" | "default_nettype" | "unconnected_drive" => rest = "",
                "resetall" | "celldefine" | "endcelldefine" | "nounconnected_drive" => {}
                "" => return Err(FrontendError::BadDirective { span: span(), directive: "`".to_owned() }),
                _ => {
                    let (expansion, after) = self.expand_use(name, rest, span(), 0)?;
                    rest = after;
                    self.output.push_str(&expansion, origin);
                }
            }
        }
        Ok(())
    }

    fn define(&mut self, text: &str, span: Span) -> Result<(), FrontendError> {
        let (name, after) = read_ident(text);
        if name.is_empty() {
            return Err(FrontendError::BadDirective { span, directive: "define".to_owned() });
        }
        let (params, body) = if let Some(p) = after.strip_prefix('(') {
            let close = p
                .find(')')
                .ok_or_else(|| FrontendError::BadDirective { span: span.clone(), directive: "define".to_owned() })?;
            let params = p[..close].split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect();
            (Some(params), &p[close + 1..])
        } else {
            (None, after)
        };
        self.macros.insert(name.to_owned(), Macro { params, body: body.trim().to_owned() });
        Ok(())
    }

    /// Expands a macro use whose name has been consumed; `rest` follows it.
    fn expand_use<'r>(
        &self,
        name: &str,
        rest: &'r str,
        span: Span,
        depth: usize,
    ) -> Result<(String, &'r str), FrontendError> {
        if depth >= MAX_MACRO_DEPTH {
            return Err(FrontendError::MacroRecursion { span, name: name.to_owned() });
        }
        let mac = self
            .macros
            .get(name)
            .ok_or_else(|| FrontendError::UndefinedMacro { span: span.clone(), name: name.to_owned() })?;
        let (body, rest) = match &mac.params {
            None => (mac.body.clone(), rest),
            Some(params) => {
                let t = rest.trim_start();
                let Some(inner) = t.strip_prefix('(') else {
                    return Err(FrontendError::BadDirective { span, directive: name.to_owned() });
                };
                let (args, after) = split_macro_args(inner)
                    .ok_or_else(|| FrontendError::BadDirective { span: span.clone(), directive: name.to_owned() })?;
                if args.len() != params.len() {
                    return Err(FrontendError::BadDirective { span, directive: name.to_owned() });
                }
                (substitute_params(&mac.body, params, &args), after)
            }
        };
        Ok((self.expand_text(&body, span, depth + 1)?, rest))
    }

    /// Rescans an expansion for further macro uses.
    fn expand_text(&self, text: &str, span: Span, depth: usize) -> Result<String, FrontendError> {
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(p) = rest.find('`') {
            out.push_str(&rest[..p]);
            let (name, after) = read_ident(&rest[p + 1..]);
            if name.is_empty() {
                return Err(FrontendError::BadDirective { span, directive: "`".to_owned() });
            }
            let (exp, after) = self.expand_use(name, after, span.clone(), depth)?;
            out.push_str(&exp);
            rest = after;
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn split_macro_args(s: &str) -> Option<(Vec<String>, &str)> {
    let mut depth = 0usize;
    let mut args = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '{' | '[' => depth += 1,
            ')' if depth == 0 => {
                args.push(s[start..i].trim().to_string());
                return Some((args, &s[i + 1..]));
            }
            ')' | '}' | ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                args.push(s[start..i].trim().to_string());
                start = i + 1;
            }
            _ => {}
        }
    }
    None
}

fn substitute_params(body: &str, params: &[String], args: &[String]) -> String {
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(c) = rest.chars().next() {
        if is_ident_start(c) {
            let (id, after) = read_ident(rest);
            match params.iter().position(|p| p == id) {
                Some(k) => out.push_str(&args[k]),
                None => out.push_str(id),
            }
            rest = after;
        } else if c == '`' {
            // keep nested macro names intact
            let (id, after) = read_ident(&rest[1..]);
            out.push('`');
            out.push_str(id);
            rest = after;
        } else {
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pp(text: &str) -> Result<String, FrontendError> {
        preprocess_text("t.v", text)
    }

    #[test]
    fn macro_substitution() {
        assert_eq!(pp("`define W 4\nwire [`W-1:0] x;").unwrap(), "wire [4-1:0] x;");
    }

    #[test]
    fn comment_stripping() {
        assert_eq!(pp("// c\nassign y = a;").unwrap(), "assign y = a;");
        assert_eq!(pp("assign /* a\n b */ y = a; // t").unwrap(), "assign\n  y = a;");
    }

    #[test]
    fn false_guard_elides_body() {
        assert_eq!(pp("`ifdef MISSING\nassign y=1;\n`endif").unwrap(), "");
    }

    #[test]
    fn ifndef_else_elsif() {
        let src = "`define B\n`ifdef A\na\n`elsif B\nb\n`else\nc\n`endif\n`ifndef A\nd\n`else\ne\n`endif";
        assert_eq!(pp(src).unwrap(), "b\nd");
    }

    #[test]
    fn nested_conditionals() {
        let src = "`ifdef X\n`ifdef Y\na\n`else\nb\n`endif\n`else\nc\n`endif";
        assert_eq!(pp(src).unwrap(), "c");
    }

    #[test]
    fn function_like_macro() {
        let src = "`define MAX(a,b) ((a)>(b)?(a):(b))\nassign y = `MAX(p, q+1);";
        assert_eq!(pp(src).unwrap(), "assign y = ((p)>(q+1)?(p):(q+1));");
    }

    #[test]
    fn nested_macro_and_undef() {
        assert_eq!(pp("`define A 1\n`define B (`A+`A)\nx=`B;").unwrap(), "x=(1+1);");
        assert!(matches!(pp("`define A 1\n`undef A\nx=`A;"), Err(FrontendError::UndefinedMacro { .. })));
    }

    #[test]
    fn recursion_limit() {
        let err = pp("`define A `A\nx=`A;").unwrap_err();
        assert!(matches!(err, FrontendError::MacroRecursion { .. }), "{err:?}");
    }

    #[test]
    fn unterminated_ifdef() {
        assert!(matches!(pp("`ifdef A\nx"), Err(FrontendError::UnterminatedIfdef { .. })));
        assert!(matches!(pp("`endif"), Err(FrontendError::UnmatchedDirective { .. })));
    }

    #[test]
    fn timescale_stripped() {
        assert_eq!(pp("`timescale 1ns/1ps\nmodule m; endmodule").unwrap(), "module m; endmodule");
    }

    #[test]
    fn include_resolution_relative_then_root() {
        let unit = SourceUnit {
            files: vec![
                ("rtl/top.v".into(), "`include \"defs.vh\"\n`include \"inc/w.vh\"\nwire [`W:0] x;".into()),
                ("rtl/defs.vh".into(), "`define W 3".into()),
                ("inc/w.vh".into(), "wire z;".into()),
            ],
            top_module: "top".into(),
            defines: BTreeMap::new(),
        };
        let out = preprocess(&unit).unwrap();
        assert_eq!(out[0].text, "wire z;\nwire [3:0] x;");
        assert_eq!(out[0].origin(1), Some(("inc/w.vh", 1)));
        assert_eq!(out[0].origin(2), Some(("rtl/top.v", 3)));
    }

    #[test]
    fn missing_include() {
        let err = pp("`include \"nope.vh\"").unwrap_err();
        assert!(matches!(err, FrontendError::IncludeNotFound { .. }));
    }

    #[test]
    fn predefined_macros() {
        let mut unit = SourceUnit::single("a.v", "`ifdef FAST\nx = `N;\n`endif", "m");
        unit.defines.insert("FAST".into(), "".into());
        unit.defines.insert("N".into(), "7".into());
        assert_eq!(preprocess(&unit).unwrap()[0].text, "x = 7;");
    }

    #[test]
    fn normalize() {
        assert_eq!(normalize_path("a/./b/../c.v"), "a/c.v");
        assert_eq!(normalize_path("../x/y.v"), "../x/y.v");
        assert_eq!(normalize_path("/r/a/../b"), "/r/b");
    }

    #[test]
    fn idempotent_on_directive_free_output() {
        let once = pp("`define K 2\nmodule m; // x\n  assign y = `K; /* z */\n\nendmodule").unwrap();
        assert_eq!(pp(&once).unwrap(), once);
    }
}
