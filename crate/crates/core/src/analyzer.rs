//! Lexical extraction of a target's stdin input signature.
//!
//! No parsing beyond what is needed: comments and string literals are masked
//! out before read sites are located, so a `scanf` mentioned in a comment or
//! a `printf` message is never counted. The original text is kept around to
//! read the format strings of the sites that survive masking.

use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::model::{InputKind, InputSignature, TargetLanguage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyzerError {
    #[error("unsupported language for {0:?}: expected a .c or .py file")]
    UnsupportedLanguage(String),
}

/// Non-fatal note about a read site the scan could not fully classify.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnalyzerWarning {
    pub message: String,
    pub line: Option<u32>,
}

impl AnalyzerWarning {
    fn at(line: u32, message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            line: Some(line),
        }
    }
}

impl fmt::Display for AnalyzerWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureAnalysis {
    pub signature: InputSignature,
    pub warnings: Vec<AnalyzerWarning>,
}

pub fn detect_language(path: &Path) -> Result<TargetLanguage, AnalyzerError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("c") => Ok(TargetLanguage::C),
        Some("py") => Ok(TargetLanguage::Python),
        _ => Err(AnalyzerError::UnsupportedLanguage(path.display().to_string())),
    }
}

pub fn extract_input_signature(source: &str, language: TargetLanguage) -> SignatureAnalysis {
    let (kinds, warnings) = match language {
        TargetLanguage::C => scan_c(source),
        TargetLanguage::Python => scan_python(source),
    };
    SignatureAnalysis {
        signature: InputSignature::new(kinds, language),
        warnings,
    }
}

fn line_of(text: &str, pos: usize) -> u32 {
    text.as_bytes()[..pos].iter().filter(|&&b| b == b'\n').count() as u32 + 1
}

/// Replaces comments with spaces and string/char literal bodies with `_`,
/// preserving byte offsets and newlines.
fn mask_c(source: &str) -> Vec<u8> {
    let src = source.as_bytes();
    let mut out = src.to_vec();
    let mut i = 0;
    while i < src.len() {
        match src[i] {
            b'/' if src.get(i + 1) == Some(&b'/') => {
                while i < src.len() && src[i] != b'\n' {
                    out[i] = b' ';
                    i += 1;
                }
            }
            b'/' if src.get(i + 1) == Some(&b'*') => {
                let start = i;
                i += 2;
                while i < src.len() && !(src[i] == b'*' && src.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                let end = (i + 2).min(src.len());
                blank(&mut out, start, end);
                i = end;
            }
            q @ (b'"' | b'\'') => {
                i += 1;
                while i < src.len() && src[i] != q && src[i] != b'\n' {
                    if src[i] == b'\\' && i + 1 < src.len() {
                        out[i] = b'_';
                        i += 1;
                    }
                    out[i] = b'_';
                    i += 1;
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    out
}

fn blank(out: &mut [u8], start: usize, end: usize) {
    for b in &mut out[start..end] {
        if *b != b'\n' {
            *b = b' ';
        }
    }
}

static C_READ_SITE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(scanf|fscanf|fgets|gets|getchar|getline)\s*\(").unwrap()
});

fn scan_c(source: &str) -> (Vec<InputKind>, Vec<AnalyzerWarning>) {
    let masked = mask_c(source);
    let masked_str = String::from_utf8_lossy(&masked).into_owned();
    let mut kinds = Vec::new();
    let mut warnings = Vec::new();

    for caps in C_READ_SITE.captures_iter(&masked_str) {
        let whole = caps.get(0).unwrap();
        let func = caps.get(1).unwrap().as_str();
        let line = line_of(source, whole.start());
        let args_start = whole.end();
        let args_end = matching_paren(&masked, args_start - 1).unwrap_or(masked.len());
        let args = &source[args_start..args_end];
        let masked_args = &masked_str[args_start..args_end];

        let before = kinds.len();
        match func {
            "scanf" => classify_scanf(args, line, &mut kinds, &mut warnings),
            "fscanf" => match args.split_once(',') {
                Some((stream, rest)) if stream.trim() == "stdin" => {
                    classify_scanf(rest, line, &mut kinds, &mut warnings)
                }
                _ => continue,
            },
            "fgets" | "getline" => {
                if masked_args.rsplit(',').next().map(str::trim) == Some("stdin") {
                    kinds.push(InputKind::String);
                } else {
                    continue;
                }
            }
            "gets" => kinds.push(InputKind::String),
            "getchar" => {
                warnings.push(AnalyzerWarning::at(
                    line,
                    "getchar reads a single byte, not a line; not counted as an input",
                ));
                continue;
            }
            _ => unreachable!(),
        }
        if kinds.len() > before && c_site_in_loop(&masked, whole.start()) {
            warnings.push(AnalyzerWarning::at(
                line,
                format!("{func} inside a loop: counted once per source site"),
            ));
        }
    }
    (kinds, warnings)
}

fn matching_paren(masked: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, &b) in masked.iter().enumerate().skip(open) {
        match b {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses the leading (possibly concatenated) string literal of a scanf
/// argument list and classifies each conversion.
fn classify_scanf(
    args: &str,
    line: u32,
    kinds: &mut Vec<InputKind>,
    warnings: &mut Vec<AnalyzerWarning>,
) {
    match leading_string_literal(args) {
        Some(format) => {
            for conv in scanf_conversions(&format) {
                match conv {
                    Conversion::Read(kind) => kinds.push(kind),
                    Conversion::Unknown(spec) => {
                        warnings.push(AnalyzerWarning::at(
                            line,
                            format!("unrecognized conversion %{spec}; treated as string"),
                        ));
                        kinds.push(InputKind::String);
                    }
                }
            }
        }
        None => {
            warnings.push(AnalyzerWarning::at(
                line,
                "format is not a string literal; counted as one string read",
            ));
            kinds.push(InputKind::String);
        }
    }
}

fn leading_string_literal(args: &str) -> Option<String> {
    let bytes = args.as_bytes();
    let mut i = 0;
    let mut out = String::new();
    let mut found = false;
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if bytes.get(i) != Some(&b'"') {
            break;
        }
        found = true;
        i += 1;
        let start = i;
        while i < bytes.len() && bytes[i] != b'"' {
            if bytes[i] == b'\\' {
                i += 1;
            }
            i += 1;
        }
        out.push_str(args.get(start..i.min(args.len()))?);
        i += 1;
    }
    let rest = args[i.min(args.len())..].trim_start();
    if found && (rest.is_empty() || rest.starts_with(',')) {
        Some(out)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Conversion {
    Read(InputKind),
    Unknown(String),
}

fn scanf_conversions(format: &str) -> Vec<Conversion> {
    let chars: Vec<char> = format.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] != '%' {
            i += 1;
            continue;
        }
        i += 1;
        if chars.get(i) == Some(&'%') {
            i += 1;
            continue;
        }
        let suppressed = chars.get(i) == Some(&'*');
        if suppressed {
            i += 1;
        }
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let len_start = i;
        while i < chars.len() && matches!(chars[i], 'h' | 'l' | 'j' | 'z' | 't' | 'L' | 'q') {
            i += 1;
        }
        let length: String = chars[len_start..i].iter().collect();
        let Some(&c) = chars.get(i) else {
            break;
        };
        i += 1;
        let conv = match c {
            'd' | 'i' | 'u' | 'o' | 'x' | 'X' => Some(Conversion::Read(InputKind::Integer)),
            'f' | 'F' | 'e' | 'E' | 'g' | 'G' | 'a' | 'A' => Some(Conversion::Read(InputKind::Float)),
            'c' => Some(Conversion::Read(InputKind::Char)),
            's' => Some(Conversion::Read(InputKind::String)),
            '[' => {
                // scanset: skip to the closing bracket, a leading ']' is literal
                if chars.get(i) == Some(&'^') {
                    i += 1;
                }
                if chars.get(i) == Some(&']') {
                    i += 1;
                }
                while i < chars.len() && chars[i] != ']' {
                    i += 1;
                }
                i += 1;
                Some(Conversion::Read(InputKind::String))
            }
            'n' => None,
            other => Some(Conversion::Unknown(format!("{length}{other}"))),
        };
        if let Some(conv) = conv {
            if !suppressed {
                out.push(conv);
            }
        }
    }
    out
}

/// True when the site sits in a `for`/`while`/`do` body, braced or not.
fn c_site_in_loop(masked: &[u8], site: usize) -> bool {
    let mut stack: Vec<bool> = Vec::new();
    for i in 0..site {
        match masked[i] {
            b'{' => stack.push(brace_opens_loop(masked, i)),
            b'}' => {
                stack.pop();
            }
            _ => {}
        }
    }
    if stack.iter().any(|&l| l) {
        return true;
    }
    // unbraced body: the statement text since the previous ; { or }
    let mut depth = 0i32;
    let mut stmt_start = 0;
    for i in (0..site).rev() {
        match masked[i] {
            b')' => depth += 1,
            b'(' => depth -= 1,
            b';' | b'{' | b'}' if depth <= 0 => {
                stmt_start = i + 1;
                break;
            }
            _ => {}
        }
    }
    let stmt = String::from_utf8_lossy(&masked[stmt_start..site]);
    static LOOP_HEAD: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"^\s*(?:(?:for|while)\s*\(|do\b)").unwrap());
    LOOP_HEAD.is_match(&stmt)
}

fn brace_opens_loop(masked: &[u8], brace: usize) -> bool {
    let mut j = brace;
    while j > 0 && masked[j - 1].is_ascii_whitespace() {
        j -= 1;
    }
    if j >= 2 && &masked[j - 2..j] == b"do" && (j == 2 || !is_ident(masked[j - 3])) {
        return true;
    }
    if j == 0 || masked[j - 1] != b')' {
        return false;
    }
    // walk back to the matching '('
    let mut depth = 0usize;
    let mut k = j;
    while k > 0 {
        k -= 1;
        match masked[k] {
            b')' => depth += 1,
            b'(' => {
                depth -= 1;
                if depth == 0 {
                    break;
                }
            }
            _ => {}
        }
    }
    while k > 0 && masked[k - 1].is_ascii_whitespace() {
        k -= 1;
    }
    let end = k;
    while k > 0 && is_ident(masked[k - 1]) {
        k -= 1;
    }
    matches!(&masked[k..end], b"for" | b"while")
}

fn is_ident(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Python flavour of [`mask_c`]: `#` comments and all string literal forms.
fn mask_python(source: &str) -> Vec<u8> {
    let src = source.as_bytes();
    let mut out = src.to_vec();
    let mut i = 0;
    while i < src.len() {
        match src[i] {
            b'#' => {
                while i < src.len() && src[i] != b'\n' {
                    out[i] = b' ';
                    i += 1;
                }
            }
            q @ (b'"' | b'\'') => {
                let triple = src.get(i + 1) == Some(&q) && src.get(i + 2) == Some(&q);
                let open = if triple { 3 } else { 1 };
                i += open;
                loop {
                    if i >= src.len() {
                        break;
                    }
                    if src[i] == b'\\' && i + 1 < src.len() {
                        out[i] = b'_';
                        if src[i + 1] != b'\n' {
                            out[i + 1] = b'_';
                        }
                        i += 2;
                        continue;
                    }
                    if triple {
                        if src[i] == q && src.get(i + 1) == Some(&q) && src.get(i + 2) == Some(&q) {
                            i += 3;
                            break;
                        }
                    } else if src[i] == q || src[i] == b'\n' {
                        i += 1;
                        break;
                    }
                    if src[i] != b'\n' {
                        out[i] = b'_';
                    }
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    out
}

static PY_READ_SITE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:^|[^\w.])(input|sys\.stdin\.readline|sys\.stdin\.read)\s*\(").unwrap()
});
static PY_CAST_BEFORE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(int|float|str)\s*\(\s*$").unwrap());

fn scan_python(source: &str) -> (Vec<InputKind>, Vec<AnalyzerWarning>) {
    let masked = mask_python(source);
    let masked_str = String::from_utf8_lossy(&masked).into_owned();
    let mut kinds = Vec::new();
    let mut warnings = Vec::new();

    for caps in PY_READ_SITE.captures_iter(&masked_str) {
        let call = caps.get(1).unwrap();
        let line = line_of(source, call.start());
        let line_start = masked_str[..call.start()].rfind('\n').map_or(0, |p| p + 1);
        let line_end = masked_str[call.start()..]
            .find('\n')
            .map_or(masked_str.len(), |p| call.start() + p);
        let prefix = &masked_str[line_start..call.start()];
        let after_open = caps.get(0).unwrap().end();
        let close = matching_paren(&masked, after_open - 1).unwrap_or(line_end);
        let suffix = masked_str.get(close + 1..line_end).unwrap_or("");

        if call.as_str() == "sys.stdin.read" {
            warnings.push(AnalyzerWarning::at(
                line,
                "sys.stdin.read consumes all remaining input; counted as one string read",
            ));
            kinds.push(InputKind::String);
            continue;
        }

        let kind = match PY_CAST_BEFORE.captures(prefix).map(|c| c.get(1).unwrap().as_str()) {
            Some("int") => InputKind::Integer,
            Some("float") => InputKind::Float,
            _ => {
                if suffix.trim_start().starts_with(".split") {
                    warnings.push(AnalyzerWarning::at(
                        line,
                        "one line split into several values; counted as one string read",
                    ));
                }
                InputKind::String
            }
        };
        kinds.push(kind);

        if python_site_in_loop(&masked_str, line_start, suffix) {
            warnings.push(AnalyzerWarning::at(
                line,
                "input read inside a loop: counted once per source site",
            ));
        }
    }
    (kinds, warnings)
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

fn python_site_in_loop(masked: &str, line_start: usize, suffix: &str) -> bool {
    static COMPREHENSION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bfor\b").unwrap());
    if COMPREHENSION.is_match(suffix) {
        return true;
    }
    let current = &masked[line_start..];
    let current = current.split('\n').next().unwrap_or("");
    let mut indent = indent_of(current);
    for prev in masked[..line_start].lines().rev() {
        if prev.trim().is_empty() {
            continue;
        }
        let ind = indent_of(prev);
        if ind < indent {
            let head = prev.trim_start();
            if head.starts_with("for ") || head.starts_with("while ") || head.starts_with("while(") {
                return true;
            }
            indent = ind;
            if indent == 0 {
                break;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use InputKind::*;

    fn kinds(src: &str, lang: TargetLanguage) -> Vec<InputKind> {
        extract_input_signature(src, lang).signature.kinds().to_vec()
    }

    #[test]
    fn language_from_extension() {
        assert_eq!(detect_language(Path::new("prog.c")).unwrap(), TargetLanguage::C);
        assert_eq!(detect_language(Path::new("prog.py")).unwrap(), TargetLanguage::Python);
        assert!(matches!(
            detect_language(Path::new("prog.java")),
            Err(AnalyzerError::UnsupportedLanguage(_))
        ));
        assert!(detect_language(Path::new("Makefile")).is_err());
    }

    #[test]
    fn python_casts() {
        let a = extract_input_signature("x = int(input())\ny = input()", TargetLanguage::Python);
        assert_eq!(a.signature.count(), 2);
        assert_eq!(a.signature.kinds(), &[Integer, String]);
        assert!(a.warnings.is_empty());
        assert_eq!(
            kinds("a = float( input('v: '))\nb = str(input())\n", TargetLanguage::Python),
            vec![Float, String]
        );
    }

    #[test]
    fn c_scanf_specifiers() {
        let src = "int main(){int a,b; scanf(\"%d %d\", &a, &b); return 0;}";
        let a = extract_input_signature(src, TargetLanguage::C);
        assert_eq!(a.signature.count(), 2);
        assert_eq!(a.signature.kinds(), &[Integer, Integer]);
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn no_reads() {
        for lang in [TargetLanguage::C, TargetLanguage::Python] {
            let a = extract_input_signature("print('hi')\n", lang);
            assert_eq!(a.signature.count(), 0);
            assert!(a.signature.kinds().is_empty());
        }
    }

    #[test]
    fn c_conversion_table() {
        let src = r#"scanf("%i%u%ld %lf %f %c %s %%d %*d %5d %hhd %[^\n] %n");"#;
        assert_eq!(
            kinds(src, TargetLanguage::C),
            vec![Integer, Integer, Integer, Float, Float, Char, String, Integer, Integer, String]
        );
    }

    #[test]
    fn c_ignores_comments_and_strings() {
        let src = r#"
// scanf("%d", &x);
/* scanf("%d %d", &x, &y); */
int main() {
    printf("call scanf(\"%d\") please\n");
    fscanf(stdin, "%d", &x);
    fscanf(fp, "%d", &y);
    return 0;
}"#;
        assert_eq!(kinds(src, TargetLanguage::C), vec![Integer]);
    }

    #[test]
    fn c_concatenated_format_and_fgets() {
        let src = "scanf(\"%d\" \" %c\", &a, &c);\nfgets(buf, sizeof buf, stdin);\nfgets(buf, 10, f);";
        assert_eq!(kinds(src, TargetLanguage::C), vec![Integer, Char, String]);
    }

    #[test]
    fn c_non_literal_format_warns() {
        let a = extract_input_signature("scanf(fmt, &a);", TargetLanguage::C);
        assert_eq!(a.signature.kinds(), &[String]);
        assert_eq!(a.warnings.len(), 1);
        assert_eq!(a.warnings[0].line, Some(1));
    }

    #[test]
    fn c_unknown_conversion_warns() {
        let a = extract_input_signature("scanf(\"%p\", &p);", TargetLanguage::C);
        assert_eq!(a.signature.kinds(), &[String]);
        assert_eq!(a.warnings.len(), 1);
    }

    #[test]
    fn c_loop_sites_warn_once_per_site() {
        let src = "int main(){\n  while (1) {\n    scanf(\"%d\", &x);\n  }\n}\n";
        let a = extract_input_signature(src, TargetLanguage::C);
        assert_eq!(a.signature.count(), 1);
        assert_eq!(a.warnings.len(), 1);
        assert_eq!(a.warnings[0].line, Some(3));

        let unbraced = "int main(){\n  for (i = 0; i < 3; i++)\n    scanf(\"%d\", &v[i]);\n}\n";
        assert_eq!(extract_input_signature(unbraced, TargetLanguage::C).warnings.len(), 1);

        let plain = "int main(){\n  if (x) {\n    scanf(\"%d\", &x);\n  }\n}\n";
        assert!(extract_input_signature(plain, TargetLanguage::C).warnings.is_empty());
    }

    #[test]
    fn python_ignores_comments_and_strings() {
        let src = "# x = int(input())\ns = \"input()\"\nt = '''\ninput()\n'''\nn = int(input())\nobj.input()\n";
        assert_eq!(kinds(src, TargetLanguage::Python), vec![Integer]);
    }

    #[test]
    fn python_loop_and_split_warnings() {
        let src = "n = int(input())\nfor i in range(n):\n    if True:\n        v = int(input())\n";
        let a = extract_input_signature(src, TargetLanguage::Python);
        assert_eq!(a.signature.kinds(), &[Integer, Integer]);
        assert_eq!(a.warnings.len(), 1);
        assert_eq!(a.warnings[0].line, Some(4));

        let comp = extract_input_signature("xs = [int(input()) for _ in range(3)]", TargetLanguage::Python);
        assert_eq!(comp.warnings.len(), 1);

        let split = extract_input_signature("a, b = input().split()", TargetLanguage::Python);
        assert_eq!(split.signature.kinds(), &[String]);
        assert_eq!(split.warnings.len(), 1);
    }

    #[test]
    fn python_stdin_readline() {
        let src = "import sys\nline = sys.stdin.readline()\nk = int(sys.stdin.readline())\n";
        assert_eq!(kinds(src, TargetLanguage::Python), vec![String, Integer]);
    }

    proptest::proptest! {
        #[test]
        fn signature_is_pure_and_consistent(src in "[a-z(){};%\" \\n]{0,120}") {
            for lang in [TargetLanguage::C, TargetLanguage::Python] {
                let a = extract_input_signature(&src, lang);
                let b = extract_input_signature(&src, lang);
                proptest::prop_assert_eq!(&a, &b);
                proptest::prop_assert_eq!(a.signature.count(), a.signature.kinds().len());
            }
        }
    }
}
