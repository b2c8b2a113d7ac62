//! Line tokenizer: literal abstraction and special-character stripping.

/// Generic token replacing a quoted string literal.
pub const STR_TOKEN: &str = "<str>";
/// Generic token replacing a numeric literal.
pub const NUM_TOKEN: &str = "<num>";

/// Characters that separate tokens and are discarded (whitespace too).
pub const REMOVED_CHARS: &[char] = &['{', '}', '(', ')', ',', '.', ':', ';', '\'', '!', '"'];

fn is_separator(c: char) -> bool {
    c.is_whitespace() || REMOVED_CHARS.contains(&c)
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// Tokenizes one source line.
///
/// Quoted literals become [`STR_TOKEN`] before any stripping, numeric
/// literals (including decimals spanning a `.`) become [`NUM_TOKEN`], then
/// the line is split on the removal set and whitespace.
pub fn preprocess_line(content: &str) -> Vec<String> {
    let no_strings = replace_string_literals(content);
    let no_decimals = replace_decimal_literals(&no_strings);
    no_decimals
        .split(is_separator)
        .filter(|t| !t.is_empty())
        .map(|t| {
            if is_numeric_literal(t) {
                NUM_TOKEN.to_string()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Replaces `"..."` and `'...'` spans (backslash escapes honored) with the
/// string token. Unterminated quotes are left for the stripping pass.
fn replace_string_literals(line: &str) -> String {
    let chars: Vec<char> = line.chars().collect();
    let mut out = String::with_capacity(line.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' || c == '\'' {
            if let Some(end) = closing_quote(&chars, i) {
                out.push(' ');
                out.push_str(STR_TOKEN);
                out.push(' ');
                i = end + 1;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

fn closing_quote(chars: &[char], open: usize) -> Option<usize> {
    let quote = chars[open];
    let mut j = open + 1;
    while j < chars.len() {
        match chars[j] {
            '\\' => j += 2,
            c if c == quote => return Some(j),
            _ => j += 1,
        }
    }
    None
}

/// Collapses `digits.digits[exp][suffix]` into one numeric token so the `.`
/// separator does not split it. Digits glued to identifiers are untouched.
fn replace_decimal_literals(line: &str) -> String {
    let chars: Vec<char> = line.chars().collect();
    let mut out = String::with_capacity(line.len());
    let mut i = 0;
    while i < chars.len() {
        let starts_word = i == 0 || !is_word(chars[i - 1]);
        if starts_word && chars[i].is_ascii_digit() {
            if let Some(end) = decimal_end(&chars, i) {
                out.push(' ');
                out.push_str(NUM_TOKEN);
                out.push(' ');
                i = end;
                continue;
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

/// End (exclusive) of a decimal literal with a fractional part starting at
/// `start`, if one is there.
fn decimal_end(chars: &[char], start: usize) -> Option<usize> {
    let digits = |mut j: usize| {
        while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '_') {
            j += 1;
        }
        j
    };
    let mut j = digits(start);
    if j + 1 >= chars.len() || chars[j] != '.' || !chars[j + 1].is_ascii_digit() {
        return None;
    }
    j = digits(j + 1);
    if j < chars.len() && matches!(chars[j], 'e' | 'E') {
        let mut k = j + 1;
        if k < chars.len() && matches!(chars[k], '+' | '-') {
            k += 1;
        }
        if k < chars.len() && chars[k].is_ascii_digit() {
            j = digits(k);
        }
    }
    if j < chars.len() && matches!(chars[j], 'f' | 'F' | 'd' | 'D') {
        j += 1;
    }
    if j < chars.len() && is_word(chars[j]) {
        return None;
    }
    Some(j)
}

/// Whole-token numeric literal: decimal integer, hexadecimal, binary, or a
/// float with exponent, each with an optional type suffix.
pub fn is_numeric_literal(token: &str) -> bool {
    let body = token
        .strip_suffix(['l', 'L', 'f', 'F', 'd', 'D'])
        .filter(|b| !b.is_empty())
        .unwrap_or(token);
    if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        return !hex.is_empty() && hex.chars().all(|c| c.is_ascii_hexdigit() || c == '_');
    }
    if let Some(bin) = body.strip_prefix("0b").or_else(|| body.strip_prefix("0B")) {
        return !bin.is_empty() && bin.chars().all(|c| c == '0' || c == '1' || c == '_');
    }
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], Some(&body[pos + 1..])),
        None => (body, None),
    };
    let mantissa_ok = mantissa.starts_with(|c: char| c.is_ascii_digit())
        && mantissa.chars().all(|c| c.is_ascii_digit() || c == '_');
    let exponent_ok = exponent.is_none_or(|e| {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        !e.is_empty() && e.chars().all(|c| c.is_ascii_digit())
    });
    mantissa_ok && exponent_ok
}
