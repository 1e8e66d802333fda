//! Lenient HTML to plain-text conversion with boilerplate stripping.
//!
//! The scanner never fails: anything that does not parse as a tag is kept
//! as text. Elements on the drop-list (navigation chrome, headers, footers,
//! sidebars) are removed together with their subtree, as are `script`,
//! `style`, `noscript` and `template` bodies.

const DROP_TAGS: &[&str] = &["nav", "header", "footer", "aside"];
const DROP_ATTR_MARKERS: &[&str] = &["sidebar", "header", "footer", "nav"];
const RAW_TEXT_TAGS: &[&str] = &["script", "style", "noscript", "template", "textarea"];
const VOID_TAGS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr",
];
const BLOCK_TAGS: &[&str] = &[
    "address",
    "article",
    "blockquote",
    "body",
    "br",
    "caption",
    "dd",
    "details",
    "div",
    "dl",
    "dt",
    "fieldset",
    "figcaption",
    "figure",
    "form",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "head",
    "hr",
    "html",
    "li",
    "main",
    "ol",
    "p",
    "pre",
    "section",
    "summary",
    "table",
    "tbody",
    "td",
    "tfoot",
    "th",
    "thead",
    "title",
    "tr",
    "ul",
];

/// Converts HTML to visible plain text.
///
/// Block elements become line breaks, whitespace runs inside a line collapse
/// to one space and empty lines are dropped. The conversion is repeated until
/// the text stops changing, so the result is a fixed point: feeding it back
/// in returns it unchanged (entity-escaped markup such as `&lt;b&gt;` would
/// otherwise surface as a tag on the next pass).
pub fn html_to_text(html: &str) -> String {
    let mut current = convert_once(html);
    loop {
        let next = convert_once(&current);
        // Every effective pass strips markup or entities, so length shrinks.
        if next == current || next.len() >= current.len() {
            return current;
        }
        current = next;
    }
}

#[derive(Debug)]
struct Tag<'a> {
    name: String,
    attrs: Vec<(String, &'a str)>,
    closing: bool,
    self_closing: bool,
}

fn convert_once(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    // Source line breaks are layout only once the input is real markup;
    // plain text keeps its lines.
    let flow = contains_markup(html);
    // (tag name, nesting depth) of the element currently being dropped
    let mut dropping: Option<(String, usize)> = None;
    let bytes = html.as_bytes();
    let mut i = 0;
    let mut text_start = 0;

    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let Some((tag_end, tag)) = scan_markup(html, i) else {
            i += 1;
            continue;
        };
        if dropping.is_none() {
            push_text(&mut out, &html[text_start..i], flow);
        }
        i = tag_end;
        text_start = i;

        let Some(tag) = tag else {
            // comment, doctype or processing instruction
            continue;
        };

        if !tag.closing && RAW_TEXT_TAGS.contains(&tag.name.as_str()) && !tag.self_closing {
            i = skip_raw_text(html, i, &tag.name);
            text_start = i;
            continue;
        }

        if let Some((name, depth)) = dropping.as_mut() {
            if *name == tag.name && !is_void(&tag.name) {
                if tag.closing {
                    *depth -= 1;
                } else if !tag.self_closing {
                    *depth += 1;
                }
                if *depth == 0 {
                    dropping = None;
                    out.push('\n');
                }
            }
            continue;
        }

        if !tag.closing && is_boilerplate(&tag) {
            if !tag.self_closing && !is_void(&tag.name) {
                dropping = Some((tag.name.clone(), 1));
            }
            out.push('\n');
            continue;
        }

        if BLOCK_TAGS.contains(&tag.name.as_str()) {
            out.push('\n');
        } else if matches!(tag.name.as_str(), "td" | "th") {
            out.push(' ');
        }
    }
    if dropping.is_none() {
        push_text(&mut out, &html[text_start..], flow);
    }
    tidy_lines(&out)
}

fn is_void(name: &str) -> bool {
    VOID_TAGS.contains(&name)
}

fn is_boilerplate(tag: &Tag<'_>) -> bool {
    if DROP_TAGS.contains(&tag.name.as_str()) {
        return true;
    }
    tag.attrs.iter().any(|(key, value)| {
        (key == "class" || key == "id") && {
            let value = value.to_ascii_lowercase();
            DROP_ATTR_MARKERS.iter().any(|m| value.contains(m))
        }
    })
}

/// Scans markup starting at `start` (which holds `<`).
///
/// Returns `None` when the bytes do not form markup (the `<` is then text),
/// `Some((end, None))` for comments/doctypes and `Some((end, Some(tag)))`
/// for element tags.
fn scan_markup(html: &str, start: usize) -> Option<(usize, Option<Tag<'_>>)> {
    let bytes = html.as_bytes();
    let rest = &html[start..];
    if let Some(body) = rest.strip_prefix("<!--") {
        let end = body.find("-->").map(|p| start + 4 + p + 3)?;
        return Some((end, None));
    }
    let next = *bytes.get(start + 1)?;
    if next == b'!' || next == b'?' {
        let end = rest.find('>')?;
        return Some((start + end + 1, None));
    }
    let (closing, name_start) = if next == b'/' {
        (true, start + 2)
    } else {
        (false, start + 1)
    };
    if !bytes.get(name_start)?.is_ascii_alphabetic() {
        return None;
    }
    let mut j = name_start;
    while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'-' || bytes[j] == b':') {
        j += 1;
    }
    let name = html[name_start..j].to_ascii_lowercase();

    let mut attrs = Vec::new();
    let mut self_closing = false;
    loop {
        while j < bytes.len() && bytes[j].is_ascii_whitespace() {
            j += 1;
        }
        match bytes.get(j)? {
            b'>' => {
                j += 1;
                break;
            }
            b'/' => {
                self_closing = true;
                j += 1;
                continue;
            }
            _ => {}
        }
        self_closing = false;
        let key_start = j;
        while j < bytes.len() && !bytes[j].is_ascii_whitespace() && !matches!(bytes[j], b'=' | b'>' | b'/') {
            j += 1;
        }
        if j == key_start {
            // stray '=' or similar; skip one byte
            j += 1;
            continue;
        }
        let key = html[key_start..j].to_ascii_lowercase();
        while j < bytes.len() && bytes[j].is_ascii_whitespace() {
            j += 1;
        }
        let mut value = "";
        if bytes.get(j) == Some(&b'=') {
            j += 1;
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            match *bytes.get(j)? {
                q @ (b'"' | b'\'') => {
                    let close = html[j + 1..].find(q as char)?;
                    value = &html[j + 1..j + 1 + close];
                    j += close + 2;
                }
                _ => {
                    let v_start = j;
                    while j < bytes.len() && !bytes[j].is_ascii_whitespace() && bytes[j] != b'>' {
                        j += 1;
                    }
                    value = &html[v_start..j];
                }
            }
        }
        attrs.push((key, value));
    }
    Some((
        j,
        Some(Tag {
            name,
            attrs,
            closing,
            self_closing,
        }),
    ))
}

/// Returns the offset just past the closing tag of a raw-text element, or
/// the end of input when it is never closed.
fn skip_raw_text(html: &str, from: usize, name: &str) -> usize {
    let needle = format!("</{name}");
    let haystack = html[from..].to_ascii_lowercase();
    match haystack.find(&needle) {
        Some(p) => {
            let after = from + p;
            html[after..].find('>').map_or(html.len(), |e| after + e + 1)
        }
        None => html.len(),
    }
}

fn contains_markup(html: &str) -> bool {
    html.match_indices('<').any(|(i, _)| scan_markup(html, i).is_some())
}

fn push_text(out: &mut String, raw: &str, flow: bool) {
    let start = out.len();
    if raw.contains('&') {
        out.push_str(&decode_entities(raw));
    } else {
        out.push_str(raw);
    }
    if flow && out[start..].contains(['\n', '\r']) {
        let flowed = out[start..].replace(['\n', '\r'], " ");
        out.truncate(start);
        out.push_str(&flowed);
    }
}

fn decode_entities(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let decoded = rest[1..]
            .find(';')
            .filter(|&semi| semi > 0 && semi <= 10)
            .and_then(|semi| decode_entity(&rest[1..=semi]).map(|c| (c, semi + 2)));
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_entity(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "ndash" => '\u{2013}',
        "mdash" => '\u{2014}',
        "hellip" => '\u{2026}',
        "copy" => '\u{a9}',
        "reg" => '\u{ae}',
        "trade" => '\u{2122}',
        _ => return None,
    })
}

fn tidy_lines(text: &str) -> String {
    let mut lines = Vec::new();
    for line in text.lines() {
        let joined = line.split_whitespace().collect::<Vec<_>>().join(" ");
        if !joined.is_empty() {
            lines.push(joined);
        }
    }
    lines.join("\n")
}
