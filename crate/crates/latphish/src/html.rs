//! Minimal HTML scanning for email bodies: anchor extraction and tag
//! stripping. Email HTML in the wild is frequently malformed, so this is a
//! forgiving single-pass scanner rather than a strict parser; anything it
//! cannot make sense of degrades to plain text.

/// One `<a>` element or bare URL found in a body, in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLink {
    pub href: String,
    pub display_text: String,
    /// True for URLs found loose in text rather than inside an anchor.
    pub bare: bool,
}

/// Scan a body for anchors and bare absolute URLs, preserving document order.
///
/// Anchors contribute (href, concatenated visible text); URLs appearing
/// outside any anchor contribute themselves as display text.
pub fn scan_links(body_html: &str) -> Vec<RawLink> {
    let mut out = Vec::new();
    let mut text_run = String::new();
    let bytes = body_html.as_bytes();
    let mut i = 0;

    let flush_text = |run: &mut String, out: &mut Vec<RawLink>| {
        for url in find_bare_urls(run) {
            out.push(RawLink {
                display_text: url.clone(),
                href: url,
                bare: true,
            });
        }
        run.clear();
    };

    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some((tag, end)) = read_tag(body_html, i) {
                if tag.name.eq_ignore_ascii_case("a") && !tag.closing {
                    flush_text(&mut text_run, &mut out);
                    let href = tag.attr("href").unwrap_or_default();
                    let (display, after) = read_anchor_text(body_html, end);
                    out.push(RawLink {
                        href,
                        display_text: display,
                        bare: false,
                    });
                    i = after;
                    continue;
                }
                if is_block_tag(&tag.name) {
                    text_run.push(' ');
                }
                if tag.name.eq_ignore_ascii_case("script")
                    || tag.name.eq_ignore_ascii_case("style")
                {
                    i = skip_element(body_html, end, &tag.name);
                    continue;
                }
                i = end;
                continue;
            }
            // Stray '<': treat as text.
            text_run.push('<');
            i += 1;
        } else {
            let ch_end = next_char_boundary(body_html, i);
            text_run.push_str(&body_html[i..ch_end]);
            i = ch_end;
        }
    }
    flush_text(&mut text_run, &mut out);
    out.iter_mut().for_each(|l| {
        l.display_text = decode_entities(&l.display_text);
        l.href = decode_entities(l.href.trim());
        l.display_text = collapse_ws(&l.display_text);
    });
    out
}

/// Strip tags and decode entities, yielding the visible text of a body.
/// Block-level tags become whitespace so words do not run together.
pub fn strip_tags(body_html: &str) -> String {
    let mut text = String::with_capacity(body_html.len());
    let bytes = body_html.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some((tag, end)) = read_tag(body_html, i) {
                if tag.name.eq_ignore_ascii_case("script")
                    || tag.name.eq_ignore_ascii_case("style")
                {
                    i = skip_element(body_html, end, &tag.name);
                    continue;
                }
                if is_block_tag(&tag.name) {
                    text.push('\n');
                } else {
                    text.push(' ');
                }
                i = end;
                continue;
            }
            text.push('<');
            i += 1;
        } else {
            let ch_end = next_char_boundary(body_html, i);
            text.push_str(&body_html[i..ch_end]);
            i = ch_end;
        }
    }
    decode_entities(&text)
}

/// Collapse runs of whitespace into single spaces and trim.
pub fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Tag {
    name: String,
    closing: bool,
    attrs: Vec<(String, String)>,
}

impl Tag {
    fn attr(&self, name: &str) -> Option<String> {
        self.attrs
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.clone())
    }
}

/// Parse a tag starting at `start` (which must point at '<'). Returns the
/// tag and the byte offset just past '>', or None if no closing '>' exists
/// or the content does not look like a tag.
fn read_tag(html: &str, start: usize) -> Option<(Tag, usize)> {
    let rest = &html[start + 1..];
    let mut chars = rest.char_indices();
    let (mut pos, first) = chars.next()?;
    let closing = first == '/';
    if closing {
        (pos, _) = chars.next()?;
    }
    let name_start = pos;
    let after_name = rest[name_start..]
        .find(|c: char| !c.is_ascii_alphanumeric())
        .map(|o| name_start + o)
        .unwrap_or(rest.len());
    let name = &rest[name_start..after_name];
    if name.is_empty() {
        // "<!--", "<!DOCTYPE", "<?" — skip to '>' without attr parsing.
        if first == '!' || first == '?' {
            let close = rest.find('>')?;
            return Some((
                Tag {
                    name: String::new(),
                    closing: false,
                    attrs: Vec::new(),
                },
                start + 1 + close + 1,
            ));
        }
        return None;
    }
    let close = rest[after_name..].find('>')? + after_name;
    let attrs = parse_attrs(&rest[after_name..close]);
    Some((
        Tag {
            name: name.to_string(),
            closing,
            attrs,
        },
        start + 1 + close + 1,
    ))
}

fn parse_attrs(s: &str) -> Vec<(String, String)> {
    let mut attrs = Vec::new();
    let mut rest = s;
    loop {
        rest = rest.trim_start_matches(|c: char| c.is_whitespace() || c == '/');
        if rest.is_empty() {
            break;
        }
        let name_end = rest
            .find(|c: char| c == '=' || c.is_whitespace() || c == '/')
            .unwrap_or(rest.len());
        let name = rest[..name_end].to_ascii_lowercase();
        rest = rest[name_end..].trim_start();
        if let Some(stripped) = rest.strip_prefix('=') {
            let v = stripped.trim_start();
            let (value, after) = if let Some(q) = v.strip_prefix('"') {
                let end = q.find('"').unwrap_or(q.len());
                (&q[..end], &q[(end + 1).min(q.len())..])
            } else if let Some(q) = v.strip_prefix('\'') {
                let end = q.find('\'').unwrap_or(q.len());
                (&q[..end], &q[(end + 1).min(q.len())..])
            } else {
                let end = v
                    .find(|c: char| c.is_whitespace() || c == '/')
                    .unwrap_or(v.len());
                (&v[..end], &v[end..])
            };
            if !name.is_empty() {
                attrs.push((name, value.to_string()));
            }
            rest = after;
        } else if !name.is_empty() {
            attrs.push((name, String::new()));
        } else {
            break;
        }
    }
    attrs
}

/// Collect the visible text between an opening `<a>` (body starts at `from`)
/// and its `</a>`, stripping nested tags. Returns (text, offset past `</a>`).
fn read_anchor_text(html: &str, from: usize) -> (String, usize) {
    let mut text = String::new();
    let bytes = html.as_bytes();
    let mut i = from;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some((tag, end)) = read_tag(html, i) {
                if tag.name.eq_ignore_ascii_case("a") {
                    // Closing tag ends the anchor; a nested opener is treated
                    // as if the current anchor ended (forgiving recovery).
                    return (text, if tag.closing { end } else { i });
                }
                if is_block_tag(&tag.name) {
                    text.push(' ');
                }
                i = end;
                continue;
            }
            text.push('<');
            i += 1;
        } else {
            let ch_end = next_char_boundary(html, i);
            text.push_str(&html[i..ch_end]);
            i = ch_end;
        }
    }
    (text, i)
}

/// Skip past `</name>` for raw-text elements (script/style).
fn skip_element(html: &str, from: usize, name: &str) -> usize {
    let lower = html[from..].to_ascii_lowercase();
    let needle = format!("</{}", name.to_ascii_lowercase());
    match lower.find(&needle) {
        Some(off) => {
            let after = from + off;
            match html[after..].find('>') {
                Some(gt) => after + gt + 1,
                None => html.len(),
            }
        }
        None => html.len(),
    }
}

fn is_block_tag(name: &str) -> bool {
    matches!(
        name.to_ascii_lowercase().as_str(),
        "br" | "p"
            | "div"
            | "tr"
            | "td"
            | "th"
            | "li"
            | "ul"
            | "ol"
            | "table"
            | "h1"
            | "h2"
            | "h3"
            | "h4"
            | "h5"
            | "h6"
            | "blockquote"
            | "hr"
            | "section"
            | "header"
            | "footer"
    )
}

fn next_char_boundary(s: &str, i: usize) -> usize {
    let mut j = i + 1;
    while j < s.len() && !s.is_char_boundary(j) {
        j += 1;
    }
    j
}

/// Find absolute http(s) URLs in plain text.
fn find_bare_urls(text: &str) -> Vec<String> {
    let mut urls = Vec::new();
    let mut rest = text;
    loop {
        let Some(pos) = rest.find("http") else {
            break;
        };
        let candidate = &rest[pos..];
        let scheme_ok =
            candidate.starts_with("http://") || candidate.starts_with("https://");
        if !scheme_ok {
            rest = &rest[pos + 4..];
            continue;
        }
        let end = candidate
            .find(|c: char| c.is_whitespace() || "<>\"'`".contains(c))
            .unwrap_or(candidate.len());
        let mut url = &candidate[..end];
        // Trailing sentence punctuation is not part of the URL.
        url = url.trim_end_matches(|c: char| ",.;:!?)]".contains(c));
        if url.len() > "https://".len() {
            urls.push(url.to_string());
        }
        rest = &candidate[end..];
    }
    urls
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let semi = rest[..rest.len().min(12)].find(';');
        let Some(semi) = semi else {
            out.push('&');
            rest = &rest[1..];
            continue;
        };
        let entity = &rest[1..semi];
        let decoded = match entity {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some(' '),
            _ => entity
                .strip_prefix("#x")
                .or_else(|| entity.strip_prefix("#X"))
                .and_then(|h| u32::from_str_radix(h, 16).ok())
                .or_else(|| entity.strip_prefix('#').and_then(|d| d.parse().ok()))
                .and_then(char::from_u32),
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[semi + 1..];
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_with_display_text() {
        let links = scan_links(r#"<a href="http://x.com/p">Click Here</a>"#);
        assert_eq!(links.len(), 1);
        assert_eq!(links[0].href, "http://x.com/p");
        assert_eq!(links[0].display_text, "Click Here");
        assert!(!links[0].bare);
    }

    #[test]
    fn bare_url_in_text() {
        let links = scan_links("see http://a.com/q for details");
        assert_eq!(links.len(), 1);
        assert_eq!(links[0].href, "http://a.com/q");
        assert_eq!(links[0].display_text, "http://a.com/q");
        assert!(links[0].bare);
    }

    #[test]
    fn order_of_appearance_preserved() {
        let body = r#"first http://one.com/a then <a href="http://two.com/b">two</a> and http://three.com/c"#;
        let links = scan_links(body);
        let hrefs: Vec<_> = links.iter().map(|l| l.href.as_str()).collect();
        assert_eq!(
            hrefs,
            ["http://one.com/a", "http://two.com/b", "http://three.com/c"]
        );
    }

    #[test]
    fn nested_markup_in_anchor() {
        let links = scan_links(r#"<a href="http://x.com"><b>View</b> <i>doc</i></a>"#);
        assert_eq!(links[0].display_text, "View doc");
    }

    #[test]
    fn no_urls() {
        assert!(scan_links("<p>plain note</p>").is_empty());
    }

    #[test]
    fn malformed_html_degrades_to_text_scan() {
        let links = scan_links("<a broken .. see https://z.example/p ok");
        assert_eq!(links.len(), 1);
        assert_eq!(links[0].href, "https://z.example/p");
    }

    #[test]
    fn strip_tags_and_entities() {
        let t = strip_tags("<div>Hello &amp; welcome<br>line&nbsp;two</div>");
        assert_eq!(collapse_ws(&t), "Hello & welcome line two");
    }

    #[test]
    fn strip_ignores_script_and_style() {
        let t = strip_tags("<style>.x{}</style><p>Body</p><script>var a=1;</script>");
        assert_eq!(collapse_ws(&t), "Body");
    }

    #[test]
    fn trailing_punctuation_not_in_bare_url() {
        let links = scan_links("go to http://a.com/q. now");
        assert_eq!(links[0].href, "http://a.com/q");
    }
}
