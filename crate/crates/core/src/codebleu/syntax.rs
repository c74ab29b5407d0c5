// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use num_traits::Float;

use super::Component;

/// Drops a trailing `;#` comment that sits outside quotes and braces.
fn strip_trailing_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    let (mut quoted, mut depth) = (false, 0i32);
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 1,
            b'"' if depth == 0 => quoted = !quoted,
            b'{' if !quoted => depth += 1,
            b'}' if !quoted => depth -= 1,
            b';' if !quoted && depth <= 0 => {
                let rest = line[i + 1..].trim_start();
                if rest.starts_with('#') {
                    return &line[..i];
                }
            }
            _ => {}
        }
        i += 1;
    }
    line
}

/// Lines that take part in syntax matching: trimmed, without comments and
/// blank lines.
pub fn normalized_lines(script: &str) -> Vec<String> {
    script
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| strip_trailing_comment(l).trim_end().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Share of reference lines matched exactly by candidate lines, each
/// candidate line used at most once.
pub fn syntax_match<T: Float>(reference: &str, candidate: &str) -> Component<T> {
    let reference = normalized_lines(reference);
    let candidate = normalized_lines(candidate);
    let mut available: HashMap<&str, usize> = HashMap::new();
    for l in &reference {
        *available.entry(l.as_str()).or_insert(0) += 1;
    }
    let mut matched = 0;
    for l in &candidate {
        if let Some(n) = available.get_mut(l.as_str()) {
            if *n > 0 {
                *n -= 1;
                matched += 1;
            }
        }
    }
    Component::ratio(matched, reference.len(), T::zero())
}
