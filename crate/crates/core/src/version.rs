// SPDX-License-Identifier: Apache-2.0

//! Version labels naming stage workspaces.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VersionError {
    #[error("negative config index {name} = {value}")]
    NegativeIndex { name: &'static str, value: i64 },
    #[error("`{0}` is not a legal version label")]
    IllegalLabel(String),
}

/// A label is used verbatim as a directory name.
pub fn is_legal_label(label: &str) -> bool {
    !label.is_empty()
        && label != "."
        && label != ".."
        && label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

pub fn check_label(label: &str) -> Result<(), VersionError> {
    if is_legal_label(label) {
        Ok(())
    } else {
        Err(VersionError::IllegalLabel(label.to_string()))
    }
}

/// Implementation version binding a placement run to its synthesis version
/// and configuration indices: `{syn_ver}__g{g_idx}__p{p_idx}`.
///
/// The two numeric fields are decimal without leading zeros and anchored at
/// the end of the label, so the triple is recoverable from the label and the
/// mapping is injective.
pub fn make_impl_ver(syn_ver: &str, g_idx: i64, p_idx: i64) -> Result<String, VersionError> {
    check_label(syn_ver)?;
    if g_idx < 0 {
        return Err(VersionError::NegativeIndex { name: "g_idx", value: g_idx });
    }
    if p_idx < 0 {
        return Err(VersionError::NegativeIndex { name: "p_idx", value: p_idx });
    }
    Ok(format!("{syn_ver}__g{g_idx}__p{p_idx}"))
}

/// Inverse of [`make_impl_ver`].
pub fn parse_impl_ver(label: &str) -> Option<(&str, u64, u64)> {
    let (rest, p) = label.rsplit_once("__p")?;
    let (syn, g) = rest.rsplit_once("__g")?;
    let num = |s: &str| -> Option<u64> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
            None
        } else {
            s.parse().ok()
        }
    };
    Some((syn, num(g)?, num(p)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn format() {
        assert_eq!(make_impl_ver("v1", 0, 2).unwrap(), "v1__g0__p2");
        assert_eq!(make_impl_ver("v1", 0, 2).unwrap(), make_impl_ver("v1", 0, 2).unwrap());
    }

    #[test]
    fn errors() {
        assert_eq!(make_impl_ver("v1", -1, 0), Err(VersionError::NegativeIndex { name: "g_idx", value: -1 }));
        assert!(matches!(make_impl_ver("v1", 0, -3), Err(VersionError::NegativeIndex { name: "p_idx", .. })));
        assert!(matches!(make_impl_ver("a/b", 0, 0), Err(VersionError::IllegalLabel(_))));
        assert!(matches!(make_impl_ver("", 0, 0), Err(VersionError::IllegalLabel(_))));
    }

    proptest! {
        #[test]
        fn round_trips(syn in "[A-Za-z0-9_.-]{1,12}", g in 0i64..100_000, p in 0i64..100_000) {
            prop_assume!(is_legal_label(&syn));
            let label = make_impl_ver(&syn, g, p).unwrap();
            prop_assert!(is_legal_label(&label));
            prop_assert_eq!(parse_impl_ver(&label), Some((syn.as_str(), g as u64, p as u64)));
        }
    }
}
