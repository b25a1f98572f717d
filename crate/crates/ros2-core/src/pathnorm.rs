//! Absolute-path normalization for the DFS namespace.
//!
//! `.` components and duplicate slashes collapse; `..` is rejected outright
//! so a resolved walk can never escape the mount. Component names follow
//! directory-entry rules: UTF-8, no NUL, at most 255 bytes.

use alloc::string::String;
use alloc::vec::Vec;

pub const MAX_NAME_LEN: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathError {
    NotAbsolute,
    ParentRef,
    BadName,
}

impl core::fmt::Display for PathError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::NotAbsolute => f.write_str("path must be absolute"),
            Self::ParentRef => f.write_str("'..' is not allowed"),
            Self::BadName => f.write_str("invalid path component"),
        }
    }
}

/// A normalized absolute path: its components plus whether the original
/// spelling ended in a slash (which constrains resolution to directories).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormPath {
    pub components: Vec<String>,
    pub trailing_slash: bool,
}

impl NormPath {
    pub fn is_root(&self) -> bool {
        self.components.is_empty()
    }

    /// Split into (parent components, leaf name). None for the root.
    pub fn split_leaf(&self) -> Option<(&[String], &str)> {
        self.components
            .split_last()
            .map(|(leaf, parents)| (parents, leaf.as_str()))
    }
}

/// Validates a single entry name (as used by create/mkdir).
pub fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= MAX_NAME_LEN
        && name != "."
        && name != ".."
        && !name.contains('/')
        && !name.contains('\0')
}

pub fn normalize(path: &str) -> Result<NormPath, PathError> {
    let Some(rest) = path.strip_prefix('/') else {
        return Err(PathError::NotAbsolute);
    };
    let trailing_slash = path.len() > 1 && path.ends_with('/');
    let mut components = Vec::new();
    for comp in rest.split('/') {
        match comp {
            "" | "." => continue,
            ".." => return Err(PathError::ParentRef),
            name => {
                if !valid_name(name) {
                    return Err(PathError::BadName);
                }
                components.push(String::from(name));
            }
        }
    }
    Ok(NormPath {
        components,
        trailing_slash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn comps(p: &str) -> Vec<String> {
        normalize(p).unwrap().components
    }

    #[test]
    fn root_is_empty() {
        let n = normalize("/").unwrap();
        assert!(n.is_root());
        assert!(!n.trailing_slash, "bare root is not 'trailing'");
    }

    #[test]
    fn dot_and_duplicate_slashes_collapse() {
        assert_eq!(comps("/a/./b"), comps("/a/b"));
        assert_eq!(comps("//a///b/"), vec!["a", "b"]);
    }

    #[test]
    fn trailing_slash_recorded() {
        assert!(normalize("/a/b/").unwrap().trailing_slash);
        assert!(!normalize("/a/b").unwrap().trailing_slash);
    }

    #[test]
    fn parent_ref_rejected() {
        assert_eq!(normalize("/a/../b"), Err(PathError::ParentRef));
    }

    #[test]
    fn relative_rejected() {
        assert_eq!(normalize("a/b"), Err(PathError::NotAbsolute));
        assert_eq!(normalize(""), Err(PathError::NotAbsolute));
    }

    #[test]
    fn name_rules() {
        assert!(valid_name("file.txt"));
        assert!(!valid_name(""));
        assert!(!valid_name("a\0b"));
        assert!(!valid_name(&"x".repeat(256)));
        assert!(valid_name(&"x".repeat(255)));
    }

    #[test]
    fn split_leaf() {
        let n = normalize("/a/b/c").unwrap();
        let (parents, leaf) = n.split_leaf().unwrap();
        assert_eq!(parents, &["a", "b"]);
        assert_eq!(leaf, "c");
        assert!(normalize("/").unwrap().split_leaf().is_none());
    }
}
