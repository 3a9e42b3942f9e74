//! The chapters of the guide under `book/src`, compiled as doc-tests so the
//! snippets stay in sync with the library. Build the rendered book with
//! `mdbook build book`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/gallery.md")]
pub mod gallery {}

#[doc = include_str!("../../../book/src/hnm.md")]
pub mod hnm {}

#[doc = include_str!("../../../book/src/hpm.md")]
pub mod hpm {}

#[doc = include_str!("../../../book/src/objective.md")]
pub mod objective {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/synth.md")]
pub mod synth {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;
    use std::path::Path;

    /// Every chapter listed in the summary is included above, and vice versa.
    #[test]
    fn summary_matches_included_chapters() {
        let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../book/src");
        let summary = std::fs::read_to_string(src.join("SUMMARY.md")).unwrap();
        let listed: BTreeSet<&str> = summary
            .split("](")
            .skip(1)
            .map(|rest| rest.split(')').next().unwrap())
            .collect();
        let lib = include_str!("lib.rs");
        let included: BTreeSet<&str> = lib
            .split("book/src/")
            .skip(1)
            .filter_map(|rest| rest.split('"').next())
            .filter(|name| name.ends_with(".md") && *name != "SUMMARY.md")
            .collect();
        assert_eq!(listed, included);
        for name in &listed {
            assert!(src.join(name).is_file(), "{name} missing");
        }
    }
}
