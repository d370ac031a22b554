//! Pure applicability functions shared by both ends of the protocol.
//!
//! They only compare tag strings, activity type labels and scope type labels
//! against the catalog; no concurrency semantics are involved.

use crate::catalog::MetaDataCatalog;

fn intersects<S: AsRef<str>>(wanted: &[String], present: &[S]) -> bool {
    wanted.iter().any(|w| present.iter().any(|p| p.as_ref() == w))
}

/// Breakpoint type names applicable at a location carrying `tags`, in
/// catalog order. Types without tags apply everywhere.
pub fn applicable_breakpoints<'c, S: AsRef<str>>(
    tags: &[S],
    catalog: &'c MetaDataCatalog,
) -> Vec<&'c str> {
    catalog
        .breakpoint_types
        .iter()
        .filter(|bp| bp.applicable_tags.is_empty() || intersects(&bp.applicable_tags, tags))
        .map(|bp| bp.name.as_str())
        .collect()
}

/// Stepping type names applicable for a suspension with `tags` at the
/// location, the suspended activity's type label and its active scope type
/// labels. The three criteria are conjunctive; an empty list always passes.
pub fn applicable_stepping_ops<'c, S: AsRef<str>, T: AsRef<str>>(
    tags: &[S],
    activity_type: &str,
    scope_types: &[T],
    catalog: &'c MetaDataCatalog,
) -> Vec<&'c str> {
    let activity_id = catalog.activity_type(activity_type).map(|a| a.id);
    let scope_ids: Vec<_> = scope_types
        .iter()
        .filter_map(|s| catalog.scope_type(s.as_ref()).map(|t| t.id))
        .collect();

    catalog
        .stepping_types
        .iter()
        .filter(|st| st.applicable_tags.is_empty() || intersects(&st.applicable_tags, tags))
        .filter(|st| {
            st.applicable_activity_type_ids.is_empty()
                || activity_id.is_some_and(|id| st.applicable_activity_type_ids.contains(&id))
        })
        .filter(|st| {
            st.applicable_scope_type_ids.is_empty()
                || scope_ids.iter().any(|id| st.applicable_scope_type_ids.contains(id))
        })
        .map(|st| st.name.as_str())
        .collect()
}
