use std::fmt::Write;

use super::{FlowError, NodeId, ResearchTree, TreeNode};
use crate::canvas::ContextScope;

fn entry(out: &mut String, node: &TreeNode) {
    let _ = writeln!(out, "Node {} ({:.2}): {}", node.node_id, node.score, node.idea.trim());
    if !node.summary.trim().is_empty() {
        let _ = writeln!(out, "Experiment summary:\n{}", node.summary.trim());
    }
}

/// Context handed to the idea agent when expanding `node_id`.
///
/// Every scope ends with the focus node's full artifact; they differ in how
/// much of the surrounding tree comes before it.
pub fn build_context(tree: &ResearchTree, node_id: NodeId, scope: ContextScope) -> Result<String, FlowError> {
    let focus = tree.node(node_id)?;
    let mut out = String::new();
    match scope {
        ContextScope::ParentOnly => {
            out.push_str("## Parent\n");
            if let Some(p) = focus.parent {
                entry(&mut out, &tree.nodes()[p]);
            }
        }
        ContextScope::Ancestry => {
            out.push_str("## Ancestry (root first)\n");
            for id in tree.ancestry(node_id)? {
                entry(&mut out, &tree.nodes()[id]);
            }
        }
        ContextScope::FullTree => {
            out.push_str("## Research tree\n");
            out.push_str(&tree.render());
        }
    }
    if let (Some(co), true) = (&tree.co_parent, node_id == super::ROOT) {
        let _ = writeln!(out, "\n## Second parent ({:.2})\n{}", co.score, co.idea.trim());
    }
    let _ = writeln!(out, "\n## Current node {} ({:.2})", focus.node_id, focus.score);
    let _ = writeln!(out, "Idea:\n{}", focus.idea.trim());
    if !focus.summary.trim().is_empty() {
        let _ = writeln!(out, "Experiment summary:\n{}", focus.summary.trim());
    }
    let _ = writeln!(out, "Code:\n```python\n{}\n```", focus.code.trim_end());
    Ok(out)
}
