use std::fmt::Write;

use super::{NodeId, NodeState, ResearchTree, ROOT};

pub const GLYPH_EXPANDED: char = '⊕';
pub const GLYPH_PENDING: char = '○';
pub const GLYPH_TERMINAL: char = '✓';

const RULE_WIDTH: usize = 40;

fn glyph(state: NodeState) -> char {
    match state {
        NodeState::ExpandedImproved => GLYPH_EXPANDED,
        NodeState::Pending => GLYPH_PENDING,
        NodeState::Terminal => GLYPH_TERMINAL,
    }
}

/// Collapses whitespace and cuts to `width` characters, marking the cut.
pub(crate) fn clip_idea(idea: &str, width: usize) -> String {
    let flat = idea.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= width {
        return flat;
    }
    let cut: String = flat.chars().take(width).collect();
    format!("{}...", cut.trim_end())
}

/// Text form of the tree, embedded in prompts and written beside each round.
///
/// The root carries a glyph only while it is still a leaf; every other node
/// shows its stored state.
pub fn render_tree(tree: &ResearchTree) -> String {
    let rule = "=".repeat(RULE_WIDTH);
    let mut out = String::new();
    out.push_str("Format: Node <ID> (<score>): '<idea>'\n");
    out.push_str("Legend:\n");
    let _ = writeln!(out, "  {GLYPH_EXPANDED} = solution expanded with improved children solution(s)");
    let _ = writeln!(out, "  {GLYPH_PENDING} = solution pending expansion");
    let _ = writeln!(
        out,
        "  {GLYPH_TERMINAL} = terminal solution (approximate local optimum, no improvement found)"
    );
    out.push_str(&rule);
    out.push('\n');

    let width = tree.shape.idea_width;
    let root = tree.root();
    out.push_str("  ");
    if root.is_leaf() {
        out.push(glyph(root.state));
        out.push(' ');
    }
    let _ = writeln!(out, "{}", node_label(tree, ROOT, width));
    let kids = &root.children;
    for (i, &c) in kids.iter().enumerate() {
        render_subtree(tree, c, "    ", i + 1 == kids.len(), width, &mut out);
    }

    out.push_str(&rule);
    out.push('\n');
    let (expanded, pending, terminal) = footer_counts(tree);
    let _ = writeln!(
        out,
        "Total expanded solutions: {expanded} | Total pending leaves: {pending} | Total terminal leaves: {terminal}"
    );
    out
}

fn node_label(tree: &ResearchTree, id: NodeId, width: usize) -> String {
    let n = &tree.nodes()[id];
    format!("Node {} ({:.2}): {}", n.node_id, n.score, clip_idea(&n.idea, width))
}

fn render_subtree(tree: &ResearchTree, id: NodeId, prefix: &str, last: bool, width: usize, out: &mut String) {
    let node = &tree.nodes()[id];
    let branch = if last { "└── " } else { "├── " };
    let _ = writeln!(out, "{prefix}{branch}{} {}", glyph(node.state), node_label(tree, id, width));
    let child_prefix = format!("{prefix}{}", if last { "    " } else { "│   " });
    for (i, &c) in node.children.iter().enumerate() {
        render_subtree(tree, c, &child_prefix, i + 1 == node.children.len(), width, out);
    }
}

/// (expanded glyphs shown, pending leaves, terminal leaves).
fn footer_counts(tree: &ResearchTree) -> (usize, usize, usize) {
    let nodes = tree.nodes();
    let expanded = nodes
        .iter()
        .filter(|n| n.node_id != ROOT && n.state == NodeState::ExpandedImproved)
        .count();
    let pending = nodes
        .iter()
        .filter(|n| n.is_leaf() && n.state == NodeState::Pending)
        .count();
    let terminal = nodes
        .iter()
        .filter(|n| n.is_leaf() && n.state == NodeState::Terminal)
        .count();
    (expanded, pending, terminal)
}
