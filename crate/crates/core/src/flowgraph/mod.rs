//! The research tree of one round.
//!
//! The root holds the sampled parent. The lead agent repeatedly expands the
//! best pending leaf; children are kept only when they beat their parent,
//! except within `improvement_grace_depth` of the root where every runnable
//! child is kept. A node whose kept children never beat it is terminal, and
//! the round ends once no pending leaf is left.

mod context;
mod render;

use thiserror::Error;

use crate::canvas::RunConfig;
use crate::soldb::{SolutionId, SolutionRecord};

pub use context::build_context;
pub use render::{render_tree, GLYPH_EXPANDED, GLYPH_PENDING, GLYPH_TERMINAL};

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("a round needs at least one parent")]
    NoParents,
    #[error("a round takes at most two parents, got {0}")]
    TooManyParents(usize),
    #[error("parent {0} is not a valid solution")]
    InvalidParent(SolutionId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not pending")]
    NodeNotPending(NodeId),
    #[error("node {node} may have {budget} children, got {requested}")]
    BudgetExceeded {
        node: NodeId,
        budget: u32,
        requested: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Pending,
    ExpandedImproved,
    Terminal,
}

/// Shape limits for one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeShape {
    pub max_children: u32,
    pub max_depth: u32,
    pub elite_extra_children: u32,
    pub improvement_grace_depth: u32,
    pub idea_width: usize,
}

impl TreeShape {
    pub fn from_config(cfg: &RunConfig) -> Self {
        TreeShape {
            max_children: cfg.max_children,
            max_depth: cfg.max_depth,
            elite_extra_children: cfg.elite_extra_children,
            improvement_grace_depth: cfg.improvement_grace_depth,
            idea_width: cfg.render_idea_width,
        }
    }
}

impl Default for TreeShape {
    fn default() -> Self {
        TreeShape::from_config(&RunConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub node_id: NodeId,
    pub solution_id: SolutionId,
    pub idea: String,
    pub code: String,
    pub summary: String,
    pub score: f64,
    pub valid: bool,
    pub state: NodeState,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub depth: u32,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn from_record(node_id: NodeId, idea: String, record: &SolutionRecord, parent: Option<NodeId>, depth: u32) -> Self {
        TreeNode {
            node_id,
            solution_id: record.id,
            idea,
            code: record.code.clone(),
            summary: record.experiment_summary.clone(),
            score: record.score,
            valid: record.valid,
            state: NodeState::Pending,
            parent,
            children: Vec::new(),
            depth,
        }
    }
}

/// A second parent whose idea joins the root's generation context.
#[derive(Debug, Clone, PartialEq)]
pub struct CoParent {
    pub solution_id: SolutionId,
    pub idea: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResearchTree {
    nodes: Vec<TreeNode>,
    pub round: u32,
    pub lead: u32,
    pub shape: TreeShape,
    pub root_is_elite: bool,
    pub co_parent: Option<CoParent>,
}

pub const ROOT: NodeId = 0;

impl ResearchTree {
    /// Starts a round from one or two parents; the best one becomes the root.
    pub fn init_round(
        parents: &[SolutionRecord],
        lead: u32,
        round: u32,
        shape: TreeShape,
        root_is_elite: bool,
    ) -> Result<Self, FlowError> {
        match parents.len() {
            0 => return Err(FlowError::NoParents),
            1 | 2 => {}
            n => return Err(FlowError::TooManyParents(n)),
        }
        if let Some(bad) = parents.iter().find(|p| !p.valid) {
            return Err(FlowError::InvalidParent(bad.id));
        }
        let best = parents
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.score.total_cmp(&b.score).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .expect("non-empty");
        let root = TreeNode::from_record(ROOT, parents[best].idea.clone(), &parents[best], None, 0);
        let co_parent = parents
            .iter()
            .enumerate()
            .find(|(i, _)| *i != best)
            .map(|(_, p)| CoParent {
                solution_id: p.id,
                idea: p.idea.clone(),
                score: p.score,
            });
        Ok(ResearchTree {
            nodes: vec![root],
            round,
            lead,
            shape,
            root_is_elite,
            co_parent,
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode, FlowError> {
        self.nodes.get(id).ok_or(FlowError::UnknownNode(id))
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[ROOT]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Highest-scoring pending leaf; ties go to the lowest node id.
    pub fn select_best_unfinished_leaf(&self) -> Option<NodeId> {
        let mut best: Option<&TreeNode> = None;
        for node in self.nodes.iter().filter(|n| n.is_leaf() && n.state == NodeState::Pending) {
            if best.is_none_or(|b| node.score > b.score) {
                best = Some(node);
            }
        }
        best.map(|n| n.node_id)
    }

    /// How many children `node_id` may receive. Zero at the depth cap.
    pub fn child_budget(&self, node_id: NodeId) -> Result<u32, FlowError> {
        let node = self.node(node_id)?;
        if node.depth + 1 > self.shape.max_depth {
            return Ok(0);
        }
        let bonus = if node_id == ROOT && self.root_is_elite {
            self.shape.elite_extra_children
        } else {
            0
        };
        Ok(self.shape.max_children + bonus)
    }

    /// Records an expansion of `node_id`.
    ///
    /// Invalid children are never attached. Within the grace depth every valid
    /// child is attached; deeper, only children scoring strictly above the node.
    /// The node ends expanded-improved if an attached child beats it, else
    /// terminal. Returns the new node ids in input order.
    pub fn attach_children(
        &mut self,
        node_id: NodeId,
        evaluated: Vec<(String, SolutionRecord)>,
    ) -> Result<Vec<NodeId>, FlowError> {
        let budget = self.child_budget(node_id)?;
        let node = &self.nodes[node_id];
        if node.state != NodeState::Pending || !node.is_leaf() {
            return Err(FlowError::NodeNotPending(node_id));
        }
        if evaluated.len() > budget as usize {
            return Err(FlowError::BudgetExceeded {
                node: node_id,
                budget,
                requested: evaluated.len(),
            });
        }
        let parent_score = node.score;
        let depth = node.depth + 1;
        let in_grace = node.depth < self.shape.improvement_grace_depth;

        let mut attached = Vec::new();
        let mut improved = false;
        for (idea, record) in evaluated {
            if !record.valid {
                continue;
            }
            let improves = record.score > parent_score;
            if !(in_grace || improves) {
                continue;
            }
            improved |= improves;
            let id = self.nodes.len();
            self.nodes.push(TreeNode::from_record(id, idea, &record, Some(node_id), depth));
            attached.push(id);
        }
        let node = &mut self.nodes[node_id];
        node.children.extend(&attached);
        node.state = if improved {
            NodeState::ExpandedImproved
        } else {
            NodeState::Terminal
        };
        Ok(attached)
    }

    /// Closes a pending leaf without children (depth cap or failed expansion).
    pub fn mark_terminal(&mut self, node_id: NodeId) -> Result<(), FlowError> {
        let node = self.nodes.get_mut(node_id).ok_or(FlowError::UnknownNode(node_id))?;
        if node.state != NodeState::Pending {
            return Err(FlowError::NodeNotPending(node_id));
        }
        node.state = NodeState::Terminal;
        Ok(())
    }

    /// True when no pending leaf remains.
    pub fn round_finished(&self) -> bool {
        !self
            .nodes
            .iter()
            .any(|n| n.is_leaf() && n.state == NodeState::Pending)
    }

    pub fn best_score(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.score)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Root-to-node path, inclusive.
    pub fn ancestry(&self, node_id: NodeId) -> Result<Vec<NodeId>, FlowError> {
        let mut path = vec![node_id];
        let mut cur = self.node(node_id)?;
        while let Some(p) = cur.parent {
            path.push(p);
            cur = &self.nodes[p];
        }
        path.reverse();
        Ok(path)
    }

    pub fn render(&self) -> String {
        render_tree(self)
    }

    /// Builds a tree node by node; used to restore or fabricate trees.
    #[doc(hidden)]
    pub fn from_nodes(
        nodes: Vec<TreeNode>,
        lead: u32,
        round: u32,
        shape: TreeShape,
    ) -> Result<Self, FlowError> {
        if nodes.is_empty() {
            return Err(FlowError::NoParents);
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.node_id != i {
                return Err(FlowError::UnknownNode(n.node_id));
            }
            for &c in &n.children {
                if c <= i || nodes.get(c).and_then(|cn| cn.parent) != Some(i) {
                    return Err(FlowError::UnknownNode(c));
                }
            }
            if (i == ROOT) != n.parent.is_none() {
                return Err(FlowError::UnknownNode(i));
            }
        }
        Ok(ResearchTree {
            nodes,
            round,
            lead,
            shape,
            root_is_elite: false,
            co_parent: None,
        })
    }
}
