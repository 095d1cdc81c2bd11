//! Rooted bifurcating trees with branch lengths, stored as a node arena.

use crate::error::{Error, Result};

/// One node of a [`Phylogeny`].
///
/// `branch` is the length of the edge to the parent and is meaningless for
/// the root. Tips carry labels; internal labels are kept when present but
/// play no role in the model.
#[derive(Clone, Debug)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub branch: f64,
    pub label: Option<String>,
}

/// A rooted tree in which every internal node has exactly two children.
///
/// A single labeled node with no edges is also accepted; it describes an
/// item whose only prior information is the root distribution. Construction
/// allows zero-length branches (degenerate diffusions are well defined);
/// parsed input additionally requires strictly positive lengths.
#[derive(Clone, Debug)]
pub struct Phylogeny {
    nodes: Vec<TreeNode>,
    root: usize,
    tips: Vec<usize>,
}

impl Phylogeny {
    pub fn from_parts(nodes: Vec<TreeNode>, root: usize) -> Result<Phylogeny> {
        if nodes.is_empty() || root >= nodes.len() {
            return Err(Error::invalid_input("tree must have a root node"));
        }
        if nodes[root].parent.is_some() {
            return Err(Error::invalid_input("root node must not have a parent"));
        }
        // Walk down from the root checking arity, reachability, and edge data.
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        let mut tips = Vec::new();
        while let Some(k) = stack.pop() {
            if seen[k] {
                return Err(Error::invalid_input("tree contains a cycle"));
            }
            seen[k] = true;
            let node = &nodes[k];
            if k != root {
                if node.parent.is_none() {
                    return Err(Error::invalid_input("non-root node without a parent"));
                }
                if !node.branch.is_finite() || node.branch < 0.0 {
                    return Err(Error::invalid_input(format!(
                        "branch length {} is not a finite non-negative number",
                        node.branch
                    )));
                }
            }
            match node.children.len() {
                0 => {
                    if node.label.as_deref().map_or(true, |s| s.is_empty()) {
                        return Err(Error::invalid_input("every tip must be labeled"));
                    }
                    tips.push(k);
                }
                2 => {
                    for &c in &node.children {
                        if c >= nodes.len() || nodes[c].parent != Some(k) {
                            return Err(Error::invalid_input("child/parent links disagree"));
                        }
                        stack.push(c);
                    }
                }
                n => {
                    return Err(Error::invalid_input(format!(
                        "internal nodes must have exactly two children, found {n}"
                    )));
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::invalid_input("tree has nodes unreachable from the root"));
        }
        // Tips were collected in stack order; restore left-to-right reading order.
        tips.sort_unstable();
        let mut labels: Vec<&str> = tips
            .iter()
            .map(|&t| nodes[t].label.as_deref().unwrap_or(""))
            .collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid_input("tip labels must be unique within a tree"));
        }
        Ok(Phylogeny { nodes, root, tips })
    }

    /// Rejects the zero-length branches that [`Phylogeny::from_parts`]
    /// tolerates; file input goes through this.
    pub fn require_positive_branches(&self) -> Result<()> {
        for (k, node) in self.nodes.iter().enumerate() {
            if k != self.root && node.branch <= 0.0 {
                return Err(Error::invalid_input(format!(
                    "branch above '{}' must be positive, got {}",
                    node.label.as_deref().unwrap_or("an internal node"),
                    node.branch
                )));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn tip_count(&self) -> usize {
        self.tips.len()
    }

    /// Node indices of the tips in arena order.
    pub fn tips(&self) -> &[usize] {
        &self.tips
    }

    pub fn tip_labels(&self) -> Vec<&str> {
        self.tips
            .iter()
            .map(|&t| self.nodes[t].label.as_deref().unwrap())
            .collect()
    }

    pub fn node(&self, k: usize) -> &TreeNode {
        &self.nodes[k]
    }

    pub fn is_tip(&self, k: usize) -> bool {
        self.nodes[k].children.is_empty()
    }

    /// Node indices with every child listed before its parent.
    pub fn post_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(k) = stack.pop() {
            order.push(k);
            stack.extend_from_slice(&self.nodes[k].children);
        }
        order.reverse();
        order
    }

    /// Sum of branch lengths from the root to each node.
    pub fn depths(&self) -> Vec<f64> {
        let mut depth = vec![0.0; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(k) = stack.pop() {
            for &c in &self.nodes[k].children {
                depth[c] = depth[k] + self.nodes[c].branch;
                stack.push(c);
            }
        }
        depth
    }

    /// Root-to-node path (root first) for use in shared-ancestry queries.
    pub fn root_path(&self, mut k: usize) -> Vec<usize> {
        let mut path = vec![k];
        while let Some(p) = self.nodes[k].parent {
            path.push(p);
            k = p;
        }
        path.reverse();
        path
    }

    /// Serializes back to Newick with branch lengths on every non-root edge.
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write_node(self.root, &mut out);
        out.push(';');
        out
    }

    fn write_node(&self, k: usize, out: &mut String) {
        let node = &self.nodes[k];
        if node.children.is_empty() {
            out.push_str(node.label.as_deref().unwrap());
        } else {
            out.push('(');
            self.write_node(node.children[0], out);
            out.push(',');
            self.write_node(node.children[1], out);
            out.push(')');
        }
        if k != self.root {
            out.push(':');
            out.push_str(&format!("{}", node.branch));
        }
    }
}
