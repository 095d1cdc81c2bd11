//! Newick reader and mixture-file loader.
//!
//! Grammar: `tree := subtree ";"`, `subtree := "(" subtree "," subtree ")"
//! [label][":" length] | label [":" length]`. Branch lengths are mandatory on
//! every non-root edge and must be positive. Labels may be bare (no
//! whitespace or `(),:;` characters) or single-quoted.

use crate::error::{Error, Result};
use crate::tree::phylogeny::{Phylogeny, TreeNode};

struct Scanner<'a> {
    text: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Scanner<'a> {
        Scanner { text: text.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn expect(&mut self, want: u8) -> Result<()> {
        match self.bump() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(syntax(format!(
                "expected '{}' at byte {}, found '{}'",
                want as char,
                self.pos - 1,
                c as char
            ))),
            None => Err(syntax(format!("expected '{}', found end of input", want as char))),
        }
    }

    fn label(&mut self) -> Result<Option<String>> {
        match self.peek() {
            Some(b'\'') => {
                self.pos += 1;
                let start = self.pos;
                while let Some(&c) = self.text.get(self.pos) {
                    if c == b'\'' {
                        let s = std::str::from_utf8(&self.text[start..self.pos])
                            .map_err(|_| syntax("label is not valid UTF-8"))?;
                        self.pos += 1;
                        return Ok(Some(s.to_string()));
                    }
                    self.pos += 1;
                }
                Err(syntax("unterminated quoted label"))
            }
            Some(c) if !b"(),:;".contains(&c) => {
                let start = self.pos;
                while let Some(&c) = self.text.get(self.pos) {
                    if b"(),:;".contains(&c) || c.is_ascii_whitespace() {
                        break;
                    }
                    self.pos += 1;
                }
                let s = std::str::from_utf8(&self.text[start..self.pos])
                    .map_err(|_| syntax("label is not valid UTF-8"))?;
                Ok(Some(s.to_string()))
            }
            _ => Ok(None),
        }
    }

    fn branch_length(&mut self) -> Result<Option<f64>> {
        if self.peek() != Some(b':') {
            return Ok(None);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while let Some(&c) = self.text.get(self.pos) {
            if b"(),:;".contains(&c) || c.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        let token = std::str::from_utf8(&self.text[start..self.pos])
            .map_err(|_| syntax("branch length is not valid UTF-8"))?;
        let value: f64 = token
            .parse()
            .map_err(|_| syntax(format!("cannot parse branch length '{token}'")))?;
        Ok(Some(value))
    }
}

fn syntax(message: impl Into<String>) -> Error {
    Error::invalid_input(format!("newick: {}", message.into()))
}

fn parse_subtree(sc: &mut Scanner, nodes: &mut Vec<TreeNode>) -> Result<usize> {
    if sc.peek() == Some(b'(') {
        sc.pos += 1;
        let mut children = vec![parse_subtree(sc, nodes)?];
        while sc.peek() == Some(b',') {
            sc.pos += 1;
            children.push(parse_subtree(sc, nodes)?);
        }
        sc.expect(b')')?;
        if children.len() != 2 {
            return Err(syntax(format!(
                "internal nodes must have exactly two children, found {}",
                children.len()
            )));
        }
        let label = sc.label()?;
        let branch = sc.branch_length()?;
        let idx = nodes.len();
        nodes.push(TreeNode { parent: None, children: children.clone(), branch: branch.unwrap_or(0.0), label });
        for &c in &children {
            nodes[c].parent = Some(idx);
        }
        if branch.is_none() {
            // remembered as root candidate; checked by the caller
            nodes[idx].branch = f64::NAN;
        }
        Ok(idx)
    } else {
        let label = sc
            .label()?
            .ok_or_else(|| syntax("expected a label or '(' at subtree start"))?;
        let branch = sc.branch_length()?;
        let idx = nodes.len();
        nodes.push(TreeNode {
            parent: None,
            children: vec![],
            branch: branch.unwrap_or(f64::NAN),
            label: Some(label),
        });
        Ok(idx)
    }
}

/// Parses every `;`-terminated tree in `text`.
pub fn parse_trees(text: &str) -> Result<Vec<Phylogeny>> {
    let mut sc = Scanner::new(text);
    let mut trees = Vec::new();
    while sc.peek().is_some() {
        let mut nodes = Vec::new();
        let root = parse_subtree(&mut sc, &mut nodes)?;
        sc.expect(b';')?;
        // A missing branch length is legal only on the root.
        nodes[root].branch = 0.0;
        for (k, node) in nodes.iter().enumerate() {
            if k != root && node.branch.is_nan() {
                return Err(syntax(format!(
                    "missing branch length above '{}'",
                    node.label.as_deref().unwrap_or("an internal node")
                )));
            }
        }
        let tree = Phylogeny::from_parts(nodes, root)?;
        tree.require_positive_branches()?;
        trees.push(tree);
    }
    if trees.is_empty() {
        return Err(syntax("input contains no trees"));
    }
    Ok(trees)
}

/// Parses a mixture file: one mixture component per non-empty line, each
/// component holding one or more `;`-terminated trees over disjoint tips.
/// Lines starting with `#` are comments.
pub fn parse_mixture(text: &str) -> Result<Vec<Vec<Phylogeny>>> {
    let mut components = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        components.push(parse_trees(line)?);
    }
    if components.is_empty() {
        return Err(syntax("mixture file contains no trees"));
    }
    Ok(components)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_tip_tree() {
        let trees = parse_trees("(A:1.5,B:2.5);").unwrap();
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].tip_labels(), vec!["A", "B"]);
        assert_eq!(trees[0].to_newick(), "(A:1.5,B:2.5);");
    }

    #[test]
    fn parses_nested_tree_with_internal_label_and_whitespace() {
        let trees = parse_trees("( (A:1, B:2)anc:0.5 , (C:0.75, D:0.25):1.5 );").unwrap();
        let tree = &trees[0];
        assert_eq!(tree.tip_count(), 4);
        let depths = tree.depths();
        let by_label = |want: &str| {
            tree.tips()
                .iter()
                .find(|&&t| tree.node(t).label.as_deref() == Some(want))
                .copied()
                .unwrap()
        };
        assert_eq!(depths[by_label("A")], 1.5);
        assert_eq!(depths[by_label("B")], 2.5);
        assert_eq!(depths[by_label("C")], 2.25);
        assert_eq!(depths[by_label("D")], 1.75);
    }

    #[test]
    fn parses_quoted_labels_and_scientific_lengths() {
        let trees = parse_trees("('north east':1e-2,'south west':2.5e0);").unwrap();
        assert_eq!(trees[0].tip_labels(), vec!["north east", "south west"]);
        assert_eq!(trees[0].node(trees[0].tips()[0]).branch, 1e-2);
    }

    #[test]
    fn single_tip_tree_parses() {
        let trees = parse_trees("solo;").unwrap();
        assert_eq!(trees[0].tip_count(), 1);
    }

    #[test]
    fn roundtrip_through_writer() {
        let text = "((A:1,B:2):0.5,(C:0.75,D:0.25):1.5);";
        let trees = parse_trees(text).unwrap();
        let again = parse_trees(&trees[0].to_newick()).unwrap();
        assert_eq!(again[0].to_newick(), trees[0].to_newick());
        assert_eq!(again[0].depths(), trees[0].depths());
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "(A:1);",          // single child
            "(A:1,B:2,C:3);",  // trifurcation
            "(A:1,B:2)",       // missing semicolon
            "(A,B:2);",        // missing branch length
            "(A:-1,B:2);",     // negative length
            "(A:0,B:2);",      // zero length
            "(A:1,A:2);",      // duplicate labels
            "",                // empty
            "(A:1,'B:2);",     // unterminated quote
        ] {
            assert!(parse_trees(bad).is_err(), "expected failure on {bad:?}");
        }
    }

    #[test]
    fn root_branch_length_is_tolerated_and_ignored() {
        let trees = parse_trees("(A:1,B:2):0.0;").unwrap();
        assert_eq!(trees[0].node(trees[0].root()).branch, 0.0);
        assert_eq!(trees[0].tip_count(), 2);
    }

    #[test]
    fn multiple_trees_in_one_string() {
        let trees = parse_trees("(A:1,B:1); (C:2,D:2);").unwrap();
        assert_eq!(trees.len(), 2);
        assert_eq!(trees[1].tip_labels(), vec!["C", "D"]);
    }

    #[test]
    fn mixture_components_split_by_line() {
        let text = "# posterior draws\n(A:1,B:1);(C:1,D:1);\n(A:2,B:2);(C:2,D:2);\n";
        let mix = parse_mixture(text).unwrap();
        assert_eq!(mix.len(), 2);
        assert_eq!(mix[0].len(), 2);
        assert_eq!(mix[1][0].node(mix[1][0].tips()[0]).branch, 2.0);
    }
}
