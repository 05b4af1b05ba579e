//! Fusion diagrams: rooted binary trees of Clebsch-Gordan nodes.
//!
//! Leaves carry input slots and spins, internal edges carry internal spins
//! `k`, and the root emits spin `J`. All legs are treated as contravariant.

use std::collections::BTreeSet;
use std::fmt;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irrep::IrrepVector;
use crate::spin::{admissible, Spin};
use crate::su2::cg_tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Leaf {
    pub slot: usize,
    pub spin: Spin,
}

/// Tree structure. Internal non-root nodes carry their spin; the root node's
/// spin is the diagram's output spin and is left as `None`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FusionTree {
    Leaf(usize),
    Node { left: Box<FusionTree>, right: Box<FusionTree>, spin: Option<Spin> },
}

impl FusionTree {
    pub fn node(left: FusionTree, right: FusionTree, spin: Option<Spin>) -> FusionTree {
        FusionTree::Node { left: Box::new(left), right: Box::new(right), spin }
    }

    /// Left-leaning comb over slots `0..n`: `((0 ⊗ 1) ⊗ 2) ⊗ ...`.
    pub fn left_comb(n: usize, internal: &[Spin]) -> FusionTree {
        assert!(n >= 1);
        assert_eq!(internal.len(), n.saturating_sub(2));
        let mut tree = FusionTree::Leaf(0);
        for slot in 1..n {
            let spin = internal.get(slot - 1).copied();
            tree = FusionTree::node(tree, FusionTree::Leaf(slot), spin);
        }
        if let FusionTree::Node { spin, .. } = &mut tree {
            *spin = None;
        }
        tree
    }

    /// Slots in left-to-right leaf order.
    pub fn slots(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_slots(&mut out);
        out
    }

    fn collect_slots(&self, out: &mut Vec<usize>) {
        match self {
            FusionTree::Leaf(s) => out.push(*s),
            FusionTree::Node { left, right, .. } => {
                left.collect_slots(out);
                right.collect_slots(out);
            }
        }
    }

    /// Number of internal nodes excluding the root.
    pub fn internal_count(&self) -> usize {
        fn count(t: &FusionTree) -> usize {
            match t {
                FusionTree::Leaf(_) => 0,
                FusionTree::Node { left, right, .. } => 1 + count(left) + count(right),
            }
        }
        count(self).saturating_sub(1)
    }

    /// Spins of the non-root internal nodes in post-order.
    pub fn internal_spins(&self) -> Vec<Option<Spin>> {
        fn walk(t: &FusionTree, out: &mut Vec<Option<Spin>>) {
            if let FusionTree::Node { left, right, spin } = t {
                walk(left, out);
                walk(right, out);
                out.push(*spin);
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.pop();
        out
    }

    /// Copy of the tree with non-root internal spins replaced in post-order.
    pub fn with_internal_spins(&self, spins: &[Spin]) -> FusionTree {
        fn walk(t: &FusionTree, spins: &[Spin], next: &mut usize, is_root: bool) -> FusionTree {
            match t {
                FusionTree::Leaf(s) => FusionTree::Leaf(*s),
                FusionTree::Node { left, right, .. } => {
                    let l = walk(left, spins, next, false);
                    let r = walk(right, spins, next, false);
                    let spin = if is_root {
                        None
                    } else {
                        *next += 1;
                        Some(spins[*next - 1])
                    };
                    FusionTree::node(l, r, spin)
                }
            }
        }
        assert_eq!(spins.len(), self.internal_count());
        walk(self, spins, &mut 0, true)
    }
}

/// A diagram `Q^{(j, k; J)}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusionDiagram {
    leaves: Vec<Leaf>,
    tree: FusionTree,
    root: Spin,
}

/// One admissibility or structure failure, located by its node path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Tree shapes available to [`enumerate_internal`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeShape {
    LeftComb,
    /// An explicit tree; its spin labels are ignored.
    Custom(FusionTree),
}

impl TreeShape {
    fn tree(&self, n: usize) -> FusionTree {
        match self {
            TreeShape::LeftComb => FusionTree::left_comb(n, &vec![Spin::ZERO; n.saturating_sub(2)]),
            TreeShape::Custom(t) => t.clone(),
        }
    }
}

impl FusionDiagram {
    /// Builds a diagram without checking it; see [`FusionDiagram::validate`].
    pub fn new(leaves: Vec<Leaf>, tree: FusionTree, root: Spin) -> FusionDiagram {
        FusionDiagram { leaves, tree, root }
    }

    /// Builds a diagram and rejects it if [`FusionDiagram::validate`] reports
    /// any violation.
    pub fn validated(leaves: Vec<Leaf>, tree: FusionTree, root: Spin) -> Result<FusionDiagram> {
        let d = FusionDiagram::new(leaves, tree, root);
        let v = d.validate();
        if v.is_empty() {
            Ok(d)
        } else {
            Err(Error::InvalidDiagram(
                v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            ))
        }
    }

    /// Left-comb diagram over slots `0..n` with the given leaf spins.
    pub fn left_comb(leaf_spins: &[Spin], internal: &[Spin], root: Spin) -> Result<FusionDiagram> {
        let leaves = leaf_spins.iter().enumerate().map(|(slot, &spin)| Leaf { slot, spin }).collect();
        let tree = FusionTree::left_comb(leaf_spins.len(), internal);
        FusionDiagram::validated(leaves, tree, root)
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn tree(&self) -> &FusionTree {
        &self.tree
    }

    pub fn root(&self) -> Spin {
        self.root
    }

    pub fn arity(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_spin(&self, slot: usize) -> Option<Spin> {
        self.leaves.iter().find(|l| l.slot == slot).map(|l| l.spin)
    }

    /// Leaf spins indexed by slot. Only meaningful for valid diagrams.
    pub fn slot_spins(&self) -> Vec<Spin> {
        let mut out = vec![Spin::ZERO; self.leaves.len()];
        for l in &self.leaves {
            out[l.slot] = l.spin;
        }
        out
    }

    pub fn internal_spins(&self) -> Vec<Spin> {
        self.tree.internal_spins().into_iter().map(|s| s.unwrap_or(Spin::ZERO)).collect()
    }

    /// Every structural problem and inadmissible node triple, with paths.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.leaves.len();
        if n == 0 {
            out.push(Violation { path: "leaves".into(), message: "diagram has no leaves".into() });
            return out;
        }
        let mut seen = BTreeSet::new();
        for l in &self.leaves {
            if l.slot >= n {
                out.push(Violation {
                    path: "leaves".into(),
                    message: format!("slot {} out of range 0..{n}", l.slot),
                });
            }
            if !seen.insert(l.slot) {
                out.push(Violation { path: "leaves".into(), message: format!("slot {} listed twice", l.slot) });
            }
        }
        let mut tree_slots = self.tree.slots();
        tree_slots.sort_unstable();
        let listed: Vec<usize> = seen.iter().copied().collect();
        if tree_slots != listed {
            out.push(Violation {
                path: "tree".into(),
                message: format!("tree leaves {tree_slots:?} do not match listed slots {listed:?}"),
            });
            return out;
        }
        let root_spin = self.check_node(&self.tree, "root", true, &mut out);
        if let Some(s) = root_spin {
            if s != self.root {
                out.push(Violation {
                    path: "root".into(),
                    message: format!("single leaf of spin {s} cannot output spin {}", self.root),
                });
            }
        }
        out
    }

    // Returns the spin carried out of `node`, or None when it fails to
    // resolve (a violation has been recorded below it).
    fn check_node(&self, node: &FusionTree, path: &str, is_root: bool, out: &mut Vec<Violation>) -> Option<Spin> {
        match node {
            FusionTree::Leaf(slot) => self.leaf_spin(*slot),
            FusionTree::Node { left, right, spin } => {
                let l = self.check_node(left, &format!("{path}.left"), false, out);
                let r = self.check_node(right, &format!("{path}.right"), false, out);
                let own = if is_root {
                    if let Some(k) = spin {
                        if *k != self.root {
                            out.push(Violation {
                                path: path.into(),
                                message: format!("root node spin {k} differs from output spin {}", self.root),
                            });
                        }
                    }
                    self.root
                } else {
                    match spin {
                        Some(k) => *k,
                        None => {
                            out.push(Violation { path: path.into(), message: "internal spin missing".into() });
                            return None;
                        }
                    }
                };
                if let (Some(a), Some(b)) = (l, r) {
                    if !admissible(a, b, own) {
                        out.push(Violation {
                            path: path.into(),
                            message: format!("inadmissible triple ({a}, {b}, {own})"),
                        });
                    }
                }
                // A single-leaf tree carries its leaf spin; at a node we
                // report `own` and let the caller compare.
                if is_root {
                    None
                } else {
                    Some(own)
                }
            }
        }
    }

    /// Channel-wise contraction: `inputs[slot]` feeds the leaf with that slot.
    pub fn contract(&self, inputs: &[&IrrepVector]) -> Result<IrrepVector> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidDiagram(violations[0].to_string()));
        }
        if inputs.len() != self.leaves.len() {
            return Err(Error::ShapeMismatch(format!(
                "diagram has {} leaves, got {} inputs",
                self.leaves.len(),
                inputs.len()
            )));
        }
        let channels = inputs[0].channels();
        for l in &self.leaves {
            let x = inputs[l.slot];
            if x.spin() != l.spin {
                return Err(Error::SpinMismatch { expected: l.spin, found: x.spin() });
            }
            if x.channels() != channels {
                return Err(Error::ChannelMismatch { expected: channels, found: x.channels() });
            }
        }
        let (_, data) = self.eval(&self.tree, inputs, true)?;
        IrrepVector::new(self.root, data)
    }

    fn eval(&self, node: &FusionTree, inputs: &[&IrrepVector], is_root: bool) -> Result<(Spin, Array2<Complex64>)> {
        match node {
            FusionTree::Leaf(slot) => Ok((inputs[*slot].spin(), inputs[*slot].data().clone())),
            FusionTree::Node { left, right, spin } => {
                let (ls, la) = self.eval(left, inputs, false)?;
                let (rs, ra) = self.eval(right, inputs, false)?;
                let own = if is_root { self.root } else { spin.expect("validated") };
                let cg = cg_tensor(ls, rs, own)?;
                Ok((own, cg.product(&la, &ra)?))
            }
        }
    }

    /// The linear map realised by the diagram on the full tensor-product
    /// space, shape `(∏ (2j_s+1)) × (2J+1)`. Rows follow the Kronecker
    /// flattening of inputs in slot order, slot 0 most significant. Entries
    /// are real because CG coefficients are.
    pub fn dense_map(&self) -> Result<Array2<f64>> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidDiagram(violations[0].to_string()));
        }
        let (_, tree_map) = self.dense_node(&self.tree, true)?;
        // tree_map rows follow the tree's leaf order; reorder to slot order.
        let order = self.tree.slots();
        let dims: Vec<usize> = self.slot_spins().iter().map(|s| s.dim()).collect();
        let total: usize = dims.iter().product();
        let mut out = Array2::zeros((total, self.root.dim()));
        let mut digits = vec![0usize; dims.len()];
        for row in 0..total {
            let mut rem = row;
            for s in (0..dims.len()).rev() {
                digits[s] = rem % dims[s];
                rem /= dims[s];
            }
            let mut tree_row = 0;
            for &s in &order {
                tree_row = tree_row * dims[s] + digits[s];
            }
            out.row_mut(row).assign(&tree_map.row(tree_row));
        }
        Ok(out)
    }

    fn dense_node(&self, node: &FusionTree, is_root: bool) -> Result<(Spin, Array2<f64>)> {
        match node {
            FusionTree::Leaf(slot) => {
                let s = self.leaf_spin(*slot).expect("validated");
                Ok((s, Array2::eye(s.dim())))
            }
            FusionTree::Node { left, right, spin } => {
                let (ls, lm) = self.dense_node(left, false)?;
                let (rs, rm) = self.dense_node(right, false)?;
                let own = if is_root { self.root } else { spin.expect("validated") };
                let cg = cg_tensor(ls, rs, own)?;
                Ok((own, kron(&lm, &rm).dot(&cg.as_matrix())))
            }
        }
    }
}

fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == 0.0 {
            continue;
        }
        for ((k, l), &y) in b.indexed_iter() {
            out[[i * br + k, j * bc + l]] = x * y;
        }
    }
    out
}

/// All admissible internal-spin assignments for a shape, lexicographic in
/// `2k` over the post-order of internal nodes.
pub fn enumerate_internal(leaf_spins: &[Spin], root: Spin, shape: &TreeShape) -> Vec<Vec<Spin>> {
    let tree = shape.tree(leaf_spins.len());
    let slots = tree.slots();
    if slots.len() != leaf_spins.len() {
        return Vec::new();
    }
    // Per internal node: the bound sum of leaf spins below it and its parity.
    fn bounds(t: &FusionTree, spins: &[Spin], out: &mut Vec<u32>) -> u32 {
        match t {
            FusionTree::Leaf(s) => spins[*s].twice(),
            FusionTree::Node { left, right, .. } => {
                let total = bounds(left, spins, out) + bounds(right, spins, out);
                out.push(total);
                total
            }
        }
    }
    let mut maxima = Vec::new();
    if slots.iter().any(|&s| s >= leaf_spins.len()) {
        return Vec::new();
    }
    bounds(&tree, leaf_spins, &mut maxima);
    maxima.pop();
    let ranges: Vec<Vec<Spin>> = maxima
        .iter()
        .map(|&m| (0..=m).filter(|k| (m - k) % 2 == 0).map(Spin::from_twice).collect())
        .collect();

    let leaves: Vec<Leaf> = leaf_spins.iter().enumerate().map(|(slot, &spin)| Leaf { slot, spin }).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; ranges.len()];
    if ranges.iter().any(Vec::is_empty) {
        return out;
    }
    loop {
        let ks: Vec<Spin> = idx.iter().zip(&ranges).map(|(&i, r)| r[i]).collect();
        let d = FusionDiagram::new(leaves.clone(), tree.with_internal_spins(&ks), root);
        if d.validate().is_empty() {
            out.push(ks);
        }
        // odometer, last position fastest
        let mut pos = ranges.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < ranges[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

// ---------------------------------------------------------------------------
// JSON schema

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafJson {
    pub slot: usize,
    pub two_j: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<Box<TreeJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<Box<TreeJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_k: Option<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramJson {
    pub leaves: Vec<LeafJson>,
    pub tree: TreeJson,
    #[serde(rename = "two_J")]
    pub two_root: u32,
}

impl TreeJson {
    fn to_tree(&self, is_root: bool) -> Result<FusionTree> {
        match (self.slot, &self.left, &self.right) {
            (Some(s), None, None) if self.two_k.is_none() => Ok(FusionTree::Leaf(s)),
            (None, Some(l), Some(r)) => {
                let spin = self.two_k.map(Spin::from_twice);
                let spin = if is_root { spin } else { Some(spin.ok_or_else(|| missing_k())?) };
                Ok(FusionTree::node(l.to_tree(false)?, r.to_tree(false)?, spin))
            }
            _ => Err(Error::InvalidDiagram(
                "tree node must be either {\"slot\"} or {\"left\", \"right\", \"two_k\"}".into(),
            )),
        }
    }

    fn from_tree(t: &FusionTree) -> TreeJson {
        match t {
            FusionTree::Leaf(s) => TreeJson { slot: Some(*s), left: None, right: None, two_k: None },
            FusionTree::Node { left, right, spin } => TreeJson {
                slot: None,
                left: Some(Box::new(TreeJson::from_tree(left))),
                right: Some(Box::new(TreeJson::from_tree(right))),
                two_k: spin.map(Spin::twice),
            },
        }
    }
}

fn missing_k() -> Error {
    Error::InvalidDiagram("internal node without two_k".into())
}

impl From<&FusionDiagram> for DiagramJson {
    fn from(d: &FusionDiagram) -> DiagramJson {
        DiagramJson {
            leaves: d.leaves.iter().map(|l| LeafJson { slot: l.slot, two_j: l.spin.twice() }).collect(),
            tree: TreeJson::from_tree(&d.tree),
            two_root: d.root.twice(),
        }
    }
}

impl DiagramJson {
    /// Structural conversion; admissibility is left to `validate`.
    pub fn to_diagram(&self) -> Result<FusionDiagram> {
        let leaves = self.leaves.iter().map(|l| Leaf { slot: l.slot, spin: Spin::from_twice(l.two_j) }).collect();
        Ok(FusionDiagram::new(leaves, self.tree.to_tree(true)?, Spin::from_twice(self.two_root)))
    }
}

impl FusionDiagram {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&DiagramJson::from(self)).expect("diagram serializes")
    }

    pub fn from_json(s: &str) -> Result<FusionDiagram> {
        serde_json::from_str::<DiagramJson>(s)?.to_diagram()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(v: u32) -> Spin {
        Spin::integer(v)
    }

    #[test]
    fn validate_examples() {
        let d = FusionDiagram::new(
            vec![Leaf { slot: 0, spin: j(1) }, Leaf { slot: 1, spin: j(1) }],
            FusionTree::left_comb(2, &[]),
            j(2),
        );
        assert!(d.validate().is_empty());

        let d = FusionDiagram::new(
            (0..3).map(|slot| Leaf { slot, spin: j(1) }).collect(),
            FusionTree::left_comb(3, &[j(1)]),
            j(3),
        );
        let v = d.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "root");

        let d = FusionDiagram::new(
            vec![Leaf { slot: 0, spin: Spin::HALF }, Leaf { slot: 1, spin: Spin::HALF }],
            FusionTree::left_comb(2, &[]),
            j(1),
        );
        assert!(d.validate().is_empty());
    }

    #[test]
    fn validate_reports_every_bad_node() {
        // ((1 ⊗ 1 -> 3) ⊗ 1 -> 0): both nodes are inadmissible.
        let d = FusionDiagram::new(
            (0..3).map(|slot| Leaf { slot, spin: j(1) }).collect(),
            FusionTree::left_comb(3, &[j(3)]),
            j(0),
        );
        let paths: Vec<String> = d.validate().into_iter().map(|v| v.path).collect();
        assert_eq!(paths, vec!["root.left".to_string(), "root".to_string()]);
    }

    #[test]
    fn validate_slot_structure() {
        let d = FusionDiagram::new(
            vec![Leaf { slot: 0, spin: j(1) }, Leaf { slot: 0, spin: j(1) }],
            FusionTree::left_comb(2, &[]),
            j(0),
        );
        assert!(!d.validate().is_empty());
        let single = FusionDiagram::new(vec![Leaf { slot: 0, spin: j(1) }], FusionTree::Leaf(0), j(1));
        assert!(single.validate().is_empty());
        let bad_single = FusionDiagram::new(vec![Leaf { slot: 0, spin: j(1) }], FusionTree::Leaf(0), j(2));
        assert_eq!(bad_single.validate().len(), 1);
    }

    #[test]
    fn enumerate_examples() {
        assert_eq!(
            enumerate_internal(&[j(1), j(1), j(1)], j(1), &TreeShape::LeftComb),
            vec![vec![j(0)], vec![j(1)], vec![j(2)]]
        );
        assert_eq!(enumerate_internal(&[j(0), j(0)], j(0), &TreeShape::LeftComb), vec![Vec::<Spin>::new()]);
        let h = Spin::HALF;
        assert!(enumerate_internal(&[h, h, h], j(0), &TreeShape::LeftComb).is_empty());
    }

    #[test]
    fn json_round_trip() {
        let d = FusionDiagram::left_comb(&[j(1), j(2), j(1)], &[j(2)], j(1)).unwrap();
        let s = d.to_json();
        assert!(s.contains("\"two_J\":2"));
        assert_eq!(FusionDiagram::from_json(&s).unwrap(), d);
        let parsed = FusionDiagram::from_json(
            r#"{"leaves":[{"slot":0,"two_j":2},{"slot":1,"two_j":2}],"tree":{"left":{"slot":0},"right":{"slot":1}},"two_J":4}"#,
        )
        .unwrap();
        assert!(parsed.validate().is_empty());
        assert!(FusionDiagram::from_json(r#"{"leaves":[],"tree":{"slot":0,"left":{"slot":1}},"two_J":0}"#).is_err());
        assert!(FusionDiagram::from_json(r#"{"leaves":[],"tree":{"slot":0},"two_J":0,"extra":1}"#).is_err());
    }

    #[test]
    fn contract_errors() {
        let d = FusionDiagram::left_comb(&[j(1), j(1)], &[], j(0)).unwrap();
        let a = IrrepVector::zeros(j(1), 2);
        let b = IrrepVector::zeros(j(2), 2);
        let c = IrrepVector::zeros(j(1), 3);
        assert!(matches!(d.contract(&[&a, &b]), Err(Error::SpinMismatch { .. })));
        assert!(matches!(d.contract(&[&a, &c]), Err(Error::ChannelMismatch { .. })));
    }
}
