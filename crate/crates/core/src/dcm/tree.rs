use serde::{Deserialize, Serialize};

use super::{check_dims, majority_label, DcmError};
use crate::data::{Dataset, LabelId};

/// A node of a binary CART tree. Serializes either as
/// `{attr, threshold, left, right}` or `{leaf_label}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        attr: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf_label: LabelId,
    },
}

impl TreeNode {
    pub fn leaf(label: LabelId) -> Self {
        TreeNode::Leaf { leaf_label: label }
    }

    pub fn split(attr: usize, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Split {
            attr,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// measurement <= threshold
    Left,
    /// measurement > threshold
    Right,
}

/// One edge condition along a root-to-leaf path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRule {
    pub attr: usize,
    pub threshold: f64,
    pub branch: Branch,
}

impl PathRule {
    pub fn holds(&self, p: &[f64]) -> bool {
        match self.branch {
            Branch::Left => p[self.attr] <= self.threshold,
            Branch::Right => p[self.attr] > self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePath {
    pub rules: Vec<PathRule>,
    pub label: LabelId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub n_sensors: usize,
    pub n_labels: usize,
    pub root: TreeNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf_size: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_leaf_size: 5,
        }
    }
}

impl DecisionTreeModel {
    pub fn new(n_sensors: usize, n_labels: usize, root: TreeNode) -> Result<Self, DcmError> {
        let m = Self {
            n_sensors,
            n_labels,
            root,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), DcmError> {
        fn walk(node: &TreeNode, n_s: usize, n_l: usize) -> Result<(), DcmError> {
            match node {
                TreeNode::Leaf { leaf_label } if *leaf_label >= n_l => Err(DcmError::InvalidModel(
                    format!("leaf label {leaf_label} >= {n_l}"),
                )),
                TreeNode::Leaf { .. } => Ok(()),
                TreeNode::Split {
                    attr,
                    threshold,
                    left,
                    right,
                } => {
                    if *attr >= n_s || !threshold.is_finite() {
                        return Err(DcmError::InvalidModel(format!(
                            "bad split on attr {attr} at {threshold}"
                        )));
                    }
                    walk(left, n_s, n_l)?;
                    walk(right, n_s, n_l)
                }
            }
        }
        walk(&self.root, self.n_sensors, self.n_labels)
    }

    pub fn predict(&self, p: &[f64]) -> Result<LabelId, DcmError> {
        check_dims(self.n_sensors, p)?;
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { leaf_label } => return Ok(*leaf_label),
                TreeNode::Split {
                    attr,
                    threshold,
                    left,
                    right,
                } => {
                    node = if p[*attr] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// All root-to-leaf paths, left subtrees first.
    pub fn paths(&self) -> Vec<TreePath> {
        fn walk(node: &TreeNode, rules: &mut Vec<PathRule>, out: &mut Vec<TreePath>) {
            match node {
                TreeNode::Leaf { leaf_label } => out.push(TreePath {
                    rules: rules.clone(),
                    label: *leaf_label,
                }),
                TreeNode::Split {
                    attr,
                    threshold,
                    left,
                    right,
                } => {
                    for (branch, child) in [(Branch::Left, left), (Branch::Right, right)] {
                        rules.push(PathRule {
                            attr: *attr,
                            threshold: *threshold,
                            branch,
                        });
                        walk(child, rules, out);
                        rules.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.paths().len()
    }

    pub fn depth(&self) -> usize {
        fn d(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }

    /// Every `(attr, threshold)` used by a split.
    pub fn thresholds(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(n) = stack.pop() {
            if let TreeNode::Split {
                attr,
                threshold,
                left,
                right,
            } = n
            {
                out.push((*attr, *threshold));
                stack.push(left);
                stack.push(right);
            }
        }
        out
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

struct SplitChoice {
    attr: usize,
    threshold: f64,
    impurity: f64,
}

struct Builder<'a> {
    data: &'a Dataset,
    params: TreeParams,
    n_labels: usize,
}

impl Builder<'_> {
    fn build(&self, indices: Vec<usize>, depth: usize) -> TreeNode {
        let mut counts = vec![0usize; self.n_labels];
        for &i in &indices {
            counts[self.data.records[i].label] += 1;
        }
        let label = majority_label(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure
            || depth >= self.params.max_depth
            || indices.len() < 2 * self.params.min_leaf_size.max(1)
        {
            return TreeNode::leaf(label);
        }
        let parent = gini(&counts, indices.len());
        let Some(choice) = self.best_split(&indices) else {
            return TreeNode::leaf(label);
        };
        if choice.impurity >= parent - 1e-12 {
            return TreeNode::leaf(label);
        }
        let (left, right): (Vec<usize>, Vec<usize>) = indices
            .into_iter()
            .partition(|&i| self.data.records[i].measurements[choice.attr] <= choice.threshold);
        TreeNode::split(
            choice.attr,
            choice.threshold,
            self.build(left, depth + 1),
            self.build(right, depth + 1),
        )
    }

    /// Lowest weighted Gini; ties go to the lowest sensor index, then the
    /// lowest threshold, because candidates are visited in that order and
    /// only a strict improvement replaces the incumbent.
    fn best_split(&self, indices: &[usize]) -> Option<SplitChoice> {
        let n = indices.len();
        let min_leaf = self.params.min_leaf_size.max(1);
        let mut best: Option<SplitChoice> = None;
        let mut sorted = indices.to_vec();
        let mut total = vec![0usize; self.n_labels];
        for &i in indices {
            total[self.data.records[i].label] += 1;
        }
        for attr in 0..self.data.n_sensors() {
            let value = |i: usize| self.data.records[i].measurements[attr];
            sorted.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
            let mut left = vec![0usize; self.n_labels];
            for pos in 0..n - 1 {
                left[self.data.records[sorted[pos]].label] += 1;
                let (lo, hi) = (value(sorted[pos]), value(sorted[pos + 1]));
                if lo == hi {
                    continue;
                }
                let n_left = pos + 1;
                let n_right = n - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let impurity = (n_left as f64 * gini(&left, n_left)
                    + n_right as f64 * gini(&right, n_right))
                    / n as f64;
                if best
                    .as_ref()
                    .is_none_or(|b| impurity < b.impurity - 1e-12)
                {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(SplitChoice {
                        attr,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}

/// Greedy CART on weighted Gini impurity with midpoint thresholds.
pub fn train_dt(train: &Dataset, params: TreeParams) -> Result<DecisionTreeModel, DcmError> {
    if train.is_empty() {
        return Err(DcmError::EmptyDataset);
    }
    let builder = Builder {
        data: train,
        params,
        n_labels: train.n_labels(),
    };
    let root = builder.build((0..train.len()).collect(), 0);
    DecisionTreeModel::new(train.n_sensors(), train.n_labels(), root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PatientRecord, SensorSchema};

    fn one_sensor(points: &[(f64, usize)]) -> Dataset {
        let schema =
            SensorSchema::new(vec!["x".into(), "pad".into()], vec!["A".into(), "B".into()])
                .unwrap();
        Dataset::new(
            schema,
            points
                .iter()
                .map(|&(x, l)| PatientRecord::new(vec![x, 0.0], l))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_split_separates_two_groups() {
        let ds = one_sensor(&[(0.0, 0), (1.0, 0), (10.0, 1), (11.0, 1)]);
        let params = TreeParams {
            max_depth: 5,
            min_leaf_size: 1,
        };
        let m = train_dt(&ds, params).unwrap();
        match &m.root {
            TreeNode::Split {
                attr, threshold, ..
            } => {
                assert_eq!(*attr, 0);
                assert!(*threshold > 1.0 && *threshold < 10.0);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(m.leaf_count(), 2);
        for r in &ds.records {
            assert_eq!(m.predict(&r.measurements).unwrap(), r.label);
        }
    }

    #[test]
    fn pure_data_gives_single_leaf() {
        let ds = one_sensor(&[(0.0, 1), (5.0, 1), (9.0, 1)]);
        let m = train_dt(&ds, TreeParams::default()).unwrap();
        assert_eq!(m.root, TreeNode::leaf(1));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let ds = one_sensor(&[]);
        assert!(matches!(
            train_dt(&ds, TreeParams::default()),
            Err(DcmError::EmptyDataset)
        ));
    }

    #[test]
    fn routing_is_le_left_gt_right() {
        let m = DecisionTreeModel::new(
            2,
            2,
            TreeNode::split(0, 5.0, TreeNode::leaf(0), TreeNode::leaf(1)),
        )
        .unwrap();
        assert_eq!(m.predict(&[5.0, 0.0]).unwrap(), 0);
        assert_eq!(m.predict(&[5.000001, 0.0]).unwrap(), 1);
        assert!(matches!(
            m.predict(&[1.0]),
            Err(DcmError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn equal_gain_prefers_lowest_sensor() {
        // Both sensors separate the labels perfectly.
        let schema =
            SensorSchema::new(vec!["a".into(), "b".into()], vec!["A".into(), "B".into()])
                .unwrap();
        let ds = Dataset::new(
            schema,
            vec![
                PatientRecord::new(vec![0.0, 0.0], 0),
                PatientRecord::new(vec![1.0, 1.0], 1),
            ],
        )
        .unwrap();
        let m = train_dt(
            &ds,
            TreeParams {
                max_depth: 3,
                min_leaf_size: 1,
            },
        )
        .unwrap();
        assert!(matches!(m.root, TreeNode::Split { attr: 0, .. }));
    }

    #[test]
    fn json_shape_uses_leaf_label_and_split_fields() {
        let m = TreeNode::split(3, 1.5, TreeNode::leaf(0), TreeNode::leaf(2));
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["attr"], 3);
        assert_eq!(v["threshold"], 1.5);
        assert_eq!(v["left"]["leaf_label"], 0);
        let back: TreeNode = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
