use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_train, BaselineError, Lines, ParseError};
use crate::dataset::{Label, LabeledDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Leaf(Label),
    /// Rows with bit `feature` clear go to `off`, set go to `on`.
    Split { feature: usize, off: usize, on: usize },
}

/// CART tree over Boolean features; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTree {
    pub width: usize,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; `None` means all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 10,
            min_leaf: 2,
            max_features: None,
        }
    }
}

fn gini(malicious: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = malicious as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

fn majority(malicious: usize, n: usize) -> Label {
    if 2 * malicious > n {
        Label::Malicious
    } else {
        Label::Benign
    }
}

/// Gini gain of splitting `rows` on `feature`, or `None` when a child
/// would hold fewer than `min_leaf` rows.
pub fn split_gain(
    x: &[Vec<bool>],
    y: &[Label],
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<f64> {
    let n = rows.len();
    let mal = rows.iter().filter(|&&r| y[r] == Label::Malicious).count();
    let (mut n_on, mut mal_on) = (0, 0);
    for &r in rows {
        if x[r][feature] {
            n_on += 1;
            if y[r] == Label::Malicious {
                mal_on += 1;
            }
        }
    }
    let n_off = n - n_on;
    if n_on < min_leaf.max(1) || n_off < min_leaf.max(1) {
        return None;
    }
    let child = (n_on as f64 * gini(mal_on, n_on) + n_off as f64 * gini(mal - mal_on, n_off)) / n as f64;
    Some(gini(mal, n) - child)
}

struct Builder<'a> {
    x: &'a [Vec<bool>],
    y: &'a [Label],
    params: TreeParams,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn candidates(&mut self, width: usize) -> Vec<usize> {
        match (self.params.max_features, self.rng.as_mut()) {
            (Some(m), Some(rng)) if m < width => {
                let mut f = sample(rng, width, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..width).collect(),
        }
    }

    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        let mal = rows.iter().filter(|&&r| self.y[r] == Label::Malicious).count();
        self.nodes.push(Node::Leaf(majority(mal, n)));
        if depth >= self.params.max_depth || mal == 0 || mal == n || n < 2 * self.params.min_leaf.max(1) {
            return id;
        }
        let width = self.x[rows[0]].len();
        let mut best: Option<(usize, f64)> = None;
        for f in self.candidates(width) {
            if let Some(g) = split_gain(self.x, self.y, rows, f, self.params.min_leaf) {
                if g > 1e-12 && best.is_none_or(|(_, bg)| g > bg) {
                    best = Some((f, g));
                }
            }
        }
        let Some((feature, _)) = best else { return id };
        let (on, off): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| self.x[r][feature]);
        let off_id = self.grow(&off, depth + 1);
        let on_id = self.grow(&on, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            off: off_id,
            on: on_id,
        };
        id
    }
}

impl DecisionTree {
    /// Greedy CART on Gini impurity. `seed` drives feature subsampling
    /// only, which is off unless `params.max_features` is set.
    pub fn fit(train: &LabeledDataset, params: TreeParams, seed: u64) -> Result<DecisionTree, BaselineError> {
        check_train(train)?;
        let x: Vec<Vec<bool>> = train.vectors.iter().map(|v| v.bits.clone()).collect();
        let rows: Vec<usize> = (0..train.len()).collect();
        Ok(Self::fit_rows(&x, &train.labels, &rows, params, seed))
    }

    fn fit_rows(x: &[Vec<bool>], y: &[Label], rows: &[usize], params: TreeParams, seed: u64) -> DecisionTree {
        let mut b = Builder {
            x,
            y,
            params,
            rng: params.max_features.map(|_| ChaCha8Rng::seed_from_u64(seed)),
            nodes: Vec::new(),
        };
        b.grow(rows, 0);
        DecisionTree {
            width: x[rows[0]].len(),
            nodes: b.nodes,
        }
    }

    pub fn predict(&self, x: &[bool]) -> Label {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(l) => return l,
                Node::Split { feature, off, on } => i = if x[feature] { on } else { off },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { off, on, .. } => 1 + walk(nodes, off).max(walk(nodes, on)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn write_nodes(&self, out: &mut String) {
        for n in &self.nodes {
            match n {
                Node::Leaf(l) => out.push_str(&format!("leaf {}\n", l.index())),
                Node::Split { feature, off, on } => out.push_str(&format!("split {feature} {off} {on}\n")),
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("DT v1\n{} {}\n", self.width, self.nodes.len());
        self.write_nodes(&mut out);
        out
    }

    fn read_nodes(lines: &mut Lines<'_>, width: usize, count: usize) -> Result<DecisionTree, ParseError> {
        let mut nodes = Vec::with_capacity(count);
        for i in 0..count {
            let (line, text) = lines.next()?;
            let bad = |msg: String| ParseError::Line { line, msg };
            let parts: Vec<&str> = text.split_ascii_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad number {s:?}")));
            let node = match parts.as_slice() {
                ["leaf", l] => Node::Leaf(super::parse_label(l).ok_or_else(|| bad("bad label".into()))?),
                ["split", f, a, b] => {
                    let (feature, off, on) = (num(f)?, num(a)?, num(b)?);
                    // children strictly after their parent keeps the graph acyclic
                    if feature >= width || off <= i || on <= i || off >= count || on >= count {
                        return Err(bad(format!("split {feature} {off} {on} out of range")));
                    }
                    Node::Split { feature, off, on }
                }
                _ => return Err(bad(format!("unrecognised node {text:?}"))),
            };
            nodes.push(node);
        }
        if nodes.is_empty() {
            return Err(ParseError::Invalid("tree has no nodes".into()));
        }
        Ok(DecisionTree { width, nodes })
    }

    pub fn from_text(text: &str) -> Result<DecisionTree, ParseError> {
        let mut lines = Lines::new(text, "DT v1")?;
        let [width, count] = lines.numbers::<2>()?;
        let t = Self::read_nodes(&mut lines, width, count)?;
        lines.finish()?;
        Ok(t)
    }
}

/// Bagged trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomForest {
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Tree `i` draws its bootstrap sample and feature subsets from seed
    /// `seed + i`, so trees can be grown in parallel without changing the
    /// result.
    pub fn fit(
        train: &LabeledDataset,
        n_trees: usize,
        max_depth: usize,
        min_leaf: usize,
        seed: u64,
    ) -> Result<RandomForest, BaselineError> {
        check_train(train)?;
        if n_trees == 0 {
            return Err(BaselineError::BadParameter("forest needs at least one tree".into()));
        }
        let x: Vec<Vec<bool>> = train.vectors.iter().map(|v| v.bits.clone()).collect();
        let width = train.width();
        let params = TreeParams {
            max_depth,
            min_leaf,
            max_features: Some(((width as f64).sqrt() as usize).max(1)),
        };
        let n = train.len();
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|i| {
                let tree_seed = seed.wrapping_add(i as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                // the split stream must differ from the bootstrap stream
                DecisionTree::fit_rows(&x, &train.labels, &rows, params, tree_seed ^ 0x9e37_79b9_7f4a_7c15)
            })
            .collect();
        Ok(RandomForest { seed, trees })
    }

    pub fn predict(&self, x: &[bool]) -> Label {
        let mal = self.trees.iter().filter(|t| t.predict(x) == Label::Malicious).count();
        majority(mal, self.trees.len())
    }

    pub fn to_text(&self) -> String {
        let width = self.trees.first().map_or(0, |t| t.width);
        let mut out = format!("RF v1\n{} {} {}\n", width, self.trees.len(), self.seed);
        for t in &self.trees {
            out.push_str(&format!("tree {}\n", t.nodes.len()));
            t.write_nodes(&mut out);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<RandomForest, ParseError> {
        let mut lines = Lines::new(text, "RF v1")?;
        let (line, head) = lines.next()?;
        let parts: Vec<&str> = head.split_ascii_whitespace().collect();
        let bad = || ParseError::Line { line, msg: "expected `width n_trees seed`".into() };
        let [w, n, s] = parts.as_slice() else { return Err(bad()) };
        let (width, n_trees, seed): (usize, usize, u64) = (
            w.parse().map_err(|_| bad())?,
            n.parse().map_err(|_| bad())?,
            s.parse().map_err(|_| bad())?,
        );
        if n_trees == 0 {
            return Err(ParseError::Invalid("forest has no trees".into()));
        }
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let (line, t) = lines.next()?;
            let count = t
                .strip_prefix("tree ")
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| ParseError::Line { line, msg: "expected `tree <nodes>`".into() })?;
            trees.push(DecisionTree::read_nodes(&mut lines, width, count)?);
        }
        lines.finish()?;
        Ok(RandomForest { seed, trees })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;

    fn data(rows: &[(Vec<bool>, Label)]) -> LabeledDataset {
        let mut d = LabeledDataset::new();
        for (i, (b, l)) in rows.iter().enumerate() {
            d.push(FeatureVector { app_id: i.to_string(), bits: b.clone() }, *l).unwrap();
        }
        d
    }

    #[test]
    fn pure_data_is_a_leaf() {
        let d = data(&[(vec![true], Label::Malicious), (vec![false], Label::Malicious)]);
        let t = DecisionTree::fit(&d, TreeParams::default(), 0).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf(Label::Malicious)]);
        assert_eq!(t.depth(), 0);
    }

    #[test]
    fn single_informative_bit() {
        let rows: Vec<_> = (0..20)
            .map(|i| {
                let m = i % 2 == 0;
                (vec![i % 3 == 0, m, i % 5 == 0], if m { Label::Malicious } else { Label::Benign })
            })
            .collect();
        let d = data(&rows);
        let t = DecisionTree::fit(&d, TreeParams::default(), 0).unwrap();
        assert!(matches!(t.nodes[0], Node::Split { feature: 1, .. }));
        assert!(rows.iter().all(|(x, l)| t.predict(x) == *l));
    }

    #[test]
    fn empty_train_set() {
        assert_eq!(
            DecisionTree::fit(&LabeledDataset::new(), TreeParams::default(), 0),
            Err(BaselineError::EmptyTrainSet)
        );
        assert!(RandomForest::fit(&LabeledDataset::new(), 3, 5, 1, 0).is_err());
    }

    #[test]
    fn single_sample_forest() {
        let d = data(&[(vec![true, false], Label::Malicious)]);
        let f = RandomForest::fit(&d, 1, 10, 1, 9).unwrap();
        assert_eq!(f.predict(&[false, false]), Label::Malicious);
    }

    #[test]
    fn text_round_trips() {
        let rows: Vec<_> = (0..30)
            .map(|i| (vec![i % 2 == 0, i % 3 == 0, i % 7 == 0], if i % 3 == 0 { Label::Malicious } else { Label::Benign }))
            .collect();
        let d = data(&rows);
        let t = DecisionTree::fit(&d, TreeParams::default(), 0).unwrap();
        assert_eq!(DecisionTree::from_text(&t.to_text()).unwrap(), t);
        let f = RandomForest::fit(&d, 4, 5, 1, 3).unwrap();
        assert_eq!(RandomForest::from_text(&f.to_text()).unwrap(), f);
        assert!(DecisionTree::from_text("DT v1\n2 2\nsplit 0 0 1\nleaf 0\n").is_err());
        assert!(DecisionTree::from_text("DT v1\n2 1\nsplit 5 1 1\n").is_err());
    }
}
