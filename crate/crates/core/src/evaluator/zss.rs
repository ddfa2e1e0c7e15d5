//! Ordered tree edit distance (Zhang & Shasha keyroot decomposition) with
//! unit insert, delete and relabel costs.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::matching::normalize;
use crate::segmenter::SectionTree;

/// Postorder view of a tree: labels and leftmost-leaf descendant per node.
struct Postorder<L> {
    labels: Vec<L>,
    leftmost: Vec<usize>,
}

impl<L: Clone> Postorder<L> {
    fn build(children: &dyn Fn(usize) -> Vec<usize>, label: &dyn Fn(usize) -> L, root: usize) -> Self {
        let mut labels = Vec::new();
        let mut leftmost = Vec::new();
        // (node, next child position, postorder index of first child's leftmost)
        let mut stack: Vec<(usize, usize, Option<usize>)> = vec![(root, 0, None)];
        while let Some(frame) = stack.last_mut() {
            let (node, pos, _) = *frame;
            let kids = children(node);
            if pos < kids.len() {
                frame.1 += 1;
                stack.push((kids[pos], 0, None));
                continue;
            }
            let (_, _, first_leftmost) = stack.pop().unwrap();
            let index = labels.len();
            let lm = first_leftmost.unwrap_or(index);
            labels.push(label(node));
            leftmost.push(lm);
            if let Some(parent) = stack.last_mut() {
                if parent.2.is_none() {
                    parent.2 = Some(lm);
                }
            }
        }
        Postorder { labels, leftmost }
    }
}

impl<L> Postorder<L> {
    fn keyroots(&self) -> Vec<usize> {
        let n = self.labels.len();
        let mut seen = vec![false; n];
        let mut roots = Vec::new();
        for i in (0..n).rev() {
            let l = self.leftmost[i];
            if !seen[l] {
                seen[l] = true;
                roots.push(i);
            }
        }
        roots.reverse();
        roots
    }
}

fn distance<L: PartialEq>(a: &Postorder<L>, b: &Postorder<L>) -> usize {
    let (n, m) = (a.labels.len(), b.labels.len());
    if n == 0 || m == 0 {
        return n + m;
    }
    let mut treedist = vec![vec![0usize; m]; n];
    let mut forest = vec![vec![0usize; m + 1]; n + 1];
    for &i in &a.keyroots() {
        for &j in &b.keyroots() {
            let (li, lj) = (a.leftmost[i], b.leftmost[j]);
            // forest[x][y]: distance between a[li..li+x) and b[lj..lj+y)
            let rows = i - li + 1;
            let cols = j - lj + 1;
            forest[0][0] = 0;
            for x in 1..=rows {
                forest[x][0] = forest[x - 1][0] + 1;
            }
            for y in 1..=cols {
                forest[0][y] = forest[0][y - 1] + 1;
            }
            for x in 1..=rows {
                let ai = li + x - 1;
                for y in 1..=cols {
                    let bj = lj + y - 1;
                    let delete = forest[x - 1][y] + 1;
                    let insert = forest[x][y - 1] + 1;
                    if a.leftmost[ai] == li && b.leftmost[bj] == lj {
                        let relabel = forest[x - 1][y - 1] + usize::from(a.labels[ai] != b.labels[bj]);
                        let d = delete.min(insert).min(relabel);
                        forest[x][y] = d;
                        treedist[ai][bj] = d;
                    } else {
                        let px = a.leftmost[ai] - li;
                        let py = b.leftmost[bj] - lj;
                        let subtree = forest[px][py] + treedist[ai][bj];
                        forest[x][y] = delete.min(insert).min(subtree);
                    }
                }
            }
        }
    }
    treedist[n - 1][m - 1]
}

/// Tree edit distance between two section trees, labelling every node with
/// its normalized heading. Both synthetic roots carry the empty label.
pub fn zss_distance(a: &SectionTree, b: &SectionTree) -> usize {
    let post = |t: &SectionTree| {
        Postorder::build(
            &|i| t.nodes[i].children.clone(),
            &|i| -> String { normalize(&t.nodes[i].heading) },
            SectionTree::ROOT,
        )
    };
    distance(&post(a), &post(b))
}

/// Generic ordered-tree distance over `children` adjacency with labels.
pub fn tree_edit_distance<L: Clone + PartialEq>(
    a_children: &[Vec<usize>],
    a_labels: &[L],
    b_children: &[Vec<usize>],
    b_labels: &[L],
) -> usize {
    let pa = Postorder::build(&|i| a_children[i].clone(), &|i| a_labels[i].clone(), 0);
    let pb = Postorder::build(&|i| b_children[i].clone(), &|i| b_labels[i].clone(), 0);
    distance(&pa, &pb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_single_relabel() {
        let t = SectionTree::from_levels([(1, "A"), (2, "B"), (1, "C")]);
        assert_eq!(zss_distance(&t, &t), 0);
        let one = SectionTree::from_levels([(1, "A")]);
        let other = SectionTree::from_levels([(1, "B")]);
        assert_eq!(zss_distance(&one, &other), 1);
    }

    #[test]
    fn labels_are_normalized() {
        let a = SectionTree::from_levels([(1, "P U B L I C Law")]);
        let b = SectionTree::from_levels([(1, "public law.")]);
        assert_eq!(zss_distance(&a, &b), 0);
    }

    #[test]
    fn deletion_counts() {
        let full = SectionTree::from_levels([(1, "A"), (2, "B"), (2, "C"), (1, "D")]);
        let empty = SectionTree::default();
        assert_eq!(zss_distance(&full, &empty), 4);
        assert_eq!(zss_distance(&empty, &full), 4);
        // removing an inner node lifts its children: one deletion
        let lifted = SectionTree::from_levels([(1, "B"), (1, "C"), (1, "D")]);
        assert_eq!(zss_distance(&full, &lifted), 1);
    }

    #[test]
    fn classic_example() {
        // f(d(a c(b)) e) vs f(c(d(a b)) e): distance 2
        let a_children = vec![vec![1, 5], vec![2, 3], vec![], vec![4], vec![], vec![]];
        let a_labels = vec!['f', 'd', 'a', 'c', 'b', 'e'];
        let b_children = vec![vec![1, 5], vec![2], vec![3, 4], vec![], vec![], vec![]];
        let b_labels = vec!['f', 'c', 'd', 'a', 'b', 'e'];
        assert_eq!(tree_edit_distance(&a_children, &a_labels, &b_children, &b_labels), 2);
    }
}
