//! Undirected user graph with edge deletion and component queries.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct UserGraph {
    n: usize,
    adj: Vec<bool>,
    edges: usize,
}

impl UserGraph {
    /// Complete graph on `n` users.
    pub fn complete(n: usize) -> Self {
        let mut adj = vec![true; n * n];
        for i in 0..n {
            adj[i * n + i] = false;
        }
        Self {
            n,
            adj,
            edges: n * n.saturating_sub(1) / 2,
        }
    }

    /// Graph on `n` users with no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adj: vec![false; n * n],
            edges: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    /// Removes the edge `(i, j)`. Returns whether it existed.
    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        if i == j || !self.has_edge(i, j) {
            return false;
        }
        self.adj[i * self.n + j] = false;
        self.adj[j * self.n + i] = false;
        self.edges -= 1;
        true
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.adj[i * self.n..(i + 1) * self.n];
        row.iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j)
    }

    /// `i` together with its 1-hop neighbours, ascending.
    pub fn closed_neighborhood(&self, i: usize) -> Vec<usize> {
        let row = &self.adj[i * self.n..(i + 1) * self.n];
        (0..self.n).filter(|&j| j == i || row[j]).collect()
    }

    /// Members of the connected component containing `i`, ascending.
    pub fn component_of(&self, i: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([i]);
        seen[i] = true;
        while let Some(a) = queue.pop_front() {
            for b in self.neighbors(a) {
                if !seen[b] {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
        (0..self.n).filter(|&j| seen[j]).collect()
    }

    /// Component label per user; labels are numbered by smallest member.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            let mut queue = VecDeque::from([s]);
            while let Some(a) = queue.pop_front() {
                for b in self.neighbors(a) {
                    if label[b] == usize::MAX {
                        label[b] = next;
                        queue.push_back(b);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Connected components, each ascending, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let labels = self.component_labels();
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut out = vec![Vec::new(); k];
        for (u, &l) in labels.iter().enumerate() {
            out[l].push(u);
        }
        out
    }
}

/// True when two labelings induce the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            if (a[i] == a[j]) != (b[i] == b[j]) {
                return false;
            }
        }
    }
    true
}
