use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references an agent outside 0..{2}")]
    UnknownAgent(usize, usize, usize),
    #[error("self loop on agent {0}")]
    SelfLoop(usize),
    #[error("communication graph is not connected")]
    Disconnected,
    #[error("edge ({0}, {1}) is not in the graph")]
    NoSuchEdge(usize, usize),
}

/// Undirected communication graph whose links can be taken down and restored.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    agents: usize,
    /// Normalized `(min, max)` pairs, sorted.
    edges: Vec<(usize, usize)>,
    up: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub connected: bool,
    /// Component label per agent.
    pub component: Vec<usize>,
    /// Agents whose component does not span every agent.
    pub cut_off: Vec<usize>,
}

impl CommGraph {
    /// Builds a graph and insists it is connected.
    pub fn new(agents: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= agents || b >= agents {
                return Err(GraphError::UnknownAgent(a, b, agents));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let g = Self { agents, up: vec![true; edges.len()], edges };
        if !g.connectivity().connected {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    /// Path 0 – 1 – … – (k−1).
    pub fn chain(agents: usize) -> Self {
        let edges: Vec<_> = (1..agents).map(|i| (i - 1, i)).collect();
        Self::new(agents, &edges).expect("a chain is connected")
    }

    pub fn agent_count(&self) -> usize {
        self.agents
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn degree_sum(&self) -> usize {
        2 * self.edges.len()
    }

    /// Neighbours over links that are currently up, ascending.
    pub fn up_neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .zip(&self.up)
            .filter(|(_, &u)| u)
            .filter_map(|(&(a, b), _)| if a == i { Some(b) } else if b == i { Some(a) } else { None })
            .collect()
    }

    pub fn link_is_up(&self, a: usize, b: usize) -> Option<bool> {
        self.edge_index(a, b).map(|k| self.up[k])
    }

    fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.iter().position(|&e| e == (a.min(b), a.max(b)))
    }

    pub fn set_link(&mut self, a: usize, b: usize, up: bool) -> Result<ConnectivityReport, GraphError> {
        let k = self.edge_index(a, b).ok_or(GraphError::NoSuchEdge(a, b))?;
        self.up[k] = up;
        Ok(self.connectivity())
    }

    pub fn all_up(&self) -> bool {
        self.up.iter().all(|&u| u)
    }

    pub fn restore_all(&mut self) {
        self.up.iter_mut().for_each(|u| *u = true);
    }

    pub fn connectivity(&self) -> ConnectivityReport {
        let mut component = vec![usize::MAX; self.agents];
        let mut label = 0;
        for start in 0..self.agents {
            if component[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            component[start] = label;
            while let Some(u) = stack.pop() {
                for v in self.up_neighbors(u) {
                    if component[v] == usize::MAX {
                        component[v] = label;
                        stack.push(v);
                    }
                }
            }
            label += 1;
        }
        let connected = label <= 1;
        let cut_off = if connected { Vec::new() } else { (0..self.agents).collect() };
        ConnectivityReport { connected, component, cut_off }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_degrees_and_neighbors() {
        let g = CommGraph::chain(3);
        assert_eq!((g.degree(0), g.degree(1), g.degree(2)), (1, 2, 1));
        assert_eq!(g.up_neighbors(1), vec![0, 2]);
        assert_eq!(g.degree_sum(), 4);
    }

    #[test]
    fn rejects_bad_graphs() {
        assert_eq!(CommGraph::new(3, &[(0, 1)]), Err(GraphError::Disconnected));
        assert_eq!(CommGraph::new(2, &[(0, 2)]), Err(GraphError::UnknownAgent(0, 2, 2)));
        assert_eq!(CommGraph::new(2, &[(1, 1), (0, 1)]), Err(GraphError::SelfLoop(1)));
        assert!(CommGraph::new(1, &[]).is_ok());
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = CommGraph::new(4, &[(1, 0), (2, 1), (3, 1), (0, 1)]).unwrap();
        for i in 0..4 {
            for j in g.up_neighbors(i) {
                assert!(g.up_neighbors(j).contains(&i));
            }
        }
        assert_eq!(g.edges().len(), 3);
    }

    #[test]
    fn leaf_edge_of_chain_disconnects() {
        let mut g = CommGraph::chain(3);
        let base = g.clone();
        let r = g.set_link(2, 1, false).unwrap();
        assert!(!r.connected);
        assert_ne!(r.component[2], r.component[0]);
        assert_eq!(g.up_neighbors(2), Vec::<usize>::new());
        g.set_link(1, 2, true).unwrap();
        assert_eq!(g, base);
    }

    #[test]
    fn cycle_survives_one_cut() {
        let mut g = CommGraph::new(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert!(g.set_link(0, 2, false).unwrap().connected);
        assert_eq!(g.set_link(0, 1, true).map(|r| r.connected), Ok(true));
        assert_eq!(g.set_link(0, 3, false), Err(GraphError::NoSuchEdge(0, 3)));
    }
}
