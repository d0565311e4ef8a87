//! Element-to-subdomain labelling and the interface inventory.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mesh::Mesh2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionStrategy {
    /// One subdomain per element, id = element index + 1.
    PerElement,
    /// `p x p` square blocks of cells on a structured mesh, ids in
    /// row-major block order.
    Blocks(usize),
}

/// Edges shared by subdomains `pair.0 < pair.1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceRecord {
    pub pair: (usize, usize),
    pub edge_ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Partition {
    /// Subdomain id (1-based) of every element.
    pub subdomain_of: Vec<usize>,
    pub interfaces: Vec<InterfaceRecord>,
    pub count: usize,
}

pub fn build_partition(mesh: &Mesh2D, strategy: PartitionStrategy) -> Result<Partition> {
    let labels = match strategy {
        PartitionStrategy::PerElement => (1..=mesh.num_elements()).collect(),
        PartitionStrategy::Blocks(p) => {
            let n = match mesh.structured_size() {
                Some(n) if p >= 1 && n % p == 0 => n,
                _ => return Err(Error::NotStructured { p }),
            };
            let cells = n / p;
            (0..mesh.num_elements())
                .map(|t| {
                    let cell = t / 2;
                    let (i, j) = (cell % n, cell / n);
                    (j / cells) * p + i / cells + 1
                })
                .collect()
        }
    };
    Partition::from_labels(mesh, labels)
}

impl Partition {
    /// Builds a partition from arbitrary 1-based labels. Every id in
    /// `1..=max` must be used.
    pub fn from_labels(mesh: &Mesh2D, subdomain_of: Vec<usize>) -> Result<Self> {
        if subdomain_of.len() != mesh.num_elements() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} elements",
                subdomain_of.len(),
                mesh.num_elements()
            )));
        }
        let count = subdomain_of.iter().copied().max().unwrap_or(0);
        let mut used = vec![false; count];
        for &s in &subdomain_of {
            if s == 0 {
                return Err(Error::InvalidArgument("subdomain ids start at 1".into()));
            }
            used[s - 1] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::InvalidArgument(format!("subdomain {} is empty", empty + 1)));
        }

        let mut by_pair: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (id, e) in mesh.edges.iter().enumerate() {
            if let [a, b] = e.incident_elements[..] {
                let (sa, sb) = (subdomain_of[a], subdomain_of[b]);
                if sa != sb {
                    by_pair.entry((sa.min(sb), sa.max(sb))).or_default().push(id);
                }
            }
        }
        let interfaces = by_pair
            .into_iter()
            .map(|(pair, edge_ids)| InterfaceRecord { pair, edge_ids })
            .collect();
        Ok(Self {
            subdomain_of,
            interfaces,
            count,
        })
    }

    /// Elements of subdomain `id` (1-based), in increasing order.
    pub fn elements_of(&self, id: usize) -> Vec<usize> {
        self.subdomain_of
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == id)
            .map(|(t, _)| t)
            .collect()
    }

    pub fn interface_edge_count(&self) -> usize {
        self.interfaces.iter().map(|r| r.edge_ids.len()).sum()
    }
}
