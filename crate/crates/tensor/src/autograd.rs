use std::collections::{HashMap, HashSet};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Recorded nodes reachable from `root` in post-order (parents before children).
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    // (node, children pushed yet?)
    let mut stack = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(rec) = &t.0.record {
            for p in rec.parents.iter().rev() {
                if p.0.requires_grad && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }
    order
}

impl Tensor {
    /// Accumulates d(self)/d(leaf) into every trainable leaf reachable from
    /// this scalar. Repeated calls add up; clear with [`Tensor::zero_grad`].
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.is_requires_grad() {
            return Ok(());
        }
        let order = topo_order(self);
        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(self.id(), vec![1.0]);

        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.id()) else {
                continue;
            };
            match &node.0.record {
                None => node.accumulate_grad(&g),
                Some(rec) => {
                    let needs: Vec<bool> = rec.parents.iter().map(|p| p.0.requires_grad).collect();
                    let parent_grads = (rec.backward)(&g, node.data(), &needs);
                    debug_assert_eq!(parent_grads.len(), rec.parents.len(), "op {}", rec.op);
                    for (p, pg) in rec.parents.iter().zip(parent_grads) {
                        let (true, Some(pg)) = (p.0.requires_grad, pg) else {
                            continue;
                        };
                        debug_assert_eq!(pg.len(), p.numel(), "op {} parent grad size", rec.op);
                        match grads.get_mut(&p.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                grads.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
