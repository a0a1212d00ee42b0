use std::collections::{HashMap, HashSet};

use super::{add_into, Real, Tensor};
use crate::error::{shape_err, Result};

impl<T: Real> Tensor<T> {
    /// Reverse-mode sweep from a scalar. Leaves that require gradients
    /// accumulate `∂self/∂leaf` into their stored gradient.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return shape_err(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape()),
            );
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut grads: HashMap<u64, Vec<T>> = HashMap::new();
        grads.insert(self.id(), vec![T::one()]);

        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.id()) else {
                continue;
            };
            match &node.node.grad_fn {
                Some(f) => {
                    let needs: Vec<bool> = f.inputs.iter().map(|t| t.requires_grad()).collect();
                    let input_grads = (f.backward)(&g, &needs);
                    debug_assert_eq!(input_grads.len(), f.inputs.len(), "{}", f.name);
                    for ((input, gi), need) in f.inputs.iter().zip(input_grads).zip(&needs) {
                        let Some(gi) = gi else { continue };
                        if !need {
                            continue;
                        }
                        debug_assert_eq!(gi.len(), input.numel(), "grad size in {}", f.name);
                        match grads.get_mut(&input.id()) {
                            Some(acc) => add_into(acc, &gi),
                            None => {
                                grads.insert(input.id(), gi);
                            }
                        }
                    }
                }
                None => {
                    let mut slot = node.node.grad.lock().expect("grad lock");
                    match slot.as_mut() {
                        Some(acc) => add_into(acc, &g),
                        None => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }

    /// Nodes reachable through gradient-tracking edges, in topological order
    /// (inputs before outputs).
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        // (node, children pushed?)
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(f) = &t.node.grad_fn {
                for input in &f.inputs {
                    if input.requires_grad() && !visited.contains(&input.id()) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let x = Tensor::<f64>::param(&[2, 3], vec![1., -2., 3., 0.5, 4., 9.]).unwrap();
        x.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn sum_of_squares_gives_2x() {
        let v = vec![1., -2., 3., 0.5];
        let x = Tensor::<f64>::param(&[4], v.clone()).unwrap();
        x.mul(&x).unwrap().sum().unwrap().backward().unwrap();
        let want: Vec<f64> = v.iter().map(|a| 2.0 * a).collect();
        assert_eq!(x.grad().unwrap(), want);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::<f64>::param(&[3], vec![1., 2., 3.]).unwrap();
        let loss = x.sum().unwrap();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0; 3]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn diamond_graph_visits_once() {
        // y = a*x + b*x with shared x
        let x = Tensor::<f64>::param(&[2], vec![1., 2.]).unwrap();
        let a = x.mul_scalar(3.0).unwrap();
        let b = x.mul_scalar(4.0).unwrap();
        a.add(&b).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![7.0, 7.0]);
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let x = Tensor::<f32>::param(&[2], vec![1., 2.]).unwrap();
        assert!(x.mul_scalar(2.0).unwrap().backward().is_err());
    }

    #[test]
    fn constants_record_no_graph() {
        let x = Tensor::<f32>::from_vec(&[2], vec![1., 2.]).unwrap();
        let y = x.mul_scalar(2.0).unwrap();
        assert!(!y.requires_grad());
        assert!(y.op_name().is_none());
    }
}
