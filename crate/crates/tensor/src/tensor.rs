//! The [`Tensor`] handle and the reverse-mode tape.
//!
//! Every op records its inputs and a backward closure on the output node when
//! gradient tracking is enabled and at least one input requires a gradient.
//! The graph is the set of nodes reachable from the loss; `backward` walks it
//! in reverse topological order and accumulates vector-Jacobian products.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::element::{DType, Float};
use crate::error::{Result, TensorError};

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with gradient recording disabled on this thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let _restore = Restore(prev);
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// What a backward closure sees.
pub struct BackwardCtx<'a, F> {
    /// Forward output values of the node.
    pub output: &'a [F],
    /// Gradient of the loss with respect to the output.
    pub grad: &'a [F],
    /// Whether each input needs a gradient; closures may skip the others.
    pub needs: &'a [bool],
}

pub type BackwardFn<F> = Box<dyn Fn(&BackwardCtx<'_, F>) -> Vec<Option<Vec<F>>> + Send + Sync>;

struct GradFn<F: Float> {
    name: &'static str,
    inputs: Vec<Tensor<F>>,
    backward: BackwardFn<F>,
}

struct Node<F: Float> {
    shape: Vec<usize>,
    data: Arc<Vec<F>>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<F>>>,
    grad_fn: Option<GradFn<F>>,
}

/// Dense row-major tensor. Cloning is cheap (shared handle).
pub struct Tensor<F: Float = f32> {
    node: Arc<Node<F>>,
}

impl<F: Float> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor {
            node: Arc::clone(&self.node),
        }
    }
}

impl<F: Float> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.node.grad_fn.as_ref().map(|g| g.name);
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("dtype", &F::DTYPE)
            .field("requires_grad", &self.node.requires_grad)
            .field("op", &op)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<F: Float> Tensor<F> {
    fn leaf(shape: Vec<usize>, data: Arc<Vec<F>>, requires_grad: bool) -> Self {
        Tensor {
            node: Arc::new(Node {
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                grad_fn: None,
            }),
        }
    }

    /// Builds a constant tensor. Fails when the data length does not match
    /// the shape or a value is not finite.
    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::invalid(
                "from_vec",
                format!("shape {:?} needs {} values, got {}", shape, numel(shape), data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "from_vec" });
        }
        Ok(Self::leaf(shape.to_vec(), Arc::new(data), false))
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| F::of(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::leaf(shape.to_vec(), Arc::new(vec![F::zero(); numel(shape)]), false)
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        Self::leaf(shape.to_vec(), Arc::new(vec![value; numel(shape)]), false)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, F::one())
    }

    pub fn scalar(value: F) -> Self {
        Self::full(&[], value)
    }

    /// Returns a new leaf sharing this tensor's values with gradient
    /// tracking switched on or off.
    pub fn requires_grad(&self, on: bool) -> Self {
        Self::leaf(self.node.shape.clone(), Arc::clone(&self.node.data), on)
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        self.requires_grad(false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn ndim(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn dtype(&self) -> DType {
        F::DTYPE
    }

    pub fn data(&self) -> &[F] {
        &self.node.data
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.node.data.as_ref().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.node.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<F> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        Ok(self.node.data[0])
    }

    pub fn is_tracked(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.grad_fn.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.node.grad_fn.as_ref().map(|g| g.name)
    }

    /// Accumulated gradient of a tracked leaf, if backward reached it.
    pub fn grad(&self) -> Option<Vec<F>> {
        self.node.grad.lock().expect("grad lock poisoned").clone()
    }

    /// Gradient, or zeros when backward never reached this leaf.
    pub fn grad_or_zeros(&self) -> Vec<F> {
        self.grad().unwrap_or_else(|| vec![F::zero(); self.numel()])
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock poisoned") = None;
    }

    pub(crate) fn shared_data(&self) -> Arc<Vec<F>> {
        Arc::clone(&self.node.data)
    }

    fn id(&self) -> *const Node<F> {
        Arc::as_ptr(&self.node)
    }

    /// Same underlying node.
    pub fn same_node(&self, other: &Tensor<F>) -> bool {
        Arc::ptr_eq(&self.node, &other.node)
    }

    /// Creates the output of an op. This is the extension point for ops
    /// defined outside this crate: `backward` receives the output gradient and
    /// returns one optional gradient per input, each the size of that input.
    pub fn from_op(
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<F>,
        inputs: Vec<Tensor<F>>,
        backward: impl Fn(&BackwardCtx<'_, F>) -> Vec<Option<Vec<F>>> + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::from_op_shared(name, shape, Arc::new(data), inputs, Box::new(backward))
    }

    pub(crate) fn from_op_shared(
        name: &'static str,
        shape: Vec<usize>,
        data: Arc<Vec<F>>,
        inputs: Vec<Tensor<F>>,
        backward: BackwardFn<F>,
    ) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(TensorError::Internal(format!(
                "{name}: shape {shape:?} does not match {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: name });
        }
        let track = grad_enabled() && inputs.iter().any(|t| t.node.requires_grad);
        if !track {
            return Ok(Self::leaf(shape, data, false));
        }
        Ok(Tensor {
            node: Arc::new(Node {
                shape,
                data,
                requires_grad: true,
                grad: Mutex::new(None),
                grad_fn: Some(GradFn {
                    name,
                    inputs,
                    backward,
                }),
            }),
        })
    }

    /// Reverse-mode sweep from this scalar. Gradients accumulate into every
    /// tracked leaf the loss depends on.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        if !self.node.requires_grad {
            return Ok(());
        }
        let order = self.topo_order()?;
        let mut grads: HashMap<*const Node<F>, Vec<F>> = HashMap::new();
        grads.insert(self.id(), vec![F::one()]);

        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else {
                continue;
            };
            match &t.node.grad_fn {
                None => {
                    if t.node.requires_grad {
                        let mut slot = t.node.grad.lock().expect("grad lock poisoned");
                        match slot.as_mut() {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                            None => *slot = Some(g),
                        }
                    }
                }
                Some(gf) => {
                    let needs: Vec<bool> = gf.inputs.iter().map(|i| i.node.requires_grad).collect();
                    let ctx = BackwardCtx {
                        output: &t.node.data,
                        grad: &g,
                        needs: &needs,
                    };
                    let input_grads = (gf.backward)(&ctx);
                    if input_grads.len() != gf.inputs.len() {
                        return Err(TensorError::Internal(format!(
                            "{} returned {} gradients for {} inputs",
                            gf.name,
                            input_grads.len(),
                            gf.inputs.len()
                        )));
                    }
                    for (inp, ig) in gf.inputs.iter().zip(input_grads) {
                        let Some(ig) = ig else { continue };
                        if !inp.node.requires_grad {
                            continue;
                        }
                        if ig.len() != inp.numel() {
                            return Err(TensorError::Internal(format!(
                                "{}: gradient of length {} for input of {} values",
                                gf.name,
                                ig.len(),
                                inp.numel()
                            )));
                        }
                        if ig.iter().any(|v| !v.is_finite()) {
                            return Err(TensorError::NonFiniteGrad { op: gf.name });
                        }
                        match grads.get_mut(&inp.id()) {
                            Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += *b),
                            None => {
                                grads.insert(inp.id(), ig);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over tracked nodes reachable from `self`.
    fn topo_order(&self) -> Result<Vec<Tensor<F>>> {
        let mut order = Vec::new();
        let mut done: HashSet<*const Node<F>> = HashSet::new();
        let mut on_stack: HashSet<*const Node<F>> = HashSet::new();
        let mut stack: Vec<(Tensor<F>, usize)> = vec![(self.clone(), 0)];
        on_stack.insert(self.id());
        while let Some((t, next)) = stack.pop() {
            let inputs: &[Tensor<F>] = t.node.grad_fn.as_ref().map_or(&[], |g| &g.inputs);
            if next < inputs.len() {
                let child = inputs[next].clone();
                stack.push((t, next + 1));
                if !child.node.requires_grad || done.contains(&child.id()) {
                    continue;
                }
                if !on_stack.insert(child.id()) {
                    return Err(TensorError::Internal("cycle in autodiff graph".into()));
                }
                stack.push((child, 0));
            } else {
                on_stack.remove(&t.id());
                done.insert(t.id());
                order.push(t);
            }
        }
        Ok(order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length_and_nan() {
        assert!(Tensor::<f64>::from_vec(&[2, 2], vec![0.0; 3]).is_err());
        assert!(matches!(
            Tensor::<f64>::from_vec(&[1], vec![f64::NAN]),
            Err(TensorError::NonFinite { .. })
        ));
    }

    #[test]
    fn no_grad_suppresses_recording() {
        let x = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0]).unwrap().requires_grad(true);
        let y = no_grad(|| x.mul(&x).unwrap());
        assert!(!y.is_tracked());
        assert!(grad_enabled());
        let z = x.mul(&x).unwrap();
        assert!(z.is_tracked());
    }

    #[test]
    fn backward_requires_scalar() {
        let x = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0]).unwrap().requires_grad(true);
        assert!(matches!(x.backward(), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn sum_of_squares_gradient() {
        let x = Tensor::<f64>::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap().requires_grad(true);
        let loss = x.mul(&x).unwrap().sum().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f = sum(x*x + x) reaches x through three paths
        let x = Tensor::<f64>::from_vec(&[2], vec![0.5, -1.0]).unwrap().requires_grad(true);
        let y = x.mul(&x).unwrap().add(&x).unwrap();
        y.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -1.0]);
    }

    #[test]
    fn untouched_leaf_reports_zero_grad() {
        let x = Tensor::<f64>::from_vec(&[2], vec![1.0, 1.0]).unwrap().requires_grad(true);
        let unused = Tensor::<f64>::from_vec(&[3], vec![1.0; 3]).unwrap().requires_grad(true);
        x.sum().unwrap().backward().unwrap();
        assert!(unused.grad().is_none());
        assert_eq!(unused.grad_or_zeros(), vec![0.0; 3]);
    }

    #[test]
    fn column_sums_for_linear_map() {
        // f(x) = sum(A x) => grad = column sums of A
        let a = Tensor::<f64>::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let x = Tensor::<f64>::from_vec(&[3, 1], vec![0.1, 0.2, 0.3]).unwrap().requires_grad(true);
        a.matmul(&x).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![5.0, 7.0, 9.0]);
    }
}
