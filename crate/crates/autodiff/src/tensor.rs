use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::error::{Error, Result};

/// Maps the output gradient of an op to one gradient per parent.
///
/// A `None` entry means the parent receives no gradient from this op.
pub type BackwardFn = Box<dyn Fn(&[f32]) -> Vec<Option<Vec<f32>>> + Send + Sync>;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any operations on this thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

struct GradFn {
    name: &'static str,
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RwLock<Vec<f32>>,
    grad: Mutex<Option<Vec<f32>>>,
    requires_grad: bool,
    grad_fn: Option<GradFn>,
}

/// A reference-counted n-dimensional `f32` array that can take part in
/// reverse-mode differentiation. Cloning is cheap and shares storage.
#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.grad_fn.as_ref().map(|g| g.name))
            .finish()
    }
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f32>, requires_grad: bool, grad_fn: Option<GradFn>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RwLock::new(data),
            grad: Mutex::new(None),
            requires_grad,
            grad_fn,
        }))
    }

    /// A constant tensor. Fails if `data.len()` is not the product of `shape`.
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// A trainable leaf tensor.
    pub fn parameter(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::build(shape.to_vec(), data, true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Self::build(shape.to_vec(), vec![value; n], false, None)
    }

    pub fn scalar(value: f32) -> Self {
        Self::build(vec![1], vec![value], false, None)
    }

    /// Creates the output of a differentiable operation.
    ///
    /// The backward closure is recorded only when gradients are enabled on
    /// this thread and at least one parent requires them; otherwise the
    /// result is a plain constant.
    pub fn from_op(
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<f32>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}: output size");
        let track = is_grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if !track {
            return Self::build(shape, data, false, None);
        }
        Self::build(
            shape,
            data,
            true,
            Some(GradFn {
                name,
                parents,
                backward,
            }),
        )
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<f32>> {
        self.0.data.read().expect("tensor data lock poisoned")
    }

    /// Mutable access to the storage, used by optimizers and running
    /// statistics. Shape cannot change.
    pub fn data_mut(&self) -> RwLockWriteGuard<'_, Vec<f32>> {
        self.0.data.write().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.data().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f32 {
        let d = self.data();
        assert_eq!(d.len(), 1, "item() on tensor of shape {:?}", self.shape());
        d[0]
    }

    pub fn set_data(&self, values: &[f32]) -> Result<()> {
        let mut d = self.data_mut();
        if d.len() != values.len() {
            return Err(Error::ShapeMismatch {
                op: "set_data",
                detail: format!("{} values for shape {:?}", values.len(), self.shape()),
            });
        }
        d.copy_from_slice(values);
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<f32>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    /// A constant copy that shares no graph history.
    pub fn detach(&self) -> Tensor {
        Self::build(self.0.shape.clone(), self.to_vec(), false, None)
    }

    fn accumulate_grad(&self, g: &[f32]) {
        let mut slot = self.0.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Nodes reachable from `self` through gradient-requiring edges, parents
    /// before children.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.id());
        while let Some((node, next)) = stack.pop() {
            let parents = node.0.grad_fn.as_ref().map(|g| g.parents.as_slice()).unwrap_or(&[]);
            if next < parents.len() {
                let child = parents[next].clone();
                stack.push((node, next + 1));
                if child.requires_grad() && visited.insert(child.id()) {
                    stack.push((child, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }

    /// Accumulates d(self)/d(leaf) into every reachable leaf that requires
    /// gradients. The graph is left intact, so calling this twice without
    /// zeroing doubles every leaf gradient.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::BackwardOnNonScalar(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut pending: HashMap<u64, Vec<f32>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);
        for node in order.iter().rev() {
            let Some(g) = pending.remove(&node.id()) else {
                continue;
            };
            match &node.0.grad_fn {
                None => node.accumulate_grad(&g),
                Some(f) => {
                    let parent_grads = (f.backward)(&g);
                    debug_assert_eq!(parent_grads.len(), f.parents.len(), "{}", f.name);
                    for (p, pg) in f.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.numel(), "{} grad size", f.name);
                        match pending.get_mut(&p.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::ShapeMismatch {
            op: "tensor",
            detail: format!("extents must be positive, got {shape:?}"),
        });
    }
    let n: usize = shape.iter().product();
    if n != len {
        return Err(Error::ShapeMismatch {
            op: "tensor",
            detail: format!("shape {shape:?} holds {n} values, got {len}"),
        });
    }
    Ok(())
}
