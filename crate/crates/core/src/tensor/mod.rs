//! Reverse-mode automatic differentiation over 64-bit dense tensors.
//!
//! Values live in [`Tensor`]s. A tensor becomes differentiable once it is
//! registered on a [`Tape`] with [`Tape::var`]; every op applied to an
//! attached tensor appends an entry to that tape. [`grad`] walks the tape
//! backwards. Backward rules are written in terms of the same recorded ops,
//! so on a higher-order tape the gradients are themselves tape nodes and can
//! be differentiated again (needed for the gradient penalty).

mod adam;
mod init;
mod kernels;
mod nn;
mod ops;

pub use adam::{AdamConfig, AdamState};
pub use init::{gaussian_sample, uniform_sample};
pub use nn::{BatchNormStats, Mode, BN_MOMENTUM};
pub use ops::SparseMap;

#[doc(hidden)]
pub mod fault {
    //! Test hook for deliberately corrupting a backward rule.
    use std::cell::Cell;

    thread_local! {
        static CONV1D_BACKWARD: Cell<bool> = const { Cell::new(false) };
    }

    /// When enabled on the current thread, conv1d's input gradient is
    /// scaled by 1.01.
    pub fn set_conv1d_backward_fault(on: bool) {
        CONV1D_BACKWARD.with(|f| f.set(on));
    }

    pub(crate) fn conv1d_backward_fault() -> bool {
        CONV1D_BACKWARD.with(|f| f.get())
    }
}

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use ops::Op;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch on {axis}: expected {expected}, got {got}")]
    Shape { op: &'static str, axis: String, expected: usize, got: usize },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank { op: &'static str, expected: usize, shape: Vec<usize> },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },
    #[error("gradient objective must be a scalar, got shape {0:?}")]
    NonScalarObjective(Vec<usize>),
    #[error("tensor is detached from any computation record")]
    Detached,
    #[error("tensors belong to different computation records")]
    TapeMismatch,
    #[error("wrt tensor #{0} is not reachable from the objective")]
    Unreachable(usize),
    #[error("computation record is not higher-order capable")]
    NotHigherOrder,
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) struct Saved {
    pub shape: Vec<usize>,
    pub data: Rc<Vec<f64>>,
    pub id: Option<usize>,
}

impl Clone for Saved {
    fn clone(&self) -> Self {
        Saved { shape: self.shape.clone(), data: Rc::clone(&self.data), id: self.id }
    }
}

#[derive(Clone)]
struct Entry {
    op: Op,
    inputs: Vec<Saved>,
    output: Saved,
}

struct TapeInner {
    higher_order: bool,
    entries: Vec<Entry>,
}

/// Computation record. Entries are appended in execution order, so the
/// list is always topologically sorted.
#[derive(Clone)]
pub struct Tape(Rc<RefCell<TapeInner>>);

impl Tape {
    /// `higher_order` controls whether gradient queries may themselves be
    /// recorded (and differentiated again).
    pub fn new(higher_order: bool) -> Self {
        Tape(Rc::new(RefCell::new(TapeInner { higher_order, entries: Vec::new() })))
    }

    pub fn higher_order(&self) -> bool {
        self.0.borrow().higher_order
    }

    pub fn len(&self) -> usize {
        self.0.borrow().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a leaf variable. The returned tensor shares the data of `t`.
    pub fn var(&self, t: &Tensor) -> Tensor {
        let output = Saved { shape: t.shape.clone(), data: Rc::clone(&t.data), id: None };
        let id = self.push(Entry { op: Op::Leaf, inputs: Vec::new(), output });
        Tensor { shape: t.shape.clone(), data: Rc::clone(&t.data), node: Some(NodeRef { tape: self.clone(), id }) }
    }

    fn push(&self, mut entry: Entry) -> usize {
        let mut inner = self.0.borrow_mut();
        let id = inner.entries.len();
        entry.output.id = Some(id);
        inner.entries.push(entry);
        id
    }

    fn same(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.0.borrow();
        f.debug_struct("Tape")
            .field("higher_order", &inner.higher_order)
            .field("entries", &inner.entries.len())
            .finish()
    }
}

#[derive(Clone)]
struct NodeRef {
    tape: Tape,
    id: usize,
}

/// Row-major array of `f64` values, optionally attached to a [`Tape`].
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Rc<Vec<f64>>,
    node: Option<NodeRef>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.shape);
        if self.data.len() <= 16 {
            s.field("data", &self.data);
        }
        s.field("node", &self.node.as_ref().map(|n| n.id)).finish()
    }
}

impl PartialEq for Tensor {
    /// Value equality (shape and data); record membership is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

impl Tensor {
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::DataLength { len: data.len(), shape });
        }
        Ok(Tensor { shape, data: Rc::new(data), node: None })
    }

    pub fn from_slice(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::new(data.to_vec(), shape.to_vec())
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: Vec::new(), data: Rc::new(vec![v]), node: None }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: Rc::new(vec![v; n]), node: None }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.as_ref().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Mutable access to the values of a detached tensor. Copies if the
    /// buffer is shared.
    pub fn data_mut(&mut self) -> Result<&mut Vec<f64>> {
        if self.node.is_some() {
            return Err(TensorError::Invalid { op: "data_mut", msg: "cannot mutate a recorded tensor".into() });
        }
        Ok(Rc::make_mut(&mut self.data))
    }

    /// Same values, no record membership.
    pub fn detach(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), data: Rc::clone(&self.data), node: None }
    }

    pub fn is_attached(&self) -> bool {
        self.node.is_some()
    }

    pub fn tape(&self) -> Option<&Tape> {
        self.node.as_ref().map(|n| &n.tape)
    }

    fn saved(&self) -> Saved {
        Saved { shape: self.shape.clone(), data: Rc::clone(&self.data), id: self.node.as_ref().map(|n| n.id) }
    }

    fn from_saved(s: &Saved, tape: Option<&Tape>) -> Tensor {
        Tensor {
            shape: s.shape.clone(),
            data: Rc::clone(&s.data),
            node: match (s.id, tape) {
                (Some(id), Some(t)) => Some(NodeRef { tape: t.clone(), id }),
                _ => None,
            },
        }
    }

    /// Builds the result of `op`, recording it if any input is attached.
    pub(crate) fn record(op: Op, inputs: &[&Tensor], shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let mut tape: Option<&Tape> = None;
        for t in inputs {
            if let Some(n) = &t.node {
                match tape {
                    None => tape = Some(&n.tape),
                    Some(existing) if !existing.same(&n.tape) => return Err(TensorError::TapeMismatch),
                    _ => {}
                }
            }
        }
        let data = Rc::new(data);
        let node = match tape {
            None => None,
            Some(tape) => {
                let entry = Entry {
                    op,
                    inputs: inputs.iter().map(|t| t.saved()).collect(),
                    output: Saved { shape: shape.clone(), data: Rc::clone(&data), id: None },
                };
                let id = tape.push(entry);
                Some(NodeRef { tape: tape.clone(), id })
            }
        };
        Ok(Tensor { shape, data, node })
    }
}

/// Gradients of a scalar `objective` with respect to each tensor in `wrt`.
///
/// With `create_higher_order` set, the returned gradients are recorded on the
/// objective's tape and can be differentiated again; this requires a tape
/// created with `higher_order = true`. Otherwise the results are detached.
pub fn grad(objective: &Tensor, wrt: &[&Tensor], create_higher_order: bool) -> Result<Vec<Tensor>> {
    grad_impl(objective, wrt, create_higher_order, false)
}

/// Like [`grad`], but a `wrt` tensor the objective does not depend on gets a
/// zero gradient instead of an error.
pub fn grad_allow_unused(objective: &Tensor, wrt: &[&Tensor], create_higher_order: bool) -> Result<Vec<Tensor>> {
    grad_impl(objective, wrt, create_higher_order, true)
}

fn grad_impl(
    objective: &Tensor,
    wrt: &[&Tensor],
    create_higher_order: bool,
    allow_unused: bool,
) -> Result<Vec<Tensor>> {
    if objective.numel() != 1 {
        return Err(TensorError::NonScalarObjective(objective.shape.clone()));
    }
    let root = objective.node.as_ref().ok_or(TensorError::Detached)?;
    let tape = root.tape.clone();
    if create_higher_order && !tape.higher_order() {
        return Err(TensorError::NotHigherOrder);
    }
    let mut wrt_ids = Vec::with_capacity(wrt.len());
    for t in wrt {
        let n = t.node.as_ref().ok_or(TensorError::Detached)?;
        if !n.tape.same(&tape) {
            return Err(TensorError::TapeMismatch);
        }
        wrt_ids.push(n.id);
    }

    let root_id = root.id;
    // Snapshot the relevant prefix; new entries appended while computing
    // higher-order gradients are never revisited.
    let entries: Vec<Entry> = tape.0.borrow().entries[..=root_id].to_vec();

    // Forward sweep: which nodes depend on some wrt tensor.
    let mut needed = vec![false; root_id + 1];
    for &id in &wrt_ids {
        if id <= root_id {
            needed[id] = true;
        }
    }
    for (id, e) in entries.iter().enumerate() {
        if !needed[id] && e.inputs.iter().any(|s| s.id.is_some_and(|i| needed[i])) {
            needed[id] = true;
        }
    }

    let record_tape = create_higher_order.then_some(&tape);
    let mut adjoint: Vec<Option<Tensor>> = vec![None; root_id + 1];
    adjoint[root_id] = Some(Tensor::full(&objective.shape, 1.0));

    for id in (0..=root_id).rev() {
        if !needed[id] {
            continue;
        }
        let entry = &entries[id];
        if matches!(entry.op, Op::Leaf) {
            continue;
        }
        let Some(g) = adjoint[id].clone() else { continue };
        if !entry.inputs.iter().any(|s| s.id.is_some_and(|i| needed[i])) {
            continue;
        }
        let inputs: Vec<Tensor> = entry.inputs.iter().map(|s| Tensor::from_saved(s, record_tape)).collect();
        let output = Tensor::from_saved(&entry.output, record_tape);
        let want: Vec<bool> = entry.inputs.iter().map(|s| s.id.is_some_and(|i| needed[i])).collect();
        let grads = ops::backward(&entry.op, &inputs, &output, &g, &want)?;
        for ((s, gi), w) in entry.inputs.iter().zip(grads).zip(want) {
            if !w {
                continue;
            }
            let (Some(i), Some(gi)) = (s.id, gi) else { continue };
            adjoint[i] = Some(match adjoint[i].take() {
                None => gi,
                Some(acc) => acc.add(&gi)?,
            });
        }
        // Free intermediate adjoints once consumed.
        if !wrt_ids.contains(&id) {
            adjoint[id] = None;
        }
    }

    wrt_ids
        .iter()
        .enumerate()
        .map(|(k, &id)| match adjoint.get(id).cloned().flatten() {
            Some(g) => Ok(g),
            None if allow_unused => Ok(Tensor::zeros(wrt[k].shape())),
            None => Err(TensorError::Unreachable(k)),
        })
        .collect()
}
