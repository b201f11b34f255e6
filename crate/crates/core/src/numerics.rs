//! Dense tensors, parameter groups, and the small set of vector operations
//! the optimizers are built from.
//!
//! Everything is `f64` and row-major. Tensors are plain values: construction
//! validates the shape/data contract once, after which reads are infallible.
//! Mutation happens either by building a new tensor or through `&mut` access
//! that the optimizer holds exclusively, so shared references are always safe
//! to read concurrently.

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data.len()` equals the product of
    /// `shape`. A zero extent is allowed (the result is empty); reductions
    /// over empty tensors fail instead.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeDataMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Rank-1 tensor over `data`.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    /// Zero tensor with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when every entry is finite (no NaN, no infinities).
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyTensor)
        } else {
            Ok(())
        }
    }

    pub(crate) fn require_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                got: other.shape.clone(),
            })
        } else {
            Ok(())
        }
    }
}

/// Sum of absolute entries.
pub fn l1_norm(t: &Tensor) -> Result<f64> {
    t.require_nonempty()?;
    Ok(t.data.iter().map(|x| x.abs()).sum())
}

/// Euclidean norm.
pub fn l2_norm(t: &Tensor) -> Result<f64> {
    t.require_nonempty()?;
    Ok(t.data.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Largest absolute entry.
pub fn linf_norm(t: &Tensor) -> Result<f64> {
    t.require_nonempty()?;
    Ok(t.data.iter().fold(0.0, |acc, x| acc.max(x.abs())))
}

/// Binary elementwise operations for [`elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Computes `scale * (a op b)` elementwise. Shapes must match exactly;
/// division reports the index of the first zero divisor.
pub fn elementwise(a: &Tensor, b: &Tensor, op: ElementwiseOp, scale: f64) -> Result<Tensor> {
    a.require_same_shape(b)?;
    if op == ElementwiseOp::Div {
        if let Some(index) = b.data.iter().position(|x| *x == 0.0) {
            return Err(Error::DivisionByZero { index });
        }
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let r = match op {
                ElementwiseOp::Add => x + y,
                ElementwiseOp::Sub => x - y,
                ElementwiseOp::Mul => x * y,
                ElementwiseOp::Div => x / y,
            };
            scale * r
        })
        .collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

/// What a parameter group holds; biases and weights are tracked separately so
/// per-group statistics (and the per-group gradient transform) see them as
/// distinct units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Weight,
    Bias,
}

/// A named tensor inside a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub value: Tensor,
    pub role: Role,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, value: Tensor, role: Role) -> Self {
        ParamGroup {
            name: name.into(),
            value,
            role,
        }
    }
}

/// Ordered collection of parameter groups. Iteration order is construction
/// order, always — no hashing is involved anywhere, which keeps every
/// downstream computation deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    groups: Vec<ParamGroup>,
}

impl ParamSet {
    /// Builds a set, rejecting duplicate group names.
    pub fn new(groups: Vec<ParamGroup>) -> Result<Self> {
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|h| h.name == g.name) {
                return Err(Error::DuplicateGroup(g.name.clone()));
            }
        }
        Ok(ParamSet { groups })
    }

    /// Convenience constructor for a single unconstrained vector variable.
    pub fn single(name: impl Into<String>, data: Vec<f64>) -> Self {
        ParamSet {
            groups: vec![ParamGroup::new(name, Tensor::from_vec(data), Role::Weight)],
        }
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Total number of scalar parameters across all groups.
    pub fn total_len(&self) -> usize {
        self.groups.iter().map(|g| g.value.len()).sum()
    }

    /// Concatenates all group data in group order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_len());
        for g in &self.groups {
            out.extend_from_slice(g.value.data());
        }
        out
    }

    /// Writes a flat vector (in group order) back into the group tensors.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.total_len() {
            return Err(Error::BoxDimMismatch {
                box_dim: flat.len(),
                point_dim: self.total_len(),
            });
        }
        let mut off = 0;
        for g in &mut self.groups {
            let n = g.value.len();
            g.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Checks a gradient list against this set: one tensor per group, shapes
    /// matching group for group.
    pub fn check_grads(&self, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.groups.len() {
            return Err(Error::GroupCountMismatch {
                params: self.groups.len(),
                grads: grads.len(),
            });
        }
        for (g, t) in self.groups.iter().zip(grads) {
            g.value.require_same_shape(t)?;
        }
        Ok(())
    }
}
