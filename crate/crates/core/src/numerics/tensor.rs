use crate::error::{Error, Result};

use super::Real;

/// Dense row-major N-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor extents must be positive: {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.contains(&0) || expected != data.len() {
            return Err(Error::shape(
                "Tensor::from_vec",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(
                "Tensor::reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Extents of a rank-4 tensor as `(batch, channels, height, width)`.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(Error::shape(op, format!("expected rank-4 input, got {:?}", self.shape))),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn fill(&mut self, value: T) {
        self.data.fill(value);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Copies batch entries `[start, start + count)` of the leading axis.
    pub fn batch_slice(&self, start: usize, count: usize) -> Self {
        let per: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = count;
        Self {
            shape,
            data: self.data[start * per..(start + count) * per].to_vec(),
        }
    }

    /// Stacks equal-shaped tensors along a new leading axis.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("Tensor::stack", "no tensors"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape(
                    "Tensor::stack",
                    format!("{:?} vs {:?}", t.shape, first.shape),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    /// Converts element precision.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| super::r::<U>(super::f(v))).collect(),
        }
    }
}

/// Concatenates `[B x n_i]` matrices along the feature axis.
pub(crate) fn concat_features<T: Real>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let batch = parts[0].shape()[0];
    let widths: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
    let total: usize = widths.iter().sum();
    let mut out = Tensor::zeros(&[batch, total]);
    for b in 0..batch {
        let mut off = 0;
        let row = &mut out.data_mut()[b * total..(b + 1) * total];
        for (p, &w) in parts.iter().zip(&widths) {
            row[off..off + w].copy_from_slice(&p.data()[b * w..(b + 1) * w]);
            off += w;
        }
    }
    out
}

/// Inverse of [`concat_features`] for gradients.
pub(crate) fn split_features<T: Real>(grad: &Tensor<T>, widths: &[usize]) -> Vec<Tensor<T>> {
    let batch = grad.shape()[0];
    let total = grad.shape()[1];
    let mut off = 0;
    widths
        .iter()
        .map(|&w| {
            let mut part = Tensor::zeros(&[batch, w]);
            for b in 0..batch {
                part.data_mut()[b * w..(b + 1) * w].copy_from_slice(&grad.data()[b * total + off..b * total + off + w]);
            }
            off += w;
            part
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::from_vec(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn concat_then_split_restores_parts() {
        let a = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::<f64>::from_vec(&[2, 1], vec![5.0, 6.0]).unwrap();
        let c = concat_features(&[&a, &b]);
        assert_eq!(c.data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let parts = split_features(&c, &[2, 1]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn stack_and_slice() {
        let a = Tensor::<f32>::full(&[1, 2], 1.0);
        let b = Tensor::<f32>::full(&[1, 2], 2.0);
        let s = Tensor::stack(&[a, b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 1, 2]);
        assert_eq!(s.batch_slice(1, 1).data(), b.data());
    }
}
