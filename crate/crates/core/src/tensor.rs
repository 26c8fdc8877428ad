//! Dense row-major tensors.
//!
//! Axis order for activations is fixed as `(batch, time, height, width, channel)`.
//! There is no broadcasting: every binary operation requires explicit, equal shapes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_RANK: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Row-major strides for `shape`.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::Usage(format!(
            "tensor rank must be in 1..={MAX_RANK}, got shape {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::Usage(format!(
            "tensor extents must be positive, got {shape:?}"
        )));
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim("Tensor::new", &shape, &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        check_shape(shape).expect("invalid tensor shape");
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    /// Builds a tensor by evaluating `f` at every flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> T) -> Self {
        check_shape(shape).expect("invalid tensor shape");
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(f).collect(),
        }
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn(
            &[n, n],
            |i| if i / n == i % n { T::one() } else { T::zero() },
        )
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Flat buffer index of a coordinate tuple.
    pub fn offset(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.shape.len());
        let mut idx = 0;
        for (c, &extent) in coords.iter().zip(&self.shape) {
            debug_assert!(*c < extent);
            idx = idx * extent + c;
        }
        idx
    }

    /// Coordinates of a flat buffer index; inverse of [`Tensor::offset`].
    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        for (slot, &extent) in out.iter_mut().zip(&self.shape).rev() {
            *slot = index % extent;
            index /= extent;
        }
        out
    }

    pub fn get(&self, coords: &[usize]) -> T {
        self.data[self.offset(coords)]
    }

    pub fn set(&mut self, coords: &[usize], value: T) {
        let i = self.offset(coords);
        self.data[i] = value;
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        self.clone().into_reshape(shape)
    }

    pub fn into_reshape(self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim("zip", &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&x| U::from_f64_lossy(x.to_f64_lossy()))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copies the leading-axis slices `indices` into a new tensor.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Usage("select_rows: empty index list".into()));
        }
        let row: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(row * indices.len());
        for &i in indices {
            if i >= self.shape[0] {
                return Err(Error::Usage(format!(
                    "select_rows: index {i} out of range for extent {}",
                    self.shape[0]
                )));
            }
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Self { shape, data })
    }
}

/// Standard matrix product of `[m, k]` by `[k, n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::dim("matmul", &a.shape, &b.shape));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Pads every axis with `value`; `amounts[axis] = (before, after)`.
pub fn pad_constant<T: Scalar>(
    t: &Tensor<T>,
    amounts: &[(usize, usize)],
    value: T,
) -> Result<Tensor<T>> {
    if amounts.len() != t.rank() {
        return Err(Error::dim(
            "pad_constant",
            &t.shape,
            &amounts.iter().map(|a| a.0 + a.1).collect::<Vec<_>>(),
        ));
    }
    if amounts.iter().all(|&(b, a)| b == 0 && a == 0) {
        return Ok(t.clone());
    }
    let out_shape: Vec<usize> = t
        .shape
        .iter()
        .zip(amounts)
        .map(|(&e, &(b, a))| e + b + a)
        .collect();
    let mut out = Tensor::full(&out_shape, value);
    copy_block(t, &mut out, amounts, true);
    Ok(out)
}

/// Removes `(before, after)` elements from each axis; inverse of [`pad_constant`].
pub fn crop<T: Scalar>(t: &Tensor<T>, amounts: &[(usize, usize)]) -> Result<Tensor<T>> {
    let bad =
        amounts.len() != t.rank() || t.shape.iter().zip(amounts).any(|(&e, &(b, a))| b + a >= e);
    if bad {
        return Err(Error::dim(
            "crop",
            &t.shape,
            &amounts.iter().map(|a| a.0 + a.1).collect::<Vec<_>>(),
        ));
    }
    let out_shape: Vec<usize> = t
        .shape
        .iter()
        .zip(amounts)
        .map(|(&e, &(b, a))| e - b - a)
        .collect();
    let mut out = Tensor::zeros(&out_shape);
    copy_block(t, &mut out, amounts, false);
    Ok(out)
}

/// Copies between a small tensor and the interior of a large one.
/// `into_large` selects the direction.
fn copy_block<T: Scalar>(
    src: &Tensor<T>,
    dst: &mut Tensor<T>,
    amounts: &[(usize, usize)],
    into_large: bool,
) {
    let (small_shape, large_shape) = if into_large {
        (src.shape.clone(), dst.shape.clone())
    } else {
        (dst.shape.clone(), src.shape.clone())
    };
    let rank = small_shape.len();
    let inner = small_shape[rank - 1];
    let large_strides = strides_of(&large_shape);
    let outer: usize = small_shape[..rank - 1].iter().product();
    let mut coords = vec![0usize; rank - 1];
    for row in 0..outer {
        let mut large_off = amounts[rank - 1].0;
        for (ax, &c) in coords.iter().enumerate() {
            large_off += (c + amounts[ax].0) * large_strides[ax];
        }
        let small_off = row * inner;
        if into_large {
            dst.data[large_off..large_off + inner]
                .copy_from_slice(&src.data[small_off..small_off + inner]);
        } else {
            dst.data[small_off..small_off + inner]
                .copy_from_slice(&src.data[large_off..large_off + inner]);
        }
        for ax in (0..rank - 1).rev() {
            coords[ax] += 1;
            if coords[ax] < small_shape[ax] {
                break;
            }
            coords[ax] = 0;
        }
    }
}
