use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    U8,
    U16,
    Bool,
}

#[derive(Debug, Clone)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    U16(Vec<u16>),
    Bool(Vec<bool>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::U16(v) => v.len(),
            TensorData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
            TensorData::U16(_) => DType::U16,
            TensorData::Bool(_) => DType::Bool,
        }
    }
}

/// An n-dimensional row-major array in one of the interchange dtypes.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

/// Bit-level equality: float payloads are compared by their bit patterns.
impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        if self.shape != other.shape {
            return false;
        }
        match (&self.data, &other.data) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            (TensorData::U16(a), TensorData::U16(b)) => a == b,
            (TensorData::Bool(a), TensorData::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} holds {} values but {} were given",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Values widened to `f64`, whatever the stored dtype.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U16(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::Bool(v) => v.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Result<Self> {
        Tensor::new(shape, TensorData::F32(values.iter().map(|&x| x as f32).collect()))
    }

    pub fn from_grid(grid: &Grid<f64>) -> Self {
        Tensor {
            shape: vec![grid.height(), grid.width()],
            data: TensorData::F32(grid.iter().map(|&x| x as f32).collect()),
        }
    }

    pub fn from_mask(mask: &Grid<bool>) -> Self {
        Tensor {
            shape: vec![mask.height(), mask.width()],
            data: TensorData::Bool(mask.as_slice().to_vec()),
        }
    }

    /// Interprets a 2-D tensor as an `H×W` grid.
    pub fn to_grid(&self) -> Result<Grid<f64>> {
        match self.shape.as_slice() {
            &[h, w] => Grid::from_vec(w, h, self.to_f64()),
            s => Err(Error::Shape(format!("expected a 2-D tensor, got shape {s:?}"))),
        }
    }

    pub fn to_mask(&self) -> Result<Grid<bool>> {
        match (self.shape.as_slice(), &self.data) {
            (&[h, w], TensorData::Bool(v)) => Grid::from_vec(w, h, v.clone()),
            (&[h, w], _) => Grid::from_vec(w, h, self.to_f64().iter().map(|&x| x != 0.0).collect()),
            (s, _) => Err(Error::Shape(format!("expected a 2-D mask, got shape {s:?}"))),
        }
    }

    /// Interprets a 3-D `C×H×W` tensor as `(C, H, W, values)`.
    pub fn to_planes(&self) -> Result<(usize, usize, usize, Vec<f64>)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w, self.to_f64())),
            s => Err(Error::Shape(format!("expected a C×H×W tensor, got shape {s:?}"))),
        }
    }
}
