//! Dense f64 tensors (scalar / vector / matrix) backing the graph.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Vector(n) => write!(f, "vec[{n}]"),
            Shape::Matrix(r, c) => write!(f, "mat[{r}x{c}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Tensor {
        assert_eq!(shape.len(), data.len(), "tensor data length does not match {shape}");
        Tensor { shape, data }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor { shape: Shape::Scalar, data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor { shape: Shape::Vector(data.len()), data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Tensor { shape: Shape::Matrix(rows, cols), data }
    }

    pub fn zeros(shape: Shape) -> Tensor {
        Tensor { shape, data: vec![0.0; shape.len()] }
    }

    pub fn filled(shape: Shape, v: f64) -> Tensor {
        Tensor { shape, data: vec![v; shape.len()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape, Shape::Scalar, "item() on {}", self.shape);
        self.data[0]
    }

    /// Matrix row as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let Shape::Matrix(r, c) = self.shape else {
            panic!("row() on {}", self.shape)
        };
        assert!(i < r, "row {i} out of range ({r} rows)");
        &self.data[i * c..(i + 1) * c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "zip_map shapes {} vs {}", self.shape, other.shape);
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// y = W x for W: (r x c), x: vec[c].
pub fn matvec(w: &Tensor, x: &Tensor) -> Tensor {
    let Shape::Matrix(r, c) = w.shape() else {
        panic!("matvec lhs {}", w.shape())
    };
    let Shape::Vector(n) = x.shape() else {
        panic!("matvec rhs {}", x.shape())
    };
    assert_eq!(c, n, "matvec inner dims {c} vs {n}");
    let mut out = vec![0.0; r];
    for i in 0..r {
        let row = &w.data()[i * c..(i + 1) * c];
        out[i] = row.iter().zip(x.data()).map(|(a, b)| a * b).sum();
    }
    Tensor::vector(out)
}

/// y = W^T x for W: (r x c), x: vec[r].
pub fn mat_t_vec(w: &Tensor, x: &Tensor) -> Tensor {
    let Shape::Matrix(r, c) = w.shape() else {
        panic!("mat_t_vec lhs {}", w.shape())
    };
    let Shape::Vector(n) = x.shape() else {
        panic!("mat_t_vec rhs {}", x.shape())
    };
    assert_eq!(r, n, "mat_t_vec inner dims {r} vs {n}");
    let mut out = vec![0.0; c];
    for i in 0..r {
        let xi = x.data()[i];
        let row = &w.data()[i * c..(i + 1) * c];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += wv * xi;
        }
    }
    Tensor::vector(out)
}

/// Outer product a b^T for a: vec[r], b: vec[c].
pub fn outer(a: &Tensor, b: &Tensor) -> Tensor {
    let (Shape::Vector(r), Shape::Vector(c)) = (a.shape(), b.shape()) else {
        panic!("outer on {} x {}", a.shape(), b.shape())
    };
    let mut data = Vec::with_capacity(r * c);
    for &av in a.data() {
        for &bv in b.data() {
            data.push(av * bv);
        }
    }
    Tensor::matrix(r, c, data)
}

pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "dot shapes {} vs {}", a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}
