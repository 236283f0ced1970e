//! Forward kernels for every tape op. Shape violations panic: they are
//! programming errors, not runtime conditions.

use super::tape::Op;
use super::tensor::Tensor;

pub(crate) fn forward(op: &Op, inputs: &[Tensor]) -> Tensor {
    let a = || &inputs[0];
    let b = || &inputs[1];
    match op {
        Op::Leaf | Op::Const => unreachable!("leaf ops carry their own value"),
        Op::Add => a().zip_map(b(), |x, y| x + y),
        Op::Sub => a().zip_map(b(), |x, y| x - y),
        Op::Mul => a().zip_map(b(), |x, y| x * y),
        Op::Div => a().zip_map(b(), |x, y| x / y),
        Op::Neg => a().map(|x| -x),
        Op::Scale(c) => a().map(|x| c * x),
        Op::Offset(c) => a().map(|x| x + c),
        Op::MatMul => matmul(a(), b()),
        Op::Transpose => transpose(a()),
        Op::Tanh => a().map(f64::tanh),
        Op::Relu => a().map(|x| x.max(0.0)),
        Op::Exp => a().map(f64::exp),
        Op::Log => a().map(f64::ln),
        Op::Sum => Tensor::scalar(a().data().iter().sum()),
        Op::Mean => {
            let x = a();
            assert!(!x.is_empty(), "mean of empty tensor");
            Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
        }
        Op::SumLast => {
            let x = a();
            let n = x.last_dim();
            let out_shape = x.shape()[..x.rank().saturating_sub(1)].to_vec();
            let data = x.data().chunks(n).map(|c| c.iter().sum()).collect();
            Tensor::new(out_shape, data)
        }
        Op::BroadcastLast(n) => {
            let x = a();
            let mut shape = x.shape().to_vec();
            shape.push(*n);
            let data = x
                .data()
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, *n))
                .collect();
            Tensor::new(shape, data)
        }
        Op::SumRows => {
            let x = a();
            assert_eq!(x.rank(), 2, "sum_rows expects a matrix, got {:?}", x.shape());
            let n = x.shape()[1];
            let mut out = vec![0.0; n];
            for row in x.data().chunks(n) {
                for (o, v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
            Tensor::vector(out)
        }
        Op::BroadcastRows(rows) => {
            let x = a();
            assert_eq!(x.rank(), 1, "broadcast_rows expects a vector, got {:?}", x.shape());
            let n = x.len();
            let mut data = Vec::with_capacity(rows * n);
            for _ in 0..*rows {
                data.extend_from_slice(x.data());
            }
            Tensor::matrix(*rows, n, data)
        }
        Op::BroadcastScalar(shape) => {
            let x = a();
            assert_eq!(x.len(), 1, "broadcast_to expects one element, got {:?}", x.shape());
            Tensor::full(shape, x.data()[0])
        }
        Op::Concat(axis) => concat(inputs, *axis),
        Op::Slice { axis, start, len } => {
            let x = a();
            let idx = slice_indices(x.shape(), *axis, *start, *len);
            let mut shape = x.shape().to_vec();
            shape[*axis] = *len;
            Tensor::new(shape, idx.iter().map(|&i| x.data()[i]).collect())
        }
        Op::IndexSelect { indices, shape } => {
            let x = a();
            let data = indices
                .iter()
                .map(|&i| {
                    assert!(i < x.len(), "index {i} out of range {}", x.len());
                    x.data()[i]
                })
                .collect();
            Tensor::new(shape.clone(), data)
        }
        Op::IndexScatter { indices, shape } => {
            let x = a();
            assert_eq!(x.len(), indices.len(), "scatter source/index length mismatch");
            let mut out = Tensor::zeros(shape);
            let buf = out.data_mut();
            for (&i, &v) in indices.iter().zip(x.data()) {
                buf[i] += v;
            }
            out
        }
        Op::LogSoftmax => {
            let x = a();
            let n = x.last_dim();
            let mut data = Vec::with_capacity(x.len());
            for row in x.data().chunks(n) {
                data.extend(log_softmax_row(row));
            }
            Tensor::new(x.shape().to_vec(), data)
        }
        Op::Clip { lo, hi } => a().map(|x| x.clamp(*lo, *hi)),
        Op::Minimum => a().zip_map(b(), f64::min),
        Op::Reshape(shape) => a().reshape(shape.clone()),
    }
}

/// Numerically stable log-softmax of one row.
pub fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert!(
        a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0],
        "matmul shape mismatch: {:?} x {:?}",
        a.shape(),
        b.shape()
    );
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::matrix(m, n, out)
}

fn transpose(a: &Tensor) -> Tensor {
    assert_eq!(a.rank(), 2, "transpose expects a matrix, got {:?}", a.shape());
    let (r, c) = (a.shape()[0], a.shape()[1]);
    let d = a.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Tensor::matrix(c, r, out)
}

fn concat(inputs: &[Tensor], axis: usize) -> Tensor {
    let first = &inputs[0];
    match (first.rank(), axis) {
        (0 | 1, 0) => {
            assert!(inputs.iter().all(|t| t.rank() <= 1), "concat rank mismatch");
            let data: Vec<f64> = inputs.iter().flat_map(|t| t.data().iter().copied()).collect();
            Tensor::vector(data)
        }
        (2, 0) => {
            let cols = first.shape()[1];
            assert!(
                inputs.iter().all(|t| t.rank() == 2 && t.shape()[1] == cols),
                "concat along rows needs equal column counts"
            );
            let rows = inputs.iter().map(|t| t.shape()[0]).sum();
            let data = inputs.iter().flat_map(|t| t.data().iter().copied()).collect();
            Tensor::matrix(rows, cols, data)
        }
        (2, 1) => {
            let rows = first.shape()[0];
            assert!(
                inputs.iter().all(|t| t.rank() == 2 && t.shape()[0] == rows),
                "concat along columns needs equal row counts"
            );
            let cols: usize = inputs.iter().map(|t| t.shape()[1]).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for t in inputs {
                    let c = t.shape()[1];
                    data.extend_from_slice(&t.data()[r * c..(r + 1) * c]);
                }
            }
            Tensor::matrix(rows, cols, data)
        }
        (r, a) => panic!("concat along axis {a} of rank-{r} tensors is not supported"),
    }
}

/// Flat row-major positions selected by a slice along `axis`.
pub(crate) fn slice_indices(shape: &[usize], axis: usize, start: usize, len: usize) -> Vec<usize> {
    match (shape.len(), axis) {
        (1, 0) => {
            assert!(start + len <= shape[0], "slice out of range");
            (start..start + len).collect()
        }
        (2, 0) => {
            assert!(start + len <= shape[0], "slice out of range");
            let c = shape[1];
            (start * c..(start + len) * c).collect()
        }
        (2, 1) => {
            assert!(start + len <= shape[1], "slice out of range");
            let c = shape[1];
            (0..shape[0])
                .flat_map(|r| r * c + start..r * c + start + len)
                .collect()
        }
        (r, a) => panic!("slice along axis {a} of rank-{r} tensors is not supported"),
    }
}
