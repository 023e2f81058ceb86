//! Catalogue of every differentiable primitive, each with two input shape
//! configurations, for exhaustive gradient checking.

use crate::error::Result;
use crate::gradcheck::CheckedOp;
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::LEAKY_SLOPE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    MatMul,
    MatMulBatched,
    Add,
    AddBroadcast,
    Sub,
    Mul,
    MulBroadcast,
    Scale,
    LeakyRelu,
    Tanh,
    SoftmaxLast,
    SoftmaxFirst,
    LayerNorm,
    Mse,
    Concat,
    Slice,
    Embedding,
    Mean,
    Sum,
    Transpose,
    Reshape,
}

/// One primitive at one shape configuration.
#[derive(Clone, Debug)]
pub struct OpCase {
    pub primitive: Primitive,
    pub shapes: Vec<Vec<usize>>,
}

impl OpCase {
    pub fn name(&self) -> String {
        format!("{:?}{:?}", self.primitive, self.shapes)
    }
}

fn case(primitive: Primitive, shapes: &[&[usize]]) -> OpCase {
    OpCase {
        primitive,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

/// Every primitive at two shape configurations.
pub fn registered_cases() -> Vec<OpCase> {
    use Primitive::*;
    vec![
        case(MatMul, &[&[3, 4], &[4, 2]]),
        case(MatMul, &[&[2, 3, 5], &[5, 4]]),
        case(MatMulBatched, &[&[2, 3, 4], &[2, 4, 3]]),
        case(MatMulBatched, &[&[3, 1, 2], &[3, 2, 5]]),
        case(Add, &[&[3, 4], &[3, 4]]),
        case(Add, &[&[5], &[5]]),
        case(AddBroadcast, &[&[3, 4], &[4]]),
        case(AddBroadcast, &[&[2, 3, 3], &[3, 3]]),
        case(Sub, &[&[3, 4], &[4]]),
        case(Sub, &[&[2, 2, 3], &[2, 2, 3]]),
        case(Mul, &[&[3, 4], &[3, 4]]),
        case(Mul, &[&[6], &[6]]),
        case(MulBroadcast, &[&[4, 3], &[3]]),
        case(MulBroadcast, &[&[2, 2, 5], &[2, 5]]),
        case(Scale, &[&[3, 4]]),
        case(Scale, &[&[7]]),
        case(LeakyRelu, &[&[4, 5]]),
        case(LeakyRelu, &[&[2, 3, 2]]),
        case(Tanh, &[&[4, 5]]),
        case(Tanh, &[&[9]]),
        case(SoftmaxLast, &[&[3, 5]]),
        case(SoftmaxLast, &[&[2, 3, 4]]),
        case(SoftmaxFirst, &[&[4, 3]]),
        case(SoftmaxFirst, &[&[3, 2, 2]]),
        case(LayerNorm, &[&[3, 6], &[6], &[6]]),
        case(LayerNorm, &[&[2, 2, 4], &[4], &[4]]),
        case(Mse, &[&[3, 4], &[3, 4]]),
        case(Mse, &[&[5], &[5]]),
        case(Concat, &[&[2, 3], &[2, 4]]),
        case(Concat, &[&[2, 2, 3], &[2, 1, 3]]),
        case(Slice, &[&[4, 6]]),
        case(Slice, &[&[3, 5, 2]]),
        case(Embedding, &[&[5, 3]]),
        case(Embedding, &[&[8, 2]]),
        case(Mean, &[&[3, 4]]),
        case(Mean, &[&[2, 2, 2]]),
        case(Sum, &[&[3, 4]]),
        case(Sum, &[&[5]]),
        case(Transpose, &[&[3, 4]]),
        case(Transpose, &[&[2, 3, 4]]),
        case(Reshape, &[&[3, 4]]),
        case(Reshape, &[&[2, 6]]),
    ]
}

impl CheckedOp for OpCase {
    fn apply<T: Real>(&self, tape: &mut Tape<T>, x: &[Var]) -> Result<Var> {
        use Primitive::*;
        match self.primitive {
            MatMul | MatMulBatched => tape.matmul(x[0], x[1]),
            Add | AddBroadcast => tape.add(x[0], x[1]),
            Sub => tape.sub(x[0], x[1]),
            Mul | MulBroadcast => tape.mul(x[0], x[1]),
            Scale => Ok(tape.scale(x[0], T::lit(-1.7))),
            LeakyRelu => Ok(tape.leaky_relu(x[0], T::lit(LEAKY_SLOPE))),
            Tanh => Ok(tape.tanh(x[0])),
            SoftmaxLast => {
                let axis = self.shapes[0].len() - 1;
                tape.softmax(x[0], axis)
            }
            SoftmaxFirst => tape.softmax(x[0], 0),
            LayerNorm => tape.layer_norm(x[0], x[1], x[2], T::lit(1e-5)),
            Mse => tape.mse(x[0], x[1]),
            Concat => {
                let axis = (0..self.shapes[0].len())
                    .find(|&d| self.shapes[0][d] != self.shapes[1][d])
                    .unwrap_or(0);
                tape.concat(&[x[0], x[1]], axis)
            }
            Slice => tape.slice(x[0], 1, 1, 2),
            Embedding => {
                let rows = self.shapes[0][0];
                let idx: Vec<usize> = [0, rows - 1, 1, 0].to_vec();
                tape.embedding_lookup(x[0], &idx)
            }
            Mean => Ok(tape.mean(x[0])),
            Sum => Ok(tape.sum(x[0])),
            Transpose => {
                let r = self.shapes[0].len();
                tape.transpose(x[0], r - 2, r - 1)
            }
            Reshape => {
                let n: usize = self.shapes[0].iter().product();
                tape.reshape(x[0], &[n / 2, 2])
            }
        }
    }

    fn admissible(&self, inputs: &[Tensor<f64>]) -> bool {
        match self.primitive {
            Primitive::LeakyRelu => inputs[0].data().iter().all(|v| v.abs() > 1e-2),
            _ => true,
        }
    }
}
