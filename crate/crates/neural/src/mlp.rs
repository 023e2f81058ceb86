use clam_numerics::{rng::Rng, ParamStore, Real, Tape, Var, LEAKY_SLOPE};
use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::linear::Linear;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FinalActivation {
    #[default]
    None,
    Tanh,
}

/// Fully connected trunk: LeakyReLU(0.2) between layers, optional tanh head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub final_activation: FinalActivation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims,
            output_dim,
            final_activation: FinalActivation::None,
        }
    }

    pub fn with_tanh(mut self) -> Self {
        self.final_activation = FinalActivation::Tanh;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(NeuralError::Config(format!("MLP dims must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// Registers layers `{prefix}.{i}` for `i = 0..=hidden_dims.len()`.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        spec: MlpSpec,
        rng: &mut Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.hidden_dims);
        dims.push(spec.output_dim);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{prefix}.{i}"), w[0], w[1], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp { spec, layers })
    }

    pub fn bind<T: Real>(store: &ParamStore<T>, prefix: &str, spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = (0..=spec.hidden_dims.len())
            .map(|i| Linear::bind(store, &format!("{prefix}.{i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp { spec, layers })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if i < last {
                h = tape.leaky_relu(h, T::lit(LEAKY_SLOPE));
            }
        }
        if self.spec.final_activation == FinalActivation::Tanh {
            h = tape.tanh(h);
        }
        Ok(h)
    }

    pub fn param_ids(&self) -> Vec<clam_numerics::ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clam_numerics::{rng, Tensor};

    fn build(spec: MlpSpec) -> (ParamStore<f32>, Mlp) {
        let mut store = ParamStore::new();
        let mut r = rng::stream(5);
        let mlp = Mlp::new(&mut store, "m", spec, &mut r).unwrap();
        (store, mlp)
    }

    fn run(store: &ParamStore<f32>, mlp: &Mlp, x: Tensor<f32>) -> Tensor<f32> {
        let mut tape = Tape::new();
        let x = tape.constant(x);
        let y = mlp.forward(&mut tape, store, x).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn zero_params_give_zero_output() {
        let (mut store, mlp) = build(MlpSpec::new(3, vec![8, 8], 2));
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let y = run(&store, &mlp, Tensor::from_fn([4, 3], |i| i as f32 - 5.0));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tanh_head_bounds_outputs() {
        let (store, mlp) = build(MlpSpec::new(2, vec![16], 3).with_tanh());
        let y = run(&store, &mlp, Tensor::from_fn([5, 2], |i| (i as f32 - 4.0) * 30.0));
        assert!(y.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
        let small = run(&store, &mlp, Tensor::from_fn([5, 2], |i| (i as f32 - 4.0) * 0.1));
        assert!(small.data().iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn identity_linear_layer() {
        let (mut store, mlp) = build(MlpSpec::new(3, vec![], 3));
        let w = mlp.layers[0].weight;
        store
            .set_value(w, Tensor::from_fn([3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }))
            .unwrap();
        let x = Tensor::new([2, 3], vec![0.5, -1.0, 2.0, 3.0, 0.0, -0.25]).unwrap();
        assert_eq!(run(&store, &mlp, x.clone()), x);
    }

    #[test]
    fn input_dim_mismatch_is_error() {
        let (store, mlp) = build(MlpSpec::new(3, vec![4], 1));
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::<f32>::zeros([2, 4]));
        assert!(matches!(
            mlp.forward(&mut tape, &store, x),
            Err(NeuralError::InputDim { expected: 3, found: 4, .. })
        ));
    }

    #[test]
    fn param_count_matches_store() {
        let spec = MlpSpec::new(39, vec![512, 1024, 1024], 4);
        let (store, _) = build(spec.clone());
        assert_eq!(store.num_scalars(), spec.num_params());
    }
}
