use super::backprop::Gradients;
use super::{MlpModel, NetError, NetShape};
use super::train::TrainConfig;

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl OptimizerState {
    pub fn zeros(shape: NetShape) -> Self {
        Self {
            w1: vec![0.0; shape.input_dim * shape.hidden],
            b1: vec![0.0; shape.hidden],
            w2: vec![0.0; shape.hidden * shape.output_dim],
            b2: vec![0.0; shape.output_dim],
        }
    }
}

fn check_finite(tensor: &'static str, values: &[f64]) -> Result<(), NetError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(NetError::NonFiniteGradient { tensor, index }),
        None => Ok(()),
    }
}

/// `v = momentum * v + g + decay * p; p -= lr * v`
fn update(params: &mut [f64], velocity: &mut [f64], grads: &[f64], lr: f64, momentum: f64, decay: f64) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = momentum * *v + g + decay * *p;
        *p -= lr * *v;
    }
}

/// One SGD-with-momentum step. Weight decay applies to weights, not biases.
///
/// The whole step is rejected, leaving model and state untouched, if any
/// gradient entry is non-finite.
pub fn sgd_step(
    model: &mut MlpModel,
    state: &mut OptimizerState,
    grads: &Gradients,
    config: &TrainConfig,
) -> Result<(), NetError> {
    if grads.w1.len() != model.w1.len()
        || grads.w2.len() != model.w2.len()
        || state.w1.len() != model.w1.len()
        || state.w2.len() != model.w2.len()
    {
        return Err(NetError::Shape("gradient or optimizer state does not match model".into()));
    }
    let h = model.shape.hidden;
    for &r in &grads.touched_rows {
        let r = r as usize;
        check_finite("w1", &grads.w1[r * h..(r + 1) * h])
            .map_err(|e| match e {
                NetError::NonFiniteGradient { tensor, index } => NetError::NonFiniteGradient {
                    tensor,
                    index: r * h + index,
                },
                other => other,
            })?;
    }
    check_finite("b1", &grads.b1)?;
    check_finite("w2", &grads.w2)?;
    check_finite("b2", &grads.b2)?;

    let (lr, mu, wd) = (config.learning_rate, config.momentum, config.weight_decay);
    update(&mut model.w1, &mut state.w1, &grads.w1, lr, mu, wd);
    update(&mut model.w2, &mut state.w2, &grads.w2, lr, mu, wd);
    if model.shape.use_bias {
        update(&mut model.b1, &mut state.b1, &grads.b1, lr, mu, 0.0);
        update(&mut model.b2, &mut state.b2, &grads.b2, lr, mu, 0.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> NetShape {
        NetShape {
            input_dim: 2,
            hidden: 2,
            output_dim: 1,
            use_bias: true,
        }
    }

    fn config(momentum: f64, weight_decay: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.1,
            momentum,
            weight_decay,
            ..Default::default()
        }
    }

    fn constant_grads(value: f64) -> Gradients {
        let mut g = Gradients::zeros(shape());
        g.w1.fill(value);
        g.touched_rows = vec![0, 1];
        g.b1.fill(value);
        g.w2.fill(value);
        g.b2.fill(value);
        g
    }

    #[test]
    fn reduces_to_vanilla_sgd() {
        let mut model = MlpModel::init(shape(), 1);
        let before = model.clone();
        let mut state = OptimizerState::zeros(shape());
        sgd_step(&mut model, &mut state, &constant_grads(0.5), &config(0.0, 0.0)).unwrap();
        for (a, b) in model.w1.iter().zip(&before.w1) {
            assert!((a - (b - 0.05)).abs() < 1e-15);
        }
        assert!(model.b2.iter().all(|&b| (b + 0.05).abs() < 1e-15));
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut model = MlpModel::init(shape(), 2);
        let before = model.clone();
        let mut state = OptimizerState::zeros(shape());
        sgd_step(&mut model, &mut state, &constant_grads(0.0), &config(0.9, 0.0)).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn two_momentum_steps_unroll() {
        // v1 = g, v2 = 0.9 g + g: total change -lr (g + 1.9 g)
        let mut model = MlpModel::zeros(shape());
        let mut state = OptimizerState::zeros(shape());
        let g = 0.3;
        let cfg = config(0.9, 0.0);
        sgd_step(&mut model, &mut state, &constant_grads(g), &cfg).unwrap();
        sgd_step(&mut model, &mut state, &constant_grads(g), &cfg).unwrap();
        let expected = -0.1 * (g + 1.9 * g);
        for &w in model.w1.iter().chain(&model.b1) {
            assert!((w - expected).abs() < 1e-15, "{w} vs {expected}");
        }
    }

    #[test]
    fn weight_decay_skips_biases() {
        let mut model = MlpModel::zeros(shape());
        model.w2.fill(1.0);
        model.b2.fill(1.0);
        let mut state = OptimizerState::zeros(shape());
        sgd_step(&mut model, &mut state, &constant_grads(0.0), &config(0.0, 0.5)).unwrap();
        assert!(model.w2.iter().all(|&w| (w - 0.95).abs() < 1e-15));
        assert!(model.b2.iter().all(|&b| b == 1.0));
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut model = MlpModel::zeros(shape());
        let before = model.clone();
        let mut state = OptimizerState::zeros(shape());
        let mut g = constant_grads(0.1);
        g.w1[3] = f64::NAN;
        let err = sgd_step(&mut model, &mut state, &g, &config(0.9, 0.0)).unwrap_err();
        assert_eq!(err, NetError::NonFiniteGradient { tensor: "w1", index: 3 });
        assert_eq!(model, before);
    }
}
