use super::graph::Parameter;

/// Adam with bias correction and coupled L2 weight decay
/// (`g <- g + decay * value` before the moment updates).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Parameter], lr: f64, weight_decay: f64) -> Self {
        AdamState {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }
}

/// One optimizer step over all trainable parameters. Frozen parameters and
/// their moments are left untouched.
pub fn adam_step(state: &mut AdamState, params: &mut [Parameter]) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let wd = if p.decay_exempt { 0.0 } else { state.weight_decay };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..p.value.len() {
            let g = p.grad[k] + wd * p.value[k];
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p.value[k] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(value: f64, grad: f64) -> Parameter {
        Parameter {
            name: "p".into(),
            shape: vec![1],
            value: vec![value],
            grad: vec![grad],
            trainable: true,
            decay_exempt: false,
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = vec![scalar(0.0, 1.0)];
        let mut state = AdamState::new(&params, 0.01, 0.0);
        adam_step(&mut state, &mut params);
        let expected = -0.01 * (1.0 / (1.0 + 1e-8));
        assert!((params[0].value[0] - expected).abs() < 1e-15);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn moments_after_two_steps() {
        let mut params = vec![scalar(0.0, 1.0)];
        let mut state = AdamState::new(&params, 0.01, 0.0);
        adam_step(&mut state, &mut params);
        adam_step(&mut state, &mut params);
        assert!((state.m[0][0] - 0.19).abs() < 1e-12);
        assert!((state.v[0][0] - 0.001999).abs() < 1e-12);
        assert_eq!(state.step, 2);
    }

    #[test]
    fn frozen_parameter_is_untouched() {
        let mut params = vec![scalar(0.123, 5.0)];
        params[0].trainable = false;
        let mut state = AdamState::new(&params, 0.01, 0.5);
        for _ in 0..10 {
            adam_step(&mut state, &mut params);
        }
        assert_eq!(params[0].value[0].to_bits(), 0.123f64.to_bits());
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut params = vec![scalar(0.7, 3.0), scalar(-2.0, -1.0)];
        let before = params.clone();
        let mut state = AdamState::new(&params, 0.0, 0.0005);
        adam_step(&mut state, &mut params);
        for (a, b) in params.iter().zip(&before) {
            assert_eq!(a.value[0].to_bits(), b.value[0].to_bits());
        }
    }

    #[test]
    fn decay_is_coupled_and_skips_exempt() {
        let mut params = vec![scalar(1.0, 0.0), scalar(1.0, 0.0)];
        params[1].decay_exempt = true;
        let mut state = AdamState::new(&params, 0.01, 0.5);
        adam_step(&mut state, &mut params);
        assert!(params[0].value[0] < 1.0);
        assert_eq!(params[1].value[0], 1.0);
    }
}
