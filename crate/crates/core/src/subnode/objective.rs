//! Negative-sampling loss for one (center, context) pair and its gradient.

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `J = -ln σ(h·o) - Σ ln σ(-h·o')`.
pub fn pair_loss(h: &[f64], positive: &[f64], negatives: &[&[f64]]) -> f64 {
    -log_sigmoid(dot(h, positive)) - negatives.iter().map(|o| log_sigmoid(-dot(h, o))).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    /// Gradient with respect to the summed center vector; every feature in
    /// the center's bag receives exactly this gradient.
    pub h: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn pair_gradient(h: &[f64], positive: &[f64], negatives: &[&[f64]]) -> (f64, PairGradient) {
    let mut grad_h = vec![0.0; h.len()];
    let mut targets = Vec::with_capacity(negatives.len() + 1);
    targets.push((positive, 1.0));
    targets.extend(negatives.iter().map(|o| (*o, 0.0)));
    let mut loss = 0.0;
    let mut outs = Vec::with_capacity(targets.len());
    for (o, label) in targets {
        let f = dot(h, o);
        loss -= if label > 0.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
        let g = sigmoid(f) - label;
        for (gh, x) in grad_h.iter_mut().zip(o) {
            *gh += g * x;
        }
        outs.push(h.iter().map(|x| g * x).collect::<Vec<f64>>());
    }
    let mut outs = outs.into_iter();
    let positive = outs.next().expect("positive target");
    (
        loss,
        PairGradient {
            h: grad_h,
            positive,
            negatives: outs.collect(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_log_sigmoid() {
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!((sigmoid(2.0) - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-16);
    }

    #[test]
    fn no_negatives_means_positive_term_only() {
        let h = [0.3, -0.2];
        let o = [1.0, 0.5];
        let (loss, g) = pair_gradient(&h, &o, &[]);
        assert!((loss - (-log_sigmoid(0.2))).abs() < 1e-15);
        assert!(g.negatives.is_empty());
        let s = sigmoid(0.2) - 1.0;
        assert_eq!(g.h, vec![s * 1.0, s * 0.5]);
    }
}
