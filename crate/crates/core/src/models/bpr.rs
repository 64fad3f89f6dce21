//! Bayesian personalized ranking with uniform negative sampling.

use rand::Rng;

use super::{dot, rng_for, Factors, ModelConfig};
use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Positives are the relevant training interactions. Negatives are drawn
/// uniformly from the items the user has not interacted with.
pub(super) fn train(config: &ModelConfig, train: &Dataset) -> Result<Factors> {
    let mut rng = rng_for(config);
    let m = config.latent_size;
    let (lr, reg) = (config.learning_rate, config.regularization);
    let n_items = train.n_items();
    let mut f = Factors::init(train.n_users(), n_items, m, config.init_std, &mut rng);

    let mut positives: Vec<(u32, u32)> = Vec::new();
    let mut seen: Vec<Vec<u32>> = Vec::with_capacity(train.n_users());
    for u in 0..train.n_users() {
        let xs = train.user_interactions(u as u32);
        let mut items: Vec<u32> = xs.iter().map(|x| x.item).collect();
        items.sort_unstable();
        let samplable = items.len() < n_items;
        let before = positives.len();
        if samplable {
            positives.extend(xs.iter().filter(|x| x.relevant).map(|x| (u as u32, x.item)));
        }
        if positives.len() == before {
            f.cold_users.push(u as u32);
        }
        seen.push(items);
    }
    if positives.is_empty() {
        return Ok(f);
    }

    let mut diff = vec![0.0; m];
    for epoch in 0..config.epochs {
        let mut loss = 0.0;
        for _ in 0..positives.len() {
            let (u, i) = positives[rng.random_range(0..positives.len())];
            let (u, i) = (u as usize, i as usize);
            let j = loop {
                let j = rng.random_range(0..n_items as u32);
                if seen[u].binary_search(&j).is_err() {
                    break j as usize;
                }
            };
            let pu = &mut f.user_factors[u * m..(u + 1) * m];
            for d in 0..m {
                diff[d] = f.item_factors[i * m + d] - f.item_factors[j * m + d];
            }
            let x = f.item_bias[i] - f.item_bias[j] + dot(pu, &diff);
            // -ln σ(x), and σ(-x) as the gradient scale
            loss += if x > 0.0 { (-x).exp().ln_1p() } else { -x + x.exp().ln_1p() };
            let g = 1.0 / (1.0 + x.exp());
            f.item_bias[i] += lr * (g - reg * f.item_bias[i]);
            f.item_bias[j] += lr * (-g - reg * f.item_bias[j]);
            for d in 0..m {
                let p = pu[d];
                let qi = f.item_factors[i * m + d];
                let qj = f.item_factors[j * m + d];
                pu[d] += lr * (g * diff[d] - reg * p);
                f.item_factors[i * m + d] += lr * (g * p - reg * qi);
                f.item_factors[j * m + d] += lr * (-g * p - reg * qj);
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { algorithm: config.label(), epoch: epoch + 1 });
        }
    }
    Ok(f)
}
