//! Biased matrix factorization fitted to observed ratings by SGD.

use rand::seq::SliceRandom;

use super::{dot, rng_for, Factors, ModelConfig};
use crate::corpus::Dataset;
use crate::error::{Error, Result};

pub(super) fn train(config: &ModelConfig, train: &Dataset) -> Result<Factors> {
    let mut rng = rng_for(config);
    let m = config.latent_size;
    let (lr, reg) = (config.learning_rate, config.regularization);
    let mut f = Factors::init(train.n_users(), train.n_items(), m, config.init_std, &mut rng);
    let data = train.interactions();
    f.global = data.iter().map(|x| x.rating as f64).sum::<f64>() / data.len() as f64;

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &k in &order {
            let x = &data[k];
            let (u, i) = (x.user as usize, x.item as usize);
            let pu = &mut f.user_factors[u * m..(u + 1) * m];
            let qi = &mut f.item_factors[i * m..(i + 1) * m];
            let pred = f.global + f.user_bias[u] + f.item_bias[i] + dot(pu, qi);
            let e = x.rating as f64 - pred;
            loss += e * e;
            f.user_bias[u] += lr * (e - reg * f.user_bias[u]);
            f.item_bias[i] += lr * (e - reg * f.item_bias[i]);
            for (p, q) in pu.iter_mut().zip(qi.iter_mut()) {
                let (p0, q0) = (*p, *q);
                *p += lr * (e * q0 - reg * p0);
                *q += lr * (e * p0 - reg * q0);
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { algorithm: config.label(), epoch: epoch + 1 });
        }
    }
    Ok(f)
}
