//! Weighted matrix factorization for implicit feedback, fitted by
//! alternating least squares.

use nalgebra::{DMatrix, DVector};

use super::{rng_for, Factors, ModelConfig};
use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Preference is 1 for relevant interactions and 0 elsewhere; observed
/// preferences carry confidence `1 + alpha`, everything else confidence 1.
pub(super) fn train(config: &ModelConfig, train: &Dataset) -> Result<Factors> {
    let mut rng = rng_for(config);
    let m = config.latent_size;
    let mut f = Factors::init(train.n_users(), train.n_items(), m, config.init_std, &mut rng);
    f.user_factors.fill(0.0);

    let mut by_user: Vec<Vec<u32>> = vec![Vec::new(); train.n_users()];
    let mut by_item: Vec<Vec<u32>> = vec![Vec::new(); train.n_items()];
    for x in train.interactions().iter().filter(|x| x.relevant) {
        by_user[x.user as usize].push(x.item);
        by_item[x.item as usize].push(x.user);
    }
    f.cold_users = (0..train.n_users() as u32).filter(|&u| by_user[u as usize].is_empty()).collect();

    let solve = |target: &mut [f64], source: &[f64], lists: &[Vec<u32>], iteration: usize| -> Result<()> {
        solve_side(target, source, lists, m, config.confidence_alpha, config.regularization)
            .map_err(|_| Error::NonFiniteLoss { algorithm: config.label(), epoch: iteration + 1 })
    };
    for it in 0..config.als_iterations {
        solve(&mut f.user_factors, &f.item_factors, &by_user, it)?;
        solve(&mut f.item_factors, &f.user_factors, &by_item, it)?;
    }
    Ok(f)
}

/// Solves `(SᵀS + α Σ s_i s_iᵀ + λI) x = (1 + α) Σ s_i` for every row of
/// `target`, the sums running over that row's observed partners.
fn solve_side(target: &mut [f64], source: &[f64], lists: &[Vec<u32>], m: usize, alpha: f64, lambda: f64) -> std::result::Result<(), ()> {
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for row in source.chunks_exact(m) {
        for a in 0..m {
            let ra = row[a];
            for b in a..m {
                gram[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..m {
        gram[(a, a)] += lambda;
        for b in a + 1..m {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    let mut lhs = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (t, partners) in lists.iter().enumerate() {
        let out = &mut target[t * m..(t + 1) * m];
        if partners.is_empty() {
            out.fill(0.0);
            continue;
        }
        lhs.copy_from(&gram);
        rhs.fill(0.0);
        for &p in partners {
            let s = &source[p as usize * m..(p as usize + 1) * m];
            for a in 0..m {
                let sa = alpha * s[a];
                rhs[a] += (1.0 + alpha) * s[a];
                for b in a..m {
                    lhs[(a, b)] += sa * s[b];
                }
            }
        }
        for a in 0..m {
            for b in a + 1..m {
                lhs[(b, a)] = lhs[(a, b)];
            }
        }
        let chol = lhs.clone().cholesky().ok_or(())?;
        let x = chol.solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(());
        }
        out.copy_from_slice(x.as_slice());
    }
    Ok(())
}
