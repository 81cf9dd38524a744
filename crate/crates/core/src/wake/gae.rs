use crate::error::{dim_err, Result};

/// Generalized advantage estimates and value targets.
///
/// `terminals[t]` marks that the episode ended after step `t`; `bootstrap`
/// is the value of the state following the last step (ignored if that step
/// was terminal).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminals: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || terminals.len() != n {
        return dim_err(format!(
            "gae inputs differ in length: {n} rewards, {} values, {} terminals",
            values.len(),
            terminals.len()
        ));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if terminals[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
