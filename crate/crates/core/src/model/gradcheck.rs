use rand::Rng;

use super::params::ModelParams;
use super::loss_and_grad;
use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::sampling::ObservationSet;
use crate::scene::{BuildingMap, RadioMap};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_analytic - g_fd| / max(1e-8, |g_fd|)` over checked entries.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Tensor name and flat index of the worst entry.
    pub worst: (String, usize),
}

/// Compares analytic gradients of the MSE loss with central finite
/// differences of step `eps` on `samples` scalar parameters: one from every
/// tensor first, the rest drawn uniformly over all scalars.
pub fn grad_check(
    params: &ModelParams<f64>,
    building: &BuildingMap,
    obs: &ObservationSet,
    truth: &RadioMap,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut grads = params.zero_grads();
    loss_and_grad(building, obs, truth, false, params, &mut grads, 1.0)?;
    if let Some(t) = params
        .tensors()
        .iter()
        .zip(&grads.0)
        .find(|(_, g)| !g.iter().all(|v| v.is_finite()))
    {
        return Err(Error::NonFiniteGradient(t.0.name.clone()));
    }

    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(samples);
    let mut rng = rng_from(seed, &[0x6c]);
    for (ti, &n) in sizes.iter().enumerate() {
        if picks.len() < samples {
            picks.push((ti, rng.gen_range(0..n)));
        }
    }
    while picks.len() < samples {
        let mut flat = rng.gen_range(0..total);
        let mut ti = 0;
        while flat >= sizes[ti] {
            flat -= sizes[ti];
            ti += 1;
        }
        picks.push((ti, flat));
    }

    let loss_at = |p: &ModelParams<f64>| -> Result<f64> {
        let mut scratch = p.zero_grads();
        loss_and_grad(building, obs, truth, false, p, &mut scratch, 1.0)
    };
    let mut probe = params.clone();
    let mut worst = (0.0f64, (String::new(), 0));
    for &(ti, idx) in &picks {
        let orig = probe.tensors()[ti].data[idx];
        probe.tensors_mut()[ti].data[idx] = orig + eps;
        let up = loss_at(&probe)?;
        probe.tensors_mut()[ti].data[idx] = orig - eps;
        let down = loss_at(&probe)?;
        probe.tensors_mut()[ti].data[idx] = orig;
        let fd = (up - down) / (2.0 * eps);
        if !fd.is_finite() {
            return Err(Error::NonFiniteGradient(params.tensors()[ti].name.clone()));
        }
        let rel = (grads.0[ti][idx] - fd).abs() / fd.abs().max(1e-8);
        if rel > worst.0 || worst.1 .0.is_empty() {
            worst = (rel, (params.tensors()[ti].name.clone(), idx));
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        checked: picks.len(),
        worst: worst.1,
    })
}
