//! Sample the worst-case distribution of a linear loss with ULA and compare the
//! empirical law against the Gaussian closed form.

use sinkhorn_dro::langevin::{run_chain, theorem_iteration_count, theorem_step_size, SamplerConfig};
use sinkhorn_dro::losses::LinearLoss;
use sinkhorn_dro::oracles::{empirical_w2_1d, gaussian_quantiles_1d, gaussian_worstcase_linear};
use sinkhorn_dro::{AnchorSet, HyperParams, RandomStream};

fn main() -> sinkhorn_dro::Result<()> {
    let hp = HyperParams::new(2.0, 0.1)?;
    let anchors = AnchorSet::new(vec![vec![1.0]], None)?;
    let theta = [0.6];
    let (alpha, delta) = (1.0 / hp.epsilon(), 0.05);
    let tau = theorem_step_size(alpha, &hp, 1.0, delta, 1)?;
    let steps = theorem_iteration_count(alpha, tau, hp.epsilon(), 1.0, delta)?;
    println!("step size {tau:.4e}, {steps} steps per chain");

    let chains = 2000;
    let stream = RandomStream::new(7);
    let config = SamplerConfig::new(tau, steps, 0)?;
    let samples = (0..chains)
        .map(|k| {
            Ok(run_chain(
                &config,
                &theta,
                &anchors,
                &hp,
                &LinearLoss::new(1),
                &stream.substream(k),
            )?[0])
        })
        .collect::<sinkhorn_dro::Result<Vec<f64>>>()?;

    let target = gaussian_worstcase_linear(&theta, anchors.point(0), &hp)?;
    let reference = gaussian_quantiles_1d(&target, samples.len())?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    println!("sample mean {mean:.4} (target {:.4})", target.mean[0]);
    println!("W2 to target {:.4}", empirical_w2_1d(&samples, &reference)?);
    Ok(())
}
