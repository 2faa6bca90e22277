//! Double-loop solver on a four-point linear benchmark whose stationary point
//! is `theta = -lambda * mean(x) = -1`, with parameters from the theory.

use sinkhorn_dro::double_loop::{
    pilot_variance, run_double_loop, stationarity_norm, theorem35_params, DoubleLoopConfig,
};
use sinkhorn_dro::langevin::{LsiEstimate, SamplingPlan};
use sinkhorn_dro::losses::LinearLoss;
use sinkhorn_dro::{AnchorSet, HyperParams, RandomStream};

fn main() -> sinkhorn_dro::Result<()> {
    let varrho: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.3);
    let hp = HyperParams::new(2.0, 0.1)?;
    let anchors = AnchorSet::new(vec![vec![-0.25], vec![0.25], vec![0.75], vec![1.25]], None)?;
    let model = LinearLoss::new(1);
    let lsi = LsiEstimate::user(1.0 / hp.epsilon())?;
    let plan = SamplingPlan::theorem(lsi, 1.0);

    let delta = varrho / 2.0;
    let schedule = plan.schedule(&hp, delta, 1)?;
    let pilot = pilot_variance(
        &[0.0],
        &anchors,
        &hp,
        &model,
        &lsi,
        schedule,
        delta,
        256,
        &RandomStream::new(1),
    )?;
    let params = theorem35_params(varrho, pilot.v, 1.0, 0.25)?;
    println!(
        "varrho {varrho}: V = {:.3}, T_out = {}, eta = {:.4e}, {} inner steps of size {:.3e}",
        pilot.v, params.t_out, params.eta, schedule.steps, schedule.tau
    );

    let out = run_double_loop(
        &DoubleLoopConfig::from_theorem(params, varrho, 0),
        &anchors,
        &hp,
        &model,
        &lsi,
    )?;
    let st = stationarity_norm(
        &out.theta_hat,
        &anchors,
        &hp,
        &model,
        500,
        delta,
        &plan,
        &RandomStream::new(2),
    )?;
    println!(
        "theta_hat = {:.4} (iterate {}), theta_last = {:.4}",
        out.theta_hat[0], out.trace.selected, out.theta_last[0]
    );
    println!("|grad F(theta_hat)| = {:.4} +- {:.4}", st.norm, st.standard_error);
    Ok(())
}
