//! Linear-quadratic smart-grid mean-field game with Cox-driven demand-side activations.

mod dynamics;
mod evaluate;
mod params;
mod solver;

pub use dynamics::{
    mfg_forward_step, simulate_exogenous, ExogenousPaths, MeanPaths, MfgState, NoiseLayout, StepOutcome, StepShocks,
};
pub use evaluate::{
    evaluate_cost, path_costs, price_of_anarchy_paired, rollout, rollout_on, running_cost, trajectory_rows,
    CostEstimate, PoaEstimate, Rollout, TrajectoryRow, EVALUATION_INDEX,
};
pub use params::{
    dsm_active, equilibrium_alpha, feedback_p, intensity_lambda0, mean_qhat, mean_reverting_mean, mfc_transform,
    price_of_anarchy, target_alpha_tg, FeedbackSlopes, MfgParams, Regime, Seasonality,
};
pub use solver::{
    check_mfg_algorithm, mfg_algorithm_name, mfg_loss_and_gradients, mfg_solver_config, solve_mfg, solve_mfg_with,
    Normalization, PolicyBundle, COMMON_INPUTS, FULL_INPUTS, MFG_ALGORITHMS,
};
