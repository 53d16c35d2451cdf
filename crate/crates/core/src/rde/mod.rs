//! Rough differential equations `dX = Σ_i f_i(X) dW^i` solved by Davie
//! steps, their flows and the operators `Γ_w`.

mod fields;
mod flow;
mod ito;
mod solve;

pub use fields::{derive_fields, faa_di_bruno, DerivedFieldTable, VectorFieldSystem};
pub use flow::{
    extended_dim, flow_jet_step, jacobian_expansion, lifted_system, partial_davie_check, propagate_flow_jets,
    refine_grid, solve_flow_jets, ExtendedState, LiftedField, DAVIE_CHECK_STARTS,
};
pub use ito::{gamma_from_jets, gamma_operator, ito_check, GammaFunction, ItoReport};
pub use solve::{davie_step, davie_trajectory, fixed_point_residual, solve_rde, solve_rde_path, RdeSolution, BLOW_UP};
