// Scratch tuning scan (not part of the deliverable workflow).

use mgrid_core::controller::{ControllerConfig, DguController};
use mgrid_core::presets::*;
use mgrid_core::synthesis::synthesize_grid;
use nalgebra::Vector3;

fn main() {
    let opts = reference_synthesis_options();
    let dgus = reference_grid_dgus();
    let grid = synthesize_grid(&dgus, &opts).unwrap();
    let pd = &grid.predictor;
    println!("T = {:.3e?}", pd.t.as_slice());
    println!("P col3 = {:?}", (grid.p_lyap * pd.b_cc).as_slice());
    println!("e = {:?}", pd.e);
    // Typical deviation magnitudes after a plug-in transient.
    let x_typ = Vector3::new(20.0, 40.0, 0.05);
    let z_typ = pd.t * x_typ;
    println!("z for x=(20A,40V,0.05Vs): {:?}", z_typ.as_slice());
    let p_b = grid.p_lyap * pd.b_cc;
    let drive_unit = (z_typ.dot(&p_b)) * z_typ.norm();
    println!("raw drive scale (z'Pb)*|z| = {drive_unit:.3e}");
    println!("theta_cc bound = {:.3e}", grid.uncertainty.theta_max_canonical);
    // Gamma required to traverse the bound in ~2 ms if z_tilde ~ z_typ.
    let gamma_needed = grid.uncertainty.theta_max_canonical / (0.002 * drive_unit.abs());
    println!("gamma to cross bound in 2 ms: {gamma_needed:.3e}");
    let cfg = ControllerConfig::from_synthesis(&grid, 6, 4e-5).unwrap();
    println!("predictor substeps = {}", cfg.predictor_substeps);
    let _ = DguController::new(cfg, grid.dgu(6).unwrap().op, 380.7, true);
}
