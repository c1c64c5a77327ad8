//! Offline numerical synthesis: baseline gains per DGU, the shared
//! control-canonical predictor design, Lyapunov solves, the matched
//! uncertainty bound over a parameter polytope, and the filter-bandwidth
//! feasibility sweep.

mod canonical;
mod filter;
mod lyapunov;
mod riccati;
mod type3;
mod uncertainty;

pub use canonical::{canonical_transform, char_poly_coeffs, companion};
pub use filter::{filtered_loop_l1_norms, filtered_loop_l1_norms_weighted, l1_norm_condition};
pub use lyapunov::{is_hurwitz, max_real_eigenvalue, solve_lyapunov};
pub use riccati::{
    controllability_matrix, energy_weights, lqi_gains, pole_placement_gains, solve_care,
};
pub use type3::{tune_type3, Type3Design};
pub use uncertainty::{
    bound_from_samples, sample_polytope, theta_for_sample, theta_max_bound, PlantSample,
    ThetaSample,
};

use nalgebra::{Complex, DMatrix, DVector, Matrix3, RowVector3, Vector3};
use thiserror::Error;

use crate::model::{
    build_augmented, build_small_signal_decoupled, compute_operating_point, AugmentedModel,
    DguId, DguParams, ModelError, OperatingPoint, SmallSignalModel,
};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("matrix is not Hurwitz, largest eigenvalue real part {max_re}")]
    NotHurwitz { max_re: f64 },
    #[error("matrix is not symmetric, asymmetry {residual}")]
    NotSymmetric { residual: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("Schur decomposition did not converge")]
    SchurFailed,
    #[error("solver residual {residual} exceeds tolerance")]
    ResidualTooLarge { residual: f64 },
    #[error("singular linear system in solver")]
    SingularBlock,
    #[error("pair is uncontrollable, controllability rank {rank} of {dim}")]
    Uncontrollable { rank: usize, dim: usize },
    #[error("synthesised closed loop is not Hurwitz")]
    ClosedLoopUnstable,
    #[error("complex poles must be given as conjugate pairs")]
    PolesNotConjugate,
    #[error("state transformation ill conditioned, cond = {cond:.3e}")]
    IllConditionedTransform { cond: f64 },
    #[error(
        "no grid bandwidth satisfies the filter condition, best lambda {best_lambda:.3} at omega_c {at_omega:.1} rad/s; widen the grid or tighten the uncertainty polytope"
    )]
    FilterInfeasible { best_lambda: f64, at_omega: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Baseline state-feedback gains on `[i_t, v_dc, xi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainVector {
    pub k_i: f64,
    pub k_v: f64,
    pub k_xi: f64,
}

/// The shared predictor design: desired closed loop in normal and companion
/// coordinates, the measured-to-canonical state map, and the transfer
/// coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorDesign {
    pub a_m: Matrix3<f64>,
    pub a_m_cc: Matrix3<f64>,
    pub b_cc: Vector3<f64>,
    pub c_cc: RowVector3<f64>,
    pub t: Matrix3<f64>,
    pub t_inv: Matrix3<f64>,
    /// Denominator coefficients `[e0, e1, e2]`.
    pub e: [f64; 3],
    /// Numerator coefficients `[f0, f1, f2]`.
    pub f: [f64; 3],
    pub ctrb_condition: f64,
}

/// Bound on the matched parametric uncertainty: four times the largest
/// sampled parameter 1-norm over the polytope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyBound {
    /// Bound in measured coordinates, paired with the filter condition.
    pub theta_max: f64,
    /// Bound in the companion frame, the projection radius of the runtime
    /// estimate.
    pub theta_max_canonical: f64,
    pub worst_norm: f64,
    pub samples: usize,
}

/// Ranges of the sampled plant parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPolytope {
    pub l_t: (f64, f64),
    pub c_t: (f64, f64),
    pub r_t: (f64, f64),
    pub duty: (f64, f64),
    /// Total incident line conductance.
    pub g_line: (f64, f64),
    pub p_load: (f64, f64),
}

/// One evaluated point of the filter-bandwidth sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDesign {
    pub omega_c: f64,
    pub lambda: f64,
}

/// Full sweep plus the selected design point.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTable {
    pub points: Vec<FilterDesign>,
    pub selected: FilterDesign,
}

/// Nominal plant row shared by every predictor: an estimate of where the
/// heterogeneous DGUs sit, with the coupling count taken as the maximum the
/// deployment allows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalDesignRow {
    pub duty: f64,
    pub l_t: f64,
    pub c_t: f64,
    pub r_t: f64,
    pub r_line: f64,
    pub v_dc: f64,
    pub i_t: f64,
    pub max_couplings: usize,
}

/// Closed-loop pole recipe scaled to a converter's resonance `w_n`: a
/// complex pair at `speed * w_n` with the given damping ratio and a real
/// integrator pole at `integrator * w_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledPoles {
    pub speed: f64,
    pub damping: f64,
    pub integrator: f64,
}

impl ScaledPoles {
    pub fn absolute(&self, w_n: f64) -> [(f64, f64); 3] {
        let re = -self.damping * self.speed * w_n;
        let im = self.speed * w_n * (1.0 - self.damping * self.damping).sqrt();
        [(re, im), (re, -im), (-self.integrator * w_n, 0.0)]
    }
}

/// How the per-DGU baseline gains are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineMethod {
    Lqi,
    /// Explicit closed-loop poles shared by every DGU, complex pairs as
    /// `(re, +im), (re, -im)`.
    PolePlacement([(f64, f64); 3]),
    /// Per-DGU poles scaled to each converter's resonance, with optional
    /// overrides for individual units.
    ScaledPoles {
        default: ScaledPoles,
        overrides: Vec<(DguId, ScaledPoles)>,
    },
}

/// All synthesis knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub nominal: NominalDesignRow,
    pub baseline: BaselineMethod,
    /// Integral-state weight in the energy-scaled LQI cost.
    pub integral_weight: f64,
    /// Control-effort weight.
    pub control_weight: f64,
    /// Adaptive gain.
    pub gamma: f64,
    pub omega_grid: Vec<f64>,
    /// Skips the sweep-based selection when set.
    pub omega_c_override: Option<f64>,
    pub polytope: ThetaPolytope,
    pub lhs_samples: usize,
    pub seed: u64,
    /// Per-component bound on the parameter estimate rate, units/s.
    pub rate_limit: f64,
    pub duty_min: f64,
    pub duty_max: f64,
    pub sample_period: f64,
}

/// Synthesis product for one DGU.
#[derive(Debug, Clone, PartialEq)]
pub struct DguSynthesis {
    pub id: DguId,
    pub op: OperatingPoint,
    pub gains: GainVector,
    pub closed_loop_eigs: Vec<Complex<f64>>,
}

/// Synthesis product for the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSynthesis {
    pub dgus: Vec<DguSynthesis>,
    pub predictor: PredictorDesign,
    pub predictor_gains: GainVector,
    /// Lyapunov matrix of the companion-form desired dynamics, Q = I.
    pub p_lyap: Matrix3<f64>,
    pub uncertainty: UncertaintyBound,
    pub filter: FilterTable,
    pub options: SynthesisOptions,
}

impl NominalDesignRow {
    /// Resonant frequency of the nominal converter, the reference bandwidth
    /// for normalisations.
    pub fn bandwidth(&self) -> f64 {
        (1.0 - self.duty) / (self.l_t * self.c_t).sqrt()
    }

    /// Nominal coupled small-signal model: `max_couplings` identical lines
    /// of the nominal resistance, load as a disturbance.
    pub fn small_signal(&self) -> SmallSignalModel {
        let g_sum = self.max_couplings as f64 / self.r_line;
        let one_minus_d = 1.0 - self.duty;
        SmallSignalModel {
            a: nalgebra::Matrix2::new(
                -self.r_t / self.l_t,
                -one_minus_d / self.l_t,
                one_minus_d / self.c_t,
                -g_sum / self.c_t,
            ),
            a_coupling: vec![],
            b: nalgebra::Vector2::new(self.v_dc / self.l_t, -self.i_t / self.c_t),
            e: nalgebra::Vector2::new(0.0, -1.0 / self.c_t),
            c: nalgebra::RowVector2::new(0.0, 1.0),
        }
    }

    pub fn augmented(&self) -> AugmentedModel {
        build_augmented(&self.small_signal())
    }
}

/// Builds the shared predictor: LQI gains on the nominal coupled model, then
/// the canonical transform.
pub fn synthesize_grid_predictor(
    opts: &SynthesisOptions,
) -> Result<(PredictorDesign, GainVector), SynthesisError> {
    let aug = opts.nominal.augmented();
    let q = energy_weights(
        opts.nominal.l_t,
        opts.nominal.c_t,
        opts.nominal.i_t,
        opts.nominal.v_dc,
        opts.integral_weight,
    );
    let gains = lqi_gains(&aug, &q, opts.control_weight)?;
    let pd = canonical_transform(&aug, &gains)?;
    Ok((pd, gains))
}

/// Resonant frequency of the decoupled converter on its nominal load.
pub fn converter_resonance(p: &DguParams, op: &OperatingPoint) -> f64 {
    let r_l = p.nominal_load_resistance();
    let omd = 1.0 - op.duty;
    (omd * omd / (p.l_t * p.c_t) + p.r_t / (r_l * p.l_t * p.c_t)).sqrt()
}

/// Baseline gains for one DGU, designed on the decoupled resistive-load
/// plant.
pub fn synthesize_dgu(
    p: &DguParams,
    opts: &SynthesisOptions,
) -> Result<DguSynthesis, SynthesisError> {
    let op = compute_operating_point(p)?;
    let ss = build_small_signal_decoupled(p, &op);
    let aug = build_augmented(&ss);
    let gains = match &opts.baseline {
        BaselineMethod::Lqi => {
            let q = energy_weights(p.l_t, p.c_t, op.i_t, op.v_dc, opts.integral_weight);
            lqi_gains(&aug, &q, opts.control_weight)?
        }
        BaselineMethod::PolePlacement(poles) => pole_placement_gains(&aug, poles)?,
        BaselineMethod::ScaledPoles { default, overrides } => {
            let recipe = overrides
                .iter()
                .find(|(id, _)| *id == p.id)
                .map(|(_, r)| *r)
                .unwrap_or(*default);
            let w_n = converter_resonance(p, &op);
            pole_placement_gains(&aug, &recipe.absolute(w_n))?
        }
    };
    let a_cl = aug.a - aug.b * gains.row();
    let a_cl_d = DMatrix::from_fn(3, 3, |i, j| a_cl[(i, j)]);
    let closed_loop_eigs = a_cl_d.complex_eigenvalues().iter().cloned().collect();
    Ok(DguSynthesis {
        id: p.id,
        op,
        gains,
        closed_loop_eigs,
    })
}

/// Runs the full offline chain for a DGU set: per-DGU baselines, the shared
/// predictor, its Lyapunov matrix, the uncertainty bound and the filter
/// sweep.
pub fn synthesize_grid(
    dgus: &[DguParams],
    opts: &SynthesisOptions,
) -> Result<GridSynthesis, SynthesisError> {
    let mut per_dgu = Vec::with_capacity(dgus.len());
    for p in dgus {
        p.validate()?;
        per_dgu.push(synthesize_dgu(p, opts)?);
    }
    let (predictor, predictor_gains) = synthesize_grid_predictor(opts)?;
    let a_cc = DMatrix::from_fn(3, 3, |i, j| predictor.a_m_cc[(i, j)]);
    let p_lyap_d = solve_lyapunov(&a_cc, &DMatrix::identity(3, 3))?;
    let p_lyap = Matrix3::from_fn(|i, j| p_lyap_d[(i, j)]);
    let b_nominal = opts.nominal.augmented().b;

    // The bandwidth condition is evaluated in balanced coordinates: raw SI
    // states mix amperes, volts and volt-seconds, which makes the row-wise
    // norm bound meaninglessly loose. Scaling every state by its own
    // response norm at the design bandwidth gives each row equal footing.
    let a_m_d = DMatrix::from_fn(3, 3, |i, j| predictor.a_m[(i, j)]);
    let b_m = DVector::from_column_slice(b_nominal.as_slice());
    let rows0 = filtered_loop_l1_norms(&a_m_d, &b_m, opts.nominal.bandwidth())?;
    if rows0.iter().any(|r| !(*r > 0.0)) {
        return Err(SynthesisError::SingularBlock);
    }
    let balance = Matrix3::from_diagonal(&Vector3::new(rows0[0], rows0[1], rows0[2]));
    let balance_inv = balance.try_inverse().ok_or(SynthesisError::SingularBlock)?;
    let a_bal = balance_inv * predictor.a_m * balance;
    let b_bal = balance_inv * b_nominal;
    let a_bal_d = DMatrix::from_fn(3, 3, |i, j| a_bal[(i, j)]);
    let b_bal_d = DVector::from_column_slice(b_bal.as_slice());

    let uncertainty = theta_max_bound(
        &predictor,
        &b_nominal,
        &balance,
        &opts.polytope,
        opts.lhs_samples,
        opts.seed,
        opts.nominal.v_dc,
        opts.integral_weight,
        opts.control_weight,
    )?;
    let filter = match opts.omega_c_override {
        None => l1_norm_condition(&a_bal_d, &b_bal_d, uncertainty.theta_max, &opts.omega_grid)?,
        Some(omega) => {
            let grid_table =
                l1_norm_condition(&a_bal_d, &b_bal_d, uncertainty.theta_max, &opts.omega_grid);
            let norms = filtered_loop_l1_norms(&a_bal_d, &b_bal_d, omega)?;
            let lambda =
                norms.iter().cloned().fold(0.0f64, f64::max) * uncertainty.theta_max;
            if !(lambda < 1.0) {
                return Err(SynthesisError::FilterInfeasible {
                    best_lambda: lambda,
                    at_omega: omega,
                });
            }
            let points = grid_table.map(|t| t.points).unwrap_or_default();
            FilterTable {
                points,
                selected: FilterDesign {
                    omega_c: omega,
                    lambda,
                },
            }
        }
    };
    Ok(GridSynthesis {
        dgus: per_dgu,
        predictor,
        predictor_gains,
        p_lyap,
        uncertainty,
        filter,
        options: opts.clone(),
    })
}

impl GridSynthesis {
    pub fn dgu(&self, id: DguId) -> Option<&DguSynthesis> {
        self.dgus.iter().find(|d| d.id == id)
    }

    /// Human-readable synthesis report: gains and closed-loop eigenvalues
    /// per DGU, the predictor design, the uncertainty bound and the
    /// bandwidth sweep table.
    pub fn report(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "# synthesis report");
        let _ = writeln!(out, "seed = {}", self.options.seed);
        for d in &self.dgus {
            let _ = writeln!(out, "\n[dgu {}]", d.id);
            let _ = writeln!(
                out,
                "operating point: duty = {:.6}, v_dc = {:.3} V, i_t = {:.3} A",
                d.op.duty, d.op.v_dc, d.op.i_t
            );
            let _ = writeln!(
                out,
                "gains: k_i = {:+.6e}, k_v = {:+.6e}, k_xi = {:+.6e}",
                d.gains.k_i, d.gains.k_v, d.gains.k_xi
            );
            let _ = write!(out, "closed-loop eigenvalues:");
            for e in &d.closed_loop_eigs {
                let _ = write!(out, " {:+.1}{:+.1}i", e.re, e.im);
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out, "\n[predictor]");
        let _ = writeln!(
            out,
            "denominator e = [{:.6e}, {:.6e}, {:.6e}]",
            self.predictor.e[0], self.predictor.e[1], self.predictor.e[2]
        );
        let _ = writeln!(
            out,
            "numerator f = [{:.6e}, {:.6e}, {:.6e}]",
            self.predictor.f[0], self.predictor.f[1], self.predictor.f[2]
        );
        let a_m_d = DMatrix::from_fn(3, 3, |i, j| self.predictor.a_m[(i, j)]);
        let _ = write!(out, "desired eigenvalues:");
        for e in a_m_d.complex_eigenvalues().iter() {
            let _ = write!(out, " {:+.1}{:+.1}i", e.re, e.im);
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "transformation condition number = {:.3e}",
            self.predictor.ctrb_condition
        );
        let _ = writeln!(out, "\n[uncertainty]");
        let _ = writeln!(
            out,
            "theta_max = {:.6e} (worst sampled 1-norm {:.6e} over {} samples)",
            self.uncertainty.theta_max, self.uncertainty.worst_norm, self.uncertainty.samples
        );
        let _ = writeln!(
            out,
            "projection radius (companion frame) = {:.6e}",
            self.uncertainty.theta_max_canonical
        );
        let _ = writeln!(out, "\n[filter]");
        let _ = writeln!(
            out,
            "selected omega_c = {:.1} rad/s, lambda = {:.6}",
            self.filter.selected.omega_c, self.filter.selected.lambda
        );
        let _ = writeln!(out, "omega_c_rad_s, lambda");
        for p in &self.filter.points {
            let _ = writeln!(out, "{:.6e}, {:.6e}", p.omega_c, p.lambda);
        }
        out
    }
}
