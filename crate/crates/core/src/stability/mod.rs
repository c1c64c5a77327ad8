//! Offline global stability verification: eigenvalues of the assembled
//! closed-loop matrix for a topology and controller set, and the
//! block-diagonal Lyapunov decomposition splitting desired dynamics from
//! coupling.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix, Matrix3};
use thiserror::Error;

use crate::model::{assemble_global, DguId, GlobalVariant, ModelError, Topology};
use crate::synthesis::{solve_lyapunov, GainVector, SynthesisError};

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error("missing gains for dgu {0}")]
    MissingGains(DguId),
}

/// Which closed-loop matrix is analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityVariant {
    /// Block diagonal of the per-DGU baseline closed loops; couplings
    /// dropped.
    DecoupledBaseline,
    /// Baseline closed loops plus the line coupling blocks.
    CoupledBaseline,
    /// Common desired dynamics on the diagonal plus the coupling blocks:
    /// the system the adaptive loops converge to.
    L1Converged,
}

impl StabilityVariant {
    pub fn label(&self) -> &'static str {
        match self {
            StabilityVariant::DecoupledBaseline => "decoupled-baseline",
            StabilityVariant::CoupledBaseline => "coupled-baseline",
            StabilityVariant::L1Converged => "l1-converged",
        }
    }
}

/// Norms of the Lyapunov-inequality split: term (a) from the block-diagonal
/// desired dynamics, term (b) from the couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovDecomposition {
    pub norm_a: f64,
    pub norm_b: f64,
    /// Largest eigenvalue of the symmetric sum; negative means the
    /// decomposition certifies global asymptotic stability.
    pub max_eig_sum: f64,
    pub min_eig_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub variant: StabilityVariant,
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_re: f64,
    pub hurwitz: bool,
    pub lyapunov: Option<LyapunovDecomposition>,
}

/// Spectral norm (largest singular value) of a symmetric matrix via its
/// eigenvalues.
fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Assembles the requested global closed-loop matrix and reports its
/// spectrum plus, for the converged variant, the Lyapunov split of the
/// stability certificate.
pub fn analyze(
    top: &Topology,
    gains: &BTreeMap<DguId, GainVector>,
    a_m: &Matrix3<f64>,
    variant: StabilityVariant,
) -> Result<StabilityReport, StabilityError> {
    for d in top.dgus() {
        if !gains.contains_key(&d.id) {
            return Err(StabilityError::MissingGains(d.id));
        }
    }
    let coupled = assemble_global(top, GlobalVariant::BaselineClosedLoop(gains))?;
    let n = coupled.a.nrows();
    let block = coupled.block;
    let a = match variant {
        StabilityVariant::DecoupledBaseline => {
            let mut a = DMatrix::zeros(n, n);
            for off in coupled.offsets.values() {
                a.view_mut((*off, *off), (block, block))
                    .copy_from(&coupled.a.view((*off, *off), (block, block)));
            }
            a
        }
        StabilityVariant::CoupledBaseline => coupled.a.clone(),
        StabilityVariant::L1Converged => {
            let converged = assemble_global(top, GlobalVariant::L1Converged(a_m))?;
            converged.a
        }
    };

    let eigenvalues: Vec<Complex<f64>> = a.complex_eigenvalues().iter().cloned().collect();
    let max_re = eigenvalues.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    let hurwitz = max_re < -1e-9;

    let lyapunov = match variant {
        StabilityVariant::L1Converged => Some(lyapunov_decomposition(top, a_m, &a)?),
        _ => None,
    };

    Ok(StabilityReport {
        variant,
        eigenvalues,
        max_re,
        hurwitz,
        lyapunov,
    })
}

/// Splits `A' P + P A` into the block-diagonal desired part (a) and the
/// coupling part (b), with `P` block diagonal from per-block Lyapunov
/// solves against identity.
fn lyapunov_decomposition(
    top: &Topology,
    a_m: &Matrix3<f64>,
    a_full: &DMatrix<f64>,
) -> Result<LyapunovDecomposition, StabilityError> {
    let m = top.dgu_count();
    let a_m_d = DMatrix::from_fn(3, 3, |i, j| a_m[(i, j)]);
    let p_block = solve_lyapunov(&a_m_d, &DMatrix::identity(3, 3))?;
    let mut p = DMatrix::zeros(3 * m, 3 * m);
    let mut a_diag = DMatrix::zeros(3 * m, 3 * m);
    for k in 0..m {
        p.view_mut((3 * k, 3 * k), (3, 3)).copy_from(&p_block);
        a_diag.view_mut((3 * k, 3 * k), (3, 3)).copy_from(&a_m_d);
    }
    let a_coupling = a_full - &a_diag;
    let term_a = symmetrize(a_diag.transpose() * &p + &p * &a_diag);
    let term_b = symmetrize(a_coupling.transpose() * &p + &p * &a_coupling);
    let sum = &term_a + &term_b;
    let eigs = sum.symmetric_eigen().eigenvalues;
    Ok(LyapunovDecomposition {
        norm_a: spectral_norm_sym(&term_a),
        norm_b: spectral_norm_sym(&term_b),
        max_eig_sum: eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min_eig_sum: eigs.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

/// One row of the iterative gain feasibility table.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCheckRow {
    pub candidate: usize,
    pub norm_a: f64,
    pub norm_b: f64,
    pub max_eig_sum: f64,
    pub pass: bool,
    /// Negative slack of the certificate; larger is better.
    pub margin: f64,
}

/// Evaluates candidate nominal gain sets against the actual coupling of a
/// topology: each candidate defines common desired dynamics
/// `A_m = A_nom - B_nom K`, the certificate terms are formed with its own
/// block Lyapunov solve, and candidates pass when the symmetric sum stays
/// negative definite. Rows are sorted by margin, best first.
pub fn iterative_gain_check(
    top: &Topology,
    nominal: &crate::model::AugmentedModel,
    candidates: &[GainVector],
) -> Result<Vec<GainCheckRow>, StabilityError> {
    // Couplings do not depend on the candidate; grab them once from any
    // assembled variant.
    let zero_gains: BTreeMap<DguId, GainVector> = top
        .dgus()
        .iter()
        .map(|d| {
            (
                d.id,
                GainVector {
                    k_i: 0.0,
                    k_v: 0.0,
                    k_xi: 0.0,
                },
            )
        })
        .collect();
    let open = assemble_global(top, GlobalVariant::BaselineClosedLoop(&zero_gains))?;
    let m = top.dgu_count();
    let mut coupling = open.a.clone();
    for off in open.offsets.values() {
        coupling.view_mut((*off, *off), (3, 3)).fill(0.0);
    }

    let mut rows = Vec::with_capacity(candidates.len());
    for (idx, k_cand) in candidates.iter().enumerate() {
        let a_m = nominal.a - nominal.b * k_cand.row();
        let a_m_d = DMatrix::from_fn(3, 3, |i, j| a_m[(i, j)]);
        let p_block = solve_lyapunov(&a_m_d, &DMatrix::identity(3, 3))?;
        let mut p = DMatrix::zeros(3 * m, 3 * m);
        let mut a_diag = DMatrix::zeros(3 * m, 3 * m);
        for k in 0..m {
            p.view_mut((3 * k, 3 * k), (3, 3)).copy_from(&p_block);
            a_diag.view_mut((3 * k, 3 * k), (3, 3)).copy_from(&a_m_d);
        }
        let term_a = symmetrize(a_diag.transpose() * &p + &p * &a_diag);
        let term_b = symmetrize(coupling.transpose() * &p + &p * &coupling);
        let sum = &term_a + &term_b;
        let max_eig_sum = sum
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        rows.push(GainCheckRow {
            candidate: idx,
            norm_a: spectral_norm_sym(&term_a),
            norm_b: spectral_norm_sym(&term_b),
            max_eig_sum,
            pass: max_eig_sum < 0.0,
            margin: -max_eig_sum,
        });
    }
    rows.sort_by(|a, b| b.margin.partial_cmp(&a.margin).unwrap());
    Ok(rows)
}

/// Eigenvalue scatter rows `re, im, label` for plotting.
pub fn eigenvalue_csv(reports: &[StabilityReport]) -> String {
    let mut out = String::from("re,im,variant\n");
    for r in reports {
        for e in &r.eigenvalues {
            out.push_str(&format!("{:.9e},{:.9e},{}\n", e.re, e.im, r.variant.label()));
        }
    }
    out
}

impl StabilityReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "variant: {}\nhurwitz: {}\nmax Re(eig): {:.6e}\n",
            self.variant.label(),
            self.hurwitz,
            self.max_re
        ));
        if let Some(l) = &self.lyapunov {
            out.push_str(&format!(
                "certificate: |(a)| = {:.6e}, |(b)| = {:.6e}, max eig sum = {:.6e}, min eig sum = {:.6e}\n",
                l.norm_a, l.norm_b, l.max_eig_sum, l.min_eig_sum
            ));
        }
        out.push_str("eigenvalues:\n");
        for e in &self.eigenvalues {
            out.push_str(&format!("  {:+.6e} {:+.6e}i\n", e.re, e.im));
        }
        out
    }
}
