use nalgebra::{Matrix2, Matrix3, RowVector2, Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::riccati::{energy_weights, lqi_gains};
use super::{PredictorDesign, SynthesisError, ThetaPolytope, UncertaintyBound};
use crate::model::{build_augmented, SmallSignalModel};

/// One sampled plant drawn from the uncertainty polytope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantSample {
    pub l_t: f64,
    pub c_t: f64,
    pub r_t: f64,
    pub duty: f64,
    pub g_line: f64,
    pub p_load: f64,
}

impl ThetaPolytope {
    fn ranges(&self) -> [(f64, f64); 6] {
        [
            self.l_t,
            self.c_t,
            self.r_t,
            self.duty,
            self.g_line,
            self.p_load,
        ]
    }

    fn sample_from_unit(&self, u: &[f64; 6]) -> PlantSample {
        let r = self.ranges();
        let v: Vec<f64> = r
            .iter()
            .zip(u)
            .map(|((lo, hi), x)| lo + (hi - lo) * x)
            .collect();
        PlantSample {
            l_t: v[0],
            c_t: v[1],
            r_t: v[2],
            duty: v[3],
            g_line: v[4],
            p_load: v[5],
        }
    }

    /// Centre point of every range.
    pub fn center(&self) -> PlantSample {
        self.sample_from_unit(&[0.5; 6])
    }
}

/// Deterministic sample set over the polytope: all 2^6 vertices, the centre,
/// and a Latin-hypercube batch seeded by `seed`.
pub fn sample_polytope(polytope: &ThetaPolytope, lhs_samples: usize, seed: u64) -> Vec<PlantSample> {
    let mut out = Vec::with_capacity(lhs_samples + 65);
    for mask in 0u32..64 {
        let mut u = [0.0f64; 6];
        for (d, slot) in u.iter_mut().enumerate() {
            *slot = if mask >> d & 1 == 1 { 1.0 } else { 0.0 };
        }
        out.push(polytope.sample_from_unit(&u));
    }
    out.push(polytope.center());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if lhs_samples > 0 {
        // Latin hypercube: one independently shuffled stratification per
        // dimension, jittered inside each stratum.
        let mut strata: Vec<Vec<usize>> = (0..6)
            .map(|_| {
                let mut idx: Vec<usize> = (0..lhs_samples).collect();
                for i in (1..idx.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    idx.swap(i, j);
                }
                idx
            })
            .collect();
        for s in 0..lhs_samples {
            let mut u = [0.0f64; 6];
            for (d, slot) in u.iter_mut().enumerate() {
                let cell = strata[d][s] as f64;
                *slot = (cell + rng.gen_range(0.0..1.0)) / lhs_samples as f64;
            }
            out.push(polytope.sample_from_unit(&u));
        }
        strata.clear();
    }
    out
}

fn sampled_small_signal(s: &PlantSample, v_dc_nom: f64) -> (SmallSignalModel, SmallSignalModel) {
    let one_minus_d = 1.0 - s.duty;
    let v_in = one_minus_d * v_dc_nom;
    let i_t = s.p_load / v_in;
    let r_l = v_dc_nom * v_dc_nom / s.p_load;
    let b = Vector2::new(v_dc_nom / s.l_t, -i_t / s.c_t);
    let e = Vector2::new(0.0, -1.0 / s.c_t);
    let c = RowVector2::new(0.0, 1.0);
    // Standalone view: converter on its resistive load.
    let decoupled = SmallSignalModel {
        a: Matrix2::new(
            -s.r_t / s.l_t,
            -one_minus_d / s.l_t,
            one_minus_d / s.c_t,
            -1.0 / (r_l * s.c_t),
        ),
        a_coupling: vec![],
        b: b.clone(),
        e: e.clone(),
        c: c.clone(),
    };
    // Deployed view: coupled through the sampled line conductance, load as
    // a disturbance.
    let coupled = SmallSignalModel {
        a: Matrix2::new(
            -s.r_t / s.l_t,
            -one_minus_d / s.l_t,
            one_minus_d / s.c_t,
            -s.g_line / s.c_t,
        ),
        a_coupling: vec![],
        b,
        e,
        c,
    };
    (decoupled, coupled)
}

/// Matched-uncertainty vectors of one sampled plant, in both frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSample {
    /// Least-squares match of the closed-loop deviation through the nominal
    /// input column, `B theta' = A(sample) - A_m`, in the scaled analysis
    /// coordinates the filter-bandwidth condition is stated over.
    pub scaled: Vector3<f64>,
    /// Bottom row of the deviation mapped into the companion frame, where
    /// the runtime estimate lives: `b theta' = A_cc(sample) - A_m_cc`.
    pub canonical: Vector3<f64>,
}

/// Matched uncertainty of one sampled plant against the nominal design.
///
/// The sample gets gains synthesised by the same procedure that produced
/// the desired dynamics, so a sample at the nominal design point produces
/// exactly zero deviation. `scaling` is the diagonal state normalisation of
/// the analysis frame; pass identity to work in raw SI coordinates.
pub fn theta_for_sample(
    nominal: &PredictorDesign,
    b_nominal: &Vector3<f64>,
    scaling: &Matrix3<f64>,
    sample: &PlantSample,
    v_dc_nom: f64,
    integral_weight: f64,
    control_weight: f64,
) -> Result<ThetaSample, SynthesisError> {
    let (_, coupled) = sampled_small_signal(sample, v_dc_nom);
    let aug = build_augmented(&coupled);
    let one_minus_d = 1.0 - sample.duty;
    let i_t = sample.p_load / (one_minus_d * v_dc_nom);
    let q = energy_weights(sample.l_t, sample.c_t, i_t, v_dc_nom, integral_weight);
    let gains = lqi_gains(&aug, &q, control_weight)?;
    let a_closed = aug.a - aug.b * gains.row();

    // Analysis frame: least squares along the single input column.
    let scale_inv = scaling
        .try_inverse()
        .ok_or(SynthesisError::SingularBlock)?;
    let delta_x = scale_inv * (a_closed - nominal.a_m) * scaling;
    let b_scaled = scale_inv * b_nominal;
    let scaled = (b_scaled.transpose() * delta_x / b_scaled.norm_squared()).transpose();

    // Companion frame: least squares against b = [0,0,1]' picks the bottom
    // row of the transformed deviation.
    let a_cc_sample = nominal.t * a_closed * nominal.t_inv;
    let delta_z = a_cc_sample - nominal.a_m_cc;
    let canonical = Vector3::new(delta_z[(2, 0)], delta_z[(2, 1)], delta_z[(2, 2)]);
    Ok(ThetaSample { scaled, canonical })
}

/// Largest sampled 1-norms over a sample set, already scaled by the
/// conservatism factor of four.
pub fn bound_from_samples(
    nominal: &PredictorDesign,
    b_nominal: &Vector3<f64>,
    scaling: &Matrix3<f64>,
    samples: &[PlantSample],
    v_dc_nom: f64,
    integral_weight: f64,
    control_weight: f64,
) -> Result<UncertaintyBound, SynthesisError> {
    let mut worst = 0.0f64;
    let mut worst_canonical = 0.0f64;
    for s in samples {
        let theta = theta_for_sample(
            nominal,
            b_nominal,
            scaling,
            s,
            v_dc_nom,
            integral_weight,
            control_weight,
        )?;
        let n1: f64 = theta.scaled.iter().map(|v| v.abs()).sum();
        let n1_cc: f64 = theta.canonical.iter().map(|v| v.abs()).sum();
        worst = worst.max(n1);
        worst_canonical = worst_canonical.max(n1_cc);
    }
    Ok(UncertaintyBound {
        theta_max: 4.0 * worst,
        theta_max_canonical: 4.0 * worst_canonical,
        worst_norm: worst,
        samples: samples.len(),
    })
}

/// Samples the polytope and bounds the matched uncertainty as four times the
/// largest sampled parameter 1-norm.
pub fn theta_max_bound(
    nominal: &PredictorDesign,
    b_nominal: &Vector3<f64>,
    scaling: &Matrix3<f64>,
    polytope: &ThetaPolytope,
    lhs_samples: usize,
    seed: u64,
    v_dc_nom: f64,
    integral_weight: f64,
    control_weight: f64,
) -> Result<UncertaintyBound, SynthesisError> {
    let samples = sample_polytope(polytope, lhs_samples, seed);
    bound_from_samples(
        nominal,
        b_nominal,
        scaling,
        &samples,
        v_dc_nom,
        integral_weight,
        control_weight,
    )
}
