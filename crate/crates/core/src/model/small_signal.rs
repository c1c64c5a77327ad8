use nalgebra::{Matrix2, Matrix3, Matrix3x2, RowVector2, RowVector3, Vector2, Vector3};

use super::{DguId, DguParams, OperatingPoint};

/// An active line as seen from one DGU: the neighbour on the far end, the
/// line resistance, and the neighbour's reference voltage (needed by the ESR
/// variant, whose input matrix depends on the steady-state line current).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborLine {
    pub neighbor: DguId,
    pub r: f64,
    pub neighbor_v_ref: f64,
}

/// Small-signal state-space model of one DGU with state `[i_t, v_dc]`,
/// control input the duty-cycle deviation and the load current as an
/// exogenous disturbance.
///
/// `a_coupling` holds one 2x2 block per neighbour; the blocks enter the
/// global model as off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSignalModel {
    pub a: Matrix2<f64>,
    pub a_coupling: Vec<(DguId, Matrix2<f64>)>,
    pub b: Vector2<f64>,
    pub e: Vector2<f64>,
    pub c: RowVector2<f64>,
}

/// Small-signal model augmented with the tracking-error integral state,
/// `x = [i_t, v_dc, xi]` with `xi' = v_ref - v_dc`. The exogenous vector is
/// `[i_load, v_ref]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a: Matrix3<f64>,
    pub a_coupling: Vec<(DguId, Matrix3<f64>)>,
    pub b: Vector3<f64>,
    pub e: Matrix3x2<f64>,
    pub c: RowVector3<f64>,
}

/// Quasi-stationary-line small-signal model of a coupled DGU.
///
/// The load is treated as a current disturbance, so the voltage row damping
/// comes entirely from the incident line conductances.
pub fn build_small_signal(
    p: &DguParams,
    op: &OperatingPoint,
    lines: &[NeighborLine],
) -> SmallSignalModel {
    let g_sum: f64 = lines.iter().map(|l| 1.0 / l.r).sum();
    let one_minus_d = 1.0 - op.duty;
    let a = Matrix2::new(
        -p.r_t / p.l_t,
        -one_minus_d / p.l_t,
        one_minus_d / p.c_t,
        -g_sum / p.c_t,
    );
    let a_coupling = lines
        .iter()
        .map(|l| {
            (
                l.neighbor,
                Matrix2::new(0.0, 0.0, 0.0, 1.0 / (l.r * p.c_t)),
            )
        })
        .collect();
    SmallSignalModel {
        a,
        a_coupling,
        b: Vector2::new(op.v_dc / p.l_t, -op.i_t / p.c_t),
        e: Vector2::new(0.0, -1.0 / p.c_t),
        c: RowVector2::new(0.0, 1.0),
    }
}

/// Decoupled small-signal model with the local load modelled as the nominal
/// resistance `R_L = V_ref^2 / P_load`. This is the plant the baseline
/// controllers are designed against: a standalone converter feeding a
/// resistive load, no coupling terms.
pub fn build_small_signal_decoupled(p: &DguParams, op: &OperatingPoint) -> SmallSignalModel {
    let r_l = p.nominal_load_resistance();
    let one_minus_d = 1.0 - op.duty;
    let a = Matrix2::new(
        -p.r_t / p.l_t,
        -one_minus_d / p.l_t,
        one_minus_d / p.c_t,
        -1.0 / (r_l * p.c_t),
    );
    SmallSignalModel {
        a,
        a_coupling: Vec::new(),
        b: Vector2::new(op.v_dc / p.l_t, -op.i_t / p.c_t),
        e: Vector2::new(0.0, -1.0 / p.c_t),
        c: RowVector2::new(0.0, 1.0),
    }
}

/// Small-signal model including the output-capacitor equivalent series
/// resistance `r_c`.
///
/// Averaging the on/off switched models puts the ESR in series with the
/// inductor branch for the off fraction of the period, couples the inductor
/// current to neighbour voltages, and adds the resistive drop of the
/// steady-state capacitor current to the control gain. With `r_c = 0` every
/// extra term vanishes and the result equals [`build_small_signal`] exactly.
pub fn build_esr_small_signal(
    p: &DguParams,
    op: &OperatingPoint,
    lines: &[NeighborLine],
) -> SmallSignalModel {
    let g_sum: f64 = lines.iter().map(|l| 1.0 / l.r).sum();
    let one_minus_d = 1.0 - op.duty;
    let a = Matrix2::new(
        -(p.r_t + one_minus_d * p.r_c) / p.l_t,
        -(one_minus_d / p.l_t) * (1.0 - p.r_c * g_sum),
        one_minus_d / p.c_t,
        -g_sum / p.c_t,
    );
    let a_coupling = lines
        .iter()
        .map(|l| {
            (
                l.neighbor,
                Matrix2::new(
                    0.0,
                    -one_minus_d * p.r_c / (l.r * p.l_t),
                    0.0,
                    1.0 / (l.r * p.c_t),
                ),
            )
        })
        .collect();
    // Steady-state line current into this DGU and load current, which set
    // the ESR drop seen by the duty-cycle input.
    let i_line: f64 = lines
        .iter()
        .map(|l| (l.neighbor_v_ref - op.v_dc) / l.r)
        .sum();
    let i_load = p.p_load / op.v_dc;
    let b = Vector2::new(
        (op.v_dc + p.r_c * (op.i_t + i_line - i_load)) / p.l_t,
        -op.i_t / p.c_t,
    );
    SmallSignalModel {
        a,
        a_coupling,
        b,
        e: Vector2::new(one_minus_d * p.r_c / p.l_t, -1.0 / p.c_t),
        c: RowVector2::new(0.0, 1.0),
    }
}

/// Augments a small-signal model with the tracking-error integral state.
pub fn build_augmented(m: &SmallSignalModel) -> AugmentedModel {
    let mut a = Matrix3::zeros();
    a.fixed_view_mut::<2, 2>(0, 0).copy_from(&m.a);
    a[(2, 0)] = -m.c[0];
    a[(2, 1)] = -m.c[1];
    let a_coupling = m
        .a_coupling
        .iter()
        .map(|(id, blk)| {
            let mut full = Matrix3::zeros();
            full.fixed_view_mut::<2, 2>(0, 0).copy_from(blk);
            (*id, full)
        })
        .collect();
    let mut e = Matrix3x2::zeros();
    e[(0, 0)] = m.e[0];
    e[(1, 0)] = m.e[1];
    e[(2, 1)] = 1.0;
    AugmentedModel {
        a,
        a_coupling,
        b: Vector3::new(m.b[0], m.b[1], 0.0),
        e,
        c: RowVector3::new(m.c[0], m.c[1], 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::compute_operating_point;
    use crate::presets::reference_grid_dgus;
    use approx::assert_relative_eq;

    fn lines_for_dgu1() -> Vec<NeighborLine> {
        vec![
            NeighborLine {
                neighbor: 2,
                r: 0.5,
                neighbor_v_ref: 380.5,
            },
            NeighborLine {
                neighbor: 3,
                r: 2.0,
                neighbor_v_ref: 380.2,
            },
            NeighborLine {
                neighbor: 6,
                r: 10.0,
                neighbor_v_ref: 380.7,
            },
        ]
    }

    #[test]
    fn zero_neighbors_gives_zero_voltage_damping() {
        let p = &reference_grid_dgus()[0];
        let op = compute_operating_point(p).unwrap();
        let m = build_small_signal(p, &op, &[]);
        assert_eq!(m.a[(1, 1)], 0.0);
        assert!(m.a_coupling.is_empty());
    }

    #[test]
    fn voltage_damping_is_conductance_sum() {
        let p = &reference_grid_dgus()[0];
        let op = compute_operating_point(p).unwrap();
        let m = build_small_signal(p, &op, &lines_for_dgu1());
        // Hand sum of the three line conductances.
        let expected = -(1.0 / 0.5 + 1.0 / 2.0 + 1.0 / 10.0) / p.c_t;
        assert_relative_eq!(m.a[(1, 1)], expected, max_relative = 1e-15);
        assert_eq!(m.a_coupling.len(), 3);
        let blk = m.a_coupling.iter().find(|(id, _)| *id == 2).unwrap().1;
        assert_eq!(blk[(0, 0)], 0.0);
        assert_relative_eq!(blk[(1, 1)], 1.0 / (0.5 * p.c_t), max_relative = 1e-15);
    }

    #[test]
    fn decoupled_plant_is_stable() {
        // Characteristic polynomial s^2 + e1 s + e0 of the 2x2 decoupled
        // model; both roots in the open left half-plane iff e1, e0 > 0.
        let p = &reference_grid_dgus()[0];
        let op = compute_operating_point(p).unwrap();
        let m = build_small_signal_decoupled(p, &op);
        let e1 = -(m.a[(0, 0)] + m.a[(1, 1)]);
        let e0 = m.a[(0, 0)] * m.a[(1, 1)] - m.a[(0, 1)] * m.a[(1, 0)];
        assert!(e1 > 0.0 && e0 > 0.0);
        // Cross-check the roots explicitly via the quadratic formula.
        let disc = e1 * e1 - 4.0 * e0;
        if disc >= 0.0 {
            let r1 = (-e1 + disc.sqrt()) / 2.0;
            let r2 = (-e1 - disc.sqrt()) / 2.0;
            assert!(r1 < 0.0 && r2 < 0.0);
        } else {
            assert!(-e1 / 2.0 < 0.0);
        }
    }

    #[test]
    fn input_gain_from_operating_point() {
        let p = &reference_grid_dgus()[0];
        let op = compute_operating_point(p).unwrap();
        let m = build_small_signal(p, &op, &[]);
        assert_relative_eq!(m.b[0], op.v_dc / p.l_t, max_relative = 1e-15);
        assert_relative_eq!(m.b[1], -op.i_t / p.c_t, max_relative = 1e-15);
    }

    #[test]
    fn augmented_structure() {
        let p = &reference_grid_dgus()[0];
        let op = compute_operating_point(p).unwrap();
        let m = build_small_signal(p, &op, &lines_for_dgu1());
        let aug = build_augmented(&m);
        // Integral row is -C extended with a zero.
        assert_eq!(aug.a.row(2), RowVector3::new(0.0, -1.0, 0.0).row(0));
        assert_eq!(aug.b[2], 0.0);
        assert_eq!(aug.e[(2, 1)], 1.0);
        assert_eq!(aug.e[(2, 0)], 0.0);
        let blk = aug.a_coupling.iter().find(|(id, _)| *id == 2).unwrap().1;
        // Single nonzero entry equal to the 2x2 coupling entry.
        let mut nonzero = 0;
        for r in 0..3 {
            for c in 0..3 {
                if blk[(r, c)] != 0.0 {
                    nonzero += 1;
                    assert_eq!((r, c), (1, 1));
                    assert_eq!(blk[(r, c)], m.a_coupling[0].1[(1, 1)]);
                }
            }
        }
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn esr_reduces_to_ideal_when_zero() {
        let p = &reference_grid_dgus()[0];
        let op = compute_operating_point(p).unwrap();
        let ideal = build_small_signal(p, &op, &lines_for_dgu1());
        let esr = build_esr_small_signal(p, &op, &lines_for_dgu1());
        assert_eq!(ideal, esr);
    }

    #[test]
    fn esr_series_resistance_enters_current_row() {
        let mut p = reference_grid_dgus()[2].clone();
        p.r_c = 0.15;
        let op = compute_operating_point(&p).unwrap();
        let m = build_esr_small_signal(
            &p,
            &op,
            &[
                NeighborLine {
                    neighbor: 1,
                    r: 2.0,
                    neighbor_v_ref: 381.0,
                },
                NeighborLine {
                    neighbor: 4,
                    r: 4.0,
                    neighbor_v_ref: 379.0,
                },
            ],
        );
        let expected = -(p.r_t + (1.0 - op.duty) * p.r_c) / p.l_t;
        assert_relative_eq!(m.a[(0, 0)], expected, max_relative = 1e-15);
        let blk = m.a_coupling.iter().find(|(id, _)| *id == 1).unwrap().1;
        assert_relative_eq!(
            blk[(0, 1)],
            -(1.0 - op.duty) * p.r_c / (2.0 * p.l_t),
            max_relative = 1e-15
        );
    }
}
