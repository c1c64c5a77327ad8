use std::collections::BTreeMap;

use super::{DguId, LineParams, ModelError, Topology};

/// How line currents are represented in the simulated plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineMode {
    /// Quasi-stationary: line currents are algebraic in the terminal
    /// voltages, `(v_j - v_i)/R`.
    Qsl,
    /// One extra current state per connected line with the full `RL`
    /// dynamics.
    Dynamic,
}

/// Which averaged converter model the plant integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    Ideal,
    /// Includes the output-capacitor equivalent series resistance.
    Esr,
}

/// Maps DGUs and (in dynamic mode) connected lines to positions in the flat
/// state vector: `[i_t_0, v_0, i_t_1, v_1, ..., i_line_0, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub mode: LineMode,
    pub dgu_ids: Vec<DguId>,
    dgu_index: BTreeMap<DguId, usize>,
    /// Line states in order; the current is oriented from endpoint `a` into
    /// endpoint `b`.
    pub lines: Vec<LineParams>,
}

impl StateLayout {
    pub fn new(top: &Topology, mode: LineMode) -> Self {
        let dgu_ids: Vec<DguId> = top.dgus().iter().map(|d| d.id).collect();
        let dgu_index = dgu_ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
        let lines = match mode {
            LineMode::Qsl => Vec::new(),
            LineMode::Dynamic => top.active_lines().cloned().collect(),
        };
        Self {
            mode,
            dgu_ids,
            dgu_index,
            lines,
        }
    }

    pub fn len(&self) -> usize {
        2 * self.dgu_ids.len() + self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dgu_ids.is_empty()
    }

    pub fn dgu_slot(&self, id: DguId) -> Option<usize> {
        self.dgu_index.get(&id).copied()
    }

    pub fn i_t_index(&self, slot: usize) -> usize {
        2 * slot
    }

    pub fn v_dc_index(&self, slot: usize) -> usize {
        2 * slot + 1
    }

    pub fn line_index(&self, k: usize) -> usize {
        2 * self.dgu_ids.len() + k
    }

    /// Line current flowing into `id` from its neighbour across `line`,
    /// taken from the dynamic line states.
    fn line_current_into(&self, x: &[f64], k: usize, id: DguId) -> f64 {
        let i = x[self.line_index(k)];
        if self.lines[k].b == id {
            i
        } else {
            -i
        }
    }
}

/// Exogenous inputs to the plant at one instant: duty command and load
/// current per DGU, ordered like `StateLayout::dgu_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantInput<'a> {
    pub duty: &'a [f64],
    pub load_current: &'a [f64],
}

/// Derivative of the nonlinear averaged microgrid model.
///
/// Loads enter as currents; callers modelling constant-power loads evaluate
/// `I_L = P/v` themselves, so the state Jacobian of this function matches
/// the small-signal matrices, which treat the load as an exogenous
/// disturbance.
pub fn nonlinear_derivative(
    top: &Topology,
    layout: &StateLayout,
    variant: ModelVariant,
    x: &[f64],
    input: &PlantInput,
    dxdt: &mut [f64],
) -> Result<(), ModelError> {
    if x.len() != layout.len() || dxdt.len() != layout.len() {
        return Err(ModelError::StateLengthMismatch {
            got: x.len(),
            expected: layout.len(),
        });
    }
    for &d in input.duty {
        if !(0.0..1.0).contains(&d) {
            return Err(ModelError::DutyOutOfRange(d));
        }
    }

    for (slot, p) in top.dgus().iter().enumerate() {
        let i_t = x[layout.i_t_index(slot)];
        let v = x[layout.v_dc_index(slot)];
        let d = input.duty[slot];
        let i_load = input.load_current[slot];
        let off = 1.0 - d;

        let mut i_line_in = 0.0;
        match layout.mode {
            LineMode::Qsl => {
                for (line, nb) in top.neighbors(p.id) {
                    let nb_slot = layout.dgu_slot(nb).expect("neighbor in layout");
                    let v_nb = x[layout.v_dc_index(nb_slot)];
                    i_line_in += (v_nb - v) / line.r;
                }
            }
            LineMode::Dynamic => {
                for (k, line) in layout.lines.iter().enumerate() {
                    if line.other_end(p.id).is_some() {
                        i_line_in += layout.line_current_into(x, k, p.id);
                    }
                }
            }
        }

        let di_t = match variant {
            ModelVariant::Ideal => (p.v_in - p.r_t * i_t - off * v) / p.l_t,
            ModelVariant::Esr => {
                // Off-phase capacitor current picks up the ESR drop.
                let i_c = i_t + i_line_in - i_load;
                (p.v_in - p.r_t * i_t - off * (v + p.r_c * i_c)) / p.l_t
            }
        };
        let dv = (off * i_t + i_line_in - i_load) / p.c_t;
        dxdt[layout.i_t_index(slot)] = di_t;
        dxdt[layout.v_dc_index(slot)] = dv;
    }

    for (k, line) in layout.lines.iter().enumerate() {
        let slot_a = layout.dgu_slot(line.a).expect("line endpoint in layout");
        let slot_b = layout.dgu_slot(line.b).expect("line endpoint in layout");
        let v_a = x[layout.v_dc_index(slot_a)];
        let v_b = x[layout.v_dc_index(slot_b)];
        let i = x[layout.line_index(k)];
        dxdt[layout.line_index(k)] = (v_a - v_b - line.r * i) / line.l;
    }
    Ok(())
}

/// Steady state of one DGU within the network equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DguEquilibrium {
    pub id: DguId,
    pub v: f64,
    pub i_t: f64,
    pub duty: f64,
    pub i_load: f64,
    pub i_line_in: f64,
}

/// Closed-loop steady state of the whole network with every output pinned at
/// its reference by integral action.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub dgus: Vec<DguEquilibrium>,
    /// Current per active line, oriented from `a` into `b`.
    pub line_currents: Vec<(LineParams, f64)>,
}

/// Solves the exact network steady state reached under integral voltage
/// control: all outputs at their references, line currents algebraic, and
/// per DGU the inductor current absorbing both the local load and the line
/// export through the series resistance.
///
/// Balancing `(1-D) I_t = I_L - I_line` and `V_in = (1-D) V + R_t I_t`
/// yields `R_t I_t^2 - V_in I_t + q = 0` with `q = (I_L - I_line) V`; the
/// physical root is the smaller one, evaluated in rationalised form so the
/// lossless limit `R_t -> 0` stays well conditioned.
pub fn network_equilibrium(top: &Topology) -> Result<Equilibrium, ModelError> {
    let line_currents: Vec<(LineParams, f64)> = top
        .active_lines()
        .map(|line| {
            let v_a = top.dgu(line.a).map(|d| d.v_ref)?;
            let v_b = top.dgu(line.b).map(|d| d.v_ref)?;
            Ok((*line, (v_a - v_b) / line.r))
        })
        .collect::<Result<_, ModelError>>()?;

    let mut dgus = Vec::with_capacity(top.dgu_count());
    for p in top.dgus() {
        let mut i_line_in = 0.0;
        for (line, current) in &line_currents {
            if line.b == p.id {
                i_line_in += current;
            } else if line.a == p.id {
                i_line_in -= current;
            }
        }
        let i_load = p.p_load / p.v_ref;
        let q = (i_load - i_line_in) * p.v_ref;
        let disc = p.v_in * p.v_in - 4.0 * p.r_t * q;
        if disc < 0.0 {
            return Err(ModelError::InfeasibleEquilibrium { id: p.id, demand: q });
        }
        let i_t = 2.0 * q / (p.v_in + disc.sqrt());
        let duty = 1.0 - (p.v_in - p.r_t * i_t) / p.v_ref;
        dgus.push(DguEquilibrium {
            id: p.id,
            v: p.v_ref,
            i_t,
            duty,
            i_load,
            i_line_in,
        });
    }
    Ok(Equilibrium {
        dgus,
        line_currents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_small_signal, compute_operating_point, LineParams, NeighborLine,
    };
    use crate::presets::reference_grid_dgus;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix2, Vector2};

    fn two_dgu_topology() -> Topology {
        let dgus = reference_grid_dgus()[..2].to_vec();
        let lines = vec![LineParams::new(1, 2, 0.5, 10e-6).unwrap()];
        Topology::new(dgus, lines).unwrap()
    }

    fn equilibrium_state(top: &Topology, layout: &StateLayout) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let eq = network_equilibrium(top).unwrap();
        let mut x = vec![0.0; layout.len()];
        let mut duty = Vec::new();
        let mut load = Vec::new();
        for (slot, d) in eq.dgus.iter().enumerate() {
            x[layout.i_t_index(slot)] = d.i_t;
            x[layout.v_dc_index(slot)] = d.v;
            duty.push(d.duty);
            load.push(d.i_load);
        }
        for (k, line) in layout.lines.iter().enumerate() {
            let current = eq
                .line_currents
                .iter()
                .find(|(l, _)| l.a == line.a && l.b == line.b)
                .unwrap()
                .1;
            x[layout.line_index(k)] = current;
        }
        (x, duty, load)
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let top = two_dgu_topology();
        for mode in [LineMode::Qsl, LineMode::Dynamic] {
            let layout = StateLayout::new(&top, mode);
            let (x, duty, load) = equilibrium_state(&top, &layout);
            let mut dxdt = vec![0.0; layout.len()];
            nonlinear_derivative(
                &top,
                &layout,
                ModelVariant::Ideal,
                &x,
                &PlantInput {
                    duty: &duty,
                    load_current: &load,
                },
                &mut dxdt,
            )
            .unwrap();
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let worst = dxdt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(
                worst < 1e-6 * scale,
                "residual {worst} too large for mode {mode:?}"
            );
        }
    }

    #[test]
    fn rejects_duty_out_of_range() {
        let top = two_dgu_topology();
        let layout = StateLayout::new(&top, LineMode::Qsl);
        let (x, _, load) = equilibrium_state(&top, &layout);
        let mut dxdt = vec![0.0; layout.len()];
        let err = nonlinear_derivative(
            &top,
            &layout,
            ModelVariant::Ideal,
            &x,
            &PlantInput {
                duty: &[0.5, 1.0],
                load_current: &load,
            },
            &mut dxdt,
        );
        assert!(matches!(err, Err(ModelError::DutyOutOfRange(_))));
    }

    /// Central finite differences of the nonlinear model against the
    /// small-signal matrices, load current frozen.
    #[test]
    fn jacobian_matches_small_signal() {
        let top = two_dgu_topology();
        let layout = StateLayout::new(&top, LineMode::Qsl);
        let (x0, mut duty, load) = equilibrium_state(&top, &layout);
        // Linearise about the stored operating point rather than the exact
        // network equilibrium; the Jacobian of this model is state
        // independent, so only the duty and voltage values matter for B.
        let p1 = top.dgu(1).unwrap().clone();
        let op1 = compute_operating_point(&p1).unwrap();
        let mut x0 = x0;
        x0[layout.i_t_index(0)] = op1.i_t;
        x0[layout.v_dc_index(0)] = op1.v_dc;
        duty[0] = op1.duty;

        let ss = build_small_signal(
            &p1,
            &op1,
            &[NeighborLine {
                neighbor: 2,
                r: 0.5,
                neighbor_v_ref: 380.5,
            }],
        );

        let n = layout.len();
        let eval = |x: &[f64], duty: &[f64]| {
            let mut out = vec![0.0; n];
            nonlinear_derivative(
                &top,
                &layout,
                ModelVariant::Ideal,
                x,
                &PlantInput {
                    duty,
                    load_current: &load,
                },
                &mut out,
            )
            .unwrap();
            out
        };

        let mut jac = vec![vec![0.0; n]; n];
        for col in 0..n {
            let h = 1e-6 * x0[col].abs().max(1.0);
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[col] += h;
            xm[col] -= h;
            let fp = eval(&xp, &duty);
            let fm = eval(&xm, &duty);
            for row in 0..n {
                jac[row][col] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }

        let a_fd = Matrix2::new(jac[0][0], jac[0][1], jac[1][0], jac[1][1]);
        assert_relative_eq!(a_fd, ss.a, max_relative = 1e-5);
        // Coupling block towards DGU 2.
        assert_relative_eq!(jac[1][3], ss.a_coupling[0].1[(1, 1)], max_relative = 1e-5);
        assert_relative_eq!(jac[0][3], 0.0, epsilon = 1e-9);

        // Input column via central differences on the duty.
        let h = 1e-7;
        let mut dp = duty.clone();
        let mut dm = duty.clone();
        dp[0] += h;
        dm[0] -= h;
        let fp = eval(&x0, &dp);
        let fm = eval(&x0, &dm);
        let b_fd = Vector2::new((fp[0] - fm[0]) / (2.0 * h), (fp[1] - fm[1]) / (2.0 * h));
        assert_relative_eq!(b_fd, ss.b, max_relative = 1e-5);
    }

    /// Blending the on and off switched ESR models at d = 0.5 must equal the
    /// averaged model evaluated at the same duty.
    #[test]
    fn esr_average_matches_switched_blend() {
        let mut dgus = reference_grid_dgus()[..2].to_vec();
        dgus[0].r_c = 0.15;
        dgus[1].r_c = 0.05;
        let lines = vec![LineParams::new(1, 2, 0.5, 10e-6).unwrap()];
        let top = Topology::new(dgus.clone(), lines).unwrap();
        let layout = StateLayout::new(&top, LineMode::Qsl);

        let x = [30.0, 379.0, 12.0, 381.5];
        let load = [6.0, 5.0];
        let d = 0.5;

        // Hand-written switched phases for DGU 1 (slot 0), quasi-stationary
        // line current.
        let p = &dgus[0];
        let g = 1.0 / 0.5;
        let i_line = (x[3] - x[1]) * g;
        let on_i = (p.v_in - p.r_t * x[0]) / p.l_t;
        let on_v = (i_line - load[0]) / p.c_t;
        let i_c_off = x[0] + i_line - load[0];
        let off_i = (p.v_in - p.r_t * x[0] - x[1] - p.r_c * i_c_off) / p.l_t;
        let off_v = (x[0] + i_line - load[0]) / p.c_t;
        let blend_i = d * on_i + (1.0 - d) * off_i;
        let blend_v = d * on_v + (1.0 - d) * off_v;

        let mut dxdt = vec![0.0; layout.len()];
        nonlinear_derivative(
            &top,
            &layout,
            ModelVariant::Esr,
            &x,
            &PlantInput {
                duty: &[d, d],
                load_current: &load,
            },
            &mut dxdt,
        )
        .unwrap();
        assert_relative_eq!(dxdt[0], blend_i, max_relative = 1e-12);
        assert_relative_eq!(dxdt[1], blend_v, max_relative = 1e-12);
    }

    /// Jacobian of the ESR averaged model against the ESR small-signal
    /// matrices.
    #[test]
    fn esr_jacobian_matches_small_signal() {
        let mut dgus = reference_grid_dgus()[..2].to_vec();
        dgus[0].r_c = 0.15;
        let lines = vec![LineParams::new(1, 2, 0.5, 10e-6).unwrap()];
        let top = Topology::new(dgus.clone(), lines).unwrap();
        let layout = StateLayout::new(&top, LineMode::Qsl);

        let p1 = &dgus[0];
        let op1 = compute_operating_point(p1).unwrap();
        let nb = [NeighborLine {
            neighbor: 2,
            r: 0.5,
            neighbor_v_ref: 380.5,
        }];
        let ss = crate::model::build_esr_small_signal(p1, &op1, &nb);

        // State and inputs at the stored operating point; the load current
        // and line current must match the values baked into B.
        let op2 = compute_operating_point(&dgus[1]).unwrap();
        let x0 = vec![op1.i_t, op1.v_dc, op2.i_t, op2.v_dc];
        let duty = vec![op1.duty, op2.duty];
        let load = vec![p1.p_load / op1.v_dc, dgus[1].p_load / op2.v_dc];

        let eval = |x: &[f64], duty: &[f64]| {
            let mut out = vec![0.0; 4];
            nonlinear_derivative(
                &top,
                &layout,
                ModelVariant::Esr,
                x,
                &PlantInput {
                    duty,
                    load_current: &load,
                },
                &mut out,
            )
            .unwrap();
            out
        };
        for (col, expected) in [
            (0, Vector2::new(ss.a[(0, 0)], ss.a[(1, 0)])),
            (1, Vector2::new(ss.a[(0, 1)], ss.a[(1, 1)])),
        ] {
            let h = 1e-6 * x0[col].abs().max(1.0);
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[col] += h;
            xm[col] -= h;
            let fp = eval(&xp, &duty);
            let fm = eval(&xm, &duty);
            let got = Vector2::new((fp[0] - fm[0]) / (2.0 * h), (fp[1] - fm[1]) / (2.0 * h));
            assert_relative_eq!(got, expected, max_relative = 1e-5);
        }
        let h = 1e-7;
        let mut dp = duty.clone();
        let mut dm = duty.clone();
        dp[0] += h;
        dm[0] -= h;
        let fp = eval(&x0, &dp);
        let fm = eval(&x0, &dm);
        let b_fd = Vector2::new((fp[0] - fm[0]) / (2.0 * h), (fp[1] - fm[1]) / (2.0 * h));
        assert_relative_eq!(b_fd, ss.b, max_relative = 1e-5);
    }

    #[test]
    fn equilibrium_respects_power_balance() {
        let top = two_dgu_topology();
        let eq = network_equilibrium(&top).unwrap();
        for d in &eq.dgus {
            let p = top.dgu(d.id).unwrap();
            let input_power = p.v_in * d.i_t;
            let delivered = p.p_load + (-d.i_line_in) * d.v;
            assert!(
                input_power >= delivered - 1e-9,
                "series loss must be nonnegative"
            );
        }
    }
}
