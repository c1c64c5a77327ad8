use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3};

use super::small_signal::{build_augmented, build_small_signal, NeighborLine};
use super::{compute_operating_point, DguId, ModelError, Topology};
use crate::synthesis::GainVector;

/// Which per-DGU blocks populate the diagonal of the assembled global model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GlobalVariant<'a> {
    /// Open-loop 2-state blocks, no integral action.
    OpenLoop,
    /// Open-loop 3-state blocks augmented with the tracking-error integral.
    AugmentedOpenLoop,
    /// Baseline closed loop `A_bar - B_bar K` per DGU, using each DGU's own
    /// gain. Couplings still reflect the actual line topology.
    BaselineClosedLoop(&'a BTreeMap<DguId, GainVector>),
    /// Every diagonal block replaced by the common desired closed-loop
    /// matrix the adaptive loops converge to.
    L1Converged(&'a Matrix3<f64>),
}

/// Block state-space model of the whole microgrid. `offsets` maps a DGU id
/// to its block position; `block` is the per-DGU state dimension (2 or 3).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub offsets: BTreeMap<DguId, usize>,
    pub block: usize,
}

impl GlobalModel {
    pub fn block_of(&self, i: DguId, j: DguId) -> Option<DMatrix<f64>> {
        let (oi, oj) = (*self.offsets.get(&i)?, *self.offsets.get(&j)?);
        Some(
            self.a
                .view((oi, oj), (self.block, self.block))
                .clone_owned(),
        )
    }
}

fn neighbor_lines(top: &Topology, id: DguId) -> Vec<NeighborLine> {
    let mut lines: Vec<NeighborLine> = top
        .neighbors(id)
        .map(|(line, nb)| NeighborLine {
            neighbor: nb,
            r: line.r,
            neighbor_v_ref: top.dgu(nb).map(|d| d.v_ref).unwrap_or(0.0),
        })
        .collect();
    lines.sort_by_key(|l| l.neighbor);
    lines
}

/// Assembles the global state-space model for the active topology.
///
/// Off-diagonal block (i, j) is nonzero iff the line (i, j) is connected;
/// input, disturbance and output matrices are block diagonal. Disconnected
/// DGUs still contribute a diagonal block, they just have no couplings.
pub fn assemble_global(top: &Topology, variant: GlobalVariant) -> Result<GlobalModel, ModelError> {
    let n = top.dgu_count();
    let block = match variant {
        GlobalVariant::OpenLoop => 2,
        _ => 3,
    };
    let (inputs, dist) = match variant {
        GlobalVariant::OpenLoop => (1, 1),
        _ => (1, 2),
    };
    let mut offsets = BTreeMap::new();
    for (k, d) in top.dgus().iter().enumerate() {
        offsets.insert(d.id, k * block);
    }
    let mut a = DMatrix::zeros(n * block, n * block);
    let mut b = DMatrix::zeros(n * block, n * inputs);
    let mut e = DMatrix::zeros(n * block, n * dist);
    let mut c = DMatrix::zeros(n, n * block);

    for (k, p) in top.dgus().iter().enumerate() {
        let op = compute_operating_point(p)?;
        let lines = neighbor_lines(top, p.id);
        let ss = build_small_signal(p, &op, &lines);
        let off = k * block;
        match variant {
            GlobalVariant::OpenLoop => {
                a.view_mut((off, off), (2, 2)).copy_from(&ss.a);
                for (nb, blk) in &ss.a_coupling {
                    let noff = offsets[nb];
                    a.view_mut((off, noff), (2, 2)).copy_from(blk);
                }
                b.view_mut((off, k), (2, 1)).copy_from(&ss.b);
                e.view_mut((off, k), (2, 1)).copy_from(&ss.e);
                c.view_mut((k, off), (1, 2)).copy_from(&ss.c);
            }
            _ => {
                let aug = build_augmented(&ss);
                let diag = match variant {
                    GlobalVariant::AugmentedOpenLoop => aug.a,
                    GlobalVariant::BaselineClosedLoop(gains) => {
                        let k_i = gains.get(&p.id).ok_or(ModelError::NoSuchDgu(p.id))?;
                        aug.a - aug.b * k_i.row()
                    }
                    GlobalVariant::L1Converged(a_m) => *a_m,
                    GlobalVariant::OpenLoop => unreachable!(),
                };
                a.view_mut((off, off), (3, 3)).copy_from(&diag);
                for (nb, blk) in &aug.a_coupling {
                    let noff = offsets[nb];
                    a.view_mut((off, noff), (3, 3)).copy_from(blk);
                }
                b.view_mut((off, k), (3, 1)).copy_from(&aug.b);
                e.view_mut((off, 2 * k), (3, 2)).copy_from(&aug.e);
                c.view_mut((k, off), (1, 3)).copy_from(&aug.c);
            }
        }
    }
    Ok(GlobalModel {
        a,
        b,
        e,
        c,
        offsets,
        block,
    })
}

/// Global open-loop matrix with explicit line-current states.
///
/// The DGU blocks keep their quasi-stationary coupling, and one extra state
/// per connected line carries the `RL` line dynamics, driven by the terminal
/// voltages with pole `-R/L`. The result is block lower triangular, so its
/// spectrum is the union of the quasi-stationary DGU spectrum and the line
/// poles; this is the structure that justifies neglecting line dynamics in
/// the controller-facing models.
pub fn assemble_global_dynamic(top: &Topology) -> Result<GlobalModel, ModelError> {
    let base = assemble_global(top, GlobalVariant::OpenLoop)?;
    let n_dgu = 2 * top.dgu_count();
    let lines: Vec<_> = top.active_lines().cloned().collect();
    let n = n_dgu + lines.len();
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n_dgu, n_dgu)).copy_from(&base.a);
    for (k, line) in lines.iter().enumerate() {
        let row = n_dgu + k;
        // Current state oriented from a to b: l di/dt = v_a - v_b - r i.
        let va_col = base.offsets[&line.a] + 1;
        let vb_col = base.offsets[&line.b] + 1;
        a[(row, va_col)] = 1.0 / line.l;
        a[(row, vb_col)] = -1.0 / line.l;
        a[(row, row)] = -line.r / line.l;
    }
    let mut b = DMatrix::zeros(n, base.b.ncols());
    b.view_mut((0, 0), (n_dgu, base.b.ncols())).copy_from(&base.b);
    let mut e = DMatrix::zeros(n, base.e.ncols());
    e.view_mut((0, 0), (n_dgu, base.e.ncols())).copy_from(&base.e);
    let mut c = DMatrix::zeros(base.c.nrows(), n);
    c.view_mut((0, 0), (base.c.nrows(), n_dgu)).copy_from(&base.c);
    Ok(GlobalModel {
        a,
        b,
        e,
        c,
        offsets: base.offsets,
        block: 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LineParams;
    use crate::presets::reference_grid_dgus;
    use approx::assert_relative_eq;

    fn two_dgu_topology() -> Topology {
        let dgus = reference_grid_dgus()[..2].to_vec();
        let lines = vec![LineParams::new(1, 2, 0.5, 10e-6).unwrap()];
        Topology::new(dgus, lines).unwrap()
    }

    #[test]
    fn single_dgu_global_is_its_own_block() {
        let dgus = vec![reference_grid_dgus()[0].clone()];
        let top = Topology::new(dgus.clone(), vec![]).unwrap();
        let g = assemble_global(&top, GlobalVariant::OpenLoop).unwrap();
        let op = compute_operating_point(&dgus[0]).unwrap();
        let ss = build_small_signal(&dgus[0], &op, &[]);
        assert_eq!(g.a.nrows(), 2);
        assert_relative_eq!(g.a[(0, 0)], ss.a[(0, 0)]);
        assert_relative_eq!(g.a[(1, 1)], ss.a[(1, 1)]);
    }

    #[test]
    fn two_dgu_chain_sparsity() {
        let top = two_dgu_topology();
        let g = assemble_global(&top, GlobalVariant::AugmentedOpenLoop).unwrap();
        assert_eq!(g.a.nrows(), 6);
        let blk = g.block_of(1, 2).unwrap();
        // Coupling block touches only the voltage row.
        for r in 0..3 {
            for c in 0..3 {
                if (r, c) == (1, 1) {
                    assert!(blk[(r, c)] != 0.0);
                } else {
                    assert_eq!(blk[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn sparsity_follows_active_lines() {
        let mut top = two_dgu_topology();
        top.set_line_active(1, 2, false).unwrap();
        let g = assemble_global(&top, GlobalVariant::AugmentedOpenLoop).unwrap();
        assert_eq!(g.block_of(1, 2).unwrap().norm(), 0.0);
        assert_eq!(g.block_of(2, 1).unwrap().norm(), 0.0);
    }

    #[test]
    fn dynamic_lines_append_line_poles() {
        let top = two_dgu_topology();
        let g = assemble_global_dynamic(&top).unwrap();
        assert_eq!(g.a.nrows(), 5);
        assert_relative_eq!(g.a[(4, 4)], -0.5 / 10e-6, max_relative = 1e-15);
        // DGU rows never read the line state.
        for r in 0..4 {
            assert_eq!(g.a[(r, 4)], 0.0);
        }
    }
}
