use super::ModelError;

/// Identifier of a distributed generation unit within one microgrid.
pub type DguId = u32;

/// Electrical constants, references and local load of one boost-converter DGU.
///
/// All quantities are SI: watts, volts, hertz, henry, farad, ohm. `r_c` is
/// the equivalent series resistance of the output capacitor and is zero for
/// the ideal converter.
#[derive(Debug, Clone, PartialEq)]
pub struct DguParams {
    pub id: DguId,
    pub p_rated: f64,
    pub p_load: f64,
    pub v_in: f64,
    pub v_ref: f64,
    pub f_s: f64,
    pub l_t: f64,
    pub c_t: f64,
    pub r_t: f64,
    pub r_c: f64,
}

impl DguParams {
    /// Equivalent resistance of the local load at the reference voltage,
    /// `V_ref^2 / P_load`. Used when the load is modelled resistively for
    /// baseline synthesis.
    pub fn nominal_load_resistance(&self) -> f64 {
        self.v_ref * self.v_ref / self.p_load
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("p_rated", self.p_rated),
            ("p_load", self.p_load),
            ("v_in", self.v_in),
            ("v_ref", self.v_ref),
            ("f_s", self.f_s),
            ("l_t", self.l_t),
            ("c_t", self.c_t),
            ("r_t", self.r_t),
        ];
        for (field, value) in positive {
            if !(value > 0.0) {
                return Err(ModelError::NonPositiveParameter {
                    id: self.id,
                    field,
                    value,
                });
            }
        }
        if !(self.r_c >= 0.0) {
            return Err(ModelError::NonPositiveParameter {
                id: self.id,
                field: "r_c",
                value: self.r_c,
            });
        }
        if self.v_ref <= self.v_in {
            return Err(ModelError::ReferenceBelowInput {
                id: self.id,
                v_ref: self.v_ref,
                v_in: self.v_in,
            });
        }
        if self.p_load > self.p_rated {
            return Err(ModelError::LoadExceedsRating {
                id: self.id,
                p_load: self.p_load,
                p_rated: self.p_rated,
            });
        }
        Ok(())
    }
}

/// One resistive-inductive power line coupling two DGUs.
///
/// Endpoints are unordered; the line is stored with `a < b`. Both endpoints
/// see the same resistance and inductance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParams {
    pub a: DguId,
    pub b: DguId,
    pub r: f64,
    pub l: f64,
}

impl LineParams {
    pub fn new(a: DguId, b: DguId, r: f64, l: f64) -> Result<Self, ModelError> {
        if a == b {
            return Err(ModelError::SelfLoop(a));
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let line = Self { a, b, r, l };
        if !(r > 0.0) {
            return Err(ModelError::NonPositiveLineParameter {
                a,
                b,
                field: "r",
                value: r,
            });
        }
        if !(l > 0.0) {
            return Err(ModelError::NonPositiveLineParameter {
                a,
                b,
                field: "l",
                value: l,
            });
        }
        Ok(line)
    }

    pub fn other_end(&self, id: DguId) -> Option<DguId> {
        if id == self.a {
            Some(self.b)
        } else if id == self.b {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LineSlot {
    params: LineParams,
    active: bool,
}

/// The microgrid: a set of DGUs and the undirected weighted line graph that
/// couples them.
///
/// Every line that can ever exist in a scenario is declared up front; plug-in
/// and plug-out operations toggle a line's `active` flag and never mutate the
/// DGU parameters. A DGU with no active incident line is disconnected and
/// powers only its local load.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    dgus: Vec<DguParams>,
    lines: Vec<LineSlot>,
}

impl Topology {
    /// Builds a topology where every declared line starts connected.
    pub fn new(dgus: Vec<DguParams>, lines: Vec<LineParams>) -> Result<Self, ModelError> {
        let n = lines.len();
        Self::with_line_states(dgus, lines, vec![true; n])
    }

    /// Builds a topology with an explicit initial connected/disconnected
    /// state per declared line.
    pub fn with_line_states(
        dgus: Vec<DguParams>,
        lines: Vec<LineParams>,
        active: Vec<bool>,
    ) -> Result<Self, ModelError> {
        assert_eq!(lines.len(), active.len());
        for (i, d) in dgus.iter().enumerate() {
            d.validate()?;
            if dgus[..i].iter().any(|o| o.id == d.id) {
                return Err(ModelError::DuplicateDgu(d.id));
            }
        }
        let mut slots = Vec::with_capacity(lines.len());
        for (line, active) in lines.into_iter().zip(active) {
            for end in [line.a, line.b] {
                if !dgus.iter().any(|d| d.id == end) {
                    return Err(ModelError::UnknownDgu {
                        a: line.a,
                        b: line.b,
                        unknown: end,
                    });
                }
            }
            if slots
                .iter()
                .any(|s: &LineSlot| s.params.a == line.a && s.params.b == line.b)
            {
                return Err(ModelError::DuplicateLine {
                    a: line.a,
                    b: line.b,
                });
            }
            slots.push(LineSlot {
                params: line,
                active,
            });
        }
        Ok(Self { dgus, lines: slots })
    }

    pub fn dgu_count(&self) -> usize {
        self.dgus.len()
    }

    pub fn dgus(&self) -> &[DguParams] {
        &self.dgus
    }

    pub fn dgu(&self, id: DguId) -> Result<&DguParams, ModelError> {
        self.dgus
            .iter()
            .find(|d| d.id == id)
            .ok_or(ModelError::NoSuchDgu(id))
    }

    pub fn dgu_mut(&mut self, id: DguId) -> Result<&mut DguParams, ModelError> {
        self.dgus
            .iter_mut()
            .find(|d| d.id == id)
            .ok_or(ModelError::NoSuchDgu(id))
    }

    /// All declared lines, connected or not, in declaration order.
    pub fn declared_lines(&self) -> impl Iterator<Item = (&LineParams, bool)> {
        self.lines.iter().map(|s| (&s.params, s.active))
    }

    /// Currently connected lines.
    pub fn active_lines(&self) -> impl Iterator<Item = &LineParams> {
        self.lines.iter().filter(|s| s.active).map(|s| &s.params)
    }

    /// Active lines incident to `id`, with the neighbour id on the far end.
    pub fn neighbors(&self, id: DguId) -> impl Iterator<Item = (&LineParams, DguId)> {
        self.lines.iter().filter_map(move |s| {
            if !s.active {
                return None;
            }
            s.params.other_end(id).map(|nb| (&s.params, nb))
        })
    }

    /// True when the DGU has at least one active incident line.
    pub fn connected(&self, id: DguId) -> bool {
        self.neighbors(id).next().is_some()
    }

    /// Sum of active incident line conductances `1/R_ij` at `id`.
    pub fn conductance_sum(&self, id: DguId) -> f64 {
        self.neighbors(id).map(|(line, _)| 1.0 / line.r).sum()
    }

    /// Connects or disconnects a declared line. Asking for a transition the
    /// line has already made is an error, so scenarios cannot silently
    /// double-plug a line.
    pub fn set_line_active(
        &mut self,
        a: DguId,
        b: DguId,
        active: bool,
    ) -> Result<(), ModelError> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let slot = self
            .lines
            .iter_mut()
            .find(|s| s.params.a == a && s.params.b == b)
            .ok_or(ModelError::NoSuchLine { a, b })?;
        if slot.active == active {
            return Err(ModelError::LineAlreadyInState { a, b, active });
        }
        slot.active = active;
        Ok(())
    }

    /// Disconnects every active line incident to `id`, returning how many
    /// lines were unplugged.
    pub fn unplug_dgu(&mut self, id: DguId) -> Result<usize, ModelError> {
        self.dgu(id)?;
        let mut count = 0;
        for slot in &mut self.lines {
            if slot.active && slot.params.other_end(id).is_some() {
                slot.active = false;
                count += 1;
            }
        }
        Ok(count)
    }

    pub fn line(&self, a: DguId, b: DguId) -> Result<(&LineParams, bool), ModelError> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.lines
            .iter()
            .find(|s| s.params.a == a && s.params.b == b)
            .map(|s| (&s.params, s.active))
            .ok_or(ModelError::NoSuchLine { a, b })
    }
}
