use crate::model::DguId;

/// Sampled simulation output, one channel group per DGU plus every declared
/// line, on a uniform decimated time base.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dgu_ids: Vec<DguId>,
    pub line_keys: Vec<(DguId, DguId)>,
    pub t: Vec<f64>,
    pub v_dc: Vec<Vec<f64>>,
    pub i_t: Vec<Vec<f64>>,
    pub duty: Vec<Vec<f64>>,
    pub u_l1: Vec<Vec<f64>>,
    /// 1-norm of the parameter estimate.
    pub theta: Vec<Vec<f64>>,
    /// Signed line current flowing from the lower- towards the
    /// higher-numbered endpoint; zero while the line is disconnected.
    pub line_current: Vec<Vec<f64>>,
    /// References at the start of the run, before any reference steps.
    pub initial_v_ref: Vec<f64>,
    /// How many load-current evaluations hit the low-voltage clamp.
    pub clamp_events: u64,
}

impl TimeSeries {
    pub fn new(dgu_ids: Vec<DguId>, line_keys: Vec<(DguId, DguId)>, initial_v_ref: Vec<f64>) -> Self {
        let nd = dgu_ids.len();
        let nl = line_keys.len();
        Self {
            dgu_ids,
            line_keys,
            t: Vec::new(),
            v_dc: vec![Vec::new(); nd],
            i_t: vec![Vec::new(); nd],
            duty: vec![Vec::new(); nd],
            u_l1: vec![Vec::new(); nd],
            theta: vec![Vec::new(); nd],
            line_current: vec![Vec::new(); nl],
            initial_v_ref,
            clamp_events: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dgu_slot(&self, id: DguId) -> Option<usize> {
        self.dgu_ids.iter().position(|d| *d == id)
    }

    /// Renders the CSV document: one row per sample, nine significant
    /// digits, fixed decimal notation.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * (self.dgu_ids.len() * 5 + 2) * 14);
        out.push('t');
        for id in &self.dgu_ids {
            for ch in ["vdc", "it", "duty", "ul1", "theta_l1"] {
                out.push(',');
                out.push_str(&format!("{id}.{ch}"));
            }
        }
        for (a, b) in &self.line_keys {
            out.push(',');
            out.push_str(&format!("{a}-{b}.current"));
        }
        out.push('\n');
        for row in 0..self.len() {
            out.push_str(&sig9(self.t[row]));
            for d in 0..self.dgu_ids.len() {
                for series in [&self.v_dc, &self.i_t, &self.duty, &self.u_l1, &self.theta] {
                    out.push(',');
                    out.push_str(&sig9(series[d][row]));
                }
            }
            for l in 0..self.line_keys.len() {
                out.push(',');
                out.push_str(&sig9(self.line_current[l][row]));
            }
            out.push('\n');
        }
        out
    }
}

/// Fixed-point decimal with nine significant digits.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() {
            "0.00000000".to_string()
        } else {
            format!("{v}")
        };
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (8 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(381.0), "381.000000");
        assert_eq!(sig9(0.05), "0.0500000000");
        assert_eq!(sig9(-1.25e4), "-12500.0000");
        assert_eq!(sig9(0.0), "0.00000000");
        assert_eq!(sig9(123456789.0), "123456789");
    }

    #[test]
    fn csv_header_layout() {
        let ts = TimeSeries::new(vec![1, 6], vec![(1, 6)], vec![381.0, 380.7]);
        let csv = ts.to_csv();
        let header = csv.lines().next().unwrap();
        assert_eq!(
            header,
            "t,1.vdc,1.it,1.duty,1.ul1,1.theta_l1,6.vdc,6.it,6.duty,6.ul1,6.theta_l1,1-6.current"
        );
    }
}
