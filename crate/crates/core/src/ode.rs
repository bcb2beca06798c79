//! Dormand–Prince 5(4) integration with adaptive or fixed step control.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Integrator {
    /// Embedded error control with mixed tolerance `atol + rtol·|y|`.
    Adaptive { rtol: f64, atol: f64 },
    /// Fixed steps no longer than `h`; each segment between stops is split evenly.
    /// The resulting flow map is a smooth function of the initial data.
    Fixed { h: f64 },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Adaptive {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Result of an integration: states at the requested stops and, if requested, every accepted step.
#[derive(Clone, Debug)]
pub struct OdeOutput {
    pub stops: Vec<Vec<f64>>,
    pub trace: Vec<(f64, Vec<f64>)>,
    /// Set when the right-hand side refused a state before the last stop was reached.
    pub failure: Option<Error>,
}

/// One Dormand–Prince step; returns the new state and the embedded error estimate.
fn dopri_step<F>(
    rhs: &mut F,
    s: f64,
    y: &[f64],
    k1: &[f64],
    h: f64,
    ks: &mut [Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    ks[0].copy_from_slice(k1);
    let mut tmp = vec![0.0; n];
    for stage in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in ks.iter().enumerate().take(stage) {
                acc += A[stage][j] * kj[i];
            }
            tmp[i] = y[i] + h * acc;
        }
        let (head, tail) = ks.split_at_mut(stage);
        let _ = head;
        rhs(s + C[stage] * h, &tmp, &mut tail[0])?;
    }
    // Stage 7 is evaluated at the 5th-order solution (FSAL), which `tmp` holds now.
    let ynew = tmp;
    let mut err = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for (j, kj) in ks.iter().enumerate() {
            acc += E[j] * kj[i];
        }
        err[i] = h * acc;
    }
    Ok((ynew, err))
}

/// Chart exits become [`Error::Truncated`]; any other refusal is passed through.
fn refusal(e: Error, s: f64) -> Error {
    match e {
        Error::Domain { .. } | Error::SingularMetric { .. } | Error::Truncated { .. } => {
            Error::Truncated { s }
        }
        other => other,
    }
}

/// Integrates `y' = rhs(s, y)` from `s0` through the increasing list `stops`.
pub fn integrate<F>(
    mut rhs: F,
    y0: &[f64],
    s0: f64,
    stops: &[f64],
    integ: Integrator,
    keep_trace: bool,
) -> OdeOutput
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut out = OdeOutput {
        stops: Vec::with_capacity(stops.len()),
        trace: Vec::new(),
        failure: None,
    };
    let mut y = y0.to_vec();
    let mut s = s0;
    if keep_trace {
        out.trace.push((s, y.clone()));
    }
    let mut k1 = vec![0.0; n];
    if let Err(e) = rhs(s, &y, &mut k1) {
        out.failure = Some(e);
        return out;
    }
    let mut ks = vec![vec![0.0; n]; 7];
    let mut h_guess = match integ {
        Integrator::Adaptive { .. } => {
            let span = stops
                .last()
                .map(|v| (v - s0).abs())
                .unwrap_or(1.0)
                .max(1e-12);
            (span * 1e-2).max(1e-8)
        }
        Integrator::Fixed { h } => h,
    };
    for &stop in stops {
        if stop < s - 1e-15 {
            out.failure = Some(Error::Parameter("stops must be non-decreasing".into()));
            return out;
        }
        match integ {
            Integrator::Fixed { h } => {
                let len = stop - s;
                let m = ((len / h).ceil() as usize).max(if len > 0.0 { 1 } else { 0 });
                if m > 0 {
                    let step = len / m as f64;
                    for _ in 0..m {
                        match dopri_step(&mut rhs, s, &y, &k1, step, &mut ks) {
                            Ok((ynew, _)) => {
                                y = ynew;
                                s += step;
                                k1.copy_from_slice(&ks[6]);
                                if keep_trace {
                                    out.trace.push((s, y.clone()));
                                }
                            }
                            Err(e) => {
                                out.failure = Some(refusal(e, s));
                                return out;
                            }
                        }
                    }
                }
                s = stop;
            }
            Integrator::Adaptive { rtol, atol } => {
                let mut rejects_in_row = 0usize;
                while s < stop {
                    let remaining = stop - s;
                    let last = h_guess >= remaining;
                    let h = if last { remaining } else { h_guess };
                    if h < 1e-13 * (1.0 + s.abs()) && !last {
                        out.failure = Some(Error::StepUnderflow { s });
                        return out;
                    }
                    match dopri_step(&mut rhs, s, &y, &k1, h, &mut ks) {
                        Ok((ynew, err)) => {
                            let mut acc = 0.0;
                            for i in 0..n {
                                let sc = atol + rtol * y[i].abs().max(ynew[i].abs());
                                acc += (err[i] / sc).powi(2);
                            }
                            let en = (acc / n.max(1) as f64).sqrt();
                            if en <= 1.0 || h < 1e-13 {
                                y = ynew;
                                s = if last { stop } else { s + h };
                                k1.copy_from_slice(&ks[6]);
                                if keep_trace {
                                    out.trace.push((s, y.clone()));
                                }
                                let fac = if en == 0.0 {
                                    5.0
                                } else {
                                    (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
                                };
                                let hn = h * fac;
                                // Keep the previous proposal when the last step was shortened to hit a stop.
                                h_guess = if last { h_guess.max(hn) } else { hn };
                                rejects_in_row = 0;
                            } else {
                                h_guess = h * (0.9 * en.powf(-0.2)).clamp(0.1, 0.9);
                                rejects_in_row += 1;
                            }
                        }
                        Err(e) => {
                            h_guess = h * 0.25;
                            rejects_in_row += 1;
                            if h_guess < 1e-12 {
                                out.failure = Some(refusal(e, s));
                                return out;
                            }
                        }
                    }
                    if rejects_in_row > 200 {
                        out.failure = Some(Error::StepUnderflow { s });
                        return out;
                    }
                }
            }
        }
        out.stops.push(y.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_adaptive_and_fixed() {
        let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let out = integrate(
            rhs,
            &[0.0, 1.0],
            0.0,
            &[1.0, 3.0],
            Integrator::default(),
            false,
        );
        assert!(out.failure.is_none());
        assert!((out.stops[0][0] - 1.0f64.sin()).abs() < 1e-9);
        assert!((out.stops[1][1] - 3.0f64.cos()).abs() < 1e-9);
        let fixed = integrate(
            rhs,
            &[0.0, 1.0],
            0.0,
            &[3.0],
            Integrator::Fixed { h: 0.01 },
            true,
        );
        assert!((fixed.stops[0][0] - 3.0f64.sin()).abs() < 1e-10);
        assert_eq!(fixed.trace.len(), 301);
    }

    #[test]
    fn refusal_is_reported_as_truncation() {
        let rhs = |s: f64, _y: &[f64], dy: &mut [f64]| -> Result<()> {
            if s > 0.5 {
                return Err(Error::Domain {
                    model: "test".into(),
                    point: vec![s],
                });
            }
            dy[0] = 1.0;
            Ok(())
        };
        let out = integrate(rhs, &[0.0], 0.0, &[1.0], Integrator::default(), false);
        assert!(matches!(out.failure, Some(Error::Truncated { .. })));
    }
}
