//! Fixed-step classical Runge-Kutta integration of ODE systems with
//! evolution-domain event detection by bisection.

use super::compile::{CompiledFormula, CompiledTerm, Layout};
use super::error::{ExecError, ExecResult};
use super::state::State;
use crate::lang::OdeSystem;
use crate::scalar::Scalar;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_EVENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions<S> {
    pub step: S,
    pub event_tolerance: S,
}

impl<S: Scalar> Default for FlowOptions<S> {
    fn default() -> Self {
        FlowOptions { step: S::lit(DEFAULT_STEP), event_tolerance: S::lit(DEFAULT_EVENT_TOLERANCE) }
    }
}

impl<S: Scalar> FlowOptions<S> {
    pub fn with_step(step: S) -> Self {
        FlowOptions { step, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    DurationReached,
    DomainExit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult<S = f64> {
    pub state: State<S>,
    pub elapsed: S,
    pub exit: ExitReason,
    pub trajectory: Option<Vec<(S, State<S>)>>,
}

/// An ODE system compiled against a fixed variable layout.
#[derive(Debug, Clone)]
pub struct CompiledFlow<S> {
    layout: Layout,
    rhs: Vec<(usize, CompiledTerm<S>)>,
    domain: CompiledFormula<S>,
}

impl<S: Scalar> CompiledFlow<S> {
    pub fn new(ode: &OdeSystem, layout: &Layout) -> ExecResult<Self> {
        if ode.equations.is_empty() {
            return Err(ExecError::InvalidArgument("ODE system has no equations".into()));
        }
        let rhs = ode
            .equations
            .iter()
            .map(|(var, t)| {
                let slot = layout.slot(var).ok_or_else(|| ExecError::UnboundVariable(var.clone()))?;
                Ok((slot, CompiledTerm::compile(t, layout)?))
            })
            .collect::<ExecResult<_>>()?;
        Ok(CompiledFlow { layout: layout.clone(), rhs, domain: CompiledFormula::compile(&ode.domain, layout)? })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn domain_holds(&self, y: &[S]) -> ExecResult<bool> {
        self.domain.eval(y, &self.layout)
    }

    fn derivative(&self, y: &[S], out: &mut [S]) -> ExecResult<()> {
        for (k, (_, code)) in self.rhs.iter().enumerate() {
            out[k] = code.eval(y, &self.layout)?;
        }
        Ok(())
    }

    /// One classical RK4 step of size `h` from `y`, written to `out`.
    fn rk4(&self, y: &[S], h: S, out: &mut [S], scratch: &mut Scratch<S>) -> ExecResult<()> {
        let two = S::lit(2.0);
        let half = h / two;
        let Scratch { k1, k2, k3, k4, tmp } = scratch;
        self.derivative(y, k1)?;
        tmp.copy_from_slice(y);
        for (k, (slot, _)) in self.rhs.iter().enumerate() {
            tmp[*slot] = y[*slot] + half * k1[k];
        }
        self.derivative(tmp, k2)?;
        for (k, (slot, _)) in self.rhs.iter().enumerate() {
            tmp[*slot] = y[*slot] + half * k2[k];
        }
        self.derivative(tmp, k3)?;
        for (k, (slot, _)) in self.rhs.iter().enumerate() {
            tmp[*slot] = y[*slot] + h * k3[k];
        }
        self.derivative(tmp, k4)?;
        out.copy_from_slice(y);
        let sixth = h / S::lit(6.0);
        for (k, (slot, _)) in self.rhs.iter().enumerate() {
            let v = y[*slot] + sixth * (k1[k] + two * k2[k] + two * k3[k] + k4[k]);
            if !v.is_finite() {
                return Err(ExecError::NonFiniteState(self.layout.name(*slot).to_string()));
            }
            out[*slot] = v;
        }
        Ok(())
    }

    /// Advances `y` in place for up to `duration`, stopping at the last point
    /// where the domain holds. Returns the elapsed time and why it stopped.
    /// With `trajectory`, every accepted grid point is appended.
    pub fn advance(
        &self,
        y: &mut [S],
        duration: S,
        opts: &FlowOptions<S>,
        mut trajectory: Option<&mut Vec<(S, Vec<S>)>>,
    ) -> ExecResult<(S, ExitReason)> {
        if !(duration >= S::zero()) || !duration.is_finite() {
            return Err(ExecError::InvalidArgument(format!("flow duration must be finite and >= 0, got {duration}")));
        }
        if !(opts.step > S::zero()) || !opts.event_tolerance.is_finite() || !(opts.event_tolerance > S::zero()) {
            return Err(ExecError::InvalidArgument("step and event tolerance must be positive".into()));
        }
        if !self.domain_holds(y)? {
            return Ok((S::zero(), ExitReason::DomainExit));
        }
        if let Some(tr) = trajectory.as_deref_mut() {
            tr.push((S::zero(), y.to_vec()));
        }
        let n = (duration / opts.step).ceil().to_usize().unwrap_or(usize::MAX).max(usize::from(duration > S::zero()));
        let mut scratch = Scratch::new(self.rhs.len(), y.len());
        let mut next = vec![S::zero(); y.len()];
        let mut probe = vec![S::zero(); y.len()];
        let mut t = S::zero();
        for k in 1..=n {
            let t_next = if k == n { duration } else { (S::lit(k as f64) * opts.step).min(duration) };
            let h = t_next - t;
            self.rk4(y, h, &mut next, &mut scratch)?;
            if !self.domain_holds(&next)? {
                // bracket the exit time in (t, t + h]
                let (mut lo, mut hi) = (S::zero(), h);
                while hi - lo > opts.event_tolerance {
                    let mid = (lo + hi) / S::lit(2.0);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    self.rk4(y, mid, &mut probe, &mut scratch)?;
                    if self.domain_holds(&probe)? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if lo > S::zero() {
                    self.rk4(y, lo, &mut probe, &mut scratch)?;
                    y.copy_from_slice(&probe);
                }
                let elapsed = t + lo;
                if let Some(tr) = trajectory.as_deref_mut() {
                    if lo > S::zero() {
                        tr.push((elapsed, y.to_vec()));
                    }
                }
                return Ok((elapsed, ExitReason::DomainExit));
            }
            y.copy_from_slice(&next);
            t = t_next;
            if let Some(tr) = trajectory.as_deref_mut() {
                tr.push((t, y.to_vec()));
            }
        }
        Ok((duration, ExitReason::DurationReached))
    }

    /// State-level wrapper around [`CompiledFlow::advance`]. `state` must bind
    /// every layout variable the system reads.
    pub fn flow_state(
        &self,
        state: &State<S>,
        duration: S,
        opts: &FlowOptions<S>,
        record: bool,
    ) -> ExecResult<FlowResult<S>> {
        let mut y = self.layout.pack(state);
        let mut traj = record.then(Vec::new);
        let (elapsed, exit) = self.advance(&mut y, duration, opts, traj.as_mut())?;
        let mut out = state.clone();
        self.layout.unpack_into(&y, &mut out)?;
        let trajectory = match traj {
            Some(points) => Some(
                points
                    .into_iter()
                    .map(|(t, vals)| {
                        let mut s = state.clone();
                        self.layout.unpack_into(&vals, &mut s)?;
                        Ok((t, s))
                    })
                    .collect::<ExecResult<_>>()?,
            ),
            None => None,
        };
        Ok(FlowResult { state: out, elapsed, exit, trajectory })
    }
}

struct Scratch<S> {
    k1: Vec<S>,
    k2: Vec<S>,
    k3: Vec<S>,
    k4: Vec<S>,
    tmp: Vec<S>,
}

impl<S: Scalar> Scratch<S> {
    fn new(dim: usize, width: usize) -> Self {
        let z = || vec![S::zero(); dim];
        Scratch { k1: z(), k2: z(), k3: z(), k4: z(), tmp: vec![S::zero(); width] }
    }
}

/// Flows `ode` from `s` for `duration` with fixed step `step`.
pub fn flow<S: Scalar>(ode: &OdeSystem, s: &State<S>, duration: S, step: S) -> ExecResult<FlowResult<S>> {
    flow_with(ode, s, duration, &FlowOptions::with_step(step), false)
}

pub fn flow_with<S: Scalar>(
    ode: &OdeSystem,
    s: &State<S>,
    duration: S,
    opts: &FlowOptions<S>,
    record: bool,
) -> ExecResult<FlowResult<S>> {
    let layout = Layout::new(s.vars());
    CompiledFlow::new(ode, &layout)?.flow_state(s, duration, opts, record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_program, Program};

    fn ode(src: &str) -> OdeSystem {
        match parse_program(src).unwrap() {
            Program::Ode(o) => o,
            other => panic!("not an ODE: {other:?}"),
        }
    }

    #[test]
    fn constant_acceleration_matches_closed_form() {
        let s = State::<f64>::from_pairs([("x", 0.0), ("v", 0.0), ("a", 2.0)]);
        let r = flow(&ode("{x' = v, v' = a}"), &s, 1.0, 1e-3).unwrap();
        assert_eq!(r.exit, ExitReason::DurationReached);
        assert_eq!(r.elapsed, 1.0);
        assert!((r.state.get("x").unwrap() - 1.0).abs() < 1e-6);
        assert!((r.state.get("v").unwrap() - 2.0).abs() < 1e-6);
        assert_eq!(r.state.get("a"), Some(2.0));
    }

    #[test]
    fn domain_exit_is_located_by_bisection() {
        let system = ode("{v' = -1 & v >= 0}");
        let s = State::<f64>::from_pairs([("v", 0.5)]);
        let r = flow(&system, &s, 2.0, 1e-3).unwrap();
        assert_eq!(r.exit, ExitReason::DomainExit);
        assert!((r.elapsed - 0.5).abs() < 1e-6);
        let v = r.state.get("v").unwrap();
        assert!(v >= 0.0 && v < 1e-6);
        // just past the returned time the domain is violated
        let beyond = flow(&system, &r.state, 2e-9, 1e-3).unwrap();
        assert!(beyond.elapsed < 2e-9);
    }

    #[test]
    fn stop_sign_plant_one_control_period() {
        let s = State::<f64>::from_pairs([("x", 0.0), ("v", 0.0), ("a", 1.0), ("t", 0.0), ("eps", 1.0)]);
        let r = flow(&ode("{x' = v, v' = a, t' = 1 & v >= 0 & t <= eps}"), &s, 1.0, 1e-3).unwrap();
        for (var, want) in [("x", 0.5), ("v", 1.0), ("t", 1.0)] {
            assert!((r.state.get(var).unwrap() - want).abs() < 1e-6, "{var}");
        }
    }

    #[test]
    fn domain_false_initially_exits_immediately() {
        let s = State::<f64>::from_pairs([("v", -1.0)]);
        let r = flow(&ode("{v' = 1 & v >= 0}"), &s, 1.0, 1e-3).unwrap();
        assert_eq!((r.elapsed, r.exit), (0.0, ExitReason::DomainExit));
        assert_eq!(r.state, s);
    }

    #[test]
    fn blow_up_is_reported() {
        let s = State::<f64>::from_pairs([("x", 1.0)]);
        let err = flow(&ode("{x' = x^5}"), &s, 10.0, 0.1).unwrap_err();
        assert!(matches!(err, ExecError::NonFiniteState(_) | ExecError::NonFiniteResult));
    }

    #[test]
    fn invalid_arguments() {
        let s = State::<f64>::from_pairs([("x", 1.0)]);
        assert!(flow(&ode("{x' = 1}"), &s, -1.0, 1e-3).is_err());
        assert!(flow(&ode("{x' = 1}"), &s, 1.0, 0.0).is_err());
        assert!(flow(&ode("{y' = 1}"), &s, 1.0, 1e-3).is_err());
    }

    #[test]
    fn zero_duration_is_a_no_op() {
        let s = State::<f64>::from_pairs([("x", 1.0)]);
        let r = flow(&ode("{x' = 1}"), &s, 0.0, 1e-3).unwrap();
        assert_eq!((r.elapsed, r.exit), (0.0, ExitReason::DurationReached));
        assert_eq!(r.state, s);
    }

    #[test]
    fn trajectory_is_time_ordered() {
        let s = State::<f64>::from_pairs([("x", 0.0)]);
        let r = flow_with(&ode("{x' = 1}"), &s, 0.01, &FlowOptions::with_step(1e-3), true).unwrap();
        let tr = r.trajectory.unwrap();
        assert_eq!(tr.len(), 11);
        assert!(tr.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn single_precision_flow() {
        let s = State::<f32>::from_pairs([("x", 0.0), ("v", 0.0), ("a", 2.0)]);
        let r = flow(&ode("{x' = v, v' = a}"), &s, 1.0f32, 1e-2).unwrap();
        assert!((r.state.get("x").unwrap() - 1.0).abs() < 1e-4);
    }
}
