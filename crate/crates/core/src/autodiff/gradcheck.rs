//! Central finite-difference gradient checks.

use super::{AutodiffError, Graph, Tensor, Var};

/// Worst disagreement between analytic and numerical gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_a - g_n| / max(DENOM_FLOOR, |g_a| + |g_n|)` over all entries.
    pub max_rel_error: f64,
    /// `(parameter index, flat entry index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub entries_checked: usize,
}

/// Below this the two gradients are compared absolutely. Exactly-zero
/// gradients (for instance a bias cancelled by a following batch norm) would
/// otherwise compare finite-difference roundoff against itself.
pub const DENOM_FLOOR: f64 = 1e-6;

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.constant(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.value(out)
        .item()
        .ok_or_else(|| AutodiffError::NonScalarLoss(g.value(out).shape().to_vec()))
}

/// Compares reverse-mode gradients of the scalar `f(params)` against central
/// differences with the given `step`. `f` must be deterministic.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(AutodiffError::InvalidStep(step));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    let base = g
        .value(out)
        .item()
        .ok_or_else(|| AutodiffError::NonScalarLoss(g.value(out).shape().to_vec()))?;
    if evaluate(&f, params)?.to_bits() != base.to_bits() {
        return Err(AutodiffError::NonDeterministic);
    }
    let grads = g.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    let mut probe = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, &params[pi]);
        for e in 0..params[pi].len() {
            let orig = params[pi].data()[e];
            probe[pi].data_mut()[e] = orig + step;
            let plus = evaluate(&f, &probe)?;
            probe[pi].data_mut()[e] = orig - step;
            let minus = evaluate(&f, &probe)?;
            probe[pi].data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let ga = analytic.data()[e];
            let rel = (ga - numeric).abs() / (ga.abs() + numeric.abs()).max(DENOM_FLOOR);
            report.entries_checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((pi, e));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn quadratic() {
        // f(x) = 3x0^2 + x0*x1 - 2x2^2 + x2
        let f = |g: &mut Graph, v: &[Var]| {
            let x = v[0];
            let sq = g.mul(x, x)?;
            let w = g.constant(Tensor::vector(vec![3.0, 0.0, -2.0]));
            let quad = g.mul(sq, w)?;
            let row = g.reshape(x, &[1, 3])?;
            let a = g.slice(row, 0, 1)?;
            let b = g.slice(row, 1, 1)?;
            let c = g.slice(row, 2, 1)?;
            let ab = g.mul(a, b)?;
            let t = g.add(ab, c)?;
            let t = g.sum(t);
            let s = g.sum(quad);
            g.add(s, t)
        };
        let r = grad_check(f, &[Tensor::vector(vec![0.7, -1.3, 2.1])], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.entries_checked, 3);
    }

    #[test]
    fn invalid_step() {
        let f = |g: &mut Graph, v: &[Var]| Ok(g.sum(v[0]));
        let p = [Tensor::vector(vec![1.0])];
        assert!(matches!(
            grad_check(f, &p, 0.0),
            Err(AutodiffError::InvalidStep(_))
        ));
        assert!(grad_check(f, &p, -1e-5).is_err());
    }

    #[test]
    fn detects_nondeterminism() {
        let calls = Cell::new(0.0);
        let f = |g: &mut Graph, v: &[Var]| {
            calls.set(calls.get() + 1.0);
            let s = g.sum(v[0]);
            Ok(g.scale(s, calls.get()))
        };
        assert!(matches!(
            grad_check(f, &[Tensor::vector(vec![1.0])], 1e-5),
            Err(AutodiffError::NonDeterministic)
        ));
    }
}
