use super::{AutodiffError, NodeId, Op, Result, Tape, Tensor};

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDiffReport {
    /// Max over compared coordinates of `|analytic - numeric| / max(|analytic|, 1e-8)`.
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub compared: usize,
    /// Coordinates whose `±step` probe flips a ReLU or clamp pattern.
    pub excluded: Vec<usize>,
}

fn kink_patterns(tape: &Tape) -> Vec<bool> {
    let mut pattern = Vec::new();
    for i in 0..tape.len() {
        match tape.node(NodeId(i)).op {
            Op::Relu(a) => pattern.extend(tape.value(a).data().iter().map(|&v| v > 0.0)),
            Op::ClampMin(a, lo) => pattern.extend(tape.value(a).data().iter().map(|&v| v > lo)),
            _ => {}
        }
    }
    pattern
}

fn eval(f: &impl Fn(&mut Tape, NodeId) -> Result<NodeId>, x: &Tensor) -> Result<(f64, Vec<bool>)> {
    let mut tape = Tape::new();
    let leaf = tape.constant(x.clone());
    let out = f(&mut tape, leaf)?;
    if !tape.value(out).is_scalar() {
        return Err(AutodiffError::NonScalarOutput(tape.value(out).shape().to_vec()));
    }
    Ok((tape.value(out).item(), kink_patterns(&tape)))
}

/// Checks the tape gradient of the scalar function `f` at `x` against
/// central differences with the given step.
///
/// `f` receives a fresh tape and the leaf holding its argument, and returns the
/// scalar output node. It must record the same sequence of ops for every
/// argument, which lets coordinates near a ReLU kink be detected and skipped.
pub fn finite_diff_check(
    f: impl Fn(&mut Tape, NodeId) -> Result<NodeId>,
    x: &Tensor,
    step: f64,
) -> Result<FiniteDiffReport> {
    let mut tape = Tape::new();
    let leaf = tape.constant(x.clone());
    let out = f(&mut tape, leaf)?;
    let base_pattern = kink_patterns(&tape);
    let grad = tape.gradient(out, &[leaf])?[0];
    let analytic = tape.value(grad).clone();

    let mut report =
        FiniteDiffReport { max_rel_error: 0.0, worst_index: None, compared: 0, excluded: vec![] };
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        let (fp, pp) = eval(&f, &plus)?;
        let (fm, pm) = eval(&f, &minus)?;
        if pp != base_pattern || pm != base_pattern {
            report.excluded.push(i);
            continue;
        }
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(1e-8);
        report.compared += 1;
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}
