use super::{AutodiffError, Graph, Tensor, Var};

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences.
///
/// `f` builds the function on a fresh graph from one leaf per entry of
/// `point`. Returns `max_i |analytic_i − numeric_i| / max(1, |analytic_i|,
/// |numeric_i|)` over every coordinate of every input.
pub fn grad_check<F>(f: F, point: &[Tensor], step: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    let eval = |inputs: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = point.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe = point.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, &point[k]);
        for i in 0..point[k].len() {
            let orig = point[k].data()[i];
            probe[k].data_mut()[i] = orig + step;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = orig - step;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
