use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::nn::ParameterStore;
use super::tensor::Tensor;
use super::TensorError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// Lower bound of the relative-error denominator.
    pub floor: f64,
    /// Check at most this many coordinates, chosen at random.
    pub max_coords: Option<usize>,
    pub seed: u64,
    /// Coordinates whose one-sided differences disagree by more than this
    /// fraction sit on a kink and are skipped.
    pub kink_tol: f64,
    /// Coordinates whose central differences at `h` and `h / 2` disagree
    /// by more than this fraction have a kink inside the stencil and are
    /// skipped too.
    pub stencil_tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { h: 1e-5, floor: 1e-6, max_coords: None, seed: 0, kink_tol: 1e-2, stencil_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    /// (tensor index, element index, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Compares analytic gradients of a scalar computation over `inputs` with
/// central finite differences.
pub fn grad_check<F>(inputs: &[Tensor], f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |ts: &[Tensor]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    let mut work = inputs.to_vec();
    compare(&mut work, &analytic, cfg, |ts| eval(ts))
}

/// Like [`grad_check`], over the parameters of a store.
pub fn grad_check_params<F>(store: &ParameterStore, f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph, &ParameterStore) -> Result<Var, TensorError>,
{
    let names: Vec<String> = store.names().cloned().collect();
    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    g.backward(out)?;
    let grads = g.param_grads();
    let analytic: Vec<Tensor> = names
        .iter()
        .map(|n| {
            grads
                .iter()
                .find(|(gn, _)| gn == n)
                .map(|(_, t)| t.clone())
                .unwrap_or_else(|| Tensor::zeros(store.get(n).expect("name from store").shape()))
        })
        .collect();
    let mut work: Vec<Tensor> = names.iter().map(|n| store.get(n).expect("name from store").clone()).collect();
    let mut scratch = store.clone();
    compare(&mut work, &analytic, cfg, |ts| {
        for (n, t) in names.iter().zip(ts) {
            *scratch.get_mut(n).expect("name from store") = t.clone();
        }
        let mut g = Graph::new();
        let out = f(&mut g, &scratch)?;
        Ok(g.value(out).item())
    })
}

fn compare(
    work: &mut [Tensor],
    analytic: &[Tensor],
    cfg: &GradCheckConfig,
    mut eval: impl FnMut(&[Tensor]) -> Result<f64, TensorError>,
) -> Result<GradCheckReport, TensorError> {
    let coords: Vec<(usize, usize)> = work
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.len()).map(move |i| (ti, i)))
        .collect();
    let chosen: Vec<(usize, usize)> = match cfg.max_coords {
        Some(k) if k < coords.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut idx = sample(&mut rng, coords.len(), k).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| coords[i]).collect()
        }
        _ => coords,
    };
    let f0 = eval(work)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, skipped_kinks: 0, worst: None };
    for (ti, i) in chosen {
        let orig = work[ti].data()[i];
        let mut at = |x: f64| -> Result<f64, TensorError> {
            work[ti].data_mut()[i] = x;
            let v = eval(work);
            work[ti].data_mut()[i] = orig;
            v
        };
        let h = cfg.h;
        let (fp, fm) = (at(orig + h)?, at(orig - h)?);
        let (fp2, fm2) = (at(orig + h / 2.0)?, at(orig - h / 2.0)?);
        let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
        let num = (fp - fm) / (2.0 * h);
        let half = (fp2 - fm2) / h;
        let one_sided = (fwd - bwd).abs() > cfg.kink_tol * fwd.abs().max(bwd.abs()) + 1e-7;
        // on a smooth function the two central estimates agree to O(h^2)
        let stencil = (num - half).abs() > cfg.stencil_tol * num.abs().max(half.abs()) + 1e-7;
        if one_sided || stencil {
            report.skipped_kinks += 1;
            continue;
        }
        let ana = analytic[ti].data()[i];
        let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(cfg.floor);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((ti, i, ana, num));
        }
    }
    Ok(report)
}
