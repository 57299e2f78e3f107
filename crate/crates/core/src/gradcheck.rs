//! Central finite-difference check of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Result, SggError};
use crate::params::ParamStore;

pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max of `|analytic - numeric| / max(1, |numeric|)`.
    pub max_rel_error: f64,
    /// Parameter and flat index where the max occurred.
    pub worst: Option<(String, usize)>,
    /// Scalars perturbed.
    pub checked: usize,
}

/// Which coordinates of each parameter to perturb.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coverage {
    All,
    /// At most this many coordinates per parameter, drawn from a seeded
    /// stream; every parameter is visited.
    Sampled { per_param: usize, seed: u64 },
}

fn evaluate<F>(f: &F, store: &ParamStore, name: &str) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let v = tape.scalar_value(out);
    if !v.is_finite() {
        return Err(SggError::NonFinite {
            context: format!("objective while perturbing `{name}`"),
        });
    }
    Ok(v)
}

/// Compares reverse-mode gradients of the scalar `f` with central
/// differences of step [`FD_STEP`] at the current parameter values.
pub fn grad_check<F>(f: F, store: &ParamStore, coverage: Coverage) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    if !tape.scalar_value(out).is_finite() {
        return Err(SggError::NonFinite {
            context: "objective at the base point".into(),
        });
    }
    let grads = tape.backward(out);
    let analytic: Vec<Option<crate::tensor::Tensor2>> = {
        let mut a = vec![None; store.len()];
        for (id, g) in grads.params() {
            a[id.index()] = Some(g.clone());
        }
        a
    };

    let mut rng = match coverage {
        Coverage::Sampled { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Coverage::All => None,
    };
    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in store.ids() {
        let p = store.get(id);
        let n = p.value.data().len();
        if let Some(g) = &analytic[id.index()] {
            if !g.is_finite() {
                return Err(SggError::NonFinite {
                    context: format!("analytic gradient of `{}`", p.name),
                });
            }
        }
        let coords: Vec<usize> = match (coverage, rng.as_mut()) {
            (Coverage::Sampled { per_param, .. }, Some(r)) if per_param < n => {
                let mut c = sample(r, n, per_param).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for k in coords {
            let x0 = p.value.data()[k];
            work.get_mut(id).value.data_mut()[k] = x0 + FD_STEP;
            let up = evaluate(&f, &work, &p.name)?;
            work.get_mut(id).value.data_mut()[k] = x0 - FD_STEP;
            let down = evaluate(&f, &work, &p.name)?;
            work.get_mut(id).value.data_mut()[k] = x0;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[id.index()].as_ref().map_or(0.0, |g| g.data()[k]);
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((p.name.clone(), k));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::cross_entropy;
    use crate::tensor::Tensor2;

    #[test]
    fn linear_objective_is_exact() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor2::from_fn(2, 3, |r, c| 0.1 * (r + 2 * c) as f64)).unwrap();
        let x = Tensor2::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let r = grad_check(
            |t, s| {
                let xv = t.constant(x.clone());
                let wv = t.param(s, w);
                let y = t.matmul_t(xv, wv);
                Ok(t.sum(y))
            },
            &store,
            Coverage::All,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-10, "{r:?}");
        assert_eq!(r.checked, 6);
    }

    #[test]
    fn cross_entropy_softmax_linear() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let w = store.add_uniform("w", 4, 4, 4, &mut rng).unwrap();
        let x = Tensor2::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let labels = [0usize, 3, 1];
        let onehot = Tensor2::from_fn(3, 4, |r, c| if labels[r] == c { -1.0 } else { 0.0 });
        let f = |t: &mut Tape, s: &ParamStore| {
            let xv = t.constant(x.clone());
            let wv = t.param(s, w);
            let y = t.matmul_t(xv, wv);
            let ls = t.log_softmax_rows(y);
            let m = t.constant(onehot.clone());
            let prod = t.mul(ls, m);
            Ok(t.sum(prod))
        };
        let r = grad_check(f, &store, Coverage::All).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");

        let mut tape = Tape::new();
        let v = f(&mut tape, &store).unwrap();
        let logits = x.matmul_t(&store.get(w).value);
        let want: f64 = (0..3).map(|i| cross_entropy(logits.row(i), labels[i], None).unwrap()).sum();
        assert!((tape.scalar_value(v) - want).abs() < 1e-12);
    }

    #[test]
    fn non_finite_names_parameter() {
        let mut store = ParamStore::new();
        let w = store.add("scale", Tensor2::scalar(1e-6)).unwrap();
        let e = grad_check(
            |t, s| {
                let v = t.param(s, w);
                Ok(t.ln(v))
            },
            &store,
            Coverage::All,
        )
        .unwrap_err();
        match e {
            SggError::NonFinite { context } => assert!(context.contains("scale"), "{context}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sampled_coverage_visits_every_parameter() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor2::filled(5, 5, 0.3)).unwrap();
        let b = store.add("b", Tensor2::filled(1, 2, 0.7)).unwrap();
        let r = grad_check(
            |t, s| {
                let av = t.param(s, a);
                let bv = t.param(s, b);
                let a2 = t.mul(av, av);
                let sa = t.sum(a2);
                let sb = t.sum(bv);
                Ok(t.add(sa, sb))
            },
            &store,
            Coverage::Sampled { per_param: 3, seed: 1 },
        )
        .unwrap();
        assert_eq!(r.checked, 5);
        assert!(r.max_rel_error < 1e-8);
    }
}
