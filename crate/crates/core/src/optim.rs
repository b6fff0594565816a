//! Parameter groups, gradient evaluation over groups, Adam and the step-decay
//! schedule.

use crate::ad::{self, Var};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
/// Factor applied at each decay point.
pub const DECAY: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub values: Vec<f64>,
    pub rate: f64,
    pub trainable: bool,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, values: Vec<f64>, rate: f64, trainable: bool) -> Self {
        ParamGroup {
            name: name.into(),
            values,
            rate,
            trainable,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: usize,
    pub total: usize,
}

impl OptState {
    pub fn new(groups: &[ParamGroup], total: usize) -> Self {
        OptState {
            m: groups.iter().map(|g| vec![0.0; g.values.len()]).collect(),
            v: groups.iter().map(|g| vec![0.0; g.values.len()]).collect(),
            step: 0,
            total,
        }
    }
}

/// 1 before 75% of `total`, 0.3 until 93.75%, 0.09 after.
pub fn lr_multiplier(step: usize, total: usize) -> f64 {
    let (s, t) = (step as u128, total as u128);
    if s * 16 >= t * 15 {
        DECAY * DECAY
    } else if s * 4 >= t * 3 {
        DECAY
    } else {
        1.0
    }
}

/// One Adam update. Non-trainable groups are left untouched.
pub fn adam_step(state: &mut OptState, groups: &mut [ParamGroup], grads: &[Vec<f64>]) -> Result<()> {
    if grads.len() != groups.len() || state.m.len() != groups.len() {
        return Err(Error::Dimension(format!(
            "{} groups, {} gradients, {} moment sets",
            groups.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (g, gr) in groups.iter().zip(grads) {
        if gr.len() != g.values.len() {
            return Err(Error::Dimension(format!(
                "group `{}` has {} values but {} gradients",
                g.name,
                g.values.len(),
                gr.len()
            )));
        }
        if gr.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { group: g.name.clone() });
        }
    }
    let mult = lr_multiplier(state.step, state.total.max(1));
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (k, (g, gr)) in groups.iter_mut().zip(grads).enumerate() {
        if !g.trainable || g.rate == 0.0 {
            continue;
        }
        let lr = g.rate * mult;
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..g.values.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * gr[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * gr[i] * gr[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            g.values[i] -= lr * mh / (vh.sqrt() + EPSILON);
        }
    }
    Ok(())
}

/// Total value, per-group gradients and per-term values.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
    pub terms: Vec<(&'static str, f64)>,
}

/// Evaluates a sum of named terms over the groups and differentiates it with
/// respect to the trainable ones. Terms are summed in the order returned.
pub fn group_gradient<F>(groups: &[ParamGroup], f: F) -> Result<Evaluation>
where
    F: FnOnce(&[&[Var]]) -> Result<Vec<(&'static str, Var)>>,
{
    let point: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).collect();
    let active: Vec<bool> = groups
        .iter()
        .flat_map(|g| std::iter::repeat_n(g.trainable, g.values.len()))
        .collect();
    let out = ad::gradient(&point, &active, |x| {
        let mut slices = Vec::with_capacity(groups.len());
        let mut at = 0;
        for g in groups {
            slices.push(&x[at..at + g.values.len()]);
            at += g.values.len();
        }
        match f(&slices) {
            Ok(terms) => {
                let mut total = Var::constant(0.0);
                for &(_, v) in &terms {
                    total += v;
                }
                let vals: Vec<_> = terms.iter().map(|&(n, v)| (n, v.val())).collect();
                (total, Ok(vals))
            }
            Err(e) => (Var::constant(0.0), Err(e)),
        }
    });
    let terms = out.extra?;
    if let Some(&(name, _)) = terms.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteLoss { term: name.to_string() });
    }
    let mut grads = Vec::with_capacity(groups.len());
    let mut at = 0;
    for g in groups {
        let gr = out.grad[at..at + g.values.len()].to_vec();
        if gr.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { group: g.name.clone() });
        }
        grads.push(gr);
        at += g.values.len();
    }
    Ok(Evaluation {
        value: out.value,
        grads,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Real;
    use num_traits::Float;

    #[test]
    fn schedule_breakpoints() {
        assert_eq!(lr_multiplier(0, 100), 1.0);
        assert_eq!(lr_multiplier(74, 100), 1.0);
        assert_eq!(lr_multiplier(75, 100), 0.3);
        assert_eq!(lr_multiplier(80, 100), 0.3);
        assert_eq!(lr_multiplier(93, 100), 0.3);
        assert_eq!(lr_multiplier(95, 100), 0.3 * 0.3);
        // 93.75% of 16 is exactly 15
        assert_eq!(lr_multiplier(14, 16), 0.3);
        assert_eq!(lr_multiplier(15, 16), 0.3 * 0.3);
    }

    #[test]
    fn squared_norm_gradient() {
        let groups = vec![ParamGroup::new("x", vec![1.0, 2.0], 0.1, true), ParamGroup::new("y", vec![5.0], 0.1, true)];
        let e = group_gradient(&groups, |g| Ok(vec![("sq", Var::dot(g[0], g[0]))])).unwrap();
        assert_eq!(e.value, 5.0);
        assert_eq!(e.grads, vec![vec![2.0, 4.0], vec![0.0]]);
    }

    #[test]
    fn non_finite_term_is_named() {
        let groups = vec![ParamGroup::new("x", vec![-1.0], 0.1, true)];
        let err = group_gradient(&groups, |g| Ok(vec![("ok", g[0][0]), ("bad", g[0][0].sqrt())])).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { ref term } if term == "bad"));
    }

    #[test]
    fn zero_gradient_and_frozen_groups() {
        let mut groups = vec![ParamGroup::new("a", vec![1.0], 0.1, true), ParamGroup::new("b", vec![2.0], 0.1, false)];
        let mut st = OptState::new(&groups, 10);
        adam_step(&mut st, &mut groups, &[vec![0.0], vec![3.0]]).unwrap();
        assert_eq!(st.step, 1);
        assert_eq!(groups[0].values, vec![1.0]);
        assert_eq!(groups[1].values, vec![2.0]);
        assert!(adam_step(&mut st, &mut groups, &[vec![f64::NAN], vec![0.0]]).is_err());
    }

    #[test]
    fn converges_on_quadratic() {
        let target = [0.7, -1.3, 2.0];
        let mut groups = vec![ParamGroup::new("x", vec![0.0; 3], 0.05, true)];
        let total = 4000;
        let mut st = OptState::new(&groups, total);
        for _ in 0..total {
            let g: Vec<f64> = groups[0].values.iter().zip(&target).map(|(x, t)| 2.0 * (x - t)).collect();
            adam_step(&mut st, &mut groups, &[g]).unwrap();
        }
        for (x, t) in groups[0].values.iter().zip(&target) {
            assert!((x - t).abs() < 1e-4, "{x} vs {t}");
        }
    }
}
