use crate::error::{Error, Result};
use crate::ids::InstanceId;
use crate::scalar::Real;

/// Per-step supervision: expert accuracies and policy scores over the
/// current candidates, in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSupervision<T> {
    pub ids: Vec<InstanceId>,
    pub expert: Vec<T>,
    pub scores: Vec<T>,
    /// Accuracy before any addition; 0 while the classifier is undefined.
    pub current_accuracy: T,
}

impl<T: Real> StepSupervision<T> {
    fn check(&self) -> Result<()> {
        if self.expert.len() != self.scores.len() || self.ids.len() != self.scores.len() {
            return Err(Error::Shape(format!(
                "{} ids, {} expert accuracies, {} scores",
                self.ids.len(),
                self.expert.len(),
                self.scores.len()
            )));
        }
        Ok(())
    }

    /// Pairs `i < j` with distinct expert accuracies.
    pub fn valid_pairs(&self) -> usize {
        let a = &self.expert;
        (0..a.len()).map(|i| (i + 1..a.len()).filter(|&j| a[i] != a[j]).count()).sum()
    }
}

fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Mean over valid pairs of `max(0, 1 - sign(a_i - a_j) (s_i - s_j))`, with
/// its subgradient in the scores (zero branch at the kink). Pairs with
/// tied expert accuracies are skipped; no valid pair gives zero loss. A
/// non-finite score makes the loss NaN.
pub fn margin_rank_loss<T: Real>(sup: &StepSupervision<T>) -> Result<(T, Vec<T>)> {
    sup.check()?;
    let (a, s) = (&sup.expert, &sup.scores);
    let mut grad = vec![T::zero(); s.len()];
    if s.iter().any(|x| !x.is_finite()) {
        return Ok((T::nan(), grad));
    }
    let mut total = T::zero();
    let mut pairs = 0usize;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            if a[i] == a[j] {
                continue;
            }
            pairs += 1;
            let e = sign(a[i] - a[j]);
            let margin = T::one() - e * (s[i] - s[j]);
            if margin > T::zero() {
                total += margin;
                grad[i] -= e;
                grad[j] += e;
            }
        }
    }
    if pairs == 0 {
        return Ok((T::zero(), grad));
    }
    let n = T::from_usize(pairs).unwrap();
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

/// Mean squared error against the accuracy gain `a_i - current_accuracy`.
pub fn mse_loss<T: Real>(sup: &StepSupervision<T>) -> Result<(T, Vec<T>)> {
    sup.check()?;
    if sup.scores.is_empty() {
        return Err(Error::NoCandidates);
    }
    let n = T::from_usize(sup.scores.len()).unwrap();
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let grad = sup
        .scores
        .iter()
        .zip(&sup.expert)
        .map(|(&s, &a)| {
            let r = s - (a - sup.current_accuracy);
            loss += r * r;
            two * r / n
        })
        .collect();
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sup(a: &[f64], s: &[f64]) -> StepSupervision<f64> {
        StepSupervision {
            ids: (0..a.len() as u32).map(InstanceId).collect(),
            expert: a.to_vec(),
            scores: s.to_vec(),
            current_accuracy: 0.0,
        }
    }

    #[test]
    fn margin_cases() {
        assert_eq!(margin_rank_loss(&sup(&[0.9, 0.1], &[2.0, 0.0])).unwrap().0, 0.0);
        let (l, g) = margin_rank_loss(&sup(&[0.9, 0.1], &[0.0, 0.0])).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![-1.0, 1.0]);
        assert_eq!(margin_rank_loss(&sup(&[0.1, 0.9], &[0.5, 0.0])).unwrap().0, 1.5);
        let (l, g) = margin_rank_loss(&sup(&[0.5, 0.5], &[3.0, -1.0])).unwrap();
        assert_eq!((l, g), (0.0, vec![0.0, 0.0]));
    }

    #[test]
    fn kink_takes_zero_branch() {
        let (l, g) = margin_rank_loss(&sup(&[0.9, 0.1], &[1.0, 0.0])).unwrap();
        assert_eq!((l, g), (0.0, vec![0.0, 0.0]));
    }

    #[test]
    fn averages_over_valid_pairs() {
        // pairs (0,1) and (1,2) valid, (0,2) tied
        let s = sup(&[0.2, 0.4, 0.2], &[0.0, 0.0, 0.0]);
        assert_eq!(s.valid_pairs(), 2);
        let (l, g) = margin_rank_loss(&s).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![0.5, -1.0, 0.5]);
    }

    #[test]
    fn mse_cases() {
        let mut s = sup(&[0.4, 0.6], &[0.1, 0.3]);
        s.current_accuracy = 0.3;
        assert_relative_eq!(mse_loss(&s).unwrap().0, 0.0, epsilon = 1e-15);
        let (l, g) = mse_loss(&sup(&[0.2], &[0.0])).unwrap();
        assert_relative_eq!(l, 0.04, epsilon = 1e-15);
        assert_relative_eq!(g[0], -0.4, epsilon = 1e-15);
    }

    #[test]
    fn length_mismatch() {
        let mut s = sup(&[0.1, 0.2], &[0.0, 0.0]);
        s.scores.pop();
        assert!(matches!(margin_rank_loss(&s), Err(Error::Shape(_))));
        assert!(matches!(mse_loss(&s), Err(Error::Shape(_))));
    }
}
