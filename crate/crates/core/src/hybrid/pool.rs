/// Every evaluated point (normalized coordinates) and its log-likelihood.
///
/// `-inf` entries are kept for bookkeeping but never count as finite
/// observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationPool {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl ObservationPool {
    pub fn push(&mut self, point: Vec<f64>, value: f64) {
        self.points.push(point);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn finite_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }

    /// Index of the largest value, first occurrence on ties.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, v) in self.values.iter().enumerate() {
            if best.is_none_or(|b| *v > self.values[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// Best finite value `L*`, or `-inf` when there is none.
    pub fn best_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices sorted by descending value; ties keep insertion order.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx
    }

    /// Position of entry `index` in [`ranked`](Self::ranked) order among the
    /// finite values: earlier entries win ties.
    pub fn rank_of(&self, index: usize) -> usize {
        let v = self.values[index];
        self.values
            .iter()
            .enumerate()
            .filter(|(i, w)| *i != index && w.is_finite() && (**w > v || (**w == v && *i < index)))
            .count()
    }

    /// Whether entry `index` is finite and among the top `m` finite values.
    pub fn in_top(&self, index: usize, m: usize) -> bool {
        self.values[index].is_finite() && self.rank_of(index) < m
    }

    /// Whether some existing point lies within `tol` (Euclidean) of `x`.
    pub fn contains_near(&self, x: &[f64], tol: f64) -> bool {
        self.points
            .iter()
            .any(|p| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking() {
        let mut p = ObservationPool::default();
        for (i, v) in [3.0, f64::NEG_INFINITY, 5.0, 3.0, 1.0].into_iter().enumerate() {
            p.push(vec![i as f64], v);
        }
        assert_eq!(p.ranked(), vec![2, 0, 3, 4, 1]);
        assert_eq!(p.best_index(), Some(2));
        // Entry 3 ties entry 0 and ranks after it.
        assert_eq!((p.rank_of(0), p.rank_of(3)), (1, 2));
        assert!(!p.in_top(3, 2) && p.in_top(3, 3));
        assert!(!p.in_top(4, 3));
        assert!(!p.in_top(1, 5));
        assert!(p.contains_near(&[2.0 + 1e-12], 1e-9));
    }
}
