use crate::error::{Error, Result};

/// Counts of (label, prediction) pairs; row = ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, label: usize, predicted: usize) -> u64 {
        self.counts[label * self.classes + predicted]
    }

    pub fn add(&mut self, labels: &[u32], predictions: &[u32]) -> Result<()> {
        if labels.len() != predictions.len() {
            return Err(Error::invalid(format!(
                "{} labels but {} predictions",
                labels.len(),
                predictions.len()
            )));
        }
        for (&l, &p) in labels.iter().zip(predictions) {
            let (l, p) = (l as usize, p as usize);
            if l >= self.classes || p >= self.classes {
                return Err(Error::invalid(format!("class id out of range 0..{}", self.classes)));
            }
            self.counts[l * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn report(&self) -> MetricsReport {
        let c = self.classes;
        let total = self.total();
        let correct: u64 = (0..c).map(|k| self.get(k, k)).sum();
        let per_class_iou: Vec<Option<f64>> = (0..c)
            .map(|k| {
                let tp = self.get(k, k);
                let fn_: u64 = (0..c).map(|p| self.get(k, p)).sum::<u64>() - tp;
                let fp: u64 = (0..c).map(|l| self.get(l, k)).sum::<u64>() - tp;
                let denom = tp + fp + fn_;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect();
        let defined: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
        MetricsReport {
            overall_accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            mean_iou: if defined.is_empty() { 0.0 } else { defined.iter().sum::<f64>() / defined.len() as f64 },
            per_class_iou,
        }
    }
}

/// Segmentation quality summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub overall_accuracy: f64,
    /// `None` for classes absent from both labels and predictions.
    pub per_class_iou: Vec<Option<f64>>,
    /// Mean over the defined per-class IoUs.
    pub mean_iou: f64,
}

pub fn metrics(labels: &[u32], predictions: &[u32], classes: usize) -> Result<MetricsReport> {
    let mut m = ConfusionMatrix::new(classes);
    m.add(labels, predictions)?;
    Ok(m.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_prediction() {
        let l = [0, 1, 2, 2, 1];
        let r = metrics(&l, &l, 4).unwrap();
        assert_eq!(r.overall_accuracy, 1.0);
        assert_eq!(r.per_class_iou, vec![Some(1.0), Some(1.0), Some(1.0), None]);
        assert_eq!(r.mean_iou, 1.0);
    }

    #[test]
    fn constant_prediction_on_balanced_pair() {
        // Confusion [[2,0],[2,0]]: class 0 IoU 2/4, class 1 has only false negatives.
        let r = metrics(&[0, 0, 1, 1], &[0, 0, 0, 0], 2).unwrap();
        assert_eq!(r.overall_accuracy, 0.5);
        assert_eq!(r.per_class_iou, vec![Some(0.5), Some(0.0)]);
        assert_eq!(r.mean_iou, 0.25);
    }

    #[test]
    fn matches_direct_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.gen_range(1..200);
            let l: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let p: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let r = metrics(&l, &p, 3).unwrap();
            let correct = l.iter().zip(&p).filter(|(a, b)| a == b).count();
            assert_eq!(r.overall_accuracy, correct as f64 / n as f64);
            for c in 0..3u32 {
                let inter = l.iter().zip(&p).filter(|(&a, &b)| a == c && b == c).count();
                let union = l.iter().zip(&p).filter(|(&a, &b)| a == c || b == c).count();
                let expect = (union > 0).then(|| inter as f64 / union as f64);
                assert_eq!(r.per_class_iou[c as usize], expect);
            }
        }
    }

    #[test]
    fn rejects_mismatch() {
        assert!(metrics(&[0], &[0, 1], 2).is_err());
        assert!(metrics(&[5], &[0], 2).is_err());
    }
}
