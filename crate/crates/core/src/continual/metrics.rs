use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Percentage of correct sign decisions; a positive logit predicts label 1.
pub fn accuracy(logits: &[f64], labels: &[u8]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    if logits.len() != labels.len() {
        return Err(Error::shape("accuracy labels", logits.len(), labels.len()));
    }
    let correct = logits
        .iter()
        .zip(labels)
        .filter(|(&z, &y)| (z > 0.0) == (y == 1))
        .count();
    Ok(100.0 * correct as f64 / logits.len() as f64)
}

/// Mann-Whitney AUC in percent, from mid-ranks. Label 1 is the positive class.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("auc labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            context: "auc scores",
            index: scores.iter().position(|s| s.is_nan()),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    let u = rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * n_neg as f64) * 100.0)
}

/// `(1 / (t-1)) * sum_i (first_i - last_i)` over the `t-1` earlier tasks.
pub fn average_forgetting(first: &[f64], last: &[f64]) -> Result<f64> {
    if first.len() != last.len() {
        return Err(Error::shape("forgetting scores", first.len(), last.len()));
    }
    if first.is_empty() {
        return Err(Error::InvalidArgument("AF undefined for first task".into()));
    }
    let sum: f64 = first.iter().zip(last).map(|(f, l)| f - l).sum();
    Ok(sum / first.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Acc,
    Auc,
}

/// Lower-triangular grid: row `i` holds the scores of the model after task
/// `i + 1` on tasks `1..=i + 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScoreMatrix {
    acc: Vec<Vec<f64>>,
    auc: Vec<Vec<f64>>,
}

pub const SCORES_HEADER: &str = "train_step,eval_task,acc,auc";

impl ScoreMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> usize {
        self.acc.len()
    }

    pub fn rows(&self, metric: Metric) -> &[Vec<f64>] {
        match metric {
            Metric::Acc => &self.acc,
            Metric::Auc => &self.auc,
        }
    }

    /// Appends the row for the next training step; it must cover exactly
    /// `steps() + 1` tasks with values in `[0, 100]`.
    pub fn push_row(&mut self, acc: Vec<f64>, auc: Vec<f64>) -> Result<()> {
        let expected = self.steps() + 1;
        if acc.len() != expected || auc.len() != expected {
            return Err(Error::shape("score row", expected, acc.len().min(auc.len())));
        }
        if acc.iter().chain(&auc).any(|v| !(0.0..=100.0).contains(v)) {
            return Err(Error::InvalidArgument("scores must lie in [0, 100]".into()));
        }
        self.acc.push(acc);
        self.auc.push(auc);
        Ok(())
    }

    /// Mean score over the tasks seen after step `t` (1-based).
    pub fn average(&self, metric: Metric, t: usize) -> Result<f64> {
        let row = self.row(metric, t)?;
        Ok(row.iter().sum::<f64>() / row.len() as f64)
    }

    /// Average forgetting after step `t` (1-based, `t >= 2`).
    pub fn forgetting(&self, metric: Metric, t: usize) -> Result<f64> {
        if t < 2 {
            return Err(Error::InvalidArgument("AF undefined for first task".into()));
        }
        let rows = self.rows(metric);
        let last = self.row(metric, t)?;
        let first: Vec<f64> = (0..t - 1).map(|i| rows[i][i]).collect();
        average_forgetting(&first, &last[..t - 1])
    }

    fn row(&self, metric: Metric, t: usize) -> Result<&[f64]> {
        if t == 0 || t > self.steps() {
            return Err(Error::InvalidArgument(format!(
                "step {t} out of range 1..={}",
                self.steps()
            )));
        }
        Ok(&self.rows(metric)[t - 1])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SCORES_HEADER}")?;
        for (i, (acc, auc)) in self.acc.iter().zip(&self.auc).enumerate() {
            for (j, (a, u)) in acc.iter().zip(auc).enumerate() {
                writeln!(w, "{},{},{a},{u}", i + 1, j + 1)?;
            }
        }
        Ok(())
    }

    /// Inverse of [`ScoreMatrix::write_csv`]; rows must appear in the order it
    /// writes them.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        match lines.next() {
            Some((_, h)) if h == SCORES_HEADER => {}
            _ => return Err(Error::parse(1, None, format!("expected header `{SCORES_HEADER}`"))),
        }
        let mut m = ScoreMatrix::new();
        let (mut acc, mut auc) = (Vec::new(), Vec::new());
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::parse(n, None, format!("expected 4 fields, found {}", fields.len())));
            }
            let int = |k: usize, name: &str| -> Result<usize> {
                fields[k].parse().map_err(|e| Error::parse(n, Some(name), format!("{e}")))
            };
            let real = |k: usize, name: &str| -> Result<f64> {
                let v: f64 = fields[k].parse().map_err(|e| Error::parse(n, Some(name), format!("{e}")))?;
                if (0.0..=100.0).contains(&v) {
                    Ok(v)
                } else {
                    Err(Error::parse(n, Some(name), format!("{v} outside [0, 100]")))
                }
            };
            let step = int(0, "train_step")?;
            let task = int(1, "eval_task")?;
            let expected_step = m.steps() + 1;
            if step != expected_step || task != acc.len() + 1 {
                return Err(Error::parse(
                    n,
                    None,
                    format!("expected step {expected_step} task {}, found step {step} task {task}", acc.len() + 1),
                ));
            }
            acc.push(real(2, "acc")?);
            auc.push(real(3, "auc")?);
            if acc.len() == expected_step {
                m.push_row(std::mem::take(&mut acc), std::mem::take(&mut auc))?;
            }
        }
        if !acc.is_empty() {
            return Err(Error::parse(
                text.lines().count(),
                None,
                format!("incomplete final row for step {}", m.steps() + 1),
            ));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngStream;
    use proptest::prelude::*;

    fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let (mut np, mut nn) = (0.0, 0.0);
        for (i, &y) in labels.iter().enumerate() {
            if y == 1 {
                np += 1.0;
            } else {
                nn += 1.0;
            }
            if y != 1 {
                continue;
            }
            for (j, &z) in labels.iter().enumerate() {
                if z == 0 {
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / (np * nn) * 100.0
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1.0, -1.0], &[1, 0]).unwrap(), 100.0);
        let mut rng = RngStream::new(1);
        for _ in 0..50 {
            let z: Vec<f64> = (0..37).map(|_| rng.normal()).collect();
            let y: Vec<u8> = (0..37).map(|_| rng.below(2) as u8).collect();
            let mut hits = 0;
            for i in 0..37 {
                let pred = if z[i] > 0.0 { 1 } else { 0 };
                if pred == y[i] {
                    hits += 1;
                }
            }
            let acc = accuracy(&z, &y).unwrap();
            assert_eq!(acc, 100.0 * hits as f64 / 37.0);
            let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
            assert!((accuracy(&z, &flipped).unwrap() - (100.0 - acc)).abs() < 1e-12);
        }
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.9, 0.8], &[1, 0]).unwrap(), 100.0);
        assert_eq!(auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 50.0);
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            raw in proptest::collection::vec((0u8..6, 0u8..2), 2..100)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 * 0.25).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, y)| *y).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc_pairs(&scores, &labels));
        }
    }

    #[test]
    fn forgetting_matches_reported_rows() {
        let af = average_forgetting(&[97.68], &[95.90]).unwrap();
        assert!((af - 1.78).abs() < 0.01);
        let af = average_forgetting(&[97.68, 90.39], &[93.52, 88.83]).unwrap();
        assert!((af - 2.86).abs() < 0.01);
        let af = average_forgetting(&[97.68, 90.39, 97.69], &[92.90, 87.36, 93.26]).unwrap();
        assert!((af - 4.08).abs() < 0.01);
        assert_eq!(average_forgetting(&[80.0, 70.0], &[80.0, 70.0]).unwrap(), 0.0);
        assert!(average_forgetting(&[], &[]).is_err());
    }

    #[test]
    fn matrix_forgetting_and_csv() {
        let mut m = ScoreMatrix::new();
        m.push_row(vec![97.68], vec![99.0]).unwrap();
        m.push_row(vec![93.52, 90.39], vec![98.0, 95.0]).unwrap();
        m.push_row(vec![92.90, 88.83, 97.69], vec![97.0, 94.0, 99.5]).unwrap();
        assert!(m.push_row(vec![1.0], vec![1.0]).is_err());
        assert!(m.forgetting(Metric::Acc, 1).is_err());
        let af2 = m.forgetting(Metric::Acc, 2).unwrap();
        assert!((af2 - (97.68 - 93.52)).abs() < 1e-12);
        let af3 = m.forgetting(Metric::Acc, 3).unwrap();
        assert!((af3 - ((97.68 - 92.90) + (90.39 - 88.83)) / 2.0).abs() < 1e-12);
        assert!((m.average(Metric::Auc, 2).unwrap() - 96.5).abs() < 1e-12);

        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(ScoreMatrix::parse_csv(&text).unwrap(), m);
        let cut: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(ScoreMatrix::parse_csv(&cut).is_err());
        assert!(ScoreMatrix::parse_csv("train_step,eval_task,acc,auc\n1,1,101,5\n").is_err());
    }
}
