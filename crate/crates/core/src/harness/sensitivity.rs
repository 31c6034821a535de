use serde::Serialize;

use crate::error::Result;
use crate::fusion::FusionModel;
use crate::treebank::{corrupt_tree, uas, Sentence};

use super::metrics::evaluate;
use super::{stream_rng, CORRUPT_STREAM};

/// Ordinary least squares `y = slope * x + intercept`; `None` when all
/// `x` are equal.
pub fn ols(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-12 * n {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// One sentence under one corruption rate. Scores are percentages.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub condition: String,
    pub rate: f64,
    pub sentence_id: usize,
    pub uas: f64,
    pub f1_ref: f64,
    pub f1_noisy: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fit {
    pub condition: String,
    /// `None` for the fit pooled over every rate.
    pub rate: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub n: usize,
}

impl Fit {
    fn new(condition: &str, rate: Option<f64>, points: &[(f64, f64)]) -> Self {
        let fit = ols(points);
        Self {
            condition: condition.to_string(),
            rate,
            slope: fit.map(|f| f.0),
            intercept: fit.map(|f| f.1),
            n: points.len(),
        }
    }

    pub fn flag(&self) -> &'static str {
        if self.slope.is_some() {
            "ok"
        } else {
            "degenerate"
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub rows: Vec<SensitivityRow>,
    pub fits: Vec<Fit>,
}

impl SensitivityReport {
    pub fn pooled(&self, condition: &str) -> Option<&Fit> {
        self.fits.iter().find(|f| f.condition == condition && f.rate.is_none())
    }

    /// `condition,rate,sentence_id,uas,f1_ref,f1_noisy,delta`
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("condition,rate,sentence_id,uas,f1_ref,f1_noisy,delta\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.condition, r.rate, r.sentence_id, r.uas, r.f1_ref, r.f1_noisy, r.delta
            ));
        }
        out
    }

    /// `condition,rate,slope,intercept,n,flag`; the pooled fit has rate `all`.
    pub fn fits_csv(&self) -> String {
        let mut out = String::from("condition,rate,slope,intercept,n,flag\n");
        let num = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for f in &self.fits {
            let rate = f.rate.map_or("all".to_string(), |r| r.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                f.condition,
                rate,
                num(f.slope),
                num(f.intercept),
                f.n,
                f.flag()
            ));
        }
        out
    }
}

/// Corrupts every tree at `rate` with the corruption stream of `seed`.
/// Each rate gets its own sub-stream, so grids can be extended without
/// changing earlier corruptions.
pub fn corrupt_dataset(data: &[Sentence], rate: f64, seed: u64) -> Result<Vec<Sentence>> {
    let mut rng = stream_rng(seed, CORRUPT_STREAM, rate.to_bits());
    data.iter()
        .map(|s| Ok(s.with_tree(corrupt_tree(&s.tree, rate, &mut rng)?.tree)?))
        .collect()
}

/// Evaluates each model with gold trees and with trees corrupted at every
/// rate of the grid, pairing per-sentence UAS with the F1 change. Both
/// models see the same corrupted trees.
pub fn sensitivity_experiment(
    models: &[(&str, &FusionModel)],
    data: &[Sentence],
    rates: &[f64],
    seed: u64,
) -> Result<SensitivityReport> {
    let corrupted: Vec<Vec<Sentence>> = rates
        .iter()
        .map(|&r| corrupt_dataset(data, r, seed))
        .collect::<Result<_>>()?;
    let mut report = SensitivityReport::default();
    for &(condition, model) in models {
        let reference = evaluate(model, data)?.per_sentence_f1;
        let mut pooled = Vec::new();
        for (&rate, noisy) in rates.iter().zip(&corrupted) {
            let scores = evaluate(model, noisy)?.per_sentence_f1;
            let mut points = Vec::with_capacity(data.len());
            for (i, (gold, bad)) in data.iter().zip(noisy).enumerate() {
                let u = 100.0 * uas(&bad.tree, &gold.tree)?;
                let (f_ref, f_noisy) = (100.0 * reference[i], 100.0 * scores[i]);
                points.push((u, f_noisy - f_ref));
                report.rows.push(SensitivityRow {
                    condition: condition.to_string(),
                    rate,
                    sentence_id: i,
                    uas: u,
                    f1_ref: f_ref,
                    f1_noisy: f_noisy,
                    delta: f_noisy - f_ref,
                });
            }
            report.fits.push(Fit::new(condition, Some(rate), &points));
            pooled.extend(points);
        }
        report.fits.push(Fit::new(condition, None, &pooled));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_fit() {
        let (slope, intercept) = ols(&[(80.0, -2.0), (90.0, -1.0), (100.0, 0.0)]).unwrap();
        assert!((slope - 0.1).abs() < 1e-12);
        assert!((intercept + 10.0).abs() < 1e-9);
    }

    #[test]
    fn constant_x_is_degenerate() {
        assert!(ols(&[(100.0, 0.0), (100.0, 1.0)]).is_none());
        assert!(ols(&[]).is_none());
        let f = Fit::new("c", Some(0.0), &[(100.0, 0.0)]);
        assert_eq!(f.flag(), "degenerate");
    }

    #[test]
    fn csv_headers() {
        let r = SensitivityReport {
            rows: vec![],
            fits: vec![Fit::new("gold_trained", None, &[(1.0, 1.0), (2.0, 3.0)])],
        };
        assert!(r.metrics_csv().starts_with("condition,rate,sentence_id,uas,f1_ref,f1_noisy,delta\n"));
        assert_eq!(
            r.fits_csv(),
            "condition,rate,slope,intercept,n,flag\ngold_trained,all,2.000000,-1.000000,2,ok\n"
        );
    }
}
