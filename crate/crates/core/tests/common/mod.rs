#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roi_meta::meta::{campaign_effects, EffectSize, VarianceFormula};
use roi_meta::{Arm, CampaignExperiment, ExperimentDataset, Money, PartMeasurement};

/// Shape of a random dataset.
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub campaigns: (usize, usize),
    pub parts: (usize, usize),
    /// Allow low-impression and zero-spend parts.
    pub messy: bool,
}

pub const SMALL: Shape = Shape {
    campaigns: (1, 10),
    parts: (2, 6),
    messy: false,
};

fn part(
    rng: &mut ChaCha8Rng,
    id: &str,
    arm: Arm,
    part_id: u32,
    scale: i64,
    messy: bool,
) -> PartMeasurement {
    let impressions = if messy && rng.random_bool(0.1) {
        rng.random_range(0..100)
    } else {
        rng.random_range(100..5000)
    };
    let spend = if messy && rng.random_bool(0.05) {
        0
    } else {
        rng.random_range(1..=1000) * scale
    };
    let roi: f64 = rng.random_range(0.2..3.0);
    let value = (spend as f64 * roi).round() as i64;
    PartMeasurement::new(
        id,
        arm,
        part_id,
        impressions,
        Money::from_micros(spend),
        Money::from_micros(value),
    )
    .unwrap()
}

pub fn random_dataset(seed: u64, shape: Shape) -> ExperimentDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(shape.campaigns.0..=shape.campaigns.1);
    let campaigns = (0..n)
        .map(|i| {
            let id = format!("c{i:02}");
            // Campaign budgets span three orders of magnitude.
            let scale = 10i64.pow(rng.random_range(3..=6));
            let m_a = rng.random_range(shape.parts.0..=shape.parts.1);
            let m_b = rng.random_range(shape.parts.0..=shape.parts.1);
            let a = (0..m_a)
                .map(|j| part(&mut rng, &id, Arm::Control, j as u32, scale, shape.messy))
                .collect();
            let b = (0..m_b)
                .map(|j| part(&mut rng, &id, Arm::Treatment, j as u32, scale, shape.messy))
                .collect();
            CampaignExperiment::new(id, a, b).unwrap()
        })
        .collect();
    ExperimentDataset::new(campaigns).unwrap()
}

pub fn effects(ds: &ExperimentDataset) -> Vec<EffectSize> {
    let (effects, excluded) = campaign_effects(ds, VarianceFormula::Exact);
    assert!(excluded.is_empty(), "{excluded:?}");
    effects
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Brute-force reference for the statistics, sharing no code with the engine.
pub mod oracle {
    use super::*;
    use std::f64::consts::PI;

    pub fn density(t: f64) -> f64 {
        (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
    }

    /// Upper normal tail by composite Simpson integration of the density.
    pub fn upper_tail(z: f64) -> f64 {
        if z < 0.0 {
            return 1.0 - upper_tail(-z);
        }
        let b = z.min(12.0);
        let n = 4000;
        let h = b / n as f64;
        let mut s = density(0.0) + density(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * density(i as f64 * h);
        }
        (0.5 - s * h / 3.0).max(0.0)
    }

    /// Closed-form χ² survival function for integer degrees of freedom.
    pub fn chi2_sf(x: f64, k: usize) -> f64 {
        if k.is_multiple_of(2) {
            let mut term = 1.0;
            let mut sum = 1.0;
            for j in 1..k / 2 {
                term *= x / 2.0 / j as f64;
                sum += term;
            }
            (-x / 2.0).exp() * sum
        } else {
            let r = x.sqrt();
            let mut sum = 0.0;
            let mut odd_product = 1.0;
            for j in 1..=(k - 1) / 2 {
                odd_product *= (2 * j - 1) as f64;
                sum += x.powf(j as f64 - 0.5) / odd_product;
            }
            2.0 * upper_tail(r) + 2.0 * density(r) * sum
        }
    }

    #[derive(Debug, Clone)]
    pub struct Reference {
        pub d: Vec<f64>,
        pub v: Vec<f64>,
        pub mu: f64,
        pub nu: f64,
        pub q: f64,
        pub p_q: f64,
        pub tau2: f64,
        pub mu_star: f64,
        pub nu_star: f64,
        pub z: f64,
        pub p_z: f64,
    }

    fn rois(parts: &[PartMeasurement]) -> Vec<f64> {
        parts
            .iter()
            .map(|p| p.value.micros() as f64 / p.spend.micros() as f64)
            .collect()
    }

    fn moments(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let ss: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        (m, ss / (n - 1.0))
    }

    pub fn meta(ds: &ExperimentDataset) -> Reference {
        let mut d = Vec::new();
        let mut v = Vec::new();
        for c in &ds.campaigns {
            let (ma, mb) = (c.parts_a.len() as f64, c.parts_b.len() as f64);
            let (mean_a, var_a) = moments(&rois(&c.parts_a));
            let (mean_b, var_b) = moments(&rois(&c.parts_b));
            let df = ma + mb - 2.0;
            let sp = (((ma - 1.0) * var_a + (mb - 1.0) * var_b) / df).sqrt();
            let cf = 1.0 - 3.0 / (4.0 * df - 1.0);
            let di = cf * (mean_b - mean_a) / sp;
            d.push(di);
            v.push(cf * cf * ((ma + mb) / (ma * mb) + di * di / (ma + mb)));
        }
        let n = d.len();
        let w: Vec<f64> = v.iter().map(|v| 1.0 / v).collect();
        let sw: f64 = w.iter().sum();
        let mu = w.iter().zip(&d).map(|(w, d)| w * d).sum::<f64>() / sw;
        let nu = 1.0 / sw;
        let (q, p_q, tau2) = if n == 1 {
            (0.0, 1.0, 0.0)
        } else {
            let q: f64 = w.iter().zip(&d).map(|(w, d)| w * (d - mu).powi(2)).sum();
            let sw2: f64 = w.iter().map(|w| w * w).sum();
            let lambda = sw - sw2 / sw;
            let df = (n - 1) as f64;
            (q, chi2_sf(q, n - 1), ((q - df) / lambda).max(0.0))
        };
        let ws: Vec<f64> = v.iter().map(|v| 1.0 / (v + tau2)).collect();
        let sws: f64 = ws.iter().sum();
        let mu_star = ws.iter().zip(&d).map(|(w, d)| w * d).sum::<f64>() / sws;
        let nu_star = 1.0 / sws;
        let z = mu_star / nu_star.sqrt();
        Reference {
            d,
            v,
            mu,
            nu,
            q,
            p_q,
            tau2,
            mu_star,
            nu_star,
            z,
            p_z: upper_tail(z.abs()),
        }
    }
}
