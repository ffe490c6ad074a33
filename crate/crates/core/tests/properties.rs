mod common;

use common::oracle::chi2_sf;
use common::{close, effects, random_dataset, Shape, SMALL};
use proptest::prelude::*;
use roi_meta::meta::meta_analyze;
use roi_meta::preprocess::{qualify, QualificationConfig};
use roi_meta::subgroup::{partition_by_spend, subgroup_analysis, TauMode};
use roi_meta::{CampaignExperiment, ExperimentDataset, Money, PartMeasurement};

const MESSY: Shape = Shape {
    campaigns: (1, 12),
    parts: (1, 12),
    messy: true,
};

fn scale_values(c: &CampaignExperiment, k: i64) -> CampaignExperiment {
    let scale = |parts: &[PartMeasurement]| {
        parts
            .iter()
            .map(|p| {
                PartMeasurement::new(
                    p.campaign_id.clone(),
                    p.arm,
                    p.part_id,
                    p.impressions,
                    p.spend,
                    Money::from_micros(p.value.micros() * k),
                )
                .unwrap()
            })
            .collect()
    };
    CampaignExperiment::new(c.campaign_id.clone(), scale(&c.parts_a), scale(&c.parts_b)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arm_swap_is_antisymmetric(seed in any::<u64>()) {
        let ds = random_dataset(seed, SMALL);
        let m = meta_analyze(&effects(&ds), 0.95).unwrap();
        let s = meta_analyze(&effects(&ds.swapped()), 0.95).unwrap();
        prop_assert!(close(m.random.mu_star, -s.random.mu_star, 1e-12));
        prop_assert!(close(m.significance.z, -s.significance.z, 1e-9));
        prop_assert!(close(m.significance.p_z, s.significance.p_z, 1e-12));
        prop_assert!(close(m.heterogeneity.q, s.heterogeneity.q, 1e-9));
        prop_assert!(close(m.heterogeneity.tau2, s.heterogeneity.tau2, 1e-12));
        prop_assert_eq!(m.significance.significant, s.significance.significant);
    }

    #[test]
    fn campaign_roi_scale_leaves_effect_unchanged(seed in any::<u64>(), k in 2i64..50) {
        let ds = random_dataset(seed, SMALL);
        let scaled = ExperimentDataset::new(ds.campaigns.iter().map(|c| scale_values(c, k)).collect()).unwrap();
        for (a, b) in effects(&ds).iter().zip(&effects(&scaled)) {
            prop_assert!(close(a.d, b.d, 1e-9 * (1.0 + a.d.abs())), "{} vs {}", a.d, b.d);
            prop_assert!(close(a.v, b.v, 1e-9 * a.v));
        }
    }

    #[test]
    fn variance_components_are_ordered(seed in any::<u64>()) {
        let m = meta_analyze(&effects(&random_dataset(seed, SMALL)), 0.95).unwrap();
        prop_assert!(m.heterogeneity.tau2 >= 0.0);
        prop_assert!(m.heterogeneity.q >= 0.0);
        prop_assert!(m.random.nu_star >= m.fixed.nu * (1.0 - 1e-12));
    }

    #[test]
    fn interval_agrees_with_significance(seed in any::<u64>(), level in 0.5f64..0.999) {
        let m = meta_analyze(&effects(&random_dataset(seed, SMALL)), level).unwrap();
        let s = m.significance;
        let excludes_zero = s.ci_low > 0.0 || s.ci_high < 0.0;
        let margin = (s.ci_low.abs().min(s.ci_high.abs())) / m.random.nu_star.sqrt();
        if margin > 1e-9 {
            prop_assert_eq!(s.significant, excludes_zero);
        }
        prop_assert!(s.ci_low <= m.random.mu_star && m.random.mu_star <= s.ci_high);
    }

    #[test]
    fn qualification_is_idempotent_and_conserving(seed in any::<u64>()) {
        let ds = random_dataset(seed, MESSY);
        let cfg = QualificationConfig::default();
        let first = qualify(&ds, &cfg);
        prop_assert_eq!(
            first.qualified.part_count() + first.excluded_parts.len(),
            ds.part_count()
        );
        prop_assert_eq!(
            first.qualified.n() + first.disqualified_campaigns.len(),
            ds.n()
        );
        let second = qualify(&first.qualified, &cfg);
        prop_assert_eq!(&second.qualified, &first.qualified);
        prop_assert!(second.excluded_parts.is_empty());
        prop_assert!(second.disqualified_campaigns.is_empty());
    }

    #[test]
    fn stricter_thresholds_never_keep_more(seed in any::<u64>(), lo in 0u64..400, extra in 0u64..400) {
        let ds = random_dataset(seed, MESSY);
        let loose = QualificationConfig { min_impressions_per_part: lo, ..Default::default() };
        let strict = QualificationConfig { min_impressions_per_part: lo + extra, ..Default::default() };
        let a = qualify(&ds, &loose);
        let b = qualify(&ds, &strict);
        prop_assert!(b.qualified.n() <= a.qualified.n());
        for c in &b.qualified.campaigns {
            prop_assert!(a.qualified.campaign(&c.campaign_id).is_some());
        }
    }

    #[test]
    fn subgroup_q_decomposes(seed in any::<u64>()) {
        let shape = Shape { campaigns: (3, 15), ..SMALL };
        let ds = random_dataset(seed, shape);
        let es = effects(&ds);
        let m = meta_analyze(&es, 0.95).unwrap();
        let partition = partition_by_spend(&ds, &[1.0 / 3.0; 3]).unwrap();
        let r = subgroup_analysis(&es, m.heterogeneity.tau2, &partition, 0.95, TauMode::Global).unwrap();
        prop_assert!(close(r.q_star_total, r.q_within + r.q_between, 1e-9));
        let between: f64 = r.summaries.iter().map(|s| (s.mu_star_k - r.mu_star).powi(2) / s.nu_star_k).sum();
        prop_assert!(close(r.q_between, between, 1e-9), "{} vs {}", r.q_between, between);
        prop_assert!(r.q_between >= -1e-9 && r.q_within >= 0.0);
        if r.df_between > 0 {
            prop_assert!(close(r.p_between, chi2_sf(r.q_between.max(0.0), r.df_between), 1e-9));
        }
    }
}
