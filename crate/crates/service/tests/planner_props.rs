use comfort_service::planner::clamp_comfort;
use comfort_service::{plan_actuation, Actuator, ActuatorCatalog};
use proptest::prelude::*;

fn actuator(i: usize) -> impl Strategy<Value = Actuator> {
    (1usize..=5)
        .prop_flat_map(|levels| {
            (
                prop::collection::vec(0.0f64..50.0, levels - 1),
                prop::collection::vec(0.0f64..2.0, levels - 1),
                any::<bool>(),
            )
        })
        .prop_map(move |(dp, dd, cooling)| {
            let sign = if cooling { -1.0 } else { 1.0 };
            let mut power_w = vec![0.0];
            let mut comfort_delta = vec![0.0];
            for (p, d) in dp.iter().zip(&dd) {
                power_w.push(power_w.last().unwrap() + p.round());
                comfort_delta.push(comfort_delta.last().unwrap() + sign * (d * 4.0).round() / 4.0);
            }
            Actuator {
                name: format!("A{i}"),
                power_w,
                comfort_delta,
            }
        })
}

fn catalog() -> impl Strategy<Value = ActuatorCatalog> {
    (1usize..=4)
        .prop_flat_map(|n| (0..n).map(actuator).collect::<Vec<_>>())
        .prop_map(|actuators| ActuatorCatalog { actuators })
}

/// Every level vector, with its power and clamped comfort.
fn all_plans(current: f64, cat: &ActuatorCatalog) -> Vec<(Vec<usize>, f64, f64)> {
    let mut plans = vec![(Vec::new(), 0.0, 0.0)];
    for a in &cat.actuators {
        let mut next = Vec::new();
        for (levels, p, d) in &plans {
            for l in 0..a.levels() {
                let mut v: Vec<usize> = levels.clone();
                v.push(l);
                next.push((v, p + a.power_w[l], d + a.comfort_delta[l]));
            }
        }
        plans = next;
    }
    plans.into_iter().map(|(v, p, d)| (v, p, clamp_comfort(current + d))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn plan_power_equals_brute_force_minimum(cat in catalog(), current in 1.0f64..10.0, target in 1.0f64..11.0) {
        let plan = plan_actuation(current, target, &cat).unwrap();
        let plans = all_plans(current, &cat);
        let feasible: Vec<_> = plans.iter().filter(|p| p.2 >= target).collect();
        let levels: Vec<usize> = plan.settings.iter().map(|s| s.level).collect();
        let chosen = plans.iter().find(|p| p.0 == levels).unwrap();
        prop_assert_eq!(chosen.1, plan.total_power_w);
        prop_assert_eq!(chosen.2, plan.predicted_comfort_after);
        if feasible.is_empty() {
            prop_assert!(plan.target_unmet);
            let best = plans.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(plan.predicted_comfort_after, best);
        } else {
            prop_assert!(!plan.target_unmet);
            let min = feasible.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(plan.total_power_w, min);
            let fewest = feasible
                .iter()
                .filter(|p| p.1 == min)
                .map(|p| p.0.iter().filter(|&&l| l > 0).count())
                .min()
                .unwrap();
            prop_assert_eq!(levels.iter().filter(|&&l| l > 0).count(), fewest);
        }
    }
}
