mod common;

use common::*;
use gridcuts_core::oracles::{dc_post_contingency_overloads, dc_solve, default_slack, OracleError};
use gridcuts_core::{build_flow, fixtures, ft_edge, BusId, Ordering, PowerNetwork};

fn dc_overloads(net: &PowerNetwork, outage: &str) -> Vec<(gridcuts_core::BranchId, f64)> {
    dc_post_contingency_overloads(net, default_slack(net).unwrap(), &id(outage)).unwrap()
}

#[test]
fn dc_flags_what_ft_misses() {
    let net = fixtures::case("figure8_s2").unwrap();
    let st = build_flow(&net, Ordering::Deterministic).unwrap();
    let ft = ft_edge(&st, &id("1-2")).unwrap();
    assert!(!ft.special, "margin {}", ft.margin_mw);
    let over = dc_overloads(&net, "1-2");
    let names: Vec<&str> = over.iter().map(|(b, _)| b.as_str()).collect();
    assert!(!over.is_empty());
    // Only the low-impedance route overloads.
    assert!(names.iter().all(|b| ["1-3", "3-4", "4-2"].contains(b)), "{names:?}");
}

#[test]
fn both_flag_scenario_one() {
    let net = fixtures::case("figure8_s1").unwrap();
    let st = build_flow(&net, Ordering::Deterministic).unwrap();
    let ft = ft_edge(&st, &id("1-2")).unwrap();
    assert!(ft.special);
    assert_eq!(ft.margin_mw, -10.0);
    assert!(!dc_overloads(&net, "1-2").is_empty());
}

#[test]
fn fixture9_dc_cut_flows() {
    let net = fixtures::case("fixture9").unwrap();
    let sol = dc_solve(&net, BusId(8)).unwrap();
    assert!(sol.kcl_error(&net) <= 1e-6);
    for (b, want) in [("4-1", 172.51), ("9-2", 121.96), ("9-3", 86.39)] {
        let got = sol.flows[&id(b)];
        assert!((got - want).abs() <= 0.05, "{b}: {got}");
    }
    let total: f64 = ["4-1", "9-2", "9-3"].iter().map(|b| sol.flows[&id(b)]).sum();
    assert!((total - 380.86).abs() <= 1e-6);
    let over = dc_overloads(&net, "4-1");
    assert!(
        over.iter()
            .any(|(b, mw)| b.as_str() == "6-7" && (mw - 35.86).abs() <= 1e-6),
        "{over:?}"
    );
}

/// DC flows obey the same cut property as network flows.
#[test]
fn dc_cut_transfer_equals_injections() {
    for seed in 0..40u64 {
        let net = random_case(seed, 4 + (seed % 8) as usize);
        let sol = dc_solve(&net, default_slack(&net).unwrap()).unwrap();
        let n = net.buses().len();
        for m in 1..(1u64 << n) - 1 {
            let c1 = side(&net, m);
            let moved: f64 = net
                .cut_between(&c1)
                .unwrap()
                .iter()
                .map(|b| {
                    let br = net.branch(b).unwrap();
                    let f = sol.flows[b];
                    if c1.contains(&br.from_bus) {
                        f
                    } else {
                        -f
                    }
                })
                .sum();
            assert!(
                (moved - net.cluster_injection(&c1)).abs() <= 1e-6,
                "{} {m:b}",
                net.name()
            );
        }
    }
}

#[test]
fn ample_capacity_has_no_overloads() {
    let net = fixtures::case("figure8_s1").unwrap();
    let roomy = net
        .with_ratings(&net.branches().iter().map(|b| (b.id.clone(), 1000.0)).collect())
        .unwrap();
    for b in roomy.branches() {
        assert!(dc_overloads(&roomy, b.id.as_str()).is_empty());
    }
}

#[test]
fn bridge_outage_reports_islanding() {
    let net = fixtures::case("fixture9").unwrap();
    let spur = PowerNetwork::from_parts(
        "spur",
        100.0,
        net.buses()
            .iter()
            .cloned()
            .chain([gridcuts_core::Bus::new(10, 0.0, 0.0)])
            .collect(),
        net.branches()
            .iter()
            .cloned()
            .chain([gridcuts_core::Branch::new("7-10", 7, 10, 50.0).with_reactance(0.1)])
            .collect(),
    );
    let err = dc_post_contingency_overloads(&spur, BusId(8), &id("7-10")).unwrap_err();
    assert!(matches!(err, OracleError::Islanding { .. }), "{err:?}");
}
