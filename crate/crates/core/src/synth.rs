//! Random balanced networks for property tests and timing runs.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Branch, Bus, PowerNetwork};
use crate::netflow::{build_flow, Ordering};

/// Connected network with `buses` buses: a random spanning tree plus up to
/// `extra` chords. Injections and ratings are whole MW so sums are exact.
pub fn random_network(seed: u64, buses: usize, extra: usize) -> PowerNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = buses.max(2);
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    for i in 2..=n as u32 {
        let j = rng.random_range(1..i);
        edges.insert((j, i));
    }
    for _ in 0..extra {
        let a = rng.random_range(1..=n as u32);
        let b = rng.random_range(1..=n as u32);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let mut gen = vec![0.0; n];
    let mut load = vec![0.0; n];
    for i in 0..n {
        if rng.random_bool(0.35) {
            gen[i] = f64::from(rng.random_range(10..120u32));
        } else {
            load[i] = f64::from(rng.random_range(0..80u32));
        }
    }
    let (g, l): (f64, f64) = (gen.iter().sum(), load.iter().sum());
    if g < l {
        let i = gen.iter().position(|x| *x > 0.0).unwrap_or(0);
        gen[i] += l - g;
    } else {
        let i = load.iter().position(|x| *x > 0.0).unwrap_or(n - 1);
        load[i] += g - l;
    }
    let buses = (0..n).map(|i| Bus::new(i as u32 + 1, gen[i], load[i])).collect();
    let branches = edges
        .into_iter()
        .map(|(a, b)| {
            let rating = f64::from(rng.random_range(20..200u32));
            let x = f64::from(rng.random_range(1..20u32)) / 100.0;
            Branch::new(format!("{a}-{b}"), a, b, rating).with_reactance(x)
        })
        .collect();
    PowerNetwork::from_parts(format!("random-{seed}"), 100.0, buses, branches)
}

/// Like [`random_network`] but retries seeds until the base flow exists.
/// Returns the seed actually used.
pub fn random_feasible(seed: u64, buses: usize, extra: usize) -> (u64, PowerNetwork) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut s = seed;
    loop {
        let net = random_network(s, buses, extra);
        if build_flow(&net, Ordering::Deterministic).is_ok() {
            return (s, net);
        }
        s = rng.random();
    }
}

/// Large meshed case: a ring of `buses` buses plus local chords up to
/// `branches` branches total. Every tenth bus generates.
pub fn mesh(seed: u64, buses: usize, branches: usize) -> PowerNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = buses.max(3) as u32;
    let mut edges: BTreeSet<(u32, u32)> = (1..=n).map(|i| (i.min(i % n + 1), i.max(i % n + 1))).collect();
    while edges.len() < branches {
        let a = rng.random_range(1..=n);
        let b = (a - 1 + rng.random_range(2..=25)) % n + 1;
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let mut bus_list: Vec<Bus> = (1..=n)
        .map(|i| Bus::new(i, 0.0, f64::from(rng.random_range(5..30u32))))
        .collect();
    let total: f64 = bus_list.iter().map(|b| b.load_mw).sum();
    let gens: Vec<usize> = (0..n as usize).step_by(10).collect();
    let share = total / gens.len() as f64;
    for i in &gens {
        bus_list[*i].gen_mw = share;
    }
    let placed: f64 = gens.iter().map(|i| bus_list[*i].gen_mw).sum();
    bus_list[gens[0]].gen_mw += total - placed;
    let branch_list = edges
        .into_iter()
        .map(|(a, b)| {
            let rating = f64::from(rng.random_range(60..300u32));
            let x = f64::from(rng.random_range(2..30u32)) / 100.0;
            Branch::new(format!("{a}-{b}"), a, b, rating).with_reactance(x)
        })
        .collect();
    PowerNetwork::from_parts(format!("mesh-{n}"), 100.0, bus_list, branch_list)
}

/// Planar meshed case: buses on a square lattice with random links dropped
/// until `branches` remain. Every bus keeps at least two links and the
/// lattice stays connected. Every ninth bus, spread evenly, generates.
pub fn grid(seed: u64, buses: usize, branches: usize) -> PowerNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = buses.max(4);
    let w = (n as f64).sqrt().ceil() as usize;
    let mut links: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 0..n {
        if i % w + 1 < w && i + 1 < n {
            links.insert((i, i + 1));
        }
        if i + w < n {
            links.insert((i, i + w));
        }
    }
    let mut degree = vec![0usize; n];
    for (a, b) in &links {
        degree[*a] += 1;
        degree[*b] += 1;
    }
    let mut order: Vec<(usize, usize)> = links.iter().copied().collect();
    order.shuffle(&mut rng);
    for (a, b) in order {
        if links.len() <= branches {
            break;
        }
        if degree[a] <= 2 || degree[b] <= 2 {
            continue;
        }
        links.remove(&(a, b));
        if connected(n, &links) {
            degree[a] -= 1;
            degree[b] -= 1;
        } else {
            links.insert((a, b));
        }
    }

    let mut bus_list: Vec<Bus> = (1..=n as u32)
        .map(|i| Bus::new(i, 0.0, f64::from(rng.random_range(5..30u32))))
        .collect();
    let total: f64 = bus_list.iter().map(|b| b.load_mw).sum();
    let gens: Vec<usize> = (0..n).filter(|i| i % w % 3 == 1 && i / w % 3 == 1).collect();
    let share = (total / gens.len() as f64).floor();
    for i in &gens {
        bus_list[*i].gen_mw = share;
    }
    bus_list[gens[0]].gen_mw += total - share * gens.len() as f64;
    let branch_list = links
        .into_iter()
        .map(|(a, b)| {
            let rating = f64::from(rng.random_range(100..400u32));
            let x = f64::from(rng.random_range(2..30u32)) / 100.0;
            Branch::new(format!("{}-{}", a + 1, b + 1), a as u32 + 1, b as u32 + 1, rating).with_reactance(x)
        })
        .collect();
    PowerNetwork::from_parts(format!("grid-{n}"), 100.0, bus_list, branch_list)
}

fn connected(n: usize, links: &BTreeSet<(usize, usize)>) -> bool {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in links {
        adj[*a].push(*b);
        adj[*b].push(*a);
    }
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut stack = vec![0];
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for v in &adj[u] {
            if !seen[*v] {
                seen[*v] = true;
                count += 1;
                stack.push(*v);
            }
        }
    }
    count == n
}
