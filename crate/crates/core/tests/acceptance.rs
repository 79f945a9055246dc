//! Acceptance suite. Each test prints one `A<n> PASS|FAIL` line to stderr, uncaptured, and
//! then asserts the same verdict.

use std::collections::BTreeMap;
use std::io::Write as _;

use mpabr_core::branch_point::{NrTimeout, Variant};
use mpabr_core::codec::{crc10, decode_cell, encode_cell, CellHeader, WireFields, CELL_LEN, HEADER_LEN};
use mpabr_core::engine::{compute_ratios, convergence_time, simulate, RunResult, SimOptions, Simulation};
use mpabr_core::fairness::{allocate, progressive_fill, verify_maxmin, Definition, FillProblem, OracleInput};
use mpabr_core::merge_point::Subdivision;
use mpabr_core::model::{Direction, SourceId};
use mpabr_core::report::{compare, oracle_input};
use mpabr_core::scenario::{Compiled, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const S1: &str = include_str!("../../../scenarios/s1.scn");
const S1_HETERO: &str = include_str!("../../../scenarios/s1-hetero.scn");
const S2: &str = include_str!("../../../scenarios/s2.scn");
const S3: &str = include_str!("../../../scenarios/s3.scn");
const S4: &str = include_str!("../../../scenarios/s4.scn");
const S4_WATERFILL: &str = include_str!("../../../scenarios/s4-waterfill.scn");
const S5: &str = include_str!("../../../scenarios/s5.scn");
const S6: &str = include_str!("../../../scenarios/s6.scn");
const S7: &str = include_str!("../../../scenarios/s7.scn");

fn verdict(id: &str, pass: bool, detail: String) {
    let line = format!("{id} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "{id} failed: {detail}");
}

fn scenario(text: &str) -> Scenario {
    Scenario::parse(text).expect("canonical scenario parses")
}

fn with_variant(text: &str, v: Variant) -> Scenario {
    let mut sc = scenario(text);
    sc.defaults.variant = v;
    sc
}

fn run(sc: &Scenario) -> (Compiled, RunResult) {
    let c = sc.compile().expect("canonical scenario compiles");
    let r = simulate(&c, SimOptions::default());
    (c, r)
}

fn root_ratio(r: &RunResult, s: usize) -> f64 {
    compute_ratios(&r.metrics, r.metrics.window).per_source[s].unwrap_or(f64::NAN)
}

fn total_noise(r: &RunResult) -> u64 {
    r.branch_stats.values().map(|s| s.noise_events).sum()
}

/// Noise events inside the measurement window, from the sampled cumulative counters.
fn window_noise(r: &RunResult) -> f64 {
    let (w0, w1) = r.metrics.window;
    r.metrics
        .series
        .names()
        .iter()
        .filter(|n| n.ends_with(".noise_events"))
        .map(|n| {
            let s = r.metrics.series.get(n).unwrap();
            let at = |t: f64| s.iter().rev().find(|p| p.0 <= t).map_or(0.0, |p| p.1);
            at(w1) - at(w0)
        })
        .sum()
}

/// Round-trip time of a source over its longest path: propagation plus one serialization per
/// hop, both ways.
fn rtt(c: &Compiled, s: SourceId) -> f64 {
    let m = &c.model;
    let vc = m.source(s).vc;
    let topo = m.topology(vc);
    topo.destinations()
        .filter_map(|d| topo.path(s, d))
        .map(|p| {
            p.iter()
                .map(|&l| {
                    let link = m.link(l);
                    link.propagation_delay + 1.0 / link.capacity
                })
                .sum::<f64>()
                * 2.0
        })
        .fold(0.0, f64::max)
}

#[test]
fn a01_implosion_control() {
    let mut ratios = BTreeMap::new();
    for v in [Variant::PassThrough, Variant::NoWait, Variant::WaitAll, Variant::WaitAllFastOverload] {
        let (_, r) = run(&with_variant(S1, v));
        ratios.insert(v.as_str(), root_ratio(&r, 0));
    }
    let pt = ratios["passthrough"];
    let pass = (pt - 8.0).abs() <= 0.5
        && ["v1", "v2", "v3"].iter().all(|v| ratios[v] <= 1.0)
        && ratios["v2"] >= 0.9;
    let detail = ratios
        .iter()
        .map(|(k, v)| format!("{k}={v:.3}"))
        .collect::<Vec<_>>()
        .join(" ");
    verdict("A1", pass, format!("root BRM:FRM ratio on S1: {detail}"));
}

#[test]
fn a02_noise_dichotomy() {
    let (_, v2) = run(&with_variant(S1, Variant::WaitAll));
    let (_, v1) = run(&with_variant(S1_HETERO, Variant::NoWait));
    let (_, v2h) = run(&with_variant(S1_HETERO, Variant::WaitAll));
    let pass = total_noise(&v2) == 0 && total_noise(&v2h) == 0 && total_noise(&v1) > 0;
    verdict(
        "A2",
        pass,
        format!(
            "noise events over the run: S1 v2={} S1-hetero v2={} S1-hetero v1={} (v1 in window: {})",
            total_noise(&v2),
            total_noise(&v2h),
            total_noise(&v1),
            window_noise(&v1)
        ),
    );
}

#[test]
fn a03_min_over_leaves() {
    let sc = with_variant(S2, Variant::WaitAll);
    let (c, r) = run(&sc);
    let rep = compare(&c, &r, Definition::SourceBased, 0.05, c.run.window()).unwrap();
    let row = &rep.rows[0];
    let pass = row.pass && rep.convergence_time.is_some();
    verdict(
        "A3",
        pass,
        format!(
            "S2 throughput {:.1} vs oracle {:.1} (error {:.4}), convergence_time {:?}",
            row.measured, row.oracle, row.relative_error, rep.convergence_time
        ),
    );
}

#[test]
fn a04_oracle_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut certified = 0;
    for _ in 0..200 {
        let nl = rng.gen_range(1..=4);
        let ne = rng.gen_range(1..=6);
        let capacities: Vec<f64> = (0..nl).map(|_| rng.gen_range(1.0..100.0)).collect();
        let usage = (0..ne)
            .map(|_| {
                let mut u: Vec<(usize, f64)> = (0..nl).filter(|_| rng.gen_bool(0.5)).map(|l| (l, 1.0)).collect();
                if u.is_empty() {
                    u.push((rng.gen_range(0..nl), 1.0));
                }
                u
            })
            .collect();
        let p = FillProblem { capacities, usage };
        let rates = progressive_fill(&p).unwrap();
        if verify_maxmin(&p, &rates).is_certified() {
            certified += 1;
        }
    }

    let table = |text: &str| {
        let mut sc = scenario(text);
        for l in &mut sc.links {
            if l.name == "L" {
                l.capacity = 120.0;
            }
        }
        let c = sc.compile().unwrap();
        Definition::ALL
            .iter()
            .map(|&d| allocate(&OracleInput::new(&c.model), d).unwrap().rates)
            .collect::<Vec<_>>()
    };
    let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9);
    let t1 = table(S4);
    let t2 = table(S5);
    let t1_ok = close(&t1[0], &[40.0, 40.0, 40.0])
        && close(&t1[1], &[30.0, 30.0, 60.0])
        && close(&t1[2], &[30.0, 30.0, 60.0])
        && close(&t1[3], &[30.0, 30.0, 60.0]);
    let t2_ok = close(&t2[0], &[40.0, 40.0, 40.0])
        && close(&t2[1], &[30.0, 30.0, 60.0])
        && close(&t2[2], &[40.0, 40.0, 40.0])
        && close(&t2[3], &[30.0, 30.0, 60.0]);

    let p2p = scenario(P2P_ONLY).compile().unwrap();
    let base = allocate(&OracleInput::new(&p2p.model), Definition::SourceBased).unwrap().rates;
    let coincide = Definition::ALL
        .iter()
        .all(|&d| allocate(&OracleInput::new(&p2p.model), d).unwrap().rates == base);

    verdict(
        "A4",
        certified == 200 && t1_ok && t2_ok && coincide,
        format!("certified {certified}/200; T1 {t1:?}; T2 {t2:?}; p2p-only coincide={coincide}"),
    );
}

const P2P_ONLY: &str = "\
[link]
id = l0
from = A
to = B
capacity = 100
[link]
id = l1
from = B
to = C
capacity = 30
[link]
id = l2
from = B
to = D
capacity = 70
[vc]
id = v0
kind = p2p
edges = l0, l1
destinations = C
[vc]
id = v1
kind = p2p
edges = l0, l2
destinations = D
[vc]
id = v2
kind = p2p
edges = l2
destinations = D
[source]
id = s0
vc = v0
node = A
pcr = 1000
[source]
id = s1
vc = v1
node = A
pcr = 1000
[source]
id = s2
vc = v2
node = B
pcr = 1000
";

/// Seconds from `t_change` to the first BRM at the source whose ER is below `below`.
fn first_cut(r: &RunResult, t_change: f64, below: f64) -> Option<f64> {
    r.metrics.sources[0]
        .brm
        .iter()
        .find(|b| b.time >= t_change && b.er < below)
        .map(|b| b.time - t_change)
}

#[test]
fn a05_transient_response() {
    let t_change = 5.0;
    let (c, v2) = run(&with_variant(S3, Variant::WaitAll));
    let (_, v3) = run(&with_variant(S3, Variant::WaitAllFastOverload));
    let target = allocate(&oracle_input(&c), Definition::SourceBased).unwrap().rates[0];
    let before = v2.metrics.series.get("acr.src").unwrap();
    let pre = before.iter().rev().find(|p| p.0 < t_change).unwrap().1;
    let after: Vec<(f64, f64)> = before.iter().copied().filter(|p| p.0 >= t_change).collect();
    let settle = convergence_time(&[&after], &[target], 0.05).map(|t| t - t_change);
    let round_trip = rtt(&c, SourceId(0));
    let within = settle.is_some_and(|s| s <= 50.0 * round_trip);
    let cut2 = first_cut(&v2, t_change, pre * 0.99);
    let cut3 = first_cut(&v3, t_change, pre * 0.99);
    let fast3: u64 = v3.branch_stats.values().map(|s| s.fast_overload).sum();
    let order = matches!((cut2, cut3), (Some(a), Some(b)) if b <= a + 1e-12);

    // Deeper cut: the new ER falls below half the old rate, so the fast path can fire.
    let deep = |v: Variant| {
        let mut sc = with_variant(S3, v);
        if let mpabr_core::scenario::Action::Capacity { value, .. } = &mut sc.events[0].action {
            *value = 1000.0;
        }
        let (_, r) = run(&sc);
        let fast: u64 = r.branch_stats.values().map(|s| s.fast_overload).sum();
        (first_cut(&r, t_change, pre * 0.99), fast)
    };
    let (deep2, _) = deep(Variant::WaitAll);
    let (deep3, deep_fast) = deep(Variant::WaitAllFastOverload);

    verdict(
        "A5",
        within && order,
        format!(
            "S3 v2 settles {:?} s after the step (50 RTT = {:.4} s, target {target}); first cut v2 {cut2:?} v3 {cut3:?} \
             (v3 fast-overload emissions {fast3}); deeper cut to 1000: v2 {deep2:?} v3 {deep3:?} (fast {deep_fast})",
            settle,
            50.0 * round_trip
        ),
    );
}

#[test]
fn a06_nonresponsive_branch() {
    let t_s = 3.0;
    let sc = with_variant(S7, Variant::WaitAll);
    let c = sc.compile().unwrap();
    let mut sim = Simulation::new(&c, SimOptions::default());
    sim.run_until(f64::INFINITY);
    let vc = c.model.vcs()[0].id;
    let parent = c.node_by_name("B3").unwrap();
    let nr = sim.branch_state(vc, parent).unwrap().nr_timeout();
    let r = sim.finish();
    let times: Vec<f64> = r.metrics.sources[0].brm.iter().map(|b| b.time).collect();
    // The stall is the longest gap between BRM arrivals in the second after silencing.
    let mut stall = (t_s, t_s);
    let mut prev = times.iter().copied().filter(|&t| t <= t_s).last().unwrap_or(t_s);
    for &t in times.iter().filter(|&&t| t > t_s && t <= t_s + 1.0) {
        if t - prev > stall.1 - stall.0 {
            stall = (prev, t);
        }
        prev = t;
    }
    let resumed = stall.1 - t_s;
    let rep = compare(&c, &r, Definition::SourceBased, 0.05, c.run.window()).unwrap();

    let mut never = with_variant(S7, Variant::WaitAll);
    never.defaults.nr_timeout = NrTimeout::Never;
    let (cn, rn) = run(&never);
    let late = rn.metrics.sources[0].brm.iter().filter(|b| b.time > t_s + 0.05).count();
    let neg = compare(&cn, &rn, Definition::SourceBased, 0.05, cn.run.window()).unwrap();

    verdict(
        "A6",
        resumed <= 2.0 * nr && rep.pass && late == 0 && !neg.pass,
        format!(
            "S7 v2: BRMs resume {resumed:.4} s after silencing (2 x nr_timeout = {:.4} s); throughput {:.1} vs {:.1} \
             (error {:.4}); nr_timeout=inf: {late} BRMs after t+50ms, compare {} ({})",
            2.0 * nr,
            rep.rows[0].measured,
            rep.rows[0].oracle,
            rep.rows[0].relative_error,
            if neg.pass { "pass" } else { "fail" },
            neg.diagnostics.join("; ")
        ),
    );
}

#[test]
fn a07_merge_regulation() {
    let (c, r) = run(&scenario(S4));
    let ratios: Vec<f64> = (0..3).map(|i| root_ratio(&r, i)).collect();
    let ratio_ok = ratios.iter().all(|x| (0.9..=1.0).contains(x));
    let misrouted = r.metrics.misrouted_hops + r.metrics.sources.iter().map(|s| s.misrouted).sum::<u64>();
    let eq = compare(&c, &r, Definition::VcSource, 0.05, c.run.window()).unwrap();

    let wf_sc = scenario(S4_WATERFILL);
    assert_eq!(wf_sc.defaults.subdivision, Subdivision::Waterfill);
    let (cw, rw) = run(&wf_sc);
    let wf = compare(&cw, &rw, Definition::VcSource, 0.05, cw.run.window()).unwrap();
    let wf_ratios: Vec<f64> = (0..3).map(|i| root_ratio(&rw, i)).collect();
    let wf_misrouted = rw.metrics.misrouted_hops + rw.metrics.sources.iter().map(|s| s.misrouted).sum::<u64>();

    let fmt = |rep: &mpabr_core::report::CompareReport| {
        rep.rows
            .iter()
            .map(|r| format!("{}={:.0}/{:.0}", r.source, r.measured, r.oracle))
            .collect::<Vec<_>>()
            .join(" ")
    };
    verdict(
        "A7",
        ratio_ok
            && misrouted == 0
            && eq.pass
            && wf.pass
            && wf_misrouted == 0
            && wf_ratios.iter().all(|x| (0.9..=1.0).contains(x)),
        format!(
            "S4 ratios {ratios:?}, misrouted {misrouted}; EQUAL {}; WATERFILL {} ratios {wf_ratios:?}",
            fmt(&eq),
            fmt(&wf)
        ),
    );
}

#[test]
fn a08_accounting_constraints() {
    let mut audits = Vec::new();
    for (name, text) in [("S4", S4), ("S5", S5), ("S6", S6)] {
        let (_, r) = run(&scenario(text));
        audits.push((name, r.metrics.audit_violations));
    }
    let audit_ok = audits.iter().all(|a| a.1 == 0);

    let mut dumps_equal = true;
    for text in [S4, S6] {
        let mut on = scenario(text);
        on.defaults.erase_origin = true;
        let mut off = scenario(text);
        off.defaults.erase_origin = false;
        let (_, a) = run(&on);
        let (_, b) = run(&off);
        dumps_equal &= a.link_dumps == b.link_dumps && a.digest == b.digest;
    }

    let mut ccr_reads = Vec::new();
    for (file, src) in [
        ("switch_alloc.rs", include_str!("../src/switch_alloc.rs")),
        ("merge_point.rs", include_str!("../src/merge_point.rs")),
    ] {
        let body = src.split("#[cfg(test)]").next().unwrap();
        for (i, line) in body.lines().enumerate() {
            let code = line.split("//").next().unwrap();
            if code.contains(".ccr") {
                ccr_reads.push(format!("{file}:{}", i + 1));
            }
        }
    }

    verdict(
        "A8",
        audit_ok && dumps_equal && ccr_reads.is_empty(),
        format!("audit violations {audits:?}; dumps equal with erase_origin on/off: {dumps_equal}; CCR reads in allocation code: {ccr_reads:?}"),
    );
}

#[test]
fn a09_composition() {
    let (c, r) = run(&scenario(S6));
    let ratios: Vec<f64> = (0..2).map(|i| root_ratio(&r, i)).collect();
    let rep = compare(&c, &r, Definition::SourceBased, 0.05, c.run.window()).unwrap();
    let ok = ratios.iter().all(|x| (0.9..=1.0).contains(x)) && rep.pass;
    let rows: Vec<String> = rep
        .rows
        .iter()
        .map(|r| format!("{}={:.1}/{:.1}", r.source, r.measured, r.oracle))
        .collect();
    verdict(
        "A9",
        ok,
        format!("S6 ratios {ratios:?}; throughput/oracle {}; convergence {:?}", rows.join(" "), rep.convergence_time),
    );
}

/// Balanced p2mp tree of the given depth and fanout. Leaf link `leaf0` alternates between
/// full and half capacity every `period` seconds starting at `t0`.
fn tree_text(depth: u32, fanout: u32, t0: f64, period: f64, phases: u32) -> String {
    let cap = 2000;
    let mut o = format!(
        "[run]\nduration = {}\nwindow = {} .. {}\n[defaults]\nvariant = v2\n",
        t0 + period * phases as f64,
        t0 * 0.5,
        t0
    );
    let mut edges = vec!["up".to_string()];
    o += &format!("[link]\nid = up\nfrom = S\nto = n\ncapacity = {cap}\ndelay = 5 ms\nbuffer = 2000\n");
    let mut level = vec!["n".to_string()];
    let mut dests = Vec::new();
    for d in 0..depth {
        let mut next = Vec::new();
        for p in &level {
            for k in 0..fanout {
                let child = format!("{p}{k}");
                let id = format!("e{child}");
                o += &format!("[link]\nid = {id}\nfrom = {p}\nto = {child}\ncapacity = {cap}\ndelay = 5 ms\nbuffer = 2000\n");
                edges.push(id);
                if d + 1 == depth {
                    dests.push(child.clone());
                }
                next.push(child);
            }
        }
        level = next;
    }
    o += &format!(
        "[vc]\nid = t\nkind = p2mp\nedges = {}\ndestinations = {}\n[source]\nid = src\nvc = t\nnode = S\npcr = {cap}\nnrm = 4\n",
        edges.join(", "),
        dests.join(", ")
    );
    let leaf = format!("e{}", dests[0]);
    for i in 0..phases {
        let value = if i % 2 == 0 { cap / 2 } else { cap };
        o += &format!(
            "[event]\ntime = {}\naction = capacity\nlink = {leaf}\nvalue = {value}\n",
            t0 + period * i as f64
        );
    }
    o
}

/// Mean delay from each leaf capacity change to the first BRM at the source carrying the new ER.
fn feedback_latency(depth: u32, fanout: u32) -> f64 {
    let (t0, period, phases) = (0.6, 0.15, 8);
    let sc = scenario(&tree_text(depth, fanout, t0, period, phases));
    let (_, r) = run(&sc);
    let brm = &r.metrics.sources[0].brm;
    let mut total = 0.0;
    for i in 0..phases {
        let t = t0 + period * i as f64;
        let low = 1000.0 * 0.95;
        let hit = brm.iter().find(|b| {
            b.time >= t && if i % 2 == 0 { b.er <= low * 1.01 } else { b.er > low * 1.5 }
        });
        total += hit.map_or(f64::INFINITY, |b| b.time - t);
    }
    total / phases as f64
}

fn affine_r2(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (slope, icpt, 1.0 - ss_res / ss_tot)
}

#[test]
fn a10_scaling_shape() {
    let depths = [2u32, 3, 4, 5];
    let lat2: Vec<f64> = depths.iter().map(|&d| feedback_latency(d, 2)).collect();
    let xs: Vec<f64> = depths.iter().map(|&d| d as f64).collect();
    let (slope, icpt, r2) = affine_r2(&xs, &lat2);
    let lat4: Vec<(u32, f64)> = [2u32, 3, 4].iter().map(|&d| (d, feedback_latency(d, 4))).collect();
    let invariant = lat4.iter().all(|&(d, l)| {
        let base = lat2[depths.iter().position(|&x| x == d).unwrap()];
        (l - base).abs() <= 0.10 * base
    });
    verdict(
        "A10",
        r2 >= 0.95 && invariant,
        format!(
            "fanout 2 latency by depth {:?} ms: slope {:.3} ms/level, intercept {:.3} ms, R^2 {r2:.4}; fanout 4 {:?} ms",
            lat2.iter().map(|l| (l * 1e4).round() / 10.0).collect::<Vec<_>>(),
            slope * 1e3,
            icpt * 1e3,
            lat4.iter().map(|&(d, l)| (d, (l * 1e4).round() / 10.0)).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn a11_codec_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rate = |rng: &mut ChaCha8Rng| match rng.gen_range(0..4) {
        0 => 0.0,
        1 => rng.gen_range(0.0..1.0),
        2 => rng.gen_range(1.0..1e6),
        _ => rng.gen_range(1.0..4e9),
    };
    let mut lossless = 0;
    for _ in 0..10_000 {
        let f = WireFields {
            dir: if rng.gen() { Direction::Forward } else { Direction::Backward },
            bn: rng.gen(),
            ci: rng.gen(),
            ni: rng.gen(),
            ra: rng.gen(),
            er: rate(&mut rng),
            ccr: rate(&mut rng),
            mcr: rate(&mut rng),
            queue_len: rng.gen(),
            seq: rng.gen(),
        };
        let header = CellHeader::for_vci(rng.gen());
        let cell = encode_cell(&f, header);
        if let Ok((h, back)) = decode_cell(&cell) {
            if h == header && back == f.quantized() {
                lossless += 1;
            }
        }
    }

    let sample = encode_cell(
        &WireFields {
            dir: Direction::Backward,
            bn: false,
            ci: true,
            ni: false,
            ra: false,
            er: 9500.0,
            ccr: 4750.0,
            mcr: 0.0,
            queue_len: 0,
            seq: 42,
        },
        CellHeader::for_vci(32),
    );
    let mut detected = 0;
    let mut flips = 0;
    for byte in HEADER_LEN..CELL_LEN {
        for bit in 0..8 {
            let mut c = sample;
            c[byte] ^= 1 << bit;
            flips += 1;
            if crc10(&c[HEADER_LEN..]) != 0 {
                detected += 1;
            }
        }
    }

    let mut digests_match = Vec::new();
    for (name, text) in [
        ("S1", S1),
        ("S1-hetero", S1_HETERO),
        ("S2", S2),
        ("S3", S3),
        ("S4", S4),
        ("S4-waterfill", S4_WATERFILL),
        ("S5", S5),
        ("S6", S6),
        ("S7", S7),
    ] {
        let c = scenario(text).compile().unwrap();
        let a = simulate(&c, SimOptions::default()).digest;
        let b = simulate(&c, SimOptions::default()).digest;
        digests_match.push((name, a == b));
    }
    let det = digests_match.iter().all(|d| d.1);
    verdict(
        "A11",
        lossless == 10_000 && detected == 384 && flips == 384 && det,
        format!("roundtrip lossless {lossless}/10000; CRC detected {detected}/{flips} single-bit flips; digests stable {digests_match:?}"),
    );
}
