//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test --test acceptance -- 3 7` runs only criteria 3 and 7.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::io::Read;
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use growing_squares::census::{self, CensusConfig, Distribution};
use growing_squares::cluster::{brute_cluster, cluster, Dendrogram};
use growing_squares::engine::{Engine, EngineConfig, EngineError, FrameSet};
use growing_squares::geometry::{PointId, WeightedPoint};
use growing_squares::io::{self as gio, GenConfig, Layout};
use growing_squares::scalar::{Rational, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type R = Rational;

const C1_SIZES: [usize; 4] = [8, 32, 128, 256];
const C1_SEEDS: u64 = 100;
const C1_BUDGET: f64 = 120.0;

const C2_CONFIGS: u64 = 1000;
const C2_MAX_N: usize = 128;

const C3_OPS: usize = 500;
const C3_MAX_LIVE: usize = 96;
const C3_RUNS: u64 = 4;

const C4_MAX_N: usize = 64;
const C4_RUNS: u64 = 40;

const C5_RANGE: (u32, u32) = (8, 16);
const C5_MAX_SPREAD: f64 = 3.0;
const C5_BUDGET: f64 = 60.0;

const C6_RANGE: (u32, u32) = (10, 16);
const C6_FROM: u32 = 12;
const C6_SEEDS: u64 = 8;
const C6_MAX_STEP: f64 = 1.25;
const C6_BUDGET: f64 = 300.0;

const C7_RANGE: (u32, u32) = (7, 12);
const C7_SEEDS: u64 = 3;
const C7_BAND: (f64, f64) = (0.5, 1.5);

const C8_SIZES: [usize; 3] = [1_000, 10_000, 50_000];
const C8_SLACK: f64 = 1.3;
const C8_BUDGET: f64 = 300.0;

const C10_RUNS: usize = 2;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn rational_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<WeightedPoint<R>> {
    (0..n)
        .map(|i| {
            WeightedPoint::new(
                i as u64,
                R::from_int(rng.random_range(0..=1_000_000)),
                R::from_int(rng.random_range(0..=1_000_000)),
                R::from_int(rng.random_range(1..=10_000)),
            )
        })
        .collect()
}

fn float_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<WeightedPoint<f64>> {
    (0..n)
        .map(|i| {
            WeightedPoint::new(
                i as u64,
                rng.random_range(0..=1_000_000) as f64,
                rng.random_range(0..=1_000_000) as f64,
                rng.random_range(1..=10_000) as f64,
            )
        })
        .collect()
}

fn c1_suite() -> Vec<(usize, u64, Vec<WeightedPoint<R>>)> {
    let mut out = Vec::new();
    for &n in &C1_SIZES {
        for seed in 0..C1_SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + n as u64);
            out.push((n, seed, rational_points(&mut rng, n)));
        }
    }
    out
}

fn frames(four: bool) -> EngineConfig {
    EngineConfig {
        frames: if four { FrameSet::Four } else { FrameSet::Eight },
        ..Default::default()
    }
}

fn c1(suite: &[(usize, u64, Vec<WeightedPoint<R>>)]) -> Outcome {
    let mut engine_time = 0.0;
    let mut bad = Vec::new();
    for (n, seed, pts) in suite {
        let t = Instant::now();
        let got = cluster(pts, None, frames(false)).map(|r| r.0);
        engine_time += t.elapsed().as_secs_f64();
        let want = brute_cluster(pts, None).expect("reference runs");
        match got {
            Ok(d) if d == want => {}
            Ok(d) => bad.push(format!("n={n} seed={seed} diverges at merge {:?}", d.first_divergence(&want))),
            Err(e) => bad.push(format!("n={n} seed={seed}: {e}")),
        }
    }
    let pass = bad.is_empty() && engine_time < C1_BUDGET;
    Outcome::new(
        pass,
        format!(
            "{} instances, {} mismatches, engine time {engine_time:.1}s (budget {C1_BUDGET}s){}",
            suite.len(),
            bad.len(),
            bad.first().map_or(String::new(), |b| format!("; first: {b}"))
        ),
    )
}

fn brute_first(pts: &[WeightedPoint<R>]) -> Option<(R, u64, u64)> {
    let mut best: Option<(R, u64, u64)> = None;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            let dx = p.x.sub(&q.x).abs();
            let dy = p.y.sub(&q.y).abs();
            let m = if dx.cmp_exact(&dy) == Ordering::Less { dy } else { dx };
            let t = m.add(&m).div(&p.w.add(&q.w));
            let (a, b) = (p.id.0.min(q.id.0), p.id.0.max(q.id.0));
            let better = match &best {
                None => true,
                Some((bt, ba, bb)) => t.cmp_exact(bt).then((a, b).cmp(&(*ba, *bb))) == Ordering::Less,
            };
            if better {
                best = Some((t, a, b));
            }
        }
    }
    best
}

fn c2() -> Outcome {
    let mut bad = Vec::new();
    for seed in 0..C2_CONFIGS {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC2_0000 + seed);
        let n = rng.random_range(2..=C2_MAX_N);
        let mut seen = HashSet::new();
        let mut pts = Vec::new();
        while pts.len() < n {
            let x = rng.random_range(0..=1_000_000i64);
            let y = rng.random_range(0..=1_000_000i64);
            if seen.insert((x, y)) {
                let w = rng.random_range(1..=10_000i64);
                pts.push(WeightedPoint::new(pts.len() as u64, R::from_int(x), R::from_int(y), R::from_int(w)));
            }
        }
        let mut e = Engine::with_points(&pts, EngineConfig::default()).expect("disjoint at time zero");
        let got = e.advance_to_next_event().map(|(t, a, b)| (t, a.0, b.0));
        let want = brute_first(&pts);
        let same = match (&got, &want) {
            (Some(g), Some(w)) => g.0.cmp_exact(&w.0) == Ordering::Equal && (g.1, g.2) == (w.1, w.2),
            _ => false,
        };
        if !same {
            bad.push(format!(
                "seed {seed} n={n}: engine {:?} reference {:?}",
                got.map(|g| (g.0.render(), g.1, g.2)),
                want.map(|w| (w.0.render(), w.1, w.2))
            ));
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!("{C2_CONFIGS} configurations, {} disagreements{}", bad.len(), bad.first().map_or(String::new(), |b| format!("; first: {b}"))),
    )
}

fn c3_run(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3_0000 + seed);
    let mut e: Engine<R> = Engine::new(EngineConfig::default());
    let mut live: Vec<u64> = Vec::new();
    let mut next_id = 0u64;
    let mut checks = 0;
    for op in 0..C3_OPS {
        let roll = rng.random_range(0..10);
        let want_insert = live.len() < 2 || (roll < 6 && live.len() < C3_MAX_LIVE);
        let what = if want_insert {
            let mut tries = 0;
            loop {
                tries += 1;
                if tries > 10_000 {
                    return Err(format!("op {op}: no free spot for an insertion"));
                }
                let p = WeightedPoint::new(
                    next_id,
                    R::from_int(rng.random_range(0..=100_000)),
                    R::from_int(rng.random_range(0..=100_000)),
                    R::from_int(rng.random_range(1..=1_000)),
                );
                match e.insert(p) {
                    Ok(()) => break,
                    Err(EngineError::Overlap { .. }) => continue,
                    Err(err) => return Err(format!("op {op}: insert failed: {err}")),
                }
            }
            live.push(next_id);
            next_id += 1;
            "insert"
        } else if roll < 9 {
            let k = rng.random_range(0..live.len());
            let id = live.swap_remove(k);
            e.delete(PointId(id)).map_err(|err| format!("op {op}: delete failed: {err}"))?;
            "delete"
        } else {
            let (_, a, b) = e.advance_to_next_event().ok_or_else(|| format!("op {op}: no event with {} points", live.len()))?;
            for id in [a, b] {
                e.delete(id).map_err(|err| format!("op {op}: delete failed: {err}"))?;
                live.retain(|&x| x != id.0);
            }
            "advance"
        };
        e.verify().map_err(|err| format!("op {op} ({what}): {err}"))?;
        let pts: Vec<WeightedPoint<R>> = e.points().cloned().collect();
        let mut fresh = Engine::with_points(&pts, EngineConfig::default()).map_err(|err| format!("op {op}: rebuild failed: {err}"))?;
        let mut probe = e.clone();
        let a = probe.advance_to_next_event();
        let b = fresh.advance_to_next_event();
        let same = match (&a, &b) {
            (None, None) => true,
            (Some(x), Some(y)) => x.0.cmp_exact(&y.0) == Ordering::Equal && x.1 == y.1 && x.2 == y.2,
            _ => false,
        };
        if !same {
            return Err(format!("op {op} ({what}): next event {a:?} but a rebuild gives {b:?}"));
        }
        checks += 1;
    }
    Ok(checks)
}

fn c3() -> Outcome {
    let mut checks = 0;
    for seed in 0..C3_RUNS {
        match c3_run(seed) {
            Ok(c) => checks += c,
            Err(e) => return Outcome::new(false, format!("run {seed}: {e}")),
        }
    }
    Outcome::new(true, format!("{C3_RUNS} runs of {C3_OPS} operations, {checks} checks against a rebuild"))
}

/// Every D+ pair of every frame is covered by a live link of that frame, and
/// every D- pair by a link of the frame with the swap toggled.
fn coverage(e: &Engine<R>) -> Result<(usize, usize), String> {
    let insts = e.instances();
    let covered: Vec<HashSet<(u32, u32)>> = insts
        .iter()
        .map(|inst| {
            let mut c = HashSet::new();
            for (w, z) in inst.link_pairs() {
                c.extend(inst.link_covers(w, z));
            }
            c
        })
        .collect();
    let (mut plus, mut minus) = (0, 0);
    for (i, inst) in insts.iter().enumerate() {
        let f = inst.frame;
        for pair in inst.dplus_pairs() {
            if !covered[i].contains(&pair) {
                return Err(format!("D+ pair {pair:?} of frame {f:?} is not covered"));
            }
            plus += 1;
        }
        let Some(j) = insts.iter().position(|o| o.frame.sx == f.sx && o.frame.sy == f.sy && o.frame.swap != f.swap) else {
            return Err(format!("no partner for frame {f:?}"));
        };
        let slots = inst.slots();
        let p = &inst.pts;
        for &a in &slots {
            for &b in &slots {
                if a != b
                    && p.cmp_x(a, b) == Ordering::Greater
                    && p.cmp_y(a, b) == Ordering::Greater
                    && p.cmp_g(a, b) == Ordering::Less
                {
                    if !covered[j].contains(&(a, b)) {
                        return Err(format!("D- pair {:?} of frame {f:?} is not covered", (a, b)));
                    }
                    minus += 1;
                }
            }
        }
    }
    Ok((plus, minus))
}

fn c4() -> Outcome {
    let (mut plus, mut minus, mut states) = (0, 0, 0);
    for seed in 0..C4_RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC4_0000 + seed);
        let n = rng.random_range(1..=C4_MAX_N);
        let pts = rational_points(&mut rng, n);
        let four = seed % 2 == 1;
        let mut e = match Engine::with_points(&pts, frames(four)) {
            Ok(e) => e,
            Err(_) => continue,
        };
        let mut next_id = n as u64;
        for step in 0..24 {
            match coverage(&e) {
                Ok((a, b)) => {
                    plus += a;
                    minus += b;
                    states += 1;
                }
                Err(err) => return Outcome::new(false, format!("seed {seed} step {step}: {err}")),
            }
            if e.len() < 2 {
                break;
            }
            if step % 3 == 2 {
                let p = WeightedPoint::new(
                    next_id,
                    R::from_int(rng.random_range(0..=1_000_000)),
                    R::from_int(rng.random_range(0..=1_000_000)),
                    R::from_int(rng.random_range(1..=10)),
                );
                next_id += 1;
                let _ = e.insert(p);
            } else {
                let Some((_, a, _)) = e.advance_to_next_event() else { break };
                e.delete(a).expect("reported point is stored");
            }
        }
    }
    Outcome::new(true, format!("{states} states checked, {plus} D+ and {minus} D- pairs covered"))
}

fn c5() -> Outcome {
    let t = Instant::now();
    let mut ratios = Vec::new();
    for k in C5_RANGE.0..=C5_RANGE.1 {
        let n = 1usize << k;
        let row = census::run(&CensusConfig { d: 1, n, m: n, dist: Distribution::Uniform, seed: 0, alpha: 0.25 }).expect("valid config");
        ratios.push((n, row.ratio));
    }
    let secs = t.elapsed().as_secs_f64();
    let hi = ratios.iter().map(|r| r.1).fold(f64::MIN, f64::max);
    let lo = ratios.iter().map(|r| r.1).fold(f64::MAX, f64::min);
    let spread = hi / lo;
    Outcome::new(
        spread < C5_MAX_SPREAD && secs < C5_BUDGET,
        format!(
            "d=1 ratios {} max/min {spread:.3} (limit {C5_MAX_SPREAD}), {secs:.1}s (budget {C5_BUDGET}s)",
            ratios.iter().map(|(n, r)| format!("{n}:{r:.4}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn c6() -> Outcome {
    let t = Instant::now();
    let mut means = Vec::new();
    for k in C6_RANGE.0..=C6_RANGE.1 {
        let n = 1usize << k;
        let mut sum = 0.0;
        for seed in 0..C6_SEEDS {
            let row = census::run(&CensusConfig { d: 3, n, m: n, dist: Distribution::Uniform, seed, alpha: 0.25 }).expect("valid config");
            sum += row.ratio;
        }
        means.push((k, sum / C6_SEEDS as f64));
    }
    let secs = t.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    for w in means.windows(2) {
        if w[0].0 >= C6_FROM {
            worst = worst.max(w[1].1 / w[0].1);
        }
    }
    Outcome::new(
        worst <= C6_MAX_STEP && secs < C6_BUDGET,
        format!(
            "d=3 mean ratios {} largest step from 2^{C6_FROM} on {worst:.3} (limit {C6_MAX_STEP}), {secs:.1}s (budget {C6_BUDGET}s)",
            means.iter().map(|(k, r)| format!("2^{k}:{r:.4}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn c7() -> Outcome {
    let mut cs = Vec::new();
    for k in C7_RANGE.0..=C7_RANGE.1 {
        let n = 1usize << k;
        let mut best = 0;
        for seed in 0..C7_SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(0xC7_0000 + seed);
            let pts = float_points(&mut rng, n);
            let e = Engine::with_points(&pts, EngineConfig::default()).expect("disjoint at time zero");
            best = best.max(e.max_links_per_node());
        }
        let l = (n as f64).log2().ceil() + 1.0;
        cs.push((n, best, best as f64 / l.powi(3)));
    }
    let mut sorted: Vec<f64> = cs.iter().map(|c| c.2).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let c = sorted[sorted.len() - 1];
    let pass = cs.iter().all(|x| x.2 >= C7_BAND.0 * median && x.2 <= C7_BAND.1 * median);
    Outcome::new(
        pass,
        format!(
            "max links per node {} median c {median:.4}, fitted c {c:.4} (band {:?} x median)",
            cs.iter().map(|(n, m, c)| format!("{n}:{m}({c:.4})")).collect::<Vec<_>>().join(" "),
            C7_BAND
        ),
    )
}

fn float_events(n: usize) -> (u64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8_0000 + n as u64);
    let pts = float_points(&mut rng, n);
    let t = Instant::now();
    let (_, s) = cluster(&pts, None, EngineConfig::default()).expect("float clustering runs");
    (s.tournament_events + s.link_events, t.elapsed().as_secs_f64())
}

fn mem_available_kb() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    text.lines()
        .find(|l| l.starts_with("MemAvailable:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

/// Runs `float_events(n)` in a child process capped at the available memory
/// and the time budget.
fn float_events_isolated(n: usize) -> Result<(u64, f64), String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let cap = mem_available_kb().unwrap_or(u64::MAX / 1024);
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(format!("ulimit -v {cap} 2>/dev/null; exec \"$0\" --float-events {n}"))
        .arg(&exe)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    loop {
        match child.try_wait().map_err(|e| e.to_string())? {
            Some(status) => {
                let mut out = String::new();
                child.stdout.take().expect("piped").read_to_string(&mut out).map_err(|e| e.to_string())?;
                if !status.success() {
                    return Err(format!("n={n} aborted ({status}) under a {cap} kB memory cap"));
                }
                let mut it = out.split_whitespace();
                let ev = it.next().and_then(|s| s.parse().ok()).ok_or("no event count")?;
                let secs = it.next().and_then(|s| s.parse().ok()).ok_or("no time")?;
                return Ok((ev, secs));
            }
            None if start.elapsed().as_secs_f64() > C8_BUDGET => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(format!("n={n} did not finish within {C8_BUDGET}s"));
            }
            None => std::thread::sleep(Duration::from_millis(200)),
        }
    }
}

fn c8() -> Outcome {
    let mut rows = Vec::new();
    for (i, &n) in C8_SIZES.iter().enumerate() {
        let res = if i + 1 == C8_SIZES.len() { float_events_isolated(n) } else { Ok(float_events(n)) };
        match res {
            Ok((ev, secs)) => {
                let l = (n as f64).log2();
                rows.push((n, ev, ev as f64 / (n as f64 * l * l * l), secs));
            }
            Err(e) => {
                return Outcome::new(
                    false,
                    format!("{}; completed: {}", e, rows.iter().map(|r| format!("{}:{:.4}", r.0, r.2)).collect::<Vec<_>>().join(" ")),
                )
            }
        }
    }
    let pass = rows.windows(2).all(|w| w[1].2 <= C8_SLACK * w[0].2) && rows.iter().all(|r| r.3 < C8_BUDGET);
    Outcome::new(
        pass,
        format!(
            "events/(n log^3 n) {}",
            rows.iter().map(|r| format!("{}:{:.4} ({:.0}s)", r.0, r.2, r.3)).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn c9(suite: &[(usize, u64, Vec<WeightedPoint<R>>)]) -> Outcome {
    let mut bad = Vec::new();
    for (n, seed, pts) in suite {
        let eight: Dendrogram<R> = cluster(pts, None, frames(false)).expect("runs").0;
        let four: Dendrogram<R> = cluster(pts, None, frames(true)).expect("runs").0;
        if eight != four {
            bad.push(format!("n={n} seed={seed} diverges at merge {:?}", four.first_divergence(&eight)));
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!("{} instances, {} differ{}", suite.len(), bad.len(), bad.first().map_or(String::new(), |b| format!("; first: {b}"))),
    )
}

fn c10() -> Outcome {
    let outputs = |_: usize| -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        for (seed, layout) in [(1, Layout::Uniform), (2, Layout::Clustered), (3, Layout::Uniform)] {
            let rows = gio::generate(&GenConfig { n: 200, layout, seed, ..Default::default() });
            out.push(gio::generated_csv(&rows).into_bytes());
            let pts: Vec<WeightedPoint<R>> = gio::generated_points(&rows);
            let (d, _) = cluster(&pts, None, EngineConfig::default()).expect("runs");
            out.push(gio::dendrogram_json(&d).into_bytes());
        }
        for d in 1..=3 {
            let mut buf = Vec::new();
            census::census(&census::sweep(d, 16, 512, Distribution::Uniform, 9, 0.25), &mut buf).expect("writes");
            out.push(buf);
        }
        out
    };
    let runs: Vec<Vec<Vec<u8>>> = (0..C10_RUNS).map(outputs).collect();
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    let bytes: usize = runs[0].iter().map(Vec::len).sum();
    Outcome::new(same, format!("{} outputs ({bytes} bytes) compared across {C10_RUNS} runs", runs[0].len()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Some(i) = args.iter().position(|a| a == "--float-events") {
        let n: usize = args[i + 1].parse().expect("size");
        let (ev, secs) = float_events(n);
        println!("{ev} {secs}");
        return ExitCode::SUCCESS;
    }
    let only: BTreeSet<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let want = |k: u32| only.is_empty() || only.contains(&k);

    let suite = if want(1) || want(9) { c1_suite() } else { Vec::new() };
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "exact clustering equals the reference", Box::new(|| c1(&suite))),
        (2, "first event equals the brute-force minimum", Box::new(c2)),
        (3, "insert/delete fuzz matches a rebuild", Box::new(c3)),
        (4, "links cover every dominance pair", Box::new(c4)),
        (5, "d=1 link census is linear", Box::new(c5)),
        (6, "d=3 link census ratio levels off", Box::new(c6)),
        (7, "links per tournament node within c log^3 n", Box::new(c7)),
        (8, "float event count scales as n log^3 n", Box::new(c8)),
        (9, "four instances give the same dendrograms as eight", Box::new(|| c9(&suite))),
        (10, "outputs are byte-identical across runs", Box::new(c10)),
    ];
    let mut failed = 0;
    for (k, name, f) in &criteria {
        if !want(*k) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} C{k} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
