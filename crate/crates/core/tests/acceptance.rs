//! Acceptance run: one PASS/FAIL line per criterion, details indented below.
//! Exits non-zero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_force_min_sum, continuous_optimum, eq7, random_instances};
use vmsched::estimator::{estimate_completion_time, min_slots, JobTimingModel, SlotDemand};
use vmsched::metrics::{replay, Check, ReplaySummary, SimReport};
use vmsched::model::{JobId, JobSpec, JobType, ShuffleModel, SimConfig, TaskKind, VmId, GIB, MIB};
use vmsched::sim::{self, SimOutcome, Trace, TraceKind};
use vmsched::workload::{ProfileSet, Workload};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SIZES: [u64; 5] = [2, 4, 6, 8, 10];

struct Verdict {
    id: u32,
    title: &'static str,
    pass: bool,
    details: Vec<String>,
}

fn sweep_run(policy: &str, seed: u64, cfg: &SimConfig, p: &ProfileSet) -> SimOutcome {
    let w = Workload::resolve("paper-sweep", seed, p, &cfg.cluster).unwrap();
    sim::run(cfg, &w, p, policy, seed).unwrap()
}

fn solver_vs_oracle() -> Verdict {
    let start = Instant::now();
    let mut failures = Vec::new();
    let (mut feasible, mut infeasible, mut worst_excess) = (0, 0, 0i64);
    for (i, inst) in random_instances(2024, 200).iter().enumerate() {
        let d = min_slots(&inst.model, inst.deadline).unwrap();
        let c = inst.c();
        if d.feasible != (c > 0.0) {
            failures.push(format!("instance {i}: feasible={} but C={c}", d.feasible));
            continue;
        }
        if !d.feasible {
            infeasible += 1;
            continue;
        }
        feasible += 1;
        let t = eq7(inst.a(), inst.b(), inst.shuffle(), d.map_slots, d.reduce_slots);
        if t > inst.deadline {
            failures.push(format!("instance {i}: ({}, {}) takes {t} > D = {}", d.map_slots, d.reduce_slots, inst.deadline));
        }
        let (cm, cr) = continuous_optimum(inst.a(), inst.b(), c);
        match brute_force_min_sum(inst.a(), inst.b(), c, (cm + cr).ceil() as u32 + 4) {
            Some(best) => {
                let excess = i64::from(d.total()) - i64::from(best);
                worst_excess = worst_excess.max(excess);
                if !(0..=2).contains(&excess) {
                    failures.push(format!("instance {i}: sum {} vs optimum {best}", d.total()));
                }
            }
            None => failures.push(format!("instance {i}: no integer solution within the search bound")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mut details = vec![format!(
        "200 instances: {feasible} feasible, {infeasible} infeasible; worst excess over optimum {worst_excess}; {secs:.2} s"
    )];
    let pass = failures.is_empty() && secs < 5.0 && infeasible > 0;
    details.extend(failures.into_iter().take(5));
    Verdict { id: 1, title: "min-slot solver agrees with the brute-force oracle", pass, details }
}

fn worked_instance() -> Verdict {
    // u_m = 50, t_m = 20 -> A = 1000; v_r = 10, t_r = 20 -> B = 200;
    // 500 copies of 0.16 s -> 80 s shuffle, so C = 330 - 80 = 250.
    let mut m = JobTimingModel::new(20.0, 0.16, 50, 10);
    m.mean_reduce_time = 20.0;
    let d = min_slots(&m, 330.0).unwrap();
    let t = estimate_completion_time(&m, &d).unwrap();
    let pass = (d.continuous_map - 5.79).abs() <= 0.01
        && (d.continuous_reduce - 2.59).abs() <= 0.01
        && (d.map_slots, d.reduce_slots) == (6, 3)
        && (t - 313.3).abs() <= 0.05
        && t <= 330.0;
    Verdict {
        id: 2,
        title: "worked instance A=1000, B=200, C=250",
        pass,
        details: vec![format!(
            "continuous ({:.4}, {:.4}), integer ({}, {}), modeled completion {t:.3} s",
            d.continuous_map, d.continuous_reduce, d.map_slots, d.reduce_slots
        )],
    }
}

struct SoloCase {
    spec: JobSpec,
    demand: SlotDemand,
    estimate: f64,
}

/// A random solo job with a random feasible deadline. With `whole_waves` the
/// draw is repeated until the demand at that deadline splits both phases
/// into whole waves, the regime where the modeled phase times are exact.
fn solo_case(rng: &mut ChaCha8Rng, p: &ProfileSet, cfg: &SimConfig, whole_waves: bool) -> SoloCase {
    loop {
        let job_type = JobType::ALL[rng.gen_range(0..5)];
        let maps = rng.gen_range(1..=60u32);
        let reduces = rng.gen_range(0..=10u32);
        let mut spec = JobSpec {
            job_id: JobId(0),
            submit_time: 0.0,
            job_type,
            input_size: u64::from(maps) * 64 * MIB,
            deadline: 1.0,
            reduce_task_count: reduces,
        };
        let prof = p.get(job_type);
        let mut model =
            JobTimingModel::new(prof.base_map_time_per_block, p.copy_time(&spec, maps, cfg.cluster.network_bandwidth), maps, reduces);
        model.mean_reduce_time = prof.base_reduce_time;
        spec.deadline = model.shuffle_duration() + (model.map_work() + model.reduce_work()) * rng.gen_range(0.025..=1.0);
        let demand = min_slots(&model, spec.deadline).unwrap();
        let fits = demand.map_slots <= maps && demand.reduce_slots <= reduces;
        let whole = maps % demand.map_slots == 0 && (reduces == 0 || reduces % demand.reduce_slots == 0);
        if !demand.feasible || !fits || (whole_waves && !whole) {
            continue;
        }
        assert!(demand.map_slots <= cfg.cluster.total_map_slots());
        let estimate = estimate_completion_time(&model, &demand).unwrap();
        return SoloCase { spec, demand, estimate };
    }
}

fn solo_completion(case: &SoloCase, cfg: &SimConfig, p: &ProfileSet, seed: u64) -> f64 {
    let w = Workload::new(format!("solo-{seed}"), vec![case.spec.clone()]);
    sim::run(cfg, &w, p, "ct", seed).unwrap().report.jobs[0].completion_time
}

fn deadline_guarantee(p: &ProfileSet) -> Verdict {
    let mut cfg = SimConfig::default();
    cfg.options.jitter = 0.0;
    cfg.options.shuffle_model = ShuffleModel::Serial;
    let hb = cfg.cluster.heartbeat_interval;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (mut late, mut slow) = (Vec::new(), Vec::new());
    let mut margin = f64::INFINITY;
    let mut overrun = f64::NEG_INFINITY;
    for seed in 0..50 {
        let case = solo_case(&mut rng, p, &cfg, true);
        let c = solo_completion(&case, &cfg, p, seed);
        margin = margin.min(case.spec.deadline - c);
        overrun = overrun.max(c - case.estimate);
        let line = format!(
            "case {seed}: {} u_m={} v_r={} demand ({}, {}) D={:.2} estimate={:.2} completed {c:.2}",
            case.spec.job_type,
            case.spec.map_task_count(64 * MIB),
            case.spec.reduce_task_count,
            case.demand.map_slots,
            case.demand.reduce_slots,
            case.spec.deadline,
            case.estimate
        );
        if c > case.spec.deadline {
            late.push(line.clone());
        }
        if c > case.estimate + 2.0 * hb {
            slow.push(line);
        }
    }

    // Diagnostic only: demand that leaves a partial last wave.
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let ragged_late = (0..50)
        .filter(|&seed| {
            let case = solo_case(&mut rng, p, &cfg, false);
            solo_completion(&case, &cfg, p, seed) > case.spec.deadline
        })
        .count();

    let mut details = vec![
        format!("50 whole-wave cases: {} after D (tightest margin {margin:.2} s)", late.len()),
        format!("{} beyond estimate + {} s (largest overrun {overrun:.2} s)", slow.len(), 2.0 * hb),
        format!("diagnostic, 50 cases without the whole-wave condition: {ragged_late} after D"),
    ];
    let pass = late.is_empty() && slow.is_empty();
    details.extend(late.into_iter().take(5).map(|l| format!("late: {l}")));
    details.extend(slow.into_iter().take(5).map(|l| format!("slow: {l}")));
    Verdict { id: 3, title: "solo feasible jobs finish by their deadline", pass, details }
}

fn core_conservation(ct_runs: &[(u64, SimOutcome, ReplaySummary)]) -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for (seed, out, summary) in ct_runs {
        // Rebuild per-VM core counts from the trace and re-audit every
        // reconfiguration independently of the replay checker.
        let mut host: BTreeMap<VmId, u32> = BTreeMap::new();
        let mut cores: BTreeMap<VmId, i64> = BTreeMap::new();
        let mut failures = 0;
        let mut reconfigs = 0;
        for r in &out.trace.records {
            match r.kind {
                TraceKind::Vm => {
                    host.insert(r.vm.unwrap(), r.get_parsed("pm").unwrap());
                    cores.insert(r.vm.unwrap(), r.get_parsed("cores").unwrap());
                }
                TraceKind::Move | TraceKind::Reconfig => {
                    let to = r.vm.unwrap();
                    let from = VmId(r.get_parsed("from").unwrap());
                    if host[&from] != host[&to] {
                        failures += 1;
                    }
                    if r.kind == TraceKind::Reconfig {
                        reconfigs += 1;
                        *cores.get_mut(&from).unwrap() -= 1;
                        *cores.get_mut(&to).unwrap() += 1;
                        let cf: i64 = r.get_parsed("cores_from").unwrap();
                        let ctt: i64 = r.get_parsed("cores_to").unwrap();
                        if cf != cores[&from] || ctt != cores[&to] || cores[&from] < 1 {
                            failures += 1;
                        }
                        let pm = host[&to];
                        let sum: i64 = cores.iter().filter(|(v, _)| host[v] == pm).map(|(_, c)| c).sum();
                        if sum != r.get_parsed::<i64>("pm_cores").unwrap() || sum != 8 {
                            failures += 1;
                        }
                    }
                }
                _ => {}
            }
        }
        let total: i64 = cores.values().sum();
        let replayed = summary.count(Check::Conservation) + summary.count(Check::CrossMachine);
        let ok = failures == 0 && replayed == 0 && total == 160 && reconfigs > 0;
        pass &= ok;
        details.push(format!(
            "seed {seed}: {reconfigs} core moves took effect, {failures} audit failures, {replayed} replay violations, cluster cores {total}"
        ));
    }
    Verdict { id: 4, title: "cores are conserved and never cross machines (25-job ct runs)", pass, details }
}

fn locality(runs: &BTreeMap<(&str, u64), (SimOutcome, ReplaySummary)>) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for seed in SEEDS {
        let (ct, _) = &runs[&("ct", seed)];
        let (fair, _) = &runs[&("fair", seed)];
        let non_local: usize = ct
            .trace
            .records
            .iter()
            .filter(|r| r.kind == TraceKind::Launch && r.task.is_some_and(|t| t.kind == TaskKind::Map))
            .filter(|r| r.get("via") != Some("fallback") && r.local != Some(true))
            .count();
        let ok = ct.report.map_locality_rate >= fair.report.map_locality_rate
            && non_local == 0
            && ct.report.fallback_fraction < 0.05;
        pass &= ok;
        details.push(format!(
            "seed {seed}: ct {:.4} vs fair {:.4}; ct non-fallback remote launches {non_local}; fallback fraction {:.4}",
            ct.report.map_locality_rate, fair.report.map_locality_rate, ct.report.fallback_fraction
        ));
    }
    Verdict { id: 5, title: "ct keeps map tasks local", pass, details }
}

fn throughput(runs: &BTreeMap<(&str, u64), (SimOutcome, ReplaySummary)>) -> Verdict {
    let gains: Vec<f64> = SEEDS
        .iter()
        .map(|&s| {
            let ct = runs[&("ct", s)].0.report.throughput;
            let fair = runs[&("fair", s)].0.report.throughput;
            (ct - fair) / fair
        })
        .collect();
    let positive = gains.iter().filter(|&&g| g > 0.0).count();
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    let pass = positive >= 4 && (0.03..=0.30).contains(&mean);
    let shown: Vec<String> = gains.iter().map(|g| format!("{:+.2}%", 100.0 * g)).collect();
    Verdict {
        id: 6,
        title: "ct throughput gain over fair",
        pass,
        details: vec![format!("per seed [{}]; {positive}/5 positive; mean {:+.2}%", shown.join(", "), 100.0 * mean)],
    }
}

type Means = BTreeMap<(&'static str, JobType, u64), f64>;

fn completion_means(runs: &BTreeMap<(&str, u64), (SimOutcome, ReplaySummary)>) -> Means {
    let mut acc: BTreeMap<(&'static str, JobType, u64), Vec<f64>> = BTreeMap::new();
    for policy in ["ct", "fair"] {
        for seed in SEEDS {
            for j in &runs[&(policy, seed)].0.report.jobs {
                acc.entry((policy, j.job_type, j.input_size / GIB)).or_default().push(j.completion_time);
            }
        }
    }
    acc.into_iter().map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64)).collect()
}

fn size_trend(means: &Means) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for policy in ["ct", "fair"] {
        for t in JobType::ALL {
            let row: Vec<f64> = SIZES.iter().map(|&g| means[&(policy, t, g)]).collect();
            let ok = row.windows(2).all(|w| w[1] >= w[0]);
            pass &= ok;
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.0}")).collect();
            details.push(format!("{policy:<4} {:<21} {}{}", t.name(), cells.join(" "), if ok { "" } else { "  <- decreases" }));
        }
        for g in SIZES {
            let pg = means[&(policy, JobType::PermutationGenerator, g)];
            let beaten: Vec<&str> = JobType::ALL
                .iter()
                .filter(|&&t| t != JobType::PermutationGenerator && means[&(policy, t, g)] >= pg)
                .map(|t| t.name())
                .collect();
            if !beaten.is_empty() {
                pass = false;
                details.push(format!("{policy} {g} GiB: PermutationGenerator not largest ({})", beaten.join(", ")));
            }
        }
    }
    Verdict { id: 7, title: "completion time grows with input size; PermutationGenerator slowest", pass, details }
}

fn permutation_gap(means: &Means) -> Verdict {
    let mut gaps: Vec<(f64, JobType)> = JobType::ALL
        .iter()
        .map(|&t| {
            let ct: f64 = SIZES.iter().map(|&g| means[&("ct", t, g)]).sum();
            let fair: f64 = SIZES.iter().map(|&g| means[&("fair", t, g)]).sum();
            (((ct - fair) / fair).abs(), t)
        })
        .collect();
    gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let shown: Vec<String> = gaps.iter().map(|(g, t)| format!("{} {:.3}", t.name(), g)).collect();
    Verdict {
        id: 8,
        title: "PermutationGenerator has the smallest ct-vs-fair gap",
        pass: gaps[0].1 == JobType::PermutationGenerator,
        details: vec![shown.join(", ")],
    }
}

fn determinism(
    runs: &BTreeMap<(&str, u64), (SimOutcome, ReplaySummary)>,
    cfg: &SimConfig,
    p: &ProfileSet,
) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    let mut identical = 0;
    let mut mismatched = Vec::new();
    for (&(policy, seed), (out, summary)) in runs {
        let again = sweep_run(policy, seed, cfg, p);
        let json = |r: &SimReport| serde_json::to_string(r).unwrap();
        if again.trace.to_tsv() == out.trace.to_tsv() && json(&again.report) == json(&out.report) {
            identical += 1;
        } else {
            pass = false;
        }
        let m = summary.mismatches(&out.report);
        if !m.is_empty() || summary.jobs != out.report.jobs {
            pass = false;
            mismatched.push(format!("{policy} seed {seed}: {}", m.join("; ")));
        }
    }
    details.push(format!("{identical}/{} reruns byte-identical; replay reproduced {}/{} reports exactly", runs.len(), runs.len() - mismatched.len(), runs.len()));
    details.extend(mismatched);
    Verdict { id: 9, title: "runs are deterministic and replay reproduces every aggregate", pass, details }
}

fn scheduling_invariants(summaries: &[(String, &ReplaySummary)]) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    let mut grants = 0;
    for (label, s) in summaries {
        grants += s.grants_checked;
        if !s.violations.is_empty() {
            pass = false;
            details.push(format!("{label}: {} violations, first: {}", s.violations.len(), s.violations[0]));
        }
    }
    let edf: usize = summaries.iter().map(|(_, s)| s.count(Check::Edf)).sum();
    let demand: usize = summaries.iter().map(|(_, s)| s.count(Check::Demand)).sum();
    details.insert(0, format!("{} traces, {grants} grants checked; EDF violations {edf}, demand violations {demand}", summaries.len()));
    Verdict { id: 10, title: "EDF order and demand caps hold on every grant", pass: pass && grants > 0, details }
}

fn cadence(traces: &[(String, &Trace)], interval: f64) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    let mut beats = 0;
    for (label, trace) in traces {
        let mut offsets: BTreeMap<VmId, f64> = BTreeMap::new();
        let mut last: BTreeMap<VmId, f64> = BTreeMap::new();
        let mut bad = 0;
        for r in &trace.records {
            match r.kind {
                TraceKind::Vm => {
                    offsets.insert(r.vm.unwrap(), r.get_parsed("offset").unwrap());
                }
                TraceKind::Heartbeat => {
                    beats += 1;
                    let vm = r.vm.unwrap();
                    let expected = last.get(&vm).map_or(offsets[&vm], |t| t + interval);
                    if (r.time - expected).abs() > 1e-9 {
                        bad += 1;
                    }
                    last.insert(vm, r.time);
                }
                _ => {}
            }
        }
        let stagger_ok = offsets.iter().all(|(v, o)| (o - f64::from(v.0) * interval / offsets.len() as f64).abs() < 1e-12);
        if bad > 0 || !stagger_ok || last.len() != offsets.len() {
            pass = false;
            details.push(format!("{label}: {bad} off-cadence heartbeats, stagger ok {stagger_ok}"));
        }
    }
    details.insert(0, format!("{} traces, {beats} heartbeats at {interval} s spacing", traces.len()));
    Verdict { id: 11, title: "heartbeats keep an exact staggered cadence", pass, details }
}

fn main() {
    let cfg = SimConfig::default();
    let p = ProfileSet::default();

    let mut runs: BTreeMap<(&str, u64), (SimOutcome, ReplaySummary)> = BTreeMap::new();
    for policy in ["ct", "fair"] {
        for seed in SEEDS {
            let out = sweep_run(policy, seed, &cfg, &p);
            let summary = replay(&Trace::parse(&out.trace.to_tsv()).unwrap()).unwrap();
            runs.insert((policy, seed), (out, summary));
        }
    }
    let ct_runs: Vec<(u64, SimOutcome, ReplaySummary)> =
        SEEDS.iter().map(|&s| (s, runs[&("ct", s)].0.clone(), runs[&("ct", s)].1.clone())).collect();
    let means = completion_means(&runs);

    let mut verdicts = vec![solver_vs_oracle(), worked_instance(), deadline_guarantee(&p), core_conservation(&ct_runs)];
    verdicts.push(locality(&runs));
    verdicts.push(throughput(&runs));
    verdicts.push(size_trend(&means));
    verdicts.push(permutation_gap(&means));
    verdicts.push(determinism(&runs, &cfg, &p));

    // Table 2 under every policy joins the sweep runs for the trace checks.
    let mut extra = Vec::new();
    for policy in ["ct", "fair", "fifo"] {
        let w = Workload::resolve("table2", 1, &p, &cfg.cluster).unwrap();
        let out = sim::run(&cfg, &w, &p, policy, 1).unwrap();
        let summary = replay(&out.trace).unwrap();
        extra.push((format!("table2 {policy}"), out, summary));
    }
    let mut summaries: Vec<(String, &ReplaySummary)> =
        runs.iter().map(|((pol, s), (_, r))| (format!("paper-sweep {pol} seed {s}"), r)).collect();
    summaries.extend(extra.iter().map(|(l, _, s)| (l.clone(), s)));
    verdicts.push(scheduling_invariants(&summaries));
    let mut traces: Vec<(String, &Trace)> =
        runs.iter().map(|((pol, s), (o, _))| (format!("paper-sweep {pol} seed {s}"), &o.trace)).collect();
    traces.extend(extra.iter().map(|(l, o, _)| (l.clone(), &o.trace)));
    verdicts.push(cadence(&traces, cfg.cluster.heartbeat_interval));

    let mut failed = 0;
    for v in &verdicts {
        println!("{} {:>2}  {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.title);
        for d in &v.details {
            println!("          {d}");
        }
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
