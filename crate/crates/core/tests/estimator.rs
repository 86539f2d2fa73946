mod common;

use common::{brute_force_min_sum, continuous_optimum, eq7, random_instances};
use proptest::prelude::*;

use vmsched::estimator::{estimate_completion_time, min_slots, recompute_demand, EstimatorError, JobTimingModel, TaskRecord};
use vmsched::model::{BlockPlacement, JobId, JobSpec, JobState, JobType, TaskId, TaskKind, TaskState, VmId, GIB};

fn model(u_m: u32, t_m: f64, v_r: u32, t_r: f64, t_s: f64) -> JobTimingModel {
    let mut m = JobTimingModel::new(t_m, t_s, u_m, v_r);
    m.mean_reduce_time = t_r;
    m
}

#[test]
fn worked_instance_matches_hand_values() {
    // A = 50 * 20 = 1000, B = 10 * 20 = 200, shuffle = 500 * 0.16 = 80, D = 330.
    let m = model(50, 20.0, 10, 20.0, 0.16);
    let d = min_slots(&m, 330.0).unwrap();
    assert!((d.continuous_map - 5.79).abs() < 0.01, "{}", d.continuous_map);
    assert!((d.continuous_reduce - 2.59).abs() < 0.01, "{}", d.continuous_reduce);
    assert_eq!((d.map_slots, d.reduce_slots), (6, 3));
    let t = estimate_completion_time(&m, &d).unwrap();
    assert!((t - 313.33).abs() < 0.01);
    assert!(t <= 330.0);
}

#[test]
fn oracle_agreement_on_seeded_instances() {
    for inst in random_instances(11, 200) {
        let d = min_slots(&inst.model, inst.deadline).unwrap();
        let c = inst.c();
        assert_eq!(d.feasible, c > 0.0, "{inst:?}");
        if !d.feasible {
            continue;
        }
        let t = eq7(inst.a(), inst.b(), inst.shuffle(), d.map_slots, d.reduce_slots);
        assert!(t <= inst.deadline * (1.0 + 1e-12), "{inst:?} -> {d:?} takes {t}");
        let (cm, cr) = continuous_optimum(inst.a(), inst.b(), c);
        assert!((d.continuous_map - cm).abs() <= 1e-9 * cm.max(1.0));
        assert!((d.continuous_reduce - cr).abs() <= 1e-9 * cr.max(1.0));
        let limit = (cm + cr).ceil() as u32 + 4;
        let best = brute_force_min_sum(inst.a(), inst.b(), c, limit).expect("optimum within search bound");
        assert!(d.total() <= best + 2, "{inst:?}: {} vs optimum {best}", d.total());
        assert!(d.total() >= best);
    }
}

#[test]
fn map_only_job_needs_ceil_of_work_over_deadline() {
    let m = model(30, 20.0, 0, 20.0, 1.0);
    let d = min_slots(&m, 100.0).unwrap();
    assert_eq!((d.map_slots, d.reduce_slots), (6, 0));
    assert!(d.feasible);
}

#[test]
fn deadline_at_shuffle_bound_is_infeasible_not_an_error() {
    let m = model(10, 20.0, 5, 20.0, 2.0);
    let d = min_slots(&m, 100.0).unwrap();
    assert!(!d.feasible);
    assert_eq!((d.map_slots, d.reduce_slots), (10, 5));
}

#[test]
fn nan_inputs_are_contract_violations() {
    let m = model(10, f64::NAN, 5, 20.0, 2.0);
    assert!(matches!(min_slots(&m, 100.0), Err(EstimatorError::ContractViolation(_))));
    let m = model(10, 20.0, 5, 20.0, 0.1);
    assert!(matches!(min_slots(&m, f64::NAN), Err(EstimatorError::ContractViolation(_))));
}

fn job_with_maps(maps: u32, deadline: f64) -> JobState {
    let spec = JobSpec {
        job_id: JobId(3),
        submit_time: 0.0,
        job_type: JobType::Grep,
        input_size: u64::from(maps) * 64 * (GIB / 1024),
        deadline,
        reduce_task_count: 0,
    };
    let placement = BlockPlacement::from_replicas((0..maps).map(|_| vec![VmId(0)]).collect());
    JobState::new(spec, placement, 1, 0.0)
}

fn finish_map(job: &mut JobState, index: u32, start: f64, duration: f64) -> TaskRecord {
    let task = TaskId::map(job.id(), index);
    assert_eq!(job.take_local_map(VmId(0)), Some(task));
    job.start(TaskState { task_id: task, node: VmId(0), start_time: start, duration, is_local: true });
    job.complete(task, start + duration).unwrap()
}

#[test]
fn halfway_on_schedule_keeps_map_slots() {
    // 20 maps of 20 s against 200 s: 2 slots. After 10 maps at t = 100 the
    // remaining 10 maps have 100 s left: still 2 slots.
    let initial = min_slots(&model(20, 20.0, 0, 20.0, 0.0), 200.0).unwrap();
    let mut job = job_with_maps(20, 200.0);
    for i in 0..10 {
        let start = f64::from(i / 2) * 20.0;
        finish_map(&mut job, i, start, 20.0);
    }
    let (m, d) = recompute_demand(&job, 100.0).unwrap();
    assert_eq!(m.map_task_count, 10);
    assert_eq!(d.map_slots, initial.map_slots);
}

#[test]
fn early_completions_never_raise_map_slots() {
    let mut job = job_with_maps(20, 200.0);
    let r = finish_map(&mut job, 0, 0.0, 20.0);
    assert_eq!(r.kind, TaskKind::Map);
    let (_, before) = recompute_demand(&job, 20.0).unwrap();
    // The next map finishes faster than the estimate.
    finish_map(&mut job, 1, 10.0, 10.0);
    let (_, after) = recompute_demand(&job, 20.0).unwrap();
    assert!(after.map_slots <= before.map_slots);
}

#[test]
fn recompute_without_statistics_fails() {
    let job = job_with_maps(4, 100.0);
    assert_eq!(recompute_demand(&job, 0.0).unwrap_err(), EstimatorError::NoCompletedTasks);
}

fn arb_model() -> impl Strategy<Value = JobTimingModel> {
    (1u32..=300, 1.0f64..=120.0, 0u32..=40, 1.0f64..=120.0, 0.01f64..=2.0)
        .prop_map(|(u, tm, v, tr, ts)| model(u, tm, v, tr, ts))
}

fn shuffle_of(m: &JobTimingModel) -> f64 {
    f64::from(m.map_task_count) * f64::from(m.reduce_task_count) * m.shuffle_copy_time
}

proptest! {
    #[test]
    fn feasible_demand_meets_the_deadline(m in arb_model(), slack in 0.001f64..3.0) {
        let deadline = shuffle_of(&m) + slack * (m.map_work() + m.reduce_work());
        let d = min_slots(&m, deadline).unwrap();
        prop_assert!(d.feasible);
        let t = eq7(m.map_work(), m.reduce_work(), shuffle_of(&m), d.map_slots, d.reduce_slots);
        prop_assert!(t <= deadline * (1.0 + 1e-12));
    }

    #[test]
    fn infeasible_exactly_when_shuffle_overruns(m in arb_model(), frac in 0.0f64..2.0) {
        let deadline = shuffle_of(&m) * frac;
        let d = min_slots(&m, deadline).unwrap();
        prop_assert_eq!(d.feasible, deadline - shuffle_of(&m) > 0.0);
    }

    #[test]
    fn near_optimal_slot_sum(u in 1u32..=60, tm in 1.0f64..=60.0, v in 0u32..=12, tr in 1.0f64..=60.0, slack in 0.02f64..2.0) {
        let m = model(u, tm, v, tr, 0.05);
        let c = slack * (m.map_work() + m.reduce_work());
        let d = min_slots(&m, shuffle_of(&m) + c).unwrap();
        let (cm, cr) = continuous_optimum(m.map_work(), m.reduce_work(), c);
        let best = brute_force_min_sum(m.map_work(), m.reduce_work(), c, (cm + cr).ceil() as u32 + 4).unwrap();
        prop_assert!(d.total() <= best + 2);
    }

    #[test]
    fn slower_tasks_need_at_least_as_many_slots(m in arb_model(), slack in 0.01f64..2.0) {
        let deadline = shuffle_of(&m) + slack * (m.map_work() + m.reduce_work());
        let base = min_slots(&m, deadline).unwrap();
        let mut slow = m.clone();
        slow.mean_map_time *= 2.0;
        slow.mean_reduce_time *= 2.0;
        let slower = min_slots(&slow, deadline).unwrap();
        prop_assert!(slower.map_slots >= base.map_slots);
        prop_assert!(slower.reduce_slots >= base.reduce_slots);
        if base.continuous_map > 0.5 {
            prop_assert!(slower.map_slots > base.map_slots);
        }
    }

    #[test]
    fn later_deadlines_never_need_more(m in arb_model(), slack in 0.01f64..2.0, extra in 0.0f64..1000.0) {
        let deadline = shuffle_of(&m) + slack * (m.map_work() + m.reduce_work());
        let a = min_slots(&m, deadline).unwrap();
        let b = min_slots(&m, deadline + extra).unwrap();
        prop_assert!(b.map_slots <= a.map_slots && b.reduce_slots <= a.reduce_slots);
    }

    #[test]
    fn less_remaining_work_never_needs_more(m in arb_model(), slack in 0.01f64..2.0, done in 0u32..300) {
        let deadline = shuffle_of(&m) + slack * (m.map_work() + m.reduce_work());
        let a = min_slots(&m, deadline).unwrap();
        let mut rest = m.clone();
        rest.map_task_count = m.map_task_count - done.min(m.map_task_count - 1);
        let b = min_slots(&rest, deadline).unwrap();
        prop_assert!(b.map_slots <= a.map_slots);
    }

    #[test]
    fn swapping_phases_swaps_the_demand(u in 1u32..=300, tm in 1.0f64..=120.0, v in 1u32..=300, tr in 1.0f64..=120.0, ts in 0.0f64..0.01, slack in 0.01f64..2.0) {
        let m = model(u, tm, v, tr, ts);
        let mirrored = model(v, tr, u, tm, ts);
        let deadline = shuffle_of(&m) + slack * (m.map_work() + m.reduce_work());
        let a = min_slots(&m, deadline).unwrap();
        let b = min_slots(&mirrored, deadline).unwrap();
        prop_assert!((a.continuous_map - b.continuous_reduce).abs() <= 1e-9 * a.continuous_map.max(1.0));
        prop_assert!((a.continuous_reduce - b.continuous_map).abs() <= 1e-9 * a.continuous_reduce.max(1.0));
        prop_assert_eq!(a.total(), b.total());
    }
}
