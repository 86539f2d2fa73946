//! Test-side oracles, written from the model definitions and independent of
//! the library's own arithmetic.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vmsched::estimator::JobTimingModel;

/// Modeled completion time `A/n_m + B/n_r + u_m v_r t_s`, with an empty
/// phase costing nothing.
pub fn eq7(a: f64, b: f64, shuffle: f64, n_m: u32, n_r: u32) -> f64 {
    let part = |work: f64, n: u32| if work == 0.0 { 0.0 } else { work / f64::from(n) };
    part(a, n_m) + part(b, n_r) + shuffle
}

/// Smallest `n_m + n_r` with `A/n_m + B/n_r <= C` and the sum at most
/// `limit`. Phases without work take zero slots. Every `n_m` is visited; the
/// smallest feasible `n_r` never grows with `n_m`, so one descending pointer
/// covers all pairs.
pub fn brute_force_min_sum(a: f64, b: f64, c: f64, limit: u32) -> Option<u32> {
    if c <= 0.0 {
        return None;
    }
    let maps = if a == 0.0 { 0..=0 } else { 1..=limit };
    let mut best: Option<u32> = None;
    if b == 0.0 {
        return maps.into_iter().find(|&n_m| eq7(a, b, 0.0, n_m, 0) <= c);
    }
    let mut n_r = limit;
    for n_m in maps {
        while n_r > 1 && eq7(a, b, 0.0, n_m, n_r - 1) <= c {
            n_r -= 1;
        }
        if n_m + n_r <= limit && eq7(a, b, 0.0, n_m, n_r) <= c {
            best = Some(best.map_or(n_m + n_r, |s| s.min(n_m + n_r)));
        }
    }
    best
}

/// Continuous optimum of the slot sum on `A/n_m + B/n_r = C`.
pub fn continuous_optimum(a: f64, b: f64, c: f64) -> (f64, f64) {
    let s = a.sqrt() + b.sqrt();
    (a.sqrt() * s / c, b.sqrt() * s / c)
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub model: JobTimingModel,
    pub deadline: f64,
}

impl Instance {
    pub fn a(&self) -> f64 {
        f64::from(self.model.map_task_count) * self.model.mean_map_time
    }
    pub fn b(&self) -> f64 {
        f64::from(self.model.reduce_task_count) * self.model.mean_reduce_time
    }
    pub fn shuffle(&self) -> f64 {
        f64::from(self.model.map_task_count) * f64::from(self.model.reduce_task_count) * self.model.shuffle_copy_time
    }
    pub fn c(&self) -> f64 {
        self.deadline - self.shuffle()
    }
}

/// Random instances over u_m in [1,500], v_r in [0,50], t_m in [1,120] s,
/// t_s in [0.01,2] s. A quarter get deadlines below the shuffle time.
pub fn random_instances(seed: u64, n: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let u_m = rng.gen_range(1..=500u32);
            let v_r = rng.gen_range(0..=50u32);
            let t_m = rng.gen_range(1.0..=120.0);
            let t_s = rng.gen_range(0.01..=2.0);
            let model = JobTimingModel::new(t_m, t_s, u_m, v_r);
            let shuffle = f64::from(u_m) * f64::from(v_r) * t_s;
            let work = model.map_work() + model.reduce_work();
            let deadline = if i % 4 == 3 {
                rng.gen_range(0.0..=shuffle.max(1.0))
            } else {
                shuffle + work * rng.gen_range(0.005..=1.5)
            };
            Instance { model, deadline }
        })
        .collect()
}
