//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use minimaxpi::aggregation::{solve_aggregate, AggregationProbabilities, RepresentativeSets};
use minimaxpi::async_pi::extended::{check_minmax_nonexpansive, extended_step, verify_uniform_contraction, ExtendedState};
use minimaxpi::async_pi::schedule::{Cyclic, RandomFair, Schedule};
use minimaxpi::async_pi::{apply_operation, run, AlgoState, RunOptions, RunStatus, ScheduleSpec};
use minimaxpi::classic_pi::{find_counterexample, hoffman_karp, pollatschek_avi_itzhak, PiOptions, PiStatus};
use minimaxpi::framework::{check_monotone, value_iterate, zero_tables, MinimaxProblem, SeparatedProblem};
use minimaxpi::models::{
    random_markov_game, random_minimax_control, random_separated_model, separate_markov_game, BetaScaling, MarkovGame,
};

type Verdict = Result<String, String>;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Game `seed` of the criterion-1 family: 1–5 states, 1–3 actions per player.
fn family_game(seed: u64) -> MarkovGame {
    let states = 1 + (seed % 5) as usize;
    let n = 1 + ((seed / 5) % 3) as usize;
    let m = 1 + ((seed / 15) % 3) as usize;
    random_markov_game(states, n, m, 0.9, 1000 + seed).expect("valid game")
}

fn fixed_point_agreement() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let game = family_game(seed);
        let states = game.state_count();
        let shapley = game.shapley_value_iteration(1e-11, 1_000_000).map_err(|e| e.to_string())?;
        let hk = hoffman_karp(&game, 1e-11, 1000).map_err(|e| e.to_string())?;
        if hk.status != PiStatus::Converged {
            return Err(format!("Hoffman-Karp did not converge on game {seed}"));
        }
        let sep = separate_markov_game(game, None).map_err(|e| e.to_string())?;
        let beta = sep.beta();
        let mut rr = Cyclic::round_robin(states, states, 10).map_err(|e| e.to_string())?;
        let out = run(&sep, &mut rr, AlgoState::initial(&sep), &RunOptions::new(1e-10, 1_000_000))
            .map_err(|e| e.to_string())?;
        if out.status != RunStatus::Converged {
            return Err(format!("async did not converge on game {seed}"));
        }
        let (j1, j2) = zero_tables(&sep);
        let vi = value_iterate(&sep, j1, j2, 1e-11, 1_000_000).map_err(|e| e.to_string())?;
        let async_vals: Vec<f64> = out.state.j1.iter().map(|v| beta * v).collect();
        let sep_vals: Vec<f64> = vi.j1.iter().map(|v| beta * v).collect();
        let tables = [&shapley.values, &hk.values, &async_vals, &sep_vals];
        for i in 0..tables.len() {
            for j in i + 1..tables.len() {
                worst = worst.max(max_abs_diff(tables[i], tables[j]));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if worst > 1e-6 {
        return Err(format!("largest pairwise difference {worst:e} > 1e-6"));
    }
    if secs >= 60.0 {
        return Err(format!("took {secs:.1} s, target < 60 s"));
    }
    Ok(format!("50 games, largest pairwise difference {worst:.2e}, {secs:.2} s"))
}

fn oscillation_vs_convergence() -> Verdict {
    let cx = find_counterexample().map_err(|e| e.to_string())?;
    let poa = pollatschek_avi_itzhak(&cx.game, PiOptions::new(1e-10, 10_000).run_to_budget()).map_err(|e| e.to_string())?;
    let h = &poa.value_history;
    if h.len() < 10_000 || poa.status == PiStatus::Converged {
        return Err(format!("PoA stopped after {} evaluations with status {:?}", h.len(), poa.status));
    }
    for t in 2..h.len() {
        if (h[t][0] - h[t - 2][0]).abs() > 1e-9 || (h[t][0] - h[t - 1][0]).abs() < 1e-6 {
            return Err(format!("PoA value sequence is not 2-periodic at iteration {t}"));
        }
    }
    let star = cx.game.shapley_value_iteration(1e-12, 1_000_000).map_err(|e| e.to_string())?.values[0];
    let sep = separate_markov_game(cx.game.clone(), None).map_err(|e| e.to_string())?;
    let mut rr = Cyclic::round_robin(1, 1, 10).map_err(|e| e.to_string())?;
    let out = run(&sep, &mut rr, AlgoState::initial(&sep), &RunOptions::new(1e-10, 10_000)).map_err(|e| e.to_string())?;
    let value = sep.beta() * out.state.j1[0];
    if out.status != RunStatus::Converged || out.steps >= 10_000 || (value - star).abs() > 1e-6 {
        return Err(format!("async: {:?} after {} steps, value {value} vs {star}", out.status, out.steps));
    }
    Ok(format!(
        "PoA alternates {:.4} / {:.4} for {} iterations; async reaches {value:.6} (VI {star:.6}) in {} steps",
        h[h.len() - 2][0],
        h[h.len() - 1][0],
        h.len(),
        out.steps
    ))
}

/// Twenty problems of three kinds, all with finite action sets.
fn contraction_problems() -> Vec<(String, SeparatedProblem)> {
    let mut out = Vec::new();
    for seed in 0..8 {
        let m = random_separated_model(2 + seed as usize % 4, 2 + seed as usize % 3, 3, 0.9, seed).unwrap();
        out.push((format!("separated #{seed}"), m.to_problem()));
    }
    for seed in 0..6 {
        let m = random_minimax_control(2 + seed as usize % 3, 3, 0.9, seed).unwrap();
        let p = m.to_problem(BetaScaling::symmetric(m.modulus()).unwrap()).unwrap();
        out.push((format!("minimax control #{seed}"), p));
    }
    for seed in 0..6 {
        let game = random_markov_game(1 + seed as usize % 3, 2, 3, 0.9, 40 + seed).unwrap();
        out.push((format!("Markov game #{seed}"), separate_markov_game(game, None).unwrap().pure_separated()));
    }
    out
}

fn uniform_contraction() -> Verdict {
    let mut worst_margin = f64::NEG_INFINITY;
    let problems = contraction_problems();
    for (k, (name, p)) in problems.iter().enumerate() {
        let ratio = verify_uniform_contraction(p, 1000, k as u64).map_err(|e| format!("{name}: {e}"))?;
        worst_margin = worst_margin.max(ratio - p.modulus());
    }
    Ok(format!(
        "{} problems, largest ratio minus modulus {worst_margin:.2e}; fixed points policy-independent",
        problems.len()
    ))
}

fn schedule_invariance() -> Verdict {
    let game = random_markov_game(4, 3, 3, 0.9, 77).unwrap();
    let sep = separate_markov_game(game, None).unwrap();
    let opts = RunOptions::new(1e-10, 1_000_000);
    let mut specs: Vec<ScheduleSpec> = (0..100).map(|s| ScheduleSpec::Random { seed: Some(s) }).collect();
    specs.push("partitioned:p=4".parse().unwrap());
    specs.push("delayed:B=5,seed=3,inner=random:seed=11".parse().unwrap());
    specs.push("delayed:B=5,seed=4,inner=partitioned:p=4".parse().unwrap());
    let mut finals: Vec<Vec<f64>> = Vec::new();
    let mut horizon = 0;
    for spec in &specs {
        let mut sched = spec.build(4, 4, 0).map_err(|e| e.to_string())?;
        horizon = horizon.max(sched.fairness_horizon());
        let out = run(&sep, sched.as_mut(), AlgoState::initial(&sep), &opts).map_err(|e| format!("{spec}: {e}"))?;
        if out.status != RunStatus::Converged {
            return Err(format!("{spec} did not converge"));
        }
        finals.push(out.state.j1);
    }
    let mut worst: f64 = 0.0;
    for i in 0..finals.len() {
        for j in i + 1..finals.len() {
            worst = worst.max(max_abs_diff(&finals[i], &finals[j]));
        }
    }
    if worst > 2e-8 {
        return Err(format!("largest pairwise difference {worst:e} > 2e-8"));
    }
    Ok(format!("{} schedules (fairness horizon <= {horizon}), largest pairwise difference {worst:.2e}", specs.len()))
}

fn nonexpansive_and_monotone() -> Verdict {
    if let Some(w) = check_minmax_nonexpansive(10_000, 2024) {
        return Err(format!("{} bound violated: {} > {}", w.side, w.left, w.right));
    }
    let mut checked = 0;
    for seed in 0..50 {
        let sep = separate_markov_game(family_game(seed), None).unwrap();
        if let Some(v) = check_monotone(&sep, 1000, seed).map_err(|e| e.to_string())? {
            return Err(format!("game {seed}: side {} state {} excess {:e}", v.side, v.state, v.excess));
        }
        if let Some(v) = check_monotone(&sep.pure_separated(), 1000, seed).map_err(|e| e.to_string())? {
            return Err(format!("game {seed} (pure): side {} state {} excess {:e}", v.side, v.state, v.excess));
        }
        checked += 1;
    }
    Ok(format!("10^4 quadruples; {checked} Markov-game problems monotone on 10^3 samples each"))
}

fn reduced_space_equivalence() -> Verdict {
    let problems = [
        ("separated", random_separated_model(2, 2, 3, 0.9, 6).unwrap().to_problem()),
        ("Markov game", separate_markov_game(random_markov_game(2, 2, 2, 0.9, 3).unwrap(), None).unwrap().pure_separated()),
    ];
    let mut worst: f64 = 0.0;
    for (name, p) in &problems {
        let mut sched = RandomFair::new(p.space1().len(), p.space2().len(), 17).map_err(|e| e.to_string())?;
        let mut reduced = AlgoState::initial(p);
        let mut ext = ExtendedState::initial(p);
        for step in 1..=200 {
            let op = sched.next_step().op;
            apply_operation(p, &reduced.clone(), &mut reduced, &op).map_err(|e| e.to_string())?;
            extended_step(p, &mut ext, &op).map_err(|e| e.to_string())?;
            let d = max_abs_diff(&reduced.j1, &ext.q.q1_hat(&ext.mu))
                .max(max_abs_diff(&reduced.j2, &ext.q.q2_hat(&ext.nu)))
                .max(max_abs_diff(&reduced.v1, &ext.q.v1))
                .max(max_abs_diff(&reduced.v2, &ext.q.v2));
            if d > 1e-12 || reduced.mu != ext.mu || reduced.nu != ext.nu {
                return Err(format!("{name}: trajectories differ by {d:e} at step {step}"));
            }
            worst = worst.max(d);
        }
    }
    Ok(format!("2 two-state instances, 200 steps each, largest difference {worst:.2e}"))
}

fn geometric_decay() -> Verdict {
    let mut runs: Vec<(String, Vec<f64>, f64)> = Vec::new();
    for seed in 0..50 {
        let game = family_game(seed);
        let out = game.shapley_value_iteration(1e-12, 1_000_000).map_err(|e| e.to_string())?;
        runs.push((format!("Shapley #{seed}"), out.residuals, game.modulus()));
        if seed < 20 {
            let sep = separate_markov_game(game, None).unwrap();
            let (j1, j2) = zero_tables(&sep);
            let vi = value_iterate(&sep, j1, j2, 1e-12, 1_000_000).map_err(|e| e.to_string())?;
            runs.push((format!("separated game #{seed}"), vi.residuals, sep.modulus()));
        }
    }
    for (name, p) in contraction_problems() {
        let vi = value_iterate(&p, vec![0.0; p.space1().len()], vec![0.0; p.space2().len()], 1e-12, 1_000_000)
            .map_err(|e| e.to_string())?;
        runs.push((name, vi.residuals, p.modulus()));
    }
    let mut steps = 0;
    for (name, res, alpha) in &runs {
        for k in 1..res.len() {
            if res[k] > alpha * res[k - 1] + 1e-12 {
                return Err(format!("{name}: residual {} > {alpha} * {} at sweep {}", res[k], res[k - 1], k + 1));
            }
            steps += 1;
        }
    }
    Ok(format!("{} runs, {steps} consecutive residual pairs", runs.len()))
}

fn aggregation_exactness() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let (n1, n2) = (3 + seed as usize % 4, 2 + seed as usize % 3);
        let p = random_separated_model(n1, n2, 3, 0.9, 500 + seed).unwrap().to_problem();
        let vi = value_iterate(&p, vec![0.0; n1], vec![0.0; n2], 1e-13, 1_000_000).map_err(|e| e.to_string())?;
        let mut rr = Cyclic::round_robin(n1, n2, 10).unwrap();
        let sol = solve_aggregate(
            &p,
            &RepresentativeSets::full(n1, n2),
            &AggregationProbabilities::identity(n1, n2),
            &mut rr,
            &RunOptions::new(1e-10, 1_000_000),
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&sol.j1, &vi.j1)).max(max_abs_diff(&sol.j2, &vi.j2));
    }
    if worst > 1e-7 {
        return Err(format!("identity aggregation off by {worst:e}"));
    }
    let p = random_separated_model(6, 6, 3, 0.9, 9).unwrap().to_problem();
    let vi = value_iterate(&p, vec![0.0; 6], vec![0.0; 6], 1e-13, 1_000_000).map_err(|e| e.to_string())?;
    let reps = RepresentativeSets::new(vec![0, 2, 4], vec![1, 4]).unwrap();
    let phi = AggregationProbabilities::nearest(6, 6, &reps);
    let mut rr = Cyclic::round_robin(3, 2, 10).unwrap();
    let sol = solve_aggregate(&p, &reps, &phi, &mut rr, &RunOptions::new(1e-10, 1_000_000)).map_err(|e| e.to_string())?;
    let gap = sol.gap(&p, &vi.j1, &vi.j2);
    if !sol.policy_j1.iter().chain(&sol.policy_j2).all(|v| v.is_finite()) || !gap.is_finite() {
        return Err("lookahead pair has non-finite values".into());
    }
    Ok(format!("identity error {worst:.2e} on 10 models; nearest-representative lookahead gap {gap:.4} (reported)"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 fixed-point agreement", fixed_point_agreement),
        ("2 oscillation vs convergence", oscillation_vs_convergence),
        ("3 uniform contraction", uniform_contraction),
        ("4 schedule invariance", schedule_invariance),
        ("5 nonexpansiveness and monotonicity", nonexpansive_and_monotone),
        ("6 reduced-space equivalence", reduced_space_equivalence),
        ("7 value-iteration geometric decay", geometric_decay),
        ("8 aggregation exactness", aggregation_exactness),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS  criterion {name}: {detail} [{:.2} s]", start.elapsed().as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why} [{:.2} s]", start.elapsed().as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
