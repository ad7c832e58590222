use collapse_core::integrator::Schedule;
use collapse_core::interaction::{presets, reference_profile, simulate_measurement, single_trajectory};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("probe");

    let s = presets::born_branches(0.7);
    println!(
        "c2={} rest={} theta={:.3e} dt_suggest={:.3e}",
        s.c_squared(),
        s.rest_energy(),
        s.onset_threshold(),
        s.suggested_dt()
    );

    if mode == "profile" {
        let profile = reference_profile(&s, 4e-4, 20_000).unwrap();
        let peak = profile.gamma.iter().cloned().fold(0.0, f64::max);
        println!(
            "profile: causal={:.3} retro={:.3} vmax={:.4} gamma_peak={:.4}",
            profile.causal_integral, profile.retrospective_integral, profile.v_abs_max, peak
        );
        for i in (0..profile.times.len()).step_by(2000) {
            println!(
                "  t={:.3} v={:.4} gamma={:.4}",
                profile.times[i], profile.v_expect[i], profile.gamma[i]
            );
        }
        return;
    }

    if mode == "single" {
        let traj: u64 = args.get(2).and_then(|x| x.parse().ok()).unwrap_or(0);
        let schedule = Schedule::new(4e-4, 40_000, 2_000);
        let t0 = Instant::now();
        let rec = single_trajectory(&s, schedule, 12345, traj).unwrap();
        println!(
            "single: outcome={:?} steps={} time={:.2?} drift_max={:.2e}",
            rec.outcome,
            rec.steps_taken,
            t0.elapsed(),
            rec.drift_max
        );
        let b1 = rec.series("branch1").unwrap();
        let b2 = rec.series("branch2").unwrap();
        let g = rec.series("gamma").unwrap();
        let gi = rec.series("gamma_integral").unwrap();
        for i in 0..rec.times.len() {
            println!(
                "  t={:.3} w1={:.5} w2={:.5} gamma={:.4} int={:.3}",
                rec.times[i], b1[i], b2[i], g[i], gi[i]
            );
        }
        return;
    }

    // Ensemble probe: ensemble N [c2 dt budget]
    let n: u64 = args.get(2).and_then(|x| x.parse().ok()).unwrap_or(200);
    let mut s = s;
    if let Some(c2) = args.get(3).and_then(|x| x.parse().ok()) {
        s.c_squared = Some(c2);
    }
    let dt: f64 = args.get(4).and_then(|x| x.parse().ok()).unwrap_or(4e-4);
    let budget: usize = args.get(5).and_then(|x| x.parse().ok()).unwrap_or(40_000);
    let schedule = Schedule::new(dt, budget, budget);
    let t0 = Instant::now();
    let run = simulate_measurement(&s, n, 99, schedule).unwrap();
    let elapsed = t0.elapsed();
    let mean_steps: f64 = run
        .stats
        .summaries
        .iter()
        .map(|s| s.steps_taken as f64)
        .sum::<f64>()
        / run.stats.summaries.len() as f64;
    println!(
        "ensemble n={n}: outcomes={:?} unresolved={} mean_steps={:.0} time={:.2?} (per traj {:.1?})",
        run.stats.outcome_counts,
        run.stats.unresolved,
        mean_steps,
        elapsed,
        elapsed / n as u32
    );
}
