// Temporary development scratch: empirical checks of sweep/selection behavior.

use ndmux_core::design::*;
use ndmux_core::dynamics::*;
use ndmux_core::numerics::*;

fn main() {
    let models = default_models();
    let template = standard_sequence();

    // 1. Full default grid sweep.
    let pulse_counts: Vec<usize> = (1..=10).collect();
    let taus: Vec<f64> = (1..=16).map(|i| i as f64 * 0.05).collect();
    let sweep = sweep_sequences(&models, &template, &pulse_counts, &taus, 0.01, 0.01).unwrap();
    let best = sweep.best();
    println!(
        "argmax: n={} tau={:.2} metric={:.3}",
        best.n_pulses, best.tau_fus_s, best.metric
    );

    let metric_at = |n: usize, tau: f64| -> f64 {
        sweep
            .entries
            .iter()
            .find(|e| e.n_pulses == n && (e.tau_fus_s - tau).abs() < 1e-12)
            .unwrap()
            .metric
    };

    println!(
        "metric(5, 0.40) = {:.4}   metric(5, 0.05) = {:.4}   -> 400ms wins: {}",
        metric_at(5, 0.40),
        metric_at(5, 0.05),
        metric_at(5, 0.40) > metric_at(5, 0.05)
    );

    // 2. Marginal gains at tau = 0.4.
    let m: Vec<f64> = (1..=10).map(|n| metric_at(n, 0.4)).collect();
    println!("metric(n) at tau=0.4: {m:?}");
    let gains: Vec<f64> = m.windows(2).map(|w| w[1] - w[0]).collect();
    println!("gains: {gains:?}");
    let g45 = gains[3];
    let ok = gains[4..].iter().all(|&g| g < g45);
    println!("gain(4->5) = {g45:.4}; all gains from 5->6 onward smaller: {ok}");

    // tau profile at n = 5.
    let taus_profile: Vec<(f64, f64)> = taus.iter().map(|&t| (t, metric_at(5, t))).collect();
    println!("tau profile at n=5: {taus_profile:?}");

    // Argmax neighborhood inspection.
    for e in &sweep.entries {
        if e.metric >= 0.95 * best.metric {
            println!("  near-best: n={} tau={:.2} metric={:.2}", e.n_pulses, e.tau_fus_s, e.metric);
        }
    }

    // 3. Greedy on the dense standard schedule.
    let dense = dense_schedule_at_spacing(5, 0.4, 0.01, 0.01).unwrap();
    println!(
        "dense schedule: {} frames, first pulse at {:.3}",
        dense.n_frames(),
        dense.pulse_times_s()[0]
    );
    let sm = build_signal_matrix_on_schedule(&models, &dense).unwrap();
    let sel = greedy_frame_selection(&sm, 16).unwrap();
    let kept_times: Vec<f64> = sel.kept_indices.iter().map(|&i| dense.frame_times_s()[i]).collect();
    println!("kept times: {kept_times:?}");
    let p1 = dense.pulse_times_s()[0];
    let baseline_kept = kept_times.iter().filter(|&&t| t < p1).count();
    let near_pulse = kept_times.iter().any(|&t| {
        dense
            .pulse_times_s()
            .iter()
            .any(|&p| t >= p - 1e-12 && t - p <= 0.001)
    });
    println!("baseline frames kept: {baseline_kept}; near-pulse frame kept: {near_pulse}");
    println!("final metric {:.4} vs full {:.4}", sv_product(sel.reduced().matrix()).unwrap(), sv_product(sm.matrix()).unwrap());

    // 4. Greedy vs exhaustive on random 3x12 -> 6.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 1.0;
    let mut fails = 0;
    for _ in 0..100 {
        let data: Vec<f64> = (0..36).map(|_| rng.random::<f64>()).collect();
        let m = DenseMatrix::new(3, 12, data).unwrap();
        let s = SignalMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            (0..12).map(|i| i as f64).collect(),
            m,
        )
        .unwrap();
        let g = greedy_frame_selection(&s, 6).unwrap();
        let e = exhaustive_frame_selection(&s, 6).unwrap();
        let gm = sv_product(g.reduced().matrix()).unwrap();
        let em = sv_product(e.reduced().matrix()).unwrap();
        let ratio = gm / em;
        if ratio < 0.9 {
            fails += 1;
        }
        worst = worst.min(ratio);
    }
    println!("greedy/exhaustive worst ratio: {worst:.4}, failures below 0.9: {fails}");
}
