//! Acceptance gate, exactness and arithmetic half: oracle-fed parallel
//! spiking, joint threshold/drive rescaling, spiking-layer gradient checks
//! against finite differences, convolutional-vs-recurrent SSM equivalence,
//! energy accounting, and fused-network equivalence. Each test covers one
//! numbered check and prints its own PASS/FAIL line.

use spiking_ssm::fft::causal_convolve;
use spiking_ssm::grad::{
    backward_spiking, backward_spiking_scaled, relaxed_forward, SurrogateFn, ThresholdForm,
    TrainMode,
};
use spiking_ssm::lif::{lif_run, NeuronParams};
use spiking_ssm::metrics::{energy, EnergyModel, OpCounts};
use spiking_ssm::network::{softmax_ce, BlockConfig, NetConfig, SpikeMode, SpikingSsmNetwork, Tape};
use spiking_ssm::rng::Rng;
use spiking_ssm::s4d::{discretize_zoh, s4d_lin_init, ssm_forward_recurrent, ssm_kernel};
use spiking_ssm::sdn::parallel_spike;
use spiking_ssm::sdn_train::{generate_dataset, train_sdn};
use std::time::Instant;

#[path = "support/gate.rs"]
mod gate;

#[test]
fn c01_parallel_spiking_fed_oracle_predictions_matches_the_iterative_neuron() {
    gate::check(1, "oracle-fed parallel spiking is bit-identical to the iterative neuron", || {
        let params = NeuronParams { tau: 0.2, v_th: 1.0, ..NeuronParams::default() };
        let tau32 = 0.2f64 as f32;
        let start = Instant::now();
        let mut rng = Rng::new(9001);
        let mut total_spikes = 0u64;
        for _ in 0..10_000 {
            let x = rng.normal_seq_f32(1024, 0.0, 1.0).unwrap();
            let (spikes, trace) = lif_run(&x, &params).unwrap();
            // Exact oracle: the leak term τ·u_{t−1}, computed with the same
            // single f32 multiply the iterative neuron uses.
            let mut pred = Vec::with_capacity(x.len());
            let mut prev = 0.0f32;
            for t in 0..x.len() {
                pred.push(tau32 * prev);
                prev = trace.post_reset[t];
            }
            let (par_spikes, par_pre) = parallel_spike(&pred, &x, 1.0).unwrap();
            assert_eq!(par_spikes.0, spikes.0, "spike trains diverged");
            assert_eq!(par_pre, trace.pre_reset, "membrane traces diverged");
            total_spikes += spikes.count() as u64;
        }
        // Sanity: the sequences actually spike, so the equality is not vacuous.
        assert!(total_spikes > 1_000_000, "only {total_spikes} spikes across the corpus");
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget is one minute");
    });
}

#[test]
fn c05_joint_rescaling_of_drive_and_threshold_preserves_spike_trains_exactly() {
    gate::check(5, "joint drive/threshold rescaling preserves spike trains exactly", || {
        // Scaling the layer drive and the threshold by the same factor keeps
        // every spike decision unchanged. Exact floating-point equality holds
        // for power-of-two factors, which shift exponents without touching
        // significands; arbitrary factors obey the same identity only up to
        // rounding.
        let mut rng = Rng::new(501);
        let mut model = spiking_ssm::sdn::SdnModel::init(&mut Rng::new(502));
        model.fuse().unwrap();
        for trial in 0..1000 {
            let l = 64 + rng.below(193) as usize;
            let mean = rng.uniform(-0.5, 0.5);
            let std = rng.uniform(0.5, 2.0);
            let x = rng.normal_seq_f32(l, mean, std).unwrap();
            let v_th = rng.uniform(0.25, 4.0);
            let tau = rng.uniform(0.0, 1.0);
            let alpha = 2.0f64.powi(rng.below(13) as i32 - 6);
            let xs: Vec<f32> = x.iter().map(|&v| (v as f64 * alpha) as f32).collect();

            // Iterative path.
            let base = NeuronParams { tau, v_th, ..NeuronParams::default() };
            let scaled = NeuronParams { tau, v_th: v_th * alpha, ..NeuronParams::default() };
            let (s1, _) = lif_run(&x, &base).unwrap();
            let (s2, _) = lif_run(&xs, &scaled).unwrap();
            assert_eq!(s1.0, s2.0, "iterative spikes changed (trial {trial}, alpha {alpha})");

            // Parallel path: the normalized drive x/v_th is all the predictor
            // and the threshold comparison ever see, and it is bitwise
            // invariant under the joint rescaling.
            let n1: Vec<f32> = x.iter().map(|&v| v / v_th as f32).collect();
            let n2: Vec<f32> = xs.iter().map(|&v| v / (v_th * alpha) as f32).collect();
            assert_eq!(n1, n2, "normalized drive changed (trial {trial}, alpha {alpha})");
            let pred = model.forward(&n1);
            let (p1, _) = parallel_spike(&pred, &x, v_th).unwrap();
            let (p2, _) = parallel_spike(&pred, &xs, v_th * alpha).unwrap();
            assert_eq!(p1.0, p2.0, "parallel spikes changed (trial {trial}, alpha {alpha})");
        }
    });
}

#[test]
fn c06_spiking_backward_matches_finite_differences_and_truncation_is_exact_without_leak() {
    gate::check(6, "spiking backward matches central differences; leak-free full and truncated gradients coincide", || {
        let sg = SurrogateFn { alpha: 1.3 };
        let l = 64;
        let h = 1e-5;
        let check = |analytic: f64, fd: f64, what: &str| {
            let tol = 1e-4 * fd.abs().max(1e-3);
            assert!(
                (analytic - fd).abs() <= tol,
                "{what}: analytic {analytic:.9e} vs central difference {fd:.9e}"
            );
        };
        let mut rng = Rng::new(601);
        for trial in 0..25 {
            let delta = rng.normal_seq(l, 0.0, 1.0).unwrap();
            let x = rng.normal_seq(l, 0.0, 1.0).unwrap();
            let pred = rng.normal_seq(l, 0.1, 0.4).unwrap();
            let v_th = rng.uniform(0.7, 1.3);

            // Fixed-threshold form: u' = pred + x, spike relaxed to g(u' − v_th).
            let pre: Vec<f64> = pred.iter().zip(&x).map(|(p, xi)| p + xi).collect();
            let spikes: Vec<u8> = pre.iter().map(|&u| (u >= v_th) as u8).collect();
            let params = NeuronParams { tau: 0.2, v_th, ..NeuronParams::default() };
            let g_sltt = backward_spiking(TrainMode::Sltt, &delta, &pre, &spikes, &params, &sg).unwrap();
            let g_sdn = backward_spiking(TrainMode::Sdn, &delta, &pre, &spikes, &params, &sg).unwrap();
            assert_eq!(g_sltt.d_input, g_sdn.d_input, "the two truncated modes share one formula");
            for t in 0..l {
                let mut xp = x.clone();
                xp[t] += h;
                let up = relaxed_forward(ThresholdForm::Fixed, &delta, &xp, &pred, v_th, &sg);
                xp[t] -= 2.0 * h;
                let down = relaxed_forward(ThresholdForm::Fixed, &delta, &xp, &pred, v_th, &sg);
                check(g_sltt.d_input[t], (up - down) / (2.0 * h), &format!("fixed d_input[{t}] trial {trial}"));
            }
            let up = relaxed_forward(ThresholdForm::Fixed, &delta, &x, &pred, v_th + h, &sg);
            let down = relaxed_forward(ThresholdForm::Fixed, &delta, &x, &pred, v_th - h, &sg);
            check(g_sltt.d_vth, (up - down) / (2.0 * h), &format!("fixed d_vth trial {trial}"));

            // Scaled form: u' = pred + x/v_th, threshold normalized to 1.
            let g_scaled = backward_spiking_scaled(&delta, &pred, &x, v_th, &sg).unwrap();
            for t in 0..l {
                let mut xp = x.clone();
                xp[t] += h;
                let up = relaxed_forward(ThresholdForm::Scaled, &delta, &xp, &pred, v_th, &sg);
                xp[t] -= 2.0 * h;
                let down = relaxed_forward(ThresholdForm::Scaled, &delta, &xp, &pred, v_th, &sg);
                check(g_scaled.d_input[t], (up - down) / (2.0 * h), &format!("scaled d_input[{t}] trial {trial}"));
            }
            let up = relaxed_forward(ThresholdForm::Scaled, &delta, &x, &pred, v_th + h, &sg);
            let down = relaxed_forward(ThresholdForm::Scaled, &delta, &x, &pred, v_th - h, &sg);
            check(g_scaled.d_vth, (up - down) / (2.0 * h), &format!("scaled d_vth trial {trial}"));
        }

        // Without leak the membrane carries no temporal credit, so the full
        // temporal backward and its single-step truncation are the same
        // computation, through the entire network, to the last bit.
        let cfg = NetConfig {
            depth: 2,
            classes: 4,
            block: BlockConfig {
                h: 8,
                n: 8,
                tau: 0.0,
                v_th_init: 0.05,
                dropout: 0.0,
                prenorm: false,
                ..BlockConfig::default()
            },
        };
        let mut net = SpikingSsmNetwork::init(&cfg, 71).unwrap();
        let (b, l) = (2usize, 24usize);
        let x = Rng::new(72).normal_seq_f32(b * l, 0.0, 1.0).unwrap();
        let labels = vec![1u8, 3u8];
        let mut tape = Tape::default();
        let stats = net.forward(&x, b, l, SpikeMode::Iterative, true, Option::None, Some(&mut tape)).unwrap();
        assert!(stats.spike_ones > 0, "needs live spikes to be meaningful");
        let mut dlogits = vec![0.0f32; b * 4];
        softmax_ce(&stats.logits, &labels, b, 4, &mut dlogits);
        let mut g1 = vec![0.0f32; net.gen_len()];
        let mut a1 = vec![0.0f32; net.aux_len()];
        net.backward(&tape, &dlogits, TrainMode::Bptt, &mut g1, &mut a1).unwrap();
        let mut g2 = vec![0.0f32; net.gen_len()];
        let mut a2 = vec![0.0f32; net.aux_len()];
        net.backward(&tape, &dlogits, TrainMode::Sltt, &mut g2, &mut a2).unwrap();
        assert_eq!(g1, g2, "leak-free temporal and truncated gradients must be identical");
        assert_eq!(a1, a2);
    });
}

#[test]
fn c07_convolutional_and_recurrent_ssm_evaluations_agree() {
    gate::check(7, "convolutional and recurrent state-space evaluations agree to 1e-8", || {
        let mut rng = Rng::new(701);
        for &l in &[1024usize, 2048, 4096, 8192] {
            let channels = s4d_lin_init(8, 64, (1e-3, 1e-1), &mut rng).unwrap();
            for (ch, p) in channels.iter().enumerate() {
                let d = discretize_zoh(p).unwrap();
                let x = rng.normal_seq(l, 0.0, 1.0).unwrap();
                let recurrent = ssm_forward_recurrent(&d, &p.c, &x);
                let kernel = ssm_kernel(&d, &p.c, l);
                let conv = causal_convolve(&kernel, &x).unwrap();
                let worst = recurrent
                    .iter()
                    .zip(&conv)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                assert!(worst <= 1e-8, "L={l} channel {ch}: max |recurrent − conv| = {worst:.3e}");
            }
        }
    });
}

#[test]
fn c08_energy_accounting_reproduces_the_reference_figures() {
    gate::check(8, "energy accounting reproduces the reference MAC/AC figures", || {
        let model = EnergyModel::default();
        let mac_j = energy(&OpCounts { mac: 275_200_000_000, ac: 0 }, &model);
        let rel = (mac_j / 1.265 - 1.0).abs();
        assert!(rel <= 0.005, "275.2G MAC gave {mac_j:.4} J, off the 1.265 J reference by {rel:.4}");
        let ac_j = energy(&OpCounts { mac: 0, ac: 72_660_000_000 }, &model);
        let rel = (ac_j / 0.0654 - 1.0).abs();
        assert!(rel <= 0.005, "72.66G AC gave {ac_j:.5} J, off the 65.40 mJ reference by {rel:.4}");
    });
}

#[test]
fn c11_fused_inference_network_matches_the_unfused_evaluation_path() {
    gate::check(11, "fused inference network matches unfused evaluation outputs", || {
        // Brief real training so the normalization statistics being folded
        // are not the identity.
        let ds = generate_dataset(2000, 128, &NeuronParams::default(), (0.0, 1.0), 1101).unwrap();
        let (mut model, _) = train_sdn(&ds, 2, 2e-3, 64, 1102).unwrap();
        model.fuse().unwrap();
        let mut rng = Rng::new(1103);
        let mut worst = 0.0f32;
        for _ in 0..100 {
            let x = rng.normal_seq_f32(512, 0.0, 1.0).unwrap();
            let unfused = model.forward_eval(&x);
            let folded = model.forward(&x);
            for (a, b) in unfused.iter().zip(&folded) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-5, "max |unfused − fused| = {worst:.3e} over 100 inputs");
    });
}
