use essfm_core::channel::{apply_laser_phase_noise, propagate_link, SsfmStepConfig};
use essfm_core::dbp::DbpConfig;
use essfm_core::modem::{modulate_pm_qpsk, TxConfig};
use essfm_core::sigkit::scale_to_power;
use essfm_core::spectral::OverlapPlan;
use essfm_core::train::{optimize_coefficients, training_target, windowed_mse, TrainConfig};
use essfm_core::{EssfmCoefficients, LinkConfig};

/// Full 80 × 40 km link at 0 dBm with ASE and phase noise, one block.
#[test]
fn fitted_coefficients_generalize_to_held_out_samples() {
    let (sig, _) = modulate_pm_qpsk(&TxConfig::default()).unwrap();
    let sig = scale_to_power(&sig, 0.0).unwrap();
    let sig = apply_laser_phase_noise(&sig, 100e3, 5).unwrap();
    let link = LinkConfig::default();
    let rx = propagate_link(&sig, &link, &SsfmStepConfig::new(10).unwrap(), 5).unwrap();

    let plan = OverlapPlan::new(8192, 1024).unwrap();
    let cfg = DbpConfig::essfm(link, plan, 1, EssfmCoefficients::unit(32));
    let train = TrainConfig::default();
    let fit = optimize_coefficients(&rx, &cfg, &train).unwrap();
    assert!(
        fit.final_mse * 2.0 <= fit.initial_mse,
        "{} -> {}",
        fit.initial_mse,
        fit.final_mse
    );

    let held_out = 2 * train.train_samples..3 * train.train_samples;
    let target = training_target(&rx, &cfg, train.target_steps_per_span, held_out.clone()).unwrap();
    let fresh = windowed_mse(&rx, &cfg, &fit.coeffs, &target, held_out).unwrap();
    assert!(
        (fresh - fit.final_mse).abs() <= 0.2 * fit.final_mse,
        "held-out {fresh} vs training {}",
        fit.final_mse
    );
}
