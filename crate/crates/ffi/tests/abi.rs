use std::ffi::CStr;

use opcap_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(opcap_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn sma_functions() {
    assert_eq!(opcap_bucket(2000.0), 2);
    assert!((opcap_bic(2000.0) - 260.0).abs() < 1e-12);
    let mut k = 0.0;
    assert_eq!(unsafe { opcap_sma_capital(2000.0, 260.0, &mut k) }, OpcapStatus::Ok);
    assert!((k - 260.0).abs() < 1e-12);
    assert_eq!(unsafe { opcap_sma_capital(-1.0, 260.0, &mut k) }, OpcapStatus::InvalidArgument);
    assert!(last_error().contains("bi"));
    assert_eq!(unsafe { opcap_sma_capital(1.0, 1.0, std::ptr::null_mut()) }, OpcapStatus::NullPointer);
}

#[test]
fn model_lifecycle_and_measures() {
    unsafe {
        let m = opcap_model_new();
        assert_eq!(opcap_model_add_lognormal(m, 10.0, 14.0, 2.0), OpcapStatus::Ok);
        assert_eq!(opcap_model_rescale(m, 1e-6), OpcapStatus::Ok);
        assert_eq!(opcap_model_len(m), 1);

        let mut mean = 0.0;
        assert_eq!(opcap_model_annual_loss_mean(m, &mut mean), OpcapStatus::Ok);
        let expected = 10.0 * (14.0f64 + 2.0).exp() * 1e-6;
        assert!((mean / expected - 1.0).abs() < 1e-12);

        let mut sla = 0.0;
        assert_eq!(
            opcap_model_sla_var(m, 0.999, OpcapSlaVariant::Corrected as i32, &mut sla),
            OpcapStatus::Ok
        );
        let mut bi = 0.0;
        assert_eq!(opcap_model_implied_bi(m, 0.999, &mut bi), OpcapStatus::Ok);
        assert!((bi / 1000.0 - 13.96).abs() < 0.01, "{bi}");
        let mut k = 0.0;
        let mut lc = 0.0;
        assert_eq!(opcap_model_long_term_lc(m, 10.0, 100.0, &mut lc), OpcapStatus::Ok);
        assert_eq!(opcap_sma_capital(bi, lc, &mut k), OpcapStatus::Ok);
        assert!((k / sla - 1.0).abs() < 1e-9);

        assert_eq!(opcap_model_sla_var(m, 0.999, 7, &mut sla), OpcapStatus::InvalidArgument);

        let (mut v1, mut se1, mut v2, mut se2) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(opcap_model_mc_var(m, 0.999, 20_000, 9, &mut v1, &mut se1), OpcapStatus::Ok);
        assert_eq!(opcap_model_mc_var(m, 0.999, 20_000, 9, &mut v2, &mut se2), OpcapStatus::Ok);
        assert_eq!((v1, se1), (v2, se2));
        assert!(se1 > 0.0);
        opcap_model_free(m);
    }
}

#[test]
fn mixed_components_and_errors() {
    unsafe {
        let m = opcap_model_new();
        assert_eq!(opcap_model_add_gamma(m, 990.0, 1.0, 1e5), OpcapStatus::Ok);
        assert_eq!(opcap_model_add_pareto(m, 1.0, 3.0, 10.0), OpcapStatus::Ok);
        assert_eq!(opcap_model_add_loglogistic(m, 1.0, 4.0, 10.0), OpcapStatus::Ok);
        assert_eq!(opcap_model_add_loggamma(m, 1.0, 2.0, 4.0), OpcapStatus::Ok);
        assert_eq!(opcap_model_add_lognormal(m, 1.0, 0.0, -1.0), OpcapStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(opcap_model_add_gamma(m, -1.0, 1.0, 1.0), OpcapStatus::InvalidArgument);
        assert_eq!(opcap_model_len(m), 4);
        let mut mean = 0.0;
        assert_eq!(opcap_model_annual_loss_mean(m, &mut mean), OpcapStatus::Ok);
        assert!(last_error().is_empty());
        opcap_model_free(m);

        let empty = opcap_model_new();
        assert_ne!(opcap_model_annual_loss_mean(empty, &mut mean), OpcapStatus::Ok);
        opcap_model_free(empty);

        assert_eq!(opcap_model_annual_loss_mean(std::ptr::null(), &mut mean), OpcapStatus::NullPointer);
        assert_eq!(opcap_model_add_lognormal(std::ptr::null_mut(), 1.0, 0.0, 1.0), OpcapStatus::NullPointer);
        opcap_model_free(std::ptr::null_mut());
        assert_eq!(opcap_model_len(std::ptr::null()), 0);
    }
}
