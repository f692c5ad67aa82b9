use hybridtail_core::calibrator::{fit, FitConfig};
use hybridtail_core::ecdf::EmpiricalCdf;
use hybridtail_core::ggpd::{fixed_point_trace, ggpd_derive, ggpd_fit, GgpdConfig, GgpdParams};
use hybridtail_core::special::normal_pdf;

const ORDERS: [f64; 6] = [0.35, 0.375, 0.4, 0.425, 0.45, 0.475];

fn lab(law: &GgpdParams, seed: u64) -> (Vec<f64>, f64, Vec<Vec<f64>>) {
    let data = law.sample(10_000, seed).unwrap();
    let ecdf = EmpiricalCdf::new(&data).unwrap();
    let inits: Vec<f64> = ORDERS.iter().map(|&p| ecdf.quantile(p).unwrap()).collect();
    let traces = fixed_point_trace(&data, &inits, &GgpdConfig::default()).unwrap();
    (data, ecdf.max() - ecdf.min(), traces)
}

fn is_monotone(trace: &[f64], slack: f64) -> bool {
    let up = trace[trace.len() - 1] >= trace[0];
    trace
        .windows(2)
        .all(|w| if up { w[1] >= w[0] - slack } else { w[1] <= w[0] + slack })
}

#[test]
fn junction_starts_converge_to_one_limit() {
    let law = ggpd_derive(0.0, 1.0, 0.4354).unwrap();
    let (_, range, traces) = lab(&law, 7);
    let limits: Vec<f64> = traces.iter().map(|t| *t.last().unwrap()).collect();
    let lo = limits.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = limits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo < 1e-3 * range, "{:?}", limits);
    for (trace, limit) in traces.iter().zip(&limits) {
        assert!((limit - 0.4354).abs() < 0.05, "{}", limit);
        // increments smaller than the solver tolerance are not a change of direction
        assert!(is_monotone(trace, 1e-9 * range), "{:?}", trace);
    }
}

#[test]
fn limit_is_stationary() {
    let law = ggpd_derive(0.0, 1.0, 0.4354).unwrap();
    let data = law.sample(10_000, 7).unwrap();
    let first = ggpd_fit(&data, &GgpdConfig::default()).unwrap();
    let cfg = GgpdConfig {
        u0: Some(first.params.u),
        ..GgpdConfig::default()
    };
    let again = ggpd_fit(&data, &cfg).unwrap();
    for u in &again.u_trace {
        assert!((u - first.params.u).abs() < 1e-6);
    }
}

#[test]
fn closer_start_needs_no_more_iterations() {
    let law = ggpd_derive(3.0, 2.0, 4.0443).unwrap();
    let (_, _, traces) = lab(&law, 11);
    let limit = *traces[0].last().unwrap();
    let mut by_distance: Vec<(f64, usize)> = traces.iter().map(|t| ((t[0] - limit).abs(), t.len())).collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in by_distance.windows(2) {
        assert!(w[0].1 <= w[1].1, "{:?}", by_distance);
    }
}

#[test]
fn collapsed_bridge_on_two_component_data() {
    // a G-GPD law whose tail also satisfies beta = xi * u, the edge of the
    // three-component family where the exponential bridge has zero width
    let z: f64 = 0.5;
    let xi = z / normal_pdf(z) - 1.0;
    let u = 1.0 / (xi * normal_pdf(z));
    let law = ggpd_derive(u - z, 1.0, u).unwrap();
    assert!((law.beta - law.xi * u).abs() < 1e-12);
    let data = law.sample(10_000, 3).unwrap();
    let ecdf = EmpiricalCdf::new(&data).unwrap();
    let r = fit(&data, &FitConfig::default()).unwrap();
    let gap = r.theta.u2 - r.derived.u1;
    assert!(gap < 0.01 * (ecdf.max() - ecdf.min()), "{:?} gap {}", r.theta, gap);
}
