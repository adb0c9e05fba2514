use dopanet::distributions::{stream_rng, MixtureSpec};
use dopanet::evaluation::{build_histogram, HistogramSpec};
use statrs::distribution::{ContinuousCDF, Normal};

/// Mixture mass of each bin from the normal CDF, renormalized over the range.
fn bin_masses(target: &MixtureSpec, spec: &HistogramSpec) -> Vec<f64> {
    let axis = spec.axes[0];
    let comps: Vec<(f64, Normal)> = target
        .weights()
        .iter()
        .zip(target.means())
        .zip(target.scales())
        .map(|((&w, m), &s)| (w, Normal::new(m[0], s).unwrap()))
        .collect();
    let cdf = |x: f64| comps.iter().map(|(w, n)| w * n.cdf(x)).sum::<f64>();
    let masses: Vec<f64> = (0..axis.bins())
        .map(|k| cdf(axis.edge(k + 1)) - cdf(axis.edge(k)))
        .collect();
    let total: f64 = masses.iter().sum();
    masses.into_iter().map(|m| m / total).collect()
}

#[test]
fn sampled_histogram_approaches_the_bin_integrated_pdf() {
    let target = MixtureSpec::five_mode_1d();
    let spec = HistogramSpec::standard_1d();
    let truth = bin_masses(&target, &spec);
    let kl_at = |n: usize| {
        let x = target.sample(n, &mut stream_rng(17, 0));
        let h = build_histogram(x.view(), &spec).unwrap();
        assert_eq!(h.in_range() + h.out_of_range, n as u64);
        let total = h.in_range() as f64;
        h.counts
            .iter()
            .zip(&truth)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, &q)| {
                let p = c as f64 / total;
                p * (p / q).ln()
            })
            .sum::<f64>()
    };
    let small = kl_at(10_000);
    let large = kl_at(100_000);
    assert!(large < 0.05, "KL at 1e5 samples: {large}");
    assert!(large < small, "KL must shrink with n: {small} -> {large}");
}
