use std::collections::BTreeSet;

use ancestree::asg::{
    classify_paths, estimate_h_asg, estimate_h_forward, relevant_lines, resolve_genealogy,
    simulate_asg, summarize_paths, PathClass, DEFAULT_PATH_CAP,
};
use ancestree::coeffs::h_table;
use ancestree::ModelParams;

fn realisations() -> Vec<(ModelParams, Vec<usize>, f64, u64)> {
    let mut out = Vec::new();
    let sets = [
        (1.0, 1.0, 0.5),
        (2.0, 0.5, 0.3),
        (0.5, 2.0, 0.8),
        (3.0, 0.2, 0.5),
    ];
    for (i, &(s, u, nu0)) in sets.iter().enumerate() {
        for n in [3usize, 4, 5] {
            let p = ModelParams::new(n, s, u, nu0).unwrap();
            for seed in 0..60u64 {
                let sample = if seed % 3 == 0 { vec![1, 2] } else { vec![1] };
                out.push((p, sample, 3.0 + (seed % 5) as f64, seed + 1000 * i as u64));
            }
        }
    }
    out
}

#[test]
fn path_dp_matches_explicit_listing() {
    let mut checked = 0;
    for (p, sample, tau, seed) in realisations() {
        let r = simulate_asg(&p, &sample, tau, seed, seed % 2 == 0).unwrap();
        let sum = summarize_paths(&r);
        let Ok(paths) = classify_paths(&r, 20_000) else {
            continue;
        };
        checked += 1;
        let count = |c: PathClass| paths.iter().filter(|x| x.class == c).count() as u128;
        assert_eq!(sum.total, paths.len() as u128);
        assert_eq!(sum.neutral, count(PathClass::Neutral));
        assert_eq!(sum.almost_neutral, count(PathClass::AlmostNeutral));
        assert_eq!(sum.fictitious, count(PathClass::Fictitious));
        assert_eq!(sum.truly_selective, count(PathClass::TrulySelective));
        assert_eq!(
            sum.relevant,
            paths.iter().filter(|x| x.relevant).count() as u128
        );
        assert_eq!(
            sum.immune,
            paths.iter().filter(|x| x.immune).count() as u128
        );
        let lines: BTreeSet<usize> = paths
            .iter()
            .filter(|x| x.relevant)
            .map(|x| x.final_line)
            .collect();
        assert_eq!(sum.relevant_lines, lines.into_iter().collect::<Vec<_>>());
    }
    assert!(checked > 600, "{checked}");
}

#[test]
fn relevant_paths_end_on_true_ancestors() {
    for (p, sample, tau, seed) in realisations() {
        let r = simulate_asg(&p, &sample, tau, seed, seed % 2 == 0).unwrap();
        let brute = relevant_lines(&r).unwrap();
        assert_eq!(summarize_paths(&r).relevant_lines, brute, "seed {seed}");
    }
}

#[test]
fn immune_paths_bounded_by_sample_size() {
    for (p, sample, tau, seed) in realisations() {
        let r = simulate_asg(&p, &sample, tau, seed, true).unwrap();
        let sum = summarize_paths(&r);
        assert!(sum.immune <= sample.len() as u128);
        // with no type-0 at the horizon the ancestor is reached by an immune path
        if sample.len() == 1 {
            let g = resolve_genealogy(&r, &vec![1; p.n()]);
            let paths = match classify_paths(&r, DEFAULT_PATH_CAP) {
                Ok(x) => x,
                Err(_) => continue,
            };
            assert!(paths
                .iter()
                .any(|x| x.immune && x.final_line == g.ancestor_line));
        }
    }
}

#[test]
fn ancestor_type_zero_iff_relevant_zero() {
    for (p, _, tau, seed) in realisations().into_iter().take(300) {
        let r = simulate_asg(&p, &[1], tau, seed, true).unwrap();
        let rel = relevant_lines(&r).unwrap();
        let fin = r.final_active().to_vec();
        for mask in 0u32..(1 << fin.len()) {
            let mut types = vec![1u8; p.n()];
            for (b, &l) in fin.iter().enumerate() {
                types[l - 1] = ((mask >> b) & 1) as u8;
            }
            let g = resolve_genealogy(&r, &types);
            let any_zero = rel.iter().any(|&l| types[l - 1] == 0);
            assert_eq!(g.ancestor_type == 0, any_zero);
        }
    }
}

#[test]
fn line_count_rates_match_simulation() {
    // occupation and up-jumps of the active-set size along one long run
    let p = ModelParams::new(6, 1.5, 0.7, 0.5).unwrap();
    let r = simulate_asg(&p, &[1], 20_000.0, 77, false).unwrap();
    let mut occ = [0.0f64; 7];
    let mut ups = [0u64; 7];
    let mut last = 0.0;
    for (e, ev) in r.events.iter().enumerate() {
        let k = r.active[e].len();
        occ[k] += ev.time - last;
        last = ev.time;
        if r.active[e + 1].len() == k + 1 {
            ups[k] += 1;
        }
    }
    for k in 1..6 {
        let expect = (k * (6 - k)) as f64 * 1.5 / 6.0;
        let est = ups[k] as f64 / occ[k];
        let se = (ups[k] as f64).sqrt() / occ[k];
        assert!((est - expect).abs() < 4.0 * se, "k={k} {est} {expect} {se}");
    }
}

#[test]
fn estimators_agree_with_table() {
    let p = ModelParams::new(4, 1.0, 1.0, 0.5).unwrap();
    let h = h_table(&p).unwrap();
    for k in 1..4 {
        let f = estimate_h_forward(&p, k, 20_000, 5).unwrap();
        assert!(
            (f.estimate - h.h[k]).abs() < 4.0 * f.std_error,
            "forward k={k}"
        );
        let b = estimate_h_asg(&p, k, 30.0, 20_000, 6).unwrap();
        assert!((b.estimate - h.h[k]).abs() < 4.0 * b.std_error, "asg k={k}");
    }
}
