use ancestree::asg::{classify_paths, resolve_genealogy, simulate_asg, AsgRealisation, PathClass};
use ancestree::coeffs::limit_h;
use ancestree::forward::{moran_occupation, moran_rates, stationary_moran};
use ancestree::ldasg::{geometric_law, stationary_ld, AsymptoticWalk, LdWalk};
use ancestree::{ModelParams, Pmf};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn base(n: usize) -> ModelParams {
    ModelParams::new(n, 1.0, 1.0, 0.5).unwrap()
}

fn occupation_law(offset: usize, occ: &[f64]) -> Pmf {
    Pmf::normalized(offset, occ.to_vec()).unwrap()
}

#[test]
fn moran_jump_counts_pass_chi_square() {
    let p = ModelParams::new(20, 1.5, 0.8, 0.4).unwrap();
    let rates = moran_rates(&p);
    let (occ, exits) = moran_occupation(&p, 10, 20_000.0, 21).unwrap();
    let mut stat = 0.0;
    let mut cells = 0;
    for k in 0..=20 {
        let expected = (rates.up(k) + rates.down(k)) * occ[k];
        if expected >= 5.0 {
            stat += (exits[k] as f64 - expected).powi(2) / expected;
            cells += 1;
        }
    }
    assert!(cells >= 10);
    let critical = ChiSquared::new(cells as f64).unwrap().inverse_cdf(0.99);
    assert!(
        stat < critical,
        "chi-square {stat} >= {critical} on {cells} cells"
    );

    let tv = occupation_law(0, &occ).tv(&stationary_moran(&p).unwrap());
    assert!(tv < 0.02, "{tv}");
}

#[test]
fn lookdown_walk_keeps_immune_line_and_reaches_stationarity() {
    for (n, s, u, nu0) in [(8, 1.0, 1.0, 0.5), (12, 2.5, 0.4, 0.3), (5, 0.5, 2.0, 0.8)] {
        let p = ModelParams::new(n, s, u, nu0).unwrap();
        let mut walk = LdWalk::new(&p, 31);
        let mut occ = vec![0.0; n];
        let mut last = 0.0;
        for _ in 0..1_000_000 {
            let before = walk.state();
            let ev = walk.step_before(f64::INFINITY).expect("positive rates");
            occ[before.levels - 1] += ev.time - last;
            last = ev.time;
            let st = walk.state();
            assert!(
                1 <= st.immune && st.immune <= st.levels && st.levels <= n,
                "{st:?} after {ev:?}"
            );
        }
        let tv = occupation_law(1, &occ).tv(&stationary_ld(&p).unwrap());
        assert!(tv < 0.02, "N={n}: {tv}");
    }
}

#[test]
fn asymptotic_walk_matches_geometric_law() {
    let p = base(10);
    let mut walk = AsymptoticWalk::new(&p, 41, 0, u64::MAX);
    let mut occ = vec![0.0; 200];
    let mut last = 0.0;
    for _ in 0..1_000_000 {
        let before = walk.levels();
        let ev = walk
            .step_before(f64::INFINITY)
            .unwrap()
            .expect("positive rates");
        occ[before - 1] += ev.time - last;
        last = ev.time;
        let st = walk.state();
        assert_eq!(st.immune, st.levels);
        assert!(st.levels >= 1 && st.levels < 200);
    }
    let geo = geometric_law(p.derive().ell_minus, 200).unwrap();
    let tv = occupation_law(1, &occ).tv(&geo);
    assert!(tv < 0.02, "{tv}");
}

proptest! {
    #[test]
    fn rao_blackwell_sum_is_limit_h(s in 0.05f64..3.0, u in 0.05f64..3.0, nu0 in 0.05f64..0.95, x in 0.0f64..=1.0) {
        let p = ModelParams::new(10, s, u, nu0).unwrap();
        let ell = p.derive().ell_minus;
        let m = ((-40.0 / ell.ln()).ceil() as usize).clamp(2, 1 << 16);
        let geo = geometric_law(ell, m).unwrap();
        let sum: f64 = geo
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * (1.0 - (1.0 - x).powi(i as i32 + 1)))
            .sum();
        prop_assert!((sum - limit_h(&p, x).unwrap()).abs() < 1e-12);
    }
}

/// Selective arrows followed by the true ancestral lineage of the first
/// sample line, found by typing every line at every event.
fn ancestral_arrows(real: &AsgRealisation, types: &[u8]) -> (Vec<usize>, usize) {
    use ancestree::asg::EventKind;
    let n = real.params.n();
    let mut ty = vec![1u8; n + 1];
    for &l in real.final_active() {
        ty[l] = types[l - 1];
    }
    let mut above = vec![Vec::new(); real.events.len()];
    for (e, ev) in real.events.iter().enumerate().rev() {
        above[e] = ty.clone();
        match ev.kind {
            EventKind::Selective { src, dst } if ty[src] == 0 => ty[dst] = 0,
            EventKind::Selective { .. } => {}
            EventKind::Neutral { src, dst } => ty[dst] = ty[src],
            EventKind::Mut0 { line } => ty[line] = 0,
            EventKind::Mut1 { line } => ty[line] = 1,
        }
    }
    let mut line = real.sample[0];
    let mut used = Vec::new();
    for (e, ev) in real.events.iter().enumerate() {
        match ev.kind {
            EventKind::Selective { src, dst } if dst == line && above[e][src] == 0 => {
                used.push(e);
                line = src;
            }
            EventKind::Neutral { src, dst } if dst == line => line = src,
            _ => {}
        }
    }
    (used, line)
}

#[test]
fn true_ancestral_path_is_never_fictitious() {
    let mut checked = 0;
    for (i, &(s, u, nu0)) in [(1.0, 1.0, 0.5), (2.0, 0.5, 0.3), (0.5, 2.0, 0.8)]
        .iter()
        .enumerate()
    {
        let p = ModelParams::new(4, s, u, nu0).unwrap();
        for seed in 0..80u64 {
            let r = simulate_asg(&p, &[1], 4.0, seed + 100 * i as u64, true).unwrap();
            let Ok(paths) = classify_paths(&r, 20_000) else {
                continue;
            };
            let fin = r.final_active().to_vec();
            for mask in 0u32..(1 << fin.len()) {
                let mut types = vec![1u8; p.n()];
                for (b, &l) in fin.iter().enumerate() {
                    types[l - 1] = ((mask >> b) & 1) as u8;
                }
                let (used, end) = ancestral_arrows(&r, &types);
                assert_eq!(end, resolve_genealogy(&r, &types).ancestor_line);
                let path = paths
                    .iter()
                    .find(|x| x.start_line == r.sample[0] && x.used_arrows == used)
                    .expect("the ancestral lineage is a listed path");
                assert_eq!(path.final_line, end);
                assert_ne!(path.class, PathClass::Fictitious);
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "{checked}");
}
