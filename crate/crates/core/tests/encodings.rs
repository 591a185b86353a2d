mod common;

use mgw::forest::{
    anc_count, fringe, g_process, g_value, height_from_walk, height_process, lukasiewicz, pruned, type_counts,
    upsilon, AncQuery,
};
use mgw::sampler::{sample_forest, OffspringSampler, RngStream, SampleOptions};
use mgw::spectra::fixtures;
use mgw::{Encodings, Error, PlanarForest};
use proptest::prelude::*;

/// Planar forests in depth-first order from child counts and types.
fn arb_forest() -> impl Strategy<Value = PlanarForest> {
    (1usize..4, 1usize..6).prop_flat_map(|(k, roots)| {
        prop::collection::vec((0usize..4, 0usize..k), 1..120).prop_map(move |spec| build(k, roots, &spec))
    })
}

fn build(k: usize, roots: usize, spec: &[(usize, usize)]) -> PlanarForest {
    let mut parents: Vec<Option<usize>> = Vec::new();
    let mut types = Vec::new();
    // pending child slots as (parent, remaining)
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut it = spec.iter().cycle();
    let mut roots_left = roots;
    let budget = spec.len();
    loop {
        let parent = match stack.last_mut() {
            Some((p, rem)) => {
                let p = *p;
                *rem -= 1;
                if *rem == 0 {
                    stack.pop();
                }
                Some(p)
            }
            None if roots_left > 0 => {
                roots_left -= 1;
                None
            }
            None => break,
        };
        let &(c, t) = it.next().unwrap();
        let v = parents.len();
        parents.push(parent);
        types.push(t);
        let c = if v >= budget { 0 } else { c };
        if c > 0 {
            stack.push((v, c));
        }
    }
    PlanarForest::from_parents(&parents, &types, k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn height_and_walk_match_naive_oracles(f in arb_forest()) {
        let h = height_process(&f);
        prop_assert_eq!(&h, &common::naive_heights(&f));
        let v = lukasiewicz(&f);
        prop_assert_eq!(&v, &common::naive_walk(&f));
        prop_assert_eq!(height_from_walk(&v).unwrap(), h);
        prop_assert_eq!(*v.last().unwrap(), -(f.num_components() as i64));
        let first_hits = (1..=f.num_components() as i64)
            .map(|c| v.iter().position(|&x| x == -c).unwrap())
            .collect::<Vec<_>>();
        prop_assert!(first_hits.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn upsilon_is_one_minus_running_min(f in arb_forest()) {
        let v = lukasiewicz(&f);
        let u = upsilon(&f);
        let mut min = 0i64;
        for m in 0..f.len() {
            min = min.min(v[m]);
            prop_assert_eq!(u[m] as i64, 1 - min);
        }
    }

    #[test]
    fn lambda_and_g_are_inverse(f in arb_forest()) {
        let lam = type_counts(&f);
        for m in 0..f.len() {
            let total: u32 = lam.iter().map(|l| l[m]).sum();
            prop_assert_eq!(total as usize, m + 1);
        }
        for i in 0..f.num_types() {
            let g = g_process(&f, i);
            for (k, &pos) in g.iter().enumerate() {
                prop_assert_eq!(lam[i][pos as usize] as usize, k + 1);
                prop_assert_eq!(g_value(&f, i, k).unwrap(), pos as usize);
            }
            let missing = g_value(&f, i, g.len());
            prop_assert_eq!(missing, Err(Error::TypeAbsent { ty: i, needed: g.len() + 1 }));
        }
    }

    #[test]
    fn csv_roundtrip_preserves_encodings(f in arb_forest()) {
        let mut buf = Vec::new();
        f.write_csv(&mut buf, true).unwrap();
        let back = PlanarForest::read_csv(&buf[..], Some(f.num_types())).unwrap();
        prop_assert_eq!(Encodings::of(&back), Encodings::of(&f));
    }

    #[test]
    fn anc_counts_sum_over_types_to_depth(f in arb_forest()) {
        for v in 0..f.len() {
            let total: usize = (0..f.num_types()).map(|i| anc_count(&f, v, &AncQuery::of_type(i))).sum();
            prop_assert_eq!(total, f.depth(v));
        }
    }

    #[test]
    fn fringe_and_pruned_partition_the_vertices(f in arb_forest(), pick in any::<prop::sample::Index>()) {
        let v = pick.index(f.len());
        let fr = fringe(&f, v);
        let pr = pruned(&f, v);
        prop_assert_eq!(fr.len() + pr.len(), f.len() + 1);
        prop_assert_eq!(fr.num_components(), 1);
        prop_assert_eq!(pr.num_components(), f.num_components());
        let h = height_process(&fr);
        for (u, &d) in h.iter().enumerate() {
            prop_assert_eq!(d as usize + f.depth(v), f.depth(v + u));
        }
    }
}

#[test]
fn sampled_forests_satisfy_the_walk_identities() {
    for (mi, model) in [fixtures::mono1(), fixtures::alt2(), common::random_critical_model(3, 11)]
        .iter()
        .enumerate()
    {
        let s = OffspringSampler::new(model);
        for r in 0..300 {
            let mut rng = RngStream::new(mi as u64, r).rng();
            let f = match sample_forest(&s, &[0, 0, 0], &mut rng, SampleOptions::with_cap(50_000)) {
                Ok(f) => f,
                Err(Error::CapExceeded { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let v = lukasiewicz(&f);
            assert_eq!(height_from_walk(&v).unwrap(), height_process(&f));
            assert_eq!(*v.last().unwrap(), -3);
        }
    }
}

#[test]
fn malformed_walks_are_rejected() {
    assert_eq!(height_from_walk(&[0, -2]), Err(Error::MalformedWalk(0)));
    assert_eq!(height_from_walk(&[1, 0]), Err(Error::MalformedWalk(0)));
    assert_eq!(height_from_walk(&[0, 1, -1, -3]), Err(Error::MalformedWalk(1)));
}
