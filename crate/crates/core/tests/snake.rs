mod common;

use mgw::sampler::{sample_forest, ForestStream, OffspringSampler, RngStream, Roots, SampleOptions};
use mgw::snake::{attach_spatial, big_sigma, big_sigma_squared, snake_process, SpatialLaw};
use mgw::spectra::fixtures;
use mgw::{Error, OffspringModel, SpectralData};
use rand::SeedableRng;

#[test]
fn positions_are_sums_of_displacements_along_the_ancestry() {
    let model = fixtures::alt2_spatial();
    let s = OffspringSampler::new(&model);
    for r in 0..200 {
        let mut rng = RngStream::new(1, r).rng();
        let f = match sample_forest(&s, &[0, 1], &mut rng, SampleOptions::with_cap(50_000)) {
            Ok(f) => f,
            Err(Error::CapExceeded { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        let sf = attach_spatial(&f, &model, &mut rng, true).unwrap();
        let pos = snake_process(&sf);
        for v in 0..f.len() {
            let expected: f64 = std::iter::once(v).chain(f.ancestors(v)).map(|u| sf.y[u]).sum();
            assert_eq!(pos[v], expected);
            if f.parent(v).is_none() {
                assert_eq!(sf.y[v], 0.0);
            } else {
                assert_eq!(sf.y[v].abs(), 1.0);
            }
        }
    }
}

#[test]
fn streamed_snake_agrees_with_attached_displacements() {
    let model = fixtures::alt2_spatial();
    let s = OffspringSampler::new(&model);
    let mut st = ForestStream::new(&s, Roots::Cycle(vec![0]), RngStream::new(2, 0).rng(), SampleOptions::default())
        .with_spatial(true);
    // increments between a vertex and its parent are +-1
    let mut positions = Vec::new();
    for _ in 0..20_000 {
        let v = st.next_vertex().unwrap();
        positions.push(v.position);
        match v.parent {
            Some(p) => assert_eq!((v.position - positions[p]).abs(), 1.0),
            None => assert_eq!(v.position, 0.0),
        }
    }
}

#[test]
fn missing_laws_default_to_zero_or_fail_in_strict_mode() {
    let model = fixtures::alt2()
        .with_spatial(0, vec![1, 1], SpatialLaw::independent_signs(2))
        .unwrap();
    let s = OffspringSampler::new(&model);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let f = loop {
        let f = sample_forest(&s, &[0], &mut rng, SampleOptions::with_cap(1000)).unwrap();
        if f.len() > 1 {
            break f;
        }
    };
    let sf = attach_spatial(&f, &model, &mut rng, false).unwrap();
    for v in 0..f.len() {
        if f.type_of(v) == 0 && f.parent(v).is_some() {
            assert_eq!(sf.y[v], 0.0);
        }
    }
    assert_eq!(
        attach_spatial(&f, &model, &mut rng, true),
        Err(Error::MissingLaw { ty: 2, word: vec![1] })
    );
}

#[test]
fn big_sigma_scales_quadratically() {
    let model = fixtures::alt2_spatial();
    let spec = SpectralData::compute(&model).unwrap();
    assert!((big_sigma_squared(&model, &spec) - 1.0).abs() < 1e-12);
    let scaled: OffspringModel = model.scaled_spatial(2.0);
    assert!((big_sigma_squared(&scaled, &spec) - 4.0).abs() < 1e-12);
    let dirac = fixtures::alt2()
        .with_spatial(0, vec![1, 1], SpatialLaw::dirac(2))
        .unwrap()
        .with_spatial(1, vec![0], SpatialLaw::dirac(1))
        .unwrap();
    assert_eq!(big_sigma(&dirac, &spec), Err(Error::DegenerateSpatial));
}
