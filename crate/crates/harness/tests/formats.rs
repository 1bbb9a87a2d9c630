use metamorph_core::field::{Deformation, GridSpec, ManifoldImage};
use metamorph_core::ManifoldKind;
use metamorph_harness::dti::{encode_dti, parse_dti, CLAMP};
use metamorph_harness::mvf;
use proptest::prelude::*;

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn euclidean_image_roundtrip_is_bit_exact(
        n in 3usize..6,
        vals in proptest::collection::vec(-1e300f64..1e300, 60),
    ) {
        let g = GridSpec::new(&[n, n + 1]).unwrap();
        let v = vals[..g.len() * 2].to_vec();
        let img = ManifoldImage::new(g, ManifoldKind::Euclidean(2), v.clone()).unwrap();
        let bytes = mvf::image_to_bytes(&img).unwrap();
        let back = mvf::image_from_bytes(&bytes).unwrap();
        prop_assert_eq!(bits(back.values()), bits(&v));
        prop_assert_eq!(back.grid(), img.grid());
        prop_assert_eq!(mvf::image_to_bytes(&back).unwrap(), bytes);
    }
}

#[test]
fn spd_and_deformation_roundtrips() {
    let g = GridSpec::square(5).unwrap();
    let img = ManifoldImage::from_fn(g.clone(), ManifoldKind::Spd(2), |x| {
        vec![1.0 + x[0] / 3.0, 0.1 * x[1], 2.0 - x[0] * x[1]]
    })
    .unwrap();
    let back = mvf::image_from_bytes(&mvf::image_to_bytes(&img).unwrap()).unwrap();
    assert_eq!(bits(back.values()), bits(img.values()));
    assert_eq!(back.kind(), ManifoldKind::Spd(2));

    let phi = Deformation::from_fn(g, 0.07, |x| {
        let b = x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        vec![0.3 * b, -0.2 * b]
    })
    .unwrap();
    let back = mvf::deformation_from_bytes(&mvf::deformation_to_bytes(&phi).unwrap()).unwrap();
    assert_eq!(bits(back.displacement()), bits(phi.displacement()));
    assert_eq!(back.epsilon(), 0.07);
}

#[test]
fn every_truncation_is_rejected() {
    let g = GridSpec::square(3).unwrap();
    let img = ManifoldImage::constant(g, &metamorph_core::Point::new(ManifoldKind::Spd(2), vec![2.0, 0.0, 1.0]).unwrap());
    let bytes = mvf::image_to_bytes(&img).unwrap();
    for cut in 0..bytes.len() {
        assert!(mvf::image_from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(mvf::image_from_bytes(&long).is_err());
}

#[test]
fn header_is_validated_before_payload() {
    let g = GridSpec::square(3).unwrap();
    let img = ManifoldImage::new(g, ManifoldKind::Euclidean(1), vec![0.0; 9]).unwrap();
    let bytes = mvf::image_to_bytes(&img).unwrap();
    let hlen = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let header = String::from_utf8(bytes[12..12 + hlen].to_vec()).unwrap();
    assert!(header.contains("\"payload_len\":72"), "{header}");
    let forged = header.replace("\"payload_len\":72", "\"payload_len\":80");
    let mut out = b"MVF1".to_vec();
    out.extend_from_slice(&(forged.len() as u64).to_le_bytes());
    out.extend_from_slice(forged.as_bytes());
    out.extend_from_slice(&[0u8; 80]);
    assert!(mvf::image_from_bytes(&out).is_err());
    let mut bad = bytes.clone();
    bad[3] = b'2';
    assert!(mvf::image_from_bytes(&bad).is_err());
    // a displacement file is not an image
    let phi = Deformation::identity(GridSpec::square(3).unwrap(), 0.1).unwrap();
    assert!(mvf::image_from_bytes(&mvf::deformation_to_bytes(&phi).unwrap()).is_err());
}

#[test]
fn identity_tensors_give_constant_image() {
    let bytes = encode_dti(&vec![[1.0, 0.0, 0.0, 1.0, 0.0, 1.0]; 12]);
    let d = parse_dti(&bytes, &[4, 3], false).unwrap();
    assert_eq!(d.repaired, 0);
    assert_eq!(d.image.kind(), ManifoldKind::Spd(3));
    for i in 0..12 {
        assert_eq!(d.image.value(i), &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    }
    let back = mvf::image_from_bytes(&mvf::image_to_bytes(&d.image).unwrap()).unwrap();
    assert_eq!(bits(back.values()), bits(d.image.values()));
}

#[test]
fn one_negative_voxel_is_repaired() {
    let mut t = vec![[3.0, 0.5, 0.0, 2.0, 0.1, 1.0]; 9];
    // eigenvalues 2, -1, 1
    t[4] = [0.5, 1.5, 0.0, 0.5, 0.0, 1.0];
    let d = parse_dti(&encode_dti(&t), &[3, 3], false).unwrap();
    assert_eq!(d.repaired, 1);
    // untouched voxels keep their values
    assert_eq!(d.image.value(0), &t[0]);
    let m = nalgebra::Matrix3::from_row_slice(&{
        let v = d.image.value(4);
        [v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5]]
    });
    let mut e: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    let top: f64 = nalgebra::Matrix3::new(3.0, 0.5, 0.0, 0.5, 2.0, 0.1, 0.0, 0.1, 1.0)
        .symmetric_eigen()
        .eigenvalues
        .max();
    assert!((e[0] - CLAMP * top).abs() < 1e-12, "{e:?}");
    assert!((e[1] - 1.0).abs() < 1e-12 && (e[2] - 2.0).abs() < 1e-12);
}

#[test]
fn dti_errors_and_slices() {
    let t = vec![[2.0, 0.3, 0.1, 1.0, 0.2, 0.5]; 9];
    let bytes = encode_dti(&t);
    assert!(parse_dti(&bytes[..bytes.len() - 8], &[3, 3], false).is_err());
    assert!(parse_dti(&bytes, &[3, 4], false).is_err());
    assert!(parse_dti(&encode_dti(&vec![[-1.0, 0.0, 0.0, -1.0, 0.0, -2.0]; 9]), &[3, 3], false).is_err());
    let s = parse_dti(&bytes, &[3, 3], true).unwrap();
    assert_eq!(s.image.kind(), ManifoldKind::Spd(2));
    assert_eq!(s.image.value(3), &[2.0, 0.3, 1.0]);
}

#[test]
fn dti_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.raw");
    std::fs::write(&p, encode_dti(&vec![[1.0, 0.0, 0.0, 1.0, 0.0, 1.0]; 27])).unwrap();
    let d = metamorph_harness::dti::load_dti_raw(&p, &[3, 3, 3], false).unwrap();
    assert_eq!(d.image.grid().len(), 27);
    assert!(metamorph_harness::dti::load_dti_raw(&dir.path().join("missing"), &[3, 3], false).is_err());
}
