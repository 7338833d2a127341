mod common;

use adn_core::datastore::{
    generate_synthetic, normalize_district, parse_date, read_profile, write_profile, DataError,
    Datastore, DistrictEntry, RegistryFile,
};
use chrono::NaiveDate;
use common::*;
use proptest::prelude::*;

fn oct12() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 10, 12).unwrap()
}

#[test]
fn district_names_normalize() {
    let ds = datastore();
    assert_eq!(ds.districts(), ["business", "railway", "valley"]);
    for name in ["valley", "Valley District", "the VALLEY district", "  valley  "] {
        assert_eq!(ds.resolve(name).unwrap(), "valley", "{name}");
    }
    assert!(matches!(ds.resolve("mountain"), Err(DataError::UnknownDistrict(_))));
    assert_eq!(normalize_district("The Railway District"), "railway");
}

#[test]
fn dates_parse_in_common_forms() {
    for text in ["2024-10-12", "2024/10/12", "October 12, 2024", "Oct 12 2024", "12 October 2024"] {
        assert_eq!(parse_date(text).unwrap(), oct12(), "{text}");
    }
    assert!(parse_date("2024-13-01").is_err());
    assert!(parse_date("tomorrow").is_err());
}

#[test]
fn shipped_models_have_expected_sizes() {
    let ds = datastore();
    let valley = ds.get_model("valley").unwrap();
    assert_eq!(valley.buses().len(), 33);
    assert_eq!(valley.in_service_branch_count(), 32);
    assert_eq!(ds.get_model("railway").unwrap().buses().len(), 69);
    assert_eq!(ds.get_model("business").unwrap().buses().len(), 141);
}

#[test]
fn fixture_profile_is_read_verbatim() {
    let ds = datastore();
    let p = ds.get_profile("Valley District", oct12()).unwrap();
    let rows = read_fixture_rows(&data_dir().join("profiles/valley/2024-10-12.csv"));
    assert_eq!(p.resolution, 24);
    for (k, (pv, load)) in rows.iter().enumerate() {
        assert_eq!(p.pv[k], *pv);
        assert_eq!(p.load[k], *load);
    }
    // Same Arc from the cache on the second call.
    let again = ds.get_profile("valley", oct12()).unwrap();
    assert!(std::sync::Arc::ptr_eq(&p, &again));
}

#[test]
fn synthetic_profiles_are_seeded_and_bounded() {
    let ds = datastore();
    let d = NaiveDate::from_ymd_opt(2024, 6, 3).unwrap();
    let a = ds.get_profile("railway", d).unwrap();
    let b = generate_synthetic("railway", d, 2024, 24, 1.8, 1.0);
    assert_eq!(*a, b);
    let other_seed = generate_synthetic("railway", d, 2025, 24, 1.8, 1.0);
    assert_ne!(b, other_seed);
    let cap = ds.pv_capacity("railway").unwrap();
    assert!(b.pv.iter().all(|&v| (0.0..=cap).contains(&v)));
    // Night hours carry no PV.
    assert_eq!(b.pv[0], 0.0);
    assert_eq!(b.pv[23], 0.0);
    assert!(b.load.iter().all(|&m| m > 0.0));
}

#[test]
fn profile_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let p = generate_synthetic("business", oct12(), 9, 24, 2.7, 1.1);
    write_profile(&path, &p).unwrap();
    assert_eq!(read_profile(&path, "business", oct12()).unwrap(), p);
}

#[test]
fn malformed_profile_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    for body in [
        "hour,pv,load\n0,0,1\n",
        "step,pv_mw,load_mult\n0,0,1\n2,0,1\n",
        "step,pv_mw,load_mult\n0,-1,1\n",
        "step,pv_mw,load_mult\n0,0,0\n",
        "step,pv_mw,load_mult\n0,x,1\n",
    ] {
        std::fs::write(&path, body).unwrap();
        assert!(
            matches!(read_profile(&path, "v", oct12()), Err(DataError::MalformedProfileFile { .. })),
            "{body}"
        );
    }
}

#[test]
fn registry_rejects_non_radial_cases() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data_dir().join("cases/valley33.m")).unwrap();
    let case = adn_grid::parse_case(&text).unwrap();
    // Closing one tie switch creates a loop.
    let mut branches = case.branches().to_vec();
    let tie = branches.iter().position(|b| !b.in_service).unwrap();
    branches[tie].in_service = true;
    let case = adn_grid::GridCase::new(
        case.name(),
        case.base_mva(),
        case.buses().to_vec(),
        branches,
        case.generators().to_vec(),
    )
    .unwrap();
    std::fs::write(dir.path().join("meshed.m"), adn_grid::serialize_case(&case)).unwrap();
    let file = RegistryFile {
        seed: 1,
        resolution: 24,
        districts: [(
            "meshed".to_string(),
            DistrictEntry {
                case: "meshed.m".into(),
                profiles: "p".into(),
                pv_capacity_mw: 1.0,
                load_peak_mult: 1.0,
            },
        )]
        .into(),
    };
    let err = Datastore::from_registry(file, dir.path()).unwrap_err();
    assert!(matches!(err, DataError::BadCase { .. }), "{err}");
}

proptest! {
    #[test]
    fn synthetic_profile_invariants(seed in any::<u64>(), day in 1u32..28, cap in 0.1f64..5.0) {
        let d = NaiveDate::from_ymd_opt(2024, 3, day).unwrap();
        let p = generate_synthetic("valley", d, seed, 24, cap, 1.0);
        prop_assert_eq!(p.pv.len(), 24);
        prop_assert!(p.pv.iter().all(|&v| v >= 0.0 && v <= cap));
        prop_assert!(p.load.iter().all(|&m| m > 0.5 && m < 1.5));
        prop_assert_eq!(&p, &generate_synthetic("valley", d, seed, 24, cap, 1.0));
    }
}
