mod common;

use common::*;
use epigrav_core::io::{export, ingest, schema, write_atomic};
use epigrav_core::panel::Resolution;
use epigrav_core::Error;

#[test]
fn export_then_ingest_round_trips_every_object() {
    let units = unit_index(&[2, 2]);
    let panel = monthly_panel(&[2, 2], 18);
    let structure = structure_with_airports(&units, &[2, 1]);
    let cube = covariate_cube(panel.axis(), 3);
    let dir = tempfile::tempdir().unwrap();

    let manifest = export(dir.path(), &panel, Some(&structure), Some(&cube)).unwrap();
    assert_eq!(manifest.hashes.len(), 5);

    let back = ingest(dir.path()).unwrap();
    assert_eq!(back.panel, panel);
    assert_eq!(back.structure.as_ref(), Some(&structure));
    assert_eq!(back.cube.as_ref(), Some(&cube));
    assert_eq!(back.report.n_districts, 4);
    assert_eq!(back.report.n_regions, 2);
    assert_eq!(back.report.n_times, 18);
    assert_eq!(back.report.n_airports, 3);
    assert_eq!(back.report.hashes_verified, 5);
    let text = back.report.to_string();
    assert!(text.contains("4 districts"), "{text}");
}

#[test]
fn counts_only_bundle_round_trips_without_spatial_files() {
    let panel = daily_panel(&[3], 30);
    let dir = tempfile::tempdir().unwrap();
    export(dir.path(), &panel, None, None).unwrap();
    let back = ingest(dir.path()).unwrap();
    assert_eq!(back.panel, panel);
    assert!(back.structure.is_none());
    assert!(back.cube.is_none());
}

fn write_counts(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("counts.csv");
    std::fs::write(&path, format!("district_id,region_id,date,cases\n{body}")).unwrap();
    path
}

#[test]
fn negative_count_is_rejected_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_counts(
        dir.path(),
        "a,r0,2020-01-01,3\na,r0,2020-01-02,-2\n",
    );
    let err = schema::read_counts(&path, Resolution::Daily).unwrap_err();
    match err {
        Error::Schema { line, message, .. } => {
            assert_eq!(line, Some(3));
            assert!(message.contains("negative case count"), "{message}");
        }
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn missing_duplicate_and_region_flip_rows_are_rejected() {
    let dir = tempfile::tempdir().unwrap();

    let gap = write_counts(dir.path(), "a,r0,2020-01-01,3\na,r0,2020-01-03,1\n");
    let err = schema::read_counts(&gap, Resolution::Daily).unwrap_err();
    assert!(err.to_string().contains("no row for district a"), "{err}");

    let dup = write_counts(dir.path(), "a,r0,2020-01-01,3\na,r0,2020-01-01,4\n");
    let err = schema::read_counts(&dup, Resolution::Daily).unwrap_err();
    assert!(err.to_string().contains("duplicate row"), "{err}");

    let flip = write_counts(dir.path(), "a,r0,2020-01-01,3\na,r1,2020-01-02,1\n");
    let err = schema::read_counts(&flip, Resolution::Daily).unwrap_err();
    assert!(err.to_string().contains("region"), "{err}");
}

#[test]
fn monthly_counts_must_sit_on_the_first_of_the_month() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_counts(dir.path(), "a,r0,2020-01-15,3\n");
    let err = schema::read_counts(&path, Resolution::Monthly).unwrap_err();
    assert!(err.to_string().contains("first of the month"), "{err}");
    let ok = write_counts(dir.path(), "a,r0,2020-01-01,3\na,r0,2020-02-01,1\n");
    let panel = schema::read_counts(&ok, Resolution::Monthly).unwrap();
    assert_eq!(panel.n_times(), 2);
}

#[test]
fn bad_headers_and_dates_are_schema_errors_on_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("counts.csv");
    std::fs::write(&path, "district,region_id,date,cases\na,r0,2020-01-01,3\n").unwrap();
    let err = schema::read_counts(&path, Resolution::Daily).unwrap_err();
    assert!(err.to_string().contains("header"), "{err}");

    let path = write_counts(dir.path(), "a,r0,01/02/2020,3\n");
    let err = schema::read_counts(&path, Resolution::Daily).unwrap_err();
    assert!(err.to_string().contains("YYYY-MM-DD"), "{err}");
}

#[test]
fn tampered_file_fails_the_manifest_hash_check() {
    let panel = daily_panel(&[2], 10);
    let dir = tempfile::tempdir().unwrap();
    export(dir.path(), &panel, None, None).unwrap();
    let counts = dir.path().join("counts.csv");
    let mut bytes = std::fs::read(&counts).unwrap();
    bytes.extend_from_slice(b"a,r0,2014-03-11,7\n");
    write_atomic(&counts, &bytes).unwrap();
    let err = ingest(dir.path()).unwrap_err();
    assert!(err.to_string().contains("hash mismatch"), "{err}");
}

#[test]
fn manifest_cross_file_rules_are_enforced() {
    let dir = tempfile::tempdir().unwrap();
    write_counts(dir.path(), "a,r0,2020-01-01,3\n");

    std::fs::write(
        dir.path().join("manifest.toml"),
        "resolution = \"daily\"\ncounts = \"counts.csv\"\nairports = \"airports.csv\"\n",
    )
    .unwrap();
    let err = ingest(dir.path()).unwrap_err();
    assert!(err.to_string().contains("declared together"), "{err}");

    std::fs::write(
        dir.path().join("manifest.toml"),
        "resolution = \"daily\"\ncounts = \"counts.csv\"\ncovariates = \"covariates.csv\"\n",
    )
    .unwrap();
    let err = ingest(dir.path()).unwrap_err();
    assert!(err.to_string().contains("airports file"), "{err}");
}

#[test]
fn adjacency_errors_name_the_unknown_district_and_line() {
    let units = unit_index(&[2]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adjacency.csv");
    std::fs::write(&path, "district_id_a,district_id_b\nd00,d01\nd00,zzz\n").unwrap();
    let err = schema::read_adjacency(&path, &units).unwrap_err();
    match err {
        Error::Schema { line, message, .. } => {
            assert_eq!(line, Some(3));
            assert!(message.contains("zzz"), "{message}");
        }
        other => panic!("expected a schema error, got {other:?}"),
    }

    std::fs::write(&path, "district_id_a,district_id_b\nd00,d00\n").unwrap();
    let err = schema::read_adjacency(&path, &units).unwrap_err();
    assert!(err.to_string().contains("itself"), "{err}");
}

#[test]
fn covariate_gaps_and_unknown_airports_are_rejected() {
    let units = unit_index(&[2]);
    let structure = structure_with_airports(&units, &[1]);
    let airports = structure.airports();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("covariates.csv");

    std::fs::write(
        &path,
        "airport_id,month,passengers\na0,2020-01,100\na0,2020-03,90\n",
    )
    .unwrap();
    let err = schema::read_covariates(
        &path,
        airports,
        epigrav_core::covariate::CovariateTransform::Log1p,
    )
    .unwrap_err();
    assert!(err.to_string().contains("no volume"), "{err}");

    std::fs::write(&path, "airport_id,month,passengers\nnope,2020-01,100\n").unwrap();
    let err = schema::read_covariates(
        &path,
        airports,
        epigrav_core::covariate::CovariateTransform::Log1p,
    )
    .unwrap_err();
    assert!(err.to_string().contains("unknown airport"), "{err}");
}
