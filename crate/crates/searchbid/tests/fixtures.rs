use std::fs;
use std::path::{Path, PathBuf};

use searchbid::ingest::{
    build_panel, load_and_validate, read_panel, sponsored_position_stats, write_panel, FlagCode,
    RejectReason,
};
use searchbid::Error;

fn fixture(sub: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(sub)
}

#[test]
fn fixture_panel_shape() {
    let raw = load_and_validate(&fixture("")).unwrap();
    assert_eq!(raw.rejects().count(), 0);
    assert_eq!(raw.snapshots.rows.len(), 1056);
    let built = build_panel(&raw, None).unwrap();
    let p = &built.panel;
    assert_eq!(p.n_positions, 22);
    assert_eq!(p.markets.len(), 3);
    // 3 keywords x 2 days x 8 searches
    assert_eq!(p.n_ranking_lists(), 48);
    let missing: Vec<_> = built
        .flags
        .iter()
        .filter(|f| f.code == FlagCode::MissingSales)
        .collect();
    assert_eq!(missing.len(), 1);
    assert_eq!(missing[0].keyword, "yoga-mat");
    p.validate().unwrap();
}

#[test]
fn panel_files_round_trip() {
    let raw = load_and_validate(&fixture("")).unwrap();
    let built = build_panel(&raw, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), &built.panel).unwrap();
    assert_eq!(read_panel(dir.path()).unwrap(), built.panel);
}

#[test]
fn sixty_slot_page_has_sponsored_blocks() {
    let raw = load_and_validate(&fixture("page60")).unwrap();
    let stats = sponsored_position_stats(&raw.snapshots.rows, None);
    assert_eq!(stats.n_positions, 60);
    assert_eq!(stats.grid_shape(), (5, 12));
    let ratio: Vec<f64> = stats.ratio().into_iter().map(|r| r.unwrap()).collect();
    let block = |p: usize| matches!(p, 1..=4 | 11..=14 | 19..=22);
    let lowest_in_block = (1..=60)
        .filter(|&p| block(p))
        .map(|p| ratio[p - 1])
        .fold(f64::INFINITY, f64::min);
    let highest_outside = (1..=60)
        .filter(|&p| !block(p))
        .map(|p| ratio[p - 1])
        .fold(0.0, f64::max);
    assert!(
        lowest_in_block > highest_outside,
        "{lowest_in_block} vs {highest_outside}"
    );
    let heat = stats.heatmap();
    assert_eq!((heat.len(), heat[0].len()), (5, 12));
    assert_eq!(heat[1][0], stats.ratio()[12]);
}

fn write_inputs(dir: &Path, snapshots: &str, sales: &str, keywords: &str) {
    fs::write(dir.join("snapshots.csv"), snapshots).unwrap();
    fs::write(dir.join("sales.csv"), sales).unwrap();
    fs::write(dir.join("keywords.csv"), keywords).unwrap();
}

const SNAP_HEADER: &str = "keyword,timestamp,position,product,price,sponsored,rating,reviews\n";

#[test]
fn bad_rows_are_rejected_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let snaps = format!(
        "{SNAP_HEADER}\
         mug,2024-05-01T10:00:00Z,1,A,12.5,1,4.5,120\n\
         mug,2024-05-01T10:00:00Z,2,B,-3,0,4.1,40\n\
         mug,2024-05-01T10:00:00Z,3,C,9,maybe,4.0,10\n\
         mug,yesterday,4,D,9,0,4.0,10\n\
         mug,2024-05-01T10:00:00Z,61,E,9,0,4.0,10\n\
         mug,2024-05-01T10:00:00Z,5,F,9,0,7.5,10\n\
         mug,2024-05-01T10:00:00Z,6,G,9,0\n\
         mug,2024-05-01T10:00:00Z,7,H,,0,4.0,10\n\
         mug,2024-05-01 10:00:00,8,I,abc,0,4.0,10\n"
    );
    let sales = "product,day,sales,category\nA,2024-05-01,30,home\nA,2024-05-01,31,home\nB,05/01/2024,3,home\nC,2024-05-01,-1,home\n";
    let keywords = "keyword,volume,category\nmug,90000,home\ncup,0,home\n";
    write_inputs(dir.path(), &snaps, sales, keywords);
    let raw = load_and_validate(dir.path()).unwrap();
    assert_eq!(
        raw.snapshots.rows.len() + raw.snapshots.rejects.len(),
        raw.snapshots.input_rows
    );
    assert_eq!(
        raw.sales.rows.len() + raw.sales.rejects.len(),
        raw.sales.input_rows
    );
    assert_eq!(
        raw.keywords.rows.len() + raw.keywords.rejects.len(),
        raw.keywords.input_rows
    );
    let reasons: Vec<RejectReason> = raw.snapshots.rejects.iter().map(|r| r.reason).collect();
    assert_eq!(
        reasons,
        [
            RejectReason::NegativePrice,
            RejectReason::BadFlag,
            RejectReason::BadTimestamp,
            RejectReason::PositionOutOfRange,
            RejectReason::RatingOutOfRange,
            RejectReason::FieldCount,
            RejectReason::MissingValue,
            RejectReason::BadNumber,
        ]
    );
    assert_eq!(raw.snapshots.rows.len(), 1);
    let sale_reasons: Vec<_> = raw.sales.rejects.iter().map(|r| r.reason).collect();
    assert_eq!(
        sale_reasons,
        [
            RejectReason::DuplicateRecord,
            RejectReason::BadDate,
            RejectReason::NegativeSales
        ]
    );
    assert_eq!(
        raw.keywords.rejects[0].reason,
        RejectReason::NonPositiveVolume
    );
    // line numbers count the header as line 1
    assert_eq!(raw.snapshots.rejects[0].line, 3);
}

#[test]
fn repeated_position_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let snaps = format!(
        "{SNAP_HEADER}mug,2024-05-01T10:00:00Z,1,A,12.5,1,4.5,120\nmug,2024-05-01T10:00:00Z,1,B,11,0,4.1,40\n"
    );
    write_inputs(
        dir.path(),
        &snaps,
        "product,day,sales,category\n",
        "keyword,volume,category\nmug,9000,home\n",
    );
    let err = load_and_validate(dir.path()).unwrap_err();
    assert!(
        matches!(err, Error::DuplicatePosition { position: 1, .. }),
        "{err}"
    );
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(
        dir.path(),
        "keyword,timestamp,position,product,price,sponsored,rating\n",
        "product,day,sales,category\n",
        "keyword,volume,category\n",
    );
    match load_and_validate(dir.path()).unwrap_err() {
        Error::MissingColumn { column, .. } => assert_eq!(column, "reviews"),
        e => panic!("{e}"),
    }
}
