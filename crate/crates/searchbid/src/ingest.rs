//! Scraped marketplace data: search result snapshots, imputed daily sales
//! and keyword metadata, joined into estimation panels.
//!
//! Column definitions are in `SCHEMA.md` at the crate root.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use searchbid_core::estimation::{daily_market_size, KeywordPanel, Panel};

use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const SNAPSHOT_FILE: &str = "snapshots.csv";
pub const SALES_FILE: &str = "sales.csv";
pub const KEYWORD_FILE: &str = "keywords.csv";

/// Deepest position any supported page layout has.
pub const MAX_POSITION: u32 = 60;

/// Features carried into the panel: mean rating and `ln(1 + reviews)`.
pub const PANEL_FEATURES: [&str; 2] = ["rating", "log_reviews"];

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSnapshotRow {
    pub keyword: String,
    pub timestamp: NaiveDateTime,
    pub position: u32,
    pub product: String,
    pub price: f64,
    pub sponsored: bool,
    pub rating: f64,
    pub reviews: u64,
    pub bought_last_month: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SalesRow {
    pub product: String,
    pub day: NaiveDate,
    pub sales: f64,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordRow {
    pub keyword: String,
    /// Monthly searches.
    pub volume: f64,
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    FieldCount,
    MissingValue,
    BadNumber,
    BadTimestamp,
    BadDate,
    BadFlag,
    PositionOutOfRange,
    NegativePrice,
    RatingOutOfRange,
    NegativeSales,
    NonPositiveVolume,
    DuplicateRecord,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::FieldCount => "field_count",
            RejectReason::MissingValue => "missing_value",
            RejectReason::BadNumber => "bad_number",
            RejectReason::BadTimestamp => "bad_timestamp",
            RejectReason::BadDate => "bad_date",
            RejectReason::BadFlag => "bad_flag",
            RejectReason::PositionOutOfRange => "position_out_of_range",
            RejectReason::NegativePrice => "negative_price",
            RejectReason::RatingOutOfRange => "rating_out_of_range",
            RejectReason::NegativeSales => "negative_sales",
            RejectReason::NonPositiveVolume => "nonpositive_volume",
            RejectReason::DuplicateRecord => "duplicate_record",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub file: String,
    /// 1-based line in the file, header included.
    pub line: u64,
    pub reason: RejectReason,
    pub detail: String,
}

/// Parsed rows of one file plus what was turned away.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub rows: Vec<T>,
    pub rejects: Vec<Reject>,
    pub input_rows: usize,
}

impl<T> Loaded<T> {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            rejects: Vec::new(),
            input_rows: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTables {
    pub snapshots: Loaded<SearchSnapshotRow>,
    pub sales: Loaded<SalesRow>,
    pub keywords: Loaded<KeywordRow>,
}

impl RawTables {
    pub fn rejects(&self) -> impl Iterator<Item = &Reject> {
        self.snapshots
            .rejects
            .iter()
            .chain(&self.sales.rejects)
            .chain(&self.keywords.rejects)
    }
}

type Bad = (RejectReason, String);

/// Positional access to the columns a file needs.
struct Columns {
    idx: Vec<usize>,
    optional: Vec<Option<usize>>,
    width: usize,
}

impl Columns {
    fn resolve(
        headers: &csv::StringRecord,
        file: &str,
        required: &[&'static str],
        optional: &[&str],
    ) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h == name);
        let idx = required
            .iter()
            .map(|&c| {
                find(c).ok_or(Error::MissingColumn {
                    file: file.to_string(),
                    column: c,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let optional = optional.iter().map(|c| find(c)).collect();
        Ok(Self {
            idx,
            optional,
            width: headers.len(),
        })
    }

    fn get<'r>(
        &self,
        rec: &'r csv::StringRecord,
        k: usize,
        name: &str,
    ) -> std::result::Result<&'r str, Bad> {
        let v = rec.get(self.idx[k]).unwrap_or("");
        if v.is_empty() {
            return Err((RejectReason::MissingValue, format!("{name} is empty")));
        }
        Ok(v)
    }

    fn get_optional<'r>(&self, rec: &'r csv::StringRecord, k: usize) -> Option<&'r str> {
        self.optional[k]
            .and_then(|i| rec.get(i))
            .filter(|v| !v.is_empty())
    }
}

fn number<T: std::str::FromStr>(v: &str, name: &str) -> std::result::Result<T, Bad> {
    v.parse().map_err(|_| {
        (
            RejectReason::BadNumber,
            format!("{name} `{v}` is not a number"),
        )
    })
}

fn finite(v: &str, name: &str) -> std::result::Result<f64, Bad> {
    let x: f64 = number(v, name)?;
    if !x.is_finite() {
        return Err((
            RejectReason::BadNumber,
            format!("{name} `{v}` is not finite"),
        ));
    }
    Ok(x)
}

fn flag(v: &str, name: &str) -> std::result::Result<bool, Bad> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err((
            RejectReason::BadFlag,
            format!("{name} `{v}` is not a boolean"),
        )),
    }
}

/// RFC 3339, or `YYYY-MM-DD HH:MM:SS` / `YYYY-MM-DDTHH:MM:SS` read as UTC.
pub fn parse_timestamp(v: &str) -> Option<NaiveDateTime> {
    if let Ok(t) = DateTime::parse_from_rfc3339(v) {
        return Some(t.naive_utc());
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(v, f).ok())
}

fn date(v: &str) -> std::result::Result<NaiveDate, Bad> {
    NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| {
        (
            RejectReason::BadDate,
            format!("day `{v}` is not YYYY-MM-DD"),
        )
    })
}

/// Runs `parse` over every record, sorting results into rows and rejects.
fn read_table<R: Read, T>(
    reader: R,
    file: &str,
    required: &[&'static str],
    optional: &[&str],
    mut parse: impl FnMut(&Columns, &csv::StringRecord) -> std::result::Result<Option<T>, Bad>,
) -> Result<Loaded<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(file, e))?.clone();
    let cols = Columns::resolve(&headers, file, required, optional)?;
    let mut out = Loaded::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(file, e))?;
        out.input_rows += 1;
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = if rec.len() != cols.width {
            Err((
                RejectReason::FieldCount,
                format!("{} fields, header has {}", rec.len(), cols.width),
            ))
        } else {
            parse(&cols, &rec)
        };
        match parsed {
            Ok(Some(row)) => out.rows.push(row),
            Ok(None) => {}
            Err((reason, detail)) => out.rejects.push(Reject {
                file: file.to_string(),
                line,
                reason,
                detail,
            }),
        }
    }
    debug_assert_eq!(out.rows.len() + out.rejects.len(), out.input_rows);
    Ok(out)
}

pub fn read_snapshots<R: Read>(reader: R, file: &str) -> Result<Loaded<SearchSnapshotRow>> {
    const REQ: [&str; 8] = [
        "keyword",
        "timestamp",
        "position",
        "product",
        "price",
        "sponsored",
        "rating",
        "reviews",
    ];
    let mut seen: HashSet<(String, NaiveDateTime, u32)> = HashSet::new();
    let mut duplicate = None;
    let loaded = read_table(reader, file, &REQ, &["bought_last_month"], |c, r| {
        let keyword = c.get(r, 0, "keyword")?.to_string();
        let ts = c.get(r, 1, "timestamp")?;
        let timestamp = parse_timestamp(ts).ok_or_else(|| {
            (
                RejectReason::BadTimestamp,
                format!("timestamp `{ts}` not recognized"),
            )
        })?;
        let position: u32 = number(c.get(r, 2, "position")?, "position")?;
        if !(1..=MAX_POSITION).contains(&position) {
            return Err((
                RejectReason::PositionOutOfRange,
                format!("position {position} outside 1..={MAX_POSITION}"),
            ));
        }
        let product = c.get(r, 3, "product")?.to_string();
        let price = finite(c.get(r, 4, "price")?, "price")?;
        if price < 0.0 {
            return Err((RejectReason::NegativePrice, format!("price {price}")));
        }
        let sponsored = flag(c.get(r, 5, "sponsored")?, "sponsored")?;
        let rating = finite(c.get(r, 6, "rating")?, "rating")?;
        if !(0.0..=5.0).contains(&rating) {
            return Err((
                RejectReason::RatingOutOfRange,
                format!("rating {rating} outside [0, 5]"),
            ));
        }
        let reviews: u64 = number(c.get(r, 7, "reviews")?, "reviews")?;
        let bought_last_month = c
            .get_optional(r, 0)
            .map(|v| number(v, "bought_last_month"))
            .transpose()?;
        if !seen.insert((keyword.clone(), timestamp, position)) && duplicate.is_none() {
            duplicate = Some(Error::DuplicatePosition {
                keyword: keyword.clone(),
                timestamp: ts.to_string(),
                position,
            });
        }
        Ok(Some(SearchSnapshotRow {
            keyword,
            timestamp,
            position,
            product,
            price,
            sponsored,
            rating,
            reviews,
            bought_last_month,
        }))
    })?;
    match duplicate {
        Some(e) => Err(e),
        None => Ok(loaded),
    }
}

pub fn read_sales<R: Read>(reader: R, file: &str) -> Result<Loaded<SalesRow>> {
    let mut seen: HashSet<(String, NaiveDate)> = HashSet::new();
    read_table(
        reader,
        file,
        &["product", "day", "sales", "category"],
        &[],
        |c, r| {
            let product = c.get(r, 0, "product")?.to_string();
            let day = date(c.get(r, 1, "day")?)?;
            let sales = finite(c.get(r, 2, "sales")?, "sales")?;
            if sales < 0.0 {
                return Err((RejectReason::NegativeSales, format!("sales {sales}")));
            }
            let category = c.get(r, 3, "category")?.to_string();
            if !seen.insert((product.clone(), day)) {
                return Err((
                    RejectReason::DuplicateRecord,
                    format!("second sales record for {product} on {day}"),
                ));
            }
            Ok(Some(SalesRow {
                product,
                day,
                sales,
                category,
            }))
        },
    )
}

pub fn read_keywords<R: Read>(reader: R, file: &str) -> Result<Loaded<KeywordRow>> {
    let mut seen: HashSet<String> = HashSet::new();
    read_table(
        reader,
        file,
        &["keyword", "volume", "category"],
        &[],
        |c, r| {
            let keyword = c.get(r, 0, "keyword")?.to_string();
            let volume = finite(c.get(r, 1, "volume")?, "volume")?;
            if volume <= 0.0 {
                return Err((RejectReason::NonPositiveVolume, format!("volume {volume}")));
            }
            let category = c.get(r, 2, "category")?.to_string();
            if !seen.insert(keyword.clone()) {
                return Err((
                    RejectReason::DuplicateRecord,
                    format!("keyword {keyword} listed twice"),
                ));
            }
            Ok(Some(KeywordRow {
                keyword,
                volume,
                category,
            }))
        },
    )
}

fn open(dir: &Path, name: &str) -> Result<File> {
    let path = dir.join(name);
    File::open(&path).map_err(|e| Error::io(path, e))
}

/// Reads the three schema files from `dir`. The files are parsed in
/// parallel; each is checked for row conservation.
pub fn load_and_validate(dir: &Path) -> Result<RawTables> {
    let ((snapshots, sales), keywords) = rayon::join(
        || {
            rayon::join(
                || read_snapshots(open(dir, SNAPSHOT_FILE)?, SNAPSHOT_FILE),
                || read_sales(open(dir, SALES_FILE)?, SALES_FILE),
            )
        },
        || read_keywords(open(dir, KEYWORD_FILE)?, KEYWORD_FILE),
    );
    let tables = RawTables {
        snapshots: snapshots?,
        sales: sales?,
        keywords: keywords?,
    };
    for (file, rows, rejects, input) in [
        (
            SNAPSHOT_FILE,
            tables.snapshots.rows.len(),
            tables.snapshots.rejects.len(),
            tables.snapshots.input_rows,
        ),
        (
            SALES_FILE,
            tables.sales.rows.len(),
            tables.sales.rejects.len(),
            tables.sales.input_rows,
        ),
        (
            KEYWORD_FILE,
            tables.keywords.rows.len(),
            tables.keywords.rejects.len(),
            tables.keywords.input_rows,
        ),
    ] {
        if rows + rejects != input {
            return Err(Error::Format(format!(
                "{file}: {rows} rows + {rejects} rejects != {input} input rows"
            )));
        }
    }
    Ok(tables)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlagCode {
    /// Ranked on a day without a sales record.
    MissingSales,
    /// Ranked with zero sales; the share cannot be inverted.
    ZeroSales,
    /// Has sales but was not shown in any of the day's searches.
    NotRanked,
    /// Keyword appears in snapshots but not in the keyword table.
    UnknownKeyword,
    /// Inside shares of a day reach 1; the keyword is dropped.
    ShareSum,
    /// No product-day survived.
    NoObservations,
}

impl FlagCode {
    pub fn code(self) -> &'static str {
        match self {
            FlagCode::MissingSales => "missing_sales",
            FlagCode::ZeroSales => "zero_sales",
            FlagCode::NotRanked => "not_ranked",
            FlagCode::UnknownKeyword => "unknown_keyword",
            FlagCode::ShareSum => "share_sum",
            FlagCode::NoObservations => "no_observations",
        }
    }

    /// Whether the flag removes the whole keyword.
    pub fn drops_keyword(self) -> bool {
        matches!(
            self,
            FlagCode::UnknownKeyword | FlagCode::ShareSum | FlagCode::NoObservations
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelFlag {
    pub keyword: String,
    pub day: Option<NaiveDate>,
    pub product: Option<String>,
    pub code: FlagCode,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltPanel {
    pub panel: Panel,
    /// Calendar date of each panel day, per market.
    pub dates: Vec<Vec<NaiveDate>>,
    pub flags: Vec<PanelFlag>,
}

/// Page layout implied by the deepest position seen.
pub fn infer_layout(snapshots: &[SearchSnapshotRow]) -> usize {
    let deepest = snapshots.iter().map(|r| r.position).max().unwrap_or(0);
    if deepest <= 22 {
        22
    } else {
        60
    }
}

#[derive(Default, Clone, Copy)]
struct DayStats {
    price: f64,
    rating: f64,
    reviews: f64,
    count: u32,
    sponsored: bool,
}

/// Joins the tables into one market per keyword. Keys are walked in sorted
/// order so the panel does not depend on row order in the files.
pub fn build_panel(tables: &RawTables, n_positions: Option<usize>) -> Result<BuiltPanel> {
    let snaps = &tables.snapshots.rows;
    let layout = n_positions.unwrap_or_else(|| infer_layout(snaps));
    let deepest = snaps.iter().map(|r| r.position as usize).max().unwrap_or(0);
    if deepest > layout {
        return Err(Error::Format(format!(
            "position {deepest} does not fit a {layout}-slot page"
        )));
    }
    let keywords: HashMap<&str, &KeywordRow> = tables
        .keywords
        .rows
        .iter()
        .map(|k| (k.keyword.as_str(), k))
        .collect();
    let sales: HashMap<(&str, NaiveDate), f64> = tables
        .sales
        .rows
        .iter()
        .map(|s| ((s.product.as_str(), s.day), s.sales))
        .collect();

    // keyword → day → timestamp → rows
    let mut grouped: BTreeMap<
        &str,
        BTreeMap<NaiveDate, BTreeMap<NaiveDateTime, Vec<&SearchSnapshotRow>>>,
    > = BTreeMap::new();
    for r in snaps {
        grouped
            .entry(&r.keyword)
            .or_default()
            .entry(r.timestamp.date())
            .or_default()
            .entry(r.timestamp)
            .or_default()
            .push(r);
    }

    let mut markets = Vec::new();
    let mut all_dates = Vec::new();
    let mut flags = Vec::new();
    for (&kw, by_day) in &grouped {
        let Some(meta) = keywords.get(kw) else {
            flags.push(PanelFlag {
                keyword: kw.to_string(),
                day: None,
                product: None,
                code: FlagCode::UnknownKeyword,
                detail: "no keyword metadata".into(),
            });
            continue;
        };
        let products: Vec<&str> = by_day
            .values()
            .flat_map(|d| d.values().flatten().map(|r| r.product.as_str()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<&str, u32> = products
            .iter()
            .enumerate()
            .map(|(k, p)| (*p, k as u32))
            .collect();
        let jn = products.len();
        let days: Vec<NaiveDate> = by_day.keys().copied().collect();
        let market_size = daily_market_size(meta.volume);

        let mut stats = vec![DayStats::default(); jn * days.len()];
        let mut rankings = Vec::with_capacity(days.len());
        for (t, searches) in by_day.values().enumerate() {
            let mut lists = Vec::with_capacity(searches.len());
            for rows in searches.values() {
                let mut rows = rows.clone();
                rows.sort_by_key(|r| r.position);
                let mut list = Vec::with_capacity(rows.len());
                for r in rows {
                    let j = index[r.product.as_str()];
                    list.push(j);
                    let s = &mut stats[t * jn + j as usize];
                    s.price += r.price;
                    s.rating += r.rating;
                    s.reviews += r.reviews as f64;
                    s.count += 1;
                    s.sponsored |= r.sponsored;
                }
                lists.push(list);
            }
            rankings.push(lists);
        }

        // product-level fallbacks for days a product was not shown
        let mut fallback = vec![DayStats::default(); jn];
        for t in 0..days.len() {
            for j in 0..jn {
                let s = stats[t * jn + j];
                let f = &mut fallback[j];
                f.price += s.price;
                f.rating += s.rating;
                f.reviews += s.reviews;
                f.count += s.count;
            }
        }

        let n = jn * days.len();
        let mut m = KeywordPanel {
            keyword: kw.to_string(),
            category: meta.category.clone(),
            volume: meta.volume,
            products: products.iter().map(|p| p.to_string()).collect(),
            days: days.len(),
            n_features: PANEL_FEATURES.len(),
            sales: vec![0.0; n],
            shares: vec![0.0; n],
            prices: vec![0.0; n],
            sponsored: vec![false; n],
            features: vec![0.0; n * PANEL_FEATURES.len()],
            observed: vec![false; n],
            rankings,
        };
        let mut market_flags = Vec::new();
        for (t, &day) in days.iter().enumerate() {
            for (j, &product) in products.iter().enumerate() {
                let i = m.idx(t, j);
                let s = stats[i];
                let src = if s.count > 0 { s } else { fallback[j] };
                let c = src.count.max(1) as f64;
                m.prices[i] = src.price / c;
                m.features[2 * i] = src.rating / c;
                m.features[2 * i + 1] = (src.reviews / c).ln_1p();
                m.sponsored[i] = s.sponsored;
                let q = sales.get(&(product, day)).copied();
                let mut note = |code: FlagCode, detail: String| {
                    market_flags.push(PanelFlag {
                        keyword: kw.to_string(),
                        day: Some(day),
                        product: Some(product.to_string()),
                        code,
                        detail,
                    })
                };
                match (s.count > 0, q) {
                    (true, None) => note(
                        FlagCode::MissingSales,
                        "ranked without a sales record".into(),
                    ),
                    (true, Some(q)) if q == 0.0 => {
                        note(FlagCode::ZeroSales, "ranked with zero sales".into())
                    }
                    (true, Some(q)) => {
                        m.sales[i] = q;
                        m.shares[i] = q / market_size;
                        m.observed[i] = true;
                    }
                    (false, Some(q)) => {
                        m.sales[i] = q;
                        note(FlagCode::NotRanked, format!("{q} sales but not shown"));
                    }
                    (false, None) => {}
                }
            }
        }
        let mut dropped = None;
        for (t, &day) in days.iter().enumerate() {
            let total: f64 = (0..jn)
                .map(|j| m.idx(t, j))
                .filter(|&i| m.observed[i])
                .map(|i| m.shares[i])
                .sum();
            if total >= 1.0 {
                dropped = Some(PanelFlag {
                    keyword: kw.to_string(),
                    day: Some(day),
                    product: None,
                    code: FlagCode::ShareSum,
                    detail: format!("inside shares sum to {total}"),
                });
                break;
            }
        }
        if dropped.is_none() && !m.observed.iter().any(|&o| o) {
            dropped = Some(PanelFlag {
                keyword: kw.to_string(),
                day: None,
                product: None,
                code: FlagCode::NoObservations,
                detail: "no product-day with positive sales".into(),
            });
        }
        flags.extend(market_flags);
        match dropped {
            Some(f) => flags.push(f),
            None => {
                markets.push(m);
                all_dates.push(days);
            }
        }
    }
    let panel = Panel {
        n_positions: layout,
        markets,
    };
    if !panel.markets.is_empty() {
        panel.validate()?;
    }
    Ok(BuiltPanel {
        panel,
        dates: all_dates,
        flags,
    })
}

pub const MARKETS_FILE: &str = "panel_markets.csv";
pub const OBSERVATIONS_FILE: &str = "panel_observations.csv";
pub const RANKINGS_FILE: &str = "panel_rankings.csv";

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// Writes a panel as three CSV files. Floats are written in shortest
/// round-trip form, so [`read_panel`] restores the panel exactly.
pub fn write_panel(dir: &Path, panel: &Panel) -> Result<()> {
    let wrap = |name: &'static str| move |e: csv::Error| Error::csv(name, e);
    let mut mk = writer(dir, MARKETS_FILE)?;
    mk.write_record([
        "keyword",
        "category",
        "volume",
        "days",
        "products",
        "n_features",
        "n_positions",
    ])
    .map_err(wrap(MARKETS_FILE))?;
    let mut ob = writer(dir, OBSERVATIONS_FILE)?;
    let nf = panel.n_features();
    let mut head: Vec<String> = [
        "keyword",
        "day",
        "product",
        "sales",
        "share",
        "price",
        "sponsored",
        "observed",
    ]
    .map(String::from)
    .to_vec();
    head.extend((0..nf).map(|k| format!("feature_{k}")));
    ob.write_record(&head).map_err(wrap(OBSERVATIONS_FILE))?;
    let mut rk = writer(dir, RANKINGS_FILE)?;
    rk.write_record(["keyword", "day", "search", "position", "product"])
        .map_err(wrap(RANKINGS_FILE))?;

    for m in &panel.markets {
        mk.write_record([
            m.keyword.clone(),
            m.category.clone(),
            m.volume.to_string(),
            m.days.to_string(),
            m.n_products().to_string(),
            m.n_features.to_string(),
            panel.n_positions.to_string(),
        ])
        .map_err(wrap(MARKETS_FILE))?;
        for t in 0..m.days {
            for j in 0..m.n_products() {
                let i = m.idx(t, j);
                let mut rec = vec![
                    m.keyword.clone(),
                    t.to_string(),
                    m.products[j].clone(),
                    m.sales[i].to_string(),
                    m.shares[i].to_string(),
                    m.prices[i].to_string(),
                    u8::from(m.sponsored[i]).to_string(),
                    u8::from(m.observed[i]).to_string(),
                ];
                rec.extend((0..m.n_features).map(|k| m.feature(t, j, k).to_string()));
                ob.write_record(&rec).map_err(wrap(OBSERVATIONS_FILE))?;
            }
            for (s, list) in m.rankings[t].iter().enumerate() {
                for (pos, &j) in list.iter().enumerate() {
                    rk.write_record([
                        m.keyword.clone(),
                        t.to_string(),
                        s.to_string(),
                        (pos + 1).to_string(),
                        m.products[j as usize].clone(),
                    ])
                    .map_err(wrap(RANKINGS_FILE))?;
                }
            }
        }
    }
    for (w, name) in [
        (&mut mk, MARKETS_FILE),
        (&mut ob, OBSERVATIONS_FILE),
        (&mut rk, RANKINGS_FILE),
    ] {
        w.flush().map_err(|e| Error::io(dir.join(name), e))?;
    }
    Ok(())
}

fn records(dir: &Path, name: &'static str) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::Reader::from_reader(open(dir, name)?);
    rdr.records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::csv(name, e))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, file: &str) -> Result<T> {
    let v = rec.get(k).unwrap_or("");
    v.parse()
        .map_err(|_| Error::Format(format!("{file}: cannot parse `{v}` in column {k}")))
}

pub fn read_panel(dir: &Path) -> Result<Panel> {
    let mut markets = Vec::new();
    let mut n_positions = None;
    let mut by_name = HashMap::new();
    for rec in records(dir, MARKETS_FILE)? {
        let days: usize = field(&rec, 3, MARKETS_FILE)?;
        let jn: usize = field(&rec, 4, MARKETS_FILE)?;
        let nf: usize = field(&rec, 5, MARKETS_FILE)?;
        let np: usize = field(&rec, 6, MARKETS_FILE)?;
        if n_positions.replace(np).is_some_and(|p| p != np) {
            return Err(Error::Format(format!(
                "{MARKETS_FILE}: markets disagree on the page layout"
            )));
        }
        let n = days * jn;
        by_name.insert(rec[0].to_string(), markets.len());
        markets.push(KeywordPanel {
            keyword: rec[0].to_string(),
            category: rec[1].to_string(),
            volume: field(&rec, 2, MARKETS_FILE)?,
            products: Vec::with_capacity(jn),
            days,
            n_features: nf,
            sales: Vec::with_capacity(n),
            shares: Vec::with_capacity(n),
            prices: Vec::with_capacity(n),
            sponsored: Vec::with_capacity(n),
            features: Vec::with_capacity(n * nf),
            observed: Vec::with_capacity(n),
            rankings: vec![Vec::new(); days],
        });
    }
    let market = |name: &str, file: &str| -> Result<usize> {
        by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::Format(format!("{file}: unknown keyword {name}")))
    };
    for rec in records(dir, OBSERVATIONS_FILE)? {
        let m = &mut markets[market(&rec[0], OBSERVATIONS_FILE)?];
        let day: usize = field(&rec, 1, OBSERVATIONS_FILE)?;
        if day == 0 {
            m.products.push(rec[2].to_string());
        }
        m.sales.push(field(&rec, 3, OBSERVATIONS_FILE)?);
        m.shares.push(field(&rec, 4, OBSERVATIONS_FILE)?);
        m.prices.push(field(&rec, 5, OBSERVATIONS_FILE)?);
        m.sponsored
            .push(field::<u8>(&rec, 6, OBSERVATIONS_FILE)? == 1);
        m.observed
            .push(field::<u8>(&rec, 7, OBSERVATIONS_FILE)? == 1);
        for k in 0..m.n_features {
            m.features.push(field(&rec, 8 + k, OBSERVATIONS_FILE)?);
        }
    }
    let index: Vec<HashMap<String, u32>> = markets
        .iter()
        .map(|m| {
            m.products
                .iter()
                .enumerate()
                .map(|(k, p)| (p.clone(), k as u32))
                .collect()
        })
        .collect();
    for rec in records(dir, RANKINGS_FILE)? {
        let mi = market(&rec[0], RANKINGS_FILE)?;
        let day: usize = field(&rec, 1, RANKINGS_FILE)?;
        let search: usize = field(&rec, 2, RANKINGS_FILE)?;
        let j = *index[mi].get(&rec[4]).ok_or_else(|| {
            Error::Format(format!("{RANKINGS_FILE}: unknown product {}", &rec[4]))
        })?;
        let lists = markets[mi]
            .rankings
            .get_mut(day)
            .ok_or_else(|| Error::Format(format!("{RANKINGS_FILE}: day {day} out of range")))?;
        if lists.len() <= search {
            lists.resize(search + 1, Vec::new());
        }
        lists[search].push(j);
    }
    let panel = Panel {
        n_positions: n_positions.unwrap_or(0),
        markets,
    };
    if !panel.markets.is_empty() {
        panel.validate()?;
    }
    Ok(panel)
}

/// Listings and sponsored listings per position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionStats {
    pub n_positions: usize,
    pub listings: Vec<u64>,
    pub sponsored: Vec<u64>,
}

impl PositionStats {
    /// Sponsored share at each position; `None` where nothing was listed.
    pub fn ratio(&self) -> Vec<Option<f64>> {
        self.listings
            .iter()
            .zip(&self.sponsored)
            .map(|(&n, &s)| (n > 0).then(|| s as f64 / n as f64))
            .collect()
    }

    /// Rows and columns of the on-page grid: 5×12 for 60 slots, a single
    /// row otherwise.
    pub fn grid_shape(&self) -> (usize, usize) {
        if self.n_positions == 60 {
            (5, 12)
        } else {
            (1, self.n_positions)
        }
    }

    pub fn heatmap(&self) -> Vec<Vec<Option<f64>>> {
        let (_, cols) = self.grid_shape();
        self.ratio()
            .chunks(cols.max(1))
            .map(<[_]>::to_vec)
            .collect()
    }
}

pub fn sponsored_position_stats(
    snapshots: &[SearchSnapshotRow],
    n_positions: Option<usize>,
) -> PositionStats {
    let n = n_positions.unwrap_or_else(|| infer_layout(snapshots));
    let mut st = PositionStats {
        n_positions: n,
        listings: vec![0; n],
        sponsored: vec![0; n],
    };
    for r in snapshots {
        let k = r.position as usize - 1;
        if k < n {
            st.listings[k] += 1;
            st.sponsored[k] += u64::from(r.sponsored);
        }
    }
    st
}
