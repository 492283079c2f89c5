//! Point CSV ingestion and the prefix sidecar written next to domain files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use staircase::geo::{encode, strip_common_levels, EncodedLocation, GeoPoint};
use staircase::LocationDomain;

/// One parsed row, with its 1-based line number.
#[derive(Debug, Clone)]
pub struct PointRow {
    pub line: u64,
    pub point: GeoPoint,
}

const POINT_HEADER: [&str; 2] = ["lat", "lon"];
const TRAJECTORY_HEADER: [&str; 5] = ["user", "seq", "lat", "lon", "timestamp"];

/// Reads `lat,lon` or `user,seq,lat,lon,timestamp` rows. A first line equal to
/// the column names is skipped; all other rows must share one layout.
pub fn read_points(path: &Path) -> Result<Vec<PointRow>> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file);
    let mut width = None;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.with_context(|| format!("{}: unreadable CSV", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let names: Vec<String> = rec.iter().map(|f| f.to_ascii_lowercase()).collect();
        if rows.is_empty() && width.is_none() && (names == POINT_HEADER || names == TRAJECTORY_HEADER) {
            width = Some(rec.len());
            continue;
        }
        let (lat_i, lon_i) = match rec.len() {
            2 => (0, 1),
            5 => (2, 3),
            n => bail!("line {line}: expected 2 (lat,lon) or 5 (user,seq,lat,lon,timestamp) fields, found {n}"),
        };
        if *width.get_or_insert(rec.len()) != rec.len() {
            bail!("line {line}: row has {} fields but the file uses {}", rec.len(), width.unwrap());
        }
        let num = |i: usize, what: &str| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| anyhow!("line {line}: {what} `{}` is not a number", &rec[i]))
        };
        if rec.len() == 5 {
            rec[1].parse::<u64>().map_err(|_| anyhow!("line {line}: seq `{}` is not an integer", &rec[1]))?;
            num(4, "timestamp")?;
        }
        let point = GeoPoint::new(num(lat_i, "lat")?, num(lon_i, "lon")?).map_err(|e| anyhow!("line {line}: {e}"))?;
        rows.push(PointRow { line, point });
    }
    if rows.is_empty() {
        bail!("{}: no location rows", path.display());
    }
    Ok(rows)
}

/// Domain built from points, with the level prefix that was stripped off.
pub struct BuiltDomain {
    pub domain: LocationDomain,
    pub prefix: EncodedLocation,
    pub rows: usize,
}

pub fn build_domain(rows: &[PointRow], level: u8) -> Result<BuiltDomain> {
    let full = rows
        .iter()
        .map(|r| encode(r.point, level).map_err(|e| anyhow!("line {}: {e}", r.line)))
        .collect::<Result<Vec<_>>>()?;
    let (cut, mut locs) = strip_common_levels(&full)?;
    locs.sort();
    locs.dedup();
    if locs.len() < 2 {
        bail!("input holds fewer than two distinct cells at level {level}");
    }
    Ok(BuiltDomain { domain: LocationDomain::build(locs)?, prefix: full[0].prefix(cut), rows: rows.len() })
}

pub fn prefix_path(domain_path: &Path) -> PathBuf {
    let mut s = domain_path.as_os_str().to_owned();
    s.push(".prefix");
    PathBuf::from(s)
}

pub fn write_prefix(domain_path: &Path, prefix: &EncodedLocation) -> Result<PathBuf> {
    let p = prefix_path(domain_path);
    fs::write(&p, format!("prefix={}\n", prefix.to_bit_string()))?;
    Ok(p)
}

pub fn read_prefix(domain_path: &Path) -> Result<EncodedLocation> {
    let p = prefix_path(domain_path);
    let text = fs::read_to_string(&p)
        .with_context(|| format!("{} is needed to place raw coordinates in the domain", p.display()))?;
    let bits =
        text.trim().strip_prefix("prefix=").ok_or_else(|| anyhow!("{}: expected `prefix=<bits>`", p.display()))?;
    Ok(EncodedLocation::from_bit_str(bits)?)
}

/// Maps raw points onto domain indices. Returns the indices and how many
/// points had to be snapped to a different cell.
pub fn locate(domain: &LocationDomain, prefix: &EncodedLocation, rows: &[PointRow]) -> Result<(Vec<usize>, usize)> {
    let cut = prefix.len();
    let total = cut + domain.bit_len();
    if total % 2 != 0 {
        bail!("prefix and domain lengths do not form whole levels");
    }
    let join = |l: &EncodedLocation| EncodedLocation::from_bits((prefix.bits() << domain.bit_len()) | l.bits(), total);
    let full: Vec<EncodedLocation> = domain.locations().iter().map(join).collect::<Result<_, _>>()?;
    let mut snapped = 0;
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let loc = encode(r.point, total / 2).map_err(|e| anyhow!("line {}: {e}", r.line))?;
        let (i, exact) = if loc.prefix(cut) == *prefix {
            domain.snap(&loc.suffix_after(cut))?
        } else {
            // outside the prefix tile every cell shares the same LCP; fall back to distance
            let (x, y) = loc.cell_center();
            let i = (0..full.len())
                .min_by(|&a, &b| {
                    let (ax, ay) = full[a].cell_center();
                    let (bx, by) = full[b].cell_center();
                    let da = (ax - x).powi(2) + (ay - y).powi(2);
                    let db = (bx - x).powi(2) + (by - y).powi(2);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("domain is not empty");
            (i, false)
        };
        snapped += usize::from(!exact);
        out.push(i);
    }
    Ok((out, snapped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("in.csv");
        fs::write(&p, text).unwrap();
        (dir, p)
    }

    #[test]
    fn both_layouts_and_headers() {
        let (_d, p) = csv("lat,lon\n40.7,-73.9\n40.8,-73.95\n");
        assert_eq!(read_points(&p).unwrap().len(), 2);
        let (_d, p) = csv("user,seq,lat,lon,timestamp\nu1,0,40.7,-73.9,10\nu1,1,40.71,-73.91,20\n");
        let rows = read_points(&p).unwrap();
        assert_eq!(rows[1].line, 3);
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let (_d, p) = csv("40.7,-73.9\n40.8,abc\n");
        assert!(read_points(&p).unwrap_err().to_string().contains("line 2"));
        let (_d, p) = csv("40.7,-73.9\n1,2,3\n");
        assert!(read_points(&p).unwrap_err().to_string().contains("line 2"));
        let (_d, p) = csv("40.7,-73.9\n95.0,0\n");
        assert!(read_points(&p).unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn located_points_round_trip() {
        let (_d, p) = csv("40.70,-73.90\n40.75,-73.95\n40.72,-73.99\n40.70,-73.90\n");
        let rows = read_points(&p).unwrap();
        let b = build_domain(&rows, 23).unwrap();
        assert_eq!(b.domain.size(), 3);
        assert_eq!(b.prefix.len() % 2, 0);
        let (idx, snapped) = locate(&b.domain, &b.prefix, &rows).unwrap();
        assert_eq!(snapped, 0);
        assert_eq!(idx[0], idx[3]);
        let far = [PointRow { line: 1, point: GeoPoint::new(40.7001, -73.9001).unwrap() }];
        let (i, s) = locate(&b.domain, &b.prefix, &far).unwrap();
        assert_eq!((i[0], s), (idx[0], 1));
    }
}
