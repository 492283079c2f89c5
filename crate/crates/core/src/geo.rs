//! Quadkey encoding of geographic coordinates.
//!
//! Coordinates are projected with Web-Mercator and the tile at a given level is
//! written as a bit string, two bits per level, most significant level first.
//! Each 2-bit digit is `row_bit * 2 + col_bit`, the Bing tile convention, so a
//! longer shared prefix means the two cells sit in a deeper common ancestor tile.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Deepest supported tile level (46 bits, roughly 4.7 m cells at the equator).
pub const MAX_LEVEL: u8 = 23;

/// Web-Mercator latitude bound.
pub const MAX_MERCATOR_LAT: f64 = 85.051_128_78;

const MAX_BITS: u8 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(invalid("coordinates must be finite"));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(invalid(format!("latitude {lat} out of range")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(invalid(format!("longitude {lon} out of range")));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// A fixed-length bit string naming one cell of the discrete domain.
///
/// Bits are right-aligned in `bits`; bit `len - 1` is the first (coarsest) bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedLocation {
    bits: u64,
    len: u8,
}

impl EncodedLocation {
    pub fn from_bits(bits: u64, len: u8) -> Result<Self> {
        if len > MAX_BITS {
            return Err(invalid(format!("bit length {len} exceeds {MAX_BITS}")));
        }
        if len < MAX_BITS && bits >> len != 0 {
            return Err(invalid(format!("value {bits:#x} does not fit in {len} bits")));
        }
        Ok(Self { bits, len })
    }

    /// Parses a `0`/`1` string such as `"0110"`.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        if s.len() > MAX_BITS as usize {
            return Err(invalid("bit string too long"));
        }
        let mut bits = 0u64;
        for ch in s.chars() {
            bits = (bits << 1)
                | match ch {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(invalid(format!("bad bit character {ch:?}"))),
                };
        }
        Ok(Self { bits, len: s.len() as u8 })
    }

    /// Parses a hex rendering produced by [`EncodedLocation::to_hex`].
    pub fn from_hex(hex: &str, len: u8) -> Result<Self> {
        let hex = hex.trim();
        if hex.is_empty() {
            return Err(invalid("empty hex string"));
        }
        let bits = u64::from_str_radix(hex, 16).map_err(|e| invalid(format!("bad hex {hex:?}: {e}")))?;
        Self::from_bits(bits, len)
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of whole tile levels represented.
    pub fn level(&self) -> u8 {
        self.len / 2
    }

    /// Bit at position `i` counted from the most significant end.
    pub fn bit(&self, i: u8) -> bool {
        debug_assert!(i < self.len);
        (self.bits >> (self.len - 1 - i)) & 1 == 1
    }

    /// Big-endian hex, left-padded with zero bits to a whole number of nibbles.
    pub fn to_hex(&self) -> String {
        let nibbles = (self.len as usize).div_ceil(4).max(1);
        format!("{:0width$x}", self.bits, width = nibbles)
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.len).map(|i| if self.bit(i) { '1' } else { '0' }).collect()
    }

    /// Length in bits of the longest common prefix.
    pub fn lcp_len(&self, other: &Self) -> Result<u8> {
        if self.len != other.len {
            return Err(invalid(format!("bit lengths differ ({} vs {})", self.len, other.len)));
        }
        Ok(lcp_same_len(self.bits, other.bits, self.len))
    }

    /// The first `n` bits as a shorter location.
    pub fn prefix(&self, n: u8) -> Self {
        let n = n.min(self.len);
        Self { bits: if n == 0 { 0 } else { self.bits >> (self.len - n) }, len: n }
    }

    /// Drops the first `n` bits.
    pub fn suffix_after(&self, n: u8) -> Self {
        let n = n.min(self.len);
        let keep = self.len - n;
        let bits = if keep == 0 { 0 } else { self.bits & (u64::MAX >> (64 - keep as u32)) };
        Self { bits, len: keep }
    }

    /// Cell center in cell units relative to the encoded region: `(col, row)`.
    ///
    /// A trailing odd bit is a row split at half resolution.
    pub fn cell_center(&self) -> (f64, f64) {
        let levels = self.len / 2;
        let (mut col, mut row) = (0u64, 0u64);
        for l in 0..levels {
            row = (row << 1) | self.bit(2 * l) as u64;
            col = (col << 1) | self.bit(2 * l + 1) as u64;
        }
        let (mut c, mut r) = (col as f64 + 0.5, row as f64 + 0.5);
        if self.len % 2 == 1 {
            c = col as f64 + 0.5;
            r = row as f64 + if self.bit(self.len - 1) { 0.75 } else { 0.25 };
        }
        (c, r)
    }
}

impl PartialOrd for EncodedLocation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Orders by length, then lexicographically by bits.
impl Ord for EncodedLocation {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len.cmp(&other.len).then(self.bits.cmp(&other.bits))
    }
}

impl fmt::Display for EncodedLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

pub(crate) fn lcp_same_len(a: u64, b: u64, len: u8) -> u8 {
    if len == 0 {
        return 0;
    }
    let diff = (a ^ b) << (64 - len as u32);
    if diff == 0 {
        len
    } else {
        diff.leading_zeros() as u8
    }
}

/// Tile column and row containing `point` at `level`.
pub fn tile_xy(point: GeoPoint, level: u8) -> Result<(u32, u32)> {
    check_level(level)?;
    if point.lat.abs() > MAX_MERCATOR_LAT {
        return Err(invalid(format!("latitude {} outside the Web-Mercator range ±{MAX_MERCATOR_LAT}", point.lat)));
    }
    // Pixel coordinates at 256 px per tile, rounded the way the Bing tile system does.
    let map_size = 256.0 * (1u64 << level) as f64;
    let x = (point.lon + 180.0) / 360.0;
    let sin_lat = (point.lat * PI / 180.0).sin();
    let y = 0.5 - ((1.0 + sin_lat) / (1.0 - sin_lat)).ln() / (4.0 * PI);
    let px = (x * map_size + 0.5).clamp(0.0, map_size - 1.0);
    let py = (y * map_size + 0.5).clamp(0.0, map_size - 1.0);
    let tx = (px / 256.0).floor() as u64;
    let ty = (py / 256.0).floor() as u64;
    Ok((tx as u32, ty as u32))
}

/// Encodes a point as a `2 * level`-bit quadkey.
pub fn encode(point: GeoPoint, level: u8) -> Result<EncodedLocation> {
    let (tx, ty) = tile_xy(point, level)?;
    Ok(quadkey_from_tile(tx, ty, level))
}

pub fn quadkey_from_tile(tx: u32, ty: u32, level: u8) -> EncodedLocation {
    let mut bits = 0u64;
    for i in (0..level).rev() {
        let digit = (((ty >> i) & 1) << 1 | ((tx >> i) & 1)) as u64;
        bits = (bits << 2) | digit;
    }
    EncodedLocation { bits, len: 2 * level }
}

/// Geographic center of a full (unstripped) quadkey cell.
pub fn cell_center_geo(loc: &EncodedLocation) -> Result<GeoPoint> {
    if loc.len % 2 != 0 || loc.len == 0 {
        return Err(invalid("not a whole-level quadkey"));
    }
    let level = loc.len / 2;
    check_level(level)?;
    let (c, r) = loc.cell_center();
    let n = (1u64 << level) as f64;
    let lon = c / n * 360.0 - 180.0;
    let y = 0.5 - r / n;
    let lat = 90.0 - 360.0 * (-y * 2.0 * PI).exp().atan() / PI;
    GeoPoint::new(lat, lon)
}

fn check_level(level: u8) -> Result<()> {
    if level == 0 || level > MAX_LEVEL {
        return Err(invalid(format!("level {level} outside 1..={MAX_LEVEL}")));
    }
    Ok(())
}

/// Removes the prefix shared by every location.
///
/// Returns the prefix length and the shortened locations, in input order.
pub fn strip_common_prefix(locations: &[EncodedLocation]) -> Result<(u8, Vec<EncodedLocation>)> {
    let first = locations.first().ok_or_else(|| invalid("empty location list"))?;
    let mut common = first.len;
    for loc in &locations[1..] {
        common = common.min(first.lcp_len(loc)?);
    }
    Ok((common, locations.iter().map(|l| l.suffix_after(common)).collect()))
}

/// Like [`strip_common_prefix`] but keeps whole tile levels (even prefix length).
pub fn strip_common_levels(locations: &[EncodedLocation]) -> Result<(u8, Vec<EncodedLocation>)> {
    let (common, _) = strip_common_prefix(locations)?;
    let even = common - common % 2;
    Ok((even, locations.iter().map(|l| l.suffix_after(even)).collect()))
}

impl From<EncodedLocation> for (u64, u8) {
    fn from(l: EncodedLocation) -> Self {
        (l.bits, l.len)
    }
}

impl TryFrom<(u64, u8)> for EncodedLocation {
    type Error = Error;

    fn try_from((bits, len): (u64, u8)) -> Result<Self> {
        Self::from_bits(bits, len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_lcp(a: &EncodedLocation, b: &EncodedLocation) -> u8 {
        let mut n = 0;
        while n < a.len() && a.bit(n) == b.bit(n) {
            n += 1;
        }
        n
    }

    /// Tile math written from the Bing reference description, kept apart from `encode`.
    fn reference_quadkey_digits(lat: f64, lon: f64, level: u8) -> String {
        let sin_lat = (lat * PI / 180.0).sin();
        let map_size = 256.0 * 2f64.powi(level as i32);
        let px = ((lon + 180.0) / 360.0 * map_size + 0.5).clamp(0.0, map_size - 1.0);
        let py =
            ((0.5 - ((1.0 + sin_lat) / (1.0 - sin_lat)).ln() / (4.0 * PI)) * map_size + 0.5).clamp(0.0, map_size - 1.0);
        let (tx, ty) = ((px / 256.0) as u32, (py / 256.0) as u32);
        let mut key = String::new();
        for i in (1..=level).rev() {
            let mask = 1 << (i - 1);
            let mut digit = 0;
            if tx & mask != 0 {
                digit += 1;
            }
            if ty & mask != 0 {
                digit += 2;
            }
            key.push(char::from(b'0' + digit));
        }
        key
    }

    fn digits_of(loc: &EncodedLocation) -> String {
        (0..loc.level()).map(|l| char::from(b'0' + (loc.bit(2 * l) as u8) * 2 + loc.bit(2 * l + 1) as u8)).collect()
    }

    #[test]
    fn new_york_example() {
        let p = GeoPoint::new(40.730610, -73.935242).unwrap();
        let loc = encode(p, 23).unwrap();
        assert_eq!(loc.len(), 46);
        assert_eq!(digits_of(&loc), reference_quadkey_digits(40.730610, -73.935242, 23));
        // 46 bits render as 12 nibbles; the first two bits are zero.
        assert_eq!(loc.to_hex(), "0e1147b6afff");
        assert_eq!(loc.to_hex().trim_start_matches('0'), "e1147b6afff");
    }

    #[test]
    fn root_split_is_stable() {
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        let a = encode(p, 1).unwrap();
        assert_eq!(a, encode(p, 1).unwrap());
        assert_eq!(a.len(), 2);
        // (0,0) lands in the south-east quadrant: row 1, col 1.
        assert_eq!(a.bits(), 0b11);
    }

    #[test]
    fn nearby_points_share_long_prefix() {
        // ~1 m apart in latitude.
        let a = encode(GeoPoint::new(40.730610, -73.935242).unwrap(), 23).unwrap();
        let b = encode(GeoPoint::new(40.730619, -73.935242).unwrap(), 23).unwrap();
        assert!(a.lcp_len(&b).unwrap() >= 40);
    }

    #[test]
    fn rejects_bad_coordinates() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -181.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        let polar = GeoPoint::new(86.0, 0.0).unwrap();
        assert!(encode(polar, 10).is_err());
        assert!(encode(GeoPoint::new(0.0, 0.0).unwrap(), 0).is_err());
        assert!(encode(GeoPoint::new(0.0, 0.0).unwrap(), 24).is_err());
    }

    #[test]
    fn lcp_examples() {
        let a = EncodedLocation::from_bit_str("0110").unwrap();
        let b = EncodedLocation::from_bit_str("0101").unwrap();
        assert_eq!(a.lcp_len(&b).unwrap(), 2);
        assert_eq!(a.lcp_len(&a).unwrap(), 4);
        let c = EncodedLocation::from_bit_str("011").unwrap();
        assert!(a.lcp_len(&c).is_err());
    }

    #[test]
    fn strip_examples() {
        let locs = [EncodedLocation::from_bit_str("0011").unwrap(), EncodedLocation::from_bit_str("0010").unwrap()];
        let (n, rest) = strip_common_prefix(&locs).unwrap();
        assert_eq!(n, 3);
        assert_eq!(rest[0].to_bit_string(), "1");
        assert_eq!(rest[1].to_bit_string(), "0");

        let (n, rest) = strip_common_prefix(&locs[..1]).unwrap();
        assert_eq!(n, 4);
        assert!(rest[0].is_empty());

        let (n, rest) = strip_common_levels(&locs).unwrap();
        assert_eq!(n, 2);
        assert_eq!(rest[0].to_bit_string(), "11");
    }

    #[test]
    fn hex_round_trip_and_padding() {
        let a = EncodedLocation::from_bit_str("000101").unwrap();
        assert_eq!(a.to_hex(), "05");
        assert_eq!(EncodedLocation::from_hex("05", 6).unwrap(), a);
        assert!(EncodedLocation::from_hex("ff", 6).is_err());
    }

    #[test]
    fn center_round_trip() {
        let p = GeoPoint::new(41.15, -8.61).unwrap();
        let loc = encode(p, 18).unwrap();
        let c = cell_center_geo(&loc).unwrap();
        assert_eq!(encode(c, 18).unwrap(), loc);
    }

    proptest! {
        #[test]
        fn lcp_matches_naive_scan(a in any::<u64>(), b in any::<u64>(), len in 1u8..=46) {
            let mask = (1u64 << len) - 1;
            let x = EncodedLocation::from_bits(a & mask, len).unwrap();
            let y = EncodedLocation::from_bits(b & mask, len).unwrap();
            prop_assert_eq!(x.lcp_len(&y).unwrap(), naive_lcp(&x, &y));
            prop_assert_eq!(x.lcp_len(&y).unwrap(), y.lcp_len(&x).unwrap());
        }

        #[test]
        fn lcp_is_ultrametric(a in any::<u64>(), b in any::<u64>(), c in any::<u64>(), len in 1u8..=46) {
            let mask = (1u64 << len) - 1;
            let [x, y, z] = [a, b, c].map(|v| EncodedLocation::from_bits(v & mask, len).unwrap());
            let xz = x.lcp_len(&z).unwrap();
            prop_assert!(xz >= x.lcp_len(&y).unwrap().min(y.lcp_len(&z).unwrap()));
        }

        #[test]
        fn strip_preserves_pairwise_lcp(vals in proptest::collection::vec(any::<u64>(), 2..12), len in 2u8..=46, shared in any::<u64>()) {
            let mask = (1u64 << len) - 1;
            // force a shared prefix of len/2 bits
            let keep = len / 2;
            let low = (1u64 << (len - keep)) - 1;
            let locs: Vec<_> = vals.iter()
                .map(|v| EncodedLocation::from_bits(((shared & mask) & !low) | (v & low), len).unwrap())
                .collect();
            let (n, rest) = strip_common_prefix(&locs).unwrap();
            prop_assert!(n >= keep);
            for i in 0..locs.len() {
                for j in 0..locs.len() {
                    let full = locs[i].lcp_len(&locs[j]).unwrap();
                    prop_assert_eq!(full - n, rest[i].lcp_len(&rest[j]).unwrap());
                }
            }
        }

        #[test]
        fn encode_matches_reference(lat in -85.0f64..85.0, lon in -180.0f64..180.0, level in 1u8..=23) {
            let loc = encode(GeoPoint::new(lat, lon).unwrap(), level).unwrap();
            prop_assert_eq!(digits_of(&loc), reference_quadkey_digits(lat, lon, level));
        }
    }
}
