//! Discrete, linear time: named units, instants, closed intervals and
//! canonical temporal domains.
//!
//! Every unit counts granules from the start of 1970. Units are related by a
//! static divisibility table; two units are comparable only when one tiles
//! the other with a fixed integer number of granules.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemporalError {
    #[error("unknown time unit `{0}`")]
    UnknownUnit(String),
    #[error("mixed time units: expected {expected}, found {found}")]
    MixedUnits { expected: TimeUnit, found: TimeUnit },
    #[error("units {0} and {1} are incomparable")]
    Incomparable(TimeUnit, TimeUnit),
    #[error("interval end {end} precedes start {start}")]
    EmptyInterval { start: Instant, end: Instant },
    #[error("invalid instant notation `{0}`")]
    BadInstant(String),
}

/// Registered time units, coarsest first within each comparable family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeUnit {
    Year,
    Semester,
    Quarter,
    Month,
    Week,
    Day,
}

/// Outcome of comparing two units under the finer-than partial order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitOrder {
    Finer,
    Coarser,
    Equal,
    Incomparable,
}

impl TimeUnit {
    pub const ALL: [TimeUnit; 6] = [
        TimeUnit::Year,
        TimeUnit::Semester,
        TimeUnit::Quarter,
        TimeUnit::Month,
        TimeUnit::Week,
        TimeUnit::Day,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TimeUnit::Year => "year",
            TimeUnit::Semester => "semester",
            TimeUnit::Quarter => "quarter",
            TimeUnit::Month => "month",
            TimeUnit::Week => "week",
            TimeUnit::Day => "day",
        }
    }

    /// Number of `self` granules tiling one `coarser` granule, if fixed.
    pub fn granules_per(self, coarser: TimeUnit) -> Option<i64> {
        use TimeUnit::*;
        match (self, coarser) {
            (a, b) if a == b => Some(1),
            (Semester, Year) => Some(2),
            (Quarter, Year) => Some(4),
            (Month, Year) => Some(12),
            (Quarter, Semester) => Some(2),
            (Month, Semester) => Some(6),
            (Month, Quarter) => Some(3),
            (Day, Week) => Some(7),
            _ => None,
        }
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TimeUnit {
    type Err = TemporalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let base = s.strip_suffix('s').filter(|b| !b.is_empty()).unwrap_or(s);
        TimeUnit::ALL
            .into_iter()
            .find(|u| u.name() == s || u.name() == base)
            .ok_or_else(|| TemporalError::UnknownUnit(s.to_string()))
    }
}

impl Serialize for TimeUnit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TimeUnit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn compare_units(a: TimeUnit, b: TimeUnit) -> UnitOrder {
    if a == b {
        UnitOrder::Equal
    } else if a.granules_per(b).is_some() {
        UnitOrder::Finer
    } else if b.granules_per(a).is_some() {
        UnitOrder::Coarser
    } else {
        UnitOrder::Incomparable
    }
}

/// Name-based variant of [`compare_units`] for registry lookups.
pub fn compare_unit_names(a: &str, b: &str) -> Result<UnitOrder, TemporalError> {
    Ok(compare_units(a.parse()?, b.parse()?))
}

/// A granule of some unit, counted from the 1970 epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instant {
    pub unit: TimeUnit,
    pub tick: i64,
}

impl Instant {
    pub const EPOCH_YEAR: i64 = 1970;

    pub fn new(unit: TimeUnit, tick: i64) -> Self {
        Instant { unit, tick }
    }

    pub fn year(year: i64) -> Self {
        Instant::new(TimeUnit::Year, year - Self::EPOCH_YEAR)
    }

    /// `month` is 1-based.
    pub fn month(year: i64, month: i64) -> Self {
        Instant::new(TimeUnit::Month, (year - Self::EPOCH_YEAR) * 12 + month - 1)
    }

    pub fn offset(self, by: i64) -> Self {
        Instant::new(self.unit, self.tick + by)
    }

    /// Compares two instants; `None` when their units differ.
    pub fn checked_cmp(&self, other: &Instant) -> Option<Ordering> {
        (self.unit == other.unit).then(|| self.tick.cmp(&other.tick))
    }

    pub fn expect_unit(&self, unit: TimeUnit) -> Result<(), TemporalError> {
        if self.unit == unit {
            Ok(())
        } else {
            Err(TemporalError::MixedUnits {
                expected: unit,
                found: self.unit,
            })
        }
    }
}

impl fmt::Display for Instant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.unit {
            TimeUnit::Year => {
                let y = self.tick + Self::EPOCH_YEAR;
                if (1000..=9999).contains(&y) {
                    return write!(f, "{y}");
                }
            }
            TimeUnit::Month => {
                let y = self.tick.div_euclid(12) + Self::EPOCH_YEAR;
                let m = self.tick.rem_euclid(12) + 1;
                if (1000..=9999).contains(&y) {
                    return write!(f, "{y}-{m:02}");
                }
            }
            _ => {}
        }
        write!(f, "{}:{}", self.unit, self.tick)
    }
}

fn all_digits(s: &str, len: usize) -> bool {
    s.len() == len && s.bytes().all(|b| b.is_ascii_digit())
}

impl FromStr for Instant {
    type Err = TemporalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TemporalError::BadInstant(s.to_string());
        if let Some((unit, tick)) = s.split_once(':') {
            let unit: TimeUnit = unit.parse()?;
            let tick = tick.parse::<i64>().map_err(|_| bad())?;
            return Ok(Instant::new(unit, tick));
        }
        if all_digits(s, 4) {
            let y: i64 = s.parse().map_err(|_| bad())?;
            if y >= 1000 {
                return Ok(Instant::year(y));
            }
        }
        if let Some((y, m)) = s.split_once('-') {
            if all_digits(y, 4) && all_digits(m, 2) {
                let y: i64 = y.parse().map_err(|_| bad())?;
                let m: i64 = m.parse().map_err(|_| bad())?;
                if y >= 1000 && (1..=12).contains(&m) {
                    return Ok(Instant::month(y, m));
                }
            }
        }
        Err(bad())
    }
}

impl Serialize for Instant {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Instant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A closed range of granules `[start, end]`; single-granule intervals are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: Instant,
    pub end: Instant,
}

impl Interval {
    pub fn new(start: Instant, end: Instant) -> Result<Self, TemporalError> {
        end.expect_unit(start.unit)?;
        if start.tick > end.tick {
            return Err(TemporalError::EmptyInterval { start, end });
        }
        Ok(Interval { start, end })
    }

    pub fn point(at: Instant) -> Self {
        Interval { start: at, end: at }
    }

    pub fn unit(&self) -> TimeUnit {
        self.start.unit
    }

    pub fn contains(&self, t: Instant) -> bool {
        t.unit == self.unit() && self.start.tick <= t.tick && t.tick <= self.end.tick
    }

    pub fn granules(&self) -> i64 {
        self.end.tick - self.start.tick + 1
    }

    /// Re-expresses the interval in a comparable unit. Coarsening keeps the
    /// granules containing each bound; refining expands to every sub-granule.
    pub fn rescale(&self, to: TimeUnit) -> Result<Interval, TemporalError> {
        let from = self.unit();
        if let Some(r) = from.granules_per(to) {
            Ok(Interval {
                start: Instant::new(to, self.start.tick.div_euclid(r)),
                end: Instant::new(to, self.end.tick.div_euclid(r)),
            })
        } else if let Some(r) = to.granules_per(from) {
            Ok(Interval {
                start: Instant::new(to, self.start.tick * r),
                end: Instant::new(to, self.end.tick * r + r - 1),
            })
        } else {
            Err(TemporalError::Incomparable(from, to))
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

/// Which of the four domain properties a violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainProperty {
    NonEmpty,
    UnitUniform,
    Disjoint,
    OrderedNonContiguous,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomainViolation {
    /// Interval `index` has its end before its start.
    EmptyInterval { index: usize },
    /// Interval `index` is not expressed in the domain unit.
    UnitMismatch { index: usize },
    /// Intervals `first` and `second` share at least one granule.
    Overlap { first: usize, second: usize },
    /// Interval `index` starts before its predecessor ends.
    Unordered { index: usize },
    /// Interval `index` begins right after its predecessor and should be merged.
    Contiguous { index: usize },
}

impl DomainViolation {
    pub fn property(&self) -> DomainProperty {
        match self {
            DomainViolation::EmptyInterval { .. } => DomainProperty::NonEmpty,
            DomainViolation::UnitMismatch { .. } => DomainProperty::UnitUniform,
            DomainViolation::Overlap { .. } => DomainProperty::Disjoint,
            DomainViolation::Unordered { .. } | DomainViolation::Contiguous { .. } => {
                DomainProperty::OrderedNonContiguous
            }
        }
    }
}

/// An ordered list of disjoint, non-contiguous intervals sharing one unit.
///
/// Values built through [`TemporalDomain::coalesce`] or the set operations
/// are always canonical. [`TemporalDomain::from_raw`] skips normalisation so
/// that arbitrary input can be checked with [`TemporalDomain::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TemporalDomain {
    unit: TimeUnit,
    intervals: Vec<Interval>,
}

impl TemporalDomain {
    pub fn empty(unit: TimeUnit) -> Self {
        TemporalDomain {
            unit,
            intervals: Vec::new(),
        }
    }

    pub fn single(interval: Interval) -> Self {
        TemporalDomain {
            unit: interval.unit(),
            intervals: vec![interval],
        }
    }

    pub fn point(at: Instant) -> Self {
        Self::single(Interval::point(at))
    }

    pub fn from_raw(unit: TimeUnit, intervals: Vec<Interval>) -> Self {
        TemporalDomain { unit, intervals }
    }

    /// Sorts and merges overlapping or adjacent intervals into canonical form.
    pub fn coalesce(
        intervals: impl IntoIterator<Item = Interval>,
        unit: TimeUnit,
    ) -> Result<Self, TemporalError> {
        let mut items: Vec<Interval> = Vec::new();
        for iv in intervals {
            iv.start.expect_unit(unit)?;
            iv.end.expect_unit(unit)?;
            if iv.start.tick > iv.end.tick {
                return Err(TemporalError::EmptyInterval {
                    start: iv.start,
                    end: iv.end,
                });
            }
            items.push(iv);
        }
        items.sort_by_key(|iv| (iv.start.tick, iv.end.tick));
        let mut out: Vec<Interval> = Vec::with_capacity(items.len());
        for iv in items {
            match out.last_mut() {
                Some(last) if iv.start.tick <= last.end.tick + 1 => {
                    if iv.end.tick > last.end.tick {
                        last.end = iv.end;
                    }
                }
                _ => out.push(iv),
            }
        }
        Ok(TemporalDomain {
            unit,
            intervals: out,
        })
    }

    pub fn unit(&self) -> TimeUnit {
        self.unit
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn granule_count(&self) -> i64 {
        self.intervals.iter().map(Interval::granules).sum()
    }

    pub fn first(&self) -> Option<Instant> {
        self.intervals.first().map(|iv| iv.start)
    }

    pub fn last(&self) -> Option<Instant> {
        self.intervals.last().map(|iv| iv.end)
    }

    /// Bounding interval of the domain.
    pub fn span(&self) -> Option<Interval> {
        Some(Interval {
            start: self.first()?,
            end: self.last()?,
        })
    }

    pub fn validate(&self) -> Vec<DomainViolation> {
        let mut out = Vec::new();
        for (i, iv) in self.intervals.iter().enumerate() {
            if iv.start.unit != self.unit || iv.end.unit != self.unit {
                out.push(DomainViolation::UnitMismatch { index: i });
            }
            if iv.start.tick > iv.end.tick {
                out.push(DomainViolation::EmptyInterval { index: i });
            }
        }
        for i in 0..self.intervals.len() {
            for j in i + 1..self.intervals.len() {
                let (a, b) = (&self.intervals[i], &self.intervals[j]);
                if a.start.tick <= b.end.tick && b.start.tick <= a.end.tick {
                    out.push(DomainViolation::Overlap {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        for (k, pair) in self.intervals.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            let overlapping = a.start.tick <= b.end.tick && b.start.tick <= a.end.tick;
            if b.start.tick <= a.end.tick && !overlapping {
                out.push(DomainViolation::Unordered { index: k + 1 });
            } else if b.start.tick == a.end.tick + 1 {
                out.push(DomainViolation::Contiguous { index: k + 1 });
            }
        }
        out
    }

    pub fn is_canonical(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn union(&self, other: &TemporalDomain) -> Result<TemporalDomain, TemporalError> {
        if self.unit != other.unit {
            return Err(TemporalError::MixedUnits {
                expected: self.unit,
                found: other.unit,
            });
        }
        Self::coalesce(
            self.intervals.iter().chain(&other.intervals).copied(),
            self.unit,
        )
    }

    pub fn contains(&self, t: Instant) -> Result<bool, TemporalError> {
        t.expect_unit(self.unit)?;
        let idx = self.intervals.partition_point(|iv| iv.end.tick < t.tick);
        Ok(self
            .intervals
            .get(idx)
            .is_some_and(|iv| iv.start.tick <= t.tick))
    }

    /// True when the two domains share at least one granule.
    pub fn intersects(&self, other: &TemporalDomain) -> bool {
        if self.unit != other.unit {
            return false;
        }
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a, b) = (&self.intervals[i], &other.intervals[j]);
            if a.start.tick <= b.end.tick && b.start.tick <= a.end.tick {
                return true;
            }
            if a.end.tick < b.end.tick {
                i += 1;
            } else {
                j += 1;
            }
        }
        false
    }

    /// Copy of the domain whose last interval ends at `to`.
    ///
    /// `to` must not precede the current last start.
    pub fn with_end(&self, to: Instant) -> Result<TemporalDomain, TemporalError> {
        to.expect_unit(self.unit)?;
        let mut intervals = self.intervals.clone();
        match intervals.last_mut() {
            Some(last) => {
                if to.tick < last.start.tick {
                    return Err(TemporalError::EmptyInterval {
                        start: last.start,
                        end: to,
                    });
                }
                last.end = to;
            }
            None => intervals.push(Interval::point(to)),
        }
        Ok(TemporalDomain {
            unit: self.unit,
            intervals,
        })
    }
}

impl fmt::Display for TemporalDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, iv) in self.intervals.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{iv}")?;
        }
        f.write_str(">")
    }
}

#[derive(Serialize, Deserialize)]
struct DomainRepr {
    unit: TimeUnit,
    intervals: Vec<(Instant, Instant)>,
}

impl Serialize for TemporalDomain {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DomainRepr {
            unit: self.unit,
            intervals: self.intervals.iter().map(|iv| (iv.start, iv.end)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TemporalDomain {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = DomainRepr::deserialize(d)?;
        let intervals = repr
            .intervals
            .into_iter()
            .map(|(start, end)| Interval { start, end })
            .collect();
        let dom = TemporalDomain::from_raw(repr.unit, intervals);
        if let Some(v) = dom.validate().first() {
            return Err(serde::de::Error::custom(format!(
                "non-canonical temporal domain {dom}: {v:?}"
            )));
        }
        Ok(dom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn y(a: i64, b: i64) -> Interval {
        Interval::new(Instant::year(a), Instant::year(b)).unwrap()
    }

    fn granules(ivs: &[Interval]) -> BTreeSet<i64> {
        ivs.iter()
            .flat_map(|iv| iv.start.tick..=iv.end.tick)
            .collect()
    }

    #[test]
    fn unit_order_examples() {
        assert_eq!(
            compare_units(TimeUnit::Month, TimeUnit::Year),
            UnitOrder::Finer
        );
        assert_eq!(
            compare_units(TimeUnit::Year, TimeUnit::Year),
            UnitOrder::Equal
        );
        assert_eq!(
            compare_units(TimeUnit::Week, TimeUnit::Month),
            UnitOrder::Incomparable
        );
        assert_eq!(
            compare_units(TimeUnit::Year, TimeUnit::Quarter),
            UnitOrder::Coarser
        );
        assert!(matches!(
            compare_unit_names("fortnight", "year"),
            Err(TemporalError::UnknownUnit(_))
        ));
    }

    #[test]
    fn unit_order_is_a_partial_order() {
        for a in TimeUnit::ALL {
            assert_eq!(compare_units(a, a), UnitOrder::Equal);
            for b in TimeUnit::ALL {
                let ab = compare_units(a, b);
                let ba = compare_units(b, a);
                let mirrored = match ab {
                    UnitOrder::Finer => UnitOrder::Coarser,
                    UnitOrder::Coarser => UnitOrder::Finer,
                    o => o,
                };
                assert_eq!(ba, mirrored, "{a} vs {b}");
                for c in TimeUnit::ALL {
                    if ab == UnitOrder::Finer && compare_units(b, c) == UnitOrder::Finer {
                        assert_eq!(compare_units(a, c), UnitOrder::Finer, "{a} {b} {c}");
                        // the tiling ratios compose
                        assert_eq!(
                            a.granules_per(c),
                            Some(a.granules_per(b).unwrap() * b.granules_per(c).unwrap())
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn coalesce_examples() {
        let d = TemporalDomain::coalesce([y(1990, 1991), y(1992, 1995)], TimeUnit::Year).unwrap();
        assert_eq!(d.intervals(), &[y(1990, 1995)]);
        let d = TemporalDomain::coalesce([], TimeUnit::Year).unwrap();
        assert!(d.is_empty());
        let d = TemporalDomain::coalesce([y(1993, 1995), y(1990, 1991)], TimeUnit::Year).unwrap();
        assert_eq!(d.intervals(), &[y(1990, 1991), y(1993, 1995)]);
        let m = Interval::point(Instant::month(1990, 1));
        assert!(matches!(
            TemporalDomain::coalesce([y(1990, 1990), m], TimeUnit::Year),
            Err(TemporalError::MixedUnits { .. })
        ));
    }

    #[test]
    fn validate_examples() {
        let d = TemporalDomain::from_raw(TimeUnit::Year, vec![y(1990, 1993), y(1992, 1995)]);
        let v = d.validate();
        assert!(v.iter().any(|v| v.property() == DomainProperty::Disjoint));
        let d = TemporalDomain::from_raw(TimeUnit::Year, vec![y(1990, 1991), y(1993, 1995)]);
        assert!(d.validate().is_empty());
        let d = TemporalDomain::from_raw(TimeUnit::Year, vec![y(1990, 1991), y(1992, 1995)]);
        assert_eq!(d.validate(), vec![DomainViolation::Contiguous { index: 1 }]);
        let d = TemporalDomain::from_raw(TimeUnit::Year, vec![y(1995, 1996), y(1990, 1991)]);
        assert_eq!(d.validate(), vec![DomainViolation::Unordered { index: 1 }]);
        let bad = Interval {
            start: Instant::year(1995),
            end: Instant::year(1990),
        };
        let d = TemporalDomain::from_raw(TimeUnit::Year, vec![bad]);
        assert_eq!(d.validate()[0].property(), DomainProperty::NonEmpty);
        let d = TemporalDomain::from_raw(TimeUnit::Month, vec![y(1990, 1990)]);
        assert_eq!(d.validate()[0].property(), DomainProperty::UnitUniform);
    }

    #[test]
    fn union_examples() {
        let a = TemporalDomain::single(y(1990, 1990));
        let b = TemporalDomain::single(y(1991, 1992));
        assert_eq!(a.union(&b).unwrap().intervals(), &[y(1990, 1992)]);
        assert_eq!(a.union(&TemporalDomain::empty(TimeUnit::Year)).unwrap(), a);
        let a = TemporalDomain::single(y(1990, 1991));
        let b = TemporalDomain::single(y(1991, 1994));
        assert_eq!(a.union(&b).unwrap().intervals(), &[y(1990, 1994)]);
        let m = TemporalDomain::point(Instant::month(1990, 2));
        assert!(a.union(&m).is_err());
    }

    #[test]
    fn contains_examples() {
        let d = TemporalDomain::from_raw(TimeUnit::Year, vec![y(1990, 1991), y(1993, 1995)]);
        assert!(!d.contains(Instant::year(1992)).unwrap());
        assert!(d.contains(Instant::year(1995)).unwrap());
        let d = TemporalDomain::single(y(1990, 1991));
        assert!(d.contains(Instant::year(1990)).unwrap());
        assert!(matches!(
            d.contains(Instant::month(1990, 1)),
            Err(TemporalError::MixedUnits { .. })
        ));
    }

    #[test]
    fn instant_notation() {
        assert_eq!("1990".parse::<Instant>().unwrap(), Instant::year(1990));
        assert_eq!(
            "1990-03".parse::<Instant>().unwrap(),
            Instant::month(1990, 3)
        );
        assert_eq!(
            "quarter:-4".parse::<Instant>().unwrap(),
            Instant::new(TimeUnit::Quarter, -4)
        );
        for s in [
            "1990",
            "1990-03",
            "1969-12",
            "week:17",
            "day:-3",
            "year:-2000",
            "semester:0",
        ] {
            assert_eq!(s.parse::<Instant>().unwrap().to_string(), s);
        }
        assert_eq!(Instant::year(1969).tick, -1);
        for s in ["90", "1990-13", "1990-3", "eon:4", "year:x", ""] {
            assert!(s.parse::<Instant>().is_err(), "{s}");
        }
    }

    #[test]
    fn rescale_between_comparable_units() {
        let iv = y(1990, 1991).rescale(TimeUnit::Month).unwrap();
        assert_eq!(iv.start, Instant::month(1990, 1));
        assert_eq!(iv.end, Instant::month(1991, 12));
        let m = Interval::new(Instant::month(1989, 12), Instant::month(1990, 2)).unwrap();
        assert_eq!(m.rescale(TimeUnit::Year).unwrap(), y(1989, 1990));
        assert!(y(1990, 1990).rescale(TimeUnit::Week).is_err());
    }

    #[test]
    fn span_and_with_end() {
        let d = TemporalDomain::from_raw(TimeUnit::Year, vec![y(1990, 1991), y(1993, 1995)]);
        assert_eq!(d.span(), Some(y(1990, 1995)));
        assert_eq!(
            d.with_end(Instant::year(1997)).unwrap().last(),
            Some(Instant::year(1997))
        );
        assert!(d.with_end(Instant::year(1992)).is_err());
        assert_eq!(granules(d.intervals()).len() as i64, d.granule_count());
    }

    #[test]
    fn serde_rejects_non_canonical() {
        let d = TemporalDomain::from_raw(TimeUnit::Year, vec![y(1990, 1991), y(1993, 1995)]);
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(
            text,
            r#"{"unit":"year","intervals":[["1990","1991"],["1993","1995"]]}"#
        );
        assert_eq!(serde_json::from_str::<TemporalDomain>(&text).unwrap(), d);
        let bad = r#"{"unit":"year","intervals":[["1990","1991"],["1992","1995"]]}"#;
        assert!(serde_json::from_str::<TemporalDomain>(bad).is_err());
    }
}
