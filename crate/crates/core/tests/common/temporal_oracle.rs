//! Bit-set model of temporal domains.

use owh_core::temporal::{Instant, Interval, TemporalDomain, TimeUnit};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

/// Granules 0..WINDOW (relative to a random base) fit in one u128.
const WINDOW: i64 = 120;

fn bits(base: i64, ivs: &[Interval]) -> u128 {
    let mut b = 0u128;
    for iv in ivs {
        for t in iv.start.tick..=iv.end.tick {
            b |= 1 << (t - base);
        }
    }
    b
}

fn random_intervals(rng: &mut StdRng, unit: TimeUnit, base: i64) -> Vec<Interval> {
    let n = rng.random_range(0..6);
    (0..n)
        .map(|_| {
            let s = rng.random_range(0..WINDOW);
            let len = rng.random_range(0..(WINDOW - s).min(15));
            Interval::new(
                Instant::new(unit, base + s),
                Instant::new(unit, base + s + len),
            )
            .unwrap()
        })
        .collect()
}

/// Runs `cases` randomized checks; returns the first failure.
pub fn check(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for case in 0..cases {
        let unit = TimeUnit::ALL[rng.random_range(0..TimeUnit::ALL.len())];
        let base = rng.random_range(-500..500);
        let ra = random_intervals(&mut rng, unit, base);
        let rb = random_intervals(&mut rng, unit, base);
        let fail = |what: &str| Err(format!("case {case}: {what} on {ra:?} / {rb:?}"));

        let a = TemporalDomain::coalesce(ra.clone(), unit).map_err(|e| e.to_string())?;
        let b = TemporalDomain::coalesce(rb.clone(), unit).map_err(|e| e.to_string())?;
        if !a.validate().is_empty() || !b.validate().is_empty() {
            return fail("coalesce produced a non-canonical domain");
        }
        let (ba, bb) = (bits(base, &ra), bits(base, &rb));
        if bits(base, a.intervals()) != ba {
            return fail("coalesce changed the granule set");
        }
        if a.granule_count() != i64::from(ba.count_ones()) {
            return fail("granule count");
        }
        // raw input is canonical exactly when coalescing leaves it unchanged
        let raw_ok = TemporalDomain::from_raw(unit, ra.clone())
            .validate()
            .is_empty();
        if raw_ok != (a.intervals() == ra.as_slice()) {
            return fail("validate disagrees with coalesce on raw input");
        }
        let u = a.union(&b).map_err(|e| e.to_string())?;
        if !u.validate().is_empty() || bits(base, u.intervals()) != ba | bb {
            return fail("union");
        }
        if a.intersects(&b) != (ba & bb != 0) {
            return fail("intersects");
        }
        for t in -2..WINDOW + 2 {
            let expected = (0..WINDOW).contains(&t) && ba >> t & 1 == 1;
            if a.contains(Instant::new(unit, base + t)).unwrap() != expected {
                return fail("contains");
            }
        }
        if let Some(last) = a.intervals().last() {
            let to = rng.random_range(last.start.tick..base + WINDOW);
            let e = a
                .with_end(Instant::new(unit, to))
                .map_err(|e| e.to_string())?;
            let expected = (ba & !bits(base, &[*last]))
                | bits(
                    base,
                    &[Interval::new(last.start, Instant::new(unit, to)).unwrap()],
                );
            if !e.validate().is_empty() || bits(base, e.intervals()) != expected {
                return fail("with_end");
            }
        }
    }
    Ok(())
}
