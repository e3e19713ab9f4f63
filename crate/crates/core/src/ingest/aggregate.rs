//! Daily aggregation of cleaned trips into count and mean-distance
//! series, grouped city-wide, by pickup zone, or by origin-destination
//! pair.
//!
//! A trip belongs to the calendar day of its START timestamp. Count
//! series are zero-filled across the full observed date range (a day
//! with no trips is a real zero); mean-distance series keep gaps on
//! such days because a mean over nothing is undefined.

use super::{TripRecord, ZoneId};
use crate::series::DateIndexedSeries;
use chrono::NaiveDate;
use std::collections::BTreeMap;

/// Requested grouping level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateKey {
    City,
    PickupZone,
    OdPair,
}

/// Concrete group a series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKey {
    City,
    Zone(ZoneId),
    OdPair(ZoneId, ZoneId),
}

impl GroupKey {
    pub fn count_label(&self) -> String {
        match self {
            GroupKey::City => "taxi_trips".to_string(),
            GroupKey::Zone(z) => format!("taxi_trips_zone_{z}"),
            GroupKey::OdPair(a, b) => format!("taxi_trips_od_{a}_{b}"),
        }
    }

    pub fn distance_label(&self) -> String {
        match self {
            GroupKey::City => "mean_trip_miles".to_string(),
            GroupKey::Zone(z) => format!("mean_trip_miles_zone_{z}"),
            GroupKey::OdPair(a, b) => format!("mean_trip_miles_od_{a}_{b}"),
        }
    }

    fn matches(&self, key: AggregateKey) -> bool {
        matches!(
            (self, key),
            (GroupKey::City, AggregateKey::City)
                | (GroupKey::Zone(_), AggregateKey::PickupZone)
                | (GroupKey::OdPair(_, _), AggregateKey::OdPair)
        )
    }
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupKey::City => f.write_str("city"),
            GroupKey::Zone(z) => write!(f, "{z}"),
            GroupKey::OdPair(a, b) => write!(f, "{a}-{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct DayStat {
    count: u64,
    miles_sum: f64,
}

/// Streaming aggregator: feed cleaned trips one at a time, then
/// [`finish`](DailyAggregator::finish). City and per-zone groups are
/// always built; origin-destination pairs only when asked, since they
/// multiply the group count.
#[derive(Debug)]
pub struct DailyAggregator {
    with_od: bool,
    stats: BTreeMap<GroupKey, BTreeMap<NaiveDate, DayStat>>,
    range: Option<(NaiveDate, NaiveDate)>,
}

/// Finished aggregation: one count series and one mean-distance series
/// per group.
#[derive(Debug, Clone)]
pub struct DailyAggregates {
    pub counts: BTreeMap<GroupKey, DateIndexedSeries>,
    pub mean_distance: BTreeMap<GroupKey, DateIndexedSeries>,
}

impl DailyAggregator {
    pub fn new(with_od: bool) -> Self {
        DailyAggregator { with_od, stats: BTreeMap::new(), range: None }
    }

    pub fn observe(&mut self, trip: &TripRecord) {
        let day = trip.start.date();
        self.range = Some(match self.range {
            None => (day, day),
            Some((lo, hi)) => (lo.min(day), hi.max(day)),
        });
        let mut bump = |key: GroupKey| {
            let stat = self.stats.entry(key).or_default().entry(day).or_default();
            stat.count += 1;
            stat.miles_sum += trip.distance_miles;
        };
        bump(GroupKey::City);
        bump(GroupKey::Zone(trip.pickup_zone));
        if self.with_od {
            bump(GroupKey::OdPair(trip.pickup_zone, trip.dropoff_zone));
        }
    }

    pub fn finish(self) -> DailyAggregates {
        let Some((lo, hi)) = self.range else {
            return DailyAggregates { counts: BTreeMap::new(), mean_distance: BTreeMap::new() };
        };
        let mut counts = BTreeMap::new();
        let mut mean_distance = BTreeMap::new();
        for (key, days) in self.stats {
            let mut count_entries = Vec::new();
            let mut day = lo;
            while day <= hi {
                let n = days.get(&day).map_or(0, |s| s.count);
                count_entries.push((day, n as f64));
                day = day.succ_opt().expect("date overflow");
            }
            let distance_entries: Vec<_> = days
                .iter()
                .map(|(d, s)| (*d, s.miles_sum / s.count as f64))
                .collect();
            let count_series = DateIndexedSeries::new(key.count_label(), count_entries)
                .expect("aggregated dates are sorted and unique")
                .with_unit("trips/day");
            let distance_series = DateIndexedSeries::new(key.distance_label(), distance_entries)
                .expect("aggregated dates are sorted and unique")
                .with_unit("miles");
            counts.insert(key, count_series);
            mean_distance.insert(key, distance_series);
        }
        DailyAggregates { counts, mean_distance }
    }
}

fn run(trips: &[TripRecord], key: AggregateKey) -> DailyAggregates {
    let mut agg = DailyAggregator::new(key == AggregateKey::OdPair);
    for trip in trips {
        agg.observe(trip);
    }
    agg.finish()
}

/// Daily trip counts per group, zero-filled over the observed range.
pub fn aggregate_daily(
    trips: &[TripRecord],
    key: AggregateKey,
) -> BTreeMap<GroupKey, DateIndexedSeries> {
    run(trips, key)
        .counts
        .into_iter()
        .filter(|(k, _)| k.matches(key))
        .collect()
}

/// Daily mean trip distance per group; days without trips are absent.
pub fn daily_mean_distance(
    trips: &[TripRecord],
    key: AggregateKey,
) -> BTreeMap<GroupKey, DateIndexedSeries> {
    run(trips, key)
        .mean_distance
        .into_iter()
        .filter(|(k, _)| k.matches(key))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDateTime;

    fn trip(start: &str, end: &str, miles: f64, pickup: u32, dropoff: u32) -> TripRecord {
        let parse = |s: &str| {
            NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
        };
        let (start, end) = (parse(start), parse(end));
        TripRecord {
            start,
            end,
            duration_secs: (end - start).num_seconds() as f64,
            distance_miles: miles,
            pickup_zone: ZoneId::new(pickup).unwrap(),
            dropoff_zone: ZoneId::new(dropoff).unwrap(),
            fare: None,
        }
    }

    #[test]
    fn city_counts_zero_fill_interior_days() {
        let trips = vec![
            trip("2021-01-01 08:00:00", "2021-01-01 08:20:00", 2.0, 8, 32),
            trip("2021-01-01 09:00:00", "2021-01-01 09:20:00", 3.0, 8, 32),
            trip("2021-01-03 10:00:00", "2021-01-03 10:20:00", 4.0, 32, 8),
        ];
        let counts = aggregate_daily(&trips, AggregateKey::City);
        let city = &counts[&GroupKey::City];
        assert_eq!(city.label(), "taxi_trips");
        assert_eq!(city.values().collect::<Vec<_>>(), vec![2.0, 0.0, 1.0]);
        assert!(city.is_contiguous());
    }

    #[test]
    fn trips_are_dated_by_start_day() {
        let trips = vec![trip("2021-01-01 23:50:00", "2021-01-02 00:30:00", 5.0, 8, 32)];
        let counts = aggregate_daily(&trips, AggregateKey::City);
        let city = &counts[&GroupKey::City];
        assert_eq!(city.entries().len(), 1);
        assert_eq!(city.first_date().unwrap().to_string(), "2021-01-01");
    }

    #[test]
    fn zone_series_share_the_global_range_and_conserve_totals() {
        let trips = vec![
            trip("2021-01-01 08:00:00", "2021-01-01 08:20:00", 2.0, 8, 32),
            trip("2021-01-02 08:00:00", "2021-01-02 08:20:00", 2.0, 32, 8),
            trip("2021-01-04 08:00:00", "2021-01-04 08:20:00", 2.0, 8, 8),
            trip("2021-01-04 09:00:00", "2021-01-04 09:20:00", 2.0, 56, 8),
        ];
        let by_zone = aggregate_daily(&trips, AggregateKey::PickupZone);
        let city = aggregate_daily(&trips, AggregateKey::City);
        assert_eq!(by_zone.len(), 3);
        for series in by_zone.values() {
            assert_eq!(series.len(), 4); // Jan 1 ..= Jan 4, zero-filled
        }
        let city_series = &city[&GroupKey::City];
        for (i, (date, total)) in city_series.entries().iter().enumerate() {
            let sum: f64 = by_zone.values().map(|s| s.entries()[i].1).sum();
            assert_eq!(sum, *total, "conservation on {date}");
        }
    }

    #[test]
    fn mean_distance_averages_per_day_and_skips_empty_days() {
        let trips = vec![
            trip("2021-01-01 08:00:00", "2021-01-01 08:20:00", 2.0, 8, 32),
            trip("2021-01-01 09:00:00", "2021-01-01 09:20:00", 4.0, 8, 32),
            trip("2021-01-03 10:00:00", "2021-01-03 10:20:00", 5.0, 8, 32),
        ];
        let distance = daily_mean_distance(&trips, AggregateKey::City);
        let city = &distance[&GroupKey::City];
        assert_eq!(city.unit(), Some("miles"));
        assert_eq!(city.values().collect::<Vec<_>>(), vec![3.0, 5.0]);
        assert!(!city.is_contiguous()); // Jan 2 has no trips, so no entry
    }

    #[test]
    fn od_pairs_keep_direction() {
        let trips = vec![
            trip("2021-01-01 08:00:00", "2021-01-01 08:20:00", 2.0, 8, 32),
            trip("2021-01-01 09:00:00", "2021-01-01 09:20:00", 2.0, 32, 8),
        ];
        let od = aggregate_daily(&trips, AggregateKey::OdPair);
        assert_eq!(od.len(), 2);
        let labels: Vec<String> = od.values().map(|s| s.label().to_string()).collect();
        assert!(labels.contains(&"taxi_trips_od_8_32".to_string()));
        assert!(labels.contains(&"taxi_trips_od_32_8".to_string()));
    }

    #[test]
    fn empty_input_yields_empty_maps() {
        assert!(aggregate_daily(&[], AggregateKey::City).is_empty());
        assert!(daily_mean_distance(&[], AggregateKey::PickupZone).is_empty());
    }

    #[test]
    fn one_pass_aggregator_matches_the_free_functions() {
        let trips = vec![
            trip("2021-01-01 08:00:00", "2021-01-01 08:20:00", 2.0, 8, 32),
            trip("2021-01-02 08:00:00", "2021-01-02 08:20:00", 6.0, 32, 8),
        ];
        let mut agg = DailyAggregator::new(true);
        for t in &trips {
            agg.observe(t);
        }
        let all = agg.finish();
        assert_eq!(
            all.counts[&GroupKey::City],
            aggregate_daily(&trips, AggregateKey::City)[&GroupKey::City]
        );
        let od_key = GroupKey::OdPair(ZoneId::new(8).unwrap(), ZoneId::new(32).unwrap());
        assert_eq!(
            all.mean_distance[&od_key],
            daily_mean_distance(&trips, AggregateKey::OdPair)[&od_key]
        );
    }
}
