use std::collections::{BTreeMap, BTreeSet};

use chrono::DateTime;
use proptest::prelude::*;

use super::*;
use crate::geo::EARTH_RADIUS_M;
use crate::store::{Audience, Knowledge, Landmark};

fn ll(lat: f64, lon: f64) -> LatLongCoordinate {
    LatLongCoordinate::new(lat, lon).unwrap()
}

fn uid(s: &str) -> UserId {
    UserId::new(s).unwrap()
}

fn at(user: &str, p: LatLongCoordinate, secs: i64) -> LocationEvent {
    LocationEvent::new(uid(user), p, DateTime::from_timestamp(1_000_000_000 + secs, 0).unwrap()).unwrap()
}

fn store() -> (tempfile::TempDir, Store) {
    let d = tempfile::tempdir().unwrap();
    let s = Store::open(d.path()).unwrap();
    (d, s)
}

fn facility(id: &str, category: &str, p: LatLongCoordinate) -> Facility {
    Facility { id: id.into(), name: format!("name-{id}"), category: category.into(), position: p, info: String::new() }
}

// Spherical law of cosines at 40 significant digits (mpmath), R = 6371008.8 m.
const CITY_PAIRS: &[((f64, f64), (f64, f64), f64)] = &[
    ((56.3398, -2.7967), (56.4620, -2.9707), 17299.3810473973),
    ((51.5074, -0.1278), (48.8566, 2.3522), 343556.534880883),
    ((40.7128, -74.0060), (34.0522, -118.2437), 3935751.69089399),
    ((-33.8688, 151.2093), (35.6762, 139.6503), 7825829.42599722),
    ((55.9533, -3.1883), (55.8642, -4.2518), 67019.6034489704),
    ((-33.9249, 18.4241), (-34.6037, -58.3816), 6869763.33846461),
];

#[test]
fn haversine_against_independent_values() {
    for &((a1, a2), (b1, b2), want) in CITY_PAIRS {
        let got = haversine(&ll(a1, a2), &ll(b1, b2));
        assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
    }
    let deg = haversine(&ll(0.0, 0.0), &ll(0.0, 1.0));
    assert!((deg - 111195.08023353291285).abs() < 1e-6);
    assert!((deg - EARTH_RADIUS_M * std::f64::consts::PI / 180.0).abs() < 1e-6);
}

fn map() -> MapCalibration {
    MapCalibration::new("town", 800, 600, 56.35, 56.33, -2.81, -2.78).unwrap()
}

#[test]
fn calibration() {
    let m = map();
    assert_eq!(m.project(&ll(56.35, -2.81)), (0.0, 0.0));
    let (x, y) = m.project(&ll(56.34, -2.795));
    assert!((x - 400.0).abs() < 1e-6 && (y - 300.0).abs() < 1e-6);
    assert!(m.contains(&ll(56.34, -2.795)));
    assert!(!m.contains(&ll(56.36, -2.795)));
    assert!(MapCalibration::new("x", 10, 10, 1.0, 1.0, 0.0, 1.0).is_err());
    assert!(MapCalibration::new("x", 0, 10, 2.0, 1.0, 0.0, 1.0).is_err());
    assert!(MapCalibration::new("x", 10, 10, 2.0, 1.0, 1.0, 1.0).is_err());

    let pacific = MapCalibration::new("pacific", 360, 100, 10.0, -10.0, 170.0, -170.0).unwrap();
    assert!(pacific.contains(&ll(0.0, 179.0)));
    assert!(pacific.contains(&ll(0.0, -175.0)));
    assert!(!pacific.contains(&ll(0.0, 0.0)));
    let (x, _) = pacific.project(&ll(0.0, -180.0));
    assert!((x - 180.0).abs() < 1e-9);
}

#[test]
fn locate() {
    let (_d, s) = store();
    let maps = vec![map(), MapCalibration::new("world", 360, 180, 90.0, -90.0, -180.0, 180.0).unwrap()];
    assert!(locate_user(&s, &maps, &uid("+441111111")).is_none());
    s.record(at("+441111111", ll(56.35, -2.81), 0));
    let got = locate_user(&s, &maps, &uid("+441111111")).unwrap();
    let placed = got.map.unwrap();
    assert_eq!((placed.image_id.as_str(), placed.x, placed.y), ("town", 0.0, 0.0));
    s.record(at("+441111111", ll(10.0, 10.0), 1));
    assert_eq!(locate_user(&s, &maps, &uid("+441111111")).unwrap().map.unwrap().image_id, "world");
    assert!(locate_user(&s, &[map()], &uid("+441111111")).unwrap().map.is_none());
}

#[test]
fn trail_bbox_rules() {
    let b = trail_bbox(&[ll(0.0, 0.0), ll(1.0, 1.0)]).unwrap();
    for (got, want) in [(b.south, -0.1), (b.west, -0.1), (b.north, 1.1), (b.east, 1.1)] {
        assert!((got - want).abs() < 1e-12, "{b:?}");
    }
    let p = ll(56.34, -2.79);
    let b = trail_bbox(&[p]).unwrap();
    let ns = haversine(&ll(b.south, p.lon()), &ll(b.north, p.lon()));
    let ew = haversine(&ll(p.lat(), b.west), &ll(p.lat(), b.east));
    assert!(ns >= 200.0 - 1e-6 && ew >= 200.0 - 1e-3, "{ns} {ew}");
    assert!(((b.south + b.north) / 2.0 - p.lat()).abs() < 1e-12);
    assert!(trail_bbox(&[]).is_none());
}

#[test]
fn render() {
    let (_d, s) = store();
    let u = "+441111111";
    assert_eq!(render_trail(&s, &[map()], &uid(u), None, None).unwrap_err(), ServiceError::EmptyTrail);
    for i in 0..10 {
        s.record(at(u, ll(56.335 + i as f64 * 0.001, -2.80 + i as f64 * 0.001), i));
    }
    let view = render_trail(&s, &[map()], &uid(u), None, None).unwrap();
    assert_eq!(view.points.len(), 10);
    assert_eq!(view.map.as_ref().unwrap().image_id, "town");
    assert!(view.points.windows(2).all(|w| w[0].x < w[1].x && w[0].y > w[1].y));
    let err = render_trail(&s, &[map()], &uid(u), Some(DateTime::from_timestamp(1_000_000_009, 0).unwrap()), Some(DateTime::from_timestamp(1_000_000_000, 0).unwrap()));
    assert_eq!(err.unwrap_err().code(), "InvalidRange");
    let none = render_trail(&s, &[], &uid(u), None, None).unwrap();
    assert!(none.map.is_none() && none.points.is_empty() && none.events.len() == 10);
}

fn north_of(p: &LatLongCoordinate, metres: f64) -> LatLongCoordinate {
    ll(p.lat() + metres / 111195.08023353291285, p.lon())
}

#[test]
fn smart_town_contract() {
    let (_d, s) = store();
    let here = ll(56.34, -2.79);
    assert!(smart_town(&s, &here, 500.0, None).unwrap().entries.is_empty());
    s.swap_knowledge(Knowledge {
        facilities: vec![
            facility("b", "grocery", north_of(&here, 200.0)),
            facility("a", "pharmacy", north_of(&here, 100.0)),
            facility("c", "pharmacy", north_of(&here, 5000.0)),
        ],
        ..Knowledge::default()
    });
    let r = smart_town(&s, &here, 500.0, None).unwrap();
    let ids: Vec<&str> = r.entries.iter().map(|e| e.facility.id.as_str()).collect();
    assert_eq!(ids, ["a", "b"]);
    assert!((r.entries[0].distance_m - 100.0).abs() < 1e-6);
    assert_eq!((r.entries[0].prev.as_deref(), r.entries[0].next.as_deref()), (None, Some("b")));
    assert_eq!((r.entries[1].prev.as_deref(), r.entries[1].next.as_deref()), (Some("a"), None));
    let p = smart_town(&s, &here, 10_000.0, Some("pharmacy")).unwrap();
    assert!(p.entries.iter().all(|e| e.facility.category == "pharmacy"));
    assert_eq!(p.entries.len(), 2);
    assert_eq!(smart_town(&s, &here, 0.0, None).unwrap_err().code(), "InvalidParameter");
}

fn hearsay(id: &str, center: LatLongCoordinate, radius: f64, audience: Audience) -> Hearsay {
    Hearsay {
        id: id.into(),
        author: uid("+449999999"),
        region_center: center,
        region_radius: radius,
        message: format!("msg {id}"),
        audience,
    }
}

#[test]
fn hearsay_once_per_user() {
    let (_d, s) = store();
    let center = ll(56.34, -2.79);
    let only_bob = Audience::Users(BTreeSet::from([uid("+442222222")]));
    s.swap_knowledge(Knowledge {
        hearsay: vec![hearsay("h1", center, 50.0, Audience::All), hearsay("h2", center, 50.0, only_bob)],
        ..Knowledge::default()
    });
    let alice = "+441111111";
    assert!(hearsay_check(&s, &at(alice, north_of(&center, 80.0), 0)).is_empty());
    let got = hearsay_check(&s, &at(alice, north_of(&center, 49.0), 1));
    assert_eq!(got.iter().map(|h| h.id.as_str()).collect::<Vec<_>>(), ["h1"]);
    for i in 0..5 {
        assert!(hearsay_check(&s, &at(alice, north_of(&center, i as f64), 2 + i)).is_empty());
    }
    assert!(hearsay_check(&s, &at(alice, north_of(&center, 500.0), 10)).is_empty());
    assert!(hearsay_check(&s, &at(alice, center, 11)).is_empty());
    assert_eq!(hearsay_check(&s, &at("+442222222", center, 12)).len(), 2);
}

#[test]
fn hook_delivers_on_ingest() {
    let (_d, s) = store();
    let center = ll(56.34, -2.79);
    s.swap_knowledge(Knowledge { hearsay: vec![hearsay("h1", center, 50.0, Audience::All)], ..Knowledge::default() });
    install_hearsay_hook(&s);
    s.record(at("+441111111", center, 0));
    s.record(at("+441111111", center, 1));
    assert_eq!(s.deliveries_for(&uid("+441111111")).len(), 1);
}

#[test]
fn radar_contract() {
    let (_d, s) = store();
    let me = "+441111111";
    assert_eq!(radar(&s, &uid(me), 100.0).unwrap_err().code(), "NoKnownLocation");
    let here = ll(56.34, -2.79);
    s.record(at(me, here, 0));
    assert!(radar(&s, &uid(me), 100.0).unwrap().is_empty());

    s.swap_knowledge(Knowledge {
        landmarks: vec![Landmark { id: "castle".into(), name: "Castle".into(), position: north_of(&here, 300.0) }],
        visibility: BTreeMap::from([(uid("+443333333"), Audience::All)]),
        ..Knowledge::default()
    });
    s.record(at("+442222222", north_of(&here, 10.0), 0));
    s.record(at("+443333333", north_of(&here, 20.0), 0));
    let r = radar(&s, &uid(me), 1000.0).unwrap();
    let ids: Vec<&str> = r.iter().map(|e| e.id.as_str()).collect();
    assert_eq!(ids, ["+443333333", "castle"]);
    assert!((r[1].distance - 300.0).abs() < 1e-6);
    assert!(r[1].bearing.abs() < 1e-9);
    assert_eq!(r[1].kind, RadarKind::Landmark);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_inverts_within_half_pixel(
        lat in 56.33f64..=56.35, lon in -2.81f64..=-2.78,
    ) {
        let m = map();
        let p = ll(lat, lon);
        let (x, y) = m.clamp(m.project(&p));
        let (lat2, lon2) = m.unproject(x, y);
        prop_assert!((lat2 - lat).abs() <= 0.5 * m.lat_span() / m.pixel_height as f64 + 1e-12);
        prop_assert!((lon2 - lon).abs() <= 0.5 * m.lon_span() / m.pixel_width as f64 + 1e-12);
    }

    #[test]
    fn smart_town_matches_brute_force(
        spots in prop::collection::vec((-0.01f64..0.01, -0.01f64..0.01, 0usize..3), 0..30),
        qlat in -0.01f64..0.01, qlon in -0.01f64..0.01,
        radius in 1.0f64..2000.0,
        cat in prop::option::of(0usize..3),
    ) {
        let cats = ["pharmacy", "pub", "bank"];
        let (_d, s) = store();
        let facilities: Vec<Facility> = spots.iter().enumerate()
            .map(|(i, (a, b, c))| facility(&format!("f{i:02}"), cats[*c], ll(56.34 + a, -2.79 + b)))
            .collect();
        s.swap_knowledge(Knowledge { facilities: facilities.clone(), ..Knowledge::default() });
        let q = ll(56.34 + qlat, -2.79 + qlon);
        let got: Vec<String> = smart_town(&s, &q, radius, cat.map(|c| cats[c])).unwrap()
            .entries.into_iter().map(|e| e.facility.id).collect();

        let mut want: Vec<(f64, String)> = Vec::new();
        for f in &facilities {
            let d = haversine(&q, &f.position);
            if d <= radius && cat.is_none_or(|c| f.category == cats[c]) {
                want.push((d, f.id.clone()));
            }
        }
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(got, want.into_iter().map(|(_, id)| id).collect::<Vec<_>>());
    }
}
