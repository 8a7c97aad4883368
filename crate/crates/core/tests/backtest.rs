use chrono::NaiveDate;
use pricegraph::backtest::{market_baseline, simulate, Direction, Signal, SignalTable};
use proptest::prelude::*;

fn day(k: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 1, 3).unwrap() + chrono::Duration::days(k as i64)
}

fn sig(k: u32, t: &str, direction: Direction, ret: f64) -> Signal {
    Signal { date: day(k), realized: day(k + 1), ticker: t.into(), direction, ret }
}

#[test]
fn hand_computed_examples() {
    let two_longs = SignalTable::new([sig(0, "A", Direction::Long, 0.01), sig(0, "B", Direction::Long, 0.01)]).unwrap();
    assert!((simulate(&two_longs).unwrap().final_value() - 1.01).abs() < 1e-12);
    let long_short = SignalTable::new([sig(0, "A", Direction::Long, 0.02), sig(0, "B", Direction::Short, -0.01)]).unwrap();
    assert!((simulate(&long_short).unwrap().final_value() - 1.015).abs() < 1e-12);
    let two_days = SignalTable::new([sig(0, "A", Direction::Long, 0.01), sig(1, "A", Direction::Long, 0.01)]).unwrap();
    let nv = simulate(&two_days).unwrap();
    assert!((nv.final_value() - 1.0201).abs() < 1e-12);
    assert_eq!(nv.values.len(), 3);
    assert_eq!(nv.values[0], 1.0);
}

#[test]
fn single_stock_all_long_is_its_own_compounded_return() {
    let rets = [0.013, -0.02, 0.004, 0.0, 0.031, -0.007];
    let t = SignalTable::new(rets.iter().enumerate().map(|(k, &r)| sig(k as u32, "A", Direction::Long, r))).unwrap();
    let mut own = 1.0;
    for r in rets {
        own *= 1.0 + r;
    }
    assert_eq!(simulate(&t).unwrap().final_value(), own);
    assert_eq!(market_baseline(&t).unwrap().final_value(), own);
}

#[test]
fn csv_has_one_row_per_point() {
    let t = SignalTable::new([sig(0, "A", Direction::Long, 0.01), sig(1, "A", Direction::Short, 0.01)]).unwrap();
    let csv = simulate(&t).unwrap().to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "date,net_value");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1], "2022-01-03,1");
}

fn signals() -> impl Strategy<Value = Vec<(u32, u8, bool, f64)>> {
    prop::collection::vec((0u32..10, 0u8..5, any::<bool>(), -0.2f64..0.2), 1..40)
}

fn build(raw: &[(u32, u8, bool, f64)], flip: bool) -> SignalTable {
    let mut seen = std::collections::HashSet::new();
    SignalTable::new(raw.iter().filter(|(d, t, _, _)| seen.insert((*d, *t))).map(|&(d, t, long, r)| {
        let long = long != flip;
        let r = if flip { -r } else { r };
        sig(d, &format!("S{t}"), if long { Direction::Long } else { Direction::Short }, r)
    }))
    .unwrap()
}

proptest! {
    #[test]
    fn negating_returns_and_flipping_signals_is_invisible(raw in signals()) {
        let a = simulate(&build(&raw, false)).unwrap();
        let b = simulate(&build(&raw, true)).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn net_value_stays_positive(raw in signals()) {
        let nv = simulate(&build(&raw, false)).unwrap();
        prop_assert!(nv.values.iter().all(|&v| v > 0.0));
        prop_assert_eq!(nv.values.len(), nv.dates.len());
    }
}
