use probetime::formats::{read_series, write_series};
use probetime_core::series::ScoreSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn thousand_point_series_round_trips_bit_exactly() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let mut step = 0u64;
    let points = (0..1000)
        .map(|_| {
            step += r.random_range(1..10_000);
            // Mix ordinary values with extremes of the representable range.
            let v = match r.random_range(0..4) {
                0 => r.random::<f64>(),
                1 => r.random::<f64>() * 1e-300,
                2 => -r.random::<f64>() * 1e300,
                _ => f64::from_bits(r.random::<u64>() & 0x7fef_ffff_ffff_ffff),
            };
            (step, v)
        })
        .collect();
    let series = vec![ScoreSeries::new("facts", "toy", points).unwrap()];
    let back = read_series(&write_series(&series)).unwrap();
    assert_eq!(back.len(), 1);
    for (a, b) in series[0].points().iter().zip(back[0].points()) {
        assert_eq!((a.0, a.1.to_bits()), (b.0, b.1.to_bits()));
    }
}
