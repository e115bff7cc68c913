use malaria_forecast::data::{
    aggregate_provinces, ingest_csv, to_country_level, to_csv_bytes, IngestOptions,
    RedistrictingMap,
};
use malaria_forecast::math::Rng;
use malaria_forecast::synth::{generate, SynthConfig};
use proptest::prelude::*;

fn dataset(seed: u64, months: usize) -> malaria_forecast::data::Dataset {
    let mut c = SynthConfig::burundi(seed);
    c.months = months;
    c.missingness = 0.0;
    generate(&c).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cases_are_conserved_at_every_level(seed in any::<u64>(), months in 22usize..48) {
        let old = dataset(seed, months);
        let new = aggregate_provinces(&old, &RedistrictingMap::burundi()).unwrap();
        let country = to_country_level(&new).unwrap();
        let c = country.series("Burundi").unwrap();
        for t in 0..months {
            let a: u64 = old.iter_series().map(|(_, s)| s[t].cases).sum();
            let b: u64 = new.iter_series().map(|(_, s)| s[t].cases).sum();
            let p: u64 = old.iter_series().map(|(_, s)| s[t].population).sum();
            prop_assert_eq!(a, b);
            prop_assert_eq!(b, c[t].cases);
            prop_assert_eq!(p, c[t].population);
        }
    }

    #[test]
    fn aggregation_ignores_row_order(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
        let old = dataset(seed, 24);
        let text = String::from_utf8(to_csv_bytes(&old).unwrap()).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let header = lines.remove(0);
        Rng::new(shuffle_seed).shuffle(&mut lines);
        let shuffled = format!("{header}\n{}\n", lines.join("\n"));
        let back = ingest_csv(shuffled.as_bytes(), &IngestOptions::default()).unwrap();
        prop_assert_eq!(&back, &old);
        let map = RedistrictingMap::burundi();
        let a = aggregate_provinces(&old, &map).unwrap();
        let b = aggregate_provinces(&back, &map).unwrap();
        prop_assert_eq!(to_csv_bytes(&a).unwrap(), to_csv_bytes(&b).unwrap());
    }
}
