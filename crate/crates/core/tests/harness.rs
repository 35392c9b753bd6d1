use bisbm::harness::{mean_sd, run_sweep, run_trial, write_sweep_csv, ExperimentConfig, Method, CSV_COLUMNS};

const CONFIG: &str = "\
n1 = 50
n2 = 800
c = 0.3
K = 2
trials = 4
seed = 12
methods = spec, gpm, hl
[sweep]
variable = p
values = 0.08, 0.15, 0.3
";

fn csv_text(cfg: &ExperimentConfig) -> String {
    let out = run_sweep(cfg).unwrap();
    let mut buf = Vec::new();
    write_sweep_csv(&out, &mut buf, false).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn identical_config_gives_identical_csv() {
    let cfg = ExperimentConfig::parse(CONFIG).unwrap();
    assert_eq!(csv_text(&cfg), csv_text(&cfg));
    let mut other = cfg.clone();
    other.seed = 13;
    assert_ne!(csv_text(&cfg), csv_text(&other));
}

#[test]
fn trials_do_not_depend_on_execution_order() {
    let cfg = ExperimentConfig::parse(CONFIG).unwrap();
    let out = run_sweep(&cfg).unwrap();
    for point in (0..3).rev() {
        for trial in (0..4).rev() {
            let alone = run_trial(&cfg, point, trial).unwrap();
            for rec in alone {
                let from_sweep = out
                    .records
                    .iter()
                    .find(|r| r.point == point && r.trial == trial && r.method == rec.method)
                    .unwrap();
                assert_eq!((from_sweep.nmi, from_sweep.rate, from_sweep.seed), (rec.nmi, rec.rate, rec.seed));
            }
        }
    }
}

#[test]
fn csv_rows_and_aggregates_are_consistent() {
    let cfg = ExperimentConfig::parse(CONFIG).unwrap();
    let text = csv_text(&cfg);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_COLUMNS.to_vec());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let data: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[0] == "data").collect();
    assert_eq!(data.len(), 3 * 3 * 4);
    assert_eq!(rows.len(), data.len() + 2 * 3 * 3);
    // Data rows precede aggregate rows.
    assert!(rows[..data.len()].iter().all(|r| &r[0] == "data"));

    for agg in rows.iter().filter(|r| &r[0] != "data") {
        let nmis: Vec<f64> = data
            .iter()
            .filter(|r| r[2] == agg[2] && r[3] == agg[3])
            .map(|r| r[6].parse().unwrap())
            .collect();
        assert_eq!(nmis.len(), 4);
        let (m, s) = mean_sd(&nmis);
        let want = if &agg[0] == "mean" { m } else { s };
        let got: f64 = agg[6].parse().unwrap();
        // Aggregates are computed before rounding, raw rows are rounded to 6 digits.
        assert!((got - want).abs() <= 1e-5, "{got} vs {want}");
    }
    for r in &data {
        let nmi: f64 = r[6].parse().unwrap();
        let rate: f64 = r[7].parse().unwrap();
        assert!((0.0..=1.0).contains(&nmi) && (0.0..=1.0).contains(&rate));
    }
}

#[test]
fn easy_point_is_recovered_by_every_method() {
    let cfg = ExperimentConfig::parse(CONFIG).unwrap();
    let out = run_sweep(&cfg).unwrap();
    for m in [Method::Spec, Method::Gpm, Method::Hl] {
        let agg = out.aggregate(2, m).unwrap();
        assert_eq!(agg.mean_rate, 0.0, "{m}");
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        if path.file_name().unwrap().to_str().unwrap().starts_with("xp") {
            ExperimentConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert_eq!(seen, 4);
}
