use proptest::prelude::*;
use tiltsens::{MatchedSet, MatchedStudy, Unit};
use tiltsens_cli::error::CliError;
use tiltsens_cli::io::{format_f64, load_study, read_csv, read_json, write_atomic, write_csv};

fn parse(text: &str) -> Result<MatchedStudy, CliError> {
    read_csv(text.as_bytes(), "test.csv")
}

#[test]
fn two_row_study() {
    let s = parse("set_id,treated,outcome\ns1,1,3.5\ns1,0,1.25\n").unwrap();
    assert_eq!(s.sets().len(), 1);
    let set = &s.sets()[0];
    assert_eq!(set.set_id, "s1");
    assert_eq!(set.units, vec![Unit { treated: true, outcome: 3.5 }, Unit { treated: false, outcome: 1.25 }]);
}

#[test]
fn two_treated_names_the_set() {
    let e = parse("set_id,treated,outcome\ns1,1,1\ns1,1,2\n").unwrap_err();
    assert_eq!(e.kind(), "study");
    assert!(e.to_string().contains("s1"), "{e}");
}

#[test]
fn sets_keep_first_appearance_order() {
    let mut text = String::from("set_id,treated,outcome\n");
    for i in 0..12 {
        for j in 0..3 {
            text.push_str(&format!("set{i},{},{}\n", u8::from(j == 0), i * 3 + j));
        }
    }
    let s = parse(&text).unwrap();
    assert_eq!(s.sets().len(), 12);
    for (i, set) in s.sets().iter().enumerate() {
        assert_eq!(set.set_id, format!("set{i}"));
        assert_eq!(set.units.len(), 3);
        assert_eq!(set.units[1].outcome, (i * 3 + 1) as f64);
    }
}

#[test]
fn interleaved_rows_group_by_set() {
    let s = parse("set_id,treated,outcome\nb,1,1\na,0,2\nb,0,3\na,1,4\n").unwrap();
    let ids: Vec<&str> = s.sets().iter().map(|x| x.set_id.as_str()).collect();
    assert_eq!(ids, ["b", "a"]);
    assert_eq!(s.sets()[1].units[1], Unit { treated: true, outcome: 4.0 });
}

#[test]
fn comments_whitespace_and_column_order() {
    let s = parse("# study\noutcome , set_id , treated\n# unit rows\n 2.0 , x , 1\n1.0,x,0\n").unwrap();
    assert_eq!(s.sets()[0].units[0], Unit { treated: true, outcome: 2.0 });
}

#[test]
fn errors_carry_line_numbers() {
    let cases = [
        ("set_id,treated,outcome\ns1,1,1\ns1,2,0\n", 3, "treated"),
        ("set_id,treated,outcome\ns1,1,1\ns1,0,abc\n", 3, "not a number"),
        ("set_id,treated,outcome\ns1,1,1\ns1,0,\n", 3, "missing outcome"),
        ("set_id,treated,outcome\ns1,1,inf\ns1,0,1\n", 2, "not finite"),
        ("set_id,treated,outcome\n,1,1\n", 2, "set_id"),
        ("set,treated,outcome\ns1,1,1\n", 1, "set_id"),
    ];
    for (text, line, needle) in cases {
        match parse(text) {
            Err(CliError::Parse { line: l, message, .. }) => {
                assert_eq!(l, line, "{text:?}: {message}");
                assert!(message.contains(needle), "{message}");
            }
            other => panic!("{text:?}: expected parse error, got {other:?}"),
        }
    }
}

#[test]
fn json_mirrors_csv() {
    let csv = parse("set_id,treated,outcome\ns1,1,3\ns1,0,1\ns2,0,0.5\ns2,1,2\ns2,0,-1\n").unwrap();
    let text = serde_json::to_string(&csv).unwrap();
    let json = read_json(text.as_bytes(), "test.json").unwrap();
    assert_eq!(csv, json);

    let e = read_json(r#"{"sets":[{"set_id":"q","units":[{"treated":false,"outcome":1}]}]}"#.as_bytes(), "t.json")
        .unwrap_err();
    assert!(e.to_string().contains('q'), "{e}");
}

#[test]
fn load_by_extension_and_atomic_write() {
    let dir = tempfile::tempdir().unwrap();
    let study = parse("set_id,treated,outcome\ns1,1,3\ns1,0,1\n").unwrap();
    let json_path = dir.path().join("s.json");
    write_atomic(&json_path, serde_json::to_string(&study).unwrap().as_bytes()).unwrap();
    let mut buf = Vec::new();
    write_csv(&study, &mut buf).unwrap();
    let csv_path = dir.path().join("s.csv");
    write_atomic(&csv_path, &buf).unwrap();
    assert_eq!(load_study(&json_path).unwrap(), study);
    assert_eq!(load_study(&csv_path).unwrap(), study);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2, "no temp files left behind");

    let e = load_study(&dir.path().join("missing.csv")).unwrap_err();
    assert_eq!(e.kind(), "io");
}

#[test]
fn float_text_is_shortest_round_trip() {
    assert_eq!(format_f64(0.1), "0.1");
    assert_eq!(format_f64(1.0), "1.0");
    assert_eq!(format_f64(-2.5e-300), "-2.5e-300");
}

fn study_strategy() -> impl Strategy<Value = MatchedStudy> {
    let set = (1usize..5, 0usize..5, prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 5));
    prop::collection::vec(set, 1..8).prop_map(|raw| {
        let sets = raw
            .into_iter()
            .enumerate()
            .map(|(i, (controls, pos, ys))| {
                let n = controls + 1;
                let units = (0..n)
                    .map(|j| Unit { treated: j == pos % n, outcome: ys[j] })
                    .collect();
                MatchedSet { set_id: format!("id {i}"), units }
            })
            .collect();
        MatchedStudy::new(sets).unwrap()
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_bit_exact(study in study_strategy()) {
        let mut buf = Vec::new();
        write_csv(&study, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "rt.csv").unwrap();
        prop_assert_eq!(back.sets().len(), study.sets().len());
        for (a, b) in back.sets().iter().zip(study.sets()) {
            prop_assert_eq!(&a.set_id, &b.set_id);
            for (u, v) in a.units.iter().zip(&b.units) {
                prop_assert_eq!(u.treated, v.treated);
                prop_assert_eq!(u.outcome.to_bits(), v.outcome.to_bits());
            }
        }
    }

    #[test]
    fn float_text_parses_back(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let s = format_f64(x);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        let mantissa: String = s.split(['e', 'E']).next().unwrap().chars().filter(char::is_ascii_digit).collect();
        let significant = mantissa.trim_start_matches('0').trim_end_matches('0').len();
        prop_assert!(significant <= 17, "{}", s);
    }
}
