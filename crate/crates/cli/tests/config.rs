use tiltsens::{Method, ScoreSpec, WeightFamily};
use tiltsens_cli::args::{AnalyzeArgs, DesignSensArgs, PowerArgs};
use tiltsens_cli::config::{resolve, AnalyzeConfig, ConfigFile, DesignSensConfig, GammaList, PowerConfig};

#[test]
fn gamma_list_forms() {
    assert_eq!("1.5".parse::<GammaList>().unwrap().0, vec![1.5]);
    assert_eq!("1, 2,3.5".parse::<GammaList>().unwrap().0, vec![1.0, 2.0, 3.5]);
    let r = "1:6:0.1".parse::<GammaList>().unwrap().0;
    assert_eq!(r.len(), 51);
    assert_eq!(r[0], 1.0);
    assert_eq!(r[3], 1.3);
    assert_eq!(*r.last().unwrap(), 6.0);
    for bad in ["", "x", "1:2", "2:1:0.1", "1:2:0", "1:2:-1"] {
        assert!(bad.parse::<GammaList>().is_err(), "{bad:?}");
    }
}

#[test]
fn defaults_without_file_or_flags() {
    let c: AnalyzeConfig = resolve(&ConfigFile::default(), "analyze", &AnalyzeArgs::default()).unwrap();
    assert_eq!(c.stat, ScoreSpec::DiffMeans);
    assert_eq!(c.methods, vec![Method::Conventional, Method::Tilted(WeightFamily::Unit)]);
    assert_eq!(c.gamma.0, vec![1.0]);
    assert_eq!(c.alpha, 0.05);

    let p: PowerConfig = resolve(&ConfigFile::default(), "power", &PowerArgs::default()).unwrap();
    assert_eq!(p.gamma.0.len(), 51);
    assert_eq!(p.reps, 10_000);
}

#[test]
fn flags_override_file_values() {
    let file = ConfigFile::parse(
        "[analyze]\nstat = \"mh\"\nmethods = [\"conventional\", \"tilted\"]\ngamma = \"1:2:0.5\"\nalpha = 0.1\n\n[power]\nJ = 4\n",
    )
    .unwrap();
    let args = AnalyzeArgs { alpha: Some(0.01), weights: Some("ss".into()), ..Default::default() };
    let c: AnalyzeConfig = resolve(&file, "analyze", &args).unwrap();
    assert_eq!(c.stat, ScoreSpec::MantelHaenszel);
    assert_eq!(c.methods, vec![Method::Conventional, Method::Tilted(WeightFamily::SignScore)]);
    assert_eq!(c.gamma.0, vec![1.0, 1.5, 2.0]);
    assert_eq!(c.alpha, 0.01);

    let p: PowerConfig = resolve(&file, "power", &PowerArgs::default()).unwrap();
    assert_eq!(p.controls, 4);
    let p: PowerConfig = resolve(&file, "power", &PowerArgs { controls: Some(2), ..Default::default() }).unwrap();
    assert_eq!(p.controls, 2);
}

#[test]
fn design_lists_from_file() {
    let file = ConfigFile::parse("[design-sens]\nfamily = [\"t3\", \"normal\"]\ncontrols = [2, 5]\nI = 1000\n").unwrap();
    let c: DesignSensConfig = resolve(&file, "design-sens", &DesignSensArgs::default()).unwrap();
    assert_eq!(c.family.len(), 2);
    assert_eq!(c.controls, vec![2, 5]);
    assert_eq!(c.sets, 1000);
}

#[test]
fn resolved_config_resolves_to_itself() {
    let args = AnalyzeArgs {
        stat: Some("huber".into()),
        methods: Some(vec!["adaptive:ipw".into()]),
        gamma: Some("1,2".into()),
        ..Default::default()
    };
    let c: AnalyzeConfig = resolve(&ConfigFile::default(), "analyze", &args).unwrap();
    let again: AnalyzeConfig = resolve(&ConfigFile::default(), "analyze", &c).unwrap();
    assert_eq!(serde_json::to_value(&c).unwrap(), serde_json::to_value(&again).unwrap());
}

#[test]
fn bad_files_and_values_are_config_errors() {
    for text in ["[analyse]\n", "analyze = 3\n", "[analyze\n"] {
        let e = ConfigFile::parse(text).unwrap_err();
        assert_eq!(e.kind(), "config", "{text:?}");
    }
    let file = ConfigFile::parse("[analyze]\ncolour = 1\n").unwrap();
    let e = resolve::<AnalyzeConfig, _>(&file, "analyze", &AnalyzeArgs::default()).unwrap_err();
    assert!(e.to_string().contains("colour"), "{e}");
    let args = AnalyzeArgs { stat: Some("median".into()), ..Default::default() };
    let e = resolve::<AnalyzeConfig, _>(&ConfigFile::default(), "analyze", &args).unwrap_err();
    assert_eq!(e.kind(), "config");
}
