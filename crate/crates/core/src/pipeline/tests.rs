use super::*;

fn minimal(out: &Path) -> ExperimentConfig {
    let s = include_str!("../../../../configs/minimal.json");
    let mut c = ExperimentConfig::from_json(s).unwrap();
    c.samples = SampleCounts { horizon: 2000, correlation: 2000, window_starts: 500 };
    c.k_max = 4;
    c.output = out.to_path_buf();
    c
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn committed_schema_matches_the_config_type() {
    let committed = include_str!("../../../../schema/experiment-config.schema.json");
    assert_eq!(committed, config_schema());
}

#[test]
fn validation_rejects_bad_configs_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let good = minimal(dir.path());
    good.validate().unwrap();

    let mut c = good.clone();
    c.witnesses[0].level = 5;
    assert!(matches!(c.validate(), Err(PipelineError::Validation(_))));
    let mut c = good.clone();
    c.witnesses[0].j = c.witnesses[0].i;
    assert!(c.validate().is_err());
    let mut c = good.clone();
    c.alphas = vec![0.0];
    assert!(c.validate().is_err());
    let mut c = good.clone();
    c.generator.rule = "penrose".into();
    assert!(c.validate().is_err());
    let mut c = good.clone();
    c.radius_map.remove(&2);
    assert!(c.validate().is_err());
    let mut c = good.clone();
    c.samples.horizon = 0;
    assert!(c.validate().is_err());

    let e = run_pipeline(&c).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(!dir.path().join("patch.json").exists());
    let unknown = r#"{"seed": 1, "bogus": true}"#;
    assert!(matches!(ExperimentConfig::from_json(unknown), Err(PipelineError::Validation(_))));
}

#[test]
fn reruns_are_byte_identical_and_resume_from_cache() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pipeline(&minimal(a.path())).unwrap();
    let rb = run_pipeline(&minimal(b.path())).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(tree(a.path()), tree(b.path()));
    assert_eq!(ra.stages.len(), STAGES.len());
    assert!(!ra.tainted);

    let before = tree(a.path());
    let again = run_pipeline(&minimal(a.path())).unwrap();
    assert_eq!(again, ra);
    assert_eq!(tree(a.path()), before);

    let mut changed = minimal(a.path());
    changed.seed = 2;
    let rc = run_pipeline(&changed).unwrap();
    assert_eq!(rc.stages[2].hash, ra.stages[2].hash);
    assert_ne!(rc.stages[3].hash, ra.stages[3].hash);
}

#[test]
fn partial_runs_stop_at_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_until(&minimal(dir.path()), "tower").unwrap();
    assert_eq!(r.stages.len(), 3);
    assert_eq!(r.headline.k_n, vec![4, 4, 4]);
    assert!(r.headline.m_hat.is_none());
    assert!(matches!(export_plots_data(&r, dir.path()), Err(PipelineError::Stage { .. })));
    assert!(run_until(&minimal(dir.path()), "nowhere").is_err());
}

#[test]
fn export_writes_one_file_per_series_and_markers() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_pipeline(&minimal(dir.path())).unwrap();
    let loaded = load_report(dir.path()).unwrap();
    assert_eq!(loaded, r);
    let files = export_plots_data(&loaded, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let series = fs::read_to_string(&files[0]).unwrap();
    assert_eq!(series.lines().count(), 6);
    let markers = fs::read_to_string(&files[1]).unwrap();
    assert!(markers.contains("L1_0_1,k_star,1,0"));
    assert!(markers.contains("lower_bound"));
}

#[test]
fn infinite_horizon_aborts_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = minimal(dir.path());
    c.radius_map = c.radius_map.keys().map(|&l| (l, 0.3)).collect();
    let e = run_pipeline(&c).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    let partial = load_report(dir.path()).unwrap();
    assert_eq!(partial.stages.last().unwrap().name, "horizon");
    c.allow_infinite_horizon = true;
    let r = run_until(&c, "witnesses").unwrap();
    assert!(r.tainted);
    assert!(r.headline.m_hat.unwrap() > 10.0);
}
