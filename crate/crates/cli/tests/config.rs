use eigenmatrix::eigenmatrix::Mode;
use eigenmatrix::grid::GridKind;
use eigenmatrix_cli::config::{ConfigError, Count, Delimiter, KernelName, LayoutName, RunConfig};
use eigenmatrix_cli::presets::{preset, NAMES};
use eigenmatrix_cli::{effective_config, CommonArgs};

#[test]
fn minimal_config_fills_defaults() {
    let c = RunConfig::from_toml("kernel = \"power_law\"\nd = 2\n").unwrap();
    assert_eq!(c.kernel, KernelName::PowerLaw);
    assert_eq!(c.exponent, Some(1.0));
    assert_eq!(c.j, 1024);
    assert_eq!(c.region, [-2.0, 2.0]);
    assert_eq!(c.exclusion.0.map(|e| (e.lo, e.hi)), Some((-1.0, 1.0)));
    assert_eq!(c.layout, LayoutName::Easy);
    assert_eq!(c.n_x, Count::Fixed(4));
    assert_eq!(c.sigma, 0.0);
    assert_eq!(c.sigmas, vec![0.0]);
    assert_eq!((c.seed, c.seeds.clone()), (0, vec![0]));
    assert_eq!(c.grid, 32);
    assert_eq!(c.grid_kind, GridKind::Chebyshev);
    assert_eq!(c.mode, Mode::ComplexEmbedding);
    assert_eq!((c.sv_threshold_rel, c.norm_cap, c.cond_limit), (1e-8, 10.0, 1e7));
    assert_eq!(c.degree, Count::Auto);
    assert!(c.refine);
    assert_eq!(c.delimiter, Delimiter::Comma);
    assert_eq!(c.out, "out");
}

#[test]
fn defaults_depend_on_kernel_and_dimension() {
    let f2 = RunConfig::from_toml("kernel = \"fourier\"\nd = 2").unwrap();
    assert_eq!(f2.region, [-8.0, 8.0]);
    assert!(f2.exclusion.0.is_none());
    let f3 = RunConfig::from_toml("kernel = \"fourier\"\nd = 3").unwrap();
    assert_eq!((f3.region, f3.grid, f3.mode), ([-4.0, 4.0], 16, Mode::PerDimension));
    let e4 = RunConfig::from_toml(
        "kernel = \"exponential\"\nd = 4\nlayout = \"explicit\"\nspikes = [[0.1, 0.2, 0.3, 0.4]]\nn_x = 1",
    )
    .unwrap();
    assert_eq!(e4.grid, 8);
}

#[test]
fn negative_sigma_names_the_key() {
    let e = RunConfig::from_toml("kernel = \"fourier\"\nd = 2\nsigma = -1.0").unwrap_err();
    assert!(
        matches!(e, ConfigError::Invalid { ref key, .. } if key == "sigma"),
        "{e}"
    );
    assert!(e.to_string().contains("`sigma`"));
}

#[test]
fn missing_required_keys_are_named() {
    let e = RunConfig::from_toml("d = 2").unwrap_err();
    assert!(e.to_string().contains("`kernel`"), "{e}");
    let e = RunConfig::from_toml("kernel = \"fourier\"").unwrap_err();
    assert!(e.to_string().contains("`d`"), "{e}");
}

#[test]
fn unknown_key_reports_line_and_column() {
    let e = RunConfig::from_toml("kernel = \"fourier\"\nd = 2\nsigmma = 0.1\n").unwrap_err();
    let msg = e.to_string();
    assert!(matches!(e, ConfigError::Parse(_)));
    assert!(msg.contains("sigmma"), "{msg}");
    assert!(msg.contains("line 3"), "{msg}");
    assert!(msg.contains("column 1"), "{msg}");
}

#[test]
fn exponent_rejected_for_other_kernels() {
    let e = RunConfig::from_toml("kernel = \"fourier\"\nd = 2\nexponent = 1.0").unwrap_err();
    assert!(e.to_string().contains("`exponent`"));
}

#[test]
fn echo_round_trips() {
    let mut docs = vec![
        "kernel = \"power_law\"\nd = 2".to_owned(),
        "kernel = \"fourier\"\nd = 3\nL = 3\nexclusion = \"none\"\nsigmas = [1e-3, 0.0]".to_owned(),
        "kernel = \"fourier\"\nd = 1\nlayout = \"explicit\"\nspikes = [[0.5]]\nn_x = \"auto\"\ndelimiter = \"tab\"".to_owned(),
        "kernel = \"exponential\"\nd = 1\nlayout = \"explicit\"\nspikes = [[0.25], [-0.5]]\nweights = [1.0, 2.0]\nn_x = 2"
            .to_owned(),
    ];
    docs.extend(NAMES.iter().map(|n| toml::to_string(&preset(n).unwrap()).unwrap()));
    for doc in docs {
        let c = RunConfig::from_toml(&doc).unwrap();
        let again = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again, "{doc}");
        assert_eq!(c.hash(), again.hash());
    }
}

#[test]
fn hash_ignores_output_directory_only() {
    let a = RunConfig::from_toml("kernel = \"fourier\"\nd = 2").unwrap();
    let b = RunConfig::from_toml("kernel = \"fourier\"\nd = 2\nout = \"elsewhere\"").unwrap();
    let c = RunConfig::from_toml("kernel = \"fourier\"\nd = 2\nseed = 1").unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn layers_apply_in_precedence_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "J = 300\nsigma = 1e-3\nseed = 5\n").unwrap();
    let args = CommonArgs {
        preset: Some("fig2-easy".into()),
        config: Some(path),
        overrides: vec![
            "sigma=1e-4".into(),
            "kernel=fourier".into(),
            "grid=12".into(),
            "grid=16".into(),
        ],
        seed: Some(9),
        out: Some("o".into()),
        threads: None,
    };
    let c = effective_config(&args).unwrap();
    assert_eq!(c.j, 300);
    assert_eq!(c.sigma, 1e-4);
    assert_eq!(c.grid, 16);
    assert_eq!((c.seed, c.seeds.clone()), (9, vec![9]));
    assert_eq!(c.out, "o");
    // untouched preset keys survive
    assert_eq!(c.sigmas, vec![1e-2, 1e-3, 1e-4]);
}

#[test]
fn unknown_preset_lists_available() {
    let e = preset("fig9").unwrap_err();
    let msg = e.to_string();
    assert!(NAMES.iter().all(|n| msg.contains(n)), "{msg}");
}

#[test]
fn override_values_parse_as_toml_or_strings() {
    use eigenmatrix_cli::config::parse_override;
    use toml::Value;
    assert_eq!(parse_override("J=64").unwrap(), ("J".into(), Value::Integer(64)));
    assert_eq!(
        parse_override("region=[-3, 3]").unwrap().1,
        Value::Array(vec![Value::Integer(-3), Value::Integer(3)])
    );
    assert_eq!(
        parse_override("kernel = fourier").unwrap(),
        ("kernel".into(), Value::String("fourier".into()))
    );
    assert!(parse_override("novalue").is_err());
}
