use std::collections::BTreeMap;

use styloshift::cluster::{cluster_models, Linkage, Metric};
use styloshift::dimensions::DimensionScores;
use styloshift::report::*;
use styloshift::stats::{BenchmarkResult, BootstrapConfig, RngSeed};
use styloshift::Error;

fn result(id: &str, b: &[f64], sig: &[bool], big_b: f64, ci: (f64, f64)) -> BenchmarkResult<f64> {
    let n = b.len();
    BenchmarkResult {
        config_id: id.into(),
        n_docs: 10,
        mean_delta: b.to_vec(),
        mean_delta_ci_low: b.to_vec(),
        mean_delta_ci_high: b.to_vec(),
        se_i: vec![1.0; n],
        b: b.to_vec(),
        b_ci_low: b.iter().map(|x| x - 1.0).collect(),
        b_ci_high: b.iter().map(|x| x + 1.0).collect(),
        p_values: sig.iter().map(|&s| if s { 0.0001 } else { 0.5 }).collect(),
        significant: sig.to_vec(),
        big_b,
        big_b_ci: ci,
        iters: 1000,
        seed: RngSeed(1),
        m_tests: 6,
    }
}

fn dims(n: usize) -> Vec<String> {
    (1..=n).map(|d| format!("D{d}")).collect()
}

/// Attribute values of every element carrying `attr`.
fn attrs<'a>(svg: &'a str, attr: &str) -> Vec<&'a str> {
    let pat = format!(" {attr}=\"");
    svg.match_indices(&pat)
        .map(|(i, _)| {
            let rest = &svg[i + pat.len()..];
            &rest[..rest.find('"').unwrap()]
        })
        .collect()
}

fn element_with<'a>(svg: &'a str, needle: &str) -> &'a str {
    svg.lines().find(|l| l.contains(needle)).unwrap_or_else(|| panic!("no element with {needle}"))
}

fn attr_of<'a>(element: &'a str, attr: &str) -> &'a str {
    attrs(element, attr)[0]
}

#[test]
fn heatmap_colors_follow_linear_ramp() {
    let results = [result("m", &[50.0, 0.0, -25.0, 80.0], &[true, false, false, false], 1.0, (0.0, 2.0))];
    let spec = ReportSpec::new(ReportKind::Heatmap, "h.svg");
    let svg = render_heatmap(&results, None, &dims(4), &spec).unwrap();
    let ramp = Palette::RedGreen.ramp();
    let cell = |d: &str| element_with(&svg, &format!(r#"data-dim="{d}""#)).to_string();
    assert_eq!(attr_of(&cell("D1"), "fill"), ramp.positive.hex());
    assert_eq!(attr_of(&cell("D2"), "fill"), ramp.neutral.hex());
    // halfway between neutral and red, channel by channel
    let half = |a: u8, b: u8| ((a as f64 + b as f64) / 2.0).round() as u8;
    let expected = Rgb(
        half(ramp.neutral.0, ramp.negative.0),
        half(ramp.neutral.1, ramp.negative.1),
        half(ramp.neutral.2, ramp.negative.2),
    );
    assert_eq!(attr_of(&cell("D3"), "fill"), expected.hex());
    assert_eq!(attr_of(&cell("D4"), "fill"), ramp.positive.hex(), "clipped at cap");
    assert_eq!(attr_of(&cell("D1"), "stroke-width"), "2.5");
    assert_eq!(attr_of(&cell("D2"), "stroke-width"), "0.5");
}

#[test]
fn heatmap_rows_follow_dendrogram() {
    let results = [
        result("a", &[1.0, 1.0], &[false; 2], 1.0, (0.0, 2.0)),
        result("b", &[30.0, -30.0], &[true; 2], 1.0, (0.0, 2.0)),
        result("c", &[1.5, 1.0], &[false; 2], 1.0, (0.0, 2.0)),
    ];
    let vectors: Vec<(String, Vec<f64>)> = results.iter().map(|r| (r.config_id.clone(), r.b.clone())).collect();
    let dendro = cluster_models(&vectors, Linkage::Average, Metric::Euclidean).unwrap();
    let spec = ReportSpec::new(ReportKind::Heatmap, "h.svg");
    let svg = render_heatmap(&results, Some(&dendro), &dims(2), &spec).unwrap();
    let order: Vec<&str> = attrs(&svg, "data-config").into_iter().step_by(2).collect();
    assert_eq!(order, dendro.ordered_labels());

    let again = render_heatmap(&results, Some(&dendro), &dims(2), &spec).unwrap();
    assert_eq!(svg, again);

    let table = heatmap_table(&results, Some(&dendro), &dims(2), &spec).unwrap();
    for b in attrs(&svg, "data-b") {
        assert!(table.contains(&format!(",{b},")), "{b} missing from table");
    }
}

#[test]
fn heatmap_dimension_mismatch() {
    let results = [result("a", &[1.0, 1.0], &[false; 2], 1.0, (0.0, 2.0))];
    let spec = ReportSpec::new(ReportKind::Heatmap, "h.svg");
    assert!(matches!(
        render_heatmap(&results, None, &dims(3), &spec),
        Err(Error::DimensionMismatch { .. })
    ));
    let mut bad = spec.clone();
    bad.color_cap_multiplier = 0.0;
    assert!(render_heatmap(&results, None, &dims(2), &bad).is_err());
}

#[test]
fn ranking_single_bar_with_whisker() {
    let svg = render_ranking(&[result("m", &[5.0], &[true], 5.0, (4.0, 6.0))], &ReportSpec::new(ReportKind::Ranking, "r.svg"))
        .unwrap();
    let bars = attrs(&svg, "data-B");
    assert_eq!(bars, ["5"]);
    let bar = element_with(&svg, "data-B=");
    assert_eq!(attr_of(bar, "data-ci-low"), "4");
    assert_eq!(attr_of(bar, "data-ci-high"), "6");
    let x0: f64 = attr_of(bar, "x").parse().unwrap();
    let w: f64 = attr_of(bar, "width").parse().unwrap();
    let scale = w / 5.0;
    let whisker = svg.lines().skip_while(|l| !l.contains("whisker")).nth(1).unwrap();
    let x1: f64 = attr_of(whisker, "x1").parse().unwrap();
    let x2: f64 = attr_of(whisker, "x2").parse().unwrap();
    assert!((x1 - (x0 + 4.0 * scale)).abs() < 0.01);
    assert!((x2 - (x0 + 6.0 * scale)).abs() < 0.01);
}

#[test]
fn ranking_order_and_linear_scale() {
    let results = [
        result("zeta", &[0.0], &[false], 40.0, (38.0, 41.0)),
        result("beta", &[0.0], &[false], 5.0, (4.0, 6.0)),
        result("alpha", &[0.0], &[false], 5.0, (4.0, 6.0)),
    ];
    let svg = render_ranking(&results, &ReportSpec::new(ReportKind::Ranking, "r.svg")).unwrap();
    assert_eq!(attrs(&svg, "data-config"), ["alpha", "beta", "zeta"]);
    let width = |id: &str| -> f64 { attr_of(element_with(&svg, &format!(r#"data-config="{id}""#)), "width").parse().unwrap() };
    assert!((width("zeta") / width("alpha") - 8.0).abs() < 1e-3);
    let table = ranking_table(&results);
    assert!(table.contains("3,zeta,40,38,41"));
}

fn scores(doc: &str, role: &str, v: &[f64]) -> DimensionScores<f64> {
    DimensionScores {
        model_id: "m".into(),
        chunk_id: format!("{doc}#{role}"),
        v: v.to_vec(),
    }
}

fn boot() -> BootstrapConfig {
    BootstrapConfig {
        iters: 2000,
        seed: RngSeed(7),
        m_tests: 1,
    }
}

#[test]
fn scatter_identity_and_shift() {
    let n = 60;
    let xs: Vec<f64> = (0..n).map(|k| ((k * 37) % 23) as f64 - 11.0).collect();
    let reference: Vec<_> = (0..n).map(|k| scores(&format!("d{k:02}"), "orig2", &[xs[k], -xs[k]])).collect();
    let shifted: Vec<_> = (0..n)
        .map(|k| scores(&format!("d{k:02}"), "m", &[xs[k] + 2.0 + 0.3 * ((k % 5) as f64 - 2.0), -xs[k]]))
        .collect();
    let genres: BTreeMap<String, String> = (0..n)
        .map(|k| (format!("d{k:02}"), if k % 2 == 0 { "press" } else { "fiction" }.to_string()))
        .collect();
    let spec = ReportSpec::new(ReportKind::ScatterGrid, "s.svg");
    let labels = dims(2);

    let same = render_scatter(&reference, &reference, &genres, &labels, ("human", "human"), &spec, &boot()).unwrap();
    let xs_attr = attrs(&same, "data-x");
    assert_eq!(xs_attr.len(), 2 * n);
    assert_eq!(xs_attr, attrs(&same, "data-y"));

    let svg = render_scatter(&reference, &shifted, &genres, &labels, ("human", "model"), &spec, &boot()).unwrap();
    let points = pair_scores(&reference, &shifted, &genres).unwrap();
    let summary = shift_summary(&points, &labels, &boot());
    assert!((summary[0].mean_shift - 2.0).abs() < 1e-9);
    assert!(summary[0].ci_low > 0.0 && summary[0].ci_high > summary[0].ci_low);
    assert_eq!(summary[1].mean_shift, 0.0);
    assert_eq!(attrs(&svg, "data-shift"), ["2", "0"]);
    assert_eq!(attrs(&svg, "data-genre"), ["fiction", "press"]);

    // Colour assignment does not depend on input order.
    let mut rev = shifted.clone();
    rev.reverse();
    let svg_rev = render_scatter(&reference, &rev, &genres, &labels, ("human", "model"), &spec, &boot()).unwrap();
    assert_eq!(svg, svg_rev);

    let (points_csv, summary_csv) = scatter_tables(&points, &summary, &labels);
    for (x, y) in attrs(&svg, "data-x").into_iter().zip(attrs(&svg, "data-y")) {
        assert!(points_csv.contains(&format!(",{x},{y}\n")));
    }
    assert!(summary_csv.contains("D1,60,2,"));
}

#[test]
fn scatter_unpaired_chunk() {
    let spec = ReportSpec::new(ReportKind::ScatterGrid, "s.svg");
    let err = render_scatter(
        &[scores("a", "orig2", &[1.0]), scores("b", "orig2", &[1.0])],
        &[scores("a", "m", &[1.0])],
        &BTreeMap::new(),
        &dims(1),
        ("x", "y"),
        &spec,
        &boot(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::UnpairedChunk(ref d) if d == "b"), "{err}");
}

#[test]
fn manifest_records_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = ReportManifest::new(50.0, Palette::ColorBlind);
    m.emit(dir.path(), "b.csv", "table", "x\n").unwrap();
    m.emit(dir.path(), "a.svg", "heatmap", "<svg/>").unwrap();
    m.write(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("report-manifest.json")).unwrap();
    let back: ReportManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(back.artifacts.iter().map(|a| a.path.as_str()).collect::<Vec<_>>(), ["a.svg", "b.csv"]);
    assert_eq!(back.ramp, Palette::ColorBlind.ramp());
}
