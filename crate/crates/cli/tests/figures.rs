mod common;

use common::{scenario_dir, small_run};
use idm_fpr_cli::figures::MAX_SPAGHETTI;
use idm_fpr_cli::run_pipeline;
use roxmltree::{Document, Node};

struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        const TOL: f64 = 0.011;
        x >= self.x0 - TOL && x <= self.x1 + TOL && y >= self.y0 - TOL && y <= self.y1 + TOL
    }
}

fn attr(n: Node<'_, '_>, name: &str) -> f64 {
    n.attribute(name).unwrap_or_else(|| panic!("missing {name}")).parse().unwrap()
}

fn points(n: Node<'_, '_>) -> Vec<(f64, f64)> {
    n.attribute("points")
        .unwrap()
        .split_whitespace()
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

/// Every data mark in every panel lies inside that panel's plot area.
fn assert_unclipped(doc: &Document<'_>, name: &str) -> usize {
    let mut marks = 0;
    for panel in doc.descendants().filter(|n| n.attribute("class") == Some("panel")) {
        let area = panel.children().find(|n| n.attribute("class") == Some("plot-area")).expect("plot area");
        let r = Rect {
            x0: attr(area, "x"),
            y0: attr(area, "y"),
            x1: attr(area, "x") + attr(area, "width"),
            y1: attr(area, "y") + attr(area, "height"),
        };
        for n in panel.children().filter(|n| n.is_element()) {
            let class = n.attribute("class").unwrap_or("");
            if class.is_empty() || class == "plot-area" {
                continue;
            }
            marks += 1;
            let pts = match n.tag_name().name() {
                "polyline" | "polygon" => points(n),
                "circle" => vec![(attr(n, "cx"), attr(n, "cy"))],
                "rect" => {
                    let (x, y) = (attr(n, "x"), attr(n, "y"));
                    vec![(x, y), (x + attr(n, "width"), y + attr(n, "height"))]
                }
                other => panic!("{name}: unexpected mark <{other}>"),
            };
            for (x, y) in pts {
                assert!(r.contains(x, y), "{name}: {class} point ({x}, {y}) outside plot area");
            }
        }
    }
    marks
}

#[test]
fn figures_are_well_formed_and_unclipped() {
    let data = scenario_dir();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = small_run(data.path(), out.path(), 1200);
    cfg.figures = true;
    let report = run_pipeline(&cfg).unwrap();

    for name in ["prevalence", "incidence", "mrr", "mortality", "fpr_fan", "counts"] {
        let text = std::fs::read_to_string(out.path().join(format!("figures/{name}.svg"))).unwrap();
        let doc = Document::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let root = doc.root_element();
        assert_eq!(root.tag_name().name(), "svg");
        assert_eq!(root.tag_name().namespace(), Some("http://www.w3.org/2000/svg"));
        assert!(root.attribute("viewBox").is_some());
        assert_eq!(root.attribute("version"), Some("1.1"));
        let panels = doc.descendants().filter(|n| n.attribute("class") == Some("panel")).count();
        assert_eq!(panels, if name == "counts" { 3 } else { 2 }, "{name}");
        assert!(assert_unclipped(&doc, name) > 0, "{name} has no data");
    }

    let fan = std::fs::read_to_string(out.path().join("figures/fpr_fan.svg")).unwrap();
    let doc = Document::parse(&fan).unwrap();
    let spaghetti = doc.descendants().filter(|n| n.attribute("class") == Some("spaghetti")).count();
    assert!(spaghetti <= 2 * MAX_SPAGHETTI);
    let complete = |sex| {
        idm_fpr_cli::figures::spaghetti_draws(report.matrix.n_draws())
            .into_iter()
            .filter(|&k| (0..report.matrix.ages.len()).all(|j| report.matrix.fpr(k, sex, j).is_some()))
            .count()
    };
    use idm_fpr::datamodel::Sex;
    assert_eq!(spaghetti, complete(Sex::Male) + complete(Sex::Female));
    assert!(spaghetti > MAX_SPAGHETTI, "expected the cap to bind in both panels");
    for class in ["band", "median"] {
        assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some(class)).count(), 2);
    }
}
