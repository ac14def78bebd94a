#![no_main]

use std::sync::OnceLock;

use curate_core::dataset::{parse_csv, LabeledDataset};
use curate_core::session::SessionFile;
use libfuzzer_sys::fuzz_target;

fn dataset() -> &'static LabeledDataset {
    static DS: OnceLock<LabeledDataset> = OnceLock::new();
    DS.get_or_init(|| {
        let mut csv = String::from("x,y,class\n");
        for i in 0..40 {
            let t = i as f64;
            let class = ["a", "b", "c"][i % 3];
            csv += &format!("{},{},{class}\n", (t * 0.7).sin() + (i % 3) as f64, (t * 1.3).cos());
        }
        parse_csv(csv.as_bytes(), "class").unwrap()
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(mut file) = SessionFile::parse(text) else {
        return;
    };
    // keep each run cheap whatever the input asks for
    let c = &mut file.config;
    c.model.search_iterations = c.model.search_iterations.min(2);
    c.model.cv_folds = c.model.cv_folds.min(3);
    let r = &mut c.model.ranges;
    r.n_trees = (r.n_trees.0.min(5), r.n_trees.1.min(5));
    r.max_depth = (r.max_depth.0.min(3), r.max_depth.1.min(3));
    c.projection.n_epochs = Some(5);
    c.projection.min_dist_sweep.truncate(1);
    c.projection.pair_cap = c.projection.pair_cap.min(500);
    file.dataset.hash = None;
    file.steps.truncate(4);
    if let Ok(session) = file.replay(dataset().clone(), None) {
        let json = session.export_json();
        let again = curate_core::Session::import_json(&json, dataset().clone()).expect("an export replays");
        assert_eq!(again.export_json(), json);
    }
});
