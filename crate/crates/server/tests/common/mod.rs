#![allow(dead_code)]

use curate_core::session::SessionConfig;

/// Two separated 2-D blobs `a` and `c` of `per_class` rows each, plus
/// `mixed` rows of class `b` scattered between the points of blob `a`.
pub fn blobs_csv(per_class: usize, mixed: usize) -> String {
    let mut s = String::from("x,y,class\n");
    for i in 0..per_class {
        let t = i as f64;
        s += &format!("{},{},a\n", (t * 0.37).sin(), (t * 0.91).cos());
        s += &format!("{},{},c\n", 10.0 + (t * 0.53).sin(), 10.0 + (t * 0.71).cos());
    }
    for i in 0..mixed {
        let t = (i * 4) as f64 + 0.5;
        s += &format!("{},{},b\n", (t * 0.37).sin(), (t * 0.91).cos());
    }
    s
}

pub fn fast_config() -> SessionConfig {
    let mut c = SessionConfig::default();
    c.model.search_iterations = 2;
    c.model.ranges.n_trees = (5, 10);
    c.projection.min_dist_sweep = vec![0.1];
    c.projection.n_epochs = Some(20);
    c
}
