//! Prints multipath statistics along the default route for each base station.

use wiom_core::sim::{generate_route, synthesize_paths, RouteConfig, SceneConfig};

fn main() {
    let route = RouteConfig::default();
    let scene = SceneConfig::urban_canyon(&route);
    let points = generate_route(&route).expect("valid route");
    for bs in 0..scene.base_stations.len() {
        let counts: Vec<usize> = points
            .iter()
            .step_by(50)
            .map(|p| synthesize_paths(&p.pose, &scene, bs).expect("station").len())
            .collect();
        let empty = counts.iter().filter(|&&c| c == 0).count();
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        println!(
            "station {}: {} poses, mean {mean:.1} paths, {empty} with none, max {}",
            scene.base_stations[bs].id,
            counts.len(),
            counts.iter().max().unwrap()
        );
    }
}
