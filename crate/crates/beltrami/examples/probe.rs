use beltrami::cx;
use beltrami::fields::{BeltramiField, BumpProfile};
use beltrami::limits::{frame_connection, limit_connection, limit_symbol};
use beltrami::uniformize::StraighteningMap;

fn main() {
    let path = std::env::args().nth(1).expect("map.json path");
    let amp: f64 = std::env::args().nth(2).expect("amplitude").parse().unwrap();
    let radius: f64 = std::env::args().nth(3).expect("radius").parse().unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let map: StraighteningMap = serde_json::from_str(&text).unwrap();
    let field = BeltramiField::SmoothBump {
        amplitude: cx(amp, 0.0),
        center: cx(0.0, 0.0),
        radius,
        profile: BumpProfile::MixedXy,
    };
    let conn = limit_connection(&field, &map).unwrap();
    let m = 16usize;
    let s = 2.0 / m as f64;
    let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let z = cx(-1.0 + s * (i as f64 + 0.5), -1.0 + s * (j as f64 + 0.5));
            if z.norm() > 0.9 * radius {
                continue;
            }
            let w = map.evaluate(z).unwrap();
            let ls = limit_symbol(&conn, w);
            if ls.norm() < 0.05 {
                continue;
            }
            let fc = frame_connection(&map, w, 1e-4).unwrap();
            let rel = (ls - fc).norm() / ls.norm();
            rows.push((ls.norm(), z.re, z.im, 100.0 * rel));
        }
    }
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("sorted by |ls| descending:");
    for (n, x, y, rel) in rows.iter().take(20) {
        println!("|ls| = {n:.4}  z = ({x:7.4}, {y:7.4})  rel = {rel:6.2}%");
    }
    println!("... {} candidates total", rows.len());
    rows.sort_by(|a, b| a.3.partial_cmp(&b.3).unwrap());
    println!("sorted by defect ascending:");
    for (n, x, y, rel) in rows.iter().take(12) {
        println!("rel = {rel:6.2}%  z = ({x:7.4}, {y:7.4})  |ls| = {n:.4}");
    }
}
