use layerpot::grid::{classify_nodes, BoxGrid};
use layerpot::harness::{densities, reference_field, HALF_WIDTH};
use layerpot::pou::PouParams;
use layerpot::quad::NodeSet;
use layerpot::summation::{Backend, Evaluator};
use layerpot::surface::{closest_point, LevelSurface, Torus};

fn target_errors(n: usize) {
    let s = Torus { c: 0.7, a: 0.3 };
    let grid = BoxGrid::new(HALF_WIDTH, n);
    let h = grid.h;
    let delta = 2.0 * h;
    let class = classify_nodes(&grid, &s);
    let nodes = NodeSet::generate(&s, h, PouParams::default_theta()).unwrap();
    let (psi, phi) = densities(&nodes);
    let ev = Evaluator::new(&s, &nodes, &psi, &phi, delta);

    // Bins by |b|/h over the target set (pre-extension evaluator error).
    let mut bins = vec![Vec::new(); 4];
    for &node in &class.targets {
        let x = grid.node_pos(node);
        let got = ev.eval_near(x, Backend::Direct).unwrap();
        let u = got.double - got.single;
        let inside = s.phi(x) < 0.0;
        let exact = if inside { reference_field(x) } else { 0.0 };
        let err = (u - exact).abs();
        let frame = closest_point(&s, x, delta).unwrap();
        let bin = ((frame.b.abs() / h).floor() as usize).min(3);
        bins[bin].push(err);
    }
    println!("N={n} target errors by |b|/h bin:");
    for (i, b) in bins.iter().enumerate() {
        if b.is_empty() {
            continue;
        }
        let rms = (b.iter().map(|e| e * e).sum::<f64>() / b.len() as f64).sqrt();
        let max = b.iter().cloned().fold(0.0f64, f64::max);
        println!(
            "  [{},{}) count {:>6} rms {:.3e} max {:.3e}",
            i,
            i + 1,
            b.len(),
            rms,
            max
        );
    }
}

#[test]
#[ignore]
fn torus_targets_n64() {
    target_errors(64);
}

#[test]
#[ignore]
fn torus_targets_n128() {
    target_errors(128);
}
