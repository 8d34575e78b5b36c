//! Evaluates every cost in the bundled scenario and compares analytic
//! gradients against central differences at a few random points.

use std::collections::HashMap;

use mcg_nash::game::Stacked;
use mcg_nash::{PlayerId, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let game = Scenario::paper_example().game;
    println!("F(0) = {:?}", game.pseudo_gradient(&vec![0.0; game.stacked_dim()]).unwrap());

    let mut others = HashMap::new();
    others.insert(PlayerId::new(1, 1), vec![2.0]);
    let f = game.eval_cost(PlayerId::new(0, 3), &[1.0], &others).unwrap();
    println!("f_4^1(1; x_2^2 = 2) = {f:.12}");

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = 1e-6;
    println!("{:>8} {:>16} {:>16} {:>10}", "player", "analytic", "central diff", "rel err");
    for _ in 0..3 {
        let x: Vec<f64> = (0..game.stacked_dim()).map(|_| rng.random_range(-10.0..10.0)).collect();
        let view = Stacked { data: &x, q: 1 };
        for id in game.players() {
            let g = game.global_index(id);
            let analytic = game.grad_own(id, &x[g..g + 1], &view).unwrap()[0];
            let plus = game.eval_cost(id, &[x[g] + h], &view).unwrap();
            let minus = game.eval_cost(id, &[x[g] - h], &view).unwrap();
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (analytic - numeric).abs() / (1.0 + analytic.abs());
            println!("{:>8} {analytic:>16.8} {numeric:>16.8} {rel:>10.2e}", format!("{}.{}", id.cluster + 1, id.player + 1));
        }
    }
}
