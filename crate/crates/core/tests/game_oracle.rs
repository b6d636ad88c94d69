mod oracles;

use lanetrust::game::{brute_force_equilibrium, build_stage_game, solve_pbe, GameParams};
use lanetrust::scenario::{Lane, Role, Scene, ScenarioKind, VehicleState};
use lanetrust::{StageGame, Weights};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scene(rng: &mut impl Rng) -> Scene {
    let v = rng.random_range(5.0..30.0);
    let mut s = Scene {
        hav: VehicleState::new(1, Role::Hav, 0.0, Lane::Current, v),
        hv: VehicleState::new(2, Role::Hv, rng.random_range(-40.0..-6.0), Lane::Target, v + rng.random_range(-5.0..5.0)),
        lv: VehicleState::new(3, Role::Lv, rng.random_range(8.0..60.0), Lane::Current, v + rng.random_range(-5.0..5.0)),
        tlv: VehicleState::new(4, Role::Tlv, rng.random_range(8.0..60.0), Lane::Target, v + rng.random_range(-5.0..5.0)),
    };
    s.hav.a = rng.random_range(-2.0..2.0);
    s.lv.a = rng.random_range(-2.0..2.0);
    s.tlv.a = rng.random_range(-2.0..2.0);
    s
}

fn random_weights(rng: &mut impl Rng) -> Weights {
    Weights::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn payoff_tables_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = GameParams::default();
    for n in 0..200 {
        let scene = random_scene(&mut rng);
        let kind = if n % 2 == 0 { ScenarioKind::Dlc } else { ScenarioKind::Mlc };
        let tau = rng.random_range(0.0..=1.0);
        let w = random_weights(&mut rng);
        let g = build_stage_game(&scene, kind, tau, w, &p).unwrap();
        let (ua, uh) = oracles::payoffs(&scene, kind, tau, w, &p);
        for i in 0..4 {
            for j in 0..3 {
                assert!(close(g.hav_payoff[i][j], ua[i][j]), "scene {n} U_A[{i}][{j}]: {} vs {}", g.hav_payoff[i][j], ua[i][j]);
                assert!(close(g.hv_payoff[i][j], uh[i][j]), "scene {n} U_H[{i}][{j}]: {} vs {}", g.hv_payoff[i][j], uh[i][j]);
            }
        }
    }
}

#[test]
fn mlc_hav_payoff_ignores_efficiency_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = GameParams::default();
    for _ in 0..100 {
        let scene = random_scene(&mut rng);
        let w = random_weights(&mut rng);
        let mut w2 = w;
        w2.w_e = rng.random_range(0.0..5.0);
        let a = build_stage_game(&scene, ScenarioKind::Mlc, 0.6, w, &p).unwrap();
        let b = build_stage_game(&scene, ScenarioKind::Mlc, 0.6, w2, &p).unwrap();
        assert_eq!(a.hav_payoff, b.hav_payoff);
    }
}

fn random_tables(rng: &mut impl Rng, levels: Option<i32>) -> ([[f64; 3]; 4], [[f64; 3]; 4]) {
    let mut draw = || match levels {
        // coarse grid so that ties actually occur
        Some(k) => f64::from(rng.random_range(0..k)),
        None => rng.random_range(-10.0..10.0),
    };
    let mut a = [[0.0; 3]; 4];
    let mut h = [[0.0; 3]; 4];
    for i in 0..4 {
        for j in 0..3 {
            a[i][j] = draw();
            h[i][j] = draw();
        }
    }
    // the HAV payoff does not depend on the follower type
    a[2] = a[0];
    a[3] = a[1];
    (a, h)
}

#[test]
fn backward_induction_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = GameParams::default();
    for n in 0..1000 {
        let tau = rng.random_range(0.0..=1.0);
        let game = match n % 3 {
            0 => {
                let (a, h) = random_tables(&mut rng, None);
                StageGame::from_tables(tau, a, h)
            }
            1 => {
                let (a, h) = random_tables(&mut rng, Some(3));
                StageGame::from_tables(tau, a, h)
            }
            _ => {
                let scene = random_scene(&mut rng);
                build_stage_game(&scene, ScenarioKind::Dlc, tau, random_weights(&mut rng), &p).unwrap()
            }
        };
        let fast = solve_pbe(&game);
        let slow = brute_force_equilibrium(&game);
        assert_eq!(fast.hv_response, slow.hv_response, "game {n}");
        assert_eq!(fast.hav_choice, slow.hav_choice, "game {n}");
        assert_eq!(fast.expected_hav_payoff, slow.expected_hav_payoff, "game {n}");
    }
}

#[test]
fn follower_reply_does_not_depend_on_trust() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = GameParams::default();
    for _ in 0..200 {
        let scene = random_scene(&mut rng);
        let w = random_weights(&mut rng);
        let replies: Vec<_> = [0.1, 0.5, 0.9]
            .iter()
            .map(|&tau| solve_pbe(&build_stage_game(&scene, ScenarioKind::Dlc, tau, w, &p).unwrap()).hv_response)
            .collect();
        assert_eq!(replies[0], replies[1]);
        assert_eq!(replies[1], replies[2]);
    }
}

proptest! {
    #[test]
    fn scaling_own_weights_keeps_equilibrium(
        seed in any::<u64>(),
        k in 0.1f64..10.0,
        tau in 0.0f64..=1.0,
        mlc in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = random_scene(&mut rng);
        let w = random_weights(&mut rng);
        let scaled = Weights::new(w.w_s * k, w.w_e * k, w.w_a).unwrap();
        let kind = if mlc { ScenarioKind::Mlc } else { ScenarioKind::Dlc };
        let p = GameParams::default();
        let a = solve_pbe(&build_stage_game(&scene, kind, tau, w, &p).unwrap());
        let b = solve_pbe(&build_stage_game(&scene, kind, tau, scaled, &p).unwrap());
        prop_assert_eq!(a.hv_response, b.hv_response);
        prop_assert_eq!(a.hav_choice, b.hav_choice);
    }
}
