use dtgsh_web::{path_diversity, pick_goals, push_rollout, FRAME};

fn grid_with_clump() -> Vec<f64> {
    // 16 points packed into a tiny clump plus 4 far corners
    let mut pts = Vec::new();
    for i in 0..16 {
        pts.push(0.5 + 0.001 * (i % 4) as f64);
        pts.push(0.5 + 0.001 * (i / 4) as f64);
    }
    pts.extend([0.05, 0.05, 0.95, 0.05, 0.05, 0.95, 0.95, 0.95]);
    pts
}

#[test]
fn picks_are_distinct_and_sorted() {
    let pts = grid_with_clump();
    for diverse in [true, false] {
        let p = pick_goals(&pts, 5, 3, diverse, 0.2).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert!(*p.last().unwrap() < 20);
    }
}

#[test]
fn diverse_picks_favour_spread_points() {
    let pts = grid_with_clump();
    let corners = |p: &[usize]| p.iter().filter(|&&i| i >= 16).count();
    let (mut dpp, mut uniform) = (0, 0);
    for seed in 0..200 {
        dpp += corners(&pick_goals(&pts, 4, seed, true, 0.2).unwrap());
        uniform += corners(&pick_goals(&pts, 4, seed, false, 0.2).unwrap());
    }
    assert!(dpp > 2 * uniform, "dpp {dpp} uniform {uniform}");
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(pick_goals(&[0.1, 0.2, 0.3], 1, 0, true, 0.2).is_err());
    assert!(pick_goals(&[0.1, 0.2], 2, 0, false, 0.2).is_err());
    assert!(path_diversity(&[0.1, 0.2], 2).is_err());
}

#[test]
fn right_angle_path_scores_one() {
    let d = path_diversity(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
    assert!((d - 1.0).abs() < 1e-12);
}

#[test]
fn rollouts_have_full_length_and_scripted_pusher_usually_wins() {
    let mut wins = 0;
    for seed in 0..50 {
        let frames = push_rollout(seed, true);
        assert_eq!(frames.len(), 51 * FRAME);
        let last = &frames[frames.len() - FRAME..];
        let miss = ((last[2] - last[4]).powi(2) + (last[3] - last[5]).powi(2)).sqrt();
        wins += usize::from(miss <= 0.05);
    }
    assert!(wins >= 45, "{wins}");
    assert_eq!(push_rollout(7, false), push_rollout(7, false));
}
