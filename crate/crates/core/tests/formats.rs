use nblab::configuration::{sample_uniform_matching, HalfEdgeSpace, Matching};
use nblab::error::Error;
use nblab::lift::{build_lift, sample_random_lift, LiftPermutations};
use nblab::multigraph::BaseMultigraph;
use nblab::nonbacktracking::nb_from_multigraph;
use nblab::rng::rng_from_seed;

#[test]
fn graph_text_round_trip() {
    for g in [BaseMultigraph::petersen(), BaseMultigraph::bouquet(3), BaseMultigraph::complete_bipartite(2, 3)] {
        let text = g.to_text();
        let back = BaseMultigraph::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.adjacency().to_dense_f64(), g.adjacency().to_dense_f64());
    }
}

#[test]
fn graph_parse_errors_report_line() {
    assert!(BaseMultigraph::from_text("3 1\n0 7\n").is_err());
    assert!(matches!(BaseMultigraph::from_text("2 1\nfoo bar\n"), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn matching_text_round_trip() {
    let space = HalfEdgeSpace::new(10, 3);
    let sigma = sample_uniform_matching(space, &mut rng_from_seed(42)).unwrap();
    let text = sigma.to_text(space);
    assert_eq!(text.lines().count(), 15);
    assert_eq!(Matching::from_text(space, &text).unwrap(), sigma);
}

#[test]
fn matching_rejects_out_of_range_stub() {
    let space = HalfEdgeSpace::new(2, 1);
    assert!(Matching::from_text(space, "0 0 1 3\n").is_err());
}

#[test]
fn lift_text_round_trip() {
    let base = BaseMultigraph::complete(4);
    let sigma = sample_random_lift(&base, 7, &mut rng_from_seed(3)).unwrap();
    let back = LiftPermutations::from_text(7, &sigma.to_text()).unwrap();
    assert_eq!(back.to_text(), sigma.to_text());
    let lifted = build_lift(&base, &back).unwrap().graph;
    assert_eq!(lifted.n_actual(), 28);
    assert_eq!(lifted.adjacency().regular_degree(), Some(3));
}

#[test]
fn lift_rejects_non_permutation() {
    assert!(LiftPermutations::from_text(3, "0: 0 0 1\n").is_err());
    assert!(LiftPermutations::from_text(3, "1: 0 1 2\n").is_err());
}

#[test]
fn coordinate_export_matches_dense() {
    let b = nb_from_multigraph(&BaseMultigraph::petersen());
    let dense = b.to_dense();
    let text = b.to_coordinate_text();
    let mut count = 0;
    for line in text.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let (r, c, v): (usize, usize, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap());
        assert_eq!(dense[(r, c)], v);
        count += 1;
    }
    assert_eq!(count, dense.iter().filter(|&&x| x != 0.0).count());
    assert_eq!(count, 30 * 2);
}
