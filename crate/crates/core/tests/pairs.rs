use dosebounds::gamma::{mean_gamma, schedule_from_gamma_bar, solve_gamma, GammaSchedule};
use dosebounds::pairs::{export_csv, ingest_csv, read_csv, CsvSchema, DoseLink, MatchedSample};
use dosebounds::Error;
use proptest::prelude::*;

const FILE: &str = "pair_id,unit_id,z,y,x_age\n\
p1,a,2,5,40\n\
p1,b,1,3,41\n\
p2,a,1,4,30\n\
p2,b,3,7,33\n";

#[test]
fn csv_round_trip_through_a_file() {
    let s = read_csv(FILE.as_bytes(), &CsvSchema::default()).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s.covariate_names(), ["x_age"]);
    let p2 = &s.pairs()[1];
    assert_eq!(
        (p2.z_hi, p2.z_lo, p2.y_of_hi, p2.y_of_lo),
        (3.0, 1.0, 7.0, 4.0)
    );
    assert_eq!(p2.x_of_hi, vec![33.0]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.csv");
    export_csv(&s, &path).unwrap();
    let back = ingest_csv(&path, &CsvSchema::default()).unwrap();
    assert_eq!(back, s);
}

#[test]
fn malformed_files() {
    let schema = CsvSchema::default();
    let missing = "pair_id,unit_id,z\np1,a,1\n";
    assert!(
        matches!(read_csv(missing.as_bytes(), &schema), Err(Error::MissingColumn(c)) if c == "y")
    );
    let single = "pair_id,unit_id,z,y\np1,a,1,2\n";
    assert!(matches!(
        read_csv(single.as_bytes(), &schema),
        Err(Error::IncompletePair(_))
    ));
    let tied = "pair_id,unit_id,z,y\np1,a,1,2\np1,b,1,3\n";
    assert!(matches!(
        read_csv(tied.as_bytes(), &schema),
        Err(Error::TiedDoses(_))
    ));
    let text = "pair_id,unit_id,z,y\np1,a,1,x\np1,b,2,3\n";
    assert!(matches!(
        read_csv(text.as_bytes(), &schema),
        Err(Error::NonNumeric { row: 2, .. })
    ));
    let dup = "pair_id,unit_id,z,y\np1,a,1,2\np1,a,2,3\n";
    assert!(matches!(
        read_csv(dup.as_bytes(), &schema),
        Err(Error::DuplicateUnit { .. })
    ));
}

#[test]
fn links_and_gaps() {
    let s = MatchedSample::from_rows(&[(1.0, 4.0, 0.0, 0.0), (2.0, 8.0, 0.0, 0.0)]).unwrap();
    assert_eq!(DoseLink::Identity.gaps(&s).unwrap(), vec![3.0, 6.0]);
    let g = DoseLink::Log.gaps(&s).unwrap();
    assert!((g[0] - 4f64.ln()).abs() < 1e-15 && (g[1] - 4f64.ln()).abs() < 1e-15);
    let table = DoseLink::table(vec![(1.0, 0.0), (2.0, 1.0), (4.0, 1.5), (8.0, 10.0)]).unwrap();
    assert_eq!(table.gaps(&s).unwrap(), vec![1.5, 9.0]);
    let incomplete = DoseLink::table(vec![(1.0, 0.0), (4.0, 1.0)]).unwrap();
    assert!(matches!(incomplete.gaps(&s), Err(Error::InvalidLink(_))));
    assert!(DoseLink::table(vec![(1.0, 0.0), (2.0, 3.0), (4.0, 1.0), (8.0, 4.0)]).is_err());
    let zero = MatchedSample::from_rows(&[(0.0, 1.0, 0.0, 0.0)]).unwrap();
    assert!(DoseLink::Log.gaps(&zero).is_err());
}

#[test]
fn schedule_json_lists_every_pair() {
    let s = read_csv(FILE.as_bytes(), &CsvSchema::default()).unwrap();
    let sched = schedule_from_gamma_bar(2.0, &s, &DoseLink::Identity, 1e-12).unwrap();
    assert!((sched.gamma_bar() - 2.0).abs() < 1e-9);
    let json = serde_json::to_value(sched.to_json()).unwrap();
    assert_eq!(json["per_pair"].as_array().unwrap().len(), 2);
    assert_eq!(json["per_pair"][1]["pair_id"], "p2");
    assert!(json["per_pair"][0]["Gamma_i"].as_f64().unwrap() >= 1.0);
}

proptest! {
    #[test]
    fn gamma_round_trip(gaps in prop::collection::vec(0.0..4.0f64, 1..40), gamma in 0.001..3.0f64) {
        prop_assume!(gaps.iter().any(|g| *g > 1e-3));
        let gb = mean_gamma(&gaps, gamma);
        let back = solve_gamma(&gaps, gb, 1e-14).unwrap();
        prop_assert!((back - gamma).abs() <= 1e-8 * gamma);
    }

    #[test]
    fn per_pair_bounds_follow_gaps(gaps in prop::collection::vec(0.0..3.0f64, 2..20), gamma in 0.0..2.0f64) {
        let ids = (0..gaps.len()).map(|i| i.to_string()).collect();
        let s = GammaSchedule::from_gaps(gamma, gaps.clone(), ids).unwrap();
        for i in 0..gaps.len() {
            for j in 0..gaps.len() {
                if gaps[i] < gaps[j] {
                    prop_assert!(s.gamma_i()[i] <= s.gamma_i()[j]);
                }
            }
            prop_assert!(s.p_plus()[i] >= 0.5 && s.p_plus()[i] < 1.0);
        }
    }
}
