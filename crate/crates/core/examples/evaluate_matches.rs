//! Score a hand-made ranking and a TSV round trip.

use copydet::eval::{
    evaluate, micro_ap, read_matches_tsv, recall_at_precision, write_matches_tsv, GroundTruth,
    Match, RankedMatches,
};

fn m(q: &str, r: &str, score: f64) -> Match {
    Match {
        query_id: q.into(),
        reference_id: r.into(),
        score,
    }
}

fn main() -> copydet::Result<()> {
    let gt = GroundTruth::new([
        ("q1".to_owned(), "r1".to_owned()),
        ("q3".to_owned(), "r3".to_owned()),
        ("q4".to_owned(), "r4".to_owned()),
    ]);
    let ranked = RankedMatches::new(vec![
        m("q1", "r1", 0.93),
        m("q2", "r7", 0.81),
        m("q3", "r3", 0.80),
        m("q5", "r2", 0.40),
    ])?;
    println!("µAP {:.4}", micro_ap(&ranked, &gt)?);
    for p in [0.5, 0.9] {
        println!(
            "recall at precision {p}: {:.4}",
            recall_at_precision(&ranked, &gt, p)?
        );
    }

    let path = std::env::temp_dir().join("copydet-matches.tsv");
    write_matches_tsv(ranked.as_slice(), &path)?;
    let reread = RankedMatches::new(read_matches_tsv(&path)?)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&evaluate(&reread, &gt, 0.9)?)?
    );
    Ok(())
}
