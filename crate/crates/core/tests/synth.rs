use gankyoku::augment::ClassLabel;
use gankyoku::corpus::Piece;
use gankyoku::gan::{Generator, GeneratorConfig};
use gankyoku::rng;
use gankyoku::synth::{
    collapse_runs, lint, piece_stats, sample, LintKind, SampleRequest, SynthError,
};
use gankyoku::vocab::{TokenLabel, END_LABEL};
use proptest::prelude::*;

fn generator() -> Generator {
    Generator::init(GeneratorConfig::desk(), &mut rng::stream("synth-test", 1)).unwrap()
}

fn request(temperature: f64) -> SampleRequest {
    SampleRequest {
        count: 4,
        class: ClassLabel::REAL,
        temperature,
        seed: 11,
    }
}

#[test]
fn zero_temperature_pieces_are_identical() {
    let pieces = sample(&generator(), &request(0.0)).unwrap();
    assert_eq!(pieces.len(), 4);
    assert!(pieces.windows(2).all(|w| w[0].labels() == w[1].labels()));
}

#[test]
fn sampling_is_reproducible_and_valid() {
    let g = generator();
    let a = sample(&g, &request(1.0)).unwrap();
    let b = sample(&g, &request(1.0)).unwrap();
    assert_eq!(a, b);
    assert!(a.windows(2).any(|w| w[0].labels() != w[1].labels()));
    for p in &a {
        assert!(!p.is_empty() && p.len() <= 48);
        assert!(
            p.labels()
                .iter()
                .skip(1)
                .filter(|&&l| l == END_LABEL)
                .count()
                <= 1
        );
    }
    let mut other = request(1.0);
    other.class = ClassLabel::new(3).unwrap();
    assert_ne!(sample(&g, &other).unwrap(), a);
}

#[test]
fn invalid_requests() {
    let g = generator();
    let mut r = request(1.0);
    r.count = 0;
    assert!(matches!(sample(&g, &r), Err(SynthError::InvalidCount)));
    for t in [-0.1, f64::NAN, f64::INFINITY] {
        assert!(matches!(
            sample(&g, &request(t)),
            Err(SynthError::InvalidTemperature(_))
        ));
    }
}

fn arb_piece() -> impl Strategy<Value = Piece> {
    // Few distinct labels so runs and repeated breaths are common.
    let label = prop_oneof![Just(0u8), Just(22), Just(44), Just(5), Just(15), 1u8..44];
    prop::collection::vec(label, 0..40).prop_map(|v| {
        Piece::unchecked(
            "p",
            v.into_iter()
                .map(|l| TokenLabel::new(l as i64).unwrap())
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn lint_is_sorted_in_bounds_and_complete(p in arb_piece(), threshold in 2usize..6) {
        let f = lint(&p, threshold).unwrap();
        prop_assert!(f.windows(2).all(|w| w[0].position <= w[1].position));
        prop_assert!(f.iter().all(|x| x.position < p.len().max(1)));
        let collapsed = lint(&collapse_runs(&p), threshold).unwrap();
        prop_assert!(collapsed.iter().all(|x| x.kind != LintKind::TokenRun));
    }

    #[test]
    fn stats_account_for_every_token(p in arb_piece()) {
        let s = piece_stats(&p);
        prop_assert_eq!(
            s.phrase_lengths.iter().sum::<usize>() + s.breath_count + s.framing_tokens,
            s.length
        );
        prop_assert_eq!(s.length, p.len());
    }
}
