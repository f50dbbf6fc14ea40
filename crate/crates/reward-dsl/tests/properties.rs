use isac_reward_dsl::{
    evaluate, parse, BinaryOp, Feature, FeatureMap, Node, ParseErrorKind, RewardExpr, UnaryOp,
    MAX_SOURCE_CHARS, REWARD_MAX, REWARD_MIN,
};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Node> {
    prop_oneof![
        (0.0f64..1e6).prop_map(Node::Constant),
        (0u32..1000).prop_map(|v| Node::Constant(v as f64 / 8.0)),
        (0..Feature::ALL.len()).prop_map(|i| Node::Feature(Feature::ALL[i])),
    ]
}

fn node() -> impl Strategy<Value = Node> {
    leaf().prop_recursive(8, 128, 3, |inner| {
        let unary = prop_oneof![
            Just(UnaryOp::Neg),
            Just(UnaryOp::Log10),
            Just(UnaryOp::Ln),
            Just(UnaryOp::Exp),
            Just(UnaryOp::Abs),
            Just(UnaryOp::Tanh),
        ];
        let binary = prop_oneof![
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div),
            Just(BinaryOp::Pow),
            Just(BinaryOp::Min),
            Just(BinaryOp::Max),
        ];
        prop_oneof![
            (unary, inner.clone()).prop_map(|(op, a)| Node::unary(op, a)),
            (binary, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Node::binary(op, a, b)),
            (inner, -50.0f64..50.0, 0.0f64..50.0)
                .prop_map(|(a, lo, w)| Node::Clip { arg: Box::new(a), lo, hi: lo + w }),
        ]
    })
}

fn features() -> impl Strategy<Value = FeatureMap> {
    proptest::array::uniform8(-1e3f64..1e3).prop_map(|v| FeatureMap {
        rate: v[0],
        crb: v[1].abs() + 1e-9,
        log10_crb: v[2],
        min_user_rate: v[3],
        power_used: v[4],
        power_budget: v[5],
        power_ratio: v[6],
        step_frac: v[7],
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn canonical_text_round_trips(root in node()) {
        let expr = RewardExpr::new(root).unwrap();
        let text = expr.to_canonical();
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &expr, "{}", text);
        prop_assert_eq!(back.to_canonical(), text);
    }

    #[test]
    fn evaluation_is_bounded_and_deterministic(root in node(), m in features()) {
        let expr = RewardExpr::new(root).unwrap();
        let a = evaluate(&expr, &m);
        let b = evaluate(&expr, &m);
        match (a, b) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.to_bits(), y.to_bits());
                prop_assert!((REWARD_MIN..=REWARD_MAX).contains(&x));
            }
            (Err(x), Err(y)) => prop_assert_eq!(x, y),
            _ => prop_assert!(false, "non-deterministic outcome"),
        }
    }

    #[test]
    fn parse_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let text = String::from_utf8_lossy(&bytes);
        if let Err(e) = parse(&text) {
            prop_assert!(e.position <= text.chars().count());
        }
    }

    #[test]
    fn parse_never_panics_on_grammar_soup(
        parts in proptest::collection::vec(
            prop_oneof![
                Just("rate"), Just("crb"), Just("("), Just(")"), Just("-"), Just("+"),
                Just("*"), Just("/"), Just("^"), Just(","), Just("clip("), Just("min("),
                Just("log10("), Just("1e"), Just("2.5"), Just(" "), Just("x"),
            ],
            0..200,
        )
    ) {
        let text = parts.concat();
        if let Err(e) = parse(&text) {
            prop_assert!(e.position <= text.chars().count());
        }
    }
}

#[test]
fn oversized_source_is_rejected() {
    let text = " ".repeat(MAX_SOURCE_CHARS) + "rate";
    let e = parse(&text).unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::LimitExceeded);
    let fits = " ".repeat(MAX_SOURCE_CHARS - 4) + "rate";
    assert!(parse(&fits).is_ok());
}

#[test]
fn unknown_features_never_reach_evaluation() {
    for src in ["rate + snr", "sinr", "log10(crb) - target"] {
        assert_eq!(parse(src).unwrap_err().kind, ParseErrorKind::UnknownFeature);
    }
}
