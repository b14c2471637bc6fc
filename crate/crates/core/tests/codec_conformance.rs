use bulwark_core::runtime::codec::{decode_wire, encode_wire, CodecError};
use bulwark_core::runtime::{Carrier, Codec, Value};
use serde::Deserialize;

#[derive(Deserialize)]
struct Corpus {
    fixtures: Vec<Fixture>,
    malformed: Vec<Malformed>,
}

#[derive(Deserialize)]
struct Fixture {
    id: String,
    codec: Codec,
    args: Vec<String>,
    wire: String,
}

#[derive(Deserialize)]
struct Malformed {
    id: String,
    codec: Codec,
    wire: String,
    error: String,
}

fn corpus() -> Corpus {
    serde_json::from_str(include_str!("fixtures/codec-conformance.json")).unwrap()
}

#[test]
fn corpus_covers_every_carrier() {
    let c = corpus();
    assert!(c.fixtures.len() >= 50);
    for carrier in Carrier::ALL {
        assert!(c.fixtures.iter().filter(|f| f.codec.carrier == carrier).count() >= 5, "{carrier:?}");
    }
}

#[test]
fn encode_matches_wire() {
    for f in corpus().fixtures {
        let args: Vec<Value> = f.args.iter().map(Value::str).collect();
        assert_eq!(encode_wire(&f.codec, &args).unwrap(), f.wire, "{}", f.id);
    }
}

#[test]
fn decode_recovers_arguments() {
    for f in corpus().fixtures {
        let got: Vec<String> = decode_wire(&f.codec, &f.wire).unwrap().iter().map(Value::to_string).collect();
        assert_eq!(got, f.args, "{}", f.id);
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    for m in corpus().malformed {
        let err = decode_wire(&m.codec, &m.wire).expect_err(&m.id);
        let kind = match err {
            CodecError::Malformed(_) => "malformed",
            CodecError::Mismatch(_) => "mismatch",
        };
        assert_eq!(kind, m.error, "{}: {err}", m.id);
    }
}
