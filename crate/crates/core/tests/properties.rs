use proptest::prelude::*;

use beets::ble_sim::{analytic_p1, mean_received_power, RadioConfig, TimingConfig};
use beets::codec::{
    ascii85_decode, ascii85_encode, ble_pack, ble_unpack, decode_message, encode_message, Opcode,
    Tuple, Value, WireMessage, BLE_MAX_MESSAGE, UDP_MAX_MESSAGE,
};
use beets::fpe::FpeTables;
use beets::space::{Lifetime, Origin, Pattern, TupleSpace};

fn value() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Formal),
        "[\\x01-\\x7f]{0,12}".prop_map(Value::Str),
        any::<i16>().prop_map(Value::Int16),
        any::<f32>()
            .prop_filter("nan", |x| !x.is_nan())
            .prop_map(Value::Float32),
    ]
}

fn tuple() -> impl Strategy<Value = Tuple> {
    prop::collection::vec(value(), 1..=4).prop_map(|v| Tuple::new(v).unwrap())
}

fn message() -> impl Strategy<Value = WireMessage> {
    (prop::sample::select(Opcode::ALL.to_vec()), 0u8..4, tuple())
        .prop_map(|(op, seq, t)| WireMessage::new(op, seq, t))
}

/// Byte layout written out by hand from the format table.
fn oracle_encode(m: &WireMessage) -> Vec<u8> {
    let code = match m.op {
        Opcode::IamHere => 0,
        Opcode::WhereIs => 1,
        Opcode::Out => 4,
        Opcode::Inp => 5,
        Opcode::Rd => 6,
        Opcode::Test => 7,
        Opcode::Tuple => 8,
    };
    let vals = m.tuple.values();
    let mut out = vec![code * 16 + (vals.len() as u8 - 1) * 4 + m.seq, 0];
    for (i, v) in vals.iter().enumerate() {
        let tag = match v {
            Value::Formal => 0,
            Value::Str(_) => 1,
            Value::Int16(_) => 2,
            Value::Float32(_) => 3,
        };
        out[1] += tag << (6 - 2 * i);
        match v {
            Value::Formal => {}
            Value::Str(s) if s.is_empty() => out.push(128),
            Value::Str(s) => {
                let b = s.as_bytes();
                out.extend_from_slice(&b[..b.len() - 1]);
                out.push(b[b.len() - 1] + 128);
            }
            Value::Int16(n) => out.extend_from_slice(&[(*n as u16 >> 8) as u8, *n as u8]),
            Value::Float32(x) => {
                let bits = x.to_bits();
                out.extend_from_slice(&[(bits >> 24) as u8, (bits >> 16) as u8, (bits >> 8) as u8, bits as u8]);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn codec_matches_oracle_and_roundtrips(m in message()) {
        let bytes = encode_message(&m, UDP_MAX_MESSAGE).unwrap();
        prop_assert_eq!(&bytes, &oracle_encode(&m));
        prop_assert_eq!(bytes.len(), m.encoded_len());
        prop_assert_eq!(decode_message(&bytes).unwrap(), m.clone());
        if bytes.len() <= BLE_MAX_MESSAGE {
            let packed = ble_pack(&bytes).unwrap();
            let unpacked = ble_unpack(&packed).unwrap();
            prop_assert_eq!(decode_message(&unpacked).unwrap(), m);
        } else {
            prop_assert!(ble_pack(&bytes).is_err());
        }
    }

    #[test]
    fn size_limit_is_enforced(m in message(), limit in 2usize..40) {
        let r = encode_message(&m, limit);
        prop_assert_eq!(r.is_ok(), m.encoded_len() <= limit);
    }

    #[test]
    fn ascii85_roundtrip(b in prop::collection::vec(any::<u8>(), 0..64)) {
        let s = ascii85_encode(&b);
        prop_assert!(s.bytes().all(|c| (33..=117).contains(&c) || c == b'z'));
        prop_assert_eq!(ascii85_decode(&s).unwrap(), b);
    }

    #[test]
    fn fpe_roundtrip_preserves_length(key in "[ -~]{1,24}", b in prop::collection::vec(any::<u8>(), 0..64)) {
        let t = FpeTables::from_secret(&key).unwrap();
        let c = t.encrypt(&b);
        prop_assert_eq!(c.len(), b.len());
        prop_assert_eq!(t.decrypt(&c), b);
    }

    #[test]
    fn fpe_table_is_permutation(key in "[ -~]{1,24}") {
        let t = FpeTables::from_secret(&key).unwrap();
        let mut seen = [false; 256];
        for &c in t.enc() {
            seen[c as usize] = true;
        }
        prop_assert!(seen.iter().all(|s| *s));
        for x in 0..=255u8 {
            prop_assert_eq!(t.dec()[t.enc()[x as usize] as usize], x);
        }
    }

    #[test]
    fn p1_monotone_in_window(a in 1u32..20, b in 1u32..20) {
        let at = |n: u32| analytic_p1(&TimingConfig { t_ad: 100.0 * n as f64, t_sn: 100.0, ..TimingConfig::default() }, true);
        if a < b {
            prop_assert!(at(a) < at(b));
        }
        prop_assert!((0.0..1.0).contains(&at(a)));
    }

    #[test]
    fn received_power_decreases_with_distance(r1 in 0.1f64..50.0, r2 in 0.1f64..50.0) {
        let rc = RadioConfig::default();
        if r1 < r2 {
            prop_assert!(mean_received_power(&rc, r1).unwrap() > mean_received_power(&rc, r2).unwrap());
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Out(Tuple, Option<u64>),
    Rd(Tuple),
    Inp(Tuple),
    Rm(Tuple),
    Test(Tuple),
    Advance(u64),
}

// Small alphabets so patterns actually hit stored tuples.
fn small_value(formals: bool) -> BoxedStrategy<Value> {
    let base = prop_oneof![
        prop::sample::select(vec!["a", "b"]).prop_map(|s| Value::Str(s.into())),
        (0i16..3).prop_map(Value::Int16),
        prop::sample::select(vec![0.0f32, 1.0, 2.5]).prop_map(Value::Float32),
    ];
    if formals {
        prop_oneof![1 => Just(Value::Formal), 3 => base].boxed()
    } else {
        base.boxed()
    }
}

fn small_tuple(formals: bool) -> impl Strategy<Value = Tuple> {
    prop::collection::vec(small_value(formals), 1..=2).prop_map(|v| Tuple::new(v).unwrap())
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (small_tuple(false), prop::option::of(0u64..60)).prop_map(|(t, l)| Op::Out(t, l)),
        2 => small_tuple(true).prop_map(Op::Rd),
        2 => small_tuple(true).prop_map(Op::Inp),
        1 => small_tuple(true).prop_map(Op::Rm),
        1 => small_tuple(true).prop_map(Op::Test),
        1 => (0u64..40).prop_map(Op::Advance),
    ]
}

fn num(v: &Value) -> Option<f64> {
    match v {
        Value::Int16(n) => Some(*n as f64),
        Value::Float32(x) => Some(*x as f64),
        _ => None,
    }
}

fn oracle_match(p: &Tuple, t: &Tuple) -> bool {
    p.arity() == t.arity()
        && p.values().iter().zip(t.values()).all(|(a, b)| match (a, b) {
            (Value::Formal, _) => true,
            (Value::Str(x), Value::Str(y)) => x == y,
            _ => matches!((num(a), num(b)), (Some(x), Some(y)) if x == y),
        })
}

/// Insertion-ordered list; expired entries stay until an operation looks past them.
struct Oracle {
    items: Vec<(Tuple, Option<u64>)>,
}

impl Oracle {
    fn find(&self, p: &Tuple, now: u64) -> Option<usize> {
        self.items
            .iter()
            .position(|(t, exp)| exp.is_none_or(|e| now <= e) && oracle_match(p, t))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn space_agrees_with_brute_force(ops in prop::collection::vec(op(), 1..60)) {
        let space = TupleSpace::new("s");
        let mut oracle = Oracle { items: Vec::new() };
        let mut now = 0u64;
        for op in ops {
            match op {
                Op::Out(t, l) => {
                    let lifetime = l.map_or(Lifetime::Never, Lifetime::Millis);
                    space.out_local(t.clone(), lifetime, now, Origin::Local);
                    oracle.items.push((t, l.map(|ms| now + ms)));
                }
                Op::Rd(p) => {
                    let want = oracle.find(&p, now).map(|i| oracle.items[i].0.clone());
                    prop_assert_eq!(space.rd_local(&Pattern::new(p), now), want);
                }
                Op::Inp(p) => {
                    let want = oracle.find(&p, now).map(|i| oracle.items.remove(i).0);
                    prop_assert_eq!(space.inp_local(&Pattern::new(p), now), want);
                }
                Op::Rm(p) => {
                    let before = oracle.items.len();
                    oracle.items.retain(|(t, exp)| !(exp.is_none_or(|e| now <= e) && oracle_match(&p, t)));
                    prop_assert_eq!(space.rm_local(&Pattern::new(p), now), before - oracle.items.len());
                }
                Op::Test(p) => {
                    prop_assert_eq!(space.test_local(&Pattern::new(p.clone()), now), oracle.find(&p, now).is_some());
                }
                Op::Advance(dt) => now += dt,
            }
        }
        let live = oracle.items.iter().filter(|(_, e)| e.is_none_or(|e| now <= e)).count();
        space.expire_sweep(now);
        prop_assert_eq!(space.len(), live);
    }

    #[test]
    fn rd_never_changes_the_space(ts in prop::collection::vec(small_tuple(false), 0..10), p in small_tuple(true)) {
        let space = TupleSpace::new("s");
        for t in &ts {
            space.out_local(t.clone(), Lifetime::Never, 0, Origin::Local);
        }
        let p_arity = p.arity();
        let before = space.snapshot(p_arity);
        let first = space.rd_local(&Pattern::new(p.clone()), 0);
        prop_assert_eq!(space.rd_local(&Pattern::new(p), 0), first);
        prop_assert_eq!(space.snapshot(p_arity), before);
        prop_assert_eq!(space.len(), ts.len());
    }
}
