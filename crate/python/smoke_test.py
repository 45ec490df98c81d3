"""Smoke test for the beets Python extension."""

import tempfile

import beets


def main():
    msg = beets.encode("OUT", ["SENSOR", 21, 2.5, None], seq=1)
    op, seq, values = beets.decode(msg)
    assert (op, seq) == ("OUT", 1), (op, seq)
    assert values == ["SENSOR", 21, 2.5, None], values

    secret = beets.encode("OUT", ["a", 1], key="hunter2")
    assert len(secret) == len(beets.encode("OUT", ["a", 1]))
    assert beets.decode(secret, key="hunter2")[2] == ["a", 1]
    assert beets.fpe_decrypt("k", beets.fpe_encrypt("k", b"abc")) == b"abc"

    uuids, name = beets.ble_pack(msg)
    assert len(uuids) == 7
    assert beets.ble_unpack(uuids, name) == msg

    space = beets.TupleSpace()
    space.out(["x", 1])
    space.out(["x", 2], now=0, lifetime_ms=10)
    assert space.rd(["x", None]) == ["x", 1]
    assert space.inp(["x", 1]) == ["x", 1]
    assert space.rd(["x", None], now=5) == ["x", 2]
    assert space.rd(["x", None], now=20) is None

    agent = '{"name": "echo", "rules": []}'
    assert beets.check_agent(agent) == "echo"
    try:
        beets.check_agent("{}")
    except ValueError:
        pass
    else:
        raise AssertionError("bad agent accepted")

    with tempfile.TemporaryDirectory() as out:
        a = beets.run_scenario("smart-building", seed=7, out=out)
        b = beets.run_scenario("smart-building", seed=7)
    assert a == b
    assert 0.0 < a["ble_tuple_reception_rate"] <= 1.0, a

    print("smoke test ok: reception rate %.3f" % a["ble_tuple_reception_rate"])


if __name__ == "__main__":
    main()
