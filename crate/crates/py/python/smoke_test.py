"""Smoke test for the secnet_py extension.

Build it first, e.g. `cargo build -p secnet-py --release` and copy
target/release/libsecnet_py.so next to this file as secnet_py.so, or
install it with maturin.
"""
import json
import pathlib
import sys
from fractions import Fraction

HERE = pathlib.Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

import secnet_py  # noqa: E402

ROOT = HERE.parents[2]


def main():
    a, b = secnet_py.estimate_skew("0", "10", "1", "16")
    assert Fraction(a) == Fraction(3, 2) and Fraction(b) == 1, (a, b)

    p = secnet_py.select_parameters(3, "3/2", "1", 2, "1/4")
    assert p["n_iter"] >= 1 and Fraction(p["t_life"]) > 0

    conform = secnet_py.Scenario.from_toml((ROOT / "scenarios/example1.toml").read_text())
    jam = secnet_py.Scenario.from_toml((ROOT / "scenarios/example1_jam.toml").read_text())
    assert conform.n == 3 and conform.bad == [3]
    rc, rj = conform.run(), jam.run()
    assert Fraction(rc.utility) < Fraction(rj.utility)
    metrics = json.loads(rc.metrics)
    assert metrics["schema"] == 1
    first = json.loads(rc.trace.splitlines()[0])
    assert first["v"] == 1

    value, rows = conform.oracle()
    assert Fraction(value) == Fraction(10, 11)
    assert all(Fraction(v) >= Fraction(value) for _, v in rows)

    inst = secnet_py.Scenario.from_toml(secnet_py.random_instance(3, 3, "slot-rusher"))
    assert inst.run().utility is not None

    try:
        secnet_py.Scenario.from_toml("n = 3\n")
    except ValueError as e:
        assert "rates" in str(e)
    else:
        raise AssertionError("missing rate table accepted")

    print("secnet_py smoke test ok:", float(Fraction(rc.utility)), "<", float(Fraction(rj.utility)))


if __name__ == "__main__":
    main()
