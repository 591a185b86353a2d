"""Smoke test for the mgw_py extension module.

Build and install with `maturin develop -m crates/py/Cargo.toml`, or build the
cdylib with `cargo build --release -p mgw-py --features extension-module` and
pass its directory with `--lib-dir`.
"""

import argparse
import math
import shutil
import sys
import tempfile
from pathlib import Path


def load(lib_dir):
    if lib_dir is None:
        import mgw_py

        return mgw_py
    built = next(Path(lib_dir).glob("libmgw_py.*"))
    tmp = Path(tempfile.mkdtemp())
    shutil.copy(built, tmp / ("mgw_py" + (".pyd" if built.suffix == ".dll" else ".so")))
    sys.path.insert(0, str(tmp))
    import mgw_py

    return mgw_py


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lib-dir")
    mgw = load(ap.parse_args().lib_dir)

    alt2 = mgw.Model.fixture("alt2")
    info = alt2.analyze()
    assert info["criticality"] == "critical"
    assert abs(info["sigma"] - math.sqrt(0.5)) < 1e-12
    assert mgw.Model.from_json(alt2.to_json()).sha256() == alt2.sha256()

    f = mgw.sample(alt2, [1, 2, 1], seed=5)
    again = mgw.sample(alt2, [1, 2, 1], seed=5)
    assert f.parents() == again.parents()
    walk = f.lukasiewicz()
    assert walk[-1] == -f.num_components == -3
    assert len(f.height()) == len(f)
    reduced, origin = f.project(1)
    assert len(reduced) == f.types().count(1)
    assert all(f.types()[o] == 1 for o in origin)

    tree, attempts = mgw.sample_conditioned(mgw.Model.fixture("mono1"), 1, 1, 21, seed=1)
    assert len(tree) == 21 and attempts >= 1

    _, y, s = mgw.snake(mgw.Model.fixture("alt2_spatial"), [1], seed=2)
    assert len(y) == len(s)

    q = mgw.size_distribution(mgw.Model.fixture("mono1"), 1, 1, 5)
    assert abs(q[1] - 0.5) < 1e-15 and abs(q[3] - 0.125) < 1e-15

    out = mgw.verify("projection", alt2, reps=20000, seed=3)
    again = mgw.verify("projection", alt2, reps=20000, seed=3, parallel=False)
    assert out["fingerprint"] == again["fingerprint"]
    assert out["report"]["verdict"] in ("pass", "fail", "inconclusive")
    assert "height-fdd" in mgw.experiments()

    try:
        mgw.sample(alt2, [0])
    except ValueError:
        pass
    else:
        raise AssertionError("0 is not a valid 1-based type")
    print("mgw_py smoke test passed:", out["report"]["verdict"], out["fingerprint"][:16])


if __name__ == "__main__":
    main()
