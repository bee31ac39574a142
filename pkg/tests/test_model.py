import json

import numpy as np
import pytest

from signstab.cli import bundled_models, resolve_model
from signstab.expr import ParseError, VariableRangeError
from signstab.model import (
    DelaySpec,
    DynamicsSpec,
    ModelError,
    Region,
    load_model,
    model_from_dict,
)
from signstab.sampling import sample_region

BASE = {"n": 2, "f": ["-x1 + x2", "-x1 - x2"], "region": {"x": [[-1, 1], [-1, 1]], "t": [0, 1]}}


def with_(**kw):
    d = json.loads(json.dumps(BASE))
    d.update(kw)
    return d


class TestRegion:
    def test_box(self):
        r = Region.box(3, -0.9, 3.0, t=(0, 10))
        assert r.n == 3 and r.x[2] == (-0.9, 3.0) and r.t == (0.0, 10.0)

    def test_contains(self):
        r = Region.box(2, 0, 1, t=(0, 1))
        assert r.contains((0.5, 1.0), 0.3)
        assert not r.contains((0.5, 1.1))
        assert not r.contains((0.5, 0.5), 2.0)

    @pytest.mark.parametrize("x,t", [(((1, 0),), (0, 0)), (((0, 1),), (2, 1))])
    def test_reversed_bounds(self, x, t):
        with pytest.raises(ModelError):
            Region(x, t)


class TestSampling:
    def test_deterministic_and_inside(self):
        r = Region(((-1.0, 2.0), (0.0, 0.5)), (1.0, 3.0))
        X1, T1 = sample_region(r, 128, 7)
        X2, T2 = sample_region(r, 128, 7)
        assert np.array_equal(X1, X2) and np.array_equal(T1, T2)
        assert X1.shape == (128, 2) and T1.shape == (128,)
        assert all(r.contains(x, t) for x, t in zip(X1, T1))

    def test_seed_changes_points(self):
        r = Region.box(2, 0, 1, t=(0, 1))
        assert not np.array_equal(sample_region(r, 16, 1)[0], sample_region(r, 16, 2)[0])

    def test_degenerate_intervals(self):
        r = Region(((1.0, 1.0), (0.0, 1.0)), (0.0, 0.0))
        X, T = sample_region(r, 32, 0)
        assert np.all(X[:, 0] == 1.0) and np.all(T == 0.0)


class TestModelFile:
    def test_minimal(self):
        m = model_from_dict(BASE)
        assert m.dyn.n == 2 and m.region.t == (0.0, 1.0) and m.delays is None

    def test_full(self):
        m = model_from_dict(with_(delays=[[1, 2, 5.0], [2, 1, 5.0]], history=[1, 0.5],
                                  modules=[[1], [2]], block_metrics=[[[1]], [[2]]], name="x"))
        assert m.delays.delays == {(1, 2): 5.0, (2, 1): 5.0}
        assert m.delays.history == (1.0, 0.5)
        assert m.block_metrics[1].tolist() == [[2.0]]
        assert m.name == "x"

    @pytest.mark.parametrize("bad", [
        [],
        {"f": ["x1"]},
        {"n": 0, "f": []},
        {"n": True, "f": ["x1"]},
        {"n": 2, "f": ["x1"]},
        {"n": 1, "f": [1]},
        with_(region={"x": [[0, 1]]}),
        with_(region={"x": [[1, 0], [0, 1]]}),
        with_(region={"y": 1}),
        with_(history=[1.0]),
        with_(delays=[[1, 3, 1.0]]),
        with_(delays=[[1, 2, -1.0]]),
        with_(delays=[[1, 1, 1.0]]),
        with_(delays=[[1, 2]]),
        with_(modules=[[1], [1, 2]]),
        with_(modules=[[1], []]),
        with_(block_metrics=[[[1]]]),
        with_(modules=[[1, 2]], block_metrics=[[[1]]]),
    ])
    def test_rejects(self, bad):
        with pytest.raises(ModelError):
            model_from_dict(bad)

    def test_expression_errors_propagate(self):
        with pytest.raises(VariableRangeError):
            model_from_dict({"n": 1, "f": ["x2"]})
        with pytest.raises(ParseError):
            model_from_dict({"n": 1, "f": ["x1 +"]})

    def test_load_errors(self, tmp_path):
        with pytest.raises(ModelError):
            load_model(tmp_path / "missing.json")
        p = tmp_path / "bad.json"
        p.write_text("{not json", encoding="utf-8")
        with pytest.raises(ModelError):
            load_model(p)

    def test_round_trip_file(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps(BASE), encoding="utf-8")
        assert load_model(p).dyn.f == model_from_dict(BASE).dyn.f

    @pytest.mark.parametrize("name", bundled_models())
    def test_bundled_models_load(self, name):
        m = resolve_model(name)
        assert m.dyn.n >= 1 and m.region is not None


class TestSpecs:
    def test_dynamics_from_strings(self):
        d = DynamicsSpec.from_strings(["-x1", "x1 - x2"], modules=[[1], [2]])
        assert d.n == 2 and d.source == ("-x1", "x1 - x2") and not d.has_blocks
        assert DynamicsSpec.from_strings(["-x1", "-x2"], modules=[[1, 2]]).has_blocks

    def test_delay_with_values(self):
        d = DelaySpec({(1, 2): 5.0, (2, 1): 5.0}, (1.0, 0.5))
        assert d.with_values([2.0]).delays == {(1, 2): 2.0, (2, 1): 2.0}
        assert d.with_values([1.0, 3.0]).max_delay == 3.0
        with pytest.raises(ModelError):
            d.with_values([1.0, 2.0, 3.0])

    def test_delay_rejects_nonfinite(self):
        with pytest.raises(ModelError):
            DelaySpec({(1, 2): float("inf")})
