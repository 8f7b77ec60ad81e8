import math

import numpy as np
import pytest

from orthoview.descriptor import GlobalFeature
from orthoview.errors import DimensionMismatch, UnknownLabel
from orthoview.memory import CHISQUARE_EPS, CategoryMemory


def gf(values, did="t"):
    return GlobalFeature(np.array(values, float), did)


def brute_force_classify(entries, query, metric, tau=math.inf):
    """Plain-Python linear scan: entries is a list of (label, vector)."""
    def dist(a, b):
        if metric == "euclidean":
            return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
        if metric == "cosine":
            return 1.0 - sum(x * y for x, y in zip(a, b))
        return sum((x - y) ** 2 / (x + y + CHISQUARE_EPS) for x, y in zip(a, b))

    best = None
    for label, vec in entries:
        d = dist(vec, query)
        if best is None or d < best[1] or (d == best[1] and label < best[0]):
            best = (label, d)
    if best is None or best[1] > tau:
        return None
    return best


def test_teach_creates_category():
    m = CategoryMemory().teach("mug", gf([1, 0]))
    assert m.labels() == ["mug"] and m.n_instances == 1


def test_teach_twice_appends():
    f = gf([1, 0])
    m = CategoryMemory().teach("mug", f).teach("mug", f)
    assert len(m.instances("mug")) == 2


def test_teach_dimension_mismatch():
    m = CategoryMemory().teach("mug", gf([1, 0]))
    with pytest.raises(DimensionMismatch):
        m.teach("cup", gf([1, 0, 0]))
    with pytest.raises(DimensionMismatch):
        m.teach("cup", gf([1, 0], "other-descriptor"))


def test_classify_example():
    m = CategoryMemory().teach("A", gf([1, 0])).teach("B", gf([0, 1]))
    pred = m.classify(gf([0.9, 0.1]), "euclidean")
    assert pred.label == "A"
    assert pred.distance == pytest.approx(math.sqrt(0.02), abs=1e-15)
    assert pred.runner_up_distance == pytest.approx(math.sqrt(0.81 + 0.81))


def test_empty_memory_is_unknown():
    assert CategoryMemory().classify(gf([1, 0])) is None


def test_lexicographic_tie_break():
    m = CategoryMemory().teach("B", gf([0, 1])).teach("A", gf([1, 0]))
    q = gf([math.sqrt(0.5), math.sqrt(0.5)])
    for metric in ("euclidean", "cosine", "chisquare"):
        assert m.classify(q, metric).label == "A"


def test_tau_unknown():
    m = CategoryMemory().teach("A", gf([1, 0]))
    assert m.classify(gf([0, 1]), "euclidean", tau_unknown=1.0) is None
    assert m.classify(gf([0, 1]), "euclidean", tau_unknown=1.5).label == "A"


def test_identity_query_distance_zero():
    rng = np.random.default_rng(0)
    m = CategoryMemory()
    for label in "abc":
        v = rng.random(8)
        m.teach(label, gf(v / np.linalg.norm(v)))
    f = m.instances("b")[0]
    for metric in ("euclidean", "chisquare"):
        pred = m.classify(f, metric)
        assert pred.label == "b" and pred.distance == 0.0
    assert m.classify(f, "cosine").distance == pytest.approx(0.0, abs=1e-15)


def test_forget():
    m = CategoryMemory().teach("A", gf([1, 0])).teach("B", gf([0, 1]))
    m.forget("A")
    assert m.labels() == ["B"]
    with pytest.raises(UnknownLabel):
        m.forget("A")
    m2 = CategoryMemory().teach("A", gf([1, 0])).forget("A")
    assert m2.classify(gf([1, 0])) is None


def test_stats():
    m = CategoryMemory()
    assert (m.stats().n_categories, m.stats().average) == (0, 0.0)
    m.teach("A", gf([1, 0]))
    assert m.stats().average == 1.0
    for _ in range(1):
        m.teach("A", gf([1, 0]))
    for _ in range(4):
        m.teach("B", gf([0, 1]))
    assert m.stats().counts == {"A": 2, "B": 4}
    assert m.stats().average == 3.0


def test_classify_equals_brute_force_scan():
    rng = np.random.default_rng(99)
    metrics = ("euclidean", "cosine", "chisquare")
    for trial in range(300):
        dim = int(rng.integers(1, 12))
        metric = metrics[trial % 3]
        m, entries = CategoryMemory(), []
        for _ in range(int(rng.integers(0, 25))):
            label = str(rng.choice(list("abcdefg")))
            if entries and rng.random() < 0.2:
                vec = entries[int(rng.integers(len(entries)))][1]  # exact duplicate -> ties
            else:
                vec = rng.random(dim)
                vec = vec / np.linalg.norm(vec)
            m.teach(label, gf(vec))
            entries.append((label, vec))
        q = entries[int(rng.integers(len(entries)))][1] if entries and rng.random() < 0.3 else rng.random(dim)
        q = q / np.linalg.norm(q)
        tau = math.inf if rng.random() < 0.7 else float(rng.uniform(0, 0.5))
        expected = brute_force_classify(entries, q.tolist(), metric, tau)
        got = m.classify(gf(q), metric, tau)
        if expected is None:
            assert got is None
        else:
            assert got.label == expected[0]
            assert got.distance == pytest.approx(expected[1], abs=1e-12)


def test_teaching_never_rewrites_stored_features():
    rng = np.random.default_rng(1)
    m = CategoryMemory()
    for label in ("a", "b"):
        for _ in range(3):
            m.teach(label, gf(rng.random(5)))
    before = {label: [f.values.tobytes() for f in feats] for label, feats in m.items()}
    m.teach("c", gf(rng.random(5)))
    m.classify(gf(rng.random(5)))
    after = {label: [f.values.tobytes() for f in feats] for label, feats in m.items() if label != "c"}
    assert before == after
    with pytest.raises(ValueError):
        m.instances("a")[0].values[0] = 1.0


def test_snapshot_round_trip():
    rng = np.random.default_rng(5)
    m = CategoryMemory()
    for label in ("z", "a", "m"):
        m.teach(label, gf(rng.random(7) * 1e-3))
    back = CategoryMemory.from_json(m.to_json())
    assert back.labels() == ["z", "a", "m"]
    for (la, fa), (lb, fb) in zip(m.items(), back.items()):
        assert la == lb
        assert [f.values.tobytes() for f in fa] == [f.values.tobytes() for f in fb]
    assert back.descriptor_id == "t"
