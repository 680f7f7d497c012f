import numpy as np
import pytest

from fuzzlab.analysis import (
    CoverageIndex,
    coverage_rate,
    covered_by,
    export_first_layer_filters,
    filter_matrices,
    permutation_importance,
    rank_features,
    read_filters,
    shuffle_all_features,
    to_pgm,
    value_subset_report,
)
from fuzzlab.classifiers import ModelConfig, Weights, build_network
from fuzzlab.dataset import AnnotatedSample, Element, Sample, annotate
from fuzzlab.errors import FeatureOutOfRange, NoFuzzedElements, WrongFamily
from fuzzlab.fuzz import FuzzPlan
from fuzzlab.packet import ip_to_int, make_packet
from fuzzlab.scenarios import run_scenario
from fuzzlab.schemas import PROTO_TCP
from fuzzlab.session import label_sessions

TTL_PLAN = FuzzPlan(("IP.ttl",))


@pytest.fixture
def linear_weights():
    """A linear model that only looks at feature 0."""
    config = ModelConfig("svm", (3,))
    return Weights(config, [np.array([[255.0], [0.0], [0.0]]), np.array([-0.5])])


@pytest.fixture
def samples():
    rng = np.random.default_rng(3)
    out = []
    for i in range(20):
        y = i % 2
        out.append(Sample("bytevec", (255 * y, 7, int(rng.integers(256))), y))
    return out


def test_constant_feature_has_no_importance(linear_weights, samples):
    row = permutation_importance(linear_weights, samples, feature=1, repeats=5, seed=1)
    assert row.baseline_f1 == 1.0
    assert row.importance == 0.0


def test_deciding_feature_ranks_first(linear_weights, samples):
    rows = rank_features(linear_weights, samples, repeats=5, seed=1, feature_fields={0: ("ARP.opcode",)})
    # zero-importance tie: the varying column 2 ranks ahead of constant column 1
    assert [r.feature for r in rows] == [0, 2, 1]
    assert rows[0].importance > 0
    assert rows[0].fields == ("ARP.opcode",)
    assert rows[1].importance == rows[2].importance == 0.0


def test_importance_is_seeded(linear_weights, samples):
    a = permutation_importance(linear_weights, samples, 0, repeats=3, seed=4)
    b = permutation_importance(linear_weights, samples, 0, repeats=3, seed=4)
    assert a == b


def test_importance_feature_range(linear_weights, samples):
    with pytest.raises(FeatureOutOfRange):
        permutation_importance(linear_weights, samples, feature=3)
    with pytest.raises(FeatureOutOfRange):
        permutation_importance(linear_weights, samples, feature=0, repeats=0)


def test_shuffle_all_features(linear_weights, samples):
    all_f1, label_f1 = shuffle_all_features(linear_weights, samples, seed=2)
    assert 0.0 <= all_f1 <= 1.0
    assert 0.0 <= label_f1 <= 1.0


def ttl_element(value, position=8):
    return Element(position, value, (("IP.ttl", value),))


def annotated(*elements):
    return AnnotatedSample(Sample("headervec", tuple(e.value for e in elements), 0), elements)


def test_coverage_counts_fuzzed_elements_only():
    """Unfuzzed elements stay out of both counts."""
    header = Element(0, 0x45, (("IP.version", 4), ("IP.ihl", 5)))
    training = [annotated(header, ttl_element(64))]
    real = [annotated(header, ttl_element(64)), annotated(header, ttl_element(32))]
    report = coverage_rate(real, training, TTL_PLAN)
    assert (report.x, report.y, report.rate) == (1, 1, 0.5)
    assert [(f.field, f.covered, f.uncovered) for f in report.per_field] == [("IP.ttl", 1, 1)]


def test_covered_by_needs_same_position():
    training = [annotated(ttl_element(64, position=8))]
    index = CoverageIndex(TTL_PLAN, training)
    assert covered_by(ttl_element(64, position=8), index, TTL_PLAN)
    assert not covered_by(ttl_element(64, position=9), index, TTL_PLAN)
    assert not covered_by(Element(8, 64), training, TTL_PLAN)


def test_coverage_without_fuzzed_elements():
    with pytest.raises(NoFuzzedElements):
        coverage_rate([annotated(ttl_element(64))], [], FuzzPlan(("TCP.window",)))


def test_self_coverage_and_monotonicity():
    plan = FuzzPlan(("ARP.target_ip", "ARP.target_mac"))
    sessions = run_scenario("arp", "malicious", 4, plan, seed=8)
    elements = annotate(label_sessions(sessions), "bytevec")
    assert coverage_rate(elements, elements, plan).rate == 1.0
    partial = coverage_rate(elements, elements[: len(elements) // 2], plan).rate
    assert partial <= 1.0


def test_value_subset_report():
    def packet(ttl):
        return make_packet(("IP", {"protocol": PROTO_TCP, "ttl": ttl, "src": ip_to_int("10.0.0.20")}))

    rows = value_subset_report([packet(64), packet(1)], [packet(64), packet(2)], ["IP.ttl", "IP.src"])
    ttl, src = rows
    assert (ttl.real_values, ttl.missing, ttl.subset) == (2, 1, False)
    assert src.subset


@pytest.fixture
def cnn_weights():
    config = ModelConfig("cnn", (4, 8), filters=(2,), conv_dense=4)
    arrays = [p.copy() for _, p in build_network(config).named_params()]
    arrays[0][0, 0] = 0.25  # constant filter
    return Weights(config, arrays)


def test_filter_matrices(cnn_weights):
    constant, varied = filter_matrices(cnn_weights)
    assert (constant == 128).all()
    assert varied.min() == 0 and varied.max() == 255
    assert varied.shape == (3, 3)


def test_filters_need_cnn(linear_weights):
    with pytest.raises(WrongFamily):
        filter_matrices(linear_weights)


def test_export_filters_is_reproducible(tmp_path, cnn_weights):
    first = export_first_layer_filters(cnn_weights, tmp_path / "a")
    second = export_first_layer_filters(cnn_weights, tmp_path / "b")
    assert [p.name for p in first] == ["filters.json", "filter_00.pgm", "filter_01.pgm"]
    assert [p.read_bytes() for p in first] == [p.read_bytes() for p in second]
    loaded = read_filters(first[0])
    assert all(np.array_equal(a, b) for a, b in zip(loaded, filter_matrices(cnn_weights)))


def test_to_pgm():
    assert to_pgm(np.array([[0, 255], [128, 1]])) == "P2\n2 2\n255\n0 255\n128 1\n"
