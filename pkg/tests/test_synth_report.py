from fractions import Fraction

import numpy as np

from spdzbio.field import DEFAULT_PRIME
from spdzbio.protocols import oracle_iris_hd
from spdzbio.report import (
    FIELD_ORDER,
    PUBLISHED_BANDWIDTH_KB,
    bandwidth_formula_bits,
    format_record,
    kib,
    parse_records,
)
from spdzbio.synth import face_pair, iris_pair


def test_impostor_hd_concentrates_near_half():
    # HD of independent codes: mean 1/2, sd 1/(2 sqrt(n_usable)); check within 3 sd
    rng = np.random.default_rng(0)
    a, b = iris_pair(1600, rng, genuine=False, mask_rate=0.0)
    hd = oracle_iris_hd(a.bits, a.mask, b.bits, b.mask)
    assert abs(float(hd) - 0.5) < 3 * 0.5 / 40


def test_genuine_flip_rate():
    rng = np.random.default_rng(1)
    a, b = iris_pair(1600, rng, genuine=True, flip_rate=0.05, mask_rate=0.0)
    hd = float(oracle_iris_hd(a.bits, a.mask, b.bits, b.mask))
    assert abs(hd - 0.05) < 3 * np.sqrt(0.05 * 0.95 / 1600)
    a, b = iris_pair(64, rng, genuine=True, flip_rate=0.0)
    assert oracle_iris_hd(a.bits, a.mask, b.bits, b.mask) == Fraction(0)


def test_face_pair_radius_and_width():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = face_pair(3, rng, genuine=True, bf=6, radius=2)
        assert np.abs(a.features - b.features).max() <= 2
        assert a.features.max() < 64 and b.bf == 6


def test_published_bandwidth_is_reproduced_at_45_bits():
    for n, (k, iris_kb, multi_kb) in PUBLISHED_BANDWIDTH_KB.items():
        assert round(kib(bandwidth_formula_bits("iris", n, k, 45)), 2) == iris_kb
        assert round(kib(bandwidth_formula_bits("multimodal", n, k, 45)), 2) == multi_kb


def test_record_format_roundtrip():
    rec = {k: i for i, k in enumerate(FIELD_ORDER)}
    rec["extra"] = "x"
    text = format_record(rec) + "\n" + format_record(rec)
    back = parse_records(text)
    assert len(back) == 2 and list(back[0]) == list(FIELD_ORDER) + ["extra"]
    assert back[0]["p"] == str(rec["p"])
    assert DEFAULT_PRIME.bit_length() == 46
