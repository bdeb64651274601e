"""Bench/run reports: measured counters next to the closed-form predictions."""

from __future__ import annotations

from .field import DEFAULT_PRIME
from .runner import RunResult

PUBLISHED_BANDWIDTH_ELL = 45
# N -> (k, iris KB, multimodal KB) as published, computed with l = 45
PUBLISHED_BANDWIDTH_KB = {
    1600: (1, 53.24, 53.30),
    3600: (3, 119.16, 119.23),
    5760: (2, 190.35, 190.42),
    6400: (2, 211.44, 211.51),
}

FIELD_ORDER = (
    "protocol", "mode", "p", "ell", "N", "k", "decision",
    "triples_used", "triples_formula", "triples_delta",
    "squares_used", "squares_formula", "randbits_used", "masks_used",
    "rounds_total", "rounds_input", "rounds_output", "rounds_compute",
    "rounds_formula", "rounds_delta",
    "tuple_open_elements", "tuple_open_bits", "tuple_open_kib",
    "bandwidth_formula_bits", "bandwidth_delta_bits",
    "aux_bits", "bytes_on_wire", "online_seconds", "note",
)


def triples_formula(protocol: str, n: int, k: int, ell: int) -> int:
    return {"iris": 3 * n + ell + 1, "face": ell, "multimodal": 3 * n + ell + 6}[protocol]


def squares_formula(protocol: str, n: int, k: int, ell: int) -> int:
    return 0 if protocol == "iris" else k


def rounds_formula(protocol: str, n: int, k: int, ell: int) -> int:
    return {"iris": 2 * ell + 7, "face": 2 * ell + 1, "multimodal": 2 * ell + 19}[protocol]


def bandwidth_formula_bits(protocol: str, n: int, k: int, ell: int) -> int:
    """Per-party tuple-opening payload in bits (face: 2l + k elements)."""
    if protocol == "iris":
        return (6 * n + 2 * ell + 2) * ell
    if protocol == "multimodal":
        return ell * (6 * n + k + 2 * ell + 12)
    return ell * (2 * ell + k)


def kib(bits: int) -> float:
    return bits / 8 / 1024


def build_record(result: RunResult, *, p: int, n: int, k: int, mode: str = "default") -> dict:
    st = result.server_stats
    proto, ell = result.protocol, result.ell
    tri_f = triples_formula(proto, n, k, ell)
    rnd_f = rounds_formula(proto, n, k, ell)
    bw_f = bandwidth_formula_bits(proto, n, k, ell)
    bits = st.tuple_open_elements * ell
    note = ""
    if p == DEFAULT_PRIME:
        note = f"published bandwidth uses l={PUBLISHED_BANDWIDTH_ELL}; p={p} has l={ell}"
    return {
        "protocol": proto,
        "mode": mode,
        "p": p,
        "ell": ell,
        "N": n,
        "k": k,
        "decision": result.decision.value,
        "triples_used": st.triples_used,
        "triples_formula": tri_f,
        "triples_delta": st.triples_used - tri_f,
        "squares_used": st.squares_used,
        "squares_formula": squares_formula(proto, n, k, ell),
        "randbits_used": st.randbits_used,
        "masks_used": st.masks_used,
        "rounds_total": st.rounds,
        "rounds_input": st.input_rounds,
        "rounds_output": st.outputs_opened + st.mac_check_rounds,
        "rounds_compute": st.compute_rounds,
        "rounds_formula": rnd_f,
        "rounds_delta": st.compute_rounds - rnd_f,
        "tuple_open_elements": st.tuple_open_elements,
        "tuple_open_bits": bits,
        "tuple_open_kib": f"{kib(bits):.2f}",
        "bandwidth_formula_bits": bw_f,
        "bandwidth_delta_bits": bits - bw_f,
        "aux_bits": st.aux_elements * ell,
        "bytes_on_wire": st.bytes_on_wire,
        "online_seconds": f"{result.online_seconds:.4f}",
        "note": note,
    }


def format_record(record: dict) -> str:
    keys = [k for k in FIELD_ORDER if k in record] + [k for k in record if k not in FIELD_ORDER]
    return "\n".join(f"{k}={record[k]}" for k in keys) + "\n"


def parse_records(text: str) -> list[dict]:
    out, cur = [], {}
    for line in text.splitlines():
        if not line.strip():
            if cur:
                out.append(cur)
                cur = {}
            continue
        key, _, value = line.partition("=")
        cur[key] = value
    if cur:
        out.append(cur)
    return out
