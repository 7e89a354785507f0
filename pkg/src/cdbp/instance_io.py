"""Problem-instance documents.

Canonical form (JSON, two-space indent, keys in the order below)::

    {
      "dimensions": ["vcpu", "memory_gb", "ssd_gb"],
      "servers": [{"type_id": "s1", "capacity": [16, 32, 160], "count": 4}],
      "vms": [{"id": "vm0", "arrival": 0, "duration": 300, "demand": [1, 3.75, 4]},
              {"id": "vm1", "arrival": 5, "duration": "inf", "demand": [2, 7.5, 32]}]
    }

``servers`` entries expand, in order, into instances ``<type_id>-<k>``; that
order is the pool scan order.  Amounts are written as integers when integral
and as decimals otherwise (always exact, being multiples of 1/4).
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

from .model import (
    UNBOUNDED,
    ContractViolation,
    ProblemInstance,
    ServerPool,
    ServerType,
    VmRequest,
)


def _amount_out(x: Fraction):
    if x.denominator == 1:
        return int(x)
    return float(x)


def _pool_groups(pool: ServerPool):
    groups: list[list] = []
    for s in pool:
        if groups and groups[-1][0] == s.stype and s.instance_id == f"{s.stype.type_id}-{groups[-1][1]}":
            groups[-1][1] += 1
        elif s.instance_id == f"{s.stype.type_id}-0":
            groups.append([s.stype, 1])
        else:
            raise ContractViolation(
                f"pool instance {s.instance_id} does not follow the <type_id>-<k> layout")
    return groups


def to_document(inst: ProblemInstance) -> dict:
    return {
        "dimensions": list(inst.dimensions),
        "servers": [
            {"type_id": st.type_id, "capacity": [_amount_out(c) for c in st.capacity], "count": k}
            for st, k in _pool_groups(inst.pool)
        ],
        "vms": [
            {
                "id": v.id,
                "arrival": v.arrival,
                "duration": "inf" if v.duration == UNBOUNDED else int(v.duration),
                "demand": [_amount_out(d) for d in v.demand],
            }
            for v in inst.vms
        ],
    }


def from_document(doc: dict) -> ProblemInstance:
    try:
        dims = tuple(doc["dimensions"])
        spec = []
        for entry in doc["servers"]:
            st = ServerType.make(entry["type_id"], entry["capacity"])
            spec.append((st, int(entry["count"])))
        vms = tuple(
            VmRequest.make(e["id"], e["arrival"], e["duration"], e["demand"]) for e in doc["vms"]
        )
    except (KeyError, TypeError) as exc:
        raise ContractViolation(f"malformed instance document: {exc}") from exc
    return ProblemInstance(vms, ServerPool.from_counts(spec), dims)


def dumps(inst: ProblemInstance) -> str:
    return json.dumps(to_document(inst), indent=2) + "\n"


def loads(text: str) -> ProblemInstance:
    return from_document(json.loads(text))


def save(inst: ProblemInstance, path) -> None:
    Path(path).write_text(dumps(inst))


def load(path) -> ProblemInstance:
    return loads(Path(path).read_text())
