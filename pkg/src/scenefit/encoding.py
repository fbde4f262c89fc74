"""Canonical JSON encoding for exports and the wire protocol.

Floats are rendered with 17 significant digits, which round-trips any IEEE
double exactly, and keys are sorted, so two structurally equal documents
serialize to identical bytes. Poses travel as quaternion wxyz plus
translation xyz.
"""

from __future__ import annotations

import json
import math

from .geometry import RigidTransform, UnitQuaternion


def format_float(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"cannot encode non-finite float {value!r}")
    text = format(float(value), ".17g")
    return text


def canonical_dumps(document) -> str:
    """Deterministic JSON text: sorted keys, 17-significant-digit floats."""

    def render(value) -> str:
        if isinstance(value, dict):
            items = sorted(value.items())
            inner = ",".join(f"{json.dumps(str(k))}:{render(v)}" for k, v in items)
            return "{" + inner + "}"
        if isinstance(value, (list, tuple)):
            return "[" + ",".join(render(v) for v in value) + "]"
        if isinstance(value, bool) or value is None:
            return json.dumps(value)
        if isinstance(value, float):
            return format_float(value)
        if isinstance(value, int):
            return str(value)
        if isinstance(value, str):
            return json.dumps(value)
        raise TypeError(f"cannot canonically encode {type(value)!r}")

    return render(document)


def pose_to_wire(pose: RigidTransform) -> dict:
    return {
        "rotation_wxyz": [float(v) for v in pose.rotation.wxyz()],
        "translation_xyz": [float(v) for v in pose.translation],
    }


def pose_from_wire(payload) -> RigidTransform:
    if not isinstance(payload, dict):
        raise ValueError("pose must be an object")
    quat = payload.get("rotation_wxyz")
    trans = payload.get("translation_xyz")
    if (not isinstance(quat, list) or len(quat) != 4
            or not isinstance(trans, list) or len(trans) != 3):
        raise ValueError("pose needs rotation_wxyz[4] and translation_xyz[3]")
    values = [float(v) for v in quat + trans]
    if not all(math.isfinite(v) for v in values):
        raise ValueError("pose contains non-finite values")
    rotation = UnitQuaternion(*values[:4])
    return RigidTransform(rotation, values[4:])
