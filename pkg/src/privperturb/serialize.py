"""JSON file formats for systems, perturbations and reports.

System document (all matrices row-major nested lists)::

    {
      "n": 3, "p": 2, "q": 2,
      "A": [[...], ...], "B": [[...], ...],
      "G": [[...], ...], "H": [[...], ...],
      "pi": [[...], ...],            # optional, (q, l) aggregation
      "control_inputs": [1]          # optional, 0-based indices
    }

When ``pi`` is present the document's ``G`` and ``H`` carry the raw l-row
maps and the released maps are derived as ``pi @ G`` and ``pi @ H``;
without ``pi`` the document's ``G``/``H`` are the released maps directly.

Model files (systems, perturbations) are written with exact shortest
round-trip floats so load(save(x)) reproduces x bit for bit.  Report
documents emitted by the command-line tool are rounded to 12 significant
digits instead; pass ``digits=12`` to :func:`dumps_canonical` for that.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import DimensionError
from .system import LinearSystem, Perturbation, ReleaseMap

__all__ = [
    "round_sig",
    "jsonable",
    "dumps_canonical",
    "atomic_write_text",
    "system_to_doc",
    "system_from_doc",
    "load_system",
    "save_system",
    "perturbation_to_doc",
    "perturbation_from_doc",
    "load_perturbation",
    "save_perturbation",
]

SIG_DIGITS = 12


def round_sig(x, digits=SIG_DIGITS):
    """Round a float to ``digits`` significant digits."""
    x = float(x)
    if x == 0.0 or not np.isfinite(x):
        return x
    return float(f"{x:.{digits}g}")


def jsonable(obj, digits=None):
    """Recursively convert arrays/numpy scalars to JSON types.

    With ``digits`` set, floats are rounded to that many significant digits;
    with ``digits=None`` they are kept exact.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if digits is None else round_sig(obj, digits)
    if isinstance(obj, complex):
        re, im = (obj.real, obj.imag) if digits is None else (
            round_sig(obj.real, digits), round_sig(obj.imag, digits))
        return {"re": re, "im": im}
    return obj


def dumps_canonical(doc, digits=None):
    """Serialize with sorted keys; deterministic across runs."""
    return json.dumps(jsonable(doc, digits), indent=2, sort_keys=True) + "\n"


def atomic_write_text(path, text):
    """Write via a temp file and rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _matrix_field(doc, key, rows, cols):
    try:
        M = np.asarray(doc[key], dtype=float)
    except KeyError:
        raise DimensionError(f"system document missing field {key!r}")
    except (TypeError, ValueError) as exc:
        raise DimensionError(f"field {key!r} is not a numeric matrix") from exc
    if M.ndim != 2:
        raise DimensionError(f"field {key!r} must be a nested list of rows")
    if rows is not None and M.shape != (rows, cols):
        raise DimensionError(
            f"field {key!r} has shape {M.shape}, expected {(rows, cols)}"
        )
    return M


def system_from_doc(doc):
    """Build ``(LinearSystem, ReleaseMap | None)`` from a parsed document."""
    if not isinstance(doc, dict):
        raise DimensionError("system document must be a JSON object")
    try:
        n, p, q = int(doc["n"]), int(doc["p"]), int(doc["q"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionError("system document needs integer n, p, q") from exc
    A = _matrix_field(doc, "A", n, n)
    B = _matrix_field(doc, "B", n, p)
    control = doc.get("control_inputs")
    if control is not None:
        control = tuple(int(i) for i in control)
    if "pi" in doc:
        pi = _matrix_field(doc, "pi", None, None)
        if pi.shape[0] != q:
            raise DimensionError(
                f"pi has {pi.shape[0]} rows, expected q={q}"
            )
        l = pi.shape[1]
        g_raw = _matrix_field(doc, "G", l, n)
        h_raw = _matrix_field(doc, "H", l, p)
        sys_ = LinearSystem(A, B, pi @ g_raw, pi @ h_raw, control_inputs=control)
        return sys_, ReleaseMap(pi, g_raw, h_raw)
    G = _matrix_field(doc, "G", q, n)
    H = _matrix_field(doc, "H", q, p)
    return LinearSystem(A, B, G, H, control_inputs=control), None


def system_to_doc(sys, rel=None):
    """Inverse of :func:`system_from_doc`."""
    doc = {
        "n": sys.n,
        "p": sys.p,
        "q": sys.q,
        "A": sys.A,
        "B": sys.B,
    }
    if rel is not None:
        rel.check_consistent(sys)
        doc["G"] = rel.g_raw
        doc["H"] = rel.h_raw
        doc["pi"] = rel.pi
    else:
        doc["G"] = sys.G
        doc["H"] = sys.H
    if sys.control_inputs is not None:
        doc["control_inputs"] = list(sys.control_inputs)
    return doc


def load_system(path):
    """Read a system JSON file -> ``(LinearSystem, ReleaseMap | None)``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DimensionError(f"{path}: not valid JSON ({exc})") from exc
    return system_from_doc(doc)


def save_system(path, sys, rel=None):
    atomic_write_text(path, dumps_canonical(system_to_doc(sys, rel)))


def perturbation_to_doc(pert):
    return {
        "n": pert.n,
        "p": pert.p,
        "l": pert.l,
        "k_ss": pert.k_ss,
        "k_si": pert.k_si,
        "k_os": pert.k_os,
        "k_oi": pert.k_oi,
    }


def perturbation_from_doc(doc):
    if not isinstance(doc, dict):
        raise DimensionError("perturbation document must be a JSON object")
    try:
        n, p, l = int(doc["n"]), int(doc["p"]), int(doc["l"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DimensionError("perturbation document needs integer n, p, l") from exc
    return Perturbation(
        k_ss=_matrix_field(doc, "k_ss", p, n),
        k_si=_matrix_field(doc, "k_si", p, p),
        k_os=_matrix_field(doc, "k_os", l, n),
        k_oi=_matrix_field(doc, "k_oi", l, p),
    )


def load_perturbation(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DimensionError(f"{path}: not valid JSON ({exc})") from exc
    return perturbation_from_doc(doc)


def save_perturbation(path, pert):
    atomic_write_text(path, dumps_canonical(perturbation_to_doc(pert)))
