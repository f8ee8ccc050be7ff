"""CSV and key=value file formats.

All CSV files are comma-separated with LF line endings and a mandatory header
row; any number of leading ``#`` comment lines are allowed and ignored on read.
Floats are written with ``repr`` so that values survive a round trip exactly.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .measures import DiscreteMeasure, ParameterDomain, ParameterGrid
from .pde_forward import Episode

TIME_RTOL = 1e-9


class InputError(ValueError):
    """Malformed or inconsistent input file."""


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def comment_lines(comments: Mapping[str, object] | Sequence[str] | None) -> list[str]:
    if not comments:
        return []
    if isinstance(comments, Mapping):
        return [f"{k}={_fmt(v)}" for k, v in comments.items()]
    return list(comments)


def format_comments(comments) -> str:
    return "".join(f"# {line}\n" for line in comment_lines(comments))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comments=None) -> None:
    buf = io.StringIO()
    buf.write(format_comments(comments))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), newline="")


def read_csv(path) -> tuple[list[str], list[list[str]], list[str]]:
    """Return ``(header, rows, comment_lines)``."""
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {p}")
    comments, body = [], []
    for line in p.read_text().splitlines():
        if line.startswith("#"):
            if not body:
                comments.append(line[1:].strip())
            continue
        if line.strip():
            body.append(line)
    if not body:
        raise InputError(f"{p}: missing header row")
    reader = csv.reader(body)
    header = [h.strip() for h in next(reader)]
    rows = [r for r in reader]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise InputError(f"{p}: row {i + 1} has {len(r)} fields, expected {len(header)}")
    return header, rows, comments


def _columns(path, header, rows, required, optional=()) -> dict[str, np.ndarray]:
    missing = [c for c in required if c not in header]
    if missing:
        raise InputError(f"{path}: missing column(s) {', '.join(missing)}; header is {header}")
    out = {}
    for name in list(required) + [c for c in optional if c in header]:
        k = header.index(name)
        try:
            out[name] = np.array([float(r[k]) if r[k].strip() else np.nan for r in rows])
        except ValueError as exc:
            raise InputError(f"{path}: column {name!r} is not numeric ({exc})") from None
    return out


def comment_values(comments: Sequence[str]) -> dict[str, str]:
    out = {}
    for line in comments:
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# -- key=value metadata ---------------------------------------------------


def write_keyvalue(path, values: Mapping[str, object]) -> None:
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in values.items())
    Path(path).write_text(text, newline="")


def read_keyvalue(path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {p}")
    out = {}
    for n, line in enumerate(p.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{p}:{n}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# -- measures -------------------------------------------------------------


def write_measure(path, measure: DiscreteMeasure, comments=None) -> None:
    d = measure.grid.domain
    extra = {
        "domain": f"{d.q1_min!r},{d.q1_max!r},{d.q2_min!r},{d.q2_max!r}",
        "metric_order": d.metric_order,
    }
    lines = comment_lines(comments) + comment_lines(extra)
    rows = ((q[0], q[1], p) for q, p in zip(measure.grid.nodes, measure.weights))
    write_csv(path, ["q1", "q2", "p"], rows, lines)


def read_measure(path, domain: Optional[ParameterDomain] = None) -> DiscreteMeasure:
    header, rows, comments = read_csv(path)
    cols = _columns(path, header, rows, ["q1", "q2", "p"])
    q1, q2, p = cols["q1"], cols["q2"], cols["p"]
    a1, a2 = np.unique(q1), np.unique(q2)
    if a1.size * a2.size != q1.size:
        raise InputError(f"{path}: nodes do not form a full rectangular grid")
    e1, e2 = np.meshgrid(a1, a2, indexing="ij")
    if not (np.array_equal(e1.ravel(), q1) and np.array_equal(e2.ravel(), q2)):
        raise InputError(f"{path}: rows are not in row-major grid order")
    try:
        if domain is None:
            meta = comment_values(comments)
            if "domain" in meta:
                b = [float(x) for x in meta["domain"].split(",")]
                order = float(meta.get("metric_order", 2.0))
                domain = ParameterDomain(b[0], b[1], b[2], b[3], order)
            else:
                # without a domain comment the node extent is all we know
                domain = ParameterDomain(a1[0], a1[-1], a2[0], a2[-1])
        return DiscreteMeasure(ParameterGrid(domain, a1, a2), p)
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: {exc}") from None


# -- episodes -------------------------------------------------------------


def write_episode(path, episode: Episode, comments=None) -> None:
    """Row ``k`` holds ``t = (k+1) tau``, the input held over ``[t - tau, t)``
    and the output sampled at ``t``."""
    t = episode.times()
    if episode.output_y is None:
        rows = zip(t, episode.input_u)
        write_csv(path, ["t", "u"], rows, comments)
    else:
        write_csv(path, ["t", "u", "y"], zip(t, episode.input_u, episode.output_y), comments)


def read_episode(path, tau: Optional[float] = None, episode_id: Optional[str] = None) -> Episode:
    header, rows, _ = read_csv(path)
    cols = _columns(path, header, rows, ["t", "u"], ["y"])
    t, u = cols["t"], cols["u"]
    if t.size == 0:
        raise InputError(f"{path}: no data rows")
    if t.size >= 2:
        dt = np.diff(t)
        step = dt[0]
        if not step > 0 or np.any(np.abs(dt - step) > TIME_RTOL * abs(step)):
            raise InputError(f"{path}: time column is not uniformly spaced")
        if tau is not None and abs(step - tau) > TIME_RTOL * tau:
            raise InputError(f"{path}: time step {float(step)!r} does not match tau={tau!r}")
        tau = tau if tau is not None else float(step)
    elif tau is None:
        raise InputError(f"{path}: a single-row episode needs tau from the manifest")
    y = cols.get("y")
    if y is not None and np.all(np.isnan(y)):
        y = None
    if not np.all(np.isfinite(u)) or (y is not None and not np.all(np.isfinite(y))):
        raise InputError(f"{path}: non-finite or missing values")
    ident = episode_id or Path(path).stem
    try:
        return Episode(ident, float(tau), u, y)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


# -- samples --------------------------------------------------------------


def write_samples(path, points: np.ndarray, comments=None) -> None:
    write_csv(path, ["q1", "q2"], ((p[0], p[1]) for p in points), comments)


def read_samples(path) -> np.ndarray:
    header, rows, _ = read_csv(path)
    cols = _columns(path, header, rows, ["q1", "q2"])
    pts = np.column_stack([cols["q1"], cols["q2"]])
    if not np.all(np.isfinite(pts)):
        raise InputError(f"{path}: non-finite sample coordinates")
    return pts
