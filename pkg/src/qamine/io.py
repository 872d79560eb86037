"""File formats shared by the CLI stages.

Every artifact starts with ``#`` metadata lines (tool version, stage, seed,
input digests) followed by its body. Readers skip any leading ``#`` lines,
so the header never affects what a later stage sees. Nothing time-dependent
goes into a header; reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from . import __version__
from .errors import MalformedLine, QamineError
from .features import FEATURE_NAMES, N_FEATURES, BehaviorFeatures
from .qa import QAPair

FEATURE_DIGITS = 6


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()[:16]


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def header(stage: str, seed: int | None = None, inputs: dict[str, str] | None = None, **extra) -> list[str]:
    """Metadata lines; ``inputs`` maps a role name to a content digest."""
    lines = [f"# qamine {__version__}", f"# stage: {stage}"]
    if seed is not None:
        lines.append(f"# seed: {seed}")
    for role, digest in sorted((inputs or {}).items()):
        lines.append(f"# input {role}: {digest}")
    for key, value in sorted(extra.items()):
        lines.append(f"# {key}: {value}")
    return lines


def write_lines(path: str | Path, head: Sequence[str], body: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in head:
            fh.write(line + "\n")
        for line in body:
            fh.write(line + "\n")


def read_body(path: str | Path) -> Iterator[tuple[int, str]]:
    """Yield ``(line_no, line)`` after the leading ``#`` block, blank lines skipped."""
    with open(path, encoding="utf-8") as fh:
        in_header = True
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if in_header and line.startswith("#"):
                continue
            in_header = False
            if line.strip():
                yield line_no, line


def read_text_body(path: str | Path) -> str:
    return "\n".join(line for _, line in read_body(path))


# -- tab escaping ----------------------------------------------------------

_ESC = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESC = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def escape_field(text: str) -> str:
    return "".join(_ESC.get(ch, ch) for ch in text)


def unescape_field(text: str) -> str:
    if "\\" not in text:
        return text
    out = []
    it = iter(text)
    for ch in it:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(it, None)
        if nxt is None or nxt not in _UNESC:
            raise ValueError(f"bad escape sequence in {text!r}")
        out.append(_UNESC[nxt])
    return "".join(out)


def _split(line: str, n: int, line_no: int) -> list[str]:
    parts = line.split("\t")
    if len(parts) != n:
        raise MalformedLine(line_no, f"expected {n} tab-separated fields, got {len(parts)}")
    return parts


def _bool(text: str, line_no: int) -> bool:
    if text in ("1", "true"):
        return True
    if text in ("0", "false"):
        return False
    raise MalformedLine(line_no, f"expected a 0/1 label, got {text!r}")


def _float(text: str, line_no: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedLine(line_no, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise MalformedLine(line_no, f"non-finite value {text!r}")
    return value


# -- features ---------------------------------------------------------------


def round_feature(value: float) -> float:
    """The value a reader recovers from the features TSV."""
    return float(f"{value:.{FEATURE_DIGITS}f}")


def round_features(rows: Iterable[BehaviorFeatures]) -> list[BehaviorFeatures]:
    return [BehaviorFeatures(r.qp_id, r.n_impressions, tuple(map(round_feature, r.values))) for r in rows]


FEATURE_COLUMNS = "#qp_id\tn_impressions\t" + "\t".join(FEATURE_NAMES)


def feature_lines(rows: Iterable[BehaviorFeatures]) -> Iterator[str]:
    yield FEATURE_COLUMNS
    for r in rows:
        vals = "\t".join(f"{v:.{FEATURE_DIGITS}f}" for v in r.values)
        yield f"{r.qp_id}\t{r.n_impressions}\t{vals}"


def read_features(path: str | Path) -> list[BehaviorFeatures]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = _split(line, 2 + N_FEATURES, line_no)
            try:
                n = int(parts[1])
            except ValueError:
                raise MalformedLine(line_no, f"bad impression count {parts[1]!r}") from None
            out.append(BehaviorFeatures(parts[0], n, tuple(_float(v, line_no) for v in parts[2:])))
    return out


# -- labels -------------------------------------------------------------------


def label_lines(column: str, rows: Iterable[tuple[str, bool]]) -> Iterator[str]:
    yield f"#qp_id\t{column}"
    for qp_id, lab in rows:
        yield f"{qp_id}\t{int(bool(lab))}"


def read_labels(path: str | Path) -> dict[str, bool]:
    out: dict[str, bool] = {}
    for line_no, line in read_body(path):
        qp_id, lab = _split(line, 2, line_no)
        out[qp_id] = _bool(lab, line_no)
    return out


def score_lines(rows: Iterable[tuple[str, float]]) -> Iterator[str]:
    yield "#qp_id\tscore"
    for qp_id, score in rows:
        yield f"{qp_id}\t{score!r}"


def weak_lines(rows) -> Iterator[str]:
    yield "#qp_id\tscore\tlabel"
    for w in rows:
        yield f"{w.qp_id}\t{w.score!r}\t{int(w.label)}"


def read_weak(path: str | Path) -> list[tuple[str, float, bool]]:
    out = []
    for line_no, line in read_body(path):
        qp_id, score, lab = _split(line, 3, line_no)
        out.append((qp_id, _float(score, line_no), _bool(lab, line_no)))
    return out


# -- QA pairs -------------------------------------------------------------------


def pair_lines(pairs: Iterable[QAPair], targets: Sequence[float] | None = None) -> Iterator[str]:
    """``qp_id  label_or_score  question  passage``; an empty label means unlabeled."""
    yield "#qp_id\tlabel_or_score\tquestion\tpassage"
    for i, p in enumerate(pairs):
        if targets is not None:
            lab = repr(float(targets[i]))
        elif p.label is None:
            lab = ""
        else:
            lab = str(int(p.label))
        yield f"{p.qp_id}\t{lab}\t{escape_field(p.question)}\t{escape_field(p.passage)}"


def read_pairs(path: str | Path) -> tuple[list[QAPair], list[float | None]]:
    """Pairs plus the raw label column (``None`` when empty).

    A ``0``/``1`` column also sets ``QAPair.label``; any other number is kept
    only as a target (a soft weak score for squared-error training).
    """
    pairs: list[QAPair] = []
    targets: list[float | None] = []
    for line_no, line in read_body(path):
        qp_id, lab, q, p = _split(line, 4, line_no)
        try:
            question, passage = unescape_field(q), unescape_field(p)
        except ValueError as exc:
            raise MalformedLine(line_no, str(exc)) from None
        if lab == "":
            pairs.append(QAPair(qp_id, question, passage))
            targets.append(None)
            continue
        value = _float(lab, line_no)
        label = bool(value) if value in (0.0, 1.0) and lab in ("0", "1") else None
        pairs.append(QAPair(qp_id, question, passage, label))
        targets.append(value)
    return pairs, targets


# -- JSON models --------------------------------------------------------------


def write_json(path: str | Path, head: Sequence[str], text: str) -> None:
    write_lines(path, head, [text.rstrip("\n")])


def read_json(path: str | Path) -> dict:
    body = read_text_body(path)
    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        raise QamineError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise QamineError(f"{path}: expected a JSON object")
    return obj


def kv_lines(rows: Iterable[tuple[str, object]]) -> Iterator[str]:
    yield "#key\tvalue"
    for key, value in rows:
        yield f"{key}\t{value!r}" if isinstance(value, float) else f"{key}\t{value}"


def read_kv(path: str | Path) -> dict[str, str]:
    out = {}
    for line_no, line in read_body(path):
        key, value = _split(line, 2, line_no)
        out[key] = value
    return out
