"""
Text and JSON file formats: problem files, expansions, networks and reports.
Reals in text files use 17 significant digits; JSON uses the shortest
round-trip representation.
"""

import json
import logging
import math
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..core.barron_space import (
    BoundaryCondition,
    TrigExpansion,
    format_expansion,
    format_real,
    format_terms,
    parse_expansion,
    parse_term,
)
from ..core.elliptic_problem import EllipticProblem
from ..core.errors import (
    BarronFlowError,
    ExpansionFormatError,
    InputError,
    NetworkFormatError,
    ProblemFileError,
)
from ..core.net_extract import Activation, Normalization, TwoLayerNet

logger = logging.getLogger(__name__)

_SECTION_RE = re.compile(r"^\[\s*([^\]]+?)\s*\]$")
_A_SECTION_RE = re.compile(r"^A\.(\d+)\.(\d+)$")
_META_KEYS = ("d", "bc", "a_min", "a_max", "c_min", "c_max")


def read_text(path: Path) -> str:
    """Read a UTF-8 file, mapping OS errors to InputError naming the path."""
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from None


def write_text(path: Path, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot write {path}: {e.strerror or e}") from None


# Problem files


def _split_sections(text: str, source: str) -> Dict[str, List[str]]:
    sections: Dict[str, List[str]] = {}
    current: Optional[str] = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _SECTION_RE.match(line)
        if match:
            current = match.group(1)
            if current in sections:
                raise ProblemFileError(f"{source}:{number}: duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise ProblemFileError(f"{source}:{number}: content before the first section")
        sections[current].append(line)
    return sections


def _parse_meta(lines: List[str], source: str) -> Dict[str, str]:
    meta = {}
    for line in lines:
        key, sep, value = line.partition("=")
        if not sep:
            raise ProblemFileError(f"{source}: [meta] line {line!r} is not 'key = value'")
        meta[key.strip()] = value.strip()
    missing = [key for key in _META_KEYS if key not in meta]
    if missing:
        raise ProblemFileError(f"{source}: [meta] is missing {', '.join(missing)}")
    return meta


def _section_expansion(lines: List[str], dim: int, source: str, label: str) -> TrigExpansion:
    try:
        return TrigExpansion.from_terms(dim, [parse_term(line, dim) for line in lines])
    except BarronFlowError as e:
        raise ProblemFileError(f"{source}: [{label}]: {e}") from None


def parse_problem(text: str, source: str = "<problem>", name: Optional[str] = None) -> EllipticProblem:
    """Parse the sectioned problem format.

    ``[meta]`` carries d, bc and the declared constants; ``[A.i.j]`` (1-based),
    ``[c]`` and ``[f]`` list expansion terms. Omitted off-diagonals are 0, an
    omitted diagonal is the constant 1 and a lone ``[A.i.j]`` is mirrored.

    Raises:
        ProblemFileError: On any syntax or structure error
    """
    sections = _split_sections(text, source)
    if "meta" not in sections:
        raise ProblemFileError(f"{source}: missing [meta] section")
    meta = _parse_meta(sections["meta"], source)
    try:
        dim = int(meta["d"])
        bc = BoundaryCondition.parse(meta["bc"])
        declared = {key: float(meta[key]) for key in ("a_min", "a_max", "c_min", "c_max")}
    except (ValueError, BarronFlowError) as e:
        raise ProblemFileError(f"{source}: bad [meta] value: {e}") from None
    if dim < 1:
        raise ProblemFileError(f"{source}: d must be >= 1, got {dim}")

    given: Dict[Tuple[int, int], TrigExpansion] = {}
    for label, lines in sections.items():
        match = _A_SECTION_RE.match(label)
        if match:
            i, j = int(match.group(1)) - 1, int(match.group(2)) - 1
            if not (0 <= i < dim and 0 <= j < dim):
                raise ProblemFileError(f"{source}: [{label}] is outside a {dim}x{dim} matrix")
            given[(i, j)] = _section_expansion(lines, dim, source, label)
        elif label not in ("meta", "c", "f"):
            raise ProblemFileError(f"{source}: unknown section [{label}]")
    for section in ("c", "f"):
        if section not in sections:
            raise ProblemFileError(f"{source}: missing [{section}] section")

    A = [[TrigExpansion.zero(dim) for _ in range(dim)] for _ in range(dim)]
    for i in range(dim):
        A[i][i] = given.get((i, i), TrigExpansion.constant(dim))
        for j in range(dim):
            if i == j:
                continue
            if (i, j) in given:
                A[i][j] = given[(i, j)]
            elif (j, i) in given:
                A[i][j] = given[(j, i)]

    try:
        return EllipticProblem(
            dim=dim,
            bc=bc,
            A=tuple(tuple(row) for row in A),
            c=_section_expansion(sections["c"], dim, source, "c"),
            f=_section_expansion(sections["f"], dim, source, "f"),
            name=name or meta.get("name", Path(source).stem),
            **declared,
        )
    except BarronFlowError as e:
        if isinstance(e, ProblemFileError):
            raise
        raise ProblemFileError(f"{source}: {e}") from None


def load_problem(path: Path) -> EllipticProblem:
    path = Path(path)
    problem = parse_problem(read_text(path), source=str(path))
    logger.debug("Loaded problem %s (d=%d, %s) from %s", problem.name, problem.dim, problem.bc.value, path)
    return problem


def format_problem(problem: EllipticProblem) -> str:
    """Inverse of :func:`parse_problem`; zero off-diagonals are omitted."""
    lines = [
        "[meta]",
        f"name = {problem.name}",
        f"d = {problem.dim}",
        f"bc = {problem.bc.value}",
        f"a_min = {format_real(problem.a_min)}",
        f"a_max = {format_real(problem.a_max)}",
        f"c_min = {format_real(problem.c_min)}",
        f"c_max = {format_real(problem.c_max)}",
    ]
    for i in range(problem.dim):
        for j in range(i, problem.dim):
            entry = problem.A[i][j]
            if i != j and entry.is_zero():
                continue
            lines += ["", f"[A.{i + 1}.{j + 1}]", *format_terms(entry)]
    lines += ["", "[c]", *format_terms(problem.c), "", "[f]", *format_terms(problem.f)]
    return "\n".join(lines) + "\n"


# Expansions


def save_expansion(path: Path, g: TrigExpansion) -> None:
    write_text(path, format_expansion(g))


def load_expansion(path: Path) -> TrigExpansion:
    try:
        return parse_expansion(read_text(path))
    except ExpansionFormatError as e:
        raise ExpansionFormatError(f"{path}: {e}") from None


# Networks

_NET_HEADER = ("activation", "dim", "width", "normalization", "offset")


def format_network(net: TwoLayerNet) -> str:
    """Header lines, then one ``a w_1 .. w_d b`` line per neuron."""
    lines = [
        f"activation {net.activation.value}",
        f"dim {net.dim}",
        f"width {net.width}",
        f"normalization {net.normalization.value}",
        f"offset {format_real(net.offset)}",
        "# a w_1 ... w_d b",
    ]
    for a, w, b in zip(net.outer, net.inner, net.bias):
        lines.append(" ".join([format_real(a), *(format_real(x) for x in w), format_real(b)]))
    return "\n".join(lines) + "\n"


def parse_network(text: str, source: str = "<network>") -> TwoLayerNet:
    """Parse :func:`format_network` output.

    Raises:
        NetworkFormatError: On a malformed header or neuron line
    """
    header: Dict[str, str] = {}
    rows: List[List[float]] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition(" ")
        if key in _NET_HEADER:
            header[key] = value.strip()
            continue
        try:
            rows.append([float(token) for token in line.split()])
        except ValueError:
            raise NetworkFormatError(f"{source}: cannot parse neuron line {raw!r}") from None

    missing = [key for key in _NET_HEADER if key not in header]
    if missing:
        raise NetworkFormatError(f"{source}: header is missing {', '.join(missing)}")
    try:
        activation = Activation(header["activation"])
        normalization = Normalization(header["normalization"])
        dim, width = int(header["dim"]), int(header["width"])
        offset = float(header["offset"])
    except ValueError as e:
        raise NetworkFormatError(f"{source}: bad header value: {e}") from None
    if len(rows) != width:
        raise NetworkFormatError(f"{source}: header declares {width} neurons, found {len(rows)}")
    if any(len(row) != dim + 2 for row in rows):
        raise NetworkFormatError(f"{source}: every neuron line needs {dim + 2} numbers")

    table = np.array(rows, dtype=float).reshape(width, dim + 2)
    return TwoLayerNet(
        activation=activation,
        outer=table[:, 0],
        inner=table[:, 1 : dim + 1],
        bias=table[:, dim + 1],
        offset=offset,
        normalization=normalization,
    )


def save_network(path: Path, net: TwoLayerNet) -> None:
    write_text(path, format_network(net))


def load_network(path: Path) -> TwoLayerNet:
    return parse_network(read_text(path), source=str(path))


# JSON


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # strict JSON has no inf/nan
        return value if math.isfinite(value) else str(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dumps_json(data: Any) -> str:
    return json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n"


def write_json(path: Path, data: Any) -> None:
    write_text(path, dumps_json(data))
