"""Read and write LAS 2.0 (unwrapped) and CSV well-log files."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError, UnknownCurveError
from .well_data import CANONICAL_UNITS, DEPTH, LogCurve, WellDataset

DEFAULT_NULL = -999.25


def fmt_float(x):
    """17 significant digits: enough for an exact round trip."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class HeaderItem:
    mnemonic: str
    unit: str = ""
    value: str = ""
    description: str = ""

    def render(self):
        return f"{self.mnemonic}.{self.unit} {self.value} : {self.description}".rstrip()


@dataclass(frozen=True, eq=False)
class LasFile:
    """An unwrapped LAS 2.0 document.

    ``data_rows`` holds raw values; cells equal to ``null_value`` (or
    non-finite) are the masked samples. Sections other than V/W/C/A are kept
    verbatim in ``other_sections`` as ``(header_line, body_lines)``.
    """

    version: str = "2.0"
    wrap: bool = False
    well_info: tuple = ()
    curve_info: tuple = ()
    null_value: float = DEFAULT_NULL
    data_rows: np.ndarray = None
    other_sections: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "well_info", tuple(self.well_info))
        object.__setattr__(self, "curve_info", tuple(self.curve_info))
        object.__setattr__(self, "other_sections", tuple((h, tuple(b)) for h, b in self.other_sections))
        k = len(self.curve_info)
        rows = np.zeros((0, k)) if self.data_rows is None else np.array(self.data_rows, dtype=np.float64)
        if rows.ndim == 1 and rows.size == 0:
            rows = rows.reshape(0, k)
        if rows.ndim != 2 or rows.shape[1] != k:
            raise DataError("data row arity", f"{k} curves but data shape {rows.shape}")
        if k == 0:
            raise DataError("no curves", "the first curve must be the depth index")
        for item in self.well_info + self.curve_info:
            for ch in ".: \t\n":
                if ch in item.mnemonic:
                    raise DataError("invalid mnemonic", repr(item.mnemonic))
        nulls = [it for it in self.well_info if it.mnemonic.upper() == "NULL"]
        declared = float(nulls[0].value) if nulls else DEFAULT_NULL
        if declared != self.null_value:
            raise DataError("null value mismatch", f"~W NULL is {declared}, null_value is {self.null_value}")
        rows.setflags(write=False)
        object.__setattr__(self, "data_rows", rows)

    def __eq__(self, other):
        if not isinstance(other, LasFile):
            return NotImplemented
        return (
            self.version == other.version
            and self.wrap == other.wrap
            and self.well_info == other.well_info
            and self.curve_info == other.curve_info
            and self.null_value == other.null_value
            and self.other_sections == other.other_sections
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.data_rows[~self.mask], other.data_rows[~other.mask])
        )

    @property
    def mask(self):
        return (self.data_rows == self.null_value) | ~np.isfinite(self.data_rows)

    @property
    def curve_mnemonics(self):
        return tuple(c.mnemonic for c in self.curve_info)


def _parse_header_line(line, lineno):
    dot = line.find(".")
    if dot < 0:
        raise ParseError("malformed header line", "expected MNEM.UNIT DATA : DESCRIPTION", line=lineno)
    mnem = line[:dot].strip()
    rest = line[dot + 1 :]
    # the unit runs from the dot to the first whitespace
    end = 0
    while end < len(rest) and not rest[end].isspace() and rest[end] != ":":
        end += 1
    unit = rest[:end]
    rest = rest[end:]
    colon = rest.find(":")
    if colon < 0:
        value, desc = rest.strip(), ""
    else:
        value, desc = rest[:colon].strip(), rest[colon + 1 :].strip()
    if not mnem:
        raise ParseError("malformed header line", "empty mnemonic", line=lineno)
    return HeaderItem(mnem, unit, value, desc)


def parse_las(text):
    sections = {}
    other = []
    current = None
    data_lines = None
    version_lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("~"):
            key = stripped[1:2].upper()
            if key == "A":
                current = "A"
                data_lines = []
            elif key in "VWC" and key:
                current = key
                sections.setdefault(key, [])
            else:
                current = "O"
                other.append((stripped, []))
            continue
        if current is None:
            raise ParseError("content before first section", line=lineno)
        if current == "A":
            data_lines.append((lineno, stripped))
        elif current == "O":
            other[-1][1].append(line)
        else:
            item = _parse_header_line(stripped, lineno)
            sections[current].append(item)
            if current == "V":
                version_lines[item.mnemonic.upper()] = lineno

    version_items = {it.mnemonic.upper(): it for it in sections.get("V", [])}
    version = version_items["VERS"].value if "VERS" in version_items else "2.0"
    try:
        vnum = float(version.split()[0]) if version else 2.0
    except ValueError:
        raise ParseError("unsupported LAS version", version, line=version_lines["VERS"]) from None
    if vnum >= 3.0:
        raise ParseError("unsupported LAS version", f"LAS {version} is not supported", line=version_lines["VERS"])
    wrap_val = version_items["WRAP"].value.upper() if "WRAP" in version_items else "NO"
    if wrap_val.startswith("Y"):
        raise ParseError("wrapped LAS unsupported", line=version_lines["WRAP"])
    if data_lines is None:
        raise ParseError("no data section")

    well_info = tuple(sections.get("W", []))
    nulls = [it for it in well_info if it.mnemonic.upper() == "NULL"]
    null_value = DEFAULT_NULL
    if nulls:
        try:
            null_value = float(nulls[0].value)
        except ValueError:
            raise ParseError("invalid NULL value", nulls[0].value) from None
    curve_info = tuple(sections.get("C", []))
    k = len(curve_info)
    if k == 0:
        raise ParseError("no curve section")
    rows = np.empty((len(data_lines), k))
    for i, (lineno, s) in enumerate(data_lines):
        tokens = s.split()
        if len(tokens) != k:
            raise ParseError("data row arity", f"{len(tokens)} values for {k} curves", line=lineno)
        try:
            rows[i] = [float(t) for t in tokens]
        except ValueError as exc:
            raise ParseError("parse error", str(exc), line=lineno) from None
    return LasFile(version, False, well_info, curve_info, null_value, rows, tuple(other))


def write_las(las):
    out = ["~VERSION INFORMATION"]
    out.append(HeaderItem("VERS", "", las.version, "CWLS LOG ASCII STANDARD").render())
    out.append(HeaderItem("WRAP", "", "NO", "ONE LINE PER DEPTH STEP").render())
    out.append("~WELL INFORMATION")
    out.extend(it.render() for it in las.well_info)
    out.append("~CURVE INFORMATION")
    out.extend(it.render() for it in las.curve_info)
    for header, body in las.other_sections:
        out.append(header)
        out.extend(body)
    out.append("~A  " + " ".join(las.curve_mnemonics))
    rows = np.where(las.mask, las.null_value, las.data_rows)
    for row in rows:
        out.append(" ".join(fmt_float(v) for v in row))
    return "\n".join(out) + "\n"


def to_dataset(las, mnemonic_map=None):
    """Build a dataset from the LAS curves selected by ``mnemonic_map``.

    The map goes from LAS mnemonic to canonical mnemonic. ``None`` keeps
    every curve under its own name. The first curve is always the depth.
    """
    names = las.curve_mnemonics
    if mnemonic_map is None:
        mnemonic_map = {m: m for m in names[1:]}
    depth = las.data_rows[:, 0]
    if np.any(las.mask[:, 0]):
        raise DataError("invalid depth", "null value in the depth curve")
    curves = []
    for src, dst in mnemonic_map.items():
        if src not in names:
            raise UnknownCurveError(src)
        j = names.index(src)
        unit = las.curve_info[j].unit
        curves.append(LogCurve(dst, unit, las.data_rows[:, j], las.mask[:, j]))
    return WellDataset(depth, tuple(curves))


def from_dataset(dataset, well_name="SYNTHETIC", null_value=DEFAULT_NULL):
    """Wrap a dataset as a LAS file, depth first."""
    well_info = (
        HeaderItem("STRT", CANONICAL_UNITS[DEPTH], fmt_float(dataset.depth[0]) if dataset.row_count else "", "START DEPTH"),
        HeaderItem("STOP", CANONICAL_UNITS[DEPTH], fmt_float(dataset.depth[-1]) if dataset.row_count else "", "STOP DEPTH"),
        HeaderItem("NULL", "", fmt_float(null_value), "NULL VALUE"),
        HeaderItem("WELL", "", well_name, "WELL"),
    )
    curve_info = (HeaderItem("DEPT", CANONICAL_UNITS[DEPTH], "", "DEPTH"),) + tuple(
        HeaderItem(c.mnemonic, c.unit, "", c.mnemonic) for c in dataset.curves
    )
    cols = [dataset.depth] + [np.where(c.null_mask, null_value, c.samples) for c in dataset.curves]
    return LasFile("2.0", False, well_info, curve_info, null_value, np.column_stack(cols))


@dataclass(frozen=True)
class CsvSchema:
    """``column_map`` maps header text to mnemonic; ``None`` keeps every
    header as-is. The column mapped to ``depth_mnemonic`` is the depth."""

    delimiter: str = ","
    column_map: dict = None
    missing_token: str = ""
    depth_mnemonic: str = DEPTH

    def __post_init__(self):
        if len(self.delimiter) != 1:
            raise DataError("invalid schema", "delimiter must be a single character")
        if self.column_map is not None:
            targets = set(self.column_map.values())
            if self.depth_mnemonic not in targets or len(targets) < 2:
                raise DataError("invalid schema", "column_map must cover depth plus one curve")


class DepthReorderedWarning(UserWarning):
    """CSV rows were not in increasing depth order and have been sorted."""


def parse_csv(text, schema=None):
    """Parse delimited text into a dataset.

    Rows out of depth order are sorted (with a :class:`DepthReorderedWarning`);
    repeated depths are rejected.
    """
    schema = schema or CsvSchema()
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header", line=1)
    if '"' in text or "'" in text:
        raise ParseError("quoted fields unsupported")
    header = [h.strip() for h in lines[0].split(schema.delimiter)]
    if len(set(header)) != len(header):
        raise ParseError("duplicate column", line=1)
    cmap = schema.column_map if schema.column_map is not None else {h: h for h in header}
    for h in cmap:
        if h not in header:
            raise ParseError("missing column", h, line=1)
    if schema.column_map is None and schema.depth_mnemonic not in header:
        raise ParseError("missing column", schema.depth_mnemonic, line=1)
    selected = [(header.index(h), m) for h, m in cmap.items()]
    if len({m for _, m in selected}) != len(selected):
        raise DataError("duplicate mnemonic", "two columns map to the same mnemonic")
    depth_col = next(j for j, m in selected if m == schema.depth_mnemonic)
    curve_cols = [(j, m) for j, m in selected if m != schema.depth_mnemonic]
    if not curve_cols:
        raise ParseError("missing column", "no curve columns", line=1)

    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    data = np.empty((len(body), len(header)))
    mask = np.zeros((len(body), len(header)), dtype=bool)
    for r, (lineno, ln) in enumerate(body):
        cells = [c.strip() for c in ln.split(schema.delimiter)]
        if len(cells) != len(header):
            raise ParseError("parse error", f"{len(cells)} cells for {len(header)} columns", line=lineno)
        for j, _ in selected:
            cell = cells[j]
            if cell == schema.missing_token:
                mask[r, j] = True
                data[r, j] = np.nan
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError("parse error", f"non-numeric cell {cell!r}", line=lineno, column=j + 1) from None
            if not np.isfinite(v):
                raise ParseError("parse error", f"non-finite cell {cell!r}", line=lineno, column=j + 1)
            data[r, j] = v
    if np.any(mask[:, depth_col]):
        bad = int(np.flatnonzero(mask[:, depth_col])[0])
        raise ParseError("parse error", "missing depth", line=body[bad][0], column=depth_col + 1)
    depth = data[:, depth_col]
    order = np.argsort(depth, kind="stable")
    if depth.size > 1 and np.any(np.diff(depth[order]) == 0):
        raise ParseError("non-monotonic depth", "duplicate depth values")
    if depth.size > 1 and np.any(np.diff(depth) <= 0):
        warnings.warn("rows sorted by depth", DepthReorderedWarning, stacklevel=2)
        data, mask = data[order], mask[order]
    curves = tuple(
        LogCurve(m, CANONICAL_UNITS.get(m, ""), np.where(mask[:, j], 0.0, data[:, j]), mask[:, j]) for j, m in curve_cols
    )
    return WellDataset(data[:, depth_col], curves)


def write_csv(dataset, delimiter=",", missing_token=""):
    cols = [DEPTH] + list(dataset.mnemonics)
    out = [delimiter.join(cols)]
    curves = dataset.curves
    for i in range(dataset.row_count):
        cells = [fmt_float(dataset.depth[i])]
        for c in curves:
            cells.append(missing_token if c.null_mask[i] else fmt_float(c.samples[i]))
        out.append(delimiter.join(cells))
    return "\n".join(out) + "\n"


def read_dataset(path, mnemonic_map=None):
    """Load a dataset from a ``.las`` or delimited text file by extension."""
    with open(path) as fh:
        text = fh.read()
    if str(path).lower().endswith(".las"):
        return to_dataset(parse_las(text), mnemonic_map)
    schema = CsvSchema()
    if mnemonic_map:
        header = [h.strip() for h in text.splitlines()[0].split(",")] if text else []
        cmap = {h: mnemonic_map.get(h, h) for h in header}
        schema = CsvSchema(column_map=cmap)
    return parse_csv(text, schema)
