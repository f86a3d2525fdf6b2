"""Config files, CSV tables and metadata sidecars.

Config files are flat ``key = value`` INI text: a ``[params]`` section plus
one section per experiment kind. Every CSV echoes its parameters as leading
``#`` comment lines, and a ``<name>.meta`` sidecar carries the full config.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from . import __version__
from .harness import AXES, CriticalFraction, SweepCurve, ThresholdReport
from .model import InvalidParam, Params, RunResult
from .network import SocialGraph

FORMAT_VERSION = 1
KINDS = ("fraction-sweep", "adaptive-run", "critical-fraction", "param-sweep")

# option name -> (type, default); "floats" is a comma-separated list or empty
_OPTIONS: dict[str, dict[str, tuple[str, Any]]] = {
    "fraction-sweep": {
        "replicas": ("int", 20),
        "rescale": ("bool", False),
        "grid": ("floats", None),
    },
    "adaptive-run": {
        "initial_taxpayers": ("float", 0.6),
        "initial_mixed": ("float", 0.0),
        "turns": ("int", 2000),
        "topology": ("str", "small_world"),
    },
    "critical-fraction": {
        "replicas": ("int", 20),
        "grid": ("floats", None),
        "turns": ("int", 2000),
        "resolution": ("float", 0.005),
    },
    "param-sweep": {
        "axis": ("str", "penalty_h"),
        "grid": ("floats", None),
        "initial_taxpayers": ("float", 0.6),
        "initial_mixed": ("float", 0.0),
        "replicas": ("int", 20),
        "turns": ("int", 2000),
    },
}
_COMMON = {"output_dir": ("str", "out"), "name": ("str", "")}


def _parse(kind: str, key: str, text: str) -> Any:
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind == "floats":
            if text in ("", "none"):
                return None
            return [float(x) for x in text.replace(",", " ").split()]
        return text
    except ValueError:
        raise InvalidParam(key, text, f"a value of type {kind}") from None


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    kind: str
    params: Params = field(default_factory=Params)
    options: dict[str, Any] = field(default_factory=dict)
    output_dir: str = "out"
    name: str = ""
    seed_given: bool = True

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidParam("kind", self.kind, f"one of {KINDS}")
        spec = _OPTIONS[self.kind]
        unknown = sorted(set(self.options) - set(spec))
        if unknown:
            raise InvalidParam(unknown[0], self.options[unknown[0]], f"a known {self.kind} option")
        self.options = {k: self.options.get(k, default) for k, (_, default) in spec.items()}
        if self.kind == "param-sweep" and self.options["axis"] not in AXES:
            raise InvalidParam("axis", self.options["axis"], f"one of {AXES}")
        if not self.name:
            self.name = self.kind

    @property
    def master_seed(self) -> int:
        return self.params.seed

    @property
    def initial_fractions(self) -> tuple[float, float, float]:
        t = self.options["initial_taxpayers"]
        m = self.options["initial_mixed"]
        return (t, 1.0 - t - m, m)

    def to_text(self) -> str:
        lines = ["[params]"]
        lines += [f"{k} = {_format(v)}" for k, v in self.params.to_dict().items()]
        lines += ["", f"[{self.kind}]"]
        lines += [f"{k} = {_format(v)}" for k, v in self.options.items()]
        lines += [f"output_dir = {self.output_dir}", f"name = {self.name}"]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _reader() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (imitation_factor_IF)
    return cp


def parse_config(text: str, kind: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Build the ``kind`` experiment from config text plus ``key=value`` overrides.

    Sections for other experiment kinds are allowed and ignored; any unknown
    key or unknown section is an error.
    """
    cp = _reader()
    cp.read_string(text)
    for section in cp.sections():
        if section not in ("params", "meta") and section not in KINDS:
            raise InvalidParam("section", section, f"[params] or one of {KINDS}")
    raw_params = dict(cp["params"]) if cp.has_section("params") else {}
    raw_opts = dict(cp[kind]) if cp.has_section(kind) else {}

    param_names = set(Params().to_dict())
    for section in cp.sections():
        if section in KINDS:
            allowed = {**_OPTIONS[section], **_COMMON}
            for key, value in cp[section].items():
                if key not in allowed:
                    raise InvalidParam(key, value, f"a known [{section}] option")
    opt_spec = {**_OPTIONS[kind], **_COMMON}
    for key, value in (overrides or {}).items():
        if key in param_names:
            raw_params[key] = value
        elif key in opt_spec:
            raw_opts[key] = value
        else:
            raise InvalidParam(key, value, "a known parameter or option")

    seed_given = "seed" in raw_params
    params = Params.from_dict(raw_params)
    opts = {k: _parse(opt_spec[k][0], k, v) for k, v in raw_opts.items()}
    output_dir = opts.pop("output_dir", "out")
    name = opts.pop("name", "")
    return ExperimentConfig(kind, params, opts, output_dir, name, seed_given)


def load_config(path: str | os.PathLike | None, kind: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    text = Path(path).read_text() if path else ""
    return parse_config(text, kind, overrides)


# ---------------------------------------------------------------- tables


def fmt_number(x: Any) -> str:
    """Nine significant digits; missing values become the empty field."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    if x == 0.0:
        return "0"
    return format(x, ".9g")


def _header_lines(config: ExperimentConfig, subcommand: str) -> list[str]:
    lines = [
        f"# format_version = {FORMAT_VERSION}",
        f"# subcommand = {subcommand}",
        f"# seed = {config.master_seed}",
    ]
    lines += [f"# {k} = {_format(v)}" for k, v in config.params.to_dict().items()]
    return lines


def _table(columns: list[str], rows: Iterable[Iterable[Any]]) -> list[str]:
    out = [",".join(columns)]
    out += [",".join(fmt_number(v) for v in row) for row in rows]
    return out


def fraction_sweep_table(curve: SweepCurve, report: ThresholdReport | None = None) -> list[str]:
    cols = ["f", "mean_C_all", "sd_C_all", "mean_C_taxpayers", "sd_C_taxpayers", "mean_C_evaders", "sd_C_evaders", "n_replicas"]
    rows = []
    for k, f in enumerate(curve.grid):
        rows.append(
            [
                f,
                curve.mean["avg_capital_all"][k],
                curve.sd["avg_capital_all"][k],
                curve.mean["avg_capital_taxpayers"][k],
                curve.sd["avg_capital_taxpayers"][k],
                curve.mean["avg_capital_evaders"][k],
                curve.sd["avg_capital_evaders"][k],
                curve.n_replicas,
            ]
        )
    lines = _table(cols, rows)
    if report is not None:
        lines += threshold_footer(report)
    return lines


def threshold_footer(report: ThresholdReport) -> list[str]:
    """``#threshold name,value,half_width``; both fields empty if no crossing."""
    out = []
    for name, th in report.items():
        if th is None:
            out.append(f"#threshold {name},,")
        else:
            out.append(f"#threshold {name},{fmt_number(th.value)},{fmt_number(th.half_width)}")
    return out


def run_table(result: RunResult) -> list[str]:
    data = result.as_array()
    return _table(["t", *RunResult.COLUMNS], ([t, *row] for t, row in enumerate(data)))


def critical_table(crit: CriticalFraction) -> list[str]:
    cols = ["f", "n_good", "n_majority", "n_evader_majority", "n_growth", "n_replicas", "good"]
    lines = _table(cols, ([r[c] for c in cols] for r in crit.table))
    lines.append(f"#threshold critical,{fmt_number(crit.value)},{fmt_number(crit.half_width)}")
    lines.append(f"#flips {crit.flips}")
    return lines


_SHORT = {
    "fraction_taxpayers": "frac_taxpayers",
    "fraction_evaders": "frac_evaders",
    "fraction_mixed": "frac_mixed",
    "avg_capital_all": "C_all",
    "avg_capital_taxpayers": "C_taxpayers",
    "avg_capital_evaders": "C_evaders",
    "avg_capital_mixed": "C_mixed",
}


def param_sweep_table(curve: SweepCurve) -> list[str]:
    cols = [curve.swept_variable]
    for m in RunResult.COLUMNS:
        cols += [f"mean_{_SHORT[m]}", f"sd_{_SHORT[m]}"]
    cols.append("n_replicas")
    rows = []
    for k, v in enumerate(curve.grid):
        row = [v]
        for m in RunResult.COLUMNS:
            row += [curve.mean[m][k], curve.sd[m][k]]
        row.append(curve.n_replicas)
        rows.append(row)
    lines = _table(cols, rows)
    lines += [f"#skipped {fmt_number(v)},{reason}" for v, reason in curve.skipped]
    return lines


def meta_text(config: ExperimentConfig, subcommand: str, extra: dict[str, Any] | None = None) -> str:
    lines = [
        "[meta]",
        f"format_version = {FORMAT_VERSION}",
        f"subcommand = {subcommand}",
        f"config_hash = {config.config_hash()}",
        f"seed = {config.master_seed}",
        f"code_version = {__version__}",
    ]
    lines += [f"{k} = {_format(v)}" for k, v in (extra or {}).items()]
    return "\n".join(lines) + "\n\n" + config.to_text()


def edge_list_text(graph: SocialGraph) -> str:
    return "".join(f"{u} {v}\n" for u, v in graph.edges())


def write_outputs(directory: str | os.PathLike, files: dict[str, str]) -> list[Path]:
    """Write every ``name -> text`` file atomically, or none of them.

    All contents go to temporary files first; only when every write succeeded
    are they renamed into place. If a rename fails, the files already moved
    are removed again.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    staged: list[tuple[str, Path]] = []
    renamed: list[Path] = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{name}.", suffix=".tmp")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, directory / name))
        for tmp, final in staged:
            os.replace(tmp, final)
            renamed.append(final)
    except OSError as exc:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        for final in renamed:
            final.unlink(missing_ok=True)
        raise OSError(f"cannot write outputs in {directory}: {exc}") from exc
    return [final for _, final in staged]


def csv_text(config: ExperimentConfig, subcommand: str, body: list[str]) -> str:
    return "\n".join(_header_lines(config, subcommand) + body) + "\n"


def write_curve_csv(
    data: SweepCurve | RunResult | CriticalFraction,
    path: str | os.PathLike,
    config: ExperimentConfig,
    subcommand: str,
    report: ThresholdReport | None = None,
) -> Path:
    """Write ``data`` as CSV at ``path`` plus the sibling ``.meta`` file."""
    if isinstance(data, RunResult):
        body = run_table(data)
    elif isinstance(data, CriticalFraction):
        body = critical_table(data)
    elif data.swept_variable == "f":
        body = fraction_sweep_table(data, report)
    else:
        body = param_sweep_table(data)
    path = Path(path)
    write_outputs(
        path.parent,
        {path.name: csv_text(config, subcommand, body), path.stem + ".meta": meta_text(config, subcommand)},
    )
    return path


def read_csv(path: str | os.PathLike) -> tuple[list[str], np.ndarray, list[str]]:
    """(columns, data with NaN for empty fields, ``#`` comment lines)."""
    comments, rows, cols = [], [], None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            comments.append(line)
        elif cols is None:
            cols = line.split(",")
        elif line:
            rows.append([float(x) if x else np.nan for x in line.split(",")])
    return cols or [], np.array(rows, dtype=float), comments


def config_template(kind: str | None = None) -> str:
    """Commented default config covering every experiment kind."""
    buf = io.StringIO()
    buf.write("[params]\n")
    for k, v in Params().to_dict().items():
        buf.write(f"{k} = {_format(v)}\n")
    for kname in KINDS if kind is None else (kind,):
        buf.write(f"\n[{kname}]\n")
        for k, (_, default) in _OPTIONS[kname].items():
            buf.write(f"{k} = {_format(default)}\n")
    return buf.getvalue()
