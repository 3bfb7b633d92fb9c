"""Configuration-driven front end for the verification harness.

Usage: ``biot-iga <config-file> [key=value ...]``

The config file is flat ``key=value`` text, one pair per line, with ``#``
starting a comment; tokens on the command line use the same syntax and take
precedence over the file. Exit status: 0 success, 1 numerical failure,
2 configuration error. Every CSV written starts with a comment line echoing
the full effective configuration, defaulted keys included, so identical
configs produce byte-identical artifacts (single-threaded).
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import MaterialParams
from .geometry import l_shape, quarter_annulus, unit_square
from .harness import (
    TEST_IDS,
    ConvergenceReport,
    _free_dof_counts,
    cantilever_2d,
    cantilever_params,
    convergence_study,
    infsup_sweep,
    refinement_comparison_test6,
    render_report_csv,
    run_single_case,
)
from .quadrature import gauss_legendre
from .spaces import build_mixed_spaces
from .stepping import SchemeSpec

__all__ = ["RunConfig", "parse_config", "main", "main_cli"]


class ConfigError(Exception):
    pass


COMMANDS = ("solve", "convergence", "infsup", "cantilever", "compare6")
SCHEMES = ("backward_euler", "crank_nicolson", "bdf")
GEOMETRIES = ("auto", "unit_square", "quarter_annulus", "l_shape")

# domain each manufactured case lives on
_NATURAL_GEOMETRY = {
    "test1": "quarter_annulus",
    "test2": "l_shape",
    "test3": "l_shape",
    "test5": "unit_square",
    "test6": "unit_square",
}

_MATERIAL_KEYS = ("mu", "lam", "kappa", "alpha", "c0")

_KNOWN_KEYS = (
    "command",
    "test",
    "geometry",
    "p_p",
    "k_p",
    "p_v",
    "k_v",
    "meshes",
    "degrees",
    "scheme",
    "bdf_order",
    "dt",
    "T",
    "quadrature",
    "samples",
    "out",
) + _MATERIAL_KEYS

_DEGREE_KEYS = ("p_p", "k_p", "p_v", "k_v")

# keys each command actually consumes (command/out always allowed)
_ACCEPTED = {
    "solve": ("test", "geometry", "meshes", "scheme", "bdf_order", "dt", "T", "quadrature")
    + _DEGREE_KEYS + _MATERIAL_KEYS,
    "convergence": ("test", "geometry", "meshes", "scheme", "bdf_order", "dt", "T", "quadrature")
    + _DEGREE_KEYS + _MATERIAL_KEYS,
    "infsup": ("geometry", "meshes", "quadrature") + _DEGREE_KEYS,
    "cantilever": ("geometry", "meshes", "dt", "T", "samples", "quadrature") + _MATERIAL_KEYS,
    "compare6": ("test", "geometry", "meshes", "degrees", "quadrature") + _MATERIAL_KEYS,
}


def _parse_int(key, value, minimum):
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"key {key!r} needs an integer, got {value!r}") from None
    if n < minimum:
        raise ConfigError(f"key {key!r} must be >= {minimum}, got {n}")
    return n


def _parse_float(key, value, positive=False):
    try:
        x = float(value)
    except ValueError:
        raise ConfigError(f"key {key!r} needs a number, got {value!r}") from None
    if positive and not x > 0:
        raise ConfigError(f"key {key!r} must be positive, got {value}")
    return x


def _parse_int_list(key, value, minimum):
    items = [s.strip() for s in value.split(",") if s.strip()]
    if not items:
        raise ConfigError(f"key {key!r} needs a non-empty comma list, got {value!r}")
    return [_parse_int(key, s, minimum) for s in items]


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (list, tuple)):
        return ",".join(_fmt(v) for v in x)
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


@dataclass
class RunConfig:
    """Validated effective configuration for one harness invocation."""

    command: str
    test: str
    geometry: str
    degrees: tuple  # (p_p, k_p, p_v, k_v)
    meshes: list
    p_list: list  # compare6 degree sweep
    scheme: SchemeSpec
    dt: float | None  # None means the mesh-coupled policy
    T: float
    params: MaterialParams
    rule: object  # quadrature override or None
    quadrature: str
    samples: int
    out: str
    explicit: set = field(default_factory=set)

    def echo_pairs(self):
        """Ordered (key, value) pairs of every parameter the command uses."""
        d = self.degrees
        common = [("command", self.command)]
        deg = [("p_p", d[0]), ("k_p", d[1]), ("p_v", d[2]), ("k_v", d[3])]
        mat = [
            ("mu", _fmt(self.params.mu)),
            ("lam", "infinite" if self.params.is_incompressible else _fmt(self.params.lam)),
            ("kappa", _fmt(self.params.kappa)),
            ("alpha", _fmt(self.params.alpha)),
            ("c0", _fmt(self.params.c0)),
        ]
        dt = [("dt", "paper" if self.dt is None else _fmt(self.dt))]
        stepping = [("scheme", self.scheme.kind), ("bdf_order", self.scheme.bdf_order)]
        if self.command in ("solve", "convergence"):
            pairs = (
                common
                + [("test", self.test), ("geometry", self.geometry)]
                + deg
                + [("meshes", _fmt(self.meshes))]
                + stepping
                + dt
                + [("T", _fmt(self.T))]
                + mat
                + [("quadrature", self.quadrature)]
            )
        elif self.command == "infsup":
            pairs = (
                common
                + [("geometry", self.geometry)]
                + deg
                + [("meshes", _fmt(self.meshes)), ("quadrature", self.quadrature)]
            )
        elif self.command == "cantilever":
            pairs = (
                common
                + [("geometry", self.geometry), ("meshes", _fmt(self.meshes))]
                + dt
                + [("T", _fmt(self.T))]
                + mat
                + [("samples", self.samples), ("quadrature", self.quadrature)]
            )
        else:  # compare6
            pairs = (
                common
                + [("test", self.test), ("geometry", self.geometry)]
                + [("meshes", _fmt(self.meshes)), ("degrees", _fmt(self.p_list))]
                + mat
                + [("quadrature", self.quadrature)]
            )
        return pairs + [("out", self.out)]

    def echo_line(self) -> str:
        return "# " + " ".join(f"{k}={v}" for k, v in self.echo_pairs())


def _read_config_file(path) -> list:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return pairs


def _override_pairs(tokens) -> list:
    pairs = []
    for tok in tokens:
        if "=" not in tok:
            raise ConfigError(f"override {tok!r} is not of the form key=value")
        k, v = tok.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return pairs


def _check_lbb(p_p, k_p, p_v, k_v):
    if not p_v > k_v >= 0:
        raise ConfigError(f"stability requires p_v > k_v >= 0, got p_v={p_v} k_v={k_v}")
    if not p_p > k_p >= 0:
        raise ConfigError(f"stability requires p_p > k_p >= 0, got p_p={p_p} k_p={k_p}")
    if not p_v - k_v > p_p - k_p:
        raise ConfigError(
            "degree pair rejected: stability requires p_v-k_v > p_p-k_p, "
            f"got p_v-k_v = {p_v - k_v} <= p_p-k_p = {p_p - k_p}"
        )


def parse_config(file_pairs, override_pairs) -> RunConfig:
    """Merge file and override key=value pairs into a validated RunConfig."""
    raw = {}
    explicit = set()
    for k, v in list(file_pairs) + list(override_pairs):
        if k not in _KNOWN_KEYS:
            raise ConfigError(f"unknown key {k!r}")
        raw[k] = v  # later wins: overrides follow the file
        explicit.add(k)

    command = raw.get("command")
    if command is None:
        raise ConfigError("missing required key 'command'")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; use one of {COMMANDS}")
    for k in sorted(explicit):
        if k not in ("command", "out") and k not in _ACCEPTED[command]:
            raise ConfigError(f"key {k!r} is not used by command {command!r}")

    test = raw.get("test", "test6" if command == "compare6" else "test1")
    if test not in TEST_IDS:
        raise ConfigError(f"unknown test {test!r}; use one of {TEST_IDS}")
    if command == "compare6" and test != "test6":
        raise ConfigError("compare6 is defined for test6 only")

    p_p = _parse_int("p_p", raw.get("p_p", "1"), 1)
    k_p = _parse_int("k_p", raw.get("k_p", "0"), 0)
    p_v = _parse_int("p_v", raw.get("p_v", "2"), 1)
    k_v = _parse_int("k_v", raw.get("k_v", "0"), 0)
    _check_lbb(p_p, k_p, p_v, k_v)

    mesh_defaults = {
        "solve": "6",
        "convergence": "6,12",
        "infsup": "2,4,8",
        "cantilever": "16",
        "compare6": "6,12,18",
    }
    meshes = _parse_int_list("meshes", raw.get("meshes", mesh_defaults[command]), 1)
    if command in ("solve", "cantilever") and len(meshes) != 1:
        raise ConfigError(f"{command} takes a single mesh entry, got {_fmt(meshes)}")
    p_list = _parse_int_list("degrees", raw.get("degrees", "2,3,4"), 2)

    scheme_kind = raw.get("scheme", "backward_euler")
    if scheme_kind not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme_kind!r}; use one of {SCHEMES}")
    bdf_order = _parse_int("bdf_order", raw.get("bdf_order", "1"), 1)
    try:
        scheme = SchemeSpec(scheme_kind, bdf_order)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    dt_raw = raw.get("dt", "0.001" if command == "cantilever" else "paper")
    if dt_raw == "paper":
        if command == "cantilever":
            raise ConfigError("cantilever needs an explicit dt (the default is 0.001)")
        dt = None
    else:
        dt = _parse_float("dt", dt_raw, positive=True)
    T = _parse_float("T", raw.get("T", "0.001" if command == "cantilever" else "1"), positive=True)

    base = cantilever_params() if command == "cantilever" else MaterialParams(
        1.0, 1.0e8 if command == "compare6" else 1.0, 1.0,
        1.0, 0.0 if command == "compare6" else 1.0,
    )
    mat = {name: getattr(base, name) for name in _MATERIAL_KEYS}
    if base.is_incompressible:
        mat["lam"] = "infinite"
    for name in _MATERIAL_KEYS:
        if name in explicit:
            v = raw[name]
            mat[name] = v if (name == "lam" and v == "infinite") else _parse_float(name, v)
    try:
        params = MaterialParams(**mat)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    quadrature = raw.get("quadrature", "auto")
    if quadrature == "auto":
        rule = None
    else:
        rule = gauss_legendre(_parse_int("quadrature", quadrature, 1))

    samples = _parse_int("samples", raw.get("samples", "64"), 2)

    geometry = raw.get("geometry", "auto")
    if geometry not in GEOMETRIES:
        raise ConfigError(f"unknown geometry {geometry!r}; use one of {GEOMETRIES}")
    if command == "infsup":
        effective_geometry = "unit_square" if geometry == "auto" else geometry
    else:
        effective_geometry = "quarter_annulus" if command == "cantilever" else _NATURAL_GEOMETRY[test]
        if geometry not in ("auto", effective_geometry):
            raise ConfigError(
                f"command {command!r} with test {test!r} runs on {effective_geometry}, not {geometry}"
            )

    out_defaults = {
        "solve": f"solve_{test}.csv",
        "convergence": f"convergence_{test}.csv",
        "infsup": "infsup.csv",
        "cantilever": "cantilever.csv",
        "compare6": "compare6.csv",
    }
    out = raw.get("out", out_defaults[command])

    return RunConfig(
        command=command,
        test=test,
        geometry=effective_geometry,
        degrees=(p_p, k_p, p_v, k_v),
        meshes=meshes,
        p_list=p_list,
        scheme=scheme,
        dt=dt,
        T=T,
        params=params,
        rule=rule,
        quadrature=quadrature,
        samples=samples,
        out=out,
        explicit=explicit,
    )


def _geometry_object(name):
    if name == "unit_square":
        return unit_square()
    if name == "l_shape":
        return l_shape()
    return quarter_annulus(1.0, 2.0)  # the radii the studies use


def _write_text(path, text):
    try:
        with open(path, "w") as f:
            f.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def _cmd_solve(cfg: RunConfig) -> int:
    row = run_single_case(
        cfg.test, cfg.degrees, cfg.meshes[0], cfg.scheme, cfg.params,
        dt=cfg.dt, T=cfg.T, rule=cfg.rule,
    )
    report = ConvergenceReport(cfg.test, cfg.degrees, cfg.scheme, cfg.params, [row])
    _write_text(cfg.out, cfg.echo_line() + "\n" + render_report_csv(report))
    return sum(row.dofs)


def _cmd_convergence(cfg: RunConfig) -> int:
    report = convergence_study(
        cfg.test, cfg.degrees, cfg.meshes, scheme=cfg.scheme, params=cfg.params,
        rule=cfg.rule, T=cfg.T, dt=cfg.dt,
    )
    _write_text(cfg.out, cfg.echo_line() + "\n" + render_report_csv(report))
    return max(sum(r.dofs) for r in report.rows)


def _cmd_infsup(cfg: RunConfig) -> int:
    p_p, k_p, p_v, k_v = cfg.degrees
    geo = _geometry_object(cfg.geometry)
    rep = infsup_sweep(cfg.meshes, p_p, k_p, p_v, k_v, geo=geo, rule=cfg.rule)
    lines = [cfg.echo_line(), "h,beta_th,beta_div"]
    for h, bt, bd in zip(rep.hs, rep.beta_th, rep.beta_div):
        lines.append(f"{h:.6g},{bt:.6g},{bd:.6g}")
    _write_text(cfg.out, "\n".join(lines) + "\n")
    m = max(cfg.meshes)
    return sum(_free_dof_counts(build_mixed_spaces(2, (m, m), p_p, k_p, p_v, k_v)))


def _cmd_cantilever(cfg: RunConfig) -> int:
    m = cfg.meshes[0]
    P, metrics, final = cantilever_2d(
        params=cfg.params, mesh=(m, m), dt=cfg.dt, T=cfg.T, samples=cfg.samples,
        rule=cfg.rule,
    )
    lines = [
        cfg.echo_line(),
        f"# min={metrics['min']:.6g} max={metrics['max']:.6g}"
        f" max_sign_changes={metrics['max_sign_changes']}",
        "# fluid pressure samples; rows walk direction 2, columns direction 1",
    ]
    for j in range(P.shape[0]):
        lines.append(",".join(f"{v:.6g}" for v in P[j, :]))
    _write_text(cfg.out, "\n".join(lines) + "\n")
    print(
        f"cantilever: min={metrics['min']:.6g} max={metrics['max']:.6g}"
        f" max_sign_changes={metrics['max_sign_changes']}"
    )
    return sum(len(v) for v in (final.u, final.psi, final.w, final.p))


def _cmd_compare6(cfg: RunConfig) -> int:
    curves = refinement_comparison_test6(
        params=cfg.params, h_meshes=tuple(cfg.meshes), p_degrees=tuple(cfg.p_list),
        rule=cfg.rule,
    )
    lines = [cfg.echo_line(), "strategy,dofs,E_u,E_p,E_w,E_psi"]
    peak = 0
    for label in ("h", "p", "k", "ref"):
        for n, e in curves[label]:
            peak = max(peak, n)
            if label == "ref":
                lines.append(f"ref,{n},{e:.6g},,,")
            else:
                lines.append(f"{label},{n}," + ",".join(f"{v:.6g}" for v in e))
    _write_text(cfg.out, "\n".join(lines) + "\n")
    return peak


_DISPATCH = {
    "solve": _cmd_solve,
    "convergence": _cmd_convergence,
    "infsup": _cmd_infsup,
    "cantilever": _cmd_cantilever,
    "compare6": _cmd_compare6,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    if not argv:
        print("usage: biot-iga <config-file> [key=value ...]", file=sys.stderr)
        return 2
    start = time.perf_counter()
    try:
        cfg = parse_config(_read_config_file(argv[0]), _override_pairs(argv[1:]))
        peak = _DISPATCH[cfg.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - start
    print(f"summary: command={cfg.command} wall_time={wall:.2f}s peak_dofs={peak} out={cfg.out}")
    return 0


def main_cli():
    sys.exit(main())


if __name__ == "__main__":
    main_cli()
