"""Scenario-driven command line front end.

A scenario is a flat ``key = value`` text document with dotted sections
(``channel.*``, ``invariant.*``, ``time.*``, ``phase.*``, ``sweep.*``,
``output.*``); comments start with ``#``.  ``invphase run FILE`` executes
the pipeline it describes and writes CSV, ``invphase validate FILE`` only
checks it, and ``invphase presets`` prints ready-to-run bundles including
the bit-flip sweep scenarios.

Exit codes: 0 success, 2 malformed or invalid scenario, 3 numerical
failure inside the pipeline.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import (DegenerateFamily, InvPhaseError, ScenarioParseError,
                     ScenarioValidationError, SingularExponent)
from .invariant import (TimeGrid, bitflip_family, dephasing_family, period,
                        spontaneous_emission_family)
from .phase import (cyclic_geometric_phase, dynamical_phase, nonabelian_gp,
                    noncyclic_phase_series, align_basis_path)
from .robustness import SweepScenario, phase_sweep
from .superop import (bit_flip, build_lindblad, dephasing,
                      extract_internal_block, spontaneous_emission)

__all__ = ["Scenario", "parse_scenario", "run_scenario", "main", "PRESETS"]

_CHANNELS = {"dephasing": dephasing,
             "spontaneous_emission": spontaneous_emission,
             "bit_flip": bit_flip}

_KNOWN_KEYS = {
    "channel.kind", "channel.rate", "channel.omega",
    "invariant.family", "invariant.cos_amp", "invariant.sin_amp",
    "invariant.trace", "invariant.skew", "invariant.outer_diag",
    "invariant.outer_coupling", "invariant.diag_offset",
    "invariant.amp_plus", "invariant.amp_minus",
    "time.stop", "time.steps",
    "phase.kind",
    "sweep.parameter", "sweep.start", "sweep.stop", "sweep.step",
    "sweep.values", "sweep.times",
    "output.csv",
}

#: Channel/family pairs whose family is an invariant of the generator.
_VALID_PAIRS = {
    ("dephasing", "dephasing"),
    ("spontaneous_emission", "spontaneous_emission"),
    ("spontaneous_emission", "dephasing"),
    ("bit_flip", "bit_flip"),
}


@dataclass
class Scenario:
    """Validated run description compiled from a scenario document."""

    channel_kind: str
    rate: float | None
    omega: float
    family: str
    family_params: dict
    grid: TimeGrid
    phase_kind: str
    sweep_values: np.ndarray | None
    sweep_times: np.ndarray | None
    output_csv: str | None
    raw_pairs: list = field(default_factory=list)

    def digest(self):
        canon = "\n".join(f"{k} = {v}" for k, v in sorted(self.raw_pairs))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _parse_pairs(text):
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioParseError(f"expected 'key = value': {raw!r}",
                                     line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise ScenarioParseError(f"unknown key {key!r}", line=lineno)
        if not value:
            raise ScenarioParseError(f"empty value for {key!r}", line=lineno)
        if any(k == key for k, _ in pairs):
            raise ScenarioParseError(f"duplicate key {key!r}", line=lineno)
        pairs.append((key, value))
    return pairs


def _get(pairs, key, default=None):
    for k, v in pairs:
        if k == key:
            return v
    return default


def _as_float(pairs, key, default=None):
    value = _get(pairs, key)
    if value is None:
        if default is None:
            raise ScenarioValidationError(f"missing required key {key!r}")
        return default
    try:
        return float(value)
    except ValueError:
        raise ScenarioValidationError(
            f"{key} must be a number, got {value!r}") from None


def _as_time(value, omega, key):
    """Parse 'period', 'N*period' or a float literal."""
    value = value.strip()
    if value == "period":
        return period(omega)
    if value.endswith("*period"):
        head = value[: -len("*period")].strip()
        try:
            return float(head) * period(omega)
        except ValueError:
            pass
    try:
        return float(value)
    except ValueError:
        raise ScenarioValidationError(
            f"{key} must be a number, 'period' or 'N*period', "
            f"got {value!r}") from None


def parse_scenario(text):
    """Parse and validate a scenario document.

    Raises
    ------
    ScenarioParseError
        On malformed lines, unknown or duplicate keys.
    ScenarioValidationError
        When a value violates a pipeline precondition; the message names
        the condition.
    """
    pairs = _parse_pairs(text)

    kind = _get(pairs, "channel.kind")
    if kind not in _CHANNELS:
        raise ScenarioValidationError(
            f"channel.kind must be one of {sorted(_CHANNELS)}, got {kind!r}")
    omega = _as_float(pairs, "channel.omega", 1.0)
    if omega <= 0:
        raise ScenarioValidationError("channel.omega must be positive")

    family = _get(pairs, "invariant.family")
    if family not in {"dephasing", "spontaneous_emission", "bit_flip"}:
        raise ScenarioValidationError(
            f"invariant.family must be a preset family, got {family!r}")
    if (kind, family) not in _VALID_PAIRS:
        raise ScenarioValidationError(
            f"family {family!r} is not an invariant of channel {kind!r}")

    sweeping = _get(pairs, "sweep.parameter") is not None
    rate = None
    rate_text = _get(pairs, "channel.rate")
    if rate_text is not None:
        try:
            rate = float(rate_text)
        except ValueError:
            raise ScenarioValidationError(
                f"channel.rate must be a number, got {rate_text!r}") \
                from None
        if rate < 0:
            raise ScenarioValidationError(
                "channel.rate must be non-negative")

    params = {}
    if family in ("dephasing", "spontaneous_emission"):
        params["cos_amp"] = _as_float(pairs, "invariant.cos_amp")
        params["sin_amp"] = _as_float(pairs, "invariant.sin_amp")
        params["trace"] = _as_float(pairs, "invariant.trace", 0.0)
        params["skew"] = _as_float(pairs, "invariant.skew", 0.0)
        if family == "spontaneous_emission":
            params["outer_diag"] = _as_float(pairs, "invariant.outer_diag",
                                             1.0)
            params["outer_coupling"] = _as_float(
                pairs, "invariant.outer_coupling", 0.0)
        try:
            dephasing_family(params["cos_amp"], params["sin_amp"],
                             params["trace"], params["skew"], omega, steps=8)
        except DegenerateFamily as exc:
            raise ScenarioValidationError(str(exc)) from None
    else:
        params["diag_offset"] = _as_float(pairs, "invariant.diag_offset")
        params["amp_plus"] = _as_float(pairs, "invariant.amp_plus")
        params["amp_minus"] = _as_float(pairs, "invariant.amp_minus")
        if rate is not None and not sweeping:
            try:
                bitflip_family(params["diag_offset"], params["amp_plus"],
                               params["amp_minus"], rate, omega, steps=8)
            except SingularExponent as exc:
                raise ScenarioValidationError(str(exc)) from None

    steps = _get(pairs, "time.steps", "1000")
    try:
        steps = int(steps)
    except ValueError:
        raise ScenarioValidationError("time.steps must be an integer") \
            from None
    if steps < 8 or steps % 4:
        raise ScenarioValidationError(
            "time.steps must be a multiple of 4 and at least 8 "
            "(quadrature plus step-halving check)")
    stop = _as_time(_get(pairs, "time.stop", "period"), omega, "time.stop")
    if stop <= 0:
        raise ScenarioValidationError("time.stop must be positive")
    grid = TimeGrid(0.0, stop, steps)

    phase_kind = _get(pairs, "phase.kind", "cyclic")
    if phase_kind not in {"cyclic", "noncyclic", "nonabelian"}:
        raise ScenarioValidationError(
            f"phase.kind must be cyclic, noncyclic or nonabelian, "
            f"got {phase_kind!r}")

    sweep_values = None
    sweep_times = None
    if sweeping:
        parameter = _get(pairs, "sweep.parameter")
        if parameter != "channel.rate":
            raise ScenarioValidationError(
                "only sweep.parameter = channel.rate is supported")
        listed = _get(pairs, "sweep.values")
        if listed is not None:
            try:
                sweep_values = np.array([float(x) for x in listed.split(",")])
            except ValueError:
                raise ScenarioValidationError(
                    "sweep.values must be a comma-separated list of "
                    "numbers") from None
        else:
            start = _as_float(pairs, "sweep.start")
            stop_v = _as_float(pairs, "sweep.stop")
            step_v = _as_float(pairs, "sweep.step")
            if step_v <= 0 or stop_v < start:
                raise ScenarioValidationError(
                    "sweep range needs step > 0 and stop >= start")
            n = int(np.floor((stop_v - start) / step_v + 1e-9)) + 1
            sweep_values = start + step_v * np.arange(n)
        if np.any(sweep_values < 0):
            raise ScenarioValidationError("sweep rates must be non-negative")
        times_text = _get(pairs, "sweep.times")
        if times_text is not None:
            sweep_times = np.array([_as_time(x, omega, "sweep.times")
                                    for x in times_text.split(",")])
            if np.any(sweep_times > grid.stop + 1e-12):
                raise ScenarioValidationError(
                    "sweep.times must lie inside the time span")
    elif rate is None:
        raise ScenarioValidationError("missing required key 'channel.rate'")

    return Scenario(kind, rate, omega, family, params, grid, phase_kind,
                    sweep_values, sweep_times, _get(pairs, "output.csv"),
                    raw_pairs=pairs)


def _family_factory(scn):
    """gamma -> InvariantTrajectory; ignores gamma unless bit_flip."""
    p = dict(scn.family_params)
    steps = scn.grid.steps

    if scn.family == "dephasing":
        traj = dephasing_family(p["cos_amp"], p["sin_amp"], p["trace"],
                                p["skew"], scn.omega, steps)
        return (lambda gamma: traj), False
    if scn.family == "spontaneous_emission":
        traj = spontaneous_emission_family(
            p["cos_amp"], p["sin_amp"], p["trace"], p["skew"],
            p["outer_diag"], p["outer_coupling"], scn.omega, steps)
        return (lambda gamma: traj), False

    def factory(gamma):
        return bitflip_family(p["diag_offset"], p["amp_plus"],
                              p["amp_minus"], gamma, scn.omega, steps)
    return factory, True


def _generator_factory(scn):
    build = _CHANNELS[scn.channel_kind]
    internal = scn.family == "dephasing"

    def factory(gamma):
        L = build_lindblad(build(gamma, scn.omega))
        return extract_internal_block(L) if internal else L
    return factory


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.16e}"


def _write_csv(path, scn, quantity, header, rows):
    lines = [f"# invphase {__version__} scenario={scn.digest()} "
             f"omega={scn.omega:.17g} units=omega_time quantity={quantity}",
             ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def run_scenario(scn, stream=sys.stderr):
    """Execute a validated scenario and write its CSV output.

    Returns the list of written file paths.
    """
    if scn.output_csv is None:
        raise ScenarioValidationError("missing required key 'output.csv'")
    invariant_of, depends = _family_factory(scn)
    generator_of = _generator_factory(scn)

    if scn.sweep_values is not None:
        sweep = SweepScenario(
            channel=scn.channel_kind,
            generator=generator_of,
            invariant=invariant_of,
            grid=scn.grid,
            phase_kind="cyclic" if scn.phase_kind == "cyclic"
            else "noncyclic",
            eval_times=scn.sweep_times,
            invariant_depends_on_parameter=depends,
        )
        report = phase_sweep(sweep, scn.sweep_values)
        for gamma, err, msg in report.skipped:
            print(f"note: rate {gamma:g} skipped ({err}): {msg}",
                  file=stream)
        rows = []
        for gi, gamma in enumerate(report.parameter_values):
            for ti, t in enumerate(report.eval_times):
                for b, lam in enumerate(report.block_eigenvalues):
                    geo = report.geometric[gi, ti, b]
                    dyn = report.dynamical[gi, ti, b]
                    rows.append((gamma, t, b, lam.real, lam.imag,
                                 geo.real, geo.imag, dyn.real, dyn.imag))
        _write_csv(scn.output_csv, scn, f"{scn.phase_kind}_phase_sweep",
                   ("rate", "t", "block", "eig_re", "eig_im",
                    "geo_re", "geo_im", "dyn_re", "dyn_im"), rows)
        if report.commutator_independent is not None:
            print(f"commutator independent of rate: "
                  f"{report.commutator_independent} "
                  f"(spread {report.commutator_spread:.3e}); "
                  f"geometric phases: {report.verdict_geometric()}, "
                  f"dynamical phases: {report.verdict_dynamical()}",
                  file=stream)
        return [scn.output_csv]

    traj = invariant_of(scn.rate)
    L = generator_of(scn.rate)

    if scn.phase_kind == "cyclic":
        path = align_basis_path(traj, scn.grid)
        dec = cyclic_geometric_phase(traj, scn.grid, path=path)
        dyn = dynamical_phase(traj, L, scn.grid, path=path)
        rows = []
        for b, bp in enumerate(dec.blocks):
            if bp.total_geometric is None:
                continue
            d = dyn.blocks[b].dynamical
            rows.append((b, bp.eigenvalue.real, bp.eigenvalue.imag,
                         bp.total_geometric.real, bp.total_geometric.imag,
                         d.real, d.imag))
        _write_csv(scn.output_csv, scn, "cyclic_phases",
                   ("block", "eig_re", "eig_im", "geo_re", "geo_im",
                    "dyn_re", "dyn_im"), rows)
    elif scn.phase_kind == "noncyclic":
        series = noncyclic_phase_series(traj, scn.grid, L=L)
        rows = []
        for b, g in enumerate(series.blocks):
            if len(g) != 1:
                continue
            j = g[0]
            lam = series.eigenvalues[j]
            for k, t in enumerate(series.times):
                phi = series.phase[k, j]
                W = series.overlap[k, j]
                d = series.dynamical[k, j]
                rows.append((t, b, lam.real, lam.imag, phi.real, phi.imag,
                             W.real, W.imag, d.real, d.imag))
        _write_csv(scn.output_csv, scn, "noncyclic_phase_series",
                   ("t", "block", "eig_re", "eig_im", "phi_re", "phi_im",
                    "overlap_re", "overlap_im", "dyn_re", "dyn_im"), rows)
    else:
        blocks = nonabelian_gp(traj, L, scn.grid)
        rows = []
        for b in sorted(blocks):
            nb = blocks[b]
            n = len(nb.members)
            for i in range(n):
                for j in range(n):
                    rows.append((b, nb.eigenvalue.real, nb.eigenvalue.imag,
                                 n, i, j,
                                 nb.overlap_matrix[i, j].real,
                                 nb.overlap_matrix[i, j].imag,
                                 nb.phase_factor[i, j].real,
                                 nb.phase_factor[i, j].imag,
                                 nb.commutator_norm,
                                 int(nb.factorization_advisory),
                                 int(nb.cyclic)))
        _write_csv(scn.output_csv, scn, "nonabelian_phases",
                   ("block", "eig_re", "eig_im", "degeneracy", "row", "col",
                    "w_re", "w_im", "expphi_re", "expphi_im",
                    "commutator_norm", "advisory", "cyclic"), rows)
    return [scn.output_csv]


PRESETS = {
    "dephasing_cyclic": """\
# Cyclic geometric and dynamical phases under dephasing.
channel.kind = dephasing
channel.rate = 0.5
channel.omega = 1.0
invariant.family = dephasing
invariant.cos_amp = 1.0
invariant.sin_amp = 0.5
invariant.trace = 0.0
invariant.skew = 0.0
time.stop = period
time.steps = 1000
phase.kind = cyclic
output.csv = dephasing_cyclic.csv
""",
    "spontaneous_emission_cyclic": """\
# Same inner invariant embedded for spontaneous emission; the inner-block
# phases coincide with the dephasing ones for every rate.
channel.kind = spontaneous_emission
channel.rate = 0.3
channel.omega = 1.0
invariant.family = spontaneous_emission
invariant.cos_amp = 1.0
invariant.sin_amp = 0.5
invariant.trace = 0.0
invariant.skew = 0.0
invariant.outer_diag = 1.0
invariant.outer_coupling = 0.5
time.stop = period
time.steps = 1000
phase.kind = cyclic
output.csv = spontaneous_emission_cyclic.csv
""",
    "dephasing_rate_sweep": """\
# Robustness sweep: the geometric phases must not move with the rate,
# the dynamical phases must.
channel.kind = dephasing
channel.omega = 1.0
invariant.family = dephasing
invariant.cos_amp = 1.0
invariant.sin_amp = 0.5
invariant.trace = 0.0
invariant.skew = 0.0
time.stop = period
time.steps = 1000
phase.kind = cyclic
sweep.parameter = channel.rate
sweep.values = 0.0, 0.1, 0.5, 1.0
output.csv = dephasing_rate_sweep.csv
""",
    "bitflip_gamma_sweep": """\
# Open-path phase vs bit-flip rate at fixed times (one, two and three
# periods).  The rate axis [0, 1.5] reconstructs the usual plotting range;
# rate = 1 is excluded automatically (family parameterization is singular
# there) and strongly damped points may be refused as numerically
# non-diagonalizable.
channel.kind = bit_flip
channel.omega = 1.0
invariant.family = bit_flip
invariant.diag_offset = 0.7
invariant.amp_plus = -0.5
invariant.amp_minus = 1.0
time.stop = 3*period
time.steps = 3000
phase.kind = noncyclic
sweep.parameter = channel.rate
sweep.start = 0.0
sweep.stop = 1.5
sweep.step = 0.05
sweep.times = period, 2*period, 3*period
output.csv = bitflip_gamma_sweep.csv
""",
    "bitflip_time_series": """\
# Open-path phase vs time at fixed bit-flip rate 0.1: the imaginary part
# is a staircase whose jumps sit where the overlap crosses the negative
# real axis.
channel.kind = bit_flip
channel.rate = 0.1
channel.omega = 1.0
invariant.family = bit_flip
invariant.diag_offset = 0.7
invariant.amp_plus = -0.5
invariant.amp_minus = 1.0
time.stop = 3*period
time.steps = 3000
phase.kind = noncyclic
output.csv = bitflip_time_series.csv
""",
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="invphase",
        description="Geometric phases of open two-level systems via "
                    "dynamical invariants")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("scenario", help="path to the scenario document")
    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario", help="path to the scenario document")
    p_pre = sub.add_parser("presets", help="print built-in scenarios")
    p_pre.add_argument("-n", "--name", choices=sorted(PRESETS),
                       help="print a single preset document")

    args = parser.parse_args(argv)

    if args.command == "presets":
        if args.name:
            print(PRESETS[args.name], end="")
        else:
            for name, text in PRESETS.items():
                print(f"### {name}\n{text}")
        return 0

    try:
        with open(args.scenario, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 2

    try:
        scn = parse_scenario(text)
    except (ScenarioParseError, ScenarioValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print(f"scenario ok (digest {scn.digest()})")
        return 0

    try:
        written = run_scenario(scn)
    except (ScenarioParseError, ScenarioValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvPhaseError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
