"""File-exchange adapter for external electromagnetic solvers.

Each call writes a JSON request (design record plus sweep) into an exchange
directory, runs the configured command, and reads back a one-port reflection
response. The reply may be a two-column CSV (``freq_GHz,S11_dB``, header
optional, ``#`` comments ignored) or a Touchstone v1 ``.s1p`` file in DB, MA
or RI format.

The command is formatted with ``{request}``, ``{reply}`` and ``{workdir}``
placeholders and run without a shell.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .errors import AdapterError, AdapterTimeout, ParseError
from .simulator import HIGH, CostLedger, Response, SweepSpec

DEFAULT_TIMEOUT_S = 600.0

_FREQ_UNITS = {"HZ": 1e-9, "KHZ": 1e-6, "MHZ": 1e-3, "GHZ": 1.0}


@dataclass(frozen=True)
class AdapterConfig:
    command: list
    exchange_dir: str = "exchange"
    timeout_s: float = DEFAULT_TIMEOUT_S
    reply_name: str = "reply.csv"
    env: dict = field(default_factory=dict)

    @classmethod
    def from_record(cls, rec: dict) -> "AdapterConfig":
        cmd = rec.get("command")
        if isinstance(cmd, str):
            cmd = cmd.split()
        if not cmd:
            raise ValueError("adapter command is empty")
        return cls(command=list(cmd), exchange_dir=rec.get("exchange_dir", "exchange"),
                   timeout_s=float(rec.get("timeout_s", DEFAULT_TIMEOUT_S)),
                   reply_name=rec.get("reply_name", "reply.csv"), env=dict(rec.get("env", {})))


def write_request(path: Path, x, sweep: SweepSpec, fidelity: str) -> None:
    req = {
        "design": geometry.design_record(x),
        "sweep": {"f_start_GHz": sweep.f_start, "f_stop_GHz": sweep.f_stop,
                  "n_points": sweep.n_points},
        "fidelity": fidelity,
    }
    path.write_text(json.dumps(req, indent=2))


def _float(token: str, lineno: int, line: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"row {lineno}: cannot parse {line.strip()!r}", line=lineno) from None


def parse_csv(text: str, fidelity: str = HIGH) -> Response:
    """Two-column ``freq_GHz, S11_dB`` reply; a non-numeric first row is a header."""
    freqs, levels = [], []
    first = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cells = [c.strip() for c in line.replace(";", ",").split(",")]
        if first:
            first = False
            try:
                float(cells[0])
            except ValueError:
                continue  # header
        if len(cells) < 2:
            raise ParseError(f"row {lineno}: expected 2 columns, got {len(cells)}", line=lineno)
        freqs.append(_float(cells[0], lineno, raw))
        levels.append(_float(cells[1], lineno, raw))
    if not freqs:
        raise ParseError("reply holds no data rows")
    return Response(np.array(freqs), np.array(levels), fidelity)


def parse_touchstone(text: str, fidelity: str = HIGH) -> Response:
    """One-port Touchstone v1 reply converted to dB magnitude."""
    unit, fmt = "GHZ", "MA"
    freqs, levels = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            opts = line[1:].upper().split()
            for tok in opts:
                if tok in _FREQ_UNITS:
                    unit = tok
                elif tok in ("DB", "MA", "RI"):
                    fmt = tok
            if "S" not in opts and any(t in ("Y", "Z", "H", "G") for t in opts):
                raise ParseError(f"row {lineno}: only S-parameter files are supported",
                                 line=lineno)
            continue
        cells = line.split()
        if len(cells) < 3:
            raise ParseError(f"row {lineno}: expected 3 columns, got {len(cells)}", line=lineno)
        f, a, b = (_float(c, lineno, raw) for c in cells[:3])
        if fmt == "DB":
            level = a
        elif fmt == "MA":
            level = 20 * math.log10(a) if a > 0 else -math.inf
        else:
            mag = math.hypot(a, b)
            level = 20 * math.log10(mag) if mag > 0 else -math.inf
        if not math.isfinite(level):
            raise ParseError(f"row {lineno}: zero magnitude has no dB value", line=lineno)
        freqs.append(f * _FREQ_UNITS[unit])
        levels.append(level)
    if not freqs:
        raise ParseError("Touchstone reply holds no data rows")
    return Response(np.array(freqs), np.array(levels), fidelity)


def parse_reply(path: Path, fidelity: str = HIGH) -> Response:
    text = Path(path).read_text()
    if Path(path).suffix.lower() == ".s1p":
        return parse_touchstone(text, fidelity)
    return parse_csv(text, fidelity)


def run_external(x, sweep: SweepSpec, cfg: AdapterConfig, fidelity: str = HIGH,
                 ledger: CostLedger | None = None, phase: str = "unassigned") -> Response:
    """Simulate ``x`` with the external command; the ledger is charged on success."""
    work = Path(cfg.exchange_dir) / uuid.uuid4().hex[:12]
    work.mkdir(parents=True, exist_ok=True)
    request, reply = work / "request.json", work / cfg.reply_name
    write_request(request, x, sweep, fidelity)
    subs = {"request": str(request), "reply": str(reply), "workdir": str(work)}
    argv = [str(a).format(**subs) for a in cfg.command]
    t0 = time.perf_counter()
    try:
        proc = subprocess.run(argv, cwd=work, capture_output=True, text=True,
                              timeout=cfg.timeout_s, env=_env(cfg.env))
    except subprocess.TimeoutExpired:
        raise AdapterTimeout(f"{argv[0]} exceeded {cfg.timeout_s:g} s") from None
    except OSError as exc:
        raise AdapterError(f"cannot run {argv[0]}: {exc}") from exc
    elapsed = time.perf_counter() - t0
    if proc.returncode != 0:
        raise AdapterError(f"{argv[0]} exited with {proc.returncode}: {proc.stderr.strip()[-500:]}")
    if not reply.exists():
        raise AdapterError(f"{argv[0]} wrote no reply at {reply}")
    r = parse_reply(reply, fidelity)
    r = Response(r.freqs, r.levels, fidelity, elapsed)
    if ledger is not None:
        ledger.record(fidelity, phase, seconds=elapsed)
    return r


def _env(extra: dict):
    if not extra:
        return None
    env = dict(os.environ)
    env.update({k: str(v) for k, v in extra.items()})
    return env


class ExternalSimulator:
    """Pipeline-facing callable; one adapter config per fidelity."""

    name = "external"

    def __init__(self, low: AdapterConfig, high: AdapterConfig | None = None):
        self.configs = {"low": low, "high": high or low}

    def __call__(self, x, sweep: SweepSpec, fidelity: str) -> Response:
        return run_external(x, sweep, self.configs[fidelity], fidelity)
