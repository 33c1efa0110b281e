"""Bundled parameter sets."""
from __future__ import annotations

import json
import math
from importlib import resources

from .engine import Protocol, RelayLink, Scenario
from .fading import EgkParams


def _hop(d):
    n = d["n"]
    n = math.inf if isinstance(n, str) else float(n)
    return EgkParams(float(d["m"]), float(d["xi"]), n, float(d["zeta"]), float(d["omega"]))


def table1_links(L: int = 4):
    """First ``L`` relay links of the bundled four-relay EGK table."""
    doc = json.loads(resources.files("ssirelay").joinpath("data/table1.json").read_text("utf-8"))
    rows = doc["relays"]
    if not 1 <= L <= len(rows):
        raise ValueError(f"L must be in 1..{len(rows)}")
    return tuple(RelayLink(_hop(r["hop1"]), _hop(r["hop2"])) for r in rows[:L])


def table1_scenario(protocol=Protocol.SSI, snr_db: float = 0.0, L: int = 4) -> Scenario:
    return Scenario(table1_links(L), Protocol(protocol), snr_db)
