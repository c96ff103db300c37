"""The two reference tree sweeps: the binary law (alpha = 2) and CanonicalStable(1.5).

Each tree carries every per-tree observable at once (exit times, exact
expected exit times, path checkpoints, return probabilities and, for the
binary law, the backbone profile), so one pass over the replicas feeds all
exponent and tightness summaries.
"""

from __future__ import annotations

import logging
import time

from .offspring import CanonicalStable, FiniteSupport, OffspringLaw
from .sweeps import TreeRecord, TreeSweep, tree_replica

log = logging.getLogger(__name__)

BINARY = FiniteSupport({0: 0.5, 2: 0.5})
STABLE = CanonicalStable(1.5, 2 / 3)

SCALES = {
    "binary": {
        "exit": [8, 16, 32, 64, 128],
        "returns": [64, 128, 256, 512, 1024],
        "path": [2**k for k in range(8, 15)],
        "backbone_m": 256,
        "backbone_r": list(range(41)),
    },
    "stable": {
        "exit": [8, 16, 32, 64],
        "returns": [16, 32, 64, 128, 256],
        "path": [2**k for k in range(10, 19, 2)],
        "backbone_m": 0,
        "backbone_r": [],
    },
}


def law_of(name: str) -> OffspringLaw:
    return {"binary": BINARY, "stable": STABLE}[name]


def reference_sweep(name: str, master: int, walks: int = 20, mc_walks: int = 2000) -> TreeSweep:
    s = SCALES[name]
    return TreeSweep(
        law_of(name), master,
        exit_radii=s["exit"], exit_walks=walks,
        checkpoints=s["path"], path_walks=walks,
        return_m=s["returns"], return_rel_tol=1e-6, mc_walks=mc_walks,
        backbone_m=s["backbone_m"], backbone_r=s["backbone_r"],
    )


def run_reference(name: str, master: int, trees: int, walks: int = 20, mc_walks: int = 2000) -> list[TreeRecord]:
    sweep = reference_sweep(name, master, walks, mc_walks)
    out = []
    start = time.monotonic()
    for r in range(trees):
        out.append(tree_replica(sweep, r))
        if (r + 1) % 20 == 0:
            log.info("%s sweep: %d/%d trees, %.0f s", name, r + 1, trees, time.monotonic() - start)
    return out
