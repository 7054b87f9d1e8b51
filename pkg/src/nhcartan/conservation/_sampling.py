from __future__ import annotations

from typing import Sequence

from ..constraint import ConstrainedSystem
from ..geometry import TangentState

DEFAULT_COUNT = 256
DEFAULT_SEED = 42


def resolve_samples(system: ConstrainedSystem, samples: Sequence[TangentState] | None,
                    count: int = DEFAULT_COUNT, seed: int = DEFAULT_SEED,
                    on_constraint: bool = True) -> tuple[list[TangentState], dict]:
    """Use the given states, or draw the seeded low-discrepancy set."""
    if samples is not None:
        states = list(samples)
        prov = {"source": "given", "count": len(states)}
    else:
        states = system.sample_states(count, seed, on_constraint=on_constraint)
        prov = {"source": "halton", "count": count, "seed": seed,
                "velocity_bound": system.velocity_bound}
    if not states:
        raise ValueError("no sample states available")
    return states, prov
