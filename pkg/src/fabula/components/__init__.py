"""Standard component library: actor-side and GM-side building blocks.

Importing this package registers every built-in component type with the
kernel registry, so entities can be assembled from (type id, params)
pairs in prefabs and scenario documents.
"""

from __future__ import annotations

from ..kernel import register_component
from . import actor, gm

_BUILTINS = {
    "persona": actor.Persona,
    "observation_buffer": actor.ObservationBuffer,
    "memory": actor.AssociativeMemory,
    "self_reflection": actor.SelfReflection,
    "plan": actor.Plan,
    "lm_acting": actor.LmActing,
    "human_acting": actor.HumanActing,
    "rational_acting": actor.RationalActing,
    "event_resolver": gm.EventResolver,
    "world_state": gm.WorldState,
    "next_acting": gm.NextActing,
    "observation_dispatcher": gm.ObservationDispatcher,
    "terminator": gm.Terminator,
    "narrative_director": gm.NarrativeDirector,
    "scheduler": gm.Scheduler,
    "rubric_scorer": gm.RubricScorer,
}

for _type_id, _cls in _BUILTINS.items():
    register_component(_type_id, _cls)
