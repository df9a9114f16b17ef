"""Generative multi-actor simulation engine with a component-based Game Master.

Entities are boxes of components; a Game Master entity resolves attempted
actions into events under one of three scheduling engines. Deterministic
providers, seed splitting, and canonical JSON traces make every run
byte-reproducible.
"""

from __future__ import annotations

from . import components  # registers built-in component types
from .canonical import canonical_json, fnv1a64, sha256_hex, split_seed
from .engines import EngineKind, RunConfig, RunResult, Simulation, StepRecord, WakeQueue
from .errors import (
    ActingFailure,
    BuildError,
    CassetteMiss,
    ChannelClosed,
    ComponentFailure,
    DependencyMissing,
    DuplicateComponentName,
    DuplicatePrefabName,
    FabulaError,
    InvalidSchema,
    MissingGmComponent,
    MultipleActingComponents,
    NoActingComponent,
    ProviderError,
    ProviderExhausted,
    RemoteError,
    ScenarioValidationError,
    SerializationFailure,
    TypeMismatch,
    UnknownComponentType,
    UnknownParameter,
)
from .kernel import (
    Action,
    ActionSpec,
    CallContext,
    Component,
    ComponentKind,
    ContextBundle,
    ContextEntry,
    Entity,
    Observation,
    OutputType,
    Recorder,
    SeedAllocator,
    build_entity,
    register_component,
)
from .lm import (
    ChoiceResult,
    Completion,
    EchoHashProvider,
    FloatResult,
    GenDefaults,
    PromptRequest,
    Provider,
    ProviderKind,
    RecordingProvider,
    RemoteProvider,
    ReplayProvider,
    ScriptedProvider,
    match_choice,
    parse_float,
    provider_from_config,
    sample_choice,
    sample_float,
    sample_text,
)
from .prefabs import (
    ParamSpec,
    Prefab,
    clone_with_overrides,
    get_prefab,
    list_prefabs,
    register_prefab,
)
from .scenario import ValidationIssue, instantiate, load_doc, scenario_digest, validate
from .trace import TraceEvent, TraceSink, read_trace, validate_trace_lines

__version__ = "0.1.0"
