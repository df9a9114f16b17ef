"""Command-line interface: run, replay, crossplay, list-prefabs, validate, serve.

Exit codes: 0 success, 2 validation failure, 3 runtime failure,
4 replay divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from . import lm, runner, scenario
from .errors import FabulaError, InvalidSchema
from .prefabs import list_prefabs

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_DIVERGENCE = 4


def _add_provider_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--provider", choices=["scripted", "echo", "record", "replay", "remote"],
                        help="override the scenario's provider")
    parser.add_argument("--script", help="response file for the scripted provider")
    parser.add_argument("--cassette", help="cassette file for record/replay")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--max-steps", type=int, dest="max_steps",
                        help="override the scenario step cap")


def _provider_from_flags(args, doc: dict, base_dir: Path) -> Optional[lm.Provider]:
    if not args.provider:
        return None
    if args.provider == "scripted":
        if not args.script:
            raise InvalidSchema("--provider scripted requires --script")
        return lm.ScriptedProvider.from_file(args.script)
    if args.provider == "echo":
        return lm.EchoHashProvider()
    if args.provider == "record":
        if not args.cassette:
            raise InvalidSchema("--provider record requires --cassette")
        inner = lm.provider_from_config(doc.get("provider", {"kind": "echo"}), base_dir=base_dir)
        return lm.RecordingProvider(inner, args.cassette)
    if args.provider == "replay":
        if not args.cassette:
            raise InvalidSchema("--provider replay requires --cassette")
        return lm.ReplayProvider(args.cassette)
    return lm.RemoteProvider.from_env()


def _load_and_validate(path: str) -> dict:
    doc = scenario.load_doc(path)
    issues = scenario.validate(doc)
    if issues:
        raise scenario.ScenarioValidationError(issues)
    return doc


def _print_report(exc) -> None:
    for item in getattr(exc, "report", []):
        print(str(item), file=sys.stderr)


def cmd_run(args) -> int:
    base_dir = Path(args.scenario).parent
    try:
        doc = _load_and_validate(args.scenario)
        provider = _provider_from_flags(args, doc, base_dir)
    except scenario.ScenarioValidationError as exc:
        print("scenario validation failed:", file=sys.stderr)
        _print_report(exc)
        return EXIT_VALIDATION
    except InvalidSchema as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    try:
        artifacts = runner.run_doc(
            doc, provider=provider, seed=args.seed, max_steps=args.max_steps,
            workers=args.workers, out=args.out, base_dir=base_dir,
        )
    except (FabulaError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(runner.summarize(artifacts.result))
    if args.out:
        print(f"trace: {args.out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        doc = _load_and_validate(args.scenario)
        expected = Path(args.trace).read_text(encoding="utf-8").splitlines()
    except scenario.ScenarioValidationError as exc:
        print("scenario validation failed:", file=sys.stderr)
        _print_report(exc)
        return EXIT_VALIDATION
    except (InvalidSchema, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    try:
        divergence, _ = runner.replay_doc(
            doc, args.cassette, expected, seed=args.seed,
            max_steps=args.max_steps, out=args.out,
            base_dir=Path(args.scenario).parent,
        )
    except (FabulaError, OSError) as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if divergence is None:
        print("replay ok: traces are byte-identical")
        return EXIT_OK
    print(f"replay divergence at seq {divergence}", file=sys.stderr)
    return EXIT_DIVERGENCE


def cmd_crossplay(args) -> int:
    try:
        data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        spec = runner.CrossplaySpec.from_dict(data)
    except (OSError, ValueError, KeyError) as exc:
        print(f"bad crossplay spec: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        rows = runner.crossplay(spec, base_dir=Path(args.spec).parent)
    except FabulaError as exc:
        print(f"crossplay failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    csv_text = runner.crossplay_csv(rows)
    Path(args.out).write_text(csv_text, encoding="utf-8")
    for row in rows:
        if row["status"] == "failed":
            print(f"failed: {row['focal']} / {row['scenario']} / seed "
                  f"{row['seed']}: {row.get('detail', '')}", file=sys.stderr)
        if row["status"] == "mean":
            print(f"{row['focal']}: mean={row['total_score']}")
    print(f"matrix: {args.out}")
    return EXIT_OK


def cmd_list_prefabs(_args) -> int:
    for prefab in list_prefabs():
        print(f"{prefab.name} ({prefab.role}): {prefab.description}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        doc = scenario.load_doc(args.scenario)
    except InvalidSchema as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    issues = scenario.validate(doc)
    if issues:
        for item in issues:
            print(str(item), file=sys.stderr)
        return EXIT_VALIDATION
    print("scenario is valid")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import SessionService, make_server

    service = SessionService(poll_timeout=args.poll_timeout)
    server = make_server(service, args.host, args.port)
    print(f"serving on http://{args.host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        service.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fabula",
        description="Generative multi-actor simulations with a component-based Game Master.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario and write its trace")
    p_run.add_argument("scenario", help="path to a *.scenario.json document")
    _add_provider_flags(p_run)
    p_run.add_argument("--out", help="trace output path (JSONL)")
    p_run.add_argument("--workers", type=int, default=1,
                       help="actor worker threads for the simultaneous engine")
    p_run.set_defaults(func=cmd_run)

    p_replay = sub.add_parser("replay", help="re-execute from a cassette and compare traces")
    p_replay.add_argument("scenario")
    p_replay.add_argument("trace", help="the previously recorded trace to compare against")
    p_replay.add_argument("--cassette", required=True)
    p_replay.add_argument("--seed", type=int)
    p_replay.add_argument("--max-steps", type=int, dest="max_steps")
    p_replay.add_argument("--out", help="optional path for the replayed trace")
    p_replay.set_defaults(func=cmd_replay)

    p_cross = sub.add_parser("crossplay", help="run the focal-actor substitution matrix")
    p_cross.add_argument("spec", help="JSON file: actor_prefabs, scenarios, seeds, focal_slot")
    p_cross.add_argument("--out", default="crossplay.csv")
    p_cross.set_defaults(func=cmd_crossplay)

    p_list = sub.add_parser("list-prefabs", help="show the prefab catalog")
    p_list.set_defaults(func=cmd_list_prefabs)

    p_val = sub.add_parser("validate", help="check a scenario document")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=cmd_validate)

    p_serve = sub.add_parser("serve", help="start the HTTP session service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--poll-timeout", type=float, default=25.0)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
