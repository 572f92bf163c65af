import os
import sys
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import argparse
import json
import logging
import shutil
import tempfile
import time
from pathlib import Path
from typing import List, Optional

from app.config.run_config import RunConfig, RunRecord, TaskName
from app.config.settings import settings
from app.helpers.artifact_writer import ArtifactWriter, file_digest
from app.helpers.cache_helper import CacheHelper, cache_helper
from app.helpers.errors import ConfigValidationError, NumericHealthError, SpectralToolkitError
from app.helpers.task_router import TaskContext, TaskRouter
from app.routes import dynamics, reports, resolvent, spectral

# Configure logging
logging.basicConfig(
    level=logging.DEBUG if settings.DEBUG else logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

RECORD_NAME = "run_record.json"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_HEALTH = 3

# Include routers
registry = TaskRouter()
registry.include_router(dynamics.router)
registry.include_router(spectral.router)
registry.include_router(resolvent.router)
registry.include_router(reports.router)


def output_dir(config: RunConfig, config_hash: str) -> Path:
    return Path(config.out or settings.OUTPUT_DIR) / f"{config.task.value}-{config_hash[:12]}"


def _publish(staging: Path, target: Path) -> None:
    """Move a finished staging directory into place."""
    if target.exists():
        shutil.rmtree(target)
    os.replace(staging, target)


def _replay(cached: Path, target: Path, config_hash: str, started: float) -> RunRecord:
    record = RunRecord.model_validate_json((cached / RECORD_NAME).read_text(encoding="utf-8"))
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=target.parent))
    try:
        for name in record.outputs:
            shutil.copy2(cached / name, staging / name)
        replay = record.model_copy(update={
            "cache_hit": True,
            "timings": {"total": time.perf_counter() - started},
            "outputs": {name: file_digest(staging / name) for name in record.outputs},
        })
        (staging / RECORD_NAME).write_text(replay.model_dump_json(indent=2) + "\n", encoding="utf-8")
        _publish(staging, target)
    except Exception:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    logger.info(f"Replayed cached run {config_hash[:12]} into {target}")
    return replay


def run(config: RunConfig) -> RunRecord:
    """
    Execute one task and persist its artifacts.

    Outputs are written to a staging directory and renamed into place, so a
    failed run leaves nothing behind. Finished runs are cached by config
    hash; a cache hit copies the stored artifacts without recomputation.

    Args:
        config: Validated run configuration

    Returns:
        RunRecord describing the artifacts
    """
    started = time.perf_counter()
    config_hash = config.config_hash()
    target = output_dir(config, config_hash)
    target.parent.mkdir(parents=True, exist_ok=True)
    cache = CacheHelper(config.cache) if config.cache else cache_helper

    cached = cache.get(config_hash)
    if cached is not None:
        return _replay(cached, target, config_hash, started)

    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=target.parent))
    try:
        alpha = config.alpha.to_frequency()
        writer = ArtifactWriter(staging, config_hash)
        ctx = TaskContext(config=config, pot=config.potential, alpha=alpha, writer=writer, n_jobs=config.threads)
        compute_started = time.perf_counter()
        registry.dispatch(config.task.value, ctx)
        finished = time.perf_counter()

        record = RunRecord(
            config_hash=config_hash,
            tool_version=settings.APP_VERSION,
            task=config.task,
            timings={"compute": finished - compute_started, "total": finished - started},
            outputs=writer.manifest(),
        )
        (staging / RECORD_NAME).write_text(record.model_dump_json(indent=2) + "\n", encoding="utf-8")
        cache.set_with_lock(config_hash, staging)
        _publish(staging, target)
    except Exception:
        shutil.rmtree(staging, ignore_errors=True)
        raise

    logger.info(f"Task {config.task.value} finished in {record.timings['total']:.2f}s → {target}")
    return record


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=settings.APP_NAME, description="Quasiperiodic Schrödinger spectral toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.APP_VERSION}")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TaskName:
        cmd = sub.add_parser(task.value)
        cmd.add_argument("--config", type=Path, help="JSON run configuration")
        cmd.add_argument("--out", help="output directory")
        cmd.add_argument("--threads", type=int, help="worker count")
        cmd.add_argument("--cache", help="cache directory")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigValidationError([f"{args.config}: {e}"]) from e
        if not isinstance(data, dict):
            raise ConfigValidationError([f"{args.config}: top level must be a JSON object"])
    if data.get("task", args.task) != args.task:
        logger.warning(f"Config task {data['task']!r} overridden by subcommand {args.task!r}")
    data["task"] = args.task
    for field in ("out", "threads", "cache"):
        value = getattr(args, field)
        if value is not None:
            data[field] = value
    return RunConfig.from_dict(data)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        record = run(config)
    except ConfigValidationError as e:
        for error in e.errors:
            print(f"config error: {error}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericHealthError as e:
        logger.error(f"Numeric health check failed: {e}")
        return EXIT_HEALTH
    except ValueError as e:
        logger.error(f"Invalid parameters: {e}")
        return EXIT_VALIDATION
    except SpectralToolkitError as e:
        logger.error(f"Task failed: {e}")
        return EXIT_FAILURE

    print(json.dumps({"config_hash": record.config_hash, "cache_hit": record.cache_hit, "outputs": record.outputs}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
