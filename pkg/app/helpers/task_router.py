import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

from app.config.run_config import RunConfig, TaskParams
from app.helpers.artifact_writer import ArtifactWriter
from app.modules.arithmetic import Frequency
from app.modules.cocycle import PotentialSpec

logger = logging.getLogger(__name__)

TaskHandler = Callable[["TaskContext"], None]


@dataclass
class TaskContext:
    """Everything a task handler needs: resolved inputs and the artifact writer."""
    config: RunConfig
    pot: PotentialSpec
    alpha: Frequency
    writer: ArtifactWriter
    n_jobs: Optional[int] = None

    @property
    def params(self) -> TaskParams:
        return self.config.params


class TaskRouter:
    """Registry of task handlers, grouped like API routers and merged with include_router."""

    def __init__(self, tags: Optional[List[str]] = None):
        self.tags = tags or []
        self.routes: Dict[str, TaskHandler] = {}

    def task(self, name: str) -> Callable[[TaskHandler], TaskHandler]:
        """
        Register a handler for a task name.

        Usage:
            @router.task("lyapunov")
            def lyapunov_task(ctx: TaskContext):
                ...
        """
        def decorator(func: TaskHandler) -> TaskHandler:
            if name in self.routes:
                raise ValueError(f"task {name!r} already registered")
            self.routes[name] = func
            return func
        return decorator

    def include_router(self, other: "TaskRouter") -> None:
        for name, handler in other.routes.items():
            if name in self.routes:
                raise ValueError(f"task {name!r} already registered")
            self.routes[name] = handler

    def dispatch(self, name: str, ctx: TaskContext) -> None:
        handler = self.routes.get(name)
        if handler is None:
            raise KeyError(f"no handler for task {name!r}")
        logger.info(f"Running task {name}")
        handler(ctx)
