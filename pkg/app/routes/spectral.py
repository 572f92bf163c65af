import logging

from app.helpers.task_router import TaskContext, TaskRouter
from app.modules.rotation import ids_from_rotation_grid
from app.modules.spectrum import (
    default_sigma_grid,
    homogeneity_profile,
    ids_counting,
    spectrum_approx,
    spectrum_from_growth_test,
)

logger = logging.getLogger(__name__)

router = TaskRouter(tags=["spectral"])


@router.task("ids")
def ids_task(ctx: TaskContext):
    """N(E) by eigenvalue counting (default) or from the rotation number."""
    p = ctx.params
    energies = p.energies.resolve(ctx.pot)
    if p.method == "rotation":
        table, _ = ids_from_rotation_grid(ctx.pot, ctx.alpha, energies, p.n, p.m, ctx.n_jobs)
    elif p.method == "counting":
        table = ids_counting(ctx.pot, ctx.alpha, energies, p.truncation, p.m, ctx.n_jobs)
    else:
        raise ValueError(f"unknown IDS method {p.method!r}")
    ctx.writer.write_csv("ids.csv", ["E", "N"], table.rows())


@router.task("spectrum")
def spectrum_task(ctx: TaskContext):
    """Eigenvalue-union spectrum proxy, its homogeneity profile and an optional growth cross-check."""
    p = ctx.params
    S = spectrum_approx(ctx.pot, ctx.alpha, p.truncation, p.m, p.margin, ctx.n_jobs)
    ctx.writer.write_json("spectrum.json", S.model_dump(mode="json"))

    sigma_grid = p.sigma_grid or default_sigma_grid()
    usable = [s for s in sigma_grid if s < 0.5 * S.span()]
    if len(usable) < len(sigma_grid):
        logger.warning(f"Dropped {len(sigma_grid) - len(usable)} σ values at or above half the span of S")
    if usable:
        profile = homogeneity_profile(S, usable, p.E_samples)
        ctx.writer.write_json("homogeneity.json", profile.model_dump(mode="json"))

    if p.growth_check:
        G = spectrum_from_growth_test(ctx.pot, ctx.alpha, p.energies.resolve(ctx.pot), n_jobs=ctx.n_jobs)
        ctx.writer.write_json("spectrum_growth.json", G.model_dump(mode="json"))
