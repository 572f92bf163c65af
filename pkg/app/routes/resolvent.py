import logging

import numpy as np

from app.config.settings import settings
from app.helpers.task_router import TaskContext, TaskRouter
from app.modules.green import (
    boundary_l1_report,
    green_avg,
    green_from_ids,
    maximal_function,
    normal_boundary_re_g,
)
from app.modules.lyapunov import smooth_fit_report
from app.modules.spectrum import default_energy_grid, ids_counting, spectrum_approx

logger = logging.getLogger(__name__)

router = TaskRouter(tags=["green"])

@router.task("green")
def green_task(ctx: TaskContext):
    """G(z) by resolvent averaging and, when requested, from the counting IDS."""
    p = ctx.params
    zs = [complex(re, im) for re, im in p.z]
    table = None
    if p.compare_ids:
        grid = default_energy_grid(ctx.pot, settings.GREEN_IDS_GRID_POINTS)
        table = ids_counting(ctx.pot, ctx.alpha, grid, p.truncation, p.m, ctx.n_jobs)

    rows = []
    for z in zs:
        if z.imag > 0:
            g = green_avg(ctx.pot, ctx.alpha, z, p.window, p.m, p.tol, ctx.n_jobs)
            rows.append((z.real, z.imag, g.value.real, g.value.imag, g.method.value))
        if table is not None:
            g = green_from_ids(table, z)
            rows.append((z.real, z.imag, g.value.real, g.value.imag, g.method.value))
    ctx.writer.write_csv("green.csv", ["re_z", "im_z", "re_G", "im_G", "method"], rows)


@router.task("boundary")
def boundary_task(ctx: TaskContext):
    """Re G(E + i0) with fit residual and convergence flag, plus the empirical L¹ report."""
    p = ctx.params
    energies = p.energies.resolve(ctx.pot)
    values = [normal_boundary_re_g(ctx.pot, ctx.alpha, E, p.schedule, p.m, ctx.n_jobs) for E in energies]
    ctx.writer.write_csv(
        "boundary.csv",
        ["E", "ReG_boundary", "residual", "flag"],
        [(E, v.value.real, v.residual, v.flagged) for E, v in zip(energies, values)],
    )

    S = spectrum_approx(ctx.pot, ctx.alpha, p.truncation, n_jobs=ctx.n_jobs)
    re_g = np.array([v.value.real for v in values])
    report = boundary_l1_report(energies, re_g, S)

    # smoothness of Re G(E + i0) on the spectrum, from converged values only
    good = S.contains(energies) & ~np.array([v.flagged for v in values], dtype=bool)
    fit = None
    if good.sum() > settings.SMOOTH_FIT_DEGREE:
        fit = smooth_fit_report(energies[good], re_g[good]).model_dump()
    else:
        logger.info(f"Only {int(good.sum())} converged on-spectrum points, skipping smooth fit")
    ctx.writer.write_json("boundary_l1.json", {**report.model_dump(mode="json"), "smooth_fit": fit})


@router.task("maximal")
def maximal_task(ctx: TaskContext):
    """Non-tangential maximal function G* and the weak-type statistic σ^{3/4}·|{G* > σ}|."""
    p = ctx.params
    profile = maximal_function(
        ctx.pot, ctx.alpha, p.energies.resolve(ctx.pot),
        y_min=p.y_min, y_max=p.y_max, aspect=p.aspect,
        sigma_grid=p.sigma_grid, levels=p.levels, m=p.m, n_jobs=ctx.n_jobs,
    )
    ctx.writer.write_csv("maximal.csv", ["E", "Gstar"], profile.rows())
    ctx.writer.write_csv("weak_type.csv", ["sigma", "weak_type_stat"], profile.weak_type_rows())
    ctx.writer.write_json("maximal.json", {
        "D": profile.D,
        "y_min": profile.y_min,
        "y_max": profile.y_max,
        "aspect": p.aspect,
    })
