import logging

from app.helpers.errors import NumericHealthError
from app.helpers.task_router import TaskContext, TaskRouter
from app.modules.lyapunov import acceleration, lyapunov
from app.modules.rotation import rotation_number

logger = logging.getLogger(__name__)

router = TaskRouter(tags=["dynamics"])

@router.task("lyapunov")
def lyapunov_task(ctx: TaskContext):
    """L_ε(E) over the energy grid."""
    p = ctx.params
    rows = [
        (E, p.eps_imag, lyapunov(ctx.pot, ctx.alpha, E, p.eps_imag, p.n, p.m, ctx.n_jobs))
        for E in p.energies.resolve(ctx.pot)
    ]
    ctx.writer.write_csv("lyapunov.csv", ["E", "eps", "L"], rows)


@router.task("acceleration")
def acceleration_task(ctx: TaskContext):
    """Acceleration profiles; an unhealthy profile fails the run when strict_health is set."""
    p = ctx.params
    profiles = [
        acceleration(ctx.pot, ctx.alpha, E, p.schedule, p.n, p.m, ctx.n_jobs)
        for E in p.energies.resolve(ctx.pot)
    ]
    ctx.writer.write_csv("acceleration.csv", ["E", "eps", "L"], [r for prof in profiles for r in prof.profile_rows()])
    ctx.writer.write_json("acceleration.json", {"profiles": [prof.to_dict() for prof in profiles]})

    unhealthy = [complex(prof.E).real for prof in profiles if not prof.healthy]
    if unhealthy and p.strict_health:
        raise NumericHealthError(f"nonmonotone or nonconvex L_ε profile at E={unhealthy}")


@router.task("rotation")
def rotation_task(ctx: TaskContext):
    """ρ(E), N = 1 - 2ρ and the per-phase spread over the energy grid."""
    p = ctx.params
    rows = [
        rotation_number(ctx.pot, ctx.alpha, E, p.n, p.m, ctx.n_jobs).row(float(E))
        for E in p.energies.resolve(ctx.pot)
    ]
    ctx.writer.write_csv("rotation.csv", ["E", "rho", "N_from_rho", "spread"], rows)
