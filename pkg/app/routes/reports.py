import logging

from app.helpers.errors import InsufficientDepthError
from app.helpers.task_router import TaskContext, TaskRouter
from app.modules.arithmetic import beta_exponent, sdc_check
from app.modules.reports import identity_residuals, regime_table, theta_lipschitz_probe

logger = logging.getLogger(__name__)

router = TaskRouter(tags=["reports"])


@router.task("regime-table")
def regime_table_task(ctx: TaskContext):
    """AMO regime table over params.lambdas at quantile-sampled spectrum energies."""
    p = ctx.params
    rows = regime_table(
        p.lambdas, ctx.alpha,
        epsilon=ctx.pot.epsilon, v=ctx.pot.v,
        n=p.n, m=p.m, schedule=p.schedule, truncation=p.truncation, tol=p.tol,
        n_jobs=ctx.n_jobs,
    )
    ctx.writer.write_csv("regime_table.csv", ["lambda", "E_sample", "L", "omega", "regime"], [r.row() for r in rows])
    ctx.writer.write_json("regime_table.json", {
        "rows": [r.model_dump(mode="json") for r in rows],
        "unhealthy_profiles": sum(not r.healthy for r in rows),
    })


@router.task("identities")
def identities_task(ctx: TaskContext):
    """Residuals of N = 1 - 2ρ, the Thouless formula and the derivative identity."""
    p = ctx.params
    rows = identity_residuals(ctx.pot, ctx.alpha, n=p.n, m=p.m, ids_n=p.truncation, eps=p.eps, n_jobs=ctx.n_jobs)
    ctx.writer.write_csv(
        "identities.csv",
        ["identity", "points", "worst_point", "max_residual", "tolerance", "passed"],
        [r.row() for r in rows],
    )


@router.task("theta-lipschitz")
def theta_lipschitz_task(ctx: TaskContext):
    """Difference quotients of N restricted to energies with ρ(E) ∈ Θ."""
    p = ctx.params
    report = theta_lipschitz_probe(
        ctx.pot, ctx.alpha, p.energies.resolve(ctx.pot),
        gamma=p.gamma, tau=p.tau, k_max=p.k_max,
        n=p.n, m=p.m, n_jobs=ctx.n_jobs,
    )
    ctx.writer.write_csv("theta_quotients.csv", ["E", "rho", "N", "member"],
                         [(r.E, r.rho, r.N, r.member) for r in report.rows])
    ctx.writer.write_json("theta_quotients.json", report.model_dump(mode="json", exclude={"rows"}))


@router.task("arithmetic")
def arithmetic_task(ctx: TaskContext):
    """Partial quotients, convergents, SDC scan and β estimate of the frequency."""
    p = ctx.params
    alpha = ctx.alpha
    ctx.writer.write_csv(
        "convergents.csv", ["k", "a", "p", "q"],
        [(k, a, pk, qk) for k, (a, (pk, qk)) in enumerate(zip(alpha.quotients, alpha.convergents), start=1)],
    )

    payload = {
        "alpha": alpha.to_literal(),
        "rational_detected": alpha.rational_detected,
        "sdc": sdc_check(alpha, p.kappa, p.sdc_tau, p.sdc_k_max).model_dump(mode="json"),
    }
    try:
        payload["beta"] = beta_exponent(alpha).model_dump(mode="json")
    except InsufficientDepthError as e:
        logger.warning(f"β estimate skipped: {e}")
        payload["beta"] = None
    ctx.writer.write_json("arithmetic.json", payload)
