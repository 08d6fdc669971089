from lab.core.ising import (
    coupled_simulate,
    disagreement_bound,
    infection_rate_sum,
    infection_simulate,
    schedule_by_id,
)
from lab.core.errors import EXIT_NUMERICAL
from lab.core.protocol import ExperimentConfig, Table


def ising_coupled(config: ExperimentConfig) -> dict:
    schedule = schedule_by_id(config.schedule)
    run = coupled_simulate(config.depth, config.beta, schedule, config.horizon, config.seed, guards=config.guards)
    series = Table("disagreements", ("t", "disagreements"), list(zip(run.times, run.disagreements)))
    layers = Table(
        "layers",
        ("layer", "opportunities", "creations", "frequency", "bound"),
        [
            (
                k,
                run.opportunities[k],
                run.creations[k],
                run.creations[k] / run.opportunities[k] if run.opportunities[k] else None,
                disagreement_bound(k, config.beta, schedule),
            )
            for k in sorted(run.opportunities, reverse=True)
        ],
    )
    creations = Table("creations", ("t", "layer", "path"), [(t, k, "".join(map(str, p))) for t, p, k in run.creation_log])
    summary = {
        "depth": run.depth,
        "total_creations": sum(run.creations.values()),
        "boundary_creations": run.boundary_creations,
        "final_disagreements": run.disagreements[-1] if run.disagreements else 0,
    }
    return {"status": "ok", "code": 0, "payload": {"tables": [series, layers, creations], "summary": summary}}


def ising_infection(config: ExperimentConfig) -> dict:
    schedule = schedule_by_id(config.schedule)
    run = infection_simulate(config.depth, config.beta, schedule, config.horizon, config.seed, guards=config.guards)
    summary = {
        "depth": run.depth,
        "time_average": run.time_average,
        "originations": run.originations,
        "cures": run.cures,
        "max_jump": run.max_jump,
        "violations": run.violations,
    }
    table = Table("infected", ("t", "infected"), list(zip(run.times, run.counts)))
    if run.violations:
        return {
            "status": "error",
            "code": EXIT_NUMERICAL,
            "message": f"parent closure violated after {run.violations} events",
            "payload": {"tables": [table], "summary": summary},
        }
    return {"status": "ok", "code": 0, "payload": {"tables": [table], "summary": summary}}


def ising_rate_sum(config: ExperimentConfig) -> dict:
    schedule = schedule_by_id(config.schedule)
    result = infection_rate_sum(config.beta, schedule, config.tol)
    row = (config.beta, schedule.name, result.value, result.terms, result.bounded)
    table = Table("rate_sum", ("beta", "schedule", "sum", "terms", "bounded"), [row])
    summary = {"sum": result.value, "terms": result.terms, "bounded": result.bounded}
    return {"status": "ok", "code": 0, "payload": {"tables": [table], "summary": summary}}
