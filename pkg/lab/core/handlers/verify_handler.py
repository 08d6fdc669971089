import json

from lab.core.checks import run_suite
from lab.core.errors import EXIT_CHECK_FAILED
from lab.core.protocol import ExperimentConfig, Table, check_to_dict
from lab.util.report import to_plain


def _cell(value) -> str | float | int | bool:
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(to_plain(value), sort_keys=True)
    return to_plain(value)


def verify_suite(config: ExperimentConfig) -> dict:
    results = run_suite(config.action, config.seed, workers=config.workers, guards=config.guards)
    rows = [(r.name, r.passed, _cell(r.measured), _cell(r.tolerance), r.detail) for r in results]
    failed = [r.name for r in results if not r.passed]
    payload = {
        "tables": [Table("checks", ("check", "passed", "measured", "tolerance", "detail"), rows)],
        "summary": {
            "suite": config.action,
            "passed": len(results) - len(failed),
            "failed": failed,
            "checks": [check_to_dict(r) for r in results],
        },
    }
    if failed:
        return {
            "status": "error",
            "code": EXIT_CHECK_FAILED,
            "message": f"{len(failed)} check(s) failed: {', '.join(failed)}",
            "payload": payload,
        }
    return {"status": "ok", "code": 0, "payload": payload}
