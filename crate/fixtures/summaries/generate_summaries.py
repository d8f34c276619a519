"""Regenerate the frozen summary campaign fixtures.

Each output file is a campaign JSONL whose post-repair metrics render to fixed
target values. File counts are the smallest whose ratios round to the target
percentages. Coverage percents come from a seeded generator, rescaled to the
target mean and sample standard deviation.

    python3 generate_summaries.py        # writes *_nl.jsonl and *_gs.jsonl next to this file
"""

import json
import math
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
LINES_TOTAL = 10000

# (file, scenario, style, n_files, executable, passing, coverage mean, coverage std)
CAMPAIGNS = [
    ("hello_world_nl.jsonl", "hello_world", "nl", 100, 71, 15, 63.18, 9.94),
    ("hello_world_gs.jsonl", "hello_world", "gs", 365, 357, 353, 62.63, 11.48),
    ("digits_nl.jsonl", "digits", "nl", 176, 87, 16, 50.0, 0.0),
    ("digits_gs.jsonl", "digits", "gs", 1102, 1042, 75, 50.0, 0.0),
]


def coverage_hits(n, mean, std, seed):
    if std == 0.0:
        return [round(mean * LINES_TOTAL / 100)] * n
    rng = random.Random(seed)
    raw = [rng.gauss(0.0, 1.0) for _ in range(n)]
    m = sum(raw) / n
    s = math.sqrt(sum((x - m) ** 2 for x in raw) / (n - 1))
    return [round((mean + std * (x - m) / s) * LINES_TOTAL / 100) for x in raw]


def run(collected, passed, failed, collection_error=None, runtime_errors=()):
    return {
        "collected": collected,
        "executed": passed + failed,
        "passed": passed,
        "failed": failed,
        "collection_error": collection_error,
        "runtime_errors": list(runtime_errors),
        "duration_ms": 0,
        "timed_out": False,
        "harness_error": None,
    }


def sig(exception, message):
    return {"exception": exception, "message": message}


def stage(run_result, klass, hits=None):
    coverage = None
    if hits is not None:
        coverage = {"lines_total": LINES_TOTAL, "lines_hit": hits, "percent": 100.0 * hits / LINES_TOTAL}
    return {"run": run_result, "class": klass, "coverage": coverage}


def record(scenario, style, index, pre, post):
    return {
        "schema_version": 1,
        "scenario": scenario,
        "style": style,
        "trial_index": index,
        "prompt_digest": "fixture",
        "raw_response": "",
        "backend_error": None,
        "retry_count": 0,
        "artifact": None,
        "test_path": "test_generated_%s_%03d.py" % (scenario, index),
        "pre_repair": pre,
        "actions": [],
        "skipped": [],
        "post_repair": post,
        "coverage": post["coverage"],
        "started_at": "2024-01-01T00:00:00.000Z",
        "finished_at": "2024-01-01T00:00:00.000Z",
        "duration_ms": 0,
    }


def campaign(scenario, style, n, executable, passing, mean, std, seed):
    hits = coverage_hits(executable, mean, std, seed)
    missing_import = sig("ModuleNotFoundError", "No module named '%s'" % scenario)
    records = []
    for i in range(n):
        if i < executable:
            if i < passing:
                post = stage(run(1, 1, 0), "None", hits[i])
            else:
                post = stage(
                    run(1, 0, 1, runtime_errors=[sig("AssertionError", "assert '' == 'hello world'")]),
                    "None",
                    hits[i],
                )
            # every third executable file needed the dependency repair
            if i % 3 == 0:
                pre = stage(run(0, 0, 0, collection_error=missing_import), "Dependency")
            else:
                pre = post
        elif i % 2 == 0:
            post = stage(run(0, 0, 0, collection_error=missing_import), "Dependency")
            pre = post
        else:
            post = stage(run(0, 0, 0, collection_error=sig("SyntaxError", "invalid syntax")), "Semantic")
            pre = post
        records.append(record(scenario, style, i, pre, post))
    return records


def main():
    for seed, (name, scenario, style, n, e, p, mean, std) in enumerate(CAMPAIGNS):
        records = campaign(scenario, style, n, e, p, mean, std, seed)
        with open(os.path.join(HERE, name), "w", encoding="utf-8") as f:
            for r in records:
                f.write(json.dumps(r, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
