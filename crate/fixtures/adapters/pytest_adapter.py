"""Reference runner adapter for pytest.

Usage:
    python3 pytest_adapter.py --workdir DIR --testfile FILE --resultfile OUT
        --covfile COV --covtarget REL

Runs pytest in-process on FILE with DIR as the working directory and writes

    OUT: {"schema": "acceptgen-result/1", "collected": int,
          "collection_error": null | {"exception": str, "message": str},
          "tests": [{"id": str, "outcome": "passed"|"failed"|"error"|"skipped",
                     "error": null | {"exception": str, "message": str}}]}

    COV: {"schema": "acceptgen-coverage/1", "path": REL,
          "executable": [int, ...], "hit": [int, ...]}

Executable lines of REL are the lines that start bytecode in any code object
compiled from it; hit lines are those a line-trace saw while the tests ran.
Messages are cut to their first line, and DIR is replaced by "<workdir>".
"""

import argparse
import dis
import json
import os
import re
import sys
import threading

SIGNATURE = re.compile(r"^E\s+(?:[\w.]+\.)?(\w+(?:Error|Exception|Exit|Interrupt))\b:?\s*(.*)$")
PYTEST_ERRORS = {"Failed": "Failed", "Skipped": "Skipped", "XFailed": "XFailed"}


def executable_lines(path):
    with open(path, encoding="utf-8") as f:
        source = f.read()
    try:
        code = compile(source, path, "exec")
    except SyntaxError:
        return set()
    lines = set()
    stack = [code]
    while stack:
        co = stack.pop()
        lines.update(line for _, line in dis.findlinestarts(co) if line and line > 0)
        stack.extend(c for c in co.co_consts if hasattr(c, "co_code"))
    return lines


class LineTracer:
    def __init__(self, target):
        self.target = os.path.realpath(target)
        self.hit = set()
        self.verdicts = {}

    def _local(self, frame, event, arg):
        if event == "line":
            self.hit.add(frame.f_lineno)
        return self._local

    def _global(self, frame, event, arg):
        name = frame.f_code.co_filename
        matches = self.verdicts.get(name)
        if matches is None:
            matches = self.verdicts[name] = os.path.realpath(name) == self.target
        if matches:
            if event == "call":
                self.hit.add(frame.f_lineno)
            return self._local
        return None

    def start(self):
        threading.settrace(self._global)
        sys.settrace(self._global)

    def stop(self):
        sys.settrace(None)
        threading.settrace(None)


def clean(text, workdir):
    text = (text or "").strip().splitlines()
    first = text[0] if text else ""
    for prefix in (os.path.realpath(workdir), workdir):
        first = first.replace(prefix, "<workdir>")
    return first[:500]


def signature_from_text(text, workdir):
    found = None
    for line in str(text).splitlines():
        m = SIGNATURE.match(line)
        if m:
            found = {"exception": m.group(1), "message": clean(m.group(2), workdir)}
    return found


def signature_from_excinfo(excinfo, workdir):
    name = excinfo.type.__name__
    name = PYTEST_ERRORS.get(name, name)
    return {"exception": name, "message": clean(str(excinfo.value), workdir)}


class Collector:
    def __init__(self, workdir):
        self.workdir = workdir
        self.collected = 0
        self.collection_error = None
        self.tests = {}
        self.order = []

    def pytest_collectreport(self, report):
        if report.failed and self.collection_error is None:
            self.collection_error = signature_from_text(report.longrepr, self.workdir) or {
                "exception": "CollectionError",
                "message": clean(str(report.longrepr), self.workdir),
            }

    def pytest_collection_modifyitems(self, items):
        self.collected = len(items)

    def _record(self, nodeid, outcome, error):
        if nodeid not in self.tests:
            self.order.append(nodeid)
            self.tests[nodeid] = {"id": nodeid, "outcome": outcome, "error": error}
        elif self.tests[nodeid]["outcome"] == "passed" and outcome != "passed":
            # teardown failure after a passing call
            self.tests[nodeid] = {"id": nodeid, "outcome": "error", "error": error}

    def pytest_runtest_makereport(self, item, call):
        # called for setup, call and teardown; the report is built by pytest
        excinfo = call.excinfo
        error = signature_from_excinfo(excinfo, self.workdir) if excinfo else None
        skipped = excinfo is not None and excinfo.type.__name__ == "Skipped"
        if call.when == "setup":
            if skipped:
                self._record(item.nodeid, "skipped", None)
            elif excinfo is not None:
                self._record(item.nodeid, "error", error)
        elif call.when == "call":
            if skipped:
                self._record(item.nodeid, "skipped", None)
            elif excinfo is None:
                self._record(item.nodeid, "passed", None)
            else:
                self._record(item.nodeid, "failed", error)
        elif excinfo is not None and not skipped:
            self._record(item.nodeid, "error", error)


def preimport(testfile, tracer, workdir):
    """Import the test module the way pytest's prepend mode would.

    Returns a collection error signature, or None when the module imported
    (or raised something pytest itself should handle, such as a module-level
    skip). On success the module stays in sys.modules and pytest reuses it.
    """
    import importlib

    directory, base = os.path.split(os.path.abspath(testfile))
    name = os.path.splitext(base)[0]
    if directory not in sys.path:
        sys.path.insert(0, directory)
    tracer.start()
    try:
        importlib.import_module(name)
    except Exception as exc:  # noqa: BLE001
        sys.modules.pop(name, None)
        message = exc.msg if isinstance(exc, SyntaxError) else str(exc)
        return {"exception": type(exc).__name__, "message": clean(message, workdir)}
    except BaseException:  # noqa: BLE001
        sys.modules.pop(name, None)
    finally:
        tracer.stop()
    return None


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--workdir", required=True)
    parser.add_argument("--testfile", required=True)
    parser.add_argument("--resultfile", required=True)
    parser.add_argument("--covfile", required=True)
    parser.add_argument("--covtarget", required=True)
    args = parser.parse_args()

    workdir = os.path.abspath(args.workdir)
    os.chdir(workdir)
    target = os.path.join(workdir, args.covtarget)
    tracer = LineTracer(target)
    collector = Collector(workdir)

    import pytest

    collection_error = preimport(args.testfile, tracer, workdir)
    if collection_error is not None:
        collector.collection_error = collection_error
    else:

        class Tracing:
            @pytest.hookimpl(wrapper=True)
            def pytest_runtest_setup(self, item):
                tracer.start()
                try:
                    return (yield)
                finally:
                    tracer.stop()

            @pytest.hookimpl(wrapper=True)
            def pytest_runtest_call(self, item):
                tracer.start()
                try:
                    return (yield)
                finally:
                    tracer.stop()

            @pytest.hookimpl(wrapper=True)
            def pytest_runtest_teardown(self, item, nextitem):
                tracer.start()
                try:
                    return (yield)
                finally:
                    tracer.stop()

        pytest.main(
            [args.testfile, "-q", "-p", "no:cacheprovider", "--rootdir", workdir,
             "-W", "ignore", "--color=no", "--tb=line"],
            plugins=[collector, Tracing()],
        )

    result = {
        "schema": "acceptgen-result/1",
        "collected": collector.collected,
        "collection_error": collector.collection_error,
        "tests": [collector.tests[n] for n in collector.order],
    }
    with open(args.resultfile, "w", encoding="utf-8") as f:
        json.dump(result, f, indent=1)

    executable = sorted(executable_lines(target)) if os.path.isfile(target) else []
    coverage = {
        "schema": "acceptgen-coverage/1",
        "path": args.covtarget,
        "executable": executable,
        "hit": sorted(tracer.hit & set(executable)),
    }
    with open(args.covfile, "w", encoding="utf-8") as f:
        json.dump(coverage, f, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
