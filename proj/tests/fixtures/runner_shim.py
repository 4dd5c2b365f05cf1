#!/usr/bin/env python3
"""Minimal in-sandbox runner used by the test suite.

Speaks the line-delimited JSON stdio protocol: one request object per line on
stdin, one response object per line on stdout. User code runs in a single
persistent namespace with both streams redirected while it executes.
"""
import contextlib
import io
import json
import sys
import time
import traceback


def _respond(out, payload):
    out.write(json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n")
    out.flush()


def serve():
    proto_out = sys.stdout
    namespace = {"__name__": "__main__"}
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            req_id = int(req["id"])
            op = req["op"]
        except Exception as exc:  # malformed frame
            _respond(proto_out, {"id": -1, "stdout": "", "stderr": "ProtocolError: %s\n" % exc,
                                 "ok": False, "duration_ms": 0})
            continue
        start = time.monotonic()
        out, err, ok = io.StringIO(), io.StringIO(), True
        if op == "Ping":
            pass
        elif op == "Reset":
            namespace = {"__name__": "__main__"}
        elif op == "Exec":
            with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
                try:
                    exec(compile(req.get("code", ""), "<cell>", "exec"), namespace)
                except BaseException:  # noqa: B902 - user code may raise anything
                    ok = False
                    traceback.print_exc(file=err)
        else:
            ok = False
            err.write("ProtocolError: unknown op %r\n" % op)
        _respond(proto_out, {"id": req_id, "stdout": out.getvalue(), "stderr": err.getvalue(),
                             "ok": ok, "duration_ms": int((time.monotonic() - start) * 1000)})


if __name__ == "__main__":
    serve()
