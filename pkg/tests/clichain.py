"""Drive the ``sdp`` command line through a small end-to-end chain."""

import os
import subprocess
import sys


def sdp(args, cwd, env=None, check=True):
    proc = subprocess.run([sys.executable, "-m", "sdp.cli", *map(str, args)], cwd=cwd,
                          env=env, capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"sdp {' '.join(map(str, args))} exited {proc.returncode}:\n"
                             f"{proc.stderr}")
    return proc


def run_chain(workdir, env=None, seed=7, users=3, bench=True):
    """generate -> ingest -> window -> decompose -> pool per recording, then train,
    eval and (optionally) a one-seed bench. Returns the produced file paths."""
    os.makedirs(workdir, exist_ok=True)
    tables, produced = [], []
    for user in range(users):
        for kind in ("static-empty", "presence"):
            stem = f"{kind}-u{user}"
            s = seed * 100 + 2 * user + (kind == "presence")
            sdp(["generate", "--kind", kind, "--param", f"user={user}", "--param", "duration=20",
                 "--seed", s, "--out", f"{stem}.rec.sdpb"], workdir, env)
            sdp(["ingest", f"{stem}.rec.sdpb", "--out", f"{stem}.canon.sdpb"], workdir, env)
            sdp(["window", f"{stem}.canon.sdpb", "--out", f"{stem}.blocks.sdpb"], workdir, env)
            sdp(["decompose", f"{stem}.blocks.sdpb", "--seed", s, "--out", f"{stem}.cp.sdpb"],
                workdir, env)
            sdp(["pool", f"{stem}.cp.sdpb", "--out", f"{stem}.h.sdpb", "--csv", f"{stem}.h.csv"],
                workdir, env)
            tables.append(f"{stem}.h.sdpb")
            produced += [f"{stem}.{ext}" for ext in
                         ("rec.sdpb", "canon.sdpb", "blocks.sdpb", "cp.sdpb", "h.sdpb", "h.csv")]
    sdp(["train", *tables, "--seed", seed, "--holdout", f"u{users - 1}", "--out", "model.sdpb",
         "--history", "history.csv"], workdir, env)
    sdp(["eval", "model.sdpb", *tables, "--out", "metrics.json"], workdir, env)
    produced += ["model.sdpb", "history.csv", "metrics.json"]
    if bench:
        sdp(["bench", "--seeds", seed, "--repeats", 2, "--task", "presence", "--users", 4,
             "--sessions", 1, "--test-users", 1, "--variants", "full,no-cpals",
             "--efficiency-repeats", 1, "--out", "bench"], workdir, env)
        produced += [os.path.join("bench", f) for f in
                     ("records.csv", "summary.json", "confusion_mean.csv", "confusion_std.csv",
                      "latency.csv", "label_efficiency.csv", "timings.csv")]
    return [os.path.join(workdir, p) for p in produced]
