#!/usr/bin/env python3
"""Solve an exported relaxation with Clarabel (through cvxpy) and compare the
guessing probability against the one reported by `seqrand npa-bound`."""

import argparse
import pathlib
import re
import subprocess
import sys

import cvxpy as cp
import numpy as np


def read_sdpa(path):
    rows = []
    for line in pathlib.Path(path).read_text().splitlines():
        line = line.strip()
        if line and line[0] not in '"*':
            rows.append(re.sub(r"[{}(),]", " ", line).split())
    m, nb = int(rows[0][0]), int(rows[1][0])
    blocks = [int(b) for b in rows[2][:nb]]
    rhs = np.array([float(v) for v in rows[3][:m]])
    mats = [[np.zeros((abs(b), abs(b))) for b in blocks] for _ in range(m + 1)]
    for k, blk, i, j, v in rows[4:]:
        a = mats[int(k)][int(blk) - 1]
        i, j, v = int(i) - 1, int(j) - 1, float(v)
        a[i, j] = v
        a[j, i] = v
    return blocks, rhs, mats


def solve(blocks, rhs, mats):
    xs, cons = [], []
    for b in blocks:
        if b > 0:
            x = cp.Variable((b, b), symmetric=True)
            cons.append(x >> 0)
        else:
            x = cp.Variable(-b, nonneg=True)
        xs.append(x)

    def inner(ops):
        terms = []
        for b, x, a in zip(blocks, xs, ops):
            if not a.any():
                continue
            terms.append(cp.trace(a @ x) if b > 0 else np.diag(a) @ x)
        return cp.sum(cp.hstack(terms)) if terms else 0

    cons += [inner(mats[k + 1]) == rhs[k] for k in range(len(rhs))]
    prob = cp.Problem(cp.Maximize(inner(mats[0])), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.status, prob.value


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", required=True)
    ap.add_argument("--work", required=True)
    ap.add_argument("--state", default="mvs")
    ap.add_argument("--epsilon", default="0.85")
    ap.add_argument("--setting", default="0,0,1")
    ap.add_argument("--tol", type=float, default=1e-5)
    args = ap.parse_args()

    out = pathlib.Path(args.work) / f"crosscheck_{args.state}.dat-s"
    common = ["--state", args.state, "--setting", args.setting]
    exported = subprocess.run([args.cli, "export-sdp", *common, "--epsilon", args.epsilon, "--out", str(out)],
                              capture_output=True, text=True, check=True)
    offset = float(re.search(r"G = (\S+) - optimum", exported.stderr).group(1))
    bound = subprocess.run([args.cli, "npa-bound", *common, "--grid", f"{args.epsilon}:{args.epsilon}:1"],
                           capture_output=True, text=True, check=True)
    ours = float(bound.stdout.splitlines()[1].split(",")[1])

    status, value = solve(*read_sdpa(out))
    theirs = offset - value
    print(f"clarabel status {status}: G = {theirs:.10f}; seqrand G = {ours:.10f}; diff {abs(theirs - ours):.2e}")
    return 0 if status == "optimal" and abs(theirs - ours) <= args.tol else 1


if __name__ == "__main__":
    sys.exit(main())
