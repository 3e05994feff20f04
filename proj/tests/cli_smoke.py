"""End-to-end checks of the metanode command line.

usage: cli_smoke.py <metanode binary> <scratch dir>
"""

import json
import shutil
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

BIN = sys.argv[1]
WORK = Path(sys.argv[2])
FAST = ["--adam-epochs", "3", "--lbfgs-iters", "3", "--hidden-dim", "6", "--hidden-layers", "1"]

failures = []


def run(*args, expect=0):
    proc = subprocess.run([BIN, *args], capture_output=True, text=True)
    if proc.returncode != expect:
        failures.append(f"{' '.join(args)}: exit {proc.returncode}, wanted {expect}\n{proc.stderr}")
    return proc


def check(cond, what):
    if not cond:
        failures.append(what)


shutil.rmtree(WORK, ignore_errors=True)
WORK.mkdir(parents=True)

run("fixture", "--out", str(WORK / "data"), "--seed", "4")
data = WORK / "data" / "limonene.csv"
check(data.exists(), "fixture did not write limonene.csv")
check((WORK / "data" / "isopentenol.csv").exists(), "fixture did not write isopentenol.csv")

run("ingest", "--data", str(data), "--output-dir", str(WORK / "processed"))
check((WORK / "processed" / "dataset.json").exists(), "ingest did not write dataset.json")

out = WORK / "sweep"
proc = run("sweep", "--data", str(data), "--output-dir", str(out), "--jobs", "2", *FAST)
check("Mean RMSE" in proc.stdout, "sweep did not print the summary table")
summary = json.loads((out / "summary.json").read_text())
check(len(summary["reports"]) == 3, "sweep summary does not hold three reports")
effective = json.loads((out / "effective_config.json").read_text())
check(effective["config"]["adam"]["epochs"] == 3, "override missing from effective config")
check(len(effective["config_checksum"]) == 16, "config checksum missing")

for label in ("0.01", "1.00", "1000.00"):
    d = out / f"lambda_{label}"
    metrics = json.loads((d / "metrics.json").read_text())
    check(metrics["status"] == "ok", f"lambda {label} failed: {metrics.get('error')}")
    check(metrics["lambda"] == float(label), f"lambda {label} mislabeled")
    svgs = sorted((d / "plots").glob("*.svg"))
    check(len(svgs) == 14, f"lambda {label}: expected 14 SVGs, found {len(svgs)}")
    for svg in svgs:
        try:
            ET.parse(svg)
        except ET.ParseError as e:
            failures.append(f"{svg}: {e}")
    rows = (d / "plots" / "field_slice.csv").read_text().splitlines()
    check(rows[0] == "u_i,u_j,du_i,du_j", "field slice header")
    check(len(rows) == 1 + 25 * 25, "field slice row count")
    pred = (d / "prediction.csv").read_text().splitlines()
    check(len(pred) == 201, "prediction.csv row count")

proc = run("report", "--output-dir", str(out))
check("Baseline" in proc.stdout, "report did not print the baseline column")

ckpt = out / "lambda_1.00" / "model.ckpt"
proc = run("evaluate", "--data", str(data), "--checkpoint", str(ckpt), "--output-dir", str(WORK / "eval"),
           "--hidden-dim", "6", "--hidden-layers", "1")
again = json.loads((WORK / "eval" / "metrics.json").read_text())
first = json.loads((out / "lambda_1.00" / "metrics.json").read_text())
check(again["mean_rmse"] == first["mean_rmse"], "evaluate does not reproduce the sweep metrics")

run("simulate", "--data", str(data), "--checkpoint", str(ckpt), "--output-dir", str(WORK / "sim"))
sim = (WORK / "sim" / "simulated_L2.csv").read_text().splitlines()
check(len(sim) == 201, "simulate row count")

# Same seed and config twice: identical checkpoints.
for run_dir in ("a", "b"):
    run("train", "--data", str(data), "--output-dir", str(WORK / run_dir), "--lambda", "1", *FAST)
check((WORK / "a" / "model.ckpt").read_bytes() == (WORK / "b" / "model.ckpt").read_bytes(),
      "repeated training produced different checkpoints")

# Plain-text config file with a flag override on top.
conf = WORK / "run.conf"
conf.write_text("adam.epochs = 2\nlbfgs.max_iters = 2\nfield.hidden_dim = 6\nfield.hidden_layers = 1\nseed = 9\n")
run("train", "--config", str(conf), "--data", str(data), "--output-dir", str(WORK / "conf"), "--seed", "11")
eff = json.loads((WORK / "conf" / "effective_config.json").read_text())["config"]
check(eff["adam"]["epochs"] == 2 and eff["seed"] == 11, "key = value config not applied")

missing = WORK / "nowhere" / "model.ckpt"
proc = run("evaluate", "--data", str(data), "--checkpoint", str(missing), expect=6)
check(str(missing) in proc.stderr, "missing checkpoint path not reported")
check(json.loads(proc.stderr)["error"] == "IoError", "error kind not reported as JSON")

run("sweep", "--bogus", expect=2)
run("sweep", "--data", str(data), "--rmse-space", "log", expect=3)
bad = WORK / "bad.csv"
bad.write_text("strain,time_h\nL1,0\n")
run("train", "--data", str(bad), expect=4)

if failures:
    print("\n".join(failures))
    sys.exit(1)
print("cli smoke: ok")
